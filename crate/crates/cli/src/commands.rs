use std::path::{Path, PathBuf};

use clap::Args;
use geoqc_core::algebra::HorizontalBasis;
use geoqc_core::circuit::{emit_circuit_text, synthesize_segments, DEFAULT_CUTOFF};
use geoqc_core::dataset::{
    gen_global_dataset, gen_local_dataset, global_header, load_dataset, local_header, mean_initial_control_norm,
    save_dataset, split, Dataset,
};
use geoqc_core::geodesic::GeodesicConfig;
use geoqc_core::models::{
    evaluate_global, evaluate_local, load_global_model, load_local_model, load_model, save_model,
    train_global_with_progress, train_local_with_progress, Model, TrainReport,
};
use geoqc_core::pipeline::{compile as compile_unitary, CompileOptions};
use geoqc_core::{ComplexMatrix, GeoqcError};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::{CliError, Kind};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::data(format!("file not found: {}", path.display()))
        } else {
            CliError::data(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn required(flag: Option<PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.cloned())
        .ok_or_else(|| CliError::usage(format!("missing --{name} (no value in the config either)")))
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of samples (default 5000).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of qubits.
    #[arg(long)]
    n: Option<usize>,
    /// Segments per geodesic.
    #[arg(long = "segments")]
    segments: Option<usize>,
    /// Upper bound on the initial costate norm (default: dim Δ).
    #[arg(long)]
    norm_bound: Option<f64>,
}

pub fn gen_data(cfg: &RunConfig, a: GenDataArgs) -> Result<(), CliError> {
    let n = a.n.unwrap_or(cfg.n());
    let segments = a.segments.unwrap_or(cfg.segments());
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let (count_cfg, path_cfg) = match a.kind {
        Kind::Global => (cfg.data.global_count, cfg.paths.global_data.as_ref()),
        Kind::Local => (cfg.data.local_count, cfg.paths.local_data.as_ref()),
    };
    let count = a.count.or(count_cfg).unwrap_or(5000);
    if count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let out = required(a.out, path_cfg, "out")?;
    match a.kind {
        Kind::Global => {
            let mut gcfg = GeodesicConfig::for_qubits(n)?;
            gcfg.segments = segments;
            if let Some(b) = a.norm_bound.or(cfg.norm_bound) {
                gcfg.norm_bound = b;
            }
            let samples = gen_global_dataset(count, &gcfg, seed)?;
            let mean_u0 = mean_initial_control_norm(&samples);
            let header = global_header(&gcfg, seed)?;
            save_dataset(&out, &Dataset::Global { header, samples })?;
            println!(
                "wrote {count} global samples to {} (mean |u0| = {mean_u0:.6})",
                out.display()
            );
        }
        Kind::Local => {
            let basis = HorizontalBasis::new(n)?;
            let samples = gen_local_dataset(count, &basis, segments, seed)?;
            let header = local_header(n, segments, seed)?;
            save_dataset(&out, &Dataset::Local { header, samples })?;
            println!("wrote {count} local samples to {}", out.display());
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Per-epoch loss curves as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Full training report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Held-out samples from the end of the file (default: a tenth);
    /// 0 validates on the training set.
    #[arg(long)]
    validation: Option<usize>,
    /// GRU width of the global network.
    #[arg(long)]
    hidden_size: Option<usize>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    progress: bool,
}

fn holdout<T: Clone>(samples: Vec<T>, validation: Option<usize>) -> Result<(Vec<T>, Vec<T>), CliError> {
    if samples.is_empty() {
        return Err(GeoqcError::EmptyDataset.into());
    }
    let count = validation.unwrap_or((samples.len() / 10).max(1));
    if count == 0 {
        let val = samples.clone();
        return Ok((samples, val));
    }
    Ok(split(samples, count)?)
}

fn dataset_kind_error(path: &Path, wanted: Kind, found: &str) -> CliError {
    CliError::data(format!(
        "{} holds a {found} dataset, but --kind {} was requested",
        path.display(),
        wanted.as_str()
    ))
}

fn print_report(report: &TrainReport) {
    println!(
        "trained {} epochs: final train loss {:.6e}, final val loss {:.6e}, best val loss {:.6e} at epoch {}",
        report.epochs(),
        report.final_train_loss(),
        report.final_val_loss(),
        report.best_val_loss,
        report.best_epoch
    );
}

pub fn train(cfg: &RunConfig, a: TrainArgs) -> Result<(), CliError> {
    let (data_cfg, model_cfg) = match a.kind {
        Kind::Global => (cfg.paths.global_data.as_ref(), cfg.paths.global_model.as_ref()),
        Kind::Local => (cfg.paths.local_data.as_ref(), cfg.paths.local_model.as_ref()),
    };
    let data = required(a.data, data_cfg, "data")?;
    let out_model = required(a.out_model, model_cfg, "out-model")?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let validation = a.validation.or(cfg.data.validation);
    let dataset = load_dataset(&data)?;
    let progress = a.progress;
    let mut log = |e: usize, t: f64, v: f64| {
        if progress {
            eprintln!("epoch {e}: train {t:.6e} val {v:.6e}");
        }
    };

    let report = match (a.kind, dataset) {
        (_, Dataset::Empty) => return Err(GeoqcError::EmptyDataset.into()),
        (Kind::Global, Dataset::Global { samples, .. }) => {
            let mut mc = cfg.global_model();
            if let Some(e) = a.epochs {
                mc.epochs = e;
            }
            if let Some(h) = a.hidden_size {
                mc.hidden_size = h;
            }
            let (tr, va) = holdout(samples, validation)?;
            let (model, report) = train_global_with_progress(&tr, &va, &mc, seed, Some(&mut log))?;
            save_model(&out_model, &model)?;
            report
        }
        (Kind::Local, Dataset::Local { samples, .. }) => {
            if a.hidden_size.is_some() {
                return Err(CliError::usage("--hidden-size applies to the global network only"));
            }
            let mut mc = cfg.local_model();
            if let Some(e) = a.epochs {
                mc.epochs = e;
            }
            let (tr, va) = holdout(samples, validation)?;
            let (model, report) = train_local_with_progress(&tr, &va, &mc, seed, Some(&mut log))?;
            save_model(&out_model, &model)?;
            report
        }
        (kind, Dataset::Global { .. }) => return Err(dataset_kind_error(&data, kind, "global")),
        (kind, Dataset::Local { .. }) => return Err(dataset_kind_error(&data, kind, "local")),
    };
    if let Some(csv) = a.out_csv {
        report.write_csv(&csv)?;
    }
    if let Some(path) = a.report {
        write_file(
            &path,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    print_report(&report);
    println!("model written to {}", out_model.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// Unitary as a matrix JSON document {"dim", "re", "im"}.
    #[arg(long)]
    unitary: PathBuf,
    #[arg(long)]
    global_model: Option<PathBuf>,
    #[arg(long)]
    local_model: Option<PathBuf>,
    /// Polish the network coefficients by least squares.
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Feed raw network segments to the local stage.
    #[arg(long)]
    no_project: bool,
    /// CompileResult JSON.
    #[arg(long)]
    out: PathBuf,
    /// Circuit text (default: the --out path with extension .circuit).
    #[arg(long)]
    circuit_out: Option<PathBuf>,
}

pub fn compile(cfg: &RunConfig, a: CompileArgs) -> Result<(), CliError> {
    let gpath = required(a.global_model, cfg.paths.global_model.as_ref(), "global-model")?;
    let lpath = required(a.local_model, cfg.paths.local_model.as_ref(), "local-model")?;
    let u: ComplexMatrix = read_json(&a.unitary)?;
    let global = load_global_model(&gpath)?;
    let local = load_local_model(&lpath)?;
    let mut options = CompileOptions {
        project_segments: !a.no_project,
        refine: a.refine,
        ..Default::default()
    };
    if let Some(r) = &cfg.refine {
        options.refine_options = r.clone();
    }
    if let Some(m) = a.max_iters {
        options.refine_options.max_iters = m;
    }
    let result = compile_unitary(&u, &global, &local, &options)?;
    write_file(
        &a.out,
        &serde_json::to_string_pretty(&result).expect("result serializes"),
    )?;
    let circuit_path = a.circuit_out.unwrap_or_else(|| a.out.with_extension("circuit"));
    write_file(&circuit_path, &result.circuit)?;
    if let Some(log) = &result.refinement {
        println!(
            "refinement: {} iterations, error {:.6e} -> {:.6e}",
            log.iterations,
            log.initial_error(),
            log.final_error()
        );
    }
    println!(
        "fidelity {:.12} frobenius_error {:.6e}",
        result.metrics.fidelity, result.metrics.frobenius_error
    );
    println!("wrote {} and {}", a.out.display(), circuit_path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(_cfg: &RunConfig, a: EvalArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let dataset = load_dataset(&a.data)?;
    let json = match (model, dataset) {
        (_, Dataset::Empty) => return Err(GeoqcError::EmptyDataset.into()),
        (Model::Global(m), Dataset::Global { samples, .. }) => {
            let ev = evaluate_global(&m, &samples)?;
            println!(
                "global: {} samples, loss {:.6e}, mean segment deviation {:.6e}, mean projected fidelity {:.6}",
                ev.samples, ev.loss, ev.mean_segment_deviation, ev.mean_projected_fidelity
            );
            serde_json::to_string_pretty(&ev)
        }
        (Model::Local(m), Dataset::Local { samples, .. }) => {
            let ev = evaluate_local(&m, &samples)?;
            println!(
                "local: {} samples, loss {:.6e}, mean coefficient error {:.6e}, within 0.3 {:.4}",
                ev.samples, ev.loss, ev.mean_coefficient_error, ev.embed_within_0_3
            );
            serde_json::to_string_pretty(&ev)
        }
        (m, d) => {
            return Err(CliError::data(format!(
                "{} model cannot be evaluated on a {} dataset",
                m.kind(),
                match d {
                    Dataset::Global { .. } => "global",
                    _ => "local",
                }
            )))
        }
    }
    .expect("metrics serialize");
    if let Some(out) = a.out {
        write_file(&out, &json)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmitArgs {
    /// JSON coefficient file: an N×m array of arrays, a single length-m
    /// array, or a CompileResult document.
    #[arg(long)]
    coefficients: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    /// Terms with smaller magnitude are dropped.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CoefficientFile {
    Rows(Vec<Vec<f64>>),
    Single(Vec<f64>),
    Document { coefficients: Vec<Vec<f64>> },
}

pub fn emit_circuit(cfg: &RunConfig, a: EmitArgs) -> Result<(), CliError> {
    if !(a.cutoff >= 0.0) {
        return Err(CliError::usage("--cutoff must be non-negative"));
    }
    let basis = HorizontalBasis::new(a.n.unwrap_or(cfg.n()))?;
    let rows = match read_json::<CoefficientFile>(&a.coefficients)? {
        CoefficientFile::Rows(r) | CoefficientFile::Document { coefficients: r } => r,
        CoefficientFile::Single(v) => vec![v],
    };
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::data("coefficients must be finite"));
    }
    let circuit = synthesize_segments(&rows, &basis, a.cutoff)?;
    let text = emit_circuit_text(&circuit);
    match a.out {
        Some(path) => {
            write_file(&path, &text)?;
            println!("wrote {} gates to {}", circuit.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
