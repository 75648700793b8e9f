//! Training corpora for the two decomposition stages and their JSON-lines files.
//!
//! File layout: line 1 is a header object
//! `{"format_version":1,"kind":"global"|"local","n":3,"N":10,"m":36,"seed":..,...}`,
//! every following line is one sample. Matrices use the repo-wide
//! `{"dim","re","im"}` schema. Floats are written in shortest round-trip form,
//! so load(save(x)) is bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{embed_local, full_basis, HorizontalBasis};
use crate::error::{GeoqcError, Result};
use crate::geodesic::{integrate_geodesic, norm2, sample_lambda0, sample_seed, GeodesicConfig};
use crate::linalg::ComplexMatrix;

pub const FORMAT_VERSION: u64 = 1;

/// Tolerance for the product invariant when re-validating loaded samples.
pub const LOAD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Global,
    Local,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Global => "global",
            DatasetKind::Local => "local",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u64,
    pub kind: DatasetKind,
    pub n: usize,
    #[serde(rename = "N")]
    pub segments: usize,
    pub m: usize,
    pub seed: u64,
    /// How the random part of each sample was drawn.
    pub sampling: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalSample {
    pub seed: u64,
    pub lambda0_norm: f64,
    pub u0_norm: f64,
    /// The endpoint U = x(1).
    pub input: ComplexMatrix,
    /// U_1 … U_N in integration order, so that U = U_N ··· U_1.
    pub segments: Vec<ComplexMatrix>,
}

impl GlobalSample {
    /// ‖U_N ··· U_1 − U‖_F
    pub fn product_residual(&self) -> f64 {
        let d = self.input.dim();
        let prod = self
            .segments
            .iter()
            .fold(ComplexMatrix::identity(d), |acc, u| u.matmul(&acc));
        prod.distance(&self.input)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSample {
    pub input: ComplexMatrix,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Global {
        header: DatasetHeader,
        samples: Vec<GlobalSample>,
    },
    Local {
        header: DatasetHeader,
        samples: Vec<LocalSample>,
    },
    /// A zero-length file.
    Empty,
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Global { samples, .. } => samples.len(),
            Dataset::Local { samples, .. } => samples.len(),
            Dataset::Empty => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> Option<DatasetKind> {
        match self {
            Dataset::Global { .. } => Some(DatasetKind::Global),
            Dataset::Local { .. } => Some(DatasetKind::Local),
            Dataset::Empty => None,
        }
    }

    pub fn header(&self) -> Option<&DatasetHeader> {
        match self {
            Dataset::Global { header, .. } | Dataset::Local { header, .. } => Some(header),
            Dataset::Empty => None,
        }
    }
}

/// A matrix as d timesteps, each `[Re(row) ‖ Im(row)]` of length 2d.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub timesteps: Vec<Vec<f64>>,
}

pub fn encode_matrix_rows(m: &ComplexMatrix) -> EncodedSequence {
    let timesteps = (0..m.dim())
        .map(|r| {
            let row = m.row(r);
            row.iter().map(|z| z.re).chain(row.iter().map(|z| z.im)).collect()
        })
        .collect();
    EncodedSequence { timesteps }
}

pub fn decode_matrix_rows(seq: &EncodedSequence) -> Result<ComplexMatrix> {
    decode_rows(&seq.timesteps)
}

/// Inverse of [`encode_matrix_rows`] over any slice of row vectors.
pub fn decode_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<ComplexMatrix> {
    let d = rows.len();
    if d == 0 {
        return Err(GeoqcError::InvalidInput("no rows to decode".into()));
    }
    let mut data = Vec::with_capacity(d * d);
    for row in rows {
        let row = row.as_ref();
        if row.len() != 2 * d {
            return Err(GeoqcError::DimensionMismatch {
                expected: 2 * d,
                found: row.len(),
            });
        }
        data.extend((0..d).map(|k| num_complex::Complex64::new(row[k], row[d + k])));
    }
    ComplexMatrix::from_row_major(data)
}

/// Generates `count` geodesic samples. Sample i depends only on (seed, i).
pub fn gen_global_dataset(count: usize, cfg: &GeodesicConfig, seed: u64) -> Result<Vec<GlobalSample>> {
    if count == 0 {
        return Err(GeoqcError::InvalidInput("count must be >= 1".into()));
    }
    cfg.validate()?;
    let basis = HorizontalBasis::new(cfg.n)?;
    let full = full_basis(cfg.n)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = sample_seed(seed, i as u64);
            let sample = sample_lambda0(s, &full, cfg.norm_bound)
                .and_then(|lam| integrate_geodesic(&lam, cfg, &basis))
                .map_err(|e| GeoqcError::Sample {
                    index: i,
                    source: Box::new(e),
                })?;
            Ok(GlobalSample {
                seed: s,
                lambda0_norm: sample.lambda0.norm(),
                u0_norm: sample.initial_control_norm(),
                input: sample.endpoint().clone(),
                segments: sample.segments,
            })
        })
        .collect()
}

/// Generates `count` (U_j, c) pairs with c_i i.i.d. uniform on [−1/N, 1/N].
pub fn gen_local_dataset(
    count: usize,
    basis: &HorizontalBasis,
    segments: usize,
    seed: u64,
) -> Result<Vec<LocalSample>> {
    if count == 0 {
        return Err(GeoqcError::InvalidInput("count must be >= 1".into()));
    }
    if segments == 0 {
        return Err(GeoqcError::InvalidInput("segment count N must be >= 1".into()));
    }
    let half_width = 1.0 / segments as f64;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i as u64));
            let coeffs: Vec<f64> = (0..basis.len())
                .map(|_| rng.gen_range(-half_width..=half_width))
                .collect();
            Ok(LocalSample {
                input: embed_local(&coeffs, basis)?,
                coeffs,
            })
        })
        .collect()
}

pub fn global_header(cfg: &GeodesicConfig, seed: u64) -> Result<DatasetHeader> {
    Ok(DatasetHeader {
        format_version: FORMAT_VERSION,
        kind: DatasetKind::Global,
        n: cfg.n,
        segments: cfg.segments,
        m: HorizontalBasis::new(cfg.n)?.len(),
        seed,
        sampling: "lambda0: normal direction over full basis, radius uniform on (0, norm_bound]".into(),
        norm_bound: Some(cfg.norm_bound),
    })
}

pub fn local_header(n: usize, segments: usize, seed: u64) -> Result<DatasetHeader> {
    Ok(DatasetHeader {
        format_version: FORMAT_VERSION,
        kind: DatasetKind::Local,
        n,
        segments,
        m: HorizontalBasis::new(n)?.len(),
        seed,
        sampling: "coeffs: iid uniform on [-1/N, 1/N]".into(),
        norm_bound: None,
    })
}

/// Deterministic tail split: the last `validation_count` items are held out.
pub fn split<T>(mut dataset: Vec<T>, validation_count: usize) -> Result<(Vec<T>, Vec<T>)> {
    if validation_count >= dataset.len() {
        return Err(GeoqcError::InvalidInput(format!(
            "validation count {validation_count} must be smaller than dataset size {}",
            dataset.len()
        )));
    }
    let validation = dataset.split_off(dataset.len() - validation_count);
    Ok((dataset, validation))
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| GeoqcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| GeoqcError::io(path, e);
    let json = |e: serde_json::Error| GeoqcError::InvalidInput(e.to_string());
    match dataset {
        Dataset::Empty => {}
        Dataset::Global { header, samples } => {
            serde_json::to_writer(&mut w, header).map_err(json)?;
            w.write_all(b"\n").map_err(io)?;
            for s in samples {
                serde_json::to_writer(&mut w, s).map_err(json)?;
                w.write_all(b"\n").map_err(io)?;
            }
        }
        Dataset::Local { header, samples } => {
            serde_json::to_writer(&mut w, header).map_err(json)?;
            w.write_all(b"\n").map_err(io)?;
            for s in samples {
                serde_json::to_writer(&mut w, s).map_err(json)?;
                w.write_all(b"\n").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| GeoqcError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header_line = match lines.next() {
        None => return Ok(Dataset::Empty),
        Some((_, line)) => line.map_err(|e| GeoqcError::io(path, e))?,
    };
    if header_line.trim().is_empty() {
        return Ok(Dataset::Empty);
    }
    let version: serde_json::Value = serde_json::from_str(&header_line).map_err(|e| GeoqcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(GeoqcError::Version {
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(GeoqcError::Parse {
                line: 1,
                message: "header lacks format_version".into(),
            })
        }
    }
    let header: DatasetHeader = serde_json::from_value(version).map_err(|e| GeoqcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let basis = HorizontalBasis::new(header.n).map_err(|e| GeoqcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let d = basis.dim();

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| GeoqcError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| GeoqcError::Parse { line: lineno, message };
        match header.kind {
            DatasetKind::Global => {
                let s: GlobalSample = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                if s.input.dim() != d || s.segments.iter().any(|u| u.dim() != d) {
                    return Err(bad(format!("matrix dimension differs from header (d = {d})")));
                }
                if s.segments.len() != header.segments {
                    return Err(bad(format!(
                        "{} segments, header says N = {}",
                        s.segments.len(),
                        header.segments
                    )));
                }
                let r = s.product_residual();
                if !(r <= LOAD_TOL) {
                    return Err(bad(format!("segment product differs from input by {r:e}")));
                }
                global.push(s);
            }
            DatasetKind::Local => {
                let s: LocalSample = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                if s.input.dim() != d || s.coeffs.len() != header.m {
                    return Err(bad("sample shape differs from header".into()));
                }
                let r = embed_local(&s.coeffs, &basis)
                    .map_err(|e| bad(e.to_string()))?
                    .distance(&s.input);
                if !(r <= LOAD_TOL) {
                    return Err(bad(format!("embedded coefficients differ from input by {r:e}")));
                }
                local.push(s);
            }
        }
    }
    Ok(match header.kind {
        DatasetKind::Global => Dataset::Global {
            header,
            samples: global,
        },
        DatasetKind::Local => Dataset::Local { header, samples: local },
    })
}

/// Mean of ‖u₀‖ over a global corpus.
pub fn mean_initial_control_norm(samples: &[GlobalSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.u0_norm).sum::<f64>() / samples.len() as f64
}

/// Euclidean length of a coefficient difference.
pub fn coefficient_error(pred: &[f64], truth: &[f64]) -> f64 {
    let diff: Vec<f64> = pred.iter().zip(truth).map(|(a, b)| a - b).collect();
    norm2(&diff)
}
