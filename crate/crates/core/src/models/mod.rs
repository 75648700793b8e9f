//! The global (sequence) and local (dense) decomposition networks, their
//! training loops and the model file format.

mod global;
mod local;
mod store;
mod train;

use serde::{Deserialize, Serialize};

pub use global::{global_forward, GlobalArchitecture, GlobalExample, GlobalModel};
pub use local::{flatten, local_forward, LocalArchitecture, LocalExample, LocalModel};
pub use store::{load_global_model, load_local_model, load_model, save_model, Model, ModelRef, MODEL_FORMAT_VERSION};
pub use train::{Progress, TrainConfig, TrainReport};

use crate::dataset::{GlobalSample, LocalSample};
use crate::error::{GeoqcError, Result};
use crate::nn::{AdamConfig, Tensor2};
use train::{fit, Trainable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalModelConfig {
    pub n: usize,
    pub segments: usize,
    /// Total GRU layers, split between encoder and decoder.
    pub gru_layers: usize,
    pub encoder_layers: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
}

impl Default for GlobalModelConfig {
    fn default() -> Self {
        Self {
            n: 3,
            segments: 10,
            gru_layers: 10,
            encoder_layers: 5,
            hidden_size: 64,
            epochs: 1500,
            batch_size: 32,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
        }
    }
}

impl GlobalModelConfig {
    /// 500 samples · 150 epochs · width 32 profile used in CI.
    pub fn ci_profile() -> Self {
        Self {
            hidden_size: 32,
            epochs: 150,
            ..Self::default()
        }
    }

    pub fn input_timesteps(&self) -> usize {
        1 << self.n
    }

    pub fn output_timesteps(&self) -> usize {
        (1 << self.n) * self.segments
    }

    pub fn vector_size(&self) -> usize {
        2 << self.n
    }

    pub fn architecture(&self) -> Result<GlobalArchitecture> {
        if self.encoder_layers == 0 || self.encoder_layers >= self.gru_layers {
            return Err(GeoqcError::InvalidInput(format!(
                "encoder layers {} must lie in 1..{}",
                self.encoder_layers, self.gru_layers
            )));
        }
        let arch = GlobalArchitecture {
            n: self.n,
            segments: self.segments,
            hidden_size: self.hidden_size,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.gru_layers - self.encoder_layers,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam.clone(),
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalModelConfig {
    pub n: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
}

impl Default for LocalModelConfig {
    fn default() -> Self {
        Self {
            n: 3,
            hidden: vec![2000, 2000],
            epochs: 500,
            batch_size: 32,
            adam: AdamConfig::default(),
            clip_norm: None,
        }
    }
}

impl LocalModelConfig {
    pub fn input_size(&self) -> usize {
        2 << (2 * self.n)
    }

    pub fn architecture(&self) -> Result<LocalArchitecture> {
        let arch = LocalArchitecture {
            n: self.n,
            hidden: self.hidden.clone(),
            output_size: crate::algebra::HorizontalBasis::new(self.n)?.len(),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam.clone(),
            clip_norm: self.clip_norm,
        }
    }
}

impl Trainable for GlobalModel {
    type Example = GlobalExample;

    fn loss_and_grads(&self, batch: &[&GlobalExample]) -> Result<(f64, Vec<Tensor2>)> {
        GlobalModel::loss_and_grads(self, batch)
    }

    fn loss(&self, batch: &[&GlobalExample]) -> Result<f64> {
        GlobalModel::loss(self, batch)
    }
}

impl Trainable for LocalModel {
    type Example = LocalExample;

    fn loss_and_grads(&self, batch: &[&LocalExample]) -> Result<(f64, Vec<Tensor2>)> {
        LocalModel::loss_and_grads(self, batch)
    }

    fn loss(&self, batch: &[&LocalExample]) -> Result<f64> {
        LocalModel::loss(self, batch)
    }
}

fn check_global_samples(samples: &[GlobalSample], arch: &GlobalArchitecture) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.input.dim() != arch.dim() || s.segments.len() != arch.segments {
            return Err(GeoqcError::ModelMismatch(format!(
                "sample {i} has dim {} with {} segments; model expects dim {} with {}",
                s.input.dim(),
                s.segments.len(),
                arch.dim(),
                arch.segments
            )));
        }
    }
    Ok(())
}

/// Trains the global network; parameters are initialised from `seed` and
/// the returned model is the best-validation checkpoint.
pub fn train_global(
    train: &[GlobalSample],
    val: &[GlobalSample],
    cfg: &GlobalModelConfig,
    seed: u64,
) -> Result<(GlobalModel, TrainReport)> {
    train_global_with_progress(train, val, cfg, seed, None)
}

pub fn train_global_with_progress(
    train: &[GlobalSample],
    val: &[GlobalSample],
    cfg: &GlobalModelConfig,
    seed: u64,
    progress: Option<Progress<'_>>,
) -> Result<(GlobalModel, TrainReport)> {
    let arch = cfg.architecture()?;
    check_global_samples(train, &arch)?;
    check_global_samples(val, &arch)?;
    let train: Vec<GlobalExample> = train.iter().map(GlobalExample::from_sample).collect();
    let val: Vec<GlobalExample> = val.iter().map(GlobalExample::from_sample).collect();
    let model = GlobalModel::new(arch, seed)?;
    let snapshot = serde_json::to_value(cfg).expect("config serializes");
    fit(model, &train, &val, &cfg.train_config(), seed, snapshot, progress)
}

fn check_local_samples(samples: &[LocalSample], arch: &LocalArchitecture) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.input.dim() != arch.dim() || s.coeffs.len() != arch.output_size {
            return Err(GeoqcError::ModelMismatch(format!(
                "sample {i} has dim {} with {} coefficients; model expects dim {} with {}",
                s.input.dim(),
                s.coeffs.len(),
                arch.dim(),
                arch.output_size
            )));
        }
    }
    Ok(())
}

pub fn train_local(
    train: &[LocalSample],
    val: &[LocalSample],
    cfg: &LocalModelConfig,
    seed: u64,
) -> Result<(LocalModel, TrainReport)> {
    train_local_with_progress(train, val, cfg, seed, None)
}

pub fn train_local_with_progress(
    train: &[LocalSample],
    val: &[LocalSample],
    cfg: &LocalModelConfig,
    seed: u64,
    progress: Option<Progress<'_>>,
) -> Result<(LocalModel, TrainReport)> {
    let arch = cfg.architecture()?;
    check_local_samples(train, &arch)?;
    check_local_samples(val, &arch)?;
    let train: Vec<LocalExample> = train.iter().map(LocalExample::from_sample).collect();
    let val: Vec<LocalExample> = val.iter().map(LocalExample::from_sample).collect();
    let model = LocalModel::new(arch, seed)?;
    let snapshot = serde_json::to_value(cfg).expect("config serializes");
    fit(model, &train, &val, &cfg.train_config(), seed, snapshot, progress)
}

/// Mean ‖pred − true‖₂ of the local model over `samples`.
pub fn mean_coefficient_error(model: &LocalModel, samples: &[LocalSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(GeoqcError::EmptyDataset);
    }
    let inputs: Vec<_> = samples.iter().map(|s| s.input.clone()).collect();
    let preds = model.predict_many(&inputs)?;
    let total: f64 = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| crate::dataset::coefficient_error(p, &s.coeffs))
        .sum();
    Ok(total / samples.len() as f64)
}

/// Mean over samples, segments and real components of |pred − true|.
pub fn mean_segment_deviation(model: &GlobalModel, samples: &[GlobalSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(GeoqcError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        let pred = global_forward(model, &s.input)?;
        for (p, t) in pred.iter().zip(&s.segments) {
            for (a, b) in p.as_slice().iter().zip(t.as_slice()) {
                total += (a.re - b.re).abs() + (a.im - b.im).abs();
                count += 2;
            }
        }
    }
    Ok(total / count as f64)
}

/// Training-loss definition averaged over a whole sample set.
pub fn global_loss(model: &GlobalModel, samples: &[GlobalSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(GeoqcError::EmptyDataset);
    }
    let examples: Vec<GlobalExample> = samples.iter().map(GlobalExample::from_sample).collect();
    train::mean_loss(model, &examples, 32)
}

pub fn local_loss(model: &LocalModel, samples: &[LocalSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(GeoqcError::EmptyDataset);
    }
    let examples: Vec<LocalExample> = samples.iter().map(LocalExample::from_sample).collect();
    train::mean_loss(model, &examples, 32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalEvaluation {
    pub samples: usize,
    pub loss: f64,
    pub mean_segment_deviation: f64,
    /// Mean fidelity(nearest_unitary(pred U_j), U_j); a segment whose
    /// projection fails counts as 0.
    pub mean_projected_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalEvaluation {
    pub samples: usize,
    pub loss: f64,
    pub mean_coefficient_error: f64,
    /// Share of samples with ‖embed_local(c_pred) − U_j‖_F ≤ 0.3.
    pub embed_within_0_3: f64,
}

pub fn evaluate_global(model: &GlobalModel, samples: &[GlobalSample]) -> Result<GlobalEvaluation> {
    use crate::pipeline::{fidelity, nearest_unitary};
    let loss = global_loss(model, samples)?;
    let mut fid = 0.0;
    let mut count = 0usize;
    for s in samples {
        for (p, t) in global_forward(model, &s.input)?.iter().zip(&s.segments) {
            fid += match nearest_unitary(p) {
                Ok(q) => fidelity(&q, t)?,
                Err(_) => 0.0,
            };
            count += 1;
        }
    }
    Ok(GlobalEvaluation {
        samples: samples.len(),
        loss,
        mean_segment_deviation: mean_segment_deviation(model, samples)?,
        mean_projected_fidelity: fid / count as f64,
    })
}

pub fn evaluate_local(model: &LocalModel, samples: &[LocalSample]) -> Result<LocalEvaluation> {
    let loss = local_loss(model, samples)?;
    let basis = crate::algebra::HorizontalBasis::new(model.arch.n)?;
    let inputs: Vec<_> = samples.iter().map(|s| s.input.clone()).collect();
    let preds = model.predict_many(&inputs)?;
    let mut within = 0usize;
    for (p, s) in preds.iter().zip(samples) {
        if crate::algebra::embed_local(p, &basis)?.distance(&s.input) <= 0.3 {
            within += 1;
        }
    }
    Ok(LocalEvaluation {
        samples: samples.len(),
        loss,
        mean_coefficient_error: mean_coefficient_error(model, samples)?,
        embed_within_0_3: within as f64 / samples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::HorizontalBasis;
    use crate::dataset::{gen_global_dataset, gen_local_dataset};
    use crate::geodesic::GeodesicConfig;

    #[test]
    fn default_configs_match_the_described_shapes() {
        let g = GlobalModelConfig::default();
        assert_eq!(
            (g.input_timesteps(), g.output_timesteps(), g.vector_size()),
            (8, 80, 16)
        );
        let a = g.architecture().unwrap();
        assert_eq!((a.encoder_layers, a.decoder_layers, a.hidden_size), (5, 5, 64));
        let l = LocalModelConfig::default();
        assert_eq!(l.input_size(), 128);
        assert_eq!(l.architecture().unwrap().output_size, 36);
        assert_eq!((g.epochs, l.epochs), (1500, 500));
    }

    #[test]
    fn empty_sets_are_rejected() {
        let basis = HorizontalBasis::new(3).unwrap();
        let data = gen_local_dataset(2, &basis, 10, 1).unwrap();
        let cfg = LocalModelConfig {
            hidden: vec![4],
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_local(&data, &[], &cfg, 0),
            Err(GeoqcError::EmptyDataset)
        ));
        assert!(matches!(
            train_local(&[], &data, &cfg, 0),
            Err(GeoqcError::EmptyDataset)
        ));
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let basis = HorizontalBasis::new(3).unwrap();
        let data = gen_local_dataset(4, &basis, 10, 1).unwrap();
        let mut cfg = LocalModelConfig {
            hidden: vec![8],
            epochs: 50,
            ..Default::default()
        };
        cfg.adam.learning_rate = 1e300;
        match train_local(&data, &data, &cfg, 0) {
            Err(GeoqcError::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn local_memorizes_ten_samples() {
        let basis = HorizontalBasis::new(3).unwrap();
        let data = gen_local_dataset(10, &basis, 10, 3).unwrap();
        let cfg = LocalModelConfig {
            hidden: vec![128, 128],
            epochs: 300,
            batch_size: 10,
            ..Default::default()
        };
        let (model, report) = train_local(&data, &data, &cfg, 5).unwrap();
        assert_eq!(report.epochs(), 300);
        assert!(report.final_train_loss() <= 1e-2, "{}", report.final_train_loss());
        assert!(mean_coefficient_error(&model, &data).unwrap() < 0.1);
    }

    #[test]
    fn global_training_is_deterministic_and_keeps_best() {
        let cfg = GlobalModelConfig {
            hidden_size: 8,
            gru_layers: 2,
            encoder_layers: 1,
            segments: 2,
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let gcfg = GeodesicConfig {
            segments: 2,
            ..GeodesicConfig::for_qubits(3).unwrap()
        };
        let data = gen_global_dataset(10, &gcfg, 9).unwrap();
        let (m1, r1) = train_global(&data[..6], &data[6..], &cfg, 4).unwrap();
        let (m2, r2) = train_global(&data[..6], &data[6..], &cfg, 4).unwrap();
        assert_eq!(r1.train_loss, r2.train_loss);
        assert_eq!(r1.val_loss, r2.val_loss);
        assert_eq!(m1, m2);
        let best = r1.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r1.best_val_loss, best);
        assert_eq!(r1.val_loss[r1.best_epoch - 1], best);
        let out = global_forward(&m1, &data[0].input).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn sample_model_mismatch_is_reported() {
        let gcfg = GeodesicConfig {
            segments: 3,
            ..GeodesicConfig::for_qubits(3).unwrap()
        };
        let data = gen_global_dataset(2, &gcfg, 1).unwrap();
        let cfg = GlobalModelConfig {
            hidden_size: 4,
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_global(&data, &data, &cfg, 0),
            Err(GeoqcError::ModelMismatch(_))
        ));
    }
}
