//! Minibatch training shared by both decomposition networks.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoqcError, Result};
use crate::nn::{clip_global_norm, AdamConfig, OptimizerState, Parameterized, Tensor2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Global-norm gradient clipping; `None` disables it.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(GeoqcError::InvalidInput(
                "epochs and batch size must be positive".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(GeoqcError::InvalidInput(format!("clip norm must be positive, got {c}")));
            }
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0)
        {
            return Err(GeoqcError::InvalidInput(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config: serde_json::Value,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_val_loss(&self) -> f64 {
        self.val_loss.last().copied().unwrap_or(f64::NAN)
    }

    /// `epoch,train_loss,val_loss`, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            let _ = writeln!(out, "{},{t:?},{v:?}", e + 1);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| GeoqcError::io(path, e))
    }

    /// Relative improvement of the best validation loss over the last
    /// `window` epochs: (best before window − best overall) / best before window.
    pub fn plateau_improvement(&self, window: usize) -> Option<f64> {
        if self.val_loss.len() <= window {
            return None;
        }
        let split = self.val_loss.len() - window;
        let before = self.val_loss[..split].iter().copied().fold(f64::INFINITY, f64::min);
        let after = self.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        Some((before - after) / before)
    }
}

/// What the trainer needs from a model.
pub(crate) trait Trainable: Parameterized + Clone + Sync {
    type Example: Sync;
    fn loss_and_grads(&self, batch: &[&Self::Example]) -> Result<(f64, Vec<Tensor2>)>;
    fn loss(&self, batch: &[&Self::Example]) -> Result<f64>;
}

/// Per-epoch progress callback: (epoch from 1, train loss, val loss).
pub type Progress<'a> = &'a mut dyn FnMut(usize, f64, f64);

pub(crate) fn mean_loss<M: Trainable>(model: &M, data: &[M::Example], batch: usize) -> Result<f64> {
    let parts: Vec<Result<(f64, usize)>> = data
        .par_chunks(batch)
        .map(|chunk| {
            let refs: Vec<&M::Example> = chunk.iter().collect();
            model.loss(&refs).map(|l| (l * chunk.len() as f64, chunk.len()))
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0;
    for p in parts {
        let (l, c) = p?;
        total += l;
        count += c;
    }
    Ok(total / count as f64)
}

fn diverged(epoch: usize) -> impl Fn(GeoqcError) -> GeoqcError {
    move |e| {
        if e.is_numeric() {
            GeoqcError::Divergence { epoch }
        } else {
            e
        }
    }
}

pub(crate) fn fit<M: Trainable>(
    mut model: M,
    train: &[M::Example],
    val: &[M::Example],
    cfg: &TrainConfig,
    seed: u64,
    config_snapshot: serde_json::Value,
    progress: Option<Progress<'_>>,
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(GeoqcError::EmptyDataset);
    }
    let start = Instant::now();
    let mut progress = progress;
    let mut opt = OptimizerState::new(cfg.adam.clone(), &model.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, M)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&M::Example> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, mut grads) = model.loss_and_grads(&batch).map_err(diverged(epoch))?;
            if !loss.is_finite() {
                return Err(GeoqcError::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            opt.update(model.params_mut(), &grads)?;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = mean_loss(&model, val, cfg.batch_size).map_err(diverged(epoch))?;
        if !val_loss.is_finite() {
            return Err(GeoqcError::Divergence { epoch });
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, model.clone()));
        }
        if let Some(cb) = progress.as_mut() {
            cb(epoch, train_loss, val_loss);
        }
    }

    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        TrainReport {
            seed,
            config: config_snapshot,
            train_loss: train_curve,
            val_loss: val_curve,
            best_epoch,
            best_val_loss,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(val: Vec<f64>) -> TrainReport {
        TrainReport {
            seed: 0,
            config: serde_json::Value::Null,
            train_loss: val.clone(),
            best_epoch: 1,
            best_val_loss: val[0],
            val_loss: val,
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_epoch() {
        let csv = report(vec![1.0, 0.5, 0.25]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "3,0.25,0.25");
    }

    #[test]
    fn plateau_measure() {
        let r = report(vec![4.0, 2.0, 1.0, 0.99, 0.995]);
        let imp = r.plateau_improvement(2).unwrap();
        assert!((imp - 0.01).abs() < 1e-12);
        assert!(r.plateau_improvement(5).is_none());
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = TrainConfig {
            epochs: 1,
            batch_size: 4,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
        };
        assert!(ok.validate().is_ok());
        assert!(TrainConfig {
            epochs: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            clip_norm: Some(-1.0),
            ..ok.clone()
        }
        .validate()
        .is_err());
    }
}
