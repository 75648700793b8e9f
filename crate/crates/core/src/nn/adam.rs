use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{GeoqcError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state with bias correction.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &[&Tensor2]) -> Self {
        let zeros: Vec<Tensor2> = params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn update(&mut self, params: Vec<&mut Tensor2>, grads: &[Tensor2]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.first.len(),
                found: grads.len(),
            });
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            if p.shape() != g.shape() || m.shape() != g.shape() {
                return Err(GeoqcError::DimensionMismatch {
                    expected: m.rows() * m.cols(),
                    found: g.rows() * g.cols(),
                });
            }
            for (((pv, &gv), mv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor2], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor2::sum_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_assign(s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(&[1.0, -2.0]);
        let mut opt = OptimizerState::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            opt.update(vec![&mut p], &[param(&[0.0, 0.0])]).unwrap();
        }
        assert_eq!(p.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_moves_against_it() {
        let mut p = param(&[0.0, 0.0]);
        let g = param(&[1.0, -3.0]);
        let mut opt = OptimizerState::new(AdamConfig::default(), &[&p]);
        let mut prev = p.clone();
        for _ in 0..100 {
            opt.update(vec![&mut p], std::slice::from_ref(&g)).unwrap();
            assert!(p.get(0, 0) < prev.get(0, 0));
            assert!(p.get(0, 1) > prev.get(0, 1));
            prev = p.clone();
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = param(&[0.5, 0.25, -1.0]);
            let mut opt = OptimizerState::new(AdamConfig::default(), &[&p]);
            for k in 0..10 {
                let g = param(&[k as f64 * 0.1, -0.3, (k as f64).sin()]);
                opt.update(vec![&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![param(&[3.0]), param(&[4.0])];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        let after = g.iter().map(Tensor2::sum_sq).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-15);
    }
}
