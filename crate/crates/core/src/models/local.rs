//! Dense model for the local decomposition U_j ↦ c ∈ R^m.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_matrix_rows, LocalSample};
use crate::error::{GeoqcError, Result};
use crate::linalg::ComplexMatrix;
use crate::nn::dense::DenseCache;
use crate::nn::tensor::Tensor2;
use crate::nn::{euclidean_loss, euclidean_loss_value, Activation, DenseLayer, Parameterized};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalArchitecture {
    pub n: usize,
    /// Widths of the ReLU hidden layers.
    pub hidden: Vec<usize>,
    /// m = dim Δ.
    pub output_size: usize,
}

impl LocalArchitecture {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// 2d², the flattened `[Re ‖ Im]` rows.
    pub fn input_size(&self) -> usize {
        2 * self.dim() * self.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = crate::algebra::HorizontalBasis::new(self.n)?.len();
        if self.output_size != m {
            return Err(GeoqcError::InvalidInput(format!(
                "local model output size {} differs from dim Δ = {m}",
                self.output_size
            )));
        }
        if self.hidden.contains(&0) {
            return Err(GeoqcError::InvalidInput("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

impl Default for LocalArchitecture {
    /// 128 → 2000 → 2000 → 36 for n = 3.
    fn default() -> Self {
        Self {
            n: 3,
            hidden: vec![2000, 2000],
            output_size: 36,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalModel {
    pub arch: LocalArchitecture,
    pub layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug)]
pub struct LocalExample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl LocalExample {
    pub fn from_sample(s: &LocalSample) -> Self {
        Self {
            input: flatten(&s.input),
            target: s.coeffs.clone(),
        }
    }
}

/// Concatenated `[Re(row) ‖ Im(row)]` rows.
pub fn flatten(m: &ComplexMatrix) -> Vec<f64> {
    encode_matrix_rows(m).timesteps.concat()
}

impl LocalModel {
    fn widths(arch: &LocalArchitecture) -> Vec<(usize, usize, Activation)> {
        let mut dims = vec![arch.input_size()];
        dims.extend(&arch.hidden);
        dims.push(arch.output_size);
        (0..dims.len() - 1)
            .map(|k| {
                let act = if k + 2 == dims.len() {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                (dims[k], dims[k + 1], act)
            })
            .collect()
    }

    pub fn new(arch: LocalArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::widths(&arch)
            .into_iter()
            .map(|(i, o, a)| DenseLayer::new(&mut rng, i, o, a))
            .collect();
        Ok(Self { arch, layers })
    }

    pub fn zeros(arch: LocalArchitecture) -> Result<Self> {
        arch.validate()?;
        let layers = Self::widths(&arch)
            .into_iter()
            .map(|(i, o, a)| DenseLayer::zeros(i, o, a))
            .collect();
        Ok(Self { arch, layers })
    }

    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        h.check_finite("local model output")?;
        Ok(h)
    }

    fn batch_tensors(batch: &[&LocalExample]) -> (Tensor2, Tensor2) {
        let x: Vec<&[f64]> = batch.iter().map(|e| e.input.as_slice()).collect();
        let y: Vec<&[f64]> = batch.iter().map(|e| e.target.as_slice()).collect();
        (
            Tensor2::from_rows(&x).expect("equal widths"),
            Tensor2::from_rows(&y).expect("equal widths"),
        )
    }

    pub fn loss_and_grads(&self, batch: &[&LocalExample]) -> Result<(f64, Vec<Tensor2>)> {
        let (x, y) = Self::batch_tensors(batch);
        let mut h = x;
        let mut caches: Vec<DenseCache> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (out, cache) = l.forward(&h)?;
            caches.push(cache);
            h = out;
        }
        h.check_finite("local model output")?;
        let (loss, mut g) = euclidean_loss(&[h], &[y])?;
        let mut g = g.pop().expect("one timestep");
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        for (l, c) in self.layers.iter().zip(&caches).rev() {
            let (gx, lg) = l.backward(c, &g)?;
            grads.push(lg.into_vec());
            g = gx;
        }
        grads.reverse();
        Ok((loss, grads.into_iter().flatten().collect()))
    }

    pub fn loss(&self, batch: &[&LocalExample]) -> Result<f64> {
        let (x, y) = Self::batch_tensors(batch);
        euclidean_loss_value(&[self.infer(&x)?], &[y])
    }

    pub fn predict(&self, u: &ComplexMatrix) -> Result<Vec<f64>> {
        if u.dim() != self.arch.dim() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.arch.dim(),
                found: u.dim(),
            });
        }
        let x = Tensor2::from_vec(1, self.arch.input_size(), flatten(u))?;
        Ok(self.infer(&x)?.into_vec())
    }

    /// Predictions for many matrices in one pass.
    pub fn predict_many(&self, us: &[ComplexMatrix]) -> Result<Vec<Vec<f64>>> {
        if us.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<f64>> = us.iter().map(flatten).collect();
        if rows.iter().any(|r| r.len() != self.arch.input_size()) {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.arch.input_size(),
                found: rows
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != self.arch.input_size())
                    .unwrap_or(0),
            });
        }
        let out = self.infer(&Tensor2::from_rows(&rows)?)?;
        Ok((0..out.rows()).map(|r| out.row(r).to_vec()).collect())
    }
}

impl Parameterized for LocalModel {
    fn params(&self) -> Vec<&Tensor2> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Runs the local decomposition network on one segment.
pub fn local_forward(model: &LocalModel, uj: &ComplexMatrix) -> Result<Vec<f64>> {
    model.predict(uj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_gradient, relative_error};

    fn small() -> LocalArchitecture {
        LocalArchitecture {
            n: 3,
            hidden: vec![7, 5],
            output_size: 36,
        }
    }

    #[test]
    fn output_has_length_m() {
        let model = LocalModel::new(small(), 0).unwrap();
        assert_eq!(local_forward(&model, &ComplexMatrix::identity(8)).unwrap().len(), 36);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let model = LocalModel::zeros(LocalArchitecture::default()).unwrap();
        let c = local_forward(&model, &ComplexMatrix::identity(8)).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        assert_eq!(model.arch.input_size(), 128);
    }

    #[test]
    fn rejects_wrong_output_size() {
        let arch = LocalArchitecture {
            n: 3,
            hidden: vec![4],
            output_size: 35,
        };
        assert!(LocalModel::new(arch, 0).is_err());
    }

    #[test]
    fn stack_gradient_matches_finite_differences() {
        let mut model = LocalModel::new(small(), 4).unwrap();
        // nonzero biases keep every pre-activation off the ReLU kink
        for (k, l) in model.layers.iter_mut().enumerate() {
            for (j, b) in l.bias.as_mut_slice().iter_mut().enumerate() {
                *b = 0.3 + 0.05 * ((j + k) as f64).sin();
            }
        }
        let ex = |k: f64| LocalExample {
            input: (0..128).map(|j| (j as f64 * 0.21 + k).sin()).collect(),
            target: (0..36).map(|j| (j as f64 * 0.5 - k).cos() * 0.1).collect(),
        };
        let data = [ex(0.0), ex(2.0), ex(-1.0)];
        let refs: Vec<&LocalExample> = data.iter().collect();
        let (_, grads) = model.loss_and_grads(&refs).unwrap();
        for (block, analytic) in grads.iter().enumerate() {
            let base = model.params()[block].as_slice().to_vec();
            let numeric = numeric_gradient(
                |theta| {
                    let mut m = model.clone();
                    m.params_mut()[block].as_mut_slice().copy_from_slice(theta);
                    m.loss(&refs).unwrap()
                },
                &base,
                1e-6,
            );
            let err = relative_error(analytic.as_slice(), &numeric);
            assert!(err < 1e-6, "block {block}: {err:e}");
        }
    }
}
