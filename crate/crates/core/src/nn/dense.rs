use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, glorot_uniform, matmul, Tensor2};
use super::Parameterized;
use crate::error::{GeoqcError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer `y = act(W x + b)` applied row-wise to a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// out × in
    pub weight: Tensor2,
    /// 1 × out
    pub bias: Tensor2,
    pub activation: Activation,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Tensor2,
    pre: Tensor2,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: glorot_uniform(rng, output, input),
            bias: Tensor2::zeros(1, output),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor2::zeros(output, input),
            bias: Tensor2::zeros(1, output),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    fn preactivation(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.input_size() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.input_size(),
                found: x.cols(),
            });
        }
        let mut pre = Tensor2::zeros(x.rows(), self.output_size());
        for r in 0..x.rows() {
            pre.row_mut(r).copy_from_slice(self.bias.as_slice());
        }
        gemm(1.0, x, false, &self.weight, true, 1.0, &mut pre);
        Ok(pre)
    }

    /// Inference-only forward pass.
    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut y = self.preactivation(x)?;
        if self.activation != Activation::Identity {
            y.as_mut_slice().iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        Ok(y)
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, DenseCache)> {
        let pre = self.preactivation(x)?;
        let mut y = pre.clone();
        y.as_mut_slice().iter_mut().for_each(|v| *v = self.activation.apply(*v));
        Ok((y, DenseCache { input: x.clone(), pre }))
    }

    /// Returns (∂L/∂x, parameter gradients) given ∂L/∂y.
    pub fn backward(&self, cache: &DenseCache, grad_y: &Tensor2) -> Result<(Tensor2, DenseGrads)> {
        if grad_y.shape() != cache.pre.shape() {
            return Err(GeoqcError::DimensionMismatch {
                expected: cache.pre.cols(),
                found: grad_y.cols(),
            });
        }
        let mut grad_pre = grad_y.clone();
        if self.activation != Activation::Identity {
            for (g, &p) in grad_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                *g *= self.activation.derivative(p);
            }
        }
        let weight = matmul(&grad_pre, true, &cache.input, false);
        let bias = grad_pre.column_sums();
        let grad_x = matmul(&grad_pre, false, &self.weight, false);
        Ok((grad_x, DenseGrads { weight, bias }))
    }
}

impl DenseGrads {
    pub fn into_vec(self) -> Vec<Tensor2> {
        vec![self.weight, self.bias]
    }
}

impl Parameterized for DenseLayer {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::dense_gradient_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        layer.weight = Tensor2::identity(3);
        let x = Tensor2::from_vec(2, 3, vec![1., -2., 3., 0.5, 0., -1.]).unwrap();
        assert_eq!(layer.infer(&x).unwrap(), x);
    }

    #[test]
    fn relu_zeroes_negative_and_its_gradient() {
        let mut layer = DenseLayer::zeros(1, 1, Activation::Relu);
        layer.weight = Tensor2::identity(1);
        let x = Tensor2::from_vec(1, 1, vec![-1.0]).unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
        let (gx, g) = layer
            .backward(&cache, &Tensor2::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(gx.as_slice(), &[0.0]);
        assert_eq!(g.weight.as_slice(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let layer = DenseLayer::zeros(3, 2, Activation::Identity);
        assert!(layer.infer(&Tensor2::zeros(1, 4)).is_err());
    }

    #[test]
    fn finite_difference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for act in [Activation::Identity, Activation::Relu] {
            let layer = DenseLayer::new(&mut rng, 5, 4, act);
            let worst = dense_gradient_error(&mut rng, &layer, 3);
            assert!(worst <= 1e-6, "{act:?}: relative error {worst:e}");
        }
    }
}
