//! A small training engine: dense and GRU layers over batched tensors, a
//! squared-Euclidean sequence loss, and an adaptive-moment optimizer.

pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod tensor;

pub use adam::{clip_global_norm, AdamConfig, OptimizerState};
pub use dense::{Activation, DenseLayer};
pub use gru::GruLayer;
pub use loss::{euclidean_loss, euclidean_loss_value};
pub use tensor::Tensor2;

/// Anything with trainable parameters, listed in a fixed declaration order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor2>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;

    fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.rows() * p.cols()).sum()
    }
}
