//! Sequence model for the global decomposition U ↦ (U_1, …, U_N).
//!
//! The d rows of U (each encoded as `[Re ‖ Im]`) are read by a stack of
//! encoder GRU layers. The top encoder state after the last row is repeated
//! d·N times as the input of a stack of decoder GRU layers, and a linear head
//! maps every decoder state to one encoded output row. Consecutive groups of d
//! output rows form one segment matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{decode_rows, encode_matrix_rows, GlobalSample};
use crate::error::{GeoqcError, Result};
use crate::linalg::ComplexMatrix;
use crate::nn::dense::DenseCache;
use crate::nn::gru::GruCache;
use crate::nn::tensor::Tensor2;
use crate::nn::{euclidean_loss, euclidean_loss_value, Activation, DenseLayer, GruLayer, Parameterized};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalArchitecture {
    pub n: usize,
    pub segments: usize,
    pub hidden_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
}

impl GlobalArchitecture {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn input_timesteps(&self) -> usize {
        self.dim()
    }

    pub fn output_timesteps(&self) -> usize {
        self.dim() * self.segments
    }

    pub fn vector_size(&self) -> usize {
        2 * self.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.segments == 0 || self.hidden_size == 0 {
            return Err(GeoqcError::InvalidInput(format!(
                "invalid global architecture {self:?}"
            )));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(GeoqcError::InvalidInput(
                "global model needs at least one encoder and one decoder layer".into(),
            ));
        }
        Ok(())
    }
}

impl Default for GlobalArchitecture {
    /// n = 3, N = 10, 5 + 5 GRU layers of width 64.
    fn default() -> Self {
        Self {
            n: 3,
            segments: 10,
            hidden_size: 64,
            encoder_layers: 5,
            decoder_layers: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalModel {
    pub arch: GlobalArchitecture,
    pub encoder: Vec<GruLayer>,
    pub decoder: Vec<GruLayer>,
    pub head: DenseLayer,
}

pub struct GlobalCache {
    encoder: Vec<GruCache>,
    decoder: Vec<GruCache>,
    head: DenseCache,
    batch: usize,
}

/// One training pair, pre-encoded as timestep rows.
#[derive(Clone, Debug)]
pub struct GlobalExample {
    pub input: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl GlobalExample {
    pub fn from_sample(s: &GlobalSample) -> Self {
        Self {
            input: encode_matrix_rows(&s.input).timesteps,
            target: s
                .segments
                .iter()
                .flat_map(|u| encode_matrix_rows(u).timesteps)
                .collect(),
        }
    }
}

/// Lays out the t-th row of every example as one B×width tensor per timestep.
pub(crate) fn batch_timesteps(rows: &[&[Vec<f64>]]) -> Vec<Tensor2> {
    let steps = rows[0].len();
    (0..steps)
        .map(|t| {
            let step: Vec<&[f64]> = rows.iter().map(|r| r[t].as_slice()).collect();
            Tensor2::from_rows(&step).expect("rows share a width")
        })
        .collect()
}

fn stack(ts: &[Tensor2]) -> Tensor2 {
    let cols = ts[0].cols();
    let mut data = Vec::with_capacity(ts.len() * ts[0].rows() * cols);
    for t in ts {
        data.extend_from_slice(t.as_slice());
    }
    Tensor2::from_vec(ts.len() * ts[0].rows(), cols, data).expect("stacked shape")
}

fn unstack(t: &Tensor2, parts: usize) -> Vec<Tensor2> {
    let rows = t.rows() / parts;
    let cols = t.cols();
    t.as_slice()
        .chunks(rows * cols)
        .map(|c| Tensor2::from_vec(rows, cols, c.to_vec()).expect("chunk shape"))
        .collect()
}

impl GlobalModel {
    pub fn new(arch: GlobalArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden_size;
        let v = arch.vector_size();
        let encoder = (0..arch.encoder_layers)
            .map(|k| GruLayer::new(&mut rng, if k == 0 { v } else { h }, h))
            .collect();
        let decoder = (0..arch.decoder_layers)
            .map(|_| GruLayer::new(&mut rng, h, h))
            .collect();
        let head = DenseLayer::new(&mut rng, h, v, Activation::Identity);
        Ok(Self {
            arch,
            encoder,
            decoder,
            head,
        })
    }

    /// All parameters zero; every prediction is the zero matrix.
    pub fn zeros(arch: GlobalArchitecture) -> Result<Self> {
        arch.validate()?;
        let h = arch.hidden_size;
        let v = arch.vector_size();
        Ok(Self {
            encoder: (0..arch.encoder_layers)
                .map(|k| GruLayer::zeros(if k == 0 { v } else { h }, h))
                .collect(),
            decoder: (0..arch.decoder_layers).map(|_| GruLayer::zeros(h, h)).collect(),
            head: DenseLayer::zeros(h, v, Activation::Identity),
            arch,
        })
    }

    fn check_inputs(&self, inputs: &[Tensor2]) -> Result<()> {
        if inputs.len() != self.arch.input_timesteps() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.arch.input_timesteps(),
                found: inputs.len(),
            });
        }
        Ok(())
    }

    /// Inference on a batch of encoded inputs; returns d·N output timesteps.
    pub fn infer(&self, inputs: &[Tensor2]) -> Result<Vec<Tensor2>> {
        self.check_inputs(inputs)?;
        let batch = inputs[0].rows();
        let h = self.arch.hidden_size;
        let mut seq = inputs.to_vec();
        for layer in &self.encoder {
            seq = layer.infer(&seq, &Tensor2::zeros(batch, h))?;
        }
        let context = seq.last().expect("non-empty").clone();
        let mut seq = vec![context; self.arch.output_timesteps()];
        for layer in &self.decoder {
            seq = layer.infer(&seq, &Tensor2::zeros(batch, h))?;
        }
        let out = self.head.infer(&stack(&seq))?;
        out.check_finite("global model output")?;
        Ok(unstack(&out, self.arch.output_timesteps()))
    }

    pub fn forward(&self, inputs: &[Tensor2]) -> Result<(Vec<Tensor2>, GlobalCache)> {
        self.check_inputs(inputs)?;
        let batch = inputs[0].rows();
        let h = self.arch.hidden_size;
        let mut seq = inputs.to_vec();
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (out, cache) = layer.forward(&seq, &Tensor2::zeros(batch, h))?;
            enc_caches.push(cache);
            seq = out;
        }
        let context = seq.last().expect("non-empty").clone();
        let mut seq = vec![context; self.arch.output_timesteps()];
        let mut dec_caches = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (out, cache) = layer.forward(&seq, &Tensor2::zeros(batch, h))?;
            dec_caches.push(cache);
            seq = out;
        }
        let (out, head_cache) = self.head.forward(&stack(&seq))?;
        out.check_finite("global model output")?;
        Ok((
            unstack(&out, self.arch.output_timesteps()),
            GlobalCache {
                encoder: enc_caches,
                decoder: dec_caches,
                head: head_cache,
                batch,
            },
        ))
    }

    /// Parameter gradients (declaration order) given ∂L/∂outputs.
    pub fn backward(&self, cache: &GlobalCache, grad_outputs: &[Tensor2]) -> Result<Vec<Tensor2>> {
        let h = self.arch.hidden_size;
        let steps_out = self.arch.output_timesteps();
        let (g_top, head_grads) = self.head.backward(&cache.head, &stack(grad_outputs))?;
        let mut g_seq = unstack(&g_top, steps_out);

        let mut dec_grads = Vec::with_capacity(self.decoder.len());
        for (layer, lc) in self.decoder.iter().zip(&cache.decoder).rev() {
            let (g_in, _, grads) = layer.backward(lc, &g_seq)?;
            dec_grads.push(grads);
            g_seq = g_in;
        }
        dec_grads.reverse();

        // the repeated context feeds every decoder timestep
        let mut g_context = Tensor2::zeros(cache.batch, h);
        for g in &g_seq {
            g_context.add_assign(g);
        }
        let steps_in = self.arch.input_timesteps();
        let mut g_seq: Vec<Tensor2> = (0..steps_in).map(|_| Tensor2::zeros(cache.batch, h)).collect();
        g_seq[steps_in - 1] = g_context;

        let mut enc_grads = Vec::with_capacity(self.encoder.len());
        for (layer, lc) in self.encoder.iter().zip(&cache.encoder).rev() {
            let (g_in, _, grads) = layer.backward(lc, &g_seq)?;
            enc_grads.push(grads);
            g_seq = g_in;
        }
        enc_grads.reverse();

        let mut out = Vec::new();
        for g in enc_grads.into_iter().chain(dec_grads) {
            out.extend(g.into_vec());
        }
        out.extend(head_grads.into_vec());
        Ok(out)
    }

    pub fn loss_and_grads(&self, batch: &[&GlobalExample]) -> Result<(f64, Vec<Tensor2>)> {
        let inputs: Vec<&[Vec<f64>]> = batch.iter().map(|e| e.input.as_slice()).collect();
        let targets: Vec<&[Vec<f64>]> = batch.iter().map(|e| e.target.as_slice()).collect();
        let (pred, cache) = self.forward(&batch_timesteps(&inputs))?;
        let (loss, grad) = euclidean_loss(&pred, &batch_timesteps(&targets))?;
        Ok((loss, self.backward(&cache, &grad)?))
    }

    pub fn loss(&self, batch: &[&GlobalExample]) -> Result<f64> {
        let inputs: Vec<&[Vec<f64>]> = batch.iter().map(|e| e.input.as_slice()).collect();
        let targets: Vec<&[Vec<f64>]> = batch.iter().map(|e| e.target.as_slice()).collect();
        let pred = self.infer(&batch_timesteps(&inputs))?;
        euclidean_loss_value(&pred, &batch_timesteps(&targets))
    }

    /// Predicted segments U_1 … U_N (integration order) for one unitary.
    pub fn predict(&self, u: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
        if u.dim() != self.arch.dim() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.arch.dim(),
                found: u.dim(),
            });
        }
        let rows = encode_matrix_rows(u).timesteps;
        let out = self.infer(&batch_timesteps(&[rows.as_slice()]))?;
        let d = self.arch.dim();
        out.chunks(d)
            .map(|seg| {
                let rows: Vec<&[f64]> = seg.iter().map(|t| t.row(0)).collect();
                decode_rows(&rows)
            })
            .collect()
    }
}

impl Parameterized for GlobalModel {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p: Vec<&Tensor2> = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            p.extend(l.params());
        }
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p: Vec<&mut Tensor2> = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            p.extend(l.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }
}

/// Runs the global decomposition network on one unitary.
pub fn global_forward(model: &GlobalModel, u: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    model.predict(u)
}
