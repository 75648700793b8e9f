//! Gated recurrent unit over batched sequences.
//!
//! Cell, per timestep:
//!
//! ```text
//! z  = σ(W_z x + R_z h + b_z)
//! r  = σ(W_r x + R_r h + b_r)
//! h̃  = tanh(W_h x + R_h (r ∘ h) + b_h)
//! h' = (1 − z) ∘ h + z ∘ h̃
//! ```
//!
//! Gate blocks are stacked row-wise in the order z, r, h: `w_in` is 3H×in and
//! `bias` is 1×3H. The recurrent weights are split as `w_rec_zr` (2H×H, blocks
//! R_z then R_r) and `w_rec_h` (H×H, R_h), since R_h acts on r ∘ h.

use rand::Rng;

use super::tensor::{gemm, glorot_uniform, matmul, orthogonal, Tensor2};
use super::Parameterized;
use crate::error::{GeoqcError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub w_in: Tensor2,
    pub w_rec_zr: Tensor2,
    pub w_rec_h: Tensor2,
    pub bias: Tensor2,
}

/// Per-timestep activations kept for backpropagation through time.
#[derive(Clone, Debug)]
struct StepCache {
    h_prev: Tensor2,
    z: Tensor2,
    r: Tensor2,
    cand: Tensor2,
    rh: Tensor2,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    inputs: Vec<Tensor2>,
    steps: Vec<StepCache>,
}

#[derive(Clone, Debug)]
pub struct GruGrads {
    pub w_in: Tensor2,
    pub w_rec_zr: Tensor2,
    pub w_rec_h: Tensor2,
    pub bias: Tensor2,
}

impl GruGrads {
    pub fn into_vec(self) -> Vec<Tensor2> {
        vec![self.w_in, self.w_rec_zr, self.w_rec_h, self.bias]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GruLayer {
    /// Glorot-uniform input weights, orthogonal recurrent blocks, zero bias.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut w_in = Tensor2::zeros(3 * hidden, input);
        let mut w_rec_zr = Tensor2::zeros(2 * hidden, hidden);
        let mut w_rec_h = Tensor2::zeros(hidden, hidden);
        for g in 0..3 {
            let wi = glorot_uniform(rng, hidden, input);
            let wr = orthogonal(rng, hidden);
            for r in 0..hidden {
                w_in.row_mut(g * hidden + r).copy_from_slice(wi.row(r));
                if g < 2 {
                    w_rec_zr.row_mut(g * hidden + r).copy_from_slice(wr.row(r));
                } else {
                    w_rec_h.row_mut(r).copy_from_slice(wr.row(r));
                }
            }
        }
        Self {
            w_in,
            w_rec_zr,
            w_rec_h,
            bias: Tensor2::zeros(1, 3 * hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_in: Tensor2::zeros(3 * hidden, input),
            w_rec_zr: Tensor2::zeros(2 * hidden, hidden),
            w_rec_h: Tensor2::zeros(hidden, hidden),
            bias: Tensor2::zeros(1, 3 * hidden),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_rec_h.cols()
    }

    fn check_input(&self, xs: &[Tensor2], h0: &Tensor2) -> Result<()> {
        if xs.is_empty() {
            return Err(GeoqcError::InvalidInput("GRU sequence length must be >= 1".into()));
        }
        let batch = h0.rows();
        if h0.cols() != self.hidden_size() {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.hidden_size(),
                found: h0.cols(),
            });
        }
        for x in xs {
            if x.cols() != self.input_size() {
                return Err(GeoqcError::DimensionMismatch {
                    expected: self.input_size(),
                    found: x.cols(),
                });
            }
            if x.rows() != batch {
                return Err(GeoqcError::DimensionMismatch {
                    expected: batch,
                    found: x.rows(),
                });
            }
        }
        Ok(())
    }

    /// One cell update for a batch.
    pub fn step(&self, x: &Tensor2, h_prev: &Tensor2) -> Result<Tensor2> {
        self.check_input(std::slice::from_ref(x), h_prev)?;
        Ok(self.step_inner(x, h_prev).0)
    }

    fn step_inner(&self, x: &Tensor2, h_prev: &Tensor2) -> (Tensor2, StepCache) {
        let hsz = self.hidden_size();
        let batch = x.rows();
        let mut gx = Tensor2::zeros(batch, 3 * hsz);
        for r in 0..batch {
            gx.row_mut(r).copy_from_slice(self.bias.as_slice());
        }
        gemm(1.0, x, false, &self.w_in, true, 1.0, &mut gx);
        let gh = matmul(h_prev, false, &self.w_rec_zr, true);

        let mut z = Tensor2::zeros(batch, hsz);
        let mut r = Tensor2::zeros(batch, hsz);
        let mut rh = Tensor2::zeros(batch, hsz);
        for b in 0..batch {
            let gxr = gx.row(b);
            let ghr = gh.row(b);
            let hp = h_prev.row(b);
            for k in 0..hsz {
                let zv = sigmoid(gxr[k] + ghr[k]);
                let rv = sigmoid(gxr[hsz + k] + ghr[hsz + k]);
                z.set(b, k, zv);
                r.set(b, k, rv);
                rh.set(b, k, rv * hp[k]);
            }
        }
        let gn = matmul(&rh, false, &self.w_rec_h, true);
        let mut cand = Tensor2::zeros(batch, hsz);
        let mut h = Tensor2::zeros(batch, hsz);
        for b in 0..batch {
            for k in 0..hsz {
                let n = (gx.get(b, 2 * hsz + k) + gn.get(b, k)).tanh();
                cand.set(b, k, n);
                let zv = z.get(b, k);
                h.set(b, k, (1.0 - zv) * h_prev.get(b, k) + zv * n);
            }
        }
        (
            h,
            StepCache {
                h_prev: h_prev.clone(),
                z,
                r,
                cand,
                rh,
            },
        )
    }

    /// Runs the whole sequence; returns the hidden state after every timestep.
    pub fn forward(&self, xs: &[Tensor2], h0: &Tensor2) -> Result<(Vec<Tensor2>, GruCache)> {
        self.check_input(xs, h0)?;
        let mut h = h0.clone();
        let mut outs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (hn, cache) = self.step_inner(x, &h);
            outs.push(hn.clone());
            steps.push(cache);
            h = hn;
        }
        Ok((
            outs,
            GruCache {
                inputs: xs.to_vec(),
                steps,
            },
        ))
    }

    /// Inference without caches.
    pub fn infer(&self, xs: &[Tensor2], h0: &Tensor2) -> Result<Vec<Tensor2>> {
        self.check_input(xs, h0)?;
        let mut h = h0.clone();
        let mut outs = Vec::with_capacity(xs.len());
        for x in xs {
            h = self.step_inner(x, &h).0;
            outs.push(h.clone());
        }
        Ok(outs)
    }

    /// Backpropagation through time.
    ///
    /// `grad_outputs[t]` is ∂L/∂h_t (the loss may read any timestep). Returns
    /// ∂L/∂x_t for every t, ∂L/∂h_0, and the parameter gradients.
    pub fn backward(&self, cache: &GruCache, grad_outputs: &[Tensor2]) -> Result<(Vec<Tensor2>, Tensor2, GruGrads)> {
        let steps = cache.steps.len();
        if grad_outputs.len() != steps {
            return Err(GeoqcError::DimensionMismatch {
                expected: steps,
                found: grad_outputs.len(),
            });
        }
        let hsz = self.hidden_size();
        let batch = cache.steps[0].h_prev.rows();
        let mut g_w_in = Tensor2::zeros(3 * hsz, self.input_size());
        let mut g_w_zr = Tensor2::zeros(2 * hsz, hsz);
        let mut g_w_h = Tensor2::zeros(hsz, hsz);
        let mut g_bias = Tensor2::zeros(1, 3 * hsz);
        let mut grad_inputs = vec![Tensor2::zeros(0, 0); steps];
        let mut carry = Tensor2::zeros(batch, hsz);

        for t in (0..steps).rev() {
            let c = &cache.steps[t];
            let gout = &grad_outputs[t];
            if gout.shape() != (batch, hsz) {
                return Err(GeoqcError::DimensionMismatch {
                    expected: hsz,
                    found: gout.cols(),
                });
            }
            let mut dh_prev = Tensor2::zeros(batch, hsz);
            // gate pre-activation gradients, laid out [z | r | h]
            let mut d_gates = Tensor2::zeros(batch, 3 * hsz);
            let mut d_cand_pre = Tensor2::zeros(batch, hsz);
            for b in 0..batch {
                for k in 0..hsz {
                    let dh = gout.get(b, k) + carry.get(b, k);
                    let z = c.z.get(b, k);
                    let n = c.cand.get(b, k);
                    let hp = c.h_prev.get(b, k);
                    let dz = dh * (n - hp);
                    let dn = dh * z;
                    dh_prev.set(b, k, dh * (1.0 - z));
                    let dan = dn * (1.0 - n * n);
                    d_cand_pre.set(b, k, dan);
                    d_gates.set(b, 2 * hsz + k, dan);
                    d_gates.set(b, k, dz * z * (1.0 - z));
                }
            }
            // through R_h (r ∘ h_prev)
            gemm(1.0, &d_cand_pre, true, &c.rh, false, 1.0, &mut g_w_h);
            let d_rh = matmul(&d_cand_pre, false, &self.w_rec_h, false);
            for b in 0..batch {
                for k in 0..hsz {
                    let r = c.r.get(b, k);
                    let hp = c.h_prev.get(b, k);
                    let drh = d_rh.get(b, k);
                    let dr = drh * hp;
                    d_gates.set(b, hsz + k, dr * r * (1.0 - r));
                    let v = dh_prev.get(b, k) + drh * r;
                    dh_prev.set(b, k, v);
                }
            }
            let d_zr = d_gates.columns(0, 2 * hsz);
            gemm(1.0, &d_zr, true, &c.h_prev, false, 1.0, &mut g_w_zr);
            gemm(1.0, &d_zr, false, &self.w_rec_zr, false, 1.0, &mut dh_prev);

            gemm(1.0, &d_gates, true, &cache.inputs[t], false, 1.0, &mut g_w_in);
            g_bias.add_assign(&d_gates.column_sums());
            grad_inputs[t] = matmul(&d_gates, false, &self.w_in, false);
            carry = dh_prev;
        }

        Ok((
            grad_inputs,
            carry,
            GruGrads {
                w_in: g_w_in,
                w_rec_zr: g_w_zr,
                w_rec_h: g_w_h,
                bias: g_bias,
            },
        ))
    }
}

impl Parameterized for GruLayer {
    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.w_in, &self.w_rec_zr, &self.w_rec_h, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.w_in, &mut self.w_rec_zr, &mut self.w_rec_h, &mut self.bias]
    }
}
