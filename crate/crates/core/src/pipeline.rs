//! End-to-end compilation `U → segments → coefficients → circuit`, with
//! polar projection, metrics and an optional least-squares refinement.
//!
//! # Segment order
//!
//! The geodesic integrator composes on the left, `x_{j+1} = U_j x_j`, so the
//! endpoint is `U = U_N ··· U_2 U_1`. [`embed_global`] multiplies coefficient
//! rows left to right, row 1 leftmost. The coefficient matrix built by
//! [`compile`] therefore stores row `i` (0-based) = coefficients of segment
//! `U_{N−i}`, so that `embed_global(c) ≈ U_N ··· U_1 = U`. This is the only
//! place where the two orders meet.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{embed_global, HorizontalBasis, PauliAction};
use crate::circuit::{circuit_unitary, emit_circuit_text, synthesize_segments, DEFAULT_CUTOFF};
use crate::error::{GeoqcError, Result};
use crate::linalg::{ComplexMatrix, ONE};
use crate::models::{global_forward, local_forward, GlobalModel, LocalModel};

/// Input unitarity tolerance (‖U†U − I‖_F and |det U − 1|).
pub const INPUT_TOL: f64 = 1e-6;

/// `|tr(U†V)| / d`.
pub fn fidelity(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(GeoqcError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let tr: Complex64 = u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a.conj() * b).sum();
    Ok(tr.norm() / u.dim() as f64)
}

/// Unitary polar factor of `m` by the Newton iteration `X ← (X + X^{−†})/2`.
pub fn nearest_unitary(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_finite() {
        return Err(GeoqcError::Numeric("non-finite matrix".into()));
    }
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut x = m.clone();
    for _ in 0..100 {
        let inv_adj = x.inverse()?.adjoint();
        let next = (&x + &inv_adj).scale_real(0.5);
        let step = next.distance(&x);
        x = next;
        if step <= 1e-15 * scale.max(1.0) {
            break;
        }
    }
    let dev = x.unitarity_deviation();
    if dev > 1e-10 {
        return Err(GeoqcError::Numeric(format!(
            "polar iteration stopped {dev:e} from unitary"
        )));
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Analytic,
    /// Central differences with `fd_step`.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Target ‖E(c) − U‖_F.
    pub tol: f64,
    pub fd_step: f64,
    pub jacobian: JacobianMode,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            fd_step: 1e-5,
            jacobian: JacobianMode::Analytic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineLog {
    pub iterations: usize,
    /// ‖E(c) − U‖_F at the start and after every accepted step.
    pub errors: Vec<f64>,
    pub stop: StopReason,
}

impl RefineLog {
    pub fn initial_error(&self) -> f64 {
        self.errors[0]
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("non-empty")
    }
}

fn residual(c: &[f64], shape: (usize, usize), u: &ComplexMatrix, basis: &HorizontalBasis) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = c.chunks(shape.1).map(<[f64]>::to_vec).collect();
    let e = embed_global(&rows, basis).expect("shape checked");
    diff_vec(&e, u)
}

fn diff_vec(e: &ComplexMatrix, u: &ComplexMatrix) -> Vec<f64> {
    let mut r = Vec::with_capacity(2 * u.as_slice().len());
    for (a, b) in e.as_slice().iter().zip(u.as_slice()) {
        r.push(a.re - b.re);
    }
    for (a, b) in e.as_slice().iter().zip(u.as_slice()) {
        r.push(a.im - b.im);
    }
    r
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Rows of the transposed Jacobian: `jt[l]` = ∂ vec(E)/∂c_l.
fn jacobian_analytic(c: &[f64], basis: &HorizontalBasis) -> Vec<Vec<f64>> {
    let d = basis.dim();
    let m = basis.len();
    let s = basis.norm_factor();
    let acts: Vec<&PauliAction> = (0..c.len()).map(|l| &basis.actions()[l % m]).collect();
    // prefix[l] = F_1 ··· F_l, suffix[l] = F_{l+1} ··· F_L
    let mut prefix = Vec::with_capacity(c.len() + 1);
    prefix.push(ComplexMatrix::identity(d));
    for (l, a) in acts.iter().enumerate() {
        let mut next = prefix[l].clone();
        a.right_mul_exp(&mut next, c[l] * s);
        prefix.push(next);
    }
    let mut suffix = vec![ComplexMatrix::identity(d); c.len() + 1];
    for l in (0..c.len()).rev() {
        let mut next = suffix[l + 1].clone();
        acts[l].left_mul_exp(&mut next, c[l] * s);
        suffix[l] = next;
    }
    let tau = Complex64::new(0.0, s);
    (0..c.len())
        .into_par_iter()
        .map(|l| {
            // ∂/∂c_l (F_1 ··· F_L) = F_1 ··· F_l · τ_l · F_{l+1} ··· F_L
            let tail = acts[l].left_mul(&suffix[l + 1]).scale(tau);
            let zero = ComplexMatrix::zeros(d);
            diff_vec(&prefix[l + 1].matmul(&tail), &zero)
        })
        .collect()
}

fn jacobian_fd(c: &[f64], shape: (usize, usize), u: &ComplexMatrix, basis: &HorizontalBasis, h: f64) -> Vec<Vec<f64>> {
    (0..c.len())
        .into_par_iter()
        .map(|l| {
            let mut p = c.to_vec();
            p[l] = c[l] + h;
            let up = residual(&p, shape, u, basis);
            p[l] = c[l] - h;
            let down = residual(&p, shape, u, basis);
            up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect()
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, k×k).
fn cholesky_solve(a: &mut [f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut diag = a[j * k + j];
        for p in 0..j {
            diag -= a[j * k + p] * a[j * k + p];
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * k + j] = ljj;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for p in 0..j {
                v -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = v / ljj;
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= a[i * k + p] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= a[p * k + i] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    Some(y)
}

/// Levenberg–Marquardt step `δ = −Jᵀ (J Jᵀ + μ I)⁻¹ r`.
fn lm_step(jt: &[Vec<f64>], r: &[f64], mu: f64) -> Option<Vec<f64>> {
    let k = r.len();
    let mut gram = vec![0.0; k * k];
    for col in jt {
        for i in 0..k {
            let ci = col[i];
            if ci == 0.0 {
                continue;
            }
            for j in 0..=i {
                gram[i * k + j] += ci * col[j];
            }
        }
    }
    for i in 0..k {
        gram[i * k + i] += mu;
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
    }
    let y = cholesky_solve(&mut gram, r, k)?;
    Some(
        jt.iter()
            .map(|col| -col.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>())
            .collect(),
    )
}

/// Locally minimises ‖embed_global(c) − U‖²_F from `c0`. Only steps that
/// lower the objective are accepted, so the result is never worse than `c0`.
pub fn refine(
    u: &ComplexMatrix,
    c0: &[Vec<f64>],
    basis: &HorizontalBasis,
    options: &RefineOptions,
) -> Result<(Vec<Vec<f64>>, RefineLog)> {
    if u.dim() != basis.dim() {
        return Err(GeoqcError::DimensionMismatch {
            expected: basis.dim(),
            found: u.dim(),
        });
    }
    let rows = c0.len();
    let m = basis.len();
    embed_global(c0, basis)?;
    let mut c: Vec<f64> = c0.concat();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(GeoqcError::InvalidInput("initial coefficients are not finite".into()));
    }
    let shape = (rows, m);
    let mut r = residual(&c, shape, u, basis);
    let mut f = sq(&r);
    let mut errors = vec![f.sqrt()];
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < options.max_iters {
        if f.sqrt() <= options.tol {
            stop = StopReason::Converged;
            break;
        }
        let jt = match options.jacobian {
            JacobianMode::Analytic => jacobian_analytic(&c, basis),
            JacobianMode::FiniteDifference => jacobian_fd(&c, shape, u, basis, options.fd_step),
        };
        iterations += 1;
        let mut accepted = false;
        while mu <= 1e12 {
            if let Some(delta) = lm_step(&jt, &r, mu) {
                let trial: Vec<f64> = c.iter().zip(&delta).map(|(a, b)| a + b).collect();
                let tr = residual(&trial, shape, u, basis);
                let tf = sq(&tr);
                if tf < f {
                    c = trial;
                    r = tr;
                    f = tf;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            stop = StopReason::Stalled;
            break;
        }
        errors.push(f.sqrt());
    }
    if stop == StopReason::MaxIterations && f.sqrt() <= options.tol {
        stop = StopReason::Converged;
    }
    Ok((
        c.chunks(m).map(<[f64]>::to_vec).collect(),
        RefineLog {
            iterations,
            errors,
            stop,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompileOptions {
    /// Replace each predicted segment by its nearest unitary before the local stage.
    pub project_segments: bool,
    pub refine: bool,
    pub refine_options: RefineOptions,
    pub cutoff: f64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            project_segments: true,
            refine: false,
            refine_options: RefineOptions::default(),
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frobenius_error: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub input: ComplexMatrix,
    /// Raw network output U_1 … U_N in integration order.
    pub segments: Vec<ComplexMatrix>,
    /// Segments handed to the local stage (projected when enabled).
    pub local_inputs: Vec<ComplexMatrix>,
    /// N × m; row i holds segment N − i (see the module docs).
    pub coefficients: Vec<Vec<f64>>,
    pub reconstructed: ComplexMatrix,
    pub circuit: String,
    pub metrics: Metrics,
    /// Metrics of the network coefficients before refinement.
    pub network_metrics: Metrics,
    pub refinement: Option<RefineLog>,
}

pub fn check_special_unitary(u: &ComplexMatrix) -> Result<()> {
    if !u.is_finite() {
        return Err(GeoqcError::InvalidInput("matrix has non-finite entries".into()));
    }
    let dev = u.unitarity_deviation();
    if dev > INPUT_TOL {
        return Err(GeoqcError::NotUnitary {
            deviation: dev,
            tolerance: INPUT_TOL,
        });
    }
    let det = u.determinant()?;
    if (det - ONE).norm() > INPUT_TOL {
        return Err(GeoqcError::InvalidInput(format!(
            "determinant {:.6}{:+.6}i differs from 1 by more than {INPUT_TOL:e}",
            det.re, det.im
        )));
    }
    Ok(())
}

fn metrics(u: &ComplexMatrix, e: &ComplexMatrix) -> Result<Metrics> {
    Ok(Metrics {
        frobenius_error: e.distance(u),
        fidelity: fidelity(u, e)?,
    })
}

pub fn compile(
    u: &ComplexMatrix,
    global: &GlobalModel,
    local: &LocalModel,
    options: &CompileOptions,
) -> Result<CompileResult> {
    let basis = HorizontalBasis::new(local.arch.n)?;
    if global.arch.n != local.arch.n || local.arch.output_size != basis.len() {
        return Err(GeoqcError::ModelMismatch(format!(
            "global model is for n={}, local model for n={} with {} outputs",
            global.arch.n, local.arch.n, local.arch.output_size
        )));
    }
    if u.dim() != basis.dim() {
        return Err(GeoqcError::DimensionMismatch {
            expected: basis.dim(),
            found: u.dim(),
        });
    }
    check_special_unitary(u)?;

    let segments = global_forward(global, u)?;
    let local_inputs: Vec<ComplexMatrix> = if options.project_segments {
        segments.iter().map(nearest_unitary).collect::<Result<_>>()?
    } else {
        segments.clone()
    };
    let network_coeffs: Vec<Vec<f64>> = local_inputs
        .iter()
        .rev()
        .map(|s| local_forward(local, s))
        .collect::<Result<_>>()?;
    let network_metrics = metrics(u, &embed_global(&network_coeffs, &basis)?)?;

    let (coefficients, refinement) = if options.refine {
        let (c, log) = refine(u, &network_coeffs, &basis, &options.refine_options)?;
        (c, Some(log))
    } else {
        (network_coeffs, None)
    };
    let reconstructed = embed_global(&coefficients, &basis)?;
    let circuit = synthesize_segments(&coefficients, &basis, options.cutoff)?;
    Ok(CompileResult {
        input: u.clone(),
        segments,
        local_inputs,
        metrics: metrics(u, &reconstructed)?,
        network_metrics,
        circuit: emit_circuit_text(&circuit),
        coefficients,
        reconstructed,
        refinement,
    })
}

impl CompileResult {
    /// ‖circuit_unitary(circuit) − reconstructed‖_F.
    pub fn circuit_consistency(&self) -> Result<f64> {
        let c = crate::circuit::parse_circuit_text(&self.circuit)?;
        Ok(circuit_unitary(&c)?.distance(&self.reconstructed))
    }
}
