//! Normal subRiemannian geodesics on SU(2^n) with horizontal subspace Δ.
//!
//! A geodesic is fixed by its initial costate Λ₀ and satisfies
//! `ẋ = proj_Δ(x Λ₀ x†) · x`, `x(0) = I`. It is discretised into N segments of
//! width h = 1/N with the first-order step
//! `U_j = exp(h · proj_Δ(x_j Λ₀ x_j†))`, `x_{j+1} = U_j · x_j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{basis_element, coeffs_of, mat_exp, AlgebraElement, HorizontalBasis, PauliString};
use crate::error::{GeoqcError, Result};
use crate::linalg::ComplexMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub n: usize,
    /// Number of segments N; the step width is derived as 1/N.
    pub segments: usize,
    /// Upper bound on ‖Λ₀‖.
    pub norm_bound: f64,
}

impl GeodesicConfig {
    /// N = 10 segments and ‖Λ₀‖ ≤ dim Δ.
    pub fn for_qubits(n: usize) -> Result<Self> {
        let m = HorizontalBasis::new(n)?.len();
        Ok(Self {
            n,
            segments: 10,
            norm_bound: m as f64,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.segments as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GeoqcError::InvalidInput(format!("n must be >= 2, got {}", self.n)));
        }
        if self.segments == 0 {
            return Err(GeoqcError::InvalidInput("segment count N must be >= 1".into()));
        }
        if !(self.norm_bound > 0.0 && self.norm_bound.is_finite()) {
            return Err(GeoqcError::InvalidInput(format!(
                "norm bound must be positive and finite, got {}",
                self.norm_bound
            )));
        }
        Ok(())
    }
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self::for_qubits(3).expect("n = 3 is valid")
    }
}

/// One discretised geodesic.
#[derive(Clone, Debug)]
pub struct GeodesicSample {
    pub lambda0: AlgebraElement,
    /// U_0 … U_{N−1}, in integration order.
    pub segments: Vec<ComplexMatrix>,
    /// x_0 = I … x_N.
    pub trajectory: Vec<ComplexMatrix>,
    /// Coefficients of proj_Δ(x_j Λ₀ x_j†) for each segment.
    pub controls: Vec<Vec<f64>>,
    pub step: f64,
}

impl GeodesicSample {
    /// U = x(1), the trajectory's last point.
    pub fn endpoint(&self) -> &ComplexMatrix {
        self.trajectory.last().expect("trajectory holds N+1 points")
    }

    /// ‖u₀‖ = ‖proj_Δ(Λ₀)‖.
    pub fn initial_control_norm(&self) -> f64 {
        norm2(&self.controls[0])
    }

    /// Σ_j h·‖u_j‖², the discrete energy of the path.
    pub fn energy(&self) -> f64 {
        self.controls
            .iter()
            .map(|c| self.step * c.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Random costate: standard-normal coefficients over the whole `basis_full`,
/// rescaled to a norm drawn uniformly from (0, norm_bound].
pub fn sample_lambda0(rng_seed: u64, basis_full: &[PauliString], norm_bound: f64) -> Result<AlgebraElement> {
    if !(norm_bound > 0.0 && norm_bound.is_finite()) {
        return Err(GeoqcError::InvalidInput(format!(
            "norm bound must be positive, got {norm_bound}"
        )));
    }
    let first = basis_full
        .first()
        .ok_or_else(|| GeoqcError::InvalidInput("empty costate basis".into()))?;
    let d = 1usize << first.n_qubits();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let g: Vec<f64> = basis_full.iter().map(|_| rng.sample(StandardNormal)).collect();
    // 1 − U[0,1) lies in (0, 1]
    let radius = norm_bound * (1.0 - rng.gen::<f64>());
    let gnorm = norm2(&g);
    let mut lam = AlgebraElement::zero(d);
    for (p, &ga) in basis_full.iter().zip(&g) {
        if p.n_qubits() != first.n_qubits() {
            return Err(GeoqcError::InvalidInput("mixed qubit counts in costate basis".into()));
        }
        lam = lam.add(&basis_element(p)?.scale(ga * radius / gnorm));
    }
    Ok(lam)
}

/// Forward-integrates the geodesic equation with the first-order exponential step.
pub fn integrate_geodesic(
    lambda0: &AlgebraElement,
    cfg: &GeodesicConfig,
    basis: &HorizontalBasis,
) -> Result<GeodesicSample> {
    cfg.validate()?;
    if lambda0.dim() != basis.dim() {
        return Err(GeoqcError::DimensionMismatch {
            expected: basis.dim(),
            found: lambda0.dim(),
        });
    }
    let h = cfg.step();
    let mut x = ComplexMatrix::identity(basis.dim());
    let mut trajectory = Vec::with_capacity(cfg.segments + 1);
    let mut segments = Vec::with_capacity(cfg.segments);
    let mut controls = Vec::with_capacity(cfg.segments);
    trajectory.push(x.clone());
    for step in 0..cfg.segments {
        let costate = lambda0.conjugate_by(&x);
        let coeffs = coeffs_of(&costate, basis)?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(GeoqcError::IntegrationStep {
                step,
                reason: "non-finite horizontal control".into(),
            });
        }
        let u = basis.combine(&coeffs)?;
        let seg = mat_exp(&u.scale(h)).map_err(|e| GeoqcError::IntegrationStep {
            step,
            reason: e.to_string(),
        })?;
        x = seg.matmul(&x);
        if !x.is_finite() {
            return Err(GeoqcError::IntegrationStep {
                step,
                reason: "trajectory left the finite range".into(),
            });
        }
        segments.push(seg);
        controls.push(coeffs);
        trajectory.push(x.clone());
    }
    Ok(GeodesicSample {
        lambda0: lambda0.clone(),
        segments,
        trajectory,
        controls,
        step: h,
    })
}

/// Returns U = x(1).
pub fn endpoint(sample: &GeodesicSample) -> &ComplexMatrix {
    sample.endpoint()
}

/// Mixes a dataset seed and sample index into an independent per-sample seed.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over (seed, index)
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{full_basis, proj_horizontal};

    fn setup() -> (GeodesicConfig, HorizontalBasis, Vec<PauliString>) {
        (
            GeodesicConfig::default(),
            HorizontalBasis::new(3).unwrap(),
            full_basis(3).unwrap(),
        )
    }

    #[test]
    fn default_config() {
        let cfg = GeodesicConfig::default();
        assert_eq!(cfg.segments, 10);
        assert_eq!(cfg.norm_bound, 36.0);
        assert_eq!(cfg.step() * cfg.segments as f64, 1.0);
    }

    #[test]
    fn lambda0_norm_and_determinism() {
        let (_, _, full) = setup();
        assert_eq!(full.len(), 63);
        let a = sample_lambda0(7, &full, 36.0).unwrap();
        let b = sample_lambda0(7, &full, 36.0).unwrap();
        assert_eq!(a, b);
        let c = sample_lambda0(8, &full, 36.0).unwrap();
        assert_ne!(a, c);
        assert!(a.norm() > 0.0 && a.norm() <= 36.0 + 1e-12);
        assert!(AlgebraElement::new(a.matrix().clone()).is_ok());
        assert!(sample_lambda0(7, &full, 0.0).is_err());
        assert!(sample_lambda0(7, &full, -1.0).is_err());
    }

    #[test]
    fn zero_costate_stays_at_identity() {
        let (cfg, basis, _) = setup();
        let s = integrate_geodesic(&AlgebraElement::zero(8), &cfg, &basis).unwrap();
        let id = ComplexMatrix::identity(8);
        assert!(s.segments.iter().all(|u| u.distance(&id) == 0.0));
        assert_eq!(endpoint(&s), &id);
        assert_eq!(s.trajectory.len(), 11);
    }

    #[test]
    fn horizontal_costate_first_segment() {
        let (cfg, basis, _) = setup();
        let lam = basis.tau(4).scale(2.5);
        let s = integrate_geodesic(&lam, &cfg, &basis).unwrap();
        let expected = mat_exp(&lam.scale(cfg.step())).unwrap();
        assert!(s.segments[0].distance(&expected) < 1e-14);
    }

    #[test]
    fn controls_are_horizontal() {
        let (cfg, basis, full) = setup();
        let lam = sample_lambda0(11, &full, 36.0).unwrap();
        let s = integrate_geodesic(&lam, &cfg, &basis).unwrap();
        for c in &s.controls {
            let u = basis.combine(c).unwrap();
            let pu = proj_horizontal(&u, &basis).unwrap();
            assert!(u.matrix().distance(pu.matrix()) < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (mut cfg, basis, _) = setup();
        cfg.segments = 0;
        assert!(integrate_geodesic(&AlgebraElement::zero(8), &cfg, &basis).is_err());
        let cfg = GeodesicConfig::default();
        assert!(integrate_geodesic(&AlgebraElement::zero(4), &cfg, &basis).is_err());
    }

    #[test]
    fn sample_seeds_differ() {
        assert_ne!(sample_seed(1, 0), sample_seed(1, 1));
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
        assert_eq!(sample_seed(5, 9), sample_seed(5, 9));
    }
}
