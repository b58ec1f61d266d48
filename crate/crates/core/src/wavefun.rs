//! QES wavefunctions `ψ(r) = exp(-r²/2 - i b r) Σ_n h_n (i r)^{n + s0}`.
//!
//! The coefficients are produced by two independent routes: the backward
//! three-term recurrence started from `h_N = 1`, and closed-form ratios of
//! trailing minors of the recurrence matrix.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::laurent::LaurentPoly;
use crate::model::{energy, recurrence_elements, ModelParams, QuasiParity};
use crate::secular::{block_det, build_system_matrix, charges, ScaledDet};

/// Largest `N` accepted by [`coefficients_determinant`].
pub const DETERMINANT_ROUTE_MAX_N: usize = 60;
pub const DEFAULT_PARITY_TOL: f64 = 1e-8;

/// One solved bound state.
#[derive(Debug, Clone, PartialEq)]
pub struct QesState {
    pub parity: QuasiParity,
    /// Polynomial degree; the state has `N + 1` coefficients.
    pub n: usize,
    pub params: ModelParams,
    /// Index into the ascending list of real charges.
    pub branch: usize,
    pub charge: f64,
    pub energy: f64,
    /// `h_0 ..= h_N` with `h_N = 1`.
    pub coeffs: Vec<f64>,
}

impl QesState {
    /// Solves for the charges of `(parity, N)` and builds the state on `branch`.
    pub fn solve(parity: QuasiParity, n: usize, params: ModelParams, branch: usize) -> Result<Self> {
        let spectrum = charges(parity, n, &params)?;
        let charge = *spectrum.charges.get(branch).ok_or(Error::BranchOutOfRange {
            branch,
            available: spectrum.charges.len(),
        })?;
        Ok(Self::from_charge(parity, n, params, branch, charge))
    }

    /// Builds the state at a caller-supplied charge (not necessarily an eigencharge).
    pub fn from_charge(
        parity: QuasiParity,
        n: usize,
        params: ModelParams,
        branch: usize,
        charge: f64,
    ) -> Self {
        Self {
            parity,
            n,
            params,
            branch,
            charge,
            energy: energy(parity, n, &params),
            coeffs: coefficients_backward(parity, n, &params, charge),
        }
    }

    pub fn leading_power(&self) -> f64 {
        self.parity.leading_power(&self.params)
    }

    pub fn laurent(&self) -> LaurentPoly {
        to_laurent(self)
    }

    pub fn psi(&self, x: f64) -> Complex64 {
        evaluate_psi(self, x)
    }

    /// `dψ/dx` on the contour.
    pub fn psi_derivative(&self, x: f64) -> Complex64 {
        let r = Complex64::new(x, -self.params.epsilon);
        let p = self.laurent();
        let slope = -r - Complex64::new(0.0, self.params.b);
        gaussian_factor(r, self.params.b) * (p.deriv_r().eval_r(r) + slope * p.eval_r(r))
    }

    pub fn ghost_residual(&self) -> GhostResidual {
        ghost_residual(self.parity, self.n, &self.params, self.charge, &self.coeffs)
    }
}

/// Residual of the first recurrence row, which the backward sweep never imposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostResidual {
    pub value: f64,
    /// Largest single term over all recurrence rows.
    pub scale: f64,
}

impl GhostResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.value.abs()
        } else {
            self.value.abs() / self.scale
        }
    }
}

/// `h_N = 1`, then `h_{n-1} = -[(beta_n - F) h_n + C_n h_{n+1}] / A_n` down to `n = 1`.
pub fn coefficients_backward(
    parity: QuasiParity,
    n: usize,
    params: &ModelParams,
    charge: f64,
) -> Vec<f64> {
    let e = energy(parity, n, params);
    let mut h = vec![0.0; n + 2];
    h[n] = 1.0;
    for k in (1..=n).rev() {
        let el = recurrence_elements(parity, k, params, e);
        h[k - 1] = -((el.beta - charge) * h[k] + el.c * h[k + 1]) / el.a;
    }
    h.truncate(n + 1);
    h
}

/// `h_{j-1} = h_N / Π_{m=j}^{N} (-A_m) · det(rows j..N)`.
pub fn coefficients_determinant(
    parity: QuasiParity,
    n: usize,
    params: &ModelParams,
    charge: f64,
) -> Result<Vec<f64>> {
    if n > DETERMINANT_ROUTE_MAX_N {
        return Err(Error::DeterminantRouteRange { n, max: DETERMINANT_ROUTE_MAX_N });
    }
    let system = build_system_matrix(parity, n, params);
    let mut h = vec![0.0; n + 1];
    h[n] = 1.0;
    let mut denom = ScaledDet::ONE;
    for j in (1..=n).rev() {
        // sub[j - 1] is A_j
        denom = denom.mul(ScaledDet::from_f64(-system.sub[j - 1]));
        let minor = block_det(&system, j, n + 1, charge);
        // block_det evaluates det(block - F I), which is exactly the B_m = beta_m - F block
        h[j - 1] = minor.ratio(denom);
    }
    Ok(h)
}

pub fn ghost_residual(
    parity: QuasiParity,
    n: usize,
    params: &ModelParams,
    charge: f64,
    h: &[f64],
) -> GhostResidual {
    let e = energy(parity, n, params);
    let at = |k: isize| -> f64 {
        if k < 0 {
            0.0
        } else {
            h.get(k as usize).copied().unwrap_or(0.0)
        }
    };
    let mut scale = 0.0f64;
    for k in 0..=n + 1 {
        let el = recurrence_elements(parity, k, params, e);
        let ki = k as isize;
        scale = scale
            .max((el.a * at(ki - 1)).abs())
            .max(((el.beta - charge) * at(ki)).abs())
            .max((el.c * at(ki + 1)).abs());
    }
    let row0 = recurrence_elements(parity, 0, params, e);
    GhostResidual { value: (row0.beta - charge) * at(0) + row0.c * at(1), scale }
}

/// Classifies coefficients given in the quasi-even power basis `(ir)^{n - ℓ}`.
pub fn classify_quasi_parity(h: &[f64], l: u32, tol: f64) -> QuasiParity {
    let max = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let head: f64 = h.iter().take(l as usize).map(|v| v.abs()).sum();
    if head <= tol * max {
        QuasiParity::Odd
    } else {
        QuasiParity::Even
    }
}

/// Rewrites quasi-odd coefficients (powers `n + ℓ + 1`) in the quasi-even basis.
pub fn embed_odd_in_even_basis(h_odd: &[f64], l: u32) -> Vec<f64> {
    let mut out = vec![0.0; l as usize];
    out.extend_from_slice(h_odd);
    out
}

pub fn to_laurent(state: &QesState) -> LaurentPoly {
    LaurentPoly::from_real(state.leading_power(), &state.coeffs)
}

fn gaussian_factor(r: Complex64, b: f64) -> Complex64 {
    (-0.5 * r * r - Complex64::new(0.0, b) * r).exp()
}

/// `ψ(x)` at `r = x - iε`, summed directly from the coefficients.
pub fn evaluate_psi(state: &QesState, x: f64) -> Complex64 {
    let r = Complex64::new(x, -state.params.epsilon);
    let w = Complex64::new(0.0, 1.0) * r;
    let s0 = state.leading_power();
    let sum: Complex64 = state
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, &h)| h * w.powf(s0 + j as f64))
        .sum();
    gaussian_factor(r, state.params.b) * sum
}
