//! Model parameters, QES energies and the three-term recurrence elements.
//!
//! Everything is parametrized by the integer `L = 2ℓ + 1`; even `L`
//! corresponds to half-integer `ℓ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1.0;

/// Physical knobs of the contour Schrödinger equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `L = 2ℓ + 1`.
    pub l: u32,
    /// Strength of the imaginary linear term `2 i b r`.
    pub b: f64,
    /// Downward offset of the contour `r = x - iε`.
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(l: u32, b: f64, epsilon: f64) -> Result<Self> {
        if l < 1 {
            return Err(Error::InvalidParameter {
                name: "L",
                reason: format!("must be >= 1, got {l}"),
            });
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be a finite positive number, got {epsilon}"),
            });
        }
        if !b.is_finite() {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: format!("must be finite, got {b}"),
            });
        }
        Ok(Self { l, b, epsilon })
    }

    /// Parameters with the default contour offset.
    pub fn with_default_contour(l: u32, b: f64) -> Result<Self> {
        Self::new(l, b, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.l, self.b, epsilon)
    }

    pub fn lf(&self) -> f64 {
        f64::from(self.l)
    }

    /// Angular momentum `ℓ = (L - 1) / 2`.
    pub fn ell(&self) -> f64 {
        0.5 * (self.lf() - 1.0)
    }

    /// `ℓ(ℓ + 1) = (L² - 1) / 4`.
    pub fn centrifugal(&self) -> f64 {
        0.25 * (self.lf() * self.lf() - 1.0)
    }
}

/// Small-r behaviour of a solution: `(ir)^{-ℓ}` (even) or `(ir)^{ℓ+1}` (odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuasiParity {
    Even,
    Odd,
}

impl QuasiParity {
    /// Lowest power of `(ir)` in the polynomial ansatz.
    pub fn leading_power(self, params: &ModelParams) -> f64 {
        match self {
            QuasiParity::Even => -params.ell(),
            QuasiParity::Odd => params.ell() + 1.0,
        }
    }

    /// `-1` for even, `+1` for odd; the sign that multiplies `L` in the elements.
    fn l_sign(self) -> f64 {
        match self {
            QuasiParity::Even => -1.0,
            QuasiParity::Odd => 1.0,
        }
    }
}

impl std::fmt::Display for QuasiParity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuasiParity::Even => f.write_str("even"),
            QuasiParity::Odd => f.write_str("odd"),
        }
    }
}

impl std::str::FromStr for QuasiParity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "even" | "+" => Ok(QuasiParity::Even),
            "odd" | "-" => Ok(QuasiParity::Odd),
            other => Err(Error::InvalidParameter {
                name: "parity",
                reason: format!("expected `even` or `odd`, got `{other}`"),
            }),
        }
    }
}

/// Row `n` of the tridiagonal recurrence, `A_n h_{n-1} + (beta_n - F) h_n + C_n h_{n+1} = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceElements {
    pub a: f64,
    /// Charge-independent part of `B_n = beta_n - F`.
    pub beta: f64,
    pub c: f64,
}

pub fn recurrence_elements(
    parity: QuasiParity,
    n: usize,
    params: &ModelParams,
    energy: f64,
) -> RecurrenceElements {
    let s = parity.l_sign();
    let l = params.lf();
    let nf = n as f64;
    RecurrenceElements {
        a: params.b * params.b + 2.0 * nf + s * l - energy,
        beta: -(2.0 * nf + 1.0 + s * l) * params.b,
        c: (nf + 1.0) * (nf + 1.0 + s * l),
    }
}

/// QES energy of the degree-`N` state.
pub fn energy(parity: QuasiParity, n: usize, params: &ModelParams) -> f64 {
    2.0 * n as f64 + 2.0 + parity.l_sign() * params.lf() + params.b * params.b
}

/// Hautot's equidistant levels `2n + 2 + L - g²` of the Hermitian model.
pub fn hautot_energy(n: usize, l: u32, g: f64) -> f64 {
    2.0 * n as f64 + 2.0 + f64::from(l) - g * g
}

/// Same levels with `g²` given directly; `g² = -b²` maps onto the contour model.
pub fn hautot_energy_g2(n: usize, l: u32, g_squared: f64) -> f64 {
    2.0 * n as f64 + 2.0 + f64::from(l) - g_squared
}

/// `r(x) = x - iε`.
pub fn contour_point(x: f64, params: &ModelParams) -> Complex64 {
    Complex64::new(x, -params.epsilon)
}
