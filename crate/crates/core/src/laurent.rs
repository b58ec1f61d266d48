//! Finite sums `Σ_j c_j w^{s0 + j}` in the variable `w = i r`.
//!
//! On the contour `r = x - iε` the variable `w = ε + i x` stays in the open
//! right half-plane, so principal-branch powers with a half-integer `s0`
//! are smooth along the whole line.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly {
    /// Lowest power offset.
    pub s0: f64,
    pub coeffs: Vec<Complex64>,
}

impl LaurentPoly {
    /// Builds the polynomial and drops trailing zero coefficients.
    pub fn new(s0: f64, coeffs: Vec<Complex64>) -> Self {
        let mut p = Self { s0, coeffs };
        p.trim();
        p
    }

    pub fn from_real(s0: f64, coeffs: &[f64]) -> Self {
        Self::new(s0, coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero(s0: f64) -> Self {
        Self { s0, coeffs: Vec::new() }
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Highest power carried, `s0 + len - 1`.
    pub fn top_power(&self) -> f64 {
        self.s0 + self.coeffs.len() as f64 - 1.0
    }

    /// Coefficient of `w^power`, zero when outside the stored range.
    pub fn coeff_at(&self, power: f64) -> Complex64 {
        let j = power - self.s0;
        if j < -0.5 || (j - j.round()).abs() > 1e-9 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs.get(j.round() as usize).copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc.max(c.norm()))
    }

    /// Value at `w` with principal-branch `w^{s0}`.
    pub fn eval_w(&self, w: Complex64) -> Complex64 {
        let poly = self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * w + c);
        if self.s0 == 0.0 {
            poly
        } else {
            poly * w.powf(self.s0)
        }
    }

    /// Value at the coordinate `r`, i.e. at `w = i r`.
    pub fn eval_r(&self, r: Complex64) -> Complex64 {
        self.eval_w(I * r)
    }

    /// Multiplies by `factor * w^shift`.
    pub fn shifted(&self, shift: i32, factor: Complex64) -> Self {
        Self {
            s0: self.s0 + f64::from(shift),
            coeffs: self.coeffs.iter().map(|&c| c * factor).collect(),
        }
    }

    /// Multiplies by `r = -i w`.
    pub fn mul_r(&self) -> Self {
        self.shifted(1, -I)
    }

    /// Multiplies by `1 / r = i / w`.
    pub fn div_r(&self) -> Self {
        self.shifted(-1, I)
    }

    /// `d/dr`, using `d/dr w^p = i p w^{p-1}`.
    pub fn deriv_r(&self) -> Self {
        Self {
            s0: self.s0 - 1.0,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, &c)| I * c * (self.s0 + j as f64))
                .collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.shifted(0, factor)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        if self.coeffs.is_empty() {
            return other.scale(Complex64::new(sign, 0.0)).with_min_s0(self.s0);
        }
        if other.coeffs.is_empty() {
            return self.clone().with_min_s0(other.s0);
        }
        let offset = other.s0 - self.s0;
        assert!(
            (offset - offset.round()).abs() < 1e-9,
            "powers must differ by integers ({} vs {})",
            self.s0,
            other.s0
        );
        let s0 = self.s0.min(other.s0);
        let top = self.top_power().max(other.top_power());
        let len = (top - s0).round() as usize + 1;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        let a0 = (self.s0 - s0).round() as usize;
        let b0 = (other.s0 - s0).round() as usize;
        for (j, c) in self.coeffs.iter().enumerate() {
            coeffs[a0 + j] += c;
        }
        for (j, c) in other.coeffs.iter().enumerate() {
            coeffs[b0 + j] += c * sign;
        }
        Self { s0, coeffs }
    }

    /// Re-expresses with a (not larger, integer-offset) lowest power.
    fn with_min_s0(mut self, s0: f64) -> Self {
        if s0 < self.s0 && ((self.s0 - s0) - (self.s0 - s0).round()).abs() < 1e-9 {
            let pad = (self.s0 - s0).round() as usize;
            let mut coeffs = vec![Complex64::new(0.0, 0.0); pad];
            coeffs.append(&mut self.coeffs);
            self.coeffs = coeffs;
            self.s0 = s0;
        }
        self
    }
}

impl Add for &LaurentPoly {
    type Output = LaurentPoly;
    fn add(self, rhs: &LaurentPoly) -> LaurentPoly {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &LaurentPoly {
    type Output = LaurentPoly;
    fn sub(self, rhs: &LaurentPoly) -> LaurentPoly {
        self.combine(rhs, -1.0)
    }
}

impl Neg for &LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul<Complex64> for &LaurentPoly {
    type Output = LaurentPoly;
    fn mul(self, rhs: Complex64) -> LaurentPoly {
        self.scale(rhs)
    }
}
