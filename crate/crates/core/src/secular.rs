//! Tridiagonal charge matrices and their secular determinants.
//!
//! The admissible charges `F` at fixed `N` are the eigenvalues of a real
//! tridiagonal matrix whose diagonal holds `beta_n`, whose super-diagonal
//! holds `C_n` and whose sub-diagonal holds `A_{n+1}` with the QES energy
//! substituted. For the quasi-even family the matrix is only `L x L`, for
//! the quasi-odd family it is `(N+1) x (N+1)`.

use nalgebra::DMatrix;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::model::{energy, recurrence_elements, ModelParams, QuasiParity};

/// Default realness tolerance, relative to `max(1, spectral radius)`.
pub const DEFAULT_REALITY_TOL: f64 = 1e-8;
/// Largest dimension handled by the dense eigenvalue solver.
pub const DENSE_LIMIT: usize = 64;
/// Roots closer than this (relative to the spectral scale) are merged.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Polishing target `|det| <= POLISH_TOL * magnitude`.
pub const POLISH_TOL: f64 = 1e-12;

const RESCALE_EXP: i32 = 512;

/// A real tridiagonal matrix, `diag` of length `m`, `sub`/`sup` of length `m - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeMatrix {
    pub diag: Vec<f64>,
    /// `sub[k]` sits at row `k + 1`, column `k`.
    pub sub: Vec<f64>,
    /// `sup[k]` sits at row `k`, column `k + 1`.
    pub sup: Vec<f64>,
}

impl ChargeMatrix {
    pub fn new(diag: Vec<f64>, sub: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter {
                name: "diag",
                reason: "tridiagonal matrix must have dimension >= 1".into(),
            });
        }
        if sub.len() + 1 != diag.len() || sup.len() + 1 != diag.len() {
            return Err(Error::InvalidParameter {
                name: "sub/sup",
                reason: format!(
                    "off-diagonals must have length {}, got {} and {}",
                    diag.len() - 1,
                    sub.len(),
                    sup.len()
                ),
            });
        }
        Ok(Self { diag, sub, sup })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Rows/columns `start..end` as a new tridiagonal matrix (may be empty).
    fn block(&self, start: usize, end: usize) -> BlockView<'_> {
        BlockView {
            diag: &self.diag[start..end],
            sub: if end > start { &self.sub[start..end - 1] } else { &[] },
            sup: if end > start { &self.sup[start..end - 1] } else { &[] },
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..m {
            out[(k, k)] = self.diag[k];
        }
        for k in 0..m - 1 {
            out[(k + 1, k)] = self.sub[k];
            out[(k, k + 1)] = self.sup[k];
        }
        out
    }

    /// Products `sub[k] * sup[k]`; the only off-diagonal data the spectrum depends on.
    pub fn couplings(&self) -> Vec<f64> {
        self.sub.iter().zip(&self.sup).map(|(a, c)| a * c).collect()
    }

    /// Gershgorin-type radius bounding every eigenvalue.
    pub fn spectral_bound(&self) -> f64 {
        let m = self.dim();
        (0..m)
            .map(|k| {
                let mut r = self.diag[k].abs();
                if k > 0 {
                    r += self.sub[k - 1].abs();
                }
                if k + 1 < m {
                    r += self.sup[k].abs();
                }
                r
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy)]
struct BlockView<'a> {
    diag: &'a [f64],
    sub: &'a [f64],
    sup: &'a [f64],
}

/// `value * 2^scale`, used to carry determinants far outside `f64` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledDet {
    pub value: f64,
    pub scale: i32,
}

impl ScaledDet {
    pub const ONE: ScaledDet = ScaledDet { value: 0.5, scale: 1 };

    pub fn from_f64(value: f64) -> Self {
        Self { value, scale: 0 }.normalized()
    }

    /// Plain `f64`; saturates to `±inf` or `0` when out of range.
    pub fn to_f64(self) -> f64 {
        self.value * 2f64.powi(self.scale.clamp(-1100, 1100))
    }

    pub fn ln_abs(self) -> f64 {
        self.value.abs().ln() + f64::from(self.scale) * std::f64::consts::LN_2
    }

    pub fn signum(self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.value.signum()
        }
    }

    pub fn is_zero(self) -> bool {
        self.value == 0.0
    }

    pub fn abs(self) -> Self {
        Self { value: self.value.abs(), scale: self.scale }
    }

    fn normalized(self) -> Self {
        if self.value == 0.0 || !self.value.is_finite() {
            return self;
        }
        let (m, e) = frexp(self.value);
        Self { value: m, scale: self.scale + e }
    }

    pub fn mul(self, other: Self) -> Self {
        Self { value: self.value * other.value, scale: self.scale + other.scale }.normalized()
    }

    pub fn div(self, other: Self) -> Self {
        Self { value: self.value / other.value, scale: self.scale - other.scale }.normalized()
    }

    /// `self / other` as a plain number.
    pub fn ratio(self, other: Self) -> f64 {
        self.div(other).to_f64()
    }

    pub fn sub(self, other: Self) -> Self {
        if self.is_zero() {
            return Self { value: -other.value, scale: other.scale };
        }
        if other.is_zero() {
            return self;
        }
        let s = self.scale.max(other.scale);
        let a = self.value * 2f64.powi((self.scale - s).max(-1100));
        let b = other.value * 2f64.powi((other.scale - s).max(-1100));
        Self { value: a - b, scale: s }.normalized()
    }

    /// `max(|self|, |other|)`.
    pub fn max_abs(self, other: Self) -> Self {
        if self.is_zero() {
            return other.abs();
        }
        if other.is_zero() {
            return self.abs();
        }
        if self.ln_abs() >= other.ln_abs() {
            self.abs()
        } else {
            other.abs()
        }
    }
}

/// Mantissa in `[0.5, 1)` and the matching binary exponent.
fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    if raw_exp == 0 {
        // subnormal
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let e = raw_exp - 1022;
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022u64 << 52));
    (m, e)
}

/// Determinant, its `F`-derivative, and the magnitude bound of `det(M - F I)`.
#[derive(Debug, Clone, Copy)]
pub struct SecularEval {
    pub det: ScaledDet,
    pub derivative: ScaledDet,
    /// Same recurrence with every term taken in absolute value; bounds the
    /// size of the intermediate products and hence the rounding error.
    pub magnitude: ScaledDet,
}

fn needs_rescale(values: &[f64]) -> Option<i32> {
    let big = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if big == 0.0 || !big.is_finite() {
        return None;
    }
    let hi = 2f64.powi(RESCALE_EXP);
    let lo = 2f64.powi(-RESCALE_EXP);
    if big > hi {
        Some(-RESCALE_EXP)
    } else if big < lo {
        Some(RESCALE_EXP)
    } else {
        None
    }
}

fn eval_block(block: BlockView<'_>, f: f64) -> SecularEval {
    // D_{-1} = 1, D_0 = d_0 - F, D_k = (d_k - F) D_{k-1} - sub_{k-1} sup_{k-1} D_{k-2}
    let mut d_prev = 1.0;
    let mut d_cur = 1.0;
    let mut g_prev = 0.0;
    let mut g_cur = 0.0;
    let mut scale = 0i32;

    let mut a_prev = 1.0;
    let mut a_cur = 1.0;
    let mut a_scale = 0i32;

    for k in 0..block.diag.len() {
        let shifted = block.diag[k] - f;
        let coupling = if k == 0 { 0.0 } else { block.sub[k - 1] * block.sup[k - 1] };
        let d_next = shifted * d_cur - coupling * d_prev;
        let g_next = shifted * g_cur - d_cur - coupling * g_prev;
        d_prev = d_cur;
        d_cur = d_next;
        g_prev = g_cur;
        g_cur = g_next;
        if let Some(s) = needs_rescale(&[d_prev, d_cur, g_prev, g_cur]) {
            let factor = 2f64.powi(s);
            d_prev *= factor;
            d_cur *= factor;
            g_prev *= factor;
            g_cur *= factor;
            scale -= s;
        }

        let a_next = shifted.abs() * a_cur + coupling.abs() * a_prev;
        a_prev = a_cur;
        a_cur = a_next;
        if let Some(s) = needs_rescale(&[a_prev, a_cur]) {
            let factor = 2f64.powi(s);
            a_prev *= factor;
            a_cur *= factor;
            a_scale -= s;
        }
    }
    SecularEval {
        det: ScaledDet { value: d_cur, scale }.normalized(),
        derivative: ScaledDet { value: g_cur, scale }.normalized(),
        magnitude: ScaledDet { value: a_cur, scale: a_scale }.normalized(),
    }
}

/// `det(M - F I)` by the leading-principal-minor recurrence.
pub fn secular_det(m: &ChargeMatrix, f: f64) -> ScaledDet {
    eval_block(m.block(0, m.dim()), f).det
}

pub fn secular_eval(m: &ChargeMatrix, f: f64) -> SecularEval {
    eval_block(m.block(0, m.dim()), f)
}

/// Determinant of the principal block on rows/columns `start..end`, shifted by `F`.
pub fn block_det(m: &ChargeMatrix, start: usize, end: usize, f: f64) -> ScaledDet {
    eval_block(m.block(start, end), f).det
}

fn tridiagonal_from_elements(
    parity: QuasiParity,
    dim: usize,
    n: usize,
    params: &ModelParams,
) -> ChargeMatrix {
    let e = energy(parity, n, params);
    let rows: Vec<_> = (0..dim).map(|k| recurrence_elements(parity, k, params, e)).collect();
    ChargeMatrix {
        diag: rows.iter().map(|r| r.beta).collect(),
        sub: rows[1..].iter().map(|r| r.a).collect(),
        sup: rows[..dim - 1].iter().map(|r| r.c).collect(),
    }
}

/// The `L x L` quasi-even charge matrix; requires `N >= L - 1`.
pub fn build_quasi_even_matrix(n: usize, params: &ModelParams) -> Result<ChargeMatrix> {
    let l = params.l as usize;
    if n + 1 < l {
        return Err(Error::DegreeTooSmall { n, min: l - 1 });
    }
    Ok(tridiagonal_from_elements(QuasiParity::Even, l, n, params))
}

/// The full `(N+1) x (N+1)` quasi-even system, before factorization.
pub fn build_quasi_even_full_matrix(n: usize, params: &ModelParams) -> Result<ChargeMatrix> {
    let l = params.l as usize;
    if n + 1 < l {
        return Err(Error::DegreeTooSmall { n, min: l - 1 });
    }
    Ok(tridiagonal_from_elements(QuasiParity::Even, n + 1, n, params))
}

/// The `(N+1)`-row recurrence system of either family, with no bound on `N`.
pub fn build_system_matrix(parity: QuasiParity, n: usize, params: &ModelParams) -> ChargeMatrix {
    tridiagonal_from_elements(parity, n + 1, n, params)
}

/// The `(N+1) x (N+1)` quasi-odd charge matrix.
pub fn build_quasi_odd_matrix(n: usize, params: &ModelParams) -> ChargeMatrix {
    tridiagonal_from_elements(QuasiParity::Odd, n + 1, n, params)
}

pub fn build_charge_matrix(
    parity: QuasiParity,
    n: usize,
    params: &ModelParams,
) -> Result<ChargeMatrix> {
    match parity {
        QuasiParity::Even => build_quasi_even_matrix(n, params),
        QuasiParity::Odd => Ok(build_quasi_odd_matrix(n, params)),
    }
}

/// Real eigencharges of a charge matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSpectrum {
    /// Distinct real charges, ascending.
    pub charges: Vec<f64>,
    /// Multiplicity of each entry of `charges`.
    pub multiplicities: Vec<usize>,
    pub dim: usize,
    pub reality_ok: bool,
    /// Largest `|Im F|` seen before filtering; `NaN` when the solver path
    /// could not measure it (bracketing of a non-symmetrizable matrix).
    pub max_imag: f64,
}

impl ChargeSpectrum {
    pub fn real_count(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Charges, or `ComplexChargesDetected` if some were not real.
    pub fn require_real(&self) -> Result<&[f64]> {
        if self.reality_ok {
            Ok(&self.charges)
        } else {
            Err(Error::ComplexChargesDetected {
                found: self.real_count(),
                dim: self.dim,
                max_imag: self.max_imag,
            })
        }
    }

    pub fn has_degeneracy(&self) -> bool {
        self.multiplicities.iter().any(|&m| m > 1)
    }
}

/// Solver path selection for [`eigencharges_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    /// Dense for `dim <= DENSE_LIMIT`, bracketing above.
    Auto,
    Dense,
    Bracketing,
}

pub fn eigencharges(m: &ChargeMatrix, reality_tol: f64) -> ChargeSpectrum {
    eigencharges_with(m, reality_tol, SolverPath::Auto)
}

pub fn eigencharges_with(m: &ChargeMatrix, reality_tol: f64, path: SolverPath) -> ChargeSpectrum {
    assert!(reality_tol > 0.0, "reality tolerance must be positive");
    let dense = match path {
        SolverPath::Auto => m.dim() <= DENSE_LIMIT,
        SolverPath::Dense => true,
        SolverPath::Bracketing => false,
    };
    if dense {
        dense_charges(m, reality_tol)
    } else {
        bracketed_charges(m)
    }
}

/// Eigencharges of the `(parity, N)` family with the default tolerance.
pub fn charges(parity: QuasiParity, n: usize, params: &ModelParams) -> Result<ChargeSpectrum> {
    let m = build_charge_matrix(parity, n, params)?;
    Ok(eigencharges(&m, DEFAULT_REALITY_TOL))
}

/// Diagonal similarity equalizing `|sub_k|` and `|sup_k|`.
fn balanced(m: &ChargeMatrix) -> DMatrix<f64> {
    let mut out = m.to_dense();
    for k in 0..m.dim() - 1 {
        let (a, c) = (m.sub[k], m.sup[k]);
        if a != 0.0 && c != 0.0 {
            let g = (a * c).abs().sqrt();
            out[(k + 1, k)] = a.signum() * g;
            out[(k, k + 1)] = c.signum() * g;
        }
    }
    out
}

fn dense_charges(m: &ChargeMatrix, reality_tol: f64) -> ChargeSpectrum {
    let dim = m.dim();
    let eig = balanced(m).complex_eigenvalues();
    let radius = eig.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let scale = radius.max(1.0);
    let max_imag = eig.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    let mut real: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= reality_tol * scale)
        .map(|z| polish_newton(m, z.re))
        .collect();
    real.sort_by(f64::total_cmp);
    let (charges, multiplicities) = merge_close(&real, DEGENERACY_TOL * scale);
    let found: usize = multiplicities.iter().sum();
    ChargeSpectrum {
        charges,
        multiplicities,
        dim,
        reality_ok: found == dim && max_imag <= reality_tol * scale,
        max_imag,
    }
}

fn merge_close(sorted: &[f64], tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut charges: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut mult: Vec<usize> = Vec::with_capacity(sorted.len());
    for &x in sorted {
        match charges.last_mut() {
            Some(last) if (x - *last).abs() <= tol => {
                let k = mult.len() - 1;
                *last = (*last * mult[k] as f64 + x) / (mult[k] + 1) as f64;
                mult[k] += 1;
            }
            _ => {
                charges.push(x);
                mult.push(1);
            }
        }
    }
    (charges, mult)
}

/// `det(M - F I)` with compensated arithmetic, plus the plain derivative.
fn compensated_eval(m: &ChargeMatrix, f: f64) -> (ScaledDet, ScaledDet) {
    let mut d_prev = Dd::ONE;
    let mut d_cur = Dd::ONE;
    let mut g_prev = 0.0;
    let mut g_cur = 0.0;
    let mut scale = 0i32;
    for k in 0..m.dim() {
        let shifted = Dd::two_sum(m.diag[k], -f);
        let coupling = if k == 0 { Dd::ZERO } else { Dd::two_prod(m.sub[k - 1], m.sup[k - 1]) };
        let d_next = shifted.mul(d_cur).add(coupling.mul(d_prev).neg());
        let g_next = shifted.hi * g_cur - d_cur.hi - coupling.hi * g_prev;
        d_prev = d_cur;
        d_cur = d_next;
        g_prev = g_cur;
        g_cur = g_next;
        if let Some(s) = needs_rescale(&[d_prev.hi, d_cur.hi, g_prev, g_cur]) {
            let factor = 2f64.powi(s);
            d_prev = d_prev.scale(factor);
            d_cur = d_cur.scale(factor);
            g_prev *= factor;
            g_cur *= factor;
            scale -= s;
        }
    }
    (
        ScaledDet { value: d_cur.hi + d_cur.lo, scale }.normalized(),
        ScaledDet { value: g_cur, scale }.normalized(),
    )
}

/// Newton on the compensated determinant; keeps the best iterate seen.
fn polish_newton(m: &ChargeMatrix, start: f64) -> f64 {
    let step_cap = 1e-3 * m.spectral_bound().max(1.0);
    let mut x = start;
    let (mut det, mut deriv) = compensated_eval(m, x);
    let mut best = (x, det.abs());
    for _ in 0..60 {
        if det.is_zero() || deriv.is_zero() {
            break;
        }
        let step = det.ratio(deriv);
        if !step.is_finite() || step.abs() > step_cap {
            break;
        }
        let next = x - step;
        if next == x {
            break;
        }
        x = next;
        (det, deriv) = compensated_eval(m, x);
        if det.abs().ln_abs() < best.1.ln_abs() || det.is_zero() {
            best = (x, det.abs());
        } else if step.abs() <= 4.0 * f64::EPSILON * x.abs() {
            // oscillating between neighbouring floats
            break;
        }
    }
    best.0
}

/// Number of eigenvalues below `x` for a matrix with all couplings positive.
fn sturm_count(m: &ChargeMatrix, couplings: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for k in 0..m.dim() {
        let c = if k == 0 { 0.0 } else { couplings[k - 1] / q };
        q = m.diag[k] - x - c;
        if q == 0.0 {
            q = f64::EPSILON * (m.diag[k].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bracketed_charges(m: &ChargeMatrix) -> ChargeSpectrum {
    let dim = m.dim();
    let couplings = m.couplings();
    let bound = m.spectral_bound().max(1.0) * (1.0 + 1e-12) + 1e-12;
    let symmetrizable = couplings.iter().all(|&p| p > 0.0);

    let mut brackets: Vec<(f64, f64)> = Vec::new();
    if symmetrizable {
        // Sturm bisection isolates each eigenvalue before polishing.
        for k in 0..dim {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if sturm_count(m, &couplings, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-9 * bound {
                    break;
                }
            }
            brackets.push((lo, hi));
        }
    } else {
        let samples = 32 * dim + 1;
        let grid: Vec<f64> = (0..samples)
            .map(|i| -bound + 2.0 * bound * i as f64 / (samples - 1) as f64)
            .collect();
        let signs: Vec<f64> = grid.iter().map(|&x| secular_det(m, x).signum()).collect();
        for i in 0..samples - 1 {
            if signs[i] == 0.0 {
                brackets.push((grid[i], grid[i]));
            } else if signs[i] * signs[i + 1] < 0.0 {
                brackets.push((grid[i], grid[i + 1]));
            }
        }
    }

    let mut roots: Vec<f64> = brackets.iter().map(|&(lo, hi)| illinois(m, lo, hi)).collect();
    roots.sort_by(f64::total_cmp);
    let scale = roots.iter().fold(1.0f64, |acc, r| acc.max(r.abs()));
    let (charges, multiplicities) = merge_close(&roots, DEGENERACY_TOL * scale);
    let found: usize = multiplicities.iter().sum();
    ChargeSpectrum {
        charges,
        multiplicities,
        dim,
        reality_ok: found == dim,
        max_imag: if symmetrizable || found == dim { 0.0 } else { f64::NAN },
    }
}

/// Illinois regula falsi on a sign-change bracket of the scaled determinant.
fn illinois(m: &ChargeMatrix, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (secular_det(m, a), secular_det(m, b));
    if fa.is_zero() {
        return a;
    }
    if fb.is_zero() {
        return b;
    }
    if fa.signum() == fb.signum() {
        // Sturm brackets can be narrower than the sign resolution; fall back to the midpoint.
        return 0.5 * (a + b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        // secant point computed in scaled arithmetic: b - fb (b - a) / (fb - fa)
        let denom = fb.sub(fa);
        let mut c = b - fb.ratio(denom) * (b - a);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = secular_det(m, c);
        if fc.is_zero() {
            return c;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa.value *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb.value *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= 2.0 * f64::EPSILON * b.abs().max(a.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if secular_det(m, a).abs().ln_abs() < secular_det(m, b).abs().ln_abs() {
        a
    } else {
        b
    }
}

/// Closed-form `L = 2` charges `±sqrt(b² + 2N)`, returned as `(plus, minus)`.
pub fn charges_closed_l2(n: usize, b: f64) -> (f64, f64) {
    let f = (b * b + 2.0 * n as f64).sqrt();
    (f, -f)
}

/// `N(F, b)` obtained by eliminating `N` from the `L = 3` secular equation.
pub fn elimination_n_l3(f: f64, b: f64) -> Result<f64> {
    if f == 0.0 {
        return Err(Error::DivisionByZeroCharge);
    }
    Ok(-(4.0 * f * b * b + 8.0 * b - f * f * f - 4.0 * f) / (8.0 * f))
}

/// The two roots `(N+, N-)` of the `L = 5` secular equation, quadratic in `N`.
pub fn elimination_n_l5(f: f64, b: f64) -> Result<(f64, f64)> {
    if f == 0.0 {
        return Err(Error::DivisionByZeroCharge);
    }
    let f2 = f * f;
    let f3 = f2 * f;
    let radicand = 1024.0 * b * b + 192.0 * b * f3 + 512.0 * f2 + f3 * f3;
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand(radicand));
    }
    let base = -768.0 * b - 256.0 * f * b * b + 768.0 * f + 40.0 * f3;
    let root = 24.0 * radicand.sqrt();
    Ok(((base + root) / (512.0 * f), (base - root) / (512.0 * f)))
}

/// Large-`N` estimate of the `L = 3` charges: `(sqrt(8N), -sqrt(8N), -b/N)`.
pub fn asymptotic_charges_l3(n: usize, b: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let s = (8.0 * nf).sqrt();
    (s, -s, -b / nf)
}

/// Result of splitting the full quasi-even determinant as `S^(S) * S^(L)`.
#[derive(Debug, Clone, Copy)]
pub struct FactorizationCheck {
    pub full: ScaledDet,
    pub small: ScaledDet,
    pub large: ScaledDet,
    pub rel_err: f64,
}

pub fn factorization_check(n: usize, params: &ModelParams, f: f64) -> Result<FactorizationCheck> {
    let full_m = build_quasi_even_full_matrix(n, params)?;
    let l = params.l as usize;
    let full = secular_det(&full_m, f);
    let small = block_det(&full_m, 0, l, f);
    let large = block_det(&full_m, l, n + 1, f);
    let product = small.mul(large);
    let denom = full.max_abs(product);
    let diff = full.sub(product);
    let rel_err = if denom.is_zero() || denom.ln_abs() < -700.0 {
        diff.abs().to_f64() / f64::MIN_POSITIVE
    } else {
        diff.abs().ratio(denom)
    };
    Ok(FactorizationCheck { full, small, large, rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(l: u32, b: f64) -> ModelParams {
        ModelParams::with_default_contour(l, b).unwrap()
    }

    /// Plain cofactor expansion, used as an oracle for small matrices.
    fn cofactor_det(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = a.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * cofactor_det(&minor)
            })
            .sum()
    }

    fn shifted(m: &ChargeMatrix, f: f64) -> DMatrix<f64> {
        m.to_dense() - DMatrix::identity(m.dim(), m.dim()) * f
    }

    #[test]
    fn quasi_even_matrix_shapes() {
        let m = build_quasi_even_matrix(7, &p(2, 1.5)).unwrap();
        assert_eq!(m.to_dense(), DMatrix::from_row_slice(2, 2, &[1.5, -1.0, -14.0, -1.5]));

        let m = build_quasi_even_matrix(2, &p(3, 5.0)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[10.0, -2.0, 0.0, -4.0, 0.0, -2.0, 0.0, -2.0, -10.0]);
        assert_eq!(m.to_dense(), expect);

        let m = build_quasi_even_matrix(9, &p(1, 3.0)).unwrap();
        assert_eq!(m.to_dense(), DMatrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn quasi_even_rejects_small_degree() {
        match build_quasi_even_matrix(2, &p(4, 1.0)) {
            Err(Error::DegreeTooSmall { n: 2, min: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_quasi_even_matrix(3, &p(4, 1.0)).is_ok());
    }

    #[test]
    fn quasi_odd_matrix_shapes() {
        let m = build_quasi_odd_matrix(0, &p(3, 2.0));
        assert_eq!(m.diag, vec![-8.0]);
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert_eq!(s.charges, vec![-8.0]);

        let m = build_quasi_odd_matrix(2, &p(1, 0.0));
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, -4.0, 0.0, 6.0, 0.0, -2.0, 0.0]);
        assert_eq!(m.to_dense(), expect);
        // oracle: unbalanced dense eigenvalues, 0 and ±i sqrt(20)
        let oracle = m.to_dense().complex_eigenvalues();
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert!(!s.reality_ok);
        assert_eq!(s.charges.len(), 1);
        assert!(s.charges[0].abs() < 1e-12);
        let oracle_imag = oracle.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
        assert!((s.max_imag - oracle_imag).abs() < 1e-9);
        assert!((s.max_imag - 20f64.sqrt()).abs() < 1e-9);
        assert!(matches!(s.require_real(), Err(Error::ComplexChargesDetected { found: 1, dim: 3, .. })));
    }

    #[test]
    fn det_recurrence_matches_cofactor_oracle() {
        let m = build_quasi_even_matrix(2, &p(3, 5.0)).unwrap();
        assert_eq!(secular_det(&m, 0.0).to_f64(), 40.0);
        assert_eq!(cofactor_det(&shifted(&m, 0.0)), 40.0);
        for big_n in [2usize, 5, 17, 300] {
            for &b in &[-3.0, 0.0, 0.4, 5.0] {
                let m = build_quasi_even_matrix(big_n, &p(3, b)).unwrap();
                let det = secular_det(&m, 0.0).to_f64();
                assert!((det - 8.0 * b).abs() <= 1e-12 * (8.0 * b).abs().max(1.0) * big_n as f64);
                for &f in &[-4.2, 0.3, 7.7] {
                    let a = secular_det(&m, f).to_f64();
                    let o = cofactor_det(&shifted(&m, f));
                    assert!((a - o).abs() <= 1e-12 * o.abs().max(1.0) * big_n as f64);
                }
            }
        }
        let m = build_quasi_odd_matrix(4, &p(2, 1.3));
        for &f in &[-3.0, 0.0, 2.5] {
            let a = secular_det(&m, f).to_f64();
            let o = cofactor_det(&shifted(&m, f));
            assert!((a - o).abs() <= 1e-11 * o.abs().max(1.0));
        }
    }

    #[test]
    fn det_trivial_and_l2_root() {
        let m = ChargeMatrix::new(vec![0.0], vec![], vec![]).unwrap();
        assert!(secular_det(&m, 0.0).is_zero());
        for &(n, b) in &[(1usize, 0.0), (8, 3.0), (40, -2.0)] {
            let m = build_quasi_even_matrix(n, &p(2, b)).unwrap();
            let f = (b * b + 2.0 * n as f64).sqrt();
            let norm2 = m.to_dense().norm_squared();
            assert!(secular_det(&m, f).to_f64().abs() <= 1e-12 * norm2);
        }
    }

    #[test]
    fn scaled_det_survives_huge_dimensions() {
        let m = build_quasi_odd_matrix(3000, &p(3, 2.0));
        let d = secular_det(&m, 0.7);
        assert!(d.value.is_finite() && d.value != 0.0);
        assert!(d.scale.abs() > 1100, "scale {}", d.scale);
        assert!(d.value.abs() >= 0.5 && d.value.abs() < 1.0);
        let ev = secular_eval(&m, 0.7);
        assert!(ev.magnitude.ln_abs() >= d.ln_abs());
    }

    #[test]
    fn scaled_det_arithmetic() {
        let a = ScaledDet::from_f64(3.0);
        let b = ScaledDet::from_f64(-0.25);
        assert_eq!(a.mul(b).to_f64(), -0.75);
        assert_eq!(a.sub(b).to_f64(), 3.25);
        assert_eq!(a.div(b).to_f64(), -12.0);
        let huge = ScaledDet { value: 0.75, scale: 5000 };
        assert_eq!(huge.ratio(huge), 1.0);
        assert!((huge.ln_abs() - (0.75f64.ln() + 5000.0 * std::f64::consts::LN_2)).abs() < 1e-9);
        let (m, e) = frexp(1e-310);
        assert!((0.5..1.0).contains(&m));
        assert_eq!(m * 2f64.powi(e + 64) / 2f64.powi(64), 1e-310);
    }

    #[test]
    fn paper_l3_triplet() {
        let s = charges(QuasiParity::Even, 2, &p(3, 5.0)).unwrap();
        let c = s.require_real().unwrap();
        for (got, want) in c.iter().zip([-10.400, -0.35755, 10.757]) {
            assert!((got - want).abs() <= 2e-3, "{got} vs {want}");
        }
        let product: f64 = c.iter().product();
        assert!((product - 40.0).abs() <= 1e-9 * 40.0);
    }

    #[test]
    fn l2_spectrum_matches_closed_form() {
        let s = charges(QuasiParity::Even, 8, &p(2, 3.0)).unwrap();
        let (plus, minus) = charges_closed_l2(8, 3.0);
        assert!((plus - 5.0).abs() < 1e-14);
        assert!((charges_closed_l2(8, 5.0).0 - 41f64.sqrt()).abs() < 1e-14);
        assert!((s.charges[0] - minus).abs() <= 1e-10 * plus);
        assert!((s.charges[1] - plus).abs() <= 1e-10 * plus);
        let (pl, mi) = charges_closed_l2(1, 0.0);
        assert_eq!((pl, mi), (2f64.sqrt(), -(2f64.sqrt())));
        let s = charges(QuasiParity::Even, 50, &p(2, 1.0)).unwrap();
        assert!((s.charges[1] - 101f64.sqrt()).abs() <= 1e-10 * 101f64.sqrt());
    }

    #[test]
    fn table_row_n100() {
        let s = charges(QuasiParity::Even, 100, &p(4, 5.0)).unwrap();
        for (got, want) in s.charges.iter().zip([-44.732, -15.0, 14.865, 44.867]) {
            assert!((got - want).abs() <= 5e-3);
        }
    }

    #[test]
    fn l1_even_single_zero_root() {
        for n in 0..20 {
            let s = charges(QuasiParity::Even, n, &p(1, 2.5)).unwrap();
            assert_eq!(s.charges, vec![0.0]);
        }
    }

    #[test]
    fn elimination_l3() {
        assert!(matches!(elimination_n_l3(0.0, 1.0), Err(Error::DivisionByZeroCharge)));
        assert_eq!(elimination_n_l3(2.0, 0.0).unwrap(), 1.0);
        // N = 1 sits below the quasi-even bound for L = 3, so assemble the 3x3 matrix by hand
        let m = ChargeMatrix::new(vec![0.0; 3], vec![-2.0, 0.0], vec![-2.0, -2.0]).unwrap();
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert!(s.charges.iter().any(|c| (c - 2.0).abs() < 1e-12));
        assert!((elimination_n_l3(10.757, 5.0).unwrap() - 2.0).abs() < 5e-3);
        assert!((elimination_n_l3(-0.35755, 5.0).unwrap() - 2.0).abs() < 5e-3);
    }

    #[test]
    fn elimination_l5() {
        assert!(matches!(elimination_n_l5(0.0, 1.0), Err(Error::DivisionByZeroCharge)));
        let (np, nm) = elimination_n_l5(1.0, 0.0).unwrap();
        // independent evaluation of the display at F = 1, b = 0
        let r = 24.0 * 513f64.sqrt();
        assert!((np - (808.0 + r) / 512.0).abs() < 1e-14);
        assert!((nm - (808.0 - r) / 512.0).abs() < 1e-14);

        let s = charges(QuasiParity::Even, 10, &p(5, 2.0)).unwrap();
        for &f in s.require_real().unwrap() {
            let (np, nm) = elimination_n_l5(f, 2.0).unwrap();
            assert!((np - 10.0).abs().min((nm - 10.0).abs()) <= 1e-8, "F={f}: {np} {nm}");
        }
        let s = charges(QuasiParity::Even, 10, &p(5, 0.0)).unwrap();
        let c = s.require_real().unwrap();
        for (a, b) in c.iter().zip(c.iter().rev()) {
            assert!((a + b).abs() < 1e-10);
        }
    }

    #[test]
    fn asymptotic_l3() {
        let (a, b, c) = asymptotic_charges_l3(1000, 5.0);
        assert!((a - 89.4427).abs() < 1e-4 && (b + 89.4427).abs() < 1e-4 && (c + 0.005).abs() < 1e-15);
        let s = charges(QuasiParity::Even, 1_000_000, &p(3, 5.0)).unwrap();
        let (a, b, c) = asymptotic_charges_l3(1_000_000, 5.0);
        for (got, want) in s.charges.iter().zip([b, c, a]) {
            assert!(((got - want) / want).abs() <= 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn negating_b_negates_spectrum() {
        for l in 2..7u32 {
            for n in [l as usize - 1, 10, 57] {
                let s1 = charges(QuasiParity::Even, n, &p(l, 1.7)).unwrap();
                let s2 = charges(QuasiParity::Even, n, &p(l, -1.7)).unwrap();
                for (a, b) in s1.charges.iter().zip(s2.charges.iter().rev()) {
                    assert!((a + b).abs() < 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn trace_vanishes_for_quasi_even() {
        for l in 1..8u32 {
            for &b in &[-4.0, 0.5, 5.0] {
                let s = charges(QuasiParity::Even, 33, &p(l, b)).unwrap();
                let scale = s.charges.iter().fold(1.0f64, |a, c| a.max(c.abs()));
                let sum: f64 = s.charges.iter().sum();
                assert!(sum.abs() <= 1e-9 * scale, "L={l} b={b} sum={sum}");
            }
        }
    }

    #[test]
    fn polished_roots_annihilate_the_determinant() {
        for l in 2..7u32 {
            let m = build_quasi_even_matrix(40, &p(l, 3.3)).unwrap();
            let s = eigencharges(&m, DEFAULT_REALITY_TOL);
            assert!(s.reality_ok);
            for &f in &s.charges {
                let ev = secular_eval(&m, f);
                assert!(ev.det.abs().ratio(ev.magnitude) <= 1e-10);
            }
        }
    }

    #[test]
    fn factorization_of_full_determinant() {
        let fc = factorization_check(7, &p(3, 2.0), 1.3).unwrap();
        assert!(fc.rel_err <= 1e-10);
        let fc = factorization_check(3, &p(4, 2.0), -0.6).unwrap();
        assert_eq!(fc.large, ScaledDet::ONE);
        assert_eq!(fc.full, fc.small);

        // the large factor is the quasi-odd determinant at N - L
        let q = p(3, 1.1);
        let fc = factorization_check(9, &q, 0.45).unwrap();
        let odd = secular_det(&build_quasi_odd_matrix(6, &q), 0.45);
        assert!((fc.large.ratio(odd) - 1.0).abs() < 1e-12);

        let q = p(4, 5.0);
        let f = charges(QuasiParity::Even, 20, &q).unwrap().charges[2];
        let fc = factorization_check(20, &q, f).unwrap();
        let mag = secular_eval(&build_quasi_even_matrix(20, &q).unwrap(), f).magnitude;
        assert!(fc.small.abs().ratio(mag) < 1e-12);
        assert!(fc.large.ln_abs() > 0.0);
        assert!(fc.full.abs().ratio(fc.large.mul(mag)) < 1e-12);
    }

    #[test]
    fn bracketing_agrees_with_dense() {
        // symmetrizable: Sturm path
        let m = build_quasi_even_matrix(30, &p(6, 2.0)).unwrap();
        let a = eigencharges_with(&m, DEFAULT_REALITY_TOL, SolverPath::Dense);
        let b = eigencharges_with(&m, DEFAULT_REALITY_TOL, SolverPath::Bracketing);
        assert!(b.reality_ok);
        for (x, y) in a.charges.iter().zip(&b.charges) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
        // synthetic dim-100 symmetric tridiagonal; compare with nalgebra's symmetric solver
        let diag: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin() * 5.0).collect();
        let off: Vec<f64> = (0..99).map(|k| 1.0 + 0.01 * k as f64).collect();
        let m = ChargeMatrix::new(diag, off.clone(), off).unwrap();
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert!(s.reality_ok && s.charges.len() == 100);
        let mut oracle: Vec<f64> = m.to_dense().symmetric_eigenvalues().iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for (x, y) in s.charges.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        // non-symmetrizable with complex pairs: reported, not hidden
        let m = build_quasi_odd_matrix(80, &p(1, 0.0));
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert!(!s.reality_ok);
        assert!(s.require_real().is_err());
    }

    #[test]
    fn compensated_determinant_is_exact_at_zero_charge() {
        let m = build_quasi_even_matrix(10_000, &p(3, 5.0)).unwrap();
        let (det, _) = compensated_eval(&m, 0.0);
        assert_eq!(det.to_f64(), 40.0);
    }

    #[test]
    fn degenerate_roots_are_merged() {
        let m = ChargeMatrix::new(vec![2.0, 2.0, 2.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let s = eigencharges(&m, DEFAULT_REALITY_TOL);
        assert_eq!(s.charges, vec![2.0]);
        assert_eq!(s.multiplicities, vec![3]);
        assert!(s.reality_ok && s.has_degeneracy());
    }
}
