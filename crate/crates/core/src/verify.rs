//! Independent checks that a state solves the contour Schrödinger equation
//!
//! `[-d²/dx² + ℓ(ℓ+1)/r² + iF/r + 2ibr + r²] ψ = E ψ`,   `r = x - iε`.
//!
//! [`hamiltonian_residual`] applies the operator symbolically to the
//! Laurent form of the state; [`shooting_match`] integrates the equation
//! numerically from both ends of the contour and measures the matching
//! defect at `x = 0`.

use std::ops::{Add, Mul};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dd::{Cdd, Dd};
use crate::error::{Error, Result};
use crate::laurent::LaurentPoly;
use crate::model::ModelParams;
use crate::wavefun::QesState;

pub mod suite;

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;
pub const DEFAULT_SHOOTING_TOL: f64 = 1e-6;
pub const MIN_SHOOTING_STEPS: usize = 10_000;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `e^{r²/2 + ibr} (H - E) ψ`, which must vanish identically.
    pub coeff_residuals: LaurentPoly,
    pub max_abs: f64,
    /// Largest coefficient among the intermediate terms.
    pub scale: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.scale
        }
    }
}

/// Applies `H - E` to `exp(-r²/2 - ibr) P` and strips the exponential.
///
/// With `g = -r²/2 - ibr`, `g' = -r - ib` and `g'' = -1`,
/// `e^{-g} d²(e^g P)/dr² = P'' + 2g'P' + (g'' + g'²)P`.
pub fn apply_reduced_hamiltonian(
    poly: &LaurentPoly,
    params: &ModelParams,
    charge: f64,
    energy: f64,
) -> (LaurentPoly, f64) {
    let ib = Complex64::new(0.0, params.b);
    let times_slope = |q: &LaurentPoly| -> LaurentPoly { &(-&q.mul_r()) - &q.scale(ib) };

    let d1 = poly.deriv_r();
    let d2 = d1.deriv_r();
    let slope_d1 = times_slope(&d1);
    let slope_sq_p = times_slope(&times_slope(poly));
    let curvature_p = poly.scale(Complex64::new(-1.0, 0.0));
    let kinetic = &(&(&d2 + &slope_d1.scale(Complex64::new(2.0, 0.0))) + &curvature_p) + &slope_sq_p;

    let centrifugal = poly.div_r().div_r().scale(Complex64::new(params.centrifugal(), 0.0));
    let coulomb = poly.div_r().scale(I * charge);
    let linear = poly.mul_r().scale(2.0 * ib);
    let quadratic = poly.mul_r().mul_r();
    let spectral = poly.scale(Complex64::new(energy, 0.0));

    let potential = &(&(&centrifugal + &coulomb) + &linear) + &quadratic;
    let total = &(&potential - &kinetic) - &spectral;

    let scale = [
        &d2,
        &slope_d1,
        &slope_sq_p,
        &curvature_p,
        &centrifugal,
        &coulomb,
        &linear,
        &quadratic,
        &spectral,
    ]
    .iter()
    .fold(0.0f64, |acc, q| acc.max(q.max_abs()));
    (total, scale)
}

pub fn hamiltonian_residual(state: &QesState, tol: f64) -> ResidualReport {
    let (residual, scale) =
        apply_reduced_hamiltonian(&state.laurent(), &state.params, state.charge, state.energy);
    let max_abs = residual.max_abs();
    ResidualReport { passed: max_abs <= tol * scale, coeff_residuals: residual, max_abs, scale }
}

/// Integration settings for [`shooting_match`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    /// Contour is integrated over `[-x_max, x_max]`.
    pub x_max: f64,
    /// RK4 steps per half-line at the coarse resolution.
    pub steps: usize,
    pub tol: f64,
}

impl ShootingConfig {
    /// Defaults sized to start well inside the forbidden region at energy `e`.
    pub fn for_energy(params: &ModelParams, e: f64) -> Self {
        let x_max = 8.0 + params.b.abs() + params.epsilon + e.max(0.0).sqrt() + 2.0;
        let steps = ((1200.0 * x_max) as usize).max(2 * MIN_SHOOTING_STEPS);
        Self { x_max, steps, tol: DEFAULT_SHOOTING_TOL }
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        let min_x = 8.0 + params.b.abs() + params.epsilon;
        if !(self.x_max >= min_x) {
            return Err(Error::InvalidParameter {
                name: "x_max",
                reason: format!("must be >= 8 + |b| + ε = {min_x}, got {}", self.x_max),
            });
        }
        if self.steps < MIN_SHOOTING_STEPS {
            return Err(Error::InvalidParameter {
                name: "steps",
                reason: format!("must be >= {MIN_SHOOTING_STEPS}, got {}", self.steps),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingResult {
    /// Normalized Wronskian defect from the fine run.
    pub mismatch: f64,
    pub mismatch_coarse: f64,
    /// `|mismatch - mismatch_coarse|` between the two step sizes.
    pub disagreement: f64,
    pub x_max: f64,
    pub steps: usize,
    /// Point on the real axis where the defect was read.
    pub match_x: f64,
    /// Whether the double-double fallback was needed.
    pub extended_precision: bool,
    pub converged: bool,
}

trait Scalar: Copy + Add<Output = Self> + Mul<Output = Self> {
    fn real(v: f64) -> Self;
    fn norm1(self) -> f64;
    fn to_c64(self) -> Complex64;
}

impl Scalar for Complex64 {
    fn real(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn norm1(self) -> f64 {
        self.re.abs() + self.im.abs()
    }
    fn to_c64(self) -> Complex64 {
        self
    }
}

impl Scalar for Cdd {
    fn real(v: f64) -> Self {
        Cdd::new(Dd::from_f64(v), Dd::ZERO)
    }
    fn norm1(self) -> f64 {
        Cdd::norm1(self)
    }
    fn to_c64(self) -> Complex64 {
        Cdd::to_c64(self)
    }
}

struct Sweep {
    states: Vec<[Complex64; 2]>,
    /// Accumulated `ln` of the discarded normalization at each grid point.
    logs: Vec<f64>,
}

/// RK4 over `steps` equal steps of size `h`, starting from `y`; `q(k, t)`
/// is the potential at grid position `k + t`. The state is rescaled by
/// powers of two, which is exact.
fn rk4_sweep<C: Scalar>(mut y: [C; 2], h: C, steps: usize, q: impl Fn(usize, f64) -> C) -> Sweep {
    let half = C::real(0.5);
    let two = C::real(2.0);
    let sixth = C::real(1.0 / 6.0);
    let mut log_norm = 0.0;
    let mut states = Vec::with_capacity(steps + 1);
    let mut logs = Vec::with_capacity(steps + 1);
    let rescale = |y: &mut [C; 2], log_norm: &mut f64| {
        let e = (y[0].norm1() + y[1].norm1()).log2().round();
        let f = C::real((-e).exp2());
        y[0] = y[0] * f;
        y[1] = y[1] * f;
        *log_norm += e * std::f64::consts::LN_2;
    };
    rescale(&mut y, &mut log_norm);
    states.push([y[0].to_c64(), y[1].to_c64()]);
    logs.push(log_norm);
    for k in 0..steps {
        let (q0, q1, q2) = (q(k, 0.0), q(k, 0.5), q(k, 1.0));
        let k1 = [y[1], q0 * y[0]];
        let m = [y[0] + half * h * k1[0], y[1] + half * h * k1[1]];
        let k2 = [m[1], q1 * m[0]];
        let m = [y[0] + half * h * k2[0], y[1] + half * h * k2[1]];
        let k3 = [m[1], q1 * m[0]];
        let m = [y[0] + h * k3[0], y[1] + h * k3[1]];
        let k4 = [m[1], q2 * m[0]];
        for c in 0..2 {
            y[c] = y[c] + sixth * h * (k1[c] + two * k2[c] + two * k3[c] + k4[c]);
        }
        rescale(&mut y, &mut log_norm);
        states.push([y[0].to_c64(), y[1].to_c64()]);
        logs.push(log_norm);
    }
    Sweep { states, logs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Precision {
    Double,
    Extended,
}

impl Precision {
    /// Log-decay below a running peak after which a sweep is no longer trusted.
    fn trust_decay(self) -> f64 {
        match self {
            Precision::Double => 7.0,
            Precision::Extended => 25.0,
        }
    }
}

struct Equation {
    centrifugal: f64,
    charge: f64,
    b: f64,
    epsilon: f64,
    energy: f64,
}

impl Equation {
    /// `ψ'' = q(x) ψ`.
    fn q(&self, x: f64) -> Complex64 {
        let r = Complex64::new(x, -self.epsilon);
        let inv = 1.0 / r;
        self.centrifugal * inv * inv + I * self.charge * inv + 2.0 * I * self.b * r + r * r
            - self.energy
    }

    fn q_dd(&self, x: Dd) -> Cdd {
        let r = Cdd::new(x, Dd::from_f64(-self.epsilon));
        let inv = r.recip();
        let coulomb = Cdd::new(-(inv.im * Dd::from_f64(self.charge)), inv.re * Dd::from_f64(self.charge));
        let linear = Cdd::new(Dd::from_f64(2.0 * self.b * self.epsilon), x * Dd::from_f64(2.0 * self.b));
        (inv * inv).scale(Dd::from_f64(self.centrifugal)) + coulomb + linear + r * r
            - Cdd::new(Dd::from_f64(self.energy), Dd::ZERO)
    }

    /// Decaying data at `x`: `ψ ∝ e^{-r²/2 - ibr} (ir)^σ` with `σ = (E - b² - 1)/2`.
    fn asymptotic(&self, x: f64) -> [Complex64; 2] {
        let r = Complex64::new(x, -self.epsilon);
        let sigma = 0.5 * (self.energy - self.b * self.b - 1.0);
        let log_slope = -r - I * self.b + sigma / r;
        [Complex64::new(1.0, 0.0), log_slope]
    }

    fn sweep(&self, from: f64, to: f64, steps: usize, precision: Precision) -> Sweep {
        let y = self.asymptotic(from);
        match precision {
            Precision::Double => {
                let h = (to - from) / steps as f64;
                rk4_sweep(y, Complex64::new(h, 0.0), steps, |k, t| self.q(from + h * (k as f64 + t)))
            }
            Precision::Extended => {
                let h = (Dd::from_f64(to) - Dd::from_f64(from)) / Dd::from_f64(steps as f64);
                let y = [Cdd::from_c64(y[0]), Cdd::from_c64(y[1])];
                rk4_sweep(y, Cdd::new(h, Dd::ZERO), steps, |k, t| {
                    self.q_dd(Dd::from_f64(from) + h * Dd::from_f64(k as f64 + t))
                })
            }
        }
    }

    /// Normalized Wronskian defect, the point where it was taken, and the
    /// worse decay factor there (infinite when no point is trusted).
    ///
    /// Both solutions are carried over the whole line. A solution that has
    /// decayed since its running maximum carries amplified error, so the
    /// defect is read where the worse of the two decay factors is smallest,
    /// preferring `x = 0` when it is within a factor of ten.
    fn mismatch_at(&self, x_max: f64, steps: usize, precision: Precision) -> Match {
        let total = 2 * steps;
        let left = self.sweep(-x_max, x_max, total, precision);
        let mut right = self.sweep(x_max, -x_max, total, precision);
        right.states.reverse();
        right.logs.reverse();

        // relative error grows like e^{2·decay}; past the cutoff the solution is noise
        let cutoff = precision.trust_decay();
        let trust = |logs: &[f64], order: &mut dyn Iterator<Item = usize>, decay: &mut [f64]| {
            let mut peak = f64::NEG_INFINITY;
            let mut lost = false;
            for k in order {
                peak = peak.max(logs[k]);
                let d = peak - logs[k];
                lost |= d > cutoff;
                decay[k] = decay[k].max(if lost { f64::INFINITY } else { d });
            }
        };
        let mut decay = vec![0.0f64; total + 1];
        trust(&left.logs, &mut (0..=total), &mut decay);
        trust(&right.logs, &mut (0..=total).rev(), &mut decay);
        let best = (0..=total)
            .min_by(|&a, &b| {
                decay[a].total_cmp(&decay[b]).then(a.abs_diff(steps).cmp(&b.abs_diff(steps)))
            })
            .unwrap_or(steps);
        let k = if decay[steps] <= decay[best] + std::f64::consts::LN_10 { steps } else { best };

        let a = left.states[k][0] * right.states[k][1];
        let b = left.states[k][1] * right.states[k][0];
        Match {
            mismatch: (a - b).norm() / (a.norm() + b.norm()),
            x: -x_max + 2.0 * x_max * k as f64 / total as f64,
            decay: decay[k],
            precision,
        }
    }

    /// Double precision, falling back to double-double when no matching
    /// point survives the trust cutoff.
    fn mismatch(&self, x_max: f64, steps: usize) -> Match {
        let m = self.mismatch_at(x_max, steps, Precision::Double);
        if m.decay.is_finite() {
            m
        } else {
            self.mismatch_at(x_max, steps, Precision::Extended)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Match {
    mismatch: f64,
    x: f64,
    decay: f64,
    precision: Precision,
}

fn equation(params: &ModelParams, charge: f64, energy: f64) -> Equation {
    Equation {
        centrifugal: params.centrifugal(),
        charge,
        b: params.b,
        epsilon: params.epsilon,
        energy,
    }
}

/// Matching defect of the two decaying solutions at `(F, E)`, with a step-halving check.
pub fn shooting_match(
    params: &ModelParams,
    charge: f64,
    energy: f64,
    config: &ShootingConfig,
) -> Result<ShootingResult> {
    config.validate(params)?;
    let eq = equation(params, charge, energy);
    let coarse = eq.mismatch(config.x_max, config.steps);
    let fine = eq.mismatch(config.x_max, 2 * config.steps);
    let (coarse, fine, match_x, extended) =
        (coarse.mismatch, fine.mismatch, fine.x, fine.precision == Precision::Extended);
    let disagreement = (fine - coarse).abs();
    if disagreement > 10.0 * config.tol {
        return Err(Error::NonConvergent { disagreement });
    }
    Ok(ShootingResult {
        mismatch: fine,
        mismatch_coarse: coarse,
        disagreement,
        x_max: config.x_max,
        steps: config.steps,
        match_x,
        extended_precision: extended,
        converged: fine <= config.tol && disagreement <= config.tol,
    })
}

/// [`shooting_match`] at a state's own `(F, E)` with default settings.
pub fn shoot_state(state: &QesState) -> Result<ShootingResult> {
    let config = ShootingConfig::for_energy(&state.params, state.energy);
    shooting_match(&state.params, state.charge, state.energy, &config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub grid_step: f64,
    /// A refined minimum counts as an eigenvalue when its mismatch is below this.
    pub accept_tol: f64,
    /// Overrides the automatic contour length and step count.
    pub shooting: Option<ShootingConfig>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { grid_step: 0.05, accept_tol: DEFAULT_SHOOTING_TOL, shooting: None }
    }
}

/// Eigen-energies in `[e_min, e_max]` at a fixed, arbitrary charge.
///
/// The normalized mismatch is sampled on a grid, every interior local
/// minimum is refined by golden-section search, and refined minima below
/// `accept_tol` are kept. Results are sorted and deduplicated.
pub fn energy_scan(
    params: &ModelParams,
    charge: f64,
    e_min: f64,
    e_max: f64,
    config: &ScanConfig,
) -> Result<Vec<f64>> {
    if !(e_min.is_finite() && e_max.is_finite() && e_min < e_max) {
        return Err(Error::InvalidParameter {
            name: "E_range",
            reason: format!("need finite e_min < e_max, got [{e_min}, {e_max}]"),
        });
    }
    let shoot = config.shooting.unwrap_or_else(|| ShootingConfig::for_energy(params, e_max));
    shoot.validate(params)?;
    let mismatch = |e: f64| equation(params, charge, e).mismatch(shoot.x_max, shoot.steps).mismatch;

    let cells = ((e_max - e_min) / config.grid_step).ceil().max(2.0) as usize;
    let pad = 1;
    let grid: Vec<f64> = (0..=cells + 2 * pad)
        .map(|i| e_min + (i as f64 - pad as f64) * (e_max - e_min) / cells as f64)
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|&e| mismatch(e)).collect();

    let candidates: Vec<(f64, f64)> = (1..grid.len() - 1)
        .filter(|&i| values[i] <= values[i - 1] && values[i] < values[i + 1])
        .map(|i| (grid[i - 1], grid[i + 1]))
        .collect();

    let mut roots: Vec<f64> = candidates
        .par_iter()
        .filter_map(|&(lo, hi)| {
            let e = golden_min(&mismatch, lo, hi);
            (mismatch(e) <= config.accept_tol && e >= e_min && e <= e_max).then_some(e)
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * b.abs().max(1.0));
    Ok(roots)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}
