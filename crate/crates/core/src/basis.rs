//! Quasi-even QES states of one charge branch as a non-orthogonal basis for
//! the Hamiltonian at an arbitrary charge `F`.
//!
//! Brackets are the conjugation-free bilinear pairing
//! `⟨⟨m| X |n⟩ = ∫ ψ_m(r) X ψ_n(r) dx` along `r = x - iε`.

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelParams, QuasiParity};
use crate::secular::charges;
use crate::wavefun::QesState;

pub const DEFAULT_PANEL_WIDTH: f64 = 0.5;
pub const DEFAULT_PANEL_POINTS: usize = 16;
pub const MIN_NODES: usize = 64;
pub const QUADRATURE_TOL: f64 = 1e-8;
pub const MAX_CONDITION: f64 = 1e12;
pub const MIN_CHARGE_GAP: f64 = 1e-9;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Composite Gauss-Legendre rule on `[-x_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub x_max: f64,
    pub panel_width: f64,
    pub points: usize,
    pub epsilon: f64,
}

impl QuadratureSpec {
    /// `X = 10 + |b| + ε + √N_max` with 16-point panels of width 0.5.
    pub fn for_basis(params: &ModelParams, n_max: usize) -> Self {
        Self {
            x_max: 10.0 + params.b.abs() + params.epsilon + (n_max as f64).sqrt(),
            panel_width: DEFAULT_PANEL_WIDTH,
            points: DEFAULT_PANEL_POINTS,
            epsilon: params.epsilon,
        }
    }

    pub fn panels(&self) -> usize {
        (2.0 * self.x_max / self.panel_width).ceil().max(1.0) as usize
    }

    pub fn node_count(&self) -> usize {
        self.panels() * self.points
    }

    /// The same rule with twice as many panels.
    pub fn doubled(&self) -> Self {
        Self { panel_width: 0.5 * self.panel_width, ..*self }
    }

    pub fn validate(&self, params: &ModelParams, n_max: usize) -> Result<()> {
        let min_x = 8.0 + params.b.abs() + params.epsilon + (n_max as f64).sqrt();
        if !(self.x_max >= min_x) {
            return Err(Error::InvalidParameter {
                name: "x_max",
                reason: format!("must be >= 8 + |b| + ε + √N_max = {min_x}, got {}", self.x_max),
            });
        }
        if !(self.panel_width > 0.0) || self.points == 0 || self.node_count() < MIN_NODES {
            return Err(Error::InvalidParameter {
                name: "nodes",
                reason: format!("need at least {MIN_NODES} nodes, got {}", self.node_count()),
            });
        }
        if self.epsilon != params.epsilon {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("quadrature ε = {} differs from the model's {}", self.epsilon, params.epsilon),
            });
        }
        Ok(())
    }

    /// `(x, weight)` pairs, ordered by `x`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let rule = GaussLegendre::new(self.points).expect("panel rule has at least two points");
        let panels = self.panels();
        let width = 2.0 * self.x_max / panels as f64;
        let mut pairs = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        (0..panels)
            .flat_map(|p| {
                let mid = -self.x_max + (p as f64 + 0.5) * width;
                pairs.iter().map(move |&(t, w)| (mid + 0.5 * width * t, 0.5 * width * w))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Identity,
    /// `i / r`, the operator multiplying `F` in the Hamiltonian.
    Coulomb,
}

/// Values of each state and its derivative at the nodes of one rule.
struct Table {
    weights: Vec<f64>,
    r: Vec<Complex64>,
    psi: Vec<Vec<Complex64>>,
    dpsi: Vec<Vec<Complex64>>,
}

impl Table {
    fn new(states: &[QesState], quad: &QuadratureSpec) -> Self {
        let nodes = quad.nodes();
        let eval = |f: &(dyn Fn(&QesState, f64) -> Complex64 + Sync)| -> Vec<Vec<Complex64>> {
            states.par_iter().map(|s| nodes.iter().map(|&(x, _)| f(s, x)).collect()).collect()
        };
        Self {
            weights: nodes.iter().map(|&(_, w)| w).collect(),
            r: nodes.iter().map(|&(x, _)| Complex64::new(x, -quad.epsilon)).collect(),
            psi: eval(&|s, x| s.psi(x)),
            dpsi: eval(&|s, x| s.psi_derivative(x)),
        }
    }

    /// Returns the integral and the integral of the modulus.
    fn pair(&self, m: usize, n: usize, weight: Weight) -> (Complex64, f64) {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for k in 0..self.weights.len() {
            let mut f = self.psi[m][k] * self.psi[n][k];
            if weight == Weight::Coulomb {
                f *= I / self.r[k];
            }
            sum += self.weights[k] * f;
            mag += self.weights[k] * f.norm();
        }
        (sum, mag)
    }

    /// `∫ ψ_m' ψ_n' + V₀ ψ_m ψ_n`, i.e. `⟨⟨m| H(0) |n⟩` after integrating by parts.
    fn kinetic_pair(&self, m: usize, n: usize, params: &ModelParams) -> (Complex64, f64) {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for k in 0..self.weights.len() {
            let r = self.r[k];
            let v0 = params.centrifugal() / (r * r) + 2.0 * I * params.b * r + r * r;
            let grad = self.dpsi[m][k] * self.dpsi[n][k];
            let pot = v0 * self.psi[m][k] * self.psi[n][k];
            sum += self.weights[k] * (grad + pot);
            mag += self.weights[k] * (grad.norm() + pot.norm());
        }
        (sum, mag)
    }
}

fn check_converged(coarse: (Complex64, f64), fine: (Complex64, f64)) -> Result<f64> {
    let delta = (fine.0 - coarse.0).norm() / fine.1.max(f64::MIN_POSITIVE);
    if delta > QUADRATURE_TOL {
        Err(Error::QuadratureNotConverged { delta })
    } else {
        Ok(delta)
    }
}

/// `∫ ψ_m ψ_n w dx` without conjugation, certified by node doubling.
///
/// The doubling change is measured relative to `∫ |ψ_m ψ_n w| dx`.
pub fn contour_pairing(m: &QesState, n: &QesState, weight: Weight, quad: &QuadratureSpec) -> Result<Complex64> {
    for s in [m, n] {
        if s.params != m.params {
            return Err(Error::InvalidParameter {
                name: "states",
                reason: "paired states must share (L, b, ε)".into(),
            });
        }
    }
    quad.validate(&m.params, m.n.max(n.n))?;
    let states = [m.clone(), n.clone()];
    let coarse = Table::new(&states, quad).pair(0, 1, weight);
    let fine = Table::new(&states, &quad.doubled()).pair(0, 1, weight);
    check_converged(coarse, fine)?;
    Ok(fine.0)
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    pub params: ModelParams,
    /// Index into each degree's ascending list of quasi-even charges.
    pub branch: usize,
    pub n_min: usize,
    /// Basis has `size + 1` states, `N = n_min ..= n_min + size`.
    pub size: usize,
    pub quad: QuadratureSpec,
    pub states: Vec<QesState>,
    pub charges: Vec<f64>,
    pub energies: Vec<f64>,
    /// `Q[n][m] = ⟨⟨n|m⟩`.
    pub q: DMatrix<Complex64>,
    /// `W[n][m] = ⟨⟨n| i/r |m⟩`.
    pub w: DMatrix<Complex64>,
    /// Diagonal of `W`.
    pub t: Vec<Complex64>,
    /// `Q^{-1}`.
    pub r: DMatrix<Complex64>,
    /// `⟨⟨n| H(0) |m⟩`.
    pub h0: DMatrix<Complex64>,
    /// 2-norm condition number of `Q` after symmetric diagonal scaling.
    pub cond_q: f64,
    pub min_gap: f64,
    /// Largest node-doubling change over all matrix entries.
    pub quad_delta: f64,
}

impl BasisSet {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Signs of the (possibly negative) real parts of the pseudo-norms `Q[n][n]`.
    pub fn pseudo_norm_signs(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.q[(k, k)].re.signum()).collect()
    }

    /// `‖Q - Qᵀ‖_F / ‖Q‖_F`.
    pub fn symmetry_error(&self) -> f64 {
        (&self.q - self.q.transpose()).norm() / self.q.norm()
    }

    pub fn w_symmetry_error(&self) -> f64 {
        (&self.w - self.w.transpose()).norm() / self.w.norm()
    }

    /// `‖Q R - 1‖_F`.
    pub fn inverse_error(&self) -> f64 {
        (&self.q * &self.r - DMatrix::<Complex64>::identity(self.dim(), self.dim())).norm()
    }

    /// Largest relative defect of `⟨⟨N|H(F_M)|M⟩ = E_M Q_NM` and of the
    /// mirrored relation with `(F_N, E_N)`, over all pairs.
    pub fn hamiltonian_identity_residual(&self) -> (f64, f64) {
        let d = self.dim();
        let mut right = 0.0f64;
        let mut left = 0.0f64;
        for a in 0..d {
            for c in 0..d {
                let k = self.h0[(a, c)];
                let w = self.w[(a, c)];
                let q = self.q[(a, c)];
                let rel = |f: f64, e: f64| {
                    let terms = [k.norm(), (f * w).norm(), (e * q).norm()];
                    (k + f * w - e * q).norm() / terms.iter().fold(f64::MIN_POSITIVE, |m, t| m.max(*t))
                };
                right = right.max(rel(self.charges[c], self.energies[c]));
                left = left.max(rel(self.charges[a], self.energies[a]));
            }
        }
        (right, left)
    }
}

/// Builds the basis on a fixed charge branch, `None` selecting the largest charge.
pub fn build_basis(
    l: u32,
    b: f64,
    epsilon: f64,
    branch: Option<usize>,
    n_min: usize,
    size: usize,
    quad: Option<QuadratureSpec>,
) -> Result<BasisSet> {
    let params = ModelParams::new(l, b, epsilon)?;
    if n_min + 1 < l as usize {
        return Err(Error::DegreeTooSmall { n: n_min, min: l as usize - 1 });
    }
    let n_max = n_min + size;
    let quad = quad.unwrap_or_else(|| QuadratureSpec::for_basis(&params, n_max));
    quad.validate(&params, n_max)?;

    let mut branch_used = branch;
    let mut states = Vec::with_capacity(size + 1);
    for n in n_min..=n_max {
        let spectrum = charges(QuasiParity::Even, n, &params)?;
        let real = spectrum.require_real()?;
        let k = *branch_used.get_or_insert(real.len() - 1);
        states.push(QesState::solve(QuasiParity::Even, n, params, k)?);
    }
    let branch = branch_used.expect("at least one state");
    let charges: Vec<f64> = states.iter().map(|s| s.charge).collect();
    let energies: Vec<f64> = states.iter().map(|s| s.energy).collect();

    let scale = charges.iter().fold(1.0f64, |m, f| m.max(f.abs()));
    let mut min_gap = f64::INFINITY;
    for a in 0..charges.len() {
        for c in a + 1..charges.len() {
            min_gap = min_gap.min((charges[a] - charges[c]).abs());
        }
    }
    if charges.len() > 1 && min_gap <= MIN_CHARGE_GAP * scale {
        return Err(Error::SingularOverlap(format!(
            "charges must be pairwise distinct (F_M ≠ F_N), minimum gap {min_gap:e} on branch {branch}"
        )));
    }

    let coarse = Table::new(&states, &quad);
    let fine = Table::new(&states, &quad.doubled());
    let d = states.len();
    let entries: Vec<(usize, usize)> = (0..d).flat_map(|a| (0..d).map(move |c| (a, c))).collect();
    let filled: Vec<Result<[Complex64; 3]>> = entries
        .par_iter()
        .map(|&(a, c)| {
            let q = fine.pair(a, c, Weight::Identity);
            let w = fine.pair(a, c, Weight::Coulomb);
            let h = fine.kinetic_pair(a, c, &params);
            check_converged(coarse.pair(a, c, Weight::Identity), q)?;
            check_converged(coarse.pair(a, c, Weight::Coulomb), w)?;
            check_converged(coarse.kinetic_pair(a, c, &params), h)?;
            Ok([q.0, w.0, h.0])
        })
        .collect();
    let mut q = DMatrix::zeros(d, d);
    let mut w = DMatrix::zeros(d, d);
    let mut h0 = DMatrix::zeros(d, d);
    for (&(a, c), vals) in entries.iter().zip(filled) {
        let [qv, wv, hv] = vals?;
        q[(a, c)] = qv;
        w[(a, c)] = wv;
        h0[(a, c)] = hv;
    }
    let mut quad_delta = 0.0f64;
    for &(a, c) in &entries {
        for weight in [Weight::Identity, Weight::Coulomb] {
            let delta = check_converged(coarse.pair(a, c, weight), fine.pair(a, c, weight))?;
            quad_delta = quad_delta.max(delta);
        }
    }

    let (r, cond_q) = scaled_inverse(&q)?;
    let t = (0..d).map(|k| w[(k, k)]).collect();
    Ok(BasisSet {
        params,
        branch,
        n_min,
        size,
        quad,
        states,
        charges,
        energies,
        q,
        w,
        t,
        r,
        h0,
        cond_q,
        min_gap,
        quad_delta,
    })
}

/// Inverts `Q` as `D (D Q D)^{-1} D` with `D = diag(|Q_kk|^{-1/2})`.
fn scaled_inverse(q: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    let d = q.nrows();
    let mut scale = Vec::with_capacity(d);
    for k in 0..d {
        let mag = q[(k, k)].norm();
        if !(mag > 0.0) || !mag.is_finite() {
            return Err(Error::SingularOverlap(format!("pseudo-norm Q[{k}][{k}] = {}", q[(k, k)])));
        }
        scale.push(mag.sqrt().recip());
    }
    let scaled = DMatrix::from_fn(d, d, |a, c| q[(a, c)] * scale[a] * scale[c]);
    let sv = scaled.clone().svd(false, false).singular_values;
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let cond = max / min;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularOverlap(format!("overlap condition number {cond:e} exceeds {MAX_CONDITION:e}")));
    }
    let inv = scaled
        .full_piv_lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularOverlap("overlap matrix is not invertible".into()))?;
    Ok((DMatrix::from_fn(d, d, |a, c| inv[(a, c)] * scale[a] * scale[c]), cond))
}

/// Largest relative defect of `(F_M - F_N) W_NM = (E_M - E_N) Q_NM` over `M ≠ N`.
pub fn biorthogonality_residual(basis: &BasisSet) -> f64 {
    let d = basis.dim();
    let mut worst = 0.0f64;
    for n in 0..d {
        for m in 0..d {
            if m == n {
                continue;
            }
            let lhs = (basis.charges[m] - basis.charges[n]) * basis.w[(n, m)];
            let rhs = (basis.energies[m] - basis.energies[n]) * basis.q[(n, m)];
            let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
            worst = worst.max((lhs - rhs).norm() / scale);
        }
    }
    worst
}

/// `H_NM(F) = (F - F_M) W_NM + E_M Q_NM`.
pub fn hamiltonian_matrix(basis: &BasisSet, f: f64) -> DMatrix<Complex64> {
    let d = basis.dim();
    DMatrix::from_fn(d, d, |n, m| (f - basis.charges[m]) * basis.w[(n, m)] + basis.energies[m] * basis.q[(n, m)])
}

#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub charge: f64,
    /// `M(F) = diag(F - F_N) W̃ R + diag(E_N)`.
    pub matrix: DMatrix<Complex64>,
    /// `diag(F - F_N) W̃ R`, the charge-dependent part.
    pub charge_part: DMatrix<Complex64>,
    /// Sorted by real part, ties by imaginary part.
    pub eigenvalues: Vec<Complex64>,
}

impl ReducedProblem {
    /// Right eigenvector `p` for an approximate eigenvalue, from the SVD null direction.
    pub fn components(&self, eigenvalue: Complex64) -> Vec<Complex64> {
        let d = self.matrix.nrows();
        let shifted = &self.matrix - DMatrix::<Complex64>::identity(d, d) * eigenvalue;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        (0..d).map(|k| v_t[(idx, k)].conj()).collect()
    }

    /// Smallest singular value of `M - E·1`, relative to `‖M‖_2`.
    pub fn eigen_residual(&self, e: f64) -> f64 {
        let d = self.matrix.nrows();
        let shifted = &self.matrix - DMatrix::<Complex64>::identity(d, d) * Complex64::new(e, 0.0);
        let min = shifted.singular_values().iter().fold(f64::INFINITY, |m, &s| m.min(s));
        let norm = self.matrix.singular_values().iter().fold(0.0f64, |m, &s| m.max(s));
        min / norm.max(f64::MIN_POSITIVE)
    }
}

/// Assembles and diagonalizes the reduced problem at charge `F`, with the
/// off-diagonal `W` replaced through the biorthogonality identity.
pub fn reduced_problem(basis: &BasisSet, f: f64) -> ReducedProblem {
    let d = basis.dim();
    let w_tilde = DMatrix::from_fn(d, d, |n, k| {
        if n == k {
            basis.t[n]
        } else {
            (basis.energies[n] - basis.energies[k]) / (basis.charges[n] - basis.charges[k]) * basis.q[(n, k)]
        }
    });
    let mut charge_part = w_tilde * &basis.r;
    for n in 0..d {
        let factor = Complex64::new(f - basis.charges[n], 0.0);
        charge_part.row_mut(n).iter_mut().for_each(|z| *z *= factor);
    }
    let mut matrix = charge_part.clone();
    for n in 0..d {
        matrix[(n, n)] += basis.energies[n];
    }
    let mut eigenvalues: Vec<Complex64> = matrix.clone().eigenvalues().map_or_else(
        || matrix.clone().schur().unpack().1.diagonal().iter().copied().collect(),
        |v| v.iter().copied().collect(),
    );
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ReducedProblem { charge: f, matrix, charge_part, eigenvalues }
}
