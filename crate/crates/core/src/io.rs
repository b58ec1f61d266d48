//! Machine-readable export formats. Field layouts are documented in
//! `schemas/` next to this crate.
//!
//! CSV numbers are written with 17 significant digits; JSON numbers use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{biorthogonality_residual, BasisSet, ReducedProblem};
use crate::error::{Error, Result};
use crate::model::{energy, ModelParams, QuasiParity};
use crate::secular::ChargeSpectrum;
use crate::verify::{ResidualReport, ShootingResult};
use crate::wavefun::QesState;

/// `x` with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub parity: QuasiParity,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub b: f64,
    pub epsilon: f64,
    pub branch: usize,
    #[serde(rename = "F")]
    pub charge: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub h: Vec<f64>,
}

impl From<&QesState> for StateDump {
    fn from(s: &QesState) -> Self {
        Self {
            parity: s.parity,
            n: s.n,
            l: s.params.l,
            b: s.params.b,
            epsilon: s.params.epsilon,
            branch: s.branch,
            charge: s.charge,
            energy: s.energy,
            h: s.coeffs.clone(),
        }
    }
}

impl StateDump {
    /// Rebuilds the state, checking that the record is self-consistent.
    pub fn into_state(self) -> Result<QesState> {
        let params = ModelParams::new(self.l, self.b, self.epsilon)?;
        if self.h.len() != self.n + 1 {
            return Err(Error::InvalidParameter {
                name: "h",
                reason: format!("expected N + 1 = {} coefficients, got {}", self.n + 1, self.h.len()),
            });
        }
        let e = energy(self.parity, self.n, &params);
        if e != self.energy {
            return Err(Error::InvalidParameter {
                name: "E",
                reason: format!("record has E = {}, but (parity, N, L, b) fixes E = {e}", self.energy),
            });
        }
        Ok(QesState {
            parity: self.parity,
            n: self.n,
            params,
            branch: self.branch,
            charge: self.charge,
            energy: self.energy,
            coeffs: self.h,
        })
    }
}

pub fn state_to_json(state: &QesState) -> String {
    serde_json::to_string_pretty(&StateDump::from(state)).expect("state dump is serializable")
}

pub fn state_from_json(text: &str) -> Result<QesState> {
    serde_json::from_str::<StateDump>(text)?.into_state()
}

/// `x,re_psi,im_psi` on `points` equally spaced nodes of `[-x_max, x_max]`.
pub fn psi_csv(state: &QesState, x_max: f64, points: usize) -> String {
    let mut out = String::from("x,re_psi,im_psi\n");
    let points = points.max(2);
    for k in 0..points {
        let x = -x_max + 2.0 * x_max * k as f64 / (points - 1) as f64;
        let psi = state.psi(x);
        writeln!(out, "{},{},{}", fmt17(x), fmt17(psi.re), fmt17(psi.im)).expect("string write");
    }
    out
}

/// One `(parity, N, L, b)` row of the charges table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeRow {
    pub parity: QuasiParity,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub b: f64,
    pub charges: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub dim: usize,
    pub reality_ok: bool,
    /// `None` when the solver path did not measure imaginary parts.
    pub max_imag: Option<f64>,
}

impl ChargeRow {
    pub fn new(parity: QuasiParity, n: usize, params: &ModelParams, s: &ChargeSpectrum) -> Self {
        Self {
            parity,
            n,
            l: params.l,
            b: params.b,
            charges: s.charges.clone(),
            multiplicities: s.multiplicities.clone(),
            dim: s.dim,
            reality_ok: s.reality_ok,
            max_imag: s.max_imag.is_finite().then_some(s.max_imag),
        }
    }
}

/// Long format, one line per charge.
pub fn charges_csv(rows: &[ChargeRow]) -> String {
    let mut out = String::from("parity,N,L,b,index,F,multiplicity,reality_ok\n");
    for r in rows {
        for (k, (f, m)) in r.charges.iter().zip(&r.multiplicities).enumerate() {
            writeln!(out, "{},{},{},{},{k},{},{m},{}", r.parity, r.n, r.l, fmt17(r.b), fmt17(*f), r.reality_ok)
                .expect("string write");
        }
    }
    out
}

pub fn charges_json(rows: &[ChargeRow]) -> String {
    serde_json::to_string_pretty(rows).expect("charge rows are serializable")
}

/// `{state, max_abs, scale, mismatch, passed}` for one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub state: StateDump,
    pub max_abs: f64,
    pub scale: f64,
    pub residual_passed: bool,
    pub mismatch: Option<f64>,
    pub shooting_converged: bool,
    pub match_x: Option<f64>,
    pub ghost_residual: f64,
    pub passed: bool,
    pub error: Option<String>,
}

impl VerifyRecord {
    pub fn new(
        state: &QesState,
        residual: &ResidualReport,
        shooting: std::result::Result<&ShootingResult, String>,
        ghost_tol: f64,
    ) -> Self {
        let ghost = state.ghost_residual().relative();
        let (mismatch, converged, match_x, error) = match shooting {
            Ok(s) => (Some(s.mismatch), s.converged, Some(s.match_x), None),
            Err(e) => (None, false, None, Some(e)),
        };
        Self {
            state: state.into(),
            max_abs: residual.max_abs,
            scale: residual.scale,
            residual_passed: residual.passed,
            mismatch,
            shooting_converged: converged,
            match_x,
            ghost_residual: ghost,
            passed: residual.passed && converged && ghost <= ghost_tol,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDump {
    #[serde(rename = "L")]
    pub l: u32,
    pub b: f64,
    pub epsilon: f64,
    pub branch: usize,
    #[serde(rename = "N_min")]
    pub n_min: usize,
    /// The basis holds `size + 1` states.
    pub size: usize,
    pub charges: Vec<f64>,
    pub energies: Vec<f64>,
    /// `[re, im]` pairs, row-major.
    #[serde(rename = "Q")]
    pub q: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<[f64; 2]>>,
    pub pseudo_norm_signs: Vec<f64>,
    #[serde(rename = "cond_Q")]
    pub cond_q: f64,
    pub quad_delta: f64,
    pub biorthogonality_residual: f64,
}

fn matrix_pairs(m: &nalgebra::DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|a| (0..m.ncols()).map(|c| [m[(a, c)].re, m[(a, c)].im]).collect()).collect()
}

impl From<&BasisSet> for BasisDump {
    fn from(b: &BasisSet) -> Self {
        Self {
            l: b.params.l,
            b: b.params.b,
            epsilon: b.params.epsilon,
            branch: b.branch,
            n_min: b.n_min,
            size: b.size,
            charges: b.charges.clone(),
            energies: b.energies.clone(),
            q: matrix_pairs(&b.q),
            w: matrix_pairs(&b.w),
            pseudo_norm_signs: b.pseudo_norm_signs(),
            cond_q: b.cond_q,
            quad_delta: b.quad_delta,
            biorthogonality_residual: biorthogonality_residual(b),
        }
    }
}

pub fn basis_json(basis: &BasisSet) -> String {
    serde_json::to_string_pretty(&BasisDump::from(basis)).expect("basis dump is serializable")
}

/// `F,E0_re,E0_im,E1_re,E1_im,...`, one line per charge.
pub fn sweep_csv(problems: &[ReducedProblem]) -> String {
    let width = problems.iter().map(|p| p.eigenvalues.len()).max().unwrap_or(0);
    let mut out = String::from("F");
    for k in 0..width {
        write!(out, ",E{k}_re,E{k}_im").expect("string write");
    }
    out.push('\n');
    for p in problems {
        out.push_str(&fmt17(p.charge));
        for e in &p.eigenvalues {
            write!(out, ",{},{}", fmt17(e.re), fmt17(e.im)).expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, reduced_problem};

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [std::f64::consts::PI, -1.0 / 3.0, 1e-300, 123456789.123456789, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn state_json_round_trips_losslessly() {
        let p = ModelParams::new(3, 5.0, 0.75).unwrap();
        for parity in [QuasiParity::Even, QuasiParity::Odd] {
            let s = QesState::solve(parity, 7, p, 0).unwrap();
            let back = state_from_json(&state_to_json(&s)).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn loader_rejects_inconsistent_records() {
        let p = ModelParams::with_default_contour(2, 1.0).unwrap();
        let s = QesState::solve(QuasiParity::Even, 3, p, 1).unwrap();
        let mut dump = StateDump::from(&s);
        dump.energy += 1.0;
        assert!(dump.clone().into_state().is_err());
        dump.energy = s.energy;
        dump.h.pop();
        assert!(dump.into_state().is_err());
        assert!(state_from_json("{\"parity\": \"sideways\"}").is_err());
    }

    #[test]
    fn psi_grid_has_header_and_rows() {
        let p = ModelParams::with_default_contour(2, 0.0).unwrap();
        let s = QesState::solve(QuasiParity::Even, 1, p, 1).unwrap();
        let csv = psi_csv(&s, 4.0, 9);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,re_psi,im_psi");
        assert_eq!(lines.len(), 10);
        let mid: Vec<f64> = lines[5].split(',').map(|v| v.parse().unwrap()).collect();
        let psi = s.psi(0.0);
        assert_eq!((mid[0], mid[1], mid[2]), (0.0, psi.re, psi.im));
    }

    #[test]
    fn charges_table_formats() {
        let p = ModelParams::with_default_contour(2, 5.0).unwrap();
        let s = crate::secular::charges(QuasiParity::Even, 2, &p).unwrap();
        let rows = vec![ChargeRow::new(QuasiParity::Even, 2, &p, &s)];
        let csv = charges_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("even,2,2,"));
        let back: Vec<ChargeRow> = serde_json::from_str(&charges_json(&rows)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn basis_dump_and_sweep() {
        let b = build_basis(2, 1.0, 1.0, None, 1, 3, None).unwrap();
        let dump: BasisDump = serde_json::from_str(&basis_json(&b)).unwrap();
        assert_eq!(dump.charges, b.charges);
        assert_eq!(dump.q.len(), 4);
        assert_eq!(dump.q[1][2], [b.q[(1, 2)].re, b.q[(1, 2)].im]);
        let problems: Vec<_> = [0.5, 1.0, 1.5].iter().map(|&f| reduced_problem(&b, f)).collect();
        let csv = sweep_csv(&problems);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 1 + 2 * 4);
    }
}
