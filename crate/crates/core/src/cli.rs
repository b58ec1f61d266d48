//! The `qes` command line.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure
//! (complex charges, oracle or quadrature failure), 4 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::basis::{biorthogonality_residual, build_basis, reduced_problem, QUADRATURE_TOL};
use crate::error::Error;
use crate::io::{self, ChargeRow, VerifyRecord};
use crate::model::{ModelParams, QuasiParity, DEFAULT_EPSILON};
use crate::secular::charges;
use crate::verify::suite::{run_suite, SuiteReport, DEFAULT_CASES, DEFAULT_SEED, GHOST_TOL};
use crate::verify::{hamiltonian_residual, shoot_state, DEFAULT_RESIDUAL_TOL};
use crate::wavefun::QesState;

pub const OUT_DIR_ENV: &str = "QES_OUT_DIR";
pub const TABLE1_N: [usize; 8] = [3, 30, 100, 200, 300, 1000, 3000, 30000];
pub const TABLE1_L: u32 = 4;
pub const TABLE1_B: f64 = 5.0;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qes", version, about = "QES charges, states and basis computations on a complex contour")]
pub struct Cli {
    /// Directory for outputs when --out is not given.
    #[arg(long = "out-dir", env = OUT_DIR_ENV, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigencharges for one or more degrees N.
    Charges(ChargesArgs),
    /// One state, checked by both oracles.
    State(StateArgs),
    /// Basis of quasi-even states and the E(F) sweep of the reduced problem.
    Basis(BasisArgs),
    /// Seeded randomized oracle suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Index(usize),
    Largest,
    Smallest,
}

fn parse_branch(s: &str) -> Result<Branch, String> {
    match s {
        "+" | "max" | "largest" => Ok(Branch::Largest),
        "-" | "min" | "smallest" => Ok(Branch::Smallest),
        _ => s.parse().map(Branch::Index).map_err(|_| format!("expected an index, '+' or '-', got '{s}'")),
    }
}

/// Inclusive `a..b` or `a:b`.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("expected 'a..b', got '{s}'"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start '{a}'"))?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range end '{b}'"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long = "L")]
    pub l: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
}

impl ModelArgs {
    fn params(&self, default_l: u32, default_b: f64) -> Result<ModelParams, Error> {
        ModelParams::new(self.l.unwrap_or(default_l), self.b.unwrap_or(default_b), self.epsilon)
    }
}

#[derive(Debug, Args)]
pub struct ChargesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "N", conflicts_with = "n_range")]
    pub n: Option<usize>,
    #[arg(long = "N-range", value_parser = parse_range)]
    pub n_range: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value = "even")]
    pub parity: ParityArg,
    /// Reproduce the published table: L = 4, b = 5, N ∈ {3, 30, ..., 30000}.
    #[arg(long, conflicts_with_all = ["n", "n_range"])]
    pub table1: bool,
    #[arg(long = "allow-complex")]
    pub allow_complex: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParityArg {
    Even,
    Odd,
}

impl From<ParityArg> for QuasiParity {
    fn from(p: ParityArg) -> Self {
        match p {
            ParityArg::Even => QuasiParity::Even,
            ParityArg::Odd => QuasiParity::Odd,
        }
    }
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, value_enum, default_value = "even")]
    pub parity: ParityArg,
    #[arg(long, value_parser = parse_branch, default_value = "+")]
    pub branch: Branch,
    /// Use this charge instead of the branch eigencharge.
    #[arg(long = "F", allow_hyphen_values = true)]
    pub charge: Option<f64>,
    /// json: state and oracle report; csv: the (x, ψ) grid.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the (x, ψ) grid here.
    #[arg(long)]
    pub psi: Option<PathBuf>,
    #[arg(long = "x-max", default_value_t = 8.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Degrees of the basis states, inclusive (default L-1 .. L+5).
    #[arg(long = "N-range", value_parser = parse_range, conflicts_with = "size")]
    pub n_range: Option<(usize, usize)>,
    /// Basis size: degrees L-1 .. L-1+size.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_parser = parse_branch, default_value = "+")]
    pub branch: Branch,
    /// Number of charges in the E(F) sweep.
    #[arg(long = "F-points", default_value_t = 50)]
    pub f_points: usize,
    #[arg(long = "F-min", allow_hyphen_values = true)]
    pub f_min: Option<f64>,
    #[arg(long = "F-max", allow_hyphen_values = true)]
    pub f_max: Option<f64>,
    /// json: basis dump; csv: the E(F) sweep.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the E(F) sweep here.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long = "n-cases", default_value_t = DEFAULT_CASES)]
    pub n_cases: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter { .. }
            | Error::DegreeTooSmall { .. }
            | Error::BranchOutOfRange { .. }
            | Error::DeterminantRouteRange { .. }
            | Error::DivisionByZeroCharge => Failure::Validation(msg),
            Error::ComplexChargesDetected { .. }
            | Error::NegativeRadicand(_)
            | Error::QuadratureNotConverged { .. }
            | Error::SingularOverlap(_)
            | Error::NonConvergent { .. } => Failure::Numerical(msg),
            Error::Io(_) | Error::Json(_) => Failure::Io(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Output<'a> {
    stdout: &'a mut dyn Write,
    out_dir: Option<PathBuf>,
}

impl Output<'_> {
    /// Writes to `--out`, else to `$QES_OUT_DIR/default_name`, else to stdout.
    fn emit(&mut self, out: Option<&Path>, default_name: &str, text: &str) -> Outcome {
        let path = out.map(Path::to_path_buf).or_else(|| self.out_dir.as_ref().map(|d| d.join(default_name)));
        match path {
            Some(p) => write_file(&p, text),
            None => self.stdout.write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string())),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn resolve_branch(branch: Branch, available: usize) -> Result<usize, Error> {
    match branch {
        Branch::Index(k) if k < available => Ok(k),
        Branch::Index(k) => Err(Error::BranchOutOfRange { branch: k, available }),
        _ if available == 0 => Err(Error::BranchOutOfRange { branch: 0, available }),
        Branch::Largest => Ok(available - 1),
        Branch::Smallest => Ok(0),
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cmd_charges(args: &ChargesArgs, out: &mut Output) -> Outcome {
    let (params, parity, degrees): (ModelParams, QuasiParity, Vec<usize>) = if args.table1 {
        (ModelParams::new(TABLE1_L, TABLE1_B, args.model.epsilon)?, QuasiParity::Even, TABLE1_N.to_vec())
    } else {
        let degrees = match (args.n, args.n_range) {
            (Some(n), _) => vec![n],
            (None, Some((a, b))) => (a..=b).collect(),
            (None, None) => return Err(Failure::Validation("one of --N, --N-range or --table1 is required".into())),
        };
        let b = args.model.b.ok_or_else(|| Failure::Validation("--b is required".into()))?;
        (args.model.params(args.model.l.unwrap_or(2), b)?, args.parity.into(), degrees)
    };
    let rows: Vec<Result<ChargeRow, Error>> = degrees
        .par_iter()
        .map(|&n| charges(parity, n, &params).map(|s| ChargeRow::new(parity, n, &params, &s)))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    if !args.allow_complex {
        if let Some(r) = rows.iter().find(|r| !r.reality_ok) {
            let found = r.multiplicities.iter().sum();
            return Err(Error::ComplexChargesDetected { found, dim: r.dim, max_imag: r.max_imag.unwrap_or(f64::NAN) }
                .into());
        }
    }
    let text = match args.format {
        Format::Csv => io::charges_csv(&rows),
        Format::Json => io::charges_json(&rows) + "\n",
    };
    out.emit(args.out.as_deref(), &format!("charges.{}", ext(args.format)), &text)
}

fn cmd_state(args: &StateArgs, out: &mut Output) -> Outcome {
    let b = args.model.b.ok_or_else(|| Failure::Validation("--b is required".into()))?;
    let l = args.model.l.ok_or_else(|| Failure::Validation("--L is required".into()))?;
    let params = ModelParams::new(l, b, args.model.epsilon)?;
    let parity: QuasiParity = args.parity.into();
    if !(args.x_max > 0.0) || args.points < 2 {
        return Err(Failure::Validation("--x-max must be positive and --points at least 2".into()));
    }
    let spectrum = charges(parity, args.n, &params)?;
    let state = match args.charge {
        Some(f) => {
            let branch = resolve_branch(args.branch, spectrum.charges.len()).unwrap_or(0);
            QesState::from_charge(parity, args.n, params, branch, f)
        }
        None => {
            let branch = resolve_branch(args.branch, spectrum.charges.len())?;
            QesState::from_charge(parity, args.n, params, branch, spectrum.charges[branch])
        }
    };
    let residual = hamiltonian_residual(&state, DEFAULT_RESIDUAL_TOL);
    let shooting = shoot_state(&state).map_err(|e| e.to_string());
    let record = VerifyRecord::new(&state, &residual, shooting.as_ref().map_err(Clone::clone), GHOST_TOL);

    if let Some(p) = &args.psi {
        write_file(p, &io::psi_csv(&state, args.x_max, args.points))?;
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&record).expect("record is serializable") + "\n",
        Format::Csv => io::psi_csv(&state, args.x_max, args.points),
    };
    out.emit(args.out.as_deref(), &format!("state.{}", ext(args.format)), &text)?;
    eprintln!(
        "state {} N={} L={} b={}: F={} E={} residual={:e} ghost={:e} mismatch={} -> {}",
        parity,
        state.n,
        l,
        b,
        state.charge,
        state.energy,
        residual.relative(),
        record.ghost_residual,
        record.mismatch.map_or_else(|| "n/a".to_string(), |m| format!("{m:e}")),
        if record.passed { "pass" } else { "FAIL" }
    );
    if record.passed {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "oracle check failed (relative residual {:e}, ghost residual {:e})",
            residual.relative(),
            record.ghost_residual
        )))
    }
}

fn cmd_basis(args: &BasisArgs, out: &mut Output) -> Outcome {
    let l = args.model.l.unwrap_or(2);
    let b = args.model.b.unwrap_or(1.0);
    if l < 2 {
        return Err(Failure::Validation(format!(
            "L = {l} has the single charge F = 0 for every N, a basis needs distinct charges (L >= 2)"
        )));
    }
    let n_min = l as usize - 1;
    let (n_min, n_max) = args.n_range.unwrap_or((n_min, n_min + args.size.unwrap_or(6)));
    if args.f_points == 0 {
        return Err(Failure::Validation("--F-points must be positive".into()));
    }
    let params = ModelParams::new(l, b, args.model.epsilon)?;
    let branch = match args.branch {
        Branch::Largest => None,
        Branch::Index(k) => Some(k),
        Branch::Smallest => Some(0),
    };
    if let Some(k) = branch {
        let available = charges(QuasiParity::Even, n_min, &params)?.charges.len();
        resolve_branch(Branch::Index(k), available)?;
    }
    let basis = build_basis(l, b, args.model.epsilon, branch, n_min, n_max - n_min, None)?;
    let residual = biorthogonality_residual(&basis);

    let lo = args.f_min.unwrap_or_else(|| basis.charges.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = args.f_max.unwrap_or_else(|| basis.charges.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let grid: Vec<f64> = if args.f_points == 1 {
        vec![lo]
    } else {
        (0..args.f_points).map(|k| lo + (hi - lo) * k as f64 / (args.f_points - 1) as f64).collect()
    };
    let problems: Vec<_> = grid.par_iter().map(|&f| reduced_problem(&basis, f)).collect();
    let sweep = io::sweep_csv(&problems);
    if let Some(p) = &args.sweep {
        write_file(p, &sweep)?;
    }
    let text = match args.format {
        Format::Csv => sweep,
        Format::Json => io::basis_json(&basis) + "\n",
    };
    let name = match args.format {
        Format::Csv => "sweep.csv",
        Format::Json => "basis.json",
    };
    out.emit(args.out.as_deref(), name, &text)?;
    eprintln!(
        "basis L={l} b={b} branch={} N={n_min}..{n_max}: cond_Q={:e} biorthogonality residual={residual:e} quadrature delta={:e}",
        basis.branch, basis.cond_q, basis.quad_delta
    );
    if residual <= 10.0 * QUADRATURE_TOL {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("biorthogonality residual {residual:e} exceeds {:e}", 10.0 * QUADRATURE_TOL)))
    }
}

fn suite_csv(report: &SuiteReport) -> String {
    let opt = |c: Option<crate::verify::suite::Check>| c.map_or_else(String::new, |c| io::fmt17(c.value));
    let mut text = String::from("parity,N,L,b,branch,F,E,residual,shooting,dual_route,ghost,factorization,passed\n");
    for c in &report.cases {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.case.parity,
            c.case.n,
            c.case.l,
            io::fmt17(c.case.b),
            c.case.branch,
            io::fmt17(c.charge),
            io::fmt17(c.energy),
            io::fmt17(c.residual.value),
            opt(c.shooting),
            opt(c.dual_route),
            io::fmt17(c.ghost.value),
            opt(c.factorization),
            c.passed
        ));
    }
    text
}

fn cmd_verify(args: &VerifyArgs, out: &mut Output) -> Outcome {
    if args.n_cases == 0 {
        return Err(Failure::Validation("--n-cases must be positive".into()));
    }
    let report = run_suite(args.seed, args.n_cases);
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("report is serializable") + "\n",
        Format::Csv => suite_csv(&report),
    };
    out.emit(args.out.as_deref(), &format!("verify.{}", ext(args.format)), &text)?;
    eprintln!(
        "verify seed={} cases={} eliminations={}: {} failed",
        report.seed,
        report.cases.len(),
        report.eliminations.len(),
        report.failed
    );
    match report.first_failure() {
        None => Ok(()),
        Some(f) => Err(Failure::Numerical(format!("first failure: {f}"))),
    }
}

/// Parses `args` (including the program name) and runs, returning the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut out = Output { stdout, out_dir: cli.out_dir.clone() };
    let result = match &cli.command {
        Command::Charges(a) => cmd_charges(a, &mut out),
        Command::State(a) => cmd_state(a, &mut out),
        Command::Basis(a) => cmd_basis(a, &mut out),
        Command::Verify(a) => cmd_verify(a, &mut out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
