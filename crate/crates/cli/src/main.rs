//! `affeq`: decide, check and certify affine equivalence of two
//! bar-and-joint frameworks from their bar lengths.
//!
//! Exit status: 0 YES / pass, 1 NO / fail, 2 UNKNOWN, 64 input error,
//! 70 internal inconsistency.

mod input;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affeq::cm::normalized_cmd;
use affeq::smt::{assignment_from_model, export_smt, parse_model};
use affeq::{
    affine_from_simplex, check_assignment, cmd, distances_of, embed, find_base_simplex, menger_check, solve,
    solve_fixed_left, verify_frameworks, AffineMap, Assignment, Configuration, IndexSet, Instance, Rational, Scalar,
    SearchBudget, SquaredDistanceMatrix, Tolerance, Verdict, VerdictKind,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use input::{load_configuration, load_instance, InputError, InstanceFile};
use report::{CheckReport, CmdReport, EmbedReport, MapRow, SolveReport, SweepReport, VerifyReport};

#[derive(Parser)]
#[command(name = "affeq", version, about = "Affine equivalence of bar-and-joint frameworks with prescribed lengths")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the dimension given in the instance file.
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Compute with exact rationals instead of floats where possible.
    #[arg(long, global = true)]
    exact: bool,

    /// Relative tolerance for float zero tests.
    #[arg(long, global = true, value_name = "REL")]
    tol_rel: Option<f64>,

    /// Number of search restarts.
    #[arg(long, global = true)]
    restarts: Option<usize>,

    /// Search seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the instance admits an affine-equivalent pair.
    Solve {
        instance: PathBuf,
        /// Try every dimension from 1 to d; YES if any dimension works.
        #[arg(long, conflicts_with = "fixed_left")]
        all_dims: bool,
        /// Pin the left framework to the points in this file.
        #[arg(long, value_name = "CONFIG")]
        fixed_left: Option<PathBuf>,
    },
    /// Check a candidate assignment against the condition system.
    Check {
        instance: PathBuf,
        /// Take the assignment from a `solve` report.
        #[arg(long, conflicts_with = "model")]
        certificate: Option<PathBuf>,
        /// Take the free variables from an SMT model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Left framework used to fill in left squared distances for `--model`.
        #[arg(long, value_name = "CONFIG")]
        fixed_left: Option<PathBuf>,
    },
    /// Verify two frameworks against the instance.
    Verify {
        instance: PathBuf,
        #[arg(long, value_name = "CONFIG")]
        left: PathBuf,
        #[arg(long, value_name = "CONFIG")]
        right: PathBuf,
    },
    /// Embed a squared distance matrix.
    Embed { input: PathBuf },
    /// Cayley-Menger determinant over a subset.
    Cmd {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        subset: Vec<usize>,
        #[arg(long, value_enum, default_value_t = SideArg::Left)]
        side: SideArg,
    },
    /// Write the condition system as an SMT-LIB script.
    ExportSmt {
        instance: PathBuf,
        #[arg(long, value_name = "CONFIG")]
        fixed_left: Option<PathBuf>,
        /// Write to this file instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Pass,
    Fail,
    Unknown,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Unknown => 2,
        }
    }

    fn of(kind: VerdictKind) -> Self {
        match kind {
            VerdictKind::Yes => Outcome::Pass,
            VerdictKind::No => Outcome::Fail,
            VerdictKind::Unknown => Outcome::Unknown,
        }
    }

    fn pass_if(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

#[derive(Debug)]
enum CliError {
    Input(InputError),
    Library(affeq::Error),
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

impl From<affeq::Error> for CliError {
    fn from(e: affeq::Error) -> Self {
        CliError::Library(e)
    }
}

fn input_error(file: &Path, field: &str, message: impl Into<String>) -> CliError {
    CliError::Input(InputError { file: file.display().to_string(), line: None, field: field.into(), message: message.into() })
}

struct Settings {
    dim: Option<usize>,
    exact: bool,
    tol: Tolerance,
    budget: SearchBudget,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    let mut budget = SearchBudget::default();
    if let Some(r) = cli.restarts {
        budget.restarts = r;
    }
    if let Some(s) = cli.seed {
        budget.seed = s;
    }
    let tol = match cli.tol_rel {
        Some(rel) if rel.is_finite() && rel > 0.0 => Tolerance::with_rel(rel),
        Some(_) => {
            eprintln!("error: --tol-rel must be a positive number");
            return ExitCode::from(64);
        }
        None => Tolerance::default(),
    };
    let settings = Settings { dim: cli.dim, exact: cli.exact, tol, budget };
    match run(&cli.command, &settings) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(CliError::Input(e)) => {
            eprintln!("input error: {e}");
            ExitCode::from(64)
        }
        Err(CliError::Library(affeq::Error::Inconsistent(msg))) => {
            eprintln!("internal inconsistency: {msg}");
            ExitCode::from(70)
        }
        Err(CliError::Library(e)) => {
            eprintln!("input error: {e}");
            ExitCode::from(64)
        }
    }
}

/// Writes to stdout; a closed pipe is not an error worth reporting.
fn write_out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit<T: Serialize>(report: &T) {
    write_out(&(serde_json::to_string_pretty(report).expect("reports serialize") + "\n"));
}

fn run(command: &Command, s: &Settings) -> Result<Outcome, CliError> {
    match command {
        Command::Solve { instance, all_dims, fixed_left } => {
            let file = load_instance(instance)?;
            let inst = build_instance(&file, instance, s.dim)?;
            let left = match fixed_left {
                Some(p) => Some(configuration(load_configuration(p)?, p, inst.dim())?),
                None => file.fixed_left.clone().map(|pts| configuration(pts, instance, inst.dim())).transpose()?,
            };
            if *all_dims {
                if left.is_some() {
                    return Err(input_error(instance, "fixed_left", "--all-dims cannot be combined with a fixed left framework"));
                }
                return sweep(&inst, s);
            }
            let verdict = decide(&inst, left.as_ref(), s)?;
            emit(&SolveReport::new(&verdict, inst.n(), inst.dim(), s.exact));
            Ok(Outcome::of(verdict.kind))
        }
        Command::Check { instance, certificate, model, fixed_left } => {
            let file = load_instance(instance)?;
            let inst = build_instance(&file, instance, s.dim)?;
            let (assignment, source) = if let Some(p) = certificate {
                (assignment_from_certificate(p, inst.n())?, "certificate")
            } else if let Some(p) = model {
                let text = std::fs::read_to_string(p).map_err(|e| input_error(p, "file", e.to_string()))?;
                let values = parse_model(&text).map_err(|e| input_error(p, "model", e.to_string()))?;
                let left = match fixed_left {
                    Some(f) => Some(configuration(load_configuration(f)?, f, inst.dim())?),
                    None => file.fixed_left.clone().map(|pts| configuration(pts, instance, inst.dim())).transpose()?,
                };
                let a = assignment_from_model(&inst, &values, left.as_ref()).map_err(|e| input_error(p, "model", e.to_string()))?;
                (a, "model")
            } else if let Some((z, zp, alpha)) = &file.assignment {
                let a = Assignment {
                    z: SquaredDistanceMatrix::candidate(z.clone())?,
                    z_prime: SquaredDistanceMatrix::candidate(zp.clone())?,
                    alpha: alpha.clone(),
                };
                (a, "assignment")
            } else {
                return Err(input_error(instance, "assignment", "no assignment: give [assignment], --certificate or --model"));
            };
            if assignment.z.n() != inst.n() {
                return Err(input_error(instance, "assignment", format!("expected {0}x{0} matrices", inst.n())));
            }
            let report = if s.exact {
                check_assignment(&inst, &assignment, &s.tol)?
            } else {
                check_assignment(&inst.to_f64(), &assignment.map(Scalar::as_f64), &s.tol)?
            };
            emit(&CheckReport { command: "check".into(), source: source.into(), body: (&report).into() });
            Ok(Outcome::pass_if(report.passed))
        }
        Command::Verify { instance, left, right } => {
            let file = load_instance(instance)?;
            let inst = build_instance(&file, instance, s.dim)?.to_f64();
            let p = configuration(load_configuration(left)?, left, inst.dim())?.map(Scalar::as_f64);
            let pp = configuration(load_configuration(right)?, right, inst.dim())?.map(Scalar::as_f64);
            for (c, path) in [(&p, left), (&pp, right)] {
                if c.len() != inst.n() {
                    return Err(input_error(path, "points", format!("expected {} points", inst.n())));
                }
            }
            let map = match find_base_simplex(&distances_of(&p), inst.dim(), &s.tol) {
                Ok(base) => {
                    let pick = |c: &Configuration<f64>| base.iter().map(|i| c.point(i).to_vec()).collect::<Vec<_>>();
                    affine_from_simplex(&pick(&p), &pick(&pp))?
                }
                Err(_) => AffineMap::identity(inst.dim()),
            };
            let report = verify_frameworks(&inst, &p, &pp, &map, &s.tol)?;
            let map_row = MapRow { linear: map.linear.to_rows(), translation: map.translation.clone(), det: map.det() };
            emit(&VerifyReport { command: "verify".into(), map: map_row, body: (&report).into() });
            Ok(Outcome::pass_if(report.passed))
        }
        Command::Embed { input } => {
            let file = load_instance(input)?;
            let d = s.dim.or(file.dimension).ok_or_else(|| input_error(input, "dimension", "missing"))?;
            let rows = file
                .squared_distances
                .clone()
                .ok_or_else(|| input_error(input, "squared_distances", "missing"))?;
            let z = SquaredDistanceMatrix::from_rows(rows).map_err(|e| input_error(input, "squared_distances", e.to_string()))?;
            let menger = if s.exact { menger_check(&z, d, &s.tol)? } else { menger_check(&z.map(Scalar::as_f64), d, &s.tol)? };
            let embedding = if menger.passes { Some(embed(&z.map(Scalar::as_f64), d, &s.tol)?) } else { None };
            let report = EmbedReport::new(d, &menger, embedding.as_ref());
            emit(&report);
            Ok(Outcome::pass_if(report.passed))
        }
        Command::Cmd { input, subset, side } => {
            let file = load_instance(input)?;
            let (z, side_name) = cmd_matrix(&file, input, subset, *side)?;
            let set = IndexSet::new(subset.clone()).map_err(|e| input_error(input, "subset", e.to_string()))?;
            let (value, approx) = if s.exact {
                let v = cmd(&z, &set)?;
                (v.to_string(), v.as_f64())
            } else {
                let v = cmd(&z.map(Scalar::as_f64), &set)?;
                (v.to_string(), v)
            };
            let normalized = normalized_cmd(&z.map(Scalar::as_f64), &set)?;
            emit(&CmdReport {
                command: "cmd".into(),
                subset: set.as_slice().to_vec(),
                side: side_name.into(),
                value,
                approx,
                normalized,
            });
            Ok(Outcome::Pass)
        }
        Command::ExportSmt { instance, fixed_left, output } => {
            let file = load_instance(instance)?;
            let inst = build_instance(&file, instance, s.dim)?;
            let left = match fixed_left {
                Some(p) => Some(configuration(load_configuration(p)?, p, inst.dim())?),
                None => file.fixed_left.clone().map(|pts| configuration(pts, instance, inst.dim())).transpose()?,
            };
            let text = export_smt(&inst, left.as_ref())?;
            match output {
                Some(path) => std::fs::write(path, text).map_err(|e| input_error(path, "output", e.to_string()))?,
                None => write_out(&text),
            }
            Ok(Outcome::Pass)
        }
    }
}

fn build_instance(file: &InstanceFile, path: &Path, dim: Option<usize>) -> Result<Instance<Rational>, CliError> {
    let d = dim.or(file.dimension).ok_or_else(|| input_error(path, "dimension", "missing (set it in the file or pass --dim)"))?;
    let inferred = file
        .edges
        .iter()
        .map(|e| e.0.max(e.1) + 1)
        .chain(file.fixed_left.as_ref().map(Vec::len))
        .chain(file.assignment.as_ref().map(|a| a.0.len()))
        .max()
        .unwrap_or(0);
    let n = file.vertices.unwrap_or(inferred);
    Instance::from_tuples(n, d, file.edges.clone()).map_err(|e| input_error(path, "edges", e.to_string()))
}

fn configuration(points: Vec<Vec<Rational>>, path: &Path, d: usize) -> Result<Configuration<Rational>, CliError> {
    Configuration::new(d, points).map_err(|e| input_error(path, "points", e.to_string()))
}

fn decide(inst: &Instance<Rational>, left: Option<&Configuration<Rational>>, s: &Settings) -> Result<Verdict, CliError> {
    Ok(match (left, s.exact) {
        (Some(p), true) => solve_fixed_left(inst, p, &s.budget, &s.tol)?,
        (Some(p), false) => solve_fixed_left(&inst.to_f64(), &p.map(Scalar::as_f64), &s.budget, &s.tol)?,
        (None, true) => solve(inst, &s.budget, &s.tol)?,
        (None, false) => solve(&inst.to_f64(), &s.budget, &s.tol)?,
    })
}

fn sweep(inst: &Instance<Rational>, s: &Settings) -> Result<Outcome, CliError> {
    let mut per_dimension = Vec::new();
    let mut kinds = Vec::new();
    for m in 1..=inst.dim() {
        let sub = inst.with_dimension(m)?;
        let verdict = decide(&sub, None, s)?;
        kinds.push(verdict.kind);
        per_dimension.push(SolveReport::new(&verdict, sub.n(), m, s.exact));
    }
    let overall = if kinds.contains(&VerdictKind::Yes) {
        VerdictKind::Yes
    } else if kinds.iter().all(|k| *k == VerdictKind::No) {
        VerdictKind::No
    } else {
        VerdictKind::Unknown
    };
    emit(&SweepReport { command: "solve".into(), verdict: overall.name().into(), dimension: inst.dim(), per_dimension });
    Ok(Outcome::of(overall))
}

fn assignment_from_certificate(path: &Path, n: usize) -> Result<Assignment<Rational>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, "file", e.to_string()))?;
    let report: SolveReport = serde_json::from_str(&text).map_err(|e| {
        CliError::Input(InputError {
            file: path.display().to_string(),
            line: Some(e.line()),
            field: "report".into(),
            message: e.to_string(),
        })
    })?;
    let cert = report.certificate.ok_or_else(|| input_error(path, "certificate", "report carries no certificate"))?;
    let exact = |rows: Vec<Vec<f64>>| -> Result<SquaredDistanceMatrix<Rational>, CliError> {
        if rows.len() != n {
            return Err(input_error(path, "certificate", format!("expected {n}x{n} matrices")));
        }
        SquaredDistanceMatrix::candidate(rows.into_iter().map(|r| r.iter().map(Scalar::to_rational).collect()).collect())
            .map_err(|e| input_error(path, "certificate", e.to_string()))
    };
    Ok(Assignment { z: exact(cert.z)?, z_prime: exact(cert.z_prime)?, alpha: cert.alpha.to_rational() })
}

/// Matrix for `cmd`: an explicit distance matrix, else the assignment's side,
/// else the pinned lengths of an all-edge subset.
fn cmd_matrix(
    file: &InstanceFile,
    path: &Path,
    subset: &[usize],
    side: SideArg,
) -> Result<(SquaredDistanceMatrix<Rational>, &'static str), CliError> {
    let name = match side {
        SideArg::Left => "left",
        SideArg::Right => "right",
    };
    if let Some(rows) = &file.squared_distances {
        let z = SquaredDistanceMatrix::candidate(rows.clone()).map_err(|e| input_error(path, "squared_distances", e.to_string()))?;
        return Ok((z, "matrix"));
    }
    if let Some((z, zp, _)) = &file.assignment {
        let rows = match side {
            SideArg::Left => z,
            SideArg::Right => zp,
        };
        let z = SquaredDistanceMatrix::candidate(rows.clone()).map_err(|e| input_error(path, "assignment", e.to_string()))?;
        return Ok((z, name));
    }
    let n = file.edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0).max(file.vertices.unwrap_or(0));
    let mut rows = vec![vec![Rational::from_integer(0.into()); n]; n];
    for (i, j, l, lp) in &file.edges {
        let len = match side {
            SideArg::Left => l,
            SideArg::Right => lp,
        };
        rows[*i][*j] = len * len;
        rows[*j][*i] = len * len;
    }
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            if i == j || !file.edges.iter().any(|e| (e.0, e.1) == (i, j) || (e.0, e.1) == (j, i)) {
                return Err(input_error(path, "subset", format!("pair ({i}, {j}) is not an edge and no matrix was given")));
            }
        }
    }
    let z = SquaredDistanceMatrix::candidate(rows).map_err(|e| input_error(path, "edges", e.to_string()))?;
    Ok((z, name))
}
