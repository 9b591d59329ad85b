//! Command-line front end.
//!
//! Every command returns a [`CmdOutput`] instead of printing, so the binary
//! stays a thin shell and the commands can be driven from tests. Exit codes:
//! 0 ok, 2 input error, 3 numerical failure, 4 verification failure.

mod specfile;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

pub use specfile::{ContributionEntry, SpecError, SpecFile, StepEntry, SCHEMA_VERSION};

use crate::error::Error;
use crate::model::{HistoryMode, ProcessSpec, SamplePath, ValueType};
use crate::oracle::{
    fit_inar, inar_log_likelihood, simulate_paths, standard_zoo, verify_factorization, FitConfig, InnovationFamily,
    LikelihoodRoute, VerifyConfig, ZooModel,
};
use crate::solver::{correspondence_from, spa_joint, spa_stepwise, SolverConfig};
use crate::tilting::tilt_process;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CmdOutput {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl CmdOutput {
    fn fail(code: i32, msg: impl std::fmt::Display) -> Self {
        CmdOutput {
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
            code,
        }
    }
}

/// Exit code for a library error: bad input versus a numerical failure.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::DomainViolation { .. } | Error::Truncation(_) | Error::Inconsistent(_) | Error::Optimizer(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INPUT,
    }
}

fn from_error(e: Error) -> CmdOutput {
    CmdOutput::fail(exit_code_for(&e), e)
}

#[derive(Debug, Parser)]
#[command(
    name = "saddlepath",
    version,
    about = "Saddlepoint approximations for sample paths of recursively compounded processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint and stepwise SPA of one path, side by side.
    Spa(SpaArgs),
    /// Batch comparison of the two routes over many paths.
    Verify(VerifyArgs),
    /// Simulate paths to CSV.
    Simulate(SimulateArgs),
    /// Fit an INAR(p) model by maximizing the stepwise SPA likelihood.
    Fit(FitArgs),
    /// Tilt a process and report tilted means and relative entropies.
    TiltReport(TiltArgs),
}

#[derive(Debug, Args)]
pub struct SpaArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Path values `x_1 … x_N` flattened in block order, separated by spaces or commas.
    #[arg(long, allow_hyphen_values = true)]
    pub path: String,
    /// Bound on the relative gap between the two log SPAs.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Reject fractional or negative counts in step CGFs.
    #[arg(long)]
    pub strict_domains: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("models").required(true).args(["zoo", "spec_dir"])))]
pub struct VerifyArgs {
    /// Use the builtin model zoo.
    #[arg(long)]
    pub zoo: bool,
    /// Directory of `*.toml` spec files; each file is one model.
    #[arg(long)]
    pub spec_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub paths: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub strict_domains: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Test hook: perturbs one joint Hessian entry by this relative amount.
    #[arg(long, hide = true)]
    pub perturb_hessian: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One nonnegative integer per line.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// poisson, geometric or negative-binomial.
    #[arg(long, default_value = "poisson")]
    pub family: String,
    /// Seeds a small displacement of the starting point.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration best log-likelihood, as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("at").required(true).args(["tilt", "path"])))]
pub struct TiltArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Joint tilt `s`, flattened in block order.
    #[arg(long, allow_hyphen_values = true)]
    pub tilt: Option<String>,
    /// Tilt at the joint saddlepoint of this path instead.
    #[arg(long, allow_hyphen_values = true)]
    pub path: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CmdOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli.command),
        Err(e) => {
            let text = e.render().to_string();
            let code = e.exit_code();
            if code == 0 {
                CmdOutput {
                    stdout: text,
                    stderr: String::new(),
                    code,
                }
            } else {
                CmdOutput {
                    stdout: String::new(),
                    stderr: text,
                    code: EXIT_INPUT,
                }
            }
        }
    }
}

pub fn dispatch(cmd: &Command) -> CmdOutput {
    match cmd {
        Command::Spa(a) => cmd_spa(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::TiltReport(a) => cmd_tilt_report(a),
    }
}

/// 17 significant digits.
fn f17(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn mode(strict: bool) -> HistoryMode {
    if strict {
        HistoryMode::Strict
    } else {
        HistoryMode::Extension
    }
}

fn load_spec(path: &Path) -> Result<ProcessSpec, CmdOutput> {
    let text = fs::read_to_string(path).map_err(|e| CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    SpecFile::parse(&text)
        .and_then(|f| f.to_process())
        .map_err(|e| CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn parse_values(text: &str, what: &str) -> Result<Vec<f64>, CmdOutput> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CmdOutput::fail(EXIT_INPUT, format!("{what}: `{t}` is not a finite number")))
        })
        .collect()
}

fn parse_path(process: &ProcessSpec, text: &str) -> Result<SamplePath, CmdOutput> {
    let flat = parse_values(text, "--path")?;
    let path = process
        .path_from_flat(&flat)
        .map_err(|e| CmdOutput::fail(EXIT_INPUT, e))?;
    process.check_path(&path).map_err(|e| CmdOutput::fail(EXIT_INPUT, e))?;
    for (k, x) in path.values.iter().enumerate() {
        for (i, (v, t)) in x.iter().zip(process.value_types(k + 1)).enumerate() {
            if !t.admits(*v) {
                return Err(CmdOutput::fail(
                    EXIT_INPUT,
                    format!("--path: x[{}.{i}] = {v} is not a valid {t:?} value", k + 1),
                ));
            }
        }
    }
    Ok(path)
}

/// Sends `body` to `out` when given, to stdout otherwise.
fn emit(mut result: CmdOutput, body: String, out: Option<&Path>) -> CmdOutput {
    match out {
        Some(p) => {
            if let Err(e) = fs::write(p, body) {
                return CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", p.display()));
            }
        }
        None => result.stdout = body,
    }
    result
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(out) => return out,
        }
    };
}

/// Two-column report `quantity,stepwise,joint`. Per-coordinate rows carry
/// the stepwise saddlepoint `τ̂` next to `T(ŝ)` from the joint saddlepoint
/// and the joint `ŝ` itself.
pub fn cmd_spa(a: &SpaArgs) -> CmdOutput {
    let process = tri!(load_spec(&a.spec));
    let path = tri!(parse_path(&process, &a.path));
    let cfg = SolverConfig::default();
    let joint = match spa_joint(&process, &path, &cfg) {
        Ok(j) => j,
        Err(e) => return from_error(e),
    };
    let steps = match spa_stepwise(&process, &path, &cfg, mode(a.strict_domains)) {
        Ok(s) => s,
        Err(e) => return from_error(e),
    };
    let both = joint.status.is_converged() && steps.status.is_converged();
    let tau_joint = if both {
        match correspondence_from(&process, &joint, &steps) {
            Ok(c) => Some(c.tau_from_joint),
            Err(e) => return from_error(e),
        }
    } else {
        None
    };
    let rel_gap = match (steps.log_spa, joint.log_spa) {
        (Some(r), Some(l)) => Some((l - r).abs() / (1.0 + r.abs())),
        _ => None,
    };
    let opt = |v: Option<f64>| v.map_or("NaN".to_string(), f17);

    let mut body = String::from("quantity,stepwise,joint\n");
    let mut flat = 0;
    for (k, (x, r)) in path.values.iter().zip(&steps.steps).enumerate() {
        let n = k + 1;
        for (i, xi) in x.iter().enumerate() {
            let _ = writeln!(body, "x[{n}.{i}],{},{}", f17(*xi), f17(*xi));
            let tj = tau_joint.as_ref().map(|t| t[flat]);
            let _ = writeln!(body, "tau[{n}.{i}],{},{}", f17(r.shat[i]), opt(tj));
            let _ = writeln!(body, "shat[{n}.{i}],{},{}", f17(r.shat[i]), f17(joint.shat[flat]));
            flat += 1;
        }
        let _ = writeln!(body, "log_spa[{n}],{},", opt(r.log_spa));
        let _ = writeln!(body, "status[{n}],{},", r.status);
    }
    let _ = writeln!(body, "log_spa,{},{}", opt(steps.log_spa), opt(joint.log_spa));
    let _ = writeln!(body, "rel_gap,{},{}", opt(rel_gap), opt(rel_gap));
    let _ = writeln!(body, "status,{},{}", steps.status, joint.status);

    let mut result = CmdOutput::default();
    if !both {
        result.code = EXIT_NUMERICAL;
        let failing: Vec<String> = steps
            .steps
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.status.is_converged())
            .map(|(k, r)| format!("step {}: {}", k + 1, r.status))
            .collect();
        result.stderr = format!(
            "numerical failure: joint {}, stepwise {} ({})\n",
            joint.status,
            steps.status,
            failing.join(", ")
        );
    } else if rel_gap.is_none_or(|g| g > a.tol) {
        result.code = EXIT_VERIFY;
        result.stderr = format!("relative gap {} exceeds {}\n", opt(rel_gap), f17(a.tol));
    }
    emit(result, body, a.out.as_deref())
}

fn load_spec_dir(dir: &Path) -> Result<Vec<ZooModel>, CmdOutput> {
    let entries = fs::read_dir(dir).map_err(|e| CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CmdOutput::fail(
            EXIT_INPUT,
            format!("{}: no .toml spec files", dir.display()),
        ));
    }
    files
        .iter()
        .map(|f| {
            let name = f
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok(ZooModel::new(&name, load_spec(f)?))
        })
        .collect()
}

pub fn cmd_verify(a: &VerifyArgs) -> CmdOutput {
    let zoo = match &a.spec_dir {
        Some(dir) => tri!(load_spec_dir(dir)),
        None => standard_zoo(),
    };
    if a.paths == 0 {
        return CmdOutput::fail(EXIT_INPUT, "--paths must be positive");
    }
    let cfg = VerifyConfig {
        paths_per_model: a.paths,
        seed: a.seed,
        tol: a.tol,
        mode: mode(a.strict_domains),
        perturb_hessian: a.perturb_hessian,
        ..VerifyConfig::default()
    };
    let summary = match verify_factorization(&zoo, &cfg) {
        Ok(s) => s,
        Err(e) => return from_error(e),
    };
    let mut result = CmdOutput {
        stderr: format!("{}\n", summary.summary_line()),
        ..CmdOutput::default()
    };
    for r in summary.records.iter().filter(|r| r.error.is_some()) {
        let _ = writeln!(
            result.stderr,
            "{} path {}: {}",
            r.model,
            r.path_index,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if !summary.passed() {
        result.code = EXIT_VERIFY;
    }
    emit(result, summary.to_csv(), a.out.as_deref())
}

fn column_names(process: &ProcessSpec) -> Vec<String> {
    (1..=process.n_steps())
        .flat_map(|n| (0..process.dim(n)).map(move |i| format!("x{n}.{i}")))
        .collect()
}

/// One path per row. Integer coordinates print as integers, the rest with
/// 17 significant digits.
pub fn cmd_simulate(a: &SimulateArgs) -> CmdOutput {
    let process = tri!(load_spec(&a.spec));
    let paths = match simulate_paths(&process, a.paths, a.seed) {
        Ok(p) => p,
        Err(e) => return from_error(e),
    };
    let types: Vec<ValueType> = (1..=process.n_steps())
        .flat_map(|n| process.value_types(n).iter().copied())
        .collect();
    let mut body = column_names(&process).join(",");
    body.push('\n');
    for p in &paths {
        let row: Vec<String> = p
            .flatten()
            .iter()
            .zip(&types)
            .map(|(v, t)| match t {
                ValueType::Integer => format!("{}", *v as i64),
                _ => f17(*v),
            })
            .collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    emit(CmdOutput::default(), body, a.out.as_deref())
}

fn read_series(path: &Path) -> Result<Vec<f64>, CmdOutput> {
    let text = fs::read_to_string(path).map_err(|e| CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<u64>() {
            Ok(v) => out.push(v as f64),
            Err(_) => {
                return Err(CmdOutput::fail(
                    EXIT_INPUT,
                    format!("{} line {}: `{t}` is not a nonnegative integer", path.display(), k + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// Report rows `parameter,value`, followed by the log-likelihood on both
/// routes at the optimum and the optimizer diagnostics.
pub fn cmd_fit(a: &FitArgs) -> CmdOutput {
    let family = match InnovationFamily::parse(&a.family) {
        Ok(f) => f,
        Err(e) => return CmdOutput::fail(EXIT_INPUT, e),
    };
    let series = tri!(read_series(&a.series));
    let cfg = FitConfig {
        jitter_seed: a.seed,
        ..FitConfig::default()
    };
    let fit = match fit_inar(&series, a.order, family, &cfg) {
        Ok(f) => f,
        Err(e) => return from_error(e),
    };
    let joint = inar_log_likelihood(
        &series,
        &fit.alphas,
        family,
        &fit.innovation,
        LikelihoodRoute::Joint,
        &cfg.solver,
    )
    .unwrap_or(f64::NAN);

    let mut body = String::from("parameter,value\n");
    let values = fit.alphas.iter().chain(&fit.innovation);
    for (name, v) in fit.param_names().iter().zip(values) {
        let _ = writeln!(body, "{name},{}", f17(*v));
    }
    let _ = writeln!(body, "log_likelihood,{}", f17(fit.log_likelihood));
    let _ = writeln!(body, "log_likelihood_joint,{}", f17(joint));
    let _ = writeln!(body, "iterations,{}", fit.iterations);
    let _ = writeln!(body, "converged,{}", fit.converged);
    let _ = writeln!(body, "flat,{}", fit.flat);
    let _ = writeln!(body, "at_bounds,{}", fit.at_bounds.join(";"));

    let mut result = CmdOutput::default();
    if !fit.at_bounds.is_empty() {
        let _ = writeln!(
            result.stderr,
            "warning: parameters at a bound: {}",
            fit.at_bounds.join(", ")
        );
    }
    if fit.flat {
        let _ = writeln!(
            result.stderr,
            "warning: flat likelihood, parameters may be unidentifiable"
        );
    }
    if !fit.converged {
        let _ = writeln!(result.stderr, "warning: iteration budget exhausted");
    }
    if let Some(t) = &a.trace {
        let mut trace = String::from("iteration,log_likelihood\n");
        for (k, v) in fit.trace.iter().enumerate() {
            let _ = writeln!(trace, "{k},{}", f17(*v));
        }
        if let Err(e) = fs::write(t, trace) {
            return CmdOutput::fail(EXIT_INPUT, format!("{}: {e}", t.display()));
        }
    }
    emit(result, body, a.out.as_deref())
}

fn toml_row(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| f17(*x)).collect::<Vec<_>>().join(", "))
}

fn toml_rows(rows: &[Vec<f64>]) -> String {
    format!("[{}]", rows.iter().map(|r| toml_row(r)).collect::<Vec<_>>().join(", "))
}

/// The tilted-process report as a TOML document.
pub fn cmd_tilt_report(a: &TiltArgs) -> CmdOutput {
    let process = tri!(load_spec(&a.spec));
    let s = match (&a.tilt, &a.path) {
        (Some(t), _) => {
            let s = tri!(parse_values(t, "--tilt"));
            if s.len() != process.total_dim() {
                return CmdOutput::fail(
                    EXIT_INPUT,
                    format!(
                        "--tilt has {} values, the process has {} coordinates",
                        s.len(),
                        process.total_dim()
                    ),
                );
            }
            s
        }
        (None, Some(p)) => {
            let path = tri!(parse_path(&process, p));
            match spa_joint(&process, &path, &SolverConfig::default()) {
                Ok(j) if j.status.is_converged() => j.shat,
                Ok(j) => return CmdOutput::fail(EXIT_NUMERICAL, format!("joint saddlepoint: {}", j.status)),
                Err(e) => return from_error(e),
            }
        }
        (None, None) => return CmdOutput::fail(EXIT_INPUT, "either --tilt or --path is required"),
    };
    let r = match tilt_process(&process, &s) {
        Ok(r) => r,
        Err(e) => return from_error(e),
    };
    let mut body = String::new();
    let _ = writeln!(body, "s = {}", toml_row(&r.s));
    let _ = writeln!(body, "tau = {}", toml_rows(&r.tau));
    let _ = writeln!(body, "tilted_means = {}", toml_rows(&r.tilted_means));
    let innov_relent: Vec<f64> = r.innovations.iter().map(|v| v.relent).collect();
    let _ = writeln!(body, "innovation_relents = {}", toml_row(&innov_relent));
    let _ = writeln!(body, "step_relents = {}", toml_row(&r.step_relents));
    let _ = writeln!(body, "total_relent_decomposed = {}", f17(r.total_relent_decomposed));
    let _ = writeln!(body, "total_relent_joint = {}", f17(r.total_relent_joint));
    let _ = writeln!(body, "relent_gap = {}", f17(r.relent_gap()));
    let _ = writeln!(body, "mean_gap = {}", f17(r.mean_gap));
    let _ = writeln!(body, "probe_gap = {}", f17(r.probe_gap));
    emit(CmdOutput::default(), body, a.out.as_deref())
}
