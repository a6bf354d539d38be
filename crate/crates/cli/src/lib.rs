//! Command line front end: argument and config-file parsing plus the two
//! drivers, `solve` and `converge`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use dbf_core::amr::{amr_loop, AmrConfig, CycleReport};
use dbf_core::assembly::{ModelParams, ModelVariant};
use dbf_core::discretization::Discretization;
use dbf_core::io::{write_centerlines, write_convergence_file, write_cycle_file, write_vtk_file, ConvergenceRow};
use dbf_core::mesh::Mesh;
use dbf_core::nonlinear::{initial_guess, newton_solve_strict, NewtonConfig};
use dbf_core::problems::{centerline_profiles, error_norms, parse_preset, study_case, Problem, ProblemKind, DEFAULT_CF};

/// Number of samples in each centerline CSV.
pub const CENTERLINE_SAMPLES: usize = 201;

pub const RUN_LOG: &str = "run.log";
pub const CYCLE_CSV: &str = "cycles.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const VTK_FILE: &str = "solution.vtk";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<dbf_core::Error> for CliError {
    fn from(e: dbf_core::Error) -> Self {
        match e {
            dbf_core::Error::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            dbf_core::Error::InvalidInput(m) => CliError::Usage(m),
            other => CliError::Failure(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dbf", about = "Adaptive Darcy-Brinkman-Forchheimer flow solver", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem with adaptive refinement.
    Solve(SolveArgs),
    /// Run the manufactured-solution study on uniform meshes.
    Converge(ConvergeArgs),
}

#[derive(Debug, Default, Args)]
pub struct SolveArgs {
    /// Flat `key = value` file; command line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// `groupI:testN` or `groupII:testN`, sets Re and Da.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub re: Option<f64>,
    #[arg(long)]
    pub da: Option<f64>,
    #[arg(long)]
    pub cf: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub global_refines: Option<u8>,
    #[arg(long)]
    pub amr_cycles: Option<usize>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write the final field as legacy VTK.
    #[arg(long)]
    pub vtk: bool,
    /// Write per-cycle statistics and, for the cavity, centerline profiles.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Finest uniform level; meshes 1..=max-level are solved.
    #[arg(long, default_value_t = 5)]
    pub max_level: u8,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    pub newton_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub model: ModelVariant,
    pub re: f64,
    pub da: f64,
    pub cf: f64,
    pub gamma: f64,
    pub global_refines: u8,
    pub amr_cycles: usize,
    pub newton_tol: f64,
    pub output_dir: PathBuf,
    pub emit_vtk: bool,
    pub emit_csv: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Cavity,
            model: ModelVariant::Dbf,
            re: 1.0,
            da: 1.0,
            cf: DEFAULT_CF,
            gamma: 1.0,
            global_refines: 5,
            amr_cycles: 4,
            newton_tol: 1e-12,
            output_dir: PathBuf::from("."),
            emit_vtk: false,
            emit_csv: false,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.model, self.re, self.da, self.cf, self.gamma)?)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Usage(format!("`{key}` must be positive, got {v}")))
            }
        };
        positive("re", self.re)?;
        positive("da", self.da)?;
        positive("newton_tol", self.newton_tol)?;
        for (key, v) in [("cf", self.cf), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Usage(format!("`{key}` must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

const KEYS: [&str; 13] = [
    "problem",
    "model",
    "preset",
    "re",
    "da",
    "cf",
    "gamma",
    "global_refines",
    "amr_cycles",
    "newton_tol",
    "output_dir",
    "vtk",
    "csv",
];

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid value `{v}` for `{key}`"))),
    }
}

fn apply_preset(cfg: &mut RunConfig, preset: &str) -> Result<(), CliError> {
    let (group, test) = parse_preset(preset).map_err(|e| CliError::Usage(format!("`preset`: {e}")))?;
    let (re, da) = study_case(group, test)?;
    cfg.re = re;
    cfg.da = da;
    Ok(())
}

/// Applies file keys onto `cfg`; a preset is applied before explicit `re`/`da`.
fn apply_file(cfg: &mut RunConfig, keys: &BTreeMap<String, String>) -> Result<(), CliError> {
    if let Some(p) = keys.get("preset") {
        apply_preset(cfg, p)?;
    }
    for (k, v) in keys {
        match k.as_str() {
            "problem" => cfg.problem = v.parse().map_err(|_| CliError::Usage(format!("invalid value `{v}` for `problem`")))?,
            "model" => cfg.model = v.parse().map_err(|_| CliError::Usage(format!("invalid value `{v}` for `model`")))?,
            "preset" => {}
            "re" => cfg.re = parse_value(k, v)?,
            "da" => cfg.da = parse_value(k, v)?,
            "cf" => cfg.cf = parse_value(k, v)?,
            "gamma" => cfg.gamma = parse_value(k, v)?,
            "global_refines" => cfg.global_refines = parse_value(k, v)?,
            "amr_cycles" => cfg.amr_cycles = parse_value(k, v)?,
            "newton_tol" => cfg.newton_tol = parse_value(k, v)?,
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "vtk" => cfg.emit_vtk = parse_bool(k, v)?,
            "csv" => cfg.emit_csv = parse_bool(k, v)?,
            _ => unreachable!("keys are checked while parsing"),
        }
    }
    Ok(())
}

/// Builds the run configuration from defaults, the optional config file and the flags.
pub fn resolve_config(args: &SolveArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        apply_file(&mut cfg, &parse_config_text(&text)?)?;
    }
    if let Some(p) = &args.preset {
        apply_preset(&mut cfg, p)?;
    }
    if let Some(v) = &args.problem {
        cfg.problem = v.parse().map_err(|_| CliError::Usage(format!("invalid value `{v}` for `problem`")))?;
    }
    if let Some(v) = &args.model {
        cfg.model = v.parse().map_err(|_| CliError::Usage(format!("invalid value `{v}` for `model`")))?;
    }
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = args.$f { cfg.$f = v; })* };
    }
    take!(re, da, cf, gamma, global_refines, amr_cycles, newton_tol);
    if let Some(d) = &args.output_dir {
        cfg.output_dir = d.clone();
    }
    cfg.emit_vtk |= args.vtk;
    cfg.emit_csv |= args.csv;
    cfg.validate()?;
    Ok(cfg)
}

/// Routes `log` records into `<dir>/run.log` without timestamps.
pub fn init_run_log(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
    let file = fs::File::create(dir.join(RUN_LOG))
        .map_err(|e| CliError::Failure(format!("cannot create run log in {}: {e}", dir.display())))?;
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init()
        .map_err(|e| CliError::Failure(e.to_string()))
}

/// Result of a `solve` run.
#[derive(Debug)]
pub struct SolveSummary {
    pub cycles: Vec<CycleReport>,
    pub written: Vec<PathBuf>,
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveSummary, CliError> {
    let params = cfg.params()?;
    let problem = Problem::new(cfg.problem);
    info!(
        "solve problem={:?} model={} re={} da={} cf={} gamma={} global_refines={} amr_cycles={}",
        cfg.problem,
        cfg.model.name(),
        cfg.re,
        cfg.da,
        cfg.cf,
        cfg.gamma,
        cfg.global_refines,
        cfg.amr_cycles
    );
    let amr = AmrConfig {
        global_refines: cfg.global_refines,
        cycles: cfg.amr_cycles,
        newton: NewtonConfig { tolerance: cfg.newton_tol, ..NewtonConfig::default() },
        ..AmrConfig::default()
    };
    let out = amr_loop(&problem, &params, &amr, |_| {})?;
    let dir = &cfg.output_dir;
    let mut written = Vec::new();
    if cfg.emit_csv {
        let path = dir.join(CYCLE_CSV);
        write_cycle_file(&out.cycles, &path)?;
        written.push(path);
        if cfg.problem == ProblemKind::Cavity {
            let (ux, uy) = centerline_profiles(&out.discretization, &out.state.u, CENTERLINE_SAMPLES)?;
            write_centerlines(&ux, &uy, dir)?;
            written.push(dir.join("centerline_u_x.csv"));
            written.push(dir.join("centerline_u_y.csv"));
        }
    }
    if cfg.emit_vtk {
        let path = dir.join(VTK_FILE);
        write_vtk_file(&out.discretization, &out.state, &path)?;
        written.push(path);
    }
    if cfg.problem == ProblemKind::Mms {
        let e = error_norms(&out.discretization, &out.state)?;
        info!("errors l2_u={:.6e} h1_u={:.6e} l2_p={:.6e}", e.l2_u, e.h1_u, e.l2_p);
    }
    Ok(SolveSummary { cycles: out.cycles, written })
}

/// Manufactured-solution ladder on uniform meshes `1..=max_level`.
pub fn run_converge(args: &ConvergeArgs) -> Result<Vec<ConvergenceRow>, CliError> {
    if args.max_level < 2 {
        return Err(CliError::Usage("`max_level` must be at least 2".into()));
    }
    if !(args.newton_tol.is_finite() && args.newton_tol > 0.0) {
        return Err(CliError::Usage(format!("`newton_tol` must be positive, got {}", args.newton_tol)));
    }
    let problem = Problem::mms();
    let params = ModelParams::new(ModelVariant::Dbf, 1.0, 1.0, 1.0, 1.0)?;
    let cfg = NewtonConfig { tolerance: args.newton_tol, ..NewtonConfig::default() };
    let mut rows = Vec::new();
    for n in 1..=args.max_level {
        let disc = Discretization::new(Mesh::uniform(n)?, problem.boundary())?;
        let start = initial_guess(&disc, &params, problem.forcing(), &cfg)?;
        let out = newton_solve_strict(&disc, &params, problem.forcing(), start, &cfg)?;
        let errors = error_norms(&disc, &out.state)?;
        let dofs = disc.n_velocity() + disc.n_pressure();
        info!(
            "converge level={n} dofs={dofs} newton_iterations={} l2_u={:.6e} h1_u={:.6e} l2_p={:.6e}",
            out.report.iterations, errors.l2_u, errors.h1_u, errors.l2_p
        );
        rows.push(ConvergenceRow { dofs, errors });
    }
    write_convergence_file(&rows, &args.output_dir.join(CONVERGENCE_CSV))?;
    Ok(rows)
}
