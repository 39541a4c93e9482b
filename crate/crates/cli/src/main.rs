//! `tocgate` command-line front end.
//!
//! Frequencies are plain f in MHz (the 2π is applied internally), times in ns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tocgate::experiments::{
    meta_path, run_recipe, validate, write_outputs, ExperimentError, Recipe, RecipeConfig, SingleGate,
};
use tocgate::numerics::{mhz, to_mhz};
use tocgate::toc::{gate_time, synthesize, GateKind, GateTarget, PulseSpec};

/// Environment variable naming the directory searched for relative `--config` paths.
const CONFIG_DIR_ENV: &str = "TOCGATE_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "tocgate", version, about = "Time-optimal gate synthesis and transmon gate simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the time-optimal pulse for a gate and print it as JSON.
    Synth(SynthArgs),
    /// Closed-form gate duration for a drive amplitude and detuning.
    GateTime(GateTimeArgs),
    /// Single-gate dynamics: CSV columns t_ns,P0,P1,F.
    Dynamics(GateRun),
    /// Gate fidelity over the (Δ12, g12) grid.
    Sweep(GateRun),
    /// Gate fidelity against the frequency drift β.
    Robustness(GateRun),
    /// τ2·Ω over conditional phase and δ2/Ω.
    Tau2Surface(RunArgs),
    /// CP-gate state fidelity over the (Δ24, g24) grid.
    CpSweep(RunArgs),
    /// CP-gate dynamics of the four-transmon model with spectators.
    CpDynamics(RunArgs),
    /// Run the invariant suite on a configuration; exit status 3 on violation.
    Validate(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GateArg {
    H,
    S,
    T,
    Cp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SingleGateArg {
    H,
    S,
    T,
}

impl From<SingleGateArg> for SingleGate {
    fn from(g: SingleGateArg) -> Self {
        match g {
            SingleGateArg::H => SingleGate::H,
            SingleGateArg::S => SingleGate::S,
            SingleGateArg::T => SingleGate::T,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Gate to synthesize.
    #[arg(long, value_enum, ignore_case = true)]
    gate: GateArg,
    /// Drive amplitude Ω/2π in MHz.
    #[arg(long)]
    omega_mhz: f64,
    /// Detuning δ/2π in MHz. Forced by the target for H; required for S, T and CP.
    #[arg(long, allow_negative_numbers = true)]
    delta_mhz: Option<f64>,
    /// Conditional phase γ in rad (CP only).
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    gamma: f64,
}

#[derive(Args)]
struct GateTimeArgs {
    /// Gate whose duration is evaluated.
    #[arg(long, value_enum, ignore_case = true)]
    gate: GateArg,
    /// Drive amplitude Ω/2π in MHz.
    #[arg(long)]
    omega_mhz: f64,
    /// Detuning δ/2π in MHz (ignored for H).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta_mhz: f64,
    /// Conditional phase γ in rad (CP only).
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    gamma: f64,
}

#[derive(Args)]
struct GateRun {
    /// Single-qubit gate.
    #[arg(long, value_enum, ignore_case = true)]
    gate: SingleGateArg,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Device description JSON (transmons in MHz, rates in kHz). Relative paths
    /// not found in the working directory are looked up in $TOCGATE_CONFIG_DIR.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; a `<out>.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Integration step in ps.
    #[arg(long)]
    dt_ps: Option<f64>,
    /// Highest Bessel order kept in the sideband expansion.
    #[arg(long)]
    bessel_order: Option<usize>,
    /// Drop all collapse operators.
    #[arg(long)]
    no_decoherence: bool,
    /// Parameter override `key=value` (MHz/kHz/ns units, see README); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Experiment(ExperimentError),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Experiment(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Experiment(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Synth(a) => synth(&a).map(|_| 0),
        Command::GateTime(a) => gate_time_cmd(&a).map(|_| 0),
        Command::Dynamics(a) => run(Recipe::Dynamics(a.gate.into()), &a.run),
        Command::Sweep(a) => run(Recipe::Sweep(a.gate.into()), &a.run),
        Command::Robustness(a) => run(Recipe::Robustness(a.gate.into()), &a.run),
        Command::Tau2Surface(a) => run(Recipe::Tau2Surface, &a),
        Command::CpSweep(a) => run(Recipe::CpSweep, &a),
        Command::CpDynamics(a) => run(Recipe::CpDynamics, &a),
        Command::Validate(a) => validate_cmd(&a),
    }
}

fn positive(value: f64, what: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Usage(format!("{what} must be positive and finite, got {value}")))
    }
}

fn toc_error(e: tocgate::toc::TocError) -> CliError {
    CliError::Experiment(ExperimentError::Toc(e))
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let omega = mhz(positive(a.omega_mhz, "--omega-mhz")?);
    let delta = a.delta_mhz.map(mhz);
    let (name, target) = match a.gate {
        GateArg::H => ("H", GateTarget::hadamard()),
        GateArg::S => ("S", GateTarget::s_gate()),
        GateArg::T => ("T", GateTarget::t_gate()),
        GateArg::Cp => ("CP", GateTarget::controlled_phase(a.gamma).map_err(toc_error)?),
    };
    let pulse = synthesize(&target, omega, delta).map_err(toc_error)?;
    println!("{}", serde_json::to_string_pretty(&pulse_json(name, &pulse)).expect("json"));
    Ok(())
}

fn pulse_json(gate: &str, p: &PulseSpec) -> serde_json::Value {
    json!({
        "gate": gate,
        "omega_mhz": to_mhz(p.omega()),
        "delta_mhz": to_mhz(p.delta()),
        "eta_mhz": to_mhz(p.eta()),
        "phi0": p.phi0(),
        "tau_ns": p.tau(),
        "pulse": p,
    })
}

fn gate_time_cmd(a: &GateTimeArgs) -> Result<(), CliError> {
    let omega = mhz(positive(a.omega_mhz, "--omega-mhz")?);
    let (name, kind) = match a.gate {
        GateArg::H => ("H", GateKind::H),
        GateArg::S => ("S", GateKind::S),
        GateArg::T => ("T", GateKind::T),
        GateArg::Cp => ("CP", GateKind::ControlledPhase { gamma: a.gamma }),
    };
    let tau = gate_time(kind, omega, mhz(a.delta_mhz)).map_err(toc_error)?;
    let out = json!({ "gate": name, "omega_mhz": a.omega_mhz, "delta_mhz": a.delta_mhz, "tau_ns": tau });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn recipe_config(recipe: Recipe, a: &RunArgs) -> Result<RecipeConfig, CliError> {
    let mut cfg = RecipeConfig::new(recipe);
    cfg.device = a.config.as_deref().map(resolve_config);
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    cfg.jobs = a.jobs;
    let mut overrides = BTreeMap::new();
    for item in &a.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        overrides.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(dt) = a.dt_ps {
        overrides.insert("dt_ps".into(), dt.to_string());
    }
    if let Some(n) = a.bessel_order {
        overrides.insert("bessel_order".into(), n.to_string());
    }
    if a.no_decoherence {
        overrides.insert("decoherence".into(), "false".into());
    }
    cfg.overrides = overrides;
    cfg.out = Some(a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.recipe.name()))));
    // Surfaces config errors before any long computation.
    cfg.params()?;
    Ok(cfg)
}

fn run(recipe: Recipe, a: &RunArgs) -> Result<u8, CliError> {
    let cfg = recipe_config(recipe, a)?;
    let output = run_recipe(&cfg)?;
    let out = cfg.out.clone().expect("output path set");
    write_outputs(&out, &output)?;
    let report = json!({
        "recipe": output.meta.recipe,
        "csv": out,
        "meta": meta_path(&out),
        "rows": output.table.rows.len(),
        "summary": output.meta.summary,
        "wall_time_s": output.meta.wall_time_s,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(0)
}

fn validate_cmd(a: &RunArgs) -> Result<u8, CliError> {
    let mut cfg = recipe_config(Recipe::Dynamics(SingleGate::H), a)?;
    cfg.out = None;
    let report = validate(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    if report.passed() {
        Ok(0)
    } else {
        for c in report.failures() {
            eprintln!("violation: {} = {:.3e} exceeds {:.1e}", c.name, c.value, c.limit);
        }
        Ok(3)
    }
}
