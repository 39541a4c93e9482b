//! Named recipes that regenerate the gate-time, fidelity, robustness and
//! CP-gate data sets as CSV tables with JSON sidecars.

mod output;
mod setup;
mod validate;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::{DeviceConfig, DeviceError, LatticeSpec, TransmonSpec};
use crate::lindblad::{
    choi_from_evolution, choi_from_outputs, choi_input_pairs, evolve_observed, evolve_operator_observed,
    unitary_propagate, DensityMatrix, LindbladError,
};
use crate::metrics::{avg_gate_fidelity_from_choi, gate_fidelity_trace, process_fidelity, state_fidelity, trace_fidelity_from_choi};
use crate::numerics::{expm_hermitian, khz, mhz, to_mhz, CMatrix, NumericsError, C64};
use crate::numerics::Hamiltonian;
use crate::toc::{gate_time, GateKind, TocError};

pub use output::{meta_path, write_outputs, Axis, RunMeta, RunOutput, SweepGrid, Table};
pub use validate::{validate, Check, ValidationReport};
pub use setup::{cp_setup, single_gate_pulse, single_gate_setup, CpSetup, SingleGateSetup};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("physics invariant violated: {0}")]
    Physics(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Toc(#[from] TocError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl ExperimentError {
    /// 2 for configuration problems, 3 for physics-invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Physics(_) | ExperimentError::Lindblad(_) | ExperimentError::Numerics(_) => 3,
            ExperimentError::Device(DeviceError::Numerics(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingleGate {
    H,
    S,
    T,
}

impl SingleGate {
    pub fn name(&self) -> &'static str {
        match self {
            SingleGate::H => "H",
            SingleGate::S => "S",
            SingleGate::T => "T",
        }
    }
}

impl FromStr for SingleGate {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "H" => Ok(SingleGate::H),
            "S" => Ok(SingleGate::S),
            "T" => Ok(SingleGate::T),
            other => Err(ExperimentError::Config(format!("unknown gate {other:?}; expected H, S or T"))),
        }
    }
}

/// Recipe knobs. Frequencies are plain MHz (kHz for rates); the `2π` is
/// applied internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub delta12_mhz: f64,
    pub g12_mhz: f64,
    pub gamma_mod: f64,
    pub delta_s_mhz: f64,
    pub delta_t_mhz: f64,
    pub rate_khz: f64,
    pub delta24_mhz: f64,
    pub g24_mhz: f64,
    pub gamma_mod_cp: f64,
    pub delta2_mhz: f64,
    /// Conditional phase of the CP gate, rad.
    pub gamma_cp: f64,
    pub dt_ps: f64,
    pub bessel_order: usize,
    pub decoherence: bool,
    /// Output every this many integration steps.
    pub sample_stride: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    pub delta12_min_mhz: f64,
    pub delta12_max_mhz: f64,
    pub delta12_points: usize,
    pub g12_min_mhz: f64,
    pub g12_max_mhz: f64,
    pub g12_points: usize,
    /// The γ axis is `2πk/n` for `k = 1..n-1`.
    pub tau2_gamma_divisions: usize,
    pub tau2_ratio_max: f64,
    pub tau2_ratio_points: usize,
    pub delta24_min_mhz: f64,
    pub delta24_max_mhz: f64,
    pub delta24_points: usize,
    pub g24_min_mhz: f64,
    pub g24_max_mhz: f64,
    pub g24_points: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            delta12_mhz: 520.0,
            g12_mhz: 14.5,
            gamma_mod: 1.5,
            delta_s_mhz: 25.0,
            delta_t_mhz: 15.0,
            rate_khz: 4.0,
            delta24_mhz: 600.0,
            g24_mhz: 7.0,
            gamma_mod_cp: 1.6,
            delta2_mhz: 27.0,
            gamma_cp: 0.5 * PI,
            dt_ps: 0.5,
            bessel_order: 15,
            decoherence: true,
            sample_stride: 20,
            beta_min: -0.1,
            beta_max: 0.1,
            beta_points: 41,
            delta12_min_mhz: 400.0,
            delta12_max_mhz: 650.0,
            delta12_points: 26,
            g12_min_mhz: 10.0,
            g12_max_mhz: 20.0,
            g12_points: 21,
            tau2_gamma_divisions: 60,
            tau2_ratio_max: 4.0,
            tau2_ratio_points: 41,
            delta24_min_mhz: 450.0,
            delta24_max_mhz: 750.0,
            delta24_points: 16,
            g24_min_mhz: 4.0,
            g24_max_mhz: 10.0,
            g24_points: 13,
        }
    }
}

impl Params {
    pub fn delta_s(&self) -> f64 {
        mhz(self.delta_s_mhz)
    }

    pub fn delta_t(&self) -> f64 {
        mhz(self.delta_t_mhz)
    }

    pub fn delta2(&self) -> f64 {
        mhz(self.delta2_mhz)
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ps * 1e-3
    }

    /// Applies `key=value` overrides; values are parsed as JSON scalars.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, String>) -> Result<Self, ExperimentError> {
        let mut value = serde_json::to_value(self).expect("params serialize");
        let map = value.as_object_mut().expect("params are an object");
        for (key, raw) in overrides {
            let slot = map
                .get_mut(key)
                .ok_or_else(|| ExperimentError::Config(format!("unknown parameter {key:?}")))?;
            *slot = serde_json::from_str(raw)
                .map_err(|_| ExperimentError::Config(format!("cannot parse value {raw:?} for {key}")))?;
        }
        let out: Params =
            serde_json::from_value(value).map_err(|e| ExperimentError::Config(format!("bad override: {e}")))?;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |what: &str| Err(ExperimentError::Config(what.to_string()));
        if !(self.dt_ps > 0.0) {
            return bad("dt_ps must be positive");
        }
        if self.dt_ps > 1.0 {
            return bad("dt_ps must be at most 1 ps for driven models");
        }
        if self.bessel_order == 0 {
            return bad("bessel_order must be at least 1");
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1");
        }
        if !(self.gamma_mod > 0.0 && self.gamma_mod <= 2.5) || !(self.gamma_mod_cp > 0.0 && self.gamma_mod_cp <= 2.5) {
            return bad("modulation indices must lie in (0, 2.5]");
        }
        if !(self.rate_khz >= 0.0) {
            return bad("rate_khz must be non-negative");
        }
        Ok(())
    }

    /// Pair lattice at `(Δ₁₂, g₁₂)` from these parameters.
    pub fn pair_lattice(&self) -> LatticeSpec {
        LatticeSpec::pair(mhz(self.delta12_mhz), mhz(self.g12_mhz), khz(self.rate_khz))
    }

    pub fn four_transmon_lattice(&self) -> LatticeSpec {
        LatticeSpec::four_transmon(mhz(self.delta24_mhz), mhz(self.g24_mhz), khz(self.rate_khz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Dynamics(SingleGate),
    Sweep(SingleGate),
    Robustness(SingleGate),
    Tau2Surface,
    CpSweep,
    CpDynamics,
}

impl Recipe {
    pub fn name(&self) -> String {
        match self {
            Recipe::Dynamics(g) => format!("dynamics-{}", g.name()),
            Recipe::Sweep(g) => format!("sweep-{}", g.name()),
            Recipe::Robustness(g) => format!("robustness-{}", g.name()),
            Recipe::Tau2Surface => "tau2-surface".into(),
            Recipe::CpSweep => "cp-sweep".into(),
            Recipe::CpDynamics => "cp-dynamics".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeConfig {
    pub recipe: Recipe,
    /// Device file; the recipe defaults apply when absent.
    pub device: Option<PathBuf>,
    pub overrides: BTreeMap<String, String>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

impl RecipeConfig {
    pub fn new(recipe: Recipe) -> Self {
        Self { recipe, device: None, overrides: BTreeMap::new(), out: None, jobs: 1 }
    }

    pub fn params(&self) -> Result<Params, ExperimentError> {
        Params::default().with_overrides(&self.overrides)
    }

    fn device_config(&self) -> Result<Option<DeviceConfig>, ExperimentError> {
        match &self.device {
            None => Ok(None),
            Some(path) => Ok(Some(DeviceConfig::from_file(path)?)),
        }
    }

    /// Pair lattice from the device file or the parameters.
    pub fn pair_lattice(&self, p: &Params) -> Result<LatticeSpec, ExperimentError> {
        match self.device_config()? {
            Some(cfg) => Ok(cfg.lattice()?),
            None => Ok(p.pair_lattice()),
        }
    }

    pub fn four_transmon_lattice(&self, p: &Params) -> Result<LatticeSpec, ExperimentError> {
        match self.device_config()? {
            Some(cfg) => Ok(cfg.lattice()?),
            None => Ok(p.four_transmon_lattice()),
        }
    }

    /// SHA-256 over the recipe, parameters and device file contents.
    pub fn hash(&self, p: &Params) -> Result<String, ExperimentError> {
        let device = self.device_config()?.map(|c| serde_json::to_value(c).expect("device config serializes"));
        let canonical = serde_json::json!({
            "recipe": self.recipe.name(),
            "params": p,
            "device": device,
        });
        Ok(hex::encode(Sha256::digest(canonical.to_string().as_bytes())))
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Evaluates `f` on every index; results are in index order regardless of
/// the worker count.
pub fn run_cells<T: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T, ExperimentError> + Sync + Send,
) -> Result<Vec<T>, ExperimentError> {
    with_pool(jobs, || (0..n).into_par_iter().map(&f).collect::<Result<Vec<_>, _>>())?
}

fn finish(
    cfg: &RecipeConfig,
    p: &Params,
    table: Table,
    axes: BTreeMap<String, Vec<f64>>,
    summary: BTreeMap<String, f64>,
    start: Instant,
) -> Result<RunOutput, ExperimentError> {
    let meta = RunMeta {
        recipe: cfg.recipe.name(),
        config_hash: cfg.hash(p)?,
        columns: table.columns.clone(),
        axes,
        params: serde_json::to_value(p).expect("params serialize"),
        summary,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { table, meta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateFidelities {
    pub avg: f64,
    pub process: f64,
    pub trace: f64,
    pub leakage: f64,
}

fn fidelities_from_choi(choi: &CMatrix, ideal: &CMatrix) -> Result<GateFidelities, ExperimentError> {
    let d = ideal.nrows();
    let avg = avg_gate_fidelity_from_choi(choi, ideal, d);
    let trace = trace_fidelity_from_choi(choi, ideal, d)?;
    let f = GateFidelities { avg: avg.value, process: process_fidelity(choi, ideal), trace: trace.value, leakage: avg.leakage };
    if !(f.avg.is_finite() && f.avg <= 1.0 + 1e-9 && f.avg >= -1e-9) {
        return Err(ExperimentError::Physics(format!("gate fidelity {} outside [0, 1]", f.avg)));
    }
    Ok(f)
}

/// Open-system fidelities of one synthesized gate on the pair model.
pub fn single_gate_fidelity(setup: &SingleGateSetup) -> Result<GateFidelities, ExperimentError> {
    let choi = choi_from_evolution(&setup.model, &setup.collapse, &setup.grid, &setup.logical)?;
    fidelities_from_choi(&choi, &setup.ideal())
}

/// Logical block of the noiseless propagator of the pair model.
pub fn single_gate_unitary_block(setup: &SingleGateSetup) -> Result<CMatrix, ExperimentError> {
    let u = unitary_propagate(&setup.model, &setup.grid)?;
    let l = setup.logical;
    Ok(CMatrix::from_fn(2, 2, |a, b| u[(l[a], l[b])]))
}

/// Logical-block infidelity of the noiseless full model against the ideal
/// effective propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveGap {
    pub final_infidelity: f64,
    /// Worst value over the samples, end point included.
    pub max_infidelity: f64,
}

/// Propagates the full model and compares its logical block with the
/// effective two-level propagator every `stride` steps.
pub fn effective_vs_full_gap(setup: &SingleGateSetup, stride: usize) -> Result<EffectiveGap, ExperimentError> {
    let grid = &setup.grid;
    let dim = setup.model.dim();
    let l = setup.logical;
    let stride = stride.max(1);
    let mut u = CMatrix::identity(dim, dim);
    let mut worst = 0.0_f64;
    let mut last = 0.0;
    for k in 0..grid.n_steps() {
        let mid = grid.time(k) + 0.5 * grid.dt();
        u = expm_hermitian(&setup.model.dense(mid), grid.dt())? * u;
        if (k + 1) % stride == 0 || k + 1 == grid.n_steps() {
            let block = CMatrix::from_fn(2, 2, |a, b| u[(l[a], l[b])]);
            last = 1.0 - gate_fidelity_trace(&setup.ideal_at(grid.time(k + 1)), &block).value;
            worst = worst.max(last);
        }
    }
    Ok(EffectiveGap { final_infidelity: last, max_infidelity: worst })
}

fn initial_logical_amplitudes(gate: SingleGate) -> [C64; 2] {
    match gate {
        SingleGate::H => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        SingleGate::S | SingleGate::T => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            [C64::new(s, 0.0), C64::new(s, 0.0)]
        }
    }
}

/// Columns `t_ns, P0, P1, F`: logical populations of the recipe's initial
/// state and the average gate fidelity against the ideal propagator at `t`.
pub fn single_gate_trajectory(setup: &SingleGateSetup, stride: usize) -> Result<Table, ExperimentError> {
    let dim = setup.model.states().len();
    let pairs = choi_input_pairs(2);
    let mut samples: Vec<(Vec<f64>, Vec<CMatrix>)> = Vec::new();
    for (slot, &(k, l)) in pairs.iter().enumerate() {
        let mut x0 = CMatrix::zeros(dim, dim);
        x0[(setup.logical[k], setup.logical[l])] = C64::new(1.0, 0.0);
        let mut idx = 0;
        evolve_operator_observed(&x0, &setup.model, &setup.collapse, &setup.grid, stride, |t, x| {
            if slot == 0 {
                samples.push((vec![t], vec![x.clone()]));
            } else {
                samples[idx].1.push(x.clone());
            }
            idx += 1;
        })?;
    }
    let c = initial_logical_amplitudes(setup.gate);
    let mut table = Table::new(&["t_ns", "P0", "P1", "F"]);
    for (times, outputs) in &samples {
        let t = times[0];
        let choi = choi_from_outputs(outputs, &setup.logical);
        // Logical block of E(ρ₀) with ρ₀ = Σ c_k c_l* |k⟩⟨l|.
        let mut rho = CMatrix::zeros(2, 2);
        for (&(k, l), out) in pairs.iter().zip(outputs) {
            let block = CMatrix::from_fn(2, 2, |a, b| out[(setup.logical[a], setup.logical[b])]);
            rho += &block * (c[k] * c[l].conj());
            if k != l {
                rho += block.adjoint() * (c[l] * c[k].conj());
            }
        }
        let f = avg_gate_fidelity_from_choi(&choi, &setup.ideal_at(t), 2).value;
        table.push(vec![t, rho[(0, 0)].re, rho[(1, 1)].re, f]);
    }
    Ok(table)
}

pub fn run_single_gate_dynamics(gate: SingleGate, cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let lattice = cfg.pair_lattice(&p)?;
    let setup = single_gate_setup(gate, &lattice, &p, None)?;
    let table = single_gate_trajectory(&setup, p.sample_stride)?;
    let last = table.rows.last().expect("trajectory has samples").clone();
    let summary = BTreeMap::from([
        ("tau_ns".to_string(), setup.pulse.tau()),
        ("omega_mhz".to_string(), to_mhz(setup.pulse.omega())),
        ("delta_mhz".to_string(), to_mhz(setup.pulse.delta())),
        ("eta_mhz".to_string(), to_mhz(setup.pulse.eta())),
        ("final_F".to_string(), last[3]),
    ]);
    finish(cfg, &p, table, BTreeMap::new(), summary, start)
}

/// Gate fidelity at one `(Δ₁₂, g₁₂)` cell (rad/ns).
pub fn fidelity_cell(gate: SingleGate, base: &LatticeSpec, p: &Params, delta12: f64, g12: f64) -> Result<f64, ExperimentError> {
    let t2 = *base.transmon(1);
    let t1 = TransmonSpec { omega0: t2.omega0 + delta12, ..*base.transmon(0) };
    let lattice = base.with_transmon(0, t1)?.with_coupling(0, 1, g12)?;
    let setup = single_gate_setup(gate, &lattice, p, None)?;
    Ok(single_gate_fidelity(&setup)?.avg)
}

pub fn run_fidelity_sweep(
    gate: SingleGate,
    delta12_mhz: &Axis,
    g12_mhz: &Axis,
    cfg: &RecipeConfig,
) -> Result<SweepGrid, ExperimentError> {
    let p = cfg.params()?;
    let base = cfg.pair_lattice(&p)?;
    setup::check_pair_lattice(&base)?;
    let n2 = g12_mhz.values.len();
    let values = run_cells(cfg.jobs, delta12_mhz.values.len() * n2, |idx| {
        fidelity_cell(gate, &base, &p, mhz(delta12_mhz.values[idx / n2]), mhz(g12_mhz.values[idx % n2]))
    })?;
    Ok(SweepGrid { axis1: delta12_mhz.clone(), axis2: g12_mhz.clone(), value_name: "F".into(), values })
}

fn sweep_output(cfg: &RecipeConfig, p: &Params, grid: SweepGrid, start: Instant) -> Result<RunOutput, ExperimentError> {
    let axes = BTreeMap::from([
        (grid.axis1.name.clone(), grid.axis1.values.clone()),
        (grid.axis2.name.clone(), grid.axis2.values.clone()),
    ]);
    let finite: Vec<f64> = grid.values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut summary = BTreeMap::new();
    if !finite.is_empty() {
        summary.insert("min".into(), finite.iter().copied().fold(f64::INFINITY, f64::min));
        summary.insert("max".into(), finite.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    summary.insert("nan_cells".into(), (grid.values.len() - finite.len()) as f64);
    finish(cfg, p, grid.to_table(), axes, summary, start)
}

pub fn run_fidelity_sweep_recipe(gate: SingleGate, cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let a1 = Axis::linspace("delta12_mhz", p.delta12_min_mhz, p.delta12_max_mhz, p.delta12_points)?;
    let a2 = Axis::linspace("g12_mhz", p.g12_min_mhz, p.g12_max_mhz, p.g12_points)?;
    let grid = run_fidelity_sweep(gate, &a1, &a2, cfg)?;
    sweep_output(cfg, &p, grid, start)
}

/// Gate fidelity under drift `βΩ(n̂₁ - n̂₂)` for each `β`.
pub fn drift_curve(gate: SingleGate, betas: &[f64], cfg: &RecipeConfig) -> Result<Vec<f64>, ExperimentError> {
    let p = cfg.params()?;
    let lattice = cfg.pair_lattice(&p)?;
    run_cells(cfg.jobs, betas.len(), |k| {
        let setup = single_gate_setup(gate, &lattice, &p, Some(betas[k]))?;
        Ok(single_gate_fidelity(&setup)?.avg)
    })
}

pub fn run_drift_robustness(gate: SingleGate, beta: &Axis, cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let values = drift_curve(gate, &beta.values, cfg)?;
    let mut table = Table::new(&["beta", "F"]);
    for (&b, &f) in beta.values.iter().zip(&values) {
        table.push(vec![b, f]);
    }
    let axes = BTreeMap::from([("beta".to_string(), beta.values.clone())]);
    let (imax, fmax) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let summary = BTreeMap::from([("max_F".to_string(), fmax), ("beta_at_max".to_string(), beta.values[imax])]);
    finish(cfg, &p, table, axes, summary, start)
}

/// `τ₂Ω` at conditional phase `gamma` and `δ₂/Ω = ratio`; NaN if infeasible.
pub fn tau2_cell(gamma: f64, ratio: f64) -> f64 {
    gate_time(GateKind::ControlledPhase { gamma }, 1.0, ratio).unwrap_or(f64::NAN)
}

pub fn run_tau2_surface(gamma: &Axis, ratio: &Axis, cfg: &RecipeConfig) -> Result<SweepGrid, ExperimentError> {
    let n2 = ratio.values.len();
    let values = run_cells(cfg.jobs, gamma.values.len() * n2, |idx| {
        Ok(tau2_cell(gamma.values[idx / n2], ratio.values[idx % n2]))
    })?;
    Ok(SweepGrid { axis1: gamma.clone(), axis2: ratio.clone(), value_name: "tau2_omega".into(), values })
}

pub fn run_tau2_surface_recipe(cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let n = p.tau2_gamma_divisions;
    if n < 2 {
        return Err(ExperimentError::Config("tau2_gamma_divisions must be at least 2".into()));
    }
    let gamma = Axis { name: "gamma".into(), values: (1..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect() };
    let ratio = Axis::linspace("delta2_over_omega", 0.0, p.tau2_ratio_max, p.tau2_ratio_points)?;
    let grid = run_tau2_surface(&gamma, &ratio, cfg)?;
    sweep_output(cfg, &p, grid, start)
}

/// Final state fidelity of the CP gate on `(|10⟩_L + |11⟩_L)/√2`.
pub fn cp_state_fidelity(setup: &CpSetup) -> Result<f64, ExperimentError> {
    let rho0 = DensityMatrix::pure(&setup.initial_state())?;
    let rho = evolve_observed(&rho0, &setup.model, &setup.collapse, &setup.grid, usize::MAX, |_, _| {})?;
    Ok(state_fidelity(&rho, &setup.ideal_state_at(setup.pulse.tau())))
}

/// Two-pair CP fidelity at one `(Δ₂₄, g₂₄)` cell (rad/ns).
pub fn cp_cell(base: &LatticeSpec, p: &Params, delta24: f64, g24: f64) -> Result<f64, ExperimentError> {
    let t4 = *base.transmon(3);
    let t2 = TransmonSpec { omega0: t4.omega0 + delta24, ..*base.transmon(1) };
    let lattice = base.with_transmon(1, t2)?.with_coupling(1, 3, g24)?;
    cp_state_fidelity(&cp_setup(&lattice, p, false)?)
}

pub fn run_cp_sweep(delta24_mhz: &Axis, g24_mhz: &Axis, cfg: &RecipeConfig) -> Result<SweepGrid, ExperimentError> {
    let p = cfg.params()?;
    let base = cfg.four_transmon_lattice(&p)?;
    let n2 = g24_mhz.values.len();
    let values = run_cells(cfg.jobs, delta24_mhz.values.len() * n2, |idx| {
        cp_cell(&base, &p, mhz(delta24_mhz.values[idx / n2]), mhz(g24_mhz.values[idx % n2]))
    })?;
    Ok(SweepGrid { axis1: delta24_mhz.clone(), axis2: g24_mhz.clone(), value_name: "F_S".into(), values })
}

pub fn run_cp_sweep_recipe(cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let a1 = Axis::linspace("delta24_mhz", p.delta24_min_mhz, p.delta24_max_mhz, p.delta24_points)?;
    let a2 = Axis::linspace("g24_mhz", p.g24_min_mhz, p.g24_max_mhz, p.g24_points)?;
    let grid = run_cp_sweep(&a1, &a2, cfg)?;
    sweep_output(cfg, &p, grid, start)
}

/// Columns `t_ns, P00, P01, P10, P11, Pa, F_S`.
pub fn cp_trajectory(setup: &CpSetup, stride: usize) -> Result<Table, ExperimentError> {
    let rho0 = DensityMatrix::pure(&setup.initial_state())?;
    let kets: Vec<_> = (0..5).map(|k| setup.basis_ket(k)).collect();
    let mut table = Table::new(&["t_ns", "P00", "P01", "P10", "P11", "Pa", "F_S"]);
    evolve_observed(&rho0, &setup.model, &setup.collapse, &setup.grid, stride, |t, rho| {
        let mut row = vec![t];
        row.extend(kets.iter().map(|k| state_fidelity(rho, k)));
        row.push(state_fidelity(rho, &setup.ideal_state_at(t)));
        table.push(row);
    })?;
    Ok(table)
}

pub fn run_cp_dynamics_full(cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let p = cfg.params()?;
    let lattice = cfg.four_transmon_lattice(&p)?;
    let setup = cp_setup(&lattice, &p, true)?;
    let table = cp_trajectory(&setup, p.sample_stride)?;
    let last = table.rows.last().expect("trajectory has samples").clone();
    let summary = BTreeMap::from([
        ("tau_ns".to_string(), setup.pulse.tau()),
        ("omega_mhz".to_string(), to_mhz(setup.pulse.omega())),
        ("eta_mhz".to_string(), to_mhz(setup.pulse.eta())),
        ("gamma".to_string(), setup.gamma),
        ("final_F_S".to_string(), last[6]),
    ]);
    finish(cfg, &p, table, BTreeMap::new(), summary, start)
}

/// Runs the configured recipe.
pub fn run_recipe(cfg: &RecipeConfig) -> Result<RunOutput, ExperimentError> {
    match cfg.recipe {
        Recipe::Dynamics(g) => run_single_gate_dynamics(g, cfg),
        Recipe::Sweep(g) => run_fidelity_sweep_recipe(g, cfg),
        Recipe::Robustness(g) => {
            let p = cfg.params()?;
            let axis = Axis::linspace("beta", p.beta_min, p.beta_max, p.beta_points)?;
            run_drift_robustness(g, &axis, cfg)
        }
        Recipe::Tau2Surface => run_tau2_surface_recipe(cfg),
        Recipe::CpSweep => run_cp_sweep_recipe(cfg),
        Recipe::CpDynamics => run_cp_dynamics_full(cfg),
    }
}
