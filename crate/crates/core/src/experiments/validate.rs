//! Invariant checks run against a configuration before trusting its numbers.

use serde::Serialize;

use crate::lindblad::{evolve, min_eigenvalue, CollapseSet, DensityMatrix};
use crate::numerics::{basis_ket, max_abs, CMatrix, CVector, Hamiltonian, TimeGrid};
use crate::toc::{ideal_evolution, invariant_residual};

use super::{cp_setup, effective_vs_full_gap, single_gate_setup, ExperimentError, Params, RecipeConfig, SingleGate};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn upper(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        let passed = value.is_finite() && value <= limit;
        self.checks.push(Check { name: name.into(), value, limit, passed });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Steps of the short open-system run used for the density-matrix checks.
const SHORT_RUN_STEPS: usize = 400;

/// Pulse, Hamiltonian, propagator and density-matrix invariants for the
/// three single-qubit gates and the two-pair CP model of `cfg`. A device file
/// selects the pair checks (2 transmons) or the CP checks (4 transmons).
pub fn validate(cfg: &RecipeConfig) -> Result<ValidationReport, ExperimentError> {
    let p = cfg.params()?;
    let mut report = ValidationReport::default();
    let n = match cfg.device {
        Some(_) => cfg.pair_lattice(&p)?.n_transmons(),
        None => 0,
    };
    if n != 4 {
        single_gate_checks(cfg, &p, &mut report)?;
    }
    if n != 2 {
        cp_checks(cfg, &p, &mut report)?;
    }
    Ok(report)
}

fn single_gate_checks(cfg: &RecipeConfig, p: &Params, report: &mut ValidationReport) -> Result<(), ExperimentError> {
    let pair = cfg.pair_lattice(p)?;
    for gate in [SingleGate::H, SingleGate::S, SingleGate::T] {
        let name = gate.name();
        let setup = single_gate_setup(gate, &pair, p, None)?;
        let tau = setup.pulse.tau();

        let grid = TimeGrid::with_steps(0.0, tau, 2000)?;
        report.upper(format!("{name}: invariant residual"), invariant_residual(&setup.pulse, &grid), 1e-8);

        let u = ideal_evolution(&setup.pulse);
        let unitary_err = max_abs(&(u.adjoint() * &u - CMatrix::identity(2, 2)));
        report.upper(format!("{name}: ideal propagator unitarity"), unitary_err, 1e-10);

        let herm = [0.0, 0.37 * tau, tau]
            .iter()
            .map(|&t| {
                let h = setup.model.dense(t);
                max_abs(&(&h - h.adjoint()))
            })
            .fold(0.0, f64::max);
        report.upper(format!("{name}: model Hermiticity"), herm, 1e-12);

        let gap = effective_vs_full_gap(&setup, p.sample_stride)?;
        report.upper(format!("{name}: effective vs full infidelity"), gap.final_infidelity, 5e-3);

        let ket = basis_ket(setup.model.dim(), setup.logical[0]);
        density_checks(name, &ket, &setup.model, &setup.collapse, &setup.grid, report)?;
    }

    Ok(())
}

fn cp_checks(cfg: &RecipeConfig, p: &Params, report: &mut ValidationReport) -> Result<(), ExperimentError> {
    let four = cfg.four_transmon_lattice(p)?;
    let cp = cp_setup(&four, p, false)?;
    let tau = cp.pulse.tau();
    let herm = [0.0, 0.5 * tau, tau]
        .iter()
        .map(|&t| {
            let h = cp.model.dense(t);
            max_abs(&(&h - h.adjoint()))
        })
        .fold(0.0, f64::max);
    report.upper("CP: model Hermiticity", herm, 1e-12);
    density_checks("CP", &cp.initial_state(), &cp.model, &cp.collapse, &cp.grid, report)
}

/// Trace, Hermiticity and positivity along a short open-system run.
fn density_checks(
    name: &str,
    ket: &CVector,
    model: &dyn Hamiltonian,
    collapse: &CollapseSet,
    grid: &TimeGrid,
    report: &mut ValidationReport,
) -> Result<(), ExperimentError> {
    let rho0 = DensityMatrix::pure(ket)?;
    let steps = SHORT_RUN_STEPS.min(grid.n_steps());
    let short = TimeGrid::with_steps(0.0, steps as f64 * grid.dt(), steps)?;
    let traj = evolve(&rho0, model, collapse, &short, 50)?;
    let (mut trace_err, mut herm_err, mut neg) = (0.0_f64, 0.0_f64, 0.0_f64);
    for rho in &traj.states {
        trace_err = trace_err.max((rho.trace().re - 1.0).abs());
        herm_err = herm_err.max(max_abs(&(rho - rho.adjoint())));
        neg = neg.max(-min_eigenvalue(rho)?);
    }
    report.upper(format!("{name}: density trace drift"), trace_err, 1e-9);
    report.upper(format!("{name}: density Hermiticity"), herm_err, 1e-12);
    report.upper(format!("{name}: density negativity"), neg, 1e-9);
    Ok(())
}
