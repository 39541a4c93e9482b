//! Gate set-ups shared by the recipes: lattice, synthesized pulse, drive,
//! frame model, collapse operators and ideal targets.

use std::f64::consts::PI;

use crate::device::{
    cp_gate_drive, cp_model, effective_rabi_cp, effective_rabi_single, product_index, single_gate_drive,
    single_qubit_model, DriftSpec, DriveSpec, Encoding, FrameModel, LatticeSpec, Truncation,
};
use crate::lindblad::{collapse_operators, collapse_operators_for, CollapseSet};
use crate::numerics::{CMatrix, CVector, TimeGrid, C64};
use crate::toc::{ideal_evolution_at, synthesize, GateTarget, PulseSpec};

use super::{ExperimentError, Params, SingleGate};

pub struct SingleGateSetup {
    pub gate: SingleGate,
    pub lattice: LatticeSpec,
    pub pulse: PulseSpec,
    pub drive: DriveSpec,
    pub model: FrameModel,
    pub collapse: CollapseSet,
    pub grid: TimeGrid,
    /// Local model indices of `|0⟩_L`, `|1⟩_L`.
    pub logical: [usize; 2],
}

impl SingleGateSetup {
    /// Ideal logical propagator at time `t`.
    pub fn ideal_at(&self, t: f64) -> CMatrix {
        ideal_evolution_at(&self.pulse, t)
    }

    pub fn ideal(&self) -> CMatrix {
        self.ideal_at(self.pulse.tau())
    }
}

pub fn single_gate_pulse(gate: SingleGate, omega: f64, p: &Params) -> Result<PulseSpec, ExperimentError> {
    Ok(match gate {
        SingleGate::H => synthesize(&GateTarget::hadamard(), omega, None)?,
        SingleGate::S => synthesize(&GateTarget::s_gate(), omega, Some(p.delta_s()))?,
        SingleGate::T => synthesize(&GateTarget::t_gate(), omega, Some(p.delta_t()))?,
    })
}

/// Pair lattice checks: two transmons coupled as (0, 1).
pub fn check_pair_lattice(lat: &LatticeSpec) -> Result<f64, ExperimentError> {
    if lat.n_transmons() != 2 {
        return Err(ExperimentError::Config(format!(
            "single-qubit recipes need a 2-transmon device, got {}",
            lat.n_transmons()
        )));
    }
    lat.coupling(0, 1)
        .ok_or_else(|| ExperimentError::Config("single-qubit recipes need a coupling for pair [0, 1]".into()))
}

pub fn single_gate_setup(
    gate: SingleGate,
    lattice: &LatticeSpec,
    p: &Params,
    beta: Option<f64>,
) -> Result<SingleGateSetup, ExperimentError> {
    let g = check_pair_lattice(lattice)?;
    let lattice = if p.decoherence { lattice.clone() } else { lattice.without_decoherence() };
    let omega = effective_rabi_single(g, p.gamma_mod)?;
    let pulse = single_gate_pulse(gate, omega, p)?;
    let drive = single_gate_drive(&lattice, &pulse, p.gamma_mod)?;
    let drift = beta.map(|b| DriftSpec::new(b, pulse.omega())).transpose()?;
    let model = single_qubit_model(&lattice, &drive, pulse.delta(), p.bessel_order, drift.as_ref())?;
    let collapse = collapse_operators(&lattice);
    let grid = TimeGrid::new(0.0, pulse.tau(), p.dt_ns())?;
    let logical = [
        model.local_index(product_index(&[1, 0])).expect("full model"),
        model.local_index(product_index(&[0, 1])).expect("full model"),
    ];
    Ok(SingleGateSetup { gate, lattice, pulse, drive, model, collapse, grid, logical })
}

pub struct CpSetup {
    pub lattice: LatticeSpec,
    pub pulse: PulseSpec,
    pub drive: DriveSpec,
    pub model: FrameModel,
    pub collapse: CollapseSet,
    pub grid: TimeGrid,
    pub gamma: f64,
    /// Local indices of `|00⟩_L, |01⟩_L, |10⟩_L, |11⟩_L, |a⟩`.
    pub kets: [usize; 5],
}

impl CpSetup {
    fn ket(&self, amps: &[(usize, C64)]) -> CVector {
        let mut v = CVector::zeros(self.model.states().len());
        for &(k, a) in amps {
            v[self.kets[k]] = a;
        }
        v
    }

    /// `(|10⟩_L + |11⟩_L)/√2`.
    pub fn initial_state(&self) -> CVector {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        self.ket(&[(2, s), (3, s)])
    }

    /// Ideal image of the initial state at time `t`: `|10⟩_L` is idle and
    /// `|11⟩_L` follows the two-level loop through `|a⟩`.
    pub fn ideal_state_at(&self, t: f64) -> CVector {
        let u = ideal_evolution_at(&self.pulse, t);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.ket(&[(2, C64::new(s, 0.0)), (3, u[(1, 1)] * s), (4, u[(0, 1)] * s)])
    }

    pub fn basis_ket(&self, k: usize) -> CVector {
        self.ket(&[(k, C64::new(1.0, 0.0))])
    }
}

pub fn cp_setup(lattice: &LatticeSpec, p: &Params, include_spectators: bool) -> Result<CpSetup, ExperimentError> {
    if lattice.n_transmons() != 4 {
        return Err(ExperimentError::Config(format!(
            "CP recipes need a 4-transmon device, got {}",
            lattice.n_transmons()
        )));
    }
    let g24 = lattice
        .coupling(1, 3)
        .ok_or_else(|| ExperimentError::Config("CP recipes need a coupling for pair [1, 3]".into()))?;
    let lattice = if p.decoherence { lattice.clone() } else { lattice.without_decoherence() };
    let omega = effective_rabi_cp(g24, p.gamma_mod_cp)?;
    let target = GateTarget::controlled_phase(p.gamma_cp)?;
    let pulse = synthesize(&target, omega, Some(p.delta2()))?;
    let drive = cp_gate_drive(&lattice, &pulse, p.gamma_mod_cp)?;
    let model = cp_model(
        &lattice,
        &drive,
        pulse.delta(),
        p.bessel_order,
        include_spectators,
        Truncation::MaxExcitations(2),
    )?;
    // Without spectator couplings T₀ and T₂ are frozen and the master
    // equation runs over the driven pair only.
    let damped: &[usize] = if include_spectators { &[0, 1, 2, 3] } else { &[1, 3] };
    let collapse = collapse_operators_for(&lattice, damped).restricted(model.states());
    let grid = TimeGrid::new(0.0, pulse.tau(), p.dt_ns())?;
    let enc = Encoding::s2();
    let local = |full: usize| model.local_index(full).expect("two-excitation states are kept");
    let l = enc.logical_indices();
    let kets = [local(l[0]), local(l[1]), local(l[2]), local(l[3]), local(enc.auxiliary().expect("S2 auxiliary"))];
    let gamma = (pulse.phi_minus() + PI).rem_euclid(2.0 * PI);
    Ok(CpSetup { lattice, pulse, drive, model, collapse, grid, gamma, kets })
}
