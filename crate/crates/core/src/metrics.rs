//! Gate, process and state fidelities and populations.

use serde::{Deserialize, Serialize};

use crate::numerics::{hermitian_eigen, CMatrix, CVector, NumericsError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMethod {
    TraceFormula,
    AvgFromChoi,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Raw value, not clipped.
    pub value: f64,
    pub method: FidelityMethod,
    pub leakage: f64,
}

impl FidelityReport {
    /// Value clipped to `[0, 1]` for display.
    pub fn clipped(&self) -> f64 {
        self.value.clamp(0.0, 1.0)
    }
}

/// `|Tr(U†V)| / d`.
pub fn gate_fidelity_trace(u_ideal: &CMatrix, u_actual: &CMatrix) -> FidelityReport {
    assert_eq!(u_ideal.shape(), u_actual.shape(), "gate dimensions differ");
    let d = u_ideal.nrows() as f64;
    let value = (u_ideal.adjoint() * u_actual).trace().norm() / d;
    let kept = (u_actual.adjoint() * u_actual).trace().re / d;
    FidelityReport { value, method: FidelityMethod::TraceFormula, leakage: 1.0 - kept }
}

/// `|U⟩⟩` with components `(k·d + a) ↦ U[a, k]`.
pub fn vectorize(u: &CMatrix) -> CVector {
    let d = u.nrows();
    CVector::from_fn(d * d, |i, _| u[(i % d, i / d)])
}

/// Choi matrix of `ρ ↦ UρU†` in the same layout as the Lindblad engine.
pub fn unitary_choi(u: &CMatrix) -> CMatrix {
    let v = vectorize(u);
    &v * v.adjoint()
}

/// `⟨⟨U|Choi|U⟩⟩ / d²`.
pub fn process_fidelity(choi: &CMatrix, u_ideal: &CMatrix) -> f64 {
    let d = u_ideal.nrows();
    assert_eq!(choi.nrows(), d * d, "Choi dimension must be d^2");
    let v = vectorize(u_ideal);
    (v.adjoint() * choi * v)[(0, 0)].re / (d * d) as f64
}

/// `F_avg = (d·F_pro + 1)/(d + 1)` with leakage `(d - Tr Choi)/d`.
pub fn avg_gate_fidelity_from_choi(choi: &CMatrix, u_ideal: &CMatrix, d: usize) -> FidelityReport {
    assert_eq!(u_ideal.nrows(), d, "gate dimension must be d");
    let f_pro = process_fidelity(choi, u_ideal);
    FidelityReport {
        value: (d as f64 * f_pro + 1.0) / (d as f64 + 1.0),
        method: FidelityMethod::AvgFromChoi,
        leakage: (d as f64 - choi.trace().re) / d as f64,
    }
}

/// Leading Kraus operator `√λ·unvec(v)` from the largest Choi eigenpair.
pub fn dominant_kraus(choi: &CMatrix, d: usize) -> Result<CMatrix, NumericsError> {
    let herm = (choi + choi.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = hermitian_eigen(&herm)?;
    let top = vals.len() - 1;
    let scale = vals[top].max(0.0).sqrt();
    Ok(CMatrix::from_fn(d, d, |a, k| vecs[(k * d + a, top)] * scale))
}

/// Trace formula applied to the dominant Kraus operator of the channel.
pub fn trace_fidelity_from_choi(choi: &CMatrix, u_ideal: &CMatrix, d: usize) -> Result<FidelityReport, NumericsError> {
    let k0 = dominant_kraus(choi, d)?;
    let value = (u_ideal.adjoint() * k0).trace().norm() / d as f64;
    Ok(FidelityReport {
        value,
        method: FidelityMethod::TraceFormula,
        leakage: (d as f64 - choi.trace().re) / d as f64,
    })
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn state_fidelity(rho: &CMatrix, psi: &CVector) -> f64 {
    assert_eq!(rho.nrows(), psi.len(), "state dimensions differ");
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub values: Vec<f64>,
    /// `1 - Σ values`.
    pub outside: f64,
}

pub fn populations(rho: &CMatrix, kets: &[CVector]) -> Populations {
    let values: Vec<f64> = kets.iter().map(|k| state_fidelity(rho, k)).collect();
    let outside = rho.trace().re - values.iter().sum::<f64>();
    Populations { values, outside }
}
