//! Term-by-term energy decomposition of a state, together with the moments
//! entering every identity check.

use serde::Serialize;

use crate::error::{PfvError, Result};
use crate::model::Model;
use crate::operators::{ModeSel, SparseOperator, TermId};
use crate::solver::QuantumState;

/// Per-mode expectation values.
#[derive(Debug, Clone, Serialize)]
pub struct ModeBreakdown {
    /// Mode frequency, copied from the system description.
    pub omega: f64,
    /// ⟨q̂²⟩.
    pub q2: f64,
    /// ω²⟨p̂²⟩.
    pub w2p2: f64,
    /// ⟨p̂⟩.
    pub p: f64,
    /// ⟨λ·R⟩, the total dipole projected on this mode's coupling vector.
    pub dipole: f64,
    /// M = −Im⟨(λ·∇)q̂⟩/ω, the mixed matter–mode moment.
    pub m: f64,
}

/// All scalar expectation values a report needs, computed in one pass.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyBreakdown {
    /// ⟨T̂⟩.
    pub kinetic: f64,
    /// ⟨V̂⟩.
    pub external_potential: f64,
    /// ⟨Ŵ⟩.
    pub interaction: f64,
    /// Σ_α ⟨½(q̂² + ω²p̂²)⟩.
    pub field_energy: f64,
    /// ⟨−Σ_α ω_α (λ_α·R) p̂_α⟩.
    pub dipole_coupling: f64,
    /// ⟨½ Σ_α (λ_α·R)²⟩.
    pub dipole_self_energy: f64,
    /// ⟨Σ_α (f_α/ω_α) p̂_α⟩.
    pub external_drive: f64,
    /// ⟨Ĥ⟩, assembled independently of the seven summands.
    pub total: f64,
    /// ⟨Σ_i r_i·∇v(r_i)⟩.
    pub r_dot_gradv: f64,
    /// ⟨−Σ_{i<j} |r_i−r_j| w′(|r_i−r_j|)⟩, the interaction virial kernel.
    pub w_vir: f64,
    /// Per-mode moments, in mode order.
    pub modes: Vec<ModeBreakdown>,
    /// ‖Ĥψ − Eψ‖ of the supplied state.
    pub eigenresidual: f64,
    /// Set when the eigenresidual exceeds the caller's gate; never an error,
    /// so reports on non-eigenstates stay available.
    pub noneigen_warning: bool,
    /// Largest imaginary part seen across the Hermitian expectations; a
    /// numerical-health indicator.
    pub max_imag: f64,
}

fn real_expectation(
    op: &SparseOperator,
    psi: &[num_complex::Complex64],
    max_imag: &mut f64,
) -> f64 {
    let z = op.expectation(psi);
    *max_imag = max_imag.max(z.im.abs());
    z.re
}

/// Evaluate every term and moment on `state`. `eigres_gate` only controls the
/// warning flag; any normalized state is accepted.
pub fn energy_breakdown(
    model: &Model,
    state: &QuantumState,
    eigres_gate: f64,
) -> Result<EnergyBreakdown> {
    if state.coeffs.len() != model.dim() {
        return Err(PfvError::DimensionMismatch {
            expected: model.dim(),
            got: state.coeffs.len(),
        });
    }
    let psi = &state.coeffs;
    let mut max_imag = 0.0f64;
    let term = |id: TermId, mi: &mut f64| -> Result<f64> {
        Ok(real_expectation(&model.term(id)?, psi, mi))
    };

    let kinetic = term(TermId::Kinetic, &mut max_imag)?;
    let external_potential = term(TermId::ExternalPotential, &mut max_imag)?;
    let interaction = term(TermId::Interaction, &mut max_imag)?;
    let field_energy = term(TermId::FieldEnergy, &mut max_imag)?;
    let dipole_coupling = term(TermId::DipoleCoupling, &mut max_imag)?;
    let dipole_self_energy = term(TermId::DipoleSelfEnergy, &mut max_imag)?;
    let external_drive = term(TermId::ExternalDrive, &mut max_imag)?;
    let total = term(TermId::Total, &mut max_imag)?;

    let bb = model.backbone();
    let r_dot_gradv =
        real_expectation(&model.diag_operator(bb.rgradv_diag.clone()), psi, &mut max_imag);
    let w_vir = real_expectation(&model.diag_operator(bb.wvir_diag.clone()), psi, &mut max_imag);

    let mut modes = Vec::with_capacity(model.spec().modes.len());
    for (a, mode) in model.spec().modes.iter().enumerate() {
        let q2 = real_expectation(&model.mode_moment(a, ModeSel::Q2), psi, &mut max_imag);
        let w2p2 = real_expectation(&model.mode_moment(a, ModeSel::P2), psi, &mut max_imag);
        let p = real_expectation(&model.mode_moment(a, ModeSel::P), psi, &mut max_imag);
        let dipole =
            real_expectation(&model.diag_operator(bb.dipole_diag[a].clone()), psi, &mut max_imag);
        // (λ·∇)q̂ is not Hermitian; the moment lives in its imaginary part.
        let m = -model.dirgrad_q(a).expectation(psi).im / mode.omega;
        modes.push(ModeBreakdown { omega: mode.omega, q2, w2p2, p, dipole, m });
    }

    Ok(EnergyBreakdown {
        kinetic,
        external_potential,
        interaction,
        field_energy,
        dipole_coupling,
        dipole_self_energy,
        external_drive,
        total,
        r_dot_gradv,
        w_vir,
        modes,
        eigenresidual: state.eigenresidual,
        noneigen_warning: state.eigenresidual > eigres_gate,
        max_imag,
    })
}
