//! Mean-field factorization: electrons in the field of classical mode
//! displacements, iterated to self-consistency on the dipole moments.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{PfvError, Result};
use crate::lapack;
use crate::model::Model;
use crate::operators::{ElecFactor, OneBodyKind, OpTerm, ProdTerm, SparseOperator, C_ONE};
use crate::solver::{dense_lowest_from_op, EigenSolveConfig, QuantumState};

/// Mean-field iteration controls.
#[derive(Debug, Clone, Serialize)]
pub struct ScfConfig {
    /// New-iterate weight in the linear dipole mixing.
    pub eta: f64,
    /// Convergence threshold on the largest dipole change per cycle.
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig { eta: 0.5, tol: 1e-10, max_cycles: 200 }
    }
}

/// Converged (or best-effort) factorized solution.
#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldSolution {
    /// Electronic coefficients on the packed grid basis.
    #[serde(skip)]
    pub electronic: Vec<Complex64>,
    /// Ground energy of the electronic Hamiltonian at the final field
    /// configuration (includes the mean-field coupling and self terms).
    pub electronic_energy: f64,
    /// Classical momenta ⟨p̂_α⟩ used in the final electronic solve.
    pub p_cl: Vec<f64>,
    /// Measured dipole projections ⟨λ_α·R⟩ of the final electronic state.
    pub dipole: Vec<f64>,
    /// Electronic energy plus the classical mode energies, equal to the
    /// expectation of the full Hamiltonian in the product ansatz.
    pub total_energy: f64,
    pub cycles: usize,
    pub converged: bool,
    /// ω²⟨p̂⟩ − ω⟨λ·R⟩ + f/ω per mode.
    pub force_residuals: Vec<f64>,
}

/// Solve the coupled system in the factorized ansatz. Mode momenta follow
/// the stationarity condition p_α = d_α/ω_α − f_α/ω_α³ for the current
/// dipole guess; the electrons then see the shifted one-body potential
/// ½(λ·R)² − Σ_α ω_α p_α (λ_α·R); dipoles are linearly mixed until the
/// largest change falls below `cfg.tol`.
pub fn scf_meanfield(
    model: &Model,
    cfg: &ScfConfig,
    eig: &EigenSolveConfig,
) -> Result<MeanFieldSolution> {
    let spec = model.spec();
    let nm = spec.modes.len();
    if !(cfg.eta > 0.0 && cfg.eta <= 1.0) {
        return Err(PfvError::Config(format!(
            "mixing weight must lie in (0, 1], got {}",
            cfg.eta
        )));
    }
    if cfg.max_cycles == 0 {
        return Err(PfvError::Config("max_cycles must be positive".into()));
    }

    // Electron-only companion system: same grid, potential, and interaction,
    // no modes. Its packed electronic basis is identical to the full model's,
    // so the full model's dipole diagonals can be reused verbatim.
    let mut elec_spec = spec.clone();
    elec_spec.modes.clear();
    let elec_model = Model::new(elec_spec)?;
    let eb = elec_model.backbone().clone();
    let full_bb = model.backbone();
    let elec_dim = eb.elec_dim;
    if elec_dim > eig.dense_cap {
        return Err(PfvError::DenseCap { dim: elec_dim, cap: eig.dense_cap });
    }
    let phases = vec![0u8; elec_dim];

    let mut d = vec![0.0f64; nm];
    let mut p = vec![0.0f64; nm];
    let mut d_raw = vec![0.0f64; nm];
    let mut e_elec = 0.0f64;
    let mut psi: Vec<f64> = Vec::new();
    let mut cycles = 0usize;
    let mut converged = false;
    let mut prev_delta = f64::INFINITY;
    let mut stalled = 0usize;

    for cycle in 1..=cfg.max_cycles {
        cycles = cycle;
        for (a, m) in spec.modes.iter().enumerate() {
            p[a] = d[a] / m.omega - m.drive / m.omega.powi(3);
        }

        // ½ Σ_α (λ_α·R)² − Σ_α ω_α p_α (λ_α·R) on the packed basis.
        let mut extra: Vec<f64> =
            full_bb.dipole_sq_sum.iter().map(|&v| 0.5 * v).collect();
        for (a, m) in spec.modes.iter().enumerate() {
            let coeff = m.omega * p[a];
            for (slot, &dv) in extra.iter_mut().zip(full_bb.dipole_diag[a].iter()) {
                *slot -= coeff * dv;
            }
        }
        let terms = vec![
            OpTerm::Prod(ProdTerm {
                scale: C_ONE,
                elec: ElecFactor::OneBody(OneBodyKind::Kinetic),
                mode: None,
            }),
            OpTerm::Prod(ProdTerm {
                scale: C_ONE,
                elec: ElecFactor::Diag(eb.v_diag.clone()),
                mode: None,
            }),
            OpTerm::Prod(ProdTerm {
                scale: C_ONE,
                elec: ElecFactor::Diag(eb.w_diag.clone()),
                mode: None,
            }),
            OpTerm::Prod(ProdTerm {
                scale: C_ONE,
                elec: ElecFactor::Diag(Arc::new(extra)),
                mode: None,
            }),
        ];
        let op = SparseOperator::from_parts(eb.clone(), terms, true);
        let (w, z) = dense_lowest_from_op(&op, &phases, 1)?;
        e_elec = w[0];
        psi = z[..elec_dim].to_vec();
        let nrm2: f64 = psi.iter().map(|x| x * x).sum();

        for (a, slot) in d_raw.iter_mut().enumerate() {
            *slot = psi
                .iter()
                .zip(full_bb.dipole_diag[a].iter())
                .map(|(&c, &dv)| c * c * dv)
                .sum::<f64>()
                / nrm2;
        }

        let delta = d_raw
            .iter()
            .zip(&d)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if delta <= cfg.tol {
            d.copy_from_slice(&d_raw);
            converged = true;
            break;
        }
        if delta >= prev_delta {
            stalled += 1;
            if stalled >= 10 {
                return Err(PfvError::Scf(format!(
                    "dipole iteration stopped decreasing for {stalled} consecutive cycles \
                     (last change {delta:.3e}); reduce the mixing weight"
                )));
            }
        } else {
            stalled = 0;
        }
        prev_delta = delta;
        for (slot, &raw) in d.iter_mut().zip(&d_raw) {
            *slot = (1.0 - cfg.eta) * *slot + cfg.eta * raw;
        }
    }

    // Classical mode energy at the final configuration: the q-quadrature
    // ground contributes ω/2, the displaced momentum ½ω²p² + (f/ω)p.
    let mode_energy: f64 = spec
        .modes
        .iter()
        .zip(&p)
        .map(|(m, &pa)| 0.5 * m.omega + 0.5 * m.omega * m.omega * pa * pa + m.drive / m.omega * pa)
        .sum();
    let force_residuals: Vec<f64> = spec
        .modes
        .iter()
        .enumerate()
        .map(|(a, m)| m.omega * m.omega * p[a] - m.omega * d_raw[a] + m.drive / m.omega)
        .collect();

    Ok(MeanFieldSolution {
        electronic: psi.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
        electronic_energy: e_elec,
        p_cl: p,
        dipole: d_raw,
        total_energy: e_elec + mode_energy,
        cycles,
        converged,
        force_residuals,
    })
}

/// Ground state of ½(q̂² + ω²p̂²) + c·p̂ on the truncated number basis. The
/// i^n rotation turns the operator into the real symmetric tridiagonal with
/// the oscillator diagonal (truncated corner ω·n_max/2) and off-diagonal
/// c·√((n+1)/(2ω)); the rotation is undone on the returned vector.
pub(crate) fn displaced_mode_ground(omega: f64, dim: usize, c: f64) -> Result<Vec<Complex64>> {
    let diag: Vec<f64> = (0..dim)
        .map(|n| {
            if n + 1 == dim {
                omega * (n as f64) / 2.0
            } else {
                omega * (n as f64 + 0.5)
            }
        })
        .collect();
    let off: Vec<f64> = (0..dim.saturating_sub(1))
        .map(|n| c * ((n as f64 + 1.0) / (2.0 * omega)).sqrt())
        .collect();
    let (_, z) = lapack::tridiagonal_eigen(&diag, &off)?;
    let rot = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    Ok((0..dim).map(|n| rot[n % 4] * z[n]).collect())
}

/// Embed a mean-field solution into the full quantum basis as an explicit
/// product state: the electronic vector times, per mode, the ground state of
/// ½(q̂² + ω²p̂²) + c_α p̂ with c_α = f_α/ω_α − ω_α⟨λ_α·R⟩, evaluated in the
/// same truncated number basis as the model.
pub fn assemble_product_state(model: &Model, mf: &MeanFieldSolution) -> Result<QuantumState> {
    let bb = model.backbone();
    let spec = model.spec();
    if mf.electronic.len() != bb.elec_dim {
        return Err(PfvError::DimensionMismatch {
            expected: bb.elec_dim,
            got: mf.electronic.len(),
        });
    }
    if mf.dipole.len() != spec.modes.len() {
        return Err(PfvError::DimensionMismatch {
            expected: spec.modes.len(),
            got: mf.dipole.len(),
        });
    }

    let mut mode_states: Vec<Vec<Complex64>> = Vec::with_capacity(spec.modes.len());
    for (a, m) in spec.modes.iter().enumerate() {
        let c = m.drive / m.omega - m.omega * mf.dipole[a];
        mode_states.push(displaced_mode_ground(m.omega, bb.mode_dims[a], c)?);
    }

    let mut coeffs = vec![Complex64::new(0.0, 0.0); bb.flat_dim()];
    for config in 0..bb.mode_total {
        let mut amp = Complex64::new(1.0, 0.0);
        for (a, states) in mode_states.iter().enumerate() {
            let n = (config / bb.mode_strides[a]) % bb.mode_dims[a];
            amp *= states[n];
        }
        let base = config * bb.elec_dim;
        for (k, &e) in mf.electronic.iter().enumerate() {
            coeffs[base + k] = amp * e;
        }
    }
    QuantumState::from_coeffs(model, coeffs)
}
