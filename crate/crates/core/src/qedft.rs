//! Density-functional round trip: extract the density, invert it to an
//! effective one-body potential, solve the uncoupled auxiliary system, and
//! check the force and virial statements that connect the two pictures.

use num_complex::Complex64;
use serde::Serialize;

use crate::breakdown::EnergyBreakdown;
use crate::error::{PfvError, Result};
use crate::lapack;
use crate::model::Model;
use crate::operators::{CMat, ElecSpace};
use crate::scf::displaced_mode_ground;
use crate::solver::QuantumState;
use crate::spec::{Exchange, ModeSpec, DENSITY_FLOOR};
use crate::virial::{make_row, IdentityRow, Tolerances};

/// Particle density sampled on the grid sites, in per-volume units:
/// Σ_s values[s]·vol = N.
#[derive(Debug, Clone, Serialize)]
pub struct DensityProfile {
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(values: Vec<f64>) -> DensityProfile {
        DensityProfile { values }
    }
}

/// Site density of a quantum state, summed over mode configurations and
/// electrons, normalized so the per-volume values integrate to the electron
/// count.
pub fn density_from_state(model: &Model, state: &QuantumState) -> DensityProfile {
    let bb = model.backbone();
    let geom = &bb.geom;
    assert_eq!(state.coeffs.len(), model.dim(), "state dimension mismatch");
    let mut vals = vec![0.0f64; geom.sites];
    match &bb.elec {
        ElecSpace::Single => {
            for config in 0..bb.mode_total {
                let base = config * bb.elec_dim;
                for (s, slot) in vals.iter_mut().enumerate() {
                    *slot += state.coeffs[base + s].norm_sqr();
                }
            }
        }
        ElecSpace::Pair { pairs, .. } => {
            for config in 0..bb.mode_total {
                let base = config * bb.elec_dim;
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let w = state.coeffs[base + k].norm_sqr();
                    if i == j {
                        vals[i as usize] += 2.0 * w;
                    } else {
                        vals[i as usize] += w;
                        vals[j as usize] += w;
                    }
                }
            }
        }
    }
    let n = model.spec().electrons.count as f64;
    let total: f64 = vals.iter().sum::<f64>() * geom.volume_element;
    if total > 0.0 {
        let scale = n / total;
        vals.iter_mut().for_each(|v| *v *= scale);
    }
    DensityProfile { values: vals }
}

/// Parse a 1D density from CSV rows `x, rho`, validating that the sample
/// points match the model's grid. Blank lines and a leading non-numeric
/// header row are tolerated.
pub fn density_from_csv(model: &Model, text: &str) -> Result<DensityProfile> {
    let geom = &model.backbone().geom;
    if geom.dims != 1 {
        return Err(PfvError::Qedft("CSV densities are supported on 1D grids only".into()));
    }
    let mut values = Vec::with_capacity(geom.sites);
    let mut site = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (xs, rs) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        let (x, rho) = match (xs.parse::<f64>(), rs.parse::<f64>()) {
            (Ok(x), Ok(r)) => (x, r),
            _ if lineno == 0 => continue,
            _ => {
                return Err(PfvError::Qedft(format!(
                    "CSV line {}: expected `x, rho`, got `{line}`",
                    lineno + 1
                )))
            }
        };
        if cols.next().is_some() {
            return Err(PfvError::Qedft(format!(
                "CSV line {}: expected exactly two columns",
                lineno + 1
            )));
        }
        if site >= geom.sites {
            return Err(PfvError::Qedft(format!(
                "CSV holds more rows than the {} grid sites",
                geom.sites
            )));
        }
        let expect = geom.mins[0] + geom.steps[0] * site as f64;
        if (x - expect).abs() > 1e-9 * expect.abs().max(1.0) {
            return Err(PfvError::Qedft(format!(
                "CSV line {}: x = {x} does not match grid point {expect}",
                lineno + 1
            )));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(PfvError::Qedft(format!(
                "CSV line {}: density must be finite and non-negative",
                lineno + 1
            )));
        }
        values.push(rho);
        site += 1;
    }
    if site != geom.sites {
        return Err(PfvError::Qedft(format!(
            "CSV holds {site} samples for {} grid sites",
            geom.sites
        )));
    }
    Ok(DensityProfile { values })
}

/// Result of a density inversion: the effective potential on every site
/// (gauge-fixed to min zero over the interior) and the interior mask.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialInversion {
    pub v_s: Vec<f64>,
    pub mask: Vec<bool>,
    pub interior_count: usize,
}

fn invert_from_density(model: &Model, rho: &DensityProfile) -> Result<PotentialInversion> {
    let geom = &model.backbone().geom;
    if rho.values.len() != geom.sites {
        return Err(PfvError::DimensionMismatch {
            expected: geom.sites,
            got: rho.values.len(),
        });
    }
    if rho.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(PfvError::Qedft("density must be finite and non-negative".into()));
    }
    let mask: Vec<bool> = rho.values.iter().map(|&v| v >= DENSITY_FLOOR).collect();
    let interior_count = mask.iter().filter(|&&m| m).count();
    if interior_count == 0 {
        return Err(PfvError::Qedft(format!(
            "density lies everywhere below the floor {DENSITY_FLOOR:.1e}"
        )));
    }

    // The orbital shape: the overall normalization cancels in ∇²φ/φ.
    let phi: Vec<f64> = rho.values.iter().map(|&v| v.sqrt()).collect();
    let mut v_s = vec![0.0f64; geom.sites];
    for s in 0..geom.sites {
        if !mask[s] {
            continue;
        }
        let mut lap = 0.0;
        for a in 0..geom.dims {
            let h2 = geom.steps[a] * geom.steps[a];
            let i = geom.axis_index(s, a);
            let left = if i > 0 { phi[s - geom.strides[a]] } else { 0.0 };
            let right = if i + 1 < geom.points[a] { phi[s + geom.strides[a]] } else { 0.0 };
            lap += (left - 2.0 * phi[s] + right) / h2;
        }
        v_s[s] = lap / (2.0 * phi[s]);
    }

    // Continue the potential as a constant into the low-density tails so the
    // auxiliary solve sees confining walls instead of spurious zero wells.
    if geom.dims == 1 {
        let first = mask.iter().position(|&m| m).unwrap();
        let last = mask.iter().rposition(|&m| m).unwrap();
        for s in 0..first {
            v_s[s] = v_s[first];
        }
        for s in last + 1..geom.sites {
            v_s[s] = v_s[last];
        }
    }

    let vmin = v_s
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    v_s.iter_mut().for_each(|v| *v -= vmin);
    Ok(PotentialInversion { v_s, mask, interior_count })
}

/// Invert a one-electron density: v_s = ∇²√ρ / (2√ρ) on the interior where
/// the density exceeds the floor, gauge-fixed to min zero.
pub fn invert_potential_single_electron(
    model: &Model,
    rho: &DensityProfile,
) -> Result<PotentialInversion> {
    if model.spec().electrons.count != 1 {
        return Err(PfvError::Qedft(
            "single-electron inversion requires a one-electron system".into(),
        ));
    }
    invert_from_density(model, rho)
}

/// The uncoupled stand-in system: electrons in the effective potential,
/// modes under the effective forces, no cross terms.
#[derive(Debug, Clone, Serialize)]
pub struct AuxiliarySystem {
    pub v_s: Vec<f64>,
    pub f_s: Vec<f64>,
    pub mask: Vec<bool>,
}

impl AuxiliarySystem {
    pub fn new(v_s: Vec<f64>, f_s: Vec<f64>, mask: Vec<bool>) -> AuxiliarySystem {
        AuxiliarySystem { v_s, f_s, mask }
    }
}

/// Effective mode forces that reproduce the target momenta in the uncoupled
/// system: the drive term (f_s/ω)p̂ displaces the ground state to
/// ⟨p̂⟩ = −f_s/ω³, so f_s = −ω³·p_target.
pub fn aux_mode_forces(p_targets: &[f64], modes: &[ModeSpec]) -> Vec<f64> {
    p_targets
        .iter()
        .zip(modes)
        .map(|(&p, m)| -m.omega.powi(3) * p)
        .collect()
}

/// Ground-state summary of the auxiliary system.
#[derive(Debug, Clone, Serialize)]
pub struct AuxSolution {
    pub density: DensityProfile,
    /// Ground eigenvalue of −½∇² + v_s (single orbital).
    pub orbital_energy: f64,
    /// Total kinetic energy: N times the orbital kinetic expectation.
    pub t_phi: f64,
    pub mode_p: Vec<f64>,
    pub mode_q2: Vec<f64>,
    pub mode_w2p2: Vec<f64>,
}

fn cmat_expectation(m: &CMat, psi: &[Complex64]) -> f64 {
    let n = m.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += psi[i].conj() * m.get(i, j) * psi[j];
        }
    }
    acc.re
}

/// Solve the auxiliary system: a dense site-basis ground state for the
/// orbital (all N electrons occupy it) and, per mode, the displaced
/// oscillator ground under the effective drive.
pub fn solve_auxiliary(model: &Model, aux: &AuxiliarySystem) -> Result<AuxSolution> {
    let bb = model.backbone();
    let geom = &bb.geom;
    let spec = model.spec();
    let n = geom.sites;
    if aux.v_s.len() != n || aux.mask.len() != n {
        return Err(PfvError::Qedft(format!(
            "auxiliary potential/mask must cover all {n} sites"
        )));
    }
    if aux.f_s.len() != spec.modes.len() {
        return Err(PfvError::Qedft(format!(
            "expected {} mode forces, got {}",
            spec.modes.len(),
            aux.f_s.len()
        )));
    }

    // Dense one-particle matrix over every site: the 3-point kinetic stencil
    // with hard walls plus the diagonal potential.
    let mut a = vec![0.0f64; n * n];
    for s in 0..n {
        let mut diag = aux.v_s[s];
        for ax in 0..geom.dims {
            let h2 = geom.steps[ax] * geom.steps[ax];
            diag += 1.0 / h2;
            if geom.axis_index(s, ax) + 1 < geom.points[ax] {
                let t = s + geom.strides[ax];
                a[s * n + t] = -0.5 / h2;
                a[t * n + s] = -0.5 / h2;
            }
        }
        a[s * n + s] = diag;
    }
    let (w, z) = lapack::symmetric_lowest(&mut a, n, 1)?;
    let phi = &z[..n];
    let nrm2: f64 = phi.iter().map(|x| x * x).sum();
    let nelec = spec.electrons.count as f64;

    let density = DensityProfile {
        values: phi
            .iter()
            .map(|&x| nelec * x * x / (nrm2 * geom.volume_element))
            .collect(),
    };
    let mut t1 = 0.0f64;
    for s in 0..n {
        for ax in 0..geom.dims {
            let h2 = geom.steps[ax] * geom.steps[ax];
            t1 += phi[s] * phi[s] / h2;
            if geom.axis_index(s, ax) + 1 < geom.points[ax] {
                t1 -= phi[s] * phi[s + geom.strides[ax]] / h2;
            }
        }
    }
    let t_phi = nelec * t1 / nrm2;

    let mut mode_p = Vec::with_capacity(spec.modes.len());
    let mut mode_q2 = Vec::with_capacity(spec.modes.len());
    let mut mode_w2p2 = Vec::with_capacity(spec.modes.len());
    for (alpha, m) in spec.modes.iter().enumerate() {
        let c = aux.f_s[alpha] / m.omega;
        let psi = displaced_mode_ground(m.omega, bb.mode_dims[alpha], c)?;
        let mats = model.mode_matrices(alpha);
        mode_p.push(cmat_expectation(&mats.p, &psi));
        mode_q2.push(cmat_expectation(&mats.q2, &psi));
        mode_w2p2.push(cmat_expectation(&mats.p2, &psi));
    }

    Ok(AuxSolution { density, orbital_energy: w[0], t_phi, mode_p, mode_q2, mode_w2p2 })
}

/// Σ_{s∈mask} (−Σ_a x_a·D_a v_s + r·∇v) ρ vol, with the numeric central
/// difference of the effective potential (zero at the grid edges) against
/// the analytic external-potential kernel.
fn virial_rhs(model: &Model, mask: &[bool], rho: &[f64], v_s: &[f64]) -> f64 {
    let bb = model.backbone();
    let geom = &bb.geom;
    let mut rhs = 0.0;
    for s in 0..geom.sites {
        if !mask[s] {
            continue;
        }
        let mut xdv = 0.0;
        for a in 0..geom.dims {
            let i = geom.axis_index(s, a);
            if i == 0 || i + 1 == geom.points[a] {
                continue;
            }
            let dv = (v_s[s + geom.strides[a]] - v_s[s - geom.strides[a]])
                / (2.0 * geom.steps[a]);
            xdv += geom.coord(s, a) * dv;
        }
        rhs += (-xdv + bb.site_rgradv[s]) * rho[s] * geom.volume_element;
    }
    rhs
}

fn identity_i_row(
    bd: &EnergyBreakdown,
    t_phi: f64,
    rhs: f64,
    tol: f64,
    abs_floor: f64,
    note: Option<String>,
) -> IdentityRow {
    let lhs = 2.0 * (bd.kinetic - t_phi) + bd.w_vir
        - bd.dipole_coupling
        - 2.0 * bd.dipole_self_energy;
    let scale = 2.0 * bd.kinetic.abs()
        + 2.0 * t_phi.abs()
        + bd.w_vir.abs()
        + bd.dipole_coupling.abs()
        + 2.0 * bd.dipole_self_energy.abs()
        + rhs.abs();
    make_row("qedft_i", lhs - rhs, scale, None, None, tol, abs_floor, note)
}

/// Full density-functional consistency report.
#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub interior_count: usize,
    /// L2 gap between the target and auxiliary densities over the interior.
    pub density_l2: f64,
    /// Largest gap between the auxiliary and target mode momenta.
    pub displacement_gap: f64,
    pub identity_i: IdentityRow,
    pub identity_ii: IdentityRow,
    /// ⟨Ĥ_c⟩ reconstructed purely from auxiliary-system data.
    pub recovered_hc: f64,
    pub direct_hc: f64,
}

/// Invert the state's density, solve the auxiliary system it defines, and
/// verify the round trip: density match, momentum match, and the two
/// interacting-vs-auxiliary identities.
pub fn ks_round_trip(
    model: &Model,
    state: &QuantumState,
    bd: &EnergyBreakdown,
    tols: &Tolerances,
) -> Result<KsReport> {
    let spec = model.spec();
    let geom = &model.backbone().geom;
    let rho = density_from_state(model, state);
    let inv = invert_potential_single_electron(model, &rho)?;
    let p_targets: Vec<f64> = bd.modes.iter().map(|m| m.p).collect();
    let f_s = aux_mode_forces(&p_targets, &spec.modes);
    let aux = AuxiliarySystem::new(inv.v_s.clone(), f_s.clone(), inv.mask.clone());
    let sol = solve_auxiliary(model, &aux)?;

    let density_l2 = rho
        .values
        .iter()
        .zip(&sol.density.values)
        .zip(&inv.mask)
        .filter(|(_, &m)| m)
        .map(|((&a, &b), _)| (a - b) * (a - b) * geom.volume_element)
        .sum::<f64>()
        .sqrt();
    if density_l2 > tols.density_l2 {
        return Err(PfvError::Qedft(format!(
            "density round trip failed: L2 gap {density_l2:.3e} exceeds {:.3e}",
            tols.density_l2
        )));
    }
    let displacement_gap = sol
        .mode_p
        .iter()
        .zip(&p_targets)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if displacement_gap > 1e-8 {
        return Err(PfvError::Qedft(format!(
            "mode momentum round trip failed: gap {displacement_gap:.3e}"
        )));
    }

    let rhs_i = virial_rhs(model, &inv.mask, &rho.values, &aux.v_s);
    let identity_i = identity_i_row(bd, sol.t_phi, rhs_i, tols.qedft_i, tols.abs_floor, None);

    let mut lhs_ii = bd.dipole_coupling;
    let mut scale_ii = bd.dipole_coupling.abs();
    let mut rhs_ii = 0.0;
    let mut quad_diff = 0.0;
    for (alpha, m) in spec.modes.iter().enumerate() {
        let d_psi = bd.modes[alpha].w2p2 - bd.modes[alpha].q2;
        let d_phi = sol.mode_w2p2[alpha] - sol.mode_q2[alpha];
        lhs_ii += d_psi - d_phi;
        quad_diff += d_psi - d_phi;
        rhs_ii += (f_s[alpha] - m.drive) / m.omega * p_targets[alpha];
        scale_ii += bd.modes[alpha].w2p2.abs() + bd.modes[alpha].q2.abs() + d_phi.abs();
    }
    scale_ii += rhs_ii.abs();
    let identity_ii = make_row(
        "qedft_ii",
        lhs_ii - rhs_ii,
        scale_ii,
        None,
        None,
        tols.qedft_ii,
        tols.abs_floor,
        None,
    );
    let recovered_hc = rhs_ii - quad_diff;

    Ok(KsReport {
        interior_count: inv.interior_count,
        density_l2,
        displacement_gap,
        identity_i,
        identity_ii,
        recovered_hc,
        direct_hc: bd.dipole_coupling,
    })
}

/// Two-electron variant with the exact singlet inversion √(ρ/2) supplying
/// the external effective potential.
#[derive(Debug, Clone, Serialize)]
pub struct ExternalVsReport {
    pub t_phi: f64,
    pub identity_i: IdentityRow,
    pub interior_count: usize,
}

pub fn ks_identity_external_vs(
    model: &Model,
    state: &QuantumState,
    bd: &EnergyBreakdown,
    tols: &Tolerances,
) -> Result<ExternalVsReport> {
    let spec = model.spec();
    if spec.electrons.count != 2 || !matches!(spec.electrons.exchange, Exchange::Symmetric) {
        return Err(PfvError::Qedft(
            "external-potential identity requires the symmetric two-electron sector".into(),
        ));
    }
    let rho = density_from_state(model, state);
    let inv = invert_from_density(model, &rho)?;
    let p_targets: Vec<f64> = bd.modes.iter().map(|m| m.p).collect();
    let f_s = aux_mode_forces(&p_targets, &spec.modes);
    let aux = AuxiliarySystem::new(inv.v_s.clone(), f_s, inv.mask.clone());
    let sol = solve_auxiliary(model, &aux)?;

    let rhs = virial_rhs(model, &inv.mask, &rho.values, &aux.v_s);
    // The doubly-occupied orbital carries the interaction energy implicitly;
    // the looser electronic gate absorbs the correlation-kernel mismatch.
    let identity_i = identity_i_row(
        bd,
        sol.t_phi,
        rhs,
        tols.electronic,
        tols.abs_floor,
        Some("two-electron inversion, gated at the electronic tolerance".into()),
    );
    Ok(ExternalVsReport { t_phi: sol.t_phi, identity_i, interior_count: inv.interior_count })
}
