//! The assembled system: validated spec, shared operator backbone, and
//! constructors for every Hamiltonian term and identity generator.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{PfvError, Result};
use crate::operators::{
    Backbone, ElecFactor, ModeMats, ModeSel, OneBodyKind, OpTerm, ProdTerm, SparseOperator,
    TermId, VirialKind,
};
use crate::spec::{hilbert_dimension, validate_system, InteractionSpec, SystemSpec};

fn prod(scale: f64, elec: ElecFactor, mode: Option<(usize, ModeSel)>) -> OpTerm {
    OpTerm::Prod(ProdTerm { scale: Complex64::new(scale, 0.0), elec, mode })
}

pub struct Model {
    spec: SystemSpec,
    backbone: Arc<Backbone>,
    dim: usize,
}

impl Model {
    pub fn new(spec: SystemSpec) -> Result<Model> {
        let report = validate_system(&spec);
        if !report.is_valid() {
            return Err(PfvError::Invalid(report.violations.join("; ")));
        }
        let dim = hilbert_dimension(&spec)?;
        let backbone = Arc::new(Backbone::new(&spec)?);
        debug_assert_eq!(dim, backbone.flat_dim());
        Ok(Model { spec, backbone, dim })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode_matrices(&self, mode: usize) -> &ModeMats {
        &self.backbone.mats[mode]
    }

    pub(crate) fn backbone(&self) -> &Arc<Backbone> {
        &self.backbone
    }


    fn kinetic_terms(&self) -> Vec<OpTerm> {
        vec![prod(1.0, ElecFactor::OneBody(OneBodyKind::Kinetic), None)]
    }

    fn potential_terms(&self) -> Vec<OpTerm> {
        vec![prod(1.0, ElecFactor::Diag(self.backbone.v_diag.clone()), None)]
    }

    fn interaction_terms(&self) -> Vec<OpTerm> {
        if matches!(self.spec.interaction, InteractionSpec::None) {
            return Vec::new();
        }
        vec![prod(1.0, ElecFactor::Diag(self.backbone.w_diag.clone()), None)]
    }

    fn field_energy_terms(&self) -> Vec<OpTerm> {
        (0..self.spec.modes.len())
            .map(|a| prod(1.0, ElecFactor::Identity, Some((a, ModeSel::Hb))))
            .collect()
    }

    fn coupling_terms(&self) -> Vec<OpTerm> {
        self.spec
            .modes
            .iter()
            .enumerate()
            .filter(|(a, m)| m.lambda.iter().any(|&l| l != 0.0) && !self.zero_dipole(*a))
            .map(|(a, m)| {
                prod(
                    -m.omega,
                    ElecFactor::Diag(self.backbone.dipole_diag[a].clone()),
                    Some((a, ModeSel::P)),
                )
            })
            .collect()
    }

    fn zero_dipole(&self, mode: usize) -> bool {
        self.backbone.dipole_diag[mode].iter().all(|&x| x == 0.0)
    }

    fn self_energy_terms(&self) -> Vec<OpTerm> {
        if self.backbone.dipole_sq_sum.iter().all(|&x| x == 0.0) {
            return Vec::new();
        }
        vec![prod(0.5, ElecFactor::Diag(self.backbone.dipole_sq_sum.clone()), None)]
    }

    fn drive_terms(&self) -> Vec<OpTerm> {
        self.spec
            .modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.drive != 0.0)
            .map(|(a, m)| prod(m.drive / m.omega, ElecFactor::Identity, Some((a, ModeSel::P))))
            .collect()
    }

    /// Build one Hamiltonian term (or an assembled total) as an operator.
    pub fn term(&self, id: TermId) -> Result<SparseOperator> {
        let terms = match id {
            TermId::Kinetic => self.kinetic_terms(),
            TermId::ExternalPotential => self.potential_terms(),
            TermId::Interaction => self.interaction_terms(),
            TermId::FieldEnergy => self.field_energy_terms(),
            TermId::DipoleCoupling => self.coupling_terms(),
            TermId::DipoleSelfEnergy => self.self_energy_terms(),
            TermId::ExternalDrive => self.drive_terms(),
            TermId::Total => {
                let mut t = self.kinetic_terms();
                t.extend(self.potential_terms());
                t.extend(self.interaction_terms());
                t.extend(self.field_energy_terms());
                t.extend(self.coupling_terms());
                t.extend(self.self_energy_terms());
                t.extend(self.drive_terms());
                t
            }
            TermId::TotalTransformed => {
                let mut t = self.kinetic_terms();
                t.extend(self.potential_terms());
                t.extend(self.interaction_terms());
                for (a, m) in self.spec.modes.iter().enumerate() {
                    t.push(prod(0.5, ElecFactor::Identity, Some((a, ModeSel::Q2))));
                    let mut factors = vec![ProdTerm {
                        scale: Complex64::new(m.omega, 0.0),
                        elec: ElecFactor::Identity,
                        mode: Some((a, ModeSel::P)),
                    }];
                    if !self.zero_dipole(a) {
                        factors.push(ProdTerm {
                            scale: Complex64::new(-1.0, 0.0),
                            elec: ElecFactor::Diag(self.backbone.dipole_diag[a].clone()),
                            mode: None,
                        });
                    }
                    t.push(OpTerm::Square { scale: Complex64::new(0.5, 0.0), factors });
                }
                t.extend(self.drive_terms());
                t
            }
        };
        Ok(SparseOperator::from_parts(self.backbone.clone(), terms, true))
    }

    /// Generator of one of the identity checks.
    pub fn virial_operator(&self, kind: VirialKind) -> Result<SparseOperator> {
        match kind {
            VirialKind::Electronic => Ok(SparseOperator::from_parts(
                self.backbone.clone(),
                vec![prod(1.0, ElecFactor::OneBody(OneBodyKind::RDotGrad), None)],
                false,
            )),
            VirialKind::Mode => Ok(SparseOperator::from_parts(
                self.backbone.clone(),
                (0..self.spec.modes.len())
                    .map(|a| prod(1.0, ElecFactor::Identity, Some((a, ModeSel::Qp))))
                    .collect(),
                false,
            )),
            VirialKind::Mixed(a) => {
                if a >= self.spec.modes.len() {
                    return Err(PfvError::Config(format!("mode index {a} out of range")));
                }
                let terms = if self.zero_dipole(a) {
                    Vec::new()
                } else {
                    vec![prod(
                        1.0,
                        ElecFactor::Diag(self.backbone.dipole_diag[a].clone()),
                        Some((a, ModeSel::Q)),
                    )]
                };
                Ok(SparseOperator::from_parts(self.backbone.clone(), terms, true))
            }
        }
    }

    /// Identity ⊗ (mode moment) for one mode.
    pub(crate) fn mode_moment(&self, mode: usize, sel: ModeSel) -> SparseOperator {
        SparseOperator::from_parts(
            self.backbone.clone(),
            vec![prod(1.0, ElecFactor::Identity, Some((mode, sel)))],
            matches!(sel, ModeSel::Q | ModeSel::P | ModeSel::Q2 | ModeSel::P2 | ModeSel::Hb),
        )
    }

    /// Purely electronic multiplication operator.
    pub(crate) fn diag_operator(&self, diag: Arc<Vec<f64>>) -> SparseOperator {
        SparseOperator::from_parts(
            self.backbone.clone(),
            vec![prod(1.0, ElecFactor::Diag(diag), None)],
            true,
        )
    }

    /// (λ_α·∇) ⊗ q̂_α, the cross moment entering the mixed identity.
    pub(crate) fn dirgrad_q(&self, mode: usize) -> SparseOperator {
        let lambda = self.spec.modes[mode].lambda.clone();
        let terms = if lambda.iter().all(|&l| l == 0.0) {
            Vec::new()
        } else {
            vec![prod(
                1.0,
                ElecFactor::OneBody(OneBodyKind::DirGrad(lambda)),
                Some((mode, ModeSel::Q)),
            )]
        };
        SparseOperator::from_parts(self.backbone.clone(), terms, false)
    }

    /// Σ_j (λ_α·∇_j)², the squared directional derivative summed over
    /// particles; enters the per-mode positivity estimate.
    pub(crate) fn dirgrad2(&self, mode: usize) -> SparseOperator {
        let lambda = self.spec.modes[mode].lambda.clone();
        let terms = if lambda.iter().all(|&l| l == 0.0) {
            Vec::new()
        } else {
            vec![prod(1.0, ElecFactor::OneBody(OneBodyKind::DirGrad2(lambda)), None)]
        };
        SparseOperator::from_parts(self.backbone.clone(), terms, true)
    }

    /// i^k phase exponent (k mod 4) of every flat basis state: the total mode
    /// occupation. Conjugating by diag(i^k) sends every momentum quadrature
    /// to a real symmetric matrix, making the whole Hamiltonian real.
    pub(crate) fn phases(&self) -> Vec<u8> {
        let bb = &self.backbone;
        let mut out = vec![0u8; self.dim];
        for (flat, slot) in out.iter_mut().enumerate() {
            let config = flat / bb.elec_dim;
            let mut total = 0usize;
            for a in 0..bb.mode_dims.len() {
                total += (config / bb.mode_strides[a]) % bb.mode_dims[a];
            }
            *slot = (total % 4) as u8;
        }
        out
    }

    /// Cheap spectral magnitude estimate: the largest absolute value the
    /// Hamiltonian diagonal can reach, computed from the electronic diagonal
    /// range plus the per-mode ladder diagonal range.
    pub fn spectral_scale(&self) -> f64 {
        let bb = &self.backbone;
        let kin: f64 = self.spec.electrons.count as f64
            * (0..bb.geom.dims).map(|a| 1.0 / (bb.geom.steps[a] * bb.geom.steps[a])).sum::<f64>();
        let mut e_min = f64::INFINITY;
        let mut e_max = f64::NEG_INFINITY;
        for k in 0..bb.elec_dim {
            let d = kin + bb.v_diag[k] + bb.w_diag[k] + 0.5 * bb.dipole_sq_sum[k];
            e_min = e_min.min(d);
            e_max = e_max.max(d);
        }
        let mut m_min = 0.0;
        let mut m_max = 0.0;
        for mats in &bb.mats {
            let n = mats.hb.dim();
            let diag: Vec<f64> = (0..n).map(|i| mats.hb.get(i, i).re).collect();
            m_min += diag.iter().cloned().fold(f64::INFINITY, f64::min);
            m_max += diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        (e_max + m_max).abs().max((e_min + m_min).abs())
    }
}
