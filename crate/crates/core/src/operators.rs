//! Operator kernels: truncated ladder matrices, tensor-structured terms, and
//! their application on the flattened electron ⊗ mode product basis.
//!
//! Conventions baked in here:
//! - every quadrature power (q², p², qp, field energy) is the product of the
//!   truncated single-quadrature matrices, so algebraic identities among them
//!   hold exactly up to the ladder corner;
//! - the electronic layout is the flattened grid for one electron and the
//!   packed (anti)symmetric pair basis for two;
//! - the electronic index varies fastest in the flattened product basis,
//!   followed by the modes in declaration order.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::GridGeometry;
use crate::spec::{Exchange, InteractionSpec, ModeSpec, PotentialSpec, SystemSpec};

pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// ⟨a|b⟩ with the physics convention (conjugate-linear in the first slot).
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// The additive pieces of the Hamiltonian, plus the two assembled totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermId {
    Kinetic,
    ExternalPotential,
    Interaction,
    FieldEnergy,
    DipoleCoupling,
    DipoleSelfEnergy,
    ExternalDrive,
    Total,
    /// The same Hamiltonian with the field block written as explicit squares;
    /// identical to `Total` under the truncated-product convention.
    TotalTransformed,
}

/// Generators for the identity checks: electronic r·∇, per-mode qp, and the
/// mixed (dipole × quadrature) generator of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirialKind {
    Electronic,
    Mode,
    Mixed(usize),
}

/// Small dense complex matrix for the per-mode ladder algebra.
#[derive(Debug, Clone)]
pub struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> CMat {
        CMat { n, data: vec![C_ZERO; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] = value;
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        let mut out = CMat::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let a = self.get(i, k);
                if a == C_ZERO {
                    continue;
                }
                for j in 0..self.n {
                    let b = other.get(k, j);
                    if b != C_ZERO {
                        out.data[i * self.n + j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub(crate) fn scale(&self, s: f64) -> CMat {
        CMat { n: self.n, data: self.data.iter().map(|c| c * s).collect() }
    }

    pub(crate) fn add(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        CMat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    fn col_nonzeros(&self) -> ColList {
        (0..self.n)
            .map(|col| {
                (0..self.n)
                    .filter_map(|row| {
                        let v = self.get(row, col);
                        (v != C_ZERO).then_some((row, v))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Truncated quadrature matrices (q, p) for one mode. Every entry is a single
/// square root so that products of the two cancel exactly where they should.
pub fn mode_ladder_matrices(mode: &ModeSpec) -> (CMat, CMat) {
    let n = mode.n_max as usize + 1;
    let mut q = CMat::zeros(n);
    let mut p = CMat::zeros(n);
    for m in 0..n.saturating_sub(1) {
        let qv = ((m + 1) as f64 * mode.omega / 2.0).sqrt();
        let pv = ((m + 1) as f64 / (2.0 * mode.omega)).sqrt();
        q.set(m, m + 1, Complex64::new(qv, 0.0));
        q.set(m + 1, m, Complex64::new(qv, 0.0));
        p.set(m, m + 1, Complex64::new(0.0, -pv));
        p.set(m + 1, m, Complex64::new(0.0, pv));
    }
    (q, p)
}

/// Quadratures and their truncated products for one mode.
#[derive(Debug, Clone)]
pub struct ModeMats {
    pub q: CMat,
    pub p: CMat,
    /// q·q.
    pub q2: CMat,
    /// ω²·p·p — the momentum quadrature as it enters the field energy.
    pub p2: CMat,
    /// q·p.
    pub qp: CMat,
    /// (q2 + p2)/2: diagonal ω(n + ½) with corner ω·n_max/2.
    pub hb: CMat,
}

impl ModeMats {
    pub(crate) fn new(mode: &ModeSpec) -> ModeMats {
        let (q, p) = mode_ladder_matrices(mode);
        let q2 = q.mul(&q);
        let p2 = p.mul(&p).scale(mode.omega * mode.omega);
        let qp = q.mul(&p);
        let hb = q2.add(&p2).scale(0.5);
        ModeMats { q, p, q2, p2, qp, hb }
    }
}

type ColList = Vec<Vec<(usize, Complex64)>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ModeSel {
    Q,
    P,
    Q2,
    P2,
    Qp,
    Hb,
}

pub(crate) struct ModeCols {
    q: ColList,
    p: ColList,
    q2: ColList,
    p2: ColList,
    qp: ColList,
    hb: ColList,
}

impl ModeCols {
    fn new(mats: &ModeMats) -> ModeCols {
        ModeCols {
            q: mats.q.col_nonzeros(),
            p: mats.p.col_nonzeros(),
            q2: mats.q2.col_nonzeros(),
            p2: mats.p2.col_nonzeros(),
            qp: mats.qp.col_nonzeros(),
            hb: mats.hb.col_nonzeros(),
        }
    }

    fn list(&self, sel: ModeSel) -> &ColList {
        match sel {
            ModeSel::Q => &self.q,
            ModeSel::P => &self.p,
            ModeSel::Q2 => &self.q2,
            ModeSel::P2 => &self.p2,
            ModeSel::Qp => &self.qp,
            ModeSel::Hb => &self.hb,
        }
    }
}

/// Electronic sector layout.
#[derive(Debug, Clone)]
pub(crate) enum ElecSpace {
    Single,
    /// Packed pair basis: entries (i, j) with i < j carry weight √2, the
    /// diagonal (symmetric only) weight 1. `sign` is +1 / −1 for the
    /// symmetric / antisymmetric sector.
    Pair { sign: f64, pairs: Vec<(u32, u32)> },
}

pub(crate) fn pair_list(sites: usize, symmetric: bool) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for i in 0..sites {
        let start = if symmetric { i } else { i + 1 };
        for j in start..sites {
            pairs.push((i as u32, j as u32));
        }
    }
    pairs
}

/// One-body single-particle operators applied per electron.
#[derive(Debug, Clone)]
pub(crate) enum OneBodyKind {
    /// −½ Σ_axes ∂² with the 3-point stencil and hard-wall boundaries.
    Kinetic,
    /// Σ_axes x_a ∂_a with central differences.
    RDotGrad,
    /// Σ_axes w_a ∂_a with central differences.
    DirGrad(Vec<f64>),
    /// (Σ_axes w_a ∂_a)² as the exact matrix square of the central-difference
    /// directional derivative.
    DirGrad2(Vec<f64>),
}

#[derive(Debug, Clone)]
pub(crate) enum ElecFactor {
    Identity,
    Diag(Arc<Vec<f64>>),
    OneBody(OneBodyKind),
}

#[derive(Debug, Clone)]
pub(crate) struct ProdTerm {
    pub scale: Complex64,
    pub elec: ElecFactor,
    pub mode: Option<(usize, ModeSel)>,
}

#[derive(Debug, Clone)]
pub(crate) enum OpTerm {
    Prod(ProdTerm),
    /// scale·S·S where S is the sum of the (Hermitian) factors.
    Square { scale: Complex64, factors: Vec<ProdTerm> },
}

/// Precomputed geometry, diagonals, and mode matrices shared by every
/// operator derived from one system.
pub(crate) struct Backbone {
    pub geom: GridGeometry,
    pub elec: ElecSpace,
    pub elec_dim: usize,
    pub mats: Vec<ModeMats>,
    pub cols: Vec<ModeCols>,
    pub mode_dims: Vec<usize>,
    /// Strides of each mode in mode-configuration space.
    pub mode_strides: Vec<usize>,
    pub mode_total: usize,
    /// Σ_i v(r_i) on the packed electronic basis.
    pub v_diag: Arc<Vec<f64>>,
    /// Σ_i r_i·∇v(r_i) on the packed electronic basis.
    pub rgradv_diag: Arc<Vec<f64>>,
    /// Pair interaction w(|r₁−r₂|) (zeros when absent).
    pub w_diag: Arc<Vec<f64>>,
    /// Interaction virial kernel −r w′(r) evaluated pairwise.
    pub wvir_diag: Arc<Vec<f64>>,
    /// λ_α·R per mode on the packed electronic basis.
    pub dipole_diag: Vec<Arc<Vec<f64>>>,
    /// Σ_α (λ_α·R)² on the packed electronic basis.
    pub dipole_sq_sum: Arc<Vec<f64>>,
    /// Single-particle external potential on grid sites.
    /// Single-particle r·∇v on grid sites.
    pub site_rgradv: Vec<f64>,
}

impl Backbone {
    pub fn flat_dim(&self) -> usize {
        self.elec_dim * self.mode_total
    }

    pub fn new(spec: &SystemSpec) -> Result<Backbone> {
        let geom = GridGeometry::new(&spec.grid);
        let sites = geom.sites;

        let site_v: Vec<f64> = (0..sites).map(|s| potential_value(spec, &geom, s)).collect();
        let site_rgradv: Vec<f64> =
            (0..sites).map(|s| potential_rgradv(spec, &geom, s)).collect();
        let site_dipoles: Vec<Vec<f64>> = spec
            .modes
            .iter()
            .map(|m| {
                (0..sites)
                    .map(|s| {
                        (0..geom.dims).map(|a| m.lambda[a] * geom.coord(s, a)).sum::<f64>()
                    })
                    .collect()
            })
            .collect();

        let elec = match (spec.electrons.count, spec.electrons.exchange) {
            (2, Exchange::Symmetric) => {
                ElecSpace::Pair { sign: 1.0, pairs: pair_list(sites, true) }
            }
            (2, Exchange::Antisymmetric) => {
                ElecSpace::Pair { sign: -1.0, pairs: pair_list(sites, false) }
            }
            _ => ElecSpace::Single,
        };

        // Pack a per-site quantity into the electronic basis by summing over
        // the electrons.
        let pack_sum = |site_vals: &[f64]| -> Vec<f64> {
            match &elec {
                ElecSpace::Single => site_vals.to_vec(),
                ElecSpace::Pair { pairs, .. } => pairs
                    .iter()
                    .map(|&(i, j)| site_vals[i as usize] + site_vals[j as usize])
                    .collect(),
            }
        };

        let v_diag = Arc::new(pack_sum(&site_v));
        let rgradv_diag = Arc::new(pack_sum(&site_rgradv));
        let dipole_diag: Vec<Arc<Vec<f64>>> =
            site_dipoles.iter().map(|d| Arc::new(pack_sum(d))).collect();
        let elec_dim = match &elec {
            ElecSpace::Single => sites,
            ElecSpace::Pair { pairs, .. } => pairs.len(),
        };
        let mut dip_sq = vec![0.0; elec_dim];
        for d in &dipole_diag {
            for (acc, &x) in dip_sq.iter_mut().zip(d.iter()) {
                *acc += x * x;
            }
        }

        let (w_diag, wvir_diag) = match &elec {
            ElecSpace::Single => (vec![0.0; elec_dim], vec![0.0; elec_dim]),
            ElecSpace::Pair { pairs, .. } => {
                let mut w = vec![0.0; elec_dim];
                let mut wv = vec![0.0; elec_dim];
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let r = geom.distance(i as usize, j as usize);
                    let (wval, wvval) = interaction_kernel(&spec.interaction, r);
                    w[k] = wval;
                    wv[k] = wvval;
                }
                (w, wv)
            }
        };

        let mats: Vec<ModeMats> = spec.modes.iter().map(ModeMats::new).collect();
        let cols: Vec<ModeCols> = mats.iter().map(ModeCols::new).collect();
        let mode_dims: Vec<usize> = spec.modes.iter().map(|m| m.n_max as usize + 1).collect();
        let mut mode_strides = vec![1usize; mode_dims.len()];
        for a in 1..mode_dims.len() {
            mode_strides[a] = mode_strides[a - 1] * mode_dims[a - 1];
        }
        let mode_total: usize = mode_dims.iter().product();

        Ok(Backbone {
            geom,
            elec,
            elec_dim,
            mats,
            cols,
            mode_dims,
            mode_strides,
            mode_total,
            v_diag,
            rgradv_diag,
            w_diag: Arc::new(w_diag),
            wvir_diag: Arc::new(wvir_diag),
            dipole_diag,
            dipole_sq_sum: Arc::new(dip_sq),
            site_rgradv,
        })
    }
}

fn potential_value(spec: &SystemSpec, geom: &GridGeometry, site: usize) -> f64 {
    match &spec.potential {
        PotentialSpec::Harmonic { k } => {
            let r2: f64 = (0..geom.dims).map(|a| geom.coord(site, a).powi(2)).sum();
            0.5 * k * r2
        }
        PotentialSpec::SoftcoulombWell { z, a } => {
            let r2: f64 = (0..geom.dims).map(|ax| geom.coord(site, ax).powi(2)).sum();
            -z / (r2 + a * a).sqrt()
        }
        PotentialSpec::Polynomial { coefficients } => {
            let x = geom.coord(site, 0);
            coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
        }
        PotentialSpec::Tabulated { values, .. } => values[site],
    }
}

fn potential_rgradv(spec: &SystemSpec, geom: &GridGeometry, site: usize) -> f64 {
    match &spec.potential {
        PotentialSpec::Harmonic { k } => {
            let r2: f64 = (0..geom.dims).map(|a| geom.coord(site, a).powi(2)).sum();
            k * r2
        }
        PotentialSpec::SoftcoulombWell { z, a } => {
            let r2: f64 = (0..geom.dims).map(|ax| geom.coord(site, ax).powi(2)).sum();
            z * r2 / (r2 + a * a).powf(1.5)
        }
        PotentialSpec::Polynomial { coefficients } => {
            let x = geom.coord(site, 0);
            coefficients
                .iter()
                .enumerate()
                .map(|(m, c)| m as f64 * c * x.powi(m as i32))
                .sum()
        }
        PotentialSpec::Tabulated { gradient, .. } => (0..geom.dims)
            .map(|a| geom.coord(site, a) * gradient[a][site])
            .sum(),
    }
}

/// (w(r), −r·w′(r)) for the pair interaction at separation r.
fn interaction_kernel(spec: &InteractionSpec, r: f64) -> (f64, f64) {
    match spec {
        InteractionSpec::None => (0.0, 0.0),
        InteractionSpec::Softcoulomb { a } => {
            let d2 = r * r + a * a;
            (1.0 / d2.sqrt(), r * r / d2.powf(1.5))
        }
        // Bare 1/r: coincident grid sites carry no interaction by convention,
        // and −r·w′ = 1/r makes the virial kernel equal to the interaction.
        InteractionSpec::Coulomb3d => {
            if r == 0.0 {
                (0.0, 0.0)
            } else {
                (1.0 / r, 1.0 / r)
            }
        }
        InteractionSpec::Tabulated { r: rs, w, dw } => {
            let x = r.clamp(rs[0], *rs.last().unwrap());
            let hi = rs.partition_point(|&node| node < x).min(rs.len() - 1).max(1);
            let lo = hi - 1;
            let t = if rs[hi] > rs[lo] { (x - rs[lo]) / (rs[hi] - rs[lo]) } else { 0.0 };
            let wval = w[lo] + t * (w[hi] - w[lo]);
            let dwval = dw[lo] + t * (dw[hi] - dw[lo]);
            (wval, -x * dwval)
        }
    }
}

#[derive(Default)]
struct Scratch {
    pair_m: Vec<Complex64>,
    pair_y: Vec<Complex64>,
    col_in: Vec<Complex64>,
    col_out: Vec<Complex64>,
    square_tmp: Vec<Complex64>,
}

/// Tensor-structured linear operator on the flattened product basis.
pub struct SparseOperator {
    backbone: Option<Arc<Backbone>>,
    terms: Vec<OpTerm>,
    hermitian: bool,
    dim: usize,
    elec_dim: usize,
    mode_total: usize,
}

impl SparseOperator {
    pub fn identity(dim: usize) -> SparseOperator {
        SparseOperator {
            backbone: None,
            terms: vec![OpTerm::Prod(ProdTerm {
                scale: C_ONE,
                elec: ElecFactor::Identity,
                mode: None,
            })],
            hermitian: true,
            dim,
            elec_dim: dim,
            mode_total: 1,
        }
    }

    pub(crate) fn from_parts(
        backbone: Arc<Backbone>,
        terms: Vec<OpTerm>,
        hermitian: bool,
    ) -> SparseOperator {
        let dim = backbone.flat_dim();
        let elec_dim = backbone.elec_dim;
        let mode_total = backbone.mode_total;
        SparseOperator { backbone: Some(backbone), terms, hermitian, dim, elec_dim, mode_total }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![C_ZERO; self.dim];
        self.apply_into(psi, &mut out);
        out
    }

    pub fn apply_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(psi.len(), self.dim, "input dimension mismatch");
        assert_eq!(out.len(), self.dim, "output dimension mismatch");
        out.fill(C_ZERO);
        let mut scratch = Scratch::default();
        for term in &self.terms {
            self.apply_term(term, C_ONE, psi, out, &mut scratch);
        }
    }

    /// ⟨ψ|O|ψ⟩ (no normalization).
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        dot(psi, &self.apply(psi))
    }

    fn apply_term(
        &self,
        term: &OpTerm,
        mult: Complex64,
        input: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut Scratch,
    ) {
        match term {
            OpTerm::Prod(p) => self.apply_prod(p, mult, input, out, scratch),
            OpTerm::Square { scale, factors } => {
                let mut tmp = std::mem::take(&mut scratch.square_tmp);
                tmp.clear();
                tmp.resize(self.dim, C_ZERO);
                for f in factors {
                    self.apply_prod(f, C_ONE, input, &mut tmp, scratch);
                }
                for f in factors {
                    self.apply_prod(f, mult * scale, &tmp, out, scratch);
                }
                scratch.square_tmp = tmp;
            }
        }
    }

    fn apply_prod(
        &self,
        term: &ProdTerm,
        mult: Complex64,
        input: &[Complex64],
        out: &mut [Complex64],
        scratch: &mut Scratch,
    ) {
        let scale = term.scale * mult;
        if scale == C_ZERO {
            return;
        }
        let e = self.elec_dim;
        match term.mode {
            None => {
                for block in 0..self.mode_total {
                    let base = block * e;
                    self.elec_apply(
                        &term.elec,
                        scale,
                        &input[base..base + e],
                        out,
                        base,
                        scratch,
                    );
                }
            }
            Some((alpha, sel)) => {
                let bb = self.backbone.as_ref().expect("mode term requires a backbone");
                let cols = bb.cols[alpha].list(sel);
                let stride = bb.mode_strides[alpha];
                let dim_a = bb.mode_dims[alpha];
                for block in 0..self.mode_total {
                    let n_in = (block / stride) % dim_a;
                    let base_in = block * e;
                    for &(n_out, mval) in &cols[n_in] {
                        let block_out = block - n_in * stride + n_out * stride;
                        self.elec_apply(
                            &term.elec,
                            scale * mval,
                            &input[base_in..base_in + e],
                            out,
                            block_out * e,
                            scratch,
                        );
                    }
                }
            }
        }
    }

    /// out[offset..offset+elec_dim] += coeff · (factor · input).
    fn elec_apply(
        &self,
        factor: &ElecFactor,
        coeff: Complex64,
        input: &[Complex64],
        out: &mut [Complex64],
        offset: usize,
        scratch: &mut Scratch,
    ) {
        let target = &mut out[offset..offset + input.len()];
        match factor {
            ElecFactor::Identity => {
                for (o, x) in target.iter_mut().zip(input) {
                    *o += coeff * x;
                }
            }
            ElecFactor::Diag(d) => {
                for ((o, x), &dv) in target.iter_mut().zip(input).zip(d.iter()) {
                    *o += coeff * dv * x;
                }
            }
            ElecFactor::OneBody(kind) => {
                let bb = self.backbone.as_ref().expect("one-body term requires a backbone");
                match &bb.elec {
                    ElecSpace::Single => {
                        site_onebody_add(&bb.geom, kind, coeff, input, target);
                    }
                    ElecSpace::Pair { sign, pairs } => {
                        pair_onebody_add(&bb.geom, kind, *sign, pairs, coeff, input, target, scratch);
                    }
                }
            }
        }
    }
}

/// out += coeff · (A input) for a single-particle one-body operator A acting
/// on a site-space vector.
fn site_onebody_add(
    geom: &GridGeometry,
    kind: &OneBodyKind,
    coeff: Complex64,
    input: &[Complex64],
    out: &mut [Complex64],
) {
    if let OneBodyKind::DirGrad2(dir) = kind {
        // Matrix square of the first-derivative stencil, realized as two
        // successive applications. Diagnostics path: the temporary is fine.
        let first = OneBodyKind::DirGrad(dir.clone());
        let mut tmp = vec![C_ZERO; input.len()];
        site_onebody_add(geom, &first, C_ONE, input, &mut tmp);
        site_onebody_add(geom, &first, coeff, &tmp, out);
        return;
    }
    for axis in 0..geom.dims {
        let stride = geom.strides[axis];
        let n = geom.points[axis];
        let h = geom.steps[axis];
        match kind {
            OneBodyKind::Kinetic => {
                let w = coeff * (0.5 / (h * h));
                for s in 0..geom.sites {
                    let i = (s / stride) % n;
                    let mut acc = 2.0 * input[s];
                    if i + 1 < n {
                        acc -= input[s + stride];
                    }
                    if i > 0 {
                        acc -= input[s - stride];
                    }
                    out[s] += w * acc;
                }
            }
            OneBodyKind::RDotGrad => {
                let w = coeff / (2.0 * h);
                for s in 0..geom.sites {
                    let i = (s / stride) % n;
                    let right = if i + 1 < n { input[s + stride] } else { C_ZERO };
                    let left = if i > 0 { input[s - stride] } else { C_ZERO };
                    let x = geom.mins[axis] + h * i as f64;
                    out[s] += w * x * (right - left);
                }
            }
            OneBodyKind::DirGrad(dir) => {
                if dir[axis] == 0.0 {
                    continue;
                }
                let w = coeff * (dir[axis] / (2.0 * h));
                for s in 0..geom.sites {
                    let i = (s / stride) % n;
                    let right = if i + 1 < n { input[s + stride] } else { C_ZERO };
                    let left = if i > 0 { input[s - stride] } else { C_ZERO };
                    out[s] += w * (right - left);
                }
            }
            OneBodyKind::DirGrad2(_) => unreachable!("handled before the axis loop"),
        }
    }
}

/// Packed-pair one-body action: unpack to the full two-particle matrix Ψ,
/// form AΨ + ΨAᵀ, and pack the (anti)symmetric result back.
#[allow(clippy::too_many_arguments)]
fn pair_onebody_add(
    geom: &GridGeometry,
    kind: &OneBodyKind,
    sign: f64,
    pairs: &[(u32, u32)],
    coeff: Complex64,
    input: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut Scratch,
) {
    let n = geom.sites;
    scratch.pair_m.clear();
    scratch.pair_m.resize(n * n, C_ZERO);
    scratch.pair_y.clear();
    scratch.pair_y.resize(n * n, C_ZERO);
    scratch.col_in.clear();
    scratch.col_in.resize(n, C_ZERO);
    scratch.col_out.clear();
    scratch.col_out.resize(n, C_ZERO);

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            scratch.pair_m[i * n + i] = input[k];
        } else {
            let v = input[k] * inv_sqrt2;
            scratch.pair_m[i * n + j] = v;
            scratch.pair_m[j * n + i] = v * sign;
        }
    }

    // Rows: Y[i,·] += A·Ψ[i,·]  (the second particle).
    for i in 0..n {
        scratch.col_in.copy_from_slice(&scratch.pair_m[i * n..(i + 1) * n]);
        site_onebody_add(geom, kind, C_ONE, &scratch.col_in, &mut scratch.pair_y[i * n..(i + 1) * n]);
    }
    // Columns: Y[·,j] += A·Ψ[·,j]  (the first particle).
    for j in 0..n {
        for i in 0..n {
            scratch.col_in[i] = scratch.pair_m[i * n + j];
        }
        scratch.col_out.fill(C_ZERO);
        site_onebody_add(geom, kind, C_ONE, &scratch.col_in, &mut scratch.col_out);
        for i in 0..n {
            scratch.pair_y[i * n + j] += scratch.col_out[i];
        }
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            out[k] += coeff * scratch.pair_y[i * n + i];
        } else {
            out[k] += coeff * sqrt2 * scratch.pair_y[i * n + j];
        }
    }
}

/// ⟨ψ|[H,A]|ψ⟩ from three operator applications. H must be Hermitian;
/// A may be arbitrary.
pub fn commutator_expectation(
    h: &SparseOperator,
    a: &SparseOperator,
    psi: &[Complex64],
) -> Complex64 {
    let hpsi = h.apply(psi);
    let apsi = a.apply(psi);
    let ahpsi = a.apply(&hpsi);
    dot(&hpsi, &apsi) - dot(psi, &ahpsi)
}
