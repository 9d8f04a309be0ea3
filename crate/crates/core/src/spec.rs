//! System descriptions: JSON schema, strict parsing, validation, basis
//! dimensions, and free-space mode-set construction.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{PfvError, Result};

/// Hard cap on the total basis dimension.
pub const DIMENSION_CAP: usize = 5_000_000;

/// Density floor below which grid points are masked in density inversions.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exchange {
    None,
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldTreatment {
    Quantum,
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectronSpec {
    pub count: u32,
    pub dims: u32,
    pub exchange: Exchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub points: Vec<u32>,
}

impl GridSpec {
    pub fn total_sites(&self) -> usize {
        self.points.iter().map(|&p| p as usize).product()
    }

    pub fn axis_step(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / (self.points[axis] as f64 - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Harmonic { k: f64 },
    SoftcoulombWell { z: f64, a: f64 },
    Polynomial { coefficients: Vec<f64> },
    Tabulated { values: Vec<f64>, gradient: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionSpec {
    None,
    Softcoulomb { a: f64 },
    Coulomb3d,
    Tabulated { r: Vec<f64>, w: Vec<f64>, dw: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub omega: f64,
    pub lambda: Vec<f64>,
    pub drive: f64,
    pub n_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub electrons: ElectronSpec,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub interaction: InteractionSpec,
    pub modes: Vec<ModeSpec>,
    pub field_treatment: FieldTreatment,
}

impl SystemSpec {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Strict parse: unknown keys at any nesting level are hard errors.
    pub fn from_json_str(text: &str) -> Result<SystemSpec> {
        let value: Value = serde_json::from_str(text)?;
        check_system_keys(&value)?;
        Ok(serde_json::from_value(value)?)
    }
}

/// Specification of a cubic-box free-space mode set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeSpaceModeSetSpec {
    pub box_length: f64,
    pub cutoff: f64,
    pub speed_of_light: f64,
}

impl FreeSpaceModeSetSpec {
    pub fn from_json_str(text: &str) -> Result<FreeSpaceModeSetSpec> {
        let value: Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| PfvError::Config("mode-set config must be a JSON object".into()))?;
        check_keys(obj, &["box_length", "cutoff", "speed_of_light"], "mode-set config")?;
        Ok(serde_json::from_value(value)?)
    }
}

fn check_keys(
    obj: &serde_json::Map<String, Value>,
    allowed: &[&str],
    context: &str,
) -> Result<()> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PfvError::Config(format!(
                "unknown key `{key}` in {context}"
            )));
        }
    }
    Ok(())
}

fn as_object<'v>(value: &'v Value, context: &str) -> Result<&'v serde_json::Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| PfvError::Config(format!("{context} must be a JSON object")))
}

fn check_system_keys(value: &Value) -> Result<()> {
    let root = as_object(value, "system config")?;
    check_keys(
        root,
        &["electrons", "grid", "potential", "interaction", "modes", "field_treatment"],
        "system config",
    )?;
    if let Some(e) = root.get("electrons") {
        check_keys(as_object(e, "electrons")?, &["count", "dims", "exchange"], "electrons")?;
    }
    if let Some(g) = root.get("grid") {
        check_keys(as_object(g, "grid")?, &["min", "max", "points"], "grid")?;
    }
    if let Some(p) = root.get("potential") {
        let obj = as_object(p, "potential")?;
        let kind = obj.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        let allowed: &[&str] = match kind {
            "harmonic" => &["kind", "k"],
            "softcoulomb_well" => &["kind", "z", "a"],
            "polynomial" => &["kind", "coefficients"],
            "tabulated" => &["kind", "values", "gradient"],
            other => {
                return Err(PfvError::Config(format!("unknown potential kind `{other}`")));
            }
        };
        check_keys(obj, allowed, "potential")?;
    }
    if let Some(w) = root.get("interaction") {
        let obj = as_object(w, "interaction")?;
        let kind = obj.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        let allowed: &[&str] = match kind {
            "none" | "coulomb3d" => &["kind"],
            "softcoulomb" => &["kind", "a"],
            "tabulated" => &["kind", "r", "w", "dw"],
            other => {
                return Err(PfvError::Config(format!("unknown interaction kind `{other}`")));
            }
        };
        check_keys(obj, allowed, "interaction")?;
    }
    if let Some(modes) = root.get("modes") {
        let arr = modes
            .as_array()
            .ok_or_else(|| PfvError::Config("modes must be a JSON array".into()))?;
        for (i, m) in arr.iter().enumerate() {
            check_keys(
                as_object(m, "mode")?,
                &["omega", "lambda", "drive", "n_max"],
                &format!("modes[{i}]"),
            )?;
        }
    }
    Ok(())
}

/// Outcome of structural validation: empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_system(spec: &SystemSpec) -> ValidationReport {
    let mut v = Vec::new();
    let d = spec.electrons.dims as usize;

    if !(1..=2).contains(&spec.electrons.count) {
        v.push(format!("electron count must be 1 or 2, got {}", spec.electrons.count));
    }
    if !(1..=3).contains(&spec.electrons.dims) {
        v.push(format!("dims must be 1, 2 or 3, got {}", spec.electrons.dims));
    }
    match (spec.electrons.count, spec.electrons.exchange) {
        (1, Exchange::None) | (2, Exchange::Symmetric) | (2, Exchange::Antisymmetric) => {}
        (1, _) => v.push("exchange symmetry requires two electrons".into()),
        (2, Exchange::None) => v.push("two electrons require an exchange symmetry".into()),
        _ => {}
    }

    if spec.grid.min.len() != d || spec.grid.max.len() != d || spec.grid.points.len() != d {
        v.push(format!(
            "grid arrays must all have length dims = {d} (got {}, {}, {})",
            spec.grid.min.len(),
            spec.grid.max.len(),
            spec.grid.points.len()
        ));
    } else {
        for a in 0..d {
            if spec.grid.points[a] < 3 {
                v.push(format!("grid axis {a} needs at least 3 points"));
            }
            if !(spec.grid.max[a] > spec.grid.min[a]) {
                v.push(format!("grid axis {a} must have max > min"));
            }
        }
    }

    for (i, m) in spec.modes.iter().enumerate() {
        if !(m.omega > 0.0) {
            v.push(format!("mode {i}: frequency must be positive, got {}", m.omega));
        }
        if m.lambda.len() != d {
            v.push(format!(
                "mode {i}: coupling vector length {} does not match dims {d}",
                m.lambda.len()
            ));
        }
        if m.n_max < 1 {
            v.push(format!("mode {i}: n_max must be at least 1"));
        }
        if !m.drive.is_finite() {
            v.push(format!("mode {i}: drive must be finite"));
        }
    }

    match (&spec.interaction, spec.electrons.count) {
        (InteractionSpec::None, _) => {}
        (_, 1) => v.push("interaction requires two electrons".into()),
        (InteractionSpec::Coulomb3d, _) if spec.electrons.dims != 3 => {
            v.push("coulomb3d interaction requires dims = 3".into());
        }
        (InteractionSpec::Tabulated { r, w, dw }, _) => {
            if r.len() != w.len() || r.len() != dw.len() || r.len() < 2 {
                v.push("tabulated interaction arrays must have equal length >= 2".into());
            } else {
                if r[0] > 0.0 {
                    v.push("tabulated interaction must start at r = 0".into());
                }
                if r.windows(2).any(|ab| ab[1] <= ab[0]) {
                    v.push("tabulated interaction grid must be strictly increasing".into());
                }
            }
        }
        _ => {}
    }

    match &spec.potential {
        PotentialSpec::Harmonic { k } => {
            if !k.is_finite() {
                v.push("harmonic potential stiffness must be finite".into());
            }
        }
        PotentialSpec::SoftcoulombWell { a, .. } => {
            if !(*a > 0.0) {
                v.push("soft-Coulomb well softening must be positive".into());
            }
        }
        PotentialSpec::Polynomial { coefficients } => {
            if d != 1 {
                v.push("polynomial potential requires dims = 1".into());
            }
            if coefficients.is_empty() {
                v.push("polynomial potential needs at least one coefficient".into());
            }
        }
        PotentialSpec::Tabulated { values, gradient } => {
            let sites = spec.grid.total_sites();
            if values.len() != sites {
                v.push(format!(
                    "tabulated potential has {} values for {sites} grid sites",
                    values.len()
                ));
            }
            if gradient.len() != d || gradient.iter().any(|g| g.len() != sites) {
                v.push("tabulated potential gradient must hold one full array per axis".into());
            }
        }
    }

    ValidationReport { violations: v }
}

/// Number of packed electronic basis states for the given exchange sector.
pub(crate) fn electronic_dimension(spec: &SystemSpec) -> usize {
    let n = spec.grid.total_sites();
    match (spec.electrons.count, spec.electrons.exchange) {
        (2, Exchange::Symmetric) => n * (n + 1) / 2,
        (2, Exchange::Antisymmetric) => n * (n - 1) / 2,
        _ => n,
    }
}

/// Total basis dimension: electronic sector times every mode's Fock ladder.
pub fn hilbert_dimension(spec: &SystemSpec) -> Result<usize> {
    let mut dim = electronic_dimension(spec);
    for m in &spec.modes {
        dim = dim
            .checked_mul(m.n_max as usize + 1)
            .ok_or(PfvError::DimensionCap { dim: usize::MAX, cap: DIMENSION_CAP })?;
    }
    if dim > DIMENSION_CAP {
        return Err(PfvError::DimensionCap { dim, cap: DIMENSION_CAP });
    }
    Ok(dim)
}

pub(crate) fn lattice_points(spec: &FreeSpaceModeSetSpec) -> Result<Vec<[i64; 3]>> {
    if !(spec.box_length > 0.0) || !(spec.cutoff > 0.0) || !(spec.speed_of_light > 0.0) {
        return Err(PfvError::Config(
            "box length, cutoff and speed of light must all be positive".into(),
        ));
    }
    let k_unit = 2.0 * std::f64::consts::PI / spec.box_length;
    // Nudge the shell boundary outward by a few ulps so lattice points that
    // sit exactly on the cutoff sphere are kept regardless of rounding.
    let limit = (spec.cutoff / k_unit).powi(2) * (1.0 + 4.0 * f64::EPSILON);
    let m_max = limit.sqrt().floor() as i64 + 1;
    let mut pts = Vec::new();
    for nx in -m_max..=m_max {
        for ny in -m_max..=m_max {
            for nz in -m_max..=m_max {
                let m2 = nx * nx + ny * ny + nz * nz;
                if m2 != 0 && (m2 as f64) <= limit {
                    pts.push([nx, ny, nz]);
                }
            }
        }
    }
    if pts.is_empty() {
        return Err(PfvError::Config(format!(
            "cutoff {:.6e} lies below the lowest lattice mode {:.6e}",
            spec.cutoff, k_unit
        )));
    }
    pts.sort_by_key(|n| (n[0] * n[0] + n[1] * n[1] + n[2] * n[2], n[0], n[1], n[2]));
    Ok(pts)
}

fn transverse_pair(k: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let khat = [k[0] / norm, k[1] / norm, k[2] / norm];
    let seed = if khat[0].abs() <= 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let e1 = cross(khat, seed);
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = cross(khat, e1);
    (e1, e2)
}

/// All box modes with |k| up to the cutoff, two transverse polarizations per
/// lattice point, each with the wave vector it belongs to.
pub fn freespace_mode_set_with_k(
    spec: &FreeSpaceModeSetSpec,
) -> Result<Vec<([f64; 3], ModeSpec)>> {
    let k_unit = 2.0 * std::f64::consts::PI / spec.box_length;
    let lam_mag = (4.0 * std::f64::consts::PI / spec.box_length.powi(3)).sqrt();
    let mut out = Vec::new();
    for n in lattice_points(spec)? {
        let k = [k_unit * n[0] as f64, k_unit * n[1] as f64, k_unit * n[2] as f64];
        let knorm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let omega = spec.speed_of_light * knorm;
        let (e1, e2) = transverse_pair(k);
        for e in [e1, e2] {
            out.push((
                k,
                ModeSpec {
                    omega,
                    lambda: vec![lam_mag * e[0], lam_mag * e[1], lam_mag * e[2]],
                    drive: 0.0,
                    n_max: 1,
                },
            ));
        }
    }
    Ok(out)
}

pub fn freespace_mode_set(spec: &FreeSpaceModeSetSpec) -> Result<Vec<ModeSpec>> {
    Ok(freespace_mode_set_with_k(spec)?.into_iter().map(|(_, m)| m).collect())
}
