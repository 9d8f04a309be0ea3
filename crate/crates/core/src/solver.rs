//! Ground- and low-lying-state solvers: a dense path through LAPACK (after a
//! phase rotation that makes the Hamiltonian real symmetric) and a Lanczos
//! path with full reorthogonalization and explicit residual acceptance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PfvError, Result};
use crate::lapack;
use crate::model::Model;
use crate::operators::{dot, norm, SparseOperator, TermId, C_ZERO};

/// Which eigenpairs a dense solve should return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenWhich {
    Ground,
    LowestK(usize),
}

#[derive(Debug, Clone)]
pub struct EigenSolveConfig {
    pub which: EigenWhich,
    /// Absolute residual ‖Hx − Ex‖ below which a state is accepted.
    pub tol: f64,
    /// Total matrix–vector product budget for the iterative path.
    pub max_iters: usize,
    /// Krylov block size between restarts.
    pub krylov_dim: usize,
    pub seed: u64,
    /// Largest dimension eligible for the dense path.
    pub dense_cap: usize,
}

impl Default for EigenSolveConfig {
    fn default() -> EigenSolveConfig {
        EigenSolveConfig {
            which: EigenWhich::Ground,
            tol: 1e-10,
            max_iters: 6000,
            krylov_dim: 300,
            seed: 7,
            dense_cap: 5000,
        }
    }
}

/// A normalized state with its energy and explicit eigenvector residual.
#[derive(Debug, Clone)]
pub struct QuantumState {
    pub coeffs: Vec<Complex64>,
    pub energy: f64,
    pub eigenresidual: f64,
}

impl QuantumState {
    /// Wrap raw coefficients: normalizes, then attaches the Rayleigh quotient
    /// and the residual against the model Hamiltonian.
    pub fn from_coeffs(model: &Model, mut coeffs: Vec<Complex64>) -> Result<QuantumState> {
        if coeffs.len() != model.dim() {
            return Err(PfvError::DimensionMismatch { expected: model.dim(), got: coeffs.len() });
        }
        let nrm = norm(&coeffs);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(PfvError::Config("state coefficients are zero or non-finite".into()));
        }
        coeffs.iter_mut().for_each(|c| *c /= nrm);
        let h = model.term(TermId::Total)?;
        let hpsi = h.apply(&coeffs);
        let energy = dot(&coeffs, &hpsi).re;
        let eigenresidual = residual_norm(&hpsi, energy, &coeffs);
        Ok(QuantumState { coeffs, energy, eigenresidual })
    }
}

fn residual_norm(hx: &[Complex64], energy: f64, x: &[Complex64]) -> f64 {
    hx.iter()
        .zip(x)
        .map(|(h, c)| (h - energy * c).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Rotate the global phase so the largest coefficient is real and positive.
fn phase_fix(coeffs: &mut [Complex64]) {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, c) in coeffs.iter().enumerate() {
        let m = c.norm_sqr();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    let c = coeffs[best];
    let mag = c.norm();
    if mag > 0.0 {
        let factor = c.conj() / mag;
        coeffs.iter_mut().for_each(|x| *x *= factor);
    }
}

fn phase_unit(k: u8) -> Complex64 {
    match k & 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// ‖Hx − ⟨x|H|x⟩x‖ for the normalized copy of `coeffs`.
pub fn eigenstate_residual(model: &Model, coeffs: &[Complex64]) -> f64 {
    let h = model.term(TermId::Total).expect("term assembly cannot fail");
    let nrm = norm(coeffs);
    let x: Vec<Complex64> = coeffs.iter().map(|c| c / nrm).collect();
    let hx = h.apply(&x);
    let energy = dot(&x, &hx).re;
    residual_norm(&hx, energy, &x)
}

/// Column-by-column dense assembly of U†·op·U as a real matrix, where U is
/// the diagonal phase rotation i^{phases}.
pub(crate) fn assemble_dense_real(op: &SparseOperator, phases: &[u8]) -> Vec<f64> {
    let n = op.dim();
    let mut a = vec![0.0f64; n * n];
    let mut unit = vec![C_ZERO; n];
    let mut col = vec![C_ZERO; n];
    for j in 0..n {
        unit[j] = phase_unit(phases[j]);
        op.apply_into(&unit, &mut col);
        unit[j] = C_ZERO;
        let target = &mut a[j * n..(j + 1) * n];
        for i in 0..n {
            target[i] = (col[i] * phase_unit(phases[i]).conj()).re;
        }
    }
    a
}

/// Lowest-k eigenpairs of a (phase-rotated) operator through LAPACK.
/// Returns ascending eigenvalues with the n×k column-major eigenvectors.
pub(crate) fn dense_lowest_from_op(
    op: &SparseOperator,
    phases: &[u8],
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = assemble_dense_real(op, phases);
    lapack::symmetric_lowest(&mut a, op.dim(), k)
}

/// Dense solve for the lowest eigenpairs of the model Hamiltonian.
pub fn dense_eigensolve(model: &Model, cfg: &EigenSolveConfig) -> Result<Vec<QuantumState>> {
    let dim = model.dim();
    if dim > cfg.dense_cap {
        return Err(PfvError::DenseCap { dim, cap: cfg.dense_cap });
    }
    let k = match cfg.which {
        EigenWhich::Ground => 1,
        EigenWhich::LowestK(k) => k,
    };
    if k == 0 || k > dim {
        return Err(PfvError::Config(format!("cannot return {k} states from dimension {dim}")));
    }
    let h = model.term(TermId::Total)?;
    let phases = model.phases();
    let (w, z) = dense_lowest_from_op(&h, &phases, k)?;
    let mut out = Vec::with_capacity(k);
    for e in 0..k {
        let mut coeffs: Vec<Complex64> = (0..dim)
            .map(|i| phase_unit(phases[i]) * z[e * dim + i])
            .collect();
        phase_fix(&mut coeffs);
        let hx = h.apply(&coeffs);
        let eigenresidual = residual_norm(&hx, w[e], &coeffs);
        out.push(QuantumState { coeffs, energy: w[e], eigenresidual });
    }
    Ok(out)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|c| *c /= n);
    v
}

/// Lanczos ground-state solve with full two-pass reorthogonalization,
/// periodic Ritz extraction, restarts at the Krylov cap, and acceptance only
/// on the explicit residual ‖Hx − Ex‖ ≤ tol.
pub fn lanczos_ground_state(model: &Model, cfg: &EigenSolveConfig) -> Result<QuantumState> {
    let h = model.term(TermId::Total)?;
    let dim = model.dim();
    let scale = model.spectral_scale().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_kry = cfg.krylov_dim.max(2).min(dim);

    let mut v0 = random_unit(dim, &mut rng);
    let mut matvecs = 0usize;
    let mut best: Option<(f64, f64, Vec<Complex64>)> = None;

    'restart: loop {
        let mut basis: Vec<Vec<Complex64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        for k in 0..max_kry {
            if matvecs >= cfg.max_iters {
                let residual = best.as_ref().map(|b| b.0).unwrap_or(f64::INFINITY);
                return Err(PfvError::NoConvergence { residual, iterations: matvecs });
            }
            let mut w = h.apply(&basis[k]);
            matvecs += 1;
            let alpha = dot(&basis[k], &w).re;
            alphas.push(alpha);
            for (wi, vi) in w.iter_mut().zip(&basis[k]) {
                *wi -= alpha * vi;
            }
            if k > 0 {
                let beta_prev = betas[k - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[k - 1]) {
                    *wi -= beta_prev * vi;
                }
            }
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    if c != C_ZERO {
                        for (wi, vi) in w.iter_mut().zip(v) {
                            *wi -= c * vi;
                        }
                    }
                }
            }
            let beta = norm(&w);
            let exhausted = beta <= 1e-14 * scale;
            let at_end = k + 1 == max_kry;

            if k % 5 == 4 || at_end || exhausted {
                let (_theta, zmat) = lapack::tridiagonal_eigen(&alphas, &betas)?;
                let m = alphas.len();
                let s = &zmat[0..m];
                let estimate = beta * s[m - 1].abs();
                if estimate <= 0.5 * cfg.tol || at_end || exhausted {
                    let mut x = vec![C_ZERO; dim];
                    for (si, vi) in s.iter().zip(&basis) {
                        for (xi, vij) in x.iter_mut().zip(vi) {
                            *xi += *si * vij;
                        }
                    }
                    let xn = norm(&x);
                    x.iter_mut().for_each(|c| *c /= xn);
                    let hx = h.apply(&x);
                    matvecs += 1;
                    let energy = dot(&x, &hx).re;
                    let res = residual_norm(&hx, energy, &x);
                    let improved = best.as_ref().map(|b| res < b.0).unwrap_or(true);
                    if improved {
                        best = Some((res, energy, x.clone()));
                    }
                    if res <= cfg.tol {
                        let (res, energy, mut coeffs) = best.unwrap();
                        phase_fix(&mut coeffs);
                        return Ok(QuantumState { coeffs, energy, eigenresidual: res });
                    }
                    if at_end || exhausted {
                        // Restart from the best Ritz vector; nudge it when the
                        // Krylov space collapsed onto a non-converged vector.
                        v0 = best.as_ref().unwrap().2.clone();
                        if exhausted {
                            let noise = random_unit(dim, &mut rng);
                            for (vi, ni) in v0.iter_mut().zip(&noise) {
                                *vi += 1e-8 * ni;
                            }
                            let n = norm(&v0);
                            v0.iter_mut().for_each(|c| *c /= n);
                        }
                        continue 'restart;
                    }
                }
            }
            if beta == 0.0 {
                v0 = random_unit(dim, &mut rng);
                continue 'restart;
            }
            w.iter_mut().for_each(|c| *c /= beta);
            betas.push(beta);
            basis.push(w);
        }
        unreachable!("krylov loop always restarts or returns at the cap");
    }
}

/// Ground state through the dense path when the dimension allows it, and
/// through Lanczos otherwise.
pub fn solve_ground(model: &Model, cfg: &EigenSolveConfig) -> Result<QuantumState> {
    if model.dim() <= cfg.dense_cap {
        let mut states = dense_eigensolve(
            model,
            &EigenSolveConfig { which: EigenWhich::Ground, ..cfg.clone() },
        )?;
        Ok(states.remove(0))
    } else {
        lanczos_ground_state(model, cfg)
    }
}
