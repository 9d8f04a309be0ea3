//! Thin FFI surface over the system LAPACK (OpenBLAS): the symmetric dense
//! and symmetric tridiagonal eigensolvers this crate needs, plus thread
//! control for reproducible single-core runs.

use libc::{c_char, c_int};

use crate::error::{PfvError, Result};

extern "C" {
    fn dsyevr_(
        jobz: *const c_char,
        range: *const c_char,
        uplo: *const c_char,
        n: *const c_int,
        a: *mut f64,
        lda: *const c_int,
        vl: *const f64,
        vu: *const f64,
        il: *const c_int,
        iu: *const c_int,
        abstol: *const f64,
        m: *mut c_int,
        w: *mut f64,
        z: *mut f64,
        ldz: *const c_int,
        isuppz: *mut c_int,
        work: *mut f64,
        lwork: *const c_int,
        iwork: *mut c_int,
        liwork: *const c_int,
        info: *mut c_int,
    );

    fn dstevd_(
        jobz: *const c_char,
        n: *const c_int,
        d: *mut f64,
        e: *mut f64,
        z: *mut f64,
        ldz: *const c_int,
        work: *mut f64,
        lwork: *const c_int,
        iwork: *mut c_int,
        liwork: *const c_int,
        info: *mut c_int,
    );

    fn openblas_set_num_threads(num: c_int);
}

/// Cap the BLAS/LAPACK thread pool (1 keeps runs bit-reproducible).
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as c_int) }
}

/// Lowest `k` eigenpairs of a real symmetric matrix stored column-major in
/// `a` (destroyed). Returns ascending eigenvalues and the n×k column-major
/// eigenvector block.
pub(crate) fn symmetric_lowest(a: &mut [f64], n: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n);
    assert!(k >= 1 && k <= n, "requested {k} of {n} eigenpairs");
    let jobz = b'V' as c_char;
    let range = b'I' as c_char;
    let uplo = b'U' as c_char;
    let n_i = n as c_int;
    let il: c_int = 1;
    let iu = k as c_int;
    let (vl, vu) = (0.0f64, 0.0f64);
    // The underflow threshold asks dsyevr for eigenvalues at full accuracy.
    let abstol = f64::MIN_POSITIVE;
    let mut m: c_int = 0;
    let mut w = vec![0.0f64; n];
    let mut z = vec![0.0f64; n * k];
    let ldz = n as c_int;
    let mut isuppz = vec![0 as c_int; 2 * k.max(1)];
    let mut info: c_int = 0;

    let mut work_query = [0.0f64; 1];
    let mut iwork_query = [0 as c_int; 1];
    let neg_one: c_int = -1;
    unsafe {
        dsyevr_(
            &jobz, &range, &uplo, &n_i, a.as_mut_ptr(), &n_i, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ldz, isuppz.as_mut_ptr(),
            work_query.as_mut_ptr(), &neg_one, iwork_query.as_mut_ptr(), &neg_one, &mut info,
        );
    }
    if info != 0 {
        return Err(PfvError::Lapack { routine: "dsyevr", info });
    }
    let lwork = (work_query[0] as usize).max(26 * n);
    let liwork = (iwork_query[0] as usize).max(10 * n);
    let mut work = vec![0.0f64; lwork];
    let mut iwork = vec![0 as c_int; liwork];
    let lwork_i = lwork as c_int;
    let liwork_i = liwork as c_int;
    unsafe {
        dsyevr_(
            &jobz, &range, &uplo, &n_i, a.as_mut_ptr(), &n_i, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ldz, isuppz.as_mut_ptr(),
            work.as_mut_ptr(), &lwork_i, iwork.as_mut_ptr(), &liwork_i, &mut info,
        );
    }
    if info != 0 {
        return Err(PfvError::Lapack { routine: "dsyevr", info });
    }
    if (m as usize) < k {
        return Err(PfvError::Lapack { routine: "dsyevr", info: -999 });
    }
    w.truncate(k);
    Ok((w, z))
}

/// Full eigendecomposition of a symmetric tridiagonal matrix with diagonal
/// `d` and off-diagonal `e` (len d.len()−1). Returns ascending eigenvalues
/// and the column-major eigenvector matrix.
pub(crate) fn tridiagonal_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    assert!(n >= 1 && e.len() + 1 == n);
    if n == 1 {
        return Ok((vec![d[0]], vec![1.0]));
    }
    let jobz = b'V' as c_char;
    let n_i = n as c_int;
    let mut dv = d.to_vec();
    let mut ev = e.to_vec();
    ev.push(0.0);
    let mut z = vec![0.0f64; n * n];
    let ldz = n as c_int;
    let lwork = 1 + 4 * n + n * n;
    let liwork = 3 + 5 * n;
    let mut work = vec![0.0f64; lwork];
    let mut iwork = vec![0 as c_int; liwork];
    let lwork_i = lwork as c_int;
    let liwork_i = liwork as c_int;
    let mut info: c_int = 0;
    unsafe {
        dstevd_(
            &jobz, &n_i, dv.as_mut_ptr(), ev.as_mut_ptr(), z.as_mut_ptr(), &ldz,
            work.as_mut_ptr(), &lwork_i, iwork.as_mut_ptr(), &liwork_i, &mut info,
        );
    }
    if info != 0 {
        return Err(PfvError::Lapack { routine: "dstevd", info });
    }
    Ok((dv, z))
}
