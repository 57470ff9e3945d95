//! Thin wrapper over LAPACK's divide-and-conquer symmetric solver.
//!
//! `ndarray-linalg` only exposes `dsyev`, which is several times slower for
//! the sizes used in disorder sweeps.

use std::os::raw::c_char;

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and, if requested, eigenvectors as columns.
pub(crate) fn dsyevd(a: &Array2<f64>, vectors: bool) -> Result<(Array1<f64>, Option<Array2<f64>>)> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver {
            kind: "symmetric",
            n,
            scale,
            reason: "matrix has non-finite entries".into(),
        });
    }
    // Column-major copy; for a symmetric input this is just a copy.
    let mut buf: Vec<f64> = a.t().iter().copied().collect();
    let mut w = vec![0.0; n];
    let ni = n as i32;
    let jobz = if vectors { b'V' } else { b'N' } as c_char;
    let uplo = b'L' as c_char;
    let mut info = 0i32;
    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    let query = -1i32;
    // SAFETY: buffers are sized per the LAPACK contract; a workspace query
    // (lwork = liwork = -1) only writes the first element of each work array.
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &query,
            iwork_query.as_mut_ptr(),
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver {
            kind: "symmetric",
            n,
            scale,
            reason: format!("dsyevd workspace query returned info = {info}"),
        });
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: as above, with workspaces of the queried size.
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver {
            kind: "symmetric",
            n,
            scale,
            reason: format!("dsyevd returned info = {info}"),
        });
    }
    let vecs = if vectors {
        Some(Array2::from_shape_vec((n, n).f(), buf).expect("buffer has n*n entries"))
    } else {
        None
    };
    Ok((Array1::from(w), vecs))
}
