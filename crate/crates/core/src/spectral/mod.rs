//! Eigendecompositions of the chain Hamiltonian and of its drain-broadened
//! effective Hamiltonian.
//!
//! Two routes give the complex spectrum of `H_eff = H - i (gamma_d/2) |N><N|`:
//!
//! * [`eig_biorthogonal`] diagonalizes `H_eff` directly as a general complex
//!   matrix (LAPACK `zgeev`) and builds left vectors from the right ones.
//! * [`rank_one::DrainCoupledSpectrum`] starts from the real spectrum of `H`
//!   and solves the secular equation of the single-entry perturbation. It is
//!   an order of magnitude cheaper and resolves widths far below the round-off
//!   level of the dense route, so sweeps use it and fall back to the dense
//!   route when its own consistency checks fail.

mod lapack;
pub mod rank_one;

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, Inverse};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{build_effective_hamiltonian, EffectiveHamiltonianMatrix, HamiltonianMatrix};

pub use rank_one::DrainCoupledSpectrum;

/// Widths below this fraction of `gamma_d` are treated as exactly dark when
/// they come out of the dense solver, whose imaginary parts are only accurate
/// to round-off relative to the matrix norm.
pub const DENSE_WIDTH_FLOOR: f64 = 1e-13;

/// Sorted real spectrum with orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct RealSpectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl RealSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn eig_hermitian(h: &HamiltonianMatrix) -> Result<RealSpectrum> {
    let (eigenvalues, vectors) = lapack::dsyevd(h.as_array(), true)?;
    let eigenvectors = vectors.expect("vectors requested");
    // The transport formulas only read the first and last rows of U, so
    // those are the rows checked. Some OpenBLAS kernels return a U that
    // is not orthogonal; see .cargo/config.toml.
    let n = eigenvalues.len();
    for row in [0, n - 1] {
        let norm: f64 = eigenvectors.row(row).iter().map(|x| x * x).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Eigensolver {
                kind: "symmetric",
                n,
                scale: eigenvalues.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
                reason: format!(
                    "eigenvector row {row} has squared norm {norm}; check OPENBLAS_CORETYPE"
                ),
            });
        }
    }
    Ok(RealSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, ascending.
pub fn eigvals_hermitian(h: &HamiltonianMatrix) -> Result<Array1<f64>> {
    Ok(lapack::dsyevd(h.as_array(), false)?.0)
}

/// `E_2 - E_1`.
pub fn energy_gap(spec: &RealSpectrum) -> Result<f64> {
    gap_of(spec.eigenvalues.as_slice().expect("contiguous"))
}

pub(crate) fn gap_of(sorted: &[f64]) -> Result<f64> {
    if sorted.len() < 2 {
        return Err(Error::invalid(
            "n_sites",
            "an energy gap needs at least two levels",
        ));
    }
    Ok(sorted[1] - sorted[0])
}

/// `E_max - E_min`.
pub fn spectral_radius(spec: &RealSpectrum) -> f64 {
    match (spec.eigenvalues.first(), spec.eigenvalues.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    }
}

/// Overlaps of the effective-Hamiltonian eigenstates with the pump site `|1>`
/// and the drain site `|N>`, which is all the transfer-time formulas need.
pub trait EdgeOverlaps {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Complex eigenvalue `eps_k`.
    fn eigenvalue(&self, k: usize) -> Complex64;

    /// `<N|r_k>` with `r_k^T r_k = 1`.
    fn drain_overlap(&self, k: usize) -> Complex64;

    /// `<r~_k|1>`.
    fn pump_overlap(&self, k: usize) -> Complex64;

    /// Petermann factor `<l|l><r|r> / |<l|r>|^2 >= 1`. It is the exact
    /// ratio between `(gamma_d/2) |<N|r_k>|^2` and `Gamma_k` under the
    /// bilinear normalization.
    fn petermann(&self, k: usize) -> f64;

    /// Right eigenvector normalized by `r^T r = 1`.
    fn right_vector(&self, k: usize) -> Array1<Complex64>;

    /// Widths below this value are treated as dark.
    fn width_floor(&self, gamma_drain: f64) -> f64;

    fn width(&self, k: usize) -> f64 {
        -self.eigenvalue(k).im
    }

    /// Whether any eigenvalue pair sits within the degeneracy tolerance.
    fn has_degenerate_pairs(&self) -> bool {
        false
    }
}

/// Complex spectrum of `H_eff` with paired right (columns) and left (rows)
/// eigenvectors, `<r~_k|r_k'> = delta_kk'`.
#[derive(Clone, Debug)]
pub struct BiorthogonalSpectrum {
    pub eigenvalues: Array1<Complex64>,
    pub right_vectors: Array2<Complex64>,
    pub left_vectors: Array2<Complex64>,
    pub widths: Array1<f64>,
    /// Eigenvalue pairs closer than `1e-12 ||H_eff||`.
    pub degenerate_pairs: Vec<(usize, usize)>,
    /// Whether the left vectors had to be taken from the inverse of the
    /// right-vector matrix instead of the transpose.
    pub used_inverse: bool,
}

impl BiorthogonalSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |(L R - I)_ij|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        residual_from_identity(&self.left_vectors.dot(&self.right_vectors)).0
    }

    /// `sum_k eps_k |r_k><r~_k|`.
    pub fn reconstruct(&self) -> Array2<Complex64> {
        let mut scaled = self.right_vectors.clone();
        for (mut col, e) in scaled.axis_iter_mut(Axis(1)).zip(self.eigenvalues.iter()) {
            col.mapv_inplace(|x| x * e);
        }
        scaled.dot(&self.left_vectors)
    }
}

impl EdgeOverlaps for BiorthogonalSpectrum {
    fn len(&self) -> usize {
        self.n()
    }

    fn eigenvalue(&self, k: usize) -> Complex64 {
        self.eigenvalues[k]
    }

    fn drain_overlap(&self, k: usize) -> Complex64 {
        self.right_vectors[[self.n() - 1, k]]
    }

    fn pump_overlap(&self, k: usize) -> Complex64 {
        self.left_vectors[[k, 0]]
    }

    fn petermann(&self, k: usize) -> f64 {
        let r = self.right_vectors.column(k);
        let l = self.left_vectors.row(k);
        let rr: f64 = r.iter().map(|x| x.norm_sqr()).sum();
        let ll: f64 = l.iter().map(|x| x.norm_sqr()).sum();
        let lr: Complex64 = l.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
        rr * ll / lr.norm_sqr()
    }

    fn right_vector(&self, k: usize) -> Array1<Complex64> {
        self.right_vectors.column(k).to_owned()
    }

    fn width_floor(&self, gamma_drain: f64) -> f64 {
        DENSE_WIDTH_FLOOR * gamma_drain
    }

    fn has_degenerate_pairs(&self) -> bool {
        !self.degenerate_pairs.is_empty()
    }
}

fn bilinear(u: ndarray::ArrayView1<Complex64>, v: ndarray::ArrayView1<Complex64>) -> Complex64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

fn residual_from_identity(m: &Array2<Complex64>) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for ((i, j), x) in m.indexed_iter() {
        let d = if i == j { (x - 1.0).norm() } else { x.norm() };
        if d > worst.0 {
            worst = (d, i, j);
        }
    }
    worst
}

fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense biorthogonal decomposition of a complex symmetric matrix.
pub fn eig_biorthogonal(h_eff: &EffectiveHamiltonianMatrix) -> Result<BiorthogonalSpectrum> {
    let a = h_eff.as_array();
    let n = a.nrows();
    let norm = frobenius(a);
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).norm() > 1e-12 * norm.max(1.0) {
                return Err(Error::invalid(
                    "h_eff",
                    format!("matrix is not complex symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    let (values, vectors) = a.eig().map_err(|e| Error::Eigensolver {
        kind: "complex",
        n,
        scale: norm,
        reason: e.to_string(),
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .re
            .total_cmp(&values[j].re)
            .then(values[i].im.total_cmp(&values[j].im))
    });
    let eigenvalues: Array1<Complex64> = order.iter().map(|&i| values[i]).collect();
    let mut right = vectors.select(Axis(1), &order);

    let deg_tol = 1e-12 * norm;
    let mut degenerate_pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (eigenvalues[j] - eigenvalues[i]).norm() <= deg_tol {
                degenerate_pairs.push((i, j));
            }
        }
    }

    // Bilinear Gram-Schmidt inside degenerate clusters: eigenvectors of
    // distinct eigenvalues of a complex symmetric matrix are already
    // orthogonal under u^T v, degenerate ones are not.
    let mut self_orthogonal = false;
    for k in 0..n {
        let partners: Vec<usize> = degenerate_pairs
            .iter()
            .filter(|&&(_, j)| j == k)
            .map(|&(i, _)| i)
            .collect();
        for i in partners {
            let proj = bilinear(right.column(i), right.column(k));
            let ri = right.column(i).to_owned();
            right.column_mut(k).zip_mut_with(&ri, |v, u| *v -= proj * u);
        }
        let col = right.column(k);
        let rr = bilinear(col, col);
        let hh: f64 = col.iter().map(|x| x.norm_sqr()).sum();
        if rr.norm() < 1e-10 * hh {
            self_orthogonal = true;
        }
        let s = rr.sqrt();
        right.column_mut(k).mapv_inplace(|x| x / s);
    }

    let mut used_inverse = false;
    let mut left = right.t().to_owned();
    let mut residual = residual_from_identity(&left.dot(&right));
    if self_orthogonal || residual.0 > 1e-8 {
        used_inverse = true;
        // Fall back to the exact inverse of the right-vector matrix.
        let inv = right.inv().map_err(|e| Error::Eigensolver {
            kind: "complex",
            n,
            scale: norm,
            reason: format!("right eigenvector matrix is singular: {e}"),
        })?;
        left = inv;
        residual = residual_from_identity(&left.dot(&right));
    }
    if residual.0 > 1e-8 {
        let (_, i, j) = residual;
        return Err(Error::Degenerate {
            i,
            j,
            ei: eigenvalues[i],
            ej: eigenvalues[j],
            residual: residual.0,
        });
    }
    let widths = eigenvalues.mapv(|e| -e.im);
    Ok(BiorthogonalSpectrum {
        eigenvalues,
        right_vectors: right,
        left_vectors: left,
        widths,
        degenerate_pairs,
        used_inverse,
    })
}

/// Transport-ready spectrum from whichever route succeeded.
#[derive(Clone, Debug)]
pub enum TransportSpectrum {
    RankOne(DrainCoupledSpectrum),
    Dense(BiorthogonalSpectrum),
}

impl TransportSpectrum {
    fn inner(&self) -> &dyn EdgeOverlaps {
        match self {
            TransportSpectrum::RankOne(s) => s,
            TransportSpectrum::Dense(s) => s,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, TransportSpectrum::Dense(_))
    }
}

impl EdgeOverlaps for TransportSpectrum {
    fn len(&self) -> usize {
        self.inner().len()
    }
    fn eigenvalue(&self, k: usize) -> Complex64 {
        self.inner().eigenvalue(k)
    }
    fn drain_overlap(&self, k: usize) -> Complex64 {
        self.inner().drain_overlap(k)
    }
    fn pump_overlap(&self, k: usize) -> Complex64 {
        self.inner().pump_overlap(k)
    }
    fn petermann(&self, k: usize) -> f64 {
        self.inner().petermann(k)
    }
    fn right_vector(&self, k: usize) -> Array1<Complex64> {
        self.inner().right_vector(k)
    }
    fn width_floor(&self, gamma_drain: f64) -> f64 {
        self.inner().width_floor(gamma_drain)
    }
    fn has_degenerate_pairs(&self) -> bool {
        self.inner().has_degenerate_pairs()
    }
}

/// Decomposes `H - i gamma_d/2 |N><N|` through the rank-one route, falling
/// back to the dense solver if the secular solve does not validate.
pub fn decompose_for_transport(
    h: &HamiltonianMatrix,
    gamma_drain: f64,
) -> Result<TransportSpectrum> {
    if !(gamma_drain > 0.0) {
        return Err(Error::invalid("gamma_drain", "must be positive"));
    }
    let basis = eig_hermitian(h)?;
    match DrainCoupledSpectrum::solve(basis, gamma_drain) {
        Ok(s) => Ok(TransportSpectrum::RankOne(s)),
        Err(_) => {
            let heff = build_effective_hamiltonian(h, gamma_drain)?;
            Ok(TransportSpectrum::Dense(eig_biorthogonal(&heff)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, sample_disorder, ChainParams, DisorderRealization};
    use ndarray::array;

    fn clean_h(n: usize, alpha: f64) -> HamiltonianMatrix {
        build_hamiltonian(&ChainParams::new(n, alpha), &DisorderRealization::clean(n)).unwrap()
    }

    #[test]
    fn all_to_all_spectrum() {
        let s = eig_hermitian(&clean_h(4, 0.0)).unwrap();
        let want = [-3.0, 1.0, 1.0, 1.0];
        for (e, w) in s.eigenvalues.iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }
        assert!((energy_gap(&s).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let (a, t) = (0.7, 0.4);
        let h = HamiltonianMatrix::from_array(array![[a, -t], [-t, -a]]).unwrap();
        let s = eig_hermitian(&h).unwrap();
        let r = (a * a + t * t).sqrt();
        assert!((s.eigenvalues[0] + r).abs() < 1e-14);
        assert!((s.eigenvalues[1] - r).abs() < 1e-14);
        assert!((energy_gap(&s).unwrap() - 2.0 * r).abs() < 1e-14);
    }

    #[test]
    fn residual_and_orthonormality() {
        for n in [8, 200] {
            let p = ChainParams::new(n, 0.8);
            let d = sample_disorder(&p, 3.0, 17, 0).unwrap();
            let h = build_hamiltonian(&p, &d).unwrap();
            let s = eig_hermitian(&h).unwrap();
            let hn = h.as_array().iter().map(|x| x * x).sum::<f64>().sqrt();
            let v = &s.eigenvectors;
            let res = h.as_array().dot(v) - v * &s.eigenvalues;
            assert!(res.iter().all(|x| x.abs() < 1e-10 * hn), "n={n}");
            let g = v.t().dot(v) - Array2::<f64>::eye(n);
            assert!(g.iter().all(|x| x.abs() < 1e-10), "n={n}");
            assert!(s.eigenvalues.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn gap_needs_two_levels() {
        let s = eig_hermitian(&clean_h(1, 1.0)).unwrap();
        assert!(energy_gap(&s).is_err());
        assert_eq!(spectral_radius(&s), 0.0);
    }

    #[test]
    fn single_site_biorthogonal() {
        let heff = build_effective_hamiltonian(&clean_h(1, 0.0), 1.0).unwrap();
        let s = eig_biorthogonal(&heff).unwrap();
        assert!((s.eigenvalues[0] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((s.widths[0] - 0.5).abs() < 1e-15);
        assert!((s.right_vectors[[0, 0]].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_to_all_widths() {
        let heff = build_effective_hamiltonian(&clean_h(4, 0.0), 1.0).unwrap();
        let s = eig_biorthogonal(&heff).unwrap();
        let bright: Vec<f64> = s.widths.iter().copied().filter(|&g| g > 1e-12).collect();
        assert_eq!(bright.len(), 2);
        assert!(s.widths.iter().all(|&g| g > -1e-12));
        assert!((s.widths.sum() - 0.5).abs() < 1e-10);
        // First order in gamma_d these are 1/8 and 3/8; the exact values
        // are shifted by level repulsion to second order.
        assert!((bright.iter().fold(f64::MAX, |a, &b| a.min(b)) - 0.125).abs() < 2e-3);
        assert!(s.biorthogonality_residual() < 1e-10);
    }

    #[test]
    fn dense_invariants_on_random_chain() {
        let p = ChainParams::new(12, 0.6);
        let d = sample_disorder(&p, 1.5, 3, 9).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        let heff = build_effective_hamiltonian(&h, 0.7).unwrap();
        let s = eig_biorthogonal(&heff).unwrap();
        assert!(s.biorthogonality_residual() < 1e-10);
        assert!((s.widths.sum() - 0.35).abs() < 1e-10);
        assert!(s.eigenvalues.iter().all(|e| e.im <= 1e-12));
        let rec = s.reconstruct() - heff.as_array();
        assert!(frobenius(&rec) < 1e-8 * frobenius(heff.as_array()));
        // Exact width identity with the conventional normalization.
        for k in 0..s.n() {
            let r = s.right_vectors.column(k);
            let rr: f64 = r.iter().map(|x| x.norm_sqr()).sum();
            let gamma_k = 0.35 * r[11].norm_sqr() / rr;
            assert!((gamma_k - s.widths[k]).abs() < 1e-8 * (1.0 + s.widths[k]));
            assert!(s.petermann(k) >= 1.0 - 1e-12);
        }
        // Ordering by real part.
        assert!(s
            .eigenvalues
            .windows(2)
            .into_iter()
            .all(|w| w[0].re <= w[1].re));
    }

    #[test]
    fn hermitian_limit() {
        let p = ChainParams::new(10, 1.3);
        let d = sample_disorder(&p, 2.0, 8, 2).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        let real = eig_hermitian(&h).unwrap();
        let heff = build_effective_hamiltonian(&h, 1e-13).unwrap();
        let s = eig_biorthogonal(&heff).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(real.eigenvalues.iter()) {
            assert!((a.re - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_symmetric() {
        let m = array![
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)]
        ];
        let heff = EffectiveHamiltonianMatrix::from_array(m).unwrap();
        assert!(matches!(
            eig_biorthogonal(&heff),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn defective_matrix_is_reported() {
        // [[1, i], [i, -1]] is complex symmetric and nilpotent: a single
        // Jordan block with a self-orthogonal eigenvector.
        let c = |re, im| Complex64::new(re, im);
        let m = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(-1.0, 0.0)]];
        let heff = EffectiveHamiltonianMatrix::from_array(m).unwrap();
        let err = eig_biorthogonal(&heff).unwrap_err();
        assert!(
            matches!(err, Error::Degenerate { .. } | Error::Eigensolver { .. }),
            "{err}"
        );
    }
}
