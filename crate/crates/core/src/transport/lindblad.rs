//! Single-excitation Lindblad steady state over `{|0>, |1>, ..., |N>}`.
//!
//! Level 0 is the vacuum. The pump `L_p = sqrt(gamma_p/2hbar) |1><0|` refills
//! site 1 and the drain `L_d = sqrt(gamma_d/2hbar) |0><N|` empties site N,
//! each entering as `2 L rho L^dag - {L^dag L, rho}`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Solve, SVD, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, ChainParams, DisorderRealization};

/// Largest chain for the dense Liouvillian.
pub const MAX_SITES: usize = 24;

#[derive(Clone, Debug)]
pub struct LindbladResult {
    /// `(N+1) x (N+1)` density matrix, vacuum first.
    pub steady_state: Array2<Complex64>,
    /// `(gamma_d/hbar) <N|rho|N>`.
    pub current: f64,
}

/// Row-major vectorization `rho_ij -> i * dim + j`.
struct Liouvillian {
    dim: usize,
    m: Array2<Complex64>,
}

impl Liouvillian {
    fn new(dim: usize) -> Self {
        Liouvillian {
            dim,
            m: Array2::zeros((dim * dim, dim * dim)),
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.dim + j
    }

    /// `-(i/hbar) [H, rho]`.
    fn add_hamiltonian(&mut self, h: &Array2<f64>, hbar: f64) {
        let d = self.dim;
        let c = Complex64::new(0.0, -1.0 / hbar);
        for i in 0..d {
            for j in 0..d {
                let row = self.idx(i, j);
                for k in 0..d {
                    if h[[i, k]] != 0.0 {
                        let col = self.idx(k, j);
                        self.m[[row, col]] += c * h[[i, k]];
                    }
                    if h[[k, j]] != 0.0 {
                        let col = self.idx(i, k);
                        self.m[[row, col]] -= c * h[[k, j]];
                    }
                }
            }
        }
    }

    /// Jump `|to><from|` at rate `kappa`, i.e. `L = sqrt(kappa) |to><from|`.
    fn add_jump(&mut self, to: usize, from: usize, kappa: f64) {
        let d = self.dim;
        let (r, c) = (self.idx(to, to), self.idx(from, from));
        self.m[[r, c]] += 2.0 * kappa;
        for j in 0..d {
            let a = self.idx(from, j);
            self.m[[a, a]] -= kappa;
            let b = self.idx(j, from);
            self.m[[b, b]] -= kappa;
        }
    }
}

pub fn lindblad_steady_current(
    params: &ChainParams,
    disorder: &DisorderRealization,
) -> Result<LindbladResult> {
    let n = params.n_sites;
    if n > MAX_SITES {
        return Err(Error::invalid(
            "n_sites",
            format!("the dense Liouvillian supports at most {MAX_SITES} sites, got {n}"),
        ));
    }
    let h = build_hamiltonian(params, disorder)?;
    let dim = n + 1;
    let mut full = Array2::<f64>::zeros((dim, dim));
    full.slice_mut(ndarray::s![1.., 1..]).assign(h.as_array());

    let mut liou = Liouvillian::new(dim);
    liou.add_hamiltonian(&full, params.hbar);
    liou.add_jump(1, 0, params.gamma_pump / (2.0 * params.hbar));
    liou.add_jump(0, n, params.gamma_drain / (2.0 * params.hbar));

    let (_, sv, _) = liou.m.svd(false, false)?;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let null = sv.iter().filter(|&&s| s <= 1e-10 * smax).count();
    if null > 1 {
        return Err(Error::NonUniqueSteadyState { dim: null });
    }

    // The diagonal rows sum to zero (trace preservation), so one of them can
    // be traded for the normalization condition.
    let mut system = liou.m;
    let d2 = dim * dim;
    system.row_mut(0).fill(Complex64::new(0.0, 0.0));
    for i in 0..dim {
        system[[0, i * dim + i]] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = Array1::<Complex64>::zeros(d2);
    rhs[0] = Complex64::new(1.0, 0.0);
    let x = system.solve_into(rhs)?;

    let rho = Array2::from_shape_vec((dim, dim), x.to_vec()).expect("dim^2 entries");
    let trace: Complex64 = rho.diag().sum();
    if (trace - 1.0).norm() > 1e-10 {
        return Err(Error::Linalg(format!("steady state has trace {trace}")));
    }
    let asym = rho
        .indexed_iter()
        .map(|((i, j), z)| (z - rho[[j, i]].conj()).norm())
        .fold(0.0, f64::max);
    if asym > 1e-10 {
        return Err(Error::Linalg(format!(
            "steady state is not Hermitian (residual {asym:e})"
        )));
    }
    let herm = Array2::from_shape_fn((dim, dim), |(i, j)| {
        0.5 * (rho[[i, j]] + rho[[j, i]].conj())
    });
    let (evals, _) = herm.eigh(UPLO::Lower)?;
    let min_eval = evals.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eval < -1e-10 {
        return Err(Error::Linalg(format!(
            "steady state is not positive semidefinite (eigenvalue {min_eval:e})"
        )));
    }
    let current = params.gamma_drain / params.hbar * herm[[n, n]].re;
    Ok(LindbladResult {
        steady_state: herm,
        current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DisorderRealization;

    #[test]
    fn no_pumping_leaves_vacuum() {
        let p = ChainParams::new(3, 1.0).with_pump(0.0);
        let r = lindblad_steady_current(
            &p,
            &DisorderRealization::from_energies(vec![0.1, -0.2, 0.3]),
        )
        .unwrap();
        assert!((r.steady_state[[0, 0]] - 1.0).norm() < 1e-12);
        assert!(r.current.abs() < 1e-12);
    }

    #[test]
    fn two_sites_match_residence_time() {
        // tau = 2/gamma_d + gamma_d/4 for unit hopping.
        let p = ChainParams::new(2, 1.0);
        let r = lindblad_steady_current(&p, &DisorderRealization::clean(2)).unwrap();
        let tau = 2.25;
        assert!(
            (r.current - 1.0 / (tau + 1.0)).abs() < 1e-12,
            "{}",
            r.current
        );
    }

    #[test]
    fn dark_states_make_the_state_non_unique() {
        let p = ChainParams::new(4, 0.0).with_pump(0.0);
        let err = lindblad_steady_current(&p, &DisorderRealization::clean(4)).unwrap_err();
        assert!(matches!(err, Error::NonUniqueSteadyState { .. }));
    }

    #[test]
    fn size_limit() {
        let p = ChainParams::new(25, 1.0);
        assert!(lindblad_steady_current(&p, &DisorderRealization::clean(25)).is_err());
    }
}
