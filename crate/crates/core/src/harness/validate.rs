//! Self-check suite behind `det validate`: closed-form spectra, the
//! three-way transfer-time oracle and the fully connected chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{
    build_clean_periodic, build_effective_hamiltonian, build_hamiltonian, sample_disorder,
    Boundary, ChainParams, DisorderRealization,
};
use crate::spectral::{eig_hermitian, eigvals_hermitian, DrainCoupledSpectrum, EdgeOverlaps};
use crate::theory::{eq_lr_spectrum, spectral_radius_sum};
use crate::transport::{
    lindblad::lindblad_steady_current, propagation::transfer_time_propagation, steady_current,
    transfer_time_full,
};

pub const SPECTRUM_TOL: f64 = 1e-10;
pub const ORACLE_TOL: f64 = 1e-6;

const PROPAGATION_T_MAX: f64 = 1e15;
const PROPAGATION_DT: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed error against its tolerance.
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, worst: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            passed: worst <= tol,
            detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
        }
    }

    fn failed(name: impl Into<String>, why: String) -> Self {
        Check {
            name: name.into(),
            passed: false,
            detail: why,
        }
    }
}

fn sorted_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn guarded(name: &str, f: impl FnOnce() -> Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e.to_string()))
}

/// Ring spectra and band widths against direct diagonalization.
pub fn spectral_identities() -> Vec<Check> {
    let ring = guarded("ring spectrum", || {
        let mut worst: f64 = 0.0;
        for n in [8, 9, 16, 17] {
            for alpha in [0.5, 1.0, 2.0, 3.0] {
                let p = ChainParams::new(n, alpha).with_boundary(Boundary::Periodic);
                let direct = eigvals_hermitian(&build_clean_periodic(&p)?)?.to_vec();
                worst = worst.max(sorted_distance(eq_lr_spectrum(n, alpha, 1.0)?, direct));
            }
        }
        Ok(Check::new("ring spectrum", worst, SPECTRUM_TOL))
    });
    let radius = guarded("band width", || {
        let mut worst: f64 = 0.0;
        for n in [8, 16, 64] {
            for alpha in [1.5, 2.0, 3.0] {
                let p = ChainParams::new(n, alpha).with_boundary(Boundary::Periodic);
                let e = eigvals_hermitian(&build_clean_periodic(&p)?)?;
                let direct = e[n - 1] - e[0];
                worst = worst.max((spectral_radius_sum(n, alpha, 1.0)? - direct).abs());
            }
        }
        Ok(Check::new("band width", worst, SPECTRUM_TOL))
    });
    vec![ring, radius]
}

/// One random chain of the oracle comparison.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub params: ChainParams,
    pub disorder: DisorderRealization,
}

/// `count` chains with `2 <= N <= 10`, `alpha` in {1/3, 1, 2} and `W` in
/// {0.1, 1, 10}, reproducible from `seed`.
pub fn oracle_cases(count: usize, seed: u64) -> Result<Vec<OracleCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(2..=10);
            let alpha = [1.0 / 3.0, 1.0, 2.0][rng.random_range(0..3)];
            let w = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let params = ChainParams::new(n, alpha);
            let disorder = sample_disorder(&params, w, seed, i as u64)?;
            Ok(OracleCase { params, disorder })
        })
        .collect()
}

/// Relative errors of the eigenbasis time against propagation and of the
/// resulting current against the Lindblad steady state.
pub fn oracle_errors(case: &OracleCase) -> Result<(f64, f64)> {
    let p = &case.params;
    let h = build_hamiltonian(p, &case.disorder)?;
    let heff = build_effective_hamiltonian(&h, p.gamma_drain)?;
    let spec = crate::spectral::decompose_for_transport(&h, p.gamma_drain)?;
    let tau = transfer_time_full(&spec, p.gamma_drain, p.hbar)?;
    let tau_prop = transfer_time_propagation(
        &heff,
        p.gamma_drain,
        p.hbar,
        PROPAGATION_T_MAX,
        PROPAGATION_DT,
    )?;
    let current = steady_current(tau, p.gamma_pump, p.hbar);
    let lindblad = lindblad_steady_current(p, &case.disorder)?.current;
    Ok((
        (tau - tau_prop).abs() / tau_prop,
        (current - lindblad).abs() / lindblad,
    ))
}

pub fn oracle_triangle(count: usize, seed: u64) -> Vec<Check> {
    let cases = match oracle_cases(count, seed) {
        Ok(c) => c,
        Err(e) => return vec![Check::failed("oracle cases", e.to_string())],
    };
    let (mut prop, mut lind): (f64, f64) = (0.0, 0.0);
    for (i, c) in cases.iter().enumerate() {
        match oracle_errors(c) {
            Ok((a, b)) => {
                prop = prop.max(a);
                lind = lind.max(b);
            }
            Err(e) => {
                let why = format!(
                    "case {i} (N={}, alpha={}): {e}",
                    c.params.n_sites, c.params.alpha
                );
                return vec![Check::failed("eigenbasis vs propagation", why)];
            }
        }
    }
    vec![
        Check::new("eigenbasis vs propagation", prop, ORACLE_TOL),
        Check::new("eigenbasis vs Lindblad", lind, ORACLE_TOL),
    ]
}

/// Clean fully connected chain: the two-level spectrum, the leading-order
/// widths `gamma_d/(2N)` and `(gamma_d/2)(N-1)/N`, exactly `N-2` dark
/// states, and the width sum `gamma_d/2` of the exact spectrum.
pub fn all_to_all(n: usize, gamma_drain: f64) -> Result<Check> {
    let p = ChainParams::new(n, 0.0).with_drain(gamma_drain);
    let h = build_hamiltonian(&p, &DisorderRealization::clean(n))?;
    let basis = eig_hermitian(&h)?;
    let nf = n as f64;
    let mut want = vec![1.0; n];
    want[0] = -(nf - 1.0);
    let mut worst = sorted_distance(basis.eigenvalues.to_vec(), want);

    let spec = DrainCoupledSpectrum::solve(basis, gamma_drain)?;
    let mut want = vec![0.0; n];
    want[0] = gamma_drain / (2.0 * nf);
    want[1] = 0.5 * gamma_drain * (nf - 1.0) / nf;
    worst = worst.max(sorted_distance(spec.first_order_widths(), want));

    let widths: Vec<f64> = (0..n).map(|k| spec.width(k)).collect();
    let dark = widths.iter().filter(|g| **g <= SPECTRUM_TOL).count();
    if dark != n - 2 {
        return Ok(Check::failed(
            format!("all-to-all N={n}"),
            format!("{dark} dark states, expected {}", n - 2),
        ));
    }
    worst = worst.max((widths.iter().sum::<f64>() - 0.5 * gamma_drain).abs());
    Ok(Check::new(format!("all-to-all N={n}"), worst, SPECTRUM_TOL))
}

/// `quick` runs only the oracle comparison.
pub fn run_validation(quick: bool) -> Vec<Check> {
    let mut checks = oracle_triangle(20, 2024);
    if !quick {
        checks.extend(spectral_identities());
        for n in [4, 16, 64] {
            checks.push(guarded("all-to-all", || all_to_all(n, 1.0)));
        }
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_cases_are_reproducible() {
        let a = oracle_cases(5, 9).unwrap();
        let b = oracle_cases(5, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.params, y.params);
            assert_eq!(x.disorder, y.disorder);
        }
    }

    #[test]
    fn quick_validation_passes() {
        for c in run_validation(true) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn all_to_all_small() {
        let c = all_to_all(4, 1.0).unwrap();
        assert!(c.passed, "{}", c.detail);
    }
}
