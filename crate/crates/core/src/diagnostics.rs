//! Eigenstate-level diagnostics: participation ratios, the most conducting
//! state of an ensemble, and the first excited level at strong disorder.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_hamiltonian, derive_seed, sample_disorder, ChainParams, DisorderRealization,
};
use crate::spectral::{decompose_for_transport, eigvals_hermitian, EdgeOverlaps};
use crate::theory::effective_hopping;
use crate::transport::diagonal_terms;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationMeta {
    pub seed: u64,
    pub index: u64,
    pub w: f64,
}

/// Site-basis probabilities of one eigenstate, normalized by
/// `sum_j |psi_j|^2 = 1` rather than the bilinear form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateProfile {
    pub probabilities: Vec<f64>,
    pub pr: f64,
    /// Diagonal transfer-time term of this state; infinite for a dark state
    /// fed from the pump site.
    pub tau_contrib: f64,
    pub state_index: usize,
    pub divergent: bool,
    pub realization_meta: RealizationMeta,
}

impl StateProfile {
    pub fn peak_site(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }

    /// Median probability over the half of the sites farthest from the
    /// peak.
    pub fn tail_probability(&self) -> f64 {
        let peak = self.peak_site();
        let mut sites: Vec<usize> = (0..self.probabilities.len()).collect();
        sites.sort_by_key(|&j| std::cmp::Reverse((j.abs_diff(peak), j)));
        let half = (self.probabilities.len() / 2).max(1);
        let mut tail: Vec<f64> = sites[..half]
            .iter()
            .map(|&j| self.probabilities[j])
            .collect();
        median(&mut tail)
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `1 / sum_j |psi_j|^4` for a normalized state.
pub fn participation_ratio(state: &[Complex64]) -> Result<f64> {
    if state.is_empty() {
        return Err(Error::Empty("state"));
    }
    let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    Ok(1.0 / state.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>())
}

fn normalized_probabilities(v: &[Complex64]) -> Vec<f64> {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    v.iter().map(|z| z.norm_sqr() / norm).collect()
}

/// Turns a right eigenvector into a profile.
pub fn profile_of(
    vector: &[Complex64],
    tau_contrib: f64,
    state_index: usize,
    divergent: bool,
    realization_meta: RealizationMeta,
) -> StateProfile {
    let probabilities = normalized_probabilities(vector);
    let pr = 1.0 / probabilities.iter().map(|p| p * p).sum::<f64>();
    StateProfile {
        probabilities,
        pr,
        tau_contrib,
        state_index,
        divergent,
        realization_meta,
    }
}

/// The state with the largest diagonal transfer-time term in one
/// realization. Ties go to the lowest eigenvalue-order index.
pub fn dominant_state(
    params: &ChainParams,
    disorder: &DisorderRealization,
) -> Result<StateProfile> {
    let h = build_hamiltonian(params, disorder)?;
    let spec = decompose_for_transport(&h, params.gamma_drain)?;
    let terms = diagonal_terms(&spec, params.gamma_drain, params.hbar)?;
    let floor = spec.width_floor(params.gamma_drain);
    let mut best: Option<(f64, usize, bool)> = None;
    for k in 0..spec.len() {
        let (value, divergent) = match terms.terms[k] {
            Some(t) => (t, false),
            None if spec.width(k) < floor
                && spec.pump_overlap(k).norm_sqr() > crate::transport::PUMP_FLOOR =>
            {
                (f64::INFINITY, true)
            }
            None => continue,
        };
        if best.is_none_or(|b| value > b.0) {
            best = Some((value, k, divergent));
        }
    }
    let (tau, k, divergent) = best.ok_or(Error::Empty("conducting states"))?;
    let v = spec.right_vector(k);
    Ok(profile_of(
        v.as_slice().expect("contiguous"),
        tau,
        k,
        divergent,
        RealizationMeta {
            seed: disorder.seed,
            index: disorder.realization_index,
            w: disorder.width,
        },
    ))
}

/// Dominant states of realizations `0..n_realizations` drawn with `seed`.
pub fn dominant_states(
    params: &ChainParams,
    w: f64,
    seed: u64,
    n_realizations: u64,
) -> Result<Vec<StateProfile>> {
    (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let d = sample_disorder(params, w, seed, r)?;
            dominant_state(params, &d)
        })
        .collect()
}

/// Among the dominant states of each realization, the one with the largest
/// finite transfer-time term. If every realization is dominated by a fed dark
/// state the error carries the first such profile.
pub fn most_conducting_state(
    params: &ChainParams,
    w: f64,
    seed: u64,
    n_realizations: u64,
) -> Result<StateProfile> {
    if n_realizations == 0 {
        return Err(Error::Empty("realizations"));
    }
    let states = dominant_states(params, w, seed, n_realizations)?;
    select_most_conducting(states)
}

pub fn select_most_conducting(states: Vec<StateProfile>) -> Result<StateProfile> {
    let mut best: Option<StateProfile> = None;
    let mut first_dark = None;
    for s in states {
        if s.divergent {
            first_dark.get_or_insert(s);
        } else if best.as_ref().is_none_or(|b| s.tau_contrib > b.tau_contrib) {
            best = Some(s);
        }
    }
    match (best, first_dark) {
        (Some(b), _) => Ok(b),
        (None, Some(d)) => Err(Error::AllDivergent(Box::new(d))),
        (None, None) => Err(Error::Empty("realizations")),
    }
}

/// Mean `PR/N` of the dominant state against `W/Omega_alpha` for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub alpha: f64,
    pub n_sites: usize,
    pub w_over_omega: Vec<f64>,
    pub pr_over_n: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCollapse {
    pub curves: Vec<PrCurve>,
    /// Largest spread of `PR/N` across exponents at equal size and equal
    /// `W/Omega_alpha`.
    pub spread: f64,
}

/// Realizations whose dominant state is a fed dark state are skipped.
pub fn pr_collapse_curve(
    base: &ChainParams,
    alphas: &[f64],
    sizes: &[usize],
    w_over_omega: &[f64],
    n_realizations: u64,
    master_seed: u64,
) -> Result<PrCollapse> {
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0)) {
        return Err(Error::invalid(
            "alpha",
            format!("PR collapse needs alpha > 0, got {a}"),
        ));
    }
    let mut curves = Vec::new();
    for &n in sizes {
        for &alpha in alphas {
            let params = ChainParams {
                n_sites: n,
                alpha,
                ..base.clone()
            };
            let omega = effective_hopping(alpha, params.gamma);
            let mut pr_over_n = Vec::with_capacity(w_over_omega.len());
            for (i, &x) in w_over_omega.iter().enumerate() {
                let states = dominant_states(
                    &params,
                    x * omega,
                    derive_seed(master_seed, i as u64),
                    n_realizations,
                )?;
                let prs: Vec<f64> = states
                    .iter()
                    .filter(|s| !s.divergent)
                    .map(|s| s.pr)
                    .collect();
                if prs.is_empty() {
                    return Err(Error::AllDivergent(Box::new(states[0].clone())));
                }
                pr_over_n.push(prs.iter().sum::<f64>() / (prs.len() as f64 * n as f64));
            }
            curves.push(PrCurve {
                alpha,
                n_sites: n,
                w_over_omega: w_over_omega.to_vec(),
                pr_over_n,
            });
        }
    }
    let spread = collapse_spread(&curves);
    Ok(PrCollapse { curves, spread })
}

/// Curves are compared point by point, so they must share a grid.
pub fn collapse_spread(curves: &[PrCurve]) -> f64 {
    let mut spread: f64 = 0.0;
    let mut sizes: Vec<usize> = curves.iter().map(|c| c.n_sites).collect();
    sizes.dedup();
    for n in sizes {
        let group: Vec<&PrCurve> = curves.iter().filter(|c| c.n_sites == n).collect();
        let points = group.iter().map(|c| c.pr_over_n.len()).min().unwrap_or(0);
        for i in 0..points {
            let vals = group.iter().map(|c| c.pr_over_n[i]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            spread = spread.max(hi - lo);
        }
    }
    spread
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstExcitedTable {
    pub w: Vec<f64>,
    pub median_abs_e2: Vec<f64>,
}

impl FirstExcitedTable {
    /// Least-squares slope of `|E_2|` against `W` over `[w_lo, w_hi]`.
    pub fn slope(&self, w_lo: f64, w_hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .w
            .iter()
            .zip(&self.median_abs_e2)
            .filter(|(w, _)| **w >= w_lo && **w <= w_hi)
            .map(|(w, e)| (*w, *e))
            .collect();
        if pts.len() < 2 {
            return Err(Error::FitFailed(
                "fewer than two points in the fit range".into(),
            ));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx)
    }
}

/// Median over realizations of `|E_2|`, the second-lowest level of `H`.
pub fn first_excited_vs_disorder(
    params: &ChainParams,
    w_grid: &[f64],
    n_realizations: u64,
    master_seed: u64,
) -> Result<FirstExcitedTable> {
    if params.n_sites < 2 {
        return Err(Error::invalid("n_sites", "needs at least two levels"));
    }
    if n_realizations == 0 {
        return Err(Error::Empty("realizations"));
    }
    let mut medians = Vec::with_capacity(w_grid.len());
    for (i, &w) in w_grid.iter().enumerate() {
        let seed = derive_seed(master_seed, i as u64);
        let mut e2: Vec<f64> = (0..n_realizations)
            .into_par_iter()
            .map(|r| {
                let d = sample_disorder(params, w, seed, r)?;
                let ev = eigvals_hermitian(&build_hamiltonian(params, &d)?)?;
                Ok(ev[1].abs())
            })
            .collect::<Result<_>>()?;
        medians.push(median(&mut e2));
    }
    Ok(FirstExcitedTable {
        w: w_grid.to_vec(),
        median_abs_e2: medians,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn pr_examples() {
        let n = 7;
        let uniform = vec![c(1.0 / (n as f64).sqrt()); n];
        assert!((participation_ratio(&uniform).unwrap() - n as f64).abs() < 1e-12);
        let mut basis = vec![c(0.0); n];
        basis[3] = c(1.0);
        assert_eq!(participation_ratio(&basis).unwrap(), 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((participation_ratio(&[c(s), c(0.0), c(-s)]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            participation_ratio(&[c(1.0), c(1.0)]),
            Err(Error::NotNormalized(_))
        ));
        assert!(participation_ratio(&[]).is_err());
    }

    #[test]
    fn tail_uses_far_half() {
        let meta = RealizationMeta {
            seed: 0,
            index: 0,
            w: 0.0,
        };
        let mut v = vec![c(0.1); 10];
        v[0] = c(3.0);
        let p = profile_of(&v, 1.0, 0, false, meta);
        assert_eq!(p.peak_site(), 0);
        let total: f64 = p.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((p.tail_probability() - p.probabilities[9]).abs() < 1e-15);
    }

    #[test]
    fn single_realization_selection() {
        let p = ChainParams::new(12, 0.5);
        let d = sample_disorder(&p, 2.0, 3, 0).unwrap();
        let one = dominant_state(&p, &d).unwrap();
        let sel = most_conducting_state(&p, 2.0, 3, 1).unwrap();
        assert_eq!(one, sel);
        assert!(sel.pr >= 1.0 - 1e-12 && sel.pr <= 12.0 + 1e-12);
        assert!(sel.tau_contrib.is_finite());
    }

    #[test]
    fn all_to_all_clean_selects_dark_state() {
        let p = ChainParams::new(4, 0.0);
        match most_conducting_state(&p, 0.0, 1, 3) {
            Err(Error::AllDivergent(profile)) => {
                assert!(profile.divergent);
                assert!(profile.tau_contrib.is_infinite());
            }
            other => panic!("expected a divergent selection, got {other:?}"),
        }
    }

    #[test]
    fn selection_prefers_largest_finite_term() {
        let meta = |i| RealizationMeta {
            seed: 0,
            index: i,
            w: 1.0,
        };
        let mk = |tau, div, i| profile_of(&[c(1.0)], tau, 0, div, meta(i));
        let s = select_most_conducting(vec![
            mk(1.0, false, 0),
            mk(f64::INFINITY, true, 1),
            mk(5.0, false, 2),
        ])
        .unwrap();
        assert_eq!(s.realization_meta.index, 2);
    }

    #[test]
    fn first_excited_clean_all_to_all() {
        let t = first_excited_vs_disorder(&ChainParams::new(6, 0.0), &[0.0], 1, 0).unwrap();
        assert!((t.median_abs_e2[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_rejects_alpha_zero() {
        let base = ChainParams::new(10, 0.5);
        assert!(pr_collapse_curve(&base, &[0.0, 0.5], &[10], &[1.0], 2, 0).is_err());
    }

    #[test]
    fn strong_disorder_localizes() {
        let base = ChainParams::new(40, 0.5);
        let c = pr_collapse_curve(&base, &[0.5], &[40], &[1e4], 5, 9).unwrap();
        assert!(c.curves[0].pr_over_n[0] < 2.0 / 40.0);
    }
}
