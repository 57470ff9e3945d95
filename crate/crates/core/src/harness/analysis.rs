//! Feature extraction from `I_typ(W)` curves: the DET window, the parabolic
//! peak fit, rescaled overlays and the gap-versus-amplitude table.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use crate::diagnostics::median;
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, derive_seed, sample_disorder, ChainParams};
use crate::spectral::{eigvals_hermitian, gap_of};
use crate::theory::{effective_hopping, gamma_critical, gap_theory, w1_alpha, w_gap_alpha};
use crate::transport::Method;

/// Fewest grid points for which the window detection is attempted.
pub const MIN_WINDOW_POINTS: usize = 7;

const FIT_POINTS: usize = 5;

/// Exponent above which the picket-fence gap closing is not used as a scale.
const GAP_SCALE_MAX_ALPHA: f64 = 2.0;

/// Typical current against disorder, `W` strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub w: Vec<f64>,
    pub i_typ: Vec<f64>,
}

impl Curve {
    pub fn new(w: Vec<f64>, i_typ: Vec<f64>) -> Result<Self> {
        if w.len() != i_typ.len() {
            return Err(Error::SizeMismatch {
                expected: w.len(),
                got: i_typ.len(),
            });
        }
        if w.windows(2).any(|p| !(p[1] > p[0])) || w.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid(
                "w",
                "must be positive and strictly increasing",
            ));
        }
        if i_typ.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("i_typ", "must be positive and finite"));
        }
        Ok(Curve { w, i_typ })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn ln_i(&self) -> Vec<f64> {
        self.i_typ.iter().map(|x| x.ln()).collect()
    }
}

/// Local minimum of `ln I_typ` followed by a local maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetWindow {
    pub min_index: usize,
    pub max_index: usize,
    pub w_min_loc: f64,
    pub w_max_loc: f64,
    /// `I_typ(w_max_loc) / I_typ(w_min_loc)`.
    pub ratio: f64,
}

fn smooth3(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Extrema of the 3-point running mean of `ln I_typ`. Of all interior
/// minimum-then-maximum pairs the one with the largest rise is returned;
/// `None` when there is no such pair, as for a monotone curve.
pub fn detect_det_window(curve: &Curve) -> Result<Option<DetWindow>> {
    let n = curve.len();
    if n < MIN_WINDOW_POINTS {
        return Err(Error::invalid(
            "w_grid",
            format!("window detection needs at least {MIN_WINDOW_POINTS} points, got {n}"),
        ));
    }
    let s = smooth3(&curve.ln_i());
    let minima: Vec<usize> = (1..n - 1)
        .filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1])
        .collect();
    let maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| s[i] > s[i - 1] && s[i] >= s[i + 1])
        .collect();
    let best = minima
        .iter()
        .flat_map(|&i| maxima.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .max_by(|a, b| (s[a.1] - s[a.0]).total_cmp(&(s[b.1] - s[b.0])));
    Ok(best.map(|(i, j)| DetWindow {
        min_index: i,
        max_index: j,
        w_min_loc: curve.w[i],
        w_max_loc: curve.w[j],
        ratio: curve.i_typ[j] / curve.i_typ[i],
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub w_fit: f64,
    /// Half the spacing of the two grid points that bracket `w_fit`.
    pub errorbar: f64,
    pub fit_window: Vec<usize>,
    /// Second derivative of `ln I_typ` in `ln W`; negative for a peak.
    pub curvature: f64,
}

/// Parabolic fit of `ln I_typ` against `ln W` around the maximum of the
/// detected window.
pub fn fit_peak(curve: &Curve) -> Result<PeakFit> {
    let window = detect_det_window(curve)?
        .ok_or_else(|| Error::FitFailed("no local maximum after a local minimum".into()))?;
    // The window is located on the smoothed curve; centre the fit on the
    // raw maximum next to it.
    let j = window.max_index;
    let center = (j - 1..=(j + 1).min(curve.len() - 1))
        .max_by(|&a, &b| curve.i_typ[a].total_cmp(&curve.i_typ[b]))
        .expect("non-empty range");
    fit_peak_at(curve, center)
}

/// Least-squares parabola through the five points centred on `center`
/// (shifted inwards at the ends of the grid).
pub fn fit_peak_at(curve: &Curve, center: usize) -> Result<PeakFit> {
    let n = curve.len();
    if n < FIT_POINTS {
        return Err(Error::FitFailed(format!(
            "need {FIT_POINTS} points, got {n}"
        )));
    }
    let start = center.saturating_sub(FIT_POINTS / 2).min(n - FIT_POINTS);
    let idx: Vec<usize> = (start..start + FIT_POINTS).collect();
    let x0 = curve.w[center.min(n - 1)].ln();
    let x: Vec<f64> = idx.iter().map(|&i| curve.w[i].ln() - x0).collect();
    let y: Vec<f64> = idx.iter().map(|&i| curve.i_typ[i].ln()).collect();

    let mut ata = Array2::<f64>::zeros((3, 3));
    let mut aty = Array1::<f64>::zeros(3);
    for (xi, yi) in x.iter().zip(&y) {
        let row = [1.0, *xi, xi * xi];
        for r in 0..3 {
            aty[r] += row[r] * yi;
            for c in 0..3 {
                ata[[r, c]] += row[r] * row[c];
            }
        }
    }
    let c = ata.solve_into(aty)?;
    let curvature = 2.0 * c[2];
    if !(curvature < 0.0) {
        return Err(Error::FitFailed(format!(
            "curvature {curvature:e} is not negative"
        )));
    }
    let w_fit = (x0 - c[1] / (2.0 * c[2])).exp();
    let (lo, hi) = (curve.w[idx[0]], curve.w[idx[FIT_POINTS - 1]]);
    if !(w_fit >= lo && w_fit <= hi) {
        return Err(Error::FitFailed(format!(
            "vertex W = {w_fit:e} lies outside [{lo:e}, {hi:e}]"
        )));
    }
    let k = idx
        .windows(2)
        .find(|p| w_fit <= curve.w[p[1]])
        .expect("vertex inside window");
    let errorbar = 0.5 * (curve.w[k[1]] - curve.w[k[0]]);
    Ok(PeakFit {
        w_fit,
        errorbar,
        fit_window: idx,
        curvature,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Identity,
    W1Alpha,
    WGapAlpha,
    OmegaAlpha,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Scale::Identity),
            "w1_alpha" => Ok(Scale::W1Alpha),
            "w_gap_alpha" => Ok(Scale::WGapAlpha),
            "omega_alpha" => Ok(Scale::OmegaAlpha),
            _ => Err(Error::invalid("scale", format!("unknown scale `{s}`"))),
        }
    }
}

impl Scale {
    pub fn value(self, params: &ChainParams) -> Result<f64> {
        let (n, alpha, gamma) = (params.n_sites, params.alpha, params.gamma);
        Ok(match self {
            Scale::Identity => 1.0,
            Scale::W1Alpha => w1_alpha(n, alpha, gamma),
            Scale::OmegaAlpha => effective_hopping(alpha, gamma),
            Scale::WGapAlpha => {
                if !(alpha < GAP_SCALE_MAX_ALPHA) {
                    return Err(Error::not_applicable(
                        "w_gap_alpha",
                        format!("the picket-fence gap closing is used only for alpha < {GAP_SCALE_MAX_ALPHA}, got {alpha}"),
                    ));
                }
                w_gap_alpha(n, alpha, gamma)
            }
        })
    }
}

/// `(W / scale, hbar I_typ / gamma)` for one curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledCurve {
    pub n_sites: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub scale: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl RescaledCurve {
    pub fn as_curve(&self) -> Result<Curve> {
        Curve::new(self.x.clone(), self.y.clone())
    }
}

pub fn rescale_curve(curve: &Curve, params: &ChainParams, scale: Scale) -> Result<RescaledCurve> {
    let s = scale.value(params)?;
    let unit = params.hbar / params.gamma;
    Ok(RescaledCurve {
        n_sites: params.n_sites,
        alpha: params.alpha,
        gamma: params.gamma,
        scale: s,
        x: curve.w.iter().map(|w| w / s).collect(),
        y: curve.i_typ.iter().map(|i| unit * i).collect(),
    })
}

pub fn rescale_curves(
    results: &[SweepResult],
    scale: Scale,
    method: Method,
) -> Result<Vec<RescaledCurve>> {
    results
        .iter()
        .map(|r| rescale_curve(&r.curve(method)?, &r.config.chain, scale))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gamma: f64,
    /// Median of `E_2 - E_1` over realizations.
    pub delta_numeric: f64,
    pub delta_theory: f64,
    /// `W/N`.
    pub level_spacing: f64,
    pub gamma_cr: f64,
}

/// Ground-state gap against the long-range amplitude at fixed disorder. The
/// same disorder realizations are reused for every `gamma`.
pub fn gap_table(
    params: &ChainParams,
    w: f64,
    gammas: &[f64],
    n_realizations: u64,
    master_seed: u64,
) -> Result<Vec<GapRow>> {
    if n_realizations == 0 {
        return Err(Error::Empty("realizations"));
    }
    let n = params.n_sites;
    let seed = derive_seed(master_seed, 0);
    let gamma_cr = gamma_critical(w, n, params.alpha)?;
    gammas
        .iter()
        .map(|&g| {
            let p = params.clone().with_gamma(g);
            let mut gaps: Vec<f64> = (0..n_realizations)
                .into_par_iter()
                .map(|r| {
                    let d = sample_disorder(&p, w, seed, r)?;
                    let ev = eigvals_hermitian(&build_hamiltonian(&p, &d)?)?;
                    gap_of(ev.as_slice().expect("contiguous"))
                })
                .collect::<Result<_>>()?;
            Ok(GapRow {
                gamma: g,
                delta_numeric: median(&mut gaps),
                delta_theory: gap_theory(w, g, n, params.alpha)?,
                level_spacing: w / n as f64,
                gamma_cr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::log_grid;

    fn from_ln(w: &[f64], ln_i: impl Fn(f64) -> f64) -> Curve {
        Curve::new(w.to_vec(), w.iter().map(|&x| ln_i(x.ln()).exp()).collect()).unwrap()
    }

    #[test]
    fn monotone_decreasing_has_no_window() {
        let w = log_grid(1e-2, 1e4, 13);
        let c = from_ln(&w, |x| -0.5 * x - 0.01 * x * x);
        assert_eq!(detect_det_window(&c).unwrap(), None);
    }

    #[test]
    fn finds_constructed_min_and_max() {
        let w = log_grid(1e-2, 1e4, 25);
        let ln_i = [
            -1.0, -1.5, -2.0, -2.5, -3.0, -3.5, -4.0, -3.8, -3.4, -3.0, -2.6, -2.2, -1.9, -1.7,
            -1.6, -1.7, -1.9, -2.2, -2.6, -3.0, -3.5, -4.0, -4.5, -5.0, -5.5,
        ];
        let c = Curve::new(w.clone(), ln_i.iter().map(|x: &f64| x.exp()).collect()).unwrap();
        let win = detect_det_window(&c).unwrap().unwrap();
        assert_eq!((win.min_index, win.max_index), (6, 14));
        assert_eq!((win.w_min_loc, win.w_max_loc), (w[6], w[14]));
        assert!((win.ratio - (2.4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let c = from_ln(&[1.0, 2.0, 3.0], |x| x);
        assert!(detect_det_window(&c).is_err());
    }

    #[test]
    fn exact_parabola_vertex() {
        let w = log_grid(1.0, 1e3, 16);
        let xv = 123.4f64.ln();
        let c = from_ln(&w, |x| -2.0 - 0.7 * (x - xv).powi(2));
        let center = (0..w.len())
            .max_by(|&a, &b| c.i_typ[a].total_cmp(&c.i_typ[b]))
            .unwrap();
        let fit = fit_peak_at(&c, center).unwrap();
        assert!((fit.w_fit.ln() - xv).abs() < 1e-10, "{}", fit.w_fit);
        assert!((fit.curvature + 1.4).abs() < 1e-9);
        let k = fit
            .fit_window
            .iter()
            .position(|&i| w[i] >= fit.w_fit)
            .unwrap();
        let (a, b) = (w[fit.fit_window[k - 1]], w[fit.fit_window[k]]);
        assert!((fit.errorbar - 0.5 * (b - a)).abs() < 1e-12 * b);
    }

    #[test]
    fn flat_top_fails() {
        let w = log_grid(1.0, 1e3, 10);
        let c = from_ln(&w, |_| -1.0);
        assert!(matches!(fit_peak_at(&c, 5), Err(Error::FitFailed(_))));
        let c = from_ln(&w, |x| 0.3 * x * x);
        assert!(matches!(fit_peak_at(&c, 5), Err(Error::FitFailed(_))));
    }

    #[test]
    fn fit_peak_uses_window_maximum() {
        let w = log_grid(1e-2, 1e4, 31);
        let c = from_ln(&w, |x| {
            let (a, b) = (0.2f64.ln(), 300f64.ln());
            // Cubic with a minimum at a and a maximum at b.
            -(x.powi(3) / 3.0 - 0.5 * (a + b) * x * x + a * b * x) * 0.05
        });
        let win = detect_det_window(&c).unwrap().unwrap();
        assert!((win.w_min_loc / 0.2).ln().abs() < 0.5);
        assert!((win.w_max_loc / 300.0).ln().abs() < 0.5);
        let fit = fit_peak(&c).unwrap();
        assert!((fit.w_fit / 300.0).ln().abs() < 0.2, "{}", fit.w_fit);
    }

    #[test]
    fn identity_rescale_is_unchanged() {
        let c = from_ln(&[0.1, 1.0, 10.0], |x| -x);
        let r = rescale_curve(&c, &ChainParams::new(50, 0.5), Scale::Identity).unwrap();
        assert_eq!(r.as_curve().unwrap(), c);
    }

    #[test]
    fn gap_scale_rejected_for_short_range() {
        let c = from_ln(&[0.1, 1.0], |x| -x);
        let err = rescale_curve(&c, &ChainParams::new(50, 5.0), Scale::WGapAlpha).unwrap_err();
        assert!(matches!(err, Error::NotApplicable { .. }));
        let r = rescale_curve(&c, &ChainParams::new(50, 1.0 / 3.0), Scale::W1Alpha).unwrap();
        assert!((r.x[1] * w1_alpha(50, 1.0 / 3.0, 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gap_table_strong_coupling() {
        // Far above gamma_cr the gap approaches the picket-fence value.
        let p = ChainParams::new(100, 1.0 / 3.0);
        let cr = gamma_critical(1.0, 100, 1.0 / 3.0).unwrap();
        let rows = gap_table(&p, 1.0, &[30.0 * cr], 5, 3).unwrap();
        let r = rows[0];
        assert!(r.delta_numeric / r.delta_theory < 2.0 && r.delta_theory / r.delta_numeric < 2.0);
        assert_eq!(r.level_spacing, 0.01);
    }
}
