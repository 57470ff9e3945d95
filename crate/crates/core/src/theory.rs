//! Closed-form predictors: disorder thresholds, the picket-fence gap
//! estimate, clean ring spectra and the band width.
//!
//! Everything here is a pure function of its arguments. Energies are in the
//! units of `gamma`, localization lengths in sites.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::ChainParams;

/// Prefactor of the Anderson localization length `xi = 105.2 (Omega/W)^2`.
pub const XI_PREFACTOR: f64 = 105.2;

/// `2 * XI_PREFACTOR`, as it appears in the delocalization thresholds.
pub const THRESHOLD_CONSTANT: f64 = 210.4;

fn inv_power(n: f64, alpha: f64) -> f64 {
    if alpha == f64::INFINITY {
        if n == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        n.powf(-alpha)
    }
}

/// Nearest-neighbour hopping of the power-law chain seen through a
/// staggered disorder pattern, `gamma (1 - 2^-alpha)`.
pub fn effective_hopping(alpha: f64, gamma: f64) -> f64 {
    gamma * (1.0 - inv_power(2.0, alpha))
}

/// Disorder above which the power-law chain starts to localize.
pub fn w1_alpha(n: usize, alpha: f64, gamma: f64) -> f64 {
    w1_zero(n, effective_hopping(alpha, gamma))
}

/// `Omega sqrt(210.4 ln N / N)`.
pub fn w1_zero(n: usize, omega: f64) -> f64 {
    let nf = n as f64;
    omega * (THRESHOLD_CONSTANT * nf.ln() / nf).sqrt()
}

/// `Omega sqrt(210.4 ln N)`.
pub fn w2_zero(n: usize, omega: f64) -> f64 {
    omega * (THRESHOLD_CONSTANT * (n as f64).ln()).sqrt()
}

/// Gap-closing disorder of the fully connected chain, `gamma N ln N / 2`.
pub fn w_gap_zero(n: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    0.5 * gamma * nf * nf.ln()
}

pub fn localization_length(omega: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::invalid("w", format!("must be positive, got {w}")));
    }
    Ok(XI_PREFACTOR * (omega / w).powi(2))
}

/// `((N/2)^(1-alpha) - 1) / (1 - alpha)`, continuous through `alpha = 1`
/// where it equals `ln(N/2)`.
pub fn c_alpha(n: usize, alpha: f64) -> f64 {
    let x = (n as f64 / 2.0).ln();
    let u = (1.0 - alpha) * x;
    if u == 0.0 {
        x
    } else {
        x * u.exp_m1() / u
    }
}

/// Picket-fence estimate of the ground-state gap,
/// `W / (exp(W / (2 gamma C_alpha)) - 1)`; `2 gamma C_alpha` at `W = 0`.
pub fn gap_theory(w: f64, gamma: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::invalid(
            "w",
            format!("must be non-negative, got {w}"),
        ));
    }
    let scale = 2.0 * gamma * c_alpha(n, alpha);
    if w == 0.0 {
        return Ok(scale);
    }
    Ok(w / (w / scale).exp_m1())
}

/// Disorder at which the picket-fence gap closes, `2 gamma C_alpha ln N`.
pub fn w_gap_alpha(n: usize, alpha: f64, gamma: f64) -> f64 {
    2.0 * gamma * c_alpha(n, alpha) * (n as f64).ln()
}

/// Long-range amplitude below which disorder `W` closes the gap,
/// `W / (2 C_alpha ln N)`.
pub fn gamma_critical(w: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::invalid("w", format!("must be positive, got {w}")));
    }
    Ok(w / (2.0 * c_alpha(n, alpha) * (n as f64).ln()))
}

/// Clean ring spectrum `E_q`, `q = 1..N`, in that order.
pub fn eq_lr_spectrum(n: usize, alpha: f64, gamma: f64) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::invalid("n_sites", "the ring spectrum needs N >= 3"));
    }
    let nf = n as f64;
    let even = n % 2 == 0;
    // Distances 1..=upper appear twice around the ring; for even N the
    // antipodal distance N/2 appears once.
    let upper = if even { n / 2 - 1 } else { (n - 1) / 2 };
    let coupling: Vec<f64> = (1..=upper).map(|d| inv_power(d as f64, alpha)).collect();
    let antipodal = if even {
        inv_power(nf / 2.0, alpha)
    } else {
        0.0
    };
    Ok((1..=n)
        .map(|q| {
            let qf = q as f64;
            let s: f64 = coupling
                .iter()
                .enumerate()
                .map(|(i, c)| (2.0 * PI * qf * (i + 1) as f64 / nf).cos() * c)
                .sum();
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * gamma * s - gamma * sign * antipodal
        })
        .collect())
}

/// Exponent `p` in `Delta ~ N^p` for the clean chain.
pub fn gap_scaling_exponent(alpha: f64) -> f64 {
    if alpha <= 3.0 {
        1.0 - alpha
    } else {
        -2.0
    }
}

/// Clean-ring band width `4 gamma sum_{n=1}^{N/4} (2n-1)^-alpha`.
pub fn spectral_radius_sum(n: usize, alpha: f64, gamma: f64) -> Result<f64> {
    if n == 0 || n % 4 != 0 {
        return Err(Error::invalid(
            "n_sites",
            format!("must be a positive multiple of 4, got {n}"),
        ));
    }
    let s: f64 = (1..=n / 4)
        .map(|k| inv_power((2 * k - 1) as f64, alpha))
        .sum();
    Ok(4.0 * gamma * s)
}

/// Infinite-chain band width `4 gamma zeta(alpha) (1 - 2^-alpha)`.
pub fn spectral_radius_limit(alpha: f64, gamma: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid(
            "alpha",
            format!("the band width diverges for alpha <= 1, got {alpha}"),
        ));
    }
    if alpha == f64::INFINITY {
        return Ok(4.0 * gamma);
    }
    Ok(4.0 * gamma * zeta(alpha)? * (1.0 - inv_power(2.0, alpha)))
}

/// Riemann zeta for real `s > 1` by Euler-Maclaurin summation.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::invalid("s", format!("zeta needs s > 1, got {s}")));
    }
    if s > 60.0 {
        return Ok(1.0 + 2f64.powf(-s) + 3f64.powf(-s));
    }
    // B_2j / (2j)!
    const B: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
        -3617.0 / 10_670_622_842_880_000.0,
    ];
    let m = 20.0f64;
    let head: f64 = (1..20).map(|k| (k as f64).powf(-s)).sum();
    let mut total = head + m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s);
    // Rising factorial s (s+1) ... (s+2j-2) times m^(-s-2j+1).
    let mut rising = s;
    let mut power = m.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        total += b * rising * power;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= m * m;
    }
    Ok(total)
}

/// `sqrt(12) * Delta E`: the disorder whose standard deviation matches the
/// band width. Uses the finite-N sum when `n` is given, the zeta limit
/// otherwise.
pub fn w_peak(alpha: f64, gamma: f64, n: Option<usize>) -> Result<f64> {
    let band = match n {
        Some(n) => spectral_radius_sum(n, alpha, gamma)?,
        None => spectral_radius_limit(alpha, gamma)?,
    };
    Ok(12f64.sqrt() * band)
}

/// All closed-form predictors; `None` marks a quantity outside the regime
/// where its formula applies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub omega_alpha: Option<f64>,
    pub w1_alpha: Option<f64>,
    pub c_alpha: Option<f64>,
    pub w_gap_alpha: Option<f64>,
    pub gamma_cr: Option<f64>,
    pub delta_e_sum: Option<f64>,
    pub delta_e_limit: Option<f64>,
    pub w_peak: Option<f64>,
    pub w1_zero: Option<f64>,
    pub w2_zero: Option<f64>,
    pub w_gap_zero: Option<f64>,
    pub xi: Option<f64>,
}

impl ThresholdSet {
    /// `(name, value)` pairs in declaration order.
    pub fn entries(&self) -> [(&'static str, Option<f64>); 12] {
        [
            ("omega_alpha", self.omega_alpha),
            ("w1_alpha", self.w1_alpha),
            ("c_alpha", self.c_alpha),
            ("w_gap_alpha", self.w_gap_alpha),
            ("gamma_cr", self.gamma_cr),
            ("delta_e_sum", self.delta_e_sum),
            ("delta_e_limit", self.delta_e_limit),
            ("w_peak", self.w_peak),
            ("w1_zero", self.w1_zero),
            ("w2_zero", self.w2_zero),
            ("w_gap_zero", self.w_gap_zero),
            ("xi", self.xi),
        ]
    }
}

/// Upper end of the exponent range where the picket-fence family is used.
const C_ALPHA_MAX: f64 = 2.0;

/// Fills every predictor that applies to `params`. `w` is the disorder used
/// for `gamma_cr` and `xi`.
pub fn predict_thresholds(params: &ChainParams, w: f64) -> Result<ThresholdSet> {
    params.validate()?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::invalid("w", format!("must be positive, got {w}")));
    }
    let n = params.n_sites;
    let (alpha, gamma, omega) = (params.alpha, params.gamma, params.omega_nn);
    let omega_alpha = effective_hopping(alpha, gamma);
    let mut t = ThresholdSet {
        omega_alpha: Some(omega_alpha),
        ..ThresholdSet::default()
    };
    if n >= 2 {
        t.w1_alpha = Some(w1_alpha(n, alpha, gamma));
    }
    if alpha < C_ALPHA_MAX && n >= 4 {
        t.c_alpha = Some(c_alpha(n, alpha));
        t.w_gap_alpha = Some(w_gap_alpha(n, alpha, gamma));
        t.gamma_cr = Some(gamma_critical(w, n, alpha)?);
    }
    if n % 4 == 0 {
        t.delta_e_sum = Some(spectral_radius_sum(n, alpha, gamma)?);
    }
    if alpha > 1.0 {
        t.delta_e_limit = Some(spectral_radius_limit(alpha, gamma)?);
    }
    t.w_peak = match (t.delta_e_sum, t.delta_e_limit) {
        (Some(_), _) => Some(w_peak(alpha, gamma, Some(n))?),
        (None, Some(_)) => Some(w_peak(alpha, gamma, None)?),
        _ => None,
    };
    if omega > 0.0 && n >= 2 {
        t.w1_zero = Some(w1_zero(n, omega));
        t.w2_zero = Some(w2_zero(n, omega));
    }
    if alpha == 0.0 && n >= 2 {
        t.w_gap_zero = Some(w_gap_zero(n, gamma));
    }
    let hop = if omega > 0.0 { omega } else { omega_alpha };
    if hop > 0.0 {
        t.xi = Some(localization_length(hop, w)?);
    }
    Ok(t)
}
