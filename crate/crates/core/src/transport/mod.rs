//! Transfer times and steady-state currents.
//!
//! The eigenbasis formulas work on anything implementing [`EdgeOverlaps`];
//! [`propagation`] and [`lindblad`] are independent oracles that never touch
//! an eigendecomposition of `H_eff`.

pub mod lindblad;
pub mod propagation;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::EdgeOverlaps;

pub use lindblad::{lindblad_steady_current, LindbladResult};
pub use propagation::transfer_time_propagation;

/// A dark state counts as populated from the pump site when its pump
/// overlap exceeds this.
pub const PUMP_FLOOR: f64 = 1e-13;

/// Relative tolerance for the two algebraic forms of the diagonal time.
const DIAG_FORM_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportFlags {
    pub dark_state_divergence: bool,
    pub degenerate_pair: bool,
}

/// Transfer-time estimators for one realization, in units of `hbar/gamma`.
/// Divergent times are `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub tau_full: f64,
    pub tau_diag: f64,
    pub tau_max: f64,
    /// Eigenvalue-order index of the state attaining `tau_max`.
    pub max_index: Option<usize>,
    /// `steady_current(tau_full)`.
    pub current: f64,
    pub flags: TransportFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Full,
    Diag,
    Max,
    Lindblad,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Diag => "diag",
            Method::Max => "max",
            Method::Lindblad => "lindblad",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "diag" => Ok(Method::Diag),
            "max" => Ok(Method::Max),
            "lindblad" => Ok(Method::Lindblad),
            _ => Err(Error::invalid("method", format!("unknown method `{s}`"))),
        }
    }
}

impl TransportResult {
    /// Transfer time behind a given estimator; `None` for the Lindblad
    /// method, which is not an eigenbasis estimator.
    pub fn tau(&self, method: Method) -> Option<f64> {
        match method {
            Method::Full => Some(self.tau_full),
            Method::Diag => Some(self.tau_diag),
            Method::Max => Some(self.tau_max),
            Method::Lindblad => None,
        }
    }
}

/// Per-state diagonal contributions.
#[derive(Clone, Debug)]
pub struct DiagonalTerms {
    /// `hbar gamma_d |<N|r_k>|^2 |<r~_k|1>|^2 / (4 Gamma_k^2)`, `None` for
    /// dark states that are not fed from the pump site.
    pub terms: Vec<Option<f64>>,
    pub divergent: bool,
}

fn classify<S: EdgeOverlaps + ?Sized>(spec: &S, gamma_drain: f64, k: usize) -> StateKind {
    let floor = spec.width_floor(gamma_drain);
    if spec.width(k) >= floor {
        StateKind::Bright
    } else if spec.pump_overlap(k).norm_sqr() > PUMP_FLOOR {
        StateKind::FedDark
    } else {
        StateKind::Ignored
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum StateKind {
    Bright,
    FedDark,
    Ignored,
}

fn check_inputs<S: EdgeOverlaps + ?Sized>(spec: &S, gamma_drain: f64, hbar: f64) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::Empty("spectrum"));
    }
    if !(gamma_drain > 0.0 && gamma_drain.is_finite()) {
        return Err(Error::invalid("gamma_drain", "must be positive"));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::invalid("hbar", "must be positive"));
    }
    Ok(())
}

/// Diagonal contributions `tau_k`.
///
/// Each term is also evaluated as `K_k (hbar/gamma_d) |<r~_k|1>|^2 /
/// |<N|r_k>|^2`, where `K_k` is the Petermann factor; the two must agree to
/// `1e-8` relative or the spectrum is rejected.
pub fn diagonal_terms<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_drain: f64,
    hbar: f64,
) -> Result<DiagonalTerms> {
    check_inputs(spec, gamma_drain, hbar)?;
    let mut terms = Vec::with_capacity(spec.len());
    let mut divergent = false;
    for k in 0..spec.len() {
        match classify(spec, gamma_drain, k) {
            StateKind::Bright => {
                let d2 = spec.drain_overlap(k).norm_sqr();
                let p2 = spec.pump_overlap(k).norm_sqr();
                let g = spec.width(k);
                let by_width = hbar * gamma_drain * d2 * p2 / (4.0 * g * g);
                let by_overlap = spec.petermann(k) * hbar / gamma_drain * p2 / d2;
                let scale = by_width.abs().max(by_overlap.abs());
                if scale > 0.0 && (by_width - by_overlap).abs() > DIAG_FORM_TOL * scale {
                    return Err(Error::invalid(
                        "spectrum",
                        format!(
                            "state {k}: diagonal-time forms disagree ({by_width:e} vs {by_overlap:e})"
                        ),
                    ));
                }
                terms.push(Some(by_width));
            }
            StateKind::FedDark => {
                divergent = true;
                terms.push(None);
            }
            StateKind::Ignored => terms.push(None),
        }
    }
    Ok(DiagonalTerms { terms, divergent })
}

/// `tau_diag`, the sum of the diagonal terms.
pub fn transfer_time_diag<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_drain: f64,
    hbar: f64,
) -> Result<f64> {
    let d = diagonal_terms(spec, gamma_drain, hbar)?;
    if d.divergent {
        return Ok(f64::INFINITY);
    }
    Ok(d.terms.iter().flatten().sum())
}

/// Largest diagonal term and its index; ties go to the lowest index. A fed
/// dark state counts as an infinite term.
pub fn transfer_time_max<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_drain: f64,
    hbar: f64,
) -> Result<(f64, Option<usize>)> {
    let d = diagonal_terms(spec, gamma_drain, hbar)?;
    Ok(max_term(spec, gamma_drain, &d))
}

fn max_term<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_drain: f64,
    d: &DiagonalTerms,
) -> (f64, Option<usize>) {
    let mut best: (f64, Option<usize>) = (f64::NEG_INFINITY, None);
    for (k, t) in d.terms.iter().enumerate() {
        let value = match t {
            Some(v) => *v,
            None if classify(spec, gamma_drain, k) == StateKind::FedDark => f64::INFINITY,
            None => continue,
        };
        if value > best.0 {
            best = (value, Some(k));
        }
    }
    if best.1.is_none() {
        best.0 = 0.0;
    }
    best
}

/// Full double sum over eigenstate pairs.
pub fn transfer_time_full<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_drain: f64,
    hbar: f64,
) -> Result<f64> {
    check_inputs(spec, gamma_drain, hbar)?;
    let mut eps = Vec::with_capacity(spec.len());
    let mut c = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        match classify(spec, gamma_drain, k) {
            StateKind::Bright => {
                eps.push(spec.eigenvalue(k));
                c.push(spec.drain_overlap(k) * spec.pump_overlap(k));
            }
            StateKind::FedDark => return Ok(f64::INFINITY),
            StateKind::Ignored => {}
        }
    }
    Ok(hbar * gamma_drain * pair_sum(&eps, &c))
}

/// `sum_{k,k'} c_k conj(c_k') / (-(eps_k - conj(eps_k'))^2)`, which is real.
fn pair_sum(eps: &[Complex64], c: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for k in 0..eps.len() {
        // Diagonal term: -(eps - conj eps)^2 = 4 Gamma^2.
        let g = -eps[k].im;
        total += c[k].norm_sqr() / (4.0 * g * g);
        for kp in k + 1..eps.len() {
            let diff = eps[k] - eps[kp].conj();
            let term = c[k] * c[kp].conj() / (-(diff * diff));
            // The (k', k) term is the complex conjugate.
            total += 2.0 * term.re;
        }
    }
    total
}

/// `I = gamma_p / (gamma_p tau + hbar)`; zero for a divergent time and
/// `1/tau` for infinite pumping.
pub fn steady_current(tau: f64, gamma_pump: f64, hbar: f64) -> f64 {
    if tau.is_infinite() {
        return 0.0;
    }
    if gamma_pump.is_infinite() {
        return 1.0 / tau;
    }
    gamma_pump / (gamma_pump * tau + hbar)
}

/// Every estimator for one realization.
pub fn evaluate<S: EdgeOverlaps + ?Sized>(
    spec: &S,
    gamma_pump: f64,
    gamma_drain: f64,
    hbar: f64,
) -> Result<TransportResult> {
    let d = diagonal_terms(spec, gamma_drain, hbar)?;
    let tau_full = transfer_time_full(spec, gamma_drain, hbar)?;
    let tau_diag = if d.divergent {
        f64::INFINITY
    } else {
        d.terms.iter().flatten().sum()
    };
    let (tau_max, max_index) = max_term(spec, gamma_drain, &d);
    Ok(TransportResult {
        tau_full,
        tau_diag,
        tau_max,
        max_index,
        current: steady_current(tau_full, gamma_pump, hbar),
        flags: TransportFlags {
            dark_state_divergence: d.divergent,
            degenerate_pair: spec.has_degenerate_pairs(),
        },
    })
}

/// Geometric-mean summary of a set of currents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalCurrent {
    /// `exp(mean ln I)` over strictly positive entries; 0 if there are none.
    pub i_typ: f64,
    /// Sample standard deviation of `ln I` over the same entries.
    pub ln_std: f64,
    pub n_ok: usize,
    /// Exact zeros, which are excluded from the mean.
    pub n_zero: usize,
}

pub fn typical_current(currents: &[f64]) -> Result<TypicalCurrent> {
    if currents.is_empty() {
        return Err(Error::Empty("currents"));
    }
    if let Some(bad) = currents.iter().find(|c| !(**c >= 0.0) || c.is_infinite()) {
        return Err(Error::invalid(
            "currents",
            format!("entries must be finite and >= 0, got {bad}"),
        ));
    }
    let logs: Vec<f64> = currents
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|c| c.ln())
        .collect();
    let n_ok = logs.len();
    let n_zero = currents.len() - n_ok;
    if n_ok == 0 {
        return Ok(TypicalCurrent {
            i_typ: 0.0,
            ln_std: 0.0,
            n_ok,
            n_zero,
        });
    }
    let mean = logs.iter().sum::<f64>() / n_ok as f64;
    let ln_std = if n_ok > 1 {
        (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n_ok - 1) as f64).sqrt()
    } else {
        0.0
    };
    // A single entry is returned as is rather than through exp(ln I).
    let i_typ = match currents.iter().filter(|&&c| c > 0.0).collect::<Vec<_>>()[..] {
        [&only] => only,
        _ => mean.exp(),
    };
    Ok(TypicalCurrent {
        i_typ,
        ln_std,
        n_ok,
        n_zero,
    })
}
