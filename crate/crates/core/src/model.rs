//! Chain Hamiltonians with power-law hopping, on-site disorder, and the
//! drain-broadened effective Hamiltonian.
//!
//! All energies are in units of the long-range amplitude `gamma`; with the
//! defaults (`gamma = hbar = 1`) times come out in units of `hbar / gamma`.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Static description of one chain.
///
/// `alpha = f64::INFINITY` selects the nearest-neighbour limit, where the
/// power-law term reduces to `-gamma` on the first off-diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_sites: usize,
    #[serde(with = "extended_real")]
    pub alpha: f64,
    pub gamma: f64,
    pub omega_nn: f64,
    pub gamma_pump: f64,
    pub gamma_drain: f64,
    pub boundary: Boundary,
    pub hbar: f64,
}

impl ChainParams {
    /// Open chain with `gamma = gamma_pump = gamma_drain = hbar = 1` and no
    /// explicit nearest-neighbour term.
    pub fn new(n_sites: usize, alpha: f64) -> Self {
        ChainParams {
            n_sites,
            alpha,
            gamma: 1.0,
            omega_nn: 0.0,
            gamma_pump: 1.0,
            gamma_drain: 1.0,
            boundary: Boundary::Open,
            hbar: 1.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_omega(mut self, omega_nn: f64) -> Self {
        self.omega_nn = omega_nn;
        self
    }

    pub fn with_pump(mut self, gamma_pump: f64) -> Self {
        self.gamma_pump = gamma_pump;
        self
    }

    pub fn with_drain(mut self, gamma_drain: f64) -> Self {
        self.gamma_drain = gamma_drain;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.alpha == f64::INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::invalid("n_sites", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {}", self.gamma),
            ));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must be non-negative, got {}", self.alpha),
            ));
        }
        if !(self.omega_nn >= 0.0 && self.omega_nn.is_finite()) {
            return Err(Error::invalid(
                "omega_nn",
                format!("must be non-negative, got {}", self.omega_nn),
            ));
        }
        // gamma_pump = 0 is accepted: the Lindblad oracle uses it for the
        // no-pumping limit.
        if !(self.gamma_pump >= 0.0 && self.gamma_pump.is_finite()) {
            return Err(Error::invalid(
                "gamma_pump",
                format!("must be non-negative, got {}", self.gamma_pump),
            ));
        }
        if !(self.gamma_drain > 0.0 && self.gamma_drain.is_finite()) {
            return Err(Error::invalid(
                "gamma_drain",
                format!("must be positive, got {}", self.gamma_drain),
            ));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::invalid(
                "hbar",
                format!("must be positive, got {}", self.hbar),
            ));
        }
        Ok(())
    }

    /// Matrix element between two sites at the given distance (>= 1).
    pub fn hopping(&self, distance: usize) -> f64 {
        debug_assert!(distance >= 1);
        let long_range = if self.is_nearest_neighbor() {
            if distance == 1 {
                -self.gamma
            } else {
                0.0
            }
        } else {
            -self.gamma / (distance as f64).powf(self.alpha)
        };
        let nn = if distance == 1 { -self.omega_nn } else { 0.0 };
        long_range + nn
    }

    fn require_open(&self, what: &'static str) -> Result<()> {
        match self.boundary {
            Boundary::Open => Ok(()),
            Boundary::Periodic => Err(Error::invalid(
                "boundary",
                format!("{what} requires an open chain"),
            )),
        }
    }
}

/// JSON has no infinity, so `alpha = inf` is written as the string `"inf"`.
mod extended_real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    struct ExtendedReal;

    impl Visitor<'_> for ExtendedReal {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtendedReal)
    }
}

/// One sample of on-site energies, uniform on `[-width/2, width/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub energies: Vec<f64>,
    pub width: f64,
    pub seed: u64,
    pub realization_index: u64,
}

impl DisorderRealization {
    pub fn clean(n_sites: usize) -> Self {
        DisorderRealization {
            energies: vec![0.0; n_sites],
            width: 0.0,
            seed: 0,
            realization_index: 0,
        }
    }

    /// Fixed energies, e.g. for hand-built test cases.
    pub fn from_energies(energies: Vec<f64>) -> Self {
        let width = 2.0 * energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        DisorderRealization {
            energies,
            width,
            seed: 0,
            realization_index: 0,
        }
    }
}

/// Draws `n_sites` i.i.d. uniform energies.
///
/// The stream is a ChaCha8 generator keyed by `seed` with `index` as its
/// stream id, so any realization can be regenerated on its own, independent
/// of how a sweep is scheduled.
pub fn sample_disorder(
    params: &ChainParams,
    width: f64,
    seed: u64,
    index: u64,
) -> Result<DisorderRealization> {
    if !(width >= 0.0 && width.is_finite()) {
        return Err(Error::invalid(
            "width",
            format!("must be non-negative, got {width}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let energies = (0..params.n_sites)
        .map(|_| (rng.random::<f64>() - 0.5) * width)
        .collect();
    Ok(DisorderRealization {
        energies,
        width,
        seed,
        realization_index: index,
    })
}

/// Seed for the disorder stream at grid point `w_index`, derived from a
/// master seed with the SplitMix64 finalizer so that neighbouring grid points
/// get unrelated streams.
pub fn derive_seed(master_seed: u64, w_index: u64) -> u64 {
    let mut z = master_seed ^ w_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense real symmetric chain Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianMatrix(Array2<f64>);

impl HamiltonianMatrix {
    /// Wraps an arbitrary symmetric matrix.
    pub fn from_array(elements: Array2<f64>) -> Result<Self> {
        let (r, c) = elements.dim();
        if r != c {
            return Err(Error::SizeMismatch {
                expected: r,
                got: c,
            });
        }
        let scale = elements.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..r {
            for j in 0..i {
                if (elements[[i, j]] - elements[[j, i]]).abs() > 1e-14 * scale {
                    return Err(Error::invalid(
                        "hamiltonian",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(HamiltonianMatrix(elements))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }
}

/// `H - i gamma_drain / 2 |N><N|`: complex symmetric, not Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveHamiltonianMatrix(Array2<Complex64>);

impl EffectiveHamiltonianMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.0
    }

    /// Wraps an arbitrary complex symmetric matrix.
    pub fn from_array(elements: Array2<Complex64>) -> Result<Self> {
        let (r, c) = elements.dim();
        if r != c {
            return Err(Error::SizeMismatch {
                expected: r,
                got: c,
            });
        }
        Ok(EffectiveHamiltonianMatrix(elements))
    }
}

pub fn build_hamiltonian(
    params: &ChainParams,
    disorder: &DisorderRealization,
) -> Result<HamiltonianMatrix> {
    params.validate()?;
    params.require_open("build_hamiltonian")?;
    let n = params.n_sites;
    if disorder.energies.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: disorder.energies.len(),
        });
    }
    let couplings: Vec<f64> = (0..n)
        .map(|d| if d == 0 { 0.0 } else { params.hopping(d) })
        .collect();
    let h = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            disorder.energies[i]
        } else {
            couplings[i.abs_diff(j)]
        }
    });
    Ok(HamiltonianMatrix(h))
}

/// Clean ring: circulant coupling at distance `min(|i-j|, N-|i-j|)`.
pub fn build_clean_periodic(params: &ChainParams) -> Result<HamiltonianMatrix> {
    params.validate()?;
    let n = params.n_sites;
    let h = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            let d = i.abs_diff(j);
            params.hopping(d.min(n - d))
        }
    });
    Ok(HamiltonianMatrix(h))
}

pub fn build_effective_hamiltonian(
    h: &HamiltonianMatrix,
    gamma_drain: f64,
) -> Result<EffectiveHamiltonianMatrix> {
    if !(gamma_drain > 0.0 && gamma_drain.is_finite()) {
        return Err(Error::invalid(
            "gamma_drain",
            format!("must be positive, got {gamma_drain}"),
        ));
    }
    let n = h.n();
    let mut heff = h.0.mapv(|x| Complex64::new(x, 0.0));
    heff[[n - 1, n - 1]] -= Complex64::new(0.0, gamma_drain / 2.0);
    Ok(EffectiveHamiltonianMatrix(heff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(n: usize) -> DisorderRealization {
        DisorderRealization::clean(n)
    }

    #[test]
    fn three_site_power_law() {
        let p = ChainParams::new(3, 1.0);
        let h = build_hamiltonian(&p, &clean(3)).unwrap();
        let a = h.as_array();
        assert_eq!(a[[0, 1]], -1.0);
        assert_eq!(a[[1, 2]], -1.0);
        assert_eq!(a[[0, 2]], -0.5);
        assert_eq!(a[[2, 0]], -0.5);
    }

    #[test]
    fn all_to_all_at_alpha_zero() {
        let p = ChainParams::new(4, 0.0);
        let h = build_hamiltonian(&p, &clean(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { -1.0 };
                assert_eq!(h.as_array()[[i, j]], want);
            }
        }
    }

    #[test]
    fn two_site_matrix() {
        for alpha in [0.0, 0.5, 3.0, f64::INFINITY] {
            let p = ChainParams::new(2, alpha);
            let d = DisorderRealization::from_energies(vec![0.3, -0.3]);
            let h = build_hamiltonian(&p, &d).unwrap();
            assert_eq!(h.as_array(), &ndarray::array![[0.3, -1.0], [-1.0, -0.3]]);
        }
    }

    #[test]
    fn nearest_neighbor_sentinel_is_tridiagonal() {
        let p = ChainParams::new(6, f64::INFINITY).with_omega(0.25);
        let d = DisorderRealization::from_energies(vec![0.1, 0.2, -0.3, 0.4, 0.0, -0.1]);
        let h = build_hamiltonian(&p, &d).unwrap();
        for i in 0..6usize {
            for j in 0..6 {
                let want = match i.abs_diff(j) {
                    0 => d.energies[i],
                    1 => -1.25,
                    _ => 0.0,
                };
                assert_eq!(h.as_array()[[i, j]], want, "({i}, {j})");
            }
        }
    }

    #[test]
    fn periodic_distance() {
        let p = ChainParams::new(4, 2.0);
        let h = build_clean_periodic(&p).unwrap();
        let a = h.as_array();
        assert_eq!(a[[0, 1]], -1.0);
        assert_eq!(a[[0, 3]], -1.0);
        assert_eq!(a[[0, 2]], -0.25);
        assert_eq!(a[[1, 3]], -0.25);
    }

    #[test]
    fn transport_rejects_periodic() {
        let p = ChainParams::new(4, 1.0).with_boundary(Boundary::Periodic);
        assert!(build_hamiltonian(&p, &clean(4)).is_err());
        assert!(build_clean_periodic(&p).is_ok());
    }

    #[test]
    fn size_mismatch() {
        let p = ChainParams::new(4, 1.0);
        let err = build_hamiltonian(&p, &clean(3)).unwrap_err();
        assert!(matches!(
            err,
            Error::SizeMismatch {
                expected: 4,
                got: 3
            }
        ));
    }

    #[test]
    fn effective_two_site() {
        let p = ChainParams::new(2, 1.0);
        let h = build_hamiltonian(&p, &clean(2)).unwrap();
        let heff = build_effective_hamiltonian(&h, 1.0).unwrap();
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(
            heff.as_array(),
            &ndarray::array![[c(0.0, 0.0), c(-1.0, 0.0)], [c(-1.0, 0.0), c(0.0, -0.5)]]
        );
        assert!(build_effective_hamiltonian(&h, 0.0).is_err());
        assert!(build_effective_hamiltonian(&h, -1.0).is_err());
    }

    #[test]
    fn effective_trace_and_symmetry() {
        let p = ChainParams::new(7, 0.7);
        let d = sample_disorder(&p, 2.0, 5, 1).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        let heff = build_effective_hamiltonian(&h, 0.8).unwrap();
        let a = heff.as_array();
        let tr: Complex64 = a.diag().sum();
        assert!((tr.im + 0.4).abs() < 1e-15);
        assert_eq!(a, &a.t().to_owned());
    }

    #[test]
    fn disorder_zero_width_and_determinism() {
        let p = ChainParams::new(25, 0.5);
        let d = sample_disorder(&p, 0.0, 1, 2).unwrap();
        assert!(d.energies.iter().all(|&e| e == 0.0));
        let a = sample_disorder(&p, 3.0, 11, 4).unwrap();
        let b = sample_disorder(&p, 3.0, 11, 4).unwrap();
        assert_eq!(a, b);
        let c = sample_disorder(&p, 3.0, 11, 5).unwrap();
        assert_ne!(a.energies, c.energies);
        assert!(sample_disorder(&p, -1.0, 0, 0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn disorder_moments() {
        let p = ChainParams::new(100_000, 0.5);
        let d = sample_disorder(&p, 2.0, 2024, 0).unwrap();
        let n = d.energies.len() as f64;
        let mean = d.energies.iter().sum::<f64>() / n;
        let var = d.energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.02 / 3.0, "variance {var}");
    }

    #[test]
    fn disorder_uniformity_ks() {
        let samples = 20_000;
        let width = 5.0;
        let p = ChainParams::new(samples, 0.5);
        let mut e = sample_disorder(&p, width, 99, 3).unwrap().energies;
        assert!(e.iter().all(|&x| x.abs() <= width / 2.0));
        e.sort_by(f64::total_cmp);
        let n = samples as f64;
        let dmax = e
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = x / width + 0.5;
                ((i as f64 + 1.0) / n - cdf)
                    .abs()
                    .max((cdf - i as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(dmax < 1.63 * 2.0 / n.sqrt(), "KS statistic {dmax}");
    }

    #[test]
    fn parameter_validation() {
        assert!(ChainParams::new(0, 1.0).validate().is_err());
        assert!(ChainParams::new(3, -0.5).validate().is_err());
        assert!(ChainParams::new(3, 1.0).with_gamma(0.0).validate().is_err());
        assert!(ChainParams::new(3, 1.0).with_drain(0.0).validate().is_err());
        assert!(ChainParams::new(3, f64::INFINITY).validate().is_ok());
    }
}
