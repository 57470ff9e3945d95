//! Sweep configuration and its flat TOML file format.
//!
//! ```toml
//! n_sites = 200
//! alpha = 0.3333333333333333
//! w_min = 0.01
//! w_max = 1e4
//! w_points = 25
//! n_realizations = 500
//! master_seed = 7
//! methods = ["full", "diag", "max"]
//! csv = "sweep.csv"
//! ```
//!
//! Either `w_grid = [..]` or all of `w_min`, `w_max`, `w_points` must be
//! given. `alpha = inf` selects the nearest-neighbour chain.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Boundary, ChainParams};
use crate::transport::{lindblad, Method};

/// `N * N_r` when `n_realizations` is not given.
pub const DEFAULT_SAMPLE_BUDGET: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WGrid {
    Explicit(Vec<f64>),
    Log {
        w_min: f64,
        w_max: f64,
        points: usize,
    },
}

impl WGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            WGrid::Explicit(w) => w.clone(),
            WGrid::Log {
                w_min,
                w_max,
                points,
            } => log_grid(*w_min, *w_max, *points),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let WGrid::Log {
            w_min,
            w_max,
            points,
        } = self
        {
            if *points < 2 {
                return Err(Error::invalid(
                    "w_points",
                    "a log grid needs at least two points",
                ));
            }
            if !(*w_min > 0.0 && w_max > w_min && w_max.is_finite()) {
                return Err(Error::invalid("w_min", "need 0 < w_min < w_max < inf"));
            }
        }
        let w = self.values();
        if w.is_empty() {
            return Err(Error::Empty("w_grid"));
        }
        if !w.iter().all(|x| *x > 0.0 && x.is_finite()) {
            return Err(Error::invalid(
                "w_grid",
                "disorder strengths must be positive and finite",
            ));
        }
        if w.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("w_grid", "must be strictly increasing"));
        }
        Ok(())
    }
}

/// `points` values from `w_min` to `w_max` inclusive, equally spaced in
/// `ln W`. The end points are exact.
pub fn log_grid(w_min: f64, w_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![w_min],
        _ => {
            let (a, b) = (w_min.ln(), w_max.ln());
            let step = (b - a) / (points - 1) as f64;
            (0..points)
                .map(|i| match i {
                    0 => w_min,
                    _ if i == points - 1 => w_max,
                    _ => (a + step * i as f64).exp(),
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// Per-realization `ln I` dump.
    pub dump: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub chain: ChainParams,
    pub w_grid: WGrid,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    /// Disorder at which `gamma_cr` and `xi` are reported in the summary.
    pub reference_w: f64,
    pub outputs: Outputs,
    /// Worker cap; `None` defers to `DET_NUM_THREADS`, then to rayon.
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// Full, diagonal and max estimators, `N_r = ceil(1e5 / N)`, seed 0.
    pub fn new(chain: ChainParams, w_grid: WGrid) -> Self {
        let n_realizations = DEFAULT_SAMPLE_BUDGET.div_ceil(chain.n_sites.max(1));
        SweepConfig {
            chain,
            w_grid,
            n_realizations,
            master_seed: 0,
            methods: vec![Method::Full, Method::Diag, Method::Max],
            reference_w: 1.0,
            outputs: Outputs::default(),
            threads: None,
        }
    }

    pub fn with_realizations(mut self, n: usize) -> Self {
        self.n_realizations = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_methods(mut self, methods: Vec<Method>) -> Self {
        self.methods = methods;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.w_grid.validate()?;
        if self.n_realizations == 0 {
            return Err(Error::invalid("n_realizations", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::Empty("methods"));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::invalid("methods", "listed more than once"));
        }
        if self.methods.contains(&Method::Lindblad) && self.chain.n_sites > lindblad::MAX_SITES {
            return Err(Error::invalid(
                "methods",
                format!(
                    "lindblad needs n_sites <= {}, got {}",
                    lindblad::MAX_SITES,
                    self.chain.n_sites
                ),
            ));
        }
        if !(self.reference_w > 0.0 && self.reference_w.is_finite()) {
            return Err(Error::invalid("reference_w", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 over the fields that determine the results; outputs and the
    /// worker count are left out.
    pub fn hash(&self) -> String {
        let key = serde_json::json!({
            "chain": self.chain,
            "w_grid": self.w_grid.values().iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            "n_realizations": self.n_realizations,
            "master_seed": self.master_seed,
            "methods": self.methods,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Config {
            line: e.span().map_or(1, |s| line_at(src, s.start)),
            message: e.message().to_string(),
        })?;
        raw.into_config(src)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src)
    }
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, or 1 when it is absent.
fn line_of_key(src: &str, key: &str) -> usize {
    src.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_sites: usize,
    alpha: f64,
    gamma: Option<f64>,
    omega_nn: Option<f64>,
    gamma_pump: Option<f64>,
    gamma_drain: Option<f64>,
    boundary: Option<Boundary>,
    hbar: Option<f64>,
    w_grid: Option<Vec<f64>>,
    w_min: Option<f64>,
    w_max: Option<f64>,
    w_points: Option<usize>,
    n_realizations: Option<usize>,
    master_seed: Option<u64>,
    methods: Option<Vec<String>>,
    reference_w: Option<f64>,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
    dump: Option<PathBuf>,
    threads: Option<usize>,
}

impl RawConfig {
    fn into_config(self, src: &str) -> Result<SweepConfig> {
        let at = |key: &str, message: String| Error::Config {
            line: line_of_key(src, key),
            message,
        };
        let mut chain = ChainParams::new(self.n_sites, self.alpha);
        chain.gamma = self.gamma.unwrap_or(chain.gamma);
        chain.omega_nn = self.omega_nn.unwrap_or(chain.omega_nn);
        chain.gamma_pump = self.gamma_pump.unwrap_or(chain.gamma_pump);
        chain.gamma_drain = self.gamma_drain.unwrap_or(chain.gamma_drain);
        chain.boundary = self.boundary.unwrap_or(chain.boundary);
        chain.hbar = self.hbar.unwrap_or(chain.hbar);

        let w_grid = match (self.w_grid, self.w_min, self.w_max, self.w_points) {
            (Some(w), None, None, None) => WGrid::Explicit(w),
            (None, Some(w_min), Some(w_max), Some(points)) => WGrid::Log {
                w_min,
                w_max,
                points,
            },
            (Some(_), ..) => {
                return Err(at(
                    "w_grid",
                    "give either w_grid or w_min/w_max/w_points, not both".into(),
                ))
            }
            _ => {
                return Err(at(
                    "w_min",
                    "the disorder grid needs w_grid or all of w_min, w_max, w_points".into(),
                ))
            }
        };
        let mut config = SweepConfig::new(chain, w_grid);
        if let Some(n) = self.n_realizations {
            config.n_realizations = n;
        }
        config.master_seed = self.master_seed.unwrap_or(0);
        if let Some(methods) = self.methods {
            config.methods = methods
                .iter()
                .map(|m| m.parse())
                .collect::<Result<_>>()
                .map_err(|e| at("methods", e.to_string()))?;
        }
        config.reference_w = self.reference_w.unwrap_or(config.reference_w);
        config.outputs = Outputs {
            csv: self.csv,
            json: self.json,
            dump: self.dump,
        };
        config.threads = self.threads;

        config.validate().map_err(|e| {
            let key = match &e {
                Error::InvalidParameter { name, .. } => *name,
                Error::Empty(name) => *name,
                _ => "n_sites",
            };
            at(key, e.to_string())
        })?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "n_sites = 20\nalpha = 0.5\nw_min = 0.1\nw_max = 10.0\nw_points = 5\n";

    #[test]
    fn parses_minimal_file_with_defaults() {
        let c = SweepConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(c.chain, ChainParams::new(20, 0.5));
        assert_eq!(c.n_realizations, 5000);
        assert_eq!(c.methods, vec![Method::Full, Method::Diag, Method::Max]);
        let w = c.w_grid.values();
        assert_eq!(w.len(), 5);
        assert_eq!((w[0], w[4]), (0.1, 10.0));
        assert!((w[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn infinite_alpha_and_explicit_grid() {
        let c =
            SweepConfig::from_toml_str("n_sites = 8\nalpha = inf\nw_grid = [1.0, 2.0]\n").unwrap();
        assert!(c.chain.is_nearest_neighbor());
        assert_eq!(c.w_grid, WGrid::Explicit(vec![1.0, 2.0]));
    }

    #[test]
    fn unknown_key_is_reported_with_its_line() {
        let src = format!("{BASIC}n_realization = 3\n");
        match SweepConfig::from_toml_str(&src).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 6);
                assert!(message.contains("n_realization"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let src = "n_sites = 20\nalpha = 0.5\nw_grid = [1.0, 0.5]\n";
        assert!(matches!(
            SweepConfig::from_toml_str(src),
            Err(Error::Config { line: 3, .. })
        ));
        let src = format!("{BASIC}methods = [\"full\", \"fast\"]\n");
        assert!(matches!(
            SweepConfig::from_toml_str(&src),
            Err(Error::Config { line: 6, .. })
        ));
        let src = "n_sites = 30\nalpha = 1.0\nw_grid = [1.0]\nmethods = [\"lindblad\"]\n";
        assert!(matches!(
            SweepConfig::from_toml_str(src),
            Err(Error::Config { line: 4, .. })
        ));
        let src = "n_sites = 30\nalpha = 1.0\n";
        assert!(matches!(
            SweepConfig::from_toml_str(src),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn hash_ignores_outputs_and_threads() {
        let a = SweepConfig::from_toml_str(BASIC).unwrap();
        let mut b = a.clone().with_threads(3);
        b.outputs.csv = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed(1).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn log_grid_is_geometric() {
        let w = log_grid(1e-2, 1e4, 13);
        for p in w.windows(2) {
            assert!((p[1] / p[0] - 10f64.sqrt()).abs() < 1e-12);
        }
    }
}
