//! Disorder sweeps: every `(W, realization)` pair is independent, so pairs are
//! evaluated in parallel and reduced afterwards in index order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::Curve;
use super::config::SweepConfig;
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, derive_seed, sample_disorder, DisorderRealization};
use crate::spectral::decompose_for_transport;
use crate::transport::{evaluate, lindblad, steady_current, typical_current, Method};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DET_NUM_THREADS";

/// Current of one realization under one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Steady-state current; exactly zero when the transfer time diverges.
    Current(f64),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub w_index: usize,
    pub realization: u64,
    pub method: Method,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: f64,
    pub method: Method,
    pub i_typ: f64,
    /// Sample standard deviation of `ln I` over non-divergent realizations.
    pub ln_std: f64,
    pub n_ok: usize,
    pub n_divergent: usize,
    pub n_failed: usize,
    /// False when more than half of the realizations failed.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Grid-major, methods in configuration order within each `W`.
    pub rows: Vec<SweepRow>,
    /// Grid-major, then realization, then method.
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Valid rows of one method as a `(W, I_typ)` curve.
    pub fn curve(&self, method: Method) -> Result<Curve> {
        if !self.config.methods.contains(&method) {
            return Err(Error::invalid(
                "method",
                format!("{} was not swept", method.as_str()),
            ));
        }
        let (w, i): (Vec<f64>, Vec<f64>) = self
            .rows_for(method)
            .filter(|r| r.valid && r.i_typ > 0.0)
            .map(|r| (r.w, r.i_typ))
            .unzip();
        Curve::new(w, i)
    }
}

/// Worker count from the config, then `DET_NUM_THREADS`; `None` lets rayon
/// decide.
pub fn worker_count(config: &SweepConfig) -> Result<Option<usize>> {
    if let Some(t) = config.threads {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid(
                "threads",
                format!("{THREADS_ENV}={v} is not a positive integer"),
            )),
        },
        Err(_) => Ok(None),
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let grid = config.w_grid.values();
    let n_r = config.n_realizations as u64;
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|i| (0..n_r).map(move |r| (i, r)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(config)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    // `collect` on an indexed parallel iterator keeps job order, so the
    // reduction below sees realizations in index order whatever the schedule.
    let outcomes: Vec<Vec<Outcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, r)| realize(config, i, grid[i], r))
            .collect()
    });

    let mut samples = Vec::with_capacity(outcomes.len() * config.methods.len());
    for (&(w_index, realization), per_method) in jobs.iter().zip(&outcomes) {
        for (&method, outcome) in config.methods.iter().zip(per_method) {
            samples.push(Sample {
                w_index,
                realization,
                method,
                outcome: outcome.clone(),
            });
        }
    }

    let mut rows = Vec::with_capacity(grid.len() * config.methods.len());
    let per_w = config.n_realizations;
    for (i, &w) in grid.iter().enumerate() {
        let block = &outcomes[i * per_w..(i + 1) * per_w];
        for (m, &method) in config.methods.iter().enumerate() {
            rows.push(aggregate(w, method, block.iter().map(|o| &o[m]))?);
        }
    }

    Ok(SweepResult {
        config: config.clone(),
        rows,
        samples,
        provenance: Provenance {
            config_hash: config.hash(),
            master_seed: config.master_seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn aggregate<'a>(
    w: f64,
    method: Method,
    outcomes: impl Iterator<Item = &'a Outcome>,
) -> Result<SweepRow> {
    let mut currents = Vec::new();
    let mut n_failed = 0;
    for o in outcomes {
        match o {
            Outcome::Current(c) => currents.push(*c),
            Outcome::Failed(_) => n_failed += 1,
        }
    }
    let total = currents.len() + n_failed;
    let valid = 2 * n_failed <= total;
    let (i_typ, ln_std, n_ok, n_divergent) = if currents.is_empty() {
        (0.0, 0.0, 0, 0)
    } else {
        let t = typical_current(&currents)?;
        (t.i_typ, t.ln_std, t.n_ok, t.n_zero)
    };
    Ok(SweepRow {
        w,
        method,
        i_typ,
        ln_std,
        n_ok,
        n_divergent,
        n_failed,
        valid,
    })
}

/// Disorder realization `r` at grid point `w_index`.
pub fn realization(
    config: &SweepConfig,
    w_index: usize,
    w: f64,
    r: u64,
) -> Result<DisorderRealization> {
    sample_disorder(
        &config.chain,
        w,
        derive_seed(config.master_seed, w_index as u64),
        r,
    )
}

/// Outcomes of one realization, aligned with `config.methods`.
fn realize(config: &SweepConfig, w_index: usize, w: f64, r: u64) -> Vec<Outcome> {
    let p = &config.chain;
    let disorder = match realization(config, w_index, w, r) {
        Ok(d) => d,
        Err(e) => return vec![Outcome::Failed(e.to_string()); config.methods.len()],
    };
    let needs_eigen = config.methods.iter().any(|m| *m != Method::Lindblad);
    let eigen = needs_eigen.then(|| {
        let h = build_hamiltonian(p, &disorder)?;
        let spec = decompose_for_transport(&h, p.gamma_drain)?;
        evaluate(&spec, p.gamma_pump, p.gamma_drain, p.hbar)
    });
    config
        .methods
        .iter()
        .map(|&m| match m {
            Method::Lindblad => match lindblad::lindblad_steady_current(p, &disorder) {
                Ok(l) => Outcome::Current(l.current.max(0.0)),
                Err(Error::NonUniqueSteadyState { .. }) => Outcome::Current(0.0),
                Err(e) => Outcome::Failed(e.to_string()),
            },
            _ => match eigen.as_ref().expect("eigenbasis evaluated") {
                Ok(t) => {
                    let tau = t.tau(m).expect("eigenbasis method");
                    Outcome::Current(steady_current(tau, p.gamma_pump, p.hbar))
                }
                Err(e) => Outcome::Failed(e.to_string()),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::WGrid;
    use crate::model::ChainParams;

    fn small(n_r: usize) -> SweepConfig {
        SweepConfig::new(ChainParams::new(12, 1.0), WGrid::Explicit(vec![0.5, 5.0]))
            .with_realizations(n_r)
            .with_seed(11)
    }

    #[test]
    fn single_realization_is_its_own_typical_current() {
        let cfg = small(1);
        let res = run_sweep(&cfg).unwrap();
        for (i, w) in [0.5, 5.0].into_iter().enumerate() {
            let d = realization(&cfg, i, w, 0).unwrap();
            let h = build_hamiltonian(&cfg.chain, &d).unwrap();
            let t = evaluate(&decompose_for_transport(&h, 1.0).unwrap(), 1.0, 1.0, 1.0).unwrap();
            let row = res.rows_for(Method::Full).nth(i).unwrap();
            assert_eq!(row.i_typ, steady_current(t.tau_full, 1.0, 1.0));
            assert_eq!(row.ln_std, 0.0);
        }
    }

    #[test]
    fn rows_match_samples() {
        let res = run_sweep(&small(6)).unwrap();
        assert_eq!(res.rows.len(), 2 * 3);
        assert_eq!(res.samples.len(), 2 * 6 * 3);
        for row in &res.rows {
            let w_index = if row.w == 0.5 { 0 } else { 1 };
            let logs: Vec<f64> = res
                .samples
                .iter()
                .filter(|s| s.w_index == w_index && s.method == row.method)
                .map(|s| match s.outcome {
                    Outcome::Current(c) => c.ln(),
                    Outcome::Failed(_) => panic!("unexpected failure"),
                })
                .collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            assert!((mean.exp() - row.i_typ).abs() <= 1e-12 * row.i_typ);
            assert!(row.valid && row.n_ok == 6);
        }
    }

    #[test]
    fn lindblad_rows_agree_with_full() {
        let cfg = SweepConfig::new(ChainParams::new(6, 1.0), WGrid::Explicit(vec![1.0]))
            .with_realizations(3)
            .with_methods(vec![Method::Full, Method::Lindblad]);
        let res = run_sweep(&cfg).unwrap();
        let full = res.rows_for(Method::Full).next().unwrap().i_typ;
        let lind = res.rows_for(Method::Lindblad).next().unwrap().i_typ;
        assert!((full - lind).abs() < 1e-8 * full);
    }

    #[test]
    fn failure_majority_marks_row_invalid() {
        let ok = Outcome::Current(0.5);
        let bad = Outcome::Failed("x".into());
        let row = aggregate(1.0, Method::Full, [&ok, &bad, &bad].into_iter()).unwrap();
        assert!(!row.valid);
        assert_eq!((row.n_ok, row.n_failed), (1, 2));
        let row = aggregate(1.0, Method::Full, [&ok, &bad].into_iter()).unwrap();
        assert!(row.valid);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = run_sweep(&small(4).with_threads(1)).unwrap();
        let three = run_sweep(&small(4).with_threads(3)).unwrap();
        assert_eq!(one.rows, three.rows);
    }
}
