use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use det_core::diagnostics::most_conducting_state;
use det_core::harness::{
    fit_peak, gap_table, log_grid, rescale_curves, run_sweep, validate, write_csv, write_outputs,
    Scale, SweepConfig, SweepSummary,
};
use det_core::model::ChainParams;
use det_core::theory::{gamma_critical, predict_thresholds};
use det_core::transport::Method;
use det_core::Error;

/// Steady-state transport through disordered power-law hopping chains.
#[derive(Parser)]
#[command(name = "det", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a disorder sweep described by a config file.
    Sweep(SweepArgs),
    /// Print every closed-form threshold for one chain.
    Thresholds(ThresholdArgs),
    /// Numerical ground-state gap against the picket-fence estimate.
    Gap(GapArgs),
    /// Probability profile of the most conducting state.
    Profile(ProfileArgs),
    /// Run the built-in oracle and identity checks.
    Validate {
        /// Only the small-chain oracle comparison.
        #[arg(long)]
        quick: bool,
    },
    /// Parabolic fit of the current peak of a sweep summary.
    FitPeak {
        summary: PathBuf,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Rescale the curves of several sweep summaries onto a common axis.
    Rescale {
        /// identity, w1_alpha, w_gap_alpha or omega_alpha.
        #[arg(long)]
        scale: Scale,
        #[arg(long, default_value = "full")]
        method: Method,
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct Chain {
    #[arg(long)]
    n: usize,
    /// Hopping exponent; `inf` for nearest neighbours only.
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
}

impl Chain {
    fn params(&self) -> ChainParams {
        ChainParams::new(self.n, self.alpha)
            .with_gamma(self.gamma)
            .with_omega(self.omega)
    }
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    chain: Chain,
    /// Disorder for `gamma_cr` and `xi`.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    /// Defaults to `gamma_cr / 30`.
    #[arg(long)]
    gamma_min: Option<f64>,
    /// Defaults to `300 gamma_cr`.
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long, default_value_t = 25)]
    points: usize,
    #[arg(long, default_value_t = 10)]
    realizations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    chain: Chain,
    #[arg(long)]
    w: f64,
    #[arg(long, default_value_t = 50)]
    realizations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exit status 1: a check or fit did not succeed.
struct Unsuccessful(String);

enum Failure {
    Usage(String),
    Unsuccessful(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Io(_)
            | Error::InvalidParameter { .. }
            | Error::NotApplicable { .. } => Failure::Usage(e.to_string()),
            other => Failure::Unsuccessful(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<Unsuccessful> for Failure {
    fn from(u: Unsuccessful) -> Self {
        Failure::Unsuccessful(u.0)
    }
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut config = SweepConfig::from_file(&args.config).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("{}: {io}", args.config.display())),
        Error::Config { line, message } => {
            Failure::Usage(format!("{}:{line}: {message}", args.config.display()))
        }
        other => other.into(),
    })?;
    config.threads = args.threads.or(config.threads);
    config.master_seed = args.seed.unwrap_or(config.master_seed);
    config.n_realizations = args.realizations.unwrap_or(config.n_realizations);
    config.outputs.csv = args.csv.or(config.outputs.csv);
    config.outputs.json = args.json.or(config.outputs.json);
    config.outputs.dump = args.dump.or(config.outputs.dump);
    config.validate()?;

    let result = run_sweep(&config)?;
    write_outputs(&result)?;
    if config.outputs.csv.is_none() {
        write_csv(&result, BufWriter::new(io::stdout().lock()))?;
    }
    let summary = SweepSummary::new(&result);
    match summary.det_window {
        Some(w) => eprintln!(
            "DET window: minimum at W = {:e}, maximum at W = {:e}, ratio {:.4}",
            w.w_min_loc, w.w_max_loc, w.ratio
        ),
        None => eprintln!("no DET window detected"),
    }
    Ok(())
}

fn thresholds(args: ThresholdArgs) -> Result<(), Failure> {
    let t = predict_thresholds(&args.chain.params(), args.w)?;
    let mut out = io::stdout().lock();
    for (name, value) in t.entries() {
        match value {
            Some(v) => writeln!(out, "{name:<14} {}", f17(v))?,
            None => writeln!(out, "{name:<14} n/a")?,
        }
    }
    Ok(())
}

fn gap(args: GapArgs) -> Result<(), Failure> {
    let cr = gamma_critical(args.w, args.n, args.alpha)?;
    let lo = args.gamma_min.unwrap_or(cr / 30.0);
    let hi = args.gamma_max.unwrap_or(300.0 * cr);
    if args.points < 2 || !(lo > 0.0 && hi > lo) {
        return Err(Failure::Usage(
            "need 0 < gamma-min < gamma-max and at least two points".into(),
        ));
    }
    let params = ChainParams::new(args.n, args.alpha);
    let rows = gap_table(
        &params,
        args.w,
        &log_grid(lo, hi, args.points),
        args.realizations,
        args.seed,
    )?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "gamma,delta_numeric,delta_theory,level_spacing,gamma_cr"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            f17(r.gamma),
            f17(r.delta_numeric),
            f17(r.delta_theory),
            f17(r.level_spacing),
            f17(r.gamma_cr)
        )?;
    }
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<(), Failure> {
    let params = args.chain.params();
    let state = match most_conducting_state(&params, args.w, args.seed, args.realizations) {
        Ok(s) => s,
        Err(Error::AllDivergent(s)) => {
            eprintln!("every realization is dominated by a dark state; showing the first");
            *s
        }
        Err(e) => return Err(e.into()),
    };
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "# realization {} state {} pr {} tau {} tail {} divergent {}",
        state.realization_meta.index,
        state.state_index,
        f17(state.pr),
        f17(state.tau_contrib),
        f17(state.tail_probability()),
        state.divergent
    )?;
    writeln!(out, "site,probability")?;
    for (j, p) in state.probabilities.iter().enumerate() {
        writeln!(out, "{},{}", j + 1, f17(*p))?;
    }
    Ok(())
}

fn run_validate(quick: bool) -> Result<(), Failure> {
    let checks = validate::run_validation(quick);
    let mut out = io::stdout().lock();
    for c in &checks {
        writeln!(
            out,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Unsuccessful(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}

fn read_summary(path: &PathBuf) -> Result<SweepSummary, Failure> {
    SweepSummary::read(path).map_err(|e| match e {
        Error::Config { line, message } => {
            Failure::Usage(format!("{}:{line}: {message}", path.display()))
        }
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })
}

fn fit(summary: PathBuf, method: Option<Method>) -> Result<(), Failure> {
    let s = read_summary(&summary)?;
    let method = method.unwrap_or(s.analysis_method);
    let curve = s.into_result().curve(method)?;
    let f = fit_peak(&curve).map_err(|e| Unsuccessful(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "w_fit     {}", f17(f.w_fit))?;
    writeln!(out, "errorbar  {}", f17(f.errorbar))?;
    writeln!(out, "curvature {}", f17(f.curvature))?;
    writeln!(out, "window    {:?}", f.fit_window)?;
    Ok(())
}

fn rescale(scale: Scale, method: Method, paths: Vec<PathBuf>) -> Result<(), Failure> {
    let results = paths
        .iter()
        .map(|p| read_summary(p).map(SweepSummary::into_result))
        .collect::<Result<Vec<_>, _>>()?;
    let curves = rescale_curves(&results, scale, method)?;
    let mut out = io::stdout().lock();
    writeln!(out, "n,alpha,gamma,w_scaled,i_scaled")?;
    for c in curves {
        for (x, y) in c.x.iter().zip(&c.y) {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.n_sites,
                c.alpha,
                c.gamma,
                f17(*x),
                f17(*y)
            )?;
        }
    }
    Ok(())
}

/// OpenBLAS picks its kernels when the library is loaded, so the variable has
/// to be in place before the process starts. See `.cargo/config.toml` for the
/// kernel problem this avoids.
#[cfg(all(unix, target_arch = "x86_64"))]
fn pin_blas_kernel() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    let mut cmd = std::process::Command::new(exe);
    cmd.args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell");
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        cmd.env("OPENBLAS_NUM_THREADS", "1");
    }
    let err = cmd.exec();
    eprintln!("warning: could not re-execute with OPENBLAS_CORETYPE set: {err}");
}

#[cfg(not(all(unix, target_arch = "x86_64")))]
fn pin_blas_kernel() {}

fn main() -> ExitCode {
    pin_blas_kernel();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Thresholds(a) => thresholds(a),
        Command::Gap(a) => gap(a),
        Command::Profile(a) => profile(a),
        Command::Validate { quick } => run_validate(quick),
        Command::FitPeak { summary, method } => fit(summary, method),
        Command::Rescale {
            scale,
            method,
            summaries,
        } => rescale(scale, method, summaries),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Unsuccessful(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
