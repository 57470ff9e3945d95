//! Disorder sweeps, curve analysis and result files.

pub mod analysis;
pub mod config;
pub mod output;
pub mod sweep;
pub mod validate;

pub use analysis::{
    detect_det_window, fit_peak, fit_peak_at, gap_table, rescale_curve, rescale_curves, Curve,
    DetWindow, GapRow, PeakFit, RescaledCurve, Scale,
};
pub use config::{log_grid, Outputs, SweepConfig, WGrid};
pub use output::{write_csv, write_dump, write_outputs, SweepSummary};
pub use sweep::{run_sweep, Outcome, Sample, SweepResult, SweepRow};
