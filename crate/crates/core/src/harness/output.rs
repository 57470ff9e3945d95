//! Result files: the per-row CSV, the per-realization dump and the JSON
//! summary. Floating-point values carry 17 significant digits so that every
//! `f64` round-trips.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::{detect_det_window, fit_peak, DetWindow, PeakFit};
use super::config::SweepConfig;
use super::sweep::{Outcome, Provenance, SweepResult, SweepRow};
use crate::error::{Error, Result};
use crate::theory::{predict_thresholds, ThresholdSet};
use crate::transport::Method;

pub const CSV_HEADER: &str = "w,method,i_typ,lnI_std,n_ok,n_divergent";

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One line per `(W, method)`. Rows marked invalid carry `nan` for `i_typ`.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &result.rows {
        let i_typ = if r.valid { f17(r.i_typ) } else { "nan".into() };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            f17(r.w),
            r.method.as_str(),
            i_typ,
            f17(r.ln_std),
            r.n_ok,
            r.n_divergent
        )?;
    }
    Ok(())
}

/// `w_index,realization,method,current,ln_i`; failed realizations are
/// written as `failed`.
pub fn write_dump<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "w_index,realization,method,current,ln_i")?;
    for s in &result.samples {
        let (c, l) = match s.outcome {
            Outcome::Current(c) => (f17(c), f17(c.ln())),
            Outcome::Failed(_) => ("failed".into(), "failed".into()),
        };
        writeln!(
            out,
            "{},{},{},{c},{l}",
            s.w_index,
            s.realization,
            s.method.as_str()
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub provenance: Provenance,
    /// Method used for the window and the peak fit.
    pub analysis_method: Method,
    pub thresholds: Option<ThresholdSet>,
    pub det_window: Option<DetWindow>,
    pub peak_fit: Option<PeakFit>,
    /// Why there is no window or fit, when there is none.
    pub analysis_note: Option<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    /// Thresholds at `config.reference_w` plus window and peak fit of the
    /// first configured method. Analysis failures are recorded, not raised.
    pub fn new(result: &SweepResult) -> Self {
        let method = result.config.methods[0];
        let thresholds = predict_thresholds(&result.config.chain, result.config.reference_w).ok();
        let mut note = None;
        let (mut det_window, mut peak_fit) = (None, None);
        match result
            .curve(method)
            .and_then(|c| Ok((detect_det_window(&c)?, c)))
        {
            Ok((w, c)) => {
                det_window = w;
                match fit_peak(&c) {
                    Ok(f) => peak_fit = Some(f),
                    Err(e) => note = Some(e.to_string()),
                }
            }
            Err(e) => note = Some(e.to_string()),
        }
        SweepSummary {
            config: result.config.clone(),
            provenance: result.provenance.clone(),
            analysis_method: method,
            thresholds,
            det_window,
            peak_fit,
            analysis_note: note,
            rows: result.rows.clone(),
        }
    }

    /// Reassembles a result from the stored rows; the per-realization
    /// samples are not part of the summary.
    pub fn into_result(self) -> SweepResult {
        SweepResult {
            config: self.config,
            rows: self.rows,
            samples: Vec::new(),
            provenance: self.provenance,
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut ser = serde_json::Serializer::with_formatter(out, Digits17::default());
        self.serialize(&mut ser)
            .map_err(|e| Error::Io(io::Error::other(e)))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        serde_json::from_str(&src).map_err(|e| Error::Config {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Pretty JSON with `f64` written as `{:.16e}`.
#[derive(Default)]
struct Digits17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(f17(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Writes every output named in the configuration.
pub fn write_outputs(result: &SweepResult) -> Result<()> {
    let o = &result.config.outputs;
    let create = |p: &Path| std::fs::File::create(p).map(io::BufWriter::new);
    if let Some(p) = &o.csv {
        write_csv(result, create(p)?)?;
    }
    if let Some(p) = &o.dump {
        write_dump(result, create(p)?)?;
    }
    if let Some(p) = &o.json {
        SweepSummary::new(result).write(create(p)?)?;
    }
    Ok(())
}
