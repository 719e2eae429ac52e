//! Bound versus exact norm, one row per filter.

use std::io::Write;
use std::time::Instant;

use convbound_core::{
    compute_bound, exact_norm_fft, exact_norm_matfree, Branch, FilterDims, InputGeometry, PowerIterOptions,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{Job, Manifest};
use crate::num::{fmt6, fmt_opt, ser};

#[derive(Debug, Clone)]
pub struct CompareOptions {
    /// Input size for entries that do not set their own.
    pub n: usize,
    pub seeds: usize,
    pub matfree: bool,
    pub power: PowerIterOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            n: 32,
            seeds: 1,
            matfree: false,
            power: PowerIterOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub dims: Option<FilterDims>,
    pub seed: Option<u64>,
    pub n: usize,
    /// `sqrt(h w) * |X|_2` for X in R, S, T, U.
    #[serde(serialize_with = "ser::opt4")]
    pub scaled_norms: Option<[f64; 4]>,
    #[serde(serialize_with = "ser::opt")]
    pub bound: Option<f64>,
    pub argmin: Option<Branch>,
    #[serde(serialize_with = "ser::opt")]
    pub exact_fft: Option<f64>,
    #[serde(serialize_with = "ser::opt")]
    pub exact_matfree: Option<f64>,
    #[serde(serialize_with = "ser::opt")]
    pub ratio: Option<f64>,
    pub converged: bool,
    #[serde(serialize_with = "ser::opt")]
    pub time_bound: Option<f64>,
    #[serde(serialize_with = "ser::opt")]
    pub time_fft: Option<f64>,
    #[serde(serialize_with = "ser::opt")]
    pub time_matfree: Option<f64>,
    pub error: Option<String>,
}

impl ComparisonRow {
    fn empty(job: &Job, n: usize) -> Self {
        Self {
            label: job.label.clone(),
            dims: None,
            seed: job.seed(),
            n,
            scaled_norms: None,
            bound: None,
            argmin: None,
            exact_fft: None,
            exact_matfree: None,
            ratio: None,
            converged: false,
            time_bound: None,
            time_fft: None,
            time_matfree: None,
            error: None,
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Runs one job. Failures are recorded in the row.
pub fn compare_job(job: &Job, opts: &CompareOptions) -> ComparisonRow {
    let n = job.n.unwrap_or(opts.n);
    let mut row = ComparisonRow::empty(job, n);
    let result = (|| -> convbound_core::Result<()> {
        let filter = job.load()?;
        row.dims = Some(filter.dims());
        let geometry = InputGeometry::new(n);
        geometry.check(filter.dims())?;

        let (report, t) = timed(|| compute_bound(&filter, &opts.power));
        let report = report?;
        row.scaled_norms = Some(report.scaled_norms());
        row.bound = Some(report.bound);
        row.argmin = Some(report.argmin);
        row.time_bound = Some(t);
        let mut converged = report.all_converged();

        let (fft, t) = timed(|| exact_norm_fft(&filter, geometry, &opts.power));
        let fft = fft?;
        row.exact_fft = Some(fft.sigma);
        row.ratio = Some(report.bound / fft.sigma);
        row.time_fft = Some(t);
        converged &= fft.all_converged;

        if opts.matfree {
            let (est, t) = timed(|| exact_norm_matfree(&filter, geometry, &opts.power));
            let est = est?;
            row.exact_matfree = Some(est.sigma);
            row.time_matfree = Some(t);
            converged &= est.converged;
        }
        row.converged = converged;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Rows run one after another so that the timings are not shared between
/// rows; each method parallelizes internally.
pub fn run_compare(manifest: &Manifest, opts: &CompareOptions) -> Vec<ComparisonRow> {
    manifest.jobs(opts.seeds).iter().map(|job| compare_job(job, opts)).collect()
}

/// Per-label aggregate of the ratio column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSummary {
    pub label: String,
    pub n: usize,
    pub count: usize,
    #[serde(serialize_with = "ser::num")]
    pub mean_ratio: f64,
    #[serde(serialize_with = "ser::num")]
    pub min_ratio: f64,
    #[serde(serialize_with = "ser::num")]
    pub max_ratio: f64,
}

pub fn summarize(rows: &[ComparisonRow]) -> Vec<RatioSummary> {
    let mut out: Vec<RatioSummary> = Vec::new();
    for row in rows {
        let Some(ratio) = row.ratio else { continue };
        match out.iter_mut().find(|s| s.label == row.label && s.n == row.n) {
            Some(s) => {
                s.mean_ratio += ratio;
                s.count += 1;
                s.min_ratio = s.min_ratio.min(ratio);
                s.max_ratio = s.max_ratio.max(ratio);
            }
            None => out.push(RatioSummary {
                label: row.label.clone(),
                n: row.n,
                count: 1,
                mean_ratio: ratio,
                min_ratio: ratio,
                max_ratio: ratio,
            }),
        }
    }
    for s in &mut out {
        s.mean_ratio /= s.count as f64;
    }
    out
}

pub const CSV_COLUMNS: [&str; 21] = [
    "label",
    "c_out",
    "c_in",
    "h",
    "w",
    "seed",
    "n",
    "r",
    "s",
    "t",
    "u",
    "bound",
    "argmin",
    "exact_fft",
    "exact_matfree",
    "ratio",
    "converged",
    "time_bound",
    "time_fft",
    "time_matfree",
    "error",
];

pub fn write_csv<W: Write>(rows: &[ComparisonRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::Input(format!("csv write failed: {e}"));
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in rows {
        // Failed rows leave the numeric columns blank.
        let dims = r.dims.map(|d| d.as_array().map(|x| x.to_string())).unwrap_or_default();
        let norms = r.scaled_norms.map(|a| a.map(fmt6)).unwrap_or_default();
        let mut record = vec![r.label.clone()];
        record.extend(dims);
        record.push(r.seed.map(|s| s.to_string()).unwrap_or_default());
        record.push(r.n.to_string());
        record.extend(norms);
        record.extend([
            fmt_opt(r.bound),
            r.argmin.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt(r.exact_fft),
            fmt_opt(r.exact_matfree),
            fmt_opt(r.ratio),
            r.converged.to_string(),
            fmt_opt(r.time_bound),
            fmt_opt(r.time_fft),
            fmt_opt(r.time_matfree),
            r.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&record).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Input(format!("csv write failed: {e}")))?;
    Ok(())
}
