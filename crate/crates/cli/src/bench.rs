//! Wall-clock timings of the bound and the exact methods.
//!
//! The bound never sees `n`, so it is timed once per shape and reported with
//! an empty `n` column.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use convbound_core::oracle::{build_jacobian_capped, DEFAULT_SIZE_CAP};
use convbound_core::{
    compute_bound, exact_norm_fft, exact_norm_matfree, oracle_sigma_max, random_filter, FilterDims, InputGeometry,
    PowerIterOptions,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::num::{fmt_opt, ser};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bound,
    Fft,
    Matfree,
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bound => "bound",
            Method::Fft => "fft",
            Method::Matfree => "matfree",
            Method::Oracle => "oracle",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bound" => Ok(Method::Bound),
            "fft" => Ok(Method::Fft),
            "matfree" => Ok(Method::Matfree),
            "oracle" => Ok(Method::Oracle),
            other => Err(format!("unknown method {other:?} (expected bound, fft, matfree or oracle)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub shapes: Vec<FilterDims>,
    pub n_list: Vec<usize>,
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub power: PowerIterOptions,
    pub size_cap: u128,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            shapes: vec![FilterDims::new(16, 16, 3, 3)],
            n_list: vec![16, 32, 64],
            repeats: 3,
            methods: vec![Method::Bound, Method::Fft],
            seed: 0,
            power: PowerIterOptions::default(),
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub shape: FilterDims,
    pub method: Method,
    /// Absent for the bound.
    pub n: Option<usize>,
    pub runs: usize,
    #[serde(serialize_with = "ser::opt")]
    pub median_secs: Option<f64>,
    #[serde(serialize_with = "ser::opt")]
    pub sigma: Option<f64>,
    pub error: Option<String>,
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn measure(repeats: usize, mut f: impl FnMut() -> convbound_core::Result<f64>) -> (usize, Option<f64>, Option<f64>, Option<String>) {
    let mut times = Vec::with_capacity(repeats);
    let mut sigma = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        match f() {
            Ok(s) => sigma = Some(s),
            Err(e) => return (times.len(), None, None, Some(e.to_string())),
        }
        times.push(start.elapsed().as_secs_f64());
    }
    (times.len(), Some(median(&mut times)), sigma, None)
}

pub fn run_bench(opts: &BenchOptions) -> CliResult<Vec<BenchRow>> {
    if opts.n_list.is_empty() && opts.methods.iter().any(|m| *m != Method::Bound) {
        return Err(CliError::Input("bench needs at least one n".into()));
    }
    let mut rows = Vec::new();
    for &shape in &opts.shapes {
        let filter = random_filter(shape, opts.seed)?;
        for &method in &opts.methods {
            if method == Method::Bound {
                let (runs, median_secs, sigma, error) =
                    measure(opts.repeats, || Ok(compute_bound(&filter, &opts.power)?.bound));
                rows.push(BenchRow { shape, method, n: None, runs, median_secs, sigma, error });
                continue;
            }
            for &n in &opts.n_list {
                let g = InputGeometry::new(n);
                let (runs, median_secs, sigma, error) = measure(opts.repeats, || {
                    g.check(shape)?;
                    match method {
                        Method::Fft => Ok(exact_norm_fft(&filter, g, &opts.power)?.sigma),
                        Method::Matfree => Ok(exact_norm_matfree(&filter, g, &opts.power)?.sigma),
                        Method::Oracle => {
                            let j = build_jacobian_capped(&filter, g, opts.size_cap)?;
                            Ok(oracle_sigma_max(&j, &opts.power)?.sigma)
                        }
                        Method::Bound => unreachable!(),
                    }
                });
                rows.push(BenchRow { shape, method, n: Some(n), runs, median_secs, sigma, error });
            }
        }
    }
    Ok(rows)
}

pub const CSV_COLUMNS: [&str; 7] = ["shape", "method", "n", "runs", "median_secs", "sigma", "error"];

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::Input(format!("csv write failed: {e}"));
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record([
            r.shape.to_string(),
            r.method.to_string(),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
            r.runs.to_string(),
            fmt_opt(r.median_secs),
            fmt_opt(r.sigma),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Input(format!("csv write failed: {e}")))?;
    Ok(())
}
