//! One function per subcommand. Each returns the text for stdout plus an
//! exit code, so the binary stays a thin dispatcher and tests can call the
//! commands directly.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use convbound_core::grad::{grad_bound_with_report, EntryStatus};
use convbound_core::oracle::{build_jacobian_capped, DEFAULT_SIZE_CAP};
use convbound_core::regdemo::{run_regdemo_observed, RegDemoConfig, RegDemoTrace};
use convbound_core::{
    compute_bound, exact_norm_fft, exact_norm_matfree, finite_diff_check, load_filter, oracle_sigma_max,
    random_filter, save_filter, BoundReport, Branch, Error, Filter4D, FilterDims, FilterFormat, InputGeometry,
    PowerIterOptions,
};
use serde::Serialize;

use crate::bench::{self, BenchOptions, BenchRow};
use crate::compare::{self, CompareOptions, ComparisonRow, RatioSummary};
use crate::error::{CliError, CliResult, EXIT_NOT_CONVERGED, EXIT_OK};
use crate::manifest::Manifest;
use crate::num::{fmt6, Num};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, stderr: String::new(), code: EXIT_OK }
    }

    fn converged(stdout: String, converged: bool, what: &str) -> Self {
        if converged {
            Self::ok(stdout)
        } else {
            Self {
                stdout,
                stderr: format!("warning: power iteration did not converge ({what})\n"),
                code: EXIT_NOT_CONVERGED,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn to_json<T: Serialize>(command: &str, body: T) -> String {
    let env = Envelope { schema_version: SCHEMA_VERSION, command, body };
    let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
    s.push('\n');
    s
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Input(format!("csv write failed: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(format!("csv write failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn load(path: &Path) -> CliResult<Filter4D> {
    Ok(load_filter(path, FilterFormat::from_path(path))?)
}

#[derive(Serialize)]
struct PerBranch<T> {
    #[serde(rename = "R")]
    r: T,
    #[serde(rename = "S")]
    s: T,
    #[serde(rename = "T")]
    t: T,
    #[serde(rename = "U")]
    u: T,
}

impl<T> PerBranch<T> {
    fn from_fn(mut f: impl FnMut(Branch) -> T) -> Self {
        Self { r: f(Branch::R), s: f(Branch::S), t: f(Branch::T), u: f(Branch::U) }
    }
}

#[derive(Serialize)]
struct BoundBody {
    dims: FilterDims,
    scale: Num,
    norms: PerBranch<Num>,
    scaled_norms: PerBranch<Num>,
    bound: Num,
    argmin: Branch,
    converged: bool,
    iterations: PerBranch<usize>,
}

fn bound_body(dims: FilterDims, rep: &BoundReport) -> BoundBody {
    BoundBody {
        dims,
        scale: Num(rep.scale),
        norms: PerBranch::from_fn(|b| Num(rep.norm(b))),
        scaled_norms: PerBranch::from_fn(|b| Num(rep.scale * rep.norm(b))),
        bound: Num(rep.bound),
        argmin: rep.argmin,
        converged: rep.all_converged(),
        iterations: PerBranch::from_fn(|b| rep.estimate(b).iterations),
    }
}

pub fn cmd_bound(path: &Path, power: &PowerIterOptions, format: OutputFormat) -> CliResult<Outcome> {
    let filter = load(path)?;
    let rep = compute_bound(&filter, power)?;
    let text = match format {
        OutputFormat::Json => to_json("bound", bound_body(filter.dims(), &rep)),
        OutputFormat::Csv => {
            let s = rep.scaled_norms();
            csv_table(
                &["c_out", "c_in", "h", "w", "r", "s", "t", "u", "bound", "argmin", "converged"],
                &[filter
                    .dims()
                    .as_array()
                    .iter()
                    .map(|d| d.to_string())
                    .chain(s.iter().map(|&x| fmt6(x)))
                    .chain([fmt6(rep.bound), rep.argmin.to_string(), rep.all_converged().to_string()])
                    .collect()],
            )?
        }
    };
    Ok(Outcome::converged(text, rep.all_converged(), "bound"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactMethod {
    Fft,
    Matfree,
    Oracle,
}

#[derive(Serialize)]
struct ExactBody {
    dims: FilterDims,
    n: usize,
    method: ExactMethod,
    sigma: Num,
    converged: bool,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequency: Option<[usize; 2]>,
}

pub fn cmd_exact(
    path: &Path,
    n: usize,
    method: ExactMethod,
    power: &PowerIterOptions,
    jacobian_csv: Option<&Path>,
    format: OutputFormat,
) -> CliResult<Outcome> {
    let filter = load(path)?;
    let g = InputGeometry::new(n);
    let body = match method {
        ExactMethod::Fft => {
            let r = exact_norm_fft(&filter, g, power)?;
            ExactBody {
                dims: filter.dims(),
                n,
                method,
                sigma: Num(r.sigma),
                converged: r.all_converged,
                iterations: r.max_iterations,
                frequency: Some([r.frequency.0, r.frequency.1]),
            }
        }
        ExactMethod::Matfree | ExactMethod::Oracle => {
            let est = if method == ExactMethod::Matfree {
                exact_norm_matfree(&filter, g, power)?
            } else {
                let j = build_jacobian_capped(&filter, g, DEFAULT_SIZE_CAP)?;
                if let Some(out) = jacobian_csv {
                    let file = File::create(out).map_err(|source| Error::Io { path: out.to_path_buf(), source })?;
                    j.write_csv(BufWriter::new(file))
                        .map_err(|source| Error::Io { path: out.to_path_buf(), source })?;
                }
                oracle_sigma_max(&j, power)?
            };
            ExactBody {
                dims: filter.dims(),
                n,
                method,
                sigma: Num(est.sigma),
                converged: est.converged,
                iterations: est.iterations,
                frequency: None,
            }
        }
    };
    let converged = body.converged;
    let text = match format {
        OutputFormat::Json => to_json("exact", &body),
        OutputFormat::Csv => csv_table(
            &["n", "method", "sigma", "converged", "iterations"],
            &[vec![
                n.to_string(),
                serde_json::to_value(method).unwrap().as_str().unwrap().to_string(),
                fmt6(body.sigma.0),
                converged.to_string(),
                body.iterations.to_string(),
            ]],
        )?,
    };
    Ok(Outcome::converged(text, converged, "exact"))
}

#[derive(Serialize)]
struct CompareBody<'a> {
    default_n: usize,
    seeds: usize,
    rows: &'a [ComparisonRow],
    summary: Vec<RatioSummary>,
}

pub fn cmd_compare(manifest: &Manifest, opts: &CompareOptions, format: OutputFormat) -> CliResult<Outcome> {
    let rows = compare::run_compare(manifest, opts);
    let text = match format {
        OutputFormat::Json => to_json(
            "compare",
            CompareBody { default_n: opts.n, seeds: opts.seeds, rows: &rows, summary: compare::summarize(&rows) },
        ),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            compare::write_csv(&rows, &mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    let mut out = Outcome::ok(text);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let unconverged = rows.iter().filter(|r| r.error.is_none() && !r.converged).count();
    if failed > 0 {
        out.stderr.push_str(&format!("warning: {failed} row(s) failed; see the error column\n"));
    }
    if unconverged > 0 {
        out.stderr.push_str(&format!("warning: {unconverged} row(s) did not converge\n"));
        out.code = EXIT_NOT_CONVERGED;
    }
    Ok(out)
}

#[derive(Serialize)]
struct BenchBody<'a> {
    repeats: usize,
    rows: &'a [BenchRow],
}

pub fn cmd_bench(opts: &BenchOptions, format: OutputFormat) -> CliResult<Outcome> {
    let rows = bench::run_bench(opts)?;
    let text = match format {
        OutputFormat::Json => to_json("bench", BenchBody { repeats: opts.repeats, rows: &rows }),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            bench::write_csv(&rows, &mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    Ok(Outcome::ok(text))
}

#[derive(Serialize)]
struct FdEntryJson {
    index: usize,
    position: [usize; 4],
    analytic: Num,
    numeric: Num,
    abs_err: Num,
    status: &'static str,
}

#[derive(Serialize)]
struct GradcheckBody {
    dims: FilterDims,
    eps: f64,
    tol: f64,
    branch: Branch,
    bound: Num,
    gap_ok: bool,
    sigma2: Num,
    max_abs_err: Num,
    worst_index: Option<usize>,
    compared: usize,
    flagged: usize,
    passes: bool,
    entries: Vec<FdEntryJson>,
}

fn status_name(s: EntryStatus) -> &'static str {
    match s {
        EntryStatus::Smooth => "smooth",
        EntryStatus::TieConsistent => "tie_consistent",
        EntryStatus::Nonsmooth => "nonsmooth",
    }
}

pub fn cmd_gradcheck(
    path: &Path,
    eps: f64,
    tol: f64,
    power: &PowerIterOptions,
    format: OutputFormat,
) -> CliResult<Outcome> {
    let filter = load(path)?;
    let dims = filter.dims();
    let (_, grad) = grad_bound_with_report(&filter, power)?;
    let fd = finite_diff_check(&filter, eps, power)?;
    let entries: Vec<FdEntryJson> = fd
        .entries
        .iter()
        .map(|e| {
            let (c, d, k, l) = dims.unravel(e.index);
            FdEntryJson {
                index: e.index,
                position: [c, d, k, l],
                analytic: Num(e.analytic),
                numeric: Num(e.numeric),
                abs_err: Num(e.abs_err()),
                status: status_name(e.status),
            }
        })
        .collect();
    let text = match format {
        OutputFormat::Json => to_json(
            "gradcheck",
            GradcheckBody {
                dims,
                eps,
                tol,
                branch: fd.branch,
                bound: Num(grad.bound),
                gap_ok: fd.gap_ok,
                sigma2: Num(grad.sigma2),
                max_abs_err: Num(fd.max_abs_err),
                worst_index: fd.worst_index,
                compared: fd.compared(),
                flagged: fd.flagged().count(),
                passes: fd.passes(tol),
                entries,
            },
        ),
        OutputFormat::Csv => csv_table(
            &["index", "c", "d", "k", "l", "analytic", "numeric", "abs_err", "status"],
            &entries
                .iter()
                .map(|e| {
                    let mut r = vec![e.index.to_string()];
                    r.extend(e.position.iter().map(|p| p.to_string()));
                    r.extend([fmt6(e.analytic.0), fmt6(e.numeric.0), fmt6(e.abs_err.0), e.status.to_string()]);
                    r
                })
                .collect::<Vec<_>>(),
        )?,
    };
    Ok(Outcome::ok(text))
}

pub fn load_regdemo_config(path: &Path) -> CliResult<RegDemoConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let cfg: RegDemoConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("regdemo config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn trace_csv(trace: &RegDemoTrace) -> CliResult<String> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Writes the trace CSV to `out` (or stdout when `None`).
pub fn cmd_regdemo(cfg: &RegDemoConfig, out: Option<&Path>) -> CliResult<Outcome> {
    let (trace, failure) = match run_regdemo_observed(cfg, |_| {}) {
        Ok(t) => (t, None),
        Err((e, Some(t))) => (t, Some(e)),
        Err((e, None)) => return Err(e.into()),
    };
    let csv = trace_csv(&trace)?;
    let mut outcome = match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
            let summary = serde_json::json!({
                "trace": path.display().to_string(),
                "records": trace.records.len(),
                "final_loss": Num(trace.final_loss()),
                "final_bound": Num(trace.final_bound),
                "final_exact": Num(trace.final_exact),
            });
            Outcome::ok(to_json("regdemo", summary))
        }
        None => Outcome::ok(csv),
    };
    if let Some(e) = failure {
        outcome.stderr = format!("error: {e}\n");
        outcome.code = EXIT_NOT_CONVERGED;
    }
    Ok(outcome)
}

pub fn cmd_gen(dims: FilterDims, seed: u64, out: &PathBuf) -> CliResult<Outcome> {
    let filter = random_filter(dims, seed)?;
    save_filter(&filter, out, FilterFormat::from_path(out))?;
    let body = serde_json::json!({
        "path": out.display().to_string(),
        "dims": dims,
        "seed": seed,
        "frobenius_norm": Num(filter.frobenius_norm()),
    });
    Ok(Outcome::ok(to_json("gen", body)))
}
