//! Toy training loop that uses the bound as a regularizer.
//!
//! A single circular-convolution layer (the student) is fit by plain
//! gradient descent to targets produced by a random teacher filter plus
//! Gaussian noise, minimizing
//!
//! ```text
//! mean_{i,c,r,s} (conv(L, X_i) - Y_i)^2  +  beta * bound(L)
//! ```
//!
//! The regularizer gradient comes from [`warm_grad_step`], with power
//! iteration vectors carried across steps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::compute_bound;
use crate::conv::{conv_forward, ImageTensor};
use crate::error::{Error, Result};
use crate::fft::exact_norm_fft;
use crate::grad::{warm_grad_step, BoundGradient, WarmStates};
use crate::rng::{random_filter, NormalStream};
use crate::specnorm::PowerIterOptions;
use crate::tensor::{Filter4D, FilterDims, InputGeometry};

/// Missing fields take their [`Default`] values when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegDemoConfig {
    /// Regularization coefficient.
    pub beta: f64,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub dims: FilterDims,
    pub n: usize,
    pub dataset_size: usize,
    /// Standard deviation of the target noise.
    pub noise: f64,
    /// Exact norm is sampled every this many steps (and at the end).
    pub exact_every: usize,
    /// Standard deviation of the student's initial weights.
    pub init_scale: f64,
}

impl Default for RegDemoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            steps: 500,
            lr: 0.1,
            seed: 0,
            dims: FilterDims::new(1, 1, 3, 3),
            n: 8,
            dataset_size: 8,
            noise: 0.01,
            exact_every: 25,
            init_scale: 0.1,
        }
    }
}

impl RegDemoConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        InputGeometry::new(self.n).check(self.dims)?;
        let bad = |what: &str| Err(Error::Precondition(format!("regdemo config: {what}")));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be finite and non-negative");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if self.steps == 0 || self.dataset_size == 0 || self.exact_every == 0 {
            return bad("steps, dataset_size and exact_every must be positive");
        }
        if !(self.noise >= 0.0) || !(self.init_scale > 0.0) {
            return bad("noise must be non-negative and init_scale positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Data-fit loss at the start of the step.
    pub loss: f64,
    /// Bound estimate from the warm-started power step.
    pub bound: f64,
    /// Exact spectral norm, on sampled steps only.
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegDemoTrace {
    pub config: RegDemoConfig,
    /// One record per step, then a final record for the trained filter.
    pub records: Vec<TraceRecord>,
    pub final_filter: Option<Filter4D>,
    /// Converged bound of the final filter.
    pub final_bound: f64,
    pub final_exact: f64,
}

impl RegDemoTrace {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn min_loss(&self) -> f64 {
        self.records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min)
    }

    pub fn final_gap(&self) -> f64 {
        self.final_bound - self.final_exact
    }

    /// `step,loss,bound,exact`, exact left empty on unsampled steps.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Format(format!("csv write failed: {e}"));
        w.write_record(["step", "loss", "bound", "exact"]).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                format!("{:?}", r.loss),
                format!("{:?}", r.bound),
                r.exact.map_or_else(String::new, |e| format!("{e:?}")),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Format(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// What the training loop hands to an observer each step.
pub struct StepInfo<'a> {
    pub step: usize,
    pub filter: &'a Filter4D,
    /// Warm states the regularizer gradient was computed from.
    pub states: &'a WarmStates,
    pub reg_grad: &'a BoundGradient,
    pub data_grad: &'a [f64],
}

struct Dataset {
    inputs: Vec<ImageTensor>,
    targets: Vec<ImageTensor>,
}

fn make_dataset(cfg: &RegDemoConfig, teacher: &Filter4D) -> Result<Dataset> {
    let geometry = InputGeometry::new(cfg.n);
    let n = cfg.n;
    let mut stream = NormalStream::new(cfg.seed.wrapping_add(2));
    let mut inputs = Vec::with_capacity(cfg.dataset_size);
    let mut targets = Vec::with_capacity(cfg.dataset_size);
    for _ in 0..cfg.dataset_size {
        let x = ImageTensor::new(cfg.dims.c_in, n, stream.normal_vec(cfg.dims.c_in * n * n))?;
        let clean = conv_forward(teacher, &x, geometry)?;
        let noisy = clean
            .values()
            .iter()
            .map(|v| v + cfg.noise * stream.normal())
            .collect();
        targets.push(ImageTensor::new(cfg.dims.c_out, n, noisy)?);
        inputs.push(x);
    }
    Ok(Dataset { inputs, targets })
}

/// Mean squared error and its gradient with respect to the filter.
fn data_loss_and_grad(filter: &Filter4D, data: &Dataset, n: usize) -> Result<(f64, Vec<f64>)> {
    let dims = filter.dims();
    let geometry = InputGeometry::new(n);
    let count = (data.inputs.len() * dims.c_out * n * n) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; dims.len()];
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let y = conv_forward(filter, x, geometry)?;
        let resid: Vec<f64> = y.values().iter().zip(t.values()).map(|(a, b)| a - b).collect();
        loss += resid.iter().map(|r| r * r).sum::<f64>();
        // dLoss/dL[c,d,k,l] = sum_{r,s} resid[c,r,s] X[d, r+k, s+l]
        for (flat, g) in grad.iter_mut().enumerate() {
            let (c, d, k, l) = dims.unravel(flat);
            let mut acc = 0.0;
            for r in 0..n {
                for s in 0..n {
                    acc += resid[(c * n + r) * n + s] * x.get(d, (r + k) % n, (s + l) % n);
                }
            }
            *g += acc;
        }
    }
    grad.iter_mut().for_each(|g| *g *= 2.0 / count);
    Ok((loss / count, grad))
}

fn diverged(trace: RegDemoTrace, step: usize) -> Error {
    let last = trace.records.last().map_or(f64::NAN, |r| r.loss);
    Error::Domain(format!(
        "regdemo diverged at step {step} (last loss {last}); {} records kept",
        trace.records.len()
    ))
}

pub fn run_regdemo(cfg: &RegDemoConfig) -> Result<RegDemoTrace> {
    run_regdemo_observed(cfg, |_| {}).map_err(|(e, _)| e)
}

/// Runs the demo, calling `observer` once per step. On divergence the error
/// is returned together with the partial trace.
pub fn run_regdemo_observed(
    cfg: &RegDemoConfig,
    mut observer: impl FnMut(&StepInfo<'_>),
) -> std::result::Result<RegDemoTrace, (Error, Option<RegDemoTrace>)> {
    cfg.validate().map_err(|e| (e, None))?;
    let geometry = InputGeometry::new(cfg.n);
    let exact_opts = PowerIterOptions::default();
    let setup = || -> Result<(Dataset, Filter4D)> {
        let teacher = random_filter(cfg.dims, cfg.seed)?;
        let data = make_dataset(cfg, &teacher)?;
        let student = random_filter(cfg.dims, cfg.seed.wrapping_add(1))?.scaled(cfg.init_scale)?;
        Ok((data, student))
    };
    let (data, mut filter) = setup().map_err(|e| (e, None))?;
    let mut states = WarmStates::random(cfg.dims, cfg.seed.wrapping_add(3));

    let mut trace = RegDemoTrace {
        config: cfg.clone(),
        records: Vec::with_capacity(cfg.steps + 1),
        final_filter: None,
        final_bound: f64::NAN,
        final_exact: f64::NAN,
    };

    for step in 0..cfg.steps {
        let keep = |e: Error, trace: &RegDemoTrace| (e, Some(trace.clone()));
        let (loss, data_grad) = data_loss_and_grad(&filter, &data, cfg.n).map_err(|e| keep(e, &trace))?;
        if !loss.is_finite() {
            return Err((diverged(trace.clone(), step), Some(trace)));
        }
        let (report, reg_grad, next_states) = warm_grad_step(&filter, &states).map_err(|e| keep(e, &trace))?;
        let exact = if step % cfg.exact_every == 0 {
            Some(exact_norm_fft(&filter, geometry, &exact_opts).map_err(|e| keep(e, &trace))?.sigma)
        } else {
            None
        };
        trace.records.push(TraceRecord {
            step,
            loss,
            bound: report.bound,
            exact,
        });

        observer(&StepInfo {
            step,
            filter: &filter,
            states: &states,
            reg_grad: &reg_grad,
            data_grad: &data_grad,
        });

        let updated: Vec<f64> = filter
            .values()
            .iter()
            .zip(&data_grad)
            .zip(reg_grad.grad.values())
            .map(|((w, g), r)| w - cfg.lr * (g + cfg.beta * r))
            .collect();
        if updated.iter().any(|v| !v.is_finite()) {
            return Err((diverged(trace.clone(), step), Some(trace)));
        }
        filter = Filter4D::new(cfg.dims, updated).map_err(|e| keep(e, &trace))?;
        states = next_states;
    }

    let finish = |filter: &Filter4D| -> Result<(f64, f64, f64)> {
        let (loss, _) = data_loss_and_grad(filter, &data, cfg.n)?;
        let bound = compute_bound(filter, &PowerIterOptions::default())?.bound;
        let exact = exact_norm_fft(filter, geometry, &exact_opts)?.sigma;
        Ok((loss, bound, exact))
    };
    let (loss, bound, exact) = finish(&filter).map_err(|e| (e, Some(trace.clone())))?;
    if !loss.is_finite() {
        return Err((diverged(trace.clone(), cfg.steps), Some(trace)));
    }
    trace.records.push(TraceRecord {
        step: cfg.steps,
        loss,
        bound,
        exact: Some(exact),
    });
    trace.final_bound = bound;
    trace.final_exact = exact;
    trace.final_filter = Some(filter);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(beta: f64) -> RegDemoConfig {
        RegDemoConfig {
            beta,
            steps: 60,
            ..RegDemoConfig::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = run_regdemo(&small(0.1)).unwrap();
        let b = run_regdemo(&small(0.1)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 61);
    }

    #[test]
    fn unregularized_loss_is_non_increasing() {
        let t = run_regdemo(&small(0.0)).unwrap();
        for w in t.records.windows(2) {
            assert!(w[1].loss <= w[0].loss * (1.0 + 1e-12), "{} -> {}", w[0].loss, w[1].loss);
        }
    }

    #[test]
    fn exact_is_sampled_on_schedule() {
        let t = run_regdemo(&small(0.0)).unwrap();
        let sampled: Vec<usize> = t.records.iter().filter(|r| r.exact.is_some()).map(|r| r.step).collect();
        assert_eq!(sampled, vec![0, 25, 50, 60]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = RegDemoConfig {
            n: 3,
            ..RegDemoConfig::default()
        };
        assert!(run_regdemo(&cfg).is_err());
        let cfg = RegDemoConfig {
            lr: 0.0,
            ..RegDemoConfig::default()
        };
        assert!(run_regdemo(&cfg).is_err());
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let cfg = RegDemoConfig {
            lr: 1e3,
            steps: 400,
            ..RegDemoConfig::default()
        };
        let (err, partial) = run_regdemo_observed(&cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let partial = partial.expect("partial trace");
        assert!(!partial.records.is_empty());
        assert!(partial.records.len() <= 400);
    }

    #[test]
    fn csv_layout() {
        let t = run_regdemo(&RegDemoConfig {
            steps: 2,
            ..RegDemoConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,loss,bound,exact");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].ends_with(','));
    }
}
