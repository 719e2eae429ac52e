//! Gradient of the reshape bound with respect to the filter.
//!
//! For the branch `X` attaining the minimum, `d(sqrt(hw) |X|_2)/dX = sqrt(hw) u v^T`
//! and the filter gradient is that matrix read back through the reshape.
//! At ties between branches the gradient of the tie-break winner is used.

use crate::bounds::{compute_bound, Branch, BoundReport};
use crate::error::{Error, Result};
use crate::specnorm::{second_singular_value, warm_step, PowerIterOptions, PowerIterState, SpectralEstimate, DEFAULT_TOL};
use crate::tensor::{Filter4D, FilterDims};

/// Relative singular gap below which the top singular vectors are treated
/// as non-unique.
pub const GAP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundGradient {
    /// `d bound / d L`, in filter layout.
    pub grad: Filter4D,
    pub branch: Branch,
    /// Bound value the gradient belongs to.
    pub bound: f64,
    /// Estimated second singular value of the selected branch.
    pub sigma2: f64,
    /// `sigma1 - sigma2 >= GAP_THRESHOLD * sigma1`.
    pub gap_ok: bool,
}

/// `sqrt(hw) u v^T` of one branch, in filter layout.
pub fn branch_gradient(dims: FilterDims, branch: Branch, est: &SpectralEstimate<f64>) -> Vec<f64> {
    let scale = ((dims.h * dims.w) as f64).sqrt();
    let mut grad = vec![0.0; dims.len()];
    for (flat, g) in grad.iter_mut().enumerate() {
        let (c, d, k, l) = dims.unravel(flat);
        let (i, j) = branch.position(dims, c, d, k, l);
        *g = scale * est.u[i] * est.v[j];
    }
    grad
}

fn gradient_from_report(filter: &Filter4D, report: &BoundReport, gap_opts: &PowerIterOptions) -> Result<BoundGradient> {
    let branch = report.argmin;
    let est = report.estimate(branch);
    let sigma2 = second_singular_value(&branch.build(filter), est, gap_opts)?;
    let grad = Filter4D::new(filter.dims(), branch_gradient(filter.dims(), branch, est))?;
    Ok(BoundGradient {
        grad,
        branch,
        bound: report.bound,
        sigma2,
        gap_ok: est.sigma - sigma2 >= GAP_THRESHOLD * est.sigma,
    })
}

/// Bound and its gradient from fully converged power iterations.
pub fn grad_bound_with_report(filter: &Filter4D, opts: &PowerIterOptions) -> Result<(BoundReport, BoundGradient)> {
    let report = compute_bound(filter, opts)?;
    if !report.estimate(report.argmin).converged {
        return Err(Error::GradientNotConverged {
            report: Box::new(report),
        });
    }
    let grad = gradient_from_report(filter, &report, opts)?;
    Ok((report, grad))
}

pub fn grad_bound(filter: &Filter4D, opts: &PowerIterOptions) -> Result<BoundGradient> {
    grad_bound_with_report(filter, opts).map(|(_, g)| g)
}

/// How an entry behaved in [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryStatus {
    /// No competing branch nearby and a simple top singular value.
    Smooth,
    /// Another branch is within reach of the minimum, but its derivative
    /// along this entry agrees with the selected branch, so the minimum is
    /// still differentiable here. Compared, and flagged.
    TieConsistent,
    /// The minimum may switch branches (or the top singular value is
    /// repeated) within the stencil. Flagged and not compared.
    Nonsmooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub status: EntryStatus,
}

impl FdEntry {
    pub fn abs_err(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Worst disagreement over compared (not `Nonsmooth`) entries.
    pub max_abs_err: f64,
    pub worst_index: Option<usize>,
    pub gap_ok: bool,
    pub branch: Branch,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn flagged(&self) -> impl Iterator<Item = &FdEntry> {
        self.entries.iter().filter(|e| e.status != EntryStatus::Smooth)
    }

    pub fn compared(&self) -> usize {
        self.entries.iter().filter(|e| e.status != EntryStatus::Nonsmooth).count()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_err <= tol
    }
}

/// Central differences of the bound on every filter entry.
///
/// Each reshape norm is 1-Lipschitz in any single filter entry, so a branch
/// whose norm is within `2 eps` of the minimum may take over inside the
/// stencil. Such entries are flagged; they are still compared when the
/// competing branches have the same derivative there.
pub fn finite_diff_check(filter: &Filter4D, eps: f64, opts: &PowerIterOptions) -> Result<FdReport> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("step must be positive, got {eps}")));
    }
    let (report, grad) = grad_bound_with_report(filter, opts)?;
    let dims = filter.dims();
    let min_norm = report.norm(report.argmin);
    let radius = 2.0 * eps + 1e-9 * min_norm;
    let rivals: Vec<(Branch, Vec<f64>)> = Branch::ALL
        .into_iter()
        .filter(|&b| b != report.argmin && report.norm(b) - min_norm <= radius)
        .map(|b| (b, branch_gradient(dims, b, report.estimate(b))))
        .collect();

    let mut entries = Vec::with_capacity(dims.len());
    for (i, &x) in filter.values().iter().enumerate() {
        let plus = compute_bound(&filter.with_value(i, x + eps)?, opts)?.bound;
        let minus = compute_bound(&filter.with_value(i, x - eps)?, opts)?.bound;
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grad.grad.values()[i];
        let status = if !grad.gap_ok {
            EntryStatus::Nonsmooth
        } else if rivals.is_empty() {
            EntryStatus::Smooth
        } else if rivals.iter().all(|(_, g)| (g[i] - analytic).abs() <= 1e-9 * report.scale.max(1.0)) {
            EntryStatus::TieConsistent
        } else {
            EntryStatus::Nonsmooth
        };
        entries.push(FdEntry {
            index: i,
            analytic,
            numeric,
            status,
        });
    }

    let worst = entries
        .iter()
        .filter(|e| e.status != EntryStatus::Nonsmooth)
        .max_by(|a, b| a.abs_err().total_cmp(&b.abs_err()));
    Ok(FdReport {
        max_abs_err: worst.map_or(0.0, FdEntry::abs_err),
        worst_index: worst.map(|e| e.index),
        gap_ok: grad.gap_ok,
        branch: grad.branch,
        entries,
    })
}

/// Power-iteration states for the four reshapes, in `R, S, T, U` order.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStates(pub [PowerIterState; 4]);

impl WarmStates {
    pub fn random(dims: FilterDims, seed: u64) -> Self {
        Self(Branch::ALL.map(|b| {
            let (rows, cols) = b.shape(dims);
            PowerIterState::random(rows, cols, seed.wrapping_add(b.index() as u64))
        }))
    }

    pub fn from_report(report: &BoundReport) -> Self {
        Self(report.estimates.each_ref().map(PowerIterState::from_estimate))
    }
}

/// One warm power step on each reshape, then the bound and gradient implied
/// by the updated vectors.
pub fn warm_grad_step(filter: &Filter4D, states: &WarmStates) -> Result<(BoundReport, BoundGradient, WarmStates)> {
    let dims = filter.dims();
    let mut next = Vec::with_capacity(4);
    let mut estimates = Vec::with_capacity(4);
    for (branch, state) in Branch::ALL.into_iter().zip(&states.0) {
        let m = branch.build(filter);
        let (sigma, updated) = warm_step(&m, state)?;
        let mv = m.matvec(&updated.v);
        let residual = mv
            .iter()
            .zip(&updated.u)
            .map(|(a, b)| (a - sigma * b).powi(2))
            .sum::<f64>()
            .sqrt();
        estimates.push(SpectralEstimate {
            sigma,
            u: updated.u.clone(),
            v: updated.v.clone(),
            iterations: 1,
            converged: residual <= DEFAULT_TOL * sigma,
            residual,
        });
        next.push(updated);
    }
    let estimates: [SpectralEstimate<f64>; 4] = estimates.try_into().expect("four branches");
    let next: [PowerIterState; 4] = next.try_into().expect("four branches");
    let report = BoundReport::from_estimates(dims, estimates);
    let gap_opts = PowerIterOptions::default().with_tol(1e-6).with_max_iter(2_000);
    let grad = gradient_from_report(filter, &report, &gap_opts)?;
    Ok((report, grad, WarmStates(next)))
}
