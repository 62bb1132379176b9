//! Time integration drivers: a fixed-stepsize driver for convergence studies
//! and a self-starting variable-stepsize, variable-order (orders 1-5)
//! adaptive driver for all three families.
//!
//! The adaptive driver keeps its history in divided-difference form
//! ([`crate::history`]), evaluates variable-stepsize coefficients each
//! attempt ([`crate::coeffs`]), and performs exactly one linear solve per
//! attempted step for the linearly implicit families — the defining cost
//! property, asserted by the counter identity
//! `n_linear_solves == n_accepted + n_rejected`.
//!
//! Error control estimates the order-(q+1) local error for q in
//! {k-1, k, k+1} from fresh divided differences, accepts when the weighted
//! norm at q = k is at most one, and picks the next order by the largest
//! permissible stepsize. Stepsize changes are bounded to the ratio band
//! [0.5, 2] and clamped so past points stay inside the coefficient
//! admissibility region.

use crate::coeffs::{
    error_constant, fixed_coefficients, transformed_coefficients, variable_coefficients,
    CoeffsError, Family, StepsizeFractions, K_MAX,
};
use crate::history::DifferenceHistory;
use crate::linalg::{lu_factor, LinalgError, LinearOperator, LinearSolveConfig, LuFactors, Matrix, ShiftedSolver, SolveMode};
use crate::problems::{JacobianOperator, OdeProblem};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Stepsize safety factor applied to the optimal-step prediction.
pub const SAFETY: f64 = 0.9;

/// Weighted root-mean-square norm with weights `atol + rtol * |y_i|`.
pub fn wrms(v: &[f64], y: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = v.len();
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(vi, yi)| {
            let w = atol + rtol * yi.abs();
            (vi / w) * (vi / w)
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// Integration failures.
#[derive(Debug, Error)]
pub enum IntegrateError {
    /// The controller drove the stepsize below its floor.
    #[error("stepsize underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow {
        /// Time reached when the controller gave up.
        t: f64,
        /// Offending stepsize.
        h: f64,
    },
    /// Direct solves require a dense Jacobian the problem does not provide.
    #[error("direct linear solves need a dense Jacobian; use GMRES for matrix-free problems")]
    NeedsDenseJacobian,
    /// Linear algebra failure (singular matrix, GMRES stagnation).
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
    /// Coefficient evaluation failed.
    #[error(transparent)]
    Coeffs(#[from] CoeffsError),
    /// Invalid driver configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Options for the adaptive driver.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveOptions {
    /// Relative tolerance.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
    /// Initial stepsize; `None` selects it from the initial derivative.
    #[serde(default)]
    pub h0: Option<f64>,
    /// Stepsize floor (default 1e-14).
    #[serde(default)]
    pub h_min: Option<f64>,
    /// Stepsize ceiling (default unbounded).
    #[serde(default)]
    pub h_max: Option<f64>,
    /// Highest order the controller may select (default 5).
    #[serde(default)]
    pub k_max: Option<usize>,
    /// Linear-solve configuration.
    #[serde(default)]
    pub linear: LinearSolveConfig,
    /// For the W family: accepted steps between Jacobian refreshes
    /// (default 1 = fresh every step).
    #[serde(default)]
    pub jacobian_reuse: Option<usize>,
    /// Record a per-step trace.
    #[serde(default)]
    pub trace: bool,
}

impl AdaptiveOptions {
    /// Options with the given tolerances and defaults everywhere else.
    pub fn new(rtol: f64, atol: f64) -> Self {
        AdaptiveOptions {
            rtol,
            atol,
            h0: None,
            h_min: None,
            h_max: None,
            k_max: None,
            linear: LinearSolveConfig::default(),
            jacobian_reuse: None,
            trace: false,
        }
    }

    fn h_min(&self) -> f64 {
        self.h_min.unwrap_or(1e-14)
    }
    fn h_max(&self) -> f64 {
        self.h_max.unwrap_or(f64::INFINITY)
    }
    fn k_max(&self) -> usize {
        self.k_max.unwrap_or(K_MAX).clamp(1, K_MAX)
    }
    fn jacobian_reuse(&self) -> usize {
        self.jacobian_reuse.unwrap_or(1).max(1)
    }
}

/// Work counters of one integration run.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SolverStats {
    /// Accepted steps.
    pub n_accepted: usize,
    /// Rejected attempts (error test or nonlinear-solve failure).
    pub n_rejected: usize,
    /// Right-hand-side evaluations.
    pub n_f_evals: usize,
    /// Jacobian evaluations (dense builds or frozen-point refreshes).
    pub n_jac_evals: usize,
    /// Linear-system solves.
    pub n_linear_solves: usize,
    /// LU factorizations (direct mode; 0 under GMRES).
    pub n_factorizations: usize,
}

/// One row of the per-step trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceRecord {
    /// Target time of the attempt.
    pub t: f64,
    /// Stepsize used.
    pub h: f64,
    /// Method order of the attempt.
    pub k: usize,
    /// Weighted error-norm of the attempt (NaN when the nonlinear solve
    /// failed before an estimate existed).
    pub err_norm: f64,
    /// Whether the step was accepted.
    pub accepted: bool,
    /// Solution at `t` for accepted rows.
    pub y: Option<Vec<f64>>,
}

/// Result of an adaptive run.
#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    /// Final time (equals the requested endpoint).
    pub t_end: f64,
    /// Solution at `t_end`.
    pub y: Vec<f64>,
    /// Work counters.
    pub stats: SolverStats,
    /// Per-step records (empty unless tracing was requested).
    pub trace: Vec<TraceRecord>,
}

/// A complete run description, loadable from JSON.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    /// Problem registry name.
    pub problem: String,
    /// Problem parameters (JSON object, problem-specific).
    #[serde(default)]
    pub params: serde_json::Value,
    /// Method family.
    pub family: Family,
    /// Relative tolerance.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
    /// Optional initial stepsize.
    #[serde(default)]
    pub h0: Option<f64>,
    /// Optional stepsize floor.
    #[serde(default)]
    pub h_min: Option<f64>,
    /// Optional stepsize ceiling.
    #[serde(default)]
    pub h_max: Option<f64>,
    /// Optional order cap.
    #[serde(default)]
    pub k_max: Option<usize>,
    /// Linear-solve configuration.
    #[serde(default)]
    pub linear: LinearSolveConfig,
    /// W-family Jacobian reuse interval.
    #[serde(default)]
    pub jacobian_reuse: Option<usize>,
    /// Whether to record a trace.
    #[serde(default)]
    pub trace: bool,
}

impl RunConfig {
    /// Builds the problem instance and solver options this config describes.
    pub fn build(&self) -> Result<(OdeProblem, AdaptiveOptions), IntegrateError> {
        let problem =
            crate::problems::by_name(&self.problem, &self.params).map_err(IntegrateError::Config)?;
        let opts = AdaptiveOptions {
            rtol: self.rtol,
            atol: self.atol,
            h0: self.h0,
            h_min: self.h_min,
            h_max: self.h_max,
            k_max: self.k_max,
            linear: self.linear,
            jacobian_reuse: self.jacobian_reuse,
            trace: self.trace,
        };
        Ok((problem, opts))
    }
}

/// One work-precision measurement, serialized into WPD CSV files.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WorkPrecisionRecord {
    /// Method label (family name).
    pub method: String,
    /// Requested relative tolerance.
    pub tolerance: f64,
    /// Error of the final state against the reference.
    pub final_error: f64,
    /// Accepted steps.
    pub n_accepted: usize,
    /// Rejected attempts.
    pub n_rejected: usize,
    /// Right-hand-side evaluations.
    pub n_f_evals: usize,
    /// Jacobian evaluations.
    pub n_jac_evals: usize,
    /// Linear solves.
    pub n_linear_solves: usize,
    /// Wall-clock seconds spent inside the integrator.
    pub wall_seconds: f64,
}

/// Wraps a non-autonomous problem that lacks an analytic `f_t` into an
/// autonomous one by appending time as an extra state component with unit
/// derivative. The Jacobian gains a final column `f_t` computed by central
/// finite differences.
pub fn augment_with_time(p: &OdeProblem) -> OdeProblem {
    let dim = p.dim;
    let rhs_in = Arc::clone(&p.rhs);
    let jv_in = Arc::clone(&p.jac_vec);
    let rhs_fd = Arc::clone(&p.rhs);
    let dense_in = p.dense_jac.clone();
    let rhs_dense_fd = Arc::clone(&p.rhs);

    let ft_fd = move |tau: f64, y: &[f64], out: &mut [f64]| {
        let eps = 1e-6 * tau.abs().max(1.0);
        let mut fp = vec![0.0; dim];
        let mut fm = vec![0.0; dim];
        rhs_fd(tau + eps, y, &mut fp);
        rhs_fd(tau - eps, y, &mut fm);
        for i in 0..dim {
            out[i] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    };

    let mut y0 = p.y0.clone();
    y0.push(p.t_span.0);
    OdeProblem {
        name: p.name.clone(),
        dim: dim + 1,
        t_span: p.t_span,
        y0,
        autonomous: true,
        rhs: Arc::new(move |_t, z, out| {
            rhs_in(z[dim], &z[..dim], &mut out[..dim]);
            out[dim] = 1.0;
        }),
        jac_vec: Arc::new(move |_t, z, v, out| {
            let tau = z[dim];
            jv_in(tau, &z[..dim], &v[..dim], &mut out[..dim]);
            if v[dim] != 0.0 {
                let mut ft = vec![0.0; dim];
                ft_fd(tau, &z[..dim], &mut ft);
                for i in 0..dim {
                    out[i] += v[dim] * ft[i];
                }
            }
            out[dim] = 0.0;
        }),
        dense_jac: dense_in.map(|dj| {
            let f: Arc<dyn Fn(f64, &[f64]) -> Matrix + Send + Sync> =
                Arc::new(move |_t: f64, z: &[f64]| {
                    let tau = z[dim];
                    let inner = dj(tau, &z[..dim]);
                    let mut m = Matrix::zeros(dim + 1, dim + 1);
                    for i in 0..dim {
                        for j in 0..dim {
                            m[(i, j)] = inner[(i, j)];
                        }
                    }
                    let eps = 1e-6 * tau.abs().max(1.0);
                    let mut fp = vec![0.0; dim];
                    let mut fm = vec![0.0; dim];
                    rhs_dense_fd(tau + eps, &z[..dim], &mut fp);
                    rhs_dense_fd(tau - eps, &z[..dim], &mut fm);
                    for i in 0..dim {
                        m[(i, dim)] = (fp[i] - fm[i]) / (2.0 * eps);
                    }
                    m
                });
            f
        }),
        dfdt: None,
        exact: None,
    }
}

/// Classical explicit RK4 over an interval of length `dt`, split into
/// `n_sub` equal substeps. Used to start the fixed-step driver and as an
/// independent cross-check of reference solutions.
pub fn rk4_span(problem: &OdeProblem, t0: f64, y0: &[f64], dt: f64, n_sub: usize) -> Vec<f64> {
    let n = y0.len();
    let hs = dt / n_sub as f64;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..n_sub {
        (problem.rhs)(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * hs * k1[i];
        }
        (problem.rhs)(t + 0.5 * hs, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * hs * k2[i];
        }
        (problem.rhs)(t + 0.5 * hs, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hs * k3[i];
        }
        (problem.rhs)(t + hs, &tmp, &mut k4);
        for i in 0..n {
            y[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += hs;
    }
    y
}

/// Result of a fixed-stepsize run.
#[derive(Debug, Clone)]
pub struct FixedResult {
    /// Final time.
    pub t_end: f64,
    /// Solution at the final time.
    pub y: Vec<f64>,
}

/// Fixed-stepsize driver: `n_steps` uniform steps of size `h` from the
/// problem's initial state. The first `k - 1` values are produced by RK4
/// with substep `h / 100`; the remaining steps use the order-k method.
/// Requires `n_steps >= k` and a dense Jacobian (direct solves).
pub fn integrate_fixed(
    problem: &OdeProblem,
    family: Family,
    k: usize,
    h: f64,
    n_steps: usize,
) -> Result<FixedResult, IntegrateError> {
    if n_steps < k {
        return Err(IntegrateError::Config(format!(
            "need at least k = {k} steps, got {n_steps}"
        )));
    }
    if !problem.autonomous && problem.dfdt.is_none() {
        let aug = augment_with_time(problem);
        let mut res = integrate_fixed(&aug, family, k, h, n_steps)?;
        res.y.pop();
        return Ok(res);
    }
    let n = problem.dim;
    let t0 = problem.t_span.0;
    // Startup values by a fine explicit integrator.
    let mut ys: Vec<Vec<f64>> = vec![problem.y0.clone()];
    let mut ts: Vec<f64> = vec![t0];
    for j in 0..k - 1 {
        let y_next = rk4_span(problem, ts[j], &ys[j], h, 100);
        ys.push(y_next);
        ts.push(t0 + (j + 1) as f64 * h);
    }
    let mut fs: Vec<Vec<f64>> = ts
        .iter()
        .zip(&ys)
        .map(|(&t, y)| problem.eval_rhs(t, y))
        .collect();

    match family {
        Family::Limm | Family::LimmW => {
            let m = fixed_coefficients(family, k)?;
            // sum_i mu_i c_i on the uniform grid c = (-1, 0, 1, ..., k-1).
            let mu_dot_c: f64 = (0..=k).map(|i| m.mu[i] * (i as f64 - 1.0)).sum();
            for _ in 0..n_steps - (k - 1) {
                let tn = *ts.last().unwrap();
                let jac = problem.jacobian_at(tn, ys.last().unwrap());
                let dense = jac.dense().ok_or(IntegrateError::NeedsDenseJacobian)?;
                let mut r = vec![0.0; n];
                let mut gy = vec![0.0; n];
                for i in 0..k {
                    let yv = &ys[ys.len() - 1 - i];
                    let fv = &fs[fs.len() - 1 - i];
                    for c in 0..n {
                        r[c] += -m.alpha[i + 1] * yv[c] + h * m.beta[i] * fv[c];
                        gy[c] += m.mu[i + 1] * yv[c];
                    }
                }
                let jgy = dense.matvec(&gy);
                for c in 0..n {
                    r[c] += h * jgy[c];
                }
                if let Some(dfdt) = &problem.dfdt {
                    let mut ft = vec![0.0; n];
                    dfdt(tn, ys.last().unwrap(), &mut ft);
                    for c in 0..n {
                        r[c] += -h * h * mu_dot_c * ft[c];
                    }
                }
                let mut shifted = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        shifted[(i, j)] = -h * m.mu[0] * dense[(i, j)];
                    }
                    shifted[(i, i)] += 1.0;
                }
                let lu = lu_factor(&shifted)?;
                let y_new = lu.solve(&r);
                let t_new = tn + h;
                let f_new = problem.eval_rhs(t_new, &y_new);
                ys.push(y_new);
                ts.push(t_new);
                fs.push(f_new);
                if ys.len() > k + 1 {
                    ys.remove(0);
                    ts.remove(0);
                }
                if fs.len() > k {
                    fs.remove(0);
                }
            }
        }
        Family::Bdf => {
            let m = fixed_coefficients(Family::Bdf, k)?;
            for _ in 0..n_steps - (k - 1) {
                let tn = *ts.last().unwrap();
                let t_new = tn + h;
                let pred = ys.last().unwrap().clone();
                let jac = problem.jacobian_at(t_new, &pred);
                let dense = jac.dense().ok_or(IntegrateError::NeedsDenseJacobian)?;
                let mut shifted = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        shifted[(i, j)] = -h * m.beta_m1 * dense[(i, j)];
                    }
                    shifted[(i, i)] += 1.0;
                }
                let lu = lu_factor(&shifted)?;
                let mut hist = vec![0.0; n];
                for i in 0..k {
                    let yv = &ys[ys.len() - 1 - i];
                    for c in 0..n {
                        hist[c] += m.alpha[i + 1] * yv[c];
                    }
                }
                let mut y = pred;
                for _ in 0..7 {
                    let f = problem.eval_rhs(t_new, &y);
                    let g: Vec<f64> = (0..n)
                        .map(|c| y[c] + hist[c] - h * m.beta_m1 * f[c])
                        .collect();
                    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
                    let dy = lu.solve(&neg_g);
                    for c in 0..n {
                        y[c] += dy[c];
                    }
                    if wrms(&dy, &y, 1e-8, 1e-10) < 0.1 {
                        break;
                    }
                }
                ys.push(y);
                ts.push(t_new);
                if ys.len() > k + 1 {
                    ys.remove(0);
                    ts.remove(0);
                }
            }
        }
    }
    Ok(FixedResult {
        t_end: *ts.last().unwrap(),
        y: ys.last().unwrap().clone(),
    })
}

/// Estimates weighted local errors for candidate orders q in
/// {k-1, k, k+1}: `(q+1)! C_q h^{q+1} ||delta^{q+1} y||_wrms`, where `C_q`
/// is the variable-stepsize error constant at the current grid. Orders whose
/// difference data, history depth, or admissibility are lacking are skipped.
#[allow(clippy::too_many_arguments)]
pub fn probe_errors(
    family: Family,
    k: usize,
    k_max: usize,
    h: f64,
    t: f64,
    times: &[f64],
    fresh: &[Vec<f64>],
    y_weights_ref: &[f64],
    rtol: f64,
    atol: f64,
) -> BTreeMap<usize, f64> {
    let mut errs = BTreeMap::new();
    for q in [k.wrapping_sub(1), k, k + 1] {
        if q < 1 || q > k_max {
            continue;
        }
        if q + 1 >= fresh.len() {
            continue;
        }
        if q >= 2 && times.len() < q {
            continue;
        }
        let cq: Vec<f64> = (1..q).map(|i| (t - times[i]) / h).collect();
        if cq
            .iter()
            .enumerate()
            .any(|(j, &c)| (c - (j + 1) as f64).abs() >= 0.5 * (j + 1) as f64)
        {
            continue;
        }
        let fractions = if q >= 2 {
            match StepsizeFractions::from_positive(&cq) {
                Ok(f) => f,
                Err(_) => continue,
            }
        } else {
            StepsizeFractions::uniform(1)
        };
        let mq = match variable_coefficients(family, q, &fractions) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let cq_const = error_constant(&mq, &fractions);
        let fact: f64 = (1..=q as u64 + 1).product::<u64>() as f64;
        let est = fact * cq_const * h.powi(q as i32 + 1) * wrms(&fresh[q + 1], y_weights_ref, rtol, atol);
        errs.insert(q, est);
    }
    errs
}

/// Per-family Jacobian refresh state.
struct JacobianState {
    op: Option<JacobianOperator>,
    version: u64,
    steps_since_refresh: usize,
    h_at_refresh: f64,
    k_at_refresh: usize,
    bdf_lu: Option<LuFactors>,
}

impl JacobianState {
    fn new() -> Self {
        JacobianState {
            op: None,
            version: 0,
            steps_since_refresh: 0,
            h_at_refresh: 0.0,
            k_at_refresh: 0,
            bdf_lu: None,
        }
    }
}

/// Integrates the problem over its own `t_span` from its own initial state.
pub fn integrate_adaptive(
    problem: &OdeProblem,
    family: Family,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveResult, IntegrateError> {
    let (t0, tf) = problem.t_span;
    integrate_adaptive_from(problem, family, opts, t0, tf, &problem.y0.clone())
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `tf` adaptively.
pub fn integrate_adaptive_from(
    problem: &OdeProblem,
    family: Family,
    opts: &AdaptiveOptions,
    t0: f64,
    tf: f64,
    y0: &[f64],
) -> Result<AdaptiveResult, IntegrateError> {
    if !(tf > t0) {
        return Err(IntegrateError::Config(format!(
            "need tf > t0, got [{t0}, {tf}]"
        )));
    }
    if !problem.autonomous && problem.dfdt.is_none() {
        // No analytic f_t: integrate the time-augmented autonomous system and
        // strip the appended clock component from every reported state.
        let aug = augment_with_time(problem);
        let mut z0 = y0.to_vec();
        z0.push(t0);
        let mut res = integrate_adaptive_from(&aug, family, opts, t0, tf, &z0)?;
        res.y.pop();
        for rec in &mut res.trace {
            if let Some(y) = &mut rec.y {
                y.pop();
            }
        }
        return Ok(res);
    }

    let n = problem.dim;
    let rtol = opts.rtol;
    let atol = opts.atol;
    let h_min = opts.h_min();
    let h_max = opts.h_max();
    if h_min > h_max {
        return Err(IntegrateError::Config(format!(
            "h_min = {h_min:.3e} exceeds h_max = {h_max:.3e}"
        )));
    }
    let k_max = opts.k_max();
    let want_dense = opts.linear.mode == SolveMode::Direct;
    if want_dense && problem.dense_jac.is_none() {
        return Err(IntegrateError::NeedsDenseJacobian);
    }

    let mut stats = SolverStats::default();
    let mut trace: Vec<TraceRecord> = Vec::new();

    let mut y = y0.to_vec();
    let mut t = t0;
    let f0 = problem.eval_rhs(t0, &y);
    stats.n_f_evals += 1;
    let mut h = match opts.h0 {
        Some(h0) if h0 > 0.0 => h0,
        _ => {
            let d = wrms(&f0, &y, rtol, atol);
            let by_slope = if d > 0.0 { 0.5 / d } else { f64::INFINITY };
            ((tf - t0) / 100.0).min(by_slope)
        }
    };
    h = h.min(h_max).max(h_min);

    let mut k = 1usize;
    let mut hist = DifferenceHistory::new_bootstrap(t0, y.clone(), f0);
    let mut steps_at_h = 0usize;
    let mut steps_at_k = 0usize;
    let mut consec_rej = 0usize;
    let mut jac = JacobianState::new();
    let mut solver = ShiftedSolver::new(opts.linear);

    let t_edge = |tf: f64| 1e-12 * tf.abs().max(1.0);

    while t < tf - t_edge(tf) {
        let truncated = if t + h >= tf - t_edge(tf) {
            h = tf - t;
            true
        } else {
            false
        };

        // Keep every past point inside the admissibility band of the k-step
        // coefficient formulas; shed order if the band excludes h entirely.
        while k >= 2 {
            let mut h_lo = f64::NEG_INFINITY;
            let mut h_hi = f64::INFINITY;
            for i in 1..k {
                let d = t - hist.times[i];
                h_lo = h_lo.max(d / (1.45 * i as f64));
                h_hi = h_hi.min(d / (0.55 * i as f64));
            }
            if truncated {
                if h < h_lo {
                    // Forced small final step: a lower order has a wider band.
                    k -= 1;
                    steps_at_k = 0;
                    continue;
                }
                h = h.min(h_hi);
                break;
            }
            let hc = h.clamp(h_lo, h_hi);
            if hc < h {
                h = hc;
                break;
            }
            if h < h_lo {
                k -= 1;
                steps_at_k = 0;
                continue;
            }
            h = hc;
            break;
        }

        let c_positive: Vec<f64> = (1..k).map(|i| (t - hist.times[i]) / h).collect();
        let fractions = StepsizeFractions::from_positive(&c_positive)?;

        // Jacobian refresh policy.
        match family {
            Family::Limm => {
                jac.op = Some(problem.jacobian_operator(t, &y, want_dense));
                jac.version += 1;
                stats.n_jac_evals += 1;
            }
            Family::LimmW => {
                if jac.op.is_none() || jac.steps_since_refresh >= opts.jacobian_reuse() {
                    jac.op = Some(problem.jacobian_operator(t, &y, want_dense));
                    jac.version += 1;
                    jac.steps_since_refresh = 0;
                    stats.n_jac_evals += 1;
                }
            }
            Family::Bdf => {
                let stale = match jac.op {
                    None => true,
                    Some(_) => {
                        (h - jac.h_at_refresh).abs() > 0.2 * jac.h_at_refresh
                            || k != jac.k_at_refresh
                    }
                };
                if stale {
                    jac.op = Some(problem.jacobian_operator(t, &y, want_dense));
                    jac.version += 1;
                    stats.n_jac_evals += 1;
                    jac.h_at_refresh = h;
                    jac.k_at_refresh = k;
                    jac.bdf_lu = None; // rebuilt below against current h
                }
            }
        }
        let jac_op = jac.op.as_ref().expect("jacobian installed above");

        let t_new = t + h;
        let attempt = match family {
            Family::Bdf => {
                let m = variable_coefficients(Family::Bdf, k, &fractions)?;
                // Factor (I - h beta_{-1} J) lazily at refresh points.
                if want_dense && jac.bdf_lu.is_none() {
                    let dense = jac_op.dense().ok_or(IntegrateError::NeedsDenseJacobian)?;
                    let mut shifted = Matrix::zeros(n, n);
                    let scale = h * m.beta_m1;
                    for i in 0..n {
                        for jcol in 0..n {
                            shifted[(i, jcol)] = -scale * dense[(i, jcol)];
                        }
                        shifted[(i, i)] += 1.0;
                    }
                    jac.bdf_lu = Some(lu_factor(&shifted)?);
                    stats.n_factorizations += 1;
                }
                let pred = hist.newton_eval(t_new);
                // Raw past values y_{n-i} recovered exactly from Newton form.
                let mut hist_comb = vec![0.0; n];
                for i in 0..k {
                    let yraw = hist.newton_eval(hist.times[i]);
                    for c in 0..n {
                        hist_comb[c] += m.alpha[i + 1] * yraw[c];
                    }
                }
                let mut ycur = pred.clone();
                let mut converged = false;
                for _ in 0..7 {
                    let f = problem.eval_rhs(t_new, &ycur);
                    stats.n_f_evals += 1;
                    let neg_g: Vec<f64> = (0..n)
                        .map(|c| -(ycur[c] + hist_comb[c] - h * m.beta_m1 * f[c]))
                        .collect();
                    let dy = if let Some(lu) = &jac.bdf_lu {
                        stats.n_linear_solves += 1;
                        lu.solve(&neg_g)
                    } else {
                        let zeros = vec![0.0; n];
                        stats.n_linear_solves += 1;
                        solver.solve(jac_op, jac.version, h, m.beta_m1, &neg_g, &zeros)?
                    };
                    for c in 0..n {
                        ycur[c] += dy[c];
                    }
                    if wrms(&dy, &y, rtol, atol) <= 0.1 {
                        converged = true;
                        break;
                    }
                }
                if converged {
                    Some(ycur)
                } else {
                    None
                }
            }
            Family::Limm | Family::LimmW => {
                let m = variable_coefficients(family, k, &fractions)?;
                let (ah, bh, mh) = transformed_coefficients(&m, &fractions);
                let mut r = vec![0.0; n];
                let mut gy = vec![0.0; n];
                let mut hp = 1.0;
                for i in 0..k {
                    if i < hist.ydiffs.len() {
                        for c in 0..n {
                            r[c] += hp * (-ah[i] * hist.ydiffs[i][c]);
                            gy[c] += hp * mh[i] * hist.ydiffs[i][c];
                        }
                    }
                    if i < hist.fdiffs.len() {
                        for c in 0..n {
                            r[c] += h * hp * bh[i] * hist.fdiffs[i][c];
                        }
                    }
                    hp *= h;
                }
                let mut jgy = vec![0.0; n];
                jac_op.apply(&gy, &mut jgy);
                for c in 0..n {
                    r[c] += h * jgy[c];
                }
                if let Some(dfdt) = &problem.dfdt {
                    let mu_dot_c: f64 = (0..=k)
                        .map(|i| m.mu[i] * fractions.frac(i as isize - 1))
                        .sum();
                    let mut ft = vec![0.0; n];
                    dfdt(t, &y, &mut ft);
                    for c in 0..n {
                        r[c] += -h * h * mu_dot_c * ft[c];
                    }
                }
                let pred = hist.newton_eval(t_new);
                stats.n_linear_solves += 1;
                match solver.solve(jac_op, jac.version, h, m.mu[0], &r, &pred) {
                    Ok(ynew) => Some(ynew),
                    Err(LinalgError::NoConvergence { .. }) => None,
                    Err(e) => return Err(e.into()),
                }
            }
        };

        let Some(y_new) = attempt else {
            // Nonlinear or iterative solve failed: reject hard.
            stats.n_rejected += 1;
            consec_rej += 1;
            if opts.trace {
                trace.push(TraceRecord {
                    t: t_new,
                    h,
                    k,
                    err_norm: f64::NAN,
                    accepted: false,
                    y: None,
                });
            }
            jac.bdf_lu = None;
            jac.op = if family == Family::Bdf { None } else { jac.op.take() };
            h *= 0.25;
            if consec_rej >= 3 && k > 1 {
                k -= 1;
                steps_at_k = 0;
                consec_rej = 0;
            }
            if h < h_min {
                return Err(IntegrateError::StepSizeUnderflow { t, h });
            }
            continue;
        };

        // Local error estimation from fresh divided differences.
        let fresh = hist.fresh_differences(t_new, &y_new, k + 1);
        let errs = probe_errors(
            family, k, k_max, h, t, &hist.times, &fresh, &y, rtol, atol,
        );
        let err_k = *errs.get(&k).expect("estimate at the working order");

        if err_k <= 1.0 {
            stats.n_accepted += 1;
            consec_rej = 0;
            let f_new = problem.eval_rhs(t_new, &y_new);
            stats.n_f_evals += 1;

            // Optimal stepsizes per candidate order; largest wins, with ties
            // resolved toward the lowest order.
            let hopts: BTreeMap<usize, f64> = errs
                .iter()
                .map(|(&q, &e)| (q, h * e.max(1e-300).powf(-1.0 / (q as f64 + 1.0))))
                .collect();
            let mut k_next = k;
            if steps_at_k + 1 >= k + 1 {
                let best = hopts
                    .values()
                    .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
                for (&q, &hq) in hopts.iter() {
                    if hq >= best * (1.0 - 1e-12) {
                        k_next = q;
                        break;
                    }
                }
            }

            let mut prop = SAFETY * hopts[&k];
            prop = prop.clamp(0.5 * h, 2.0 * h);
            if prop > h && steps_at_h + 1 < k {
                prop = h;
            }
            prop = prop.clamp(h_min, h_max);

            hist.accept(t_new, y_new.clone(), f_new, &fresh, k_next);

            if k_next != k {
                steps_at_k = 0;
            } else {
                steps_at_k += 1;
            }
            if (prop - h).abs() > 1e-15 * h {
                steps_at_h = 0;
            } else {
                steps_at_h += 1;
            }
            if opts.trace {
                trace.push(TraceRecord {
                    t: t_new,
                    h,
                    k,
                    err_norm: err_k,
                    accepted: true,
                    y: Some(y_new.clone()),
                });
            }
            k = k_next;
            t = t_new;
            y = y_new;
            if family == Family::LimmW {
                jac.steps_since_refresh += 1;
            }
            h = prop;
        } else {
            stats.n_rejected += 1;
            consec_rej += 1;
            if opts.trace {
                trace.push(TraceRecord {
                    t: t_new,
                    h,
                    k,
                    err_norm: err_k,
                    accepted: false,
                    y: None,
                });
            }
            let mut shrink = (SAFETY * err_k.powf(-1.0 / (k as f64 + 1.0))).max(0.1);
            if k >= 2 {
                shrink = shrink.max(0.5);
            }
            h *= shrink;
            if consec_rej >= 3 && k > 1 {
                k -= 1;
                steps_at_k = 0;
                consec_rej = 0;
            }
            if h < h_min {
                return Err(IntegrateError::StepSizeUnderflow { t, h });
            }
        }
    }

    stats.n_factorizations += solver.n_factorizations as usize;
    Ok(AdaptiveResult {
        t_end: t,
        y,
        stats,
        trace,
    })
}

/// Least-squares convergence slope of `error ~ h^p` in log2-log2 space,
/// robust to rounding floors and pre-asymptotic coarse steps: errors below
/// `1e-11 * max(1, reference_scale)` are dropped, then the largest-h point
/// is shed while (at least 4 points remain and) its pairwise slope deviates
/// from the median pairwise slope by more than 0.1.
pub fn fit_order_slope(hs: &[f64], errors: &[f64], reference_scale: f64) -> f64 {
    let floor = 1e-11 * reference_scale.max(1.0);
    let mut pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e.is_finite() && e >= floor)
        .map(|(&h, &e)| (h.log2(), e.log2()))
        .collect();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap()); // largest h first
    loop {
        if pts.len() < 4 {
            break;
        }
        let slopes: Vec<f64> = pts
            .windows(2)
            .map(|w| (w[0].1 - w[1].1) / (w[0].0 - w[1].0))
            .collect();
        let mut sorted = slopes.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        if (slopes[0] - median).abs() > 0.1 {
            pts.remove(0);
        } else {
            break;
        }
    }
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Root-mean-square difference between two states.
pub fn rms_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / n as f64).sqrt()
}
