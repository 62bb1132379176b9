//! Run-level drivers shared by the command-line binary and the test suite:
//! cached reference solutions, work-precision sweeps, fixed-step convergence
//! studies, coefficient verification reports, and the stability-matrix
//! product diagnostic over recorded runs.

use crate::coeffs::{
    condition_residuals, fixed_coefficients, fractions_from_times, random_admissible_fractions,
    variable_coefficients, CoeffsError, Family, StepsizeFractions, K_MAX,
};
use crate::exec::{map_items, ExecMode};
use crate::integrate::{
    fit_order_slope, integrate_adaptive, integrate_fixed, rk4_span, AdaptiveOptions,
    IntegrateError, RunConfig, WorkPrecisionRecord,
};
use crate::linalg::{LinearOperator, LinearSolveConfig, SolveMode};
use crate::problems::OdeProblem;
use crate::stability::stability_matrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

/// 64-bit FNV-1a hash, used for content-addressed reference-cache filenames.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Relative Euclidean distance `|y - reference| / |reference|`, falling back
/// to the absolute distance for a zero reference.
pub fn relative_l2(y: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = y
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom: f64 = reference.iter().map(|a| a * a).sum::<f64>().sqrt();
    if denom > 0.0 {
        diff / denom
    } else {
        diff
    }
}

/// A high-accuracy endpoint state with its independent cross-check.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReferenceSolution {
    /// Endpoint time of the problem's integration window.
    pub t_end: f64,
    /// Reference state at `t_end` (tight-tolerance adaptive run).
    pub y: Vec<f64>,
    /// Relative distance between the adaptive reference and an independent
    /// small-step RK4 run over the same window.
    pub cross_check_error: f64,
}

/// Estimates a spectral bound of the Jacobian at the initial state by power
/// iteration on the Jacobian-vector product.
fn jacobian_spectral_bound(problem: &OdeProblem) -> f64 {
    let (t0, _) = problem.t_span;
    let op = problem.jacobian_operator(t0, &problem.y0, false);
    let n = problem.dim;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (1.0 + i as f64).sin()).collect();
    let norm0: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm0;
    }
    let mut rho = 0.0;
    let mut w = vec![0.0; n];
    for _ in 0..30 {
        op.apply(&v, &mut w);
        rho = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rho < 1e-12 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = w[i] / rho;
        }
    }
    rho
}

/// Computes a reference endpoint state for the problem's integration window
/// from two independent integrations: an adaptive run at rtol = atol = 1e-12
/// and a fixed small-step RK4 run whose stepsize comes from a power-iteration
/// bound on the initial Jacobian spectrum. The RK4 run is repeated at half
/// the stepsize; when the two RK4 states agree with each other much more
/// tightly than they agree with the adaptive state, the disagreement is
/// attributable to the adaptive run and the RK4 state is returned, and vice
/// versa. Either way the recorded cross-check distance is the gap between
/// the two independent integrations.
pub fn reference_solution(
    problem: &OdeProblem,
    linear: LinearSolveConfig,
) -> Result<ReferenceSolution, IntegrateError> {
    let mut opts = AdaptiveOptions::new(1e-12, 1e-12);
    opts.linear = linear;
    if matches!(linear.mode, SolveMode::Gmres) {
        // The inner solves must out-resolve the integration tolerance.
        opts.linear.gmres_tol = linear.gmres_tol.min(1e-13);
        opts.linear.max_iterations = linear.max_iterations.max(200);
    }
    let result = integrate_adaptive(problem, Family::Limm, &opts)?;

    let (t0, tf) = problem.t_span;
    let span = tf - t0;
    let rho = jacobian_spectral_bound(problem);
    let h_stable = if rho > 0.0 { 0.5 / rho } else { f64::INFINITY };
    let n_steps = ((span / h_stable).ceil().max(1000.0) as usize).min(1_000_000);
    let rk_coarse = rk4_span(problem, t0, &problem.y0, span, n_steps);
    let rk_fine = rk4_span(problem, t0, &problem.y0, span, 2 * n_steps);
    let rk_self = relative_l2(&rk_coarse, &rk_fine);
    let cross = relative_l2(&result.y, &rk_fine);

    let y = if rk_self.is_finite() && cross.is_finite() && rk_self < 0.1 * cross {
        rk_fine
    } else {
        result.y
    };
    Ok(ReferenceSolution {
        t_end: result.t_end,
        y,
        cross_check_error: cross,
    })
}

/// Content-addressed cache filename stem for a problem's reference solution.
pub fn reference_cache_key(name: &str, params: &serde_json::Value, t_span: (f64, f64)) -> String {
    let text = format!(
        "{}|{}|{:.17e}|{:.17e}|v1",
        name,
        serde_json::to_string(params).unwrap_or_default(),
        t_span.0,
        t_span.1
    );
    format!("{:016x}", fnv1a(text.as_bytes()))
}

/// Returns the problem's reference solution, loading it from
/// `cache_dir/ref-<hash>.json` when present and computing + storing it
/// otherwise. Cache writes are best-effort.
pub fn cached_reference(
    cache_dir: &Path,
    problem: &OdeProblem,
    params: &serde_json::Value,
    linear: LinearSolveConfig,
) -> Result<ReferenceSolution, IntegrateError> {
    let key = reference_cache_key(&problem.name, params, problem.t_span);
    let path = cache_dir.join(format!("ref-{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(cached) = serde_json::from_str::<ReferenceSolution>(&text) {
            if cached.y.len() == problem.dim {
                return Ok(cached);
            }
        }
    }
    let fresh = reference_solution(problem, linear)?;
    if std::fs::create_dir_all(cache_dir).is_ok() {
        if let Ok(text) = serde_json::to_string(&fresh) {
            let _ = std::fs::write(&path, text);
        }
    }
    Ok(fresh)
}

/// Runs a work-precision sweep over the cross product of `families` and
/// `tolerances` on the problem described by `base` (its `family`/`rtol`/`atol`
/// fields are overridden per cell; each cell runs at rtol = tol,
/// atol = tol / 100, and an iterative-solve tolerance no looser than
/// 0.1 * tol). Cells run independently — in parallel when `mode` requests
/// it — and a failed cell is recorded with a NaN error instead of aborting
/// the sweep. Wall time covers only the integrate call.
pub fn work_precision_sweep(
    base: &RunConfig,
    families: &[Family],
    tolerances: &[f64],
    reference: &[f64],
    mode: ExecMode,
) -> Vec<WorkPrecisionRecord> {
    let cells: Vec<(Family, f64)> = families
        .iter()
        .flat_map(|&f| tolerances.iter().map(move |&tol| (f, tol)))
        .collect();
    map_items(mode, cells, |(family, tol)| {
        let mut cfg = base.clone();
        cfg.family = family;
        cfg.rtol = tol;
        cfg.atol = tol / 100.0;
        cfg.linear.gmres_tol = base.linear.gmres_tol.min(0.1 * tol);
        cfg.trace = false;
        let built = cfg.build();
        let (problem, opts) = match built {
            Ok(pair) => pair,
            Err(_) => {
                return WorkPrecisionRecord {
                    method: family.to_string(),
                    tolerance: tol,
                    final_error: f64::NAN,
                    n_accepted: 0,
                    n_rejected: 0,
                    n_f_evals: 0,
                    n_jac_evals: 0,
                    n_linear_solves: 0,
                    wall_seconds: 0.0,
                }
            }
        };
        let start = Instant::now();
        let outcome = integrate_adaptive(&problem, family, &opts);
        let wall = start.elapsed().as_secs_f64();
        match outcome {
            Ok(res) => WorkPrecisionRecord {
                method: family.to_string(),
                tolerance: tol,
                final_error: relative_l2(&res.y, reference),
                n_accepted: res.stats.n_accepted,
                n_rejected: res.stats.n_rejected,
                n_f_evals: res.stats.n_f_evals,
                n_jac_evals: res.stats.n_jac_evals,
                n_linear_solves: res.stats.n_linear_solves,
                wall_seconds: wall,
            },
            Err(_) => WorkPrecisionRecord {
                method: family.to_string(),
                tolerance: tol,
                final_error: f64::NAN,
                n_accepted: 0,
                n_rejected: 0,
                n_f_evals: 0,
                n_jac_evals: 0,
                n_linear_solves: 0,
                wall_seconds: wall,
            },
        }
    })
}

/// One fixed-step convergence measurement.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    /// Method order.
    pub k: usize,
    /// Stepsize.
    pub h: f64,
    /// Relative endpoint error against the reference (NaN when the run
    /// failed).
    pub error: f64,
}

/// Fixed-step convergence study over `orders x hs` on the problem's window.
/// Failed cells are recorded with NaN errors.
pub fn convergence_study(
    problem: &OdeProblem,
    family: Family,
    orders: &[usize],
    hs: &[f64],
    reference: &[f64],
    mode: ExecMode,
) -> Vec<ConvergenceRow> {
    let (t0, tf) = problem.t_span;
    let span = tf - t0;
    let cells: Vec<(usize, f64)> = orders
        .iter()
        .flat_map(|&k| hs.iter().map(move |&h| (k, h)))
        .collect();
    map_items(mode, cells, |(k, h)| {
        let n_steps = (span / h).round().max(1.0) as usize;
        let error = match integrate_fixed(problem, family, k, h, n_steps) {
            Ok(res) => relative_l2(&res.y, reference),
            Err(_) => f64::NAN,
        };
        ConvergenceRow { k, h, error }
    })
}

/// Least-squares convergence slope per order from study rows.
pub fn convergence_slopes(rows: &[ConvergenceRow], orders: &[usize]) -> Vec<(usize, f64)> {
    orders
        .iter()
        .map(|&k| {
            let hs: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.h).collect();
            let errors: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.error).collect();
            (k, fit_order_slope(&hs, &errors, 1.0))
        })
        .collect()
}

/// One row of the coefficient-verification table (uniform-grid residuals).
#[derive(Debug, Clone, Copy)]
pub struct VerifyRow {
    /// Method family.
    pub family: Family,
    /// Step number.
    pub k: usize,
    /// Moment power of the condition (0 = consistency sums).
    pub ell: u32,
    /// Residual of the traditional part of the condition.
    pub rho_a: f64,
    /// Residual of the mu-moment part (0 where the family has none).
    pub rho_b: f64,
}

/// The largest residual seen during verification and where it occurred.
#[derive(Debug, Clone)]
pub struct WorstResidual {
    /// Method family.
    pub family: Family,
    /// Step number.
    pub k: usize,
    /// Moment power of the offending condition.
    pub ell: u32,
    /// Positive stepsize fractions `c_1..c_{k-1}` at which it occurred.
    pub fractions: Vec<f64>,
    /// The residual magnitude.
    pub residual: f64,
}

/// Outcome of a coefficient-verification pass.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Uniform-grid condition residuals for every checked method.
    pub rows: Vec<VerifyRow>,
    /// Largest residual over the uniform grid and all random draws.
    pub max_residual: f64,
    /// Where the largest residual occurred.
    pub worst: Option<WorstResidual>,
}

/// Checks the order conditions of every selected method on the uniform grid
/// (the tabulated coefficients) and at `n_random` seeded random admissible
/// stepsize-fraction draws (coefficients from the linear solver).
pub fn verify_methods(
    family_filter: Option<Family>,
    k_filter: Option<usize>,
    n_random: usize,
    seed: u64,
) -> Result<VerifyReport, CoeffsError> {
    let families: Vec<Family> = match family_filter {
        Some(f) => vec![f],
        None => vec![Family::Limm, Family::LimmW, Family::Bdf],
    };
    let ks: Vec<usize> = match k_filter {
        Some(k) => vec![k],
        None => (1..=K_MAX).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut worst: Option<WorstResidual> = None;
    let mut max_residual = 0.0_f64;
    let consider = |family: Family,
                        k: usize,
                        ell: u32,
                        value: f64,
                        c: &StepsizeFractions,
                        worst: &mut Option<WorstResidual>,
                        max_residual: &mut f64| {
        if value.abs() > *max_residual {
            *max_residual = value.abs();
            *worst = Some(WorstResidual {
                family,
                k,
                ell,
                fractions: c.positive()[..k.saturating_sub(1)].to_vec(),
                residual: value.abs(),
            });
        }
    };
    for &family in &families {
        for &k in &ks {
            let uniform = StepsizeFractions::uniform(k);
            let table = fixed_coefficients(family, k)?;
            for row in condition_residuals(&table, &uniform) {
                rows.push(VerifyRow {
                    family,
                    k,
                    ell: row.ell,
                    rho_a: row.rho_a,
                    rho_b: row.rho_b,
                });
                consider(family, k, row.ell, row.rho_a, &uniform, &mut worst, &mut max_residual);
                consider(family, k, row.ell, row.rho_b, &uniform, &mut worst, &mut max_residual);
            }
            for _ in 0..n_random {
                let c = random_admissible_fractions(&mut rng, k);
                let m = variable_coefficients(family, k, &c)?;
                for row in condition_residuals(&m, &c) {
                    consider(family, k, row.ell, row.rho_a, &c, &mut worst, &mut max_residual);
                    consider(family, k, row.ell, row.rho_b, &c, &mut worst, &mut max_residual);
                }
            }
        }
    }
    Ok(VerifyReport {
        rows,
        max_residual,
        worst,
    })
}

/// One accepted step of a recorded run: the time reached, the stepsize used,
/// and the method order of the step.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    /// Time at the end of the step.
    pub t: f64,
    /// Stepsize of the step.
    pub h: f64,
    /// Method order used for the step.
    pub k: usize,
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i][l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

/// Spectral (2-)norm of a small square matrix by power iteration on the
/// Frobenius-normalized Gram matrix.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let m = a.len();
    let fro: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if fro == 0.0 || !fro.is_finite() {
        return fro;
    }
    let s = 1.0 / fro;
    let mut v: Vec<f64> = (0..m).map(|j| 1.0 + 0.01 * j as f64).collect();
    let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= vn;
    }
    let mut lambda = 0.0;
    let mut w = vec![0.0; m];
    let mut u = vec![0.0; m];
    for _ in 0..200 {
        for i in 0..m {
            w[i] = a[i].iter().zip(&v).map(|(x, y)| x * s * y).sum();
        }
        for j in 0..m {
            u[j] = (0..m).map(|i| a[i][j] * s * w[i]).sum();
        }
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        lambda = norm;
        for j in 0..m {
            v[j] = u[j] / norm;
        }
    }
    fro * lambda.sqrt()
}

/// Multiplies the per-step stability matrices of a recorded run for the
/// scalar Jacobian `J = lambda` and returns the running spectral norm of the
/// product after each accepted step. Steps of different orders are embedded
/// in the largest companion dimension of the run with zero trailing first-row
/// entries, so the product is well defined across order switches.
pub fn product_norm_sequence(
    steps: &[TraceStep],
    family: Family,
    lambda: f64,
) -> Result<Vec<f64>, CoeffsError> {
    if steps.is_empty() {
        return Ok(Vec::new());
    }
    let m_dim = steps.iter().map(|s| s.k).max().unwrap();
    if m_dim == 0 || m_dim > K_MAX {
        return Err(CoeffsError::InvalidHistory);
    }
    // times[j] = state time before step j; times[j + 1] = after.
    let mut times = Vec::with_capacity(steps.len() + 1);
    times.push(steps[0].t - steps[0].h);
    for s in steps {
        times.push(s.t);
    }
    let mut product: Vec<Vec<f64>> = (0..m_dim)
        .map(|i| (0..m_dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut norms = Vec::with_capacity(steps.len());
    for (j, s) in steps.iter().enumerate() {
        let k = s.k;
        if k == 0 || k > j + 1 || !(s.h > 0.0) {
            return Err(CoeffsError::InvalidHistory);
        }
        let history: Vec<f64> = (0..k).map(|i| times[j - i]).collect();
        let c = fractions_from_times(&history, s.h)?;
        let m = variable_coefficients(family, k, &c)?;
        let sm = stability_matrix(&m, Complex64::new(s.h * lambda, 0.0));
        let mut factor = vec![vec![0.0; m_dim]; m_dim];
        for (i, entry) in sm[0].iter().enumerate() {
            factor[0][i] = entry.re;
        }
        for r in 1..m_dim {
            factor[r][r - 1] = 1.0;
        }
        product = matmul(&factor, &product);
        norms.push(spectral_norm(&product));
    }
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::dahlquist;

    #[test]
    fn fnv_matches_known_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn spectral_norm_matches_hand_values() {
        // Diagonal matrix: norm = max |entry|.
        let a = vec![vec![3.0, 0.0], vec![0.0, -7.0]];
        assert!((spectral_norm(&a) - 7.0).abs() < 1e-10);
        // Rank-one: norm = |u| |v| for uv^T.
        let b = vec![vec![2.0, 4.0], vec![1.0, 2.0]];
        let expect = (5.0_f64).sqrt() * (5.0_f64).sqrt();
        assert!((spectral_norm(&b) - expect).abs() < 1e-9);
        assert_eq!(spectral_norm(&vec![vec![0.0; 2]; 2]), 0.0);
    }

    #[test]
    fn scalar_product_decays_for_order_one() {
        // Uniform order-1 steps at lambda = -1: each factor is 1/(1+h).
        let h = 0.1;
        let steps: Vec<TraceStep> = (1..=50)
            .map(|j| TraceStep {
                t: j as f64 * h,
                h,
                k: 1,
            })
            .collect();
        let norms = product_norm_sequence(&steps, Family::Limm, -1.0).unwrap();
        let factor = 1.0 / (1.0 + h);
        for (j, n) in norms.iter().enumerate() {
            let expect = factor.powi(j as i32 + 1);
            assert!((n - expect).abs() < 1e-12 * expect.max(1e-30), "step {j}");
        }
    }

    #[test]
    fn neutral_product_stays_unit_at_zero() {
        let h = 0.25;
        let steps: Vec<TraceStep> = (1..=40)
            .map(|j| TraceStep {
                t: j as f64 * h,
                h,
                k: 1,
            })
            .collect();
        let norms = product_norm_sequence(&steps, Family::LimmW, 0.0).unwrap();
        for n in norms {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn order_ramp_product_bounded_for_stiff_scalar() {
        // Self-starting ramp 1..5 then alternating stepsize ratios.
        let mut steps = Vec::new();
        let mut t = 0.0;
        let mut h = 0.01;
        for j in 0..400 {
            let k = (j + 1).min(5);
            h = if j % 2 == 0 { h * 1.3 } else { h / 1.25 };
            t += h;
            steps.push(TraceStep { t, h, k });
        }
        let norms = product_norm_sequence(&steps, Family::Limm, -10.0).unwrap();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!(max < 100.0, "running norm {max}");
        assert!(*norms.last().unwrap() < 1e-3);
    }

    #[test]
    fn verify_report_covers_all_methods_and_passes() {
        let report = verify_methods(None, None, 25, 7).unwrap();
        assert!(report.max_residual <= 1e-8, "max {:.3e}", report.max_residual);
        // 3 families x 5 orders, each with a consistency row and p condition rows.
        let methods: std::collections::BTreeSet<(String, usize)> = report
            .rows
            .iter()
            .map(|r| (r.family.to_string(), r.k))
            .collect();
        assert_eq!(methods.len(), 15);
        assert!(report.worst.is_some());
    }

    #[test]
    fn reference_agrees_with_exact_decay_and_caches() {
        let p = dahlquist(-1.0, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let params = serde_json::json!({"lambda": -1.0});
        let linear = LinearSolveConfig::default();
        let one = cached_reference(dir.path(), &p, &params, linear).unwrap();
        let exact = (-10.0_f64).exp();
        assert!((one.y[0] - exact).abs() < 1e-9);
        // cross_check_error is relative to the decayed state ~4.5e-5, so the
        // ~1e-11 absolute RK4/adaptive gap shows up magnified.
        assert!(one.cross_check_error < 1e-5, "cross {:.3e}", one.cross_check_error);
        // Second call hits the cache file and returns the same state.
        let two = cached_reference(dir.path(), &p, &params, linear).unwrap();
        assert_eq!(one.y, two.y);
        let entries = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(entries, 1);
    }

    #[test]
    fn sweep_records_cells_and_errors_shrink() {
        let base = RunConfig {
            problem: "dahlquist".into(),
            params: serde_json::json!({"lambda": -1.0}),
            family: Family::Limm,
            rtol: 1e-4,
            atol: 1e-6,
            h0: None,
            h_min: None,
            h_max: None,
            k_max: None,
            linear: LinearSolveConfig::default(),
            jacobian_reuse: None,
            trace: false,
        };
        let reference = vec![(-10.0_f64).exp()];
        let tols = [1e-3, 1e-6];
        let records = work_precision_sweep(
            &base,
            &[Family::Limm, Family::Bdf],
            &tols,
            &reference,
            ExecMode::Sequential,
        );
        assert_eq!(records.len(), 4);
        for pair in records.chunks(2) {
            assert!(
                pair[0].final_error > pair[1].final_error,
                "{} tol {:.0e}: {:.3e} vs tol {:.0e}: {:.3e}",
                pair[0].method,
                pair[0].tolerance,
                pair[0].final_error,
                pair[1].tolerance,
                pair[1].final_error
            );
            assert!(
                pair[1].final_error < 1e-3,
                "{}: {:.3e}",
                pair[1].method,
                pair[1].final_error
            );
            assert!(pair[0].n_accepted > 0 && pair[0].n_linear_solves > 0);
        }
    }

    #[test]
    fn convergence_rows_give_first_order_slope() {
        let p = dahlquist(-1.0, 0.0);
        let reference = vec![(-10.0_f64).exp()];
        let hs: Vec<f64> = (7..12).map(|j| 10.0 / (1 << j) as f64).collect();
        let rows = convergence_study(&p, Family::Limm, &[1], &hs, &reference, ExecMode::Sequential);
        assert_eq!(rows.len(), hs.len());
        let slopes = convergence_slopes(&rows, &[1]);
        assert!((slopes[0].1 - 1.0).abs() < 0.05, "slope {}", slopes[0].1);
    }
}
