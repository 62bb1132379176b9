//! Divided-difference history of the adaptive integrator.
//!
//! Past solution and derivative values are held in Newton form: `times[j]`
//! is `t_{n-j}` (newest first), `ydiffs[j]` the j-th divided difference of
//! the solution over `times[0..=j]`, and `fdiffs[j]` the same for the
//! right-hand side. A k-step method keeps at most `k + 2` time stamps,
//! solution differences through order `k + 1`, and derivative differences
//! through order `k`.
//!
//! Extending the table to a candidate point costs `O(k)` vector operations
//! via a top-difference recurrence instead of rebuilding the full triangle,
//! and the same recurrence yields the fresh high-order differences the error
//! estimator probes.

/// Newton-form storage of recent solution and derivative values.
#[derive(Debug, Clone)]
pub struct DifferenceHistory {
    /// `times[j] = t_{n-j}`, newest first.
    pub times: Vec<f64>,
    /// `ydiffs[j]` = j-th divided difference of `y` over `times[0..=j]`.
    pub ydiffs: Vec<Vec<f64>>,
    /// `fdiffs[j]` = j-th divided difference of `f` over `times[0..=j]`.
    pub fdiffs: Vec<Vec<f64>>,
    bootstrap: bool,
}

impl DifferenceHistory {
    /// Starts a history from the initial condition alone. The derivative
    /// seeds the first-order slot so the very first step can still probe a
    /// second difference.
    pub fn new_bootstrap(t0: f64, y0: Vec<f64>, f0: Vec<f64>) -> Self {
        DifferenceHistory {
            times: vec![t0],
            ydiffs: vec![y0, f0.clone()],
            fdiffs: vec![f0],
            bootstrap: true,
        }
    }

    /// True until the first accepted step replaces the derivative seed with a
    /// genuine divided difference.
    pub fn is_bootstrap(&self) -> bool {
        self.bootstrap
    }

    /// Number of genuine history points.
    pub fn n_points(&self) -> usize {
        self.times.len()
    }

    /// Current solution (zeroth difference).
    pub fn current_y(&self) -> &[f64] {
        &self.ydiffs[0]
    }

    /// Current derivative value.
    pub fn current_f(&self) -> &[f64] {
        &self.fdiffs[0]
    }

    /// Evaluates the Newton interpolating polynomial of the stored solution
    /// values at time `t` — exact at each stored node, extrapolating beyond.
    pub fn newton_eval(&self, t: f64) -> Vec<f64> {
        let n = self.ydiffs[0].len();
        let usable = self.ydiffs.len().min(self.times.len() + 1);
        let mut acc = vec![0.0; n];
        let mut p = 1.0;
        for j in 0..usable {
            if j > 0 {
                p *= t - self.times[j - 1];
            }
            for (a, d) in acc.iter_mut().zip(&self.ydiffs[j]) {
                *a += p * d;
            }
        }
        acc
    }

    /// Divided differences at the extended node set `[t_new, times...]`:
    /// returns `out[j]` = j-th difference for `j = 0..=K+1` (plus `K+2` when
    /// the stored table is deep enough), where
    /// `K = min(ydiffs.len()-1, times.len()-1, cap)`.
    ///
    /// During bootstrap, the second difference is the repeated-node limit
    /// `((y_new - y_0)/h - f_0)/h` with nodes `[t_new, t_0, t_0]`.
    pub fn fresh_differences(&self, t_new: f64, y_new: &[f64], cap: usize) -> Vec<Vec<f64>> {
        let n = y_new.len();
        if self.bootstrap {
            let h = t_new - self.times[0];
            let d1: Vec<f64> = y_new
                .iter()
                .zip(&self.ydiffs[0])
                .map(|(a, b)| (a - b) / h)
                .collect();
            let d2: Vec<f64> = d1
                .iter()
                .zip(&self.fdiffs[0])
                .map(|(a, b)| (a - b) / h)
                .collect();
            return vec![y_new.to_vec(), d1, d2];
        }
        let k_top = (self.ydiffs.len() - 1).min(self.times.len() - 1).min(cap);
        let mut out = extend_differences(t_new, y_new, &self.times, &self.ydiffs, k_top);
        if self.ydiffs.len() >= k_top + 2 && self.times.len() >= k_top + 2 {
            let denom = t_new - self.times[k_top + 1];
            let extra: Vec<f64> = out[k_top + 1]
                .iter()
                .zip(&self.ydiffs[k_top + 1])
                .map(|(a, b)| (a - b) / denom)
                .collect();
            out.push(extra);
        }
        debug_assert_eq!(out[0].len(), n);
        out
    }

    /// Commits an accepted step: installs the new point, refreshes both
    /// difference tables, and trims storage for a `k_next`-step method.
    /// `fresh` must come from [`Self::fresh_differences`] at the same
    /// `(t_new, y_new)`.
    pub fn accept(
        &mut self,
        t_new: f64,
        y_new: Vec<f64>,
        f_new: Vec<f64>,
        fresh: &[Vec<f64>],
        k_next: usize,
    ) {
        if self.bootstrap {
            let h = t_new - self.times[0];
            let fd1: Vec<f64> = f_new
                .iter()
                .zip(&self.fdiffs[0])
                .map(|(a, b)| (a - b) / h)
                .collect();
            self.times = vec![t_new, self.times[0]];
            self.ydiffs = vec![y_new, fresh[1].clone()];
            self.fdiffs = vec![f_new, fd1];
            self.bootstrap = false;
        } else {
            let m_f = self.fdiffs.len() - 1;
            let new_fd = extend_differences(t_new, &f_new, &self.times, &self.fdiffs, m_f);
            let mut new_times = Vec::with_capacity(self.times.len() + 1);
            new_times.push(t_new);
            new_times.extend_from_slice(&self.times);
            let mut new_yd = Vec::with_capacity(fresh.len());
            new_yd.push(y_new);
            new_yd.extend(fresh[1..].iter().cloned());
            self.times = new_times;
            self.ydiffs = new_yd;
            self.fdiffs = new_fd;
        }
        self.times.truncate(k_next + 2);
        self.ydiffs.truncate(k_next + 2);
        self.fdiffs.truncate(k_next + 1);
    }
}

/// Differences of the extended node set `[t_new, times[0..]]` from stored
/// differences `diffs[0..=k_top]`: computes the top difference
///
/// `delta^{K+1} = (v_new - diffs[0]) / prod_0 - sum_{i=1..K} diffs[i] / prod_i`
///
/// with `prod_i = prod_{j=i..K} (t_new - times[j])`, then rolls downward via
/// `delta^j = diffs[j] + (t_new - times[j]) delta^{j+1}`. Returns orders
/// `0..=K+1`, `out[0] = v_new`.
fn extend_differences(
    t_new: f64,
    v_new: &[f64],
    times: &[f64],
    diffs: &[Vec<f64>],
    k_top: usize,
) -> Vec<Vec<f64>> {
    let n = v_new.len();
    let mut prods = vec![1.0; k_top + 1];
    for i in (0..=k_top).rev() {
        let tail = if i == k_top { 1.0 } else { prods[i + 1] };
        prods[i] = (t_new - times[i]) * tail;
    }
    let mut top: Vec<f64> = v_new
        .iter()
        .zip(&diffs[0])
        .map(|(a, b)| (a - b) / prods[0])
        .collect();
    for i in 1..=k_top {
        for (t, d) in top.iter_mut().zip(&diffs[i]) {
            *t -= d / prods[i];
        }
    }
    let mut out = vec![vec![0.0; n]; k_top + 2];
    out[0] = v_new.to_vec();
    out[k_top + 1] = top;
    for j in (1..=k_top).rev() {
        let scale = t_new - times[j];
        let next = out[j + 1].clone();
        out[j] = diffs[j]
            .iter()
            .zip(&next)
            .map(|(d, c)| d + scale * c)
            .collect();
    }
    out
}

/// Brute-force divided differences by the classical triangle: returns
/// `deltas[l]` = l-th difference over `nodes[0..=l]` for all `l`. The
/// reference oracle the incremental recurrences are tested against.
pub fn brute_force_differences(nodes: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    assert_eq!(nodes.len(), values.len());
    let m = nodes.len();
    let mut col: Vec<Vec<f64>> = values.to_vec();
    let mut out = Vec::with_capacity(m);
    out.push(col[0].clone());
    for level in 1..m {
        for i in 0..m - level {
            let denom = nodes[i] - nodes[i + level];
            col[i] = col[i]
                .iter()
                .zip(&col[i + 1])
                .map(|(a, b)| (a - b) / denom)
                .collect();
        }
        out.push(col[0].clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn brute_force_on_cubic() {
        // y = t^3: delta^0 = t0^3, delta^2 = t0 + t1 + t2, delta^3 = 1.
        let nodes = [1.3, 0.9, 0.2, -0.4];
        let vals = scalar(&nodes.map(|t| t * t * t));
        let dd = brute_force_differences(&nodes, &vals);
        assert!((dd[0][0] - 1.3_f64.powi(3)).abs() < 1e-14);
        assert!((dd[2][0] - (1.3 + 0.9 + 0.2)).abs() < 1e-13);
        assert!((dd[3][0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn brute_force_quadratic_second_difference_is_one() {
        let nodes = [0.0, -0.5, -1.7];
        let vals = scalar(&nodes.map(|t| t * t));
        let dd = brute_force_differences(&nodes, &vals);
        assert!((dd[2][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bootstrap_transient_differences() {
        // y(t) = e^t from t = 0: first step to h.
        let h = 0.01;
        let hist = DifferenceHistory::new_bootstrap(0.0, vec![1.0], vec![1.0]);
        assert!(hist.is_bootstrap());
        let y1 = (h as f64).exp();
        let dd = hist.fresh_differences(h, &[y1], 2);
        assert_eq!(dd.len(), 3);
        let d1 = (y1 - 1.0) / h;
        assert!((dd[1][0] - d1).abs() < 1e-14);
        // Repeated-node second difference approximates y''/2 = 1/2.
        assert!((dd[2][0] - (d1 - 1.0) / h).abs() < 1e-14);
        assert!((dd[2][0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn accept_leaves_bootstrap_and_stores_slopes() {
        let h = 0.1;
        let mut hist = DifferenceHistory::new_bootstrap(0.0, vec![2.0], vec![-2.0]);
        let y1 = 2.0 * (1.0 - h); // roughly y' = -y
        let f1 = -y1;
        let dd = hist.fresh_differences(h, &[y1], 2);
        hist.accept(h, vec![y1], vec![f1], &dd, 1);
        assert!(!hist.is_bootstrap());
        assert_eq!(hist.times, vec![h, 0.0]);
        assert!((hist.ydiffs[1][0] - (y1 - 2.0) / h).abs() < 1e-14);
        assert!((hist.fdiffs[1][0] - (f1 + 2.0) / h).abs() < 1e-14);
    }

    #[test]
    fn newton_eval_reproduces_stored_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Build history from y(t) = sin t by direct appends.
        let mut hist =
            DifferenceHistory::new_bootstrap(0.0, vec![0.0], vec![1.0]);
        let mut t: f64 = 0.0;
        let mut raw: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for _ in 0..6 {
            let h = rng.gen_range(0.05..0.15);
            t += h;
            let y = t.sin();
            let dd = hist.fresh_differences(t, &[y], 5);
            hist.accept(t, vec![y], vec![t.cos()], &dd, 4);
            raw.push((t, y));
        }
        // All stored nodes reproduce their raw values exactly.
        for j in 0..hist.times.len() {
            let tj = hist.times[j];
            let yj = raw.iter().find(|(tt, _)| (*tt - tj).abs() < 1e-15).unwrap().1;
            let interp = hist.newton_eval(tj);
            assert!((interp[0] - yj).abs() < 1e-12, "node {j}");
        }
    }

    #[test]
    fn incremental_matches_brute_force_shadow() {
        // Randomized appends with ratio-limited stepsizes; exponential data
        // keeps all difference orders well-scaled.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let y_of = |t: f64| vec![(0.5 * t).exp(), (-0.35 * t).exp(), 3.0 * (0.2 * t).exp()];
        let f_of = |t: f64| vec![0.5 * (0.5 * t).exp(), -0.35 * (-0.35 * t).exp(), 0.6 * (0.2 * t).exp()];
        let k = 4;
        let mut t: f64 = 0.0;
        let mut hist = DifferenceHistory::new_bootstrap(t, y_of(t), f_of(t));
        let mut h = 1.0;
        let mut raw: Vec<(f64, Vec<f64>, Vec<f64>)> = vec![(t, y_of(t), f_of(t))];
        for step in 0..400 {
            // Resample around a fixed base step with a bounded step ratio, the
            // regime an admissibility-guarded controller keeps the grid in.
            let draw: f64 = rng.gen_range(0.7..1.4);
            h = draw.clamp(h * 0.5, h * 2.0);
            t += h;
            raw.insert(0, (t, y_of(t), f_of(t)));
            raw.truncate(k + 2);
            let dd = hist.fresh_differences(t, &y_of(t), k + 1);
            hist.accept(t, y_of(t), f_of(t), &dd, k);
            if step == 0 {
                continue;
            }
            let nodes: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let yvals: Vec<Vec<f64>> = raw.iter().map(|r| r.1.clone()).collect();
            let fvals: Vec<Vec<f64>> = raw.iter().map(|r| r.2.clone()).collect();
            let dd_y = brute_force_differences(&nodes, &yvals);
            let dd_f = brute_force_differences(&nodes, &fvals);
            for j in 0..hist.ydiffs.len().min(dd_y.len()) {
                for c in 0..3 {
                    let scale = dd_y[j][c].abs().max(1e-30);
                    let rel = (hist.ydiffs[j][c] - dd_y[j][c]).abs() / scale;
                    assert!(rel <= 1e-9, "step {step} order {j} comp {c}: rel {rel:.2e}");
                }
            }
            for j in 0..hist.fdiffs.len().min(dd_f.len()) {
                for c in 0..3 {
                    let scale = dd_f[j][c].abs().max(1e-30);
                    let rel = (hist.fdiffs[j][c] - dd_f[j][c]).abs() / scale;
                    assert!(rel <= 1e-9, "step {step} f-order {j} comp {c}: rel {rel:.2e}");
                }
            }
        }
    }

    #[test]
    fn polynomial_data_gives_exact_top_difference() {
        // y = t^3 appended at irregular nodes: stored delta^3 = 1 exactly,
        // delta^4 = 0.
        let mut hist = DifferenceHistory::new_bootstrap(0.0, vec![0.0], vec![0.0]);
        let nodes = [0.3, 0.55, 1.0, 1.2, 1.7, 2.3];
        for &t in &nodes {
            let dd = hist.fresh_differences(t, &[t * t * t], 4);
            hist.accept(t, vec![t * t * t], vec![3.0 * t * t], &dd, 3);
        }
        assert!((hist.ydiffs[3][0] - 1.0).abs() < 1e-12);
        assert!(hist.ydiffs[4][0].abs() < 1e-12);
    }

    #[test]
    fn storage_trimmed_to_method_depth() {
        let mut hist = DifferenceHistory::new_bootstrap(0.0, vec![1.0], vec![1.0]);
        let mut t: f64 = 0.0;
        for i in 0..10 {
            t += 0.1;
            let dd = hist.fresh_differences(t, &[t.exp()], 3);
            let k_next = (i + 1).min(2);
            hist.accept(t, vec![t.exp()], vec![t.exp()], &dd, k_next);
            assert!(hist.times.len() <= k_next + 2);
            assert!(hist.ydiffs.len() <= k_next + 2);
            assert!(hist.fdiffs.len() <= k_next + 1);
        }
        assert_eq!(hist.times.len(), 4);
    }

    #[test]
    fn fresh_differences_cap_limits_depth() {
        let mut hist = DifferenceHistory::new_bootstrap(0.0, vec![1.0], vec![1.0]);
        let mut t: f64 = 0.0;
        for _ in 0..6 {
            t += 0.1;
            let dd = hist.fresh_differences(t, &[t.exp()], 5);
            hist.accept(t, vec![t.exp()], vec![t.exp()], &dd, 4);
        }
        let dd = hist.fresh_differences(t + 0.1, &[(t + 0.1).exp()], 2);
        // cap 2 yields orders 0..=3 plus the depth-4 bonus difference.
        assert_eq!(dd.len(), 5);
    }
}
