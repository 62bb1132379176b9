//! Method coefficients for the LIMM, LIMM-W, and BDF families, orders 1-5:
//! fixed-stepsize tables, variable-stepsize evaluation, order-condition
//! residuals, error constants, transformed (divided-difference form)
//! coefficients, and a verifier.
//!
//! A k-step method advances `y` through
//!
//! ```text
//! sum_{i=-1}^{k-1} alpha_i y_{n-i}
//!     = h sum_i beta_i f_{n-i}  +  h J_n sum_i mu_i y_{n-i}
//! ```
//!
//! with `alpha_{-1} = 1`, so each step solves one linear system with
//! `I - h mu_{-1} J_n`. LIMM requires `J_n` to be the exact Jacobian; LIMM-W
//! tolerates an arbitrary matrix in its place. BDF is carried in the same
//! container with `mu = 0` and the implicit weight stored as `beta_m1`.
//!
//! Variable-stepsize coefficients are evaluated by solving the order-condition
//! linear system with the tabulated optimized parameters substituted (the
//! alphas, plus `beta_0` for LIMM), closed by the `sigma(0) = 0` constraint
//! `beta_{k-1} + mu_{k-1} = 0` that every tabulated method of order >= 2
//! satisfies. At uniform stepsize fractions this reproduces the fixed tables
//! to ~1e-13; the verifier certifies arbitrary admissible fractions.

use crate::linalg::{lu_factor, Matrix};
use crate::tables;
use thiserror::Error;

/// Highest supported order / step number.
pub const K_MAX: usize = 5;

/// Errors from coefficient construction.
#[derive(Debug, Error)]
pub enum CoeffsError {
    /// The (family, k) pair has no tabulated method.
    #[error("no {family} method with k = {k} is available")]
    NotAvailable {
        /// Requested family.
        family: Family,
        /// Requested step number.
        k: usize,
    },
    /// Stepsize fractions outside the admissible band.
    #[error("inadmissible stepsize fractions: {detail}")]
    Inadmissible {
        /// Human-readable reason.
        detail: String,
    },
    /// Coincident or non-monotone abscissae made the system degenerate.
    #[error("degenerate stepsize-fraction grid")]
    DegenerateGrid,
    /// A time history that is not strictly decreasing.
    #[error("time history must be strictly decreasing")]
    InvalidHistory,
}

/// Method family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Linearly implicit multistep method (exact Jacobian).
    Limm,
    /// W-variant (arbitrary matrix in place of the Jacobian).
    #[serde(alias = "limm-w", alias = "limm_w")]
    LimmW,
    /// Backward differentiation formula (Newton inner solver).
    Bdf,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Limm => write!(f, "LIMM"),
            Family::LimmW => write!(f, "LIMM-W"),
            Family::Bdf => write!(f, "BDF"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "limm" => Ok(Family::Limm),
            "limmw" => Ok(Family::LimmW),
            "bdf" => Ok(Family::Bdf),
            other => Err(format!("unknown family '{other}' (expected limm, limmw, or bdf)")),
        }
    }
}

/// One k-step method instance.
#[derive(Debug, Clone)]
pub struct MethodCoefficients {
    /// Family the coefficients belong to.
    pub family: Family,
    /// Step number.
    pub k: usize,
    /// Order of consistency (equals k for every method here).
    pub p: usize,
    /// `alpha[-1..k-1]` stored as `alpha[0..=k]` with `alpha[0] = alpha_{-1} = 1`.
    pub alpha: Vec<f64>,
    /// `beta[0..k-1]`; all zero for BDF.
    pub beta: Vec<f64>,
    /// Implicit weight `beta_{-1}`; nonzero only for BDF.
    pub beta_m1: f64,
    /// `mu[-1..k-1]` stored as `mu[0..=k]` with `mu[0] = mu_{-1}`; all zero for BDF.
    pub mu: Vec<f64>,
}

impl MethodCoefficients {
    /// The coefficient `mu_{-1}` multiplying the implicit Jacobian term
    /// (`beta_{-1}` for BDF, which folds its implicit weight there).
    pub fn implicit_weight(&self) -> f64 {
        if self.family == Family::Bdf {
            self.beta_m1
        } else {
            self.mu[0]
        }
    }
}

/// Stepsize fractions `c_{-1} = -1, c_0 = 0 < c_1 < c_2 < ...` measured in
/// units of the upcoming stepsize.
#[derive(Debug, Clone)]
pub struct StepsizeFractions {
    /// `c[0] = c_{-1} = -1`, `c[1] = c_0 = 0`, then the positive fractions.
    c: Vec<f64>,
}

impl StepsizeFractions {
    /// Fractions of a uniform grid: `c_i = i` for `i = -1..m`.
    pub fn uniform(m: usize) -> Self {
        let c = (0..=m + 1).map(|i| i as f64 - 1.0).collect();
        StepsizeFractions { c }
    }

    /// Builds fractions from the positive part `c_1..c_m`.
    pub fn from_positive(positive: &[f64]) -> Result<Self, CoeffsError> {
        let mut c = Vec::with_capacity(positive.len() + 2);
        c.push(-1.0);
        c.push(0.0);
        c.extend_from_slice(positive);
        let out = StepsizeFractions { c };
        for w in out.c[1..].windows(2) {
            if w[1] <= w[0] {
                return Err(CoeffsError::Inadmissible {
                    detail: format!("fractions not strictly increasing: {:?}", out.c),
                });
            }
        }
        Ok(out)
    }

    /// The fraction `c_i` for `i >= -1`.
    pub fn frac(&self, i: isize) -> f64 {
        self.c[(i + 1) as usize]
    }

    /// Largest index m such that `c_m` is stored.
    pub fn max_index(&self) -> usize {
        self.c.len() - 2
    }

    /// The positive fractions `c_1..c_m`.
    pub fn positive(&self) -> &[f64] {
        &self.c[2..]
    }

    /// Checks the admissibility band for a k-step method: every interior
    /// fraction must satisfy `|c_i - i| < 0.5 * i` and be strictly increasing.
    pub fn admissible_for(&self, k: usize) -> Result<(), CoeffsError> {
        if self.max_index() + 1 < k {
            return Err(CoeffsError::Inadmissible {
                detail: format!("need fractions c_1..c_{} but only {} stored", k - 1, self.max_index()),
            });
        }
        for i in 1..k {
            let ci = self.frac(i as isize);
            if (ci - i as f64).abs() >= 0.5 * i as f64 {
                return Err(CoeffsError::Inadmissible {
                    detail: format!("|c_{i} - {i}| = {:.6} >= {:.1}", (ci - i as f64).abs(), 0.5 * i as f64),
                });
            }
        }
        Ok(())
    }
}

/// Computes stepsize fractions from a decreasing time history
/// `t_n, t_{n-1}, ..., t_{n-m}` and the upcoming stepsize: each
/// `c_i = (t_n - t_{n-i}) / h_next`.
pub fn fractions_from_times(t_history: &[f64], h_next: f64) -> Result<StepsizeFractions, CoeffsError> {
    assert!(h_next > 0.0, "h_next must be positive");
    if t_history.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CoeffsError::InvalidHistory);
    }
    let t_n = t_history[0];
    let positive: Vec<f64> = t_history[1..].iter().map(|t| (t_n - t) / h_next).collect();
    StepsizeFractions::from_positive(&positive)
}

fn parse_table(strings: &[&str]) -> Vec<f64> {
    strings
        .iter()
        .map(|s| s.parse::<f64>().expect("table constant parses as f64"))
        .collect()
}

fn table_arrays(family: Family, k: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    use tables::*;
    let (a, b, m): (&[&str], &[&str], &[&str]) = match (family, k) {
        (Family::Limm, 1) => (&LIMM_ALPHA_1, &LIMM_BETA_1, &LIMM_MU_1),
        (Family::Limm, 2) => (&LIMM_ALPHA_2, &LIMM_BETA_2, &LIMM_MU_2),
        (Family::Limm, 3) => (&LIMM_ALPHA_3, &LIMM_BETA_3, &LIMM_MU_3),
        (Family::Limm, 4) => (&LIMM_ALPHA_4, &LIMM_BETA_4, &LIMM_MU_4),
        (Family::Limm, 5) => (&LIMM_ALPHA_5, &LIMM_BETA_5, &LIMM_MU_5),
        (Family::LimmW, 1) => (&LIMMW_ALPHA_1, &LIMMW_BETA_1, &LIMMW_MU_1),
        (Family::LimmW, 2) => (&LIMMW_ALPHA_2, &LIMMW_BETA_2, &LIMMW_MU_2),
        (Family::LimmW, 3) => (&LIMMW_ALPHA_3, &LIMMW_BETA_3, &LIMMW_MU_3),
        (Family::LimmW, 4) => (&LIMMW_ALPHA_4, &LIMMW_BETA_4, &LIMMW_MU_4),
        (Family::LimmW, 5) => (&LIMMW_ALPHA_5, &LIMMW_BETA_5, &LIMMW_MU_5),
        _ => return None,
    };
    Some((parse_table(a), parse_table(b), parse_table(m)))
}

/// Classic BDF coefficients at uniform stepsize: `(alpha, beta_m1)`.
fn bdf_uniform(k: usize) -> Option<(Vec<f64>, f64)> {
    let (alpha, beta_m1): (Vec<f64>, f64) = match k {
        1 => (vec![1.0, -1.0], 1.0),
        2 => (vec![1.0, -4.0 / 3.0, 1.0 / 3.0], 2.0 / 3.0),
        3 => (vec![1.0, -18.0 / 11.0, 9.0 / 11.0, -2.0 / 11.0], 6.0 / 11.0),
        4 => (
            vec![1.0, -48.0 / 25.0, 36.0 / 25.0, -16.0 / 25.0, 3.0 / 25.0],
            12.0 / 25.0,
        ),
        5 => (
            vec![
                1.0,
                -300.0 / 137.0,
                300.0 / 137.0,
                -200.0 / 137.0,
                75.0 / 137.0,
                -12.0 / 137.0,
            ],
            60.0 / 137.0,
        ),
        _ => return None,
    };
    Some((alpha, beta_m1))
}

/// Returns the tabulated fixed-stepsize coefficients for `(family, k)`,
/// `k` in 1..=5, evaluated to double precision.
pub fn fixed_coefficients(family: Family, k: usize) -> Result<MethodCoefficients, CoeffsError> {
    match family {
        Family::Bdf => {
            let (alpha, beta_m1) =
                bdf_uniform(k).ok_or(CoeffsError::NotAvailable { family, k })?;
            Ok(MethodCoefficients {
                family,
                k,
                p: k,
                alpha,
                beta: vec![0.0; k],
                beta_m1,
                mu: vec![0.0; k + 1],
            })
        }
        _ => {
            let (alpha, beta, mu) =
                table_arrays(family, k).ok_or(CoeffsError::NotAvailable { family, k })?;
            Ok(MethodCoefficients {
                family,
                k,
                p: k,
                alpha,
                beta,
                beta_m1: 0.0,
                mu,
            })
        }
    }
}

/// Evaluates the variable-stepsize coefficients of `(family, k)` at the given
/// stepsize fractions.
///
/// For LIMM-W the tabulated alphas are kept and the remaining coefficients
/// solve the order conditions at `c`; for LIMM the tabulated `beta_0` is kept
/// as well. BDF solves its Newton-interpolation conditions directly. One-step
/// methods have no `c` dependence.
pub fn variable_coefficients(
    family: Family,
    k: usize,
    c: &StepsizeFractions,
) -> Result<MethodCoefficients, CoeffsError> {
    if k == 0 || k > K_MAX {
        return Err(CoeffsError::NotAvailable { family, k });
    }
    if k == 1 {
        return fixed_coefficients(family, 1);
    }
    c.admissible_for(k)?;
    match family {
        Family::LimmW => variable_limmw(k, c),
        Family::Limm => variable_limm(k, c),
        Family::Bdf => variable_bdf(k, c),
    }
}

fn solve_dense(a: Matrix, rhs: &[f64]) -> Result<Vec<f64>, CoeffsError> {
    let lu = lu_factor(&a).map_err(|_| CoeffsError::DegenerateGrid)?;
    Ok(lu.solve(rhs))
}

fn variable_limmw(k: usize, c: &StepsizeFractions) -> Result<MethodCoefficients, CoeffsError> {
    let (alpha, _, _) = table_arrays(Family::LimmW, k).expect("k checked");
    let n = 2 * k + 1; // beta_0..beta_{k-1}, mu_{-1}..mu_{k-1}
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    let mut row = 0;
    // Traditional conditions, l = 1..k:
    //   l * sum_i beta_i c_i^{l-1} = -sum_i alpha_i c_i^l.
    for l in 1..=k as i32 {
        for i in 0..k {
            a[(row, i)] = l as f64 * c.frac(i as isize).powi(l - 1);
        }
        rhs[row] = -(0..=k)
            .map(|j| alpha[j] * c.frac(j as isize - 1).powi(l))
            .sum::<f64>();
        row += 1;
    }
    // Moment conditions on mu, l = 1..k: sum_i mu_i c_i^{l-1} = 0.
    for l in 1..=k as i32 {
        for i in 0..=k {
            a[(row, k + i)] = c.frac(i as isize - 1).powi(l - 1);
        }
        row += 1;
    }
    // sigma(0) = 0 closure: beta_{k-1} + mu_{k-1} = 0.
    a[(row, k - 1)] = 1.0;
    a[(row, n - 1)] = 1.0;
    let sol = solve_dense(a, &rhs)?;
    Ok(MethodCoefficients {
        family: Family::LimmW,
        k,
        p: k,
        alpha,
        beta: sol[..k].to_vec(),
        beta_m1: 0.0,
        mu: sol[k..].to_vec(),
    })
}

fn variable_limm(k: usize, c: &StepsizeFractions) -> Result<MethodCoefficients, CoeffsError> {
    let (alpha, beta_table, _) = table_arrays(Family::Limm, k).expect("k checked");
    let beta0 = beta_table[0];
    let n = 2 * k; // beta_1..beta_{k-1}, mu_{-1}..mu_{k-1}
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    let sum_alpha_cl = |l: i32| -> f64 {
        (0..=k)
            .map(|j| alpha[j] * c.frac(j as isize - 1).powi(l))
            .sum()
    };
    let mut row = 0;
    // Order 1: sum_{i>=1} beta_i = -sum alpha c - beta0.
    for i in 0..k - 1 {
        a[(row, i)] = 1.0;
    }
    rhs[row] = -sum_alpha_cl(1) - beta0;
    row += 1;
    // Combined order 2 (beta_{-1} = 0, c_0 = 0 kills the beta0 term):
    //   2 sum_{i=-1..k-1} (beta_i + mu_i) c_i = -sum alpha c^2.
    for i in 0..k - 1 {
        a[(row, i)] = 2.0 * c.frac(i as isize + 1);
    }
    for i in 0..=k {
        a[(row, k - 1 + i)] = 2.0 * c.frac(i as isize - 1);
    }
    rhs[row] = -sum_alpha_cl(2);
    row += 1;
    // Traditional conditions, l = 3..k (beta0 multiplies c_0^{l-1} = 0).
    for l in 3..=k as i32 {
        for i in 0..k - 1 {
            a[(row, i)] = l as f64 * c.frac(i as isize + 1).powi(l - 1);
        }
        rhs[row] = -sum_alpha_cl(l);
        row += 1;
    }
    // Consistency of mu: sum mu_i = 0.
    for i in 0..=k {
        a[(row, k - 1 + i)] = 1.0;
    }
    row += 1;
    // Moment conditions on mu, l = 3..k: sum mu_i c_i^{l-1} = 0.
    for l in 3..=k as i32 {
        for i in 0..=k {
            a[(row, k - 1 + i)] = c.frac(i as isize - 1).powi(l - 1);
        }
        row += 1;
    }
    // sigma(0) = 0 closure: beta_{k-1} + mu_{k-1} = 0.
    a[(row, k - 2)] = 1.0;
    a[(row, n - 1)] = 1.0;
    let sol = solve_dense(a, &rhs)?;
    let mut beta = Vec::with_capacity(k);
    beta.push(beta0);
    beta.extend_from_slice(&sol[..k - 1]);
    Ok(MethodCoefficients {
        family: Family::Limm,
        k,
        p: k,
        alpha,
        beta,
        beta_m1: 0.0,
        mu: sol[k - 1..].to_vec(),
    })
}

fn variable_bdf(k: usize, c: &StepsizeFractions) -> Result<MethodCoefficients, CoeffsError> {
    // Interpolation conditions in x = -c: for l = 0..k,
    //   sum_{i=-1..k-1} alpha_i x_i^l = l * beta_{-1} * x_{-1}^{l-1},
    // with alpha_{-1} = 1 and x_{-1} = 1. Unknowns alpha_0..alpha_{k-1}, beta_{-1}.
    let n = k + 1;
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for l in 0..=k as i32 {
        let row = l as usize;
        for i in 0..k {
            a[(row, i)] = (-c.frac(i as isize)).powi(l);
        }
        a[(row, k)] = -(l as f64); // l * x_{-1}^{l-1} = l
        rhs[row] = -1.0; // -x_{-1}^l
    }
    let sol = solve_dense(a, &rhs)?;
    let mut alpha = Vec::with_capacity(k + 1);
    alpha.push(1.0);
    alpha.extend_from_slice(&sol[..k]);
    Ok(MethodCoefficients {
        family: Family::Bdf,
        k,
        p: k,
        alpha,
        beta: vec![0.0; k],
        beta_m1: sol[k],
        mu: vec![0.0; k + 1],
    })
}

/// The two order-`ell` residuals of a method at stepsize fractions `c`:
///
/// `rho_a = sum_i alpha_i c_i^ell + ell * sum_{i>=0} beta_i c_i^{ell-1}` and
/// `rho_b = ell * (sum_i mu_i c_i^{ell-1} - (ell-1) * sum_i nu_i c_i^{ell-2})`
/// with `nu = 0` throughout. The sums run over the stored arrays; the BDF
/// implicit weight `beta_{-1}` is not part of `rho_a` (it enters the
/// family-aware conditions in [`verify_order_conditions`]).
pub fn order_residuals(m: &MethodCoefficients, c: &StepsizeFractions, ell: u32) -> (f64, f64) {
    assert!(ell >= 1);
    let l = ell as i32;
    let k = m.k;
    let mut rho_a = 0.0;
    for i in 0..=k {
        rho_a += m.alpha[i] * c.frac(i as isize - 1).powi(l);
    }
    for i in 0..k {
        rho_a += l as f64 * m.beta[i] * c.frac(i as isize).powi(l - 1);
    }
    let mut mu_moment = 0.0;
    for i in 0..=k {
        mu_moment += m.mu[i] * c.frac(i as isize - 1).powi(l - 1);
    }
    let nu_moment = 0.0; // nu coefficients are identically zero
    let rho_b = l as f64 * (mu_moment - (l - 1) as f64 * nu_moment);
    (rho_a, rho_b)
}

/// The local error constant `C_k` of a method at stepsize fractions `c`.
///
/// For LIMM/LIMM-W this is `max(|rho_a|, |rho_a + rho_b|) / (k+1)!` at
/// `ell = k+1`; for BDF the classical constant normalized by `sigma(1)`,
/// with the implicit weight restored into the residual.
pub fn error_constant(m: &MethodCoefficients, c: &StepsizeFractions) -> f64 {
    let ell = (m.k + 1) as u32;
    let (rho_a, rho_b) = order_residuals(m, c, ell);
    let fact: f64 = (1..=m.k as u64 + 1).product::<u64>() as f64;
    match m.family {
        Family::Bdf => {
            let sign = if m.k % 2 == 0 { 1.0 } else { -1.0 }; // (-1)^ell with ell = k+1
            let full = rho_a + ell as f64 * m.beta_m1 * sign;
            (full / (fact * m.beta_m1)).abs()
        }
        _ => rho_a.abs().max((rho_a + rho_b).abs()) / fact,
    }
}

/// One order-condition row: the residuals that must vanish for the method to
/// have its declared order, labeled by the moment power `ell` (`ell = 0`
/// carries the consistency sums over alpha and mu).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConditionRow {
    /// Moment power of the condition (0 = consistency sums).
    pub ell: u32,
    /// Residual of the traditional (alpha/beta) part.
    pub rho_a: f64,
    /// Residual of the mu-moment part (0 where the family has none).
    pub rho_b: f64,
}

/// Evaluates every order condition of the applicable family at `c`, one row
/// per moment power.
///
/// LIMM-W: `sum alpha = 0`, `sum mu = 0`, the traditional conditions for
/// `l = 1..p`, and the mu moment conditions for `l = 2..p`. LIMM: the combined
/// order-two condition replaces the split form, with split conditions from
/// `l = 3`. BDF: the classical linear-multistep conditions including the
/// implicit weight.
pub fn condition_residuals(m: &MethodCoefficients, c: &StepsizeFractions) -> Vec<ConditionRow> {
    let k = m.k;
    let p = m.p;
    let sum_alpha: f64 = m.alpha.iter().sum();
    let sum_mu: f64 = m.mu.iter().sum();
    let mut rows = vec![ConditionRow {
        ell: 0,
        rho_a: sum_alpha,
        rho_b: sum_mu,
    }];
    let mu_moment = |l: i32| -> f64 {
        (0..=k)
            .map(|i| m.mu[i] * c.frac(i as isize - 1).powi(l - 1))
            .sum()
    };
    match m.family {
        Family::LimmW => {
            for l in 1..=p as u32 {
                let (rho_a, _) = order_residuals(m, c, l);
                let rho_b = if l >= 2 { mu_moment(l as i32) } else { 0.0 };
                rows.push(ConditionRow { ell: l, rho_a, rho_b });
            }
        }
        Family::Limm => {
            let (rho_a1, _) = order_residuals(m, c, 1);
            rows.push(ConditionRow {
                ell: 1,
                rho_a: rho_a1,
                rho_b: 0.0,
            });
            if p >= 2 {
                // Combined order two: rho_a(2) + rho_b(2) = 0.
                let (rho_a2, rho_b2) = order_residuals(m, c, 2);
                rows.push(ConditionRow {
                    ell: 2,
                    rho_a: rho_a2 + rho_b2,
                    rho_b: 0.0,
                });
            }
            for l in 3..=p as u32 {
                let (rho_a, _) = order_residuals(m, c, l);
                rows.push(ConditionRow {
                    ell: l,
                    rho_a,
                    rho_b: mu_moment(l as i32),
                });
            }
        }
        Family::Bdf => {
            for l in 1..=p as u32 {
                let (rho_a, _) = order_residuals(m, c, l);
                // Restore the implicit weight: + l * beta_{-1} * c_{-1}^{l-1}.
                let sign = if l % 2 == 1 { 1.0 } else { -1.0 }; // (-1)^{l-1}
                rows.push(ConditionRow {
                    ell: l,
                    rho_a: rho_a + l as f64 * m.beta_m1 * sign,
                    rho_b: 0.0,
                });
            }
        }
    }
    rows
}

/// Maximum absolute residual over every order condition of the applicable
/// family at `c` (see [`condition_residuals`] for the condition list).
pub fn verify_order_conditions(m: &MethodCoefficients, c: &StepsizeFractions) -> f64 {
    condition_residuals(m, c)
        .into_iter()
        .fold(0.0, |acc, row| acc.max(row.rho_a.abs()).max(row.rho_b.abs()))
}

/// Expresses the k-step BDF method at fractions `c` in the W-family container:
/// the implicit weight moves to `mu_{-1}`, explicit weights `beta_i` solve the
/// moment conditions `sum_i beta_i c_i^{l-1} = beta_{-1} (-1)^{l-1}`, and
/// `mu_i = -beta_i` for `i >= 0`. The result satisfies the full LIMM-W order
/// conditions, which is how one verifier covers all three families.
pub fn bdf_in_w_form(k: usize, c: &StepsizeFractions) -> Result<MethodCoefficients, CoeffsError> {
    let bdf = variable_coefficients(Family::Bdf, k, c)?;
    let n = k;
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for l in 1..=k as i32 {
        let row = (l - 1) as usize;
        for i in 0..k {
            a[(row, i)] = c.frac(i as isize).powi(l - 1);
        }
        let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
        rhs[row] = bdf.beta_m1 * sign;
    }
    let beta = solve_dense(a, &rhs)?;
    let mut mu = Vec::with_capacity(k + 1);
    mu.push(bdf.beta_m1);
    mu.extend(beta.iter().map(|b| -b));
    Ok(MethodCoefficients {
        family: Family::LimmW,
        k,
        p: k,
        alpha: bdf.alpha,
        beta,
        beta_m1: 0.0,
        mu,
    })
}

/// Transformed coefficients for the divided-difference form of the step:
/// `hat_x_i = sum_{j>=i} x_j prod_{l=0}^{i-1} (c_l - c_j)` for each of the
/// stored arrays (`x = alpha, beta, mu` over indices `0..k-1`).
///
/// With these, the history enters the step as `sum_i h^i hat_x_i delta^i`
/// over the stored divided differences instead of raw past values.
pub fn transformed_coefficients(
    m: &MethodCoefficients,
    c: &StepsizeFractions,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = m.k;
    let hat = |coef: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in i..k {
                let mut prod = 1.0;
                for l in 0..i {
                    prod *= c.frac(l as isize) - c.frac(j as isize);
                }
                acc += coef(j) * prod;
            }
            out[i] = acc;
        }
        out
    };
    let alpha_hat = hat(&|j| m.alpha[j + 1]);
    let beta_hat = hat(&|j| m.beta[j]);
    let mu_hat = hat(&|j| m.mu[j + 1]);
    (alpha_hat, beta_hat, mu_hat)
}

/// Draws admissible stepsize fractions c_1..c_{k-1} for a k-step method.
///
/// Each fraction is sampled uniformly inside the admissible band around the
/// uniform-grid value i, redrawing until the sequence is strictly increasing.
pub fn random_admissible_fractions<R: rand::Rng>(rng: &mut R, k: usize) -> StepsizeFractions {
    loop {
        let positive: Vec<f64> = (1..k)
            .map(|i| i as f64 + 0.499 * i as f64 * rng.gen_range(-1.0..1.0))
            .collect();
        if positive.windows(2).all(|w| w[1] > w[0])
            && positive.first().map_or(true, |&c1| c1 > 0.0)
        {
            return StepsizeFractions::from_positive(&positive).unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALL_FAMILIES: [Family; 3] = [Family::Limm, Family::LimmW, Family::Bdf];

    fn random_admissible(rng: &mut ChaCha8Rng, k: usize) -> StepsizeFractions {
        random_admissible_fractions(rng, k)
    }

    #[test]
    fn fixed_order_one_tables() {
        for family in [Family::Limm, Family::LimmW] {
            let m = fixed_coefficients(family, 1).unwrap();
            assert_eq!(m.alpha, vec![1.0, -1.0]);
            assert_eq!(m.beta, vec![1.0]);
            assert_eq!(m.mu, vec![1.0, -1.0]);
        }
    }

    #[test]
    fn fixed_w_two_step_matches_exact_rationals() {
        let m = fixed_coefficients(Family::LimmW, 2).unwrap();
        assert!((m.alpha[1] - (-146619050.0 / 133414177.0)).abs() < 1e-15);
        assert!((m.alpha[2] - (13204873.0 / 133414177.0)).abs() < 1e-15);
        assert!((m.beta[0] - (193518829.0 / 133414177.0)).abs() < 1e-15);
        assert!((m.beta[1] - (-73309525.0 / 133414177.0)).abs() < 1e-15);
        assert!((m.mu[0] - (73309525.0 / 133414177.0)).abs() < 1e-15);
    }

    #[test]
    fn fixed_bdf_two() {
        let m = fixed_coefficients(Family::Bdf, 2).unwrap();
        assert_eq!(m.alpha, vec![1.0, -4.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(m.beta_m1, 2.0 / 3.0);
        assert!(m.mu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unsupported_order_errors() {
        assert!(matches!(
            fixed_coefficients(Family::Limm, 6),
            Err(CoeffsError::NotAvailable { .. })
        ));
    }

    #[test]
    fn all_fixed_tables_satisfy_order_conditions() {
        for family in ALL_FAMILIES {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                let c = StepsizeFractions::uniform(k);
                let res = verify_order_conditions(&m, &c);
                assert!(res <= 1e-10, "{family} k={k}: residual {res:.2e}");
            }
        }
    }

    #[test]
    fn consistency_sums_vanish() {
        for family in ALL_FAMILIES {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                assert!(m.alpha.iter().sum::<f64>().abs() <= 1e-12);
                assert!(m.mu.iter().sum::<f64>().abs() <= 1e-12);
                assert_eq!(m.alpha[0], 1.0);
            }
        }
    }

    #[test]
    fn implicit_weight_positive_for_linearly_implicit_families() {
        for family in [Family::Limm, Family::LimmW] {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                assert!(m.mu[0] > 0.0, "{family} k={k} has mu_-1 = {}", m.mu[0]);
            }
        }
    }

    #[test]
    fn residuals_order_one_w_method_at_ell_two() {
        let m = fixed_coefficients(Family::LimmW, 1).unwrap();
        let c = StepsizeFractions::uniform(1);
        let (rho_a, rho_b) = order_residuals(&m, &c, 2);
        assert!((rho_a - 1.0).abs() <= 1e-12);
        assert!((rho_b + 2.0).abs() <= 1e-12);
    }

    #[test]
    fn residuals_first_order_condition_vanishes() {
        for family in [Family::Limm, Family::LimmW] {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                let c = StepsizeFractions::uniform(k);
                let (rho_a, _) = order_residuals(&m, &c, 1);
                assert!(rho_a.abs() <= 1e-12, "{family} k={k}");
            }
        }
    }

    #[test]
    fn residuals_bdf_two_at_ell_three() {
        let m = fixed_coefficients(Family::Bdf, 2).unwrap();
        let c = StepsizeFractions::uniform(2);
        let (rho_a, _) = order_residuals(&m, &c, 3);
        // Brute force over the stored arrays: sum alpha c^3 = -1 + 1/3.
        assert!((rho_a - (-2.0 / 3.0)).abs() <= 1e-12);
    }

    #[test]
    fn error_constants_match_characteristics_table() {
        let limm = [0.5, 0.222222, 0.167344, 0.204625, 0.217405];
        let limmw = [0.5, 0.424915, 0.403238, 0.380873, 0.365325];
        let bdf = [0.5, 1.0 / 3.0, 0.25, 0.2, 1.0 / 6.0];
        for (family, expected) in [
            (Family::Limm, &limm),
            (Family::LimmW, &limmw),
            (Family::Bdf, &bdf),
        ] {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                let c = StepsizeFractions::uniform(k);
                let got = error_constant(&m, &c);
                assert!(
                    (got - expected[k - 1]).abs() <= 1e-5,
                    "{family} k={k}: got {got}, expected {}",
                    expected[k - 1]
                );
            }
        }
    }

    #[test]
    fn variable_at_uniform_reproduces_fixed_tables() {
        for family in ALL_FAMILIES {
            for k in 1..=K_MAX {
                let fixed = fixed_coefficients(family, k).unwrap();
                let c = StepsizeFractions::uniform(k);
                let var = variable_coefficients(family, k, &c).unwrap();
                for i in 0..=k {
                    assert!(
                        (fixed.alpha[i] - var.alpha[i]).abs() <= 1e-12,
                        "{family} k={k} alpha[{i}]"
                    );
                    assert!((fixed.mu[i] - var.mu[i]).abs() <= 1e-12, "{family} k={k} mu[{i}]");
                }
                for i in 0..k {
                    assert!(
                        (fixed.beta[i] - var.beta[i]).abs() <= 1e-12,
                        "{family} k={k} beta[{i}]"
                    );
                }
                assert!((fixed.beta_m1 - var.beta_m1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn variable_w_two_step_closed_form() {
        // Closed forms for the 2-step W method keep the tabulated alpha_0:
        //   beta_0 = ((a0+1)c1 + 1/c1 + 2)/2,
        //   beta_1 = ((a0+1)c1^2 - 1)/(2 c1),
        //   mu_{-1} = (1 - (a0+1)c1^2)/2.
        let a0 = fixed_coefficients(Family::LimmW, 2).unwrap().alpha[1];
        for c1 in [0.8_f64, 1.0, 1.3] {
            let c = StepsizeFractions::from_positive(&[c1]).unwrap();
            let m = variable_coefficients(Family::LimmW, 2, &c).unwrap();
            let beta0 = ((a0 + 1.0) * c1 + 1.0 / c1 + 2.0) / 2.0;
            let beta1 = ((a0 + 1.0) * c1 * c1 - 1.0) / (2.0 * c1);
            let mu_m1 = (1.0 - (a0 + 1.0) * c1 * c1) / 2.0;
            assert!((m.beta[0] - beta0).abs() <= 1e-12, "c1={c1} beta0");
            assert!((m.beta[1] - beta1).abs() <= 1e-12, "c1={c1} beta1");
            assert!((m.mu[0] - mu_m1).abs() <= 1e-12, "c1={c1} mu_-1");
        }
    }

    #[test]
    fn variable_coefficients_random_admissible_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for family in ALL_FAMILIES {
            for k in 2..=K_MAX {
                for _ in 0..100 {
                    let c = random_admissible(&mut rng, k);
                    let m = variable_coefficients(family, k, &c).unwrap();
                    let res = verify_order_conditions(&m, &c);
                    assert!(res <= 1e-8, "{family} k={k}: residual {res:.2e}");
                }
            }
        }
    }

    #[test]
    fn inadmissible_fractions_rejected() {
        let c = StepsizeFractions::from_positive(&[1.6, 2.0]).unwrap();
        assert!(matches!(
            variable_coefficients(Family::Limm, 3, &c),
            Err(CoeffsError::Inadmissible { .. })
        ));
    }

    #[test]
    fn fractions_from_times_examples() {
        let c = fractions_from_times(&[1.0, 0.9, 0.7], 0.2).unwrap();
        assert!((c.frac(1) - 0.5).abs() <= 1e-15);
        assert!((c.frac(2) - 1.5).abs() <= 1e-15);
        assert_eq!(c.frac(-1), -1.0);
        assert_eq!(c.frac(0), 0.0);

        // Uniform history with h_next equal to past steps.
        let times: Vec<f64> = (0..4).map(|i| 2.0 - 0.1 * i as f64).collect();
        let c = fractions_from_times(&times, 0.1).unwrap();
        for i in 1..=3 {
            assert!((c.frac(i) - i as f64).abs() <= 1e-12);
        }

        assert!(matches!(
            fractions_from_times(&[1.0, 1.0, 0.5], 0.1),
            Err(CoeffsError::InvalidHistory)
        ));
    }

    #[test]
    fn doubling_steps_fractions() {
        // Steps doubling each time (ratio 2): with h_next = 2 * h_prev,
        // timestamps t_n = 0, t_{n-1} = -h_prev, t_{n-2} = -1.5 h_prev give
        // c = (1/2, 3/4) in units of h_next = 2 h_prev... computed directly.
        let h_prev = 0.1;
        let h_next = 2.0 * h_prev;
        let times = [0.0, -h_prev, -h_prev - h_prev / 2.0];
        let c = fractions_from_times(&times, h_next).unwrap();
        assert!((c.frac(1) - 0.5).abs() <= 1e-15);
        assert!((c.frac(2) - 0.75).abs() <= 1e-15);
    }

    #[test]
    fn transformed_alpha_hat_zero_is_minus_one() {
        for family in [Family::Limm, Family::LimmW] {
            for k in 1..=K_MAX {
                let m = fixed_coefficients(family, k).unwrap();
                let c = StepsizeFractions::uniform(k);
                let (alpha_hat, _, _) = transformed_coefficients(&m, &c);
                assert!((alpha_hat[0] + 1.0).abs() <= 1e-12, "{family} k={k}");
            }
        }
    }

    #[test]
    fn transformed_one_step_passthrough() {
        let m = fixed_coefficients(Family::LimmW, 1).unwrap();
        let c = StepsizeFractions::uniform(1);
        let (a, b, mu) = transformed_coefficients(&m, &c);
        assert_eq!(a, vec![m.alpha[1]]);
        assert_eq!(b, vec![m.beta[0]]);
        assert_eq!(mu, vec![m.mu[1]]);
    }

    #[test]
    fn coefficients_vary_continuously() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for family in [Family::Limm, Family::LimmW] {
            for k in 2..=K_MAX {
                let c = random_admissible(&mut rng, k);
                let mut bumped = c.positive().to_vec();
                bumped[0] += 1e-8;
                let cb = StepsizeFractions::from_positive(&bumped).unwrap();
                let m0 = variable_coefficients(family, k, &c).unwrap();
                let m1 = variable_coefficients(family, k, &cb).unwrap();
                for i in 0..k {
                    assert!((m0.beta[i] - m1.beta[i]).abs() <= 1e-4, "{family} k={k}");
                }
                for i in 0..=k {
                    assert!((m0.mu[i] - m1.mu[i]).abs() <= 1e-4, "{family} k={k}");
                }
            }
        }
    }

    #[test]
    fn bdf_in_w_form_passes_w_conditions() {
        let c = StepsizeFractions::uniform(3);
        let folded = bdf_in_w_form(3, &c).unwrap();
        assert!(verify_order_conditions(&folded, &c) <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 2..=K_MAX {
            let c = random_admissible(&mut rng, k);
            let folded = bdf_in_w_form(k, &c).unwrap();
            assert!(verify_order_conditions(&folded, &c) <= 1e-8, "k={k}");
        }
    }

    #[test]
    fn perturbed_alpha_breaks_conditions_linearly() {
        let mut m = fixed_coefficients(Family::LimmW, 3).unwrap();
        m.alpha[1] += 1e-3;
        let c = StepsizeFractions::uniform(3);
        let res = verify_order_conditions(&m, &c);
        assert!(res >= 1e-4 && res <= 1e-2, "residual {res:.2e}");
    }

    #[test]
    fn family_parses_from_strings() {
        assert_eq!("limm".parse::<Family>().unwrap(), Family::Limm);
        assert_eq!("LIMM-W".parse::<Family>().unwrap(), Family::LimmW);
        assert_eq!("limmw".parse::<Family>().unwrap(), Family::LimmW);
        assert_eq!("Bdf".parse::<Family>().unwrap(), Family::Bdf);
        assert!("rk4".parse::<Family>().is_err());
    }
}
