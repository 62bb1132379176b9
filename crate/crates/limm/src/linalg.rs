//! Dense LU factorization and matrix-free restarted GMRES behind a single
//! linear-operator abstraction.
//!
//! Every stepper in the toolkit funnels its implicit system through
//! [`ShiftedSolver`], which solves `(I - h*mu * J) z = rhs` either by dense LU
//! with partial pivoting (factors cached while `(h, mu, J)` are unchanged) or
//! by restarted GMRES with modified Gram-Schmidt and one reorthogonalization
//! pass. GMRES needs only matrix-vector products, so problems too large for a
//! dense Jacobian can still be integrated through their `jac_vec` closure.

use thiserror::Error;

/// Errors surfaced by the linear-algebra layer.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// The matrix was exactly singular during factorization.
    #[error("singular matrix: no usable pivot in column {column}")]
    Singular {
        /// Column index at which no nonzero pivot was available.
        column: usize,
    },
    /// GMRES failed to reach its tolerance within the iteration budget.
    #[error("gmres did not converge: residual {residual_norm:.3e} after {iterations} iterations")]
    NoConvergence {
        /// Best iterate found before giving up.
        best: Vec<f64>,
        /// Total Arnoldi iterations performed.
        iterations: usize,
        /// Residual 2-norm of the best iterate.
        residual_norm: f64,
    },
    /// Direct mode was requested for an operator with no dense matrix.
    #[error("direct LU mode requires a dense matrix for this operator")]
    NoDenseMatrix,
}

/// Anything that can act as a real N x N linear map.
pub trait LinearOperator {
    /// Dimension N of the square operator.
    fn dim(&self) -> usize;
    /// Computes `y = A * x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Dense entries when the operator is explicitly available.
    fn dense(&self) -> Option<&Matrix> {
        None
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    /// Number of rows.
    pub n_rows: usize,
    /// Number of columns.
    pub n_cols: usize,
    /// Row-major entries, length `n_rows * n_cols`.
    pub data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Identity matrix of order n.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a nested row slice (rows of equal length).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = if n_rows == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            n_rows,
            n_cols,
            data,
        }
    }

    /// Computes `y = A * x` into a fresh vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Computes `y = A * x` into a caller-provided buffer.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            y[i] = acc;
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.n_rows, self.n_cols);
        self.n_rows
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
    fn dense(&self) -> Option<&Matrix> {
        Some(self)
    }
}

/// LU factors of a square matrix with partial pivoting: `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    /// Packed L (unit lower, below diagonal) and U (upper) factors.
    lu: Matrix,
    /// Row permutation: `perm[i]` is the original row now in position i.
    perm: Vec<usize>,
}

/// Factors a square matrix as `P A = L U` with partial pivoting.
///
/// The factors are reusable for any number of right-hand sides. An exactly
/// singular matrix is reported with the column at which every candidate pivot
/// vanished.
pub fn lu_factor(a: &Matrix) -> Result<LuFactors, LinalgError> {
    assert_eq!(a.n_rows, a.n_cols, "lu_factor needs a square matrix");
    let n = a.n_rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = lu[(col, col)].abs();
        for row in col + 1..n {
            let mag = lu[(row, col)].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 {
            return Err(LinalgError::Singular { column: col });
        }
        if pivot_row != col {
            perm.swap(col, pivot_row);
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
        }
        let pivot = lu[(col, col)];
        for row in col + 1..n {
            let factor = lu[(row, col)] / pivot;
            lu[(row, col)] = factor;
            if factor != 0.0 {
                for j in col + 1..n {
                    let u = lu[(col, j)];
                    lu[(row, j)] -= factor * u;
                }
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

impl LuFactors {
    /// Solves `A x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n_rows;
        assert_eq!(b.len(), n);
        // Forward substitution on the permuted right-hand side.
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }
}

/// How the shifted step systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Dense LU with factor caching.
    Direct,
    /// Matrix-free restarted GMRES.
    Gmres,
}

/// Configuration for the linear-solve layer.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LinearSolveConfig {
    /// Direct LU or matrix-free GMRES.
    pub mode: SolveMode,
    /// Relative residual target for GMRES.
    pub gmres_tol: f64,
    /// Restart length (Krylov subspace size per cycle).
    pub restart: usize,
    /// Total iteration budget across restarts.
    pub max_iterations: usize,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            mode: SolveMode::Direct,
            gmres_tol: 1e-10,
            restart: 30,
            max_iterations: 100,
        }
    }
}

/// Result of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresResult {
    /// Final iterate.
    pub x: Vec<f64>,
    /// Total Arnoldi iterations performed.
    pub iterations: usize,
    /// Residual 2-norm of the final iterate.
    pub residual_norm: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Restarted GMRES with modified Gram-Schmidt and one reorthogonalization
/// pass, converging when the residual 2-norm falls to
/// `cfg.gmres_tol * ||b||`.
///
/// Returns the iterate, the iteration count, and the final residual norm; a
/// budget overrun yields [`LinalgError::NoConvergence`] carrying the best
/// iterate found.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    cfg: &LinearSolveConfig,
    x0: &[f64],
) -> Result<GmresResult, LinalgError> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x0.len(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(GmresResult {
            x: vec![0.0; n],
            iterations: 0,
            residual_norm: 0.0,
        });
    }
    let target = cfg.gmres_tol * b_norm;
    let m = cfg.restart.max(1);
    let mut x = x0.to_vec();
    let mut total_iters = 0usize;
    let mut work = vec![0.0; n];

    loop {
        // Residual of the current iterate.
        op.apply(&x, &mut work);
        let mut r: Vec<f64> = b.iter().zip(work.iter()).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= target {
            return Ok(GmresResult {
                x,
                iterations: total_iters,
                residual_norm: beta,
            });
        }
        if total_iters >= cfg.max_iterations {
            return Err(LinalgError::NoConvergence {
                best: x,
                iterations: total_iters,
                residual_norm: beta,
            });
        }

        for v in r.iter_mut() {
            *v /= beta;
        }
        let mut basis: Vec<Vec<f64>> = vec![r];
        // Upper-Hessenberg columns after Givens rotations, plus the rotations.
        let mut h_cols: Vec<Vec<f64>> = Vec::new();
        let mut givens: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut inner = 0usize;

        while inner < m && total_iters < cfg.max_iterations {
            let j = inner;
            op.apply(&basis[j], &mut work);
            let mut w = work.clone();
            let mut h = vec![0.0; j + 2];
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    if pass == 0 {
                        h[i] = c;
                    } else {
                        h[i] += c;
                    }
                    for (wk, vk) in w.iter_mut().zip(v.iter()) {
                        *wk -= c * vk;
                    }
                }
            }
            let w_norm = norm2(&w);
            h[j + 1] = w_norm;

            // Apply accumulated Givens rotations to the new column.
            for (i, &(c, s)) in givens.iter().enumerate() {
                let t0 = c * h[i] + s * h[i + 1];
                let t1 = -s * h[i] + c * h[i + 1];
                h[i] = t0;
                h[i + 1] = t1;
            }
            // New rotation annihilating the subdiagonal entry.
            let (c, s) = {
                let denom = (h[j] * h[j] + h[j + 1] * h[j + 1]).sqrt();
                if denom == 0.0 {
                    (1.0, 0.0)
                } else {
                    (h[j] / denom, h[j + 1] / denom)
                }
            };
            let t0 = c * h[j] + s * h[j + 1];
            h[j] = t0;
            h[j + 1] = 0.0;
            givens.push((c, s));
            let g0 = c * g[j];
            let g1 = -s * g[j];
            g[j] = g0;
            g[j + 1] = g1;
            h_cols.push(h);
            inner += 1;
            total_iters += 1;

            let happy_breakdown = w_norm <= 1e-14 * b_norm;
            if g[inner].abs() <= target || happy_breakdown {
                break;
            }
            let mut v_next = w;
            for v in v_next.iter_mut() {
                *v /= w_norm;
            }
            basis.push(v_next);
        }

        // Back-substitute the triangular least-squares system and update x.
        let mut y = vec![0.0; inner];
        for i in (0..inner).rev() {
            let mut acc = g[i];
            for j in i + 1..inner {
                acc -= h_cols[j][i] * y[j];
            }
            y[i] = acc / h_cols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(basis[j].iter()) {
                *xi += yj * vi;
            }
        }
        // Loop back: the restart recomputes the true residual and either
        // returns, errors out on budget, or starts another cycle.
    }
}

/// The shift `I - h*mu * J` of a base operator, applied matrix-free.
pub struct ShiftedOperator<'a> {
    /// Base operator J.
    pub jacobian: &'a dyn LinearOperator,
    /// Product `h * mu` multiplying J in the shift.
    pub h_mu: f64,
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.jacobian.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.jacobian.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi = xi - self.h_mu * *yi;
        }
    }
}

/// Solver for the step systems `(I - h*mu * J) z = rhs` with LU-factor reuse.
///
/// In direct mode the factors of the shifted matrix are cached and reused
/// until `(h, mu, J)` changes, where J is tracked by a caller-maintained
/// version number; `n_factorizations` exposes the cache behaviour. In GMRES
/// mode each call runs restarted GMRES on the matrix-free shifted operator.
pub struct ShiftedSolver {
    /// Active linear-solve configuration.
    pub config: LinearSolveConfig,
    cache: Option<ShiftCache>,
    /// Number of LU factorizations performed so far.
    pub n_factorizations: u64,
}

struct ShiftCache {
    h_bits: u64,
    mu_bits: u64,
    jac_version: u64,
    lu: LuFactors,
}

impl ShiftedSolver {
    /// Creates a solver with the given configuration and an empty cache.
    pub fn new(config: LinearSolveConfig) -> Self {
        ShiftedSolver {
            config,
            cache: None,
            n_factorizations: 0,
        }
    }

    /// Drops any cached factorization.
    pub fn invalidate(&mut self) {
        self.cache = None;
    }

    /// Solves `(I - h*mu * jacobian) z = rhs`.
    ///
    /// `jac_version` must change whenever the caller rebuilds or re-evaluates
    /// the Jacobian; it is the cache key alongside `h` and `mu`. `x0` seeds
    /// GMRES and is ignored in direct mode.
    pub fn solve(
        &mut self,
        jacobian: &dyn LinearOperator,
        jac_version: u64,
        h: f64,
        mu: f64,
        rhs: &[f64],
        x0: &[f64],
    ) -> Result<Vec<f64>, LinalgError> {
        match self.config.mode {
            SolveMode::Direct => {
                let h_bits = h.to_bits();
                let mu_bits = mu.to_bits();
                let reusable = self.cache.as_ref().is_some_and(|c| {
                    c.h_bits == h_bits && c.mu_bits == mu_bits && c.jac_version == jac_version
                });
                if !reusable {
                    let dense = jacobian.dense().ok_or(LinalgError::NoDenseMatrix)?;
                    let n = dense.dim();
                    let mut shifted = Matrix::zeros(n, n);
                    let scale = h * mu;
                    for i in 0..n {
                        for j in 0..n {
                            shifted[(i, j)] = -scale * dense[(i, j)];
                        }
                        shifted[(i, i)] += 1.0;
                    }
                    let lu = lu_factor(&shifted)?;
                    self.n_factorizations += 1;
                    self.cache = Some(ShiftCache {
                        h_bits,
                        mu_bits,
                        jac_version,
                        lu,
                    });
                }
                Ok(self.cache.as_ref().unwrap().lu.solve(rhs))
            }
            SolveMode::Gmres => {
                let op = ShiftedOperator {
                    jacobian,
                    h_mu: h * mu,
                };
                gmres(&op, rhs, &self.config, x0).map(|r| r.x)
            }
        }
    }
}

/// One-shot convenience wrapper: solves `(I - h*mu_minus1 * J) z = rhs`
/// without any caching.
pub fn solve_shifted(
    jacobian_op: &dyn LinearOperator,
    h: f64,
    mu_minus1: f64,
    rhs: &[f64],
    cfg: &LinearSolveConfig,
) -> Result<Vec<f64>, LinalgError> {
    let mut solver = ShiftedSolver::new(*cfg);
    let x0 = vec![0.0; jacobian_op.dim()];
    solver.solve(jacobian_op, 0, h, mu_minus1, rhs, &x0)
}
