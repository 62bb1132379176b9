//! Test-problem corpus: a scalar/rotational linear decay problem, the
//! Lorenz-96 chaotic lattice with time-dependent forcing, and a Gray-Scott
//! reaction-diffusion system on a periodic 2-D grid.
//!
//! Every problem supplies the right-hand side, a Jacobian-vector product,
//! optionally a dense Jacobian and the explicit time derivative `f_t`, an
//! initial state, and (when known) the exact solution.

use crate::linalg::{LinearOperator, Matrix};
use serde_json::Value;
use std::sync::Arc;

type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type JacVecFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;
type DenseJacFn = dyn Fn(f64, &[f64]) -> Matrix + Send + Sync;
type ExactFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// A first-order ODE system `y' = f(t, y)`.
#[derive(Clone)]
pub struct OdeProblem {
    /// Registry name.
    pub name: String,
    /// State dimension.
    pub dim: usize,
    /// Integration window `[t0, tf]` used by default.
    pub t_span: (f64, f64),
    /// Initial state at `t_span.0`.
    pub y0: Vec<f64>,
    /// Whether `f` has no explicit `t` dependence.
    pub autonomous: bool,
    /// Right-hand side `f(t, y)` written into the output slice.
    pub rhs: Arc<RhsFn>,
    /// Jacobian-vector product `(df/dy) v`.
    pub jac_vec: Arc<JacVecFn>,
    /// Dense Jacobian `df/dy`, when tractable.
    pub dense_jac: Option<Arc<DenseJacFn>>,
    /// Explicit time derivative `f_t(t, y)`, when supplied analytically.
    pub dfdt: Option<Arc<RhsFn>>,
    /// Exact solution `y(t)`, when known.
    pub exact: Option<Arc<ExactFn>>,
}

impl std::fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("t_span", &self.t_span)
            .field("autonomous", &self.autonomous)
            .field("has_dense_jac", &self.dense_jac.is_some())
            .field("has_dfdt", &self.dfdt.is_some())
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl OdeProblem {
    /// Evaluates the right-hand side into a fresh vector.
    pub fn eval_rhs(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.rhs)(t, y, &mut out);
        out
    }

    /// A [`LinearOperator`] view of the Jacobian at `(t, y)`. When a dense
    /// Jacobian is available it is materialized (enabling direct solves);
    /// otherwise the operator applies the matrix-free product.
    pub fn jacobian_at(&self, t: f64, y: &[f64]) -> JacobianOperator {
        self.jacobian_operator(t, y, true)
    }

    /// Like [`Self::jacobian_at`], but skips the dense build when the caller
    /// only needs matrix-vector products (e.g. GMRES solves).
    pub fn jacobian_operator(&self, t: f64, y: &[f64], want_dense: bool) -> JacobianOperator {
        let dense = if want_dense {
            self.dense_jac.as_ref().map(|j| j(t, y))
        } else {
            None
        };
        JacobianOperator {
            dim: self.dim,
            t,
            y: y.to_vec(),
            jac_vec: Arc::clone(&self.jac_vec),
            dense,
        }
    }
}

/// Jacobian of a problem frozen at a state, usable as a linear operator and
/// (when built from a dense Jacobian) as an explicit matrix.
pub struct JacobianOperator {
    dim: usize,
    t: f64,
    y: Vec<f64>,
    jac_vec: Arc<JacVecFn>,
    dense: Option<Matrix>,
}

impl LinearOperator for JacobianOperator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match &self.dense {
            Some(m) => m.matvec_into(x, out),
            None => (self.jac_vec)(self.t, &self.y, x, out),
        }
    }
    fn dense(&self) -> Option<&Matrix> {
        self.dense.as_ref()
    }
}

/// Linear decay test problem `y' = lambda y`. A real `lambda` gives the
/// scalar problem; a complex `lambda = a + bi` is realified into the 2x2
/// rotation-scaling block `[[a, -b], [b, a]]` acting on `(Re y, Im y)`.
pub fn dahlquist(lambda_re: f64, lambda_im: f64) -> OdeProblem {
    if lambda_im == 0.0 {
        let a = lambda_re;
        OdeProblem {
            name: "dahlquist".into(),
            dim: 1,
            t_span: (0.0, 10.0),
            y0: vec![1.0],
            autonomous: true,
            rhs: Arc::new(move |_t, y, out| out[0] = a * y[0]),
            jac_vec: Arc::new(move |_t, _y, v, out| out[0] = a * v[0]),
            dense_jac: Some(Arc::new(move |_t, _y| {
                Matrix::from_rows(&[&[a]])
            })),
            dfdt: None,
            exact: Some(Arc::new(move |t| vec![(a * t).exp()])),
        }
    } else {
        let (a, b) = (lambda_re, lambda_im);
        OdeProblem {
            name: "dahlquist".into(),
            dim: 2,
            t_span: (0.0, 10.0),
            y0: vec![1.0, 0.0],
            autonomous: true,
            rhs: Arc::new(move |_t, y, out| {
                out[0] = a * y[0] - b * y[1];
                out[1] = b * y[0] + a * y[1];
            }),
            jac_vec: Arc::new(move |_t, _y, v, out| {
                out[0] = a * v[0] - b * v[1];
                out[1] = b * v[0] + a * v[1];
            }),
            dense_jac: Some(Arc::new(move |_t, _y| {
                Matrix::from_rows(&[&[a, -b], &[b, a]])
            })),
            dfdt: None,
            exact: Some(Arc::new(move |t| {
                let r = (a * t).exp();
                vec![r * (b * t).cos(), r * (b * t).sin()]
            })),
        }
    }
}

/// Lorenz-96 lattice with periodically forced drive:
/// `x_i' = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F(t)` with
/// `F(t) = 8 + 4 cos(3 pi t)`, cyclic indices, `N >= 4`.
pub fn lorenz96(n: usize) -> OdeProblem {
    assert!(n >= 4, "lattice needs at least 4 sites");
    let forcing = |t: f64| 8.0 + 4.0 * (3.0 * std::f64::consts::PI * t).cos();
    let y0: Vec<f64> = (0..n)
        .map(|i| 8.0 + (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect();
    let rhs = move |t: f64, x: &[f64], out: &mut [f64]| {
        let n = x.len();
        let f = forcing(t);
        for i in 0..n {
            let ip1 = (i + 1) % n;
            let im1 = (i + n - 1) % n;
            let im2 = (i + n - 2) % n;
            out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + f;
        }
    };
    let jac_vec = move |_t: f64, x: &[f64], v: &[f64], out: &mut [f64]| {
        let n = x.len();
        for i in 0..n {
            let ip1 = (i + 1) % n;
            let im1 = (i + n - 1) % n;
            let im2 = (i + n - 2) % n;
            out[i] = x[im1] * (v[ip1] - v[im2]) + (x[ip1] - x[im2]) * v[im1] - v[i];
        }
    };
    let dense_jac = move |_t: f64, x: &[f64]| -> Matrix {
        let n = x.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let ip1 = (i + 1) % n;
            let im1 = (i + n - 1) % n;
            let im2 = (i + n - 2) % n;
            m[(i, ip1)] += x[im1];
            m[(i, im2)] += -x[im1];
            m[(i, im1)] += x[ip1] - x[im2];
            m[(i, i)] += -1.0;
        }
        m
    };
    let dfdt = move |t: f64, _x: &[f64], out: &mut [f64]| {
        let dft = -12.0 * std::f64::consts::PI * (3.0 * std::f64::consts::PI * t).sin();
        for o in out.iter_mut() {
            *o = dft;
        }
    };
    OdeProblem {
        name: "lorenz96".into(),
        dim: n,
        t_span: (0.0, 0.5),
        y0,
        autonomous: false,
        rhs: Arc::new(rhs),
        jac_vec: Arc::new(jac_vec),
        dense_jac: Some(Arc::new(dense_jac)),
        dfdt: Some(Arc::new(dfdt)),
        exact: None,
    }
}

/// Gray-Scott reaction-diffusion on an n-by-n periodic grid, `N = 2 n^2`
/// unknowns ordered `[u..., v...]`:
///
/// `u' = eps1 Lap u - u v^2 + F (1 - u)`,
/// `v' = eps2 Lap v + u v^2 - (F + kappa) v`,
///
/// with `eps1 = 0.2, eps2 = 0.1, F = 0.04, kappa = 0.06`, 5-point Laplacian
/// at grid spacing `1/n`. Initial state: `u = 1, v = 0` except a centered
/// square patch of side `n/4` where `u = 0.5, v = 0.25`.
pub fn gray_scott(n: usize) -> OdeProblem {
    assert!(n >= 4, "grid needs at least 4 points per side");
    const EPS1: f64 = 0.2;
    const EPS2: f64 = 0.1;
    const FEED: f64 = 0.04;
    const KAPPA: f64 = 0.06;
    let dim = 2 * n * n;
    let inv_h2 = (n * n) as f64; // 1 / (1/n)^2

    let mut y0 = vec![0.0; dim];
    for u in y0[..n * n].iter_mut() {
        *u = 1.0;
    }
    let side = n / 4;
    let lo = (n - side) / 2;
    for r in lo..lo + side {
        for cidx in lo..lo + side {
            y0[r * n + cidx] = 0.5;
            y0[n * n + r * n + cidx] = 0.25;
        }
    }

    let lap = move |field: &[f64], i: usize, j: usize| -> f64 {
        let up = field[((i + n - 1) % n) * n + j];
        let down = field[((i + 1) % n) * n + j];
        let left = field[i * n + (j + n - 1) % n];
        let right = field[i * n + (j + 1) % n];
        (up + down + left + right - 4.0 * field[i * n + j]) * inv_h2
    };

    let rhs = move |_t: f64, y: &[f64], out: &mut [f64]| {
        let (u, v) = y.split_at(n * n);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let uv2 = u[idx] * v[idx] * v[idx];
                out[idx] = EPS1 * lap(u, i, j) - uv2 + FEED * (1.0 - u[idx]);
                out[n * n + idx] = EPS2 * lap(v, i, j) + uv2 - (FEED + KAPPA) * v[idx];
            }
        }
    };
    let jac_vec = move |_t: f64, y: &[f64], w: &[f64], out: &mut [f64]| {
        let (u, v) = y.split_at(n * n);
        let (wu, wv) = w.split_at(n * n);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let duv2_du = v[idx] * v[idx];
                let duv2_dv = 2.0 * u[idx] * v[idx];
                let reaction = duv2_du * wu[idx] + duv2_dv * wv[idx];
                out[idx] = EPS1 * lap(wu, i, j) - reaction - FEED * wu[idx];
                out[n * n + idx] = EPS2 * lap(wv, i, j) + reaction - (FEED + KAPPA) * wv[idx];
            }
        }
    };
    let dense_jac = move |_t: f64, y: &[f64]| -> Matrix {
        let nn = n * n;
        let (u, v) = y.split_at(nn);
        let mut m = Matrix::zeros(2 * nn, 2 * nn);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let neighbors = [
                    ((i + n - 1) % n) * n + j,
                    ((i + 1) % n) * n + j,
                    i * n + (j + n - 1) % n,
                    i * n + (j + 1) % n,
                ];
                for &nb in &neighbors {
                    m[(idx, nb)] += EPS1 * inv_h2;
                    m[(nn + idx, nn + nb)] += EPS2 * inv_h2;
                }
                m[(idx, idx)] += -4.0 * EPS1 * inv_h2;
                m[(nn + idx, nn + idx)] += -4.0 * EPS2 * inv_h2;
                let duv2_du = v[idx] * v[idx];
                let duv2_dv = 2.0 * u[idx] * v[idx];
                m[(idx, idx)] += -duv2_du - FEED;
                m[(idx, nn + idx)] += -duv2_dv;
                m[(nn + idx, idx)] += duv2_du;
                m[(nn + idx, nn + idx)] += duv2_dv - (FEED + KAPPA);
            }
        }
        m
    };
    OdeProblem {
        name: "grayscott".into(),
        dim,
        t_span: (0.0, 2.0),
        y0,
        autonomous: true,
        rhs: Arc::new(rhs),
        jac_vec: Arc::new(jac_vec),
        dense_jac: if n <= 64 { Some(Arc::new(dense_jac)) } else { None },
        dfdt: None,
        exact: None,
    }
}

/// Builds a registered problem from its name and a JSON parameter object.
///
/// Names: `dahlquist` (params `lambda` or `lambda_re`/`lambda_im`),
/// `lorenz96` (param `n`), `grayscott` (param `n` = grid side).
pub fn by_name(name: &str, params: &Value) -> Result<OdeProblem, String> {
    let get_f64 = |key: &str, default: f64| -> f64 {
        params.get(key).and_then(Value::as_f64).unwrap_or(default)
    };
    let get_usize = |key: &str, default: usize| -> usize {
        params
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .unwrap_or(default)
    };
    match name.to_ascii_lowercase().as_str() {
        "dahlquist" => {
            let re = params
                .get("lambda")
                .and_then(Value::as_f64)
                .unwrap_or_else(|| get_f64("lambda_re", -1.0));
            let im = get_f64("lambda_im", 0.0);
            Ok(dahlquist(re, im))
        }
        "lorenz96" => Ok(lorenz96(get_usize("n", 40))),
        "grayscott" | "gray_scott" | "gray-scott" => Ok(gray_scott(get_usize("n", 32))),
        other => Err(format!(
            "unknown problem '{other}' (expected dahlquist, lorenz96, or grayscott)"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central-difference directional derivative of the rhs.
    fn fd_jac_vec(p: &OdeProblem, t: f64, y: &[f64], v: &[f64]) -> Vec<f64> {
        let eps = 1e-6;
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let scale = eps / norm_v;
        let yp: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + scale * b).collect();
        let ym: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - scale * b).collect();
        let fp = p.eval_rhs(t, &yp);
        let fm = p.eval_rhs(t, &ym);
        fp.iter()
            .zip(&fm)
            .map(|(a, b)| (a - b) / (2.0 * scale))
            .collect()
    }

    fn check_jacobians(p: &OdeProblem, t: f64, y: &[f64], tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scale: f64 = y.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        for _ in 0..5 {
            let v: Vec<f64> = (0..p.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut jv = vec![0.0; p.dim];
            (p.jac_vec)(t, y, &v, &mut jv);
            let fd = fd_jac_vec(p, t, y, &v);
            for i in 0..p.dim {
                assert!(
                    (jv[i] - fd[i]).abs() <= tol * scale,
                    "jac_vec mismatch at {i}: {} vs {}",
                    jv[i],
                    fd[i]
                );
            }
            if let Some(dj) = &p.dense_jac {
                let m = dj(t, y);
                let dense_jv = m.matvec(&v);
                for i in 0..p.dim {
                    assert!(
                        (jv[i] - dense_jv[i]).abs() <= 1e-12 * scale,
                        "dense/matfree mismatch at {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn dahlquist_real_exact_solution() {
        let p = dahlquist(-2.0, 0.0);
        let exact = p.exact.as_ref().unwrap();
        assert!((exact(1.0)[0] - (-2.0_f64).exp()).abs() < 1e-15);
        let f = p.eval_rhs(0.0, &[3.0]);
        assert_eq!(f, vec![-6.0]);
    }

    #[test]
    fn dahlquist_complex_block_rotates() {
        let p = dahlquist(-0.5, 2.0);
        assert_eq!(p.dim, 2);
        let exact = p.exact.as_ref().unwrap();
        let y = exact(std::f64::consts::PI / 2.0);
        // e^{-pi/4} (cos(pi), sin(pi)) = (-e^{-pi/4}, 0)
        assert!((y[0] + (-std::f64::consts::FRAC_PI_4).exp()).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
        check_jacobians(&p, 0.3, &[0.4, -0.7], 1e-7);
    }

    #[test]
    fn lorenz96_four_site_stencil() {
        let p = lorenz96(4);
        // x = (1,2,3,4) at t = 0 (forcing = 12):
        // site 0: (x1 - x2) x3 - x0 + 12 = (2-3)*4 - 1 + 12 = 7.
        let f = p.eval_rhs(0.0, &[1.0, 2.0, 3.0, 4.0]);
        assert!((f[0] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn lorenz96_equilibrium_at_constant_forcing_value() {
        // x_i = F(0) = 12 for all i makes the advection term vanish.
        let p = lorenz96(7);
        let f = p.eval_rhs(0.0, &[12.0; 7]);
        for v in f {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn lorenz96_rotation_equivariance() {
        // Cyclically shifting the state shifts the rhs the same way.
        let p = lorenz96(9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = p.eval_rhs(0.37, &x);
        let xs: Vec<f64> = (0..9).map(|i| x[(i + 1) % 9]).collect();
        let fs = p.eval_rhs(0.37, &xs);
        for i in 0..9 {
            assert!((fs[i] - f[(i + 1) % 9]).abs() < 1e-12);
        }
    }

    #[test]
    fn lorenz96_jacobians_consistent() {
        let p = lorenz96(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(2.0..9.0)).collect();
        check_jacobians(&p, 0.2, &y, 1e-6);
    }

    #[test]
    fn lorenz96_time_derivative_matches_fd() {
        let p = lorenz96(6);
        let y = p.y0.clone();
        let t = 0.21;
        let eps = 1e-6;
        let fp = p.eval_rhs(t + eps, &y);
        let fm = p.eval_rhs(t - eps, &y);
        let mut ft = vec![0.0; 6];
        (p.dfdt.as_ref().unwrap())(t, &y, &mut ft);
        for i in 0..6 {
            let fd = (fp[i] - fm[i]) / (2.0 * eps);
            assert!((ft[i] - fd).abs() < 1e-5, "{} vs {}", ft[i], fd);
        }
    }

    #[test]
    fn gray_scott_initial_state_shape() {
        let p = gray_scott(8);
        assert_eq!(p.dim, 128);
        // Patch of side 2 centered at rows/cols 3..5.
        let nn = 64;
        assert_eq!(p.y0[0], 1.0);
        assert_eq!(p.y0[nn], 0.0);
        assert_eq!(p.y0[3 * 8 + 3], 0.5);
        assert_eq!(p.y0[nn + 3 * 8 + 3], 0.25);
        assert_eq!(p.y0[3 * 8 + 5], 1.0);
    }

    #[test]
    fn gray_scott_laplacian_of_uniform_field_vanishes() {
        // Uniform u, v: only the reaction terms remain.
        let n = 6;
        let p = gray_scott(n);
        let mut y = vec![0.0; p.dim];
        for u in y[..n * n].iter_mut() {
            *u = 0.7;
        }
        for v in y[n * n..].iter_mut() {
            *v = 0.3;
        }
        let f = p.eval_rhs(0.0, &y);
        let uv2 = 0.7 * 0.3 * 0.3;
        let expected_u = -uv2 + 0.04 * (1.0 - 0.7);
        let expected_v = uv2 - 0.10 * 0.3;
        for i in 0..n * n {
            assert!((f[i] - expected_u).abs() < 1e-13);
            assert!((f[n * n + i] - expected_v).abs() < 1e-13);
        }
    }

    #[test]
    fn gray_scott_jacobians_consistent() {
        let p = gray_scott(4);
        check_jacobians(&p, 0.0, &p.y0.clone(), 1e-5);
    }

    #[test]
    fn gray_scott_mass_like_balance_of_reaction() {
        // The uv^2 term enters u' and v' with opposite signs.
        let n = 5;
        let p = gray_scott(n);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let y: Vec<f64> = (0..p.dim).map(|_| rng.gen_range(0.1..0.9)).collect();
        let f = p.eval_rhs(0.0, &y);
        for idx in 0..n * n {
            let u = y[idx];
            let v = y[n * n + idx];
            // Strip diffusion by evaluating on a uniform-in-neighbors check:
            // instead verify the identity f_u + f_v = eps terms + linear terms.
            // With random fields just confirm the reaction part algebraically:
            let uv2 = u * v * v;
            let residual_u = f[idx] + uv2 - 0.04 * (1.0 - u);
            let residual_v = f[n * n + idx] - uv2 + 0.10 * v;
            // residual_u is pure diffusion of u, residual_v pure diffusion of
            // v; both must equal eps * lap, so scale-bounded:
            assert!(residual_u.abs() < 0.2 * 4.0 * 25.0 * 2.0);
            assert!(residual_v.abs() < 0.1 * 4.0 * 25.0 * 2.0);
        }
    }

    #[test]
    fn registry_constructs_all_problems() {
        let p = by_name("dahlquist", &serde_json::json!({"lambda": -3.0})).unwrap();
        assert_eq!(p.dim, 1);
        let p = by_name("Lorenz96", &serde_json::json!({"n": 8})).unwrap();
        assert_eq!(p.dim, 8);
        let p = by_name("grayscott", &serde_json::json!({"n": 4})).unwrap();
        assert_eq!(p.dim, 32);
        assert!(by_name("pendulum", &serde_json::json!({})).is_err());
    }

    #[test]
    fn jacobian_operator_exposes_dense_matrix() {
        let p = dahlquist(-4.0, 0.0);
        let op = p.jacobian_at(0.0, &[1.0]);
        assert!(op.dense().is_some());
        let mut out = [0.0];
        op.apply(&[2.0], &mut out);
        assert_eq!(out[0], -8.0);
    }
}
