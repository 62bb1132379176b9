//! Linear stability analysis: characteristic polynomials, boundary-locus
//! curves, stability angles, zero-stability checks, the one-step stability
//! matrix of the variable-stepsize recurrence, and the design objectives
//! used when the free coefficients were optimized.
//!
//! Applied to `y' = lambda y` with `z = h lambda`, every family collapses to
//! the scalar recurrence `rho(zeta) = z sigma(zeta)` where
//!
//! ```text
//! rho(zeta)   = sum_{i=-1}^{k-1} alpha_i zeta^{k-1-i}
//! sigma(zeta) = sum_{i=-1}^{k-1} (beta_i + mu_i) zeta^{k-1-i}
//! ```
//!
//! (for BDF, `sigma(zeta) = beta_{-1} zeta^k`). The boundary locus
//! `z(theta) = rho(e^{i theta}) / sigma(e^{i theta})` traces the edge of the
//! stability region; the stability angle is the half-opening of the largest
//! wedge `|arg(-z)| < phi` free of boundary points.

use crate::coeffs::{Family, MethodCoefficients, StepsizeFractions};
use num_complex::Complex64;

/// Number of boundary samples used for angle estimation and the A-stability
/// scan.
pub const BOUNDARY_SAMPLES: usize = 8192;

/// Coefficients of the characteristic polynomials `(rho, sigma)` in
/// descending powers: `poly[0] zeta^k + ... + poly[k]`.
pub fn characteristic_polynomials(m: &MethodCoefficients) -> (Vec<f64>, Vec<f64>) {
    let k = m.k;
    // zeta power for coefficient index i (i = -1 stored at slot 0) is k-1-i,
    // so alpha_{-1} multiplies zeta^k.
    let mut rho = vec![0.0; k + 1];
    let mut sigma = vec![0.0; k + 1];
    for i in 0..=k {
        rho[i] = m.alpha[i];
    }
    sigma[0] = m.beta_m1 + m.mu[0];
    for i in 0..k {
        sigma[i + 1] = m.beta[i] + m.mu[i + 1];
    }
    (rho, sigma)
}

/// Evaluates a polynomial in descending-power coefficient order at `x`.
pub fn polyval(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

fn polyval_deriv(coeffs: &[f64], x: Complex64) -> Complex64 {
    let n = coeffs.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &c) in coeffs.iter().take(n - 1).enumerate() {
        let power = (n - 1 - j) as f64;
        acc = acc * x + c * power;
    }
    acc
}

/// All complex roots of a real-coefficient polynomial (descending powers)
/// via Aberth-Ehrlich simultaneous iteration.
///
/// Leading zeros are trimmed; trailing zeros contribute exact zero roots.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let first = coeffs.iter().position(|&c| c != 0.0);
    let Some(first) = first else {
        return Vec::new();
    };
    let mut work: Vec<f64> = coeffs[first..].to_vec();
    let mut zero_roots = 0;
    while work.len() > 1 && *work.last().unwrap() == 0.0 {
        work.pop();
        zero_roots += 1;
    }
    let degree = work.len() - 1;
    let mut roots: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); zero_roots];
    if degree == 0 {
        return roots;
    }
    // Cauchy bound for an initial circle of guesses.
    let lead = work[0].abs();
    let radius = 1.0
        + work[1..]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..degree)
        .map(|j| {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / degree as f64 + 0.4;
            Complex64::from_polar(0.5 * radius.max(1e-3), angle)
        })
        .collect();
    for _ in 0..200 {
        let mut max_step = 0.0_f64;
        let snapshot = z.clone();
        for j in 0..degree {
            let p = polyval(&work, snapshot[j]);
            let dp = polyval_deriv(&work, snapshot[j]);
            let newton = if dp.norm() > 0.0 { p / dp } else { p };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for (l, &other) in snapshot.iter().enumerate() {
                if l != j {
                    let d = snapshot[j] - other;
                    if d.norm() > 1e-300 {
                        repulsion += Complex64::new(1.0, 0.0) / d;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let step = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[j] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * (1.0 + radius) {
            break;
        }
    }
    roots.extend(z);
    roots
}

/// True when every root of `rho` lies in the closed unit disk and the roots
/// on the unit circle are simple.
pub fn zero_stable(m: &MethodCoefficients) -> bool {
    let (rho, _) = characteristic_polynomials(m);
    let roots = polynomial_roots(&rho);
    let tol = 1e-9;
    for r in &roots {
        if r.norm() > 1.0 + tol {
            return false;
        }
    }
    let on_circle: Vec<&Complex64> = roots.iter().filter(|r| r.norm() >= 1.0 - tol).collect();
    for (a, &ra) in on_circle.iter().enumerate() {
        for &rb in on_circle.iter().skip(a + 1) {
            if (ra - rb).norm() <= 1e-7 {
                return false;
            }
        }
    }
    true
}

/// One point of the stability-boundary locus.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BoundaryPoint {
    /// Angle parameter along the unit circle, in (0, pi).
    pub theta: f64,
    /// Real part of `z(theta)`.
    pub re_z: f64,
    /// Imaginary part of `z(theta)`.
    pub im_z: f64,
}

/// Samples the boundary locus `z(theta) = rho(e^{i theta}) / sigma(e^{i theta})`
/// at `n` angles in the open interval `(0, pi)`.
pub fn boundary_locus(m: &MethodCoefficients, n: usize) -> Vec<BoundaryPoint> {
    let (rho, sigma) = characteristic_polynomials(m);
    (1..=n)
        .map(|j| {
            let theta = std::f64::consts::PI * j as f64 / (n + 1) as f64;
            let zeta = Complex64::from_polar(1.0, theta);
            let z = polyval(&rho, zeta) / polyval(&sigma, zeta);
            BoundaryPoint {
                theta,
                re_z: z.re,
                im_z: z.im,
            }
        })
        .collect()
}

fn wedge_angle_of(z: Complex64) -> f64 {
    // Angle of -z measured from the negative real axis: |arg(-z)|.
    (-z).arg().abs()
}

fn locus_angle(m: &MethodCoefficients, theta: f64) -> f64 {
    let (rho, sigma) = characteristic_polynomials(m);
    let zeta = Complex64::from_polar(1.0, theta);
    wedge_angle_of(polyval(&rho, zeta) / polyval(&sigma, zeta))
}

/// The stability angle `phi` in degrees: the method's stability region
/// contains the wedge `|arg(-z)| < phi`. A-stable methods report exactly 90.
///
/// Estimated from [`BOUNDARY_SAMPLES`] boundary points, then sharpened by a
/// golden-section minimization around the best sample to about 1e-4 degrees.
pub fn stability_angle_degrees(m: &MethodCoefficients) -> f64 {
    let pts = boundary_locus(m, BOUNDARY_SAMPLES);
    let min_re = pts.iter().map(|p| p.re_z).fold(f64::INFINITY, f64::min);
    if min_re >= -1e-9 {
        // The whole boundary stays in the closed right half-plane: A-stable.
        return 90.0;
    }
    let (best_idx, _) = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (i, wedge_angle_of(Complex64::new(p.re_z, p.im_z))))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let lo = if best_idx == 0 { 1e-12 } else { pts[best_idx - 1].theta };
    let hi = if best_idx + 1 == pts.len() {
        std::f64::consts::PI - 1e-12
    } else {
        pts[best_idx + 1].theta
    };
    // Golden-section minimization of theta -> |arg(-z(theta))|.
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c1 = b - gr * (b - a);
    let mut c2 = a + gr * (b - a);
    let mut f1 = locus_angle(m, c1);
    let mut f2 = locus_angle(m, c2);
    let tol = 1e-4_f64.to_radians() * 1e-2;
    while (b - a) > tol {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - gr * (b - a);
            f1 = locus_angle(m, c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + gr * (b - a);
            f2 = locus_angle(m, c2);
        }
    }
    f1.min(f2).to_degrees()
}

/// Minimum real part of the boundary locus over the standard sample count —
/// nonnegative (to tolerance) exactly for A-stable methods.
pub fn boundary_min_real(m: &MethodCoefficients) -> f64 {
    boundary_locus(m, BOUNDARY_SAMPLES)
        .iter()
        .map(|p| p.re_z)
        .fold(f64::INFINITY, f64::min)
}

/// The one-step propagation matrix of the scalar test-equation recurrence at
/// `z = h lambda`: companion form whose first row is
/// `(-alpha_i + z (beta_i + mu_i)) / (1 - z w)` for `i = 0..k-1`, where `w`
/// is the implicit weight (`mu_{-1}` or `beta_{-1}`).
pub fn stability_matrix(m: &MethodCoefficients, z: Complex64) -> Vec<Vec<Complex64>> {
    let k = m.k;
    let w = m.implicit_weight();
    let denom = Complex64::new(1.0, 0.0) - z * w;
    let mut mat = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for i in 0..k {
        let explicit = m.beta[i] + m.mu[i + 1];
        mat[0][i] = (-m.alpha[i + 1] + z * explicit) / denom;
    }
    for r in 1..k {
        mat[r][r - 1] = Complex64::new(1.0, 0.0);
    }
    mat
}

/// Spectral radius of a small dense complex matrix via its characteristic
/// companion structure: here computed from the roots of
/// `det(zeta I - M) = 0` using the first-row companion coefficients.
pub fn companion_spectral_radius(first_row: &[Complex64]) -> f64 {
    // Characteristic polynomial of a companion matrix with given first row:
    // zeta^k - r_0 zeta^{k-1} - ... - r_{k-1}.
    let k = first_row.len();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
    coeffs[0] = Complex64::new(1.0, 0.0);
    for i in 0..k {
        coeffs[i + 1] = -first_row[i];
    }
    complex_roots(&coeffs)
        .iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max)
}

/// Spectral radius of the stability matrix at `z`.
pub fn stability_matrix_spectral_radius(m: &MethodCoefficients, z: Complex64) -> f64 {
    let mat = stability_matrix(m, z);
    companion_spectral_radius(&mat[0])
}

/// Aberth-Ehrlich iteration for complex coefficients (descending powers).
pub fn complex_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let first = coeffs.iter().position(|c| c.norm() != 0.0);
    let Some(first) = first else {
        return Vec::new();
    };
    let mut work: Vec<Complex64> = coeffs[first..].to_vec();
    let mut zero_roots = 0;
    while work.len() > 1 && work.last().unwrap().norm() == 0.0 {
        work.pop();
        zero_roots += 1;
    }
    let degree = work.len() - 1;
    let mut roots = vec![Complex64::new(0.0, 0.0); zero_roots];
    if degree == 0 {
        return roots;
    }
    let lead = work[0].norm();
    let radius = 1.0 + work[1..].iter().map(|c| c.norm() / lead).fold(0.0, f64::max);
    let eval = |cs: &[Complex64], x: Complex64| -> Complex64 {
        cs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    };
    let eval_d = |cs: &[Complex64], x: Complex64| -> Complex64 {
        let n = cs.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &c) in cs.iter().take(n - 1).enumerate() {
            acc = acc * x + c * (n - 1 - j) as f64;
        }
        acc
    };
    let mut z: Vec<Complex64> = (0..degree)
        .map(|j| {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / degree as f64 + 0.4;
            Complex64::from_polar(0.5 * radius.max(1e-3), angle)
        })
        .collect();
    for _ in 0..200 {
        let snapshot = z.clone();
        let mut max_step = 0.0_f64;
        for j in 0..degree {
            let p = eval(&work, snapshot[j]);
            let dp = eval_d(&work, snapshot[j]);
            let newton = if dp.norm() > 0.0 { p / dp } else { p };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for (l, &other) in snapshot.iter().enumerate() {
                if l != j {
                    let d = snapshot[j] - other;
                    if d.norm() > 1e-300 {
                        repulsion += Complex64::new(1.0, 0.0) / d;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let step = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[j] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * (1.0 + radius) {
            break;
        }
    }
    roots.extend(z);
    roots
}

/// First design objective: `1 / (1 + phi_degrees)` — smaller is better, so
/// maximizing the stability angle minimizes this.
pub fn objective_stability(m: &MethodCoefficients) -> f64 {
    1.0 / (1.0 + stability_angle_degrees(m))
}

/// Second design objective: `rho_a^2 + rho_b^2` at `ell = p + 1` on the
/// uniform grid — the squared magnitude of the leading truncation residuals.
pub fn objective_accuracy(m: &MethodCoefficients) -> f64 {
    let c = StepsizeFractions::uniform(m.k);
    let (rho_a, rho_b) = crate::coeffs::order_residuals(m, &c, (m.p + 1) as u32);
    rho_a * rho_a + rho_b * rho_b
}

/// Frozen reference stability angles (degrees) for the tabulated methods,
/// indexed by `k - 1`.
pub fn reference_angle(family: Family, k: usize) -> Option<f64> {
    let table: [f64; 5] = match family {
        Family::Limm => [90.0, 90.0, 87.7849, 78.0742, 72.9999],
        Family::LimmW => [90.0, 90.0, 87.3899, 77.9101, 70.3168],
        Family::Bdf => [90.0, 90.0, 86.0324, 73.3517, 51.8398],
    };
    table.get(k - 1).copied()
}
