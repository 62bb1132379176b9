//! Stiff-ODE time integration with linearly implicit multistep methods.
//!
//! The toolkit implements two families of k-step methods (orders 1 through 5)
//! that advance a stiff initial value problem with exactly one linear solve per
//! step:
//!
//! * **LIMM** — linearly implicit multistep methods whose order conditions
//!   assume the exact Jacobian of the right-hand side;
//! * **LIMM-W** — a W-variant whose order conditions hold for an arbitrary
//!   matrix in place of the Jacobian, so the matrix may be frozen and reused
//!   across steps.
//!
//! A classical BDF integrator (simplified-Newton inner solver) is built in the
//! same framework as a comparator. All three families come in fixed-step form
//! (for convergence studies) and as a self-starting variable-stepsize,
//! variable-order driver based on divided-difference histories.
//!
//! Module map:
//!
//! * [`problems`] — ODE problem abstraction and the benchmark corpus
//!   (Dahlquist, Lorenz-96, Gray–Scott).
//! * [`linalg`] — dense LU and matrix-free restarted GMRES behind one
//!   linear-operator abstraction.
//! * [`coeffs`] — fixed and variable-stepsize method coefficients, order
//!   condition residuals, error constants, and a verifier.
//! * [`stability`] — characteristic polynomials, root locus, stability
//!   angles, zero-stability, companion stability matrices, design objectives.
//! * [`history`] — divided-difference history storage and update recurrences.
//! * [`integrate`] — step kernels, local error estimation, the adaptive
//!   controller, and the fixed-step driver.
//! * [`exec`] — sequential/parallel execution strategy for sweep workloads.

pub mod coeffs;
pub mod driver;
pub mod exec;
pub mod history;
pub mod integrate;
pub mod linalg;
pub mod problems;
pub mod stability;

mod tables;
