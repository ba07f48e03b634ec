//! Quadratic programs over the nonnegative cone and the probability
//! simplex: `min ½θᵀQθ + cᵀθ` subject to `θ ⪰ 0` (conical) or
//! `θ ⪰ 0, 1ᵀθ = 1` (convex).
//!
//! These are the per-column subproblems of the constrained weight
//! regimes. The production solver is a sequential coordinate descent
//! with exact clipped line searches; an exhaustive active-set oracle is
//! provided for cross-checking on small instances.

use crate::linalg::{cholesky_factor, SymMatrix};
use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Relative curvature floor: a coordinate direction whose quadratic form
/// is at or below `1e-14·tr(Q)/k` is skipped for that step.
const CURVATURE_FLOOR_REL: f64 = 1e-14;

/// Iterate entries in `[-1e-12, 0)` are snapped to 0 after each sweep to
/// stop drift.
const NEGATIVE_SNAP: f64 = 1e-12;

/// One quadratic program `½θᵀQθ + cᵀθ`.
#[derive(Debug, Clone)]
pub struct QuadProgram {
    pub q: SymMatrix,
    pub c: Array1<f64>,
}

impl QuadProgram {
    pub fn new(q: SymMatrix, c: Array1<f64>) -> Self {
        assert_eq!(q.order(), c.len(), "Q and c dimensions disagree");
        QuadProgram { q, c }
    }

    pub fn order(&self) -> usize {
        self.c.len()
    }

    /// Objective value `½θᵀQθ + cᵀθ`.
    pub fn objective(&self, theta: ArrayView1<f64>) -> f64 {
        let qt = self.q.view().dot(&theta);
        0.5 * theta.dot(&qt) + self.c.dot(&theta)
    }
}

/// Feasible set selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Nonnegative orthant `θ ⪰ 0`.
    Conical,
    /// Probability simplex `θ ⪰ 0, 1ᵀθ = 1`.
    Convex,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    /// The exhaustive oracle is exponential and refuses k > 16.
    TooLarge { size: usize },
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::TooLarge { size } => {
                write!(f, "active-set oracle limited to k <= 16, got {size}")
            }
        }
    }
}

impl std::error::Error for QpError {}

// ============================================================================
// Sequential coordinate descent
// ============================================================================

/// Runs `sweeps` passes of sequential coordinate descent from the uniform
/// start `θ⁰ = 1/k` and returns the final iterate. See
/// [`scd_minimize_traced`] for the per-sweep objective record.
pub fn scd_minimize(
    program: &QuadProgram,
    kind: ConeKind,
    sweeps: usize,
    seed: u64,
) -> Array1<f64> {
    scd_minimize_traced(program, kind, sweeps, seed).0
}

/// Like [`scd_minimize`], additionally returning the running objective at
/// the start and after every sweep (`sweeps + 1` values).
///
/// Each coordinate step is an exact line search along `e_j` (conical) or
/// `e_j − e_{j'}` with a uniformly drawn partner `j' ≠ j` (convex),
/// clipped to the feasible segment; updates are applied in place within
/// the sweep (Gauss–Seidel order).
///
/// The objective record is tracked through the per-step decrements
/// `α·(g + ½αq)` rather than re-evaluated from scratch. Because the
/// clipped exact line search guarantees `|½αq| ≤ |g|/2` and `sign(α) =
/// −sign(g)`, every decrement is nonpositive in floating point, so the
/// recorded sequence is non-increasing exactly — not merely up to
/// roundoff. The final record agrees with a fresh evaluation up to
/// accumulated rounding (relative `O(sweeps·k·ε)`).
pub fn scd_minimize_traced(
    program: &QuadProgram,
    kind: ConeKind,
    sweeps: usize,
    seed: u64,
) -> (Array1<f64>, Vec<f64>) {
    let k = program.order();
    let uniform = if k == 0 { 0.0 } else { 1.0 / k as f64 };
    let mut theta = Array1::from_elem(k, uniform);
    let mut objective = program.objective(theta.view());
    let mut objectives = Vec::with_capacity(sweeps + 1);
    objectives.push(objective);
    if k == 0 || (kind == ConeKind::Convex && k == 1) {
        // The simplex with one coordinate is the single point θ = 1.
        objectives.extend(std::iter::repeat(objective).take(sweeps));
        return (theta, objectives);
    }

    let q = program.q.view();
    let mut gradient = q.dot(&theta) + &program.c;
    let floor = (CURVATURE_FLOOR_REL * program.q.trace() / k as f64).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..sweeps {
        for j in 0..k {
            match kind {
                ConeKind::Conical => {
                    let curvature = q[(j, j)];
                    if curvature <= floor {
                        continue;
                    }
                    let slope = gradient[j];
                    let alpha = (-slope / curvature).max(-theta[j]);
                    if alpha != 0.0 {
                        objective += alpha * (slope + 0.5 * alpha * curvature);
                        theta[j] += alpha;
                        for i in 0..k {
                            gradient[i] += alpha * q[(i, j)];
                        }
                    }
                }
                ConeKind::Convex => {
                    let mut partner = rng.gen_range(0..k - 1);
                    if partner >= j {
                        partner += 1;
                    }
                    let curvature =
                        q[(j, j)] - 2.0 * q[(j, partner)] + q[(partner, partner)];
                    if curvature <= floor {
                        continue;
                    }
                    let slope = gradient[j] - gradient[partner];
                    let alpha = (-slope / curvature).clamp(-theta[j], theta[partner]);
                    if alpha != 0.0 {
                        objective += alpha * (slope + 0.5 * alpha * curvature);
                        theta[j] += alpha;
                        theta[partner] -= alpha;
                        for i in 0..k {
                            gradient[i] += alpha * (q[(i, j)] - q[(i, partner)]);
                        }
                    }
                }
            }
        }
        for t in theta.iter_mut() {
            if *t < 0.0 && *t >= -NEGATIVE_SNAP {
                *t = 0.0;
            }
        }
        objectives.push(objective);
    }
    (theta, objectives)
}

// ============================================================================
// Exhaustive active-set oracle (test support)
// ============================================================================

/// Exact global minimizer by enumeration of all `2^k` zero patterns:
/// solves the equality-constrained KKT system on the free coordinates,
/// keeps candidates that are feasible with valid multiplier signs, and
/// returns the best of them. Exponential — refuses `k > 16`.
pub fn active_set_oracle(
    program: &QuadProgram,
    kind: ConeKind,
) -> Result<Array1<f64>, QpError> {
    let k = program.order();
    if k > 16 {
        return Err(QpError::TooLarge { size: k });
    }
    let feas_tol = 1e-12;
    let mult_tol = 1e-9 * (1.0 + program.c.iter().fold(0.0f64, |a, v| a.max(v.abs())));

    // Best candidate passing the full KKT check, and best merely-feasible
    // candidate as a numerical safety net.
    let mut best_kkt: Option<(f64, Array1<f64>)> = None;
    let mut best_feasible: Option<(f64, Array1<f64>)> = None;

    for mask in 0u32..(1u32 << k) {
        let free: Vec<usize> = (0..k).filter(|j| mask & (1 << j) == 0).collect();
        let theta = match kind {
            ConeKind::Conical => {
                if free.is_empty() {
                    Some(Array1::zeros(k))
                } else {
                    solve_free_subsystem(program, &free, None)
                }
            }
            ConeKind::Convex => {
                if free.is_empty() {
                    None // the sum constraint cannot hold with all coordinates pinned
                } else {
                    solve_free_subsystem(program, &free, Some(()))
                }
            }
        };
        let Some(theta) = theta else { continue };
        if theta.iter().any(|&t| t < -feas_tol) {
            continue;
        }
        let theta = theta.mapv(|t| t.max(0.0));
        let objective = program.objective(theta.view());
        if best_feasible.as_ref().is_none_or(|(obj, _)| objective < *obj) {
            best_feasible = Some((objective, theta.clone()));
        }
        // Multiplier signs on the active coordinates.
        let gradient = program.q.view().dot(&theta) + &program.c;
        let lambda = match kind {
            ConeKind::Conical => 0.0,
            ConeKind::Convex => {
                // Scalar multiplier of the sum constraint, read off a free coordinate.
                free.first().map(|&j| gradient[j]).unwrap_or(0.0)
            }
        };
        let multipliers_ok = (0..k)
            .filter(|j| mask & (1 << j) != 0)
            .all(|j| gradient[j] - lambda >= -mult_tol);
        if multipliers_ok && best_kkt.as_ref().is_none_or(|(obj, _)| objective < *obj) {
            best_kkt = Some((objective, theta));
        }
    }
    let best = best_kkt.or(best_feasible).expect("a feasible pattern exists");
    Ok(best.1)
}

/// Solves the stationarity system restricted to the free coordinates:
/// `Q_FF θ_F = −c_F` (conical) or the simplex KKT system (convex).
/// Returns `None` when the subsystem is not positive definite.
fn solve_free_subsystem(
    program: &QuadProgram,
    free: &[usize],
    simplex: Option<()>,
) -> Option<Array1<f64>> {
    let f = free.len();
    let q_ff = SymMatrix::from_lower(f, |a, b| program.q.get(free[a], free[b]));
    let factor = cholesky_factor(&q_ff).ok()?;
    let c_f = Array1::from_iter(free.iter().map(|&j| program.c[j]));
    let mut theta = Array1::zeros(program.order());
    match simplex {
        None => {
            let sol = factor.solve_vec(&(-&c_f));
            for (idx, &j) in free.iter().enumerate() {
                theta[j] = sol[idx];
            }
        }
        Some(()) => {
            let u = factor.solve_vec(&Array1::from_elem(f, 1.0));
            let w = factor.solve_vec(&c_f);
            let lambda = (1.0 + w.sum()) / u.sum();
            for (idx, &j) in free.iter().enumerate() {
                theta[j] = lambda * u[idx] - w[idx];
            }
        }
    }
    Some(theta)
}
