//! Active-set polishing.
//!
//! Starting from the active set suggested by an ADMM iterate, repeatedly
//! solve the equality-constrained QP on the current active set and update
//! the set with the primal-dual active-set rule until it stops changing.

use crate::csc::CscMatrix;
use crate::ldl::{sym_upper_mul_vec, LdlFactor};
use crate::scaling::ScaledProblem;
use crate::QpError;

const REGULARIZATION: f64 = 1e-9;
const REFINEMENT_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Inactive,
    Lower,
    Upper,
}

fn initial_sides(p: &ScaledProblem, z: &[f64], y: &[f64]) -> Vec<Side> {
    (0..p.m())
        .map(|i| {
            if p.l[i] == p.u[i] {
                Side::Lower
            } else if p.l[i].is_finite() && z[i] - p.l[i] < -y[i] {
                Side::Lower
            } else if p.u[i].is_finite() && p.u[i] - z[i] < y[i] {
                Side::Upper
            } else {
                Side::Inactive
            }
        })
        .collect()
}

fn next_sides(p: &ScaledProblem, ax: &[f64], y: &[f64]) -> Vec<Side> {
    (0..p.m())
        .map(|i| {
            if p.l[i] == p.u[i] {
                Side::Lower
            } else if p.l[i].is_finite() && y[i] + (ax[i] - p.l[i]) < 0.0 {
                Side::Lower
            } else if p.u[i].is_finite() && y[i] + (ax[i] - p.u[i]) > 0.0 {
                Side::Upper
            } else {
                Side::Inactive
            }
        })
        .collect()
}

/// Solves the equality-constrained QP with the rows in `sides` fixed at their
/// bound. Returns `(x, y)` in scaled coordinates.
fn solve_on_active_set(p: &ScaledProblem, sides: &[Side]) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = p.n();
    let active: Vec<usize> = (0..p.m()).filter(|&i| sides[i] != Side::Inactive).collect();
    let k = active.len();
    let a_act = p.a.select_rows(&active);

    let mut trip: Vec<(usize, usize, f64)> = p.q.triplets().filter(|&(r, c, _)| r <= c).collect();
    let mut exact = trip.clone();
    for j in 0..n {
        trip.push((j, j, REGULARIZATION));
        exact.push((j, j, 0.0));
    }
    for (r, c, v) in a_act.triplets() {
        trip.push((c, n + r, v));
        exact.push((c, n + r, v));
    }
    for r in 0..k {
        trip.push((n + r, n + r, -REGULARIZATION));
        exact.push((n + r, n + r, 0.0));
    }
    let reg = CscMatrix::from_triplets(n + k, n + k, &trip)?;
    let kkt = CscMatrix::from_triplets(n + k, n + k, &exact)?;
    let factor = LdlFactor::new(&reg)?;

    let mut rhs: Vec<f64> = p.c.iter().map(|v| -v).collect();
    rhs.extend(active.iter().map(|&i| match sides[i] {
        Side::Upper => p.u[i],
        _ => p.l[i],
    }));
    let mut sol = factor.solve(&rhs);
    for _ in 0..REFINEMENT_STEPS {
        let kx = sym_upper_mul_vec(&kkt, &sol);
        let resid: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
        let delta = factor.solve(&resid);
        sol.iter_mut().zip(&delta).for_each(|(s, d)| *s += d);
    }

    let x = sol[..n].to_vec();
    let mut y = vec![0.0; p.m()];
    for (slot, &i) in active.iter().enumerate() {
        y[i] = sol[n + slot];
    }
    Ok((x, y))
}

/// Runs the active-set iteration. `z` and `y` are the scaled ADMM iterates
/// used to guess the initial active set. Every candidate is scored by
/// `score` (lower is better) and the best one is returned.
pub(crate) fn polish<F>(
    p: &ScaledProblem,
    z: &[f64],
    y: &[f64],
    max_rounds: usize,
    mut score: F,
) -> Option<(Vec<f64>, Vec<f64>, f64)>
where
    F: FnMut(&[f64], &[f64]) -> f64,
{
    let mut sides = initial_sides(p, z, y);
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..max_rounds.max(1) {
        let Ok((x, y)) = solve_on_active_set(p, &sides) else {
            break;
        };
        let s = score(&x, &y);
        if best.as_ref().is_none_or(|b| s < b.2) {
            best = Some((x.clone(), y.clone(), s));
        }
        let ax = p.a.mul_vec(&x);
        let next = next_sides(p, &ax, &y);
        if next == sides {
            break;
        }
        sides = next;
    }
    best
}
