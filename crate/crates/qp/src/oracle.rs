//! Exact solution of small QPs by enumerating active sets.
//!
//! Every linearly independent set of active rows (each row fixed at its lower
//! or upper bound, equality rows always included) defines an affine subspace;
//! the minimizer of the objective on it comes from a dense KKT solve. The
//! optimum is the best such minimizer that satisfies every constraint.
//!
//! The search is depth first and skips the supersets of a set whose
//! minimizer is already feasible or no better than the incumbent, since
//! adding rows can only raise the minimum. When the minimizer on a set is
//! unique but infeasible, every optimal active set containing it also holds
//! a row that the minimizer violates, at the violated bound, so only those
//! rows are added. Unbounded or flat subproblems branch on every free row.
//!
//! This is a test oracle: it shares nothing with the iterative solver besides
//! the problem type and the residual computation.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::kkt::kkt_residuals;
use crate::{QpError, QpProblem, QpSolution, Status};

pub const MAX_VARIABLES: usize = 12;
pub const MAX_CONSTRAINTS: usize = 20;

const FEAS_TOL: f64 = 1e-9;

struct Dense {
    q: DMatrix<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
}

fn dense(p: &QpProblem) -> Dense {
    let (n, m) = (p.n(), p.m());
    let mut q = DMatrix::zeros(n, n);
    for (r, c, v) in p.q.triplets() {
        q[(r, c)] += v;
    }
    let mut a = DMatrix::zeros(m, n);
    for (r, c, v) in p.a.triplets() {
        a[(r, c)] += v;
    }
    Dense {
        q,
        c: DVector::from_column_slice(&p.c),
        a,
    }
}

fn scale_of(p: &QpProblem) -> f64 {
    let finite = p.l.iter().chain(&p.u).filter(|v| v.is_finite());
    finite
        .chain(&p.c)
        .chain(&p.q.values)
        .chain(&p.a.values)
        .fold(1.0f64, |m, v| m.max(v.abs()))
}

/// An active row and the bound it is held at.
#[derive(Clone, Copy, Debug)]
struct Active {
    row: usize,
    value: f64,
}

fn rows_rank(d: &Dense, active: &[Active]) -> usize {
    if active.is_empty() {
        return 0;
    }
    let mut aa = DMatrix::zeros(active.len(), d.a.ncols());
    for (slot, act) in active.iter().enumerate() {
        aa.set_row(slot, &d.a.row(act.row));
    }
    let lu = aa.full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)].abs()).collect();
    let largest = pivots.iter().fold(0.0f64, |m, &v| m.max(v));
    pivots.iter().filter(|&&v| v > 1e-10 * largest.max(1.0)).count()
}

enum Subproblem {
    /// The active rows are dependent.
    Dependent,
    /// The objective is unbounded below on the affine set.
    Unbounded,
    /// `unique` is false when flat directions leave a family of minimizers.
    Minimizer { x: Vec<f64>, y: Vec<f64>, unique: bool },
}

/// Minimizes the objective on `{x : a_i x = value_i for the active rows}`.
fn solve_active(p: &QpProblem, d: &Dense, active: &[Active]) -> Subproblem {
    let n = p.n();
    let k = active.len();
    if k > 0 && rows_rank(d, active) < k {
        return Subproblem::Dependent;
    }
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&d.q);
    for (slot, act) in active.iter().enumerate() {
        let row = d.a.row(act.row);
        kkt.view_mut((n + slot, 0), (1, n)).copy_from(&row);
        kkt.view_mut((0, n + slot), (n, 1)).copy_from(&row.transpose());
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&d.c));
    for (slot, act) in active.iter().enumerate() {
        rhs[n + slot] = act.value;
    }

    let lu = kkt.clone().full_piv_lu();
    let pivots = lu.u().diagonal().map(f64::abs);
    let well_posed = dim == 0 || pivots.min() > 1e-10 * pivots.max().max(1.0);
    let sol = match well_posed.then(|| lu.solve(&rhs)).flatten() {
        Some(s) => s,
        None => {
            // Flat directions of Q leave the system singular: take the
            // minimum-norm solution and check that it is exact.
            let svd = kkt.clone().svd(true, true);
            let cutoff = 1e-11 * svd.singular_values.max().max(1.0);
            match svd.solve(&rhs, cutoff) {
                Ok(s) => s,
                Err(_) => return Subproblem::Unbounded,
            }
        }
    };
    let resid = (&kkt * &sol - &rhs).amax();
    if !resid.is_finite() || resid > 1e-8 * rhs.amax().max(1.0) {
        return Subproblem::Unbounded;
    }
    let x = sol.rows(0, n).iter().copied().collect();
    let mut y = vec![0.0; p.m()];
    for (slot, act) in active.iter().enumerate() {
        // Same convention as the solver: Qx + c + Aᵀy = 0.
        y[act.row] = sol[n + slot];
    }
    Subproblem::Minimizer { x, y, unique: well_posed }
}

/// Precomputed data for positive definite `Q`: every subproblem then reduces
/// to a small system in the multipliers of the active rows.
struct RangeSpace {
    /// `x₀ = −Q⁻¹c`, the unconstrained minimizer.
    x0: DVector<f64>,
    /// `Q⁻¹Aᵀ`.
    w: DMatrix<f64>,
    /// `AQ⁻¹Aᵀ`.
    gram: DMatrix<f64>,
    ax0: DVector<f64>,
}

impl RangeSpace {
    fn new(p: &QpProblem, d: &Dense) -> Option<Self> {
        let n = p.n();
        if n == 0 {
            return None;
        }
        let chol = d.q.clone().cholesky()?;
        let l = chol.l();
        let diag: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let largest = diag.iter().fold(0.0f64, |m, &v| m.max(v));
        if diag.iter().any(|&v| v <= 1e-10 * largest) {
            return None;
        }
        let x0 = -chol.solve(&d.c);
        let w = chol.solve(&d.a.transpose());
        let gram = &d.a * &w;
        let ax0 = &d.a * &x0;
        Some(RangeSpace { x0, w, gram, ax0 })
    }

    fn solve(&self, p: &QpProblem, active: &[Active]) -> Subproblem {
        let k = active.len();
        if k == 0 {
            return Subproblem::Minimizer {
                x: self.x0.iter().copied().collect(),
                y: vec![0.0; p.m()],
                unique: true,
            };
        }
        let m = DMatrix::from_fn(k, k, |i, j| self.gram[(active[i].row, active[j].row)]);
        let rhs = DVector::from_fn(k, |i, _| self.ax0[active[i].row] - active[i].value);
        let Some(chol) = m.clone().cholesky() else {
            return Subproblem::Dependent;
        };
        let l = chol.l();
        let largest = (0..k).fold(0.0f64, |acc, i| acc.max(m[(i, i)]));
        if (0..k).any(|i| l[(i, i)] * l[(i, i)] <= 1e-10 * largest.max(1e-300)) {
            return Subproblem::Dependent;
        }
        let lambda = chol.solve(&rhs);
        let mut x = self.x0.clone();
        let mut y = vec![0.0; p.m()];
        for (slot, act) in active.iter().enumerate() {
            x.axpy(-lambda[slot], &self.w.column(act.row), 1.0);
            y[act.row] = lambda[slot];
        }
        Subproblem::Minimizer { x: x.iter().copied().collect(), y, unique: true }
    }
}

struct Search<'a> {
    p: &'a QpProblem,
    d: Dense,
    range: Option<RangeSpace>,
    tol: f64,
    /// Candidate rows with their finite bounds, in row order.
    choices: Vec<Active>,
    best: Option<(Vec<f64>, Vec<f64>, f64)>,
    /// Visited sets of choice indices, sorted.
    seen: HashSet<Vec<usize>>,
}

impl Search<'_> {
    fn solve(&self, active: &[Active]) -> Subproblem {
        match &self.range {
            Some(r) => r.solve(self.p, active),
            None => solve_active(self.p, &self.d, active),
        }
    }

    /// Adds the most violated row until the minimizer is feasible. The result
    /// only seeds the incumbent; the enumeration below is what proves
    /// optimality.
    fn greedy(&mut self, root: &[Active]) {
        let mut active = root.to_vec();
        while let Subproblem::Minimizer { x, y, .. } = self.solve(&active) {
            let ax = self.p.a.mul_vec(&x);
            let worst = self
                .choices
                .iter()
                .filter(|c| active.iter().all(|a| a.row != c.row))
                .map(|c| {
                    let (lo, hi) = (self.p.l[c.row], self.p.u[c.row]);
                    let v = ax[c.row];
                    let gap = if c.value == lo { lo - v } else { v - hi };
                    (gap, *c)
                })
                .filter(|(gap, _)| *gap > self.tol)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            match worst {
                Some((_, c)) => active.push(c),
                None => {
                    let f = self.p.objective(&x);
                    self.best = Some((x, y, f));
                    return;
                }
            }
        }
    }

    fn visit(&mut self, active: &mut Vec<Active>, picked: &mut Vec<usize>) {
        let branch: Vec<usize> = match self.solve(active) {
            Subproblem::Dependent => return,
            Subproblem::Unbounded => self.free_choices(active).collect(),
            Subproblem::Minimizer { x, y, unique } => {
                let f = self.p.objective(&x);
                if self.best.as_ref().is_some_and(|b| f >= b.2 - self.tol) {
                    return;
                }
                if self.p.max_violation(&x) <= self.tol {
                    self.best = Some((x, y, f));
                    return;
                }
                if unique {
                    self.violated(active, &x)
                } else {
                    self.free_choices(active).collect()
                }
            }
        };
        if active.len() >= self.p.n() {
            return;
        }
        for k in branch {
            picked.push(k);
            let mut key = picked.clone();
            key.sort_unstable();
            if self.seen.insert(key) {
                active.push(self.choices[k]);
                self.visit(active, picked);
                active.pop();
            }
            picked.pop();
        }
    }

    /// Choices whose row is not yet active.
    fn free_choices<'s>(&'s self, active: &'s [Active]) -> impl Iterator<Item = usize> + 's {
        // A row is held at one bound at a time.
        (0..self.choices.len()).filter(|&k| active.iter().all(|a| a.row != self.choices[k].row))
    }

    /// Choices whose bound `x` crosses, most violated first.
    fn violated(&self, active: &[Active], x: &[f64]) -> Vec<usize> {
        let ax = self.p.a.mul_vec(x);
        let mut out: Vec<(f64, usize)> = self
            .free_choices(active)
            .filter_map(|k| {
                let c = self.choices[k];
                let v = ax[c.row];
                let gap = if c.value == self.p.l[c.row] { c.value - v } else { v - c.value };
                (gap > 0.0).then_some((gap, k))
            })
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, k)| k).collect()
    }
}

/// Enumerates active sets and returns the exact optimum.
///
/// Limited to `n ≤ 12` variables and `m ≤ 20` constraints.
pub fn enumerate_active_set_oracle(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let (n, m) = (p.n(), p.m());
    if n > MAX_VARIABLES || m > MAX_CONSTRAINTS {
        return Err(QpError::OracleTooLarge { n, m });
    }
    let d = dense(p);
    let tol = FEAS_TOL * scale_of(p);

    // Dependent equality rows are dropped; feasibility is still checked
    // against every row.
    let mut root: Vec<Active> = Vec::new();
    for i in (0..m).filter(|&i| p.l[i] == p.u[i]) {
        root.push(Active { row: i, value: p.l[i] });
        if rows_rank(&d, &root) < root.len() {
            root.pop();
        }
    }
    let mut choices = Vec::new();
    for i in (0..m).filter(|&i| p.l[i] != p.u[i]) {
        for value in [p.l[i], p.u[i]] {
            if value.is_finite() {
                choices.push(Active { row: i, value });
            }
        }
    }

    let range = RangeSpace::new(p, &d);
    let mut search = Search { p, d, range, tol, choices, best: None, seen: HashSet::new() };
    search.greedy(&root);
    search.visit(&mut root, &mut Vec::new());

    let Some((x, y, objective)) = search.best else {
        // No feasible minimizer: infeasible or unbounded.
        return Ok(QpSolution {
            x: vec![f64::NAN; n],
            y: vec![f64::NAN; m],
            status: Status::InfeasibleDetected,
            iterations: 0,
            objective: f64::NAN,
            kkt: Default::default(),
            polished: false,
            merit_log: Vec::new(),
            rho_updates: Vec::new(),
        });
    };
    Ok(QpSolution {
        kkt: kkt_residuals(p, &x, &y),
        x,
        y,
        status: Status::Optimal,
        iterations: 0,
        objective,
        polished: false,
        merit_log: Vec::new(),
        rho_updates: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_analytic_bound_case() {
        let p = QpProblem::from_triplets(
            1,
            &[(0, 0, 2.0)],
            vec![-6.0],
            &[(0, 0, 1.0)],
            vec![f64::NEG_INFINITY],
            vec![1.0],
        )
        .unwrap();
        let s = enumerate_active_set_oracle(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.y[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn flat_direction_is_handled() {
        // min (x0 + x1 - 2)², x0 >= 0, x1 >= 0, x0 + x1 <= 1 → objective value 1.
        let p = QpProblem::from_triplets(
            2,
            &[(0, 0, 2.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 2.0)],
            vec![-4.0, -4.0],
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0), (2, 1, 1.0)],
            vec![0.0, 0.0, f64::NEG_INFINITY],
            vec![f64::INFINITY, f64::INFINITY, 1.0],
        )
        .unwrap();
        let s = enumerate_active_set_oracle(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 4.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refuses_large_problems() {
        let n = MAX_VARIABLES + 1;
        let q: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        let p = QpProblem::from_triplets(n, &q, vec![0.0; n], &[], vec![], vec![]).unwrap();
        assert!(matches!(
            enumerate_active_set_oracle(&p),
            Err(QpError::OracleTooLarge { .. })
        ));
    }
}
