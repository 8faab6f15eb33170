//! Operator-splitting (ADMM) iteration with over-relaxation, adaptive
//! penalty, infeasibility detection and a final active-set polish.

use crate::csc::{inf_norm, CscMatrix};
use crate::kkt::kkt_residuals;
use crate::ldl::{LdlFactor, LdlSymbolic};
use crate::polish::polish;
use crate::scaling::ScaledProblem;
use crate::{QpError, QpProblem, QpSolution, Status};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_ADAPT_RATIO: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Settings {
    /// Absolute tolerance on every KKT residual of the unscaled problem.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub scaling_iters: usize,
    pub polish: bool,
    pub polish_rounds: usize,
    /// Residuals are evaluated every `check_interval` iterations.
    pub check_interval: usize,
    pub infeasibility_tol: f64,
    /// Record the fixed-point residual of every iteration.
    pub record_merit: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tol: 1e-6,
            max_iter: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            scaling_iters: 10,
            polish: true,
            polish_rounds: 25,
            check_interval: 25,
            infeasibility_tol: 1e-7,
            record_merit: false,
        }
    }
}

/// Solves with default settings, overriding the tolerance and iteration cap.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    Solver::new(Settings {
        tol,
        max_iter,
        ..Settings::default()
    })
    .solve(p)
}

#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub settings: Settings,
}

struct KktSystem {
    symbolic: LdlSymbolic,
    factor: LdlFactor,
}

impl KktSystem {
    fn assemble(sp: &ScaledProblem, sigma: f64, rho: &[f64]) -> Result<CscMatrix, QpError> {
        let n = sp.n();
        let m = sp.m();
        let mut trip: Vec<(usize, usize, f64)> = sp.q.triplets().filter(|&(r, c, _)| r <= c).collect();
        for j in 0..n {
            trip.push((j, j, sigma));
        }
        for (r, c, v) in sp.a.triplets() {
            trip.push((c, n + r, v));
        }
        for (i, &r) in rho.iter().enumerate() {
            trip.push((n + i, n + i, -1.0 / r));
        }
        CscMatrix::from_triplets(n + m, n + m, &trip)
    }

    fn new(sp: &ScaledProblem, sigma: f64, rho: &[f64]) -> Result<Self, QpError> {
        let k = Self::assemble(sp, sigma, rho)?;
        let symbolic = LdlSymbolic::analyse(&k)?;
        let factor = symbolic.factor(&k)?;
        Ok(KktSystem { symbolic, factor })
    }

    fn refactor(&mut self, sp: &ScaledProblem, sigma: f64, rho: &[f64]) -> Result<(), QpError> {
        let k = Self::assemble(sp, sigma, rho)?;
        self.factor = self.symbolic.factor(&k)?;
        Ok(())
    }
}

fn project(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

fn rho_vector(sp: &ScaledProblem, rho: f64) -> Vec<f64> {
    (0..sp.m())
        .map(|i| {
            let (lo, hi) = (sp.l[i], sp.u[i]);
            if !lo.is_finite() && !hi.is_finite() {
                RHO_MIN
            } else if lo == hi {
                (rho * RHO_EQ_FACTOR).min(RHO_MAX)
            } else {
                rho
            }
        })
        .collect()
}

/// Primal-infeasibility certificate test on an (unscaled) dual increment.
fn certifies_infeasibility(p: &QpProblem, dy: &[f64], tol: f64) -> bool {
    let norm = inf_norm(dy);
    if norm <= 1e-14 {
        return false;
    }
    let aty = p.a.tr_mul_vec(dy);
    if inf_norm(&aty) > tol * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..p.m() {
        if dy[i] > tol * norm {
            if !p.u[i].is_finite() {
                return false;
            }
            support += p.u[i] * dy[i];
        } else if dy[i] < -tol * norm {
            if !p.l[i].is_finite() {
                return false;
            }
            support += p.l[i] * dy[i];
        }
    }
    support < -tol * norm
}

impl Solver {
    pub fn new(settings: Settings) -> Self {
        Solver { settings }
    }

    pub fn solve(&self, p: &QpProblem) -> Result<QpSolution, QpError> {
        p.validate()?;
        let s = &self.settings;
        let (n, m) = (p.n(), p.m());
        let sp = ScaledProblem::new(p, s.scaling_iters);

        let mut rho_scalar = s.rho;
        let mut rho = rho_vector(&sp, rho_scalar);
        let mut kkt = KktSystem::new(&sp, s.sigma, &rho)?;

        let mut x = vec![0.0; n];
        // z must be the projection of z + y/ρ for the splitting to be consistent.
        let mut z: Vec<f64> = (0..m).map(|i| project(0.0, sp.l[i], sp.u[i])).collect();
        let mut y = vec![0.0; m];
        let mut x_tilde = vec![0.0; n];
        let mut z_tilde = vec![0.0; m];
        let mut rhs = vec![0.0; n + m];
        let mut ax = vec![0.0; m];

        let mut merit_log = Vec::new();
        let mut rho_updates = Vec::new();
        let mut polish_trigger = 1e-3;
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        let mut status = Status::MaxIter;
        let mut iterations = 0;

        let evaluate = |xs: &[f64], ys: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
            let xu = sp.unscale_x(xs);
            let yu = sp.unscale_y(ys);
            let r = kkt_residuals(p, &xu, &yu).max();
            (xu, yu, r)
        };

        for k in 1..=s.max_iter {
            iterations = k;
            let y_prev = y.clone();
            for j in 0..n {
                rhs[j] = s.sigma * x[j] - sp.c[j];
            }
            for i in 0..m {
                rhs[n + i] = z[i] - y[i] / rho[i];
            }
            kkt.factor.solve_in_place(&mut rhs);
            x_tilde.copy_from_slice(&rhs[..n]);
            for i in 0..m {
                z_tilde[i] = z[i] + (rhs[n + i] - y[i]) / rho[i];
            }

            let mut merit = 0.0;
            for j in 0..n {
                let next = s.alpha * x_tilde[j] + (1.0 - s.alpha) * x[j];
                merit += s.sigma * (next - x[j]).powi(2);
                x[j] = next;
            }
            for i in 0..m {
                let v_prev = z[i] + y[i] / rho[i];
                let relaxed = s.alpha * z_tilde[i] + (1.0 - s.alpha) * z[i];
                let v = relaxed + y[i] / rho[i];
                let z_next = project(v, sp.l[i], sp.u[i]);
                y[i] += rho[i] * (relaxed - z_next);
                z[i] = z_next;
                merit += rho[i] * (v - v_prev).powi(2);
            }
            if s.record_merit {
                merit_log.push(merit.sqrt());
            }

            let last = k == s.max_iter;
            if k % s.check_interval != 0 && !last {
                continue;
            }

            // Convergence on the original problem.
            let (xu, yu, resid) = evaluate(&x, &y);
            if best.as_ref().is_none_or(|b| resid < b.2) {
                best = Some((xu, yu, resid));
            }
            if resid <= s.tol {
                status = Status::Optimal;
                break;
            }

            // Scaled relative residuals drive polishing and the penalty update.
            sp.a.mul_vec_into(&x, &mut ax);
            let qx = sp.q.mul_vec(&x);
            let aty = sp.a.tr_mul_vec(&y);
            let prim: Vec<f64> = ax.iter().zip(&z).map(|(a, b)| a - b).collect();
            let dual: Vec<f64> = (0..n).map(|j| qx[j] + sp.c[j] + aty[j]).collect();
            let prim_rel = inf_norm(&prim) / inf_norm(&ax).max(inf_norm(&z)).max(1e-12);
            let dual_rel = inf_norm(&dual)
                / inf_norm(&qx).max(inf_norm(&aty)).max(inf_norm(&sp.c)).max(1e-12);

            if s.polish && (prim_rel.max(dual_rel) <= polish_trigger || last) {
                polish_trigger *= 0.1;
                if let Some((px, py, presid)) =
                    polish(&sp, &z, &y, s.polish_rounds, |xs, ys| evaluate(xs, ys).2)
                {
                    if presid <= s.tol {
                        return Ok(self.finish(p, sp.unscale_x(&px), sp.unscale_y(&py), Status::Optimal, iterations, true, merit_log, rho_updates));
                    }
                }
            }

            let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            if certifies_infeasibility(p, &sp.unscale_y(&dy), s.infeasibility_tol) {
                status = Status::InfeasibleDetected;
                break;
            }

            if s.adaptive_rho && !last {
                let ratio = (prim_rel / dual_rel.max(1e-30)).sqrt();
                let proposed = (rho_scalar * ratio).clamp(RHO_MIN, RHO_MAX);
                if proposed > rho_scalar * RHO_ADAPT_RATIO || proposed < rho_scalar / RHO_ADAPT_RATIO {
                    rho_scalar = proposed;
                    let new_rho = rho_vector(&sp, rho_scalar);
                    kkt.refactor(&sp, s.sigma, &new_rho)?;
                    rho = new_rho;
                    rho_updates.push(k);
                }
            }
        }

        let (xu, yu) = match status {
            Status::Optimal | Status::InfeasibleDetected => (sp.unscale_x(&x), sp.unscale_y(&y)),
            Status::MaxIter => {
                let (bx, by, _) = best.expect("at least one check ran");
                (bx, by)
            }
        };
        Ok(self.finish(p, xu, yu, status, iterations, false, merit_log, rho_updates))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        p: &QpProblem,
        x: Vec<f64>,
        y: Vec<f64>,
        status: Status,
        iterations: usize,
        polished: bool,
        merit_log: Vec<f64>,
        rho_updates: Vec<usize>,
    ) -> QpSolution {
        let kkt = kkt_residuals(p, &x, &y);
        QpSolution {
            objective: p.objective(&x),
            x,
            y,
            status,
            iterations,
            kkt,
            polished,
            merit_log,
            rho_updates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(upper: f64) -> QpProblem {
        QpProblem::from_triplets(
            1,
            &[(0, 0, 2.0)],
            vec![-6.0],
            &[(0, 0, 1.0)],
            vec![f64::NEG_INFINITY],
            vec![upper],
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem::from_triplets(1, &[(0, 0, 2.0)], vec![-6.0], &[], vec![], vec![]).unwrap();
        let s = solve_qp(&p, 1e-6, 200_000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-6);
        // (x-3)² = objective + 9
        assert!((s.objective + 9.0).abs() < 1e-9);
    }

    #[test]
    fn active_upper_bound() {
        let s = solve_qp(&one_dim(1.0), 1e-6, 200_000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-8);
        assert!((s.objective + 9.0 - 4.0).abs() < 1e-8);
        assert!((s.y[0] - 4.0).abs() < 1e-6);
        assert!(s.kkt.within(1e-6));
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x >= 1 and x <= 0
        let p = QpProblem::from_triplets(
            1,
            &[(0, 0, 1.0)],
            vec![0.0],
            &[(0, 0, 1.0), (1, 0, 1.0)],
            vec![1.0, f64::NEG_INFINITY],
            vec![f64::INFINITY, 0.0],
        )
        .unwrap();
        let s = solve_qp(&p, 1e-6, 50_000).unwrap();
        assert_eq!(s.status, Status::InfeasibleDetected);
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let mut settings = Settings {
            max_iter: 3,
            check_interval: 1,
            polish: false,
            ..Settings::default()
        };
        settings.adaptive_rho = false;
        let s = Solver::new(settings).solve(&one_dim(1.0)).unwrap();
        assert_eq!(s.status, Status::MaxIter);
        assert_eq!(s.iterations, 3);
    }
}
