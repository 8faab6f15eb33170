//! Ruiz equilibration of the KKT matrix plus cost scaling.

use crate::csc::{inf_norm, CscMatrix};
use crate::QpProblem;

const MIN_NORM: f64 = 1e-4;
const MAX_NORM: f64 = 1e4;

fn clamp_norm(v: f64) -> f64 {
    if v < MIN_NORM {
        1.0
    } else {
        v.min(MAX_NORM)
    }
}

/// A problem in scaled coordinates `x̄ = D⁻¹x`, with rows scaled by `E` and
/// the cost scaled by `cost`.
#[derive(Debug, Clone)]
pub(crate) struct ScaledProblem {
    pub q: CscMatrix,
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub cost: f64,
}

impl ScaledProblem {
    pub fn new(p: &QpProblem, iterations: usize) -> Self {
        let (n, m) = (p.n(), p.m());
        let mut q = p.q.clone();
        let mut a = p.a.clone();
        let mut c = p.c.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut cost = 1.0;

        for _ in 0..iterations {
            let q_cols = q.col_inf_norms();
            let a_cols = a.col_inf_norms();
            let a_rows = a.row_inf_norms();
            let dk: Vec<f64> = (0..n)
                .map(|j| 1.0 / clamp_norm(q_cols[j].max(a_cols[j])).sqrt())
                .collect();
            let ek: Vec<f64> = a_rows.iter().map(|&r| 1.0 / clamp_norm(r).sqrt()).collect();
            q.scale(&dk, &dk);
            a.scale(&ek, &dk);
            for j in 0..n {
                c[j] *= dk[j];
                d[j] *= dk[j];
            }
            for i in 0..m {
                e[i] *= ek[i];
            }

            let q_cols = q.col_inf_norms();
            let mean = if n > 0 { q_cols.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let gamma = 1.0 / clamp_norm(mean.max(inf_norm(&c)));
            q.scale_values(gamma);
            c.iter_mut().for_each(|v| *v *= gamma);
            cost *= gamma;
        }

        let l = p.l.iter().zip(&e).map(|(v, s)| v * s).collect();
        let u = p.u.iter().zip(&e).map(|(v, s)| v * s).collect();
        ScaledProblem { q, c, a, l, u, d, e, cost }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(v, s)| v * s).collect()
    }

    pub fn unscale_y(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.e).map(|(v, s)| v * s / self.cost).collect()
    }
}
