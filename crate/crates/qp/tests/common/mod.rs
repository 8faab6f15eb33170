#![allow(dead_code)]

use chronos_qp::QpProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hessian {
    Definite,
    Semidefinite,
}

/// A random feasible, bounded QP with `n ≤ 12` and `m ≤ 20`.
pub fn random_qp(seed: u64, kind: Hessian) -> QpProblem {
    random_qp_with_point(seed, kind).0
}

/// Like [`random_qp`], also returning the feasible point the bounds were
/// built around.
pub fn random_qp_with_point(seed: u64, kind: Hessian) -> (QpProblem, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=12usize);
    let m = rng.random_range(0..=20usize);
    let rank = match kind {
        Hessian::Definite => n,
        // One or two flat directions.
        Hessian::Semidefinite => n.saturating_sub(rng.random_range(1..=2usize)),
    };

    let factor: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut q = vec![vec![0.0; n]; n];
    for row in &factor {
        for i in 0..n {
            for j in 0..n {
                q[i][j] += row[i] * row[j];
            }
        }
    }
    if kind == Hessian::Definite {
        for (i, row) in q.iter_mut().enumerate() {
            row[i] += 0.1;
        }
    }

    let c: Vec<f64> = match kind {
        Hessian::Definite => (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        // Keep the cost in the range of Q so flat directions stay bounded.
        Hessian::Semidefinite => {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            (0..n).map(|i| (0..n).map(|j| q[i][j] * g[j]).sum()).collect()
        }
    };

    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut a = Vec::new();
    let mut l = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    for i in 0..m {
        let mut ax0 = 0.0;
        let mut any = false;
        for (j, xj) in x0.iter().enumerate() {
            if rng.random_bool(0.5) {
                let v: f64 = rng.random_range(-1.0..1.0);
                a.push((i, j, v));
                ax0 += v * xj;
                any = true;
            }
        }
        if !any {
            let j = rng.random_range(0..n);
            a.push((i, j, 1.0));
            ax0 += x0[j];
        }
        match rng.random_range(0..8u8) {
            0 => {
                l.push(ax0);
                u.push(ax0);
            }
            1 | 2 => {
                l.push(f64::NEG_INFINITY);
                u.push(ax0 + rng.random_range(0.0..1.0));
            }
            3 | 4 => {
                l.push(ax0 - rng.random_range(0.0..1.0));
                u.push(f64::INFINITY);
            }
            _ => {
                l.push(ax0 - rng.random_range(0.0..1.0));
                u.push(ax0 + rng.random_range(0.0..1.0));
            }
        }
    }

    let mut q_trip = Vec::new();
    for (i, row) in q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                q_trip.push((i, j, v));
            }
        }
    }
    // Symmetrize exactly: the accumulation above is symmetric up to rounding.
    for t in q_trip.iter_mut() {
        let (i, j) = (t.0.min(t.1), t.0.max(t.1));
        t.2 = q[i][j];
    }
    let p = QpProblem::from_triplets(n, &q_trip, c, &a, l, u).expect("generator builds valid problems");
    (p, x0)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
