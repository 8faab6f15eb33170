//! Problem data: `minimize ½ xᵀQx + cᵀx  subject to  l ≤ Ax ≤ u`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csc::CscMatrix;
use crate::QpError;

const PSD_PROBES: usize = 16;

/// A convex quadratic program with two-sided linear constraints.
///
/// `q` holds the full symmetric matrix (both triangles). Equality rows have
/// `l[i] == u[i]`; one-sided rows use an infinite bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: CscMatrix,
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    /// Builds and validates a problem. See [`QpProblem::validate`].
    pub fn new(
        q: CscMatrix,
        c: Vec<f64>,
        a: CscMatrix,
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, QpError> {
        let p = QpProblem { q, c, a, l, u };
        p.validate()?;
        Ok(p)
    }

    /// Builds a problem from triplets of the full symmetric `Q` and of `A`.
    pub fn from_triplets(
        n: usize,
        q: &[(usize, usize, f64)],
        c: Vec<f64>,
        a: &[(usize, usize, f64)],
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, QpError> {
        let m = l.len();
        Self::new(
            CscMatrix::from_triplets(n, n, q)?,
            c,
            CscMatrix::from_triplets(m, n, a)?,
            l,
            u,
        )
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    /// Checks dimensions, bound ordering, symmetry and positive
    /// semidefiniteness of `Q`.
    ///
    /// Semidefiniteness is checked by necessary conditions (nonnegative
    /// diagonal, nonnegative 2×2 principal minors) and, when the Gershgorin
    /// discs do not already certify it, by random quadratic-form probes.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let m = self.m();
        if self.q.nrows != n || self.q.ncols != n {
            return Err(QpError::Dimension(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.q.nrows, self.q.ncols
            )));
        }
        if self.a.ncols != n || self.a.nrows != m || self.u.len() != m {
            return Err(QpError::Dimension(format!(
                "A is {}x{} with {} lower and {} upper bounds, expected {m}x{n}",
                self.a.nrows,
                self.a.ncols,
                m,
                self.u.len()
            )));
        }
        if let Some(i) = self.c.iter().position(|v| !v.is_finite()) {
            return Err(QpError::NonFinite(format!("linear term c[{i}]")));
        }
        for i in 0..m {
            let (lo, hi) = (self.l[i], self.u[i]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(QpError::NonFinite(format!("bounds of row {i}")));
            }
            if lo > hi {
                return Err(QpError::InvalidBounds { row: i, lower: lo, upper: hi });
            }
        }
        self.check_psd()
    }

    fn check_psd(&self) -> Result<(), QpError> {
        let n = self.n();
        let scale = self.q.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = 1e-12 * scale;
        let mut diag = vec![0.0; n];
        let mut off_sum = vec![0.0; n];
        for (r, c, v) in self.q.triplets() {
            if (v - self.q.get(c, r)).abs() > tol {
                return Err(QpError::NotSymmetric { row: r, col: c });
            }
            if r == c {
                diag[r] = v;
            } else {
                off_sum[r] += v.abs();
            }
        }
        if let Some(i) = diag.iter().position(|&d| d < -tol) {
            return Err(QpError::NotPsd(format!("negative diagonal entry at {i}")));
        }
        for (r, c, v) in self.q.triplets() {
            if r < c && diag[r] * diag[c] - v * v < -tol * scale {
                return Err(QpError::NotPsd(format!("negative 2x2 minor at ({r}, {c})")));
            }
        }
        let gershgorin = (0..n).all(|i| diag[i] + tol >= off_sum[i]);
        if gershgorin {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..PSD_PROBES {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let qv = self.q.mul_vec(&v);
            let form: f64 = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            if form < -1e-9 * scale * norm2 {
                return Err(QpError::NotPsd("negative quadratic form on a probe".into()));
            }
        }
        Ok(())
    }

    /// `½ xᵀQx + cᵀx`
    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        x.iter()
            .zip(&qx)
            .zip(&self.c)
            .map(|((xi, qxi), ci)| 0.5 * xi * qxi + ci * xi)
            .sum()
    }

    /// Largest bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let ax = self.a.mul_vec(x);
        ax.iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Multiplies `Q` and `c` by a positive factor.
    pub fn scaled_cost(&self, factor: f64) -> QpProblem {
        let mut p = self.clone();
        p.q.scale_values(factor);
        p.c.iter_mut().for_each(|v| *v *= factor);
        p
    }

    /// Appends the row `lower ≤ a·x ≤ upper`, with `a` given as `(col, coef)` pairs.
    pub fn push_row(&mut self, row: &[(usize, f64)], lower: f64, upper: f64) -> Result<(), QpError> {
        let m = self.m();
        let mut trip: Vec<_> = self.a.triplets().collect();
        trip.extend(row.iter().map(|&(c, v)| (m, c, v)));
        self.a = CscMatrix::from_triplets(m + 1, self.n(), &trip)?;
        self.l.push(lower);
        self.u.push(upper);
        self.validate()
    }

    /// Writes the textual dump format.
    ///
    /// ```text
    /// chronos-qp 1
    /// n <n> m <m>
    /// Q <nnz>
    /// <row> <col> <value>     (nnz lines, full symmetric Q)
    /// A <nnz>
    /// <row> <col> <value>
    /// c
    /// <value>                 (n lines)
    /// l
    /// <value>                 (m lines, "-inf" allowed)
    /// u
    /// <value>                 (m lines, "inf" allowed)
    /// ```
    ///
    /// Values use the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "chronos-qp 1").unwrap();
        writeln!(s, "n {} m {}", self.n(), self.m()).unwrap();
        for (tag, mat) in [("Q", &self.q), ("A", &self.a)] {
            writeln!(s, "{tag} {}", mat.nnz()).unwrap();
            for (r, c, v) in mat.triplets() {
                writeln!(s, "{r} {c} {v:?}").unwrap();
            }
        }
        for (tag, vec) in [("c", &self.c), ("l", &self.l), ("u", &self.u)] {
            writeln!(s, "{tag}").unwrap();
            for v in vec.iter() {
                writeln!(s, "{v:?}").unwrap();
            }
        }
        s
    }

    /// Parses the textual dump format written by [`QpProblem::to_text`].
    pub fn from_text(text: &str) -> Result<Self, QpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| QpError::Parse { line: 0, message: format!("missing {what}") })
        };
        let bad = |line: usize, message: String| QpError::Parse { line, message };

        let (ln, header) = next("header")?;
        if header != "chronos-qp 1" {
            return Err(bad(ln, format!("unknown header {header:?}")));
        }
        let (ln, dims) = next("dimensions")?;
        let tok: Vec<&str> = dims.split_whitespace().collect();
        let (n, m) = match tok.as_slice() {
            ["n", n, "m", m] => (
                n.parse::<usize>().map_err(|e| bad(ln, e.to_string()))?,
                m.parse::<usize>().map_err(|e| bad(ln, e.to_string()))?,
            ),
            _ => return Err(bad(ln, "expected `n <n> m <m>`".into())),
        };

        let mut matrices = Vec::new();
        for tag in ["Q", "A"] {
            let (ln, head) = next(tag)?;
            let count = head
                .strip_prefix(tag)
                .map(str::trim)
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| bad(ln, format!("expected `{tag} <nnz>`")))?;
            let mut trip = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, entry) = next("triplet")?;
                let parts: Vec<&str> = entry.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(bad(ln, "expected `<row> <col> <value>`".into()));
                }
                let r = parts[0].parse::<usize>().map_err(|e| bad(ln, e.to_string()))?;
                let c = parts[1].parse::<usize>().map_err(|e| bad(ln, e.to_string()))?;
                let v = parts[2].parse::<f64>().map_err(|e| bad(ln, e.to_string()))?;
                trip.push((r, c, v));
            }
            matrices.push(trip);
        }
        let mut vectors = Vec::new();
        for (tag, len) in [("c", n), ("l", m), ("u", m)] {
            let (ln, head) = next(tag)?;
            if head != tag {
                return Err(bad(ln, format!("expected `{tag}`")));
            }
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                let (ln, val) = next("vector entry")?;
                v.push(val.parse::<f64>().map_err(|e| bad(ln, e.to_string()))?);
            }
            vectors.push(v);
        }
        let u = vectors.pop().unwrap();
        let l = vectors.pop().unwrap();
        let c = vectors.pop().unwrap();
        Self::new(
            CscMatrix::from_triplets(n, n, &matrices[0])?,
            c,
            CscMatrix::from_triplets(m, n, &matrices[1])?,
            l,
            u,
        )
    }
}
