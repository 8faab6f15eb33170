//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! The numeric phase follows the up-looking elimination-tree scheme used by
//! QDLDL: the symbolic analysis (ordering, elimination tree, column counts) is
//! done once per sparsity pattern, and the numeric factorization can be redone
//! with new values, which is what the ADMM loop needs when the penalty
//! parameter changes.

use std::collections::BTreeSet;

use crate::csc::CscMatrix;
use crate::QpError;

const NONE: usize = usize::MAX;

/// Minimum-degree fill-reducing ordering of a symmetric pattern.
///
/// Exact (not approximate) minimum degree on an explicit elimination graph.
/// Ties are broken by the lower index, so the ordering is deterministic.
pub fn minimum_degree(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, c, _) in upper.triplets() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &u in &nbrs {
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

/// Symbolic analysis of a permuted upper-triangular pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Permuted upper-triangular pattern.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// For each entry of the original upper pattern, its slot in `ai`.
    slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

impl LdlSymbolic {
    /// Analyses the upper triangle of a symmetric matrix.
    pub fn analyse(upper: &CscMatrix) -> Result<Self, QpError> {
        let n = upper.ncols;
        if upper.nrows != n {
            return Err(QpError::Dimension("LDL needs a square matrix".into()));
        }
        let perm = minimum_degree(upper);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Permuted entries, remembering where each original entry goes.
        let entries: Vec<(usize, usize)> = upper
            .triplets()
            .map(|(r, c, _)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                (pr.min(pc), pr.max(pc))
            })
            .collect();
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| (entries[k].1, entries[k].0));
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut slot = vec![0usize; entries.len()];
        for k in order {
            let (r, c) = entries[k];
            slot[k] = ai.len();
            ai.push(r);
            ap[c + 1] += 1;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        // Elimination tree and column counts of L.
        let mut work = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Ok(LdlSymbolic {
            n,
            perm,
            ap,
            ai,
            slot,
            etree,
            lp,
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization for the values of an upper-triangular matrix
    /// with exactly the analysed pattern.
    pub fn factor(&self, upper: &CscMatrix) -> Result<LdlFactor, QpError> {
        let n = self.n;
        if upper.nnz() != self.slot.len() {
            return Err(QpError::Dimension("pattern changed since analysis".into()));
        }
        let mut ax = vec![0.0; self.ai.len()];
        for (k, &v) in upper.values.iter().enumerate() {
            ax[self.slot[k]] = v;
        }

        let nnz_l = self.factor_nnz();
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_in_col: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];

        for k in 0..n {
            let mut nnz_y = 0;
            for p in self.ap[k]..self.ap[k + 1] {
                let bidx = self.ai[p];
                if bidx == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[bidx] = ax[p];
                if !y_used[bidx] {
                    y_used[bidx] = true;
                    elim[0] = bidx;
                    let mut n_elim = 1;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[n_elim] = next;
                        n_elim += 1;
                        next = self.etree[next];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let cidx = y_idx[i];
                let end = next_in_col[cidx];
                let yc = y_vals[cidx];
                for j in self.lp[cidx]..end {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[cidx];
                d[k] -= yc * lx[end];
                next_in_col[cidx] += 1;
                y_vals[cidx] = 0.0;
                y_used[cidx] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(QpError::Factorization(format!("zero pivot at column {k}: {}", d[k])));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
            dinv,
        })
    }
}

/// Numeric LDLᵀ factors of `P K Pᵀ`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Analyses and factors in one step.
    pub fn new(upper: &CscMatrix) -> Result<Self, QpError> {
        LdlSymbolic::analyse(upper)?.factor(upper)
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    /// Solves `K x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `y = K x` where `K` is given by its upper triangle.
pub(crate) fn sym_upper_mul_vec(upper: &CscMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; upper.nrows];
    for (r, c, v) in upper.triplets() {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
    y
}
