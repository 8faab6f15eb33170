use crate::csc::inf_norm;
use crate::QpProblem;

/// Infinity-norm optimality residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// Largest bound violation of `Ax`.
    pub primal: f64,
    /// `‖Qx + c + Aᵀy‖∞`, or the largest multiplier attached to an infinite
    /// bound, whichever is larger.
    pub dual: f64,
    /// Largest `|yᵢ|·slackᵢ` over the bound the multiplier sign selects.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Computes the residuals directly from the problem data.
pub fn kkt_residuals(p: &QpProblem, x: &[f64], y: &[f64]) -> KktResiduals {
    assert_eq!(x.len(), p.n(), "primal dimension");
    assert_eq!(y.len(), p.m(), "dual dimension");
    let ax = p.a.mul_vec(x);
    let mut grad = p.q.mul_vec(x);
    let aty = p.a.tr_mul_vec(y);
    for ((g, c), v) in grad.iter_mut().zip(&p.c).zip(&aty) {
        *g += c + v;
    }
    let mut res = KktResiduals {
        dual: inf_norm(&grad),
        ..Default::default()
    };
    for i in 0..p.m() {
        let (lo, hi, v, yi) = (p.l[i], p.u[i], ax[i], y[i]);
        res.primal = res.primal.max((lo - v).max(v - hi).max(0.0));
        if yi > 0.0 {
            if hi.is_finite() {
                res.complementarity = res.complementarity.max(yi * (hi - v).abs());
            } else {
                res.dual = res.dual.max(yi);
            }
        } else if yi < 0.0 {
            if lo.is_finite() {
                res.complementarity = res.complementarity.max(-yi * (v - lo).abs());
            } else {
                res.dual = res.dual.max(-yi);
            }
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_optimum_has_zero_residuals() {
        // min (x-3)^2 s.t. x <= 1: x = 1, y = 4
        let p = QpProblem::from_triplets(
            1,
            &[(0, 0, 2.0)],
            vec![-6.0],
            &[(0, 0, 1.0)],
            vec![f64::NEG_INFINITY],
            vec![1.0],
        )
        .unwrap();
        let r = kkt_residuals(&p, &[1.0], &[4.0]);
        assert_eq!(r, KktResiduals::default());
        // Wrong sign on a one-sided row is a dual violation.
        let r = kkt_residuals(&p, &[1.0], &[-4.0]);
        assert_eq!(r.dual, 8.0);
        // Infeasible point.
        let r = kkt_residuals(&p, &[1.5], &[3.0]);
        assert_eq!(r.primal, 0.5);
        assert_eq!(r.complementarity, 1.5);
    }
}
