//! Box-constrained linear least squares, `min ½‖M x − b‖²` with `lo ≤ x ≤ hi`.
//!
//! Accelerated projected gradient (FISTA) with function-value restart, warm
//! started from the clipped minimum-norm solution. Used for hover feasibility,
//! where only the size of the final residual matters.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLsqOptions {
    pub max_iter: usize,
    /// Stop as soon as `‖M x − b‖` (original rows) drops below this.
    pub residual_tol: f64,
    /// Scale each row of `[M | b]` to unit norm before iterating. Does not
    /// change the feasible set of `M x = b`, only the conditioning.
    pub equilibrate: bool,
}

impl Default for BoxLsqOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            residual_tol: 0.0,
            equilibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsqSolution {
    pub x: DVector<f64>,
    /// `‖M x − b‖` on the unscaled system.
    pub residual: f64,
    pub iterations: usize,
}

pub fn box_lsq(m: &DMatrix<f64>, b: &DVector<f64>, lo: f64, hi: f64, opts: &BoxLsqOptions) -> BoxLsqSolution {
    assert_eq!(m.nrows(), b.len(), "row count of M must match b");
    assert!(lo <= hi, "empty box");
    let n = m.ncols();
    let clip = |v: &mut DVector<f64>| v.apply(|x| *x = x.clamp(lo, hi));
    let true_residual = |x: &DVector<f64>| (m * x - b).norm();

    let (ms, bs) = if opts.equilibrate {
        let mut ms = m.clone();
        let mut bs = b.clone();
        for i in 0..ms.nrows() {
            let s = ms.row(i).norm();
            if s > 0.0 {
                ms.row_mut(i).scale_mut(1.0 / s);
                bs[i] /= s;
            }
        }
        (ms, bs)
    } else {
        (m.clone(), b.clone())
    };

    let mut x = match ms.clone().svd(true, true).pseudo_inverse(1e-12) {
        Ok(p) => p * &bs,
        Err(_) => DVector::zeros(n),
    };
    clip(&mut x);

    let sigma_max = ms.singular_values().max();
    if sigma_max == 0.0 {
        let residual = true_residual(&x);
        return BoxLsqSolution {
            x,
            residual,
            iterations: 0,
        };
    }
    let step = 1.0 / (sigma_max * sigma_max);
    let mtm = ms.transpose() * &ms;
    let mtb = ms.transpose() * &bs;
    let objective = |v: &DVector<f64>| 0.5 * (&ms * v - &bs).norm_squared();

    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut f_prev = objective(&x);
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        if true_residual(&x) < opts.residual_tol {
            break;
        }
        iterations += 1;
        let grad = &mtm * &y - &mtb;
        let mut x_next = &y - grad * step;
        clip(&mut x_next);
        let f_next = objective(&x_next);
        if f_next > f_prev {
            // Momentum overshoot: restart from the last iterate.
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        x = x_next;
        t = t_next;
        f_prev = f_next;
    }
    let residual = true_residual(&x);
    BoxLsqSolution {
        x,
        residual,
        iterations,
    }
}
