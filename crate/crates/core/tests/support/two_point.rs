//! Grid-search oracle for base measures on two output points.

#![allow(dead_code)]

use wproj_core::CostMatrix;

/// `phi_i(m)` for two outputs: a one-dimensional LP in `nu_0`.
pub fn phi_two_point(c: [f64; 2], m: [f64; 2], alpha: f64, beta: f64) -> f64 {
    let lo = (alpha * m[0]).max(1.0 - beta * m[1]);
    let hi = (beta * m[0]).min(1.0 - alpha * m[1]);
    let nu0 = if c[0] <= c[1] { hi } else { lo };
    c[0] * nu0 + c[1] * (1.0 - nu0)
}

pub fn f_two_point(cost: &CostMatrix, m: [f64; 2], alpha: f64, beta: f64) -> f64 {
    (0..cost.rows())
        .map(|i| phi_two_point([cost.get(i, 0), cost.get(i, 1)], m, alpha, beta))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub struct GridMin {
    pub value: f64,
    pub argmin: [f64; 2],
    /// Worst-case gap between the grid minimum and the true minimum.
    pub error: f64,
}

/// Minimum of `f` over feasible grid points `h * (a, b)`.
pub fn grid_minimum(cost: &CostMatrix, epsilon: f64, h: f64) -> GridMin {
    let (alpha, beta) = ((-epsilon / 2.0).exp(), (epsilon / 2.0).exp());
    let (lower, upper) = (1.0 / beta, 1.0 / alpha);
    let n = (upper / h).floor() as usize;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for a in 0..=n {
        let m0 = a as f64 * h;
        let b_lo = ((lower - m0) / h).ceil().max(0.0) as usize;
        let b_hi = ((upper - m0) / h).floor();
        if b_hi < 0.0 {
            break;
        }
        for b in b_lo..=b_hi as usize {
            let m = [m0, b as f64 * h];
            let v = f_two_point(cost, m, alpha, beta);
            if v < best.0 {
                best = (v, m);
            }
        }
    }
    // |g_j| <= beta D_p and some feasible grid point is within l1 distance 2h
    let d_p = cost.max_entry();
    GridMin {
        value: best.0,
        argmin: best.1,
        error: 2.0 * beta * d_p * h,
    }
}
