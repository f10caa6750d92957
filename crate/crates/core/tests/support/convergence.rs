//! Checks of the linear-convergence guarantee for the scaling iteration.

#![allow(dead_code)]

use wproj_core::entropic::{EntropicState, SolveMode};
use wproj_core::polytope::kl_divergence;
use wproj_core::{CostMatrix, Distribution, LdpPolytope};

/// Bounds smaller than this are not checked: the fixed point is only known
/// through a late iterate, accurate to roughly 1e-13.
pub const RESOLUTION: f64 = 1e-7;

/// Hilbert distance between `exp(a)` and `exp(b)`.
pub fn hilbert_from_logs(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| x - y);
    let hi = diff.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = diff.fold(f64::INFINITY, f64::min);
    hi - lo
}

pub struct ConvergenceCheck {
    pub rate: f64,
    pub initial_distance: f64,
    pub checked_iterates: usize,
    /// Largest `d_H(v_t, v*) / (c^t d_H(v_0, v*))` over checked `t >= 1`.
    pub worst_v_ratio: f64,
    /// Largest `KL(q_t || q*) / (2 c^(t+1) d_H(v_0, v*))` over checked `t`.
    pub worst_kl_ratio: f64,
}

impl ConvergenceCheck {
    pub fn holds(&self) -> bool {
        self.worst_v_ratio <= 1.0 + 1e-6 && self.worst_kl_ratio <= 1.0 + 1e-6
    }
}

pub fn check_linear_convergence(
    cost: &CostMatrix,
    mu: &Distribution,
    q: &LdpPolytope,
    lambda: f64,
    steps: usize,
) -> ConvergenceCheck {
    let mut state = EntropicState::new(cost, mu, q, lambda, SolveMode::Auto).unwrap();
    let rate = state.kernel().contraction_rate();
    let mut logs = vec![state.log_v().to_vec()];
    let mut outputs = Vec::new();
    for _ in 0..steps {
        outputs.push(state.step().unwrap().q);
        logs.push(state.log_v().to_vec());
    }
    // late iterate as the fixed point
    let mut last = outputs.last().unwrap().clone();
    for _ in 0..100_000 {
        let step = state.step().unwrap();
        last = step.q;
        if step.residual < 1e-15 {
            break;
        }
    }
    let (v_star, q_star) = (state.log_v().to_vec(), last);

    let d0 = hilbert_from_logs(&logs[0], &v_star);
    let mut check = ConvergenceCheck {
        rate,
        initial_distance: d0,
        checked_iterates: 0,
        worst_v_ratio: 0.0,
        worst_kl_ratio: 0.0,
    };
    for t in 0..steps {
        if t == 0 {
            continue;
        }
        let v_bound = rate.powi(t as i32) * d0;
        if v_bound >= RESOLUTION {
            let ratio = hilbert_from_logs(&logs[t], &v_star) / v_bound;
            check.worst_v_ratio = check.worst_v_ratio.max(ratio);
            check.checked_iterates += 1;
        }
        let kl_bound = 2.0 * rate.powi(t as i32 + 1) * d0;
        if kl_bound >= RESOLUTION {
            let ratio = kl_divergence(outputs[t].probs(), q_star.probs()) / kl_bound;
            check.worst_kl_ratio = check.worst_kl_ratio.max(ratio);
        }
    }
    check
}
