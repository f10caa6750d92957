//! Exact Wasserstein projection onto `Q_{m,eps}` as a min-cost flow.
//!
//! The linear program
//!
//! ```text
//! min sum_ij C_ij pi_ij  s.t.  pi 1 = mu,  alpha m <= pi^T 1 <= beta m,  pi >= 0
//! ```
//!
//! is a transportation problem with interval demands. Demand lower bounds are
//! removed with the usual split: each output node sends its mandatory
//! `alpha m_j` straight to the sink and the optional `(beta - alpha) m_j`
//! through an overflow node whose capacity is `1 - alpha sum(m)`. A full unit
//! of flow then saturates every lower bound.
//!
//! For a Dirac input the LP is a fractional knapsack, solved greedily by
//! [`project_dirac_closed_form`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::geometry::CostMatrix;
use crate::polytope::{Distribution, LdpPolytope};

/// A coupling between an input distribution (rows) and an output (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    pi: Vec<f64>,
    /// `sum_ij C_ij pi_ij`, i.e. `W_p^p` for an optimal plan.
    pub objective: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pi[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.pi.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.pi.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExactProjection {
    pub nu: Distribution,
    pub plan: TransportPlan,
}

impl ExactProjection {
    /// `W_p(nu, mu)` of the projection.
    pub fn wasserstein(&self, p: f64) -> f64 {
        self.plan.objective.max(0.0).powf(1.0 / p)
    }
}

fn check_dims(c: &CostMatrix, mu_len: usize, out_len: usize) -> Result<()> {
    if c.rows() != mu_len {
        return Err(Error::DimensionMismatch {
            expected: c.rows(),
            actual: mu_len,
        });
    }
    if c.cols() != out_len {
        return Err(Error::DimensionMismatch {
            expected: c.cols(),
            actual: out_len,
        });
    }
    Ok(())
}

/// Min-cost transport of `mu` into column amounts within `[lower_j, upper_j]`.
fn bounded_transport(c: &CostMatrix, mu: &[f64], lower: &[f64], upper: &[f64]) -> Result<TransportPlan> {
    let (k, kv) = (c.rows(), c.cols());
    let source = 0;
    let overflow = k + kv + 1;
    let sink = k + kv + 2;
    let mut g = FlowGraph::new(k + kv + 3);

    let supply: f64 = mu.iter().sum();
    let mandatory: f64 = lower.iter().sum();
    let mut plan_edges = Vec::with_capacity(k * kv);
    for i in 0..k {
        if mu[i] <= 0.0 {
            continue;
        }
        g.add_edge(source, 1 + i, mu[i], 0.0);
        for j in (0..kv).filter(|&j| upper[j] > 0.0) {
            let e = g.add_edge(1 + i, 1 + k + j, mu[i], c.get(i, j));
            plan_edges.push((i, j, e));
        }
    }
    for j in 0..kv {
        if lower[j] > 0.0 {
            g.add_edge(1 + k + j, sink, lower[j], 0.0);
        }
        let optional = upper[j] - lower[j];
        if optional > 0.0 {
            g.add_edge(1 + k + j, overflow, optional, 0.0);
        }
    }
    g.add_edge(overflow, sink, (supply - mandatory).max(0.0), 0.0);

    let sent = g.min_cost_flow(source, sink, supply)?;
    if sent < supply - 1e-9 {
        return Err(Error::Flow(format!(
            "infeasible transport: routed {sent} of {supply}"
        )));
    }

    let mut pi = vec![0.0; k * kv];
    let mut objective = 0.0;
    for (i, j, e) in plan_edges {
        let f = g.flow(e).max(0.0);
        pi[i * kv + j] = f;
        objective += f * c.get(i, j);
    }
    Ok(TransportPlan {
        rows: k,
        cols: kv,
        pi,
        objective,
    })
}

/// Exact `W_p` projection of `mu` onto `q`: the output `nu` and an optimal plan.
pub fn project_exact(c: &CostMatrix, mu: &Distribution, q: &LdpPolytope) -> Result<ExactProjection> {
    check_dims(c, mu.len(), q.dim())?;
    let lower: Vec<f64> = (0..q.dim()).map(|j| q.lower(j)).collect();
    let upper: Vec<f64> = (0..q.dim()).map(|j| q.upper(j)).collect();
    let plan = bounded_transport(c, mu.probs(), &lower, &upper)?;
    let nu = Distribution::from_raw(plan.col_sums());
    Ok(ExactProjection { nu, plan })
}

/// Optimal transport plan between `mu` (rows) and `nu` (columns) with both
/// marginals fixed. The objective is `W_p^p(nu, mu)`.
pub fn optimal_transport(c: &CostMatrix, mu: &Distribution, nu: &Distribution) -> Result<TransportPlan> {
    check_dims(c, mu.len(), nu.len())?;
    // a tiny shared slack keeps rounding in sum(nu) from starving the flow
    let total: f64 = nu.probs().iter().sum();
    let scale = mu.probs().iter().sum::<f64>() / total;
    let target: Vec<f64> = nu.probs().iter().map(|v| v * scale).collect();
    bounded_transport(c, mu.probs(), &target, &target)
}

/// `W_p(nu, mu)` under the exact (unregularized) transport cost.
pub fn wasserstein(c: &CostMatrix, mu: &Distribution, nu: &Distribution) -> Result<f64> {
    let plan = optimal_transport(c, mu, nu)?;
    Ok(plan.objective.max(0.0).powf(1.0 / c.p()))
}

/// Closed-form projection of a Dirac input.
#[derive(Debug, Clone)]
pub struct DiracProjection {
    /// `phi_i(m)`: the optimal `W_p^p` from the Dirac to the polytope.
    pub phi: f64,
    pub nu: Distribution,
    /// Threshold cost `tau_i(m)` of the greedy fill.
    pub tau: f64,
}

/// Indices sorted by `(cost, index)`.
pub(crate) fn cost_order(c_row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c_row.len()).collect();
    order.sort_by(|&a, &b| c_row[a].total_cmp(&c_row[b]).then(a.cmp(&b)));
    order
}

/// `tau = min { t : sum_j (beta m_j [C_j <= t] + alpha m_j [C_j > t]) >= 1 }`,
/// found by one scan over the sorted costs with ties merged. When `alpha
/// sum(m) >= 1` the set is unbounded below and the smallest cost is returned;
/// `phi` does not depend on that choice.
pub(crate) fn threshold(c_row: &[f64], order: &[usize], m: &[f64], alpha: f64, beta: f64) -> f64 {
    let mass: f64 = m.iter().sum();
    let mut level = alpha * mass;
    if level >= 1.0 {
        return c_row[order[0]];
    }
    let mut last_positive = c_row[order[order.len() - 1]];
    let mut idx = 0;
    while idx < order.len() {
        let cost = c_row[order[idx]];
        let mut group = 0.0;
        while idx < order.len() && c_row[order[idx]] == cost {
            group += m[order[idx]];
            idx += 1;
        }
        if group > 0.0 {
            last_positive = cost;
            level += (beta - alpha) * group;
            if level >= 1.0 {
                return cost;
            }
        }
    }
    last_positive
}

/// `phi(m) = tau + sum_j (alpha (C_j - tau)_+ - beta (tau - C_j)_+) m_j`.
pub(crate) fn phi_at(c_row: &[f64], m: &[f64], alpha: f64, beta: f64, tau: f64) -> f64 {
    tau + c_row
        .iter()
        .zip(m)
        .map(|(&c, &mj)| (alpha * (c - tau).max(0.0) - beta * (tau - c).max(0.0)) * mj)
        .sum::<f64>()
}

/// Projection of the Dirac at input `i` given its cost row `C_i.`, via the
/// fractional-knapsack greedy: fill `beta m_j` on the cheapest outputs, leave
/// `alpha m_j` elsewhere and split the remainder at the threshold cost.
pub fn project_dirac_closed_form(c_row: &[f64], q: &LdpPolytope) -> Result<DiracProjection> {
    q.check_len(c_row.len())?;
    let (alpha, beta) = (q.alpha(), q.beta());
    let order = cost_order(c_row);
    let tau = threshold(c_row, &order, q.m(), alpha, beta);
    let phi = phi_at(c_row, q.m(), alpha, beta, tau);

    let mut nu: Vec<f64> = (0..c_row.len())
        .map(|j| if c_row[j] < tau { q.upper(j) } else { q.lower(j) })
        .collect();
    let mut remaining = 1.0 - nu.iter().sum::<f64>();
    for &j in order.iter().filter(|&&j| c_row[j] == tau) {
        if remaining <= 0.0 {
            break;
        }
        let add = remaining.min(q.upper(j) - q.lower(j));
        nu[j] += add;
        remaining -= add;
    }
    Ok(DiracProjection {
        phi,
        nu: Distribution::from_raw(nu),
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{full_cost_matrix, GroundSpace};

    fn swap2() -> CostMatrix {
        CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1.0).unwrap()
    }

    fn half_half() -> LdpPolytope {
        LdpPolytope::new(vec![0.5, 0.5], 2.0 * 2f64.ln()).unwrap()
    }

    #[test]
    fn two_point_dirac_projection() {
        let out = project_exact(&swap2(), &Distribution::dirac(2, 0), &half_half()).unwrap();
        assert!((out.nu[0] - 0.75).abs() < 1e-12);
        assert!((out.nu[1] - 0.25).abs() < 1e-12);
        assert!((out.plan.objective - 0.25).abs() < 1e-12);
    }

    #[test]
    fn member_input_is_fixed() {
        let c = full_cost_matrix(&GroundSpace::ring(6).unwrap(), 2.0).unwrap();
        let q = LdpPolytope::uniform(6, 1.0, 1.0).unwrap();
        let mu = Distribution::new(vec![0.2, 0.15, 0.12, 0.2, 0.15, 0.18]).unwrap();
        assert!(q.contains(&mu, 0.0).unwrap());
        let out = project_exact(&c, &mu, &q).unwrap();
        assert!(out.plan.objective.abs() < 1e-12);
        for j in 0..6 {
            assert!((out.nu[j] - mu[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_epsilon_keeps_dirac() {
        let c = full_cost_matrix(&GroundSpace::ring(5).unwrap(), 1.0).unwrap();
        let q = LdpPolytope::uniform(5, 1.0, 60.0).unwrap();
        let out = project_exact(&c, &Distribution::dirac(5, 2), &q).unwrap();
        assert!(out.plan.objective < 1e-12);
        assert!((out.nu[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_two_point() {
        let d = project_dirac_closed_form(&[0.0, 1.0], &half_half()).unwrap();
        assert_eq!(d.tau, 0.0);
        assert!((d.phi - 0.25).abs() < 1e-15);
        assert!((d.nu[0] - 0.75).abs() < 1e-15);
        assert!((d.nu[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_row_gives_constant_phi() {
        let q = LdpPolytope::new(vec![0.1, 0.5, 0.3, 0.2], 1.5).unwrap();
        let d = project_dirac_closed_form(&[2.5; 4], &q).unwrap();
        assert!((d.phi - 2.5).abs() < 1e-14);
        assert!((d.nu.probs().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_flow_with_ties() {
        let rows = vec![vec![1.0, 0.0, 1.0, 2.0, 1.0], vec![3.0, 3.0, 0.5, 0.5, 3.0]];
        let c = CostMatrix::from_rows(&rows, 1.0).unwrap();
        let q = LdpPolytope::new(vec![0.3, 0.05, 0.2, 0.25, 0.1], 1.2).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let d = project_dirac_closed_form(row, &q).unwrap();
            let e = project_exact(&c, &Distribution::dirac(2, i), &q).unwrap();
            assert!((d.phi - e.plan.objective).abs() < 1e-12);
            let direct: f64 = row.iter().zip(d.nu.probs()).map(|(a, b)| a * b).sum();
            assert!((direct - d.phi).abs() < 1e-12);
            assert!(q.contains(&d.nu, 1e-15).unwrap());
        }
    }

    #[test]
    fn ot_between_fixed_marginals() {
        let c = full_cost_matrix(&GroundSpace::ring(4).unwrap(), 1.0).unwrap();
        let mu = Distribution::dirac(4, 0);
        let nu = Distribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        // (0 + 1 + 2 + 1) / 4
        assert!((wasserstein(&c, &mu, &nu).unwrap() - 1.0).abs() < 1e-12);
        assert!(wasserstein(&c, &nu, &nu).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let q = half_half();
        assert!(project_exact(&swap2(), &Distribution::uniform(3), &q).is_err());
        assert!(project_dirac_closed_form(&[0.0, 1.0, 2.0], &q).is_err());
    }
}
