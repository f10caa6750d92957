//! Successive shortest augmenting paths with node potentials, on real-valued
//! capacities. Dijkstra runs in the dense `O(V^2 + E)` form since the
//! transport networks built here are complete bipartite graphs.

use crate::error::{Error, Result};

/// Residual capacities at or below this are treated as saturated.
const CAP_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    residual: Vec<f64>,
    cost: Vec<f64>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            residual: Vec::new(),
            cost: Vec::new(),
        }
    }

    /// Adds `u -> v` and its reverse; returns the forward edge id.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, cost: f64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.residual.push(cap);
        self.cost.push(cost);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.residual.push(0.0);
        self.cost.push(-cost);
        id
    }

    /// Flow currently pushed through forward edge `id`.
    pub fn flow(&self, id: usize) -> f64 {
        self.residual[id ^ 1]
    }

    /// Sends up to `amount` from `s` to `t` at minimum cost. All forward edge
    /// costs must be nonnegative. Returns the amount actually sent.
    pub fn min_cost_flow(&mut self, s: usize, t: usize, amount: f64) -> Result<f64> {
        let n = self.adj.len();
        let mut potential = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut remaining = amount;
        let max_rounds = 4 * (n + self.to.len()) + 100;

        for _ in 0..max_rounds {
            if remaining <= CAP_EPS {
                return Ok(amount - remaining.max(0.0));
            }
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            done.fill(false);
            dist[s] = 0.0;
            loop {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for v in 0..n {
                    if !done[v] && dist[v] < best {
                        best = dist[v];
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                if u == t {
                    break;
                }
                for &e in &self.adj[u] {
                    if self.residual[e] <= CAP_EPS {
                        continue;
                    }
                    let v = self.to[e];
                    if done[v] {
                        continue;
                    }
                    let reduced = (self.cost[e] + potential[u] - potential[v]).max(0.0);
                    let cand = dist[u] + reduced;
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent[v] = e;
                    }
                }
            }
            if !dist[t].is_finite() {
                return Ok(amount - remaining);
            }
            // capping at dist[t] keeps reduced costs nonnegative for the
            // nodes left unsettled by the early exit
            let reach = dist[t];
            for v in 0..n {
                potential[v] += dist[v].min(reach);
            }
            let mut push = remaining;
            let mut v = t;
            while v != s {
                let e = parent[v];
                push = push.min(self.residual[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = parent[v];
                self.residual[e] -= push;
                self.residual[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            remaining -= push;
        }
        Err(Error::Flow(format!(
            "no convergence after {max_rounds} augmentations ({remaining:e} left)"
        )))
    }
}
