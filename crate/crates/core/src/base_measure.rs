//! Worst-case utility of the projection mechanism as a function of its base
//! measure, and the search for a good base measure.
//!
//! By the Dirac reduction the worst case over inputs is attained at a point
//! mass, so `f(m) = max_i phi_i(m)` where `phi_i` is the closed-form cost of
//! projecting the Dirac at `i`. `f` is convex in `m` and
//! `g_j = alpha (C_ij - tau_i)_+ - beta (tau_i - C_ij)_+` at the maximizing row
//! is a subgradient, which drives an exponentiated-gradient mirror descent
//! over measures with mass in `[1/beta, 1/alpha]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cost_order, phi_at, threshold};
use crate::geometry::CostMatrix;
use crate::polytope::{LdpPolytope, Tolerances};

#[derive(Debug, Clone)]
pub struct BaseMeasureProblem {
    cost: CostMatrix,
    epsilon: f64,
    alpha: f64,
    beta: f64,
    orders: Vec<Vec<usize>>,
    d_p: f64,
    mass_rel: f64,
}

/// Value of `f(m)` together with the maximizing row and every row threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub f: f64,
    pub argmax: usize,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
}

impl BaseMeasureProblem {
    pub fn new(cost: CostMatrix, epsilon: f64) -> Result<Self> {
        Self::with_tolerances(cost, epsilon, &Tolerances::default())
    }

    pub fn with_tolerances(cost: CostMatrix, epsilon: f64, tol: &Tolerances) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and > 0, got {epsilon}")));
        }
        let orders = (0..cost.rows()).map(|i| cost_order(cost.row(i))).collect();
        Ok(Self {
            d_p: cost.max_entry(),
            alpha: (-epsilon / 2.0).exp(),
            beta: (epsilon / 2.0).exp(),
            orders,
            cost,
            epsilon,
            mass_rel: tol.mass_rel,
        })
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `D_p = max_ij C_ij`.
    pub fn d_p(&self) -> f64 {
        self.d_p
    }

    /// `[1/beta, 1/alpha]`.
    pub fn mass_interval(&self) -> (f64, f64) {
        (1.0 / self.beta, 1.0 / self.alpha)
    }

    /// The polytope this base measure induces.
    pub fn polytope(&self, m: &[f64]) -> Result<LdpPolytope> {
        self.check(m)?;
        LdpPolytope::new(m.to_vec(), self.epsilon)
    }

    pub fn check(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.cost.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cost.cols(),
                actual: m.len(),
            });
        }
        if let Some(v) = m.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::param("m", format!("entries must be finite and >= 0, got {v}")));
        }
        let mass: f64 = m.iter().sum();
        let (lower, upper) = self.mass_interval();
        if mass < lower * (1.0 - self.mass_rel) || mass > upper * (1.0 + self.mass_rel) {
            return Err(Error::MassOutOfRange { mass, lower, upper });
        }
        Ok(())
    }

    fn row_tau(&self, i: usize, m: &[f64]) -> f64 {
        threshold(self.cost.row(i), &self.orders[i], m, self.alpha, self.beta)
    }

    fn row_phi(&self, i: usize, m: &[f64]) -> (f64, f64) {
        let tau = self.row_tau(i, m);
        (tau, phi_at(self.cost.row(i), m, self.alpha, self.beta, tau))
    }

    /// `phi_i(m)`, the projection cost of the Dirac at `i`.
    pub fn phi(&self, i: usize, m: &[f64]) -> Result<f64> {
        self.check(m)?;
        if i >= self.cost.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.cost.rows(),
            });
        }
        Ok(self.row_phi(i, m).1)
    }

    /// `f(m) = max_i phi_i(m)`. Ties go to the smallest row index.
    pub fn worst_case_f(&self, m: &[f64]) -> Result<WorstCase> {
        self.check(m)?;
        let rows: Vec<(f64, f64)> = (0..self.cost.rows())
            .into_par_iter()
            .map(|i| self.row_phi(i, m))
            .collect();
        let mut argmax = 0;
        for (i, r) in rows.iter().enumerate() {
            if r.1 > rows[argmax].1 {
                argmax = i;
            }
        }
        Ok(WorstCase {
            f: rows.get(argmax).map_or(0.0, |r| r.1),
            argmax,
            tau: rows.iter().map(|r| r.0).collect(),
            phi: rows.into_iter().map(|r| r.1).collect(),
        })
    }

    /// Worst-case utility `f(m)^(1/p)`.
    pub fn utility(&self, m: &[f64]) -> Result<f64> {
        Ok(self.worst_case_f(m)?.f.max(0.0).powf(1.0 / self.cost.p()))
    }

    /// Subgradient of `phi_i` at `m`.
    pub fn row_subgradient(&self, i: usize, m: &[f64]) -> Result<Vec<f64>> {
        self.check(m)?;
        if i >= self.cost.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.cost.rows(),
            });
        }
        Ok(self.gradient_at(i, self.row_tau(i, m)))
    }

    fn gradient_at(&self, i: usize, tau: f64) -> Vec<f64> {
        self.cost
            .row(i)
            .iter()
            .map(|&c| self.alpha * (c - tau).max(0.0) - self.beta * (tau - c).max(0.0))
            .collect()
    }

    /// Subgradient of `f` at `m`, taken at the maximizing row.
    pub fn subgradient(&self, m: &[f64]) -> Result<Vec<f64>> {
        let wc = self.worst_case_f(m)?;
        Ok(self.gradient_at(wc.argmax, wc.tau[wc.argmax]))
    }

    /// Fixed mirror-descent stepsize `sqrt(2(1 + log k)) / (beta D_p sqrt(T))`.
    pub fn default_stepsize(&self, iters: usize) -> f64 {
        if self.d_p == 0.0 {
            return 0.0;
        }
        (2.0 * (1.0 + self.log_dim())).sqrt() / (self.beta * self.d_p * (iters as f64).sqrt())
    }

    /// `(beta D_p / alpha) sqrt(2(1 + log k) / T)`.
    pub fn regret_bound(&self, iters: usize) -> f64 {
        self.beta * self.d_p / self.alpha * (2.0 * (1.0 + self.log_dim()) / iters as f64).sqrt()
    }

    fn log_dim(&self) -> f64 {
        (self.cost.rows().max(self.cost.cols()) as f64).ln()
    }

    /// Rescale the mass of `m` into `[1/beta, 1/alpha]`.
    fn project_mass(&self, m: &mut [f64]) {
        let (lower, upper) = self.mass_interval();
        let mass: f64 = m.iter().sum();
        let target = mass.clamp(lower, upper);
        if target != mass {
            let scale = target / mass;
            m.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MirrorDescentOptions {
    /// Overrides the default stepsize.
    pub eta: Option<f64>,
    /// Use `eta / sqrt(t)` at step `t`.
    pub decaying: bool,
    /// Random strictly positive starting point instead of `1 / (alpha k_v)`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MirrorDescentState {
    pub m: Vec<f64>,
    pub m_bar: Vec<f64>,
    pub t: usize,
    pub eta: f64,
    pub decaying: bool,
    /// `f(m^(t))` for every visited iterate.
    pub history: Vec<f64>,
}

impl MirrorDescentState {
    pub fn new(problem: &BaseMeasureProblem, iters: usize, options: &MirrorDescentOptions) -> Result<Self> {
        if iters == 0 {
            return Err(Error::param("iters", "must be >= 1"));
        }
        let k_v = problem.cost.cols();
        let eta = match options.eta {
            Some(e) if !(e >= 0.0 && e.is_finite()) => {
                return Err(Error::param("eta", format!("must be finite and >= 0, got {e}")))
            }
            Some(e) => e,
            None => problem.default_stepsize(iters),
        };
        let mut m = match options.seed {
            None => vec![1.0 / (problem.alpha * k_v as f64); k_v],
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw: Vec<f64> = (0..k_v).map(|_| rng.random_range(0.5..1.5)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / (problem.alpha * total)).collect()
            }
        };
        problem.project_mass(&mut m);
        Ok(Self {
            m_bar: vec![0.0; k_v],
            m,
            t: 0,
            eta,
            decaying: options.decaying,
            history: Vec::with_capacity(iters),
        })
    }

    /// Record `m^(t)` and move to `m^(t+1)`.
    pub fn step(&mut self, problem: &BaseMeasureProblem) -> Result<()> {
        let wc = problem.worst_case_f(&self.m)?;
        let g = problem.gradient_at(wc.argmax, wc.tau[wc.argmax]);
        self.history.push(wc.f);
        self.t += 1;
        let n = self.t as f64;
        for (bar, &v) in self.m_bar.iter_mut().zip(&self.m) {
            *bar += (v - *bar) / n;
        }
        let eta = if self.decaying { self.eta / n.sqrt() } else { self.eta };
        for (v, gj) in self.m.iter_mut().zip(&g) {
            *v *= (-eta * gj).exp();
        }
        problem.project_mass(&mut self.m);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MirrorDescentResult {
    /// Average of `m^(1), ..., m^(T)`.
    pub m_bar: Vec<f64>,
    /// `f(m_bar)`.
    pub f_bar: f64,
    pub eta: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub regret_bound: f64,
}

pub fn optimize_base_measure(
    problem: &BaseMeasureProblem,
    iters: usize,
    options: &MirrorDescentOptions,
) -> Result<MirrorDescentResult> {
    let mut state = MirrorDescentState::new(problem, iters, options)?;
    for _ in 0..iters {
        state.step(problem)?;
    }
    let mut m_bar = state.m_bar;
    problem.project_mass(&mut m_bar);
    Ok(MirrorDescentResult {
        f_bar: problem.worst_case_f(&m_bar)?.f,
        m_bar,
        eta: state.eta,
        iterations: iters,
        history: state.history,
        regret_bound: problem.regret_bound(iters),
    })
}
