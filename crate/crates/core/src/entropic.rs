//! Entropically regularized projection onto `Q_{m,eps}`.
//!
//! The regularized projection is the KL projection of the Gibbs kernel
//! `K_ij ∝ exp(-C_ij / lambda)` onto the couplings whose rows sum to `mu` and
//! whose column sums lie in `Q_{m,eps}`. Alternating the two KL projections
//! gives a Sinkhorn-style scaling iteration:
//!
//! ```text
//! u = mu / (K v),  s = K^T u,  q = Proj_Q^KL(s),  v <- q / s
//! ```
//!
//! The map `v -> v'` contracts in the Hilbert projective metric with rate
//! `tau(K^T) tau(K)`, where `tau` is the Birkhoff coefficient, so the iterates
//! converge linearly without any Dykstra correction.
//!
//! Two numerical modes are provided: a direct mode on `K` itself and a
//! log-domain mode (log-sum-exp throughout) for small `lambda`, where `K`
//! underflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;
use crate::polytope::{kl_divergence, log_sum_exp, Distribution, LdpPolytope, Tolerances};

/// `d_H(x, y) = log(max_i x_i/y_i / min_i x_i/y_i)` for strictly positive vectors.
pub fn hilbert_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    for (index, &value) in x.iter().chain(y).enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveEntry {
                index: index % x.len().max(1),
                value,
            });
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(hilbert_log(&lx, &ly))
}

/// Hilbert distance between `exp(lx)` and `exp(ly)`.
pub(crate) fn hilbert_log(lx: &[f64], ly: &[f64]) -> f64 {
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, b) in lx.iter().zip(ly) {
        let d = a - b;
        hi = hi.max(d);
        lo = lo.min(d);
    }
    if lx.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Birkhoff contraction coefficient `tanh(Delta(A)/4)` of a strictly positive
/// matrix given by rows.
pub fn birkhoff_coefficient(rows: &[Vec<f64>]) -> Result<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut log_a = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        if r.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: r.len(),
            });
        }
        for (index, &value) in r.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveEntry { index, value });
            }
            log_a.push(value.ln());
        }
    }
    Ok((projective_diameter(&log_a, rows.len(), cols) / 4.0).tanh())
}

/// `Delta(A) = log max_{i,j,k,l} A_ik A_jl / (A_il A_jk)` from `log A`.
///
/// For a fixed row pair the cross-ratio maximum is the Hilbert distance
/// between the two rows, so the whole thing is `O(rows^2 cols)`.
pub(crate) fn projective_diameter(log_a: &[f64], rows: usize, cols: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..rows {
        let ri = &log_a[i * cols..(i + 1) * cols];
        for j in (i + 1)..rows {
            let rj = &log_a[j * cols..(j + 1) * cols];
            best = best.max(hilbert_log(ri, rj));
        }
    }
    best
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// `log sum_k exp(a_k + b_k)`.
fn log_dot_exp(a: &[f64], b: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        max = max.max(x + y);
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += (x + y - max).exp();
    }
    max + sum.ln()
}

/// `K_ij = exp(-C_ij / lambda) / Z_lambda`, stored in log form.
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    rows: usize,
    cols: usize,
    lambda: f64,
    log_k: Vec<f64>,
    log_z: f64,
}

impl GibbsKernel {
    pub fn new(c: &CostMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
        }
        let scaled: Vec<f64> = c.as_slice().iter().map(|v| -v / lambda).collect();
        let log_z = log_sum_exp(scaled.iter().copied());
        let log_k = scaled.into_iter().map(|v| v - log_z).collect();
        Ok(Self {
            rows: c.rows(),
            cols: c.cols(),
            lambda,
            log_k,
            log_z,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log_k[i * self.cols + j]
    }

    /// Dense `K`; fails if any entry underflows to zero.
    pub fn dense(&self) -> Result<Vec<f64>> {
        let k: Vec<f64> = self.log_k.iter().map(|v| v.exp()).collect();
        if let Some(idx) = k.iter().position(|&v| v <= 0.0) {
            return Err(Error::KernelUnderflow {
                lambda: self.lambda,
                detail: format!(
                    "K[{}][{}] = exp({:.1}) is zero in double precision",
                    idx / self.cols,
                    idx % self.cols,
                    self.log_k[idx]
                ),
            });
        }
        Ok(k)
    }

    /// `tau(K)`.
    pub fn birkhoff(&self) -> f64 {
        (projective_diameter(&self.log_k, self.rows, self.cols) / 4.0).tanh()
    }

    /// `tau(K^T)`.
    pub fn birkhoff_transpose(&self) -> f64 {
        let t = transpose(&self.log_k, self.rows, self.cols);
        (projective_diameter(&t, self.cols, self.rows) / 4.0).tanh()
    }

    /// Contraction rate `c = tau(K^T) tau(K)` of one full iteration.
    pub fn contraction_rate(&self) -> f64 {
        self.birkhoff_transpose() * self.birkhoff()
    }

    fn restrict(&self, rows: &[usize], cols: &[usize]) -> GibbsKernel {
        let log_k = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.log_entry(i, j)))
            .collect();
        GibbsKernel {
            rows: rows.len(),
            cols: cols.len(),
            lambda: self.lambda,
            log_k,
            log_z: self.log_z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Stop once `d_H(v^(t+1), v^(t)) <= tol`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Log domain when `lambda < 0.05 * max C`, direct otherwise.
    #[default]
    Auto,
    Direct,
    Log,
}

impl SolveMode {
    fn use_log(self, c: &CostMatrix, lambda: f64) -> bool {
        match self {
            SolveMode::Auto => lambda < 0.05 * c.max_entry(),
            SolveMode::Direct => false,
            SolveMode::Log => true,
        }
    }
}

/// Continuation in `lambda`: solve for `start, start/factor, ...` down to the
/// target, warm-starting each stage from the previous dual potential
/// `lambda log v`. Only the last stage is reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    /// First stage as a multiple of `max C`.
    pub start_scale: f64,
    pub factor: f64,
    pub stage_tol: f64,
    pub stage_max_iters: usize,
}

impl Default for Continuation {
    fn default() -> Self {
        Self {
            start_scale: 0.1,
            factor: 10.0,
            stage_tol: 1e-6,
            stage_max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EntropicOptions {
    pub stop: StoppingRule,
    pub mode: SolveMode,
    pub tolerances: Tolerances,
    /// Off by default: the plain iteration starts from `v = 1`.
    pub continuation: Option<Continuation>,
}

/// Per-iteration diagnostics of [`project_entropic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Iterations spent in earlier continuation stages.
    pub warmup_iterations: usize,
    pub converged: bool,
    pub log_domain: bool,
    pub lambda: f64,
    /// `d_H(v^(t+1), v^(t))` for `t = 0, 1, ...`.
    pub hilbert_residuals: Vec<f64>,
    /// `KL(q^(t) || q^(t-1))` for `t = 1, 2, ...`.
    pub kl_residuals: Vec<f64>,
    /// `tau(K^T) tau(K)` on the support-restricted kernel.
    pub birkhoff_c: f64,
    /// `|pi 1 - mu|_1` for the final scaled plan.
    pub final_marginal_gap: f64,
    pub bisection_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct EntropicProjection {
    pub nu: Distribution,
    pub report: SolveReport,
}

/// One step of the scaling iteration.
#[derive(Debug, Clone)]
pub struct Step {
    /// `q^(t)` on the full output index set.
    pub q: Distribution,
    /// `d_H(v^(t+1), v^(t))`.
    pub residual: f64,
}

/// Rescaled scalings are re-absorbed into the kernel beyond `e^ABSORB`.
const ABSORB: f64 = 50.0;
/// Column sums below this are recomputed by log-sum-exp.
const TINY: f64 = 1e-250;

/// Iteration state on `supp(mu) x supp(m)`. Exposed so callers can inspect
/// every iterate `v^(t)`; [`project_entropic`] is the usual entry point.
///
/// The kernel is stored as `Khat_ij = K_ij exp(f_i + g_j)` with `v = e^g vhat`.
/// The direct mode keeps `f = g = 0`. The log-domain mode moves `log v` into
/// `g` whenever `vhat` leaves `[e^-50, e^50]` and normalizes each row of
/// `Khat` to maximum one, so `Khat vhat` never underflows; column sums that
/// do underflow fall back to log-sum-exp.
#[derive(Debug, Clone)]
pub struct EntropicState {
    k_v: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    kernel: GibbsKernel,
    log_domain: bool,
    log_kt: Vec<f64>,
    mu: Vec<f64>,
    log_mu: Vec<f64>,
    polytope: LdpPolytope,
    tolerances: Tolerances,
    f: Vec<f64>,
    g: Vec<f64>,
    khat: Vec<f64>,
    v_hat: Vec<f64>,
    log_v: Vec<f64>,
    log_u: Vec<f64>,
    iteration: usize,
}

impl EntropicState {
    pub fn new(c: &CostMatrix, mu: &Distribution, q: &LdpPolytope, lambda: f64, mode: SolveMode) -> Result<Self> {
        Self::with_tolerances(c, mu, q, lambda, mode, Tolerances::default())
    }

    pub fn with_tolerances(
        c: &CostMatrix,
        mu: &Distribution,
        q: &LdpPolytope,
        lambda: f64,
        mode: SolveMode,
        tolerances: Tolerances,
    ) -> Result<Self> {
        if c.rows() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: c.rows(),
                actual: mu.len(),
            });
        }
        q.check_len(c.cols())?;
        let rows = mu.support();
        let cols: Vec<usize> = (0..q.dim()).filter(|&j| q.m()[j] > 0.0).collect();
        let kernel = GibbsKernel::new(c, lambda)?.restrict(&rows, &cols);
        let log_domain = mode.use_log(c, lambda);
        let (khat, log_kt) = if log_domain {
            (Vec::new(), transpose(&kernel.log_k, rows.len(), cols.len()))
        } else {
            (kernel.dense()?, Vec::new())
        };
        let polytope = LdpPolytope::with_tolerances(
            cols.iter().map(|&j| q.m()[j]).collect(),
            q.epsilon(),
            &tolerances,
        )?;
        let mut state = Self {
            k_v: q.dim(),
            mu: rows.iter().map(|&i| mu[i]).collect(),
            log_mu: rows.iter().map(|&i| mu[i].ln()).collect(),
            f: vec![0.0; rows.len()],
            g: vec![0.0; cols.len()],
            v_hat: vec![1.0; cols.len()],
            log_v: vec![0.0; cols.len()],
            log_u: vec![0.0; rows.len()],
            rows,
            cols,
            kernel,
            log_domain,
            log_kt,
            khat,
            polytope,
            tolerances,
            iteration: 0,
        };
        state.rescale();
        Ok(state)
    }

    /// Sync `vhat` with `log_v`, absorbing into the kernel in log-domain mode.
    fn rescale(&mut self) {
        if !self.log_domain {
            self.v_hat = self.log_v.iter().map(|v| v.exp()).collect();
            return;
        }
        let c = self.cols.len();
        self.g.clone_from(&self.log_v);
        self.v_hat.fill(1.0);
        self.khat.resize(self.rows.len() * c, 0.0);
        for i in 0..self.rows.len() {
            let row = &self.kernel.log_k[i * c..(i + 1) * c];
            let top = row.iter().zip(&self.g).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
            self.f[i] = -top;
            for (out, (a, b)) in self.khat[i * c..(i + 1) * c].iter_mut().zip(row.iter().zip(&self.g)) {
                *out = (a + b - top).exp();
            }
        }
    }

    /// Replace `v^(0)` (given on the support of `m`).
    pub fn set_initial(&mut self, v0: &[f64]) -> Result<()> {
        if let Some((index, &value)) = v0.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveEntry { index, value });
        }
        let log_v0: Vec<f64> = v0.iter().map(|v| v.ln()).collect();
        self.set_initial_log(&log_v0)
    }

    /// Replace `v^(0)` by `exp(log_v0)` (given on the support of `m`).
    pub fn set_initial_log(&mut self, log_v0: &[f64]) -> Result<()> {
        if log_v0.len() != self.cols.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cols.len(),
                actual: log_v0.len(),
            });
        }
        if let Some((index, &value)) = log_v0.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonPositiveEntry {
                index,
                value: value.exp(),
            });
        }
        self.log_v = log_v0.to_vec();
        self.iteration = 0;
        self.rescale();
        Ok(())
    }

    pub fn is_log_domain(&self) -> bool {
        self.log_domain
    }

    pub fn kernel(&self) -> &GibbsKernel {
        &self.kernel
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Current `v^(t)` on the support of `m`.
    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|v| v.exp()).collect()
    }

    pub fn log_v(&self) -> &[f64] {
        &self.log_v
    }

    fn underflow(&self, what: &str) -> Error {
        Error::KernelUnderflow {
            lambda: self.kernel.lambda,
            detail: format!("{what} left the floating-point range at iteration {}", self.iteration),
        }
    }

    /// Advance `v^(t) -> v^(t+1)` and return `q^(t)`.
    pub fn step(&mut self) -> Result<Step> {
        let (r, c) = (self.rows.len(), self.cols.len());

        // u = mu / (K v), with K v = e^-f (Khat vhat)
        let mut u_hat = vec![0.0; r];
        for i in 0..r {
            let kv: f64 = self.khat[i * c..(i + 1) * c].iter().zip(&self.v_hat).map(|(a, b)| a * b).sum();
            if !(kv > 0.0 && kv.is_finite()) {
                return Err(self.underflow("K v"));
            }
            u_hat[i] = self.mu[i] / kv;
            self.log_u[i] = self.f[i] + self.log_mu[i] - kv.ln();
        }

        // s = K^T u = e^-g (Khat^T uhat)
        let mut s_hat = vec![0.0; c];
        for i in 0..r {
            for (s, k) in s_hat.iter_mut().zip(&self.khat[i * c..(i + 1) * c]) {
                *s += k * u_hat[i];
            }
        }
        let mut log_s = vec![0.0; c];
        for j in 0..c {
            log_s[j] = if s_hat[j] > TINY && s_hat[j].is_finite() {
                s_hat[j].ln() - self.g[j]
            } else if self.log_domain {
                log_dot_exp(&self.log_kt[j * r..(j + 1) * r], &self.log_u)
            } else {
                return Err(self.underflow("K^T u"));
            };
        }

        let proj = self.polytope.project_log(&log_s, &self.tolerances)?;
        let log_v_next: Vec<f64> = proj.q.probs().iter().zip(&log_s).map(|(q, s)| q.ln() - s).collect();
        let residual = hilbert_log(&log_v_next, &self.log_v);
        self.log_v = log_v_next;
        self.iteration += 1;

        if self.log_domain {
            for ((vh, lv), g) in self.v_hat.iter_mut().zip(&self.log_v).zip(&self.g) {
                *vh = (lv - g).exp();
            }
            if self.log_v.iter().zip(&self.g).any(|(lv, g)| (lv - g).abs() > ABSORB) {
                self.rescale();
            }
        } else {
            self.rescale();
        }
        Ok(Step {
            q: self.expand(proj.q.probs()),
            residual,
        })
    }

    fn expand(&self, restricted: &[f64]) -> Distribution {
        let mut full = vec![0.0; self.k_v];
        for (&j, &v) in self.cols.iter().zip(restricted) {
            full[j] = v;
        }
        Distribution::from_raw(full)
    }

    /// `|pi 1 - mu|_1` for `pi = diag(u) K diag(v)` with the latest `u` and `v`.
    fn marginal_gap(&self) -> f64 {
        let c = self.cols.len();
        (0..self.rows.len())
            .map(|i| {
                let log_kv = log_dot_exp(&self.kernel.log_k[i * c..(i + 1) * c], &self.log_v);
                ((self.log_u[i] + log_kv).exp() - self.mu[i]).abs()
            })
            .sum()
    }
}

/// Entropic projection of `mu` onto `q` with default tolerances and mode.
pub fn project_entropic(
    c: &CostMatrix,
    mu: &Distribution,
    q: &LdpPolytope,
    lambda: f64,
    stop: StoppingRule,
) -> Result<EntropicProjection> {
    project_entropic_with(
        c,
        mu,
        q,
        lambda,
        &EntropicOptions {
            stop,
            ..Default::default()
        },
    )
}

pub fn project_entropic_with(
    c: &CostMatrix,
    mu: &Distribution,
    q: &LdpPolytope,
    lambda: f64,
    options: &EntropicOptions,
) -> Result<EntropicProjection> {
    let mut warmup_iterations = 0;
    let mut log_v0: Option<Vec<f64>> = None;
    if let Some(cont) = options.continuation {
        if !(cont.factor > 1.0 && cont.start_scale > 0.0) {
            return Err(Error::param("continuation", "needs factor > 1 and start_scale > 0"));
        }
        let mut stage = cont.start_scale * c.max_entry();
        while stage > lambda {
            let mut state = EntropicState::with_tolerances(c, mu, q, stage, options.mode, options.tolerances)?;
            if let Some(lv) = &log_v0 {
                state.set_initial_log(lv)?;
            }
            for _ in 0..cont.stage_max_iters.max(1) {
                if state.step()?.residual <= cont.stage_tol {
                    break;
                }
            }
            warmup_iterations += state.iteration;
            let next = (stage / cont.factor).max(lambda);
            log_v0 = Some(state.log_v.iter().map(|v| v * stage / next).collect());
            stage = next;
        }
    }

    let mut state = EntropicState::with_tolerances(c, mu, q, lambda, options.mode, options.tolerances)?;
    if let Some(lv) = &log_v0 {
        state.set_initial_log(lv)?;
    }
    let birkhoff_c = state.kernel.contraction_rate();
    let mut hilbert_residuals = Vec::new();
    let mut kl_residuals = Vec::new();
    let mut converged = false;
    let mut last: Option<Distribution> = None;
    while state.iteration < options.stop.max_iters.max(1) {
        let step = state.step()?;
        hilbert_residuals.push(step.residual);
        if let Some(prev) = &last {
            kl_residuals.push(kl_divergence(step.q.probs(), prev.probs()));
        }
        last = Some(step.q);
        if step.residual <= options.stop.tol {
            converged = true;
            break;
        }
    }
    let nu = last.expect("at least one iteration");
    let report = SolveReport {
        iterations: state.iteration,
        warmup_iterations,
        converged,
        log_domain: state.is_log_domain(),
        lambda,
        hilbert_residuals,
        kl_residuals,
        birkhoff_c,
        final_marginal_gap: state.marginal_gap(),
        bisection_tolerance: options.tolerances.bisection_tol,
    };
    Ok(EntropicProjection { nu, report })
}

/// Certified bound `(lambda log(k k_v))^(1/p)` on
/// `W_p(nu^lambda, mu) - W_p(nu^*, mu)`.
pub fn entropic_gap_bound(lambda: f64, k: usize, k_v: usize, p: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    (lambda * ((k * k_v) as f64).ln()).max(0.0).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{project_exact, wasserstein};
    use crate::geometry::{full_cost_matrix, GroundSpace};

    #[test]
    fn hilbert_examples() {
        let x = [0.3, 1.2, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        assert!(hilbert_distance(&x, &y).unwrap().abs() < 1e-15);
        assert_eq!(hilbert_distance(&x, &x).unwrap(), 0.0);
        let d = hilbert_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-15);
        assert!(hilbert_distance(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(hilbert_distance(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn birkhoff_examples() {
        assert_eq!(birkhoff_coefficient(&[vec![2.0; 3], vec![2.0; 3]]).unwrap(), 0.0);
        let t = birkhoff_coefficient(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!((t - (4f64.ln() / 4.0).tanh()).abs() < 1e-15);
        let u = [0.5, 2.0, 3.0];
        let v = [1.0, 0.1, 7.0, 2.0];
        let rank_one: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        assert!(birkhoff_coefficient(&rank_one).unwrap() < 1e-15);
        assert!(birkhoff_coefficient(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn gap_bound_examples() {
        assert_eq!(entropic_gap_bound(0.0, 30, 30, 2.0), 0.0);
        assert!((entropic_gap_bound(0.01, 30, 30, 2.0) - 0.260_814).abs() < 1e-6);
        let lam = 0.1 / (12f64).ln();
        assert!((entropic_gap_bound(lam, 3, 4, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loose_box_on_circulant_costs_returns_uniform() {
        let c = full_cost_matrix(&GroundSpace::ring(8).unwrap(), 2.0).unwrap();
        let q = LdpPolytope::uniform(8, 1.0, 40.0).unwrap();
        let out = project_entropic(&c, &Distribution::uniform(8), &q, 1.0, StoppingRule::default()).unwrap();
        for &v in out.nu.probs() {
            assert!((v - 0.125).abs() < 1e-12);
        }
        assert!(out.report.converged);
    }

    #[test]
    fn two_point_matches_exact_within_gap() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1.0).unwrap();
        let q = LdpPolytope::new(vec![0.5, 0.5], 2.0 * 2f64.ln()).unwrap();
        let delta = 1e-6;
        let mu = Distribution::new(vec![1.0 - delta, delta]).unwrap();
        let out = project_entropic(&c, &mu, &q, 0.01, StoppingRule::default()).unwrap();
        assert!((out.nu[0] - 0.75).abs() < 1e-3, "{:?}", out.nu);
        let exact = project_exact(&c, &mu, &q).unwrap();
        let gap = wasserstein(&c, &mu, &out.nu).unwrap() - exact.wasserstein(1.0);
        assert!(gap >= -1e-9 && gap <= entropic_gap_bound(0.01, 2, 2, 1.0));
    }

    #[test]
    fn constant_kernel_converges_immediately() {
        let c = CostMatrix::from_vec(3, 4, 1.0, vec![2.0; 12]).unwrap();
        let q = LdpPolytope::new(vec![0.1, 0.2, 0.3, 0.4], 1.0).unwrap();
        let mu = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let out = project_entropic(&c, &mu, &q, 0.5, StoppingRule::default()).unwrap();
        assert_eq!(out.report.birkhoff_c, 0.0);
        assert_eq!(out.report.hilbert_residuals[1], 0.0);
        assert_eq!(out.report.iterations, 2);
    }

    #[test]
    fn log_and_direct_modes_agree() {
        let c = full_cost_matrix(&GroundSpace::ring(10).unwrap(), 1.0).unwrap();
        let q = LdpPolytope::uniform(10, 1.0, 2.0).unwrap();
        let mu = Distribution::new(vec![0.3, 0.0, 0.05, 0.1, 0.0, 0.2, 0.1, 0.05, 0.1, 0.1]).unwrap();
        let run = |mode| {
            let opts = EntropicOptions {
                mode,
                ..Default::default()
            };
            project_entropic_with(&c, &mu, &q, 0.3, &opts).unwrap()
        };
        let (d, l) = (run(SolveMode::Direct), run(SolveMode::Log));
        assert!(!d.report.log_domain && l.report.log_domain);
        for j in 0..10 {
            assert!((d.nu[j] - l.nu[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn support_restriction_reinserts_zeros() {
        let c = full_cost_matrix(&GroundSpace::ring(6).unwrap(), 1.0).unwrap();
        let q = LdpPolytope::new(vec![0.3, 0.0, 0.2, 0.2, 0.0, 0.3], 1.0).unwrap();
        let mu = Distribution::new(vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let out = project_entropic(&c, &mu, &q, 0.2, StoppingRule::default()).unwrap();
        assert_eq!(out.nu[1], 0.0);
        assert_eq!(out.nu[4], 0.0);
        assert!(q.contains(&out.nu, 1e-12).unwrap());
        assert!(out.report.final_marginal_gap < 1e-8);
    }

    #[test]
    fn direct_mode_reports_underflow() {
        let c = full_cost_matrix(&GroundSpace::ring(30).unwrap(), 2.0).unwrap();
        let q = LdpPolytope::uniform(30, 1.0, 5.0).unwrap();
        let opts = EntropicOptions {
            mode: SolveMode::Direct,
            ..Default::default()
        };
        let err = project_entropic_with(&c, &Distribution::uniform(30), &q, 0.05, &opts).unwrap_err();
        assert!(matches!(err, Error::KernelUnderflow { .. }));
        assert!(err.to_string().contains("log-domain"));
        // auto mode switches to the log domain and succeeds
        assert!(project_entropic(&c, &Distribution::uniform(30), &q, 0.05, StoppingRule::default()).is_ok());
    }

    #[test]
    fn scale_of_initial_point_is_irrelevant() {
        let c = full_cost_matrix(&GroundSpace::ring(7).unwrap(), 2.0).unwrap();
        let q = LdpPolytope::new(vec![0.1, 0.2, 0.1, 0.15, 0.2, 0.1, 0.15], 1.5).unwrap();
        let mu = Distribution::new(vec![0.4, 0.1, 0.1, 0.05, 0.05, 0.1, 0.2]).unwrap();
        let mut a = EntropicState::new(&c, &mu, &q, 2.0, SolveMode::Auto).unwrap();
        let mut b = a.clone();
        b.set_initial(&[37.5; 7]).unwrap();
        for _ in 0..50 {
            let (qa, qb) = (a.step().unwrap().q, b.step().unwrap().q);
            for j in 0..7 {
                assert!((qa[j] - qb[j]).abs() < 1e-12);
            }
        }
    }
}
