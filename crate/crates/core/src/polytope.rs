//! The LDP polytope `Q_{m,eps}` and KL projection onto it.
//!
//! On a finite output set the polytope is the box
//! `e^{-eps/2} m_j <= nu_j <= e^{eps/2} m_j` intersected with the simplex.
//! The KL projection of a positive vector `s` clips `e^theta s_j` into the box,
//! with the scalar `theta` found by bisection on the nondecreasing map
//! `theta -> sum_j clip(e^theta s_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances shared by the projection routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Early-exit threshold on `|psi(theta) - 1|`.
    pub bisection_tol: f64,
    pub bisection_max_iter: usize,
    /// Allowed deviation of `sum(probs)` from one for a [`Distribution`].
    pub distribution_sum: f64,
    /// Relative slack in the polytope nonemptiness test.
    pub mass_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            bisection_tol: 1e-12,
            bisection_max_iter: 200,
            distribution_sum: 1e-9,
            mass_rel: 1e-12,
        }
    }
}

/// A probability vector over a finite ground set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, Tolerances::default().distribution_sum)
    }

    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some((i, v)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} = {v} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Normalize nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be nonnegative with a positive finite sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn dirac(len: usize, at: usize) -> Self {
        assert!(at < len, "dirac index {at} out of range for length {len}");
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        Self(v)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Indices with positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `KL(p || q)` with `0 log 0 = 0`; infinite if `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolytopeRepr {
    m: Vec<f64>,
    epsilon: f64,
}

/// `Q_{m,eps}`: distributions `nu` with `alpha m_j <= nu_j <= beta m_j`,
/// `alpha = e^{-eps/2}`, `beta = e^{eps/2}`.
///
/// JSON form: `{"m": [...], "epsilon": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct LdpPolytope {
    m: Vec<f64>,
    epsilon: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<PolytopeRepr> for LdpPolytope {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        LdpPolytope::new(r.m, r.epsilon)
    }
}

impl From<LdpPolytope> for PolytopeRepr {
    fn from(q: LdpPolytope) -> Self {
        PolytopeRepr {
            m: q.m,
            epsilon: q.epsilon,
        }
    }
}

/// Result of [`LdpPolytope::kl_project_detailed`].
#[derive(Debug, Clone)]
pub struct KlProjection {
    pub q: Distribution,
    /// Log-scale `theta` with `q_j = clip(e^theta s_j)` on unclipped coordinates.
    pub theta: f64,
    /// `|sum(q) - 1|` at exit.
    pub residual: f64,
    pub iterations: usize,
}

impl LdpPolytope {
    pub fn new(m: Vec<f64>, epsilon: f64) -> Result<Self> {
        Self::with_tolerances(m, epsilon, &Tolerances::default())
    }

    pub fn with_tolerances(m: Vec<f64>, epsilon: f64, tol: &Tolerances) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must be > 0, got {epsilon}")));
        }
        if m.is_empty() {
            return Err(Error::param("m", "base measure is empty"));
        }
        if let Some((j, v)) = m.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param(
                "m",
                format!("entry {j} = {v} is negative or not finite"),
            ));
        }
        let mass: f64 = m.iter().sum();
        if mass <= 0.0 {
            return Err(Error::param("m", "base measure has no positive entry"));
        }
        let alpha = (-epsilon / 2.0).exp();
        let beta = (epsilon / 2.0).exp();
        if alpha * mass > 1.0 + tol.mass_rel || beta * mass < 1.0 - tol.mass_rel {
            return Err(Error::InfeasiblePolytope { mass, epsilon });
        }
        Ok(Self {
            m,
            epsilon,
            alpha,
            beta,
        })
    }

    /// Uniform base measure with total mass `mass` over `k_v` points.
    pub fn uniform(k_v: usize, mass: f64, epsilon: f64) -> Result<Self> {
        Self::new(vec![mass / k_v as f64; k_v], epsilon)
    }

    pub fn m(&self) -> &[f64] {
        &self.m
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

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn mass(&self) -> f64 {
        self.m.iter().sum()
    }

    #[inline]
    pub fn lower(&self, j: usize) -> f64 {
        self.alpha * self.m[j]
    }

    #[inline]
    pub fn upper(&self, j: usize) -> f64 {
        self.beta * self.m[j]
    }

    /// Box membership with additive slack `tol`.
    pub fn contains(&self, nu: &Distribution, tol: f64) -> Result<bool> {
        self.check_len(nu.len())?;
        Ok(nu
            .probs()
            .iter()
            .enumerate()
            .all(|(j, &v)| self.lower(j) - tol <= v && v <= self.upper(j) + tol))
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `argmin_{q in Q} KL(q || s)`.
    pub fn kl_project(&self, s: &[f64]) -> Result<Distribution> {
        Ok(self.kl_project_detailed(s, &Tolerances::default())?.q)
    }

    pub fn kl_project_detailed(&self, s: &[f64], tol: &Tolerances) -> Result<KlProjection> {
        self.check_len(s.len())?;
        if let Some((j, v)) = s.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param("s", format!("entry {j} = {v} is negative or not finite")));
        }
        if s.iter().all(|&v| v == 0.0) {
            return Err(Error::param("s", "vector is identically zero"));
        }
        if let Some(j) = (0..s.len()).find(|&j| self.m[j] > 0.0 && s[j] == 0.0) {
            return Err(Error::NonPositiveEntry { index: j, value: 0.0 });
        }
        if self.is_fixed_point(s) {
            return Ok(KlProjection {
                q: Distribution::from_raw(s.to_vec()),
                theta: 0.0,
                residual: (s.iter().sum::<f64>() - 1.0).abs(),
                iterations: 0,
            });
        }
        let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        self.project_log(&log_s, tol)
    }

    /// `s` already lies in `Q` and sums to one up to rounding.
    fn is_fixed_point(&self, s: &[f64]) -> bool {
        let total: f64 = s.iter().sum();
        let slack = 4.0 * s.len() as f64 * f64::EPSILON;
        (total - 1.0).abs() <= slack
            && s
                .iter()
                .enumerate()
                .all(|(j, &v)| self.lower(j) <= v && v <= self.upper(j) && (self.m[j] > 0.0 || v == 0.0))
    }

    /// KL projection of `exp(log_s)`. Entries of `log_s` may be `-inf`; on the
    /// support of `m` those coordinates are pinned to their lower bound.
    pub(crate) fn project_log(&self, log_s: &[f64], tol: &Tolerances) -> Result<KlProjection> {
        let n = self.m.len();
        let support: Vec<usize> = (0..n).filter(|&j| self.m[j] > 0.0).collect();
        let mass: f64 = support.iter().map(|&j| self.m[j]).sum();
        let mut q = vec![0.0; n];

        // Polytope collapsed to a single point (up to the nonemptiness slack).
        if self.alpha * mass >= 1.0 || self.beta * mass <= 1.0 {
            let scale = if self.alpha * mass >= 1.0 { self.alpha } else { self.beta };
            let total = scale * mass;
            for &j in &support {
                q[j] = scale * self.m[j] / total;
            }
            return Ok(KlProjection {
                q: Distribution::from_raw(q),
                theta: f64::NAN,
                residual: 0.0,
                iterations: 0,
            });
        }

        let shift = support
            .iter()
            .map(|&j| log_s[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::param("s", "vector vanishes on the support of m"));
        }
        let a: Vec<f64> = support.iter().map(|&j| log_s[j] - shift).collect();
        let lo: Vec<f64> = support.iter().map(|&j| self.lower(j)).collect();
        let hi: Vec<f64> = support.iter().map(|&j| self.upper(j)).collect();
        let clip = |theta: f64, t: usize| (theta + a[t]).exp().clamp(lo[t], hi[t]);
        let psi = |theta: f64| (0..a.len()).map(|t| clip(theta, t)).sum::<f64>();

        let theta0 = -log_sum_exp(a.iter().copied());
        let m_min = support.iter().map(|&j| self.m[j]).fold(f64::INFINITY, f64::min);
        let m_max = support.iter().map(|&j| self.m[j]).fold(0.0, f64::max);
        let a_min = a.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let mut left = self.alpha.ln() + m_min.ln() - 1.0;
        let mut right = self.beta.ln() + m_max.ln() - a_min + 1.0;
        if !left.is_finite() {
            left = theta0 - 1.0;
        }
        if !right.is_finite() {
            right = theta0 + 1.0;
        }

        // theta values where some coordinate enters or leaves its box
        let breaks: Vec<f64> = (0..a.len())
            .flat_map(|t| [lo[t].ln() - a[t], hi[t].ln() - a[t]])
            .collect();
        let settled = |l: f64, r: f64| breaks.iter().all(|&b| b <= l || b >= r);

        let mut theta = 0.5 * (left + right);
        let mut value = psi(theta);
        let mut iterations = 0;
        while iterations < tol.bisection_max_iter
            && (value - 1.0).abs() > tol.bisection_tol
            && !settled(left, right)
        {
            if value < 1.0 {
                left = theta;
            } else {
                right = theta;
            }
            theta = 0.5 * (left + right);
            value = psi(theta);
            iterations += 1;
        }

        // Once the clipped set is known, theta has a closed form.
        let is_free: Vec<bool> = (0..a.len())
            .map(|t| {
                let x = (theta + a[t]).exp();
                lo[t] < x && x < hi[t]
            })
            .collect();
        if is_free.iter().any(|&f| f) {
            let fixed: f64 = (0..a.len())
                .filter(|&t| !is_free[t])
                .map(|t| clip(theta, t))
                .sum();
            if fixed < 1.0 {
                let free_logs = (0..a.len()).filter(|&t| is_free[t]).map(|t| a[t]);
                let polished = (1.0 - fixed).ln() - log_sum_exp(free_logs);
                let consistent = (0..a.len()).all(|t| {
                    let before = (theta + a[t]).exp();
                    let after = (polished + a[t]).exp();
                    if is_free[t] {
                        lo[t] <= after && after <= hi[t]
                    } else if before <= lo[t] {
                        after <= lo[t]
                    } else {
                        after >= hi[t]
                    }
                });
                let polished_value = psi(polished);
                if consistent && (polished_value - 1.0).abs() <= (value - 1.0).abs() {
                    theta = polished;
                    value = polished_value;
                }
            }
        }

        for (t, &j) in support.iter().enumerate() {
            q[j] = clip(theta, t);
        }
        Ok(KlProjection {
            q: Distribution::from_raw(q),
            theta: theta - shift,
            residual: (value - 1.0).abs(),
            iterations,
        })
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
