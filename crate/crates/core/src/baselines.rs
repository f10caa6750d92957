//! Baseline mechanisms: the KL projection mechanism (KPM) and the
//! exponential mechanism with negative expected distance as utility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;
use crate::polytope::{log_sum_exp, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpmParams {
    pub k: usize,
    pub epsilon: f64,
    /// `1 / (e^eps + k - 1)`.
    pub floor: f64,
}

impl KpmParams {
    pub fn new(k: usize, epsilon: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "must be >= 1"));
        }
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::param("epsilon", format!("must be > 0, got {epsilon}")));
        }
        Ok(Self {
            k,
            epsilon,
            floor: 1.0 / (epsilon.exp() + k as f64 - 1.0),
        })
    }

    /// Base measure `e^(eps/2) / (e^eps + k - 1)` whose polytope contains
    /// every KPM output.
    pub fn base_measure(&self) -> Vec<f64> {
        kpm_base_measure(self.k, self.epsilon)
    }
}

pub fn kpm_base_measure(k: usize, epsilon: f64) -> Vec<f64> {
    // e^(eps/2) / (e^eps + k - 1) written to stay finite for large eps
    let v = 1.0 / ((epsilon / 2.0).exp() + (k as f64 - 1.0) * (-epsilon / 2.0).exp());
    vec![v; k]
}

/// `max(mu / r, floor)` together with the normalizer `r`.
#[derive(Debug, Clone)]
pub struct KpmOutput {
    pub nu: Distribution,
    pub r: f64,
}

fn kpm_mass(mu: &[f64], floor: f64, r: f64) -> f64 {
    mu.iter().map(|&x| (x / r).max(floor)).sum()
}

pub fn kpm_transform(params: &KpmParams, mu: &Distribution) -> Result<Distribution> {
    Ok(kpm_transform_detailed(params, mu)?.nu)
}

pub fn kpm_transform_detailed(params: &KpmParams, mu: &Distribution) -> Result<KpmOutput> {
    if mu.len() != params.k {
        return Err(Error::DimensionMismatch {
            expected: params.k,
            actual: mu.len(),
        });
    }
    let (x, floor) = (mu.probs(), params.floor);
    let r = if kpm_mass(x, floor, 1.0) <= 1.0 {
        1.0
    } else {
        // the mass is decreasing in r and drops to k * floor <= 1 at max(mu) / floor
        let (mut lo, mut hi) = (1.0f64, x.iter().copied().fold(0.0, f64::max) / floor);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if kpm_mass(x, floor, mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let (mut above, mut floored) = (0.0, 0usize);
        for &v in x {
            if v / r > floor {
                above += v;
            } else {
                floored += 1;
            }
        }
        let polished = above / (1.0 - floored as f64 * floor);
        let consistent = polished.is_finite()
            && polished > 0.0
            && x.iter().all(|&v| (v / r > floor) == (v / polished > floor));
        if consistent {
            polished
        } else {
            r
        }
    };
    let nu = x.iter().map(|&v| (v / r).max(floor)).collect();
    Ok(KpmOutput {
        nu: Distribution::from_raw(nu),
        r,
    })
}

/// Exponential mechanism over the output index set of `distances`, with
/// utility `u(mu, j) = -sum_i mu_i d(i, j)`.
#[derive(Debug, Clone)]
pub struct ExpMechParams {
    distances: CostMatrix,
    epsilon: f64,
    sensitivity: f64,
}

impl ExpMechParams {
    pub fn new(distances: CostMatrix, epsilon: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and > 0, got {epsilon}")));
        }
        if sensitivity.is_nan() || sensitivity <= 0.0 {
            return Err(Error::ZeroSensitivity);
        }
        Ok(Self {
            distances,
            epsilon,
            sensitivity,
        })
    }

    /// Uses the global range `max_{i,i',j} |d(i,j) - d(i',j)|` of the utility.
    pub fn with_default_sensitivity(distances: CostMatrix, epsilon: f64) -> Result<Self> {
        let s = default_sensitivity(&distances);
        Self::new(distances, epsilon, s)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn distances(&self) -> &CostMatrix {
        &self.distances
    }
}

pub fn default_sensitivity(d: &CostMatrix) -> f64 {
    (0..d.cols())
        .map(|j| {
            let col = (0..d.rows()).map(|i| d.get(i, j));
            let hi = col.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = col.fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}

pub fn exp_mechanism(params: &ExpMechParams, mu: &Distribution) -> Result<Distribution> {
    let d = &params.distances;
    if mu.len() != d.rows() {
        return Err(Error::DimensionMismatch {
            expected: d.rows(),
            actual: mu.len(),
        });
    }
    let scale = params.epsilon / (2.0 * params.sensitivity);
    let scores: Vec<f64> = (0..d.cols())
        .map(|j| -scale * mu.probs().iter().enumerate().map(|(i, w)| w * d.get(i, j)).sum::<f64>())
        .collect();
    let log_z = log_sum_exp(scores.iter().copied());
    Ok(Distribution::from_raw(scores.iter().map(|s| (s - log_z).exp()).collect()))
}
