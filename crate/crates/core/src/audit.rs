//! Empirical LDP audit over Dirac inputs, and sampling from mechanism outputs.
//!
//! On a finite output space a mechanism is eps-LDP iff every output
//! coordinate satisfies `max_inputs out(j) <= e^eps min_inputs out(j)`, so the
//! audit reduces to one max/min ratio per coordinate. Only the evaluated
//! inputs are covered: the report is evidence, not a proof.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::Distribution;

/// Slack on the log ratio.
pub const LOG_RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Input assigning the most mass to `coordinate`.
    pub high: String,
    /// Input assigning the least mass to `coordinate`.
    pub low: String,
    pub coordinate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `+inf` when some input gives a coordinate zero mass and another does not.
    pub max_log_ratio: f64,
    pub witness: Option<Witness>,
    pub epsilon_claimed: f64,
    pub tolerance: f64,
    pub inputs_evaluated: usize,
    pub pass: bool,
}

fn label(index: usize, k: usize) -> String {
    if index < k {
        format!("dirac({index})")
    } else {
        format!("extra({})", index - k)
    }
}

fn check_output(out: &Distribution, expected_len: Option<usize>, input: &str) -> Result<()> {
    let bad = |reason: String| Error::MechanismOutput {
        input: input.to_string(),
        reason,
    };
    if let Some(len) = expected_len {
        if out.len() != len {
            return Err(bad(format!("length {} differs from {len}", out.len())));
        }
    }
    if let Some(v) = out.probs().iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(bad(format!("entry {v} is not a probability")));
    }
    let sum: f64 = out.probs().iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(bad(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Audits `mechanism` on the `k` Dirac inputs plus `extra_inputs`.
pub fn audit_ldp<F>(mechanism: F, k: usize, epsilon: f64, extra_inputs: &[Distribution]) -> Result<AuditReport>
where
    F: Fn(&Distribution) -> Result<Distribution> + Sync,
{
    let mut outputs: Vec<Distribution> = (0..k)
        .into_par_iter()
        .map(|i| mechanism(&Distribution::dirac(k, i)))
        .collect::<Result<_>>()?;
    for extra in extra_inputs {
        outputs.push(mechanism(extra)?);
    }
    audit_outputs(&outputs, k, epsilon)
}

/// Audits precomputed outputs. The first `k` entries belong to the Dirac
/// inputs, the rest to extra inputs.
pub fn audit_outputs(outputs: &[Distribution], k: usize, epsilon: f64) -> Result<AuditReport> {
    let k_v = outputs.first().map(Distribution::len);
    for (n, out) in outputs.iter().enumerate() {
        check_output(out, k_v, &label(n, k))?;
    }

    let mut max_log_ratio = 0.0f64;
    let mut witness = None;
    for j in 0..k_v.unwrap_or(0) {
        let (mut hi, mut lo) = (0usize, 0usize);
        for (n, out) in outputs.iter().enumerate() {
            if out[j] > outputs[hi][j] {
                hi = n;
            }
            if out[j] < outputs[lo][j] {
                lo = n;
            }
        }
        let (top, bottom) = (outputs[hi][j], outputs[lo][j]);
        let ratio = if top == 0.0 {
            0.0
        } else if bottom == 0.0 {
            f64::INFINITY
        } else {
            (top / bottom).ln()
        };
        if ratio > max_log_ratio || (witness.is_none() && ratio == max_log_ratio && ratio > 0.0) {
            max_log_ratio = ratio;
            witness = Some(Witness {
                high: label(hi, k),
                low: label(lo, k),
                coordinate: j,
            });
        }
    }
    Ok(AuditReport {
        pass: max_log_ratio <= epsilon + LOG_RATIO_TOL,
        max_log_ratio,
        witness,
        epsilon_claimed: epsilon,
        tolerance: LOG_RATIO_TOL,
        inputs_evaluated: outputs.len(),
    })
}

/// `n` i.i.d. draws from `nu` by inverse CDF, reproducible from `seed`.
pub fn sample(nu: &Distribution, seed: u64, n: usize) -> Result<Vec<usize>> {
    let index = WeightedIndex::new(nu.probs()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| index.sample(&mut rng)).collect())
}
