//! Random problem instances for integration and acceptance tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wproj_core::{CostMatrix, Distribution, LdpPolytope};

pub struct Instance {
    pub cost: CostMatrix,
    pub mu: Distribution,
    pub m: Vec<f64>,
    pub epsilon: f64,
    pub polytope: LdpPolytope,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive weights normalized to a distribution; about a quarter of the
/// entries are zero when `sparse` is set (never all of them).
pub fn random_distribution(rng: &mut impl Rng, n: usize, sparse: bool) -> Distribution {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if sparse && rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.01..1.0) })
        .collect();
    if w.iter().all(|v| *v == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    Distribution::from_weights(&w).unwrap()
}

/// A base measure with random shape and mass uniform in `[e^(-eps/2), e^(eps/2)]`.
pub fn random_base_measure(rng: &mut impl Rng, n: usize, epsilon: f64) -> Vec<f64> {
    let shape: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = shape.iter().sum();
    let mass = rng.random_range((-epsilon / 2.0).exp()..=(epsilon / 2.0).exp());
    shape.iter().map(|v| v * mass / total).collect()
}

/// Costs uniform in `[0, 5)`, or small integers when `ties` is set.
pub fn random_cost(rng: &mut impl Rng, k: usize, k_v: usize, ties: bool) -> CostMatrix {
    let data = (0..k * k_v)
        .map(|_| if ties { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..5.0) })
        .collect();
    CostMatrix::from_vec(k, k_v, 1.0, data).unwrap()
}

pub fn random_instance(seed: u64, max_k: usize, max_kv: usize, ties: bool) -> Instance {
    let mut rng = rng(seed);
    let k = rng.random_range(1..=max_k);
    let k_v = rng.random_range(1..=max_kv);
    let epsilon = rng.random_range(0.5..=5.0);
    let cost = random_cost(&mut rng, k, k_v, ties);
    let mu = random_distribution(&mut rng, k, true);
    let m = random_base_measure(&mut rng, k_v, epsilon);
    let polytope = LdpPolytope::new(m.clone(), epsilon).unwrap();
    Instance {
        cost,
        mu,
        m,
        epsilon,
        polytope,
    }
}

/// A random member of the polytope: a random point of the box, then moved
/// towards the lower or upper corner until it sums to one.
pub fn random_member(rng: &mut impl Rng, q: &LdpPolytope) -> Distribution {
    let n = q.dim();
    let lo: Vec<f64> = (0..n).map(|j| q.lower(j)).collect();
    let hi: Vec<f64> = (0..n).map(|j| q.upper(j)).collect();
    let x: Vec<f64> = (0..n).map(|j| rng.random_range(0.0..=1.0) * (hi[j] - lo[j]) + lo[j]).collect();
    let s: f64 = x.iter().sum();
    let target: Vec<f64> = if s > 1.0 { lo.clone() } else { hi.clone() };
    let t_sum: f64 = target.iter().sum();
    // x + w (target - x) sums to one for w in [0, 1]
    let w = if (t_sum - s).abs() < 1e-300 { 0.0 } else { (1.0 - s) / (t_sum - s) };
    let v: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a + w * (b - a)).collect();
    let total: f64 = v.iter().sum();
    Distribution::with_tolerance(v.iter().map(|a| a / total).collect(), 1e-9).unwrap()
}

pub fn rows(c: &CostMatrix) -> Vec<Vec<f64>> {
    c.to_rows()
}
