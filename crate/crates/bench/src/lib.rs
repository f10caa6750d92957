//! Fixtures shared by the benchmarks in `benches/`.

use wproj_core::baselines::kpm_base_measure;
use wproj_core::experiment::{draw_inputs, ExperimentConfig};
use wproj_core::{full_cost_matrix, CostMatrix, Distribution, GroundSpace, LdpPolytope};

/// Ring costs, one Dirichlet(0.1) input and the KPM-measure polytope.
pub struct RingInstance {
    pub cost: CostMatrix,
    pub mu: Distribution,
    pub polytope: LdpPolytope,
}

pub fn ring_instance(k: usize, epsilon: f64, p: f64, seed: u64) -> RingInstance {
    let config = ExperimentConfig {
        space: GroundSpace::Ring { k },
        seed,
        ..Default::default()
    };
    let mu = draw_inputs(&config).expect("valid config").remove(0);
    RingInstance {
        cost: full_cost_matrix(&config.space, p).expect("valid ring"),
        mu,
        polytope: LdpPolytope::new(kpm_base_measure(k, epsilon), epsilon).expect("feasible measure"),
    }
}
