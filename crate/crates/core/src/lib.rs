//! Locally differentially private sampling by Wasserstein projection.
//!
//! A mechanism maps an input distribution `mu` on `k` points to an output
//! distribution `nu` on `k_v` points and releases one sample from `nu`. It is
//! eps-LDP exactly when every output lies in the polytope
//! `{nu : e^(-eps/2) m <= nu <= e^(eps/2) m}` of some base measure `m`.
//! This crate projects `mu` onto that polytope in Wasserstein distance:
//!
//! - [`exact`]: exact projection by min-cost flow, plus a closed form for
//!   Dirac inputs.
//! - [`entropic`]: entropic-regularized projection by alternating scaling.
//! - [`base_measure`]: mirror descent over base measures for the best
//!   worst-case utility; [`sphere`] solves the continuous sphere case.
//! - [`baselines`]: the KL projection mechanism and the exponential mechanism.
//! - [`audit`]: empirical LDP audit and sampling.
//! - [`experiment`]: reproducible comparisons on rings and grids.

pub mod audit;
pub mod base_measure;
pub mod baselines;
pub mod entropic;
pub mod error;
pub mod exact;
pub mod experiment;
mod flow;
pub mod geometry;
pub mod io;
pub mod polytope;
pub mod quadrature;
pub mod sphere;

pub use audit::{audit_ldp, audit_outputs, sample, AuditReport};
pub use base_measure::{optimize_base_measure, BaseMeasureProblem, MirrorDescentOptions, MirrorDescentResult};
pub use baselines::{exp_mechanism, kpm_transform, ExpMechParams, KpmParams};
pub use entropic::{
    entropic_gap_bound, project_entropic, project_entropic_with, EntropicOptions, EntropicProjection, SolveReport,
    StoppingRule,
};
pub use error::{Error, Result};
pub use exact::{project_dirac_closed_form, project_exact, wasserstein, ExactProjection};
pub use geometry::{build_cost_matrix, full_cost_matrix, CostMatrix, GroundSpace, Metric};
pub use polytope::{Distribution, LdpPolytope, Tolerances};
pub use sphere::{sphere_base_measure, SphereProblem, SphereSolution};
