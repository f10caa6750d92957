//! Experiment harness: synthetic inputs on a ground space, every mechanism
//! under comparison, and deterministic machine-readable results.
//!
//! Results are a pure function of the configuration. Cells run on the rayon
//! pool but are collected in configuration order, and wall-clock timings are
//! kept out of the results JSON (they go to `timings.csv`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::audit_outputs;
use crate::base_measure::{optimize_base_measure, BaseMeasureProblem, MirrorDescentOptions};
use crate::baselines::{exp_mechanism, kpm_base_measure, kpm_transform, ExpMechParams, KpmParams};
use crate::entropic::{
    entropic_gap_bound, project_entropic_with, Continuation, EntropicOptions, EntropicState, SolveMode, StoppingRule,
};
use crate::error::{Error, Result};
use crate::exact::{project_dirac_closed_form, project_exact, wasserstein};
use crate::geometry::{full_cost_matrix, CostMatrix, GroundSpace};
use crate::io::write_json;
use crate::polytope::{kl_divergence, Distribution, LdpPolytope};

/// Recorded in the results metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha), seeded from a u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Wasserstein projection; entropic for `lambda > 0`, exact for `lambda = 0`.
    Wpm,
    WpmExact,
    Kpm,
    Expmech,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::Wpm, Mechanism::WpmExact, Mechanism::Kpm, Mechanism::Expmech];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Wpm => "wpm",
            Mechanism::WpmExact => "wpm-exact",
            Mechanism::Kpm => "kpm",
            Mechanism::Expmech => "expmech",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mechanism `{s}` (expected wpm, wpm-exact, kpm or expmech)")))
    }
}

/// How synthetic input distributions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputModel {
    /// `Dirichlet(concentration * 1)`, via normalized Gamma draws.
    Dirichlet { concentration: f64 },
    /// Empirical distribution of `samples` check-ins around `clusters` random
    /// centers with Gaussian spread measured in cells. Grid spaces only.
    Checkins { clusters: usize, samples: usize, spread: f64 },
}

/// Base measure of the projection mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMeasureChoice {
    /// `e^(eps/2) / (e^eps + k - 1)` on every point, the measure whose
    /// polytope contains every KPM output.
    Kpm,
    /// `1 / k_v` on every point.
    Uniform,
    /// Mirror descent on the worst-case utility.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: GroundSpace,
    pub p: f64,
    pub epsilons: Vec<f64>,
    /// `0` selects the exact solver.
    pub lambdas: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub seed: u64,
    pub draws: usize,
    pub input: InputModel,
    pub base_measure: BaseMeasureChoice,
    pub max_iters: usize,
    pub tol: f64,
    /// Warm-start entropic solves through a decreasing `lambda` sequence.
    pub continuation: bool,
    /// Draws for which a per-iteration convergence series is recorded.
    pub convergence_draws: usize,
    /// Mirror-descent iterations for optimized base measures.
    pub md_iters: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            space: GroundSpace::Ring { k: 30 },
            p: 2.0,
            epsilons: vec![5.0],
            lambdas: vec![0.0, 0.01],
            mechanisms: Mechanism::ALL.to_vec(),
            seed: 7,
            draws: 1,
            input: InputModel::Dirichlet { concentration: 0.1 },
            base_measure: BaseMeasureChoice::Kpm,
            max_iters: 10_000,
            tol: 1e-10,
            continuation: true,
            convergence_draws: 1,
            md_iters: 1000,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn ring(k: usize) -> Self {
        Self {
            space: GroundSpace::Ring { k },
            ..Default::default()
        }
    }

    /// 20 x 20 unit grid with synthetic check-ins.
    pub fn grid() -> Self {
        Self {
            space: GroundSpace::Grid {
                rows: 20,
                cols: 20,
                cell_size: 1.0,
            },
            p: 1.0,
            epsilons: vec![1.0, 3.0],
            lambdas: vec![0.0, 0.05],
            input: InputModel::Checkins {
                clusters: 4,
                samples: 2000,
                spread: 1.5,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        let fail = |name, reason: &str| Err(Error::param(name, reason.to_string()));
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return fail("p", "must be finite and >= 1");
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return fail("epsilons", "must be a nonempty list of finite values > 0");
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("lambdas", "must be a nonempty list of finite values >= 0");
        }
        if self.mechanisms.is_empty() {
            return fail("mechanisms", "must be nonempty");
        }
        if self.draws == 0 {
            return fail("draws", "must be >= 1");
        }
        if self.max_iters == 0 || self.md_iters == 0 {
            return fail("max_iters", "iteration caps must be >= 1");
        }
        if !(self.tol > 0.0) {
            return fail("tol", "must be > 0");
        }
        match self.input {
            InputModel::Dirichlet { concentration } if !(concentration > 0.0 && concentration.is_finite()) => {
                fail("input", "Dirichlet concentration must be finite and > 0")
            }
            InputModel::Checkins { clusters, samples, spread } => {
                if !matches!(self.space, GroundSpace::Grid { .. }) {
                    fail("input", "check-in inputs need a grid space")
                } else if clusters == 0 || samples == 0 || !(spread >= 0.0 && spread.is_finite()) {
                    fail("input", "check-ins need clusters >= 1, samples >= 1 and a finite spread >= 0")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// One mechanism run on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub draw: usize,
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub lambda: Option<f64>,
    /// `W_p(output, input)` by exact optimal transport.
    pub wasserstein_p: f64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// `W_p` minus the exact projection's `W_p` in the same polytope.
    pub gap_vs_exact: Option<f64>,
    pub gap_bound: Option<f64>,
    pub audit_pass: bool,
    pub audit_max_log_ratio: f64,
    pub output: Vec<f64>,
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub draw: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub iteration: usize,
    pub hilbert_residual: f64,
    /// `KL(q^(t) || q^(t-1))`; `None` at the first iteration.
    pub kl_residual: Option<f64>,
    /// Sampled on a geometric grid of iterations; `None` elsewhere.
    pub wasserstein_to_input: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasureRecord {
    pub epsilon: f64,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub generator: String,
    pub rng: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

fn metadata(config: &ExperimentConfig) -> Metadata {
    Metadata {
        generator: format!("wproj {}", env!("CARGO_PKG_VERSION")),
        rng: RNG_NAME.to_string(),
        seed: config.seed,
        config: ExperimentConfig {
            output_dir: None,
            ..config.clone()
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub metadata: Metadata,
    pub inputs: Vec<Vec<f64>>,
    pub base_measures: Vec<BaseMeasureRecord>,
    pub rows: Vec<ResultRow>,
    #[serde(skip)]
    pub convergence: Vec<ConvergencePoint>,
}

impl ExperimentOutput {
    pub fn results_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn convergence_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["draw", "epsilon", "lambda", "iteration", "hilbert_residual", "kl_residual", "wasserstein_to_input"])?;
        for c in &self.convergence {
            w.write_record([
                c.draw.to_string(),
                c.epsilon.to_string(),
                c.lambda.to_string(),
                c.iteration.to_string(),
                c.hilbert_residual.to_string(),
                c.kl_residual.map_or(String::new(), |v| v.to_string()),
                c.wasserstein_to_input.map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        csv_string(w)
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["draw", "mechanism", "epsilon", "lambda", "runtime_ms"])?;
        for r in &self.rows {
            w.write_record([
                r.draw.to_string(),
                r.mechanism.to_string(),
                r.epsilon.to_string(),
                r.lambda.map_or(String::new(), |v| v.to_string()),
                format!("{:.3}", r.runtime_ms),
            ])?;
        }
        csv_string(w)
    }

    /// Writes `results.json`, `convergence.csv` and `timings.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.json"), self.results_json()?)?;
        std::fs::write(dir.join("convergence.csv"), self.convergence_csv()?)?;
        std::fs::write(dir.join("timings.csv"), self.timings_csv()?)?;
        Ok(())
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Draws `config.draws` inputs from `config.input`.
pub fn draw_inputs(config: &ExperimentConfig) -> Result<Vec<Distribution>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.space.len();
    (0..config.draws)
        .map(|_| match config.input {
            InputModel::Dirichlet { concentration } => {
                let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::param("input", e.to_string()))?;
                let w: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                Distribution::from_weights(&w)
            }
            InputModel::Checkins {
                clusters,
                samples,
                spread,
            } => {
                let GroundSpace::Grid { rows, cols, .. } = config.space else {
                    return Err(Error::param("input", "check-in inputs need a grid space"));
                };
                let noise = Normal::new(0.0, spread).map_err(|e| Error::param("input", e.to_string()))?;
                let centers: Vec<(f64, f64)> = (0..clusters)
                    .map(|_| (rng.random_range(0.0..rows as f64), rng.random_range(0.0..cols as f64)))
                    .collect();
                let mut counts = vec![0.0; k];
                for _ in 0..samples {
                    let (r0, c0) = centers[rng.random_range(0..clusters)];
                    let r = (r0 + noise.sample(&mut rng)).floor().clamp(0.0, rows as f64 - 1.0) as usize;
                    let c = (c0 + noise.sample(&mut rng)).floor().clamp(0.0, cols as f64 - 1.0) as usize;
                    counts[r * cols + c] += 1.0;
                }
                Distribution::from_weights(&counts)
            }
        })
        .collect()
}

/// Shared data for one experiment.
struct Setup {
    cost: CostMatrix,
    distances: CostMatrix,
    k: usize,
    p: f64,
}

impl Setup {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cost: full_cost_matrix(&config.space, config.p)?,
            distances: full_cost_matrix(&config.space, 1.0)?,
            k: config.space.len(),
            p: config.p,
        })
    }

    fn base_measure(&self, config: &ExperimentConfig, epsilon: f64) -> Result<Vec<f64>> {
        match config.base_measure {
            BaseMeasureChoice::Kpm => Ok(kpm_base_measure(self.k, epsilon)),
            BaseMeasureChoice::Uniform => Ok(vec![1.0 / self.k as f64; self.k]),
            BaseMeasureChoice::Optimized => {
                let problem = BaseMeasureProblem::new(self.cost.clone(), epsilon)?;
                Ok(optimize_base_measure(&problem, config.md_iters, &MirrorDescentOptions::default())?.m_bar)
            }
        }
    }
}

fn entropic_options(config: &ExperimentConfig) -> EntropicOptions {
    EntropicOptions {
        stop: StoppingRule {
            tol: config.tol,
            max_iters: config.max_iters,
        },
        continuation: config.continuation.then(Continuation::default),
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    epsilon_index: usize,
    mechanism: Mechanism,
    lambda: Option<f64>,
}

struct Solved {
    nu: Distribution,
    iterations: Option<usize>,
    converged: Option<bool>,
}

/// Exact projections of the drawn inputs, keyed by epsilon index then draw.
type Reference = Vec<Vec<Distribution>>;

fn dirac_index(mu: &Distribution) -> Option<usize> {
    match mu.support()[..] {
        [i] => Some(i),
        _ => None,
    }
}

fn run_mechanism(
    setup: &Setup,
    config: &ExperimentConfig,
    cell: &Cell,
    q: &LdpPolytope,
    mu: &Distribution,
    reference: Option<&Distribution>,
) -> Result<Solved> {
    let epsilon = q.epsilon();
    let plain = |nu| Solved {
        nu,
        iterations: None,
        converged: None,
    };
    match (cell.mechanism, cell.lambda) {
        (Mechanism::WpmExact, _) | (Mechanism::Wpm, Some(0.0)) => match (reference, dirac_index(mu)) {
            (Some(nu), _) => Ok(plain(nu.clone())),
            (None, Some(i)) => Ok(plain(project_dirac_closed_form(setup.cost.row(i), q)?.nu)),
            (None, None) => Ok(plain(project_exact(&setup.cost, mu, q)?.nu)),
        },
        (Mechanism::Wpm, lambda) => {
            let lambda = lambda.unwrap_or(0.0);
            let out = project_entropic_with(&setup.cost, mu, q, lambda, &entropic_options(config))?;
            Ok(Solved {
                nu: out.nu,
                iterations: Some(out.report.iterations + out.report.warmup_iterations),
                converged: Some(out.report.converged),
            })
        }
        (Mechanism::Kpm, _) => Ok(plain(kpm_transform(&KpmParams::new(setup.k, epsilon)?, mu)?)),
        (Mechanism::Expmech, _) => Ok(plain(exp_mechanism(
            &ExpMechParams::with_default_sensitivity(setup.distances.clone(), epsilon)?,
            mu,
        )?)),
    }
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for epsilon_index in 0..config.epsilons.len() {
        for &mechanism in &config.mechanisms {
            let lambdas: Vec<Option<f64>> = match mechanism {
                Mechanism::Wpm => config.lambdas.iter().map(|&l| Some(l)).collect(),
                Mechanism::WpmExact => vec![Some(0.0)],
                Mechanism::Kpm | Mechanism::Expmech => vec![None],
            };
            for lambda in lambdas {
                out.push(Cell {
                    epsilon_index,
                    mechanism,
                    lambda,
                });
            }
        }
    }
    out
}

fn convergence_series(
    setup: &Setup,
    config: &ExperimentConfig,
    draw: usize,
    mu: &Distribution,
    q: &LdpPolytope,
    lambda: f64,
) -> Result<Vec<ConvergencePoint>> {
    let mut state = EntropicState::new(&setup.cost, mu, q, lambda, SolveMode::Auto)?;
    let mut out = Vec::new();
    let mut next_sample = 1.0f64;
    let mut prev: Option<Distribution> = None;
    for t in 1..=config.max_iters {
        let step = state.step()?;
        let kl_residual = prev.as_ref().map(|p| kl_divergence(step.q.probs(), p.probs()));
        let done = step.residual <= config.tol || t == config.max_iters;
        let record = t as f64 >= next_sample || done;
        if t as f64 >= next_sample {
            next_sample = (next_sample * 1.25).max(next_sample + 1.0);
        }
        out.push(ConvergencePoint {
            draw,
            epsilon: q.epsilon(),
            lambda,
            iteration: t,
            hilbert_residual: step.residual,
            kl_residual,
            wasserstein_to_input: if record {
                Some(wasserstein(&setup.cost, mu, &step.q)?)
            } else {
                None
            },
        });
        prev = Some(step.q);
        if done {
            break;
        }
    }
    Ok(out)
}

/// Runs every (epsilon, mechanism, lambda) cell on every drawn input.
pub fn run_synthetic(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let inputs = draw_inputs(config)?;
    let measures: Vec<Vec<f64>> = config
        .epsilons
        .par_iter()
        .map(|&e| setup.base_measure(config, e))
        .collect::<Result<_>>()?;
    let polytopes: Vec<LdpPolytope> = config
        .epsilons
        .iter()
        .zip(&measures)
        .map(|(&e, m)| LdpPolytope::new(m.clone(), e))
        .collect::<Result<_>>()?;

    let needs_reference = config
        .mechanisms
        .iter()
        .any(|m| matches!(m, Mechanism::Wpm | Mechanism::WpmExact));
    let reference: Reference = if needs_reference {
        polytopes
            .par_iter()
            .map(|q| {
                inputs
                    .par_iter()
                    .map(|mu| Ok(project_exact(&setup.cost, mu, q)?.nu))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    // W_p of each exact projection, the baseline for gap_vs_exact
    let reference_w: Vec<Vec<f64>> = reference
        .par_iter()
        .map(|row| {
            row.par_iter()
                .zip(&inputs)
                .map(|(nu, mu)| wasserstein(&setup.cost, mu, nu))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let cells = cells(config);
    let rows: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|cell| {
            let q = &polytopes[cell.epsilon_index];
            let epsilon = config.epsilons[cell.epsilon_index];
            let mut outputs: Vec<Distribution> = (0..setup.k)
                .into_par_iter()
                .map(|i| Ok(run_mechanism(&setup, config, cell, q, &Distribution::dirac(setup.k, i), None)?.nu))
                .collect::<Result<_>>()?;
            let mut rows = Vec::with_capacity(inputs.len());
            for (draw, mu) in inputs.iter().enumerate() {
                let start = Instant::now();
                let cached = reference.get(cell.epsilon_index).map(|r| &r[draw]);
                let solved = run_mechanism(&setup, config, cell, q, mu, cached)?;
                let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                let w = wasserstein(&setup.cost, mu, &solved.nu)?;
                let is_wpm = matches!(cell.mechanism, Mechanism::Wpm | Mechanism::WpmExact);
                let lambda = cell.lambda.filter(|_| is_wpm);
                rows.push(ResultRow {
                    draw,
                    mechanism: cell.mechanism,
                    epsilon,
                    lambda,
                    wasserstein_p: w,
                    iterations: solved.iterations,
                    converged: solved.converged,
                    gap_vs_exact: is_wpm.then(|| w - reference_w[cell.epsilon_index][draw]),
                    gap_bound: lambda.map(|l| entropic_gap_bound(l, setup.k, setup.k, setup.p)),
                    audit_pass: false,
                    audit_max_log_ratio: f64::NAN,
                    output: solved.nu.probs().to_vec(),
                    runtime_ms,
                });
                outputs.push(solved.nu);
            }
            let audit = audit_outputs(&outputs, setup.k, epsilon)?;
            for row in &mut rows {
                row.audit_pass = audit.pass;
                row.audit_max_log_ratio = audit.max_log_ratio;
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut convergence = Vec::new();
    if config.mechanisms.contains(&Mechanism::Wpm) {
        let jobs: Vec<(usize, usize, f64)> = (0..config.epsilons.len())
            .flat_map(|e| {
                config
                    .lambdas
                    .iter()
                    .filter(|l| **l > 0.0)
                    .flat_map(move |&l| (0..config.convergence_draws.min(config.draws)).map(move |d| (e, d, l)))
            })
            .collect();
        let series: Vec<Vec<ConvergencePoint>> = jobs
            .par_iter()
            .map(|&(e, d, l)| convergence_series(&setup, config, d, &inputs[d], &polytopes[e], l))
            .collect::<Result<_>>()?;
        convergence = series.concat();
    }

    Ok(ExperimentOutput {
        metadata: metadata(config),
        inputs: inputs.into_iter().map(Distribution::into_vec).collect(),
        base_measures: config
            .epsilons
            .iter()
            .zip(measures)
            .map(|(&epsilon, m)| BaseMeasureRecord { epsilon, m })
            .collect(),
        rows: rows.concat(),
        convergence,
    })
}

/// The synthetic ring experiment: `Dirichlet(concentration)` inputs on `Ring(k)`.
pub fn run_synthetic_ring(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if !matches!(config.space, GroundSpace::Ring { .. }) {
        return Err(Error::param("space", "the ring experiment needs a ring space"));
    }
    run_synthetic(config)
}

/// Worst-case utility `U = max_i W_p(M[delta_i], delta_i)` of one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub p: f64,
    pub utility: f64,
    /// Mirror-descent regret bound on `U^p`, for the optimized projection row.
    pub regret_bound: Option<f64>,
    /// Input index attaining the maximum.
    pub worst_input: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseTable {
    pub metadata: Metadata,
    pub rows: Vec<WorstCaseRow>,
    pub base_measures: Vec<BaseMeasureRecord>,
}

impl WorstCaseTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(dir.join("worst_case.json"), self)
    }
}

fn dirac_max(setup: &Setup, f: impl Fn(&Distribution) -> Result<Distribution> + Sync) -> Result<(f64, usize)> {
    let costs: Vec<f64> = (0..setup.k)
        .into_par_iter()
        .map(|i| {
            let nu = f(&Distribution::dirac(setup.k, i))?;
            Ok(setup.cost.row(i).iter().zip(nu.probs()).map(|(c, v)| c * v).sum())
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in costs.iter().enumerate() {
        if v > costs[best] {
            best = i;
        }
    }
    Ok((costs[best], best))
}

/// Worst-case utility of every configured mechanism at every epsilon. The
/// projection mechanism uses a mirror-descent base measure and is evaluated
/// in closed form; baselines take the maximum over Dirac inputs.
pub fn run_worst_case_table(config: &ExperimentConfig) -> Result<WorstCaseTable> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let per_eps: Vec<(Vec<WorstCaseRow>, Option<BaseMeasureRecord>)> = config
        .epsilons
        .par_iter()
        .map(|&epsilon| {
            let mut rows = Vec::new();
            let mut record = None;
            let mut wpm_done = false;
            for &mechanism in &config.mechanisms {
                match mechanism {
                    Mechanism::Wpm | Mechanism::WpmExact if !wpm_done => {
                        wpm_done = true;
                        let problem = BaseMeasureProblem::new(setup.cost.clone(), epsilon)?;
                        let md = optimize_base_measure(&problem, config.md_iters, &MirrorDescentOptions::default())?;
                        let wc = problem.worst_case_f(&md.m_bar)?;
                        rows.push(WorstCaseRow {
                            mechanism: Mechanism::Wpm,
                            epsilon,
                            p: setup.p,
                            utility: wc.f.max(0.0).powf(1.0 / setup.p),
                            regret_bound: Some(md.regret_bound),
                            worst_input: wc.argmax,
                        });
                        record = Some(BaseMeasureRecord { epsilon, m: md.m_bar });
                    }
                    Mechanism::Wpm | Mechanism::WpmExact => {}
                    Mechanism::Kpm => {
                        let params = KpmParams::new(setup.k, epsilon)?;
                        let (f, i) = dirac_max(&setup, |mu| kpm_transform(&params, mu))?;
                        rows.push(WorstCaseRow {
                            mechanism,
                            epsilon,
                            p: setup.p,
                            utility: f.powf(1.0 / setup.p),
                            regret_bound: None,
                            worst_input: i,
                        });
                    }
                    Mechanism::Expmech => {
                        let params = ExpMechParams::with_default_sensitivity(setup.distances.clone(), epsilon)?;
                        let (f, i) = dirac_max(&setup, |mu| exp_mechanism(&params, mu))?;
                        rows.push(WorstCaseRow {
                            mechanism,
                            epsilon,
                            p: setup.p,
                            utility: f.powf(1.0 / setup.p),
                            regret_bound: None,
                            worst_input: i,
                        });
                    }
                }
            }
            Ok((rows, record))
        })
        .collect::<Result<_>>()?;
    let (rows, records): (Vec<_>, Vec<_>) = per_eps.into_iter().unzip();
    Ok(WorstCaseTable {
        metadata: metadata(config),
        rows: rows.concat(),
        base_measures: records.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            space: GroundSpace::Ring { k: 8 },
            epsilons: vec![1.0, 4.0],
            lambdas: vec![0.0, 0.5],
            draws: 2,
            md_iters: 200,
            ..Default::default()
        }
    }

    #[test]
    fn config_json_roundtrip_and_defaults() {
        let cfg = small();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"space": {"kind": "ring", "k": 12}, "epsilons": [2.0]}"#).unwrap();
        assert_eq!(partial.space.len(), 12);
        assert_eq!(partial.p, 2.0);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = small();
        cfg.epsilons = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.lambdas = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.input = InputModel::Checkins {
            clusters: 2,
            samples: 10,
            spread: 1.0,
        };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::grid().validate().is_ok());
    }

    #[test]
    fn mechanism_names() {
        for m in Mechanism::ALL {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("nope".parse::<Mechanism>().is_err());
    }

    #[test]
    fn synthetic_run_is_consistent() {
        let out = run_synthetic(&small()).unwrap();
        // 2 eps x (2 wpm lambdas + exact + kpm + expmech) x 2 draws
        assert_eq!(out.rows.len(), 2 * 5 * 2);
        for r in &out.rows {
            assert!(r.audit_pass, "{r:?}");
            if let Some(g) = r.gap_vs_exact {
                assert!(g >= -1e-8);
                if let Some(b) = r.gap_bound {
                    assert!(g <= b);
                }
            }
        }
        assert!(!out.convergence.is_empty());
        let again = run_synthetic(&small()).unwrap();
        assert_eq!(out.results_json().unwrap(), again.results_json().unwrap());
    }

    #[test]
    fn checkin_inputs_live_on_the_grid() {
        let cfg = ExperimentConfig {
            space: GroundSpace::Grid {
                rows: 5,
                cols: 4,
                cell_size: 1.0,
            },
            input: InputModel::Checkins {
                clusters: 2,
                samples: 300,
                spread: 0.7,
            },
            draws: 3,
            ..Default::default()
        };
        let inputs = draw_inputs(&cfg).unwrap();
        assert_eq!(inputs.len(), 3);
        for mu in inputs {
            assert_eq!(mu.len(), 20);
            assert!(mu.probs().iter().all(|v| (v * 300.0 - (v * 300.0).round()).abs() < 1e-9));
        }
    }

    #[test]
    fn worst_case_ordering_on_small_ring() {
        let cfg = ExperimentConfig {
            md_iters: 2000,
            ..small()
        };
        let table = run_worst_case_table(&cfg).unwrap();
        for &eps in &cfg.epsilons {
            let of = |m: Mechanism| table.rows.iter().find(|r| r.mechanism == m && r.epsilon == eps).unwrap();
            let wpm = of(Mechanism::Wpm);
            let slack = wpm.regret_bound.unwrap();
            for other in [Mechanism::Kpm, Mechanism::Expmech] {
                assert!(wpm.utility.powf(2.0) <= of(other).utility.powf(2.0) + slack);
            }
        }
    }
}
