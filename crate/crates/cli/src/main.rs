use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wproj_core::base_measure::WorstCase;
use wproj_core::baselines::kpm_base_measure;
use wproj_core::entropic::{Continuation, SolveMode};
use wproj_core::experiment::{
    run_synthetic, run_worst_case_table, BaseMeasureChoice, ExperimentConfig, Mechanism,
};
use wproj_core::io::{read_cost_matrix, read_points, read_vector, write_cost_matrix};
use wproj_core::{
    audit_ldp, exp_mechanism, full_cost_matrix, kpm_transform, optimize_base_measure, project_entropic_with,
    project_exact, sample, sphere_base_measure, wasserstein, BaseMeasureProblem, CostMatrix, Distribution,
    EntropicOptions, ExpMechParams, GroundSpace, KpmParams, LdpPolytope, Metric, MirrorDescentOptions, StoppingRule,
};

#[derive(Parser)]
#[command(name = "wproj", version, about = "Locally private sampling by Wasserstein projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a reproducible experiment and write results JSON/CSV.
    Bench(BenchArgs),
    /// Apply one mechanism to an input distribution.
    Project(ProjectArgs),
    /// Optimize the base measure by mirror descent.
    OptimizeM(OptimizeArgs),
    /// Closed-form optimal base measure on the sphere S^d.
    SphereM(SphereArgs),
    /// Audit a mechanism over all Dirac inputs on Ring(k).
    Audit(AuditArgs),
    /// Build a cost matrix `d^p` for a ground space.
    Cost(CostArgs),
    /// Draw samples from an output distribution.
    Sample(SampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Ring,
    Grid,
    WorstCase,
}

#[derive(Args)]
struct BenchArgs {
    experiment: Experiment,
    /// JSON configuration; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ring size (ring and worst-case).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    p: Option<f64>,
    /// Regularization values; 0 selects the exact solver.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mechanism: Option<Vec<Mechanism>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    md_iters: Option<usize>,
    #[arg(long, value_enum)]
    base_measure: Option<BaseChoice>,
    /// Disable lambda continuation in the entropic solver.
    #[arg(long)]
    no_continuation: bool,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseChoice {
    Kpm,
    Uniform,
    Optimized,
}

impl From<BaseChoice> for BaseMeasureChoice {
    fn from(b: BaseChoice) -> Self {
        match b {
            BaseChoice::Kpm => BaseMeasureChoice::Kpm,
            BaseChoice::Uniform => BaseMeasureChoice::Uniform,
            BaseChoice::Optimized => BaseMeasureChoice::Optimized,
        }
    }
}

#[derive(Args)]
struct ProjectArgs {
    /// Cost matrix (CSV or JSON).
    #[arg(long)]
    cost: PathBuf,
    /// Input distribution.
    #[arg(long)]
    mu: PathBuf,
    /// Base measure; defaults to the KPM measure when `k = k_v`.
    #[arg(long)]
    m: Option<PathBuf>,
    #[arg(long)]
    eps: f64,
    /// Entropic regularization; 0 or absent selects the exact solver.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value = "wpm")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Warm-start the entropic solver through decreasing lambda.
    #[arg(long)]
    continuation: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Step size; defaults to the regret-optimal constant step.
    #[arg(long)]
    eta: Option<f64>,
    /// Random initial point instead of the uniform one.
    #[arg(long)]
    seed: Option<u64>,
    /// Use step `eta / sqrt(t)`.
    #[arg(long)]
    decaying: bool,
    /// Include the per-iteration objective.
    #[arg(long)]
    history: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SphereArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    eps: f64,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    mechanism: Mechanism,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Entropic regularization for `wpm`; 0 selects the exact solver.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Base measure for the projection mechanisms.
    #[arg(long, value_enum, default_value = "kpm")]
    base_measure: BaseChoice,
}

#[derive(Args)]
struct CostArgs {
    /// Ring with `k` points.
    #[arg(long, conflicts_with_all = ["grid", "points"])]
    ring: Option<usize>,
    /// Grid `ROWSxCOLS`.
    #[arg(long, conflicts_with = "points")]
    grid: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    cell_size: f64,
    /// Point cloud file (CSV or JSON).
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: MetricArg,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Output file, `.json` for JSON; CSV to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

#[derive(Args)]
struct SampleArgs {
    /// Output distribution to sample from.
    #[arg(long)]
    nu: PathBuf,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match args.experiment {
            Experiment::Grid => ExperimentConfig::grid(),
            Experiment::Ring | Experiment::WorstCase => ExperimentConfig::default(),
        },
    };
    if let Some(k) = args.k {
        if matches!(args.experiment, Experiment::Grid) {
            bail!("--k applies to ring spaces; set the grid in --config");
        }
        cfg.space = GroundSpace::Ring { k };
    }
    if let Some(v) = args.eps {
        cfg.epsilons = v;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(v) = args.lambda {
        cfg.lambdas = v;
    }
    if let Some(v) = args.mechanism {
        cfg.mechanisms = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.draws {
        cfg.draws = d;
    }
    if let Some(n) = args.max_iters {
        cfg.max_iters = n;
    }
    if let Some(n) = args.md_iters {
        cfg.md_iters = n;
    }
    if let Some(b) = args.base_measure {
        cfg.base_measure = b.into();
    }
    if args.no_continuation {
        cfg.continuation = false;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    let out_dir = cfg.output_dir.clone();

    match args.experiment {
        Experiment::Ring | Experiment::Grid => {
            if matches!(args.experiment, Experiment::Ring) && !matches!(cfg.space, GroundSpace::Ring { .. }) {
                bail!("`bench ring` needs a ring space");
            }
            let result = run_synthetic(&cfg)?;
            match out_dir {
                Some(dir) => {
                    result.write_to(&dir)?;
                    eprintln!("wrote {} rows to {}", result.rows.len(), dir.display());
                }
                None => std::io::stdout().write_all(result.results_json()?.as_bytes())?,
            }
        }
        Experiment::WorstCase => {
            let table = run_worst_case_table(&cfg)?;
            match out_dir {
                Some(dir) => {
                    table.write_to(&dir)?;
                    eprintln!("wrote {} rows to {}", table.rows.len(), dir.join("worst_case.json").display());
                }
                None => std::io::stdout().write_all(table.to_json()?.as_bytes())?,
            }
        }
    }
    Ok(())
}

fn distribution(path: &Path) -> Result<Distribution> {
    let v = read_vector(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Distribution::new(v).with_context(|| format!("{} is not a distribution", path.display()))?)
}

fn project(args: ProjectArgs) -> Result<()> {
    let cost = read_cost_matrix(&args.cost).with_context(|| format!("reading {}", args.cost.display()))?;
    let mu = distribution(&args.mu)?;
    let value = match args.mechanism {
        Mechanism::Wpm | Mechanism::WpmExact => {
            let m = match &args.m {
                Some(path) => read_vector(path).with_context(|| format!("reading {}", path.display()))?,
                None if cost.rows() == cost.cols() => kpm_base_measure(cost.cols(), args.eps),
                None => bail!("--m is required when k != k_v"),
            };
            let q = LdpPolytope::new(m, args.eps)?;
            if args.mechanism == Mechanism::WpmExact || args.lambda == 0.0 {
                let proj = project_exact(&cost, &mu, &q)?;
                json!({
                    "mechanism": "wpm-exact",
                    "epsilon": args.eps,
                    "nu": proj.nu.probs(),
                    "wasserstein_p": proj.wasserstein(cost.p()),
                })
            } else {
                let options = EntropicOptions {
                    stop: StoppingRule {
                        tol: args.tol,
                        max_iters: args.max_iters,
                    },
                    mode: SolveMode::Auto,
                    continuation: args.continuation.then(Continuation::default),
                    ..Default::default()
                };
                let proj = project_entropic_with(&cost, &mu, &q, args.lambda, &options)?;
                json!({
                    "mechanism": "wpm",
                    "epsilon": args.eps,
                    "lambda": args.lambda,
                    "nu": proj.nu.probs(),
                    "wasserstein_p": wasserstein(&cost, &mu, &proj.nu)?,
                    "report": proj.report,
                })
            }
        }
        Mechanism::Kpm => {
            if cost.rows() != cost.cols() {
                bail!("kpm needs k = k_v");
            }
            let nu = kpm_transform(&KpmParams::new(cost.rows(), args.eps)?, &mu)?;
            json!({
                "mechanism": "kpm",
                "epsilon": args.eps,
                "nu": nu.probs(),
                "wasserstein_p": wasserstein(&cost, &mu, &nu)?,
            })
        }
        Mechanism::Expmech => {
            // utility uses the unpowered distance
            let d = CostMatrix::from_vec(
                cost.rows(),
                cost.cols(),
                1.0,
                cost.as_slice().iter().map(|c| c.powf(1.0 / cost.p())).collect(),
            )?;
            let nu = exp_mechanism(&ExpMechParams::with_default_sensitivity(d, args.eps)?, &mu)?;
            json!({
                "mechanism": "expmech",
                "epsilon": args.eps,
                "nu": nu.probs(),
                "wasserstein_p": wasserstein(&cost, &mu, &nu)?,
            })
        }
    };
    emit(&value, args.out.as_deref())
}

fn optimize_m(args: OptimizeArgs) -> Result<()> {
    let cost = read_cost_matrix(&args.cost).with_context(|| format!("reading {}", args.cost.display()))?;
    let problem = BaseMeasureProblem::new(cost, args.eps)?;
    let options = MirrorDescentOptions {
        eta: args.eta,
        decaying: args.decaying,
        seed: args.seed,
    };
    let result = optimize_base_measure(&problem, args.iters, &options)?;
    let WorstCase { f, argmax, .. } = problem.worst_case_f(&result.m_bar)?;
    let mut value = json!({
        "m": result.m_bar,
        "epsilon": args.eps,
        "worst_case_f": f,
        "worst_input": argmax,
        "regret_bound": result.regret_bound,
        "eta": result.eta,
        "iterations": result.iterations,
    });
    if args.history {
        value["history"] = json!(result.history);
    }
    emit(&value, args.out.as_deref())
}

fn audit(args: AuditArgs) -> Result<()> {
    let (k, eps) = (args.k, args.eps);
    let space = GroundSpace::ring(k)?;
    let report = match args.mechanism {
        Mechanism::Wpm | Mechanism::WpmExact => {
            let cost = full_cost_matrix(&space, args.p)?;
            let m = match args.base_measure {
                BaseChoice::Kpm => kpm_base_measure(k, eps),
                BaseChoice::Uniform => vec![1.0 / k as f64; k],
                BaseChoice::Optimized => {
                    let problem = BaseMeasureProblem::new(cost.clone(), eps)?;
                    optimize_base_measure(&problem, 1000, &MirrorDescentOptions::default())?.m_bar
                }
            };
            let q = LdpPolytope::new(m, eps)?;
            if args.mechanism == Mechanism::WpmExact || args.lambda == 0.0 {
                audit_ldp(|mu| Ok(project_exact(&cost, mu, &q)?.nu), k, eps, &[])?
            } else {
                let options = EntropicOptions {
                    continuation: Some(Continuation::default()),
                    ..Default::default()
                };
                audit_ldp(|mu| Ok(project_entropic_with(&cost, mu, &q, args.lambda, &options)?.nu), k, eps, &[])?
            }
        }
        Mechanism::Kpm => {
            let params = KpmParams::new(k, eps)?;
            audit_ldp(|mu| kpm_transform(&params, mu), k, eps, &[])?
        }
        Mechanism::Expmech => {
            let params = ExpMechParams::with_default_sensitivity(full_cost_matrix(&space, 1.0)?, eps)?;
            audit_ldp(|mu| exp_mechanism(&params, mu), k, eps, &[])?
        }
    };
    let mut value = serde_json::to_value(&report)?;
    value["mechanism"] = json!(args.mechanism);
    emit(&value, None)
}

fn cost(args: CostArgs) -> Result<()> {
    let space = if let Some(k) = args.ring {
        GroundSpace::ring(k)?
    } else if let Some(shape) = &args.grid {
        let (r, c) = shape
            .split_once(['x', 'X'])
            .context("--grid expects ROWSxCOLS")?;
        GroundSpace::grid(r.trim().parse()?, c.trim().parse()?, args.cell_size)?
    } else if let Some(path) = &args.points {
        let metric = match args.metric {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        };
        GroundSpace::points(read_points(path)?, metric)?
    } else {
        bail!("one of --ring, --grid or --points is required");
    };
    let c = full_cost_matrix(&space, args.p)?;
    match &args.out {
        Some(path) => write_cost_matrix(path, &c)?,
        None => wproj_core::io::cost_matrix_to_csv(&c, std::io::stdout().lock())?,
    }
    Ok(())
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let nu = distribution(&args.nu)?;
    emit(&json!({ "seed": args.seed, "samples": sample(&nu, args.seed, args.n)? }), None)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Bench(a) => bench(a),
        Command::Project(a) => project(a),
        Command::OptimizeM(a) => optimize_m(a),
        Command::SphereM(a) => emit(&serde_json::to_value(sphere_base_measure(a.d, a.p, a.eps)?)?, None),
        Command::Audit(a) => audit(a),
        Command::Cost(a) => cost(a),
        Command::Sample(a) => sample_cmd(a),
    }
}
