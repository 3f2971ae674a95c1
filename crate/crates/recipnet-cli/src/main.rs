//! Command-line front end: sample networks, fit them, run the
//! reproduction studies, and tabulate rate expressions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use recipnet::discretize::{discretized_fit, project_to_grid};
use recipnet::estimator::{coordinate_descent_fit, FitConfig, MuMode, OuterCriterion};
use recipnet::metrics::{rate_predictor, RateKind};
use recipnet::model::{Network, NodeParams};
use recipnet::sampler::{gen_params, sample_network, ParamKind, ParamSpec, Seed};

use recipnet_cli::experiment::{
    cell_param_seed, load_config, replication_net_seed, run_experiment, ExperimentConfig,
    GridSpec, Study, TruthSidecar,
};
use recipnet_cli::{HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "recipnet",
    version,
    about = "Directed exponential network model with reciprocity: sampling, MLE, and simulation studies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a network edge list drawn from a parameter specification
    Sample(SampleArgs),
    /// Fit a network file and emit the result as JSON
    Fit(FitArgs),
    /// Run a reproduction study (normality | consistency | overfit | custom)
    Experiment(ExperimentArgs),
    /// Evaluate a theoretical error-rate expression
    Rates(RatesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Group1,
    Group2,
    Group3,
    SparseUniform,
}

impl KindArg {
    fn to_kind(self) -> ParamKind {
        match self {
            KindArg::Group1 => ParamKind::Group1,
            KindArg::Group2 => ParamKind::Group2,
            KindArg::Group3 => ParamKind::Group3,
            KindArg::SparseUniform => ParamKind::SparseUniform,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Parameter generation law
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Number of nodes
    #[arg(long)]
    n: usize,
    /// Master seed; the network matches replication 0 of an experiment
    /// with the same seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Declared parameter bound (metadata for grids)
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    /// Override the kind-derived sparsity level
    #[arg(long)]
    mu: Option<f64>,
    /// Write the edge list here (plus `<out>.truth.json`); stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Newton,
    Gradient,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    ParamChange,
    GradientNorm,
}

#[derive(Args)]
struct FitArgs {
    /// Edge-list file (`n <n>` header, 1-based `i j` lines)
    network: PathBuf,
    /// Truth sidecar JSON; adds an error report to the output
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "newton")]
    subsolver: SolverArg,
    /// Outer stopping residual; defaults to the solver's native one
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Outer tolerance; defaults to 1e-3 (newton) or 0.05 (gradient)
    #[arg(long)]
    outer_tol: Option<f64>,
    /// Sub-iteration tolerance; defaults to 1e-4 (newton) or 1e-3 (gradient)
    #[arg(long)]
    sub_tol: Option<f64>,
    /// Gradient step size; defaults to 1/(mu n)
    #[arg(long)]
    step: Option<f64>,
    /// Known sparsity level; mutually exclusive with --mu-plugin
    #[arg(long, conflicts_with = "mu_plugin")]
    mu: Option<f64>,
    /// Use the empirical edge density as the sparsity level
    #[arg(long)]
    mu_plugin: bool,
    /// Pin alpha_1 = 0
    #[arg(long)]
    fix_alpha1: bool,
    /// Initialize at the sidecar truth instead of zeros (needs --truth)
    #[arg(long, requires = "truth")]
    init_truth: bool,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
    #[arg(long, default_value_t = 50)]
    max_sub: usize,
    /// Fit over a discretized per-node parameter space
    #[arg(long)]
    discretize: bool,
    /// Grid bound B
    #[arg(long, default_value_t = 1.0)]
    grid_bound: f64,
    /// Grid spacing h; omit to use the rate-optimal spacing
    #[arg(long)]
    grid_h: Option<f64>,
    /// Constant in the rate-optimal spacing
    #[arg(long, default_value_t = 1.0)]
    grid_c: f64,
    /// Write the JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// normality | consistency | overfit | custom
    study: String,
    /// JSON config overriding the study defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replication parallelism; defaults to the available cores
    #[arg(long)]
    jobs: Option<usize>,
    /// Fit over a discretized parameter space (rate-optimal spacing unless
    /// the config names a grid)
    #[arg(long)]
    discretize: bool,
}

#[derive(Args)]
struct RatesArgs {
    /// weak_l2 | uniform_cont | uniform_disc | expnet_uniform
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    mu: f64,
    /// Multiplicative constant
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = e.print();
                std::process::exit(1);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Sample(args) => sample_cmd(args),
        Cmd::Fit(args) => fit_cmd(args),
        Cmd::Experiment(args) => experiment_cmd(args),
        Cmd::Rates(args) => rates_cmd(args),
    }
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let mut spec = ParamSpec::new(args.kind.to_kind(), args.n);
    spec.bound = args.bound;
    spec.mu = args.mu;
    let master = Seed(args.seed);
    let (params, globals) = gen_params(&spec, cell_param_seed(master, &spec.kind, args.n))?;
    let network = sample_network(&params, &globals, replication_net_seed(master, args.n, 0))?;
    let text = network.to_edge_list();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| HarnessError::io(path, e))?;
            let sidecar = TruthSidecar::new(&params, &globals);
            let sidecar_path = sidecar_path_for(path);
            let json = serde_json::to_string_pretty(&sidecar)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            std::fs::write(&sidecar_path, json)
                .map_err(|e| HarnessError::io(&sidecar_path, e))?;
            eprintln!(
                "wrote {} ({} directed edges) and {}",
                path.display(),
                network.directed_edge_count(),
                sidecar_path.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar_path_for(path: &std::path::Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".truth.json");
    PathBuf::from(os)
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.network)
        .map_err(|e| HarnessError::io(&args.network, e))?;
    let network = Network::parse_edge_list(&text, &args.network.display().to_string())
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let truth: Option<TruthSidecar> = match &args.truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| HarnessError::json(path, &e))?)
        }
        None => None,
    };

    let mut cfg = match args.subsolver {
        SolverArg::Newton => FitConfig::newton_defaults(),
        SolverArg::Gradient => FitConfig::gradient_defaults(),
    };
    if let Some(c) = args.criterion {
        cfg.outer_criterion = match c {
            CriterionArg::ParamChange => OuterCriterion::ParamChange,
            CriterionArg::GradientNorm => OuterCriterion::GradientNorm,
        };
    }
    if let Some(t) = args.outer_tol {
        cfg.outer_tol = t;
    }
    if let Some(t) = args.sub_tol {
        cfg.sub_tol = t;
    }
    cfg.step_size = args.step;
    cfg.max_outer_iters = args.max_outer;
    cfg.max_sub_iters = args.max_sub;
    cfg.fix_alpha1 = args.fix_alpha1;
    cfg.mu_mode = if args.mu_plugin {
        MuMode::Plugin
    } else if let Some(mu) = args.mu {
        MuMode::Known(mu)
    } else if let Some(t) = &truth {
        MuMode::Known(t.mu)
    } else {
        MuMode::Known(1.0)
    };

    let n = network.n();
    let (init, init_rho) = if args.init_truth {
        let t = truth.as_ref().expect("clap enforces --truth");
        (t.params()?, t.rho)
    } else {
        (NodeParams::zeros(n), 0.0)
    };

    let result_json = if args.discretize {
        let mu = match cfg.mu_mode {
            MuMode::Known(mu) => mu,
            MuMode::Plugin => {
                let mb = recipnet::estimator::estimate_mu_bar(&network);
                if mb.empty_network {
                    return Err(HarnessError::Config(
                        "plug-in sparsity level needs a nonempty network".to_string(),
                    ));
                }
                mb.value
            }
        };
        let spec = match args.grid_h {
            Some(h) => GridSpec::fixed(args.grid_bound, h),
            None => GridSpec::optimal(args.grid_bound, args.grid_c),
        };
        let grid = spec.build(n, mu)?;
        let fit = discretized_fit(&network, &project_to_grid(&init, &grid), init_rho, &grid, &cfg)?;
        match &truth {
            Some(t) => {
                let report = recipnet::metrics::ErrorReport::compute(
                    &fit.params,
                    fit.rho,
                    &t.params()?,
                    t.rho,
                );
                serde_json::json!({ "fit": fit, "error_report": report })
            }
            None => serde_json::to_value(&fit).map_err(|e| HarnessError::Config(e.to_string()))?,
        }
    } else {
        let fit = coordinate_descent_fit(&network, &init, init_rho, &cfg)?;
        match &truth {
            Some(t) => {
                let report = recipnet::metrics::ErrorReport::compute(
                    &fit.params,
                    fit.rho,
                    &t.params()?,
                    t.rho,
                );
                serde_json::json!({ "fit": fit, "error_report": report })
            }
            None => serde_json::to_value(&fit).map_err(|e| HarnessError::Config(e.to_string()))?,
        }
    };

    let pretty = serde_json::to_string_pretty(&result_json)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, pretty).map_err(|e| HarnessError::io(path, e))?,
        None => println!("{pretty}"),
    }
    Ok(())
}

fn experiment_cmd(args: ExperimentArgs) -> Result<()> {
    let study = Study::parse(&args.study).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown study `{}`; expected normality, consistency, overfit, or custom",
            args.study
        ))
    })?;
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => {
            if study == Study::Custom {
                return Err(HarnessError::Config(
                    "custom study needs --config".to_string(),
                ));
            }
            ExperimentConfig::defaults(
                study,
                0,
                PathBuf::from(format!("out/{}", study.label())),
            )
        }
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if args.discretize && config.grid.is_none() {
        let bound = config
            .param_specs
            .iter()
            .map(|s| s.bound)
            .fold(1.0f64, f64::max);
        config.grid = Some(GridSpec::optimal(bound, 1.0));
    }
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()));
    let out = run_experiment(&config, jobs)?;
    eprintln!(
        "study {}: {} rows over {} cells -> {}",
        config.study.label(),
        out.rows.len(),
        out.summary.cells.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn rates_cmd(args: RatesArgs) -> Result<()> {
    let kind = RateKind::parse(&args.kind).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown rate kind `{}`; expected weak_l2, uniform_cont, uniform_disc, or expnet_uniform",
            args.kind
        ))
    })?;
    if !(args.mu > 0.0 && args.mu <= 1.0) {
        return Err(HarnessError::Config(format!(
            "mu must lie in (0, 1], got {}",
            args.mu
        )));
    }
    if args.n < 2 {
        return Err(HarnessError::Config("n must be at least 2".to_string()));
    }
    let value = args.c * rate_predictor(kind, args.n, args.mu);
    println!("{value}");
    eprintln!(
        "{} at n = {}, mu = {} (shape only, constant c = {})",
        kind.label(),
        args.n,
        args.mu,
        args.c
    );
    Ok(())
}
