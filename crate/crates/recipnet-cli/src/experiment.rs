//! Experiment configs, replication runner, and CSV emission.
//!
//! Seeding discipline: the parameter draw for a (group, n) cell derives
//! from (master_seed, group, n) and is shared by every replication; the
//! network for replication r derives from (master_seed, n, r); the
//! perturbed init for replication r derives from (master_seed, n, r) on
//! its own stream and is shared across the stopping-criterion values of
//! the overfitting study. Replications run in parallel up to the job
//! count; rows are keyed and sorted by replication index, so output bytes
//! do not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use recipnet::discretize::{discretized_fit, grid_with_optimal_spacing, project_to_grid, Grid};
use recipnet::estimator::{
    coordinate_descent_fit, fit_statistics, FitConfig, FitStatistics, MuMode,
};
use recipnet::metrics::ErrorReport;
use recipnet::model::{GlobalParams, NodeParams};
use recipnet::sampler::{gen_params, perturb_params, sample_network, ParamKind, ParamSpec, Seed};

use crate::summary::{summarize, Summary};
use crate::{HarnessError, Result};

const STREAM_PARAMS: u64 = 0x70;
const STREAM_NET: u64 = 0x6e;
const STREAM_INIT: u64 = 0x69;

/// Seed for a (group, n) cell's parameter draw, shared by all
/// replications.
pub fn cell_param_seed(master: Seed, kind: &ParamKind, n: usize) -> Seed {
    master.derive(&[STREAM_PARAMS, kind.stream_id(), n as u64])
}

/// Seed for replication r's network; depends only on (master, n, r).
pub fn replication_net_seed(master: Seed, n: usize, rep: usize) -> Seed {
    master.derive(&[STREAM_NET, n as u64, rep as u64])
}

/// Seed for replication r's init perturbation; shared across the
/// stopping-criterion values within the replication.
pub fn replication_init_seed(master: Seed, n: usize, rep: usize) -> Seed {
    master.derive(&[STREAM_INIT, n as u64, rep as u64])
}

/// Which reproduction study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Q-Q behaviour of the seven replication statistics (dense model,
    /// Newton solver, groups 1-3).
    Normality,
    /// Error bounds shrinking with n in the sparse regime (gradient
    /// solver).
    Consistency,
    /// Error bounds across stopping-criterion values from identical
    /// perturbed inits.
    Overfit,
    Custom,
}

impl Study {
    pub fn label(&self) -> &'static str {
        match self {
            Study::Normality => "normality",
            Study::Consistency => "consistency",
            Study::Overfit => "overfit",
            Study::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Study> {
        match s {
            "normality" => Some(Study::Normality),
            "consistency" => Some(Study::Consistency),
            "overfit" => Some(Study::Overfit),
            "custom" => Some(Study::Custom),
            _ => None,
        }
    }
}

/// Grid request inside a config: either an explicit spacing or the
/// rate-optimal one with constant c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "B")]
    pub bound: f64,
    pub h: HSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HSpec {
    Fixed(f64),
    /// The literal string "optimal".
    Named(String),
}

impl GridSpec {
    pub fn optimal(bound: f64, c: f64) -> Self {
        GridSpec {
            bound,
            h: HSpec::Named("optimal".to_string()),
            c: Some(c),
        }
    }

    pub fn fixed(bound: f64, h: f64) -> Self {
        GridSpec {
            bound,
            h: HSpec::Fixed(h),
            c: None,
        }
    }

    pub fn build(&self, n: usize, mu: f64) -> Result<Grid> {
        match &self.h {
            HSpec::Fixed(h) => Ok(Grid::uniform(self.bound, *h)?),
            HSpec::Named(name) if name == "optimal" => Ok(grid_with_optimal_spacing(
                self.bound,
                n,
                mu,
                self.c.unwrap_or(1.0),
            )?),
            HSpec::Named(other) => Err(HarnessError::Config(format!(
                "unknown grid spacing `{other}`; use a number or \"optimal\""
            ))),
        }
    }
}

/// Full experiment description. `param_specs` carry the generation law per
/// group; their `n` field is replaced by each entry of `n_list` when the
/// cell runs. `e_list` holds the outer stopping tolerances to compare
/// (one cell per value); when empty the fit config's own tolerance is
/// used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: Study,
    pub param_specs: Vec<ParamSpec>,
    pub n_list: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub fit_config: FitConfig,
    #[serde(default)]
    pub e_list: Vec<f64>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Init = truth + Uniform[-m, m] noise when positive; the overfitting
    /// study defaults to 0.5.
    #[serde(default)]
    pub init_perturbation: f64,
}

impl ExperimentConfig {
    /// Paper defaults for each study.
    pub fn defaults(study: Study, master_seed: u64, output_dir: PathBuf) -> ExperimentConfig {
        match study {
            Study::Normality => ExperimentConfig {
                study,
                param_specs: vec![
                    ParamSpec::new(ParamKind::Group1, 100),
                    ParamSpec::new(ParamKind::Group2, 100),
                    ParamSpec::new(ParamKind::Group3, 100),
                ],
                n_list: vec![100, 200, 400],
                replications: 200,
                fit_config: FitConfig::newton_defaults(),
                e_list: vec![],
                master_seed,
                output_dir,
                grid: None,
                init_perturbation: 0.0,
            },
            Study::Consistency => ExperimentConfig {
                study,
                param_specs: vec![ParamSpec::new(ParamKind::SparseUniform, 400)],
                n_list: vec![400, 1400, 5000],
                replications: 30,
                fit_config: FitConfig::gradient_defaults(),
                e_list: vec![],
                master_seed,
                output_dir,
                grid: None,
                init_perturbation: 0.0,
            },
            Study::Overfit => ExperimentConfig {
                study,
                param_specs: vec![ParamSpec::new(ParamKind::SparseUniform, 1000)],
                n_list: vec![1000, 2000],
                replications: 30,
                fit_config: FitConfig::gradient_defaults(),
                e_list: vec![0.08, 0.02],
                master_seed,
                output_dir,
                grid: None,
                init_perturbation: 0.5,
            },
            Study::Custom => ExperimentConfig {
                study,
                param_specs: vec![ParamSpec::new(ParamKind::Group1, 50)],
                n_list: vec![50],
                replications: 10,
                fit_config: FitConfig::newton_defaults(),
                e_list: vec![],
                master_seed,
                output_dir,
                grid: None,
                init_perturbation: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.param_specs.is_empty() {
            return Err(HarnessError::Config("param_specs is empty".to_string()));
        }
        if self.n_list.is_empty() {
            return Err(HarnessError::Config("n_list is empty".to_string()));
        }
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be >= 1".to_string()));
        }
        self.fit_config.validate()?;
        for &e in &self.e_list {
            if !(e > 0.0) {
                return Err(HarnessError::Config(format!("e value {e} must be positive")));
            }
        }
        Ok(())
    }

    fn tolerances(&self) -> Vec<f64> {
        if self.e_list.is_empty() {
            vec![self.fit_config.outer_tol]
        } else {
            self.e_list.clone()
        }
    }
}

/// One replication's CSV row. Fit failures keep the row (converged =
/// false, metric cells empty) so the batch is complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub study: Study,
    pub group: String,
    pub n: usize,
    pub e: f64,
    pub rep: usize,
    pub seed: u64,
    pub converged: bool,
    pub outer_iters: usize,
    pub rho_hat: Option<f64>,
    pub report: Option<ErrorReport>,
    pub stats: Option<FitStatistics>,
}

pub const CSV_HEADER: &str = "study,group,n,e,rep,seed,converged,outer_iters,rho_hat,rho_err_sq,delta_alpha,delta_beta,mse_bound,uniform_bound,adj_mse,adj_uniform,stat_a2,stat_amid,stat_an,stat_b1,stat_bmid,stat_bn,stat_rho";

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, ",{v}");
    } else {
        out.push(',');
    }
}

impl Row {
    pub fn to_csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{}",
            self.study.label(),
            self.group,
            self.n,
            self.e,
            self.rep,
            self.seed,
            self.converged,
            self.outer_iters
        );
        push_opt(&mut s, self.rho_hat);
        let r = self.report;
        push_opt(&mut s, r.map(|r| r.rho_error_sq));
        push_opt(&mut s, r.map(|r| r.delta_alpha));
        push_opt(&mut s, r.map(|r| r.delta_beta));
        push_opt(&mut s, r.map(|r| r.mse_bound));
        push_opt(&mut s, r.map(|r| r.uniform_bound));
        push_opt(&mut s, r.map(|r| r.shift_adjusted_mse));
        push_opt(&mut s, r.map(|r| r.shift_adjusted_uniform));
        match self.stats {
            Some(st) => {
                for v in st.as_array() {
                    let _ = write!(s, ",{v}");
                }
            }
            None => s.push_str(",,,,,,,"),
        }
        s
    }

    /// Parses a line written by `to_csv_line`. Used by the summary
    /// recomputation path and tests.
    pub fn parse_csv_line(line: &str) -> Result<Row> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 23 {
            return Err(HarnessError::Config(format!(
                "expected 23 CSV fields, got {}",
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| HarnessError::Config(format!("bad number `{s}`")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let report = if f[9].is_empty() {
            None
        } else {
            Some(ErrorReport {
                rho_error_sq: num(f[9])?,
                delta_alpha: num(f[10])?,
                delta_beta: num(f[11])?,
                mse_bound: num(f[12])?,
                uniform_bound: num(f[13])?,
                shift_adjusted_mse: num(f[14])?,
                shift_adjusted_uniform: num(f[15])?,
            })
        };
        let stats = if f[16].is_empty() {
            None
        } else {
            Some(FitStatistics {
                stat_a2: num(f[16])?,
                stat_amid: num(f[17])?,
                stat_an: num(f[18])?,
                stat_b1: num(f[19])?,
                stat_bmid: num(f[20])?,
                stat_bn: num(f[21])?,
                stat_rho: num(f[22])?,
            })
        };
        Ok(Row {
            study: Study::parse(f[0])
                .ok_or_else(|| HarnessError::Config(format!("bad study `{}`", f[0])))?,
            group: f[1].to_string(),
            n: f[2]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad n `{}`", f[2])))?,
            e: num(f[3])?,
            rep: f[4]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad rep `{}`", f[4])))?,
            seed: f[5]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad seed `{}`", f[5])))?,
            converged: f[6] == "true",
            outer_iters: f[7]
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad outer_iters `{}`", f[7])))?,
            rho_hat: opt(f[8])?,
            report,
            stats,
        })
    }
}

/// In-memory output of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// (group, n) -> per-statistic Q-Q pairs (theoretical, empirical),
    /// present for studies that emit statistics.
    pub qq_pairs: Vec<QqBlock>,
}

#[derive(Debug, Clone)]
pub struct QqBlock {
    pub group: String,
    pub n: usize,
    /// statistic label -> sorted (theoretical, empirical) pairs
    pub pairs: BTreeMap<String, Vec<(f64, f64)>>,
}

struct Cell<'a> {
    config: &'a ExperimentConfig,
    spec: ParamSpec,
    truth: NodeParams,
    globals: GlobalParams,
    grid: Option<Grid>,
    n: usize,
}

fn run_replication(cell: &Cell<'_>, rep: usize) -> Vec<Row> {
    let cfg = cell.config;
    let master = Seed(cfg.master_seed);
    let n = cell.n;
    let net_seed = replication_net_seed(master, n, rep);
    let network = match sample_network(&cell.truth, &cell.globals, net_seed) {
        Ok(net) => net,
        Err(_) => {
            // keep the batch going; the row records the failure
            return cfg
                .tolerances()
                .iter()
                .map(|&e| Row {
                    study: cfg.study,
                    group: cell.spec.kind.label().to_string(),
                    n,
                    e,
                    rep,
                    seed: net_seed.0,
                    converged: false,
                    outer_iters: 0,
                    rho_hat: None,
                    report: None,
                    stats: None,
                })
                .collect();
        }
    };

    // identical init across the e-values of one replication
    let init = if cfg.init_perturbation > 0.0 {
        perturb_params(
            &cell.truth,
            cfg.init_perturbation,
            replication_init_seed(master, n, rep),
        )
    } else {
        cell.truth.clone()
    };

    cfg.tolerances()
        .iter()
        .map(|&e| {
            let mut fit_cfg = cfg.fit_config;
            fit_cfg.outer_tol = e;
            if matches!(fit_cfg.mu_mode, MuMode::Known(_)) {
                fit_cfg.mu_mode = MuMode::Known(cell.globals.mu);
            }
            let fitted = match &cell.grid {
                Some(grid) => {
                    let on_grid = project_to_grid(&init, grid);
                    discretized_fit(&network, &on_grid, cell.globals.rho, grid, &fit_cfg).map(
                        |d| (d.params, d.rho, d.outer_iters, d.converged),
                    )
                }
                None => coordinate_descent_fit(&network, &init, cell.globals.rho, &fit_cfg)
                    .map(|f| (f.params, f.rho, f.outer_iters, f.converged)),
            };
            match fitted {
                Ok((params, rho, outer_iters, converged)) => {
                    let report =
                        ErrorReport::compute(&params, rho, &cell.truth, cell.globals.rho);
                    let stats = match cfg.study {
                        Study::Normality | Study::Custom => {
                            Some(fit_statistics(&params, rho, &cell.truth, cell.globals.rho))
                        }
                        _ => None,
                    };
                    Row {
                        study: cfg.study,
                        group: cell.spec.kind.label().to_string(),
                        n,
                        e,
                        rep,
                        seed: net_seed.0,
                        converged,
                        outer_iters,
                        rho_hat: Some(rho),
                        report: Some(report),
                        stats,
                    }
                }
                Err(_) => Row {
                    study: cfg.study,
                    group: cell.spec.kind.label().to_string(),
                    n,
                    e,
                    rep,
                    seed: net_seed.0,
                    converged: false,
                    outer_iters: 0,
                    rho_hat: None,
                    report: None,
                    stats: None,
                },
            }
        })
        .collect()
}

/// Runs every (group, n) cell of the config with `jobs`-way replication
/// parallelism. Row order, and therefore output bytes, are independent of
/// the job count.
pub fn run_experiment_in_memory(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let master = Seed(config.master_seed);

    let mut rows: Vec<Row> = Vec::new();
    let mut qq_pairs = Vec::new();
    for spec_template in &config.param_specs {
        for &n in &config.n_list {
            let mut spec = spec_template.clone();
            spec.n = n;
            if let ParamKind::Explicit { alpha, .. } = &spec.kind {
                if alpha.len() != n {
                    return Err(HarnessError::Config(format!(
                        "explicit parameters have length {}, n_list asks for {n}",
                        alpha.len()
                    )));
                }
            }
            let param_seed = cell_param_seed(master, &spec.kind, n);
            let (truth, globals) = gen_params(&spec, param_seed)?;
            let grid = match &config.grid {
                Some(gs) => Some(gs.build(n, globals.mu)?),
                None => None,
            };
            let cell = Cell {
                config,
                spec: spec.clone(),
                truth,
                globals,
                grid,
                n,
            };
            let mut cell_rows: Vec<Vec<Row>> = pool.install(|| {
                (0..config.replications)
                    .into_par_iter()
                    .map(|rep| run_replication(&cell, rep))
                    .collect()
            });
            // rows per replication come back index-ordered; flatten by
            // tolerance first so each cell's rows are contiguous
            let tols = config.tolerances();
            for (ti, _e) in tols.iter().enumerate() {
                for rep_rows in cell_rows.iter() {
                    rows.push(rep_rows[ti].clone());
                }
            }
            if matches!(config.study, Study::Normality | Study::Custom) {
                qq_pairs.push(qq_block(&cell_rows, &spec, n));
            }
            cell_rows.clear();
        }
    }
    let summary = summarize(&rows);
    Ok(ExperimentOutput {
        rows,
        summary,
        qq_pairs,
    })
}

fn qq_block(cell_rows: &[Vec<Row>], spec: &ParamSpec, n: usize) -> QqBlock {
    let mut pairs = BTreeMap::new();
    for (k, label) in FitStatistics::LABELS.iter().enumerate() {
        let values: Vec<f64> = cell_rows
            .iter()
            .flat_map(|rows| rows.iter())
            .filter_map(|r| r.stats.map(|s| s.as_array()[k]))
            .collect();
        pairs.insert(label.to_string(), crate::summary::qq_points(&values));
    }
    QqBlock {
        group: spec.kind.label().to_string(),
        n,
        pairs,
    }
}

/// Runs the experiment and writes results.csv, summary.json, Q-Q pair
/// files, and an echo of the resolved config under the output directory.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    let out = run_experiment_in_memory(config, jobs)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;

    let mut csv = String::with_capacity(out.rows.len() * 128);
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for row in &out.rows {
        csv.push_str(&row.to_csv_line());
        csv.push('\n');
    }
    write_file(&dir.join("results.csv"), &csv)?;

    let summary_json = serde_json::to_string_pretty(&out.summary)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    write_file(&dir.join("summary.json"), &summary_json)?;

    for block in &out.qq_pairs {
        let mut text = String::from("stat,idx,theoretical,empirical\n");
        for (label, pts) in &block.pairs {
            for (i, (t, e)) in pts.iter().enumerate() {
                let _ = writeln!(text, "{label},{i},{t},{e}");
            }
        }
        write_file(&dir.join(format!("qq_{}_{}.csv", block.group, block.n)), &text)?;
    }

    let config_json = serde_json::to_string_pretty(config)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    write_file(&dir.join("config_resolved.json"), &config_json)?;
    Ok(out)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| HarnessError::io(path, e))
}

/// Truth sidecar written next to sampled networks so later fits can score
/// themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub mu: f64,
}

impl TruthSidecar {
    pub fn new(params: &NodeParams, globals: &GlobalParams) -> Self {
        TruthSidecar {
            alpha: params.alpha.clone(),
            beta: params.beta.clone(),
            rho: globals.rho,
            mu: globals.mu,
        }
    }

    pub fn params(&self) -> Result<NodeParams> {
        Ok(NodeParams::new(self.alpha.clone(), self.beta.clone())?)
    }
}

/// Loads an experiment config, reporting line-numbered JSON errors.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::json(path, &e))
}

/// Reads network rows back from a results.csv produced by
/// `run_experiment`.
pub fn load_rows(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => {
            return Err(HarnessError::Config(format!(
                "{}: missing or unexpected CSV header",
                path.display()
            )))
        }
    }
    lines.map(Row::parse_csv_line).collect()
}
