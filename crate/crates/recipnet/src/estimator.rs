//! MLE by coordinate descent over nodes plus the reciprocity coefficient.
//!
//! Each outer round sweeps nodes 1..n and then rho. A node sub-problem
//! maximizes l_i in (alpha_i, beta_i) holding everything else fixed, by
//! Newton-Raphson (parameter-change sub-stop) or by gradient ascent with
//! backtracking halving (gradient sub-stop). The outer residual is either
//! the sup coordinate change of the round or the sup gradient component at
//! the end-of-round point; the loop repeats until the residual drops below
//! the outer tolerance or an iteration cap is hit. Accepted steps never
//! decrease the likelihood, so the total log-likelihood trace is
//! nondecreasing up to evaluation rounding.

use serde::{Deserialize, Serialize};

use crate::model::{
    self, all_gradients, node_eval, rho_eval, GlobalParams, Network, NodeParams,
};
use crate::{Error, Result};

/// Node sub-problem solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubSolver {
    Newton,
    Gradient,
}

/// Outer stopping residual family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterCriterion {
    /// Sup coordinate change over the round (Newton-style outer stop).
    ParamChange,
    /// Sup per-node gradient component and |dl/drho| at the end-of-round
    /// point (gradient-style outer stop).
    GradientNorm,
}

/// How the sparsity level enters the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// The level is known (1 in the dense studies, 10 n^(-2/3) in the
    /// sparse ones).
    Known(f64),
    /// Plug in the empirical edge density.
    Plugin,
}

/// Fit configuration. Defaults are the Newton/coordinate-descent settings
/// (parameter-change tolerances 1e-3 outer, 1e-4 sub); `gradient_defaults`
/// gives the gradient/coordinate-descent settings (gradient tolerances
/// 0.05 outer, 1e-3 sub).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub subsolver: SubSolver,
    pub outer_criterion: OuterCriterion,
    pub outer_tol: f64,
    pub sub_tol: f64,
    /// Gradient-ascent step; None picks 1 / (mu n). The rho step is this
    /// divided by n (the total likelihood has ~n times a node's curvature).
    pub step_size: Option<f64>,
    pub max_outer_iters: usize,
    pub max_sub_iters: usize,
    pub mu_mode: MuMode,
    /// Pin alpha_1 = 0 and skip it in updates.
    pub fix_alpha1: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self::newton_defaults()
    }
}

impl FitConfig {
    pub fn newton_defaults() -> Self {
        FitConfig {
            subsolver: SubSolver::Newton,
            outer_criterion: OuterCriterion::ParamChange,
            outer_tol: 1e-3,
            sub_tol: 1e-4,
            step_size: None,
            max_outer_iters: 500,
            max_sub_iters: 50,
            mu_mode: MuMode::Known(1.0),
            fix_alpha1: false,
        }
    }

    pub fn gradient_defaults() -> Self {
        FitConfig {
            subsolver: SubSolver::Gradient,
            outer_criterion: OuterCriterion::GradientNorm,
            outer_tol: 0.05,
            sub_tol: 1e-3,
            step_size: None,
            max_outer_iters: 500,
            max_sub_iters: 50,
            mu_mode: MuMode::Known(1.0),
            fix_alpha1: false,
        }
    }

    pub fn with_mu(mut self, mu_mode: MuMode) -> Self {
        self.mu_mode = mu_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.sub_tol > 0.0) {
            return Err(Error::InvalidParams(
                "tolerances must be positive".to_string(),
            ));
        }
        if self.max_outer_iters == 0 || self.max_sub_iters == 0 {
            return Err(Error::InvalidParams(
                "iteration caps must be at least 1".to_string(),
            ));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0) {
                return Err(Error::InvalidParams(
                    "step_size must be positive".to_string(),
                ));
            }
        }
        if let MuMode::Known(mu) = self.mu_mode {
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "known mu must lie in (0, 1], got {mu}"
                )));
            }
        }
        Ok(())
    }
}

/// Fitted parameters plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: NodeParams,
    pub rho: f64,
    pub mu_used: f64,
    pub outer_iters: usize,
    pub converged: bool,
    /// Outer residual e^(t) after each round.
    pub residual_trace: Vec<f64>,
    /// Total log-likelihood at init and after each round.
    pub loglik_trace: Vec<f64>,
    /// Sub-iteration cap hits across all node and rho updates.
    #[serde(skip)]
    pub sub_cap_hits: usize,
}

/// Empirical edge density: directed edge count / (n (n-1)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuBar {
    pub value: f64,
    /// Set when the network has no edges; the fit must reject the value.
    pub empty_network: bool,
}

pub fn estimate_mu_bar(network: &Network) -> MuBar {
    let n = network.n() as f64;
    let m = network.directed_edge_count();
    MuBar {
        value: m as f64 / (n * (n - 1.0)),
        empty_network: m == 0,
    }
}

/// Result of one node sub-update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubUpdate {
    pub alpha_i: f64,
    pub beta_i: f64,
    pub cap_hit: bool,
}

/// Result of one rho sub-update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoUpdate {
    pub rho: f64,
    pub cap_hit: bool,
}

pub(crate) fn default_step(mu: f64, n: usize) -> f64 {
    1.0 / (mu * n as f64)
}

pub(crate) fn ln_mu_of(mu: f64) -> f64 {
    if mu == 1.0 {
        0.0
    } else {
        mu.ln()
    }
}

/// Relative slack for accept/reject comparisons of likelihood values; the
/// O(n) summation noise scales with |l|.
#[inline]
fn slack(ll: f64) -> f64 {
    1e-12 * (1.0 + ll.abs())
}

/// Newton-Raphson on (alpha_i, beta_i): step -H^-1 g until the parameter
/// change drops below sub_tol. A flagged-singular Hessian or a
/// likelihood-decreasing Newton step falls back to a halved-step gradient
/// move for that sub-iteration.
#[allow(clippy::too_many_arguments)]
fn newton_update_core(
    net: &Network,
    i: usize,
    alpha: &[f64],
    beta: &[f64],
    rho: f64,
    mu: f64,
    ln_mu: f64,
    sub_tol: f64,
    step: f64,
    max_sub: usize,
    update_alpha: bool,
) -> SubUpdate {
    let (mut a, mut b) = (alpha[i], beta[i]);
    let (mut ll, mut g, mut h) = node_eval(net, i, alpha, beta, a, b, rho, mu, ln_mu);
    let mut cap_hit = true;
    for _ in 0..max_sub {
        let newton = if update_alpha {
            h.newton_step(g)
        } else if h.bb.abs() >= 1e-12 {
            Some((0.0, -g.1 / h.bb))
        } else {
            None
        };
        let mut accepted = None;
        if let Some((da, db)) = newton {
            let (na, nb) = (a + da, b + db);
            let cand = node_eval(net, i, alpha, beta, na, nb, rho, mu, ln_mu);
            if cand.0 >= ll - slack(ll) {
                accepted = Some((na, nb, cand));
            }
        }
        if accepted.is_none() {
            let ga = if update_alpha { g.0 } else { 0.0 };
            let mut t = step;
            for _ in 0..60 {
                let (na, nb) = (a + t * ga, b + t * g.1);
                let cand = node_eval(net, i, alpha, beta, na, nb, rho, mu, ln_mu);
                if cand.0 >= ll - slack(ll) {
                    accepted = Some((na, nb, cand));
                    break;
                }
                t *= 0.5;
            }
        }
        let Some((na, nb, cand)) = accepted else {
            // No improving move at line-search resolution: already at a
            // local maximum, so the parameter change is zero.
            cap_hit = false;
            break;
        };
        let e_is = (na - a).abs().max((nb - b).abs());
        (a, b) = (na, nb);
        (ll, g, h) = cand;
        if e_is < sub_tol {
            cap_hit = false;
            break;
        }
    }
    SubUpdate {
        alpha_i: a,
        beta_i: b,
        cap_hit,
    }
}

/// Gradient ascent on (alpha_i, beta_i) with backtracking halving until the
/// gradient sup-norm drops below sub_tol.
#[allow(clippy::too_many_arguments)]
fn gradient_update_core(
    net: &Network,
    i: usize,
    alpha: &[f64],
    beta: &[f64],
    rho: f64,
    mu: f64,
    ln_mu: f64,
    sub_tol: f64,
    step: f64,
    max_sub: usize,
    update_alpha: bool,
) -> SubUpdate {
    let (mut a, mut b) = (alpha[i], beta[i]);
    let (mut ll, mut g, _) = node_eval(net, i, alpha, beta, a, b, rho, mu, ln_mu);
    let mut cap_hit = true;
    // The trial step doubles after each accepted move and halves inside
    // the line search, so it tracks the local curvature instead of
    // crawling at the configured base step.
    let mut trial = step;
    for _ in 0..max_sub {
        let ga = if update_alpha { g.0 } else { 0.0 };
        let e_is = ga.abs().max(g.1.abs());
        if e_is < sub_tol {
            cap_hit = false;
            break;
        }
        let mut t = trial;
        let mut moved = None;
        for _ in 0..60 {
            let (na, nb) = (a + t * ga, b + t * g.1);
            let cand = node_eval(net, i, alpha, beta, na, nb, rho, mu, ln_mu);
            if cand.0 >= ll - slack(ll) {
                moved = Some((na, nb, cand, t));
                break;
            }
            t *= 0.5;
        }
        let Some((na, nb, cand, accepted_t)) = moved else {
            break;
        };
        trial = (accepted_t * 2.0).min(step * 1e9);
        (a, b) = (na, nb);
        (ll, g, _) = (cand.0, cand.1, cand.2);
    }
    SubUpdate {
        alpha_i: a,
        beta_i: b,
        cap_hit,
    }
}

/// 1-D update of rho on the total log-likelihood, mirroring the node
/// sub-solvers. Returns the total log-likelihood at the final point so the
/// outer loop records it for free.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rho_update_core(
    net: &Network,
    alpha: &[f64],
    beta: &[f64],
    rho0: f64,
    mu: f64,
    ln_mu: f64,
    solver: SubSolver,
    sub_tol: f64,
    step_rho: f64,
    max_sub: usize,
) -> (RhoUpdate, f64) {
    let mut r = rho0;
    let (mut ll, mut d1, mut d2) = rho_eval(net, alpha, beta, r, mu, ln_mu);
    let mut cap_hit = true;
    let mut trial = step_rho;
    for _ in 0..max_sub {
        if solver == SubSolver::Gradient && d1.abs() < sub_tol {
            cap_hit = false;
            break;
        }
        let newton_dr = if solver == SubSolver::Newton && d2.abs() >= 1e-12 {
            Some(-d1 / d2)
        } else {
            None
        };
        let mut accepted = None;
        if let Some(dr) = newton_dr {
            let cand = rho_eval(net, alpha, beta, r + dr, mu, ln_mu);
            if cand.0 >= ll - slack(ll) {
                accepted = Some((r + dr, cand));
            }
        }
        if accepted.is_none() {
            let mut t = trial;
            for _ in 0..60 {
                let nr = r + t * d1;
                let cand = rho_eval(net, alpha, beta, nr, mu, ln_mu);
                if cand.0 >= ll - slack(ll) {
                    accepted = Some((nr, cand));
                    trial = (t * 2.0).min(step_rho * 1e9);
                    break;
                }
                t *= 0.5;
            }
        }
        let Some((nr, cand)) = accepted else {
            if solver == SubSolver::Newton {
                cap_hit = false;
            }
            break;
        };
        let dr = (nr - r).abs();
        r = nr;
        (ll, d1, d2) = cand;
        if solver == SubSolver::Newton && dr < sub_tol {
            cap_hit = false;
            break;
        }
    }
    (RhoUpdate { rho: r, cap_hit }, ll)
}

/// One Newton node update against the current state. Step fallback uses
/// 1 / (mu n).
pub fn newton_node_update(
    network: &Network,
    i: usize,
    params: &NodeParams,
    globals: &GlobalParams,
    sub_tol: f64,
    max_sub_iters: usize,
) -> SubUpdate {
    newton_update_core(
        network,
        i,
        &params.alpha,
        &params.beta,
        globals.rho,
        globals.mu,
        ln_mu_of(globals.mu),
        sub_tol,
        default_step(globals.mu, network.n()),
        max_sub_iters,
        true,
    )
}

/// One gradient-ascent node update against the current state.
pub fn gradient_node_update(
    network: &Network,
    i: usize,
    params: &NodeParams,
    globals: &GlobalParams,
    sub_tol: f64,
    step_size: Option<f64>,
    max_sub_iters: usize,
) -> SubUpdate {
    gradient_update_core(
        network,
        i,
        &params.alpha,
        &params.beta,
        globals.rho,
        globals.mu,
        ln_mu_of(globals.mu),
        sub_tol,
        step_size.unwrap_or_else(|| default_step(globals.mu, network.n())),
        max_sub_iters,
        true,
    )
}

/// One rho update against the current state.
pub fn rho_update(
    network: &Network,
    params: &NodeParams,
    globals: &GlobalParams,
    subsolver: SubSolver,
    sub_tol: f64,
    step_size: Option<f64>,
    max_sub_iters: usize,
) -> RhoUpdate {
    let step = step_size.unwrap_or_else(|| default_step(globals.mu, network.n()));
    rho_update_core(
        network,
        &params.alpha,
        &params.beta,
        globals.rho,
        globals.mu,
        ln_mu_of(globals.mu),
        subsolver,
        sub_tol,
        step / network.n() as f64,
        max_sub_iters,
    )
    .0
}

/// Full coordinate-descent fit from the given init.
pub fn coordinate_descent_fit(
    network: &Network,
    init: &NodeParams,
    init_rho: f64,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = network.n();
    if init.len() != n {
        return Err(Error::InvalidParams(format!(
            "init has {} nodes, network has {n}",
            init.len()
        )));
    }
    if !init_rho.is_finite() {
        return Err(Error::InvalidParams("init rho must be finite".to_string()));
    }
    let mu = match config.mu_mode {
        MuMode::Known(mu) => mu,
        MuMode::Plugin => {
            let mb = estimate_mu_bar(network);
            if mb.empty_network {
                return Err(Error::EmptyNetwork);
            }
            mb.value
        }
    };
    let ln_mu = ln_mu_of(mu);
    let step = config.step_size.unwrap_or_else(|| default_step(mu, n));

    let mut alpha = init.alpha.clone();
    let mut beta = init.beta.clone();
    let mut rho = init_rho;
    if config.fix_alpha1 {
        alpha[0] = 0.0;
    }

    let ll0 = rho_eval(network, &alpha, &beta, rho, mu, ln_mu).0;
    let mut loglik_trace = vec![ll0];
    let mut residual_trace = Vec::new();
    let mut converged = false;
    let mut sub_cap_hits = 0usize;

    let mut prev_alpha = vec![0.0; n];
    let mut prev_beta = vec![0.0; n];

    for _round in 0..config.max_outer_iters {
        prev_alpha.copy_from_slice(&alpha);
        prev_beta.copy_from_slice(&beta);
        let prev_rho = rho;

        for i in 0..n {
            let update_alpha = !(config.fix_alpha1 && i == 0);
            let upd = match config.subsolver {
                SubSolver::Newton => newton_update_core(
                    network,
                    i,
                    &alpha,
                    &beta,
                    rho,
                    mu,
                    ln_mu,
                    config.sub_tol,
                    step,
                    config.max_sub_iters,
                    update_alpha,
                ),
                SubSolver::Gradient => gradient_update_core(
                    network,
                    i,
                    &alpha,
                    &beta,
                    rho,
                    mu,
                    ln_mu,
                    config.sub_tol,
                    step,
                    config.max_sub_iters,
                    update_alpha,
                ),
            };
            alpha[i] = upd.alpha_i;
            beta[i] = upd.beta_i;
            sub_cap_hits += usize::from(upd.cap_hit);
        }

        let (rupd, ll_round) = rho_update_core(
            network,
            &alpha,
            &beta,
            rho,
            mu,
            ln_mu,
            config.subsolver,
            config.sub_tol,
            step / n as f64,
            config.max_sub_iters,
        );
        rho = rupd.rho;
        sub_cap_hits += usize::from(rupd.cap_hit);

        let residual = match config.outer_criterion {
            OuterCriterion::ParamChange => {
                let mut e = (rho - prev_rho).abs();
                for i in 0..n {
                    e = e
                        .max((alpha[i] - prev_alpha[i]).abs())
                        .max((beta[i] - prev_beta[i]).abs());
                }
                e
            }
            OuterCriterion::GradientNorm => {
                let (node, grho) = all_gradients(network, &alpha, &beta, rho, mu);
                let mut e = grho.abs();
                for (i, (ga, gb)) in node.iter().enumerate() {
                    if !(config.fix_alpha1 && i == 0) {
                        e = e.max(ga.abs());
                    }
                    e = e.max(gb.abs());
                }
                e
            }
        };
        residual_trace.push(residual);
        loglik_trace.push(ll_round);
        if residual < config.outer_tol {
            converged = true;
            break;
        }
    }

    let outer_iters = residual_trace.len();
    Ok(FitResult {
        params: NodeParams { alpha, beta },
        rho,
        mu_used: mu,
        outer_iters,
        converged,
        residual_trace,
        loglik_trace,
        sub_cap_hits,
    })
}

/// The seven replication statistics: sqrt(n)-scaled errors at node indices
/// 2, ceil(n/2), n for alpha and 1, ceil(n/2), n for beta (1-based), plus
/// n (rho_hat - rho_star).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub stat_a2: f64,
    pub stat_amid: f64,
    pub stat_an: f64,
    pub stat_b1: f64,
    pub stat_bmid: f64,
    pub stat_bn: f64,
    pub stat_rho: f64,
}

impl FitStatistics {
    pub const LABELS: [&'static str; 7] = [
        "stat_a2", "stat_amid", "stat_an", "stat_b1", "stat_bmid", "stat_bn", "stat_rho",
    ];

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.stat_a2,
            self.stat_amid,
            self.stat_an,
            self.stat_b1,
            self.stat_bmid,
            self.stat_bn,
            self.stat_rho,
        ]
    }
}

pub fn fit_statistics(
    fit: &NodeParams,
    fit_rho: f64,
    truth: &NodeParams,
    truth_rho: f64,
) -> FitStatistics {
    let n = fit.len();
    let s = (n as f64).sqrt();
    let mid = n.div_ceil(2) - 1; // ceil(n/2), 1-based -> 0-based
    let last = n - 1;
    FitStatistics {
        stat_a2: s * (fit.alpha[1] - truth.alpha[1]),
        stat_amid: s * (fit.alpha[mid] - truth.alpha[mid]),
        stat_an: s * (fit.alpha[last] - truth.alpha[last]),
        stat_b1: s * (fit.beta[0] - truth.beta[0]),
        stat_bmid: s * (fit.beta[mid] - truth.beta[mid]),
        stat_bn: s * (fit.beta[last] - truth.beta[last]),
        stat_rho: n as f64 * (fit_rho - truth_rho),
    }
}

/// Total log-likelihood at a fit's parameters; convenience for traces and
/// oracles.
pub fn loglik_of(network: &Network, params: &NodeParams, rho: f64, mu: f64) -> f64 {
    model::total_loglik(network, params, &GlobalParams { rho, mu })
}
