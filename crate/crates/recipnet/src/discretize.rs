//! Finite per-node parameter grids and the MLE restricted to them.
//!
//! The grid discretizes only the node coordinates; the reciprocity
//! coefficient stays continuous and is updated by the same 1-D solver the
//! continuous fit uses. The per-node update is an exhaustive search over
//! all (alpha_i, beta_i) grid pairs, which is exact and keeps every sweep
//! monotone in the likelihood.

use serde::{Deserialize, Serialize};

use crate::estimator::{default_step, ln_mu_of, rho_update_core, FitConfig, MuMode};
use crate::model::{node_loglik_at, rho_eval, Network, NodeParams};
use crate::{Error, Result};

/// Shared per-coordinate candidate set: a uniform grid on [-B, B] with
/// nominal spacing h, endpoints always included (the last cell may be
/// shortened to reach B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    values: Vec<f64>,
    h: f64,
    bound: f64,
}

impl Grid {
    pub fn uniform(bound: f64, h: f64) -> Result<Grid> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParams(format!("bound must be positive, got {bound}")));
        }
        if !(h > 0.0 && h <= 2.0 * bound) {
            return Err(Error::InvalidGridSpacing(h));
        }
        let steps = (2.0 * bound / h + 1e-9).floor() as usize;
        let mut values: Vec<f64> = (0..=steps).map(|k| -bound + k as f64 * h).collect();
        let last = values.last_mut().expect("at least one step");
        if *last > bound {
            *last = bound;
        }
        if bound - *values.last().unwrap() > 1e-12 {
            values.push(bound);
        }
        Ok(Grid { values, h, bound })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Minimum separation between distinct per-coordinate values. Equals h
    /// unless the final cell was shortened to include the endpoint.
    pub fn delta_n(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Covering radius in 2-norm over d coordinates: the farthest any point
    /// of [-B, B]^d sits from the grid, h sqrt(d) / 2.
    pub fn delta_prime(&self, d: usize) -> f64 {
        let max_gap = self
            .values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        0.5 * max_gap * (d as f64).sqrt()
    }

    /// Nearest grid value; exact ties go to the smaller value.
    pub fn project(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|v| *v < x);
        if idx == 0 {
            return self.values[0];
        }
        if idx == self.values.len() {
            return *self.values.last().unwrap();
        }
        let lo = self.values[idx - 1];
        let hi = self.values[idx];
        if x - lo <= hi - x {
            lo
        } else {
            hi
        }
    }

    /// Bit-exact membership.
    pub fn contains(&self, x: f64) -> bool {
        self.values.binary_search_by(|v| v.partial_cmp(&x).unwrap()).is_ok()
    }
}

/// Grid spacing from the theoretical optimum
/// h = c n^(-1/6) mu^(-1/6) (ln n)^(4/3), unit constant by default.
pub fn optimal_spacing(n: usize, mu: f64, c: f64) -> f64 {
    let nf = n as f64;
    c * nf.powf(-1.0 / 6.0) * mu.powf(-1.0 / 6.0) * nf.ln().powf(4.0 / 3.0)
}

/// Builds a uniform grid with the optimal spacing, clamped so the spacing
/// never exceeds the 2B cell limit.
pub fn grid_with_optimal_spacing(bound: f64, n: usize, mu: f64, c: f64) -> Result<Grid> {
    let h = optimal_spacing(n, mu, c).min(2.0 * bound);
    Grid::uniform(bound, h)
}

/// Per-coordinate nearest-grid projection of a parameter set.
pub fn project_to_grid(params: &NodeParams, grid: &Grid) -> NodeParams {
    NodeParams {
        alpha: params.alpha.iter().map(|&a| grid.project(a)).collect(),
        beta: params.beta.iter().map(|&b| grid.project(b)).collect(),
    }
}

/// Fit restricted to the grid: every (alpha_i, beta_i) is a grid pair,
/// rho is continuous.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedFit {
    #[serde(flatten)]
    pub params: NodeParams,
    pub rho: f64,
    pub mu_used: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub residual_trace: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    /// Total log-likelihood at the returned point.
    pub loglik: f64,
}

/// Coordinate descent over the grid: the node-i update exhaustively
/// maximizes l_i over all grid pairs (ties toward the lexicographically
/// smaller pair), rho is updated continuously. Stops when a full sweep
/// changes no node assignment and the rho move is below the outer
/// tolerance.
pub fn discretized_fit(
    network: &Network,
    init: &NodeParams,
    init_rho: f64,
    grid: &Grid,
    config: &FitConfig,
) -> Result<DiscretizedFit> {
    config.validate()?;
    let n = network.n();
    if init.len() != n {
        return Err(Error::InvalidParams(format!(
            "init has {} nodes, network has {n}",
            init.len()
        )));
    }
    for i in 0..n {
        if !grid.contains(init.alpha[i]) || !grid.contains(init.beta[i]) {
            return Err(Error::InitOffGrid { node: i });
        }
    }
    if config.fix_alpha1 && !grid.contains(0.0) {
        return Err(Error::InvalidParams(
            "fix_alpha1 needs 0 on the grid".to_string(),
        ));
    }
    let mu = match config.mu_mode {
        MuMode::Known(mu) => mu,
        MuMode::Plugin => {
            let mb = crate::estimator::estimate_mu_bar(network);
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
    let mut final_ll = ll0;

    for _round in 0..config.max_outer_iters {
        let mut changed = 0usize;
        let mut max_change = 0.0f64;
        for i in 0..n {
            let mut best_ll = f64::NEG_INFINITY;
            let mut best = (alpha[i], beta[i]);
            if config.fix_alpha1 && i == 0 {
                for &gb in grid.values() {
                    let ll = node_loglik_at(network, i, &alpha, &beta, 0.0, gb, rho, mu, ln_mu);
                    if ll > best_ll {
                        best_ll = ll;
                        best = (0.0, gb);
                    }
                }
            } else {
                for &ga in grid.values() {
                    for &gb in grid.values() {
                        let ll = node_loglik_at(network, i, &alpha, &beta, ga, gb, rho, mu, ln_mu);
                        if ll > best_ll {
                            best_ll = ll;
                            best = (ga, gb);
                        }
                    }
                }
            }
            if best != (alpha[i], beta[i]) {
                changed += 1;
                max_change = max_change
                    .max((best.0 - alpha[i]).abs())
                    .max((best.1 - beta[i]).abs());
                alpha[i] = best.0;
                beta[i] = best.1;
            }
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
        let rho_move = (rupd.rho - rho).abs();
        rho = rupd.rho;
        final_ll = ll_round;
        residual_trace.push(max_change.max(rho_move));
        loglik_trace.push(ll_round);
        if changed == 0 && rho_move < config.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(DiscretizedFit {
        params: NodeParams { alpha, beta },
        rho,
        mu_used: mu,
        outer_iters: residual_trace.len(),
        converged,
        residual_trace,
        loglik_trace,
        loglik: final_ll,
    })
}

/// Global maximizer of the likelihood over the full product space
/// grid^(2n) x rho_grid by enumeration; ties go to the lexicographically
/// smaller assignment (alpha_1, beta_1, ..., alpha_n, beta_n, rho). Test
/// oracle; the search space is capped at 1e7 points.
pub fn brute_force_discrete_mle(
    network: &Network,
    grid: &Grid,
    rho_grid: &[f64],
) -> Result<DiscretizedFit> {
    let n = network.n();
    let m = grid.values().len();
    if rho_grid.is_empty() {
        return Err(Error::InvalidParams("rho_grid is empty".to_string()));
    }
    let mut rhos = rho_grid.to_vec();
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let space = (m as f64).powi(2 * n as i32) * rhos.len() as f64;
    if !(space <= 1e7) {
        return Err(Error::SearchSpaceTooLarge(space));
    }
    brute_force_with_mu(network, grid, &rhos, 1.0)
}

/// Same enumeration with an explicit sparsity level.
pub fn brute_force_discrete_mle_with_mu(
    network: &Network,
    grid: &Grid,
    rho_grid: &[f64],
    mu: f64,
) -> Result<DiscretizedFit> {
    let n = network.n();
    let m = grid.values().len();
    if rho_grid.is_empty() {
        return Err(Error::InvalidParams("rho_grid is empty".to_string()));
    }
    let mut rhos = rho_grid.to_vec();
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let space = (m as f64).powi(2 * n as i32) * rhos.len() as f64;
    if !(space <= 1e7) {
        return Err(Error::SearchSpaceTooLarge(space));
    }
    brute_force_with_mu(network, grid, &rhos, mu)
}

fn brute_force_with_mu(
    network: &Network,
    grid: &Grid,
    rhos: &[f64],
    mu: f64,
) -> Result<DiscretizedFit> {
    let n = network.n();
    let m = grid.values().len();
    let ln_mu = ln_mu_of(mu);
    // Odometer over 2n digits ordered (alpha_1, beta_1, ..., alpha_n,
    // beta_n); ascending enumeration plus strict improvement implements the
    // lexicographic tie-break.
    let mut digits = vec![0usize; 2 * n];
    let mut alpha = vec![grid.values()[0]; n];
    let mut beta = vec![grid.values()[0]; n];
    let mut best_ll = f64::NEG_INFINITY;
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    loop {
        for i in 0..n {
            alpha[i] = grid.values()[digits[2 * i]];
            beta[i] = grid.values()[digits[2 * i + 1]];
        }
        for &r in rhos {
            let ll = rho_eval(network, &alpha, &beta, r, mu, ln_mu).0;
            if ll > best_ll {
                best_ll = ll;
                best = Some((alpha.clone(), beta.clone(), r));
            }
        }
        // advance odometer, most significant digit first so the assignment
        // tuple enumerates in ascending lexicographic order
        let mut pos = 2 * n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
            if pos == 0 {
                break;
            }
        }
        if digits.iter().all(|&d| d == 0) {
            break;
        }
    }
    let (alpha, beta, rho) = best.expect("non-empty search space");
    Ok(DiscretizedFit {
        params: NodeParams { alpha, beta },
        rho,
        mu_used: mu,
        outer_iters: 0,
        converged: true,
        residual_trace: Vec::new(),
        loglik_trace: vec![best_ll],
        loglik: best_ll,
    })
}
