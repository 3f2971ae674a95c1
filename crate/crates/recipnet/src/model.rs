//! Exact dyad distribution, log-likelihood, and analytic derivatives.
//!
//! A dyad {i, j} takes one of four states (a_ij, a_ji). Under the dense
//! model the state (a, b) has probability
//!
//! ```text
//! g(a, b) = exp(theta1*a + theta2*b + rho*a*b) / Z,
//! Z = 1 + e^theta1 + e^theta2 + e^(theta1 + theta2 + rho),
//! ```
//!
//! with `theta1 = alpha_i + beta_j` and `theta2 = alpha_j + beta_i`. The
//! sparse variant scales every nonzero state by `mu` and puts the
//! complement on (0, 0). All log-likelihood evaluations work from the
//! exponents via log-sum-exp; probabilities are never exponentiated and
//! then logged.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Node out-propensities (`alpha`) and in-propensities (`beta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl NodeParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::InvalidParams(format!(
                "alpha has length {}, beta has length {}",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.len() < 2 {
            return Err(Error::InvalidParams(
                "need at least two nodes".to_string(),
            ));
        }
        if !alpha.iter().chain(beta.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParams(
                "non-finite parameter entry".to_string(),
            ));
        }
        Ok(Self { alpha, beta })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Largest |alpha_i| or |beta_i|.
    pub fn max_abs(&self) -> f64 {
        self.alpha
            .iter()
            .chain(self.beta.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// True when every entry lies in [-bound, bound].
    pub fn within_bound(&self, bound: f64) -> bool {
        self.max_abs() <= bound
    }
}

/// Reciprocity coefficient and sparsity level shared by all dyads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub rho: f64,
    pub mu: f64,
}

impl GlobalParams {
    pub fn new(rho: f64, mu: f64) -> Result<Self> {
        if !rho.is_finite() {
            return Err(Error::InvalidParams("rho must be finite".to_string()));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "mu must lie in (0, 1], got {mu}"
            )));
        }
        Ok(Self { rho, mu })
    }

    pub fn dense(rho: f64) -> Self {
        Self { rho, mu: 1.0 }
    }
}

/// Joint state of the two directed edges inside one dyad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadOutcome {
    pub a_ij: bool,
    pub a_ji: bool,
}

impl DyadOutcome {
    pub const EMPTY: Self = Self::new(false, false);

    pub const fn new(a_ij: bool, a_ji: bool) -> Self {
        Self { a_ij, a_ji }
    }

    /// All four states in the fixed order (0,0), (1,0), (0,1), (1,1).
    pub const ALL: [Self; 4] = [
        Self::new(false, false),
        Self::new(true, false),
        Self::new(false, true),
        Self::new(true, true),
    ];

    pub fn is_empty(&self) -> bool {
        !self.a_ij && !self.a_ji
    }
}

/// Directed network on n nodes, stored as a sorted edge list plus a dense
/// out-adjacency bitmap for O(1) dyad lookups during likelihood sweeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    row_words: usize,
    bits: Vec<u64>,
    edges: Vec<(u32, u32)>,
}

impl Network {
    /// Builds from 0-based directed pairs. Rejects self-loops, duplicates,
    /// and out-of-range endpoints.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams("network needs n >= 2".to_string()));
        }
        let row_words = n.div_ceil(64);
        let mut bits = vec![0u64; n * row_words];
        let mut list: Vec<(u32, u32)> = Vec::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidParams(format!("self-loop at node {i}")));
            }
            if i as usize >= n || j as usize >= n {
                return Err(Error::InvalidParams(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            let word = i as usize * row_words + (j as usize >> 6);
            let mask = 1u64 << (j & 63);
            if bits[word] & mask != 0 {
                return Err(Error::InvalidParams(format!("duplicate edge ({i}, {j})")));
            }
            bits[word] |= mask;
            list.push((i, j));
        }
        list.sort_unstable();
        Ok(Self {
            n,
            row_words,
            bits,
            edges: list,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of directed edges present.
    pub fn directed_edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted 0-based directed edge list.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    #[inline(always)]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let word = i * self.row_words + (j >> 6);
        (self.bits[word] >> (j & 63)) & 1 != 0
    }

    /// Dyad state of the unordered pair viewed from i.
    #[inline(always)]
    pub fn dyad(&self, i: usize, j: usize) -> DyadOutcome {
        DyadOutcome::new(self.has_edge(i, j), self.has_edge(j, i))
    }

    /// Parses the edge-list text format: a header line `n <n>` followed by
    /// one 1-based `i j` directed edge per line. Blank lines allowed.
    pub fn parse_edge_list(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (hline, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty file; expected header `n <n>`".to_string()))?;
        let mut parts = header.split_whitespace();
        let n: usize = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(v), None) => v
                .parse()
                .map_err(|_| err(hline + 1, format!("bad node count `{v}`")))?,
            _ => return Err(err(hline + 1, format!("expected `n <n>`, got `{header}`"))),
        };
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (a, b) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(err(idx + 1, format!("expected `i j`, got `{line}`"))),
            };
            let i: usize = a
                .parse()
                .map_err(|_| err(idx + 1, format!("bad node index `{a}`")))?;
            let j: usize = b
                .parse()
                .map_err(|_| err(idx + 1, format!("bad node index `{b}`")))?;
            if i < 1 || j < 1 || i > n || j > n {
                return Err(err(idx + 1, format!("node index out of range 1..={n}")));
            }
            edges.push(((i - 1) as u32, (j - 1) as u32));
        }
        Self::from_edges(n, edges).map_err(|e| err(0, e.to_string()))
    }

    /// Writes the edge-list text format (1-based, `n <n>` header).
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 + self.edges.len() * 8);
        out.push_str(&format!("n {}\n", self.n));
        for &(i, j) in &self.edges {
            out.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        out
    }
}

/// Four-outcome probability table for one dyad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadPmf {
    pub p00: f64,
    pub p10: f64,
    pub p01: f64,
    pub p11: f64,
    /// Normalizer of the dense kernel.
    pub z: f64,
}

impl DyadPmf {
    pub fn prob(&self, y: DyadOutcome) -> f64 {
        match (y.a_ij, y.a_ji) {
            (false, false) => self.p00,
            (true, false) => self.p10,
            (false, true) => self.p01,
            (true, true) => self.p11,
        }
    }
}

/// Shared per-dyad quantities: the shifted normalizer (max exponent m and
/// scaled sum s with log Z = m + ln s), dense state probabilities, and the
/// marginal moments q1 = P(a=1), q2 = P(b=1), q3 = P(a=b=1). The log is
/// taken lazily; derivative-only sweeps never pay for it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DyadKernel {
    pub m: f64,
    pub s: f64,
    pub g00: f64,
    pub g10: f64,
    pub g01: f64,
    pub g11: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

#[inline(always)]
pub(crate) fn kernel(t1: f64, t2: f64, r: f64) -> DyadKernel {
    let t3 = t1 + t2 + r;
    let m = t1.max(t2).max(t3).max(0.0);
    let e0 = (-m).exp();
    let e1 = (t1 - m).exp();
    let e2 = (t2 - m).exp();
    let e3 = (t3 - m).exp();
    let s = e0 + e1 + e2 + e3;
    let inv = 1.0 / s;
    let g00 = e0 * inv;
    let g10 = e1 * inv;
    let g01 = e2 * inv;
    let g11 = e3 * inv;
    DyadKernel {
        m,
        s,
        g00,
        g10,
        g01,
        g11,
        q1: g10 + g11,
        q2: g01 + g11,
        q3: g11,
    }
}

impl DyadKernel {
    #[inline(always)]
    pub fn logz(&self) -> f64 {
        self.m + self.s.ln()
    }

    /// Weight of the dense score inside the sparse zero-outcome score:
    /// w = mu * g00 / p00. Equals 1 at mu = 1.
    #[inline(always)]
    pub fn zero_weight(&self, mu: f64) -> f64 {
        let p00 = (1.0 - mu) + mu * self.g00;
        mu * self.g00 / p00
    }

    /// Sparse log-probability of one state. Exactly one logarithm on every
    /// path.
    #[inline(always)]
    pub fn ll(&self, a: bool, b: bool, t1: f64, t2: f64, r: f64, mu: f64, ln_mu: f64) -> f64 {
        match (a, b) {
            (false, false) => {
                if mu == 1.0 {
                    -self.logz()
                } else {
                    ((1.0 - mu) + mu * self.g00).ln()
                }
            }
            (true, false) => ln_mu + t1 - self.logz(),
            (false, true) => ln_mu + t2 - self.logz(),
            (true, true) => ln_mu + t1 + t2 + r - self.logz(),
        }
    }

    /// Sparse score (d/dtheta1, d/dtheta2, d/drho) of the log-likelihood at
    /// the observed state.
    #[inline(always)]
    pub fn score(&self, a: bool, b: bool, mu: f64) -> (f64, f64, f64) {
        if a || b {
            (
                f64::from(a) - self.q1,
                f64::from(b) - self.q2,
                f64::from(a && b) - self.q3,
            )
        } else {
            let w = self.zero_weight(mu);
            (-w * self.q1, -w * self.q2, -w * self.q3)
        }
    }

    /// Covariance matrix of (a, b, ab) under the dense kernel, packed as
    /// (c11, c12, c22, c13, c23, c33).
    #[inline(always)]
    pub fn cov(&self) -> (f64, f64, f64, f64, f64, f64) {
        let (q1, q2, q3) = (self.q1, self.q2, self.q3);
        (
            q1 * (1.0 - q1),
            q3 - q1 * q2,
            q2 * (1.0 - q2),
            q3 * (1.0 - q1),
            q3 * (1.0 - q2),
            q3 * (1.0 - q3),
        )
    }

    /// Sparse Hessian of the log-likelihood at the observed state, packed as
    /// (h11, h12, h22, h13, h23, h33) over (theta1, theta2, rho).
    #[inline(always)]
    pub fn hess(&self, a: bool, b: bool, mu: f64) -> (f64, f64, f64, f64, f64, f64) {
        let (c11, c12, c22, c13, c23, c33) = self.cov();
        if a || b {
            (-c11, -c12, -c22, -c13, -c23, -c33)
        } else {
            let w = self.zero_weight(mu);
            let ww = w * (1.0 - w);
            let (q1, q2, q3) = (self.q1, self.q2, self.q3);
            (
                ww * q1 * q1 - w * c11,
                ww * q1 * q2 - w * c12,
                ww * q2 * q2 - w * c22,
                ww * q1 * q3 - w * c13,
                ww * q2 * q3 - w * c23,
                ww * q3 * q3 - w * c33,
            )
        }
    }
}

/// Z = 1 + e^theta1 + e^theta2 + e^(theta1 + theta2 + rho), computed through
/// log-sum-exp so intermediate exponentials cannot overflow.
pub fn dyad_partition(theta1: f64, theta2: f64, rho: f64) -> f64 {
    kernel(theta1, theta2, rho).logz().exp()
}

/// Dense four-state pmf: p(a, b) = exp(theta1*a + theta2*b + rho*a*b) / Z.
pub fn dyad_pmf_dense(theta1: f64, theta2: f64, rho: f64) -> DyadPmf {
    let k = kernel(theta1, theta2, rho);
    DyadPmf {
        p00: k.g00,
        p10: k.g10,
        p01: k.g01,
        p11: k.g11,
        z: k.logz().exp(),
    }
}

/// Sparse pmf: nonzero states scaled by `mu`, remainder on (0, 0). Rejects a
/// degenerate zero-state mass (p00 below 1e-12).
pub fn dyad_pmf_sparse(theta1: f64, theta2: f64, rho: f64, mu: f64) -> Result<DyadPmf> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "mu must lie in (0, 1], got {mu}"
        )));
    }
    let k = kernel(theta1, theta2, rho);
    let p00 = (1.0 - mu) + mu * k.g00;
    if p00 <= 1e-12 {
        return Err(Error::DegeneratePmf { p00, mu });
    }
    Ok(DyadPmf {
        p00,
        p10: mu * k.g10,
        p01: mu * k.g01,
        p11: mu * k.g11,
        z: k.logz().exp(),
    })
}

/// Log of the sparse pmf entry at the observed state.
pub fn dyad_loglik(outcome: DyadOutcome, theta1: f64, theta2: f64, rho: f64, mu: f64) -> f64 {
    debug_assert!(mu > 0.0 && mu <= 1.0);
    let ln_mu = if mu == 1.0 { 0.0 } else { mu.ln() };
    kernel(theta1, theta2, rho).ll(outcome.a_ij, outcome.a_ji, theta1, theta2, rho, mu, ln_mu)
}

/// Dense-model score (d log g / d theta1, d theta2, d rho) at the observed
/// state. Sparse corrections are applied by the node-level routines.
pub fn dyad_score(outcome: DyadOutcome, theta1: f64, theta2: f64, rho: f64) -> (f64, f64, f64) {
    kernel(theta1, theta2, rho).score(outcome.a_ij, outcome.a_ji, 1.0)
}

/// Sum of dyad log-likelihoods over the n-1 dyads containing node i, with
/// node i's own coordinates overridden by (alpha_i, beta_i). This is the
/// coordinate-descent objective for one node.
pub(crate) fn node_loglik_at(
    network: &Network,
    i: usize,
    alpha: &[f64],
    beta: &[f64],
    alpha_i: f64,
    beta_i: f64,
    rho: f64,
    mu: f64,
    ln_mu: f64,
) -> f64 {
    let mut total = 0.0;
    for j in 0..network.n() {
        if j == i {
            continue;
        }
        let t1 = alpha_i + beta[j];
        let t2 = alpha[j] + beta_i;
        let y = network.dyad(i, j);
        total += kernel(t1, t2, rho).ll(y.a_ij, y.a_ji, t1, t2, rho, mu, ln_mu);
    }
    total
}

/// Node objective plus its gradient and Hessian in (alpha_i, beta_i),
/// fused into one sweep over the dyads containing i.
#[allow(clippy::too_many_arguments)]
pub(crate) fn node_eval(
    network: &Network,
    i: usize,
    alpha: &[f64],
    beta: &[f64],
    alpha_i: f64,
    beta_i: f64,
    rho: f64,
    mu: f64,
    ln_mu: f64,
) -> (f64, (f64, f64), NodeHessian) {
    let mut ll = 0.0;
    let (mut ga, mut gb) = (0.0, 0.0);
    let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
    for j in 0..network.n() {
        if j == i {
            continue;
        }
        let t1 = alpha_i + beta[j];
        let t2 = alpha[j] + beta_i;
        let y = network.dyad(i, j);
        let k = kernel(t1, t2, rho);
        ll += k.ll(y.a_ij, y.a_ji, t1, t2, rho, mu, ln_mu);
        let (s1, s2, _) = k.score(y.a_ij, y.a_ji, mu);
        ga += s1;
        gb += s2;
        let (h11, h12, h22, _, _, _) = k.hess(y.a_ij, y.a_ji, mu);
        haa += h11;
        hab += h12;
        hbb += h22;
    }
    (
        ll,
        (ga, gb),
        NodeHessian {
            aa: haa,
            ab: hab,
            bb: hbb,
        },
    )
}

/// Total log-likelihood, gradient, and curvature in rho, fused into one
/// sweep over unordered pairs.
pub(crate) fn rho_eval(
    network: &Network,
    alpha: &[f64],
    beta: &[f64],
    rho: f64,
    mu: f64,
    ln_mu: f64,
) -> (f64, f64, f64) {
    let n = network.n();
    let (mut ll, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let t1 = alpha[i] + beta[j];
            let t2 = alpha[j] + beta[i];
            let y = network.dyad(i, j);
            let k = kernel(t1, t2, rho);
            ll += k.ll(y.a_ij, y.a_ji, t1, t2, rho, mu, ln_mu);
            let (_, _, s3) = k.score(y.a_ij, y.a_ji, mu);
            let (_, _, _, _, _, h33) = k.hess(y.a_ij, y.a_ji, mu);
            d1 += s3;
            d2 += h33;
        }
    }
    (ll, d1, d2)
}

/// Per-node gradient components and the rho gradient of the total
/// log-likelihood, all in one sweep. Used for the gradient-norm stopping
/// residual. Returns (d l_i / d alpha_i, d l_i / d beta_i) per node and
/// d l / d rho.
pub(crate) fn all_gradients(
    network: &Network,
    alpha: &[f64],
    beta: &[f64],
    rho: f64,
    mu: f64,
) -> (Vec<(f64, f64)>, f64) {
    let n = network.n();
    let mut node = vec![(0.0, 0.0); n];
    let mut grho = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let t1 = alpha[i] + beta[j];
            let t2 = alpha[j] + beta[i];
            let y = network.dyad(i, j);
            let k = kernel(t1, t2, rho);
            let (s1, s2, s3) = k.score(y.a_ij, y.a_ji, mu);
            node[i].0 += s1;
            node[i].1 += s2;
            node[j].0 += s2;
            node[j].1 += s1;
            grho += s3;
        }
    }
    (node, grho)
}

/// Log-likelihood of the n-1 dyads containing node i.
pub fn node_loglik(
    network: &Network,
    i: usize,
    params: &NodeParams,
    globals: &GlobalParams,
) -> f64 {
    let ln_mu = if globals.mu == 1.0 { 0.0 } else { globals.mu.ln() };
    node_loglik_at(
        network,
        i,
        &params.alpha,
        &params.beta,
        params.alpha[i],
        params.beta[i],
        globals.rho,
        globals.mu,
        ln_mu,
    )
}

/// Total log-likelihood over unordered pairs i < j.
pub fn total_loglik(network: &Network, params: &NodeParams, globals: &GlobalParams) -> f64 {
    let n = network.n();
    let ln_mu = if globals.mu == 1.0 { 0.0 } else { globals.mu.ln() };
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let t1 = params.alpha[i] + params.beta[j];
            let t2 = params.alpha[j] + params.beta[i];
            let y = network.dyad(i, j);
            total += kernel(t1, t2, globals.rho).ll(
                y.a_ij,
                y.a_ji,
                t1,
                t2,
                globals.rho,
                globals.mu,
                ln_mu,
            );
        }
    }
    total
}

/// Exact (d l_i / d alpha_i, d l_i / d beta_i) for the sparse likelihood.
pub fn node_gradient(
    network: &Network,
    i: usize,
    params: &NodeParams,
    globals: &GlobalParams,
) -> (f64, f64) {
    let (mut ga, mut gb) = (0.0, 0.0);
    for j in 0..network.n() {
        if j == i {
            continue;
        }
        let t1 = params.alpha[i] + params.beta[j];
        let t2 = params.alpha[j] + params.beta[i];
        let y = network.dyad(i, j);
        let (s1, s2, _) = kernel(t1, t2, globals.rho).score(y.a_ij, y.a_ji, globals.mu);
        ga += s1;
        gb += s2;
    }
    (ga, gb)
}

/// Symmetric 2x2 Hessian of l_i in (alpha_i, beta_i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeHessian {
    pub aa: f64,
    pub ab: f64,
    pub bb: f64,
}

impl NodeHessian {
    pub fn det(&self) -> f64 {
        self.aa * self.bb - self.ab * self.ab
    }

    /// Flags a Hessian whose determinant magnitude is below 1e-12, telling
    /// the caller to fall back to gradient steps.
    pub fn is_singular(&self) -> bool {
        self.det().abs() < 1e-12
    }

    /// Newton increment -H^-1 g, an ascent direction when H is negative
    /// definite. Returns None when flagged singular.
    pub fn newton_step(&self, g: (f64, f64)) -> Option<(f64, f64)> {
        if self.is_singular() {
            return None;
        }
        let det = self.det();
        Some((
            -(self.bb * g.0 - self.ab * g.1) / det,
            -(self.aa * g.1 - self.ab * g.0) / det,
        ))
    }
}

/// Exact second partials of l_i in (alpha_i, beta_i).
pub fn node_hessian(
    network: &Network,
    i: usize,
    params: &NodeParams,
    globals: &GlobalParams,
) -> NodeHessian {
    let (mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0);
    for j in 0..network.n() {
        if j == i {
            continue;
        }
        let t1 = params.alpha[i] + params.beta[j];
        let t2 = params.alpha[j] + params.beta[i];
        let y = network.dyad(i, j);
        let (h11, h12, h22, _, _, _) =
            kernel(t1, t2, globals.rho).hess(y.a_ij, y.a_ji, globals.mu);
        aa += h11;
        ab += h12;
        bb += h22;
    }
    NodeHessian { aa, ab, bb }
}

/// First and second derivative of the total log-likelihood in rho.
pub fn rho_derivatives(
    network: &Network,
    params: &NodeParams,
    globals: &GlobalParams,
) -> (f64, f64) {
    let ln_mu = if globals.mu == 1.0 { 0.0 } else { globals.mu.ln() };
    let (_, d1, d2) = rho_eval(
        network,
        &params.alpha,
        &params.beta,
        globals.rho,
        globals.mu,
        ln_mu,
    );
    (d1, d2)
}

/// Smallest singular value of the 4x3 matrix of normalized dense score rows
/// [g_k(a,b) / g(a,b)] over the four states. Strictly positive for bounded
/// parameters; its positivity is what makes the per-dyad information
/// matrix rank 3.
pub fn information_rank_diagnostic(theta1: f64, theta2: f64, rho: f64) -> f64 {
    let m = information_matrix(theta1, theta2, rho);
    let svd = nalgebra::Matrix4x3::from_rows(&[
        nalgebra::RowVector3::new(m[0][0], m[0][1], m[0][2]),
        nalgebra::RowVector3::new(m[1][0], m[1][1], m[1][2]),
        nalgebra::RowVector3::new(m[2][0], m[2][1], m[2][2]),
        nalgebra::RowVector3::new(m[3][0], m[3][1], m[3][2]),
    ])
    .svd(false, false);
    svd.singular_values.iter().fold(f64::INFINITY, |m, &s| m.min(s))
}

/// The raw 4x3 normalized score matrix, rows in state order
/// (0,0), (1,0), (0,1), (1,1).
pub fn information_matrix(theta1: f64, theta2: f64, rho: f64) -> [[f64; 3]; 4] {
    let k = kernel(theta1, theta2, rho);
    let mut rows = [[0.0; 3]; 4];
    for (row, y) in rows.iter_mut().zip(DyadOutcome::ALL) {
        let (s1, s2, s3) = k.score(y.a_ij, y.a_ji, 1.0);
        *row = [s1, s2, s3];
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn partition_at_zero_is_four() {
        assert_eq!(dyad_partition(0.0, 0.0, 0.0), 4.0);
    }

    #[test]
    fn partition_ln2_is_six() {
        assert!((dyad_partition(LN2, 0.0, 0.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn partition_matches_direct_summation() {
        let (t1, t2, r): (f64, f64, f64) = (0.7, -0.3, 0.6);
        let direct = 1.0 + t1.exp() + t2.exp() + (t1 + t2 + r).exp();
        assert!((dyad_partition(t1, t2, r) - direct).abs() / direct < 1e-14);
    }

    #[test]
    fn dense_pmf_symmetric_at_zero() {
        let p = dyad_pmf_dense(0.0, 0.0, 0.0);
        for v in [p.p00, p.p10, p.p01, p.p11] {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_pmf_rho_ln3() {
        let p = dyad_pmf_dense(0.0, 0.0, 3.0f64.ln());
        assert!((p.p11 - 0.5).abs() < 1e-15);
        assert!((p.p00 - 1.0 / 6.0).abs() < 1e-15);
        assert!((p.p10 - 1.0 / 6.0).abs() < 1e-15);
        assert!((p.p01 - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn dense_pmf_factorizes_at_rho_zero() {
        let p = dyad_pmf_dense(LN2, 0.0, 0.0);
        assert!((p.p10 - 1.0 / 3.0).abs() < 1e-15);
        // Two independent Bernoulli draws with success probs 2/3 and 1/2.
        let (pa, pb) = (2.0 / 3.0, 0.5);
        assert!((p.p11 - pa * pb).abs() < 1e-15);
        assert!((p.p00 - (1.0 - pa) * (1.0 - pb)).abs() < 1e-15);
        assert!((p.p01 - (1.0 - pa) * pb).abs() < 1e-15);
    }

    #[test]
    fn sparse_pmf_reduces_to_dense_at_mu_one() {
        let s = dyad_pmf_sparse(0.0, 0.0, 0.0, 1.0).unwrap();
        let d = dyad_pmf_dense(0.0, 0.0, 0.0);
        assert_eq!(s.p00, d.p00);
        assert_eq!(s.p11, d.p11);
    }

    #[test]
    fn sparse_pmf_mu_04() {
        let p = dyad_pmf_sparse(0.0, 0.0, 0.0, 0.4).unwrap();
        assert!((p.p00 - 0.7).abs() < 1e-15);
        for v in [p.p10, p.p01, p.p11] {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_pmf_matches_direct_formula() {
        let (t1, t2, r, mu) = (0.5, -0.5, 0.3, 0.2);
        let p = dyad_pmf_sparse(t1, t2, r, mu).unwrap();
        let z = 1.0 + t1.exp() + t2.exp() + (t1 + t2 + r).exp();
        assert!((p.p10 - mu * t1.exp() / z).abs() < 1e-15);
        assert!((p.p01 - mu * t2.exp() / z).abs() < 1e-15);
        assert!((p.p11 - mu * (t1 + t2 + r).exp() / z).abs() < 1e-15);
        assert!((p.p00 - (1.0 - mu * (1.0 - 1.0 / z))).abs() < 1e-15);
        let sum = p.p00 + p.p10 + p.p01 + p.p11;
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_pmf_rejects_bad_mu() {
        assert!(dyad_pmf_sparse(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(dyad_pmf_sparse(0.0, 0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn loglik_examples() {
        let ll = dyad_loglik(DyadOutcome::EMPTY, 0.0, 0.0, 0.0, 1.0);
        assert!((ll + 4.0f64.ln()).abs() < 1e-15);
        let ll = dyad_loglik(DyadOutcome::new(true, true), 0.0, 0.0, 3.0f64.ln(), 1.0);
        assert!((ll + 2.0f64.ln()).abs() < 1e-15);
        // Sparse entry matches the pmf table.
        let (t1, t2, r, mu) = (0.7, -0.3, 0.6, 0.5);
        let p = dyad_pmf_sparse(t1, t2, r, mu).unwrap();
        let ll = dyad_loglik(DyadOutcome::new(true, false), t1, t2, r, mu);
        assert!((ll - p.p10.ln()).abs() < 1e-12);
    }

    #[test]
    fn score_trivial_values() {
        let s = dyad_score(DyadOutcome::EMPTY, 0.0, 0.0, 0.0);
        assert!((s.0 + 0.5).abs() < 1e-15);
        assert!((s.1 + 0.5).abs() < 1e-15);
        assert!((s.2 + 0.25).abs() < 1e-15);
        let s = dyad_score(DyadOutcome::new(true, true), 0.0, 0.0, 0.0);
        assert!((s.0 - 0.5).abs() < 1e-15);
        assert!((s.1 - 0.5).abs() < 1e-15);
        assert!((s.2 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn network_rejects_bad_edges() {
        assert!(Network::from_edges(3, [(0, 0)]).is_err());
        assert!(Network::from_edges(3, [(0, 3)]).is_err());
        assert!(Network::from_edges(3, [(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn network_dyad_lookup() {
        let net = Network::from_edges(3, [(0, 1), (1, 0), (2, 0)]).unwrap();
        assert_eq!(net.dyad(0, 1), DyadOutcome::new(true, true));
        assert_eq!(net.dyad(0, 2), DyadOutcome::new(false, true));
        assert_eq!(net.dyad(2, 0), DyadOutcome::new(true, false));
        assert_eq!(net.dyad(1, 2), DyadOutcome::EMPTY);
        assert_eq!(net.directed_edge_count(), 3);
    }

    #[test]
    fn edge_list_round_trip() {
        let net = Network::from_edges(4, [(0, 1), (3, 2), (1, 0)]).unwrap();
        let text = net.to_edge_list();
        assert!(text.starts_with("n 4\n"));
        let back = Network::parse_edge_list(&text, "mem").unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn edge_list_parse_errors_carry_line_numbers() {
        let err = Network::parse_edge_list("n 3\n1 2\n4 1\n", "net.txt").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("net.txt:3"), "{msg}");
    }

    #[test]
    fn node_loglik_single_dyad() {
        let net = Network::from_edges(2, []).unwrap();
        let params = NodeParams::zeros(2);
        let globals = GlobalParams::dense(0.0);
        let ll = node_loglik(&net, 0, &params, &globals);
        assert!((ll + 4.0f64.ln()).abs() < 1e-14);
        assert!((total_loglik(&net, &params, &globals) - ll).abs() < 1e-14);
    }

    #[test]
    fn node_logliks_double_count_total() {
        let net = Network::from_edges(3, [(0, 1), (2, 1)]).unwrap();
        let params = NodeParams::new(vec![0.1, -0.2, 0.4], vec![0.3, 0.0, -0.5]).unwrap();
        let globals = GlobalParams { rho: 0.25, mu: 0.8 };
        let total = total_loglik(&net, &params, &globals);
        let node_sum: f64 = (0..3).map(|i| node_loglik(&net, i, &params, &globals)).sum();
        assert!((node_sum - 2.0 * total).abs() < 1e-12);
    }

    #[test]
    fn hessian_is_symmetric_and_negative_at_zero() {
        let net = Network::from_edges(2, []).unwrap();
        let params = NodeParams::zeros(2);
        let globals = GlobalParams::dense(0.0);
        let h = node_hessian(&net, 0, &params, &globals);
        assert!(h.aa < 0.0);
        assert!(h.bb < 0.0);
    }

    #[test]
    fn rank_diagnostic_positive_at_zero() {
        let s = information_rank_diagnostic(0.0, 0.0, 0.0);
        assert!(s > 0.3, "smallest singular value {s}");
    }

    #[test]
    fn information_rows_have_mean_zero() {
        let (t1, t2, r) = (0.4, -0.9, 0.7);
        let p = dyad_pmf_dense(t1, t2, r);
        let m = information_matrix(t1, t2, r);
        let g = [p.p00, p.p10, p.p01, p.p11];
        for k in 0..3 {
            let mean: f64 = (0..4).map(|s| g[s] * m[s][k]).sum();
            assert!(mean.abs() < 1e-14, "column {k} mean {mean}");
        }
    }
}
