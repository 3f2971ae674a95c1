//! Seeded generation of parameter sets and networks.
//!
//! Network sampling is keyed per dyad: the draw for the unordered pair
//! (i, j) depends only on (seed, i, j), never on iteration order or thread
//! count, so replications replay bit-identically everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{kernel, GlobalParams, Network, NodeParams};
use crate::{Error, Result};

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full avalanche on 64 bits.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Replication seed. Identical seeds yield bit-identical draws across runs
/// and platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives a child seed from a list of stream labels. Used to key
    /// parameter draws, per-replication networks, and init perturbations
    /// off one master seed.
    pub fn derive(&self, parts: &[u64]) -> Seed {
        let mut s = self.0;
        for &p in parts {
            s = mix64(s.wrapping_add(GAMMA).wrapping_add(p.wrapping_mul(0xd134_2543_de82_ef95)));
        }
        Seed(s)
    }

    /// One uniform draw in [0, 1) from this seed's own stream.
    #[inline(always)]
    pub(crate) fn unit_f64(&self) -> f64 {
        (mix64(self.0) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }
}

/// Which parameter-generation law to use.
///
/// The three experiment groups fix the reciprocity coefficient: 0.6, 0.3,
/// and -0.7 respectively; the sparse group uses 0.3 with
/// mu = min(1, 10 n^(-2/3)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    /// alpha_i (i != 1), beta_i iid Uniform[-1, 1]; rho = 0.6; mu = 1.
    Group1,
    /// alpha_i (i != 1), beta_i iid standard normal; rho = 0.3; mu = 1.
    Group2,
    /// alpha_i in {0.3, 0.7}, beta_i in {0.4, 0.6} equiprobable;
    /// rho = -0.7; mu = 1.
    Group3,
    /// Uniform[-1, 1] draws with rho = 0.3 and mu = min(1, 10 n^(-2/3)).
    SparseUniform,
    /// Caller-supplied parameters, passed through unchanged.
    Explicit {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        rho: f64,
        mu: f64,
    },
}

impl ParamKind {
    pub fn label(&self) -> &'static str {
        match self {
            ParamKind::Group1 => "group1",
            ParamKind::Group2 => "group2",
            ParamKind::Group3 => "group3",
            ParamKind::SparseUniform => "sparse_uniform",
            ParamKind::Explicit { .. } => "explicit",
        }
    }

    /// Stable numeric id used in seed derivations.
    pub fn stream_id(&self) -> u64 {
        match self {
            ParamKind::Group1 => 1,
            ParamKind::Group2 => 2,
            ParamKind::Group3 => 3,
            ParamKind::SparseUniform => 4,
            ParamKind::Explicit { .. } => 5,
        }
    }
}

/// Parameter-set specification for one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(flatten)]
    pub kind: ParamKind,
    pub n: usize,
    /// Declared bound on |alpha_i|, |beta_i|; metadata for grid building.
    #[serde(default = "default_bound")]
    pub bound: f64,
    /// Overrides the kind-derived sparsity level when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

fn default_bound() -> f64 {
    1.0
}

impl ParamSpec {
    pub fn new(kind: ParamKind, n: usize) -> Self {
        Self {
            kind,
            n,
            bound: 1.0,
            mu: None,
        }
    }

    pub fn rho(&self) -> f64 {
        match &self.kind {
            ParamKind::Group1 => 0.6,
            ParamKind::Group2 => 0.3,
            ParamKind::Group3 => -0.7,
            ParamKind::SparseUniform => 0.3,
            ParamKind::Explicit { rho, .. } => *rho,
        }
    }

    /// Sparsity level: 1 for the dense groups, min(1, 10 n^(-2/3)) for the
    /// sparse group, clamped so small n keeps a valid pmf.
    pub fn mu(&self) -> f64 {
        if let Some(mu) = self.mu {
            return mu;
        }
        match &self.kind {
            ParamKind::Group1 | ParamKind::Group2 | ParamKind::Group3 => 1.0,
            ParamKind::SparseUniform => (10.0 * (self.n as f64).powf(-2.0 / 3.0)).min(1.0),
            ParamKind::Explicit { mu, .. } => *mu,
        }
    }
}

/// Draws a parameter set. alpha_1 = 0 in every generated vector.
pub fn gen_params(spec: &ParamSpec, seed: Seed) -> Result<(NodeParams, GlobalParams)> {
    let n = spec.n;
    if n < 2 {
        return Err(Error::InvalidParams("need n >= 2".to_string()));
    }
    let globals = GlobalParams::new(spec.rho(), spec.mu())?;
    let params = match &spec.kind {
        ParamKind::Explicit { alpha, beta, .. } => NodeParams::new(alpha.clone(), beta.clone())?,
        kind => {
            let mut rng = seed.rng();
            let mut alpha = vec![0.0; n];
            let mut beta = vec![0.0; n];
            match kind {
                ParamKind::Group1 | ParamKind::SparseUniform => {
                    for a in alpha.iter_mut().skip(1) {
                        *a = rng.random_range(-1.0..1.0);
                    }
                    for b in beta.iter_mut() {
                        *b = rng.random_range(-1.0..1.0);
                    }
                }
                ParamKind::Group2 => {
                    for a in alpha.iter_mut().skip(1) {
                        *a = rng.sample(StandardNormal);
                    }
                    for b in beta.iter_mut() {
                        *b = rng.sample(StandardNormal);
                    }
                }
                ParamKind::Group3 => {
                    for a in alpha.iter_mut().skip(1) {
                        *a = if rng.random_bool(0.5) { 0.3 } else { 0.7 };
                    }
                    for b in beta.iter_mut() {
                        *b = if rng.random_bool(0.5) { 0.4 } else { 0.6 };
                    }
                }
                ParamKind::Explicit { .. } => unreachable!(),
            }
            NodeParams::new(alpha, beta)?
        }
    };
    Ok((params, globals))
}

/// Draws one network. Each unordered pair is sampled by inverse CDF from
/// its own substream keyed by (seed, i, j).
pub fn sample_network(params: &NodeParams, globals: &GlobalParams, seed: Seed) -> Result<Network> {
    let n = params.len();
    let mu = globals.mu;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let k = kernel(
                params.alpha[i] + params.beta[j],
                params.alpha[j] + params.beta[i],
                globals.rho,
            );
            let p00 = (1.0 - mu) + mu * k.g00;
            if p00 <= 1e-12 {
                return Err(Error::DegeneratePmf { p00, mu });
            }
            let u = seed.derive(&[i as u64, j as u64]).unit_f64();
            let c1 = p00 + mu * k.g10;
            let c2 = c1 + mu * k.g01;
            if u < p00 {
                // empty dyad
            } else if u < c1 {
                edges.push((i as u32, j as u32));
            } else if u < c2 {
                edges.push((j as u32, i as u32));
            } else {
                edges.push((i as u32, j as u32));
                edges.push((j as u32, i as u32));
            }
        }
    }
    Network::from_edges(n, edges)
}

/// Adds iid Uniform[-magnitude, magnitude] noise to every coordinate.
/// Used to build the perturbed inits of the overfitting study.
pub fn perturb_params(params: &NodeParams, magnitude: f64, seed: Seed) -> NodeParams {
    if magnitude == 0.0 {
        return params.clone();
    }
    let mut rng = seed.rng();
    let mut out = params.clone();
    for a in out.alpha.iter_mut() {
        *a += rng.random_range(-magnitude..magnitude);
    }
    for b in out.beta.iter_mut() {
        *b += rng.random_range(-magnitude..magnitude);
    }
    out
}
