//! Independent optimization oracles for the sub-solvers and the full
//! coordinate-descent fit: 1-D root bracketing, golden-section search,
//! multi-start cyclic grid search, and plain recomputation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use recipnet::estimator::{
    coordinate_descent_fit, fit_statistics, gradient_node_update, loglik_of, newton_node_update,
    rho_update, FitConfig, MuMode, SubSolver,
};
use recipnet::model::{
    dyad_loglik, node_gradient, node_loglik, total_loglik, GlobalParams, Network, NodeParams,
};
use recipnet::sampler::{gen_params, sample_network, ParamKind, ParamSpec, Seed};

fn instance(n: usize, seed: u64) -> (Network, NodeParams, GlobalParams) {
    let spec = ParamSpec::new(ParamKind::Group1, n);
    let (p, g) = gen_params(&spec, Seed(seed)).unwrap();
    let net = sample_network(&p, &g, Seed(seed ^ 0xabcd)).unwrap();
    (net, p, g)
}

/// Bisection on a strictly decreasing function over a sign-changing bracket.
fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) > 0.0 && f(hi) < 0.0, "bracket does not straddle a root");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn newton_node_update_finds_the_stationary_point() {
    let (net, params, globals) = instance(8, 21);
    let i = 3;
    let upd = newton_node_update(&net, i, &params, &globals, 1e-10, 200);
    assert!(!upd.cap_hit);
    let mut at = params.clone();
    at.alpha[i] = upd.alpha_i;
    at.beta[i] = upd.beta_i;
    let (ga, gb) = node_gradient(&net, i, &at, &globals);
    assert!(ga.abs() < 1e-8, "alpha gradient {ga}");
    assert!(gb.abs() < 1e-8, "beta gradient {gb}");

    // Independent check: with beta_i held at the returned value, the root of
    // d l_i / d alpha_i bracketed around the return matches it.
    let grad_a = |a: f64| {
        let mut p = at.clone();
        p.alpha[i] = a;
        node_gradient(&net, i, &p, &globals).0
    };
    let root = bisect_root(grad_a, upd.alpha_i - 1.0, upd.alpha_i + 1.0);
    assert!((root - upd.alpha_i).abs() < 1e-7, "root {root} vs {}", upd.alpha_i);
    let grad_b = |b: f64| {
        let mut p = at.clone();
        p.beta[i] = b;
        node_gradient(&net, i, &p, &globals).1
    };
    let root = bisect_root(grad_b, upd.beta_i - 1.0, upd.beta_i + 1.0);
    assert!((root - upd.beta_i).abs() < 1e-7);
}

#[test]
fn single_observation_node_is_degenerate_but_handled() {
    // One dyad observed (1,1) at mu = 1 has no finite maximizer in
    // (alpha_1, beta_1): the gradient stays positive and vanishes only at
    // infinity. The update must stay finite, monotone, and report itself.
    let net = Network::from_edges(2, [(0, 1), (1, 0)]).unwrap();
    let params = NodeParams::zeros(2);
    let globals = GlobalParams::dense(0.0);
    let before = node_loglik(&net, 0, &params, &globals);
    let upd = newton_node_update(&net, 0, &params, &globals, 1e-4, 50);
    assert!(upd.alpha_i.is_finite() && upd.beta_i.is_finite());
    assert!(upd.alpha_i > 0.0);
    let mut after = params.clone();
    after.alpha[0] = upd.alpha_i;
    after.beta[0] = upd.beta_i;
    assert!(node_loglik(&net, 0, &after, &globals) >= before);
}

#[test]
fn solvers_agree_on_the_node_subproblem() {
    for seed in [31u64, 32, 33] {
        let (net, params, globals) = instance(10, seed);
        let i = 1;
        let newton = newton_node_update(&net, i, &params, &globals, 1e-8, 200);
        let gradient = gradient_node_update(&net, i, &params, &globals, 1e-6, None, 5000);
        assert!(
            (newton.alpha_i - gradient.alpha_i).abs() < 1e-3,
            "seed {seed}: {} vs {}",
            newton.alpha_i,
            gradient.alpha_i
        );
        assert!((newton.beta_i - gradient.beta_i).abs() < 1e-3);
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    while hi - lo > tol {
        let c = hi - phi * (hi - lo);
        let d = lo + phi * (hi - lo);
        if f(c) >= f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn rho_update_matches_golden_section() {
    for seed in [41u64, 42, 43] {
        let (net, params, globals) = instance(20, seed);
        let from_zero = GlobalParams {
            rho: 0.0,
            mu: globals.mu,
        };
        let upd = rho_update(&net, &params, &from_zero, SubSolver::Newton, 1e-8, None, 200);
        let best = golden_max(
            |r| loglik_of(&net, &params, r, globals.mu),
            -3.0,
            3.0,
            1e-8,
        );
        assert!(
            (upd.rho - best).abs() < 1e-3,
            "seed {seed}: {} vs {best}",
            upd.rho
        );
        let (d1, _) = recipnet::model::rho_derivatives(
            &net,
            &params,
            &GlobalParams {
                rho: upd.rho,
                mu: globals.mu,
            },
        );
        assert!(d1.abs() < 1e-6 || upd.cap_hit);
    }
}

/// Cyclic per-coordinate exhaustive search over a step-0.05 grid on
/// [-2, 2] for every free coordinate (alpha, beta, rho), restarted from
/// several points; returns the best total log-likelihood found.
fn grid_search_oracle(net: &Network, mu: f64, starts: &[(Vec<f64>, Vec<f64>, f64)]) -> f64 {
    let n = net.n();
    let grid: Vec<f64> = (0..=80).map(|k| -2.0 + 0.05 * k as f64).collect();
    let eval = |alpha: &[f64], beta: &[f64], rho: f64| {
        let p = NodeParams {
            alpha: alpha.to_vec(),
            beta: beta.to_vec(),
        };
        loglik_of(net, &p, rho, mu)
    };
    let mut best_overall = f64::NEG_INFINITY;
    for (a0, b0, r0) in starts {
        let mut alpha: Vec<f64> = a0.clone();
        let mut beta: Vec<f64> = b0.clone();
        let mut rho = *r0;
        let mut ll = eval(&alpha, &beta, rho);
        for _sweep in 0..100 {
            let mut improved = false;
            for c in 0..(2 * n + 1) {
                let mut best_v = if c < n {
                    alpha[c]
                } else if c < 2 * n {
                    beta[c - n]
                } else {
                    rho
                };
                let mut best_ll = ll;
                for &v in &grid {
                    let cand = if c < n {
                        let old = alpha[c];
                        alpha[c] = v;
                        let l = eval(&alpha, &beta, rho);
                        alpha[c] = old;
                        l
                    } else if c < 2 * n {
                        let old = beta[c - n];
                        beta[c - n] = v;
                        let l = eval(&alpha, &beta, rho);
                        beta[c - n] = old;
                        l
                    } else {
                        eval(&alpha, &beta, v)
                    };
                    if cand > best_ll {
                        best_ll = cand;
                        best_v = v;
                    }
                }
                if best_ll > ll {
                    improved = true;
                    ll = best_ll;
                    if c < n {
                        alpha[c] = best_v;
                    } else if c < 2 * n {
                        beta[c - n] = best_v;
                    } else {
                        rho = best_v;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        best_overall = best_overall.max(ll);
    }
    best_overall
}

fn snap(v: f64) -> f64 {
    ((v / 0.05).round() * 0.05).clamp(-2.0, 2.0)
}

#[test]
fn fit_dominates_grid_search_on_tiny_instances() {
    let mut rng = ChaCha20Rng::seed_from_u64(7001);
    for rep in 0..6 {
        let (net, truth, globals) = instance(3, 100 + rep);
        let cfg = FitConfig::newton_defaults().with_mu(MuMode::Known(globals.mu));
        let fit = coordinate_descent_fit(&net, &truth, globals.rho, &cfg).unwrap();
        let fit_ll = loglik_of(&net, &fit.params, fit.rho, globals.mu);

        let mut starts = vec![
            (vec![0.0; 3], vec![0.0; 3], 0.0),
            (
                truth.alpha.iter().copied().map(snap).collect(),
                truth.beta.iter().copied().map(snap).collect(),
                snap(globals.rho),
            ),
            (
                fit.params.alpha.iter().copied().map(snap).collect(),
                fit.params.beta.iter().copied().map(snap).collect(),
                snap(fit.rho),
            ),
        ];
        for _ in 0..2 {
            starts.push((
                (0..3).map(|_| snap(rng.random_range(-1.0..1.0))).collect(),
                (0..3).map(|_| snap(rng.random_range(-1.0..1.0))).collect(),
                snap(rng.random_range(-1.0..1.0)),
            ));
        }
        let oracle = grid_search_oracle(&net, globals.mu, &starts);
        assert!(
            fit_ll >= oracle - 1e-6,
            "rep {rep}: fit {fit_ll} vs oracle {oracle}"
        );
    }
}

#[test]
fn uniform_error_shrinks_from_n100_to_n400() {
    let median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let run = |n: usize| {
        let spec = ParamSpec::new(ParamKind::Group1, n);
        let (truth, globals) = gen_params(&spec, Seed(900)).unwrap();
        let cfg = FitConfig::newton_defaults().with_mu(MuMode::Known(globals.mu));
        (0..5u64)
            .map(|r| {
                let net = sample_network(&truth, &globals, Seed(7000 + r)).unwrap();
                let fit = coordinate_descent_fit(&net, &truth, globals.rho, &cfg).unwrap();
                assert!(fit.converged, "n = {n}, rep {r}");
                let (_, adj_uniform) =
                    recipnet::metrics::shift_adjusted_errors(&fit.params, &truth);
                assert!(adj_uniform.is_finite());
                adj_uniform
            })
            .collect::<Vec<_>>()
    };
    let small = median(run(100));
    let large = median(run(400));
    assert!(
        large < small,
        "uniform error did not shrink: n=100 {small}, n=400 {large}"
    );
}

#[test]
fn total_loglik_matches_naive_per_dyad_summation() {
    let (net, params, globals) = instance(50, 55);
    let fast = total_loglik(&net, &params, &globals);
    let mut naive = 0.0;
    for i in 0..50usize {
        for j in (i + 1)..50 {
            naive += dyad_loglik(
                net.dyad(i, j),
                params.alpha[i] + params.beta[j],
                params.alpha[j] + params.beta[i],
                globals.rho,
                globals.mu,
            );
        }
    }
    assert!((fast - naive).abs() < 1e-9, "{fast} vs {naive}");

    // node_loglik agrees with its own per-dyad summation on a small case
    let (net5, p5, g5) = instance(5, 56);
    for i in 0..5usize {
        let mut naive = 0.0;
        for j in 0..5 {
            if j != i {
                naive += dyad_loglik(
                    net5.dyad(i, j),
                    p5.alpha[i] + p5.beta[j],
                    p5.alpha[j] + p5.beta[i],
                    g5.rho,
                    g5.mu,
                );
            }
        }
        let got = node_loglik(&net5, i, &p5, &g5);
        assert!((got - naive).abs() < 1e-11);
    }
}

#[test]
fn converged_param_change_residual_is_below_tolerance() {
    let (net, truth, globals) = instance(40, 77);
    let cfg = FitConfig::newton_defaults().with_mu(MuMode::Known(globals.mu));
    let fit = coordinate_descent_fit(&net, &truth, globals.rho, &cfg).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.outer_iters, fit.residual_trace.len());
    assert!(fit.residual_trace.iter().all(|r| r.is_finite()));
    assert!(*fit.residual_trace.last().unwrap() < cfg.outer_tol);
}

#[test]
fn statistics_columns_recompute_from_results() {
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    for _ in 0..5 {
        let (net, truth, globals) = instance(30, rng.random());
        let cfg = FitConfig::newton_defaults().with_mu(MuMode::Known(globals.mu));
        let fit = coordinate_descent_fit(&net, &truth, globals.rho, &cfg).unwrap();
        let stats = fit_statistics(&fit.params, fit.rho, &truth, globals.rho);
        let n = 30f64;
        let s = n.sqrt();
        let mid = 14usize; // ceil(30 / 2) = 15, 0-based 14
        assert_eq!(stats.stat_a2, s * (fit.params.alpha[1] - truth.alpha[1]));
        assert_eq!(stats.stat_amid, s * (fit.params.alpha[mid] - truth.alpha[mid]));
        assert_eq!(stats.stat_an, s * (fit.params.alpha[29] - truth.alpha[29]));
        assert_eq!(stats.stat_b1, s * (fit.params.beta[0] - truth.beta[0]));
        assert_eq!(stats.stat_bmid, s * (fit.params.beta[mid] - truth.beta[mid]));
        assert_eq!(stats.stat_bn, s * (fit.params.beta[29] - truth.beta[29]));
        assert_eq!(stats.stat_rho, n * (fit.rho - globals.rho));
    }
}

#[test]
fn fit_config_deserializes_with_defaults() {
    let cfg: FitConfig = serde_json::from_str(r#"{"subsolver": "gradient"}"#).unwrap();
    assert_eq!(cfg.subsolver, SubSolver::Gradient);
    assert_eq!(cfg.outer_tol, 1e-3);
    let cfg: FitConfig =
        serde_json::from_str(r#"{"mu_mode": {"known": 0.25}, "outer_tol": 0.05}"#).unwrap();
    assert_eq!(cfg.mu_mode, MuMode::Known(0.25));
    assert_eq!(cfg.outer_tol, 0.05);
    let cfg: FitConfig = serde_json::from_str(r#"{"mu_mode": "plugin"}"#).unwrap();
    assert_eq!(cfg.mu_mode, MuMode::Plugin);
}
