//! Per-cell summaries: location/spread of every error column, Q-Q
//! correlation of the replication statistics against the standard normal,
//! and theoretical rate values for overlay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use recipnet::estimator::FitStatistics;
use recipnet::metrics::{rate_predictor, RateKind};
use recipnet::sampler::{ParamKind, ParamSpec};

use crate::experiment::Row;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub study: String,
    pub group: String,
    pub n: usize,
    pub e: f64,
    pub replications: usize,
    pub converged: usize,
    pub columns: BTreeMap<String, ColumnStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qq_correlations: Option<BTreeMap<String, f64>>,
    /// Rate expressions with unit constants; shapes for log-log overlays,
    /// not absolute predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_overlay_shape_only: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len();
    if m == 0 {
        return 0.0;
    }
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn column_stats(values: &[f64]) -> Option<ColumnStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let med = if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    Some(ColumnStats {
        count: v.len(),
        mean,
        median: med,
        iqr: quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25),
    })
}

/// Sorted (theoretical, empirical) quantile pairs against the standard
/// normal, plotting positions (i + 0.5) / m.
pub fn qq_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    let normal = Normal::new(0.0, 1.0).unwrap();
    v.iter()
        .enumerate()
        .map(|(i, &x)| (normal.inverse_cdf((i as f64 + 0.5) / m as f64), x))
        .collect()
}

/// Pearson correlation between the sorted sample and the standard normal
/// quantiles. Scale-free, so it needs no variance normalization of the
/// statistics. Returns 0 for degenerate samples.
pub fn qq_correlation(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let pts = qq_points(values);
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_e = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut stt, mut see, mut ste) = (0.0, 0.0, 0.0);
    for (t, e) in &pts {
        let dt = t - mean_t;
        let de = e - mean_e;
        stt += dt * dt;
        see += de * de;
        ste += dt * de;
    }
    if stt <= 0.0 || see <= 0.0 {
        return 0.0;
    }
    ste / (stt * see).sqrt()
}

fn mu_for(group: &str, n: usize) -> Option<f64> {
    let kind = match group {
        "group1" => ParamKind::Group1,
        "group2" => ParamKind::Group2,
        "group3" => ParamKind::Group3,
        "sparse_uniform" => ParamKind::SparseUniform,
        _ => return None,
    };
    Some(ParamSpec::new(kind, n).mu())
}

/// Per (study, group, n, e) cell: location/spread of each error column,
/// Q-Q correlations when statistics are present, and rate overlays.
pub fn summarize(rows: &[Row]) -> Summary {
    let mut order: Vec<(String, String, usize, f64)> = Vec::new();
    for row in rows {
        let key = (
            row.study.label().to_string(),
            row.group.clone(),
            row.n,
            row.e,
        );
        if !order.contains(&key) {
            order.push(key);
        }
    }
    let mut cells = Vec::new();
    for (study, group, n, e) in order {
        let cell_rows: Vec<&Row> = rows
            .iter()
            .filter(|r| {
                r.study.label() == study && r.group == group && r.n == n && r.e == e
            })
            .collect();
        let mut columns = BTreeMap::new();
        let mut add = |name: &str, values: Vec<f64>| {
            if let Some(stats) = column_stats(&values) {
                columns.insert(name.to_string(), stats);
            }
        };
        add(
            "rho_hat",
            cell_rows.iter().filter_map(|r| r.rho_hat).collect(),
        );
        let report_col = |f: fn(&recipnet::metrics::ErrorReport) -> f64| -> Vec<f64> {
            cell_rows
                .iter()
                .filter_map(|r| r.report.as_ref().map(f))
                .collect()
        };
        add("rho_err_sq", report_col(|x| x.rho_error_sq));
        add("delta_alpha", report_col(|x| x.delta_alpha));
        add("delta_beta", report_col(|x| x.delta_beta));
        add("mse_bound", report_col(|x| x.mse_bound));
        add("uniform_bound", report_col(|x| x.uniform_bound));
        add("adj_mse", report_col(|x| x.shift_adjusted_mse));
        add("adj_uniform", report_col(|x| x.shift_adjusted_uniform));
        let qq = {
            let mut map = BTreeMap::new();
            for (k, label) in FitStatistics::LABELS.iter().enumerate() {
                let vals: Vec<f64> = cell_rows
                    .iter()
                    .filter_map(|r| r.stats.map(|s| s.as_array()[k]))
                    .collect();
                if vals.len() >= 3 {
                    map.insert(label.to_string(), qq_correlation(&vals));
                }
            }
            if map.is_empty() {
                None
            } else {
                Some(map)
            }
        };
        let overlay = mu_for(&group, n).map(|mu| {
            RateKind::ALL
                .iter()
                .map(|k| (k.label().to_string(), rate_predictor(*k, n, mu)))
                .collect::<BTreeMap<_, _>>()
        });
        cells.push(CellSummary {
            study,
            group,
            n,
            e,
            replications: cell_rows.len(),
            converged: cell_rows.iter().filter(|r| r.converged).count(),
            columns,
            qq_correlations: qq,
            rate_overlay_shape_only: overlay,
        });
    }
    Summary { cells }
}
