//! Fairness measurements: the symmetrized-KL `s|u`-dependence metric and
//! disparate impact.

use serde::{Deserialize, Serialize};

use crate::density::{min_max, silverman_bandwidth};
use crate::error::{Error, Result};
use crate::model::{partition_groups, Dataset};

pub const DEFAULT_EVAL_GRID: usize = 1024;
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-12;

/// Kernel contributions beyond this many bandwidths are below 1e-16 of the
/// peak and skipped.
const KERNEL_CUTOFF: f64 = 8.6;

/// Gaussian KDE with a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    sorted: Vec<f64>,
    h: f64,
}

impl GaussianKde {
    pub fn new(values: &[f64], h: f64) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted, h }
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn density(&self, x: f64) -> f64 {
        let reach = KERNEL_CUTOFF * self.h;
        let lo = self.sorted.partition_point(|&v| v < x - reach);
        let hi = self.sorted.partition_point(|&v| v <= x + reach);
        let inv = 1.0 / (2.0 * self.h * self.h);
        let sum: f64 = self.sorted[lo..hi]
            .iter()
            .map(|v| (-(x - v) * (x - v) * inv).exp())
            .sum();
        sum / (self.sorted.len() as f64 * self.h * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// `0.5 KL(f0 || f1) + 0.5 KL(f1 || f0)` between the Silverman-bandwidth
/// Gaussian KDEs of two samples, by trapezoidal quadrature on `eval_grid_size`
/// points spanning both samples padded by three bandwidths. Densities are
/// floored at `floor` before taking logs.
pub fn symmetrized_kld(sample0: &[f64], sample1: &[f64], eval_grid_size: usize, floor: f64) -> Result<f64> {
    if eval_grid_size < 2 {
        return Err(Error::InvalidGridSize(eval_grid_size));
    }
    if !(floor.is_finite() && floor > 0.0) {
        return Err(Error::Config(format!("density floor must be positive, got {floor}")));
    }
    let h0 = silverman_bandwidth(sample0)?.value();
    let h1 = silverman_bandwidth(sample1)?.value();
    let f0 = GaussianKde::new(sample0, h0);
    let f1 = GaussianKde::new(sample1, h1);
    let (lo0, hi0) = min_max(sample0);
    let (lo1, hi1) = min_max(sample1);
    let pad = 3.0 * h0.max(h1);
    let lo = lo0.min(lo1) - pad;
    let hi = hi0.max(hi1) + pad;
    Ok(symmetrized_kld_on_grid(&f0, &f1, lo, hi, eval_grid_size, floor))
}

pub(crate) fn symmetrized_kld_on_grid(
    f0: &GaussianKde,
    f1: &GaussianKde,
    lo: f64,
    hi: f64,
    n: usize,
    floor: f64,
) -> f64 {
    let step = (hi - lo) / (n - 1) as f64;
    let integrand = |x: f64| {
        let a = f0.density(x).max(floor);
        let b = f1.density(x).max(floor);
        (a - b) * (a.ln() - b.ln())
    };
    let interior: f64 = (1..n - 1).map(|i| integrand(lo + i as f64 * step)).sum();
    let total = step * (interior + 0.5 * (integrand(lo) + integrand(hi)));
    (0.5 * total).max(0.0)
}

/// Estimator settings recorded with a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub eval_grid_size: usize,
    pub floor: f64,
    pub bandwidth_rule: BandwidthRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    Silverman,
}

/// `E_{u,k}` per group and feature, plus the `u`-weighted per-feature `E_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub d: usize,
    pub feature_names: Vec<String>,
    /// `E_{u,k}` indexed `[u][k]`; `None` when a cell is empty or degenerate.
    pub per_group: [Vec<Option<f64>>; 2],
    /// Empirical `Pr[u]`.
    pub group_weights: [f64; 2],
    /// `E_k = sum_u Pr[u] E_{u,k}` over defined entries.
    pub per_feature: Vec<f64>,
    /// Sum of `E_k` over features.
    pub total: f64,
    /// Cell sizes `[n_00, n_01, n_10, n_11]`.
    pub counts: [usize; 4],
    pub settings: EstimatorSettings,
}

pub fn conditional_fairness(data: &Dataset, eval_grid_size: usize, floor: f64) -> Result<FairnessReport> {
    let groups = partition_groups(data);
    let n = data.len().max(1) as f64;
    let group_weights = [groups.group_size(0) as f64 / n, groups.group_size(1) as f64 / n];
    let d = data.d();
    let mut per_group: [Vec<Option<f64>>; 2] = [vec![None; d], vec![None; d]];
    for (u, group) in (0..2u8).zip(per_group.iter_mut()) {
        for (k, entry) in group.iter_mut().enumerate() {
            let x0 = data.feature_slice(u, Some(0), k);
            let x1 = data.feature_slice(u, Some(1), k);
            if x0.is_empty() || x1.is_empty() {
                if groups.group_size(u) > 0 {
                    log::warn!("E undefined for (u={u}, k={k}): empty sensitive cell");
                }
                continue;
            }
            match symmetrized_kld(&x0, &x1, eval_grid_size, floor) {
                Ok(e) => *entry = Some(e),
                Err(Error::TooFewValues { .. }) => {
                    log::warn!("E undefined for (u={u}, k={k}): fewer than two distinct values");
                }
                Err(e) => return Err(e),
            }
        }
    }
    let per_feature: Vec<f64> = (0..d)
        .map(|k| {
            (0..2)
                .filter_map(|u| per_group[u][k].map(|e| group_weights[u] * e))
                .sum()
        })
        .collect();
    Ok(FairnessReport {
        d,
        feature_names: crate::repair::default_feature_names(d),
        total: per_feature.iter().sum(),
        per_group,
        group_weights,
        per_feature,
        counts: groups.counts(),
        settings: EstimatorSettings {
            eval_grid_size,
            floor,
            bandwidth_rule: BandwidthRule::Silverman,
        },
    })
}

/// Predicted labels aligned with a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet(Vec<u8>);

impl PredictionSet {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some((record, &value)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(Error::AttributeOutOfRange {
                record,
                attribute: "prediction",
                value: value as i64,
            });
        }
        Ok(Self(labels))
    }

    pub fn labels(&self) -> &[u8] {
        &self.0
    }
}

/// DI threshold above which a classifier counts as fair.
pub const DI_FAIR_THRESHOLD: f64 = 0.8;

/// Disparate impact within one `u` group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparateImpact {
    /// `Pr(y=1 | s=0, u)` and `Pr(y=1 | s=1, u)`; `None` for empty cells.
    pub positive_rate: [Option<f64>; 2],
    /// `None` when either rate is undefined or the `s=1` rate is zero.
    pub ratio: Option<f64>,
    pub fair: Option<bool>,
}

pub fn disparate_impact(data: &Dataset, preds: &PredictionSet) -> Result<[DisparateImpact; 2]> {
    if preds.0.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: data.len(),
            found: preds.0.len(),
        });
    }
    let groups = partition_groups(data);
    let rate = |u: u8, s: u8| {
        let cell = groups.cell(u, s);
        if cell.is_empty() {
            return None;
        }
        let positives = cell.iter().filter(|&&i| preds.0[i] == 1).count();
        Some(positives as f64 / cell.len() as f64)
    };
    let di = |u: u8| {
        let positive_rate = [rate(u, 0), rate(u, 1)];
        let ratio = match positive_rate {
            [Some(a), Some(b)] if b > 0.0 => Some(a / b),
            _ => None,
        };
        DisparateImpact {
            positive_rate,
            ratio,
            fair: ratio.map(|r| r > DI_FAIR_THRESHOLD),
        }
    };
    Ok([di(0), di(1)])
}
