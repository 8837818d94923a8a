//! Uniform interpolation grids and Gaussian-KDE probability mass functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A uniform grid of `n_q` states spanning `[lo, hi]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedSupport {
    states: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl InterpolatedSupport {
    /// Grid with `n_q` states from `lo` to `hi`. State `i` (0-based) is
    /// `lo + i (hi - lo) / (n_q - 1)`; the last state is `hi` exactly.
    pub fn uniform(lo: f64, hi: f64, n_q: usize) -> Result<Self> {
        if n_q < 2 {
            return Err(Error::InvalidGridSize(n_q));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFiniteValue("grid bounds".into()));
        }
        if hi <= lo {
            return Err(Error::DegenerateRange { count: n_q, value: lo });
        }
        let step = (hi - lo) / (n_q - 1) as f64;
        let states = (0..n_q)
            .map(|i| if i + 1 == n_q { hi } else { lo + i as f64 * step })
            .collect();
        Ok(Self { states, lo, hi })
    }

    /// Rebuilds a grid from stored states, checking that they are uniform
    /// to within `1e-12` of the spacing.
    pub fn from_states(states: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(Error::InvalidGridSize(n));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("grid states".into()));
        }
        let (lo, hi) = (states[0], states[n - 1]);
        if hi <= lo {
            return Err(Error::DegenerateRange { count: n, value: lo });
        }
        let step = (hi - lo) / (n - 1) as f64;
        let tol = 1e-12 * step.max(lo.abs().max(hi.abs()));
        for (i, &z) in states.iter().enumerate() {
            if (z - (lo + i as f64 * step)).abs() > tol {
                return Err(Error::InvalidMass(format!("grid state {i} breaks uniform spacing")));
            }
        }
        Ok(Self { states, lo, hi })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    /// Index `q` of the round-down state (`states[q] <= x < states[q+1]`)
    /// for `x` in `[lo, hi)`; values at or above `hi` map to the last state
    /// and values below `lo` to the first.
    pub fn round_down(&self, x: f64) -> usize {
        let n = self.len();
        if x >= self.hi {
            return n - 1;
        }
        if x <= self.lo {
            return 0;
        }
        let guess = ((x - self.lo) / self.spacing()).floor();
        let mut q = (guess.max(0.0) as usize).min(n - 2);
        while q > 0 && self.states[q] > x {
            q -= 1;
        }
        while q + 1 < n - 1 && self.states[q + 1] <= x {
            q += 1;
        }
        q
    }
}

/// Builds the grid spanning the range of `values`.
pub fn build_support(values: &[f64], n_q: usize) -> Result<InterpolatedSupport> {
    if n_q < 2 {
        return Err(Error::InvalidGridSize(n_q));
    }
    if values.is_empty() {
        return Err(Error::TooFewValues { needed: 1, found: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("support values".into()));
    }
    let (lo, hi) = min_max(values);
    if hi <= lo {
        return Err(Error::DegenerateRange {
            count: values.len(),
            value: lo,
        });
    }
    InterpolatedSupport::uniform(lo, hi, n_q)
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// A probability mass function on an [`InterpolatedSupport`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub(crate) support: Arc<InterpolatedSupport>,
    pub(crate) mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Arc<InterpolatedSupport>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != support.len() {
            return Err(Error::LengthMismatch {
                what: "mass",
                expected: support.len(),
                found: mass.len(),
            });
        }
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidMass(format!("weight {i} is {m}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMass(format!("weights sum to {total}")));
        }
        Ok(Self { support, mass })
    }

    /// Normalizes nonnegative `weights` to unit mass.
    pub fn from_weights(support: Arc<InterpolatedSupport>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMass(format!("weights sum to {total}")));
        }
        Self::new(support, weights.into_iter().map(|w| w / total).collect())
    }

    /// Unit mass on state `index`.
    pub fn point_mass(support: Arc<InterpolatedSupport>, index: usize) -> Result<Self> {
        let mut mass = vec![0.0; support.len()];
        *mass.get_mut(index).ok_or(Error::InvalidMass(format!("state {index} out of range")))? = 1.0;
        Self::new(support, mass)
    }

    pub fn support(&self) -> &Arc<InterpolatedSupport> {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.states().iter().zip(&self.mass).map(|(z, m)| z * m).sum()
    }

    /// Cumulative mass at each state.
    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    pub fn same_support(&self, other: &DiscreteDistribution) -> bool {
        Arc::ptr_eq(&self.support, &other.support) || self.support == other.support
    }
}

/// Gaussian kernel bandwidth, in feature units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidBandwidth(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^(-1/5)`, floored at
/// `1e-6 (max - min)`. When the IQR is zero the standard deviation alone is
/// used.
pub fn silverman_bandwidth(values: &[f64]) -> Result<Bandwidth> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues { needed: 2, found: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("bandwidth sample".into()));
    }
    let (lo, hi) = min_max(values);
    if hi <= lo {
        return Err(Error::TooFewValues { needed: 2, found: 1 });
    }
    let sd = sample_sd(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    Bandwidth::new(h.max(1e-6 * (hi - lo)))
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// KDE pmf: the Gaussian kernel sum evaluated at each grid state and
/// normalized over the grid. Weights are accumulated in log space so the
/// result stays well defined when `h` is much smaller than the grid spacing.
pub fn kde_pmf(
    values: &[f64],
    support: &Arc<InterpolatedSupport>,
    h: Bandwidth,
) -> Result<DiscreteDistribution> {
    if values.is_empty() {
        return Err(Error::TooFewValues { needed: 1, found: 0 });
    }
    let inv = 1.0 / (2.0 * h.value() * h.value());
    let log_weights: Vec<f64> = support
        .states()
        .iter()
        .map(|&z| {
            let nearest = values
                .iter()
                .map(|x| (z - x) * (z - x))
                .fold(f64::INFINITY, f64::min);
            let sum: f64 = values
                .iter()
                .map(|x| (-((z - x) * (z - x) - nearest) * inv).exp())
                .sum();
            sum.ln() - nearest * inv
        })
        .collect();
    let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = log_weights.iter().map(|lw| (lw - top).exp()).collect();
    DiscreteDistribution::from_weights(Arc::clone(support), weights)
}
