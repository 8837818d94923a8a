//! Synthetic Gaussian-mixture populations and the Monte-Carlo harness for
//! repair experiments and operating-condition sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SliceId};
use crate::metrics::{conditional_fairness, DEFAULT_DENSITY_FLOOR, DEFAULT_EVAL_GRID};
use crate::model::{partition_groups, Dataset, LabeledRecord, Role, CELLS};
use crate::repair::{design_repair_model, geometric_repair, repair_dataset, Resolution};

/// What to do when a research cell comes out empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyCellPolicy {
    Error,
    /// Redraw the whole population, up to this many attempts.
    Resample(usize),
}

impl Default for EmptyCellPolicy {
    fn default() -> Self {
        EmptyCellPolicy::Resample(1000)
    }
}

/// Population model: `u ~ Bernoulli`, `s | u ~ Bernoulli`,
/// `x | u, s ~ N(mean_us, cov_us)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    /// Means in cell order `(0,0), (0,1), (1,0), (1,1)`.
    pub means: [Vec<f64>; 4],
    /// Covariances in cell order; identity when omitted.
    #[serde(default)]
    pub covariances: Option<[Vec<Vec<f64>>; 4]>,
    pub p_u0: f64,
    /// `Pr[s=0 | u]` for `u = 0, 1`.
    pub p_s0_given_u: [f64; 2],
    pub n_research: usize,
    pub n_archive: usize,
    pub seed: u64,
    #[serde(default)]
    pub empty_cell: EmptyCellPolicy,
}

impl MixtureSpec {
    /// The two-feature simulation setting: well separated `s` components in
    /// each `u` group, `Pr(u=0) = 0.5`, `Pr[s=0|u] = (0.3, 0.1)`, 500 research
    /// and 5000 archive records.
    pub fn reference(seed: u64) -> Self {
        Self {
            means: [vec![-1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]],
            covariances: None,
            p_u0: 0.5,
            p_s0_given_u: [0.3, 0.1],
            n_research: 500,
            n_archive: 5000,
            seed,
            empty_cell: EmptyCellPolicy::default(),
        }
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }

    /// Probability of each `(u, s)` cell in canonical order.
    pub fn cell_probabilities(&self) -> [f64; 4] {
        let pu = [self.p_u0, 1.0 - self.p_u0];
        CELLS.map(|(u, s)| {
            let ps0 = self.p_s0_given_u[u as usize];
            pu[u as usize] * if s == 0 { ps0 } else { 1.0 - ps0 }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        for m in &self.means {
            if m.len() != d || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("means must share one dimension and be finite".into()));
            }
        }
        for p in [self.p_u0, self.p_s0_given_u[0], self.p_s0_given_u[1]] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0,1]")));
            }
        }
        if self.n_research < 4 {
            return Err(Error::Config("n_research must be at least 4".into()));
        }
        self.cholesky_factors()?;
        Ok(())
    }

    fn cholesky_factors(&self) -> Result<[Vec<Vec<f64>>; 4]> {
        let d = self.d();
        match &self.covariances {
            None => {
                let eye: Vec<Vec<f64>> = (0..d)
                    .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect();
                Ok([eye.clone(), eye.clone(), eye.clone(), eye])
            }
            Some(covs) => {
                let mut out: [Vec<Vec<f64>>; 4] = Default::default();
                for (slot, c) in out.iter_mut().zip(covs) {
                    *slot = cholesky(c, d)?;
                }
                Ok(out)
            }
        }
    }
}

fn cholesky(a: &[Vec<f64>], d: usize) -> Result<Vec<Vec<f64>>> {
    if a.len() != d || a.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("covariance must be {d}x{d}")));
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                return Err(Error::Config("covariance is not symmetric".into()));
            }
            let dot: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            if i == j {
                let pivot = a[i][i] - dot;
                if pivot <= 0.0 || !pivot.is_finite() {
                    return Err(Error::Config("covariance is not positive definite".into()));
                }
                l[i][i] = pivot.sqrt();
            } else {
                l[i][j] = (a[i][j] - dot) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Draws `n_research + n_archive` records by ancestral sampling and splits
/// them uniformly at random into research and archive sets.
pub fn sample_mixture(spec: &MixtureSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if let Some(idx) = spec.cell_probabilities().iter().position(|&p| p == 0.0) {
        let (u, s) = CELLS[idx];
        return Err(Error::EmptyCell(SliceId { u, s: Some(s), k: 0 }));
    }
    let chol = spec.cholesky_factors()?;
    let d = spec.d();
    let n = spec.n_research + spec.n_archive;
    let attempts = match spec.empty_cell {
        EmptyCellPolicy::Error => 1,
        EmptyCellPolicy::Resample(k) => k.max(1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..attempts {
        let mut records: Vec<LabeledRecord> = (0..n).map(|_| draw_record(spec, &chol, d, &mut rng)).collect();
        records.shuffle(&mut rng);
        let archive = records.split_off(spec.n_research);
        let research = Dataset::from_parts_unchecked(records, d, Role::Research);
        let groups = partition_groups(&research);
        match groups.first_empty() {
            None => {
                return Ok((research, Dataset::from_parts_unchecked(archive, d, Role::Archive)));
            }
            Some((u, s)) if matches!(spec.empty_cell, EmptyCellPolicy::Error) => {
                return Err(Error::EmptyCell(SliceId { u, s: Some(s), k: 0 }));
            }
            Some(_) => {}
        }
    }
    Err(Error::RetriesExhausted(attempts))
}

fn draw_record<R: Rng>(spec: &MixtureSpec, chol: &[Vec<Vec<f64>>; 4], d: usize, rng: &mut R) -> LabeledRecord {
    let u = u8::from(rng.random::<f64>() >= spec.p_u0);
    let s = u8::from(rng.random::<f64>() >= spec.p_s0_given_u[u as usize]);
    let cell = 2 * u as usize + s as usize;
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let l = &chol[cell];
    let features = (0..d)
        .map(|i| spec.means[cell][i] + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>())
        .collect();
    LabeledRecord::new(features, s, u)
}

/// Settings shared by the Monte-Carlo harness and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub n_q: usize,
    pub t: f64,
    pub eval_grid_size: usize,
    pub floor: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            n_q: 50,
            t: 0.5,
            eval_grid_size: DEFAULT_EVAL_GRID,
            floor: DEFAULT_DENSITY_FLOOR,
        }
    }
}

/// Per-feature `E_k` for every variant of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub unrepaired_research: Vec<f64>,
    pub unrepaired_archive: Vec<f64>,
    pub distributional_research: Vec<f64>,
    pub distributional_archive: Vec<f64>,
    pub geometric_research: Vec<f64>,
    /// Repaired research and archive pooled.
    pub distributional_composite: Vec<f64>,
    pub unrepaired_composite: Vec<f64>,
}

/// Seed of replication `index`, derived from the master seed.
pub fn replication_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.random()
}

/// One full replication: sample, design, repair on- and off-sample, measure.
pub fn run_replication(spec: &MixtureSpec, settings: &ExperimentSettings, index: usize) -> Result<ReplicationOutcome> {
    let seed = replication_seed(spec.seed, index);
    let inner = || -> Result<ReplicationOutcome> {
        let mut spec = spec.clone();
        spec.seed = seed;
        let (research, archive) = sample_mixture(&spec)?;
        let model = design_repair_model(&research, &Resolution::Uniform(settings.n_q), settings.t)?;
        let repair_seed = seed ^ 0x9E37_79B9_7F4A_7C15;
        let (fixed_research, _) = repair_dataset(&research, &model, repair_seed)?;
        let (fixed_archive, _) = repair_dataset(&archive, &model, repair_seed.wrapping_add(1))?;
        let geometric = geometric_repair(&research, settings.t)?;
        let e = |data: &Dataset| -> Result<Vec<f64>> {
            Ok(conditional_fairness(data, settings.eval_grid_size, settings.floor)?.per_feature)
        };
        Ok(ReplicationOutcome {
            index,
            seed,
            unrepaired_research: e(&research)?,
            unrepaired_archive: e(&archive)?,
            distributional_research: e(&fixed_research)?,
            distributional_archive: e(&fixed_archive)?,
            geometric_research: e(&geometric)?,
            distributional_composite: e(&fixed_research.concat(&fixed_archive)?)?,
            unrepaired_composite: e(&research.concat(&archive)?)?,
        })
    };
    inner().map_err(|source| Error::Replication {
        replication: index,
        source: Box::new(source),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Table laid out as repair variant by (dataset, feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    /// `research_k1, …, research_kd, archive_k1, …, archive_kd`.
    pub columns: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    /// `None` where a variant does not apply (geometric repair off-sample).
    pub cells: Vec<Option<MeanSd>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub replications: Vec<ReplicationOutcome>,
    pub summary: SummaryTable,
}

pub fn run_monte_carlo(spec: &MixtureSpec, replications: usize, settings: &ExperimentSettings) -> Result<MonteCarloResult> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    spec.validate()?;
    let outcomes = (0..replications)
        .into_par_iter()
        .map(|i| run_replication(spec, settings, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&outcomes, spec.d());
    Ok(MonteCarloResult {
        replications: outcomes,
        summary,
    })
}

type Pick<'a> = &'a dyn Fn(&ReplicationOutcome) -> &Vec<f64>;

fn summarize(outcomes: &[ReplicationOutcome], d: usize) -> SummaryTable {
    let column = |pick: Pick, k: usize| {
        let values: Vec<f64> = outcomes.iter().map(|o| pick(o)[k]).collect();
        Some(MeanSd::of(&values))
    };
    let row = |variant: &str, research: Pick, archive: Option<Pick>| {
        let mut cells: Vec<Option<MeanSd>> = (0..d).map(|k| column(research, k)).collect();
        cells.extend((0..d).map(|k| archive.and_then(|a| column(a, k))));
        SummaryRow {
            variant: variant.to_string(),
            cells,
        }
    };
    let mut columns: Vec<String> = (1..=d).map(|k| format!("research_k{k}")).collect();
    columns.extend((1..=d).map(|k| format!("archive_k{k}")));
    SummaryTable {
        columns,
        rows: vec![
            row("none", &|o| &o.unrepaired_research, Some(&|o| &o.unrepaired_archive)),
            row(
                "distributional",
                &|o| &o.distributional_research,
                Some(&|o| &o.distributional_archive),
            ),
            row("geometric", &|o| &o.geometric_research, None),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "nR")]
    ResearchSize,
    #[serde(rename = "nQ")]
    Resolution,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nR" | "nr" | "n_R" => Ok(SweepVariable::ResearchSize),
            "nQ" | "nq" | "n_Q" => Ok(SweepVariable::Resolution),
            other => Err(Error::Config(format!("unknown sweep variable '{other}'"))),
        }
    }
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepVariable::ResearchSize => "nR",
            SweepVariable::Resolution => "nQ",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<usize>,
    pub replications: usize,
    pub base: MixtureSpec,
    pub settings: ExperimentSettings,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let minimum = match self.variable {
            SweepVariable::ResearchSize => 4,
            SweepVariable::Resolution => 2,
        };
        if let Some(v) = self.grid.iter().find(|&&v| v < minimum) {
            return Err(Error::Config(format!("grid value {v} below the minimum {minimum}")));
        }
        self.base.validate()
    }
}

/// One grid point of a sweep: summed-over-features `E` across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: usize,
    pub research: MeanSd,
    pub archive: MeanSd,
    pub composite: MeanSd,
    pub unrepaired_composite: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub variable: SweepVariable,
    pub points: Vec<CurvePoint>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Curve> {
    spec.validate()?;
    let points = spec
        .grid
        .iter()
        .map(|&value| {
            let mut base = spec.base.clone();
            let mut settings = spec.settings;
            match spec.variable {
                SweepVariable::ResearchSize => base.n_research = value,
                SweepVariable::Resolution => settings.n_q = value,
            }
            let outcomes = (0..spec.replications)
                .into_par_iter()
                .map(|i| run_replication(&base, &settings, i))
                .collect::<Result<Vec<_>>>()?;
            let total = |pick: fn(&ReplicationOutcome) -> &Vec<f64>| {
                let values: Vec<f64> = outcomes.iter().map(|o| pick(o).iter().sum()).collect();
                MeanSd::of(&values)
            };
            Ok(CurvePoint {
                value,
                research: total(|o| &o.distributional_research),
                archive: total(|o| &o.distributional_archive),
                composite: total(|o| &o.distributional_composite),
                unrepaired_composite: total(|o| &o.unrepaired_composite),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        variable: spec.variable,
        points,
    })
}
