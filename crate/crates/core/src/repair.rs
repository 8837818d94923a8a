//! Design of the per-`(u, s, k)` repair plan bank from research data, the
//! randomized off-sample repair that applies it, and the on-sample geometric
//! baseline.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{
    build_support, kde_pmf, silverman_bandwidth, Bandwidth, DiscreteDistribution,
    InterpolatedSupport,
};
use crate::error::{Error, Result, SliceId};
use crate::ingest::TabularSchema;
use crate::model::{partition_groups, Dataset, LabeledRecord, CELLS};
use crate::transport::{barycenter, monotone_plan, north_west_corner, CostSpec, TransportPlan};

/// Rows whose total plan mass is below this are treated as empty.
pub const ROW_MASS_FLOOR: f64 = 1e-12;

/// Grid resolution: one `n_Q` for every `(u, k)` or an explicit table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    /// Indexed `[u][k]`.
    PerSlice([Vec<usize>; 2]),
}

impl Resolution {
    pub fn get(&self, u: u8, k: usize) -> Option<usize> {
        match self {
            Resolution::Uniform(n) => Some(*n),
            Resolution::PerSlice(table) => table[u as usize].get(k).copied(),
        }
    }
}

impl From<usize> for Resolution {
    fn from(n: usize) -> Self {
        Resolution::Uniform(n)
    }
}

/// Descriptive metadata carried with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub feature_names: Vec<String>,
    /// Research cell sizes `[n_00, n_01, n_10, n_11]`.
    pub research_counts: [usize; 4],
    pub t: f64,
    /// Seed of the research split, when the caller made one.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub created_unix: Option<u64>,
    /// Schema used to read research data; archives are read with it too.
    #[serde(default)]
    pub schema: Option<TabularSchema>,
}

impl ModelMetadata {
    pub fn with_default_names(d: usize, research_counts: [usize; 4], t: f64) -> Self {
        Self {
            feature_names: default_feature_names(d),
            research_counts,
            t,
            seed: None,
            created_unix: None,
            schema: None,
        }
    }

    /// Digest of the feature layout; archives must match it to be repaired.
    pub fn fingerprint(&self) -> String {
        schema_fingerprint(&self.feature_names)
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).collect()
}

pub fn schema_fingerprint(feature_names: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(format!("d={}", feature_names.len()).as_bytes());
    for name in feature_names {
        hasher.update([0u8]);
        hasher.update(name.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Plan-row sampler: cumulative masses per row plus the fallback row used
/// when a row carries no mass.
#[derive(Debug, Clone, PartialEq)]
struct RowSampler {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    cumulative: Vec<f64>,
    effective_row: Vec<usize>,
}

impl RowSampler {
    fn new(plan: &TransportPlan) -> Self {
        let n = plan.n_rows();
        let mut offsets = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(plan.entries().len());
        let mut cumulative = Vec::with_capacity(plan.entries().len());
        let mut row_mass = vec![0.0; n];
        let mut cursor = 0;
        for row in 0..n {
            let mut acc = 0.0;
            while cursor < plan.entries().len() && plan.entries()[cursor].row == row {
                let e = plan.entries()[cursor];
                acc += e.mass;
                cols.push(e.col);
                cumulative.push(acc);
                cursor += 1;
            }
            row_mass[row] = acc;
            offsets[row + 1] = cols.len();
        }
        let live: Vec<usize> = (0..n).filter(|&r| row_mass[r] >= ROW_MASS_FLOOR).collect();
        let effective_row = (0..n)
            .map(|r| {
                if row_mass[r] >= ROW_MASS_FLOOR {
                    return r;
                }
                // Nearest live row; the lower one wins ties.
                let above = live.partition_point(|&l| l < r);
                let lower = above.checked_sub(1).map(|i| live[i]);
                let upper = live.get(above).copied();
                match (lower, upper) {
                    (Some(l), Some(h)) if r - l <= h - r => l,
                    (_, Some(h)) => h,
                    (Some(l), None) => l,
                    (None, None) => r,
                }
            })
            .collect();
        Self {
            offsets,
            cols,
            cumulative,
            effective_row,
        }
    }

    /// Column drawn from the normalized row `row` using `uniform` in [0,1).
    fn draw(&self, row: usize, uniform: f64) -> (usize, bool) {
        let r = self.effective_row[row];
        let fallback = r != row;
        let span = self.offsets[r]..self.offsets[r + 1];
        let cum = &self.cumulative[span.clone()];
        let cols = &self.cols[span];
        match cum.last() {
            Some(&total) => {
                let target = uniform * total;
                let idx = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
                (cols[idx], fallback)
            }
            // Plan without any mass; unreachable for validated models.
            None => (row, fallback),
        }
    }
}

/// Everything designed for one `(u, k)` slice.
#[derive(Debug, Clone)]
pub struct SlicePlans {
    support: Arc<InterpolatedSupport>,
    barycenter: DiscreteDistribution,
    bandwidths: [Bandwidth; 2],
    sources: [DiscreteDistribution; 2],
    plans: [TransportPlan; 2],
    samplers: [RowSampler; 2],
}

impl PartialEq for SlicePlans {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support
            && self.barycenter == other.barycenter
            && self.bandwidths == other.bandwidths
            && self.sources == other.sources
            && self.plans == other.plans
    }
}

impl SlicePlans {
    /// Assembles a slice after checking the plan marginals against the
    /// source pmfs and the barycentre.
    pub fn new(
        barycenter: DiscreteDistribution,
        bandwidths: [Bandwidth; 2],
        sources: [DiscreteDistribution; 2],
        plans: [TransportPlan; 2],
        tolerance: f64,
    ) -> Result<Self> {
        let support = Arc::clone(barycenter.support());
        for s in 0..2 {
            if !sources[s].same_support(&barycenter)
                || plans[s].source_support().as_ref() != support.as_ref()
                || plans[s].target_support().as_ref() != support.as_ref()
            {
                return Err(Error::SupportMismatch);
            }
            let err = plans[s].marginal_error(sources[s].mass(), barycenter.mass());
            if err > tolerance {
                return Err(Error::CorruptModel(format!(
                    "plan for s={s} violates its marginals by {err:e}"
                )));
            }
        }
        let samplers = [RowSampler::new(&plans[0]), RowSampler::new(&plans[1])];
        Ok(Self {
            support,
            barycenter,
            bandwidths,
            sources,
            plans,
            samplers,
        })
    }

    pub fn support(&self) -> &Arc<InterpolatedSupport> {
        &self.support
    }

    pub fn barycenter(&self) -> &DiscreteDistribution {
        &self.barycenter
    }

    pub fn bandwidth(&self, s: u8) -> Bandwidth {
        self.bandwidths[s as usize]
    }

    pub fn source(&self, s: u8) -> &DiscreteDistribution {
        &self.sources[s as usize]
    }

    pub fn plan(&self, s: u8) -> &TransportPlan {
        &self.plans[s as usize]
    }
}

/// The bank of supports, barycentres and plans for every `(u, s, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairModel {
    d: usize,
    /// Indexed `u * d + k`.
    slices: Vec<SlicePlans>,
    metadata: ModelMetadata,
}

impl RepairModel {
    pub fn from_slices(d: usize, slices: Vec<SlicePlans>, metadata: ModelMetadata) -> Result<Self> {
        if slices.len() != 2 * d {
            return Err(Error::LengthMismatch {
                what: "slices",
                expected: 2 * d,
                found: slices.len(),
            });
        }
        if metadata.feature_names.len() != d {
            return Err(Error::LengthMismatch {
                what: "feature names",
                expected: d,
                found: metadata.feature_names.len(),
            });
        }
        Ok(Self { d, slices, metadata })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn slice(&self, u: u8, k: usize) -> &SlicePlans {
        &self.slices[u as usize * self.d + k]
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut ModelMetadata {
        &mut self.metadata
    }

    pub fn slices(&self) -> &[SlicePlans] {
        &self.slices
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.d {
            return Err(Error::LengthMismatch {
                what: "feature names",
                expected: self.d,
                found: names.len(),
            });
        }
        self.metadata.feature_names = names;
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        self.metadata.fingerprint()
    }
}

/// Builds the repair model from fully labelled research data.
pub fn design_repair_model(research: &Dataset, n_q: &Resolution, t: f64) -> Result<RepairModel> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidT(t));
    }
    let groups = partition_groups(research);
    if let Some((u, s)) = groups.first_empty() {
        return Err(Error::EmptyCell(SliceId { u, s: Some(s), k: 0 }));
    }
    let d = research.d();
    let keys: Vec<(u8, usize)> = (0..2u8).flat_map(|u| (0..d).map(move |k| (u, k))).collect();
    let slices = keys
        .par_iter()
        .map(|&(u, k)| design_slice(research, u, k, n_q, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepairModel {
        d,
        slices,
        metadata: ModelMetadata::with_default_names(d, groups.counts(), t),
    })
}

fn design_slice(research: &Dataset, u: u8, k: usize, n_q: &Resolution, t: f64) -> Result<SlicePlans> {
    let slice = SliceId { u, s: None, k };
    let n = n_q.get(u, k).filter(|&n| n >= 2).ok_or(Error::InvalidResolution {
        slice,
        n_q: n_q.get(u, k).unwrap_or(0),
    })?;
    let combined = research.feature_slice(u, None, k);
    let support = Arc::new(build_support(&combined, n).map_err(|e| match e {
        Error::DegenerateRange { value, .. } => Error::DegenerateSlice { slice, value },
        other => other,
    })?);
    let mut bandwidths = Vec::with_capacity(2);
    let mut sources = Vec::with_capacity(2);
    for s in 0..2u8 {
        let values = research.feature_slice(u, Some(s), k);
        let h = match silverman_bandwidth(&values) {
            Ok(h) => h,
            Err(Error::TooFewValues { .. }) => {
                log::warn!(
                    "slice {} has fewer than two distinct values; using the pooled bandwidth",
                    SliceId { u, s: Some(s), k }
                );
                silverman_bandwidth(&combined)?
            }
            Err(e) => return Err(e),
        };
        sources.push(kde_pmf(&values, &support, h)?);
        bandwidths.push(h);
    }
    let nu = barycenter(&sources[0], &sources[1], t)?;
    let cost = CostSpec::squared();
    let plans = [monotone_plan(&sources[0], &nu, cost)?, monotone_plan(&sources[1], &nu, cost)?];
    let sources: [DiscreteDistribution; 2] = sources.try_into().expect("two sources");
    SlicePlans::new(nu, [bandwidths[0], bandwidths[1]], sources, plans, 1e-9)
}

/// Master seed for the repair draws. Every `(u, s, k, record)` gets its own
/// ChaCha stream, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct RepairRng {
    seed: u64,
    base: ChaCha8Rng,
}

const RECORD_BITS: u32 = 44;
const FEATURE_BITS: u32 = 18;

impl RepairRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draw stream for one feature value of one record. Record indices must
    /// be below 2^44 and feature indices below 2^16.
    pub fn stream(&self, u: u8, s: u8, k: usize, record: u64) -> ChaCha8Rng {
        assert!(record < (1 << RECORD_BITS), "record index {record} too large");
        assert!((k as u64) < (1 << (FEATURE_BITS - 2)), "feature index {k} too large");
        let key = (record << FEATURE_BITS) | ((k as u64) << 2) | ((u as u64) << 1) | s as u64;
        let mut rng = self.base.clone();
        rng.set_stream(key);
        rng.set_word_pos(0);
        rng
    }
}

/// Outcome of repairing one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairedValue {
    pub value: f64,
    pub clamped: bool,
    pub fallback_row: bool,
}

/// Randomized repair of one feature value. The first draw from `rng` is the
/// Bernoulli choice between the two bracketing grid states, the second picks
/// the target state from the chosen plan row.
pub fn repair_value<R: Rng + ?Sized>(
    x: f64,
    u: u8,
    s: u8,
    k: usize,
    model: &RepairModel,
    rng: &mut R,
) -> RepairedValue {
    let slice = model.slice(u, k);
    let support = &slice.support;
    let states = support.states();
    let clamped = x < support.lo() || x > support.hi();
    let x = x.clamp(support.lo(), support.hi());
    let mut q = support.round_down(x);
    let tau = if q + 1 == states.len() {
        0.0
    } else {
        (x - states[q]) / (states[q + 1] - states[q])
    };
    let bernoulli: f64 = rng.random();
    if bernoulli < tau {
        q += 1;
    }
    let (col, fallback_row) = slice.samplers[s as usize].draw(q, rng.random());
    RepairedValue {
        value: states[col],
        clamped,
        fallback_row,
    }
}

/// Counts collected while repairing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub records: usize,
    /// Values outside their grid, indexed `u * d + k`.
    pub clamped: Vec<usize>,
    /// Draws that landed on an empty plan row and used a neighbour.
    pub fallback_rows: usize,
}

impl RepairReport {
    pub fn new(d: usize) -> Self {
        Self {
            records: 0,
            clamped: vec![0; 2 * d],
            fallback_rows: 0,
        }
    }

    pub fn merge(&mut self, other: &RepairReport) {
        self.records += other.records;
        if self.clamped.len() < other.clamped.len() {
            self.clamped.resize(other.clamped.len(), 0);
        }
        for (a, b) in self.clamped.iter_mut().zip(&other.clamped) {
            *a += b;
        }
        self.fallback_rows += other.fallback_rows;
    }

    pub fn total_clamped(&self) -> usize {
        self.clamped.iter().sum()
    }
}

/// Repairs a batch of records whose first element has global index
/// `first_index`. Output order matches input order.
pub fn repair_records(
    records: &[LabeledRecord],
    first_index: u64,
    model: &RepairModel,
    rng: &RepairRng,
) -> Result<(Vec<LabeledRecord>, RepairReport)> {
    let d = model.d();
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.features.len() != d) {
        return Err(Error::SchemaMismatch(format!(
            "record {} has {} features, model expects {d}",
            first_index + i as u64,
            r.features.len()
        )));
    }
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.s > 1 || r.u > 1) {
        return Err(Error::AttributeOutOfRange {
            record: (first_index + i as u64) as usize,
            attribute: if r.s > 1 { "s" } else { "u" },
            value: r.s.max(r.u) as i64,
        });
    }
    let repaired: Vec<(LabeledRecord, RepairReport)> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut report = RepairReport::new(d);
            report.records = 1;
            let index = first_index + i as u64;
            let features = r
                .features
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let mut stream = rng.stream(r.u, r.s, k, index);
                    let out = repair_value(x, r.u, r.s, k, model, &mut stream);
                    if out.clamped {
                        report.clamped[r.u as usize * d + k] += 1;
                    }
                    if out.fallback_row {
                        report.fallback_rows += 1;
                    }
                    out.value
                })
                .collect();
            (LabeledRecord::new(features, r.s, r.u), report)
        })
        .collect();
    let mut report = RepairReport::new(d);
    let mut out = Vec::with_capacity(records.len());
    for (r, rep) in repaired {
        report.merge(&rep);
        out.push(r);
    }
    Ok((out, report))
}

/// Repairs every record of `data`; record `i` uses draw streams keyed by `i`.
pub fn repair_dataset(data: &Dataset, model: &RepairModel, seed: u64) -> Result<(Dataset, RepairReport)> {
    if data.d() != model.d() {
        return Err(Error::SchemaMismatch(format!(
            "dataset has {} features, model expects {}",
            data.d(),
            model.d()
        )));
    }
    let rng = RepairRng::new(seed);
    let (records, report) = repair_records(data.records(), 0, model, &rng)?;
    Ok((Dataset::from_parts_unchecked(records, data.d(), data.role()), report))
}

/// On-sample geometric repair: each point moves a fraction of the way towards
/// the plan-weighted average of its transport partners in the other group.
pub fn geometric_repair(research: &Dataset, t: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidT(t));
    }
    let groups = partition_groups(research);
    if let Some((u, s)) = CELLS
        .into_iter()
        .find(|&(u, s)| groups.count(u, s) == 0 && groups.group_size(u) > 0)
    {
        return Err(Error::EmptyCell(SliceId { u, s: Some(s), k: 0 }));
    }
    let d = research.d();
    let mut records = research.records().to_vec();
    for u in 0..2u8 {
        if groups.group_size(u) == 0 {
            continue;
        }
        let idx0 = groups.cell(u, 0);
        let idx1 = groups.cell(u, 1);
        for k in 0..d {
            let x0: Vec<f64> = idx0.iter().map(|&i| research.records()[i].features[k]).collect();
            let x1: Vec<f64> = idx1.iter().map(|&i| research.records()[i].features[k]).collect();
            let (new0, new1) = geometric_map(&x0, &x1, t);
            for (&i, v) in idx0.iter().zip(new0) {
                records[i].features[k] = v;
            }
            for (&i, v) in idx1.iter().zip(new1) {
                records[i].features[k] = v;
            }
        }
    }
    Ok(Dataset::from_parts_unchecked(records, d, research.role()))
}

/// Geometric displacement for two 1-D point clouds with uniform weights.
/// The monotone plan is computed on integer-scaled masses (`n1` per source
/// point, `n0` per target point) so the coupling is exact.
pub(crate) fn geometric_map(x0: &[f64], x1: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let (n0, n1) = (x0.len(), x1.len());
    let mut order0: Vec<usize> = (0..n0).collect();
    let mut order1: Vec<usize> = (0..n1).collect();
    order0.sort_by(|&a, &b| x0[a].total_cmp(&x0[b]));
    order1.sort_by(|&a, &b| x1[a].total_cmp(&x1[b]));
    let plan = north_west_corner(&vec![n1 as f64; n0], &vec![n0 as f64; n1]);
    // n0 * pi_ij = entry / n1 and n1 * pi_ij = entry / n0.
    let mut partner0 = vec![0.0; n0];
    let mut partner1 = vec![0.0; n1];
    for e in plan {
        let (i, j) = (order0[e.row], order1[e.col]);
        partner0[i] += e.mass / n1 as f64 * x1[j];
        partner1[j] += e.mass / n0 as f64 * x0[i];
    }
    let new0 = x0.iter().zip(&partner0).map(|(x, p)| (1.0 - t) * x + t * p).collect();
    let new1 = x1.iter().zip(&partner1).map(|(x, p)| (1.0 - t) * p + t * x).collect();
    (new0, new1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_dataset, Role};

    fn rec(x: &[f64], s: u8, u: u8) -> LabeledRecord {
        LabeledRecord::new(x.to_vec(), s, u)
    }

    fn minimal_research() -> Dataset {
        validate_dataset(
            vec![
                rec(&[0.0], 0, 0),
                rec(&[1.0], 0, 0),
                rec(&[0.5], 1, 0),
                rec(&[2.0], 1, 0),
                rec(&[3.0], 0, 1),
                rec(&[1.0], 1, 1),
                rec(&[4.0], 1, 1),
            ],
            1,
            Role::Research,
        )
        .unwrap()
    }

    #[test]
    fn single_record_cell_still_designs() {
        let data = minimal_research();
        let model = design_repair_model(&data, &Resolution::Uniform(8), 0.5).unwrap();
        for u in 0..2 {
            let slice = model.slice(u, 0);
            for s in 0..2 {
                let err = slice
                    .plan(s)
                    .marginal_error(slice.source(s).mass(), slice.barycenter().mass());
                assert!(err < 1e-9);
                assert!(slice.plan(s).is_monotone());
            }
        }
    }

    #[test]
    fn design_rejects_empty_cell_and_bad_resolution() {
        let data = validate_dataset(
            vec![rec(&[0.0], 0, 0), rec(&[1.0], 1, 0), rec(&[2.0], 1, 1)],
            1,
            Role::Research,
        )
        .unwrap();
        let err = design_repair_model(&data, &Resolution::Uniform(8), 0.5).unwrap_err();
        assert!(matches!(err, Error::EmptyCell(SliceId { u: 1, s: Some(0), .. })));
        let err = design_repair_model(&minimal_research(), &Resolution::Uniform(1), 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidResolution { .. }));
    }

    #[test]
    fn design_rejects_constant_slice() {
        let data = validate_dataset(
            vec![rec(&[1.0], 0, 0), rec(&[1.0], 1, 0), rec(&[1.0], 0, 1), rec(&[2.0], 1, 1)],
            1,
            Role::Research,
        )
        .unwrap();
        let err = design_repair_model(&data, &Resolution::Uniform(8), 0.5).unwrap_err();
        assert!(matches!(err, Error::DegenerateSlice { slice: SliceId { u: 0, s: None, k: 0 }, .. }));
    }

    #[test]
    fn per_slice_resolution() {
        let res = Resolution::PerSlice([vec![5], vec![9]]);
        let model = design_repair_model(&minimal_research(), &res, 0.5).unwrap();
        assert_eq!(model.slice(0, 0).support().len(), 5);
        assert_eq!(model.slice(1, 0).support().len(), 9);
    }

    #[test]
    fn row_sampler_fallback_prefers_lower_row() {
        let g = Arc::new(InterpolatedSupport::uniform(0.0, 4.0, 5).unwrap());
        let plan = TransportPlan::from_entries(
            Arc::clone(&g),
            Arc::clone(&g),
            vec![
                crate::transport::PlanEntry { row: 1, col: 1, mass: 0.5 },
                crate::transport::PlanEntry { row: 3, col: 4, mass: 0.5 },
            ],
        )
        .unwrap();
        let sampler = RowSampler::new(&plan);
        assert_eq!(sampler.effective_row, vec![1, 1, 1, 3, 3]);
        assert_eq!(sampler.draw(2, 0.7), (1, true));
        assert_eq!(sampler.draw(4, 0.1), (4, true));
        assert_eq!(sampler.draw(3, 0.1), (4, false));
    }

    #[test]
    fn geometric_single_points() {
        let (a, b) = geometric_map(&[0.0], &[2.0], 0.5);
        assert_eq!((a[0], b[0]), (1.0, 1.0));
    }

    #[test]
    fn geometric_endpoints() {
        let x0 = [0.3, -1.0, 2.0];
        let x1 = [5.0, 1.0, 4.0, 0.0];
        let (a, _) = geometric_map(&x0, &x1, 0.0);
        assert_eq!(a, x0.to_vec());
        let (_, b) = geometric_map(&x0, &x1, 1.0);
        assert_eq!(b, x1.to_vec());
    }

    #[test]
    fn geometric_preserves_labels_and_order() {
        let data = minimal_research();
        let out = geometric_repair(&data, 0.5).unwrap();
        assert_eq!(out.len(), data.len());
        for (a, b) in out.records().iter().zip(data.records()) {
            assert_eq!((a.u, a.s), (b.u, b.s));
        }
    }

    #[test]
    fn streams_are_keyed() {
        let rng = RepairRng::new(7);
        let a: f64 = rng.stream(0, 1, 0, 5).random();
        let b: f64 = rng.stream(0, 1, 0, 5).random();
        let c: f64 = rng.stream(1, 1, 0, 5).random();
        let d: f64 = rng.stream(0, 1, 0, 6).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
