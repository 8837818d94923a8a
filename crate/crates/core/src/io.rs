//! Persistence: the versioned model file, reports, and delimiter-separated
//! tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{Curve, ExperimentSettings, MixtureSpec, SummaryTable};
use crate::density::{Bandwidth, DiscreteDistribution, InterpolatedSupport};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::repair::{ModelMetadata, RepairModel, SlicePlans};
use crate::transport::{PlanEntry, TransportPlan};

pub const MODEL_FORMAT: &str = "otrepair-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Plans on grids larger than this are written as sparse triplets.
pub const DENSE_PLAN_MAX_STATES: usize = 128;
/// Marginal tolerance applied when a model is loaded.
pub const LOAD_MARGINAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    format_version: u32,
    fingerprint: String,
    d: usize,
    metadata: ModelMetadata,
    slices: Vec<SliceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliceRecord {
    u: u8,
    k: usize,
    n_q: usize,
    support: Vec<f64>,
    bandwidths: [f64; 2],
    barycenter: Vec<f64>,
    sources: [Vec<f64>; 2],
    plans: [PlanRecord; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "lowercase", deny_unknown_fields)]
enum PlanRecord {
    Dense { rows: Vec<Vec<f64>> },
    Sparse { entries: Vec<(usize, usize, f64)> },
}

fn check_finite<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(what.to_string()));
    }
    Ok(())
}

fn to_file(model: &RepairModel) -> Result<ModelFile> {
    let d = model.d();
    let mut slices = Vec::with_capacity(2 * d);
    for u in 0..2u8 {
        for k in 0..d {
            let slice = model.slice(u, k);
            let n_q = slice.support().len();
            let plans = [0u8, 1].map(|s| {
                let plan = slice.plan(s);
                if n_q <= DENSE_PLAN_MAX_STATES {
                    PlanRecord::Dense { rows: plan.dense() }
                } else {
                    PlanRecord::Sparse {
                        entries: plan.entries().iter().map(|e| (e.row, e.col, e.mass)).collect(),
                    }
                }
            });
            let record = SliceRecord {
                u,
                k,
                n_q,
                support: slice.support().states().to_vec(),
                bandwidths: [slice.bandwidth(0).value(), slice.bandwidth(1).value()],
                barycenter: slice.barycenter().mass().to_vec(),
                sources: [slice.source(0).mass().to_vec(), slice.source(1).mass().to_vec()],
                plans,
            };
            let what = format!("slice (u={u}, k={k})");
            check_finite(&what, &record.support)?;
            check_finite(&what, &record.bandwidths)?;
            check_finite(&what, &record.barycenter)?;
            check_finite(&what, record.sources.iter().flatten())?;
            for plan in &record.plans {
                match plan {
                    PlanRecord::Dense { rows } => check_finite(&what, rows.iter().flatten())?,
                    PlanRecord::Sparse { entries } => check_finite(&what, entries.iter().map(|e| &e.2))?,
                }
            }
            slices.push(record);
        }
    }
    check_finite("metadata", [&model.metadata().t])?;
    Ok(ModelFile {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        fingerprint: model.fingerprint(),
        d,
        metadata: model.metadata().clone(),
        slices,
    })
}

/// Serializes a model to its JSON text form.
pub fn model_to_string(model: &RepairModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_file(model)?)?)
}

/// Parses and validates a model from JSON text. The format tag and version
/// are checked before any numeric field is read.
pub fn model_from_str(text: &str) -> Result<RepairModel> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let format = value.get("format").and_then(Value::as_str);
    if format != Some(MODEL_FORMAT) {
        return Err(Error::CorruptModel(format!("not a model file (format tag {format:?})")));
    }
    match value.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
        other => {
            return Err(Error::VersionMismatch {
                found: other.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: MODEL_FORMAT_VERSION,
            })
        }
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    from_file(file)
}

fn from_file(file: ModelFile) -> Result<RepairModel> {
    let d = file.d;
    if file.slices.len() != 2 * d {
        return Err(Error::CorruptModel(format!("expected {} slices, found {}", 2 * d, file.slices.len())));
    }
    let mut slices = Vec::with_capacity(2 * d);
    for (pos, rec) in file.slices.into_iter().enumerate() {
        let (u, k) = ((pos / d) as u8, pos % d);
        if (rec.u, rec.k) != (u, k) {
            return Err(Error::CorruptModel(format!("slice {pos} is labelled (u={}, k={})", rec.u, rec.k)));
        }
        let corrupt = |msg: String| Error::CorruptModel(format!("slice (u={u}, k={k}): {msg}"));
        if rec.support.len() != rec.n_q {
            return Err(corrupt(format!("{} grid states for n_q = {}", rec.support.len(), rec.n_q)));
        }
        let support = Arc::new(InterpolatedSupport::from_states(rec.support).map_err(|e| corrupt(e.to_string()))?);
        let pmf = |mass: Vec<f64>, what: &str| {
            DiscreteDistribution::new(Arc::clone(&support), mass).map_err(|e| corrupt(format!("{what}: {e}")))
        };
        let barycenter = pmf(rec.barycenter, "barycentre")?;
        let [src0, src1] = rec.sources;
        let sources = [pmf(src0, "source s=0")?, pmf(src1, "source s=1")?];
        let bandwidths = [
            Bandwidth::new(rec.bandwidths[0]).map_err(|e| corrupt(e.to_string()))?,
            Bandwidth::new(rec.bandwidths[1]).map_err(|e| corrupt(e.to_string()))?,
        ];
        let mut plans = Vec::with_capacity(2);
        for (s, plan) in rec.plans.into_iter().enumerate() {
            let entries = match plan {
                PlanRecord::Dense { rows } => {
                    if rows.len() != rec.n_q || rows.iter().any(|r| r.len() != rec.n_q) {
                        return Err(corrupt(format!("plan s={s} is not {0}x{0}", rec.n_q)));
                    }
                    rows.into_iter()
                        .enumerate()
                        .flat_map(|(i, row)| row.into_iter().enumerate().map(move |(j, m)| (i, j, m)))
                        .collect::<Vec<_>>()
                }
                PlanRecord::Sparse { entries } => entries,
            };
            if let Some(&(i, j, m)) = entries.iter().find(|e| !(e.2.is_finite() && e.2 >= 0.0)) {
                return Err(Error::CorruptModel(format!(
                    "negative or non-finite plan entry {m} at (u={u}, s={s}, k={k}, i={i}, j={j})"
                )));
            }
            let entries = entries
                .into_iter()
                .map(|(row, col, mass)| PlanEntry { row, col, mass })
                .collect();
            plans.push(
                TransportPlan::from_entries(Arc::clone(&support), Arc::clone(&support), entries)
                    .map_err(|e| corrupt(format!("plan s={s}: {e}")))?,
            );
        }
        let plans: [TransportPlan; 2] = plans.try_into().expect("two plans");
        slices.push(SlicePlans::new(barycenter, bandwidths, sources, plans, LOAD_MARGINAL_TOLERANCE)?);
    }
    let model = RepairModel::from_slices(d, slices, file.metadata)?;
    if model.fingerprint() != file.fingerprint {
        return Err(Error::CorruptModel("fingerprint does not match the feature layout".into()));
    }
    Ok(model)
}

/// Writes `contents` to `path` through a synced temporary file and a rename.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        write(&mut out)?;
        out.flush().map_err(|e| Error::io(&tmp, e))?;
        let file = out.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

pub fn save_model(model: &RepairModel, path: &Path) -> Result<()> {
    let text = model_to_string(model)?;
    write_atomic(path, |out| out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))
}

pub fn load_model(path: &Path) -> Result<RepairModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

/// Writes any serializable report as pretty JSON.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, |out| {
        out.write_all(text.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Summary table: `variant` then `<column>_mean,<column>_sd` per column.
pub fn write_summary_csv<W: Write>(table: &SummaryTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variant".to_string()];
    for c in &table.columns {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_sd"));
    }
    w.write_record(&header)?;
    for row in &table.rows {
        let mut fields = vec![row.variant.clone()];
        for cell in &row.cells {
            fields.push(fmt_opt(cell.map(|c| c.mean)));
            fields.push(fmt_opt(cell.map(|c| c.sd)));
        }
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

pub const CURVE_COLUMNS: [&str; 10] = [
    "variable",
    "value",
    "research_mean",
    "research_sd",
    "archive_mean",
    "archive_sd",
    "composite_mean",
    "composite_sd",
    "unrepaired_composite_mean",
    "unrepaired_composite_sd",
];

pub fn write_curve_csv<W: Write>(curve: &Curve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_COLUMNS)?;
    for p in &curve.points {
        w.write_record([
            curve.variable.to_string(),
            p.value.to_string(),
            p.research.mean.to_string(),
            p.research.sd.to_string(),
            p.archive.mean.to_string(),
            p.archive.sd.to_string(),
            p.composite.mean.to_string(),
            p.composite.sd.to_string(),
            p.unrepaired_composite.mean.to_string(),
            p.unrepaired_composite.sd.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

/// Dataset as CSV: feature columns, then `s` and `u`.
pub fn write_dataset_csv<W: Write>(data: &Dataset, feature_names: &[String], out: W) -> Result<()> {
    if feature_names.len() != data.d() {
        return Err(Error::LengthMismatch {
            what: "feature names",
            expected: data.d(),
            found: feature_names.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.extend(["s", "u"]);
    w.write_record(&header)?;
    for r in data.records() {
        let mut fields: Vec<String> = r.features.iter().map(f64::to_string).collect();
        fields.push(r.s.to_string());
        fields.push(r.u.to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

/// Simulation config file: a `[population]` table holding a
/// [`MixtureSpec`] and an optional `[settings]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub population: MixtureSpec,
    #[serde(default)]
    pub settings: ExperimentSettings,
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.population.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
