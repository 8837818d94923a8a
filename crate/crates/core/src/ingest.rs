//! CSV ingestion with label derivation, and research/archive splitting.

use std::collections::HashMap;
use std::path::Path;

use csv::StringRecord;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{partition_groups, Dataset, LabeledRecord, Role};

/// Column order of the headerless Adult income files.
pub const ADULT_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// How a binary attribute is derived from a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum AttributeRule {
    /// 1 iff the (trimmed) cell equals `equals`.
    Equals { column: String, equals: String },
    /// 1 iff the cell parses to a number `>= at_least`.
    AtLeast { column: String, at_least: f64 },
    /// The cell already holds 0 or 1.
    Binary { column: String },
}

impl AttributeRule {
    pub fn column(&self) -> &str {
        match self {
            AttributeRule::Equals { column, .. }
            | AttributeRule::AtLeast { column, .. }
            | AttributeRule::Binary { column } => column,
        }
    }

    fn apply(&self, raw: &str) -> std::result::Result<u8, String> {
        match self {
            AttributeRule::Equals { equals, .. } => Ok(u8::from(raw == equals)),
            AttributeRule::AtLeast { at_least, column } => raw
                .parse::<f64>()
                .map(|v| u8::from(v >= *at_least))
                .map_err(|_| format!("column '{column}': '{raw}' is not a number")),
            AttributeRule::Binary { column } => match raw.parse::<f64>() {
                Ok(0.0) => Ok(0),
                Ok(1.0) => Ok(1),
                _ => Err(format!("column '{column}': attribute '{raw}' outside {{0,1}}")),
            },
        }
    }
}

/// Which missing values cause a row to be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Drop a row when any column is missing.
    #[default]
    AnyColumn,
    /// Drop a row only when a feature or label column is missing.
    UsedColumns,
}

/// Column selection and label derivation for a CSV source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column names for files without a header row.
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
    /// Continuous feature columns, in model order.
    pub features: Vec<String>,
    pub sensitive: AttributeRule,
    pub unprotected: AttributeRule,
    #[serde(default)]
    pub missing: MissingPolicy,
    #[serde(default = "default_markers")]
    pub missing_markers: Vec<String>,
    /// Fraction of rows allowed to fail parsing before the load fails.
    #[serde(default)]
    pub max_bad_fraction: f64,
}

fn default_true() -> bool {
    true
}

fn default_markers() -> Vec<String> {
    vec!["?".into(), String::new()]
}

impl TabularSchema {
    /// Adult income defaults: `s = 1` for males, `u = 1` for
    /// `education-num >= 13` (Bachelors and above), features age and
    /// hours-per-week, rows with any missing value dropped.
    pub fn adult() -> Self {
        Self {
            has_header: false,
            column_names: Some(ADULT_COLUMNS.iter().map(|c| c.to_string()).collect()),
            features: vec!["age".into(), "hours-per-week".into()],
            sensitive: AttributeRule::Equals {
                column: "sex".into(),
                equals: "Male".into(),
            },
            unprotected: AttributeRule::AtLeast {
                column: "education-num".into(),
                at_least: 13.0,
            },
            missing: MissingPolicy::AnyColumn,
            missing_markers: vec!["?".into()],
            max_bad_fraction: 0.0,
        }
    }

    /// Schema for CSV files written by this crate: named feature columns plus
    /// binary `s` and `u` columns.
    pub fn binary_labels(features: Vec<String>) -> Self {
        Self {
            has_header: true,
            column_names: None,
            features,
            sensitive: AttributeRule::Binary { column: "s".into() },
            unprotected: AttributeRule::Binary { column: "u".into() },
            missing: MissingPolicy::UsedColumns,
            missing_markers: default_markers(),
            max_bad_fraction: 0.0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("schema keeps no feature columns".into()));
        }
        if !self.has_header && self.column_names.is_none() {
            return Err(Error::Config("headerless files need column_names".into()));
        }
        if !(0.0..=1.0).contains(&self.max_bad_fraction) {
            return Err(Error::Config("max_bad_fraction must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn csv_reader_builder(&self) -> csv::ReaderBuilder {
        let mut builder = csv::ReaderBuilder::new();
        builder
            .has_headers(self.has_header)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'|'));
        builder
    }
}

/// Result of parsing one row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Record(LabeledRecord),
    /// Dropped under the missing-value policy.
    Missing,
    Bad(String),
}

/// Resolves schema columns against a header once, then parses rows.
#[derive(Debug, Clone)]
pub struct RowParser {
    feature_idx: Vec<usize>,
    sensitive_idx: usize,
    unprotected_idx: usize,
    width: usize,
    schema: TabularSchema,
}

impl RowParser {
    pub fn new(schema: &TabularSchema, header: &[String]) -> Result<Self> {
        let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
        let find = |name: &str| position.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));
        Ok(Self {
            feature_idx: schema.features.iter().map(|f| find(f)).collect::<Result<_>>()?,
            sensitive_idx: find(schema.sensitive.column())?,
            unprotected_idx: find(schema.unprotected.column())?,
            width: header.len(),
            schema: schema.clone(),
        })
    }

    /// Header to use for a reader: the file's own or the schema's names.
    pub fn header_for(schema: &TabularSchema, reader: &mut csv::Reader<impl std::io::Read>) -> Result<Vec<String>> {
        if schema.has_header {
            Ok(reader.headers()?.iter().map(str::to_string).collect())
        } else {
            Ok(schema.column_names.clone().unwrap_or_default())
        }
    }

    fn is_missing(&self, value: &str) -> bool {
        self.schema.missing_markers.iter().any(|m| m == value)
    }

    pub fn parse(&self, row: &StringRecord) -> RowOutcome {
        if row.len() != self.width {
            return RowOutcome::Bad(format!("expected {} fields, found {}", self.width, row.len()));
        }
        let used = self
            .feature_idx
            .iter()
            .chain([&self.sensitive_idx, &self.unprotected_idx]);
        let missing = match self.schema.missing {
            MissingPolicy::AnyColumn => row.iter().any(|v| self.is_missing(v)),
            MissingPolicy::UsedColumns => used.clone().any(|&i| self.is_missing(&row[i])),
        };
        if missing {
            return RowOutcome::Missing;
        }
        let mut features = Vec::with_capacity(self.feature_idx.len());
        for (&i, name) in self.feature_idx.iter().zip(&self.schema.features) {
            match row[i].parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => return RowOutcome::Bad(format!("column '{name}': '{}' is not a finite number", &row[i])),
            }
        }
        let s = match self.schema.sensitive.apply(&row[self.sensitive_idx]) {
            Ok(v) => v,
            Err(e) => return RowOutcome::Bad(e),
        };
        let u = match self.schema.unprotected.apply(&row[self.unprotected_idx]) {
            Ok(v) => v,
            Err(e) => return RowOutcome::Bad(e),
        };
        RowOutcome::Record(LabeledRecord::new(features, s, u))
    }
}

/// A loaded table with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub rows_read: usize,
    pub dropped_missing: usize,
    pub bad_rows: usize,
}

/// Loads and concatenates one or more CSV files under `schema`.
pub fn load_tabular(paths: &[&Path], schema: &TabularSchema) -> Result<LoadedTable> {
    schema.validate()?;
    let mut records = Vec::new();
    let (mut rows_read, mut dropped_missing, mut bad_rows) = (0usize, 0usize, 0usize);
    for path in paths {
        let mut reader = schema
            .csv_reader_builder()
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::io(*path, std::io::Error::other(e.to_string())),
                _ => Error::Csv(e),
            })?;
        let header = RowParser::header_for(schema, &mut reader)?;
        let parser = RowParser::new(schema, &header)?;
        for row in reader.records() {
            let row = row?;
            rows_read += 1;
            match parser.parse(&row) {
                RowOutcome::Record(r) => records.push(r),
                RowOutcome::Missing => dropped_missing += 1,
                RowOutcome::Bad(message) => {
                    bad_rows += 1;
                    log::warn!("{}: row {rows_read}: {message}", path.display());
                }
            }
        }
    }
    if rows_read > 0 && bad_rows as f64 > schema.max_bad_fraction * rows_read as f64 {
        return Err(Error::TooManyBadRows {
            bad: bad_rows,
            total: rows_read,
            tolerance: schema.max_bad_fraction,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dataset = crate::model::validate_dataset(records, schema.features.len(), Role::Research)?;
    Ok(LoadedTable {
        dataset,
        feature_names: schema.features.clone(),
        rows_read,
        dropped_missing,
        bad_rows,
    })
}

/// Loads the Adult income data under `schema` (see [`TabularSchema::adult`]).
pub fn load_adult(path: &Path, schema: &TabularSchema) -> Result<Dataset> {
    Ok(load_tabular(&[path], schema)?.dataset)
}

/// Maximum number of split seeds tried before giving up.
pub const SPLIT_RETRIES: usize = 100;

/// Uniformly random split into `n_r` research records and the rest. Both
/// parts keep the input order. The split is redrawn (bounded) until every
/// research `(u, s)` cell is non-empty.
pub fn split_research_archive(data: &Dataset, n_r: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n_r >= n {
        return Err(Error::SplitTooLarge { n_r, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SPLIT_RETRIES {
        let mut chosen = vec![false; n];
        for i in sample(&mut rng, n, n_r) {
            chosen[i] = true;
        }
        let (mut research, mut archive) = (Vec::with_capacity(n_r), Vec::with_capacity(n - n_r));
        for (r, &c) in data.records().iter().zip(&chosen) {
            if c {
                research.push(r.clone());
            } else {
                archive.push(r.clone());
            }
        }
        let research = Dataset::from_parts_unchecked(research, data.d(), Role::Research);
        if partition_groups(&research).first_empty().is_none() {
            return Ok((research, Dataset::from_parts_unchecked(archive, data.d(), Role::Archive)));
        }
    }
    Err(Error::RetriesExhausted(SPLIT_RETRIES))
}
