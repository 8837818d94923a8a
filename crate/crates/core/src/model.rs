//! Labelled records, datasets and the `(u, s)` cell partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: `d` continuous features plus the binary sensitive
/// attribute `s` and the binary unprotected attribute `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub features: Vec<f64>,
    pub s: u8,
    pub u: u8,
}

impl LabeledRecord {
    pub fn new(features: Vec<f64>, s: u8, u: u8) -> Self {
        Self { features, s, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Research,
    Archive,
}

/// An ordered, validated collection of records sharing one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<LabeledRecord>,
    d: usize,
    role: Role,
}

/// Checks every record invariant and wraps the records in a [`Dataset`].
pub fn validate_dataset(records: Vec<LabeledRecord>, expected_d: usize, role: Role) -> Result<Dataset> {
    if expected_d == 0 {
        return Err(Error::ZeroDimension);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, r) in records.iter().enumerate() {
        check_record(i, r, expected_d)?;
    }
    Ok(Dataset {
        records,
        d: expected_d,
        role,
    })
}

fn check_record(index: usize, r: &LabeledRecord, d: usize) -> Result<()> {
    if r.features.len() != d {
        return Err(Error::DimensionMismatch {
            record: index,
            expected: d,
            found: r.features.len(),
        });
    }
    if let Some((feature, &value)) = r.features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteFeature {
            record: index,
            feature,
            value,
        });
    }
    for (attribute, value) in [("s", r.s), ("u", r.u)] {
        if value > 1 {
            return Err(Error::AttributeOutOfRange {
                record: index,
                attribute,
                value: value as i64,
            });
        }
    }
    Ok(())
}

impl Dataset {
    /// A dataset with no records. Only produced internally (e.g. repairing an
    /// empty archive); [`validate_dataset`] rejects empty input.
    pub fn empty(d: usize, role: Role) -> Self {
        Self {
            records: Vec::new(),
            d,
            role,
        }
    }

    pub(crate) fn from_parts_unchecked(records: Vec<LabeledRecord>, d: usize, role: Role) -> Self {
        Self { records, d, role }
    }

    pub fn records(&self) -> &[LabeledRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Values of feature `k` for records in group `u`, restricted to
    /// sensitive group `s` when given. Dataset order is preserved.
    pub fn feature_slice(&self, u: u8, s: Option<u8>, k: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.u == u && s.is_none_or(|s| r.s == s))
            .map(|r| r.features[k])
            .collect()
    }

    /// Concatenates two datasets of equal dimension (order: `self` then `other`).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                record: self.len(),
                expected: self.d,
                found: other.d,
            });
        }
        let mut records = self.records.clone();
        records.extend_from_slice(&other.records);
        Ok(Dataset {
            records,
            d: self.d,
            role: self.role,
        })
    }
}

/// Record positions per `(u, s)` cell, indexed `cells[u][s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    cells: [[Vec<usize>; 2]; 2],
}

impl GroupIndex {
    pub fn cell(&self, u: u8, s: u8) -> &[usize] {
        &self.cells[u as usize][s as usize]
    }

    pub fn count(&self, u: u8, s: u8) -> usize {
        self.cell(u, s).len()
    }

    /// Counts as `[n_00, n_01, n_10, n_11]` (index `2u + s`).
    pub fn counts(&self) -> [usize; 4] {
        [
            self.count(0, 0),
            self.count(0, 1),
            self.count(1, 0),
            self.count(1, 1),
        ]
    }

    pub fn group_size(&self, u: u8) -> usize {
        self.count(u, 0) + self.count(u, 1)
    }

    /// First empty cell, as `(u, s)`.
    pub fn first_empty(&self) -> Option<(u8, u8)> {
        CELLS.into_iter().find(|&(u, s)| self.count(u, s) == 0)
    }
}

/// The four `(u, s)` cells in canonical order.
pub const CELLS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

pub fn partition_groups(data: &Dataset) -> GroupIndex {
    let mut cells: [[Vec<usize>; 2]; 2] = Default::default();
    for (i, r) in data.records.iter().enumerate() {
        cells[r.u as usize][r.s as usize].push(i);
    }
    GroupIndex { cells }
}
