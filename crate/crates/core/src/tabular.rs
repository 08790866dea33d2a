//! Column-oriented tabular datasets, CSV ingestion and stratified fold plans.
//!
//! A [`Table`] holds an ordered list of feature [`Column`]s plus a categorical
//! [`Target`]. Cells are either missing, a finite number or free text; a column
//! is [`ColumnKind::Numeric`] only when every present cell is a number.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::canonical_number;

/// Cell strings treated as missing when no explicit set is given.
pub const DEFAULT_MISSING_MARKERS: [&str; 4] = ["", "?", "NA", "NaN"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("target column has {0} distinct class(es); at least 2 are required")]
    DegenerateTarget(usize),
    #[error("feature name `{0}` appears more than once")]
    DuplicateName(String),
    #[error("row {0} has a missing target label")]
    MissingLabel(usize),
    #[error("fold count {k} is invalid for {n_rows} rows")]
    BadK { k: usize, n_rows: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    NonNumeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<Cell>,
}

impl Column {
    /// Builds a column from raw strings, applying the missing markers and kind inference.
    pub fn from_raw<S: AsRef<str>>(name: &str, raw: &[S], missing_markers: &[String]) -> Self {
        let is_marker = |s: &str| missing_markers.iter().any(|m| m == s);
        let all_numeric = raw
            .iter()
            .map(|s| s.as_ref())
            .filter(|s| !is_marker(s))
            .all(|s| s.parse::<f64>().is_ok());
        let any_present = raw.iter().any(|s| !is_marker(s.as_ref()));

        // an all-missing column falls back to NonNumeric
        let kind = if all_numeric && any_present {
            ColumnKind::Numeric
        } else {
            ColumnKind::NonNumeric
        };
        let cells = raw
            .iter()
            .map(|s| {
                let s = s.as_ref();
                if is_marker(s) {
                    return Cell::Missing;
                }
                match kind {
                    ColumnKind::Numeric => match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Number(v),
                        _ => Cell::Missing,
                    },
                    ColumnKind::NonNumeric => Cell::Text(s.to_string()),
                }
            })
            .collect();
        Column {
            name: name.to_string(),
            kind,
            cells,
        }
    }

    pub fn numeric(name: &str, values: &[Option<f64>]) -> Self {
        let cells = values
            .iter()
            .map(|v| match v {
                Some(x) if x.is_finite() => Cell::Number(*x),
                _ => Cell::Missing,
            })
            .collect();
        Column {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            cells,
        }
    }

    pub fn text(name: &str, values: &[Option<&str>]) -> Self {
        let cells = values
            .iter()
            .map(|v| match v {
                Some(s) => Cell::Text(s.to_string()),
                None => Cell::Missing,
            })
            .collect();
        Column {
            name: name.to_string(),
            kind: ColumnKind::NonNumeric,
            cells,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_missing()).count()
    }
}

/// Class labels of a table, stored as indices into the sorted list of distinct labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: String,
    pub classes: Vec<String>,
    pub codes: Vec<usize>,
}

impl Target {
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let classes: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|s| {
                classes
                    .binary_search_by(|c| c.as_str().cmp(s.as_ref()))
                    .unwrap()
            })
            .collect();
        Target {
            name: name.to_string(),
            classes,
            codes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, row: usize) -> &str {
        &self.classes[self.codes[row]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub target: Target,
    n_rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>, target: Target) -> Result<Self, TableError> {
        let n_rows = target.codes.len();
        for col in &columns {
            if col.cells.len() != n_rows {
                return Err(TableError::RaggedRows {
                    row: n_rows.min(col.cells.len()),
                    expected: n_rows,
                    found: col.cells.len(),
                });
            }
        }
        if target.n_classes() < 2 {
            return Err(TableError::DegenerateTarget(target.n_classes()));
        }
        let mut seen = std::collections::HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.as_str()) {
                return Err(TableError::DuplicateName(col.name.clone()));
            }
        }
        Ok(Table {
            columns,
            target,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    /// Writes the table as CSV with the target as the last column.
    ///
    /// Numbers use the shortest decimal that parses back to the same value and
    /// missing cells are written as empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names();
        header.push(&self.target.name);
        w.write_record(&header)?;
        for row in 0..self.n_rows {
            let mut rec: Vec<String> = self
                .columns
                .iter()
                .map(|c| match &c.cells[row] {
                    Cell::Missing => String::new(),
                    Cell::Number(v) => format!("{v}"),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            rec.push(self.target.label(row).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        self.write_csv(File::create(path)?)
    }
}

pub fn default_missing_markers() -> Vec<String> {
    DEFAULT_MISSING_MARKERS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Loads a CSV file (header row required) into a [`Table`].
pub fn load_csv(
    path: impl AsRef<Path>,
    target_name: &str,
    missing_markers: &[String],
) -> Result<Table, TableError> {
    read_csv(File::open(path)?, target_name, missing_markers)
}

pub fn read_csv<R: Read>(
    reader: R,
    target_name: &str,
    missing_markers: &[String],
) -> Result<Table, TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| TableError::MissingTarget(target_name.to_string()))?;

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(TableError::RaggedRows {
                row: i + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            raw[j].push(field.to_string());
        }
    }

    let labels = &raw[target_idx];
    if let Some(row) = labels
        .iter()
        .position(|l| missing_markers.iter().any(|m| m == l))
    {
        return Err(TableError::MissingLabel(row + 1));
    }
    let target = Target::from_labels(target_name, labels);
    let columns = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(j, name)| Column::from_raw(name, &raw[j], missing_markers))
        .collect();
    Table::new(columns, target)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ColumnKind,
    pub cardinality: usize,
    pub missing_count: usize,
}

/// Kind, distinct-value count and missing count for one column.
///
/// Numbers are compared by their canonical quantized form, the same one the
/// term-frequency embedding uses.
pub fn column_profile(col: &Column) -> Profile {
    let mut distinct = BTreeSet::new();
    let mut missing = 0;
    for cell in &col.cells {
        match cell {
            Cell::Missing => missing += 1,
            Cell::Number(v) => {
                distinct.insert(canonical_number(*v));
            }
            Cell::Text(s) => {
                distinct.insert(s.clone());
            }
        }
    }
    Profile {
        kind: col.kind,
        cardinality: distinct.len(),
        missing_count: missing,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// Classes with fewer members than folds.
    #[serde(default)]
    pub small_classes: Vec<String>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&r| self.assignments[r] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment.
///
/// Rows of each class are shuffled, classes are laid end to end and positions
/// are dealt round-robin, so every fold's count of a class is within one of
/// that class's proportional share.
pub fn make_folds(table: &Table, k: usize, seed: u64) -> Result<FoldPlan, TableError> {
    let n = table.n_rows();
    if k < 2 || k > n {
        return Err(TableError::BadK { k, n_rows: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &c) in table.target.codes.iter().enumerate() {
        by_class.entry(c).or_default().push(row);
    }
    let mut small_classes = Vec::new();
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for (class, mut rows) in by_class {
        if rows.len() < k {
            log::warn!(
                "class `{}` has {} rows, fewer than {k} folds",
                table.target.classes[class],
                rows.len()
            );
            small_classes.push(table.target.classes[class].clone());
        }
        rows.shuffle(&mut rng);
        for row in rows {
            assignments[row] = pos % k;
            pos += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        small_classes,
    })
}
