//! Preprocessing primitives and the 48-pipeline search space.
//!
//! Every feature column runs through an imputer, an encoder and a scaler, in
//! that order; any step may be `None`. Fitting only looks at the rows it is
//! given, so fold-wise evaluation never leaks held-out statistics.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{column_profile, Cell, Column, ColumnKind, Profile, Table};

/// Default distinct-value ceiling for one-hot encoding.
pub const DEFAULT_ONEHOT_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Imputer {
    Median,
    MostFrequentValue,
    Mean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Encoder {
    Ordinal,
    OneHot,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scaler {
    MinMax,
    Standard,
    MaxAbs,
    None,
}

impl Imputer {
    pub const ALL: [Imputer; 4] = [
        Imputer::Median,
        Imputer::MostFrequentValue,
        Imputer::Mean,
        Imputer::None,
    ];
}

impl Encoder {
    pub const ALL: [Encoder; 3] = [Encoder::Ordinal, Encoder::OneHot, Encoder::None];
}

impl Scaler {
    pub const ALL: [Scaler; 4] = [
        Scaler::MinMax,
        Scaler::Standard,
        Scaler::MaxAbs,
        Scaler::None,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PipelineTriple {
    pub imputer: Imputer,
    pub encoder: Encoder,
    pub scaler: Scaler,
}

impl PipelineTriple {
    pub const IDENTITY: PipelineTriple = PipelineTriple {
        imputer: Imputer::None,
        encoder: Encoder::None,
        scaler: Scaler::None,
    };

    pub fn new(imputer: Imputer, encoder: Encoder, scaler: Scaler) -> Self {
        PipelineTriple {
            imputer,
            encoder,
            scaler,
        }
    }

    pub fn primitives(&self) -> [Primitive; 3] {
        [
            Primitive::Imputer(self.imputer),
            Primitive::Encoder(self.encoder),
            Primitive::Scaler(self.scaler),
        ]
    }

    /// Position in [`enumerate_pipelines`].
    pub fn id(&self) -> usize {
        let i = Imputer::ALL
            .iter()
            .position(|x| *x == self.imputer)
            .unwrap();
        let e = Encoder::ALL
            .iter()
            .position(|x| *x == self.encoder)
            .unwrap();
        let s = Scaler::ALL.iter().position(|x| *x == self.scaler).unwrap();
        (i * Encoder::ALL.len() + e) * Scaler::ALL.len() + s
    }
}

impl fmt::Display for PipelineTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} -> {:?} -> {:?}",
            self.imputer, self.encoder, self.scaler
        )
    }
}

/// All 4 x 3 x 4 pipelines, imputer-major.
pub fn enumerate_pipelines() -> Vec<PipelineTriple> {
    let mut out = Vec::with_capacity(48);
    for imputer in Imputer::ALL {
        for encoder in Encoder::ALL {
            for scaler in Scaler::ALL {
                out.push(PipelineTriple::new(imputer, encoder, scaler));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Imputer(Imputer),
    Encoder(Encoder),
    Scaler(Scaler),
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Imputer(p) => write!(f, "imputer {p:?}"),
            Primitive::Encoder(p) => write!(f, "encoder {p:?}"),
            Primitive::Scaler(p) => write!(f, "scaler {p:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassBase {
    Numeric,
    NumericHighCard,
    NonNumeric,
    NonNumericHighCard,
    AllMissing,
}

/// Coarse column category used to key the invalid-primitive memo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnClass {
    pub base: ClassBase,
    pub with_missing: bool,
}

impl ColumnClass {
    pub fn of(profile: &Profile, onehot_cap: usize) -> Self {
        let base = match profile.kind {
            _ if profile.cardinality == 0 => ClassBase::AllMissing,
            ColumnKind::Numeric if profile.cardinality > onehot_cap => ClassBase::NumericHighCard,
            ColumnKind::Numeric => ClassBase::Numeric,
            ColumnKind::NonNumeric if profile.cardinality > onehot_cap => {
                ClassBase::NonNumericHighCard
            }
            ColumnKind::NonNumeric => ClassBase::NonNumeric,
        };
        ColumnClass {
            base,
            with_missing: profile.missing_count > 0,
        }
    }

    pub fn of_column(col: &Column, onehot_cap: usize) -> Self {
        Self::of(&column_profile(col), onehot_cap)
    }
}

impl fmt::Display for ColumnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.base)?;
        if self.with_missing {
            write!(f, "+missing")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemoKey {
    pub primitive: Primitive,
    pub class: ColumnClass,
}

impl fmt::Display for MemoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {}", self.primitive, self.class)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrimError {
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(MemoKey),
    #[error("fitted state does not match the pipeline")]
    UnfittedState,
    #[error("non-finite value produced by {0:?}")]
    NumericOverflow(Scaler),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("feature `{name}` (#{feature}): {source}")]
pub struct AssemblyError {
    pub feature: usize,
    pub name: String,
    pub source: PrimError,
}

impl AssemblyError {
    pub fn memo_key(&self) -> Option<MemoKey> {
        match self.source {
            PrimError::InvalidPrimitive(key) => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Categories {
    Numbers(Vec<f64>),
    Texts(Vec<String>),
}

impl Categories {
    pub fn len(&self) -> usize {
        match self {
            Categories::Numbers(v) => v.len(),
            Categories::Texts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index_of(&self, cell: &Cell) -> Option<usize> {
        match (self, cell) {
            (Categories::Numbers(v), Cell::Number(x)) => {
                v.binary_search_by(|c| c.total_cmp(x)).ok()
            }
            (Categories::Texts(v), Cell::Text(s)) => v.binary_search_by(|c| c.as_str().cmp(s)).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalerState {
    MinMax { min: Vec<f64>, max: Vec<f64> },
    Standard { mean: Vec<f64>, std: Vec<f64> },
    MaxAbs { max_abs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedTriple {
    pub spec: PipelineTriple,
    pub kind: ColumnKind,
    pub imputer_stat: Option<Cell>,
    /// Sorted category list; numbers ascending, text lexicographic.
    pub encoder_state: Option<Categories>,
    pub scaler_state: Option<ScalerState>,
}

impl FittedTriple {
    pub fn output_width(&self) -> usize {
        match (self.spec.encoder, &self.encoder_state) {
            (Encoder::OneHot, Some(c)) => c.len(),
            _ => 1,
        }
    }
}

fn invalid(primitive: Primitive, col: &Column, onehot_cap: usize) -> PrimError {
    PrimError::InvalidPrimitive(MemoKey {
        primitive,
        class: ColumnClass::of_column(col, onehot_cap),
    })
}

fn most_frequent(cells: &[&Cell]) -> Option<Cell> {
    // sorted order makes ties resolve to the smallest value
    let mut values: Vec<&Cell> = cells.iter().copied().filter(|c| !c.is_missing()).collect();
    values.sort_by(|a, b| cmp_cells(a, b));
    let mut best: Option<(&Cell, usize)> = None;
    let mut i = 0;
    while i < values.len() {
        let mut j = i;
        while j < values.len() && cmp_cells(values[j], values[i]).is_eq() {
            j += 1;
        }
        if best.is_none_or(|(_, n)| j - i > n) {
            best = Some((values[i], j - i));
        }
        i = j;
    }
    best.map(|(c, _)| c.clone())
}

fn cmp_cells(a: &Cell, b: &Cell) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (Cell::Number(x), Cell::Number(y)) => x.total_cmp(y),
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        (Cell::Missing, Cell::Missing) => Ordering::Equal,
        (Cell::Missing, _) => Ordering::Less,
        (_, Cell::Missing) => Ordering::Greater,
        (Cell::Number(_), Cell::Text(_)) => Ordering::Less,
        (Cell::Text(_), Cell::Number(_)) => Ordering::Greater,
    }
}

fn impute<'a>(cell: &'a Cell, stat: Option<&'a Cell>) -> &'a Cell {
    match (cell, stat) {
        (Cell::Missing, Some(s)) => s,
        _ => cell,
    }
}

/// Per-row encoder output before scaling; `width` values per row.
fn encode(
    cells: &[&Cell],
    spec: Encoder,
    cats: Option<&Categories>,
) -> Result<Array2<f64>, PrimError> {
    let n = cells.len();
    match spec {
        Encoder::None => {
            let mut out = Array2::zeros((n, 1));
            for (r, c) in cells.iter().enumerate() {
                out[[r, 0]] = match c {
                    Cell::Number(x) => *x,
                    _ => f64::NAN,
                };
            }
            Ok(out)
        }
        Encoder::Ordinal => {
            let cats = cats.ok_or(PrimError::UnfittedState)?;
            let mut out = Array2::zeros((n, 1));
            for (r, c) in cells.iter().enumerate() {
                // unseen and missing share the overflow index
                out[[r, 0]] = cats.index_of(c).unwrap_or(cats.len()) as f64;
            }
            Ok(out)
        }
        Encoder::OneHot => {
            let cats = cats.ok_or(PrimError::UnfittedState)?;
            let mut out = Array2::zeros((n, cats.len()));
            for (r, c) in cells.iter().enumerate() {
                if let Some(i) = cats.index_of(c) {
                    out[[r, i]] = 1.0;
                }
            }
            Ok(out)
        }
    }
}

fn fit_scaler(spec: Scaler, encoded: &Array2<f64>) -> Option<ScalerState> {
    let cols = encoded.ncols();
    let n = encoded.nrows() as f64;
    match spec {
        Scaler::None => None,
        Scaler::MinMax => {
            let mut min = vec![f64::INFINITY; cols];
            let mut max = vec![f64::NEG_INFINITY; cols];
            for row in encoded.rows() {
                for (j, &x) in row.iter().enumerate() {
                    min[j] = min[j].min(x);
                    max[j] = max[j].max(x);
                }
            }
            Some(ScalerState::MinMax { min, max })
        }
        Scaler::Standard => {
            let mut mean = vec![0.0; cols];
            for row in encoded.rows() {
                for (j, &x) in row.iter().enumerate() {
                    mean[j] += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; cols];
            for row in encoded.rows() {
                for (j, &x) in row.iter().enumerate() {
                    var[j] += (x - mean[j]).powi(2);
                }
            }
            let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
            Some(ScalerState::Standard { mean, std })
        }
        Scaler::MaxAbs => {
            let mut max_abs = vec![0.0f64; cols];
            for row in encoded.rows() {
                for (j, &x) in row.iter().enumerate() {
                    max_abs[j] = max_abs[j].max(x.abs());
                }
            }
            Some(ScalerState::MaxAbs { max_abs })
        }
    }
}

fn apply_scaler(
    spec: Scaler,
    state: Option<&ScalerState>,
    x: &mut Array2<f64>,
) -> Result<(), PrimError> {
    match (spec, state) {
        (Scaler::None, _) => {}
        (Scaler::MinMax, Some(ScalerState::MinMax { min, max })) => {
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    let range = max[j] - min[j];
                    *v = if range > 0.0 {
                        (*v - min[j]) / range
                    } else {
                        0.0
                    };
                }
            }
        }
        (Scaler::Standard, Some(ScalerState::Standard { mean, std })) => {
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if std[j] > 0.0 {
                        (*v - mean[j]) / std[j]
                    } else {
                        0.0
                    };
                }
            }
        }
        (Scaler::MaxAbs, Some(ScalerState::MaxAbs { max_abs })) => {
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    if max_abs[j] > 0.0 {
                        *v /= max_abs[j];
                    }
                }
            }
        }
        _ => return Err(PrimError::UnfittedState),
    }
    Ok(())
}

/// Fits one pipeline on `fit_rows` of `col`.
pub fn fit_triple(
    spec: PipelineTriple,
    col: &Column,
    fit_rows: &[usize],
    onehot_cap: usize,
) -> Result<FittedTriple, PrimError> {
    let numeric = col.kind == ColumnKind::Numeric;
    let fit_cells: Vec<&Cell> = fit_rows.iter().map(|&r| &col.cells[r]).collect();

    let present: Vec<f64> = fit_cells
        .iter()
        .filter_map(|c| match c {
            Cell::Number(x) => Some(*x),
            _ => None,
        })
        .collect();
    let any_present = fit_cells.iter().any(|c| !c.is_missing());
    let imputer_stat = match spec.imputer {
        Imputer::None => None,
        p @ (Imputer::Mean | Imputer::Median) if !numeric || present.is_empty() => {
            return Err(invalid(Primitive::Imputer(p), col, onehot_cap));
        }
        Imputer::Mean => Some(Cell::Number(
            present.iter().sum::<f64>() / present.len() as f64,
        )),
        Imputer::Median => {
            let mut v = present;
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            let m = if v.len() % 2 == 1 {
                v[mid]
            } else {
                (v[mid - 1] + v[mid]) / 2.0
            };
            Some(Cell::Number(m))
        }
        Imputer::MostFrequentValue if !any_present => {
            return Err(invalid(Primitive::Imputer(spec.imputer), col, onehot_cap));
        }
        Imputer::MostFrequentValue => most_frequent(&fit_cells),
    };

    let imputed: Vec<&Cell> = fit_cells
        .iter()
        .map(|c| impute(c, imputer_stat.as_ref()))
        .collect();

    let encoder_state = match spec.encoder {
        Encoder::None => {
            if !numeric {
                return Err(invalid(Primitive::Encoder(Encoder::None), col, onehot_cap));
            }
            if spec.imputer == Imputer::None && col.missing_count() > 0 {
                // missing cells would reach the learner untouched
                return Err(invalid(Primitive::Imputer(Imputer::None), col, onehot_cap));
            }
            None
        }
        Encoder::Ordinal | Encoder::OneHot => {
            let cats = if numeric {
                let mut v: Vec<f64> = imputed
                    .iter()
                    .filter_map(|c| match c {
                        Cell::Number(x) => Some(*x),
                        _ => None,
                    })
                    .collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                Categories::Numbers(v)
            } else {
                let set: BTreeSet<&str> = imputed
                    .iter()
                    .filter_map(|c| match c {
                        Cell::Text(s) => Some(s.as_str()),
                        _ => None,
                    })
                    .collect();
                Categories::Texts(set.into_iter().map(str::to_string).collect())
            };
            if spec.encoder == Encoder::OneHot && cats.len() > onehot_cap {
                return Err(invalid(
                    Primitive::Encoder(Encoder::OneHot),
                    col,
                    onehot_cap,
                ));
            }
            Some(cats)
        }
    };

    let encoded = encode(&imputed, spec.encoder, encoder_state.as_ref())?;
    let scaler_state = fit_scaler(spec.scaler, &encoded);
    Ok(FittedTriple {
        spec,
        kind: col.kind,
        imputer_stat,
        encoder_state,
        scaler_state,
    })
}

/// Applies a fitted pipeline to `cells`, producing `cells.len()` rows.
pub fn transform_column(fitted: &FittedTriple, cells: &[&Cell]) -> Result<Array2<f64>, PrimError> {
    let spec = fitted.spec;
    if (spec.imputer != Imputer::None) != fitted.imputer_stat.is_some()
        || (spec.encoder != Encoder::None) != fitted.encoder_state.is_some()
        || (spec.scaler != Scaler::None) != fitted.scaler_state.is_some()
    {
        return Err(PrimError::UnfittedState);
    }
    let imputed: Vec<&Cell> = cells
        .iter()
        .map(|c| impute(c, fitted.imputer_stat.as_ref()))
        .collect();
    let mut out = encode(&imputed, spec.encoder, fitted.encoder_state.as_ref())?;
    apply_scaler(spec.scaler, fitted.scaler_state.as_ref(), &mut out)?;
    if spec.scaler != Scaler::None && out.iter().any(|v| v.is_infinite()) {
        return Err(PrimError::NumericOverflow(spec.scaler));
    }
    Ok(out)
}

/// Dense learner input plus the output-column span of every feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: Array2<f64>,
    pub column_map: Vec<Range<usize>>,
}

fn concat(parts: &[Array2<f64>], n_rows: usize) -> DesignMatrix {
    let width: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut matrix = Array2::zeros((n_rows, width));
    let mut column_map = Vec::with_capacity(parts.len());
    let mut at = 0;
    for p in parts {
        let span = at..at + p.ncols();
        matrix.slice_mut(s![.., span.clone()]).assign(p);
        column_map.push(span.clone());
        at = span.end;
    }
    DesignMatrix { matrix, column_map }
}

/// Fits every feature's pipeline on `fit_rows` and transforms `transform_rows`.
///
/// Fails on the first feature whose pipeline is invalid.
pub fn assemble_design_matrix(
    table: &Table,
    spec_per_feature: &[PipelineTriple],
    fit_rows: &[usize],
    transform_rows: &[usize],
    onehot_cap: usize,
) -> Result<DesignMatrix, AssemblyError> {
    let (_, out) = assemble_fit_transform(
        table,
        spec_per_feature,
        fit_rows,
        &[transform_rows],
        onehot_cap,
    )?;
    Ok(out.into_iter().next().unwrap())
}

/// Fits once on `fit_rows`, then returns the fit-row matrix and one matrix per
/// entry of `transform_sets`.
pub fn assemble_fit_transform(
    table: &Table,
    spec_per_feature: &[PipelineTriple],
    fit_rows: &[usize],
    transform_sets: &[&[usize]],
    onehot_cap: usize,
) -> Result<(DesignMatrix, Vec<DesignMatrix>), AssemblyError> {
    assert_eq!(
        spec_per_feature.len(),
        table.n_features(),
        "one pipeline per feature"
    );
    let mut fit_parts = Vec::with_capacity(table.n_features());
    let mut other_parts: Vec<Vec<Array2<f64>>> = vec![Vec::new(); transform_sets.len()];
    for (j, (col, spec)) in table.columns.iter().zip(spec_per_feature).enumerate() {
        let tag = |source| AssemblyError {
            feature: j,
            name: col.name.clone(),
            source,
        };
        let fitted = fit_triple(*spec, col, fit_rows, onehot_cap).map_err(tag)?;
        let cells: Vec<&Cell> = fit_rows.iter().map(|&r| &col.cells[r]).collect();
        fit_parts.push(transform_column(&fitted, &cells).map_err(tag)?);
        for (set, parts) in transform_sets.iter().zip(other_parts.iter_mut()) {
            let cells: Vec<&Cell> = set.iter().map(|&r| &col.cells[r]).collect();
            parts.push(transform_column(&fitted, &cells).map_err(tag)?);
        }
    }
    let fit = concat(&fit_parts, fit_rows.len());
    let others = other_parts
        .iter()
        .zip(transform_sets)
        .map(|(parts, set)| concat(parts, set.len()))
        .collect();
    Ok((fit, others))
}

/// Candidate pipelines plus the grow-only memo of primitives known to fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub triples: Vec<PipelineTriple>,
    pub invalid_memo: BTreeSet<MemoKey>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self::full()
    }
}

impl SearchSpace {
    pub fn full() -> Self {
        SearchSpace {
            triples: enumerate_pipelines(),
            invalid_memo: BTreeSet::new(),
        }
    }

    /// The subspace whose steps are drawn from the given option lists.
    pub fn restricted(imputers: &[Imputer], encoders: &[Encoder], scalers: &[Scaler]) -> Self {
        SearchSpace {
            triples: enumerate_pipelines()
                .into_iter()
                .filter(|t| {
                    imputers.contains(&t.imputer)
                        && encoders.contains(&t.encoder)
                        && scalers.contains(&t.scaler)
                })
                .collect(),
            invalid_memo: BTreeSet::new(),
        }
    }

    /// Returns true when the key was not already known.
    pub fn memo_record(&mut self, primitive: Primitive, class: ColumnClass) -> bool {
        self.invalid_memo.insert(MemoKey { primitive, class })
    }

    pub fn memo_allows(&self, spec: &PipelineTriple, class: ColumnClass) -> bool {
        spec.primitives()
            .iter()
            .all(|&primitive| !self.invalid_memo.contains(&MemoKey { primitive, class }))
    }

    /// Triples allowed for every one of `classes`.
    pub fn candidates(&self, classes: &[ColumnClass]) -> Vec<PipelineTriple> {
        self.triples
            .iter()
            .filter(|t| classes.iter().all(|&c| self.memo_allows(t, c)))
            .copied()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn rows(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    fn triple(i: Imputer, e: Encoder, s: Scaler) -> PipelineTriple {
        PipelineTriple::new(i, e, s)
    }

    fn run(spec: PipelineTriple, col: &Column) -> Array2<f64> {
        let f = fit_triple(spec, col, &rows(col.cells.len()), DEFAULT_ONEHOT_CAP).unwrap();
        let cells: Vec<&Cell> = col.cells.iter().collect();
        transform_column(&f, &cells).unwrap()
    }

    #[test]
    fn forty_eight_pipelines() {
        let all = enumerate_pipelines();
        assert_eq!(all.len(), 48);
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), 48);
        assert_eq!(
            all[0],
            triple(Imputer::Median, Encoder::Ordinal, Scaler::MinMax)
        );
        assert_eq!(
            all.iter().filter(|t| t.encoder == Encoder::None).count(),
            16
        );
        for (i, t) in all.iter().enumerate() {
            assert_eq!(t.id(), i);
        }
    }

    #[test]
    fn triple_json_names() {
        let t = triple(Imputer::MostFrequentValue, Encoder::OneHot, Scaler::None);
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"imputer":"MostFrequentValue","encoder":"OneHot","scaler":"None"}"#
        );
    }

    #[test]
    fn imputer_statistics() {
        let c = Column::numeric("a", &[Some(1.0), None, Some(3.0)]);
        let f = fit_triple(
            triple(Imputer::Mean, Encoder::None, Scaler::None),
            &c,
            &rows(3),
            64,
        )
        .unwrap();
        assert_eq!(f.imputer_stat, Some(Cell::Number(2.0)));

        let c = Column::numeric("a", &[Some(1.0), None, Some(3.0), Some(100.0)]);
        let f = fit_triple(
            triple(Imputer::Median, Encoder::None, Scaler::None),
            &c,
            &rows(4),
            64,
        )
        .unwrap();
        assert_eq!(f.imputer_stat, Some(Cell::Number(3.0)));

        let c = Column::text("t", &[Some("b"), Some("a"), None, Some("b"), Some("a")]);
        let f = fit_triple(
            triple(Imputer::MostFrequentValue, Encoder::Ordinal, Scaler::None),
            &c,
            &rows(5),
            64,
        )
        .unwrap();
        assert_eq!(f.imputer_stat, Some(Cell::Text("a".into())));
    }

    #[test]
    fn mean_on_text_is_invalid() {
        let c = Column::text("t", &[Some("a"), Some("b")]);
        let err = fit_triple(
            triple(Imputer::Mean, Encoder::OneHot, Scaler::None),
            &c,
            &rows(2),
            64,
        )
        .unwrap_err();
        assert_eq!(
            err,
            PrimError::InvalidPrimitive(MemoKey {
                primitive: Primitive::Imputer(Imputer::Mean),
                class: ColumnClass {
                    base: ClassBase::NonNumeric,
                    with_missing: false
                }
            })
        );
    }

    #[test]
    fn other_invalid_cases() {
        let text = Column::text("t", &[Some("a"), Some("b")]);
        let err = fit_triple(
            triple(Imputer::None, Encoder::None, Scaler::MinMax),
            &text,
            &rows(2),
            64,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PrimError::InvalidPrimitive(MemoKey {
                primitive: Primitive::Encoder(Encoder::None),
                ..
            })
        ));

        let many: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        let c = Column::numeric("n", &many);
        let err = fit_triple(
            triple(Imputer::None, Encoder::OneHot, Scaler::None),
            &c,
            &rows(10),
            5,
        )
        .unwrap_err();
        assert_eq!(
            err,
            PrimError::InvalidPrimitive(MemoKey {
                primitive: Primitive::Encoder(Encoder::OneHot),
                class: ColumnClass {
                    base: ClassBase::NumericHighCard,
                    with_missing: false
                }
            })
        );

        let empty = Column::text("e", &[None, None]);
        let err = fit_triple(
            triple(Imputer::MostFrequentValue, Encoder::Ordinal, Scaler::None),
            &empty,
            &rows(2),
            64,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PrimError::InvalidPrimitive(MemoKey {
                class: ColumnClass {
                    base: ClassBase::AllMissing,
                    ..
                },
                ..
            })
        ));

        let gaps = Column::numeric("g", &[Some(1.0), None]);
        let err = fit_triple(PipelineTriple::IDENTITY, &gaps, &rows(2), 64).unwrap_err();
        assert!(matches!(
            err,
            PrimError::InvalidPrimitive(MemoKey {
                primitive: Primitive::Imputer(Imputer::None),
                ..
            })
        ));
    }

    #[test]
    fn standard_uses_population_std() {
        let c = Column::numeric("a", &[Some(1.0), Some(2.0), Some(3.0)]);
        let f = fit_triple(
            triple(Imputer::None, Encoder::None, Scaler::Standard),
            &c,
            &rows(3),
            64,
        )
        .unwrap();
        let Some(ScalerState::Standard { mean, std }) = f.scaler_state else {
            panic!("no scaler state");
        };
        // sqrt(((1-2)^2 + 0 + (3-2)^2) / 3)
        let expected = (2.0f64 / 3.0).sqrt();
        assert!(close(mean[0], 2.0, 1e-15));
        assert!(close(std[0], expected, 1e-15));
        assert!(close(std[0], 0.816497, 1e-6));
    }

    #[test]
    fn scaler_outputs() {
        let c = Column::numeric("a", &[Some(1.0), Some(2.0), Some(3.0)]);
        let out = run(triple(Imputer::None, Encoder::None, Scaler::MinMax), &c);
        assert_eq!(out.column(0).to_vec(), vec![0.0, 0.5, 1.0]);

        let c = Column::numeric("a", &[Some(-2.0), Some(1.0), Some(4.0)]);
        let out = run(triple(Imputer::None, Encoder::None, Scaler::MaxAbs), &c);
        assert_eq!(out.column(0).to_vec(), vec![-0.5, 0.25, 1.0]);

        let c = Column::numeric("a", &[Some(5.0), Some(5.0)]);
        for s in [Scaler::MinMax, Scaler::Standard] {
            let out = run(triple(Imputer::None, Encoder::None, s), &c);
            assert_eq!(out.column(0).to_vec(), vec![0.0, 0.0]);
        }
        let c = Column::numeric("a", &[Some(0.0), Some(0.0)]);
        let out = run(triple(Imputer::None, Encoder::None, Scaler::MaxAbs), &c);
        assert_eq!(out.column(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn onehot_unseen_is_zero_row() {
        let c = Column::text(
            "t",
            &[Some("x"), Some("y"), Some("y"), Some("x"), Some("z")],
        );
        let f = fit_triple(
            triple(Imputer::None, Encoder::OneHot, Scaler::None),
            &c,
            &[0, 1],
            64,
        )
        .unwrap();
        let cells: Vec<&Cell> = [2, 3, 4].iter().map(|&r| &c.cells[r]).collect();
        let out = transform_column(&f, &cells).unwrap();
        assert_eq!(out, ndarray::array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn ordinal_lexicographic_indices() {
        let c = Column::text("t", &[Some("b"), Some("a"), Some("b"), Some("c")]);
        let f = fit_triple(
            triple(Imputer::None, Encoder::Ordinal, Scaler::None),
            &c,
            &[0, 1, 2],
            64,
        )
        .unwrap();
        assert_eq!(
            f.encoder_state,
            Some(Categories::Texts(vec!["a".into(), "b".into()]))
        );
        let cells: Vec<&Cell> = [0, 1, 3].iter().map(|&r| &c.cells[r]).collect();
        let out = transform_column(&f, &cells).unwrap();
        // unseen "c" lands on the overflow index
        assert_eq!(out.column(0).to_vec(), vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn unfitted_state_detected() {
        let c = Column::text("t", &[Some("a")]);
        let f = FittedTriple {
            spec: triple(Imputer::None, Encoder::Ordinal, Scaler::None),
            kind: ColumnKind::NonNumeric,
            imputer_stat: None,
            encoder_state: None,
            scaler_state: None,
        };
        let cells: Vec<&Cell> = c.cells.iter().collect();
        assert_eq!(transform_column(&f, &cells), Err(PrimError::UnfittedState));
    }

    fn small_table() -> Table {
        use crate::tabular::Target;
        Table::new(
            vec![
                Column::text("a", &[Some("p"), Some("q"), Some("p"), Some("q")]),
                Column::text("b", &[Some("x"), Some("y"), Some("z"), Some("x")]),
                Column::numeric("c", &[Some(1.0), Some(2.0), Some(3.0), Some(4.0)]),
            ],
            Target::from_labels("y", &["0", "1", "0", "1"]),
        )
        .unwrap()
    }

    #[test]
    fn assembly_widths_and_spans() {
        let t = small_table();
        let oh = triple(Imputer::None, Encoder::OneHot, Scaler::None);
        let specs = [oh, oh, PipelineTriple::IDENTITY];
        let dm = assemble_design_matrix(&t, &specs, &rows(4), &rows(4), 64).unwrap();
        assert_eq!(dm.matrix.dim(), (4, 6));
        assert_eq!(dm.column_map, vec![0..2, 2..5, 5..6]);
        assert_eq!(dm.matrix.column(5).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn identity_on_numeric_is_raw() {
        use crate::tabular::Target;
        let t = Table::new(
            vec![
                Column::numeric("a", &[Some(1.5), Some(-2.0)]),
                Column::numeric("b", &[Some(7.0), Some(0.25)]),
            ],
            Target::from_labels("y", &["0", "1"]),
        )
        .unwrap();
        let dm = assemble_design_matrix(&t, &[PipelineTriple::IDENTITY; 2], &rows(2), &rows(2), 64)
            .unwrap();
        assert_eq!(dm.matrix, ndarray::array![[1.5, 7.0], [-2.0, 0.25]]);
    }

    #[test]
    fn assembly_fails_fast_with_feature_tag() {
        let t = small_table();
        let oh = triple(Imputer::None, Encoder::OneHot, Scaler::None);
        let specs = [oh, PipelineTriple::IDENTITY, oh];
        let err = assemble_design_matrix(&t, &specs, &rows(4), &rows(4), 64).unwrap_err();
        assert_eq!(err.feature, 1);
        assert_eq!(err.name, "b");
        assert!(err.memo_key().is_some());
    }

    #[test]
    fn memo_filtering() {
        let nonnum = ColumnClass {
            base: ClassBase::NonNumeric,
            with_missing: false,
        };
        let mut space = SearchSpace::full();
        for t in &space.triples {
            assert!(space.memo_allows(t, nonnum));
        }
        assert!(space.memo_record(Primitive::Imputer(Imputer::Mean), nonnum));
        assert!(!space.memo_record(Primitive::Imputer(Imputer::Mean), nonnum));
        assert!(!space.memo_allows(
            &triple(Imputer::Mean, Encoder::OneHot, Scaler::None),
            nonnum
        ));
        assert_eq!(space.candidates(&[nonnum]).len(), 36);
    }

    #[test]
    fn memo_excludes_exactly_onehot_triples() {
        let highcard = ColumnClass {
            base: ClassBase::NumericHighCard,
            with_missing: false,
        };
        let mut space = SearchSpace::full();
        space.memo_record(Primitive::Encoder(Encoder::OneHot), highcard);
        assert!(!space.memo_allows(
            &triple(Imputer::Median, Encoder::OneHot, Scaler::MinMax),
            highcard
        ));
        // brute-force over the 48 triples: 4 imputers x 4 scalers carry OneHot
        let excluded: Vec<PipelineTriple> = enumerate_pipelines()
            .into_iter()
            .filter(|t| !space.memo_allows(t, highcard))
            .collect();
        assert_eq!(excluded.len(), Imputer::ALL.len() * Scaler::ALL.len());
        assert_eq!(excluded.len(), 16);
        assert!(excluded.iter().all(|t| t.encoder == Encoder::OneHot));
        // other classes are untouched
        let numeric = ColumnClass {
            base: ClassBase::Numeric,
            with_missing: false,
        };
        assert_eq!(space.candidates(&[numeric]).len(), 48);
    }

    #[test]
    fn restricted_space() {
        let space = SearchSpace::restricted(&Imputer::ALL, &Encoder::ALL, &[Scaler::None]);
        assert_eq!(space.triples.len(), 12);
    }
}
