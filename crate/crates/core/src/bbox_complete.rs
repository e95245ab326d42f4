//! Completion of missing cell boxes from the boxes that are known.
//!
//! Border lines between grid rows and columns are estimated from the edges
//! of known boxes, then every missing cell receives the rectangle of the
//! grid squares it covers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PerComplexity, SizeBounds, TableRecord};
use crate::geometry::{BoxClass, CellBox};
use crate::structure::{Complexity, GridCell, TableGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompletionError {
    #[error("table is not strict")]
    NonStrictTable,
    #[error("no known box bounds the {side} edge of {axis} {index}")]
    InsufficientCoverage { axis: Axis, index: usize, side: &'static str },
    #[error("border lines along {axis} are not increasing: {bounds:?}")]
    DegenerateGeometry { axis: Axis, bounds: Vec<f64> },
    #[error("{got} boxes for {cells} cells")]
    LengthMismatch { got: usize, cells: usize },
    #[error("no cell boxes at all")]
    NoBoxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Row => "row",
            Axis::Column => "column",
        })
    }
}

/// Border lines of a table grid: `n_rows + 1` y coordinates and
/// `n_cols + 1` x coordinates, both strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    row_bounds: Vec<f64>,
    col_bounds: Vec<f64>,
}

impl GridGeometry {
    pub fn new(row_bounds: Vec<f64>, col_bounds: Vec<f64>) -> Result<Self, CompletionError> {
        check_increasing(Axis::Row, &row_bounds)?;
        check_increasing(Axis::Column, &col_bounds)?;
        Ok(Self { row_bounds, col_bounds })
    }

    pub fn row_bounds(&self) -> &[f64] {
        &self.row_bounds
    }

    pub fn col_bounds(&self) -> &[f64] {
        &self.col_bounds
    }

    pub fn n_rows(&self) -> usize {
        self.row_bounds.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.col_bounds.len() - 1
    }

    pub fn row_band(&self, row: usize) -> (f64, f64) {
        (self.row_bounds[row], self.row_bounds[row + 1])
    }

    pub fn col_band(&self, col: usize) -> (f64, f64) {
        (self.col_bounds[col], self.col_bounds[col + 1])
    }

    /// Rectangle of the grid squares covered by `cell`.
    pub fn cell_box(&self, cell: &GridCell, klass: BoxClass) -> CellBox {
        CellBox {
            x0: self.col_bounds[cell.col],
            y0: self.row_bounds[cell.row],
            x1: self.col_bounds[cell.col + cell.colspan],
            y1: self.row_bounds[cell.row + cell.rowspan],
            klass,
        }
    }

    pub fn width(&self) -> f64 {
        self.col_bounds[self.col_bounds.len() - 1] - self.col_bounds[0]
    }

    pub fn height(&self) -> f64 {
        self.row_bounds[self.row_bounds.len() - 1] - self.row_bounds[0]
    }
}

fn check_increasing(axis: Axis, bounds: &[f64]) -> Result<(), CompletionError> {
    let ok = bounds.len() >= 2 && bounds.iter().all(|b| b.is_finite()) && bounds.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(CompletionError::DegenerateGeometry { axis, bounds: bounds.to_vec() })
    }
}

/// Estimates the grid border lines from the known boxes.
///
/// A box gives evidence for the leading edge of the band where it is
/// anchored and the trailing edge of the last band it covers. Interior
/// borders are the midpoint between the largest trailing edge on one side
/// and the smallest leading edge on the other; outer borders are the
/// extremes over all known boxes.
pub fn derive_borders(grid: &TableGrid, known: &[Option<CellBox>]) -> Result<GridGeometry, CompletionError> {
    if !grid.is_strict() {
        return Err(CompletionError::NonStrictTable);
    }
    if known.len() != grid.cells().len() {
        return Err(CompletionError::LengthMismatch { got: known.len(), cells: grid.cells().len() });
    }
    let pairs: Vec<(&GridCell, &CellBox)> =
        grid.cells().iter().zip(known).filter_map(|(c, b)| b.as_ref().map(|b| (c, b))).collect();
    if pairs.is_empty() {
        return Err(CompletionError::NoBoxes);
    }
    let cols = axis_bounds(Axis::Column, grid.n_cols(), pairs.iter().map(|(c, b)| (c.col, c.last_col(), b.x0, b.x1)))?;
    let rows = axis_bounds(Axis::Row, grid.n_rows(), pairs.iter().map(|(c, b)| (c.row, c.last_row(), b.y0, b.y1)))?;
    GridGeometry::new(rows, cols)
}

/// `spans` yields (first band, last band, leading edge, trailing edge).
fn axis_bounds(
    axis: Axis,
    n: usize,
    spans: impl Iterator<Item = (usize, usize, f64, f64)>,
) -> Result<Vec<f64>, CompletionError> {
    let mut lead = vec![f64::INFINITY; n];
    let mut trail = vec![f64::NEG_INFINITY; n];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (first, last, a, b) in spans {
        lead[first] = lead[first].min(a);
        trail[last] = trail[last].max(b);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(lo);
    for j in 1..n {
        if trail[j - 1] == f64::NEG_INFINITY {
            return Err(CompletionError::InsufficientCoverage { axis, index: j - 1, side: "trailing" });
        }
        if lead[j] == f64::INFINITY {
            return Err(CompletionError::InsufficientCoverage { axis, index: j, side: "leading" });
        }
        bounds.push((trail[j - 1] + lead[j]) / 2.0);
    }
    bounds.push(hi);
    check_increasing(axis, &bounds)?;
    Ok(bounds)
}

/// Fills every missing box from the geometry. Known boxes pass through.
pub fn fill_missing(
    grid: &TableGrid,
    known: &[Option<CellBox>],
    classes: &[BoxClass],
    geom: &GridGeometry,
) -> Vec<CellBox> {
    grid.cells()
        .iter()
        .zip(known)
        .zip(classes)
        .map(|((cell, b), klass)| b.unwrap_or_else(|| geom.cell_box(cell, *klass)))
        .collect()
}

/// Completes one record, returning it with every box present.
pub fn complete_record(rec: TableRecord) -> Result<TableRecord, CompletionError> {
    let known: Vec<Option<CellBox>> = rec.cells().iter().map(|c| c.bbox).collect();
    if rec.missing_boxes() == 0 {
        return Ok(rec);
    }
    let geom = derive_borders(rec.grid(), &known)?;
    let classes: Vec<BoxClass> = rec.cells().iter().map(|c| c.klass).collect();
    let boxes = fill_missing(rec.grid(), &known, &classes, &geom);
    Ok(rec.with_boxes(boxes.into_iter().map(Some).collect()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionCounts {
    /// Records that had every box already.
    pub complete: usize,
    /// Records whose missing boxes were generated.
    pub completed: usize,
    /// Records dropped for any reason.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub id: String,
    pub complexity: Complexity,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub input: usize,
    /// Records outside the size bounds, removed before completion.
    pub size_filtered: usize,
    /// Non-strict tables among all input records.
    pub non_strict_before_filter: usize,
    /// Non-strict tables among records inside the size bounds.
    pub non_strict_after_filter: usize,
    pub output: usize,
    pub per_complexity: PerComplexity<CompletionCounts>,
    pub dropped: Vec<DropEntry>,
}

impl CompletionReport {
    /// Merges partial reports; entries are concatenated in argument order.
    pub fn merge(mut self, other: CompletionReport) -> CompletionReport {
        self.input += other.input;
        self.size_filtered += other.size_filtered;
        self.non_strict_before_filter += other.non_strict_before_filter;
        self.non_strict_after_filter += other.non_strict_after_filter;
        self.output += other.output;
        for c in [Complexity::Simple, Complexity::Complex] {
            let (a, b) = (self.per_complexity.get_mut(c), other.per_complexity.get(c));
            a.complete += b.complete;
            a.completed += b.completed;
            a.dropped += b.dropped;
        }
        self.dropped.extend(other.dropped);
        self
    }
}

/// Size-filters, then completes every strict record. Non-strict records and
/// records whose boxes cannot be completed are dropped with a report entry.
pub fn complete_dataset(records: Vec<TableRecord>, bounds: Option<SizeBounds>) -> (Vec<TableRecord>, CompletionReport) {
    let mut report = CompletionReport { input: records.len(), ..Default::default() };
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let strict = rec.is_strict();
        report.non_strict_before_filter += usize::from(!strict);
        if let Some(b) = bounds {
            if !b.contains(rec.n_rows(), rec.n_cols()) {
                report.size_filtered += 1;
                continue;
            }
        }
        report.non_strict_after_filter += usize::from(!strict);
        let complexity = rec.complexity();
        let id = rec.id.clone();
        let had_missing = rec.missing_boxes() > 0;
        let result = if strict { complete_record(rec) } else { Err(CompletionError::NonStrictTable) };
        let counts = report.per_complexity.get_mut(complexity);
        match result {
            Ok(done) => {
                if had_missing {
                    counts.completed += 1;
                } else {
                    counts.complete += 1;
                }
                out.push(done);
            }
            Err(e) => {
                counts.dropped += 1;
                report.dropped.push(DropEntry { id, complexity, reason: e.to_string() });
            }
        }
    }
    report.output = out.len();
    (out, report)
}
