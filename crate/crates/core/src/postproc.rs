//! Matching predicted cell boxes against PDF text cells.
//!
//! The pipeline: build the grid, score every prediction against the PDF
//! cells with IoU, discard columns without a single good match, learn each
//! column's alignment and median geometry from its good cells, snap the
//! bad cells onto it, assign PDF cells by containment score, drop
//! duplicated columns and finally place leftover PDF cells through the
//! row and column bands of the grid.
//!
//! One pass can change the structure (discarded or created cells), so
//! [`postprocess`] repeats the pass until the grid and boxes no longer
//! change.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{interval_gap, interval_overlap, iou, modified_iou, BoxClass, CellBox};
use crate::structure::{to_html, tokens_to_grid, GridCell, StructureError, TableGrid, TagSequence};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocError {
    #[error("prediction has no cells")]
    EmptyPrediction,
    #[error("every column lacks a good match")]
    AllColumnsDiscarded,
    #[error("{boxes} boxes for {cells} cells")]
    BoxCountMismatch { boxes: usize, cells: usize },
    #[error("IoU threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// A text fragment extracted from a PDF page.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfCell {
    pub bbox: CellBox,
    pub text: String,
}

impl PdfCell {
    pub fn new(bbox: CellBox, text: impl Into<String>) -> Self {
        Self { bbox, text: text.into() }
    }
}

/// Predicted structure with one box per cell, in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    grid: TableGrid,
    boxes: Vec<CellBox>,
}

impl Prediction {
    pub fn new(tags: &TagSequence, boxes: Vec<CellBox>) -> Result<Self, PostprocError> {
        Self::from_grid(tokens_to_grid(tags)?, boxes)
    }

    pub fn from_grid(grid: TableGrid, boxes: Vec<CellBox>) -> Result<Self, PostprocError> {
        if grid.cells().is_empty() {
            return Err(PostprocError::EmptyPrediction);
        }
        if boxes.len() != grid.cells().len() {
            return Err(PostprocError::BoxCountMismatch { boxes: boxes.len(), cells: grid.cells().len() });
        }
        Ok(Self { grid, boxes })
    }

    pub fn grid(&self) -> &TableGrid {
        &self.grid
    }

    pub fn boxes(&self) -> &[CellBox] {
        &self.boxes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Left,
    Centroid,
    Right,
}

impl Alignment {
    /// The reference x coordinate of a box.
    pub fn x_of(&self, b: &CellBox) -> f64 {
        match self {
            Alignment::Left => b.x0,
            Alignment::Centroid => b.center_x(),
            Alignment::Right => b.x1,
        }
    }

    /// Left edge of a box of `width` whose reference coordinate is `x`.
    fn left_edge(&self, x: f64, width: f64) -> f64 {
        match self {
            Alignment::Left => x,
            Alignment::Centroid => x - width / 2.0,
            Alignment::Right => x - width,
        }
    }
}

/// The anchor point whose x coordinates spread least over the boxes.
/// Ties prefer left, then centroid.
pub fn find_alignment(boxes: &[CellBox]) -> Alignment {
    let mut best = (Alignment::Left, f64::INFINITY);
    for a in [Alignment::Left, Alignment::Centroid, Alignment::Right] {
        let (lo, hi) = boxes
            .iter()
            .map(|b| a.x_of(b))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let spread = hi - lo;
        if spread < best.1 {
            best = (a, spread);
        }
    }
    best.0
}

/// Median of a non-empty list; the mean of the two middle values for even
/// lengths.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOrigin {
    Predicted,
    /// Inserted to hold an orphan PDF cell.
    Created,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnModel {
    pub column: usize,
    pub alignment: Alignment,
    pub median_x: f64,
    pub median_width: f64,
    pub median_height: f64,
}

impl ColumnModel {
    fn start(&self) -> f64 {
        self.alignment.left_edge(self.median_x, self.median_width)
    }

    fn end(&self) -> f64 {
        self.start() + self.median_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrphanAction {
    Appended,
    Created,
}

/// What each step did, in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum AuditEntry {
    Round { round: usize, pdf_cells: usize },
    Grid { rows: usize, cols: usize, cells: usize },
    Scored { good: Vec<usize>, bad: Vec<usize> },
    ColumnsDiscarded { columns: Vec<usize>, dropped_pdf: Vec<usize> },
    Columns { models: Vec<ColumnModel> },
    Snapped { cell: usize, from: [f64; 4], to: [f64; 4] },
    Matched { pdf: usize, cell: usize, score: f64 },
    ColumnsDeduplicated { kept: usize, removed: usize, score_kept: f64, score_removed: f64 },
    Orphan { pdf: usize, row: usize, col: usize, cell: usize, action: OrphanAction },
    Converged { rounds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedPdfCell {
    pub pdf: usize,
    /// Grid column the cell was removed with, numbered in the grid of the
    /// round that removed it.
    pub column: usize,
}

/// Output of the pipeline. `boxes`, `content` and `origin` are indexed like
/// `grid.cells()`; `content` holds sorted PDF cell indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTable {
    pub grid: TableGrid,
    pub boxes: Vec<CellBox>,
    pub content: Vec<Vec<usize>>,
    pub origin: Vec<CellOrigin>,
    pub dropped: Vec<DroppedPdfCell>,
    pub audit: Vec<AuditEntry>,
    pub rounds: usize,
}

impl MatchedTable {
    /// The corrected table as a prediction, for another pass.
    pub fn to_prediction(&self) -> Result<Prediction, PostprocError> {
        Prediction::from_grid(self.grid.clone(), self.boxes.clone())
    }

    pub fn tags(&self) -> Result<TagSequence, StructureError> {
        self.grid.to_tags()
    }

    /// Text per cell: the matched PDF cell texts joined with spaces.
    pub fn cell_text(&self, pdf: &[PdfCell]) -> Vec<String> {
        self.content.iter().map(|ids| ids.iter().map(|&k| pdf[k].text.as_str()).collect::<Vec<_>>().join(" ")).collect()
    }

    pub fn to_html(&self, pdf: &[PdfCell]) -> Result<String, StructureError> {
        Ok(to_html(&self.tags()?, Some(&self.cell_text(pdf))))
    }

    /// Index of the cell holding PDF cell `k`.
    pub fn cell_of(&self, k: usize) -> Option<usize> {
        self.content.iter().position(|ids| ids.binary_search(&k).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocConfig {
    pub iou_threshold: f64,
    /// Upper bound on passes; the default is enough for any table whose
    /// passes converge.
    pub max_rounds: Option<usize>,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD, max_rounds: None }
    }
}

/// Runs passes until the corrected grid and boxes are stable.
pub fn postprocess(pred: &Prediction, pdf: &[PdfCell], cfg: &PostprocConfig) -> Result<MatchedTable, PostprocError> {
    if !(cfg.iou_threshold > 0.0 && cfg.iou_threshold < 1.0) {
        return Err(PostprocError::BadThreshold(cfg.iou_threshold));
    }
    let max_rounds = cfg.max_rounds.unwrap_or(pred.boxes.len() + 4);
    let mut state = State {
        grid: pred.grid.clone(),
        boxes: pred.boxes.clone(),
        origin: vec![CellOrigin::Predicted; pred.boxes.len()],
    };
    let mut active: Vec<usize> = (0..pdf.len()).collect();
    let mut dropped = Vec::new();
    let mut audit = Vec::new();
    for round in 1..=max_rounds.max(1) {
        audit.push(AuditEntry::Round { round, pdf_cells: active.len() });
        let out = pass(&state, pdf, &active, cfg.iou_threshold, &mut audit)?;
        let stable = out.state.grid == state.grid && out.state.boxes == state.boxes;
        if !out.dropped.is_empty() {
            active.retain(|k| !out.dropped.iter().any(|d| d.pdf == *k));
            dropped.extend(out.dropped);
        }
        if stable || round == max_rounds.max(1) {
            if stable {
                audit.push(AuditEntry::Converged { rounds: round });
            }
            return Ok(MatchedTable {
                grid: out.state.grid,
                boxes: out.state.boxes,
                content: out.content,
                origin: out.state.origin,
                dropped,
                audit,
                rounds: round,
            });
        }
        state = out.state;
    }
    unreachable!("the loop returns on its last round")
}

/// A single pass of the pipeline.
pub fn postprocess_once(
    pred: &Prediction,
    pdf: &[PdfCell],
    cfg: &PostprocConfig,
) -> Result<MatchedTable, PostprocError> {
    postprocess(pred, pdf, &PostprocConfig { max_rounds: Some(1), ..*cfg })
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    grid: TableGrid,
    boxes: Vec<CellBox>,
    origin: Vec<CellOrigin>,
}

impl State {
    /// Removes grid column `col`, keeping boxes and origins of the cells
    /// that survive. Returns the old-to-new index map.
    fn remove_column(&mut self, col: usize) -> Result<Vec<Option<usize>>, StructureError> {
        let (grid, map) = self.grid.remove_column(col)?;
        let mut boxes = vec![None; grid.cells().len()];
        let mut origin = vec![CellOrigin::Predicted; grid.cells().len()];
        for (old, new) in map.iter().enumerate() {
            if let Some(new) = new {
                boxes[*new] = Some(self.boxes[old]);
                origin[*new] = self.origin[old];
            }
        }
        self.grid = grid;
        self.boxes = boxes.into_iter().map(|b| b.expect("every new cell comes from an old one")).collect();
        self.origin = origin;
        Ok(map)
    }
}

struct PassOutput {
    state: State,
    content: Vec<Vec<usize>>,
    dropped: Vec<DroppedPdfCell>,
}

fn pass(
    input: &State,
    pdf: &[PdfCell],
    active: &[usize],
    threshold: f64,
    audit: &mut Vec<AuditEntry>,
) -> Result<PassOutput, PostprocError> {
    let mut st = input.clone();
    let n = st.grid.cells().len();
    if n == 0 {
        return Err(PostprocError::EmptyPrediction);
    }
    // Grid of the current prediction.
    audit.push(AuditEntry::Grid { rows: st.grid.n_rows(), cols: st.grid.n_cols(), cells: n });

    // Score predicted boxes against the PDF cells.
    let mut good: Vec<bool> = st
        .boxes
        .iter()
        .map(|b| active.iter().map(|&k| iou(b, &pdf[k].bbox)).fold(0.0, f64::max) >= threshold)
        .collect();
    audit.push(AuditEntry::Scored {
        good: (0..n).filter(|&i| good[i]).collect(),
        bad: (0..n).filter(|&i| !good[i]).collect(),
    });

    // Columns without any well-matched cell go.
    let discard: Vec<usize> = (0..st.grid.n_cols())
        .filter(|&j| !st.grid.cells().iter().zip(&good).any(|(c, g)| *g && c.covers_col(j)))
        .collect();
    let mut dropped = Vec::new();
    let mut active: Vec<usize> = active.to_vec();
    if !discard.is_empty() {
        if discard.len() == st.grid.n_cols() {
            return Err(PostprocError::AllColumnsDiscarded);
        }
        // Cells that vanish with their column, each tagged with that column.
        let vanishing: Vec<Option<usize>> =
            st.grid.cells().iter().map(|c| (c.colspan == 1 && discard.contains(&c.col)).then_some(c.col)).collect();
        for &k in &active {
            let best = best_overlap(&st.boxes, &pdf[k].bbox);
            if let Some(col) = best.and_then(|i| vanishing[i]) {
                dropped.push(DroppedPdfCell { pdf: k, column: col });
            }
        }
        active.retain(|k| !dropped.iter().any(|d| d.pdf == *k));
        for &col in discard.iter().rev() {
            let map = st.remove_column(col)?;
            good = remap(&good, &map, st.grid.cells().len(), false);
        }
        audit.push(AuditEntry::ColumnsDiscarded {
            columns: discard.clone(),
            dropped_pdf: dropped.iter().map(|d| d.pdf).collect(),
        });
    }
    let n = st.grid.cells().len();

    // Per-column alignment and median geometry.
    let models: Vec<Option<ColumnModel>> = (0..st.grid.n_cols()).map(|j| column_model(&st, &good, j)).collect();
    audit.push(AuditEntry::Columns { models: models.iter().flatten().copied().collect() });

    // Snap badly matched boxes onto their column model.
    for i in 0..n {
        if good[i] {
            continue;
        }
        let cell = st.grid.cells()[i];
        let from = st.boxes[i];
        if let Some(to) = snap(&from, &cell, &models) {
            if to != from {
                audit.push(AuditEntry::Snapped { cell: i, from: from.to_array(), to: to.to_array() });
                st.boxes[i] = to;
            }
        }
    }

    // Each PDF cell picks its best predicted cell.
    let mut assigned: Vec<Option<(usize, f64)>> = vec![None; pdf.len()];
    for &k in &active {
        let p = &pdf[k].bbox;
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, b) in st.boxes.iter().enumerate() {
            let score = modified_iou(b, p);
            if score <= 0.0 {
                continue;
            }
            let tie = iou(b, p);
            let better = match best {
                None => true,
                Some((_, s, t)) => score > s || (score == s && tie > t),
            };
            if better {
                best = Some((i, score, tie));
            }
        }
        if let Some((i, s, _)) = best {
            assigned[k] = Some((i, s));
            audit.push(AuditEntry::Matched { pdf: k, cell: i, score: s });
        }
    }
    let mut cell_of: Vec<Option<usize>> = assigned.iter().map(|a| a.map(|(i, _)| i)).collect();

    deduplicate_columns(&mut st, pdf, &active, &assigned, &mut cell_of, audit)?;

    // Collect content, then place orphans.
    let mut content: Vec<Vec<usize>> = vec![Vec::new(); st.grid.cells().len()];
    for &k in &active {
        if let Some(i) = cell_of[k] {
            content[i].push(k);
        }
    }
    for &k in &active {
        if cell_of[k].is_some() {
            continue;
        }
        let Some((row, col)) = locate_orphan(&st, &pdf[k].bbox) else { continue };
        let target = st.grid.cell_at(row, col);
        match target {
            Some(i) if !content[i].is_empty() || st.grid.cells()[i].is_spanning() => {
                content[i].push(k);
                audit.push(AuditEntry::Orphan { pdf: k, row, col, cell: i, action: OrphanAction::Appended });
            }
            _ => {
                let is_header = match target {
                    Some(i) => st.grid.cells()[i].is_header,
                    None => row < st.grid.header_rows(),
                };
                let (grid, map, new_idx) = st.grid.replace_with_plain(row, col, is_header)?;
                let m = grid.cells().len();
                let mut boxes = vec![pdf[k].bbox; m];
                let mut origin = vec![CellOrigin::Created; m];
                let mut moved = vec![Vec::new(); m];
                for (old, new) in map.iter().enumerate() {
                    if let Some(new) = new {
                        boxes[*new] = st.boxes[old];
                        origin[*new] = st.origin[old];
                        moved[*new] = std::mem::take(&mut content[old]);
                    }
                }
                boxes[new_idx] = pdf[k].bbox.classed(BoxClass::Content);
                origin[new_idx] = CellOrigin::Created;
                moved[new_idx] = vec![k];
                st = State { grid, boxes, origin };
                content = moved;
                audit.push(AuditEntry::Orphan { pdf: k, row, col, cell: new_idx, action: OrphanAction::Created });
            }
        }
    }
    for ids in &mut content {
        ids.sort_unstable();
    }
    Ok(PassOutput { state: st, content, dropped })
}

fn remap<T: Clone>(values: &[T], map: &[Option<usize>], n_new: usize, fill: T) -> Vec<T> {
    let mut out = vec![fill; n_new];
    for (old, new) in map.iter().enumerate() {
        if let Some(new) = new {
            out[*new] = values[old].clone();
        }
    }
    out
}

/// The box with the largest intersection, lowest index on ties.
fn best_overlap(boxes: &[CellBox], p: &CellBox) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in boxes.iter().enumerate() {
        let a = b.intersection_area(p);
        if a > 0.0 && best.is_none_or(|(_, s)| a > s) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Alignment and medians of column `j` from its good cells. Single-column
/// cells anchored in `j` are preferred; wider cells are used only when the
/// column has nothing else.
fn column_model(st: &State, good: &[bool], j: usize) -> Option<ColumnModel> {
    let pick = |single: bool| -> Vec<CellBox> {
        st.grid
            .cells()
            .iter()
            .zip(&st.boxes)
            .zip(good)
            .filter(|((c, _), g)| **g && c.col == j && (!single || c.colspan == 1))
            .map(|((_, b), _)| *b)
            .collect()
    };
    let mut boxes = pick(true);
    if boxes.is_empty() {
        boxes = pick(false);
    }
    if boxes.is_empty() {
        return None;
    }
    let alignment = find_alignment(&boxes);
    let median_x = median(&mut boxes.iter().map(|b| alignment.x_of(b)).collect::<Vec<_>>());
    let median_width = median(&mut boxes.iter().map(CellBox::width).collect::<Vec<_>>());
    let median_height = median(&mut boxes.iter().map(CellBox::height).collect::<Vec<_>>());
    Some(ColumnModel { column: j, alignment, median_x, median_width, median_height })
}

/// Moves a box horizontally onto its columns' median geometry. The
/// vertical extent is kept.
fn snap(b: &CellBox, cell: &GridCell, models: &[Option<ColumnModel>]) -> Option<CellBox> {
    let (x0, x1) = if cell.colspan == 1 {
        let m = models[cell.col]?;
        (m.start(), m.end())
    } else {
        let x0 = models[cell.col].map_or(b.x0, |m| m.start());
        let x1 = models[cell.last_col()].map_or(b.x1, |m| m.end());
        (x0, x1)
    };
    let x0 = x0.max(0.0);
    CellBox::with_class(x0, b.y0, x1, b.y1, b.klass).ok()
}

fn deduplicate_columns(
    st: &mut State,
    pdf: &[PdfCell],
    active: &[usize],
    assigned: &[Option<(usize, f64)>],
    cell_of: &mut [Option<usize>],
    audit: &mut Vec<AuditEntry>,
) -> Result<(), PostprocError> {
    // PDF cells held by single-column cells, grouped into PDF columns by
    // horizontal overlap.
    let mut members: Vec<(usize, usize)> = active
        .iter()
        .filter_map(|&k| cell_of[k].map(|i| (k, i)))
        .filter(|(_, i)| st.grid.cells()[*i].colspan == 1)
        .collect();
    if members.is_empty() {
        return Ok(());
    }
    members.sort_by(|a, b| pdf[a.0].bbox.x0.total_cmp(&pdf[b.0].bbox.x0).then(a.0.cmp(&b.0)));
    let mut cluster_of = vec![usize::MAX; pdf.len()];
    let mut cluster = 0;
    let mut reach = f64::NEG_INFINITY;
    for (idx, (k, _)) in members.iter().enumerate() {
        let b = &pdf[*k].bbox;
        if idx > 0 && b.x0 >= reach {
            cluster += 1;
        }
        reach = if idx == 0 || b.x0 >= reach { b.x1 } else { reach.max(b.x1) };
        cluster_of[*k] = cluster;
    }
    let n_clusters = cluster + 1;
    let n_cols = st.grid.n_cols();
    let mut votes = vec![vec![0usize; n_clusters]; n_cols];
    for (k, i) in &members {
        votes[st.grid.cells()[*i].col][cluster_of[*k]] += 1;
    }
    let majority: Vec<Option<usize>> = votes
        .iter()
        .map(|v| {
            let (c, n) = v.iter().enumerate().fold((0, 0), |acc, (c, &n)| if n > acc.1 { (c, n) } else { acc });
            (n > 0).then_some(c)
        })
        .collect();
    // Column score: each single-column cell's best containment score.
    let mut best_score = vec![0.0f64; st.grid.cells().len()];
    for (k, i) in &members {
        if let Some((_, s)) = assigned[*k] {
            best_score[*i] = best_score[*i].max(s);
        }
    }
    let score: Vec<f64> = (0..n_cols)
        .map(|j| {
            st.grid
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.col == j && c.colspan == 1)
                .map(|(i, _)| best_score[i])
                .sum()
        })
        .collect();
    let mut remove = Vec::new();
    for c in 0..n_clusters {
        let cols: Vec<usize> = (0..n_cols).filter(|j| majority[*j] == Some(c)).collect();
        if cols.len() < 2 {
            continue;
        }
        let kept = *cols
            .iter()
            .fold(None::<&usize>, |acc, j| match acc {
                Some(a) if score[*a] >= score[*j] => Some(a),
                _ => Some(j),
            })
            .expect("at least two columns");
        for &j in &cols {
            if j != kept {
                audit.push(AuditEntry::ColumnsDeduplicated {
                    kept,
                    removed: j,
                    score_kept: score[kept],
                    score_removed: score[j],
                });
                remove.push(j);
            }
        }
    }
    remove.sort_unstable();
    for &col in remove.iter().rev() {
        let map = st.remove_column(col)?;
        for slot in cell_of.iter_mut() {
            *slot = slot.and_then(|i| map[i]);
        }
    }
    Ok(())
}

/// Band of each grid row along one axis: the extent of the boxes of cells
/// confined to it, or of every cell covering it when none is confined.
fn bands(st: &State, n: usize, axis_y: bool) -> Vec<Option<(f64, f64)>> {
    (0..n)
        .map(|r| {
            let extent = |confined: bool| {
                st.grid
                    .cells()
                    .iter()
                    .zip(&st.boxes)
                    .filter(|(c, _)| {
                        let (first, span) = if axis_y { (c.row, c.rowspan) } else { (c.col, c.colspan) };
                        if confined {
                            first == r && span == 1
                        } else {
                            first <= r && r < first + span
                        }
                    })
                    .map(|(_, b)| if axis_y { (b.y0, b.y1) } else { (b.x0, b.x1) })
                    .fold(None, |acc: Option<(f64, f64)>, (a, b)| match acc {
                        None => Some((a, b)),
                        Some((lo, hi)) => Some((lo.min(a), hi.max(b))),
                    })
            };
            extent(true).or_else(|| extent(false))
        })
        .collect()
}

/// The band with the largest overlap, or the nearest one when none
/// overlaps; the smaller index wins ties.
fn closest_band(bands: &[Option<(f64, f64)>], span: (f64, f64)) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, band) in bands.iter().enumerate() {
        let Some(band) = band else { continue };
        let overlap = interval_overlap(*band, span);
        let gap = interval_gap(*band, span);
        let better = match best {
            None => true,
            Some((_, o, g)) => overlap > o || (overlap == o && overlap == 0.0 && gap < g),
        };
        if better {
            best = Some((i, overlap, gap));
        }
    }
    best.map(|(i, _, _)| i)
}

fn locate_orphan(st: &State, b: &CellBox) -> Option<(usize, usize)> {
    let rows = bands(st, st.grid.n_rows(), true);
    let cols = bands(st, st.grid.n_cols(), false);
    Some((closest_band(&rows, (b.y0, b.y1))?, closest_band(&cols, (b.x0, b.x1))?))
}
