//! Synthetic table generation: random structures with spans, templated
//! content, a monospace layout model giving exact cell boxes, and SVG
//! rendering.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox_complete::GridGeometry;
use crate::dataset::{write_jsonl, RecordCell, Split, SplitRatios, TableRecord};
use crate::geometry::{BoxClass, CellBox};
use crate::seed::{derive_seed, stream_seed};
use crate::structure::{GridCell, StructureError, TableGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(
        "span coverage {coverage} is unreachable for a {rows}x{cols} table with max span {max_span} in {mode:?} mode"
    )]
    InfeasibleParams { rows: usize, cols: usize, max_span: usize, coverage: f64, mode: SpanMode },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanMode {
    None,
    HeaderOnly,
    RowOnly,
    ColumnOnly,
    RowAndColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_header_rows: usize,
    pub span_mode: SpanMode,
    pub max_span: usize,
    /// Fraction of grid squares covered by spanning cells.
    pub span_coverage: f64,
}

impl StructureParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.n_rows == 0 || self.n_cols == 0 {
            return bad(format!("{}x{} table", self.n_rows, self.n_cols));
        }
        if self.n_header_rows == 0 || self.n_header_rows >= self.n_rows {
            return bad(format!("{} header rows in a table of {} rows", self.n_header_rows, self.n_rows));
        }
        if self.max_span < 2 {
            return bad(format!("max span {} (need at least 2)", self.max_span));
        }
        if !(0.0..=1.0).contains(&self.span_coverage) {
            return bad(format!("span coverage {}", self.span_coverage));
        }
        Ok(())
    }

    /// Number of grid squares the spans should cover.
    pub fn target_squares(&self) -> usize {
        (self.span_coverage * (self.n_rows * self.n_cols) as f64).round() as usize
    }

    fn infeasible(&self) -> SynthError {
        SynthError::InfeasibleParams {
            rows: self.n_rows,
            cols: self.n_cols,
            max_span: self.max_span,
            coverage: self.span_coverage,
            mode: self.span_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    row: usize,
    col: usize,
    rowspan: usize,
    colspan: usize,
}

impl Rect {
    fn area(&self) -> usize {
        self.rowspan * self.colspan
    }
}

/// Occupancy of the grid during span placement. Every row and every column
/// keeps at least one square outside any span, so each band has a plain
/// cell that bounds it on both sides.
struct Board {
    n_rows: usize,
    n_cols: usize,
    taken: Vec<bool>,
    free_in_row: Vec<usize>,
    free_in_col: Vec<usize>,
    placed: Vec<Rect>,
    covered: usize,
}

impl Board {
    fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            taken: vec![false; n_rows * n_cols],
            free_in_row: vec![n_cols; n_rows],
            free_in_col: vec![n_rows; n_cols],
            placed: Vec::new(),
            covered: 0,
        }
    }

    fn fits(&self, r: &Rect) -> bool {
        if r.row + r.rowspan > self.n_rows || r.col + r.colspan > self.n_cols {
            return false;
        }
        for i in r.row..r.row + r.rowspan {
            if self.free_in_row[i] <= r.colspan {
                return false;
            }
            for j in r.col..r.col + r.colspan {
                if self.taken[i * self.n_cols + j] {
                    return false;
                }
            }
        }
        (r.col..r.col + r.colspan).all(|j| self.free_in_col[j] > r.rowspan)
    }

    fn place(&mut self, r: Rect) {
        for i in r.row..r.row + r.rowspan {
            self.free_in_row[i] -= r.colspan;
            for j in r.col..r.col + r.colspan {
                self.taken[i * self.n_cols + j] = true;
            }
        }
        for j in r.col..r.col + r.colspan {
            self.free_in_col[j] -= r.rowspan;
        }
        self.covered += r.area();
        self.placed.push(r);
    }
}

/// Row ranges spans may occupy, and the allowed span extents.
struct Placement {
    regions: Vec<(usize, usize)>,
    row_spans: bool,
    col_spans: bool,
}

impl Placement {
    fn for_params(p: &StructureParams) -> Option<Self> {
        let header = (0, p.n_header_rows);
        let body = (p.n_header_rows, p.n_rows);
        let (regions, row_spans, col_spans) = match p.span_mode {
            SpanMode::None => return None,
            SpanMode::HeaderOnly => (vec![header], true, true),
            SpanMode::RowOnly => (vec![header, body], true, false),
            SpanMode::ColumnOnly => (vec![header, body], false, true),
            SpanMode::RowAndColumn => (vec![header, body], true, true),
        };
        Some(Self { regions, row_spans, col_spans })
    }

    fn shapes(&self, p: &StructureParams, max_area: usize) -> Vec<(usize, usize)> {
        let max_rs = if self.row_spans { p.max_span.min(p.n_rows) } else { 1 };
        let max_cs = if self.col_spans { p.max_span.min(p.n_cols) } else { 1 };
        let mut out = Vec::new();
        for rs in 1..=max_rs {
            for cs in 1..=max_cs {
                let a = rs * cs;
                if a >= 2 && a <= max_area {
                    out.push((rs, cs));
                }
            }
        }
        out
    }

    fn all_rects(&self, board: &Board, shapes: &[(usize, usize)]) -> Vec<Rect> {
        let mut out = Vec::new();
        for &(lo, hi) in &self.regions {
            for &(rs, cs) in shapes {
                if hi - lo < rs || board.n_cols < cs {
                    continue;
                }
                for row in lo..=hi - rs {
                    for col in 0..=board.n_cols - cs {
                        let r = Rect { row, col, rowspan: rs, colspan: cs };
                        if board.fits(&r) {
                            out.push(r);
                        }
                    }
                }
            }
        }
        out
    }
}

const RANDOM_ATTEMPTS: usize = 48;
const RESTARTS: usize = 8;

/// Generates a strict grid with spans covering the requested fraction of
/// squares, to within one square. Spans stay inside the header or inside
/// the body.
pub fn gen_structure(params: &StructureParams, seed: u64) -> Result<TableGrid, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = params.target_squares();
    let board = match Placement::for_params(params) {
        None if target > 0 => return Err(params.infeasible()),
        None => Board::new(params.n_rows, params.n_cols),
        Some(placement) => {
            let mut found = None;
            for _ in 0..RESTARTS {
                let board = place_spans(params, &placement, target, &mut rng);
                if board.covered + 1 >= target && board.covered <= target + 1 {
                    found = Some(board);
                    break;
                }
            }
            found.ok_or_else(|| params.infeasible())?
        }
    };
    let mut cells: Vec<GridCell> = board
        .placed
        .iter()
        .map(|r| GridCell { row: r.row, col: r.col, rowspan: r.rowspan, colspan: r.colspan, is_header: false })
        .collect();
    for i in 0..params.n_rows {
        for j in 0..params.n_cols {
            if !board.taken[i * params.n_cols + j] {
                cells.push(GridCell::plain(i, j));
            }
        }
    }
    for c in &mut cells {
        c.is_header = c.row < params.n_header_rows;
    }
    let grid = TableGrid::from_cells(params.n_rows, params.n_cols, cells)?;
    grid.to_tags()?;
    Ok(grid)
}

fn place_spans<R: Rng>(params: &StructureParams, placement: &Placement, target: usize, rng: &mut R) -> Board {
    let mut board = Board::new(params.n_rows, params.n_cols);
    loop {
        let remaining = target.saturating_sub(board.covered);
        // With one square left, overshooting by one is as close as stopping.
        let max_area = match remaining {
            0 => break,
            1 if rng.random_bool(0.5) => 2,
            1 => break,
            r => r + 1,
        };
        let shapes = placement.shapes(params, max_area);
        let mut pick = None;
        for _ in 0..RANDOM_ATTEMPTS {
            let Some(&(rs, cs)) = shapes.choose(rng) else { break };
            let &(lo, hi) = placement.regions.choose(rng).expect("at least one region");
            if hi - lo < rs || params.n_cols < cs {
                continue;
            }
            let r = Rect {
                row: rng.random_range(lo..=hi - rs),
                col: rng.random_range(0..=params.n_cols - cs),
                rowspan: rs,
                colspan: cs,
            };
            if board.fits(&r) {
                pick = Some(r);
                break;
            }
        }
        if pick.is_none() {
            pick = placement.all_rects(&board, &shapes).choose(rng).copied();
        }
        match pick {
            Some(r) => board.place(r),
            None => break,
        }
    }
    board
}

/// Text source for cell content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentTemplate {
    pub name: String,
    pub pool: Vec<String>,
    /// Probability that a token is random text instead of a pool term.
    pub random_ratio: f64,
    /// Probability that a body cell is left empty.
    #[serde(default)]
    pub empty_fraction: f64,
}

impl ContentTemplate {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.random_ratio) || !(0.0..=1.0).contains(&self.empty_fraction) {
            return Err(SynthError::InvalidParams(format!(
                "content template {:?}: ratios must lie in [0, 1]",
                self.name
            )));
        }
        if self.pool.is_empty() && self.random_ratio < 1.0 {
            return Err(SynthError::InvalidParams(format!("content template {:?} has an empty term pool", self.name)));
        }
        Ok(())
    }
}

const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn random_token<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.5) {
        let whole = rng.random_range(0..10_000u32);
        match rng.random_range(0..3) {
            0 => whole.to_string(),
            1 => format!("{}.{:02}", whole / 10, rng.random_range(0..100u32)),
            _ => format!("{}%", whole % 100),
        }
    } else {
        let len = rng.random_range(2..=8);
        (0..len).map(|_| *ALNUM.choose(rng).expect("non-empty alphabet") as char).collect()
    }
}

/// Content tokens per cell. Header cells are always filled; body cells are
/// left empty with the template's empty fraction.
pub fn gen_content(grid: &TableGrid, tmpl: &ContentTemplate, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grid.cells()
        .iter()
        .map(|cell| {
            let empty = !cell.is_header && rng.random_bool(tmpl.empty_fraction);
            if empty {
                return Vec::new();
            }
            let n = rng.random_range(1..=4);
            (0..n)
                .map(|_| {
                    if tmpl.pool.is_empty() || rng.random_bool(tmpl.random_ratio) {
                        random_token(&mut rng)
                    } else {
                        tmpl.pool.choose(&mut rng).expect("non-empty pool").clone()
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BorderRule {
    None,
    /// Lines under the header and around the table.
    Horizontal,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleTemplate {
    pub name: String,
    pub font_size: f64,
    pub char_width: f64,
    pub padding: f64,
    pub border: BorderRule,
    pub border_color: String,
    pub background: String,
    pub text_color: String,
    pub header_fill: Option<String>,
    pub header_text_color: Option<String>,
    /// Fill of every other body row.
    pub stripe_fill: Option<String>,
}

impl StyleTemplate {
    pub fn validate(&self) -> Result<(), SynthError> {
        // Written so that NaN fails too.
        let sane = self.font_size > 0.0 && self.char_width > 0.0 && self.padding >= 0.0;
        if !sane {
            return Err(SynthError::InvalidParams(format!(
                "style {:?}: font size and character width must be positive, padding non-negative",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub geometry: GridGeometry,
    pub boxes: Vec<CellBox>,
    pub width: f64,
    pub height: f64,
}

fn char_count(tokens: &[String]) -> usize {
    tokens.iter().map(|t| t.chars().count()).sum::<usize>() + tokens.len().saturating_sub(1)
}

/// Monospace layout. A column is as wide as its widest cell text plus
/// padding, with a spanning cell's requirement split evenly over its
/// columns; every row is one line high.
pub fn layout(grid: &TableGrid, content: &[Vec<String>], style: &StyleTemplate) -> Layout {
    let mut widths = vec![style.char_width.max(2.0 * style.padding); grid.n_cols()];
    for (cell, tokens) in grid.cells().iter().zip(content) {
        let need = char_count(tokens) as f64 * style.char_width + 2.0 * style.padding;
        let share = need / cell.colspan as f64;
        for w in &mut widths[cell.col..cell.col + cell.colspan] {
            *w = w.max(share);
        }
    }
    let row_height = style.font_size + 2.0 * style.padding;
    let mut col_bounds = vec![0.0];
    for w in &widths {
        col_bounds.push(col_bounds[col_bounds.len() - 1] + w);
    }
    let row_bounds: Vec<f64> = (0..=grid.n_rows()).map(|i| i as f64 * row_height).collect();
    let geometry = GridGeometry::new(row_bounds, col_bounds).expect("positive widths and heights");
    let boxes = grid
        .cells()
        .iter()
        .zip(content)
        .map(|(cell, tokens)| {
            let klass = if tokens.is_empty() { BoxClass::Empty } else { BoxClass::Content };
            geometry.cell_box(cell, klass)
        })
        .collect();
    let (width, height) = (geometry.width(), geometry.height());
    Layout { geometry, boxes, width, height }
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// One `rect` per cell and one `text` per non-empty cell.
pub fn render_svg(grid: &TableGrid, layout: &Layout, content: &[Vec<String>], style: &StyleTemplate) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="monospace" font-size="{fs}">"#,
        w = layout.width,
        h = layout.height,
        fs = style.font_size
    );
    let header_rows = grid.header_rows();
    for (cell, b) in grid.cells().iter().zip(&layout.boxes) {
        let fill = if cell.is_header {
            style.header_fill.as_deref().unwrap_or(&style.background)
        } else if (cell.row - header_rows) % 2 == 1 {
            style.stripe_fill.as_deref().unwrap_or(&style.background)
        } else {
            &style.background
        };
        let stroke = match style.border {
            BorderRule::All => format!(r#" stroke="{}" stroke-width="1""#, style.border_color),
            BorderRule::Horizontal if cell.is_header || cell.last_row() + 1 == grid.n_rows() => {
                format!(r#" stroke="{}" stroke-width="0.5""#, style.border_color)
            }
            _ => String::new(),
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"{}/>"#,
            b.x0,
            b.y0,
            b.width(),
            b.height(),
            fill,
            stroke
        );
    }
    for ((cell, b), tokens) in grid.cells().iter().zip(&layout.boxes).zip(content) {
        if tokens.is_empty() {
            continue;
        }
        let color = if cell.is_header {
            style.header_text_color.as_deref().unwrap_or(&style.text_color)
        } else {
            &style.text_color
        };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            b.x0 + style.padding,
            b.y0 + style.padding + style.font_size * 0.8,
            color,
            escape_xml(&tokens.join(" "))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Built-in dataset flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    PubTabNet,
    FinTabNet,
    Colorful,
    Sparse,
}

impl Flavor {
    pub const ALL: [Flavor; 4] = [Flavor::PubTabNet, Flavor::FinTabNet, Flavor::Colorful, Flavor::Sparse];

    pub fn name(&self) -> &'static str {
        match self {
            Flavor::PubTabNet => "pubtabnet",
            Flavor::FinTabNet => "fintabnet",
            Flavor::Colorful => "colorful",
            Flavor::Sparse => "sparse",
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Flavor::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown flavor {s:?}"))
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub size: usize,
    /// Inclusive ranges.
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub header_rows: (usize, usize),
    pub span_modes: Vec<SpanMode>,
    pub max_span: usize,
    pub span_coverage: (f64, f64),
    pub styles: Vec<StyleTemplate>,
    pub contents: Vec<ContentTemplate>,
    pub splits: SplitRatios,
    pub id_prefix: String,
}

fn words(list: &str) -> Vec<String> {
    list.split_whitespace().map(str::to_string).collect()
}

const SCIENCE_TERMS: &str = "Age Sex Group Control Patients Mean SD n p-value Total Baseline Treatment Score \
    Gene Protein Expression Ratio CI OR HR Model Variable Sample Value Time Dose Response Cases Male Female \
    Yes No Study Year Method Accuracy Parameter Estimate Outcome Follow-up Week Weight Height BMI";
const FINANCE_TERMS: &str = "Revenue Net income Total assets liabilities Equity Cash Operating expenses Interest \
    Tax Dividends Shares Fiscal Year Quarter Balance Deferred Goodwill Amortization Depreciation Segment \
    Million Thousand Basic Diluted Earnings Gross margin Capital Proceeds Loss Gain Other December June";
const GENERIC_TERMS: &str = "Name Type Status Category Region Code Level Rate Count Item Price Unit Date Note \
    Source Label Class Index Size Range Min Max Average Total Alpha Beta Gamma Delta North South East West";

impl DatasetSpec {
    pub fn flavor(flavor: Flavor, size: usize) -> Self {
        let plain = |name: &str| StyleTemplate {
            name: name.to_string(),
            font_size: 10.0,
            char_width: 6.0,
            padding: 4.0,
            border: BorderRule::Horizontal,
            border_color: "#000000".into(),
            background: "#ffffff".into(),
            text_color: "#000000".into(),
            header_fill: None,
            header_text_color: None,
            stripe_fill: None,
        };
        let all_modes =
            vec![SpanMode::None, SpanMode::HeaderOnly, SpanMode::RowOnly, SpanMode::ColumnOnly, SpanMode::RowAndColumn];
        let base = DatasetSpec {
            size,
            rows: (3, 15),
            cols: (2, 8),
            header_rows: (1, 2),
            span_modes: all_modes.clone(),
            max_span: 4,
            span_coverage: (0.05, 0.3),
            styles: vec![plain("journal"), StyleTemplate { border: BorderRule::All, ..plain("journal-grid") }],
            contents: vec![ContentTemplate {
                name: "science".into(),
                pool: words(SCIENCE_TERMS),
                random_ratio: 0.4,
                empty_fraction: 0.05,
            }],
            splits: SplitRatios::default(),
            id_prefix: format!("{}-", flavor.name()),
        };
        match flavor {
            Flavor::PubTabNet => base,
            Flavor::FinTabNet => DatasetSpec {
                rows: (4, 20),
                cols: (2, 7),
                header_rows: (1, 3),
                span_modes: vec![SpanMode::None, SpanMode::HeaderOnly, SpanMode::ColumnOnly, SpanMode::RowAndColumn],
                styles: vec![
                    StyleTemplate { font_size: 9.0, char_width: 5.4, padding: 3.0, ..plain("filing") },
                    StyleTemplate { stripe_fill: Some("#f2f2f2".into()), border: BorderRule::None, ..plain("report") },
                ],
                contents: vec![ContentTemplate {
                    name: "finance".into(),
                    pool: words(FINANCE_TERMS),
                    random_ratio: 0.6,
                    empty_fraction: 0.1,
                }],
                ..base
            },
            Flavor::Colorful => DatasetSpec {
                rows: (3, 12),
                cols: (2, 6),
                styles: vec![
                    StyleTemplate {
                        font_size: 12.0,
                        char_width: 7.2,
                        padding: 6.0,
                        border: BorderRule::All,
                        border_color: "#ffffff".into(),
                        background: "#ffe14d".into(),
                        header_fill: Some("#1a237e".into()),
                        header_text_color: Some("#ffffff".into()),
                        stripe_fill: Some("#ffb300".into()),
                        ..plain("sunrise")
                    },
                    StyleTemplate {
                        background: "#e0f7fa".into(),
                        header_fill: Some("#b71c1c".into()),
                        header_text_color: Some("#ffffff".into()),
                        stripe_fill: Some("#80deea".into()),
                        ..plain("contrast")
                    },
                ],
                contents: vec![ContentTemplate {
                    name: "generic".into(),
                    pool: words(GENERIC_TERMS),
                    random_ratio: 0.5,
                    empty_fraction: 0.05,
                }],
                ..base
            },
            Flavor::Sparse => DatasetSpec {
                span_modes: vec![SpanMode::None, SpanMode::HeaderOnly, SpanMode::RowAndColumn],
                span_coverage: (0.0, 0.2),
                contents: vec![ContentTemplate {
                    name: "sparse".into(),
                    pool: words(GENERIC_TERMS),
                    random_ratio: 0.5,
                    empty_fraction: 0.6,
                }],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.rows.0 < 2 || self.rows.0 > self.rows.1 {
            return bad("row range must start at 2 or more and be non-empty");
        }
        if self.cols.0 < 1 || self.cols.0 > self.cols.1 {
            return bad("column range must start at 1 or more and be non-empty");
        }
        if self.header_rows.0 < 1 || self.header_rows.0 > self.header_rows.1 || self.header_rows.0 >= self.rows.0 {
            return bad("header rows must be at least 1 and fewer than the table rows");
        }
        if self.max_span < 2 {
            return bad("max span must be at least 2");
        }
        let (lo, hi) = self.span_coverage;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("span coverage range must lie in [0, 1]");
        }
        if self.span_modes.is_empty() || self.styles.is_empty() || self.contents.is_empty() {
            return bad("span modes, styles and contents must be non-empty");
        }
        for s in &self.styles {
            s.validate()?;
        }
        for c in &self.contents {
            c.validate()?;
        }
        self.splits.validate().map_err(|e| SynthError::InvalidParams(e.to_string()))
    }
}

/// Parameters and templates chosen for one record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordChoice {
    pub id: String,
    pub params: StructureParams,
    pub style: String,
    pub content: String,
    pub achieved_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenFailure {
    pub index: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub master_seed: u64,
    pub generated: usize,
    pub counts: SplitCounts,
    pub requested_coverage_mean: f64,
    pub achieved_coverage_mean: f64,
    pub failures: Vec<GenFailure>,
    pub records: Vec<RecordChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub record: TableRecord,
    pub svg: String,
    pub choice: RecordChoice,
}

/// Lowers the coverage until the structure is feasible, keeping the value
/// actually used so that requested and achieved coverage are comparable.
fn sample_structure<R: Rng>(
    spec: &DatasetSpec,
    rng: &mut R,
    seed: u64,
) -> Result<(StructureParams, TableGrid), SynthError> {
    let n_rows = rng.random_range(spec.rows.0..=spec.rows.1);
    let n_cols = rng.random_range(spec.cols.0..=spec.cols.1);
    let n_header_rows = rng.random_range(spec.header_rows.0..=spec.header_rows.1.min(n_rows - 1));
    let span_mode = *spec.span_modes.choose(rng).expect("validated non-empty");
    let span_coverage =
        if span_mode == SpanMode::None { 0.0 } else { rng.random_range(spec.span_coverage.0..=spec.span_coverage.1) };
    let mut params =
        StructureParams { n_rows, n_cols, n_header_rows, span_mode, max_span: spec.max_span, span_coverage };
    for _ in 0..6 {
        match gen_structure(&params, seed) {
            Ok(grid) => return Ok((params, grid)),
            Err(SynthError::InfeasibleParams { .. }) => {
                params.span_coverage = (params.span_coverage * 0.6 * 1e6).round() / 1e6
            }
            Err(e) => return Err(e),
        }
    }
    params.span_coverage = 0.0;
    let grid = gen_structure(&params, seed)?;
    Ok((params, grid))
}

/// Generates record `index` of a dataset.
pub fn gen_record(spec: &DatasetSpec, master_seed: u64, index: usize) -> Result<Generated, (String, SynthError)> {
    let id = format!("{}{:06}", spec.id_prefix, index);
    let seed = derive_seed(master_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "params"));
    let (params, grid) =
        sample_structure(spec, &mut rng, stream_seed(seed, "structure")).map_err(|e| (id.clone(), e))?;
    let style = spec.styles.choose(&mut rng).expect("validated non-empty");
    let tmpl = spec.contents.choose(&mut rng).expect("validated non-empty");
    let content = gen_content(&grid, tmpl, stream_seed(seed, "content"));
    let lay = layout(&grid, &content, style);
    let svg = render_svg(&grid, &lay, &content, style);
    let tags = grid.to_tags().map_err(|e| (id.clone(), e.into()))?;
    let cells = content.into_iter().zip(&lay.boxes).map(|(t, b)| RecordCell::new(t, Some(*b))).collect();
    let split = spec.splits.split_of(index, spec.size);
    let record = TableRecord::new(id.clone(), split, Some(format!("svg/{id}.svg")), tags, cells)
        .map_err(|e| (id.clone(), SynthError::InvalidParams(e.to_string())))?;
    let achieved_coverage = grid.span_squares() as f64 / (grid.n_rows() * grid.n_cols()) as f64;
    let choice = RecordChoice { id, params, style: style.name.clone(), content: tmpl.name.clone(), achieved_coverage };
    Ok(Generated { record, svg, choice })
}

/// Generates a whole dataset. Records are produced in parallel; output
/// order and bytes depend only on the dataset spec and the seed.
pub fn gen_dataset(spec: &DatasetSpec, master_seed: u64) -> Result<(Vec<Generated>, Manifest), SynthError> {
    spec.validate()?;
    let results: Vec<Result<Generated, (String, SynthError)>> =
        (0..spec.size).into_par_iter().map(|i| gen_record(spec, master_seed, i)).collect();
    let mut out = Vec::with_capacity(spec.size);
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(g) => out.push(g),
            Err((id, e)) => failures.push(GenFailure { index, id, reason: e.to_string() }),
        }
    }
    let mut counts = SplitCounts::default();
    for g in &out {
        match g.record.split {
            Split::Train => counts.train += 1,
            Split::Test => counts.test += 1,
            Split::Val => counts.val += 1,
        }
    }
    let n = out.len().max(1) as f64;
    let manifest = Manifest {
        spec: spec.clone(),
        master_seed,
        generated: out.len(),
        counts,
        requested_coverage_mean: out.iter().map(|g| g.choice.params.span_coverage).sum::<f64>() / n,
        achieved_coverage_mean: out.iter().map(|g| g.choice.achieved_coverage).sum::<f64>() / n,
        failures,
        records: out.iter().map(|g| g.choice.clone()).collect(),
    };
    Ok((out, manifest))
}

/// Writes `{train,test,val}.jsonl`, `svg/` and `manifest.json` under `dir`.
pub fn write_dataset(dir: &Path, generated: &[Generated], manifest: &Manifest) -> io::Result<()> {
    fs::create_dir_all(dir.join("svg"))?;
    for split in [Split::Train, Split::Test, Split::Val] {
        let file = fs::File::create(dir.join(format!("{split}.jsonl")))?;
        write_jsonl(generated.iter().map(|g| &g.record).filter(|r| r.split == split), BufWriter::new(file))?;
    }
    for g in generated {
        fs::write(dir.join("svg").join(format!("{}.svg", g.record.id)), &g.svg)?;
    }
    let json = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
    fs::write(dir.join("manifest.json"), json + "\n")
}

/// Most frequent words over all cell texts, ties broken alphabetically.
/// Inline markup tokens such as `<b>` are skipped.
pub fn build_pool<'a>(records: impl IntoIterator<Item = &'a TableRecord>, top_k: usize) -> Vec<String> {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for rec in records {
        for cell in rec.cells() {
            let visible: Vec<&str> =
                cell.tokens.iter().map(String::as_str).filter(|t| !(t.starts_with('<') && t.ends_with('>'))).collect();
            let text =
                if visible.iter().all(|t| t.chars().count() == 1) { visible.concat() } else { visible.join(" ") };
            for word in text.split_whitespace() {
                let word = word.trim_matches(|c: char| !c.is_alphanumeric());
                if word.chars().count() >= 2 {
                    *freq.entry(word.to_string()).or_default() += 1;
                }
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(top_k).map(|(w, _)| w).collect()
}
