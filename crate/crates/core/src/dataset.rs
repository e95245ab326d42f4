//! Table annotation records: the canonical JSON-lines format, PubTabNet
//! ingestion, size filtering, statistics and dataset combination.
//!
//! Canonical line layout (keys in this order):
//!
//! ```text
//! {"id":..,"split":"train","image":null,"structure":{"tokens":[..]},
//!  "cells":[{"tokens":[..],"bbox":[x0,y0,x1,y1]|null,"class":"content"|"empty"}]}
//! ```
//!
//! A `"source"` key follows `"image"` on records produced by [`combine`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoxClass, CellBox};
use crate::seed::{fnv1a, splitmix64};
use crate::structure::{tokens_to_grid, Complexity, TableGrid, TagSequence};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: String, source: io::Error },
    #[error("unknown dataset format {0:?} (expected pubtabnet-jsonl or canonical-jsonl)")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
}

/// Why one record was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("not valid JSON for this format: {0}")]
    Json(String),
    #[error("structure: {0}")]
    Structure(#[from] crate::structure::StructureError),
    #[error("{cells} cell entries for {tds} td tokens")]
    CellCountMismatch { cells: usize, tds: usize },
    #[error("cell {0} is marked empty but has content tokens")]
    EmptyWithContent(usize),
    #[error("cell {0}: {1}")]
    BadBox(usize, crate::geometry::BoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
    Val,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" | "valid" | "validation" => Ok(Split::Val),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        })
    }
}

/// Train/test/val fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, test: 0.1, val: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, test: f64, val: f64) -> Result<Self, DatasetError> {
        let r = Self { train, test, val };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.test, self.val];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DatasetError::BadRatios(format!("{parts:?} has a negative entry")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(format!("{parts:?} does not sum to 1")));
        }
        Ok(())
    }

    /// Record counts per split for `n` records: train and test are rounded,
    /// val takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let train = train.min(n);
        let test = (((n as f64) * self.test).round() as usize).min(n - train);
        (train, test, n - train - test)
    }

    /// Split of position `rank` among `n` records assigned by index ranges.
    pub fn split_of(&self, rank: usize, n: usize) -> Split {
        let (train, test, _) = self.counts(n);
        if rank < train {
            Split::Train
        } else if rank < train + test {
            Split::Test
        } else {
            Split::Val
        }
    }
}

impl FromStr for SplitRatios {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatasetError::BadRatios(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => SplitRatios::new(*a, *b, *c),
            _ => Err(DatasetError::BadRatios(format!("{s:?}: need three comma-separated values"))),
        }
    }
}

/// One annotated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordCell {
    pub tokens: Vec<String>,
    pub bbox: Option<CellBox>,
    pub klass: BoxClass,
}

impl RecordCell {
    pub fn new(tokens: Vec<String>, bbox: Option<CellBox>) -> Self {
        let klass = if tokens.is_empty() { BoxClass::Empty } else { BoxClass::Content };
        Self { tokens, bbox: bbox.map(|b| b.classed(klass)), klass }
    }

    /// Content tokens joined with single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A table annotation: structure, per-cell content and optional boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRecord {
    pub id: String,
    pub split: Split,
    pub image: Option<String>,
    pub source: Option<String>,
    tags: TagSequence,
    cells: Vec<RecordCell>,
    grid: TableGrid,
}

impl TableRecord {
    pub fn new(
        id: impl Into<String>,
        split: Split,
        image: Option<String>,
        tags: TagSequence,
        cells: Vec<RecordCell>,
    ) -> Result<Self, RecordError> {
        let grid = tokens_to_grid(&tags)?;
        let tds = tags.cell_count();
        if cells.len() != tds {
            return Err(RecordError::CellCountMismatch { cells: cells.len(), tds });
        }
        for (i, c) in cells.iter().enumerate() {
            if c.klass == BoxClass::Empty && !c.tokens.is_empty() {
                return Err(RecordError::EmptyWithContent(i));
            }
        }
        Ok(Self { id: id.into(), split, image, source: None, tags, cells, grid })
    }

    pub fn tags(&self) -> &TagSequence {
        &self.tags
    }

    pub fn cells(&self) -> &[RecordCell] {
        &self.cells
    }

    pub fn grid(&self) -> &TableGrid {
        &self.grid
    }

    pub fn complexity(&self) -> Complexity {
        self.grid.complexity()
    }

    pub fn is_strict(&self) -> bool {
        self.grid.is_strict()
    }

    pub fn n_rows(&self) -> usize {
        self.grid.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.grid.n_cols()
    }

    pub fn missing_boxes(&self) -> usize {
        self.cells.iter().filter(|c| c.bbox.is_none()).count()
    }

    pub fn cell_text(&self) -> Vec<String> {
        self.cells.iter().map(RecordCell::text).collect()
    }

    /// Replaces every cell box. `boxes` must have one entry per cell.
    pub fn with_boxes(mut self, boxes: Vec<Option<CellBox>>) -> Self {
        assert_eq!(boxes.len(), self.cells.len(), "one box per cell");
        for (cell, b) in self.cells.iter_mut().zip(boxes) {
            cell.bbox = b.map(|b| b.classed(cell.klass));
        }
        self
    }

    pub fn to_json_line(&self) -> String {
        let wire = RecordWire {
            id: self.id.clone(),
            split: self.split,
            image: self.image.clone(),
            source: self.source.clone(),
            structure: StructureWire { tokens: self.tags.to_strings() },
            cells: self
                .cells
                .iter()
                .map(|c| CellWire { tokens: c.tokens.clone(), bbox: c.bbox.map(|b| b.to_array()), class: c.klass })
                .collect(),
        };
        serde_json::to_string(&wire).expect("record serialises")
    }

    pub fn from_json_line(line: &str) -> Result<Self, RecordError> {
        let wire: RecordWire = serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
        let tags = TagSequence::from_strings(&wire.structure.tokens)?;
        let cells = wire
            .cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let bbox = c
                    .bbox
                    .map(|b| CellBox::from_array(b, c.class))
                    .transpose()
                    .map_err(|e| RecordError::BadBox(i, e))?;
                Ok(RecordCell { tokens: c.tokens, bbox, klass: c.class })
            })
            .collect::<Result<Vec<_>, RecordError>>()?;
        let mut rec = TableRecord::new(wire.id, wire.split, wire.image, tags, cells)?;
        rec.source = wire.source;
        Ok(rec)
    }

    fn from_pubtabnet_line(line: &str) -> Result<Self, RecordError> {
        let wire: PubTabNetWire = serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
        let tags = TagSequence::from_strings(&wire.html.structure.tokens)?;
        let cells = wire
            .html
            .cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let klass = if c.tokens.is_empty() { BoxClass::Empty } else { BoxClass::Content };
                let bbox =
                    c.bbox.map(|b| CellBox::from_array(b, klass)).transpose().map_err(|e| RecordError::BadBox(i, e))?;
                Ok(RecordCell { tokens: c.tokens, bbox, klass })
            })
            .collect::<Result<Vec<_>, RecordError>>()?;
        let id = wire
            .filename
            .clone()
            .or_else(|| wire.imgid.as_ref().map(|v| v.to_string().trim_matches('"').to_string()))
            .unwrap_or_default();
        let split = wire.split.as_deref().and_then(|s| s.parse().ok()).unwrap_or_default();
        TableRecord::new(id, split, wire.filename, tags, cells)
    }
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    id: String,
    split: Split,
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    structure: StructureWire,
    cells: Vec<CellWire>,
}

#[derive(Serialize, Deserialize)]
struct StructureWire {
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CellWire {
    tokens: Vec<String>,
    bbox: Option<[f64; 4]>,
    class: BoxClass,
}

#[derive(Deserialize)]
struct PubTabNetWire {
    filename: Option<String>,
    split: Option<String>,
    imgid: Option<serde_json::Value>,
    html: PubTabNetHtml,
}

#[derive(Deserialize)]
struct PubTabNetHtml {
    structure: StructureWire,
    cells: Vec<PubTabNetCell>,
}

#[derive(Deserialize)]
struct PubTabNetCell {
    #[serde(default)]
    tokens: Vec<String>,
    bbox: Option<[f64; 4]>,
}

/// Input annotation formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    PubTabNetJsonl,
    CanonicalJsonl,
}

impl FromStr for Format {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pubtabnet-jsonl" | "pubtabnet" => Ok(Format::PubTabNetJsonl),
            "canonical-jsonl" | "canonical" => Ok(Format::CanonicalJsonl),
            other => Err(DatasetError::UnknownFormat(other.to_string())),
        }
    }
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationFailure {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<TableRecord>,
    pub failures: Vec<ValidationFailure>,
}

pub fn ingest(path: &Path, format: Format) -> Result<Ingested, DatasetError> {
    let file =
        File::open(path).map_err(|source| DatasetError::Unreadable { path: path.display().to_string(), source })?;
    ingest_reader(BufReader::new(file), format)
}

/// Reads records line by line. Invalid lines are reported, not fatal.
pub fn ingest_reader<R: BufRead>(reader: R, format: Format) -> Result<Ingested, DatasetError> {
    let mut out = Ingested::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            Format::CanonicalJsonl => TableRecord::from_json_line(&line),
            Format::PubTabNetJsonl => TableRecord::from_pubtabnet_line(&line),
        };
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.failures.push(ValidationFailure { line: i + 1, id: sniff_id(&line), reason: e.to_string() }),
        }
    }
    Ok(out)
}

fn sniff_id(line: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    ["id", "filename", "imgid"]
        .iter()
        .find_map(|k| v.get(*k))
        .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
}

pub fn write_jsonl<'a, W: Write>(records: impl IntoIterator<Item = &'a TableRecord>, mut out: W) -> io::Result<()> {
    for rec in records {
        out.write_all(rec.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Inclusive bounds on table dimensions, rows then columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBounds {
    pub min: (usize, usize),
    pub max: (usize, usize),
}

impl Default for SizeBounds {
    fn default() -> Self {
        Self { min: (1, 1), max: (20, 10) }
    }
}

impl SizeBounds {
    pub fn contains(&self, rows: usize, cols: usize) -> bool {
        (self.min.0..=self.max.0).contains(&rows) && (self.min.1..=self.max.1).contains(&cols)
    }
}

pub fn filter_size(records: Vec<TableRecord>, bounds: SizeBounds) -> Vec<TableRecord> {
    records.into_iter().filter(|r| bounds.contains(r.n_rows(), r.n_cols())).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCounts {
    pub simple: usize,
    pub complex: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrictCounts {
    pub strict: usize,
    pub non_strict: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCounts {
    pub tables: usize,
    pub tables_with_missing: usize,
    pub boxes_total: usize,
    pub boxes_missing: usize,
}

impl MissingCounts {
    /// Fraction of tables with at least one missing box.
    pub fn table_fraction(&self) -> Option<f64> {
        (self.tables > 0).then(|| self.tables_with_missing as f64 / self.tables as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerComplexity<T> {
    pub simple: T,
    pub complex: T,
}

impl<T> PerComplexity<T> {
    pub fn get_mut(&mut self, c: Complexity) -> &mut T {
        match c {
            Complexity::Simple => &mut self.simple,
            Complexity::Complex => &mut self.complex,
        }
    }

    pub fn get(&self, c: Complexity) -> &T {
        match c {
            Complexity::Simple => &self.simple,
            Complexity::Complex => &self.complex,
        }
    }
}

/// Dataset statistics: table sizes, complexity per split, strictness and
/// missing boxes per complexity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    /// Keyed by `"{rows}x{cols}"`.
    pub size_histogram: BTreeMap<String, usize>,
    pub complexity_per_split: BTreeMap<Split, ComplexityCounts>,
    pub strictness: PerComplexity<StrictCounts>,
    pub missing_bbox: PerComplexity<MissingCounts>,
}

impl DatasetStats {
    pub fn add(&mut self, rec: &TableRecord) {
        self.total += 1;
        *self.size_histogram.entry(format!("{}x{}", rec.n_rows(), rec.n_cols())).or_default() += 1;
        let complexity = rec.complexity();
        let per_split = self.complexity_per_split.entry(rec.split).or_default();
        match complexity {
            Complexity::Simple => per_split.simple += 1,
            Complexity::Complex => per_split.complex += 1,
        }
        let strict = self.strictness.get_mut(complexity);
        if rec.is_strict() {
            strict.strict += 1;
        } else {
            strict.non_strict += 1;
        }
        let missing = self.missing_bbox.get_mut(complexity);
        let n_missing = rec.missing_boxes();
        missing.tables += 1;
        missing.tables_with_missing += usize::from(n_missing > 0);
        missing.boxes_total += rec.cells().len();
        missing.boxes_missing += n_missing;
    }

    /// Combines two partial statistics; associative and commutative.
    pub fn merge(mut self, other: &DatasetStats) -> DatasetStats {
        self.total += other.total;
        for (k, v) in &other.size_histogram {
            *self.size_histogram.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.complexity_per_split {
            let e = self.complexity_per_split.entry(*k).or_default();
            e.simple += v.simple;
            e.complex += v.complex;
        }
        for c in [Complexity::Simple, Complexity::Complex] {
            let (a, b) = (self.strictness.get_mut(c), other.strictness.get(c));
            a.strict += b.strict;
            a.non_strict += b.non_strict;
            let (a, b) = (self.missing_bbox.get_mut(c), other.missing_bbox.get(c));
            a.tables += b.tables;
            a.tables_with_missing += b.tables_with_missing;
            a.boxes_total += b.boxes_total;
            a.boxes_missing += b.boxes_missing;
        }
        self
    }

    /// Fraction of simple tables in one split.
    pub fn simple_fraction(&self, split: Split) -> Option<f64> {
        let c = self.complexity_per_split.get(&split)?;
        let n = c.simple + c.complex;
        (n > 0).then(|| c.simple as f64 / n as f64)
    }
}

pub fn stats<'a>(records: impl IntoIterator<Item = &'a TableRecord>) -> DatasetStats {
    let mut s = DatasetStats::default();
    for r in records {
        s.add(r);
    }
    s
}

/// Id collisions resolved while combining.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CombineReport {
    pub records: usize,
    pub collisions: Vec<Collision>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Collision {
    pub id: String,
    pub sources: Vec<String>,
}

/// Concatenates named streams. Every record keeps its source name; ids that
/// occur more than once get `"{source}/"` prefixes. With `resplit`, splits
/// are reassigned by ranking records on a hash of their final id.
pub fn combine(
    streams: Vec<(String, Vec<TableRecord>)>,
    resplit: Option<SplitRatios>,
) -> (Vec<TableRecord>, CombineReport) {
    let mut seen: HashMap<String, Vec<String>> = HashMap::new();
    for (source, recs) in &streams {
        for r in recs {
            seen.entry(r.id.clone()).or_default().push(source.clone());
        }
    }
    let mut collisions: Vec<Collision> = seen
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(id, s)| Collision { id: id.clone(), sources: s.clone() })
        .collect();
    collisions.sort_by(|a, b| a.id.cmp(&b.id));

    let mut out = Vec::new();
    let mut used: HashMap<String, usize> = HashMap::new();
    for (source, recs) in streams {
        for mut r in recs {
            if seen.get(&r.id).is_some_and(|s| s.len() > 1) {
                r.id = format!("{source}/{}", r.id);
            }
            let n = used.entry(r.id.clone()).or_default();
            *n += 1;
            if *n > 1 {
                r.id = format!("{}#{}", r.id, *n - 1);
            }
            if r.source.is_none() {
                r.source = Some(source.clone());
            }
            out.push(r);
        }
    }
    if let Some(ratios) = resplit {
        let mut ranked: Vec<(u64, usize)> =
            out.iter().enumerate().map(|(i, r)| (splitmix64(fnv1a(r.id.as_bytes())), i)).collect();
        ranked.sort_unstable();
        let n = out.len();
        for (rank, (_, i)) in ranked.into_iter().enumerate() {
            out[i].split = ratios.split_of(rank, n);
        }
    }
    let report = CombineReport { records: out.len(), collisions };
    (out, report)
}
