//! Deterministic building blocks for table-structure recognition: the
//! structural tag language and its grid, bounding-box completion,
//! synthetic table generation, PDF-cell post-processing, TEDS and mAP
//! evaluation, and the multi-task training losses.

pub mod bbox_complete;
pub mod dataset;
pub mod geometry;
pub mod losses;
pub mod map;
pub mod postproc;
pub mod seed;
pub mod structure;
pub mod synth;
pub mod teds;

pub use geometry::{iou, modified_iou, BoxClass, CellBox};
pub use structure::{
    classify, is_strict, parse_html, tokens_to_grid, Complexity, GridCell, StructToken, StructureError, TableGrid,
    TagSequence,
};
