//! Structural token vocabulary, the HTML adapter and grid inference.

mod grid;
mod html;
mod tokens;

use thiserror::Error;

pub use grid::{classify, is_strict, tokens_to_grid, Complexity, GridCell, TableGrid};
pub use html::{parse_html, parse_html_with_content, to_html, ParsedHtml};
pub(crate) use tokens::push_cell;
pub use tokens::{CellSpec, RowSpec, StructToken, TagSequence, MAX_SPAN, MAX_TAG_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("unsupported element: {0}")]
    UnsupportedElement(String),
    #[error("unknown structure token {0:?}")]
    UnknownToken(String),
    #[error("tag sequence has {0} tokens, limit is {MAX_TAG_LEN}")]
    TooLong(usize),
    #[error("two cells claim grid square ({row}, {col})")]
    OverlapConflict { row: usize, col: usize },
    #[error("cell anchored at ({row}, {col}) spans past the table edge")]
    SpanOutOfBounds { row: usize, col: usize },
    #[error("table has no cells")]
    EmptyTable,
}
