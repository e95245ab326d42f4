use serde::{Deserialize, Serialize};

use super::tokens::{CellSpec, RowSpec, TagSequence};
use super::StructureError;

/// One table cell placed on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub is_header: bool,
}

impl GridCell {
    pub fn plain(row: usize, col: usize) -> Self {
        Self { row, col, rowspan: 1, colspan: 1, is_header: false }
    }

    pub fn is_spanning(&self) -> bool {
        self.rowspan > 1 || self.colspan > 1
    }

    pub fn last_row(&self) -> usize {
        self.row + self.rowspan - 1
    }

    pub fn last_col(&self) -> usize {
        self.col + self.colspan - 1
    }

    pub fn covers(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.rowspan).contains(&row) && (self.col..self.col + self.colspan).contains(&col)
    }

    pub fn covers_col(&self, col: usize) -> bool {
        (self.col..self.col + self.colspan).contains(&col)
    }

    pub fn covers_row(&self, row: usize) -> bool {
        (self.row..self.row + self.rowspan).contains(&row)
    }
}

/// Simple tables have no row or column spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Simple,
    Complex,
}

/// The finest rectangular grid covering a table. Cells are stored in
/// row-major anchor order, which is also their document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableGrid {
    n_rows: usize,
    n_cols: usize,
    squares: Vec<Option<usize>>,
    cells: Vec<GridCell>,
}

impl TableGrid {
    /// Builds a grid from explicit cells. Cells are reordered row-major by
    /// anchor; the returned grid's cell indices follow that order.
    pub fn from_cells(n_rows: usize, n_cols: usize, mut cells: Vec<GridCell>) -> Result<Self, StructureError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(StructureError::EmptyTable);
        }
        cells.sort_by_key(|c| (c.row, c.col));
        let mut squares = vec![None; n_rows * n_cols];
        for (idx, cell) in cells.iter().enumerate() {
            if cell.rowspan == 0
                || cell.colspan == 0
                || cell.row + cell.rowspan > n_rows
                || cell.col + cell.colspan > n_cols
            {
                return Err(StructureError::SpanOutOfBounds { row: cell.row, col: cell.col });
            }
            for r in cell.row..cell.row + cell.rowspan {
                for c in cell.col..cell.col + cell.colspan {
                    let sq = &mut squares[r * n_cols + c];
                    if sq.is_some() {
                        return Err(StructureError::OverlapConflict { row: r, col: c });
                    }
                    *sq = Some(idx);
                }
            }
        }
        Ok(Self { n_rows, n_cols, squares, cells })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn cell(&self, idx: usize) -> &GridCell {
        &self.cells[idx]
    }

    /// Index of the cell covering a square, if any.
    pub fn cell_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.n_rows || col >= self.n_cols {
            return None;
        }
        self.squares[row * self.n_cols + col]
    }

    pub fn assigned_squares(&self) -> usize {
        self.squares.iter().filter(|s| s.is_some()).count()
    }

    /// Every square belongs to a cell, i.e. the table is rectangular.
    pub fn is_strict(&self) -> bool {
        self.squares.iter().all(Option::is_some)
    }

    pub fn complexity(&self) -> Complexity {
        if self.cells.iter().any(GridCell::is_spanning) {
            Complexity::Complex
        } else {
            Complexity::Simple
        }
    }

    /// Number of squares covered by spanning cells.
    pub fn span_squares(&self) -> usize {
        self.cells.iter().filter(|c| c.is_spanning()).map(|c| c.rowspan * c.colspan).sum()
    }

    /// Leading rows whose anchored cells are all headers.
    pub fn header_rows(&self) -> usize {
        (0..self.n_rows)
            .take_while(|&r| {
                let mut anchored = self.cells.iter().filter(|c| c.row == r).peekable();
                anchored.peek().is_some() && anchored.all(|c| c.is_header)
            })
            .count()
    }

    /// Canonical tag sequence. Rows whose anchored cells are headers go into
    /// `<thead>`.
    pub fn to_tags(&self) -> Result<TagSequence, StructureError> {
        let rows: Vec<RowSpec> = (0..self.n_rows)
            .map(|r| {
                let anchored: Vec<&GridCell> = self.cells.iter().filter(|c| c.row == r).collect();
                RowSpec {
                    in_thead: !anchored.is_empty() && anchored.iter().all(|c| c.is_header),
                    cells: anchored
                        .iter()
                        .map(|c| CellSpec { rowspan: c.rowspan as u32, colspan: c.colspan as u32 })
                        .collect(),
                }
            })
            .collect();
        TagSequence::from_rows(&rows)
    }

    /// Removes one grid column. Cells confined to it disappear, spanning
    /// cells shrink. Returns the new grid and, per old cell index, its new
    /// index.
    pub fn remove_column(&self, col: usize) -> Result<(TableGrid, Vec<Option<usize>>), StructureError> {
        if self.n_cols <= 1 {
            return Err(StructureError::EmptyTable);
        }
        let kept: Vec<(usize, GridCell)> = self
            .cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                if c.covers_col(col) {
                    (c.colspan > 1).then(|| (i, GridCell { colspan: c.colspan - 1, ..*c }))
                } else if c.col > col {
                    Some((i, GridCell { col: c.col - 1, ..*c }))
                } else {
                    Some((i, *c))
                }
            })
            .collect();
        self.rebuild(self.n_rows, self.n_cols - 1, kept)
    }

    /// Adds a 1x1 cell on an unassigned square, or in place of an existing
    /// 1x1 cell. Returns the new grid, the old-to-new index map and the
    /// index of the inserted cell.
    pub fn replace_with_plain(
        &self,
        row: usize,
        col: usize,
        is_header: bool,
    ) -> Result<(TableGrid, Vec<Option<usize>>, usize), StructureError> {
        let existing = self.cell_at(row, col);
        if let Some(idx) = existing {
            if self.cells[idx].is_spanning() {
                return Err(StructureError::OverlapConflict { row, col });
            }
        }
        let mut kept: Vec<(usize, GridCell)> =
            self.cells.iter().enumerate().filter(|(i, _)| Some(*i) != existing).map(|(i, c)| (i, *c)).collect();
        kept.push((usize::MAX, GridCell { is_header, ..GridCell::plain(row, col) }));
        let (grid, map) = self.rebuild(self.n_rows, self.n_cols, kept)?;
        let new_idx = grid.cell_at(row, col).expect("inserted cell present");
        Ok((grid, map, new_idx))
    }

    fn rebuild(
        &self,
        n_rows: usize,
        n_cols: usize,
        kept: Vec<(usize, GridCell)>,
    ) -> Result<(TableGrid, Vec<Option<usize>>), StructureError> {
        let grid = TableGrid::from_cells(n_rows, n_cols, kept.iter().map(|(_, c)| *c).collect())?;
        let mut map = vec![None; self.cells.len()];
        for (new, cell) in grid.cells.iter().enumerate() {
            let old = kept[order_lookup(&kept, cell)].0;
            if let Some(slot) = map.get_mut(old) {
                *slot = Some(new);
            }
        }
        Ok((grid, map))
    }
}

/// Anchors are unique in a valid grid, so the anchor identifies a cell.
fn order_lookup(kept: &[(usize, GridCell)], cell: &GridCell) -> usize {
    kept.iter().position(|(_, c)| c.row == cell.row && c.col == cell.col).expect("cell anchored in kept set")
}

/// Places the cells of a tag sequence on the grid using HTML flow rules:
/// each cell takes the next free square of its row, and row spans reserve
/// squares in the rows below.
pub fn tokens_to_grid(tags: &TagSequence) -> Result<TableGrid, StructureError> {
    let rows = tags.rows();
    let n_rows = rows.len();
    if n_rows == 0 || rows.iter().all(|r| r.cells.is_empty()) {
        return Err(StructureError::EmptyTable);
    }
    let mut occupied: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::with_capacity(tags.cell_count());
    for (r, row) in rows.iter().enumerate() {
        let mut c = 0;
        for spec in &row.cells {
            while occupied[r].get(c).copied().unwrap_or(false) {
                c += 1;
            }
            let (rs, cs) = (spec.rowspan as usize, spec.colspan as usize);
            if r + rs > n_rows {
                return Err(StructureError::SpanOutOfBounds { row: r, col: c });
            }
            for (rr, occ) in occupied.iter_mut().enumerate().skip(r).take(rs) {
                if occ.len() < c + cs {
                    occ.resize(c + cs, false);
                }
                for (cc, slot) in occ.iter_mut().enumerate().skip(c).take(cs) {
                    if *slot {
                        return Err(StructureError::OverlapConflict { row: rr, col: cc });
                    }
                    *slot = true;
                }
            }
            cells.push(GridCell { row: r, col: c, rowspan: rs, colspan: cs, is_header: row.in_thead });
            c += cs;
        }
    }
    let n_cols = occupied.iter().map(Vec::len).max().unwrap_or(0);
    TableGrid::from_cells(n_rows, n_cols, cells)
}

pub fn is_strict(grid: &TableGrid) -> bool {
    grid.is_strict()
}

pub fn classify(grid: &TableGrid) -> Complexity {
    grid.complexity()
}
