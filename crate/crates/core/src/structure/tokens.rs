use std::fmt;

use super::StructureError;

/// Longest tag sequence accepted, counting `<table>`/`<thead>`/`<tbody>`.
pub const MAX_TAG_LEN: usize = 512;
/// Largest rowspan/colspan value accepted.
pub const MAX_SPAN: u32 = 20;

/// One structural token of the table language.
///
/// A spanning cell is written as `<`, one or two attribute/value pairs,
/// `>` and then `</td>`, so the attribute and its value are separate tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructToken {
    TableOpen,
    TableClose,
    TheadOpen,
    TheadClose,
    TbodyOpen,
    TbodyClose,
    TrOpen,
    TrClose,
    TdOpen,
    TdClose,
    CellOpenBracket,
    RowspanAttr,
    ColspanAttr,
    SpanValue(u32),
    CloseBracket,
}

impl fmt::Display for StructToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructToken::TableOpen => f.write_str("<table>"),
            StructToken::TableClose => f.write_str("</table>"),
            StructToken::TheadOpen => f.write_str("<thead>"),
            StructToken::TheadClose => f.write_str("</thead>"),
            StructToken::TbodyOpen => f.write_str("<tbody>"),
            StructToken::TbodyClose => f.write_str("</tbody>"),
            StructToken::TrOpen => f.write_str("<tr>"),
            StructToken::TrClose => f.write_str("</tr>"),
            StructToken::TdOpen => f.write_str("<td>"),
            StructToken::TdClose => f.write_str("</td>"),
            StructToken::CellOpenBracket => f.write_str("<"),
            StructToken::RowspanAttr => f.write_str("rowspan="),
            StructToken::ColspanAttr => f.write_str("colspan="),
            StructToken::SpanValue(v) => write!(f, "{v}"),
            StructToken::CloseBracket => f.write_str(">"),
        }
    }
}

/// Span extents of one `td`, in document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSpec {
    pub rowspan: u32,
    pub colspan: u32,
}

impl CellSpec {
    pub const PLAIN: CellSpec = CellSpec { rowspan: 1, colspan: 1 };

    pub fn is_spanning(&self) -> bool {
        self.rowspan > 1 || self.colspan > 1
    }
}

/// One `tr` of a tag sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSpec {
    pub in_thead: bool,
    pub cells: Vec<CellSpec>,
}

/// A validated, well-bracketed structural token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence {
    tokens: Vec<StructToken>,
}

impl TagSequence {
    pub fn new(tokens: Vec<StructToken>) -> Result<Self, StructureError> {
        if tokens.len() > MAX_TAG_LEN {
            return Err(StructureError::TooLong(tokens.len()));
        }
        Parser::new(&tokens).table()?;
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[StructToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of `td` cells.
    pub fn cell_count(&self) -> usize {
        self.tokens.iter().filter(|t| **t == StructToken::TdClose).count()
    }

    /// Rows and their cells, in document order.
    pub fn rows(&self) -> Vec<RowSpec> {
        Parser::new(&self.tokens).table().expect("TagSequence is validated on construction")
    }

    /// Builds the canonical sequence for the given rows. Rows flagged
    /// `in_thead` are wrapped in `<thead>`, the others in `<tbody>`; when no
    /// row is a header row the rows are emitted bare.
    pub fn from_rows(rows: &[RowSpec]) -> Result<Self, StructureError> {
        let sectioned = rows.iter().any(|r| r.in_thead);
        let mut tokens = vec![StructToken::TableOpen];
        let mut open: Option<bool> = None;
        for row in rows {
            if sectioned && open != Some(row.in_thead) {
                match open {
                    Some(true) => tokens.push(StructToken::TheadClose),
                    Some(false) => tokens.push(StructToken::TbodyClose),
                    None => {}
                }
                tokens.push(if row.in_thead { StructToken::TheadOpen } else { StructToken::TbodyOpen });
                open = Some(row.in_thead);
            }
            tokens.push(StructToken::TrOpen);
            for cell in &row.cells {
                push_cell(&mut tokens, *cell);
            }
            tokens.push(StructToken::TrClose);
        }
        match open {
            Some(true) => tokens.push(StructToken::TheadClose),
            Some(false) => tokens.push(StructToken::TbodyClose),
            None => {}
        }
        tokens.push(StructToken::TableClose);
        Self::new(tokens)
    }

    /// PubTabNet spelling: `<td>`, `<`, ` rowspan="2"`, `>`, `</td>`...
    /// The `<table>` wrapper is included.
    pub fn to_strings(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut iter = self.tokens.iter().peekable();
        while let Some(tok) = iter.next() {
            match tok {
                StructToken::RowspanAttr | StructToken::ColspanAttr => {
                    let name = if *tok == StructToken::RowspanAttr { "rowspan" } else { "colspan" };
                    let value = match iter.next() {
                        Some(StructToken::SpanValue(v)) => *v,
                        _ => unreachable!("validated attribute is followed by its value"),
                    };
                    out.push(format!(" {name}=\"{value}\""));
                }
                other => out.push(other.to_string()),
            }
        }
        out
    }

    /// Inverse of [`TagSequence::to_strings`]. Sequences without the
    /// `<table>` wrapper (as stored in PubTabNet) are wrapped, and `<td` is
    /// read as `<`.
    pub fn from_strings<S: AsRef<str>>(strings: &[S]) -> Result<Self, StructureError> {
        let mut tokens = Vec::with_capacity(strings.len() + 2);
        for s in strings {
            let s = s.as_ref();
            let tok = match s {
                "<table>" => StructToken::TableOpen,
                "</table>" => StructToken::TableClose,
                "<thead>" => StructToken::TheadOpen,
                "</thead>" => StructToken::TheadClose,
                "<tbody>" => StructToken::TbodyOpen,
                "</tbody>" => StructToken::TbodyClose,
                "<tr>" => StructToken::TrOpen,
                "</tr>" => StructToken::TrClose,
                "<td>" => StructToken::TdOpen,
                "</td>" => StructToken::TdClose,
                "<" | "<td" => StructToken::CellOpenBracket,
                ">" => StructToken::CloseBracket,
                _ => {
                    let (attr, value) = parse_attr_token(s)?;
                    tokens.push(attr);
                    tokens.push(StructToken::SpanValue(value));
                    continue;
                }
            };
            tokens.push(tok);
        }
        if tokens.first() != Some(&StructToken::TableOpen) {
            tokens.insert(0, StructToken::TableOpen);
            tokens.push(StructToken::TableClose);
        }
        Self::new(tokens)
    }
}

pub(crate) fn push_cell(tokens: &mut Vec<StructToken>, cell: CellSpec) {
    if !cell.is_spanning() {
        tokens.push(StructToken::TdOpen);
    } else {
        tokens.push(StructToken::CellOpenBracket);
        if cell.rowspan > 1 {
            tokens.push(StructToken::RowspanAttr);
            tokens.push(StructToken::SpanValue(cell.rowspan));
        }
        if cell.colspan > 1 {
            tokens.push(StructToken::ColspanAttr);
            tokens.push(StructToken::SpanValue(cell.colspan));
        }
        tokens.push(StructToken::CloseBracket);
    }
    tokens.push(StructToken::TdClose);
}

fn parse_attr_token(s: &str) -> Result<(StructToken, u32), StructureError> {
    let unknown = || StructureError::UnknownToken(s.to_string());
    let trimmed = s.trim();
    let (name, value) = trimmed.split_once('=').ok_or_else(unknown)?;
    let attr = match name.trim() {
        "rowspan" => StructToken::RowspanAttr,
        "colspan" => StructToken::ColspanAttr,
        _ => return Err(unknown()),
    };
    let value = value.trim().trim_matches(|c| c == '"' || c == '\'');
    let value: u32 = value.parse().map_err(|_| unknown())?;
    Ok((attr, value))
}

/// Recursive-descent validator over the token grammar.
struct Parser<'a> {
    tokens: &'a [StructToken],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(tokens: &'a [StructToken]) -> Self {
        Self { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<StructToken> {
        self.tokens.get(self.pos).copied()
    }

    fn expect(&mut self, want: StructToken) -> Result<(), StructureError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.malformed(format!("expected {want}, found {t}"))),
            None => Err(self.malformed(format!("expected {want}, found end of sequence"))),
        }
    }

    fn malformed(&self, msg: String) -> StructureError {
        StructureError::MalformedMarkup(format!("token {}: {msg}", self.pos))
    }

    fn table(&mut self) -> Result<Vec<RowSpec>, StructureError> {
        self.expect(StructToken::TableOpen)?;
        let mut rows = Vec::new();
        loop {
            match self.peek() {
                Some(StructToken::TheadOpen) => {
                    self.pos += 1;
                    self.rows_until(StructToken::TheadClose, true, &mut rows)?;
                }
                Some(StructToken::TbodyOpen) => {
                    self.pos += 1;
                    self.rows_until(StructToken::TbodyClose, false, &mut rows)?;
                }
                Some(StructToken::TrOpen) => rows.push(self.row(false)?),
                Some(StructToken::TableClose) => {
                    self.pos += 1;
                    break;
                }
                Some(t) => return Err(self.malformed(format!("unexpected {t} in table"))),
                None => return Err(self.malformed("unclosed <table>".into())),
            }
        }
        if self.pos != self.tokens.len() {
            return Err(self.malformed("tokens after </table>".into()));
        }
        Ok(rows)
    }

    fn rows_until(
        &mut self,
        close: StructToken,
        in_thead: bool,
        rows: &mut Vec<RowSpec>,
    ) -> Result<(), StructureError> {
        loop {
            match self.peek() {
                Some(StructToken::TrOpen) => rows.push(self.row(in_thead)?),
                Some(t) if t == close => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(t) => return Err(self.malformed(format!("unexpected {t}, expected <tr> or {close}"))),
                None => return Err(self.malformed(format!("missing {close}"))),
            }
        }
    }

    fn row(&mut self, in_thead: bool) -> Result<RowSpec, StructureError> {
        self.expect(StructToken::TrOpen)?;
        let mut cells = Vec::new();
        loop {
            match self.peek() {
                Some(StructToken::TdOpen) => {
                    self.pos += 1;
                    self.expect(StructToken::TdClose)?;
                    cells.push(CellSpec::PLAIN);
                }
                Some(StructToken::CellOpenBracket) => {
                    self.pos += 1;
                    cells.push(self.spanning_cell()?);
                }
                Some(StructToken::TrClose) => {
                    self.pos += 1;
                    return Ok(RowSpec { in_thead, cells });
                }
                Some(t) => return Err(self.malformed(format!("unexpected {t} in <tr>"))),
                None => return Err(self.malformed("unclosed <tr>".into())),
            }
        }
    }

    fn spanning_cell(&mut self) -> Result<CellSpec, StructureError> {
        let mut rowspan = None;
        let mut colspan = None;
        loop {
            match self.peek() {
                Some(attr @ (StructToken::RowspanAttr | StructToken::ColspanAttr)) => {
                    self.pos += 1;
                    let value = match self.peek() {
                        Some(StructToken::SpanValue(v)) => v,
                        _ => return Err(self.malformed("span attribute without value".into())),
                    };
                    if !(2..=MAX_SPAN).contains(&value) {
                        return Err(self.malformed(format!("span value {value} outside 2..={MAX_SPAN}")));
                    }
                    self.pos += 1;
                    let slot = if attr == StructToken::RowspanAttr { &mut rowspan } else { &mut colspan };
                    if slot.replace(value).is_some() {
                        return Err(self.malformed("duplicate span attribute".into()));
                    }
                }
                Some(StructToken::CloseBracket) => {
                    if rowspan.is_none() && colspan.is_none() {
                        return Err(self.malformed("spanning cell without attributes".into()));
                    }
                    self.pos += 1;
                    self.expect(StructToken::TdClose)?;
                    return Ok(CellSpec { rowspan: rowspan.unwrap_or(1), colspan: colspan.unwrap_or(1) });
                }
                Some(t) => return Err(self.malformed(format!("unexpected {t} in spanning cell"))),
                None => return Err(self.malformed("unterminated spanning cell".into())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::StructToken::*;
    use super::*;

    #[test]
    fn accepts_minimal_table() {
        let tags = TagSequence::new(vec![TableOpen, TrOpen, TdOpen, TdClose, TrClose, TableClose]).unwrap();
        assert_eq!(tags.cell_count(), 1);
        assert_eq!(tags.rows(), vec![RowSpec { in_thead: false, cells: vec![CellSpec::PLAIN] }]);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(TagSequence::new(vec![TableOpen, TrOpen, TdOpen]).is_err());
        assert!(TagSequence::new(vec![TableOpen, TrOpen, TdClose, TrClose, TableClose]).is_err());
        assert!(TagSequence::new(vec![TableOpen, TheadOpen, TrOpen, TrClose, TbodyClose, TableClose]).is_err());
    }

    #[test]
    fn span_values_bounded() {
        let with = |v| {
            vec![
                TableOpen,
                TrOpen,
                CellOpenBracket,
                RowspanAttr,
                SpanValue(v),
                CloseBracket,
                TdClose,
                TrClose,
                TableClose,
            ]
        };
        assert!(TagSequence::new(with(2)).is_ok());
        assert!(TagSequence::new(with(20)).is_ok());
        assert!(TagSequence::new(with(21)).is_err());
        assert!(TagSequence::new(with(1)).is_err());
    }

    #[test]
    fn either_attribute_order_and_no_duplicates() {
        let seq = |a, b| {
            vec![
                TableOpen,
                TrOpen,
                CellOpenBracket,
                a,
                SpanValue(2),
                b,
                SpanValue(3),
                CloseBracket,
                TdClose,
                TrClose,
                TableClose,
            ]
        };
        let rows = TagSequence::new(seq(ColspanAttr, RowspanAttr)).unwrap().rows();
        assert_eq!(rows[0].cells[0], CellSpec { rowspan: 3, colspan: 2 });
        assert!(TagSequence::new(seq(RowspanAttr, RowspanAttr)).is_err());
    }

    #[test]
    fn length_cap() {
        let mut tokens = vec![TableOpen, TrOpen];
        while tokens.len() < 511 {
            tokens.push(TdOpen);
            tokens.push(TdClose);
        }
        tokens.push(TrClose);
        tokens.push(TableClose);
        assert!(matches!(TagSequence::new(tokens), Err(StructureError::TooLong(n)) if n > MAX_TAG_LEN));
    }

    #[test]
    fn pubtabnet_strings() {
        let strings = [
            "<thead>",
            "<tr>",
            "<td",
            " colspan=\"2\"",
            ">",
            "</td>",
            "</tr>",
            "</thead>",
            "<tbody>",
            "<tr>",
            "<td>",
            "</td>",
            "<td>",
            "</td>",
            "</tr>",
            "</tbody>",
        ];
        let tags = TagSequence::from_strings(&strings).unwrap();
        assert_eq!(tags.cell_count(), 3);
        let out = tags.to_strings();
        assert_eq!(out.first().map(String::as_str), Some("<table>"));
        assert_eq!(out[4], " colspan=\"2\"");
        assert_eq!(out[3], "<");
        assert_eq!(TagSequence::from_strings(&out).unwrap(), tags);
    }

    #[test]
    fn unknown_string_token() {
        assert!(matches!(TagSequence::from_strings(&["<tr>", "<th>", "</tr>"]), Err(StructureError::UnknownToken(_))));
    }
}
