//! Minimal HTML table adapter.
//!
//! Only the `table`/`thead`/`tbody`/`tr`/`td`/`th` skeleton is interpreted.
//! Markup inside a cell is treated as content: inline tags are stripped and
//! the common character entities decoded.

use super::tokens::{push_cell, CellSpec, StructToken, TagSequence, MAX_SPAN};
use super::StructureError;

/// A parsed table: its structure plus the text of every cell in document
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedHtml {
    pub tags: TagSequence,
    pub cell_text: Vec<String>,
}

/// Parses an HTML fragment rooted at `<table>` into its structural tokens.
pub fn parse_html(html: &str) -> Result<TagSequence, StructureError> {
    parse_html_with_content(html).map(|p| p.tags)
}

/// Like [`parse_html`] but also keeps the cell text.
pub fn parse_html_with_content(html: &str) -> Result<ParsedHtml, StructureError> {
    let mut scanner = Scanner { src: html, pos: 0 };
    let mut stack: Vec<&'static str> = Vec::new();
    let mut tokens = Vec::new();
    let mut cell_text = Vec::new();
    let mut seen_table = false;
    // Some(text) while inside a td/th.
    let mut cell: Option<String> = None;

    while let Some(item) = scanner.next_item()? {
        match item {
            Item::Text(text) => {
                if let Some(buf) = cell.as_mut() {
                    buf.push_str(text);
                }
            }
            Item::Open { name, attrs } => {
                if cell.is_some() {
                    match name.as_str() {
                        "table" => return Err(StructureError::UnsupportedElement("nested <table>".into())),
                        "td" | "th" | "tr" | "thead" | "tbody" => {
                            return Err(malformed(&scanner, format!("<{name}> inside an open cell")))
                        }
                        // Inline markup is part of the content.
                        _ => continue,
                    }
                }
                match name.as_str() {
                    "table" => {
                        if seen_table {
                            return Err(StructureError::UnsupportedElement("nested or repeated <table>".into()));
                        }
                        seen_table = true;
                        stack.push("table");
                        tokens.push(StructToken::TableOpen);
                    }
                    "thead" | "tbody" => {
                        if stack.last() != Some(&"table") {
                            return Err(malformed(&scanner, format!("<{name}> outside <table>")));
                        }
                        if name == "thead" {
                            stack.push("thead");
                            tokens.push(StructToken::TheadOpen);
                        } else {
                            stack.push("tbody");
                            tokens.push(StructToken::TbodyOpen);
                        }
                    }
                    "tr" => {
                        if !matches!(stack.last(), Some(&"table" | &"thead" | &"tbody")) {
                            return Err(malformed(&scanner, "<tr> outside a table section".into()));
                        }
                        stack.push("tr");
                        tokens.push(StructToken::TrOpen);
                    }
                    "td" | "th" => {
                        if stack.last() != Some(&"tr") {
                            return Err(malformed(&scanner, format!("<{name}> outside <tr>")));
                        }
                        let spec = span_attrs(&scanner, &attrs)?;
                        // Open the cell; the closing td token is emitted on the end tag.
                        push_cell(&mut tokens, spec);
                        tokens.pop();
                        stack.push("td");
                        cell = Some(String::new());
                    }
                    other => return Err(StructureError::UnsupportedElement(format!("<{other}>"))),
                }
            }
            Item::Close { name } => {
                if cell.is_some() {
                    match name.as_str() {
                        "td" | "th" => {
                            stack.pop();
                            tokens.push(StructToken::TdClose);
                            let raw = cell.take().unwrap_or_default();
                            cell_text.push(normalize_text(&raw));
                        }
                        "tr" | "thead" | "tbody" | "table" => {
                            return Err(malformed(&scanner, format!("</{name}> while a cell is open")))
                        }
                        _ => {}
                    }
                    continue;
                }
                let (want, tok) = match name.as_str() {
                    "table" => ("table", StructToken::TableClose),
                    "thead" => ("thead", StructToken::TheadClose),
                    "tbody" => ("tbody", StructToken::TbodyClose),
                    "tr" => ("tr", StructToken::TrClose),
                    other => return Err(malformed(&scanner, format!("unexpected </{other}>"))),
                };
                if stack.pop() != Some(want) {
                    return Err(malformed(&scanner, format!("mismatched </{name}>")));
                }
                tokens.push(tok);
            }
        }
    }
    if !seen_table {
        return Err(StructureError::MalformedMarkup("no <table> element".into()));
    }
    if let Some(open) = stack.last() {
        return Err(StructureError::MalformedMarkup(format!("unclosed <{open}>")));
    }
    let tags = TagSequence::new(tokens)?;
    Ok(ParsedHtml { tags, cell_text })
}

/// Serialises a tag sequence back to HTML. `cell_text`, when given, is
/// inserted escaped into the cells in document order.
pub fn to_html(tags: &TagSequence, cell_text: Option<&[String]>) -> String {
    let mut out = String::new();
    let mut cell_idx = 0;
    let mut pending_attrs: Vec<String> = Vec::new();
    let mut iter = tags.tokens().iter();
    while let Some(tok) = iter.next() {
        match tok {
            StructToken::CellOpenBracket => pending_attrs.clear(),
            StructToken::RowspanAttr | StructToken::ColspanAttr => {
                let name = if *tok == StructToken::RowspanAttr { "rowspan" } else { "colspan" };
                if let Some(StructToken::SpanValue(v)) = iter.next() {
                    pending_attrs.push(format!(" {name}=\"{v}\""));
                }
            }
            StructToken::SpanValue(_) => {}
            StructToken::CloseBracket => {
                out.push_str("<td");
                for a in pending_attrs.drain(..) {
                    out.push_str(&a);
                }
                out.push('>');
            }
            StructToken::TdClose => {
                if let Some(text) = cell_text.and_then(|t| t.get(cell_idx)) {
                    out.push_str(&escape(text));
                }
                cell_idx += 1;
                out.push_str("</td>");
            }
            other => out.push_str(&other.to_string()),
        }
    }
    out
}

fn span_attrs(scanner: &Scanner<'_>, attrs: &[(String, String)]) -> Result<CellSpec, StructureError> {
    let mut spec = CellSpec::PLAIN;
    for (k, v) in attrs {
        let slot = match k.as_str() {
            "rowspan" => &mut spec.rowspan,
            "colspan" => &mut spec.colspan,
            _ => continue,
        };
        let n: u32 = v.trim().parse().map_err(|_| malformed(scanner, format!("{k}=\"{v}\" is not an integer")))?;
        if n == 0 || n > MAX_SPAN {
            return Err(malformed(scanner, format!("{k}={n} outside 1..={MAX_SPAN}")));
        }
        *slot = n;
    }
    Ok(spec)
}

fn malformed(scanner: &Scanner<'_>, msg: String) -> StructureError {
    StructureError::MalformedMarkup(format!("byte {}: {msg}", scanner.pos))
}

fn normalize_text(raw: &str) -> String {
    let decoded = decode_entities(raw);
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let Some(semi) = tail.find(';').filter(|&i| i <= 10) else {
            out.push('&');
            rest = &tail[1..];
            continue;
        };
        let entity = &tail[1..semi];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" | "#39" => Some('\''),
            "nbsp" => Some('\u{a0}'),
            _ => entity
                .strip_prefix("#x")
                .or_else(|| entity.strip_prefix("#X"))
                .and_then(|h| u32::from_str_radix(h, 16).ok())
                .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                .and_then(char::from_u32),
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &tail[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

enum Item<'a> {
    Text(&'a str),
    Open { name: String, attrs: Vec<(String, String)> },
    Close { name: String },
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn next_item(&mut self) -> Result<Option<Item<'a>>, StructureError> {
        loop {
            let rest = &self.src[self.pos..];
            if rest.is_empty() {
                return Ok(None);
            }
            if !rest.starts_with('<') {
                let end = rest.find('<').unwrap_or(rest.len());
                self.pos += end;
                return Ok(Some(Item::Text(&rest[..end])));
            }
            if rest.starts_with("<!--") {
                let end =
                    rest.find("-->").ok_or_else(|| StructureError::MalformedMarkup("unterminated comment".into()))?;
                self.pos += end + 3;
                continue;
            }
            if rest.starts_with("<!") || rest.starts_with("<?") {
                let end =
                    rest.find('>').ok_or_else(|| StructureError::MalformedMarkup("unterminated declaration".into()))?;
                self.pos += end + 1;
                continue;
            }
            let end = find_tag_end(rest)
                .ok_or_else(|| StructureError::MalformedMarkup(format!("byte {}: unterminated tag", self.pos)))?;
            let inner = &rest[1..end];
            self.pos += end + 1;
            if let Some(name) = inner.strip_prefix('/') {
                return Ok(Some(Item::Close { name: name.trim().to_ascii_lowercase() }));
            }
            let inner = inner.trim_end_matches('/');
            let name_end = inner.find(|c: char| c.is_whitespace()).unwrap_or(inner.len());
            let name = inner[..name_end].to_ascii_lowercase();
            if name.is_empty() {
                return Err(StructureError::MalformedMarkup(format!("byte {}: empty tag", self.pos)));
            }
            let attrs = parse_attributes(&inner[name_end..]);
            return Ok(Some(Item::Open { name, attrs }));
        }
    }
}

/// Index of the `>` closing the tag at the start of `s`, skipping quoted
/// attribute values.
fn find_tag_end(s: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices().skip(1) {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"' | '\'') => quote = Some(c),
            (None, '>') => return Some(i),
            _ => {}
        }
    }
    None
}

fn parse_attributes(s: &str) -> Vec<(String, String)> {
    let mut attrs = Vec::new();
    let mut chars = s.trim().chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c.to_ascii_lowercase());
            chars.next();
        }
        if key.is_empty() {
            break;
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut value = String::new();
        if chars.peek() == Some(&'=') {
            chars.next();
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
            match chars.peek().copied() {
                Some(q @ ('"' | '\'')) => {
                    chars.next();
                    for c in chars.by_ref() {
                        if c == q {
                            break;
                        }
                        value.push(c);
                    }
                }
                _ => {
                    while let Some(&c) = chars.peek() {
                        if c.is_whitespace() {
                            break;
                        }
                        value.push(c);
                        chars.next();
                    }
                }
            }
        }
        attrs.push((key, value));
    }
    attrs
}
