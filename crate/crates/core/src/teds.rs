//! Tree-edit-distance based similarity between HTML table trees.
//!
//! The edit distance is the classical ordered-tree distance computed with
//! keyroot decomposition. Deleting or inserting a node costs 1. Relabeling
//! costs 1 when the tags differ or when two `td` nodes have different
//! spans; two `td` nodes with equal spans cost the normalised Levenshtein
//! distance of their text; anything else is free.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::structure::{
    parse_html_with_content, to_html, CellSpec, Complexity, StructToken, StructureError, TagSequence,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TedsError {
    #[error("tree has no nodes")]
    EmptyTree,
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// One node of a table tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeNode {
    pub label: String,
    /// `(rowspan, colspan)`, present on `td` nodes only.
    pub span: Option<(u32, u32)>,
    /// Cell text, present on `td` nodes only.
    pub content: Option<String>,
    pub children: Vec<usize>,
}

/// Rooted, ordered, labelled tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableTree {
    nodes: Vec<TreeNode>,
}

/// Nested description used to build trees by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub label: String,
    pub span: Option<(u32, u32)>,
    pub content: Option<String>,
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn new(label: &str, children: Vec<NodeSpec>) -> Self {
        Self { label: label.to_string(), span: None, content: None, children }
    }

    /// A `td` leaf with span `(1, 1)` and the given text.
    pub fn td(text: &str) -> Self {
        Self { label: "td".into(), span: Some((1, 1)), content: Some(text.to_string()), children: Vec::new() }
    }

    pub fn td_span(text: &str, rowspan: u32, colspan: u32) -> Self {
        Self { span: Some((rowspan, colspan)), ..Self::td(text) }
    }
}

impl TableTree {
    /// Builds and validates a tree: the root must be `table` and only
    /// `td` nodes may carry spans or content.
    pub fn from_spec(root: &NodeSpec) -> Result<Self, TedsError> {
        fn push(spec: &NodeSpec, nodes: &mut Vec<TreeNode>) -> usize {
            let idx = nodes.len();
            nodes.push(TreeNode {
                label: spec.label.clone(),
                span: spec.span,
                content: spec.content.clone(),
                children: Vec::new(),
            });
            let children: Vec<usize> = spec.children.iter().map(|c| push(c, nodes)).collect();
            nodes[idx].children = children;
            idx
        }
        let mut nodes = Vec::new();
        push(root, &mut nodes);
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self, TedsError> {
        let root = nodes.first().ok_or(TedsError::EmptyTree)?;
        if root.label != "table" {
            return Err(TedsError::InvalidTree(format!("root label is {:?}, expected \"table\"", root.label)));
        }
        let mut parent_count = vec![0usize; nodes.len()];
        for node in &nodes {
            if node.label != "td" && (node.span.is_some() || node.content.is_some()) {
                return Err(TedsError::InvalidTree(format!("{:?} node carries td attributes", node.label)));
            }
            for &c in &node.children {
                if c == 0 || c >= nodes.len() {
                    return Err(TedsError::InvalidTree(format!("child index {c} out of range")));
                }
                parent_count[c] += 1;
            }
        }
        if parent_count.iter().skip(1).any(|&p| p != 1) {
            return Err(TedsError::InvalidTree("every non-root node needs exactly one parent".into()));
        }
        Ok(Self { nodes })
    }

    /// Tree for a tag sequence. `cell_text` (document order) fills the
    /// `td` contents; missing text is the empty string.
    pub fn from_tags(tags: &TagSequence, cell_text: Option<&[String]>) -> Self {
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        let mut cell_idx = 0;
        let mut pending_span = (1, 1);
        let mut iter = tags.tokens().iter();
        let open = |label: &str, span, content, nodes: &mut Vec<TreeNode>, stack: &mut Vec<usize>| {
            let idx = nodes.len();
            nodes.push(TreeNode { label: label.to_string(), span, content, children: Vec::new() });
            if let Some(&parent) = stack.last() {
                nodes[parent].children.push(idx);
            }
            stack.push(idx);
        };
        while let Some(tok) = iter.next() {
            match tok {
                StructToken::TableOpen => open("table", None, None, &mut nodes, &mut stack),
                StructToken::TheadOpen => open("thead", None, None, &mut nodes, &mut stack),
                StructToken::TbodyOpen => open("tbody", None, None, &mut nodes, &mut stack),
                StructToken::TrOpen => open("tr", None, None, &mut nodes, &mut stack),
                StructToken::TdOpen | StructToken::CloseBracket => {
                    let text = cell_text.and_then(|t| t.get(cell_idx)).cloned().unwrap_or_default();
                    open("td", Some(pending_span), Some(text), &mut nodes, &mut stack);
                    pending_span = (1, 1);
                    cell_idx += 1;
                }
                StructToken::RowspanAttr => {
                    if let Some(StructToken::SpanValue(v)) = iter.next() {
                        pending_span.0 = *v;
                    }
                }
                StructToken::ColspanAttr => {
                    if let Some(StructToken::SpanValue(v)) = iter.next() {
                        pending_span.1 = *v;
                    }
                }
                StructToken::CellOpenBracket | StructToken::SpanValue(_) => {}
                StructToken::TableClose
                | StructToken::TheadClose
                | StructToken::TbodyClose
                | StructToken::TrClose
                | StructToken::TdClose => {
                    stack.pop();
                }
            }
        }
        Self { nodes }
    }

    pub fn from_html(html: &str) -> Result<Self, TedsError> {
        let parsed = parse_html_with_content(html)?;
        Ok(Self::from_tags(&parsed.tags, Some(&parsed.cell_text)))
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Node count |T|.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Complex when any `td` spans more than one row or column.
    pub fn complexity(&self) -> Complexity {
        let spanning = self.nodes.iter().any(|n| n.span.is_some_and(|(r, c)| r > 1 || c > 1));
        if spanning {
            Complexity::Complex
        } else {
            Complexity::Simple
        }
    }

    /// HTML for the tree, assuming it was built from a table.
    pub fn to_html(&self) -> Result<String, TedsError> {
        let mut tokens = Vec::new();
        let mut text = Vec::new();
        fn walk(tree: &TableTree, idx: usize, tokens: &mut Vec<StructToken>, text: &mut Vec<String>) {
            let node = &tree.nodes[idx];
            let (open, close) = match node.label.as_str() {
                "table" => (StructToken::TableOpen, StructToken::TableClose),
                "thead" => (StructToken::TheadOpen, StructToken::TheadClose),
                "tbody" => (StructToken::TbodyOpen, StructToken::TbodyClose),
                "tr" => (StructToken::TrOpen, StructToken::TrClose),
                _ => {
                    let (rowspan, colspan) = node.span.unwrap_or((1, 1));
                    crate::structure::push_cell(tokens, CellSpec { rowspan, colspan });
                    text.push(node.content.clone().unwrap_or_default());
                    return;
                }
            };
            tokens.push(open);
            for &c in &node.children {
                walk(tree, c, tokens, text);
            }
            tokens.push(close);
        }
        walk(self, 0, &mut tokens, &mut text);
        let tags = TagSequence::new(tokens)?;
        Ok(to_html(&tags, Some(&text)))
    }
}

/// Costs of the elementary edit operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditCostModel {
    pub insert_cost: f64,
    pub delete_cost: f64,
    /// Ignore cell text when relabeling.
    pub structure_only: bool,
    /// Apply NFKC normalisation to cell text before comparing.
    pub normalize_unicode: bool,
}

impl Default for EditCostModel {
    fn default() -> Self {
        Self { insert_cost: 1.0, delete_cost: 1.0, structure_only: false, normalize_unicode: false }
    }
}

impl EditCostModel {
    pub fn structure_only() -> Self {
        Self { structure_only: true, ..Self::default() }
    }
}

/// Node data flattened for the distance computation.
struct Prepared<'a> {
    label: Vec<&'a str>,
    span: Vec<Option<(u32, u32)>>,
    text: Vec<Vec<char>>,
    /// Postorder index of the leftmost leaf of each node (postorder indexed).
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Prepared<'a> {
    fn new(tree: &'a TableTree, cost: &EditCostModel) -> Self {
        let n = tree.nodes.len();
        let mut order = Vec::with_capacity(n);
        let mut leftmost = Vec::with_capacity(n);
        // Iterative postorder keeping, per node, the leftmost leaf seen so far.
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(0, 0, None)];
        while let Some((node, child_pos, lm)) = stack.pop() {
            let children = &tree.nodes[node].children;
            if child_pos < children.len() {
                stack.push((node, child_pos + 1, lm));
                stack.push((children[child_pos], 0, None));
            } else {
                let post = order.len();
                let lm = lm.unwrap_or(post);
                order.push(node);
                leftmost.push(lm);
                if let Some(parent) = stack.last_mut() {
                    if parent.2.is_none() {
                        parent.2 = Some(lm);
                    }
                }
            }
        }
        // A keyroot is the highest node sharing its leftmost leaf.
        let mut highest = vec![None; n];
        for (i, &lm) in leftmost.iter().enumerate() {
            highest[lm] = Some(i);
        }
        let mut keyroots: Vec<usize> = highest.into_iter().flatten().collect();
        keyroots.sort_unstable();
        let label = order.iter().map(|&i| tree.nodes[i].label.as_str()).collect();
        let span = order.iter().map(|&i| tree.nodes[i].span).collect();
        let text = order
            .iter()
            .map(|&i| match &tree.nodes[i].content {
                Some(t) if !cost.structure_only => {
                    if cost.normalize_unicode {
                        t.nfkc().collect()
                    } else {
                        t.chars().collect()
                    }
                }
                _ => Vec::new(),
            })
            .collect();
        Self { label, span, text, leftmost, keyroots }
    }

    fn len(&self) -> usize {
        self.label.len()
    }
}

fn relabel_cost(a: &Prepared<'_>, i: usize, b: &Prepared<'_>, j: usize, cost: &EditCostModel) -> f64 {
    if a.label[i] != b.label[j] {
        return 1.0;
    }
    if a.label[i] != "td" {
        return 0.0;
    }
    if a.span[i].unwrap_or((1, 1)) != b.span[j].unwrap_or((1, 1)) {
        return 1.0;
    }
    if cost.structure_only {
        return 0.0;
    }
    normalized_levenshtein(&a.text[i], &b.text[j])
}

/// Levenshtein distance divided by the longer length; 0 for two empty strings.
pub fn normalized_levenshtein(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Minimal cost of node insertions, deletions and relabelings turning `a`
/// into `b`.
pub fn tree_edit_distance(a: &TableTree, b: &TableTree, cost: &EditCostModel) -> f64 {
    let pa = Prepared::new(a, cost);
    let pb = Prepared::new(b, cost);
    let (n, m) = (pa.len(), pb.len());
    let mut treedist = vec![0.0f64; n * m];
    let mut forest = vec![0.0f64; (n + 1) * (m + 1)];
    for &i in &pa.keyroots {
        for &j in &pb.keyroots {
            let (li, lj) = (pa.leftmost[i], pb.leftmost[j]);
            let rows = i - li + 2;
            let cols = j - lj + 2;
            let at = |x: usize, y: usize| x * cols + y;
            forest[at(0, 0)] = 0.0;
            for x in 1..rows {
                forest[at(x, 0)] = forest[at(x - 1, 0)] + cost.delete_cost;
            }
            for y in 1..cols {
                forest[at(0, y)] = forest[at(0, y - 1)] + cost.insert_cost;
            }
            for x in 1..rows {
                let ni = li + x - 1;
                for y in 1..cols {
                    let nj = lj + y - 1;
                    let del = forest[at(x - 1, y)] + cost.delete_cost;
                    let ins = forest[at(x, y - 1)] + cost.insert_cost;
                    if pa.leftmost[ni] == li && pb.leftmost[nj] == lj {
                        let ren = forest[at(x - 1, y - 1)] + relabel_cost(&pa, ni, &pb, nj, cost);
                        let d = del.min(ins).min(ren);
                        forest[at(x, y)] = d;
                        treedist[ni * m + nj] = d;
                    } else {
                        let px = pa.leftmost[ni] - li;
                        let py = pb.leftmost[nj] - lj;
                        let sub = forest[at(px, py)] + treedist[ni * m + nj];
                        forest[at(x, y)] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    treedist[(n - 1) * m + (m - 1)]
}

/// `1 - EditDist(a, b) / max(|a|, |b|)`, clamped at 0.
pub fn teds(a: &TableTree, b: &TableTree, structure_only: bool) -> Result<f64, TedsError> {
    let cost = if structure_only { EditCostModel::structure_only() } else { EditCostModel::default() };
    teds_with(a, b, &cost)
}

pub fn teds_with(a: &TableTree, b: &TableTree, cost: &EditCostModel) -> Result<f64, TedsError> {
    let denom = a.size().max(b.size());
    if a.size() == 0 || b.size() == 0 {
        return Err(TedsError::EmptyTree);
    }
    let dist = tree_edit_distance(a, b, cost);
    Ok((1.0 - dist / denom as f64).max(0.0))
}

/// Mean TEDS over a batch, overall and per complexity of the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TedsSummary {
    pub mean: f64,
    pub simple_mean: Option<f64>,
    pub complex_mean: Option<f64>,
    pub n: usize,
    pub n_simple: usize,
    pub n_complex: usize,
}

/// Scores `(ground_truth, prediction)` pairs. Per-pair scores are computed
/// in parallel and summed in input order.
pub fn teds_batch(pairs: &[(TableTree, TableTree)], cost: &EditCostModel) -> Result<TedsSummary, TedsError> {
    let scored: Vec<(Complexity, f64)> = pairs
        .par_iter()
        .map(|(gt, pred)| teds_with(gt, pred, cost).map(|s| (gt.complexity(), s)))
        .collect::<Result<_, _>>()?;
    Ok(summarize(&scored))
}

/// Aggregates already-computed `(complexity, score)` pairs.
pub fn summarize(scored: &[(Complexity, f64)]) -> TedsSummary {
    let mean_of = |filter: Option<Complexity>| -> (Option<f64>, usize) {
        let mut sum = KahanSum::default();
        let mut n = 0;
        for &(c, s) in scored {
            if filter.is_none_or(|f| f == c) {
                sum.add(s);
                n += 1;
            }
        }
        ((n > 0).then(|| sum.total() / n as f64), n)
    };
    let (mean, n) = mean_of(None);
    let (simple_mean, n_simple) = mean_of(Some(Complexity::Simple));
    let (complex_mean, n_complex) = mean_of(Some(Complexity::Complex));
    TedsSummary { mean: mean.unwrap_or(0.0), simple_mean, complex_mean, n, n_simple, n_complex }
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}
