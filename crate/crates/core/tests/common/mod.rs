//! Independent reference implementations used by the integration tests.
//! They are deliberately naive: exhaustive search, brute-force sweeps and
//! finite differences.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use tableforge::geometry::{BoxClass, CellBox};
use tableforge::map::Detection;
use tableforge::teds::{TableTree, TreeNode};

// ---------------------------------------------------------------- trees

/// Preorder and postorder ranks of every node (indexed by node id).
fn traversal_ranks(tree: &TableTree) -> (Vec<usize>, Vec<usize>) {
    let nodes = tree.nodes();
    let mut pre = vec![0; nodes.len()];
    let mut post = vec![0; nodes.len()];
    let (mut p, mut q) = (0, 0);
    fn walk(n: usize, nodes: &[TreeNode], pre: &mut [usize], post: &mut [usize], p: &mut usize, q: &mut usize) {
        pre[n] = *p;
        *p += 1;
        for &c in &nodes[n].children {
            walk(c, nodes, pre, post, p, q);
        }
        post[n] = *q;
        *q += 1;
    }
    walk(0, nodes, &mut pre, &mut post, &mut p, &mut q);
    (pre, post)
}

fn plain_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        d[i][0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Relabel cost of the reference metric.
pub fn oracle_relabel(a: &TreeNode, b: &TreeNode, structure_only: bool) -> f64 {
    if a.label != b.label {
        return 1.0;
    }
    if a.label != "td" {
        return 0.0;
    }
    if a.span.unwrap_or((1, 1)) != b.span.unwrap_or((1, 1)) {
        return 1.0;
    }
    if structure_only {
        return 0.0;
    }
    let (x, y) = (a.content.clone().unwrap_or_default(), b.content.clone().unwrap_or_default());
    let longest = x.chars().count().max(y.chars().count());
    if longest == 0 {
        0.0
    } else {
        plain_levenshtein(&x, &y) as f64 / longest as f64
    }
}

/// Ordered tree edit distance by exhaustive search over all mappings that
/// preserve both preorder and postorder (equivalently, sibling order and
/// ancestry). Cost = relabels of mapped pairs + unmapped nodes on each side.
pub fn oracle_ted(a: &TableTree, b: &TableTree, structure_only: bool) -> f64 {
    let (pre_a, post_a) = traversal_ranks(a);
    let (pre_b, post_b) = traversal_ranks(b);
    let mut by_pre_a: Vec<usize> = (0..a.size()).collect();
    by_pre_a.sort_by_key(|&n| pre_a[n]);
    let mut by_pre_b: Vec<usize> = (0..b.size()).collect();
    by_pre_b.sort_by_key(|&n| pre_b[n]);
    let cost: Vec<Vec<f64>> = by_pre_a
        .iter()
        .map(|&i| by_pre_b.iter().map(|&j| oracle_relabel(&a.nodes()[i], &b.nodes()[j], structure_only)).collect())
        .collect();
    let post_a: Vec<usize> = by_pre_a.iter().map(|&n| post_a[n]).collect();
    let post_b: Vec<usize> = by_pre_b.iter().map(|&n| post_b[n]).collect();

    struct Search<'a> {
        n: usize,
        m: usize,
        cost: &'a [Vec<f64>],
        post_a: &'a [usize],
        post_b: &'a [usize],
        pairs: Vec<(usize, usize)>,
        best: f64,
    }
    impl Search<'_> {
        // Mapped pairs are increasing in preorder on both sides, so the
        // search only needs to chose, for each node of `a`, an unmapped
        // node of `b` after the previously mapped one, or nothing.
        fn go(&mut self, i: usize, min_j: usize, relabel: f64) {
            if i == self.n {
                let k = self.pairs.len();
                let total = relabel + (self.n - k) as f64 + (self.m - k) as f64;
                if total < self.best {
                    self.best = total;
                }
                return;
            }
            self.go(i + 1, min_j, relabel);
            for j in min_j..self.m {
                let ok = self
                    .pairs
                    .iter()
                    .all(|&(pi, pj)| (self.post_a[pi] < self.post_a[i]) == (self.post_b[pj] < self.post_b[j]));
                if ok {
                    self.pairs.push((i, j));
                    let c = self.cost[i][j];
                    self.go(i + 1, j + 1, relabel + c);
                    self.pairs.pop();
                }
            }
        }
    }
    let mut s = Search {
        n: a.size(),
        m: b.size(),
        cost: &cost,
        post_a: &post_a,
        post_b: &post_b,
        pairs: Vec::new(),
        best: f64::INFINITY,
    };
    s.go(0, 0, 0.0);
    s.best
}

/// A random valid table tree with at most `max_nodes` nodes.
pub fn random_tree<R: Rng>(rng: &mut R, max_nodes: usize) -> TableTree {
    let n = rng.random_range(1..=max_nodes);
    let labels = ["tr", "td", "td", "thead", "tbody"];
    let texts = ["", "a", "b", "ab", "ba", "abc", "x"];
    let mut nodes = vec![TreeNode { label: "table".into(), span: None, content: None, children: Vec::new() }];
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let label = labels.choose(rng).unwrap().to_string();
        let (span, content) = if label == "td" {
            let span = *[(1, 1), (1, 1), (1, 2), (2, 1)].choose(rng).unwrap();
            (Some(span), Some(texts.choose(rng).unwrap().to_string()))
        } else {
            (None, None)
        };
        nodes.push(TreeNode { label, span, content, children: Vec::new() });
        nodes[parent].children.push(i);
    }
    TableTree::from_nodes(nodes).expect("generated tree is valid")
}

// ------------------------------------------------------------------ mAP

/// Average precision by sweeping every score threshold: at each threshold
/// the detections at or above it are matched from scratch.
pub fn oracle_map(dets: &[Vec<Detection>], gts: &[Vec<CellBox>], thresh: f64) -> f64 {
    let n_gt: usize = gts.iter().map(|g| g.iter().filter(|b| b.klass == BoxClass::Content).count()).sum();
    let mut scores: Vec<f64> =
        dets.iter().flatten().filter(|d| d.klass == BoxClass::Content).map(|d| d.score).collect();
    if n_gt == 0 || scores.is_empty() {
        return 0.0;
    }
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut points = Vec::new();
    for &t in &scores {
        let (mut tp, mut total) = (0usize, 0usize);
        for (img, ds) in dets.iter().enumerate() {
            let g: Vec<&CellBox> = gts[img].iter().filter(|b| b.klass == BoxClass::Content).collect();
            let mut kept: Vec<&Detection> =
                ds.iter().filter(|d| d.klass == BoxClass::Content && d.score >= t).collect();
            kept.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut used = vec![false; g.len()];
            for d in kept {
                total += 1;
                let mut best: Option<(usize, f64)> = None;
                for (j, gb) in g.iter().enumerate() {
                    let v = area_iou(&d.bbox, gb);
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((j, v));
                    }
                }
                if let Some((j, v)) = best {
                    if v >= thresh && !used[j] {
                        used[j] = true;
                        tp += 1;
                    }
                }
            }
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / total as f64));
    }
    // Area under the upper envelope of precision as a function of recall.
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

fn area_iou(a: &CellBox, b: &CellBox) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let i = w * h;
    if i == 0.0 {
        0.0
    } else {
        i / ((a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - i)
    }
}

/// A random detection instance with at most `max_dets` detections and
/// pairwise distinct scores.
pub fn random_detection_case<R: Rng>(rng: &mut R, max_dets: usize) -> (Vec<Vec<Detection>>, Vec<Vec<CellBox>>) {
    let images = rng.random_range(1..=3);
    let mut gts = Vec::new();
    for _ in 0..images {
        let k = rng.random_range(0..=4);
        let boxes = (0..k)
            .map(|_| {
                let x = rng.random_range(0.0..80.0);
                let y = rng.random_range(0.0..80.0);
                let klass = if rng.random_bool(0.15) { BoxClass::Empty } else { BoxClass::Content };
                CellBox::with_class(x, y, x + rng.random_range(2.0..20.0), y + rng.random_range(2.0..20.0), klass)
                    .unwrap()
            })
            .collect::<Vec<_>>();
        gts.push(boxes);
    }
    let n = rng.random_range(0..=max_dets);
    let mut scores: Vec<f64> = Vec::new();
    while scores.len() < n {
        let s = (rng.random_range(1..1000) as f64) / 1000.0;
        if !scores.contains(&s) {
            scores.push(s);
        }
    }
    let mut dets = vec![Vec::new(); images];
    for s in scores {
        let img = rng.random_range(0..images);
        let bbox = match gts[img].choose(rng) {
            Some(g) if rng.random_bool(0.7) => {
                let dx = rng.random_range(-3.0..3.0);
                let dy = rng.random_range(-3.0..3.0);
                CellBox::new((g.x0 + dx).max(0.0), (g.y0 + dy).max(0.0), g.x1 + dx + 3.0, g.y1 + dy + 3.0).unwrap()
            }
            _ => {
                let x = rng.random_range(0.0..90.0);
                let y = rng.random_range(0.0..90.0);
                CellBox::new(x, y, x + 5.0, y + 5.0).unwrap()
            }
        };
        let klass = if rng.random_bool(0.1) { BoxClass::Empty } else { BoxClass::Content };
        dets[img].push(Detection { bbox, score: s, klass });
    }
    (dets, gts)
}

// ------------------------------------------------------- gradients

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += h;
            lo[k] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = norm(a).max(norm(b));
    if s == 0.0 {
        0.0
    } else {
        norm(&d) / s
    }
}

/// A non-degenerate pair of normalized boxes: every predicted coordinate
/// keeps `margin` away from every ground-truth coordinate, so no finite
/// difference step crosses a kink of the losses.
pub fn random_box_pair<R: Rng>(rng: &mut R, margin: f64) -> ([f64; 4], [f64; 4]) {
    loop {
        let mut sample = || {
            let (a, b, c, d) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            [a.min(b), c.min(d), a.max(b), c.max(d)]
        };
        let p = sample();
        let g = sample();
        let far = p.iter().all(|x| g.iter().all(|y| (x - y).abs() > margin));
        let sized = p[2] - p[0] > margin && p[3] - p[1] > margin && g[2] - g[0] > margin && g[3] - g[1] > margin;
        if far && sized {
            return (p, g);
        }
    }
}
