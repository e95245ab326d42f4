//! Training losses with analytic gradients.
//!
//! Boxes are corner coordinates `[x0, y0, x1, y1]`. Gradients are taken
//! with respect to the predicted box or the logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CellBox;

/// Minimum extent a predicted box is clamped to before evaluation.
pub const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("target {target} out of range for vocabulary of {vocab} at position {pos}")]
    IndexOutOfRange { pos: usize, target: usize, vocab: usize },
    #[error("{logits} logit vectors for {targets} targets")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("logit vector {0} has a different length")]
    RaggedLogits(usize),
    #[error("no tokens")]
    Empty,
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("box weights must be finite")]
    NonFiniteWeight,
}

/// Weights of the combined loss `λ·l_s + (1−λ)·l_box`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    lambda: f64,
    lambda_iou: f64,
    lambda_l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.5, lambda_iou: 1.0, lambda_l1: 1.0 }
    }
}

impl LossWeights {
    pub fn new(lambda: f64, lambda_iou: f64, lambda_l1: f64) -> Result<Self, LossError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(LossError::BadLambda(lambda));
        }
        if !lambda_iou.is_finite() || !lambda_l1.is_finite() {
            return Err(LossError::NonFiniteWeight);
        }
        Ok(Self { lambda, lambda_iou, lambda_l1 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_iou(&self) -> f64 {
        self.lambda_iou
    }

    pub fn lambda_l1(&self) -> f64 {
        self.lambda_l1
    }
}

/// Sum of absolute coordinate differences. The subgradient is 0 where a
/// coordinate equals its target.
pub fn l1_loss(pred: &[f64; 4], gt: &[f64; 4]) -> (f64, [f64; 4]) {
    let mut grad = [0.0; 4];
    let mut loss = 0.0;
    for k in 0..4 {
        let d = pred[k] - gt[k];
        loss += d.abs();
        grad[k] = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    (loss, grad)
}

fn clamp_degenerate(b: &[f64; 4]) -> [f64; 4] {
    [b[0], b[1], b[2].max(b[0] + DEGENERATE_EPS), b[3].max(b[1] + DEGENERATE_EPS)]
}

/// Generalised IoU of two corner-coordinate boxes, in [-1, 1].
pub fn giou_coords(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let parts = BoxPair::new(&clamp_degenerate(a), &clamp_degenerate(b));
    parts.inter / parts.union - (parts.enclose - parts.union) / parts.enclose
}

pub fn giou(a: &CellBox, b: &CellBox) -> f64 {
    giou_coords(&a.to_array(), &b.to_array())
}

struct BoxPair {
    iw: f64,
    ih: f64,
    cw: f64,
    ch: f64,
    inter: f64,
    union: f64,
    enclose: f64,
}

impl BoxPair {
    fn new(p: &[f64; 4], g: &[f64; 4]) -> Self {
        let iw = (p[2].min(g[2]) - p[0].max(g[0])).max(0.0);
        let ih = (p[3].min(g[3]) - p[1].max(g[1])).max(0.0);
        let cw = p[2].max(g[2]) - p[0].min(g[0]);
        let ch = p[3].max(g[3]) - p[1].min(g[1]);
        let ap = (p[2] - p[0]) * (p[3] - p[1]);
        let ag = (g[2] - g[0]) * (g[3] - g[1]);
        let inter = iw * ih;
        Self { iw, ih, cw, ch, inter, union: ap + ag - inter, enclose: cw * ch }
    }
}

/// `1 − GIoU(pred, gt)` and its gradient with respect to `pred`.
pub fn iou_loss(pred: &[f64; 4], gt: &[f64; 4]) -> (f64, [f64; 4]) {
    let p = clamp_degenerate(pred);
    let g = clamp_degenerate(gt);
    let s = BoxPair::new(&p, &g);
    let loss = 2.0 - s.inter / s.union - s.union / s.enclose;

    let (w, h) = (p[2] - p[0], p[3] - p[1]);
    let d_ap = [-h, -w, h, w];

    let overlap = s.iw > 0.0 && s.ih > 0.0;
    let mut d_i = [0.0; 4];
    if overlap {
        if p[0] > g[0] {
            d_i[0] = -s.ih;
        }
        if p[2] < g[2] {
            d_i[2] = s.ih;
        }
        if p[1] > g[1] {
            d_i[1] = -s.iw;
        }
        if p[3] < g[3] {
            d_i[3] = s.iw;
        }
    }
    let mut d_c = [0.0; 4];
    if p[0] < g[0] {
        d_c[0] = -s.ch;
    }
    if p[2] > g[2] {
        d_c[2] = s.ch;
    }
    if p[1] < g[1] {
        d_c[1] = -s.cw;
    }
    if p[3] > g[3] {
        d_c[3] = s.cw;
    }

    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_u = d_ap[k] - d_i[k];
        grad[k] = -(d_i[k] * s.union - s.inter * d_u) / (s.union * s.union)
            - (d_u * s.enclose - s.union * d_c[k]) / (s.enclose * s.enclose);
    }
    (loss, grad)
}

/// Mean token cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    if logits.len() != targets.len() {
        return Err(LossError::LengthMismatch { logits: logits.len(), targets: targets.len() });
    }
    if logits.is_empty() {
        return Err(LossError::Empty);
    }
    let vocab = logits[0].len();
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (pos, (row, &t)) in logits.iter().zip(targets).enumerate() {
        if row.len() != vocab {
            return Err(LossError::RaggedLogits(pos));
        }
        if t >= vocab {
            return Err(LossError::IndexOutOfRange { pos, target: t, vocab });
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[t];
        let mut g: Vec<f64> = row.iter().map(|z| (z - lse).exp() / n).collect();
        g[t] -= 1.0 / n;
        grads.push(g);
    }
    Ok((loss / n, grads))
}

/// `λ·l_s + (1−λ)·mean(λ_iou·l_iou + λ_l1·l_1)`; the box term is 0 when
/// there are no boxes.
pub fn total_loss(l_s: f64, box_losses: &[(f64, f64)], w: &LossWeights) -> f64 {
    let l_box = if box_losses.is_empty() {
        0.0
    } else {
        box_losses.iter().map(|(iou, l1)| w.lambda_iou * iou + w.lambda_l1 * l1).sum::<f64>() / box_losses.len() as f64
    };
    w.lambda * l_s + (1.0 - w.lambda) * l_box
}

/// Worst relative gradient error per loss found by the self-test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub samples: usize,
    pub tolerance: f64,
    pub l1_max_rel_err: f64,
    pub iou_max_rel_err: f64,
    pub cross_entropy_max_rel_err: f64,
    pub passed: bool,
}

/// Relative error of two gradient vectors, `‖a−b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn away_from(x: f64, kinks: &[f64], margin: f64) -> bool {
    kinks.iter().all(|k| (x - k).abs() > margin)
}

/// A random pair of corner boxes in [0,1]² whose coordinates keep a margin
/// from every point where the losses are not differentiable.
pub fn random_box_pair<R: Rng>(rng: &mut R, margin: f64) -> ([f64; 4], [f64; 4]) {
    loop {
        let mut p = [0.0; 4];
        let mut g = [0.0; 4];
        for b in [&mut p, &mut g] {
            let (x0, x1) = (rng.random::<f64>(), rng.random::<f64>());
            let (y0, y1) = (rng.random::<f64>(), rng.random::<f64>());
            *b = [x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)];
        }
        let ok = (0..4).all(|k| away_from(p[k], &[g[0], g[1], g[2], g[3]], margin))
            && p[2] - p[0] > margin
            && p[3] - p[1] > margin
            && g[2] - g[0] > margin
            && g[3] - g[1] > margin;
        if ok {
            return (p, g);
        }
    }
}

fn central_difference<F: Fn(&[f64; 4]) -> f64>(f: F, x: &[f64; 4], h: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for k in 0..4 {
        let (mut hi, mut lo) = (*x, *x);
        hi[k] += h;
        lo[k] -= h;
        out[k] = (f(&hi) - f(&lo)) / (2.0 * h);
    }
    out
}

/// Compares every analytic gradient against central finite differences on
/// `samples` random inputs per loss.
pub fn selftest(samples: usize, seed: u64) -> SelftestReport {
    const TOL: f64 = 1e-4;
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut l1_err, mut iou_err, mut ce_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let (p, g) = random_box_pair(&mut rng, 1e-3);
        let (_, a) = l1_loss(&p, &g);
        let n = central_difference(|x| l1_loss(x, &g).0, &p, H);
        l1_err = l1_err.max(relative_error(&a, &n));

        let (_, a) = iou_loss(&p, &g);
        let n = central_difference(|x| iou_loss(x, &g).0, &p, H);
        iou_err = iou_err.max(relative_error(&a, &n));

        let vocab = rng.random_range(2..12);
        let len = rng.random_range(1..5);
        let logits: Vec<Vec<f64>> =
            (0..len).map(|_| (0..vocab).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let targets: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
        let (_, grad) = cross_entropy(&logits, &targets).expect("valid inputs");
        let mut numeric = Vec::new();
        for i in 0..len {
            for j in 0..vocab {
                let mut hi = logits.clone();
                let mut lo = logits.clone();
                hi[i][j] += H;
                lo[i][j] -= H;
                let f = |l: &[Vec<f64>]| cross_entropy(l, &targets).expect("valid inputs").0;
                numeric.push((f(&hi) - f(&lo)) / (2.0 * H));
            }
        }
        let analytic: Vec<f64> = grad.into_iter().flatten().collect();
        ce_err = ce_err.max(relative_error(&analytic, &numeric));
    }
    SelftestReport {
        samples,
        tolerance: TOL,
        l1_max_rel_err: l1_err,
        iou_max_rel_err: iou_err,
        cross_entropy_max_rel_err: ce_err,
        passed: l1_err <= TOL && iou_err <= TOL && ce_err <= TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_fixtures() {
        let g = [0.1, 0.2, 0.5, 0.6];
        assert_eq!(l1_loss(&g, &g), (0.0, [0.0; 4]));
        let p = g.map(|v| v + 0.1);
        let (l, grad) = l1_loss(&p, &g);
        assert!((l - 0.4).abs() < 1e-12);
        assert_eq!(grad, [1.0; 4]);
    }

    #[test]
    fn giou_fixtures() {
        let a = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(giou_coords(&a, &a), 1.0);
        assert!((giou_coords(&a, &[2.0, 2.0, 3.0, 3.0]) + 7.0 / 9.0).abs() < 1e-12);
        assert!((iou_loss(&a, &[2.0, 2.0, 3.0, 3.0]).0 - 16.0 / 9.0).abs() < 1e-12);
        assert_eq!(iou_loss(&a, &a).0, 0.0);
        let (p, q) = ([1.0, 2.0, 4.0, 7.0], [2.0, 1.0, 5.0, 3.0]);
        assert!((giou_coords(&p, &q) - giou_coords(&p.map(|v| v * 10.0), &q.map(|v| v * 10.0))).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_fixtures() {
        let (l, _) = cross_entropy(&[vec![0.0; 4]], &[2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let (l, _) = cross_entropy(&[vec![0.0, 800.0, 0.0]], &[1]).unwrap();
        assert!(l < 1e-300);
        assert!(matches!(cross_entropy(&[vec![0.0; 3]], &[3]), Err(LossError::IndexOutOfRange { .. })));
    }

    #[test]
    fn total_loss_fixtures() {
        let w = LossWeights::new(0.5, 1.0, 0.0).unwrap();
        assert_eq!(total_loss(2.0, &[(4.0, 9.0)], &w), 3.0);
        let w = LossWeights::new(1.0, 3.0, 5.0).unwrap();
        assert_eq!(total_loss(2.5, &[(4.0, 9.0), (1.0, 1.0)], &w), 2.5);
        assert!(LossWeights::new(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn selftest_passes() {
        let r = selftest(200, 1);
        assert!(r.passed, "{r:?}");
    }
}
