//! Training objectives over predicted and ground-truth maps, with analytic
//! gradients.
//!
//! The text-region term is a softmax cross-entropy over positives plus the
//! hardest negatives, at most three negatives per positive. The center-line
//! term is a cross-entropy restricted to ground-truth text pixels. Radius,
//! cosine and sine are regressed with the smoothed L1 loss on center-line
//! pixels only; the radius residual is relative. Every term is a mean, and
//! pixels under the ignore mask are excluded from all terms.

use thiserror::Error;

use crate::geometry::PixelMask;
use crate::maps::GeometryMaps;

/// Ground-truth channels count as positive at or above this value.
pub const POSITIVE_AT: f32 = 0.5;
/// Negatives kept per positive by hard-example mining.
pub const OHEM_RATIO: usize = 3;
/// Ground-truth radii below this are left out of the radius term.
pub const MIN_GT_RADIUS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: prediction {0}x{1}, target {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("channel length {got} does not match {expected} pixels")]
    ChannelLength { got: usize, expected: usize },
}

/// Raw network outputs: two logits (background, text) per pixel for each
/// classification map, and three geometry channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    pub height: usize,
    pub width: usize,
    pub tr_logits: Vec<[f64; 2]>,
    pub tcl_logits: Vec<[f64; 2]>,
    pub r: Vec<f64>,
    pub cos_t: Vec<f64>,
    pub sin_t: Vec<f64>,
}

impl PredictionMaps {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            tr_logits: vec![[0.0; 2]; n],
            tcl_logits: vec![[0.0; 2]; n],
            r: vec![0.0; n],
            cos_t: vec![0.0; n],
            sin_t: vec![0.0; n],
        }
    }

    /// Predictions that agree with `gt`: logits separated by `margin` in
    /// favour of the true class and exact geometry.
    pub fn from_target(gt: &GeometryMaps, margin: f64) -> Self {
        let logits = |v: f32| {
            if v >= POSITIVE_AT {
                [0.0, margin]
            } else {
                [margin, 0.0]
            }
        };
        Self {
            height: gt.height(),
            width: gt.width(),
            tr_logits: gt.tr().iter().map(|&v| logits(v)).collect(),
            tcl_logits: gt.tcl().iter().map(|&v| logits(v)).collect(),
            r: gt.r().iter().map(|&v| v as f64).collect(),
            cos_t: gt.cos_t().iter().map(|&v| v as f64).collect(),
            sin_t: gt.sin_t().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<(), LossError> {
        let n = self.len();
        for got in [
            self.tr_logits.len(),
            self.tcl_logits.len(),
            self.r.len(),
            self.cos_t.len(),
            self.sin_t.len(),
        ] {
            if got != n {
                return Err(LossError::ChannelLength { got, expected: n });
            }
        }
        Ok(())
    }
}

/// Weights of the five terms, in the order tr, tcl, r, sin, cos.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights(pub [f64; 5]);

impl Default for LossWeights {
    fn default() -> Self {
        Self([1.0; 5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_tr: f64,
    pub l_tcl: f64,
    pub l_r: f64,
    pub l_sin: f64,
    pub l_cos: f64,
    pub total: f64,
}

pub fn smoothed_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn smoothed_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Cross-entropy of a two-way softmax and its gradient with respect to the logits.
fn cross_entropy(z: [f64; 2], positive: bool) -> (f64, [f64; 2]) {
    let m = z[0].max(z[1]);
    let (e0, e1) = ((z[0] - m).exp(), (z[1] - m).exp());
    let lse = m + (e0 + e1).ln();
    let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
    let y = positive as usize;
    let mut g = p;
    g[y] -= 1.0;
    (lse - z[y], g)
}

/// Indices of the negatives kept by hard-example mining: the
/// `min(3 * positives, negatives)` largest losses, ties to the lower index.
pub fn ohem_select(losses: &[f64], positive: &[bool], valid: &[bool]) -> Vec<usize> {
    let n_pos = (0..losses.len())
        .filter(|&i| valid[i] && positive[i])
        .count();
    let mut neg: Vec<usize> = (0..losses.len())
        .filter(|&i| valid[i] && !positive[i])
        .collect();
    let k = (OHEM_RATIO * n_pos).min(neg.len());
    neg.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    neg.truncate(k);
    neg.sort_unstable();
    neg
}

/// Loss terms only.
pub fn loss(
    pred: &PredictionMaps,
    gt: &GeometryMaps,
    ignore: &PixelMask,
    weights: LossWeights,
) -> Result<LossBreakdown, LossError> {
    loss_and_grad(pred, gt, ignore, weights).map(|(l, _)| l)
}

/// Loss terms and the gradient of `total` with respect to every prediction
/// entry, laid out like the prediction.
pub fn loss_and_grad(
    pred: &PredictionMaps,
    gt: &GeometryMaps,
    ignore: &PixelMask,
    weights: LossWeights,
) -> Result<(LossBreakdown, PredictionMaps), LossError> {
    let (h, w) = (pred.height, pred.width);
    for (gh, gw) in [(gt.height(), gt.width()), ignore.dims()] {
        if (gh, gw) != (h, w) {
            return Err(LossError::DimensionMismatch(h, w, gh, gw));
        }
    }
    pred.check()?;
    let n = h * w;
    let [w_tr, w_tcl, w_r, w_sin, w_cos] = weights.0;
    let valid: Vec<bool> = (0..n).map(|i| !ignore.get(i / w, i % w)).collect();
    let tr_pos: Vec<bool> = gt.tr().iter().map(|&v| v >= POSITIVE_AT).collect();
    let tcl_pos: Vec<bool> = gt.tcl().iter().map(|&v| v >= POSITIVE_AT).collect();
    let mut grad = PredictionMaps::zeros(h, w);

    // text region with hard-negative mining
    let tr: Vec<(f64, [f64; 2])> = (0..n)
        .map(|i| cross_entropy(pred.tr_logits[i], tr_pos[i]))
        .collect();
    let losses: Vec<f64> = tr.iter().map(|t| t.0).collect();
    let mut chosen: Vec<usize> = (0..n).filter(|&i| valid[i] && tr_pos[i]).collect();
    chosen.extend(ohem_select(&losses, &tr_pos, &valid));
    chosen.sort_unstable();
    let l_tr = mean_into(&chosen, &tr, w_tr, &mut grad.tr_logits);

    // center line, inside the ground-truth text region
    let inside: Vec<usize> = (0..n).filter(|&i| valid[i] && tr_pos[i]).collect();
    let tcl: Vec<(f64, [f64; 2])> = (0..n)
        .map(|i| cross_entropy(pred.tcl_logits[i], tcl_pos[i]))
        .collect();
    let l_tcl = mean_into(&inside, &tcl, w_tcl, &mut grad.tcl_logits);

    // geometry on center-line pixels
    let on_tcl: Vec<usize> = (0..n).filter(|&i| valid[i] && tcl_pos[i]).collect();
    let with_r: Vec<usize> = on_tcl
        .iter()
        .copied()
        .filter(|&i| gt.r()[i] as f64 >= MIN_GT_RADIUS)
        .collect();
    let l_r = regress(&with_r, w_r, &mut grad.r, |i| {
        let r = gt.r()[i] as f64;
        ((pred.r[i] - r) / r, 1.0 / r)
    });
    let l_sin = regress(&on_tcl, w_sin, &mut grad.sin_t, |i| {
        (pred.sin_t[i] - gt.sin_t()[i] as f64, 1.0)
    });
    let l_cos = regress(&on_tcl, w_cos, &mut grad.cos_t, |i| {
        (pred.cos_t[i] - gt.cos_t()[i] as f64, 1.0)
    });

    let total = w_tr * l_tr + w_tcl * l_tcl + w_r * l_r + w_sin * l_sin + w_cos * l_cos;
    Ok((
        LossBreakdown {
            l_tr,
            l_tcl,
            l_r,
            l_sin,
            l_cos,
            total,
        },
        grad,
    ))
}

fn mean_into(idx: &[usize], terms: &[(f64, [f64; 2])], weight: f64, grad: &mut [[f64; 2]]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let k = idx.len() as f64;
    let mut sum = 0.0;
    for &i in idx {
        let (l, g) = terms[i];
        sum += l;
        grad[i] = [weight * g[0] / k, weight * g[1] / k];
    }
    sum / k
}

/// Mean smoothed-L1 of residuals; `residual(i)` returns the residual and its
/// derivative with respect to the prediction.
fn regress(
    idx: &[usize],
    weight: f64,
    grad: &mut [f64],
    residual: impl Fn(usize) -> (f64, f64),
) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let k = idx.len() as f64;
    let mut sum = 0.0;
    for &i in idx {
        let (x, dx) = residual(i);
        sum += smoothed_l1(x);
        grad[i] = weight * smoothed_l1_grad(x) * dx / k;
    }
    sum / k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Huber form: `|x| - 1/2 + max(0, 1 - |x|)^2 / 2`.
    fn huber(x: f64) -> f64 {
        let a = x.abs();
        a - 0.5 + 0.5 * (1.0 - a).max(0.0).powi(2)
    }

    #[test]
    fn smoothed_l1_examples() {
        assert_eq!(smoothed_l1(0.0), 0.0);
        assert_eq!(smoothed_l1(0.5), 0.125);
        assert_eq!(smoothed_l1(2.0), 1.5);
        assert_eq!(smoothed_l1(-2.0), 1.5);
    }

    #[test]
    fn smoothed_l1_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 {
            let x: f64 = rng.gen_range(-4.0..4.0);
            assert!((smoothed_l1(x) - huber(x)).abs() <= 1e-12, "{x}");
        }
    }

    #[test]
    fn smoothed_l1_is_c1_at_one() {
        for s in [1.0, -1.0] {
            let (lo, hi) = (s * (1.0 - 1e-9), s * (1.0 + 1e-9));
            assert!((smoothed_l1(lo) - smoothed_l1(hi)).abs() < 1e-8);
            assert!((smoothed_l1_grad(lo) - smoothed_l1_grad(hi)).abs() < 1e-8);
        }
    }

    /// Random target with the usual nesting: tcl within tr.
    fn random_pair(
        rng: &mut ChaCha8Rng,
        h: usize,
        w: usize,
    ) -> (PredictionMaps, GeometryMaps, PixelMask) {
        let mut gt = GeometryMaps::zeros(h, w).unwrap();
        for i in 0..h * w {
            let tr = rng.gen_bool(0.3);
            let tcl = tr && rng.gen_bool(0.4);
            gt.tr_mut()[i] = tr as u8 as f32;
            gt.tcl_mut()[i] = tcl as u8 as f32;
            if tcl {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                gt.r_mut()[i] = rng.gen_range(2.0..20.0);
                gt.cos_t_mut()[i] = t.cos() as f32;
                gt.sin_t_mut()[i] = t.sin() as f32;
            }
        }
        let mut pred = PredictionMaps::zeros(h, w);
        for i in 0..h * w {
            pred.tr_logits[i] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            pred.tcl_logits[i] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            pred.r[i] = rng.gen_range(0.0..30.0);
            pred.cos_t[i] = rng.gen_range(-1.5..1.5);
            pred.sin_t[i] = rng.gen_range(-1.5..1.5);
        }
        let ignore = PixelMask::from_fn(h, w, |_, _| rng.gen_bool(0.05)).unwrap();
        (pred, gt, ignore)
    }

    #[test]
    fn matching_prediction_has_tiny_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, gt, ignore) = random_pair(&mut rng, 16, 16);
        let pred = PredictionMaps::from_target(&gt, 10.0);
        let l = loss(&pred, &gt, &ignore, LossWeights::default()).unwrap();
        for v in [l.l_tr, l.l_tcl, l.l_r, l.l_sin, l.l_cos] {
            assert!(v <= 1e-4);
        }
        assert_eq!((l.l_r, l.l_sin, l.l_cos), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ohem_keeps_three_negatives_per_positive() {
        // 10 positives, 100 equally wrong negatives
        let n = 110;
        let positive: Vec<bool> = (0..n).map(|i| i < 10).collect();
        let losses = vec![2.0; n];
        let sel = ohem_select(&losses, &positive, &vec![true; n]);
        assert_eq!(sel, (10..40).collect::<Vec<_>>());

        let mut gt = GeometryMaps::zeros(1, n).unwrap();
        let mut pred = PredictionMaps::zeros(1, n);
        for i in 0..n {
            if i < 10 {
                gt.tr_mut()[i] = 1.0;
                pred.tr_logits[i] = [0.0, 1.0];
            } else {
                pred.tr_logits[i] = [0.0, 2.0];
            }
        }
        let ignore = PixelMask::new(1, n).unwrap();
        let l = loss(&pred, &gt, &ignore, LossWeights::default()).unwrap();
        let pos = cross_entropy([0.0, 1.0], true).0;
        let neg = cross_entropy([0.0, 2.0], false).0;
        assert!((l.l_tr - (10.0 * pos + 30.0 * neg) / 40.0).abs() < 1e-14);
    }

    #[test]
    fn ohem_counts_on_constructed_cases() {
        for (p, nn) in [(0usize, 5usize), (1, 2), (2, 6), (3, 9), (5, 100), (4, 0)] {
            let n = p + nn;
            let positive: Vec<bool> = (0..n).map(|i| i < p).collect();
            let losses: Vec<f64> = (0..n).map(|i| (i * 7 % 11) as f64).collect();
            let sel = ohem_select(&losses, &positive, &vec![true; n]);
            assert_eq!(sel.len(), (3 * p).min(nn));
            // every kept negative is at least as hard as every dropped one
            let dropped: Vec<usize> = (p..n).filter(|i| !sel.contains(i)).collect();
            for &a in &sel {
                for &b in &dropped {
                    assert!(losses[a] >= losses[b]);
                }
            }
        }
    }

    #[test]
    fn no_positives_gives_zero_region_loss() {
        let gt = GeometryMaps::zeros(4, 4).unwrap();
        let mut pred = PredictionMaps::zeros(4, 4);
        pred.tr_logits.iter_mut().for_each(|z| *z = [-5.0, 5.0]);
        let l = loss(
            &pred,
            &gt,
            &PixelMask::new(4, 4).unwrap(),
            LossWeights::default(),
        )
        .unwrap();
        assert_eq!(l.l_tr, 0.0);
    }

    fn entries(p: &mut PredictionMaps) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = Vec::new();
        for z in p.tr_logits.iter_mut().chain(p.tcl_logits.iter_mut()) {
            let [a, b] = z;
            v.push(a);
            v.push(b);
        }
        v.extend(p.r.iter_mut());
        v.extend(p.cos_t.iter_mut());
        v.extend(p.sin_t.iter_mut());
        v
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let step = 1e-4;
        for _ in 0..20 {
            let (pred, gt, ignore) = random_pair(&mut rng, 16, 16);
            let weights = LossWeights([1.0, 0.7, 1.3, 0.9, 1.1]);
            let (_, mut grad) = loss_and_grad(&pred, &gt, &ignore, weights).unwrap();
            let analytic: Vec<f64> = entries(&mut grad).into_iter().map(|v| *v).collect();
            let mut probe = pred.clone();
            for (k, &a) in analytic.iter().enumerate() {
                let orig = *entries(&mut probe)[k];
                *entries(&mut probe)[k] = orig + step;
                let up = loss(&probe, &gt, &ignore, weights).unwrap().total;
                *entries(&mut probe)[k] = orig - step;
                let down = loss(&probe, &gt, &ignore, weights).unwrap().total;
                *entries(&mut probe)[k] = orig;
                let numeric = (up - down) / (2.0 * step);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel <= 1e-4, "entry {k}: analytic {a}, numeric {numeric}");
            }
        }
    }

    #[test]
    fn weights_scale_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (pred, gt, ignore) = random_pair(&mut rng, 12, 12);
        let base = loss(&pred, &gt, &ignore, LossWeights::default())
            .unwrap()
            .total;
        for k in [0.5, 2.0, 4.0] {
            let t = loss(&pred, &gt, &ignore, LossWeights([k; 5]))
                .unwrap()
                .total;
            assert_eq!(t, k * base);
        }
        let t = loss(&pred, &gt, &ignore, LossWeights([3.0; 5]))
            .unwrap()
            .total;
        assert!((t - 3.0 * base).abs() <= 1e-14 * base);
    }

    #[test]
    fn geometry_outside_center_line_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, gt, ignore) = random_pair(&mut rng, 12, 12);
        let mut pred = PredictionMaps::from_target(&gt, 3.0);
        for i in 0..pred.len() {
            if gt.tcl()[i] < POSITIVE_AT {
                pred.r[i] = rng.gen_range(-50.0..50.0);
                pred.cos_t[i] = rng.gen_range(-5.0..5.0);
                pred.sin_t[i] = rng.gen_range(-5.0..5.0);
            }
        }
        let l = loss(&pred, &gt, &ignore, LossWeights::default()).unwrap();
        assert_eq!((l.l_r, l.l_sin, l.l_cos), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pixel_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (pred, gt, ignore) = random_pair(&mut rng, 12, 12);
        let base = loss(&pred, &gt, &ignore, LossWeights::default()).unwrap();
        let n = pred.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut p2 = PredictionMaps::zeros(12, 12);
        let mut g2 = GeometryMaps::zeros(12, 12).unwrap();
        let mut ig2 = PixelMask::new(12, 12).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            p2.tr_logits[dst] = pred.tr_logits[src];
            p2.tcl_logits[dst] = pred.tcl_logits[src];
            p2.r[dst] = pred.r[src];
            p2.cos_t[dst] = pred.cos_t[src];
            p2.sin_t[dst] = pred.sin_t[src];
            g2.tr_mut()[dst] = gt.tr()[src];
            g2.tcl_mut()[dst] = gt.tcl()[src];
            g2.r_mut()[dst] = gt.r()[src];
            g2.cos_t_mut()[dst] = gt.cos_t()[src];
            g2.sin_t_mut()[dst] = gt.sin_t()[src];
            ig2.set(dst / 12, dst % 12, ignore.get(src / 12, src % 12));
        }
        let l = loss(&p2, &g2, &ig2, LossWeights::default()).unwrap();
        assert!((l.total - base.total).abs() <= 1e-12 * base.total);
    }

    #[test]
    fn ignored_pixels_do_not_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (pred, gt, _) = random_pair(&mut rng, 8, 8);
        let all = PixelMask::from_fn(8, 8, |_, _| true).unwrap();
        let l = loss(&pred, &gt, &all, LossWeights::default()).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let gt = GeometryMaps::zeros(4, 5).unwrap();
        let err = loss(
            &PredictionMaps::zeros(4, 4),
            &gt,
            &PixelMask::new(4, 4).unwrap(),
            LossWeights::default(),
        );
        assert_eq!(err.unwrap_err(), LossError::DimensionMismatch(4, 4, 4, 5));
    }
}
