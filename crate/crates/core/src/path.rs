//! Model output along straight lines `(1 - a) x1 + a x2`.
//!
//! The step in `a` is set from the network's Lipschitz bound so that the logit
//! vector moves by at most `score_tol` between neighbouring samples. Argmax
//! changes between samples are refined by bisection on the gap between the two
//! classes involved.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::flip::FlipResult;
use crate::net::{argmax, softmax, Network};
use crate::util::fmt_f64;
use crate::{Error, Result};

/// Bisection stops once the bracket is this narrow in `a` (and the tie is tight).
const ALPHA_WIDTH: f64 = 1e-10;
const TIE_REL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl LineSegment {
    pub fn new(x1: DVector<f64>, x2: DVector<f64>, alpha_min: f64, alpha_max: f64) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(Error::shape(x1.len(), x2.len()));
        }
        if x1.iter().chain(x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("segment endpoints must be finite".into()));
        }
        if x1 == x2 {
            return Err(Error::InvalidParameter("segment endpoints coincide".into()));
        }
        if !(alpha_min < alpha_max) || !alpha_min.is_finite() || !alpha_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need finite alpha_min < alpha_max, got [{alpha_min}, {alpha_max}]"
            )));
        }
        Ok(Self {
            x1,
            x2,
            alpha_min,
            alpha_max,
        })
    }

    /// The segment from `x1` (a = 0) to `x2` (a = 1).
    pub fn between(x1: DVector<f64>, x2: DVector<f64>) -> Result<Self> {
        Self::new(x1, x2, 0.0, 1.0)
    }

    /// `(1 - a) x1 + a x2`; exactly `x1` at 0 and `x2` at 1.
    pub fn point(&self, alpha: f64) -> DVector<f64> {
        &self.x1 * (1.0 - alpha) + &self.x2 * alpha
    }

    pub fn length(&self) -> f64 {
        (&self.x2 - &self.x1).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOptions {
    /// Largest allowed logit change between neighbouring samples.
    pub score_tol: f64,
    pub max_samples: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            score_tol: 0.01,
            max_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathProfile {
    /// Strictly increasing.
    pub alphas: Vec<f64>,
    /// `samples x classes`.
    pub logits: DMatrix<f64>,
    /// `samples x classes`, rows sum to 1.
    pub softmax_scores: DMatrix<f64>,
    /// Refined positions where the winning class changes.
    pub crossings: Vec<f64>,
    /// Requested logit change bound between samples.
    pub step_tol: f64,
    /// The sample cap was hit, so `step_tol` is not guaranteed.
    pub capped: bool,
}

impl PathProfile {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Index of the sample at exactly `alpha`, if there is one.
    pub fn index_of(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|&a| a == alpha)
    }

    /// `alpha,score_class0,score_class1,...`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let classes = self.softmax_scores.ncols();
        let mut header = vec!["alpha".to_string()];
        header.extend((0..classes).map(|c| format!("score_class{c}")));
        w.write_record(&header)?;
        for (r, a) in self.alphas.iter().enumerate() {
            let mut row = vec![fmt_f64(*a)];
            row.extend((0..classes).map(|c| fmt_f64(self.softmax_scores[(r, c)])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample positions: a uniform grid fine enough for `score_tol`, plus 0 and 1
/// whenever they fall inside the range.
fn sample_alphas(net: &Network, seg: &LineSegment, opts: &PathOptions) -> (Vec<f64>, bool) {
    let span = seg.alpha_max - seg.alpha_min;
    let needed = net.lipschitz_bound() * span * seg.length() / opts.score_tol;
    let cap = opts.max_samples.max(2) - 1;
    let (intervals, capped) = if !needed.is_finite() || needed > cap as f64 {
        (cap, true)
    } else {
        ((needed.ceil() as usize).max(1), false)
    };
    let mut alphas: Vec<f64> = (0..=intervals)
        .map(|k| {
            if k == intervals {
                seg.alpha_max
            } else {
                seg.alpha_min + span * (k as f64 / intervals as f64)
            }
        })
        .collect();
    for exact in [0.0, 1.0] {
        if exact > seg.alpha_min && exact < seg.alpha_max && !alphas.contains(&exact) {
            let at = alphas.partition_point(|&a| a < exact);
            alphas.insert(at, exact);
        }
    }
    alphas.dedup();
    (alphas, capped)
}

/// Bisects on `z_a - z_b` between two samples where `a` then `b` wins.
fn refine_crossing(net: &Network, seg: &LineSegment, mut lo: f64, mut hi: f64, a: usize, b: usize) -> f64 {
    let gap = |t: f64| {
        let z = net.logits_unchecked(&seg.point(t));
        (z[a] - z[b], z.amax())
    };
    let (mut g_lo, _) = gap(lo);
    let (mut g_hi, _) = gap(hi);
    if g_lo == 0.0 {
        return lo;
    }
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if hi - lo <= ALPHA_WIDTH {
            let (best, scale) = if g_lo.abs() <= g_hi.abs() { gap(lo) } else { gap(hi) };
            if best.abs() <= TIE_REL * scale.max(1.0) {
                break;
            }
        }
        let (gm, _) = gap(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm > 0.0 {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    if g_lo.abs() <= g_hi.abs() {
        lo
    } else {
        hi
    }
}

/// Softmax scores along the segment and every change of the winning class.
pub fn sample_line(net: &Network, seg: &LineSegment, opts: &PathOptions) -> Result<PathProfile> {
    if seg.x1.len() != net.input_dim() {
        return Err(Error::shape(net.input_dim(), seg.x1.len()));
    }
    if !(opts.score_tol > 0.0) {
        return Err(Error::InvalidParameter("score_tol must be positive".into()));
    }
    let (alphas, capped) = sample_alphas(net, seg, opts);
    let classes = net.class_count();
    let mut logits = DMatrix::zeros(alphas.len(), classes);
    let mut scores = DMatrix::zeros(alphas.len(), classes);
    let mut winners = Vec::with_capacity(alphas.len());
    for (r, &a) in alphas.iter().enumerate() {
        let z = net.logits_unchecked(&seg.point(a));
        let s = softmax(&z);
        winners.push(argmax(&z));
        logits.set_row(r, &z.transpose());
        scores.set_row(r, &s.transpose());
    }
    let crossings = winners
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(r, w)| refine_crossing(net, seg, alphas[r], alphas[r + 1], w[0], w[1]))
        .collect();
    Ok(PathProfile {
        alphas,
        logits,
        softmax_scores: scores,
        crossings,
        step_tol: opts.score_tol,
        capped,
    })
}

/// Refined positions of every class change along the segment.
pub fn count_crossings(net: &Network, seg: &LineSegment, opts: &PathOptions) -> Result<Vec<f64>> {
    Ok(sample_line(net, seg, opts)?.crossings)
}

/// Profile from `x` (a = 0) through its flip point (a = 1) out to `overshoot`.
pub fn profile_to_flip(net: &Network, x: &DVector<f64>, flip: &FlipResult, overshoot: f64, opts: &PathOptions) -> Result<PathProfile> {
    if !flip.is_converged() {
        return Err(Error::InvalidInput(format!(
            "flip point has status {}",
            flip.status.as_str()
        )));
    }
    if !(overshoot >= 1.0) {
        return Err(Error::InvalidParameter("overshoot must be at least 1".into()));
    }
    let seg = LineSegment::new(x.clone(), flip.point.clone(), 0.0, overshoot)?;
    sample_line(net, &seg, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip::{closest_flip, FlipOptions};
    use crate::net::Layer;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    /// Class 0 on (-1, 1), class 1 outside.
    fn bump_net() -> Network {
        Network::new(vec![
            Layer::new(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]), v(&[1.0, -1.0]), 0.5).unwrap(),
            Layer::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]), v(&[-1.0, 0.0]), 1.0).unwrap(),
        ])
        .unwrap()
    }

    fn dense_count(net: &Network, seg: &LineSegment, step: f64) -> usize {
        let n = ((seg.alpha_max - seg.alpha_min) / step).ceil() as usize;
        let mut prev = net.predict(&seg.point(seg.alpha_min)).unwrap();
        let mut count = 0;
        for k in 1..=n {
            let a = (seg.alpha_min + k as f64 * step).min(seg.alpha_max);
            let c = net.predict(&seg.point(a)).unwrap();
            if c != prev {
                count += 1;
                prev = c;
            }
        }
        count
    }

    #[test]
    fn degenerate_segments_rejected() {
        assert!(LineSegment::between(v(&[1.0, 2.0]), v(&[1.0, 2.0])).is_err());
        assert!(LineSegment::new(v(&[0.0]), v(&[1.0]), 1.0, 1.0).is_err());
        assert!(LineSegment::new(v(&[0.0]), v(&[1.0, 2.0]), 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_net_is_flat() {
        let net = Network::linear(DMatrix::zeros(3, 2), DVector::zeros(3)).unwrap();
        let seg = LineSegment::between(v(&[0.0, 0.0]), v(&[5.0, -1.0])).unwrap();
        let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
        assert!(p.crossings.is_empty());
        for r in 0..p.len() {
            for c in 0..3 {
                assert!((p.softmax_scores[(r, c)] - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_single_crossing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
            let net = Network::linear(w.clone(), b.clone()).unwrap();
            let wd = DVector::from_fn(3, |c, _| w[(0, c)] - w[(1, c)]);
            let c = b[0] - b[1];
            let x1 = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let x2 = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let seg = LineSegment::between(x1.clone(), x2.clone()).unwrap();
            let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
            let diffs: Vec<f64> = (0..p.len()).map(|r| p.softmax_scores[(r, 0)] - p.softmax_scores[(r, 1)]).collect();
            let rising = wd.dot(&(&x2 - &x1)) > 0.0;
            for w in diffs.windows(2) {
                assert!(if rising { w[1] >= w[0] } else { w[1] <= w[0] });
            }
            let g1 = wd.dot(&x1) + c;
            let g2 = wd.dot(&x2) + c;
            if (g1 > 0.0) == (g2 > 0.0) {
                assert!(p.crossings.is_empty());
            } else {
                assert_eq!(p.crossings.len(), 1);
                let exact = -g1 / wd.dot(&(&x2 - &x1));
                assert!((p.crossings[0] - exact).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn bump_has_two_crossings() {
        let net = bump_net();
        let seg = LineSegment::between(v(&[-3.0]), v(&[3.0])).unwrap();
        let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
        assert_eq!(p.crossings.len(), 2);
        assert_eq!(dense_count(&net, &seg, 1e-5), 2);
        for &a in &p.crossings {
            let z = net.logits(&seg.point(a)).unwrap();
            assert!((z[0] - z[1]).abs() <= 1e-8 * z.amax().max(1.0));
        }
    }

    #[test]
    fn endpoints_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::random(&[3, 5, 2], 0.9, &mut rng).unwrap();
        let x1 = v(&[0.1, 0.2, 0.3]);
        let x2 = v(&[-0.7, 0.4, 1.1]);
        let seg = LineSegment::new(x1.clone(), x2.clone(), -0.5, 2.0).unwrap();
        let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
        for (a, x) in [(0.0, &x1), (1.0, &x2)] {
            let r = p.index_of(a).unwrap();
            let s = net.forward(x).unwrap().softmax;
            for c in 0..2 {
                assert_eq!(p.softmax_scores[(r, c)], s[c]);
            }
        }
        assert_eq!(p.alphas[0], -0.5);
        assert_eq!(*p.alphas.last().unwrap(), 2.0);
    }

    #[test]
    fn cap_is_flagged() {
        let net = bump_net();
        let seg = LineSegment::between(v(&[-3.0]), v(&[3.0])).unwrap();
        let opts = PathOptions {
            score_tol: 1e-9,
            max_samples: 1000,
        };
        let p = sample_line(&net, &seg, &opts).unwrap();
        assert!(p.capped);
        assert!(p.len() <= 1002);
    }

    #[test]
    fn profile_through_flip_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::random(&[2, 6, 2], 1.0, &mut rng).unwrap();
        let x = v(&[0.2, -0.3]);
        let flip = closest_flip(&net, &x, (0, 1), &FlipOptions::default()).unwrap();
        assert!(flip.is_converged());
        let p = profile_to_flip(&net, &x, &flip, 2.0, &PathOptions::default()).unwrap();
        let r1 = p.index_of(1.0).unwrap();
        assert!((p.softmax_scores[(r1, 0)] - p.softmax_scores[(r1, 1)]).abs() <= 2e-6);
        let r0 = p.index_of(0.0).unwrap();
        let s = net.forward(&x).unwrap().softmax;
        assert_eq!(p.softmax_scores[(r0, 0)], s[0]);

        let mut bad = flip.clone();
        bad.status = crate::flip::FlipStatus::LocalStationary;
        assert!(profile_to_flip(&net, &x, &bad, 2.0, &PathOptions::default()).is_err());
    }

    #[test]
    fn linear_logit_gap_is_linear_in_alpha() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        let net = Network::linear(w, v(&[0.1, -0.2])).unwrap();
        let x = v(&[1.0, 1.0]);
        let flip = closest_flip(&net, &x, (0, 1), &FlipOptions::default()).unwrap();
        let p = profile_to_flip(&net, &x, &flip, 2.0, &PathOptions::default()).unwrap();
        let g = |r: usize| p.logits[(r, 0)] - p.logits[(r, 1)];
        let g0 = g(0);
        for r in 0..p.len() {
            assert!((g(r) - g0 * (1.0 - p.alphas[r])).abs() <= 1e-8 * g0.abs().max(1.0));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let net = bump_net();
        let seg = LineSegment::between(v(&[-1.5]), v(&[1.5])).unwrap();
        let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,score_class0,score_class1\n"));
        assert_eq!(text.lines().count(), p.len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn neighbouring_samples_within_tolerance(seed in 0u64..1000, scale in 0.2f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = rng.random_range(0.5..2.0);
            let net = Network::random(&[2, 5, 3], sigma, &mut rng).unwrap();
            let x1 = DVector::from_fn(2, |_, _| rng.random_range(-scale..scale));
            let x2 = DVector::from_fn(2, |_, _| rng.random_range(-scale..scale));
            let seg = LineSegment::between(x1, x2).unwrap();
            let p = sample_line(&net, &seg, &PathOptions::default()).unwrap();
            prop_assert!(!p.capped);
            for r in 1..p.len() {
                prop_assert!(p.alphas[r] > p.alphas[r - 1]);
                let step = (p.logits.row(r) - p.logits.row(r - 1)).norm();
                prop_assert!(step <= p.step_tol);
                prop_assert!((p.softmax_scores.row(r).sum() - 1.0).abs() <= 1e-12);
            }
            prop_assert_eq!(p.crossings.len(), dense_count(&net, &seg, 1e-4));
        }
    }
}
