//! Loss-minimizing attack inside an l2 ball, and how its result relates to the
//! closest flip point.
//!
//! The attack is projected gradient descent on the cross-entropy of the target
//! label: a step of fixed length along the negative normalized gradient, then
//! projection back onto `||p - x|| <= epsilon`. The lowest-loss iterate is kept.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::flip::FlipResult;
use crate::net::{argmax, Network};
use crate::path::{count_crossings, LineSegment, PathOptions};
use crate::train::cross_entropy;
use crate::util::{angle_deg, fmt_f64, fmt_opt};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    /// Defaults to `epsilon / 50`.
    pub step_size: Option<f64>,
    /// Used only to pick a direction when the gradient vanishes at the start.
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: 500,
            step_size: None,
            seed: 0,
        }
    }

    fn step(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / 50.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.step() > 0.0) {
            return Err(Error::InvalidParameter("step_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub point: DVector<f64>,
    pub distance: f64,
    pub predicted_class: usize,
    pub target: usize,
    pub succeeded: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Largest `||p - x||` over all iterates.
    pub max_iterate_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialComparison {
    pub flip_distance: f64,
    pub attack_distance: f64,
    /// Distance from `x` to the first class change on the way to the attack
    /// point; absent when the attack failed.
    pub first_crossing_distance: Option<f64>,
    /// Angle between `flip.point - x` and `attack.point - x`.
    pub angle_deg: Option<f64>,
}

fn loss_and_grad(net: &Network, p: &DVector<f64>, target: usize) -> Result<(f64, DVector<f64>, usize)> {
    let eval = net.forward(p)?;
    let loss = cross_entropy(&eval.softmax, target)?;
    let mut coeffs = eval.softmax.clone();
    coeffs[target] -= 1.0;
    let grad = net.backprop_input(&eval, &coeffs);
    Ok((loss, grad, argmax(&eval.logits)))
}

/// Drives `x` toward class `target` without leaving the `epsilon` ball.
pub fn constrained_loss_attack(net: &Network, x: &DVector<f64>, target: usize, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate()?;
    if target >= net.class_count() {
        return Err(Error::InvalidParameter(format!("target {target} out of range")));
    }
    let (initial_loss, mut grad, start_class) = loss_and_grad(net, x, target)?;
    let mut best = AttackResult {
        point: x.clone(),
        distance: 0.0,
        predicted_class: start_class,
        target,
        succeeded: start_class == target,
        initial_loss,
        final_loss: initial_loss,
        max_iterate_distance: 0.0,
    };
    if best.succeeded {
        return Ok(best);
    }
    let step = cfg.step();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut p = x.clone();
    for _ in 0..cfg.steps {
        let mut n = grad.norm();
        if !(n > 0.0) {
            grad = DVector::from_fn(x.len(), |_, _| StandardNormal.sample(&mut rng));
            n = grad.norm();
        }
        p -= &grad * (step / n);
        let offset = &p - x;
        let r = offset.norm();
        if r > cfg.epsilon {
            p = x + offset * (cfg.epsilon / r);
        }
        let (loss, g, class) = loss_and_grad(net, &p, target)?;
        let dist = (&p - x).norm();
        best.max_iterate_distance = best.max_iterate_distance.max(dist);
        if loss < best.final_loss {
            best.point = p.clone();
            best.distance = dist;
            best.final_loss = loss;
            best.predicted_class = class;
        }
        grad = g;
    }
    best.succeeded = best.predicted_class == target;
    Ok(best)
}

/// Distances, first crossing on the way to the attack point, and the angle
/// between the attack and flip directions.
pub fn compare_attack_vs_flip(net: &Network, x: &DVector<f64>, attack: &AttackResult, flip: &FlipResult, opts: &PathOptions) -> Result<AdversarialComparison> {
    if !flip.is_converged() {
        return Err(Error::InvalidInput(format!(
            "flip point has status {}",
            flip.status.as_str()
        )));
    }
    let first_crossing_distance = if attack.succeeded && attack.distance > 0.0 {
        let seg = LineSegment::between(x.clone(), attack.point.clone())?;
        count_crossings(net, &seg, opts)?.first().map(|&a| a * attack.distance)
    } else {
        None
    };
    Ok(AdversarialComparison {
        flip_distance: flip.distance,
        attack_distance: attack.distance,
        first_crossing_distance,
        angle_deg: angle_deg(&(&flip.point - x), &(&attack.point - x)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Fixed-width bins `[k w, (k + 1) w)` from 0 up to the largest distance.
pub fn flip_distance_histogram(results: &[FlipResult], bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParameter("bin_width must be positive".into()));
    }
    if let Some(r) = results.iter().find(|r| !r.is_converged()) {
        return Err(Error::InvalidInput(format!(
            "histogram needs converged flip points, got {}",
            r.status.as_str()
        )));
    }
    let index = |d: f64| (d / bin_width).floor() as usize;
    let Some(top) = results.iter().map(|r| index(r.distance)).max() else {
        return Ok(Vec::new());
    };
    let mut bins: Vec<HistogramBin> = (0..=top)
        .map(|k| HistogramBin {
            low: k as f64 * bin_width,
            high: (k + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for r in results {
        bins[index(r.distance)].count += 1;
    }
    Ok(bins)
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([fmt_f64(b.low), fmt_f64(b.high), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One attacked input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub id: usize,
    pub epsilon: f64,
    pub succeeded: bool,
    pub attack_distance: f64,
    pub flip_distance: Option<f64>,
    pub first_crossing_distance: Option<f64>,
    pub angle_deg: Option<f64>,
}

pub fn write_attack_csv<W: Write>(rows: &[AttackRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "epsilon",
        "succeeded",
        "attack_distance",
        "flip_distance",
        "first_crossing_distance",
        "angle_deg",
    ])?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            fmt_f64(r.epsilon),
            r.succeeded.to_string(),
            fmt_f64(r.attack_distance),
            fmt_opt(r.flip_distance),
            fmt_opt(r.first_crossing_distance),
            fmt_opt(r.angle_deg),
        ])?;
    }
    w.flush()?;
    Ok(())
}
