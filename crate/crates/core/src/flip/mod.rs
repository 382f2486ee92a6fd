//! Flip points: inputs where two classes tie for the top score.
//!
//! [`closest_flip`] solves
//! `min ||p - x||^2  s.t.  z_i(p) = z_j(p),  z_k(p) <= z_i(p)  for k not in {i, j}`
//! on the logits with an augmented Lagrangian (PHR form for the inequalities)
//! and an L-BFGS inner solver, then snaps the result onto the boundary by
//! bisection along the ray from `x`. [`flip_along_direction`] finds the first
//! tie along a fixed ray, [`taylor_estimate`] is the first-order guess, and
//! [`compare`] puts the three together.

mod image;
mod lbfgs;

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use image::{check_legitimate_image, ImageContext, LegitimacyCheck, PIXEL_TOL};

use crate::net::{softmax, Network};
use crate::util::{angle_deg, fmt_f64, fmt_opt};
use crate::{Error, Result};

/// Largest `|softmax_i - softmax_j|` accepted on a converged flip point.
pub const EQUALITY_TOL: f64 = 1e-6;
/// Most negative dominance margin accepted on a converged flip point.
pub const DOMINANCE_TOL: f64 = 1e-8;

const PENALTY_CAP: f64 = 1e12;
const FIRST_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlipStatus {
    Converged,
    LocalStationary,
    BracketFailed,
    BoxExit,
}

impl FlipStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlipStatus::Converged => "converged",
            FlipStatus::LocalStationary => "local-stationary",
            FlipStatus::BracketFailed => "bracket-failed",
            FlipStatus::BoxExit => "box-exit",
        }
    }
}

/// Distance measure. Only the Euclidean norm is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlipOptions {
    pub norm: Norm,
    /// Perturbed starting points tried in addition to `x` itself.
    pub restarts: usize,
    pub seed: u64,
    pub max_outer: usize,
    /// Target for the largest constraint violation, in logit units.
    pub outer_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub lbfgs_memory: usize,
    pub inner_max_iter: usize,
    /// Inner gradient tolerance, scaled by `max(1, ||x||)`.
    pub inner_tol: f64,
    /// Largest gradient norm of the Lagrangian accepted at the final iterate,
    /// scaled by `max(1, ||x||)`.
    pub stationarity_tol: f64,
    /// Directional search gives up (box-exit) past this step length.
    pub max_step: f64,
}

impl Default for FlipOptions {
    fn default() -> Self {
        Self {
            norm: Norm::L2,
            restarts: 4,
            seed: 0,
            max_outer: 100,
            outer_tol: 1e-8,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            lbfgs_memory: 10,
            inner_max_iter: 1000,
            inner_tol: 1e-9,
            stationarity_tol: 1e-6,
            max_step: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlipResult {
    pub point: DVector<f64>,
    /// `||point - x||_2`.
    pub distance: f64,
    pub class_pair: (usize, usize),
    /// `|softmax_i - softmax_j|` at `point`.
    pub equality_residual: f64,
    /// `softmax_i - max_{k not in {i, j}} softmax_k`; with two classes the
    /// empty maximum counts as 0.
    pub dominance_margin: f64,
    pub status: FlipStatus,
    /// `None` until checked against pixel bounds.
    pub legitimate_image: Option<bool>,
    pub max_pixel_violation: Option<f64>,
}

impl FlipResult {
    pub fn is_converged(&self) -> bool {
        self.status == FlipStatus::Converged
    }

    fn attach_legitimacy(&mut self, check: LegitimacyCheck) {
        self.legitimate_image = Some(check.legitimate);
        self.max_pixel_violation = Some(check.max_violation);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorEstimate {
    pub distance: f64,
    /// Unit vector toward the linearized boundary.
    pub direction: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComparisonMetrics {
    /// Closest-flip distance divided by the Taylor distance.
    pub beta: Option<f64>,
    /// Distance along the Taylor direction divided by the closest-flip distance.
    pub directional_ratio: Option<f64>,
    /// Angle between the Taylor direction and `closest.point - x`, in degrees.
    pub angle_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub closest: FlipResult,
    pub taylor: Option<TaylorEstimate>,
    pub directional: Option<FlipResult>,
    pub metrics: ComparisonMetrics,
}

fn check_pair(net: &Network, pair: (usize, usize)) -> Result<()> {
    let k = net.class_count();
    if pair.0 == pair.1 || pair.0 >= k || pair.1 >= k {
        return Err(Error::InvalidParameter(format!(
            "class pair {pair:?} must be two distinct ids below {k}"
        )));
    }
    Ok(())
}

fn check_query(net: &Network, x: &DVector<f64>) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::shape(net.input_dim(), x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("query has non-finite entries".into()));
    }
    Ok(())
}

fn gap(net: &Network, p: &DVector<f64>, (i, j): (usize, usize)) -> f64 {
    let z = net.logits_unchecked(p);
    z[i] - z[j]
}

/// Builds a result at `point`, downgrading `status` to local-stationary when
/// the point fails the flip-point tolerances.
fn finish(net: &Network, x: &DVector<f64>, point: DVector<f64>, pair: (usize, usize), status: FlipStatus) -> FlipResult {
    let s = softmax(&net.logits_unchecked(&point));
    let (i, j) = pair;
    let equality_residual = (s[i] - s[j]).abs();
    let others = (0..s.len())
        .filter(|&k| k != i && k != j)
        .map(|k| s[k])
        .fold(0.0, f64::max);
    let dominance_margin = s[i] - others;
    let status = if status == FlipStatus::Converged
        && !(equality_residual <= EQUALITY_TOL && dominance_margin >= -DOMINANCE_TOL)
    {
        FlipStatus::LocalStationary
    } else {
        status
    };
    FlipResult {
        distance: (&point - x).norm(),
        point,
        class_pair: pair,
        equality_residual,
        dominance_margin,
        status,
        legitimate_image: None,
        max_pixel_violation: None,
    }
}

/// Augmented Lagrangian value and gradient at `p`.
#[allow(clippy::too_many_arguments)]
fn lagrangian(
    net: &Network,
    x: &DVector<f64>,
    p: &DVector<f64>,
    pair: (usize, usize),
    others: &[usize],
    lambda: f64,
    nu: &[f64],
    mu: f64,
) -> (f64, DVector<f64>) {
    let eval = match net.forward(p) {
        Ok(e) => e,
        Err(_) => return (f64::INFINITY, DVector::zeros(p.len())),
    };
    let z = &eval.logits;
    let (i, j) = pair;
    let d = p - x;
    let h = z[i] - z[j];
    let mut value = 0.5 * d.norm_squared() + lambda * h + 0.5 * mu * h * h;
    let mut coeffs = DVector::zeros(z.len());
    let wh = lambda + mu * h;
    coeffs[i] += wh;
    coeffs[j] -= wh;
    for (&k, &n) in others.iter().zip(nu) {
        let shifted = (n + mu * (z[k] - z[i])).max(0.0);
        value += (shifted * shifted - n * n) / (2.0 * mu);
        coeffs[k] += shifted;
        coeffs[i] -= shifted;
    }
    let grad = d + net.backprop_input(&eval, &coeffs);
    (value, grad)
}

/// Moves `p` onto the boundary along the ray from `x` through `p`.
fn polish(net: &Network, x: &DVector<f64>, p: &DVector<f64>, pair: (usize, usize)) -> Option<DVector<f64>> {
    let dir = p - x;
    if dir.norm() == 0.0 {
        return None;
    }
    let at = |t: f64| x + &dir * t;
    let g = |t: f64| gap(net, &at(t), pair);
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Some(x.clone());
    }
    let side = |v: f64| v.signum() == g0.signum();
    let g1 = g(1.0);
    if g1 == 0.0 {
        return Some(p.clone());
    }
    let (mut lo, mut hi) = if side(g1) {
        let mut step: f64 = 1e-12;
        loop {
            let t = 1.0 + step;
            if !side(g(t)) {
                break (1.0, t);
            }
            if step >= 1.0 {
                return None;
            }
            step *= 4.0;
        }
    } else {
        let mut step: f64 = 1e-12;
        loop {
            let t = (1.0 - step).max(0.0);
            if side(g(t)) {
                break (t, 1.0);
            }
            step *= 4.0;
        }
    };
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Some(at(mid));
        }
        if side(gm) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    Some(if g_lo.abs() <= g_hi.abs() { at(lo) } else { at(hi) })
}

/// One augmented-Lagrangian solve from `start`.
fn solve_from(net: &Network, x: &DVector<f64>, start: DVector<f64>, pair: (usize, usize), opts: &FlipOptions) -> FlipResult {
    let (i, j) = pair;
    let others: Vec<usize> = (0..net.class_count()).filter(|&k| k != i && k != j).collect();
    let scale = x.norm().max(1.0);
    let lopts = lbfgs::LbfgsOptions {
        memory: opts.lbfgs_memory,
        max_iter: opts.inner_max_iter,
        gtol: opts.inner_tol * scale,
    };
    let mut lambda = 0.0;
    let mut nu = vec![0.0; others.len()];
    let mut mu = opts.initial_penalty;
    let mut prev_resid = f64::INFINITY;
    let mut p = start;
    let mut ok = false;

    for _ in 0..opts.max_outer {
        let out = lbfgs::minimize(|q| lagrangian(net, x, q, pair, &others, lambda, &nu, mu), p, &lopts);
        p = out.x;
        let z = net.logits_unchecked(&p);
        let h = z[i] - z[j];
        let mut resid = h.abs();
        lambda += mu * h;
        for (&k, n) in others.iter().zip(nu.iter_mut()) {
            let g = z[k] - z[i];
            resid = resid.max(g.max(0.0));
            *n = (*n + mu * g).max(0.0);
        }
        if !resid.is_finite() {
            break;
        }
        if resid <= opts.outer_tol && out.grad_norm <= opts.stationarity_tol * scale {
            ok = true;
            break;
        }
        if resid > 0.25 * prev_resid {
            mu = (mu * opts.penalty_growth).min(PENALTY_CAP);
        }
        prev_resid = resid;
    }

    let status = if ok { FlipStatus::Converged } else { FlipStatus::LocalStationary };
    let polished = polish(net, x, &p, pair).unwrap_or(p);
    finish(net, x, polished, pair, status)
}

fn start_points(x: &DVector<f64>, opts: &FlipOptions) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = match x.norm() {
        n if n > 0.0 => n,
        _ => 1.0,
    };
    let mut starts = vec![x.clone()];
    for r in 0..opts.restarts {
        let radius = if r % 2 == 0 { 0.01 } else { 0.1 } * base;
        let noise = DVector::from_fn(x.len(), |_, _| StandardNormal.sample(&mut rng));
        let n: f64 = noise.norm();
        starts.push(if n > 0.0 { x + noise * (radius / n) } else { x.clone() });
    }
    starts
}

/// Keeps the better of two results: converged beats not, then shorter
/// distance, then smaller residual.
fn better(a: FlipResult, b: FlipResult) -> FlipResult {
    match (a.is_converged(), b.is_converged()) {
        (true, false) => a,
        (false, true) => b,
        (true, true) => {
            if b.distance < a.distance {
                b
            } else {
                a
            }
        }
        (false, false) => {
            if (b.equality_residual, b.distance) < (a.equality_residual, a.distance) {
                b
            } else {
                a
            }
        }
    }
}

/// Closest point to `x` where classes `i` and `j` tie and dominate the rest.
pub fn closest_flip(net: &Network, x: &DVector<f64>, pair: (usize, usize), opts: &FlipOptions) -> Result<FlipResult> {
    check_pair(net, pair)?;
    check_query(net, x)?;
    if gap(net, x, pair) == 0.0 {
        let at_x = finish(net, x, x.clone(), pair, FlipStatus::Converged);
        if at_x.is_converged() {
            return Ok(at_x);
        }
    }
    let best = start_points(x, opts)
        .into_iter()
        .map(|s| solve_from(net, x, s, pair, opts))
        .reduce(better)
        .expect("at least one start");
    Ok(best)
}

/// First tie of `z_i - z_j` along the ray `x + t dir / ||dir||`, `t > 0`.
pub fn flip_along_direction(net: &Network, x: &DVector<f64>, dir: &DVector<f64>, pair: (usize, usize), opts: &FlipOptions) -> Result<FlipResult> {
    flip_along_direction_in_box(net, x, dir, pair, opts, None)
}

/// As [`flip_along_direction`], additionally leaving with box-exit as soon as
/// a probe decodes to an image outside the pixel bounds.
pub fn flip_along_direction_in_box(
    net: &Network,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    pair: (usize, usize),
    opts: &FlipOptions,
    image: Option<ImageContext<'_>>,
) -> Result<FlipResult> {
    check_pair(net, pair)?;
    check_query(net, x)?;
    if dir.len() != x.len() {
        return Err(Error::shape(x.len(), dir.len()));
    }
    let n = dir.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidParameter("direction must be nonzero and finite".into()));
    }
    let unit = dir / n;
    let at = |t: f64| x + &unit * t;
    let g = |t: f64| gap(net, &at(t), pair);
    let g0 = g(0.0);
    if g0 == 0.0 {
        let mut r = finish(net, x, x.clone(), pair, FlipStatus::Converged);
        if let Some(ctx) = image {
            r.attach_legitimacy(ctx.check(x)?);
        }
        return Ok(r);
    }
    let side = |v: f64| v.signum() == g0.signum() && !v.is_nan();

    let (mut lo, mut hi) = (0.0, FIRST_STEP.min(opts.max_step));
    loop {
        if !side(g(hi)) {
            break;
        }
        if let Some(ctx) = image {
            if !ctx.check(&at(hi))?.legitimate {
                return Ok(finish(net, x, at(lo), pair, FlipStatus::BoxExit));
            }
        }
        if hi >= opts.max_step {
            return Ok(finish(net, x, at(lo), pair, FlipStatus::BoxExit));
        }
        lo = hi;
        hi = (2.0 * hi).min(opts.max_step);
    }

    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    let width_tol = |hi: f64| 1e-10 * hi.max(1.0);
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if hi - lo <= width_tol(hi) {
            // Keep going only while the tie is not yet within tolerance.
            let p = at(if g_lo.abs() <= g_hi.abs() { lo } else { hi });
            let s = softmax(&net.logits_unchecked(&p));
            if (s[pair.0] - s[pair.1]).abs() <= EQUALITY_TOL {
                break;
            }
        }
        let gm = g(mid);
        if side(gm) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    let t = if g_lo.abs() <= g_hi.abs() { lo } else { hi };
    let mut r = finish(net, x, at(t), pair, FlipStatus::Converged);
    if let Some(ctx) = image {
        let check = ctx.check(&r.point)?;
        r.attach_legitimacy(check);
        if !check.legitimate {
            r.status = FlipStatus::BoxExit;
        }
    }
    Ok(r)
}

/// First-order estimate: `|g| / ||grad g||` along `-sign(g) grad g`.
pub fn taylor_estimate(net: &Network, x: &DVector<f64>, pair: (usize, usize)) -> Result<TaylorEstimate> {
    check_pair(net, pair)?;
    let (g, grad) = net.logit_gap_with_grad(x, pair.0, pair.1)?;
    let n = grad.norm();
    if !(n >= 1e-14) {
        return Err(Error::DegenerateGradient(n));
    }
    let sign = if g < 0.0 { -1.0 } else { 1.0 };
    Ok(TaylorEstimate {
        distance: g.abs() / n,
        direction: grad * (-sign / n),
    })
}

/// Closest flip point, Taylor estimate, and flip point along the Taylor
/// direction, with the ratios and angle between them.
///
/// When the directional probe lands closer than the solver, the solver is
/// restarted from the probe's point; if that still does not beat it, the
/// probe's point becomes the closest flip point.
pub fn compare(net: &Network, x: &DVector<f64>, pair: (usize, usize), opts: &FlipOptions, image: Option<ImageContext<'_>>) -> Result<Comparison> {
    let mut closest = closest_flip(net, x, pair, opts)?;
    let taylor = match taylor_estimate(net, x, pair) {
        Ok(t) => Some(t),
        Err(Error::DegenerateGradient(_)) => None,
        Err(e) => return Err(e),
    };
    let directional = match &taylor {
        Some(t) => Some(flip_along_direction_in_box(net, x, &t.direction, pair, opts, image)?),
        None => None,
    };

    if let Some(d) = directional.as_ref().filter(|d| d.is_converged()) {
        let beats = |c: &FlipResult| !c.is_converged() || d.distance < c.distance;
        if beats(&closest) {
            let reseeded = solve_from(net, x, d.point.clone(), pair, opts);
            closest = better(closest, reseeded);
        }
        if beats(&closest) {
            closest = d.clone();
        }
    }
    if let Some(ctx) = image {
        closest.attach_legitimacy(ctx.check(&closest.point)?);
    }

    let mut metrics = ComparisonMetrics::default();
    if closest.is_converged() {
        if let Some(t) = &taylor {
            if t.distance > 0.0 {
                metrics.beta = Some(closest.distance / t.distance);
            }
            metrics.angle_deg = angle_deg(&t.direction, &(&closest.point - x));
        }
        if let Some(d) = directional.as_ref().filter(|d| d.is_converged()) {
            if closest.distance > 0.0 {
                metrics.directional_ratio = Some(d.distance / closest.distance);
            }
        }
    }
    Ok(Comparison {
        closest,
        taylor,
        directional,
        metrics,
    })
}

/// One flip-point query in a batch.
#[derive(Debug, Clone)]
pub struct FlipQuery<'a> {
    pub id: usize,
    pub x: DVector<f64>,
    pub pair: (usize, usize),
    pub image: Option<ImageContext<'a>>,
}

/// Runs [`compare`] on every query in parallel; results keep query order.
pub fn compare_batch(net: &Network, queries: &[FlipQuery<'_>], opts: &FlipOptions) -> Vec<Result<Comparison>> {
    queries
        .par_iter()
        .map(|q| compare(net, &q.x, q.pair, opts, q.image))
        .collect()
}

/// One CSV row per query.
pub fn write_flip_csv<W: Write>(rows: &[(usize, &Comparison)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "query_id",
        "class_i",
        "class_j",
        "distance",
        "taylor_distance",
        "directional_distance",
        "beta",
        "directional_ratio",
        "angle_deg",
        "equality_residual",
        "dominance_margin",
        "status",
        "directional_status",
        "legitimate",
    ])?;
    for (id, c) in rows {
        let r = &c.closest;
        w.write_record([
            id.to_string(),
            r.class_pair.0.to_string(),
            r.class_pair.1.to_string(),
            fmt_f64(r.distance),
            fmt_opt(c.taylor.as_ref().map(|t| t.distance)),
            fmt_opt(c.directional.as_ref().map(|d| d.distance)),
            fmt_opt(c.metrics.beta),
            fmt_opt(c.metrics.directional_ratio),
            fmt_opt(c.metrics.angle_deg),
            fmt_f64(r.equality_residual),
            fmt_f64(r.dominance_margin),
            r.status.as_str().to_string(),
            c.directional.as_ref().map(|d| d.status.as_str()).unwrap_or("").to_string(),
            match r.legitimate_image {
                Some(true) => "yes".into(),
                Some(false) => "no".into(),
                None => "not-checked".into(),
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}
