//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 50;
const MAX_ZOOM: usize = 60;

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once `||grad|| <= gtol`.
    pub gtol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub grad_norm: f64,
    #[allow(dead_code)]
    pub converged: bool,
}

struct Trial {
    a: f64,
    f: f64,
    d: f64,
    x: DVector<f64>,
    g: DVector<f64>,
}

fn probe<F>(f: &mut F, x: &DVector<f64>, dir: &DVector<f64>, a: f64) -> Trial
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let xt = x + dir * a;
    let (ft, gt) = f(&xt);
    Trial {
        a,
        f: ft,
        d: gt.dot(dir),
        x: xt,
        g: gt,
    }
}

/// Minimizer of the cubic through two points with slopes, kept inside the
/// central 80% of the interval (bisection otherwise).
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a0, a1) = (lo.a, hi.a);
    let width = a1 - a0;
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.d * hi.d;
    let mid = 0.5 * (a0 + a1);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = width.signum() * disc.sqrt();
    let denom = hi.d - lo.d + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let a = a1 - width * (hi.d + d2 - d1) / denom;
    let (l, h) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let guard = 0.1 * width.abs();
    if a.is_finite() && a > l + guard && a < h - guard {
        a
    } else {
        mid
    }
}

fn line_search<F>(f: &mut F, x: &DVector<f64>, fx: f64, dir: &DVector<f64>, dphi0: f64, a_init: f64) -> Option<Trial>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let armijo = |t: &Trial| t.f <= fx + C1 * t.a * dphi0;
    let mut prev = Trial {
        a: 0.0,
        f: fx,
        d: dphi0,
        x: x.clone(),
        g: DVector::zeros(0),
    };
    let mut a = a_init;
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        let t = probe(f, x, dir, a);
        if !t.f.is_finite() {
            // Step overshot into overflow: shrink.
            a *= 0.1;
            if a < 1e-30 {
                return None;
            }
            continue;
        }
        if !armijo(&t) || (!first && t.f >= prev.f) {
            lo = prev;
            hi = t;
            break;
        }
        if t.d.abs() <= -C2 * dphi0 {
            return Some(t);
        }
        if t.d >= 0.0 {
            lo = t;
            hi = prev;
            break;
        }
        if t.a > 1e30 {
            return None;
        }
        first = false;
        a = 2.0 * t.a;
        prev = t;
        if prev.a > a_init * 2f64.powi(MAX_BRACKET as i32) {
            return None;
        }
    }
    for _ in 0..MAX_ZOOM {
        let a = interpolate(&lo, &hi);
        if (hi.a - lo.a).abs() <= 1e-16 * lo.a.abs().max(1e-300) {
            break;
        }
        let t = probe(f, x, dir, a);
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if t.d.abs() <= -C2 * dphi0 {
                return Some(t);
            }
            if t.d * (hi.a - lo.a) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
    // Accept the best sufficient-decrease point if the curvature test never passed.
    (lo.a > 0.0 && lo.f < fx).then_some(lo)
}

/// Minimizes `f` (value and gradient) from `x0`.
pub(crate) fn minimize<F>(mut f: F, x0: DVector<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut gnorm = g.norm();
    let mut restarted = false;

    for _ in 0..opts.max_iter {
        if gnorm <= opts.gtol {
            return LbfgsOutcome {
                x,
                grad_norm: gnorm,
                converged: true,
            };
        }
        // Two-loop recursion.
        let mut q = -&g;
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        let (a_init, scale) = match history.back() {
            Some((s, y, _)) => (1.0, s.dot(y) / y.dot(y)),
            None => (1.0, 1.0 / gnorm.max(1e-300)),
        };
        q *= scale;
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = q;
        let mut dphi0 = g.dot(&dir);
        if !(dphi0 < 0.0) {
            history.clear();
            dir = -&g / gnorm;
            dphi0 = -gnorm;
        }

        match line_search(&mut f, &x, fx, &dir, dphi0, a_init) {
            Some(t) => {
                let s = &t.x - &x;
                let y = &t.g - &g;
                let sy = s.dot(&y);
                if sy > 1e-300 {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                let progress = fx - t.f;
                x = t.x;
                fx = t.f;
                g = t.g;
                gnorm = g.norm();
                restarted = false;
                if progress <= 0.0 {
                    break;
                }
            }
            None => {
                if restarted || history.is_empty() {
                    break;
                }
                history.clear();
                restarted = true;
            }
        }
    }
    LbfgsOutcome {
        converged: gnorm <= opts.gtol,
        x,
        grad_norm: gnorm,
    }
}
