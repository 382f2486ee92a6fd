use nalgebra::{DMatrix, DVector};

const TOL: f64 = 1e-10;
const MAX_ITERS: usize = 10_000;

/// Largest singular value by power iteration on `W^T W`.
///
/// Stops when the relative change of the estimate drops to `1e-10` or after
/// 10 000 iterations. The zero matrix gives 0.
pub fn spectral_norm(w: &DMatrix<f64>) -> f64 {
    let n = w.ncols();
    if n == 0 || w.nrows() == 0 || w.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // Deterministic start with no special alignment to any coordinate or to the
    // all-ones vector.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662466927).fract());
    v /= v.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..MAX_ITERS {
        let u = w * &v;
        let mut next = w.tr_mul(&u);
        let lambda = next.norm();
        if lambda == 0.0 {
            // Start vector in the null space; fall back to the widest column.
            return w
                .column_iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max)
                .max(estimate);
        }
        next /= lambda;
        v = next;
        let sigma = lambda.sqrt();
        if (sigma - estimate).abs() <= TOL * sigma {
            estimate = sigma;
            break;
        }
        estimate = sigma;
    }
    // Rayleigh quotient at the final vector.
    (w * &v).norm().max(estimate)
}
