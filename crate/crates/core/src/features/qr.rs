//! Householder QR with greedy column pivoting.
//!
//! Works in place on a column-major `DMatrix`: after `steps` reflections the
//! upper triangle holds `R`, the strict lower part holds the Householder
//! vectors (unit leading entry implied), and `tau` their scales. `Q` is never
//! formed unless asked for, so the tall training matrix costs no extra memory.

use nalgebra::DMatrix;

/// Relative tolerance under which two remaining column norms count as tied.
const TIE_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct PivotedQr {
    factors: DMatrix<f64>,
    tau: Vec<f64>,
    pivots: Vec<usize>,
    steps: usize,
}

/// Full pivoted factorization: `A P = Q R`, `|R_11| >= |R_22| >= ...`.
pub fn qr_pivoted(a: DMatrix<f64>) -> PivotedQr {
    let steps = a.nrows().min(a.ncols());
    qr_pivoted_steps(a, steps)
}

/// Runs only the first `steps` pivot/reflection steps. The first `steps`
/// pivots are the same as those of the full factorization.
pub fn qr_pivoted_steps(mut a: DMatrix<f64>, steps: usize) -> PivotedQr {
    let (m, n) = a.shape();
    let steps = steps.min(m.min(n));
    let mut pivots: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    // Norms at last exact recomputation, to detect cancellation in the downdate.
    let mut reference = norms.clone();
    let mut tau = Vec::with_capacity(steps);

    for j in 0..steps {
        let mut p = j;
        for k in j + 1..n {
            let tied = norms[k] >= norms[p] * (1.0 - TIE_TOL);
            if norms[k] > norms[p] * (1.0 + TIE_TOL) + f64::MIN_POSITIVE
                || (tied && pivots[k] < pivots[p])
            {
                p = k;
            }
        }
        if p != j {
            a.swap_columns(j, p);
            pivots.swap(j, p);
            norms.swap(j, p);
            reference.swap(j, p);
        }

        let (t, alpha) = householder_in_place(&mut a, j);
        tau.push(t);

        if t != 0.0 {
            let data = a.as_mut_slice();
            let (head, rest) = data.split_at_mut((j + 1) * m);
            let v = &head[j * m + j + 1..(j + 1) * m];
            for col in rest.chunks_exact_mut(m) {
                // w = tau * v^T col[j..], v = (1, tail)
                let below = &mut col[j..];
                let (top, tail) = below.split_first_mut().expect("j < m");
                let w = t * (*top + dot(v, tail));
                *top -= w;
                for (x, &vi) in tail.iter_mut().zip(v) {
                    *x -= w * vi;
                }
            }
        }
        a[(j, j)] = alpha;

        for k in j + 1..n {
            if norms[k] == 0.0 {
                continue;
            }
            let ratio = a[(j, k)] / norms[k];
            let shrink = (1.0 - ratio * ratio).max(0.0);
            let updated = norms[k] * shrink.sqrt();
            // Recompute exactly once the downdate has lost most of its digits.
            if updated <= 1e-4 * reference[k] {
                let exact = (j + 1..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
                norms[k] = exact;
                reference[k] = exact;
            } else {
                norms[k] = updated;
            }
        }
        norms[j] = alpha.abs();
    }

    PivotedQr {
        factors: a,
        tau,
        pivots,
        steps,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the reflector for column `j` below the diagonal. Returns `(tau, alpha)`
/// with `alpha` the new diagonal entry; the vector tail is left in place.
fn householder_in_place(a: &mut DMatrix<f64>, j: usize) -> (f64, f64) {
    let m = a.nrows();
    let x0 = a[(j, j)];
    let tail: f64 = (j + 1..m).map(|i| a[(i, j)] * a[(i, j)]).sum();
    if tail == 0.0 {
        return (0.0, x0);
    }
    let norm = (x0 * x0 + tail).sqrt();
    let alpha = if x0 >= 0.0 { -norm } else { norm };
    let v0 = x0 - alpha;
    for i in j + 1..m {
        a[(i, j)] /= v0;
    }
    let tau = (alpha - x0) / alpha;
    (tau, alpha)
}

impl PivotedQr {
    /// Column permutation: position `i` of `A P` is column `pivots()[i]` of `A`.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.factors[(i, i)]).collect()
    }

    /// The `steps x n` upper-trapezoidal factor.
    pub fn r(&self) -> DMatrix<f64> {
        let n = self.factors.ncols();
        DMatrix::from_fn(self.steps, n, |i, k| if k >= i { self.factors[(i, k)] } else { 0.0 })
    }

    /// The `m x steps` orthonormal factor, formed on request.
    pub fn q(&self) -> DMatrix<f64> {
        let m = self.factors.nrows();
        let mut q = DMatrix::from_fn(m, self.steps, |i, k| if i == k { 1.0 } else { 0.0 });
        for j in (0..self.steps).rev() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            for c in 0..self.steps {
                let mut w = q[(j, c)];
                for i in j + 1..m {
                    w += self.factors[(i, j)] * q[(i, c)];
                }
                w *= t;
                q[(j, c)] -= w;
                for i in j + 1..m {
                    q[(i, c)] -= w * self.factors[(i, j)];
                }
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permuted(a: &DMatrix<f64>, piv: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| a[(i, piv[k])])
    }

    #[test]
    fn identity_has_unit_diagonal() {
        let f = qr_pivoted(DMatrix::identity(5, 5));
        for d in f.r_diagonal() {
            assert!((d.abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_column_pivots_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-0.3..0.3));
        for i in 0..6 {
            a[(i, 3)] = if i == 0 { 100.0 } else { 0.0 };
        }
        assert_eq!(qr_pivoted(a).pivots()[0], 3);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let a = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(qr_pivoted(a).pivots()[0], 1);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(8, 6, |_, _| rng.random_range(-1.0..1.0));
        let f = qr_pivoted(a.clone());
        let resid = (permuted(&a, f.pivots()) - f.q() * f.r()).norm();
        assert!(resid <= 1e-10 * a.norm());
        let q = f.q();
        assert!((q.transpose() * &q - DMatrix::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_trailing_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let f = qr_pivoted(&b * &c);
        let d = f.r_diagonal();
        assert!(d[1].abs() > 1e-3);
        for v in &d[2..] {
            assert!(v.abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn truncated_run_keeps_leading_pivots() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = DMatrix::from_fn(12, 9, |_, _| rng.random_range(-1.0..1.0));
        let full = qr_pivoted(a.clone());
        let part = qr_pivoted_steps(a, 4);
        assert_eq!(&full.pivots()[..4], &part.pivots()[..4]);
        assert_eq!(part.r_diagonal().len(), 4);
    }

    #[test]
    fn wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let f = qr_pivoted(a.clone());
        assert_eq!(f.steps(), 3);
        let resid = (permuted(&a, f.pivots()) - f.q() * f.r()).norm();
        assert!(resid <= 1e-10 * a.norm());
    }
}
