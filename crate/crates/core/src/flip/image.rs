//! Pixel-bound check for feature-space points.

use nalgebra::DVector;

use crate::features::{haar3d_inverse, scatter_selector, CoefficientSelector, WaveletCoeffs};
use crate::Result;

/// Slack allowed outside `[0, 1]` before a pixel counts as out of bounds.
pub const PIXEL_TOL: f64 = 1e-6;

/// Everything needed to turn a feature vector back into an image: the shared
/// selector and the query's own full coefficient vector, whose unselected
/// entries are kept.
#[derive(Debug, Clone, Copy)]
pub struct ImageContext<'a> {
    pub selector: &'a CoefficientSelector,
    pub base: &'a WaveletCoeffs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegitimacyCheck {
    pub legitimate: bool,
    /// Largest distance of any pixel outside `[0, 1]` (0 when inside).
    pub max_violation: f64,
}

pub fn check_legitimate_image(point: &DVector<f64>, sel: &CoefficientSelector, base: &WaveletCoeffs) -> Result<LegitimacyCheck> {
    let coeffs = scatter_selector(point, sel, base)?;
    let max_violation = haar3d_inverse(&coeffs).bound_violation();
    Ok(LegitimacyCheck {
        legitimate: max_violation <= PIXEL_TOL,
        max_violation,
    })
}

impl ImageContext<'_> {
    pub fn check(&self, point: &DVector<f64>) -> Result<LegitimacyCheck> {
        check_legitimate_image(point, self.selector, self.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{apply_selector, haar3d_forward, ImageTensor, COEFF_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ImageTensor, WaveletCoeffs, CoefficientSelector) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImageTensor::new((0..3072).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
        let w = haar3d_forward(&img);
        let sel = CoefficientSelector::new(vec![0, 5, 17, 1024, 2000, 3000]).unwrap();
        (img, w, sel)
    }

    #[test]
    fn own_coefficients_are_legitimate() {
        let (_, w, sel) = setup();
        let p = apply_selector(&w, &sel);
        let c = check_legitimate_image(&p, &sel, &w).unwrap();
        assert!(c.legitimate);
        assert_eq!(c.max_violation, 0.0);
    }

    #[test]
    fn blown_up_point_is_not() {
        let (_, w, sel) = setup();
        let p = apply_selector(&w, &sel) * 1e6;
        let c = check_legitimate_image(&p, &sel, &w).unwrap();
        assert!(!c.legitimate);
        assert!(c.max_violation > 1.0);
    }

    #[test]
    fn matches_transpose_oracle() {
        // The orthonormal inverse equals the transpose of the forward map, so a
        // pixel is the dot product of the coefficients with the forward
        // transform of that pixel's indicator image.
        let (_, w, sel) = setup();
        let mut p = apply_selector(&w, &sel);
        p[0] += 3.0;
        p[3] -= 2.0;
        let coeffs = scatter_selector(&p, &sel, &w).unwrap();
        let mut worst: f64 = 0.0;
        for pix in (0..3072).step_by(37) {
            let mut e = vec![0.0; 3072];
            e[pix] = 1.0;
            let basis = haar3d_forward(&ImageTensor::new(e).unwrap());
            let v: f64 = (0..COEFF_LEN).map(|c| basis.as_slice()[c] * coeffs.as_slice()[c]).sum();
            worst = worst.max((-v).max(v - 1.0).max(0.0));
        }
        let c = check_legitimate_image(&p, &sel, &w).unwrap();
        assert!(c.max_violation >= worst - 1e-12);
        assert_eq!(c.legitimate, c.max_violation <= PIXEL_TOL);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (_, w, sel) = setup();
        assert!(check_legitimate_image(&DVector::zeros(3), &sel, &w).is_err());
    }
}
