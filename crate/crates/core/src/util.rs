use nalgebra::DVector;

/// Angle between two vectors in degrees, in `[0, 180]`.
///
/// Uses `2 atan2(|a^ - b^|, |a^ + b^|)`, which stays accurate near 0 and 180
/// where `acos` of the normalized dot product loses half the digits.
pub(crate) fn angle_deg(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    let ua = a / na;
    let ub = b / nb;
    let diff = (&ua - &ub).norm();
    let sum = (&ua + &ub).norm();
    Some((2.0 * diff.atan2(sum)).to_degrees())
}

/// Full-precision decimal rendering used in every numeric CSV column.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_of_special_pairs() {
        let a = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        assert_eq!(angle_deg(&a, &a).unwrap(), 0.0);
        assert!((angle_deg(&a, &(-&a)).unwrap() - 180.0).abs() < 1e-12);
        let b = DVector::from_vec(vec![2.0, -1.0, 0.0]);
        assert!((angle_deg(&a, &b).unwrap() - 90.0).abs() < 1e-12);
        assert!(angle_deg(&a, &DVector::zeros(3)).is_none());
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let v = 1.0 / 3.0;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
