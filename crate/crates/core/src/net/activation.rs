use std::f64::consts::PI;

use crate::{Error, Result};

/// `erf(y / sigma)`.
pub fn activation_erf(y: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(erf_scaled(y, sigma))
}

#[inline]
pub(crate) fn erf_scaled(y: f64, sigma: f64) -> f64 {
    libm::erf(y / sigma)
}

/// `d/dy erf(y / sigma) = 2 / (sigma sqrt(pi)) * exp(-(y / sigma)^2)`.
#[inline]
pub(crate) fn erf_scaled_dy(y: f64, sigma: f64) -> f64 {
    let u = y / sigma;
    max_slope(sigma) * (-u * u).exp()
}

/// `d/dsigma erf(y / sigma) = -(y / sigma^2) * 2/sqrt(pi) * exp(-(y / sigma)^2)`.
#[inline]
pub(crate) fn erf_scaled_dsigma(y: f64, sigma: f64) -> f64 {
    let u = y / sigma;
    -u * max_slope(sigma) * (-u * u).exp()
}

/// Largest slope of `erf(y / sigma)`, attained at `y = 0`.
#[inline]
pub fn max_slope(sigma: f64) -> f64 {
    2.0 / (sigma * PI.sqrt())
}
