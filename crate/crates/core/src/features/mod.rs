//! Wavelet features for 32x32 RGB images.
//!
//! Images are zero-padded from three to four channels, transformed with a
//! full multilevel 3D Haar decomposition (4096 coefficients), and reduced to
//! the `k` coefficient positions ranked first by column-pivoted QR of the
//! training set's coefficient matrix.

mod cifar;
mod haar;
mod qr;

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

pub use cifar::{load_cifar_batch, LabeledImages, CIFAR_PLANE, CIFAR_RECORD_LEN, CIFAR_SHIP};
pub use haar::{haar3d_forward, haar3d_inverse, haar3d_inverse_padded, COEFF_LEN};
pub use qr::{qr_pivoted, qr_pivoted_steps, PivotedQr};

use crate::{Error, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXEL_LEN: usize = SIDE * SIDE * CHANNELS;

const PIXEL_SLACK: f64 = 1e-12;

/// A 32x32x3 image, channel-planar (`channel * 1024 + row * 32 + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pixels: Vec<f64>,
}

impl ImageTensor {
    /// Validated constructor: 3072 finite values in `[0, 1]`.
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != PIXEL_LEN {
            return Err(Error::shape(PIXEL_LEN, pixels.len()));
        }
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -PIXEL_SLACK || **v > 1.0 + PIXEL_SLACK)
        {
            return Err(Error::InvalidInput(format!("pixel {i} = {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Reconstructions are returned unclamped; callers check bounds with
    /// [`ImageTensor::bound_violation`].
    pub(crate) fn from_vec_unbounded(pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), PIXEL_LEN);
        Self { pixels }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Largest distance of any pixel outside `[0, 1]` (0 when all are inside).
    pub fn bound_violation(&self) -> f64 {
        self.pixels
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    (-v).max(v - 1.0).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Pixel `(row, col, channel)`.
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[channel * SIDE * SIDE + row * SIDE + col]
    }
}

/// The 4096 Haar coefficients of a padded image.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    coeffs: Vec<f64>,
}

impl WaveletCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != COEFF_LEN {
            return Err(Error::shape(COEFF_LEN, coeffs.len()));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite wavelet coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros() -> Self {
        Self {
            coeffs: vec![0.0; COEFF_LEN],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Coefficient positions in pivot order (most significant first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientSelector {
    indices: Vec<usize>,
}

impl CoefficientSelector {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; COEFF_LEN];
        for &i in &indices {
            if i >= COEFF_LEN {
                return Err(Error::InvalidParameter(format!("selector index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!("duplicate selector index {i}")));
            }
        }
        Ok(Self { indices })
    }

    /// All 4096 positions in natural order.
    pub fn full() -> Self {
        Self {
            indices: (0..COEFF_LEN).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The first `k` positions.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            indices: self.indices[..k.min(self.len())].to_vec(),
        }
    }

    /// One index per line, pivot order.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for i in &self.indices {
            writeln!(out, "{i}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R, name: &str) -> Result<Self> {
        let mut indices = Vec::new();
        let mut offset = 0u64;
        for line in input.lines() {
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                let i = trimmed.parse::<usize>().map_err(|e| Error::Format {
                    file: name.to_string(),
                    offset,
                    reason: format!("bad selector index {trimmed:?}: {e}"),
                })?;
                indices.push(i);
            }
            offset += line.len() as u64 + 1;
        }
        Self::new(indices)
    }
}

/// Ranks coefficient positions by column-pivoted QR of the `n_train x 4096`
/// coefficient matrix and keeps the first `k` pivots.
pub fn select_coefficients(coeff_matrix: DMatrix<f64>, k: usize) -> Result<CoefficientSelector> {
    let (rows, cols) = coeff_matrix.shape();
    if k > rows.min(cols) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds min(n_train, columns) = {}",
            rows.min(cols)
        )));
    }
    if k == 0 {
        return Ok(CoefficientSelector { indices: Vec::new() });
    }
    let f = qr_pivoted_steps(coeff_matrix, k);
    Ok(CoefficientSelector {
        indices: f.pivots()[..k].to_vec(),
    })
}

/// Gathers the selected coefficients, in selector order.
pub fn apply_selector(coeffs: &WaveletCoeffs, sel: &CoefficientSelector) -> DVector<f64> {
    DVector::from_iterator(sel.len(), sel.indices.iter().map(|&i| coeffs.coeffs[i]))
}

/// Writes `values` into a copy of `base` at the selector positions.
pub fn scatter_selector(values: &DVector<f64>, sel: &CoefficientSelector, base: &WaveletCoeffs) -> Result<WaveletCoeffs> {
    if values.len() != sel.len() {
        return Err(Error::shape(sel.len(), values.len()));
    }
    let mut out = base.clone();
    for (&i, &v) in sel.indices.iter().zip(values.iter()) {
        out.coeffs[i] = v;
    }
    Ok(out)
}

/// Transform, keep only the selected coefficients, transform back.
pub fn reconstruct_from_subset(image: &ImageTensor, sel: &CoefficientSelector) -> ImageTensor {
    let full = haar3d_forward(image);
    let mut kept = WaveletCoeffs::zeros();
    for &i in &sel.indices {
        kept.coeffs[i] = full.coeffs[i];
    }
    haar3d_inverse(&kept)
}

/// Feature vector of an image under a selector.
pub fn image_features(image: &ImageTensor, sel: &CoefficientSelector) -> DVector<f64> {
    apply_selector(&haar3d_forward(image), sel)
}

/// Binary-labelled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x k`, one sample per row.
    pub features: DMatrix<f64>,
    /// Class ids; `0` or `1` for the two-class pipeline.
    pub labels: Vec<usize>,
    pub class_names: [String; 2],
    /// One source identifier per row (`file:record`).
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, class_names: [String; 2], provenance: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", features.nrows()),
                labels.len(),
            ));
        }
        if !provenance.is_empty() && provenance.len() != labels.len() {
            return Err(Error::shape(
                format!("{} provenance entries", labels.len()),
                provenance.len(),
            ));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            provenance,
        })
    }

    /// Dataset from rows, with generated provenance.
    pub fn from_rows(rows: &[DVector<f64>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("rows have different lengths".into()));
        }
        let features = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        let provenance = (0..rows.len()).map(|i| format!("row:{i}")).collect();
        Self::new(features, labels, ["class0".into(), "class1".into()], provenance)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }
}
