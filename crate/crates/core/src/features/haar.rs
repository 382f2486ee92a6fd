//! Orthonormal multilevel 3D Haar transform on the padded `4 x 32 x 32` volume.
//!
//! Volumes and coefficient vectors share one channel-planar layout:
//! `index = channel * 1024 + row * 32 + col`. Each level applies the pair
//! `(a, b) -> ((a + b) / sqrt 2, (a - b) / sqrt 2)` along every axis of the
//! current low-pass block whose extent is still above one, writes averages to
//! the first half and details to the second half, then recurses on the
//! leading corner until the block is a single coefficient.

use std::f64::consts::FRAC_1_SQRT_2;

use super::{ImageTensor, WaveletCoeffs, CHANNELS, SIDE};

pub(crate) const PADDED_CHANNELS: usize = 4;
pub const COEFF_LEN: usize = PADDED_CHANNELS * SIDE * SIDE;

const STRIDE_CH: usize = SIDE * SIDE;
const STRIDE_ROW: usize = SIDE;
const STRIDE_COL: usize = 1;

#[derive(Clone, Copy)]
enum Axis {
    Col,
    Row,
    Channel,
}

/// Block extents `(channels, rows, cols)` at the start of every level.
fn levels() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let (mut d, mut h, mut w) = (PADDED_CHANNELS, SIDE, SIDE);
    while d > 1 || h > 1 || w > 1 {
        out.push((d, h, w));
        d = (d / 2).max(1);
        h = (h / 2).max(1);
        w = (w / 2).max(1);
    }
    out
}

fn axis_lines(axis: Axis, (d, h, w): (usize, usize, usize)) -> (usize, usize, Vec<usize>) {
    let mut starts = Vec::new();
    match axis {
        Axis::Col => {
            for ch in 0..d {
                for r in 0..h {
                    starts.push(ch * STRIDE_CH + r * STRIDE_ROW);
                }
            }
            (w, STRIDE_COL, starts)
        }
        Axis::Row => {
            for ch in 0..d {
                for c in 0..w {
                    starts.push(ch * STRIDE_CH + c * STRIDE_COL);
                }
            }
            (h, STRIDE_ROW, starts)
        }
        Axis::Channel => {
            for r in 0..h {
                for c in 0..w {
                    starts.push(r * STRIDE_ROW + c * STRIDE_COL);
                }
            }
            (d, STRIDE_CH, starts)
        }
    }
}

fn analyze_axis(data: &mut [f64], axis: Axis, block: (usize, usize, usize), buf: &mut Vec<f64>) {
    let (n, stride, starts) = axis_lines(axis, block);
    if n < 2 {
        return;
    }
    let half = n / 2;
    for s in starts {
        buf.clear();
        buf.extend((0..n).map(|i| data[s + i * stride]));
        for i in 0..half {
            let (a, b) = (buf[2 * i], buf[2 * i + 1]);
            data[s + i * stride] = (a + b) * FRAC_1_SQRT_2;
            data[s + (half + i) * stride] = (a - b) * FRAC_1_SQRT_2;
        }
    }
}

fn synthesize_axis(data: &mut [f64], axis: Axis, block: (usize, usize, usize), buf: &mut Vec<f64>) {
    let (n, stride, starts) = axis_lines(axis, block);
    if n < 2 {
        return;
    }
    let half = n / 2;
    for s in starts {
        buf.clear();
        buf.extend((0..n).map(|i| data[s + i * stride]));
        for i in 0..half {
            let (lo, hi) = (buf[i], buf[half + i]);
            data[s + 2 * i * stride] = (lo + hi) * FRAC_1_SQRT_2;
            data[s + (2 * i + 1) * stride] = (lo - hi) * FRAC_1_SQRT_2;
        }
    }
}

/// Pads the image to four channels and returns its full Haar decomposition.
pub fn haar3d_forward(image: &ImageTensor) -> WaveletCoeffs {
    let mut data = vec![0.0; COEFF_LEN];
    data[..CHANNELS * STRIDE_CH].copy_from_slice(image.pixels());
    let mut buf = Vec::with_capacity(SIDE);
    for block in levels() {
        analyze_axis(&mut data, Axis::Col, block, &mut buf);
        analyze_axis(&mut data, Axis::Row, block, &mut buf);
        analyze_axis(&mut data, Axis::Channel, block, &mut buf);
    }
    WaveletCoeffs::from_vec_unchecked(data)
}

/// Inverse transform on the full padded volume (all four channels).
pub fn haar3d_inverse_padded(coeffs: &WaveletCoeffs) -> Vec<f64> {
    let mut data = coeffs.as_slice().to_vec();
    let mut buf = Vec::with_capacity(SIDE);
    for block in levels().into_iter().rev() {
        synthesize_axis(&mut data, Axis::Channel, block, &mut buf);
        synthesize_axis(&mut data, Axis::Row, block, &mut buf);
        synthesize_axis(&mut data, Axis::Col, block, &mut buf);
    }
    data
}

/// Inverse transform, dropping the padding channel. Pixels are not clamped.
pub fn haar3d_inverse(coeffs: &WaveletCoeffs) -> ImageTensor {
    let mut data = haar3d_inverse_padded(coeffs);
    data.truncate(CHANNELS * STRIDE_CH);
    ImageTensor::from_vec_unbounded(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng) -> ImageTensor {
        ImageTensor::new((0..3072).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_image() {
        let c = 0.6;
        let img = ImageTensor::new(vec![c; 3072]).unwrap();
        let w = haar3d_forward(&img);
        // Orthonormal transform: DC = sum / sqrt(4096) = 3072 c / 64.
        assert!((w.as_slice()[0] - 48.0 * c).abs() < 1e-12);
        // Purely spatial details vanish. Channel 0 ends as the DC term; channels
        // 1 and 3 hold channel-axis details whose spatial low-pass blocks are 8x8
        // and 16x16; channel 2 is the (zero) difference of two constant channels.
        let extent = [1, 8, 0, 16];
        for ch in 0..PADDED_CHANNELS {
            for r in 0..SIDE {
                for col in 0..SIDE {
                    let v = w.as_slice()[ch * STRIDE_CH + r * STRIDE_ROW + col];
                    if r >= extent[ch] || col >= extent[ch] {
                        assert!(v.abs() < 1e-12, "ch {ch} r {r} c {col}: {v}");
                    }
                }
            }
        }
        let e: f64 = w.as_slice().iter().map(|v| v * v).sum();
        assert!((e - 3072.0 * c * c).abs() < 1e-9);
    }

    #[test]
    fn single_pair_matches_definition() {
        let mut data = vec![0.0; COEFF_LEN];
        data[0] = 0.9;
        data[1] = 0.3;
        let mut buf = Vec::new();
        analyze_axis(&mut data, Axis::Col, (1, 1, 2), &mut buf);
        assert!((data[0] - 1.2 / 2f64.sqrt()).abs() < 1e-15);
        assert!((data[1] - 0.6 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn round_trip_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let img = random_image(&mut rng);
            let w = haar3d_forward(&img);
            let n_img: f64 = img.pixels().iter().map(|v| v * v).sum::<f64>().sqrt();
            let n_w: f64 = w.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n_img - n_w).abs() <= 1e-10);
            let back = haar3d_inverse(&w);
            let err = img
                .pixels()
                .iter()
                .zip(back.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10);
        }
    }

    #[test]
    fn zero_and_dc_only() {
        let zero = haar3d_inverse(&WaveletCoeffs::zeros());
        assert!(zero.pixels().iter().all(|&v| v == 0.0));
        let mut dc = vec![0.0; COEFF_LEN];
        dc[0] = 64.0;
        let img = haar3d_inverse(&WaveletCoeffs::new(dc).unwrap());
        for v in img.pixels() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn level_schedule() {
        let l = levels();
        assert_eq!(l.len(), 5);
        assert_eq!(l[0], (4, 32, 32));
        assert_eq!(l[2], (1, 8, 8));
        assert_eq!(l[4], (1, 2, 2));
    }
}
