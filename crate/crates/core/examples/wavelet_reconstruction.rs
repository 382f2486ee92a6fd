//! 3D Haar coefficients of synthetic images, the pivoted-QR coefficient
//! ranking, and reconstruction error as coefficients are dropped.

use flippoint::features::{haar3d_forward, CoefficientSelector, reconstruct_from_subset, select_coefficients, ImageTensor, COEFF_LEN};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Constant on 8x8 blocks. The transform also mixes channels (and the zero
// padding channel), so a few hundred coefficients are needed to describe it.
fn image(rng: &mut ChaCha8Rng) -> ImageTensor {
    let blocks: Vec<f64> = (0..48).map(|_| rng.random_range(0.0..1.0)).collect();
    let px = (0..3072)
        .map(|i| {
            let (ch, r, c) = (i / 1024, (i / 32) % 32, i % 32);
            blocks[ch * 16 + (r / 8) * 4 + c / 8]
        })
        .collect();
    ImageTensor::new(px).unwrap()
}

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let images: Vec<ImageTensor> = (0..800).map(|_| image(&mut rng)).collect();
    let coeffs: Vec<_> = images.iter().map(haar3d_forward).collect();
    let m = DMatrix::from_fn(coeffs.len(), COEFF_LEN, |r, c| coeffs[r].as_slice()[c]);
    let sel = select_coefficients(m, 800)?;
    println!("first ranked coefficients {:?}", &sel.indices()[..10]);

    let probe = image(&mut rng);
    // The sample matrix has rank 48; pivots past that point are arbitrary.
    let subsets = [800, 400, 200, 50].map(|k| sel.truncated(k));
    for sub in std::iter::once(CoefficientSelector::full()).chain(subsets) {
        let k = sub.len();
        let recon = reconstruct_from_subset(&probe, &sub);
        let rms = (probe.pixels().iter().zip(recon.pixels()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 3072.0).sqrt();
        println!("k = {k:>4}  rms error {rms:.5}  outside [0,1] by {:.5}", recon.bound_violation());
    }
    Ok(())
}
