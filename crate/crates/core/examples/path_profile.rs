//! Softmax scores along a segment between two inputs, sampled densely enough
//! that no class change can hide between samples.

use flippoint::path::{sample_line, LineSegment, PathOptions};
use flippoint::Network;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::random(&[4, 16, 16, 2], 0.5, &mut rng)?;
    let x1 = DVector::from_vec(vec![-1.0, 0.5, 0.0, 1.0]);
    let x2 = DVector::from_vec(vec![1.5, -0.5, 1.0, -1.0]);
    let seg = LineSegment::between(x1, x2)?;
    let opts = PathOptions::default();

    let profile = sample_line(&net, &seg, &opts)?;
    println!("lipschitz bound  {:.4}", net.lipschitz_bound());
    println!("samples          {} (alpha step {:.3e}{})", profile.len(), profile.step_tol, if profile.capped { ", capped" } else { "" });
    println!("crossings        {:?}", profile.crossings);
    let stride = (profile.len() / 20).max(1);
    for i in (0..profile.len()).step_by(stride) {
        let p0 = profile.softmax_scores[(i, 0)];
        println!("alpha {:>7.4}  p0 {:.4}  {}", profile.alphas[i], p0, "=".repeat((p0 * 40.0) as usize));
    }
    Ok(())
}
