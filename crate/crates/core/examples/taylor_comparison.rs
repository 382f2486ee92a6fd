//! Closest flip point against the first-order Taylor estimate and the flip
//! point found along the gradient direction, for a deeper random network.

use flippoint::flip::{compare, FlipOptions};
use flippoint::Network;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn show(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = 20;
    let net = Network::random(&[dim, 30, 30, 30, 2], 1.0, &mut rng)?;
    let opts = FlipOptions::default();

    println!("{:>3} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}", "id", "closest", "taylor", "gradient", "beta", "ratio", "angle");
    for id in 0..8 {
        let x = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let pred = net.predict(&x)?;
        let c = compare(&net, &x, (pred, 1 - pred), &opts, None)?;
        println!(
            "{:>3} {:>10.4} {:>10} {:>10} {:>8} {:>8} {:>8}",
            id,
            c.closest.distance,
            show(c.taylor.as_ref().map(|t| t.distance)),
            show(c.directional.as_ref().map(|d| d.distance)),
            show(c.metrics.beta),
            show(c.metrics.directional_ratio),
            show(c.metrics.angle_deg),
        );
    }
    Ok(())
}
