//! A targeted loss-minimizing attack inside an l2 ball, compared with the closest
//! flip point of the same input.

use flippoint::adversarial::{compare_attack_vs_flip, constrained_loss_attack, AttackConfig};
use flippoint::flip::{closest_flip, FlipOptions};
use flippoint::path::PathOptions;
use flippoint::Network;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let net = Network::random(&[10, 20, 20, 2], 1.0, &mut rng)?;
    let x = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin());
    let pred = net.predict(&x)?;
    let flip = closest_flip(&net, &x, (pred, 1 - pred), &FlipOptions::default())?;
    println!("closest flip distance {:.5} ({})", flip.distance, flip.status.as_str());

    for scale in [0.5, 0.9, 1.1, 2.0] {
        let eps = scale * flip.distance;
        let attack = constrained_loss_attack(&net, &x, 1 - pred, &AttackConfig::new(eps))?;
        let cmp = compare_attack_vs_flip(&net, &x, &attack, &flip, &PathOptions::default())?;
        println!(
            "eps {:>5.2} x d  succeeded {:<5}  distance {:.5}  first crossing {}  angle {}",
            scale,
            attack.succeeded,
            attack.distance,
            cmp.first_crossing_distance.map_or("-".into(), |d| format!("{d:.5}")),
            cmp.angle_deg.map_or("-".into(), |a| format!("{a:.1}")),
        );
    }
    Ok(())
}
