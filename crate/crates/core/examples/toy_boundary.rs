//! A small random erf network on the plane: prints an ASCII map of the
//! predicted classes and marks a few query points with their flip points.

use flippoint::flip::{closest_flip, FlipOptions};
use flippoint::Network;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = Network::random(&[2, 12, 12, 2], 0.7, &mut rng)?;
    let opts = FlipOptions::default();

    let queries = [[-1.0, -1.0], [0.5, 0.2], [1.2, -0.8], [-0.3, 1.1]];
    let mut marks = Vec::new();
    for q in queries {
        let x = DVector::from_vec(q.to_vec());
        let pred = net.predict(&x)?;
        let f = closest_flip(&net, &x, (pred, 1 - pred), &opts)?;
        println!(
            "x = ({:+.2}, {:+.2})  class {}  flip at ({:+.4}, {:+.4})  distance {:.4}  {}",
            q[0], q[1], pred, f.point[0], f.point[1], f.distance, f.status.as_str()
        );
        marks.push((q, 'x'));
        marks.push(([f.point[0], f.point[1]], '*'));
    }

    let (n, half) = (41, 2.0);
    let cell = |v: f64| ((v + half) / (2.0 * half) * (n - 1) as f64).round() as i64;
    println!();
    for r in 0..n {
        let y = half - 2.0 * half * r as f64 / (n - 1) as f64;
        let mut line = String::new();
        for c in 0..n {
            let xv = -half + 2.0 * half * c as f64 / (n - 1) as f64;
            let mark = marks.iter().find(|(p, _)| cell(p[0]) == c as i64 && cell(p[1]) == r as i64);
            let ch = match mark {
                Some((_, m)) => *m,
                None => if net.predict(&DVector::from_vec(vec![xv, y]))? == 0 { '.' } else { '#' },
            };
            line.push(ch);
        }
        println!("{line}");
    }
    Ok(())
}
