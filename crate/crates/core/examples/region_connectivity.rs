//! Which correctly classified training points of one class can be joined by
//! a straight segment that never leaves the class.

use flippoint::path::PathOptions;
use flippoint::region::region_report;
use flippoint::train::{train, TrainConfig};
use flippoint::{Dataset, Network};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> flippoint::Result<()> {
    // Class 0 is a ring, class 1 its centre, so class 0 is not convex.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.08).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..300 {
        let t = i as f64 * 0.37;
        let (r, label) = if i % 2 == 0 { (1.5, 0) } else { (0.3, 1) };
        rows.push(DVector::from_vec(vec![r * t.cos() + noise.sample(&mut rng), r * t.sin() + noise.sample(&mut rng)]));
        labels.push(label);
    }
    let data = Dataset::from_rows(&rows, labels)?;
    let init = Network::random(&[2, 24, 24, 2], 1.0, &mut rng)?;
    let cfg = TrainConfig { epochs: 150, dropout_rate: 0.0, learning_rate: 0.01, batch_size: 32, ..TrainConfig::default() };
    let (net, report) = train(&init, &data, &cfg)?;
    println!("train accuracy {:.3}", report.train_accuracy);

    let (graph, summary) = region_report(&net, &data, 0, Some(60), 1, &PathOptions::default())?;
    println!("points            {}", summary.node_count);
    println!("direct pairs      {} of {}", summary.edge_count, graph.pair_count());
    println!("fraction direct   {:.3}", summary.fraction_direct);
    println!("components        {} {:?}", summary.component_count, summary.component_sizes);
    println!("all connected     {}", summary.all_pairs_connected);
    Ok(())
}
