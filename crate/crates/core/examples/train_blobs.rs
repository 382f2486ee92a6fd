//! Trains an erf network with Adam and dropout on two Gaussian blobs, then
//! saves and reloads it.

use flippoint::net::{read_checkpoint, write_checkpoint};
use flippoint::train::{evaluate_accuracy, train_with_eval, TrainConfig};
use flippoint::{Dataset, Network};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n: usize, rng: &mut ChaCha8Rng) -> flippoint::Result<Dataset> {
    let noise = Normal::new(0.0, 0.6).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let centre = if label == 0 { -1.0 } else { 1.0 };
        rows.push(DVector::from_fn(5, |_, _| centre + noise.sample(rng)));
        labels.push(label);
    }
    Dataset::from_rows(&rows, labels)
}

fn main() -> flippoint::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let train_set = blobs(400, &mut rng)?;
    let test_set = blobs(200, &mut rng)?;
    let init = Network::random(&[5, 32, 16, 2], 1.0, &mut rng)?;
    let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let (net, report) = train_with_eval(&init, &train_set, Some(&test_set), &cfg)?;
    for (e, l) in report.epoch_losses.iter().enumerate().step_by(5) {
        println!("epoch {e:>3}  loss {l:.5}");
    }
    println!("train accuracy {:.3}", report.train_accuracy);
    println!("test accuracy  {:.3}", report.test_accuracy.unwrap_or(f64::NAN));
    let sigmas: Vec<f64> = net.layers()[..net.layers().len() - 1].iter().map(|l| l.sigma).collect();
    println!("sigmas {sigmas:?}");

    let mut buf = Vec::new();
    write_checkpoint(&net, &mut buf)?;
    let back = read_checkpoint(buf.as_slice(), "memory")?;
    println!("checkpoint {} bytes, reload accuracy {:.3}", buf.len(), evaluate_accuracy(&back, &test_set)?);
    Ok(())
}
