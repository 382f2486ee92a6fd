//! Minibatch training: softmax cross-entropy, Adam, inverted dropout on hidden
//! activations, and gradient-trained per-layer `sigma` kept above a floor.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::Dataset;
use crate::net::{erf_scaled, erf_scaled_dsigma, erf_scaled_dy, Network};
use crate::util::fmt_f64;
use crate::{Error, Result};

/// Lower bound applied to every trained `sigma` after each step.
pub const SIGMA_FLOOR: f64 = 1e-3;

const PROB_FLOOR: f64 = 1e-300;

/// `-ln p` with `p` floored; NaN passes through so divergence is visible.
fn neg_log(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        -p.max(PROB_FLOOR).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub train_sigma: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            dropout_rate: 0.5,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            train_sigma: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter("dropout_rate must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch (with dropout active).
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

impl TrainReport {
    /// `epoch,mean_loss` rows, epochs numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_loss"])?;
        for (e, l) in self.epoch_losses.iter().enumerate() {
            w.write_record([(e + 1).to_string(), fmt_f64(*l)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `-ln softmax[label]`, with the probability floored at `1e-300`.
pub fn cross_entropy(softmax: &DVector<f64>, label: usize) -> Result<f64> {
    if label >= softmax.len() {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {} classes",
            softmax.len()
        )));
    }
    Ok(neg_log(softmax[label]))
}

/// Adam with the bias-corrected update
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// One moment pair per parameter tensor of the given sizes.
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advances the step counter; call once per minibatch before `update`.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, tensor: usize, params: &mut [f64], grads: &[f64]) {
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let m = &mut self.first[tensor];
        let v = &mut self.second[tensor];
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

struct Gradients {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    sigmas: Vec<f64>,
}

/// Forward + backward on one minibatch. Returns the mean loss.
fn batch_gradients(
    net: &Network,
    x: &DMatrix<f64>,
    labels: &[usize],
    dropout: f64,
    mask_rng: &mut ChaCha8Rng,
) -> (f64, Gradients) {
    let layers = net.layers();
    let last = layers.len() - 1;
    let b = x.nrows();
    let keep_scale = 1.0 / (1.0 - dropout);

    // inputs[l] feeds layer l; pre[l] = inputs[l] W^T + b; masks[l] applies to hidden layer l.
    let mut inputs: Vec<DMatrix<f64>> = Vec::with_capacity(layers.len());
    let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(layers.len());
    let mut masks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(last);
    let mut a = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        let mut y = &a * layer.weights.transpose();
        for mut row in y.row_iter_mut() {
            row += layer.bias.transpose();
        }
        inputs.push(a);
        if l < last {
            let mut act = y.map(|v| erf_scaled(v, layer.sigma));
            let mask = (dropout > 0.0).then(|| {
                DMatrix::from_fn(act.nrows(), act.ncols(), |_, _| {
                    if mask_rng.random::<f64>() < dropout {
                        0.0
                    } else {
                        keep_scale
                    }
                })
            });
            if let Some(m) = &mask {
                act.component_mul_assign(m);
            }
            masks.push(mask);
            pre.push(y);
            a = act;
        } else {
            pre.push(y.clone());
            a = y;
        }
    }

    // Softmax rows, loss, and dL/dz = (softmax - onehot) / b.
    let mut delta = a;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let mut row = delta.row_mut(r);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v) });
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
        loss += neg_log(row[label]);
        row[label] -= 1.0;
        row /= b as f64;
    }
    loss /= b as f64;

    let mut weights = vec![DMatrix::zeros(0, 0); layers.len()];
    let mut biases = vec![DVector::zeros(0); layers.len()];
    let mut sigmas = vec![0.0; layers.len()];
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        weights[l] = delta.transpose() * &inputs[l];
        biases[l] = delta.row_sum().transpose();
        if l == 0 {
            break;
        }
        let mut back = &delta * &layer.weights;
        if let Some(m) = &masks[l - 1] {
            back.component_mul_assign(m);
        }
        let below = &layers[l - 1];
        let y = &pre[l - 1];
        let mut dsigma = 0.0;
        back.zip_apply(y, |d, yv| {
            dsigma += *d * erf_scaled_dsigma(yv, below.sigma);
            *d *= erf_scaled_dy(yv, below.sigma);
        });
        sigmas[l - 1] = dsigma;
        delta = back;
    }
    (
        loss,
        Gradients {
            weights,
            biases,
            sigmas,
        },
    )
}

/// Trains a copy of `net` and reports per-epoch losses and final training accuracy.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    train_with_eval(net, data, None, cfg)
}

/// As [`train`], also reporting accuracy on `test`.
pub fn train_with_eval(net: &Network, data: &Dataset, test: Option<&Dataset>, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if data.dim() != net.input_dim() {
        return Err(Error::shape(net.input_dim(), data.dim()));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= net.class_count()) {
        return Err(Error::InvalidInput(format!("label {bad} out of range")));
    }

    let mut net = net.clone();
    let layer_count = net.layers().len();
    let mut sizes = Vec::new();
    for layer in net.layers() {
        sizes.push(layer.weights.len());
        sizes.push(layer.bias.len());
        sizes.push(1);
    }
    let mut adam = Adam::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, &sizes);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mask_rng.set_stream(1);

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = DMatrix::from_fn(chunk.len(), data.dim(), |r, c| data.features[(chunk[r], c)]);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = batch_gradients(&net, &x, &labels, cfg.dropout_rate, &mut mask_rng);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss;
            batches += 1;

            adam.tick();
            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                adam.update(3 * l, layer.weights.as_mut_slice(), grads.weights[l].as_slice());
                adam.update(3 * l + 1, layer.bias.as_mut_slice(), grads.biases[l].as_slice());
                if cfg.train_sigma && l + 1 < layer_count {
                    let mut s = [layer.sigma];
                    adam.update(3 * l + 2, &mut s, &[grads.sigmas[l]]);
                    layer.sigma = s[0].max(SIGMA_FLOOR);
                }
            }
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }

    let train_accuracy = evaluate_accuracy(&net, data)?;
    let test_accuracy = test.map(|t| evaluate_accuracy(&net, t)).transpose()?;
    Ok((
        net,
        TrainReport {
            epoch_losses,
            train_accuracy,
            test_accuracy,
        },
    ))
}

/// Fraction of samples whose argmax (ties toward the lower id) equals the label.
pub fn evaluate_accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.dim() != net.input_dim() {
        return Err(Error::shape(net.input_dim(), data.dim()));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let correct = (0..data.len())
        .filter(|&i| net.predict(&data.sample(i)).map(|p| p == data.labels[i]).unwrap_or(false))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Layer;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> Dataset {
        // Two Gaussian blobs (sd 0.25) whose centres are 8 sd apart.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.25).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let cx = if label == 0 { -1.0 } else { 1.0 };
            rows.push(DVector::from_vec(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]));
            labels.push(label);
        }
        Dataset::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn cross_entropy_values() {
        let p = DVector::from_vec(vec![1.0, 0.0]);
        assert!(cross_entropy(&p, 0).unwrap().abs() < 1e-15);
        assert!((cross_entropy(&p, 1).unwrap() - 300.0 * 10f64.ln()).abs() < 1e-9);
        let h = DVector::from_vec(vec![0.5, 0.5]);
        assert!((cross_entropy(&h, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(&h, 2).is_err());
    }

    #[test]
    fn cross_entropy_logit_gradient() {
        let z = DVector::from_vec(vec![0.3, -1.2, 0.8]);
        let s = crate::net::softmax(&z);
        let label = 1;
        let h = 1e-6;
        for k in 0..3 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (cross_entropy(&crate::net::softmax(&zp), label).unwrap()
                - cross_entropy(&crate::net::softmax(&zm), label).unwrap())
                / (2.0 * h);
            let analytic = s[k] - if k == label { 1.0 } else { 0.0 };
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1e-3));
        }
    }

    #[test]
    fn single_adam_step_by_hand() {
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut adam = Adam::new(lr, b1, b2, eps, &[1]);
        let mut theta = [2.0];
        // f(theta) = theta^2 -> g = 4
        let g = 2.0 * theta[0];
        adam.tick();
        adam.update(0, &mut theta, &[g]);
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let expected = 2.0 - lr * (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps);
        assert_eq!(theta[0], expected);
        assert!((theta[0] - 1.9).abs() < 1e-8);
    }

    #[test]
    fn batch_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::random(&[3, 4, 3, 2], 0.8, &mut rng).unwrap();
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let labels = vec![0, 1, 1, 0, 1];
        let mut mrng = ChaCha8Rng::seed_from_u64(0);
        let (_, g) = batch_gradients(&net, &x, &labels, 0.0, &mut mrng);
        let loss = |n: &Network| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            batch_gradients(n, &x, &labels, 0.0, &mut r).0
        };
        let h = 1e-6;
        for l in 0..3 {
            let mut p = net.clone();
            p.layers_mut()[l].weights[(1, 0)] += h;
            let mut m = net.clone();
            m.layers_mut()[l].weights[(1, 0)] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g.weights[l][(1, 0)]).abs() < 1e-7, "w{l}");

            let mut p = net.clone();
            p.layers_mut()[l].bias[1] += h;
            let mut m = net.clone();
            m.layers_mut()[l].bias[1] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g.biases[l][1]).abs() < 1e-7, "b{l}");
        }
        for l in 0..2 {
            let mut p = net.clone();
            p.layers_mut()[l].sigma += h;
            let mut m = net.clone();
            m.layers_mut()[l].sigma -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g.sigmas[l]).abs() < 1e-7, "sigma{l}: {fd} vs {}", g.sigmas[l]);
        }
    }

    #[test]
    fn zero_epochs_leave_network_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random(&[2, 8, 2], 1.0, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, report) = train(&net, &blobs(20, 0), &cfg).unwrap();
        assert_eq!(out, net);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::random(&[2, 8, 2], 1.0, &mut rng).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 60,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let (trained, report) = train(&net, &data, &cfg).unwrap();
        assert!(report.train_accuracy >= 0.99, "{}", report.train_accuracy);
        assert!(report.epoch_losses[9] < report.epoch_losses[0]);
        assert!(trained.layers()[0].sigma >= SIGMA_FLOOR);
        let (again, _) = train(&net, &data, &cfg).unwrap();
        assert_eq!(trained, again);
    }

    #[test]
    fn dropout_does_not_touch_inference() {
        let data = blobs(40, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::random(&[2, 6, 2], 1.0, &mut rng).unwrap();
        let acc = evaluate_accuracy(&net, &data).unwrap();
        // Accuracy is a function of the network alone.
        assert_eq!(acc, evaluate_accuracy(&net.clone(), &data).unwrap());
    }

    #[test]
    fn accuracy_on_hand_counted_set() {
        // z = (x, 0): predicts class 0 when x >= 0 (tie at 0 goes to class 0).
        let net = Network::new(vec![Layer::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DVector::zeros(2),
            1.0,
        )
        .unwrap()])
        .unwrap();
        let xs = [-2.0, -1.0, 0.0, 0.5, 1.0, 3.0, -0.5, 2.0, -3.0, 0.1];
        let labels = vec![1, 1, 0, 0, 1, 0, 0, 0, 1, 1];
        // predictions: 1 1 0 0 0 0 1 0 1 0 -> correct: y y y y n y n y y n = 7
        let rows: Vec<DVector<f64>> = xs.iter().map(|&v| DVector::from_vec(vec![v])).collect();
        let data = Dataset::from_rows(&rows, labels).unwrap();
        assert!((evaluate_accuracy(&net, &data).unwrap() - 0.7).abs() < 1e-15);

        let zero = Network::linear(DMatrix::zeros(2, 1), DVector::zeros(2)).unwrap();
        let balanced = Dataset::from_rows(&rows[..4], vec![0, 1, 0, 1]).unwrap();
        assert_eq!(evaluate_accuracy(&zero, &balanced).unwrap(), 0.5);
    }

    #[test]
    fn bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random(&[2, 3, 2], 1.0, &mut rng).unwrap();
        let empty = Dataset::from_rows(&[], vec![]).unwrap();
        assert!(train(&net, &empty, &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(train(&net, &blobs(4, 0), &cfg).is_err());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random(&[2, 3, 2], 1.0, &mut rng).unwrap();
        let mut data = blobs(8, 0);
        data.features[(3, 0)] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 3,
            dropout_rate: 0.0,
            ..TrainConfig::default()
        };
        match train(&net, &data, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
