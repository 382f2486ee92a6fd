//! Feedforward networks with tunable error-function activations.
//!
//! Every hidden layer computes `erf((W a + b) / sigma)` with one `sigma` shared
//! by all of the layer's nodes. The output layer is affine: its outputs are the
//! logits `z`, and the class scores are `softmax(z)`.

mod activation;
mod checkpoint;
mod norm;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

pub use activation::{activation_erf, max_slope};
pub(crate) use activation::{erf_scaled, erf_scaled_dsigma, erf_scaled_dy};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use norm::spectral_norm;

use crate::{Error, Result};

/// One dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `n_out x n_in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Activation tuning parameter; unused on the output layer.
    pub sigma: f64,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, sigma: f64) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::shape(
                format!("bias of length {}", weights.nrows()),
                format!("length {}", bias.len()),
            ));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite layer parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            sigma,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    /// Glorot-uniform weights in `+-sqrt(6 / (n_in + n_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, sigma: f64, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let weights = DMatrix::from_fn(n_out, n_in, |_, _| dist.sample(rng));
        Self {
            weights,
            bias: DVector::zeros(n_out),
            sigma,
        }
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub logits: DVector<f64>,
    pub softmax: DVector<f64>,
    /// `W a + b` for every layer, in order; the last entry equals `logits`.
    pub preactivations: Vec<DVector<f64>>,
}

impl Evaluation {
    /// Index of the largest softmax score, ties toward the lower class id.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Feedforward classifier. Read-only evaluation is `Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].n_in() != pair[0].n_out() {
                return Err(Error::shape(
                    format!("layer {} input width {}", l + 1, pair[0].n_out()),
                    pair[1].n_in(),
                ));
            }
        }
        for layer in &layers {
            if !(layer.sigma > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sigma must be positive, got {}",
                    layer.sigma
                )));
            }
        }
        let classes = layers.last().map(Layer::n_out).unwrap_or(0);
        if classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 output classes, got {classes}"
            )));
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised network with the given widths (`[input, hidden..., classes]`)
    /// and every hidden `sigma` set to `sigma`.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], sigma: f64, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], sigma, rng))
            .collect();
        Self::new(layers)
    }

    /// A network with no hidden layers: `z = W x + b`.
    pub fn linear(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        Self::new(vec![Layer::new(weights, bias, 1.0)?])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Widths `[input, hidden..., classes]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::n_out))
            .collect()
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite input".into()));
        }
        Ok(())
    }

    /// Full forward pass, keeping the preactivations for backpropagation.
    pub fn forward(&self, x: &DVector<f64>) -> Result<Evaluation> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            // Same expression as `logits_unchecked`, so both agree bit-for-bit.
            a = &layer.bias + &layer.weights * &a;
            pre.push(a.clone());
            if l < last {
                a.apply(|v| *v = erf_scaled(*v, layer.sigma));
            }
        }
        let logits = a;
        let softmax = softmax(&logits);
        Ok(Evaluation {
            logits,
            softmax,
            preactivations: pre,
        })
    }

    /// Logits only; identical values to `forward(x).logits`.
    pub fn logits(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(self.logits_unchecked(x))
    }

    pub(crate) fn logits_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            a = &layer.bias + &layer.weights * &a;
            if l < last {
                a.apply(|v| *v = erf_scaled(*v, layer.sigma));
            }
        }
        a
    }

    /// Class with the largest logit, ties toward the lower id.
    pub fn predict(&self, x: &DVector<f64>) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Input gradient of `coeffs . z(x)` by reverse-mode differentiation.
    pub fn grad_scalar_wrt_input(&self, x: &DVector<f64>, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.class_count() {
            return Err(Error::shape(self.class_count(), coeffs.len()));
        }
        let eval = self.forward(x)?;
        Ok(self.backprop_input(&eval, coeffs))
    }

    /// Reverse pass for a precomputed evaluation.
    pub(crate) fn backprop_input(&self, eval: &Evaluation, coeffs: &DVector<f64>) -> DVector<f64> {
        let mut delta = coeffs.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut back = layer.weights.tr_mul(&delta);
            if l > 0 {
                let below = &self.layers[l - 1];
                let y = &eval.preactivations[l - 1];
                back.zip_apply(y, |d, yv| *d *= erf_scaled_dy(yv, below.sigma));
            }
            delta = back;
        }
        delta
    }

    /// Value and input gradient of the logit gap `z_i - z_j`.
    pub fn logit_gap_with_grad(&self, x: &DVector<f64>, i: usize, j: usize) -> Result<(f64, DVector<f64>)> {
        let k = self.class_count();
        if i >= k || j >= k {
            return Err(Error::InvalidParameter(format!("class pair ({i}, {j}) out of range")));
        }
        let eval = self.forward(x)?;
        let mut coeffs = DVector::zeros(k);
        coeffs[i] += 1.0;
        coeffs[j] -= 1.0;
        let g = eval.logits[i] - eval.logits[j];
        Ok((g, self.backprop_input(&eval, &coeffs)))
    }

    /// Upper bound on the l2 Lipschitz constant of the logit map.
    ///
    /// Product over hidden layers of `||W_l||_2 * 2 / (sigma_l sqrt(pi))`, times
    /// `||W_out||_2`. Composing with softmax can only shrink it (by at most 1/2
    /// for two classes).
    pub fn lipschitz_bound(&self) -> f64 {
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let s = spectral_norm(&layer.weights);
                if l < last {
                    s * max_slope(layer.sigma)
                } else {
                    s
                }
            })
            .product()
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let m = z.max();
    let mut e = z.map(|v| (v - m).exp());
    let s = e.sum();
    e /= s;
    e
}

/// First index of the maximum entry.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_222() -> Network {
        let l1 = Layer::new(
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]),
            DVector::from_vec(vec![0.1, -0.3]),
            0.8,
        )
        .unwrap();
        let l2 = Layer::new(
            DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -2.0, 1.0]),
            DVector::from_vec(vec![0.2, 0.0]),
            1.0,
        )
        .unwrap();
        Network::new(vec![l1, l2]).unwrap()
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let net = Network::new(vec![
            Layer::new(DMatrix::zeros(4, 3), DVector::zeros(4), 1.0).unwrap(),
            Layer::new(DMatrix::zeros(3, 4), DVector::zeros(3), 1.0).unwrap(),
        ])
        .unwrap();
        let e = net.forward(&DVector::from_vec(vec![1.0, -7.0, 3.0])).unwrap();
        for p in e.softmax.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_net_logits_are_affine() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let b = DVector::from_vec(vec![0.25, -0.5]);
        let net = Network::linear(w, b).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        let z = net.forward(&x).unwrap().logits;
        assert_eq!(z[0], 1.0 - 2.0 + 6.0 + 0.25);
        assert_eq!(z[1], -1.0 - 0.5 + 0.0 - 0.5);
    }

    #[test]
    fn hand_computed_two_two_two() {
        let net = toy_222();
        let (x0, x1) = (0.7_f64, -0.4_f64);
        // hidden
        let y0 = 0.5 * x0 - 1.0 * x1 + 0.1;
        let y1 = 2.0 * x0 + 0.25 * x1 - 0.3;
        let h0 = libm::erf(y0 / 0.8);
        let h1 = libm::erf(y1 / 0.8);
        let z0 = 1.5 * h0 - 0.5 * h1 + 0.2;
        let z1 = -2.0 * h0 + 1.0 * h1;
        let m = z0.max(z1);
        let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
        let e = net.forward(&DVector::from_vec(vec![x0, x1])).unwrap();
        assert!((e.logits[0] - z0).abs() < 1e-15);
        assert!((e.logits[1] - z1).abs() < 1e-15);
        assert!((e.softmax[0] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((e.softmax[1] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let net = toy_222();
        assert!(matches!(
            net.forward(&DVector::zeros(3)),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            net.forward(&DVector::from_vec(vec![f64::NAN, 0.0])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            net.grad_scalar_wrt_input(&DVector::zeros(2), &DVector::zeros(3)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn construction_rejects_broken_chains() {
        let a = Layer::new(DMatrix::zeros(3, 2), DVector::zeros(3), 1.0).unwrap();
        let b = Layer::new(DMatrix::zeros(2, 4), DVector::zeros(2), 1.0).unwrap();
        assert!(Network::new(vec![a.clone(), b]).is_err());
        assert!(Layer::new(DMatrix::zeros(3, 2), DVector::zeros(2), 1.0).is_err());
        assert!(Layer::new(DMatrix::zeros(3, 2), DVector::zeros(3), 0.0).is_err());
    }

    #[test]
    fn linear_gradient_is_row_difference() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -3.0, 0.5, 4.0, 4.0]);
        let net = Network::linear(w.clone(), DVector::zeros(3)).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.9]);
        let (_, g) = net.logit_gap_with_grad(&x, 0, 2).unwrap();
        assert_eq!(g[0], 1.0 - 4.0);
        assert_eq!(g[1], 2.0 - 4.0);
        let zero = net.grad_scalar_wrt_input(&x, &DVector::zeros(3)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::random(&[2, 5, 4, 3], 0.9, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.8]);
        let c = DVector::from_vec(vec![1.0, -0.5, 2.0]);
        let g = net.grad_scalar_wrt_input(&x, &c).unwrap();
        let h = 1e-5;
        for d in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let fp = c.dot(&net.logits(&xp).unwrap());
            let fm = c.dot(&net.logits(&xm).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[d]).abs() <= 1e-6 * g[d].abs().max(1e-3));
        }
    }

    #[test]
    fn logits_match_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::random(&[6, 9, 7, 2], 1.3, &mut rng).unwrap();
        let x = DVector::from_fn(6, |i, _| (i as f64 * 0.37).sin());
        assert_eq!(net.forward(&x).unwrap().logits, net.logits(&x).unwrap());
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn lipschitz_bound_examples() {
        let s = 2.0 / std::f64::consts::PI.sqrt();
        let net = Network::new(vec![
            Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), s).unwrap(),
            Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap(),
        ])
        .unwrap();
        assert!((net.lipschitz_bound() - 1.0).abs() < 1e-12);

        let zero = Network::new(vec![
            Layer::new(DMatrix::zeros(3, 2), DVector::zeros(3), 1.0).unwrap(),
            Layer::new(DMatrix::identity(2, 3), DVector::zeros(2), 1.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(zero.lipschitz_bound(), 0.0);
    }

    #[test]
    fn lipschitz_bound_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::random(&[4, 6, 5, 2], 0.7, &mut rng).unwrap();
        let per_layer: f64 = net
            .layers()
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let s = spectral_norm(&layer.weights);
                if l + 1 < net.layers().len() {
                    s * max_slope(layer.sigma)
                } else {
                    s
                }
            })
            .product();
        assert_eq!(net.lipschitz_bound(), per_layer);
    }

    #[test]
    fn ties_break_toward_lower_class() {
        assert_eq!(argmax(&DVector::from_vec(vec![1.0, 1.0])), 0);
        assert_eq!(argmax(&DVector::from_vec(vec![0.0, 2.0, 2.0])), 1);
    }
}
