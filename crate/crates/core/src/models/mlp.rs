//! Fully-connected autoencoder with tanh hidden layers and a linear output,
//! trained on mean-squared reconstruction error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder widths from `input_dim` halving down to `latent`.
///
/// Each width is `max(latent, prev / 2)`; the sequence ends at `latent`.
/// For 100 inputs and latent 5 this gives 100-50-25-12-6-5.
pub fn encoder_widths(input_dim: usize, latent: usize) -> Vec<usize> {
    let mut widths = vec![input_dim];
    let mut prev = input_dim;
    loop {
        let next = latent.max(prev / 2);
        widths.push(next);
        if next == latent {
            break;
        }
        prev = next;
    }
    widths
}

/// Encoder widths followed by their mirror image.
pub fn autoencoder_widths(input_dim: usize, latent: usize) -> Vec<usize> {
    let enc = encoder_widths(input_dim, latent);
    let mut widths = enc.clone();
    widths.extend(enc.iter().rev().skip(1));
    widths
}

/// Weights are stored flat, layer by layer: the `out x in` weight matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpAutoencoder {
    widths: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpAutoencoder {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, latent: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || latent == 0 {
            return Err(Error::InvalidInput(
                "autoencoder input and latent dimensions must be >= 1".into(),
            ));
        }
        let widths = autoencoder_widths(input_dim, latent);
        let mut params = Vec::with_capacity(param_count(&widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { widths, params })
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer widths {widths:?}")));
        }
        if widths.first() != widths.last() {
            return Err(Error::InvalidInput(
                "autoencoder output width must equal input width".into(),
            ));
        }
        let expected = param_count(&widths);
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters for widths {widths:?}, expected {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(Self { widths, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let offset: usize = param_count(&self.widths[..=l]);
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let w_end = offset + fan_in * fan_out;
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[offset..w_end])
            .expect("layer weight shape");
        let b = ArrayView1::from(&self.params[w_end..w_end + fan_out]);
        (w, b)
    }

    /// Activations of every layer, input first.
    fn activations(&self, batch: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(batch.to_owned());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = acts[l].dot(&w.t());
            z += &b;
            if l + 1 < self.n_layers() {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    /// Reconstructions, one row per input row.
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Array2<f64> {
        self.activations(batch).pop().expect("at least one layer")
    }

    /// Mean over batch and features of the squared reconstruction error.
    pub fn loss(&self, batch: ArrayView2<'_, f64>) -> f64 {
        let out = self.forward(batch);
        mse(out.view(), batch)
    }

    /// Loss and its analytic gradient with respect to every parameter, in
    /// the flat parameter layout.
    pub fn gradient(&self, batch: ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        assert!(batch.nrows() > 0, "gradient of an empty batch");
        let acts = self.activations(batch);
        let out = &acts[self.n_layers()];
        let loss = mse(out.view(), batch);
        let scale = 2.0 / (batch.nrows() * batch.ncols()) as f64;

        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = (out - &batch) * scale;
        for l in (0..self.n_layers()).rev() {
            let offset: usize = param_count(&self.widths[..=l]);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let gw = delta.t().dot(&acts[l]);
            let gb = delta.sum_axis(Axis(0));
            let w_end = offset + fan_in * fan_out;
            // logical (row-major) order regardless of memory layout
            grad[offset..w_end].iter_mut().zip(gw.iter()).for_each(|(d, &v)| *d = v);
            grad[w_end..w_end + fan_out].iter_mut().zip(gb.iter()).for_each(|(d, &v)| *d = v);
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut prev = delta.dot(&w);
                prev.zip_mut_with(&acts[l], |d, &a| *d *= 1.0 - a * a);
                delta = prev;
            }
        }
        (loss, grad)
    }
}

pub(crate) fn mse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n
}

/// Adam first-order optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Array1<f64>,
    v: Array1<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: Array1::zeros(n_params),
            v: Array1::zeros(n_params),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            let m = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            *p -= self.learning_rate * (m / bc1) / ((v / bc2).sqrt() + self.epsilon);
        }
    }
}
