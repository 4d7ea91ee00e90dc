//! Variational estimate of `I(X;Z)` from a Gaussian encoder on the frozen
//! hidden layer, nonsilent-synapse counting and synaptic capacity.

use std::f64::consts::LN_2;

use crate::dataset::{BalancedBatcher, LabeledDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{argmax_rows, cross_entropy, logistic, softmax_rows, softplus, NetworkModel};
use crate::rng::{stream, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 30,
            batch_size: 64,
            seed: 1,
        }
    }
}

/// `p(Z|H) = N(μ, diag σ²)` with `[μ | σ_raw] = H·W_enc + b_enc` and
/// `σ = softplus(σ_raw)`, plus a softmax decoder `Z → class`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticEncoder {
    /// `M × 2K`; the first `K` columns produce `μ`, the rest `σ_raw`.
    pub w_enc: Matrix,
    pub enc_bias: Vec<f64>,
    /// `K × classes`.
    pub w_dec: Matrix,
    pub dec_bias: Vec<f64>,
}

/// Gaussian parameters for a batch, each `N × K`.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mu: Matrix,
    pub sigma_raw: Matrix,
    pub sigma: Matrix,
}

#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub w_enc: Matrix,
    pub enc_bias: Vec<f64>,
    pub w_dec: Matrix,
    pub dec_bias: Vec<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-limit, limit))
}

impl StochasticEncoder {
    /// Glorot-uniform weights, zero biases (so `σ` starts at `ln 2`).
    pub fn new(hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || hidden % 2 != 0 {
            return Err(Error::OddHiddenSize(hidden));
        }
        let k = hidden / 2;
        let mut rng = SeededRng::new(seed).fork(stream::ENCODER_INIT);
        Ok(Self {
            w_enc: glorot(hidden, 2 * k, &mut rng),
            enc_bias: vec![0.0; 2 * k],
            w_dec: glorot(k, classes, &mut rng),
            dec_bias: vec![0.0; classes],
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.w_dec.rows()
    }

    pub fn posterior(&self, h: &Matrix) -> Result<Posterior> {
        let k = self.latent_dim();
        let mut raw = h.matmul(&self.w_enc)?;
        raw.add_row_vector(&self.enc_bias)?;
        let n = h.rows();
        let mu = Matrix::from_fn(n, k, |t, j| raw.get(t, j));
        let sigma_raw = Matrix::from_fn(n, k, |t, j| raw.get(t, k + j));
        let sigma = sigma_raw.map(softplus);
        Ok(Posterior {
            mu,
            sigma_raw,
            sigma,
        })
    }

    /// Decoder logits for latent samples `z`.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let mut logits = z.matmul(&self.w_dec)?;
        logits.add_row_vector(&self.dec_bias)?;
        Ok(logits)
    }

    fn sample(post: &Posterior, eps: &Matrix) -> Matrix {
        let mut z = post.sigma.clone();
        for ((z, &m), &e) in z
            .as_mut_slice()
            .iter_mut()
            .zip(post.mu.as_slice())
            .zip(eps.as_slice())
        {
            *z = m + *z * e;
        }
        z
    }

    /// Decoder cross-entropy for `Z = μ + σ⊙ε` with the given noise.
    pub fn loss(&self, h: &Matrix, labels: &[usize], eps: &Matrix) -> Result<f64> {
        let post = self.posterior(h)?;
        let z = Self::sample(&post, eps);
        Ok(cross_entropy(&softmax_rows(&self.decode(&z)?), labels))
    }

    /// Exact gradients of [`StochasticEncoder::loss`] for fixed `ε`.
    pub fn gradients(&self, h: &Matrix, labels: &[usize], eps: &Matrix) -> Result<EncoderGradients> {
        let k = self.latent_dim();
        if eps.shape() != (h.rows(), k) || labels.len() != h.rows() {
            return Err(Error::shape(
                "encoder gradients",
                format!("h {:?}, eps {:?}, {} labels", h.shape(), eps.shape(), labels.len()),
            ));
        }
        let post = self.posterior(h)?;
        let z = Self::sample(&post, eps);
        let mut d_logits = softmax_rows(&self.decode(&z)?);
        let n = h.rows() as f64;
        for (t, &y) in labels.iter().enumerate() {
            let row = d_logits.row_mut(t);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        let w_dec = z.matmul_tn(&d_logits)?;
        let dec_bias = d_logits.column_sums();
        let d_z = d_logits.matmul_nt(&self.w_dec)?;
        let d_raw = Matrix::from_fn(h.rows(), 2 * k, |t, j| {
            if j < k {
                d_z.get(t, j)
            } else {
                let j = j - k;
                d_z.get(t, j) * eps.get(t, j) * logistic(post.sigma_raw.get(t, j))
            }
        });
        Ok(EncoderGradients {
            w_enc: h.matmul_tn(&d_raw)?,
            enc_bias: d_raw.column_sums(),
            w_dec,
            dec_bias,
        })
    }

    fn step(&mut self, g: &EncoderGradients, lr: f64) -> Result<()> {
        self.w_enc.add_scaled(&g.w_enc, -lr)?;
        self.w_dec.add_scaled(&g.w_dec, -lr)?;
        for (b, d) in self.enc_bias.iter_mut().zip(&g.enc_bias) {
            *b -= lr * d;
        }
        for (b, d) in self.dec_bias.iter_mut().zip(&g.dec_bias) {
            *b -= lr * d;
        }
        Ok(())
    }
}

fn noise(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// Trains encoder and decoder on the frozen hidden layer of `model`; the
/// objective is the decoder cross-entropy alone (no KL term).
pub fn train_encoder(
    model: &NetworkModel,
    data: &LabeledDataset,
    cfg: &EncoderConfig,
) -> Result<StochasticEncoder> {
    let mut enc = StochasticEncoder::new(model.hidden_size(), data.num_classes, cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(enc);
    }
    let (_, hidden) = model.hidden_layer(&data.inputs)?;
    let root = SeededRng::new(cfg.seed);
    let mut batcher = BalancedBatcher::new(data, cfg.batch_size, root.fork(stream::ENCODER_BATCHES))?;
    let mut rng = root.fork(stream::ENCODER_NOISE);
    let k = enc.latent_dim();
    for _ in 0..cfg.epochs {
        for idx in batcher.next_epoch() {
            let h = hidden.select_rows(&idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let eps = noise(idx.len(), k, &mut rng);
            let g = enc.gradients(&h, &labels, &eps)?;
            enc.step(&g, cfg.learning_rate)?;
            if !enc.w_enc.is_finite() || !enc.w_dec.is_finite() {
                return Err(Error::NonFiniteUpdate("encoder step"));
            }
        }
    }
    Ok(enc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    pub nats: f64,
    /// Noise draws per input used for the decoder accuracy.
    pub n_samples: usize,
    pub n_inputs: usize,
}

impl MiEstimate {
    pub fn from_nats(nats: f64, n_samples: usize, n_inputs: usize) -> Self {
        Self {
            bits: nats / LN_2,
            nats,
            n_samples,
            n_inputs,
        }
    }
}

/// Both KL estimates plus the stochastic decoder's accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiReport {
    /// Against the standard-normal reference.
    pub standard: MiEstimate,
    /// Against the moment-matched factorized Gaussian marginal.
    pub marginal: MiEstimate,
    pub decoder_accuracy: f64,
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` in nats.
pub fn kl_standard_normal(mu: f64, sigma: f64) -> f64 {
    0.5 * (mu * mu + sigma * sigma - 1.0 - (sigma * sigma).ln())
}

/// `KL(N(μ, σ²) ‖ N(m, v))` in nats.
pub fn kl_gaussian(mu: f64, sigma: f64, m: f64, v: f64) -> f64 {
    let s2 = sigma * sigma;
    0.5 * ((v / s2).ln() + (s2 + (mu - m) * (mu - m)) / v - 1.0)
}

/// Sum that does not depend on the order of `values`.
fn ordered_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Mean KL terms per input, evaluated in closed form.
pub fn mi_from_posterior(post: &Posterior, n_samples: usize) -> Result<(MiEstimate, MiEstimate)> {
    let (n, k) = post.mu.shape();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let mut standard = Vec::with_capacity(n);
    for t in 0..n {
        let row: Vec<f64> = (0..k)
            .map(|j| kl_standard_normal(post.mu.get(t, j), post.sigma.get(t, j)))
            .collect();
        standard.push(ordered_sum(row));
    }

    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for j in 0..k {
        let m = ordered_sum((0..n).map(|t| post.mu.get(t, j)).collect()) / n as f64;
        let second = ordered_sum(
            (0..n)
                .map(|t| {
                    let (mu, s) = (post.mu.get(t, j), post.sigma.get(t, j));
                    s * s + mu * mu
                })
                .collect(),
        ) / n as f64;
        means.push(m);
        vars.push((second - m * m).max(f64::MIN_POSITIVE));
    }
    let mut marginal = Vec::with_capacity(n);
    for t in 0..n {
        let row: Vec<f64> = (0..k)
            .map(|j| kl_gaussian(post.mu.get(t, j), post.sigma.get(t, j), means[j], vars[j]))
            .collect();
        marginal.push(ordered_sum(row));
    }
    let mean = |v: Vec<f64>| (ordered_sum(v) / n as f64).max(0.0);
    Ok((
        MiEstimate::from_nats(mean(standard), n_samples, n),
        MiEstimate::from_nats(mean(marginal), n_samples, n),
    ))
}

/// Evaluates the encoder on `data` pushed through the frozen `model`.
pub fn estimate_mi(
    encoder: &StochasticEncoder,
    model: &NetworkModel,
    data: &LabeledDataset,
    n_samples: usize,
    seed: u64,
) -> Result<MiReport> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let (_, hidden) = model.hidden_layer(&data.inputs)?;
    let post = encoder.posterior(&hidden)?;
    let (standard, marginal) = mi_from_posterior(&post, n_samples)?;

    let mut rng = SeededRng::new(seed).fork(stream::EVAL_NOISE);
    let mut correct = 0usize;
    for _ in 0..n_samples {
        let eps = noise(data.len(), encoder.latent_dim(), &mut rng);
        let z = StochasticEncoder::sample(&post, &eps);
        correct += argmax_rows(&encoder.decode(&z)?)
            .iter()
            .zip(&data.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let draws = (n_samples * data.len()).max(1);
    Ok(MiReport {
        standard,
        marginal,
        decoder_accuracy: correct as f64 / draws as f64,
    })
}

/// Input→hidden synapses whose weight magnitude exceeds `eps_silent`.
/// Negative weights of the unconstrained baseline count as nonsilent.
pub fn count_nonsilent(w_hidden: &Matrix, eps_silent: f64) -> usize {
    w_hidden.as_slice().iter().filter(|&&w| w.abs() > eps_silent).count()
}

/// Bits per nonsilent synapse.
pub fn synaptic_capacity(bits: f64, nonsilent: usize) -> Result<f64> {
    if nonsilent == 0 {
        return Err(Error::ZeroSynapses);
    }
    Ok(bits / nonsilent as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub test_accuracy: f64,
    pub mi: MiReport,
    pub nonsilent: usize,
    /// From the standard-normal estimate.
    pub c_s: f64,
    pub c_s_marginal: f64,
}

/// Network accuracy, both MI estimates, nonsilent count and capacity.
pub fn capacity_report(
    model: &NetworkModel,
    encoder: &StochasticEncoder,
    test: &LabeledDataset,
    n_samples: usize,
    seed: u64,
    eps_silent: f64,
) -> Result<CapacityReport> {
    let test_accuracy = model.accuracy(&test.inputs, &test.labels)?;
    let mi = estimate_mi(encoder, model, test, n_samples, seed)?;
    let nonsilent = count_nonsilent(&model.w_hidden, eps_silent);
    Ok(CapacityReport {
        test_accuracy,
        c_s: synaptic_capacity(mi.standard.bits, nonsilent)?,
        c_s_marginal: synaptic_capacity(mi.marginal.bits, nonsilent)?,
        mi,
        nonsilent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_landmarks() {
        assert_eq!(kl_standard_normal(0.0, 1.0), 0.0);
        assert!((kl_standard_normal(1.0, 1.0) / LN_2 - 0.7213).abs() < 1e-4);
        assert!(kl_gaussian(0.3, 0.7, 0.3, 0.49).abs() < 1e-15);
        assert!((kl_gaussian(1.0, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn capacity_examples() {
        assert!((synaptic_capacity(127.62, 23520).unwrap() - 5.43e-3).abs() < 5e-6);
        assert!((synaptic_capacity(435.93, 78400).unwrap() - 5.56e-3).abs() < 5e-6);
        assert_eq!(synaptic_capacity(0.0, 10).unwrap(), 0.0);
        assert!(matches!(synaptic_capacity(1.0, 0), Err(Error::ZeroSynapses)));
    }

    #[test]
    fn nonsilent_counts_nonzero_entries() {
        let w = Matrix::from_rows(&[[0.0, 1e-300, -0.5], [0.2, -0.0, 3.0]]);
        assert_eq!(count_nonsilent(&w, 0.0), 4);
        assert_eq!(count_nonsilent(&w, 0.1), 3);
        assert_eq!(count_nonsilent(&Matrix::zeros(4, 4), 0.0), 0);
    }

    #[test]
    fn odd_hidden_size_is_rejected() {
        assert!(matches!(StochasticEncoder::new(7, 3, 1), Err(Error::OddHiddenSize(7))));
        let enc = StochasticEncoder::new(10, 3, 1).unwrap();
        assert_eq!(enc.latent_dim(), 5);
        assert_eq!(enc.w_enc.cols(), 10);
    }

    #[test]
    fn identical_posteriors_carry_no_marginal_information() {
        let post = Posterior {
            mu: Matrix::filled(5, 2, 0.8),
            sigma_raw: Matrix::zeros(5, 2),
            sigma: Matrix::filled(5, 2, 0.4),
        };
        let (standard, marginal) = mi_from_posterior(&post, 12).unwrap();
        assert!(marginal.nats.abs() < 1e-12);
        let expect = 2.0 * kl_standard_normal(0.8, 0.4);
        assert!((standard.nats - expect).abs() < 1e-12);
        assert!((standard.bits * LN_2 - standard.nats).abs() < 1e-12);
    }

    #[test]
    fn unit_posterior_gives_zero_bits() {
        let post = Posterior {
            mu: Matrix::zeros(3, 4),
            sigma_raw: Matrix::zeros(3, 4),
            sigma: Matrix::filled(3, 4, 1.0),
        };
        assert_eq!(mi_from_posterior(&post, 1).unwrap().0.bits, 0.0);
        let empty = Posterior {
            mu: Matrix::zeros(0, 4),
            sigma_raw: Matrix::zeros(0, 4),
            sigma: Matrix::zeros(0, 4),
        };
        assert!(matches!(mi_from_posterior(&empty, 1), Err(Error::EmptyData)));
    }
}
