//! The one-hidden-layer network shared by every learning rule.
//!
//! `inputs → W_h (+ hidden bias) → modified sigmoid → W_c + b → softmax`

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, SeededRng};

/// Range of the uniform weight initialization.
pub const INIT_LOW: f64 = 0.01;
pub const INIT_HIGH: f64 = 0.1;

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Competitive Hebbian plasticity with weight perturbation.
    Bio,
    /// Unconstrained backpropagation.
    Bp,
    /// Backpropagation with nonnegative weights and an activity penalty.
    Chorowski,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Bio, Algorithm::Bp, Algorithm::Chorowski];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Bio => "bio",
            Algorithm::Bp => "bp",
            Algorithm::Chorowski => "chorowski",
        }
    }

    /// Whether the weight matrices are kept nonnegative.
    pub fn is_nonnegative(self) -> bool {
        matches!(self, Algorithm::Bio | Algorithm::Chorowski)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bio" => Ok(Algorithm::Bio),
            "bp" => Ok(Algorithm::Bp),
            "chorowski" => Ok(Algorithm::Chorowski),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// `2·logistic(a) − 1`, i.e. `tanh(a/2)`. Maps `[0, ∞)` onto `[0, 1)`.
#[inline]
pub fn modified_sigmoid(a: f64) -> f64 {
    (0.5 * a).tanh()
}

/// Derivative of [`modified_sigmoid`] written in terms of its output `h`:
/// `2·s·(1 − s) = (1 − h²)/2` with `s = (1 + h)/2`.
#[inline]
pub fn modified_sigmoid_grad_from_output(h: f64) -> f64 {
    0.5 * (1.0 - h * h)
}

#[inline]
pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^a)` without overflow.
#[inline]
pub fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let k = out.cols();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut().take(k) {
            *v /= sum;
        }
    }
    out
}

/// Mean over the batch of `−ln p[n, label_n]`, probabilities floored at
/// [`PROB_FLOOR`].
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.get(i, l).max(PROB_FLOOR).ln())
        .sum();
    total / n as f64
}

/// Replaces every entry by `max(entry, 0)`; clipped entries become `+0.0`.
pub fn clip_nonnegative(w: &mut Matrix) {
    clip_slice(w.as_mut_slice());
}

pub fn clip_slice(values: &mut [f64]) {
    for v in values {
        // `!(x > 0)` also catches -0.0.
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

/// `rows × cols` entries drawn i.i.d. from `U[0.01, 0.1]`.
pub fn init_weights(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(INIT_LOW, INIT_HIGH))
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `X·W_h` plus hidden bias, before the nonlinearity.
    pub z_lin: Matrix,
    pub hidden: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Input → hidden, `inputs × M`.
    pub w_hidden: Matrix,
    /// Hidden → class, `M × K`.
    pub w_class: Matrix,
    pub class_bias: Vec<f64>,
    /// Present for the backpropagation baselines only.
    pub hidden_bias: Option<Vec<f64>>,
    /// Training hyperparameters as `key=value` provenance.
    pub hyperparameters: Vec<(String, String)>,
}

impl NetworkModel {
    /// Fresh network: weights from `U[0.01, 0.1]`, biases zero. The baselines
    /// additionally get a zero hidden bias.
    pub fn init(
        algorithm: Algorithm,
        inputs: usize,
        hidden: usize,
        classes: usize,
        seed: u64,
    ) -> Self {
        let mut rng = SeededRng::new(seed).fork(stream::INIT);
        let w_hidden = init_weights(inputs, hidden, &mut rng);
        let w_class = init_weights(hidden, classes, &mut rng);
        Self {
            algorithm,
            seed,
            w_hidden,
            w_class,
            class_bias: vec![0.0; classes],
            hidden_bias: (algorithm != Algorithm::Bio).then(|| vec![0.0; hidden]),
            hyperparameters: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w_class.cols()
    }

    /// Checks that the parameter blocks fit together.
    pub fn validate(&self) -> Result<()> {
        let m = self.hidden_size();
        let k = self.num_classes();
        if self.w_class.rows() != m {
            return Err(Error::shape(
                "NetworkModel",
                format!("W_h has {m} columns, W_c has {} rows", self.w_class.rows()),
            ));
        }
        if self.class_bias.len() != k {
            return Err(Error::shape(
                "NetworkModel",
                format!("{} class biases for {k} classes", self.class_bias.len()),
            ));
        }
        if let Some(hb) = &self.hidden_bias {
            if hb.len() != m {
                return Err(Error::shape(
                    "NetworkModel",
                    format!("{} hidden biases for {m} units", hb.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w_hidden.is_finite()
            && self.w_class.is_finite()
            && self.class_bias.iter().all(|v| v.is_finite())
            && self
                .hidden_bias
                .as_ref()
                .is_none_or(|hb| hb.iter().all(|v| v.is_finite()))
    }

    /// Hidden pre-activations and activations.
    pub fn hidden_layer(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("{} input columns, model expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut z_lin = x.matmul(&self.w_hidden)?;
        if let Some(hb) = &self.hidden_bias {
            z_lin.add_row_vector(hb)?;
        }
        let hidden = z_lin.map(modified_sigmoid);
        Ok((z_lin, hidden))
    }

    /// `H·W + b` for an arbitrary class-weight matrix (used for perturbed trials).
    pub fn class_logits(&self, hidden: &Matrix, w_class: &Matrix) -> Result<Matrix> {
        let mut logits = hidden.matmul(w_class)?;
        logits.add_row_vector(&self.class_bias)?;
        Ok(logits)
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        let (z_lin, hidden) = self.hidden_layer(x)?;
        let logits = self.class_logits(&hidden, &self.w_class)?;
        let probs = softmax_rows(&logits);
        Ok(ForwardPass {
            z_lin,
            hidden,
            logits,
            probs,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?.logits))
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(accuracy(&self.predict(x)?, labels))
    }

    pub fn hyperparameter(&self, key: &str) -> Option<&str> {
        self.hyperparameters
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}
