//! Gradient-descent baselines: plain backpropagation and the
//! nonnegative, activity-regularized variant after Chorowski & Zurada.

use crate::dataset::{BalancedBatcher, LabeledDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{
    clip_nonnegative, cross_entropy, modified_sigmoid_grad_from_output, Algorithm, ForwardPass,
    NetworkModel,
};
use crate::rng::{stream, SeededRng};
use crate::train::{StepObserver, StepSnapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct BpTrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Coefficient of the `mean(H)` activity penalty; ignored by plain BP.
    pub lambda_sparsity: f64,
    /// Coefficient of the L1 penalty `Σ|W_h|`; ignored by plain BP.
    pub weight_l1: f64,
    pub variant: Algorithm,
}

/// Regularizers added to the cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Penalty {
    /// `λ·mean(H)`.
    pub activity: f64,
    /// `λ_w·Σ|W_h|`.
    pub weight_l1: f64,
}

impl Penalty {
    pub const NONE: Penalty = Penalty { activity: 0.0, weight_l1: 0.0 };
}

impl BpTrainerConfig {
    pub fn bp() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 20,
            seed: 1,
            lambda_sparsity: 0.0,
            weight_l1: 0.0,
            variant: Algorithm::Bp,
        }
    }

    pub fn chorowski() -> Self {
        Self {
            lambda_sparsity: 1e-3,
            weight_l1: 3e-5,
            variant: Algorithm::Chorowski,
            ..Self::bp()
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |what: String| Err(Error::Config(format!("{}: {what}", self.variant)));
        if self.variant == Algorithm::Bio {
            return bad("not a gradient-descent algorithm".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if !(self.lambda_sparsity >= 0.0 && self.weight_l1 >= 0.0) {
            return bad("penalties must be nonnegative".into());
        }
        if self.batch_size < num_classes {
            return bad("batch size must be at least the class count".into());
        }
        Ok(())
    }

    pub fn penalty(&self) -> Penalty {
        match self.variant {
            Algorithm::Chorowski => Penalty {
                activity: self.lambda_sparsity,
                weight_l1: self.weight_l1,
            },
            _ => Penalty::NONE,
        }
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
        ];
        if self.variant == Algorithm::Chorowski {
            out.push(("lambda".into(), self.lambda_sparsity.to_string()));
            out.push(("weight_l1".into(), self.weight_l1.to_string()));
        }
        out
    }
}

/// Gradients of the batch loss for each parameter block.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub w_hidden: Matrix,
    pub w_class: Matrix,
    pub class_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl GradientBundle {
    pub fn is_finite(&self) -> bool {
        self.w_hidden.is_finite()
            && self.w_class.is_finite()
            && self.class_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
    }
}

/// `cross_entropy + λ·mean(H) + λ_w·Σ|W_h|` on one batch.
pub fn batch_loss(model: &NetworkModel, fp: &ForwardPass, labels: &[usize], penalty: Penalty) -> f64 {
    let mut loss = cross_entropy(&fp.probs, labels);
    if penalty.activity != 0.0 {
        let h = fp.hidden.as_slice();
        loss += penalty.activity * h.iter().sum::<f64>() / h.len() as f64;
    }
    if penalty.weight_l1 != 0.0 {
        loss += penalty.weight_l1 * model.w_hidden.as_slice().iter().map(|w| w.abs()).sum::<f64>();
    }
    loss
}

/// Exact gradients of [`batch_loss`].
pub fn backprop_gradients(
    model: &NetworkModel,
    x: &Matrix,
    labels: &[usize],
    penalty: Penalty,
) -> Result<GradientBundle> {
    Ok(backprop(model, x, labels, penalty)?.1)
}

fn backprop(
    model: &NetworkModel,
    x: &Matrix,
    labels: &[usize],
    penalty: Penalty,
) -> Result<(f64, GradientBundle)> {
    if model.hidden_bias.is_none() {
        return Err(Error::shape("backprop_gradients", "model has no hidden bias"));
    }
    if labels.len() != x.rows() {
        return Err(Error::shape(
            "backprop_gradients",
            format!("{} labels for {} rows", labels.len(), x.rows()),
        ));
    }
    let k = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::shape("backprop_gradients", format!("label {bad} ≥ {k}")));
    }
    let fp = model.forward(x)?;
    let loss = batch_loss(model, &fp, labels, penalty);
    let n = x.rows() as f64;

    // dL/dlogits = (P − Y)/N
    let mut d_logits = fp.probs.clone();
    for (t, &y) in labels.iter().enumerate() {
        let row = d_logits.row_mut(t);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    let w_class = fp.hidden.matmul_tn(&d_logits)?;
    let class_bias = d_logits.column_sums();

    let mut d_pre = d_logits.matmul_nt(&model.w_class)?;
    let activity = penalty.activity / fp.hidden.as_slice().len() as f64;
    for (d, &h) in d_pre.as_mut_slice().iter_mut().zip(fp.hidden.as_slice()) {
        *d = (*d + activity) * modified_sigmoid_grad_from_output(h);
    }
    let mut w_hidden = x.matmul_tn(&d_pre)?;
    if penalty.weight_l1 != 0.0 {
        // Subgradient 0 at w = 0.
        for (g, &w) in w_hidden.as_mut_slice().iter_mut().zip(model.w_hidden.as_slice()) {
            if w != 0.0 {
                *g += penalty.weight_l1 * w.signum();
            }
        }
    }
    let hidden_bias = d_pre.column_sums();
    Ok((
        loss,
        GradientBundle {
            w_hidden,
            w_class,
            class_bias,
            hidden_bias,
        },
    ))
}

/// Plain gradient step with learning rate `lr`.
pub fn apply_gradients(model: &mut NetworkModel, grads: &GradientBundle, lr: f64) -> Result<()> {
    model.w_hidden.add_scaled(&grads.w_hidden, -lr)?;
    model.w_class.add_scaled(&grads.w_class, -lr)?;
    for (b, g) in model.class_bias.iter_mut().zip(&grads.class_bias) {
        *b -= lr * g;
    }
    if let Some(hb) = model.hidden_bias.as_mut() {
        for (b, g) in hb.iter_mut().zip(&grads.hidden_bias) {
            *b -= lr * g;
        }
    }
    Ok(())
}

pub fn train_bp(data: &LabeledDataset, hidden: usize, cfg: &BpTrainerConfig) -> Result<NetworkModel> {
    if cfg.variant != Algorithm::Bp {
        return Err(Error::Config(format!("train_bp called with variant {}", cfg.variant)));
    }
    train_gradient(data, hidden, cfg, &mut ())
}

pub fn train_chorowski(
    data: &LabeledDataset,
    hidden: usize,
    cfg: &BpTrainerConfig,
) -> Result<NetworkModel> {
    if cfg.variant != Algorithm::Chorowski {
        return Err(Error::Config(format!(
            "train_chorowski called with variant {}",
            cfg.variant
        )));
    }
    train_gradient(data, hidden, cfg, &mut ())
}

/// Shared gradient-descent loop. Chorowski runs project `W_h` and `W_c` onto
/// the nonnegative orthant after every step.
pub fn train_gradient(
    data: &LabeledDataset,
    hidden: usize,
    cfg: &BpTrainerConfig,
    observer: &mut dyn StepObserver,
) -> Result<NetworkModel> {
    if hidden == 0 {
        return Err(Error::Config("hidden size must be at least 1".into()));
    }
    cfg.validate(data.num_classes)?;
    let project = cfg.variant == Algorithm::Chorowski;
    let root = SeededRng::new(cfg.seed);
    let mut model = NetworkModel::init(
        cfg.variant,
        data.input_dim(),
        hidden,
        data.num_classes,
        cfg.seed,
    );
    model.hyperparameters = cfg.describe();
    if cfg.epochs == 0 {
        return Ok(model);
    }
    let penalty = cfg.penalty();
    let mut batcher = BalancedBatcher::new(data, cfg.batch_size, root.fork(stream::BATCHES))?;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for idx in batcher.next_epoch() {
            let (x, labels) = data.gather(&idx);
            let (loss, grads) = backprop(&model, &x, &labels, penalty)?;
            if !grads.is_finite() || !loss.is_finite() {
                return Err(Error::NonFiniteUpdate("gradient step"));
            }
            apply_gradients(&mut model, &grads, cfg.learning_rate)?;
            let pre_clip = (project && observer.wants_snapshot(step)).then(|| model.clone());
            if project {
                clip_nonnegative(&mut model.w_hidden);
                clip_nonnegative(&mut model.w_class);
            }
            observer.on_step(&StepSnapshot {
                step,
                epoch,
                loss,
                pre_clip: pre_clip.as_ref(),
                model: &model,
            });
            step += 1;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::softmax_rows;

    fn toy(seed: u64) -> (NetworkModel, Matrix, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut model = NetworkModel::init(Algorithm::Bp, 5, 4, 3, seed);
        model.w_hidden.map_inplace(|_| 0.0);
        model.w_hidden = Matrix::from_fn(5, 4, |_, _| rng.uniform(-1.0, 1.0));
        model.w_class = Matrix::from_fn(4, 3, |_, _| rng.uniform(-1.0, 1.0));
        model.class_bias = (0..3).map(|_| rng.uniform(-0.5, 0.5)).collect();
        model.hidden_bias = Some((0..4).map(|_| rng.uniform(-0.5, 0.5)).collect());
        let x = Matrix::from_fn(6, 5, |_, _| rng.uniform(0.0, 1.0));
        let labels = (0..6).map(|t| t % 3).collect();
        (model, x, labels)
    }

    fn loss_of(model: &NetworkModel, x: &Matrix, labels: &[usize]) -> f64 {
        batch_loss(model, &model.forward(x).unwrap(), labels, Penalty::NONE)
    }

    #[test]
    fn gradients_scale_with_penalty_only_through_hidden_path() {
        let (model, x, labels) = toy(3);
        let plain = backprop_gradients(&model, &x, &labels, Penalty::NONE).unwrap();
        let reg = backprop_gradients(&model, &x, &labels, Penalty { activity: 0.5, weight_l1: 0.0 }).unwrap();
        assert_eq!(plain.w_class, reg.w_class);
        assert_eq!(plain.class_bias, reg.class_bias);
        assert_ne!(plain.w_hidden, reg.w_hidden);
        let l1 = backprop_gradients(&model, &x, &labels, Penalty { activity: 0.0, weight_l1: 0.25 }).unwrap();
        for ((a, b), w) in l1.w_hidden.as_slice().iter().zip(plain.w_hidden.as_slice()).zip(model.w_hidden.as_slice()) {
            assert!((a - b - 0.25 * w.signum()).abs() < 1e-15);
        }
        assert_eq!(l1.hidden_bias, plain.hidden_bias);
    }

    #[test]
    fn confident_correct_batch_has_tiny_gradient() {
        let (mut model, x, _) = toy(4);
        model.w_class = Matrix::zeros(4, 3);
        model.class_bias = vec![60.0, 0.0, 0.0];
        let labels = vec![0; x.rows()];
        let g = backprop_gradients(&model, &x, &labels, Penalty::NONE).unwrap();
        assert!(g.w_hidden.as_slice().iter().all(|v| v.abs() < 1e-20));
        assert!(g.class_bias.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        for seed in 0..50 {
            let (mut model, x, labels) = toy(seed);
            let before = loss_of(&model, &x, &labels);
            let g = backprop_gradients(&model, &x, &labels, Penalty::NONE).unwrap();
            apply_gradients(&mut model, &g, 1e-3).unwrap();
            assert!(loss_of(&model, &x, &labels) <= before, "seed {seed}");
        }
    }

    #[test]
    fn missing_hidden_bias_is_rejected() {
        let (mut model, x, labels) = toy(1);
        model.hidden_bias = None;
        assert!(backprop_gradients(&model, &x, &labels, Penalty::NONE).is_err());
        let (model, x, _) = toy(1);
        assert!(backprop_gradients(&model, &x, &[0, 1], Penalty::NONE).is_err());
    }

    #[test]
    fn loss_matches_softmax_definition() {
        let (model, x, labels) = toy(9);
        let fp = model.forward(&x).unwrap();
        let p = softmax_rows(&fp.logits);
        let ce: f64 = labels
            .iter()
            .enumerate()
            .map(|(t, &y)| -p.get(t, y).ln())
            .sum::<f64>()
            / labels.len() as f64;
        assert!((batch_loss(&model, &fp, &labels, Penalty::NONE) - ce).abs() < 1e-14);
    }
}
