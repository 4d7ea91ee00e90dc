//! Competitive Hebbian plasticity, weight perturbation and homeostatic biases.
//!
//! One training trial is one label-balanced minibatch:
//!
//! * hidden weights follow the competitive Hebbian rule
//!   `Δw_ij = η·z_j·(x_i − Σ_{k≠j} z_k·w_ik)`;
//! * class weights mix the same Hebbian rule with a weight-perturbation
//!   estimate of the error gradient, `ΔW_c = α·ΔW_hebb + η·β·ΔW_wp`, where
//!   `ΔW_wp = −(E_pert − E)/σ² · ξ` and `ξ ~ N(0, σ²)`;
//! * class biases move toward equal mean activation,
//!   `Δb_k = η·γ·(1/K − mean_t z_kt)`.
//!
//! All deltas are computed from the pre-trial weights, applied together and
//! then every parameter is clipped at zero.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{BalancedBatcher, LabeledDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{clip_nonnegative, clip_slice, cross_entropy, softmax_rows, Algorithm, NetworkModel};
use crate::rng::{stream, SeededRng};
use crate::train::{StepObserver, StepSnapshot};

/// Which activity enters the plasticity rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivitySignal {
    /// Weighted input sums: `X·W_h` for hidden units, logits for class units.
    Linear,
    /// Layer outputs: modified-sigmoid activations for hidden units, softmax
    /// probabilities for class units.
    Output,
}

/// How per-example Hebbian terms combine within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchReduction {
    Mean,
    Sum,
}

impl ActivitySignal {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivitySignal::Linear => "linear",
            ActivitySignal::Output => "output",
        }
    }
}

impl BatchReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            BatchReduction::Mean => "mean",
            BatchReduction::Sum => "sum",
        }
    }
}

impl fmt::Display for ActivitySignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for BatchReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivitySignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "output" => Ok(Self::Output),
            other => Err(Error::Config(format!("unknown activity signal `{other}`"))),
        }
    }
}

impl FromStr for BatchReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(Error::Config(format!("unknown batch reduction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BioConfig {
    /// Learning rate η.
    pub eta: f64,
    /// Weight α of the Hebbian term in the class-layer update.
    pub alpha: f64,
    /// Weight β of the perturbation term in the class-layer update.
    pub beta_wp: f64,
    /// Homeostatic gain γ.
    pub gamma: f64,
    /// Variance σ² of the weight perturbation.
    pub sigma2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub signal: ActivitySignal,
    pub reduction: BatchReduction,
}

impl Default for BioConfig {
    fn default() -> Self {
        Self {
            eta: 0.000158,
            alpha: 0.1,
            beta_wp: 446.25,
            gamma: 0.1,
            sigma2: 0.0157,
            batch_size: 64,
            epochs: 80,
            seed: 1,
            signal: ActivitySignal::Output,
            reduction: BatchReduction::Sum,
        }
    }
}

impl BioConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("bio: {what}")));
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.sigma2 > 0.0) {
            return bad("sigma2 must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta_wp >= 0.0 && self.gamma >= 0.0) {
            return bad("alpha, beta and gamma must be nonnegative");
        }
        if self.batch_size < num_classes {
            return bad("batch size must be at least the class count");
        }
        Ok(())
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("eta".into(), self.eta.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("beta".into(), self.beta_wp.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("sigma2".into(), self.sigma2.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("signal".into(), self.signal.to_string()),
            ("reduction".into(), self.reduction.to_string()),
        ]
    }

    /// Rate applied to batch-mean Hebbian terms.
    fn hebbian_rate(&self, batch: usize) -> f64 {
        match self.reduction {
            BatchReduction::Mean => self.eta,
            BatchReduction::Sum => self.eta * batch as f64,
        }
    }
}

/// Weight perturbation `ξ` with entries drawn from `N(0, σ²)`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub xi: Matrix,
}

impl Perturbation {
    pub fn sample(rows: usize, cols: usize, sigma2: f64, rng: &mut SeededRng) -> Self {
        let sd = sigma2.sqrt();
        Self {
            xi: Matrix::from_fn(rows, cols, |_, _| sd * rng.standard_normal()),
        }
    }
}

/// Batch errors of one trial with and without the perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialErrors {
    pub unperturbed: f64,
    pub perturbed: f64,
}

/// Batch mean of `η·z_j·(x_i − Σ_{k≠j} z_k·w_ik)` for every synapse.
///
/// `x` is `N×P`, `z` is `N×Q`, `w` is `P×Q`. Uses
/// `Σ_n z_nj Σ_{k≠j} z_nk w_ik = (W·ZᵀZ)_ij − w_ij·(ZᵀZ)_jj`, grouping the
/// product as `(W·Zᵀ)·Z` when the batch is small relative to `Q`.
pub fn hebbian_delta(x: &Matrix, z: &Matrix, w: &Matrix, eta: f64) -> Result<Matrix> {
    let (n, p) = x.shape();
    let q = z.cols();
    if z.rows() != n || w.shape() != (p, q) {
        return Err(Error::shape(
            "hebbian_delta",
            format!("x {:?}, z {:?}, w {:?}", x.shape(), z.shape(), w.shape()),
        ));
    }
    if n == 0 {
        return Ok(Matrix::zeros(p, q));
    }
    let mut delta = x.matmul_tn(z)?;
    let cross = if 2 * n < q {
        w.matmul_nt(z)?.matmul(z)?
    } else {
        w.matmul(&z.matmul_tn(z)?)?
    };
    let mut self_term = vec![0.0; q];
    for t in 0..n {
        for (s, &v) in self_term.iter_mut().zip(z.row(t)) {
            *s += v * v;
        }
    }
    let scale = eta / n as f64;
    let wv = w.as_slice();
    let cv = cross.as_slice();
    for (idx, d) in delta.as_mut_slice().iter_mut().enumerate() {
        let j = idx % q;
        *d = scale * (*d - cv[idx] + wv[idx] * self_term[j]);
    }
    Ok(delta)
}

/// `−(E_pert − E)/σ² · ξ`. The learning rate is applied later, once, in
/// [`compose_classification_update`].
pub fn wp_delta(trial: TrialErrors, pert: &Perturbation, sigma2: f64) -> Matrix {
    let coeff = -(trial.perturbed - trial.unperturbed) / sigma2;
    pert.xi.map(|v| coeff * v)
}

/// `α·ΔW_hebb + η·β·ΔW_wp`; the Hebbian delta already carries `η`.
pub fn compose_classification_update(
    hebbian: &Matrix,
    wp: &Matrix,
    cfg: &BioConfig,
) -> Result<Matrix> {
    if hebbian.shape() != wp.shape() {
        return Err(Error::shape(
            "compose_classification_update",
            format!("{:?} vs {:?}", hebbian.shape(), wp.shape()),
        ));
    }
    let mut out = hebbian.clone();
    out.scale(cfg.alpha);
    out.add_scaled(wp, cfg.eta * cfg.beta_wp)?;
    Ok(out)
}

/// `Δb_k = η·γ·(1/K − mean over the batch of z_k)` for `N×K` class activities.
pub fn bias_delta(class_activity: &Matrix, cfg: &BioConfig) -> Vec<f64> {
    let k = class_activity.cols();
    let target = 1.0 / k as f64;
    class_activity
        .column_means()
        .into_iter()
        .map(|mean| cfg.eta * cfg.gamma * (target - mean))
        .collect()
}

/// One trial's deltas, all computed from the same pre-trial weights.
#[derive(Debug, Clone)]
pub struct BioDeltas {
    pub hidden: Matrix,
    pub class: Matrix,
    pub bias: Vec<f64>,
    pub errors: TrialErrors,
}

impl BioDeltas {
    fn is_finite(&self) -> bool {
        self.hidden.is_finite()
            && self.class.is_finite()
            && self.bias.iter().all(|v| v.is_finite())
            && self.errors.unperturbed.is_finite()
            && self.errors.perturbed.is_finite()
    }
}

/// Computes the deltas of one trial on the batch `(x, labels)`.
pub fn trial_deltas(
    model: &NetworkModel,
    x: &Matrix,
    labels: &[usize],
    pert: &Perturbation,
    cfg: &BioConfig,
) -> Result<BioDeltas> {
    let fp = model.forward(x)?;
    let unperturbed = cross_entropy(&fp.probs, labels);

    let mut w_pert = model.w_class.clone();
    w_pert.add_scaled(&pert.xi, 1.0)?;
    let perturbed = cross_entropy(
        &softmax_rows(&model.class_logits(&fp.hidden, &w_pert)?),
        labels,
    );
    let errors = TrialErrors {
        unperturbed,
        perturbed,
    };

    let (hidden_activity, class_activity) = match cfg.signal {
        ActivitySignal::Linear => (&fp.z_lin, &fp.logits),
        ActivitySignal::Output => (&fp.hidden, &fp.probs),
    };
    let rate = cfg.hebbian_rate(x.rows());
    let hidden = hebbian_delta(x, hidden_activity, &model.w_hidden, rate)?;
    let class_hebbian = hebbian_delta(&fp.hidden, class_activity, &model.w_class, rate)?;
    let class = compose_classification_update(
        &class_hebbian,
        &wp_delta(errors, pert, cfg.sigma2),
        cfg,
    )?;
    let bias = bias_delta(class_activity, cfg);
    Ok(BioDeltas {
        hidden,
        class,
        bias,
        errors,
    })
}

/// Adds the deltas and clips every parameter block at zero.
fn apply(model: &mut NetworkModel, deltas: &BioDeltas) -> Result<()> {
    model.w_hidden.add_scaled(&deltas.hidden, 1.0)?;
    model.w_class.add_scaled(&deltas.class, 1.0)?;
    for (b, d) in model.class_bias.iter_mut().zip(&deltas.bias) {
        *b += d;
    }
    Ok(())
}

fn clip_all(model: &mut NetworkModel) {
    clip_nonnegative(&mut model.w_hidden);
    clip_nonnegative(&mut model.w_class);
    clip_slice(&mut model.class_bias);
}

pub fn train_bio(data: &LabeledDataset, hidden: usize, cfg: &BioConfig) -> Result<NetworkModel> {
    train_bio_observed(data, hidden, cfg, &mut ())
}

/// [`train_bio`] reporting every trial to `observer`.
pub fn train_bio_observed(
    data: &LabeledDataset,
    hidden: usize,
    cfg: &BioConfig,
    observer: &mut dyn StepObserver,
) -> Result<NetworkModel> {
    if hidden == 0 {
        return Err(Error::Config("hidden size must be at least 1".into()));
    }
    cfg.validate(data.num_classes)?;
    let root = SeededRng::new(cfg.seed);
    let mut model = NetworkModel::init(
        Algorithm::Bio,
        data.input_dim(),
        hidden,
        data.num_classes,
        cfg.seed,
    );
    clip_all(&mut model);
    model.hyperparameters = cfg.describe();
    if cfg.epochs == 0 {
        return Ok(model);
    }

    let mut batcher = BalancedBatcher::new(data, cfg.batch_size, root.fork(stream::BATCHES))?;
    let mut noise = root.fork(stream::PERTURBATION);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for idx in batcher.next_epoch() {
            let (x, labels) = data.gather(&idx);
            let pert = Perturbation::sample(hidden, data.num_classes, cfg.sigma2, &mut noise);
            let deltas = trial_deltas(&model, &x, &labels, &pert, cfg)?;
            if !deltas.is_finite() {
                return Err(Error::NonFiniteUpdate("bio trial"));
            }
            apply(&mut model, &deltas)?;
            let pre_clip = observer.wants_snapshot(step).then(|| model.clone());
            clip_all(&mut model);
            observer.on_step(&StepSnapshot {
                step,
                epoch,
                loss: deltas.errors.unperturbed,
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
    use proptest::prelude::*;

    /// Four nested loops straight from the update rule.
    fn hebbian_oracle(x: &Matrix, z: &Matrix, w: &Matrix, eta: f64) -> Matrix {
        let (n, p) = x.shape();
        let q = z.cols();
        let mut out = Matrix::zeros(p, q);
        for i in 0..p {
            for j in 0..q {
                let mut acc = 0.0;
                for t in 0..n {
                    let mut competition = 0.0;
                    for k in 0..q {
                        if k != j {
                            competition += z.get(t, k) * w.get(i, k);
                        }
                    }
                    acc += eta * z.get(t, j) * (x.get(t, i) - competition);
                }
                out.set(i, j, acc / n as f64);
            }
        }
        out
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.shape() == b.shape()
            && a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hebbian_worked_example() {
        let x = Matrix::from_rows(&[[1.0, 0.5]]);
        let w = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]);
        let z = x.matmul(&w).unwrap();
        assert!(close(&z, &Matrix::from_rows(&[[0.25, 0.4]]), 1e-15));
        let d = hebbian_delta(&x, &z, &w, 0.1).unwrap();
        let expected = Matrix::from_rows(&[[0.023, 0.039], [0.0085, 0.017]]);
        assert!(close(&d, &expected, 1e-15), "{d:?}");
    }

    #[test]
    fn single_unit_has_no_competition() {
        let x = Matrix::from_rows(&[[0.2, 0.7, 1.0]]);
        let w = Matrix::from_rows(&[[0.5], [0.1], [0.3]]);
        let z = x.matmul(&w).unwrap();
        let d = hebbian_delta(&x, &z, &w, 0.5).unwrap();
        let zz = z.get(0, 0);
        for i in 0..3 {
            assert!((d.get(i, 0) - 0.5 * zz * x.get(0, i)).abs() < 1e-15);
        }
    }

    #[test]
    fn silent_activity_gives_no_update() {
        let x = Matrix::from_rows(&[[0.2, 0.7], [1.0, 0.0]]);
        let w = Matrix::from_rows(&[[0.5, 0.2], [0.1, 0.9]]);
        let d = hebbian_delta(&x, &Matrix::zeros(2, 2), &w, 0.3).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
        assert!(hebbian_delta(&x, &Matrix::zeros(3, 2), &w, 0.3).is_err());
    }

    #[test]
    fn wp_examples() {
        let pert = Perturbation {
            xi: Matrix::from_rows(&[[0.02, -0.01]]),
        };
        let same = TrialErrors { unperturbed: 0.7, perturbed: 0.7 };
        assert!(wp_delta(same, &pert, 0.01).as_slice().iter().all(|&v| v == 0.0));

        let better = TrialErrors { unperturbed: 1.0, perturbed: 0.9 };
        let d = wp_delta(better, &pert, 0.01);
        assert!((d.get(0, 0) - 0.2).abs() < 1e-12);
        assert!((d.get(0, 1) + 0.1).abs() < 1e-12);

        let worse = TrialErrors { unperturbed: 0.5, perturbed: 0.8 };
        let d = wp_delta(worse, &pert, 0.01);
        let ratio = d.get(0, 0) / pert.xi.get(0, 0);
        assert!(ratio < 0.0);
        assert!((d.get(0, 1) / pert.xi.get(0, 1) - ratio).abs() < 1e-12);
    }

    #[test]
    fn compose_extremes() {
        let h = Matrix::from_rows(&[[1.0, 2.0]]);
        let wp = Matrix::from_rows(&[[3.0, -4.0]]);
        let cfg = BioConfig { alpha: 0.0, ..BioConfig::default() };
        let only_wp = compose_classification_update(&h, &wp, &cfg).unwrap();
        let s = cfg.eta * cfg.beta_wp;
        assert_eq!(only_wp.as_slice(), &[s * 3.0, s * -4.0]);
        let cfg = BioConfig { beta_wp: 0.0, ..BioConfig::default() };
        let only_h = compose_classification_update(&h, &wp, &cfg).unwrap();
        assert_eq!(only_h.as_slice(), &[0.1, 0.2]);
        assert!(compose_classification_update(&h, &Matrix::zeros(2, 1), &cfg).is_err());
    }

    #[test]
    fn compose_table_hyperparameters() {
        // Unit inputs, default hyperparameters, scalar oracle of the mixed rule.
        let cfg = BioConfig::default();
        let x = Matrix::filled(1, 2, 1.0);
        let w = Matrix::from_rows(&[[0.05, 0.02, 0.07], [0.01, 0.03, 0.04]]);
        let z = x.matmul(&w).unwrap();
        let pert = Perturbation { xi: Matrix::from_rows(&[[0.1, -0.2, 0.05], [0.0, 0.3, -0.1]]) };
        let errors = TrialErrors { unperturbed: 1.2, perturbed: 1.1 };
        let hebb = hebbian_delta(&x, &z, &w, cfg.eta).unwrap();
        let got = compose_classification_update(&hebb, &wp_delta(errors, &pert, cfg.sigma2), &cfg)
            .unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let mut comp = 0.0;
                for k in 0..3 {
                    if k != j {
                        comp += z.get(0, k) * w.get(i, k);
                    }
                }
                let hebbian = cfg.eta * z.get(0, j) * (1.0 - comp);
                let wp = -(1.1 - 1.2) / cfg.sigma2 * pert.xi.get(i, j);
                let want = cfg.alpha * hebbian + cfg.eta * cfg.beta_wp * wp;
                assert!((got.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_examples() {
        let cfg = BioConfig { eta: 0.1, gamma: 0.1, ..BioConfig::default() };
        let at_target = Matrix::filled(4, 3, 1.0 / 3.0);
        assert!(bias_delta(&at_target, &cfg).iter().all(|v| v.abs() < 1e-18));
        let half = Matrix::filled(2, 3, 0.5);
        for d in bias_delta(&half, &cfg) {
            assert!((d + 0.0016666666666666666).abs() < 1e-12);
        }
        for d in bias_delta(&Matrix::zeros(5, 3), &cfg) {
            assert!((d - 0.0033333333333333335).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_converges_monotonically_under_frozen_activity() {
        // With activities z = base + b, repeated updates contract to the
        // fixed point mean(z_k) = 1/K without overshoot.
        let cfg = BioConfig { eta: 0.5, gamma: 0.8, ..BioConfig::default() };
        let base = Matrix::from_rows(&[[0.9, 0.1, 0.0], [0.7, 0.3, 0.2]]);
        let mut b = vec![0.0; 3];
        let mut prev_gap = f64::INFINITY;
        for _ in 0..200 {
            let mut z = base.clone();
            z.add_row_vector(&b).unwrap();
            let d = bias_delta(&z, &cfg);
            let gap: f64 = z.column_means().iter().map(|m| (m - 1.0 / 3.0).abs()).sum();
            assert!(gap <= prev_gap + 1e-15);
            prev_gap = gap;
            b.iter_mut().zip(&d).for_each(|(b, d)| *b += d);
        }
        assert!(prev_gap < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn hebbian_matches_oracle(
            (n, p, q) in (1usize..9, 1usize..9, 1usize..9),
            seed in any::<u64>(),
            eta in 1e-4f64..1.0,
        ) {
            let mut rng = SeededRng::new(seed);
            let x = Matrix::from_fn(n, p, |_, _| rng.uniform(0.0, 1.0));
            let w = Matrix::from_fn(p, q, |_, _| rng.uniform(0.0, 1.0));
            let z = x.matmul(&w).unwrap();
            let got = hebbian_delta(&x, &z, &w, eta).unwrap();
            prop_assert!(close(&got, &hebbian_oracle(&x, &z, &w, eta), 1e-12));
        }

        #[test]
        fn wp_is_odd_in_perturbation(
            xi in prop::collection::vec(-1.0f64..1.0, 6),
            e in 0.0f64..3.0,
            de in -1.0f64..1.0,
        ) {
            let pert = Perturbation { xi: Matrix::from_vec(2, 3, xi).unwrap() };
            let neg = Perturbation { xi: pert.xi.map(|v| -v) };
            let errors = TrialErrors { unperturbed: e, perturbed: e + de };
            let a = wp_delta(errors, &pert, 0.0157);
            let b = wp_delta(errors, &neg, 0.0157);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn wp_estimate_points_downhill() {
        // Frozen batch, α = γ = 0: averaged perturbation updates must agree in
        // sign with the negative finite-difference gradient of the batch error.
        let mut rng = SeededRng::new(5);
        let mut model = NetworkModel::init(Algorithm::Bio, 3, 2, 2, 5);
        model.w_class = Matrix::from_rows(&[[0.9, 0.1], [0.05, 0.6]]);
        let x = Matrix::from_fn(8, 3, |_, _| rng.uniform(0.0, 1.0));
        let labels = vec![0, 1, 0, 1, 1, 0, 1, 1];
        let fp = model.forward(&x).unwrap();
        let error = |wc: &Matrix| {
            cross_entropy(&softmax_rows(&model.class_logits(&fp.hidden, wc).unwrap()), &labels)
        };
        let sigma2 = 1e-4;
        let base = error(&model.w_class);
        let mut mean = Matrix::zeros(2, 2);
        let draws = 20_000;
        for _ in 0..draws {
            let pert = Perturbation::sample(2, 2, sigma2, &mut rng);
            let mut wp = model.w_class.clone();
            wp.add_scaled(&pert.xi, 1.0).unwrap();
            let errors = TrialErrors { unperturbed: base, perturbed: error(&wp) };
            mean.add_scaled(&wp_delta(errors, &pert, sigma2), 1.0 / draws as f64).unwrap();
        }
        let h = 1e-6;
        let mut agree = 0;
        for i in 0..2 {
            for j in 0..2 {
                let mut up = model.w_class.clone();
                up.set(i, j, up.get(i, j) + h);
                let mut down = model.w_class.clone();
                down.set(i, j, down.get(i, j) - h);
                let grad = (error(&up) - error(&down)) / (2.0 * h);
                if (mean.get(i, j) > 0.0) == (-grad > 0.0) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 / 4.0 >= 0.95, "agree {agree}/4, mean {mean:?}");
    }
}
