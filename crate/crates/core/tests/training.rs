use hamnet::baselines::{train_bp, train_chorowski, train_gradient, BpTrainerConfig};
use hamnet::bio::{train_bio, train_bio_observed, BioConfig};
use hamnet::dataset::LabeledDataset;
use hamnet::metrics::{capacity_report, count_nonsilent, estimate_mi, train_encoder, EncoderConfig};
use hamnet::persist::{decode_model, encode_model};
use hamnet::rng::SeededRng;
use hamnet::train::StepSnapshot;
use hamnet::{Algorithm, Error, Matrix};

/// Three noisy stripe patterns on a 6×6 grid.
fn stripes(per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for t in 0..3 * per_class {
        let class = t % 3;
        let row: Vec<f64> = (0..36)
            .map(|p| {
                let on = (p / 6) % 3 == class;
                let base = if on { 0.8 } else { 0.0 };
                (base + rng.uniform(0.0, 0.2)).min(1.0)
            })
            .collect();
        rows.push(row);
        labels.push(class);
    }
    LabeledDataset::new(Matrix::from_rows(&rows), labels, 3).unwrap()
}

fn bits(m: &Matrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn bio_training_is_deterministic_and_nonnegative() {
    let data = stripes(40, 1);
    let cfg = BioConfig { epochs: 5, batch_size: 12, seed: 4, ..BioConfig::default() };
    let a = train_bio(&data, 6, &cfg).unwrap();
    let b = train_bio(&data, 6, &cfg).unwrap();
    assert_eq!(bits(&a.w_hidden), bits(&b.w_hidden));
    assert_eq!(bits(&a.w_class), bits(&b.w_class));
    assert!(a.w_hidden.as_slice().iter().all(|&w| w >= 0.0));
    assert!(a.w_class.as_slice().iter().all(|&w| w >= 0.0));
    assert!(a.class_bias.iter().all(|&b| b >= 0.0));
    assert!(a.hidden_bias.is_none());
    assert_eq!(a.algorithm, Algorithm::Bio);
    assert_eq!(a.hyperparameter("beta"), Some("446.25"));

    let other = train_bio(&data, 6, &BioConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(bits(&a.w_hidden), bits(&other.w_hidden));
}

#[test]
fn bio_observer_sees_every_step() {
    let data = stripes(20, 2);
    let cfg = BioConfig { epochs: 3, batch_size: 6, ..BioConfig::default() };
    let mut steps = Vec::new();
    let mut record = |s: &StepSnapshot<'_>| steps.push((s.step, s.epoch));
    train_bio_observed(&data, 4, &cfg, &mut record).unwrap();
    assert_eq!(steps.len(), 3 * 10);
    assert!(steps.iter().enumerate().all(|(i, &(s, e))| s == i && e == i / 10));
}

#[test]
fn runaway_learning_rate_is_reported() {
    let data = stripes(10, 3);
    let cfg = BioConfig { eta: 1e308, epochs: 2, batch_size: 6, ..BioConfig::default() };
    assert!(matches!(train_bio(&data, 4, &cfg), Err(Error::NonFiniteUpdate(_))));
    let cfg = BpTrainerConfig { learning_rate: 1e308, epochs: 3, batch_size: 6, ..BpTrainerConfig::bp() };
    assert!(matches!(train_bp(&data, 4, &cfg), Err(Error::NonFiniteUpdate(_))));
}

#[test]
fn baselines_learn_separable_stripes() {
    let data = stripes(60, 4);
    let test = stripes(30, 40);
    let cfg = BpTrainerConfig { epochs: 30, batch_size: 12, learning_rate: 0.5, ..BpTrainerConfig::bp() };
    let bp = train_bp(&data, 6, &cfg).unwrap();
    assert!(bp.accuracy(&test.inputs, &test.labels).unwrap() > 0.95);
    assert_eq!(count_nonsilent(&bp.w_hidden, 0.0), 36 * 6);
    assert!(bp.w_hidden.as_slice().iter().all(|&w| w != 0.0));

    let cfg = BpTrainerConfig { epochs: 30, batch_size: 12, learning_rate: 0.5, ..BpTrainerConfig::chorowski() };
    let ch = train_chorowski(&data, 6, &cfg).unwrap();
    assert!(ch.accuracy(&test.inputs, &test.labels).unwrap() > 0.95);
    assert!(ch.w_hidden.as_slice().iter().all(|&w| w >= 0.0));
    assert!(count_nonsilent(&ch.w_hidden, 0.0) < 36 * 6);
}

#[test]
fn unpenalized_projection_without_clipping_matches_bp() {
    // Tiny steps from a positive start never reach the boundary, so the
    // projected run must follow plain gradient descent bit for bit.
    let data = stripes(20, 5);
    let bp_cfg = BpTrainerConfig { epochs: 2, batch_size: 6, learning_rate: 1e-4, seed: 9, ..BpTrainerConfig::bp() };
    let ch_cfg = BpTrainerConfig { variant: Algorithm::Chorowski, lambda_sparsity: 0.0, ..bp_cfg.clone() };
    let bp = train_gradient(&data, 5, &bp_cfg, &mut ()).unwrap();
    let ch = train_gradient(&data, 5, &ch_cfg, &mut ()).unwrap();
    assert!(ch.w_hidden.as_slice().iter().all(|&w| w > 0.0));
    assert_eq!(bits(&bp.w_hidden), bits(&ch.w_hidden));
    assert_eq!(bits(&bp.w_class), bits(&ch.w_class));
    assert_eq!(bp.class_bias, ch.class_bias);
    assert_eq!(bp.hidden_bias, ch.hidden_bias);
}

#[test]
fn wrong_variant_is_a_config_error() {
    let data = stripes(10, 6);
    assert!(matches!(
        train_bp(&data, 4, &BpTrainerConfig::chorowski()),
        Err(Error::Config(_))
    ));
    let tiny_batch = BpTrainerConfig { batch_size: 2, ..BpTrainerConfig::bp() };
    assert!(matches!(train_bp(&data, 4, &tiny_batch), Err(Error::Config(_))));
    assert!(train_bio(&data, 0, &BioConfig::default()).is_err());
}

#[test]
fn trained_models_survive_persistence() {
    let data = stripes(20, 7);
    let cfg = BioConfig { epochs: 2, batch_size: 6, ..BioConfig::default() };
    let bio = train_bio(&data, 4, &cfg).unwrap();
    let back = decode_model(&encode_model(&bio)).unwrap();
    assert_eq!(back, bio);
    assert_eq!(
        back.predict(&data.inputs).unwrap(),
        bio.predict(&data.inputs).unwrap()
    );
}

#[test]
fn capacity_pipeline_on_stripes() {
    let data = stripes(60, 8);
    let test = stripes(20, 80);
    let cfg = BpTrainerConfig { epochs: 20, batch_size: 12, learning_rate: 0.5, ..BpTrainerConfig::bp() };
    let model = train_bp(&data, 6, &cfg).unwrap();
    let enc_cfg = EncoderConfig { epochs: 20, batch_size: 12, learning_rate: 0.05, seed: 3 };
    let enc = train_encoder(&model, &data, &enc_cfg).unwrap();
    let frozen = model.clone();
    let report = capacity_report(&model, &enc, &test, 12, 3, 0.0).unwrap();
    assert_eq!(model, frozen);
    assert_eq!(report.nonsilent, 36 * 6);
    assert!(report.mi.standard.bits > 0.0 && report.mi.marginal.bits > 0.0);
    assert!((report.c_s - report.mi.standard.bits / 216.0).abs() < 1e-15);
    assert!(report.mi.decoder_accuracy > 0.9);

    // Shuffling the evaluation set leaves the estimate unchanged.
    let mut order: Vec<usize> = (0..test.len()).collect();
    SeededRng::new(1).shuffle(&mut order);
    let (x, y) = test.gather(&order);
    let shuffled = LabeledDataset::new(x, y, 3).unwrap();
    let again = estimate_mi(&enc, &model, &shuffled, 12, 3).unwrap();
    assert_eq!(again.standard.bits.to_bits(), report.mi.standard.bits.to_bits());
    assert_eq!(again.marginal.bits.to_bits(), report.mi.marginal.bits.to_bits());
}

#[test]
fn encoder_on_constant_input_learns_nothing_about_x() {
    let data = stripes(30, 9);
    let model = train_bp(
        &data,
        4,
        &BpTrainerConfig { epochs: 2, batch_size: 6, ..BpTrainerConfig::bp() },
    )
    .unwrap();
    let constant = LabeledDataset::new(
        Matrix::filled(data.len(), 36, 0.5),
        data.labels.clone(),
        3,
    )
    .unwrap();
    let enc = train_encoder(&model, &constant, &EncoderConfig { epochs: 3, batch_size: 6, ..Default::default() }).unwrap();
    let r = estimate_mi(&enc, &model, &constant, 12, 1).unwrap();
    assert!(r.marginal.bits.abs() < 1e-9);
    assert!(r.decoder_accuracy <= 1.0 / 3.0 + 0.1);
}
