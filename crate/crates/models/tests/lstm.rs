use nalgebra::DMatrix;
use neuroarm_models::lstm::{train_lstm, LstmConfig, LstmModel};
use neuroarm_models::nn::{gradient_check, Params};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Channel 0 is a noisy ramp; the class is the sign of its slope.
fn slope_set(n: usize, seed: u64) -> (Vec<DMatrix<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 24;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n {
        let label = rng.gen_range(0..2usize);
        let slope = rng.gen_range(0.03..0.1) * if label == 1 { 1.0 } else { -1.0 };
        let offset: f64 = rng.gen_range(-1.0..1.0);
        let w = DMatrix::from_fn(2, steps, |c, t| {
            let noise: f64 = rng.sample(StandardNormal);
            if c == 0 {
                offset + slope * t as f64 + 0.1 * noise
            } else {
                noise
            }
        });
        xs.push(w);
        ys.push(label);
    }
    (xs, ys)
}

#[test]
fn learns_slope_sign() {
    let (xs, ys) = slope_set(300, 1);
    let (tx, ty) = slope_set(100, 2);
    let mut cfg = LstmConfig::default();
    cfg.schedule.epochs = 15;
    let (model, curve) = train_lstm(&xs, &ys, 2, &cfg).unwrap();
    assert_eq!(curve.epoch_loss.len(), 15);
    assert!(curve.epoch_loss.last().unwrap() < &curve.epoch_loss[0]);
    let correct = tx
        .iter()
        .zip(&ty)
        .filter(|(w, &y)| {
            let p = model.predict(w).unwrap();
            p.imax() == y
        })
        .count();
    let acc = correct as f64 / tx.len() as f64;
    assert!(acc >= 0.95, "test accuracy {acc}");
}

#[test]
fn untrained_output_is_a_distribution() {
    let m = LstmModel::new(3, 64, 3, 0.2, 9);
    let w = DMatrix::from_fn(3, 10, |c, t| (c as f64 + 1.0) * (t as f64 * 0.3).sin());
    let p = m.predict(&w).unwrap();
    assert!((p.sum() - 1.0).abs() < 1e-12);
    assert!(p.iter().all(|&v| v > 0.0));
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = LstmModel::new(2, 64, 3, 0.0, 5);
    // Perturb the output layer so the readout is not near-symmetric.
    for i in 0..m.n_params() {
        let v = m.get(i);
        m.set(i, v * 1.5);
    }
    let xs: Vec<DMatrix<f64>> = (0..3).map(|_| DMatrix::from_fn(2, 5, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let refs: Vec<&DMatrix<f64>> = xs.iter().collect();
    let err = gradient_check(&m, &refs, &[0, 2, 1], 1e-5, 1e-6);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn training_is_seed_deterministic() {
    let (xs, ys) = slope_set(40, 3);
    let mut cfg = LstmConfig { hidden_size: 8, ..Default::default() };
    cfg.schedule.epochs = 2;
    let a = train_lstm(&xs, &ys, 2, &cfg).unwrap();
    let b = train_lstm(&xs, &ys, 2, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    cfg.seed = 1;
    assert_ne!(train_lstm(&xs, &ys, 2, &cfg).unwrap().0, a.0);
}

#[test]
fn rejects_bad_input() {
    let (xs, _) = slope_set(4, 3);
    assert!(train_lstm(&xs, &[0, 0, 0, 0], 2, &LstmConfig::default()).is_err());
    assert!(train_lstm(&xs, &[0, 1, 0], 2, &LstmConfig::default()).is_err());
    assert!(train_lstm(&xs, &[0, 1, 0, 5], 2, &LstmConfig::default()).is_err());
    let m = LstmModel::new(2, 4, 2, 0.0, 0);
    assert!(m.predict(&DMatrix::zeros(3, 5)).is_err());
}

#[test]
fn non_finite_input_aborts_with_diagnostics() {
    let (mut xs, ys) = slope_set(16, 3);
    xs[0][(0, 0)] = f64::NAN;
    let mut cfg = LstmConfig { hidden_size: 4, ..Default::default() };
    cfg.schedule.epochs = 1;
    match train_lstm(&xs, &ys, 2, &cfg) {
        Err(neuroarm_models::ModelError::NonFiniteLoss { epoch: 0, .. }) => {}
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn outputs_stay_on_the_simplex(seed in 0u64..1000, steps in 1usize..12, scale in 0.01f64..100.0) {
        let m = LstmModel::new(3, 16, 3, 0.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(3, steps, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let p = m.predict(&w).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }
}
