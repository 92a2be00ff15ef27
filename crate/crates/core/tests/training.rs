use ksae_core::ksae::{init_model, scheduled_k, train, LinearSchedule, TrainConfig};
use ksae_core::recovery::{random_orthonormal, synth_with_dictionary, SynthSpec};
use ksae_core::tensor::{Matrix, Rng};

/// Planted 5-sparse data in a complete orthonormal 64-dimensional basis.
fn orthonormal_data(seed: u64, samples: usize) -> Matrix {
    let mut rng = Rng::stream(seed, 7);
    let w = random_orthonormal(64, &mut rng);
    synth_with_dictionary(&mut rng, w, &SynthSpec::new(64, 64, samples, 5)).unwrap().x
}

fn orthonormal_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(64, 5);
    cfg.k_initial = 32;
    cfg.epochs = 30;
    cfg.learning_rate = LinearSchedule::constant(0.1);
    cfg.seed = seed;
    cfg
}

#[test]
fn loss_falls_below_one_percent_of_first_epoch() {
    let x = orthonormal_data(0, 2000);
    let cfg = orthonormal_config(0);
    let out = train(init_model(64, &cfg), &x, &cfg).unwrap();
    let first = out.history[0].mean_loss;
    let last = out.history.last().unwrap().mean_loss;
    assert!(last < 0.01 * first, "first {first}, last {last}");
}

#[test]
fn same_seed_same_bits_different_seed_different_model() {
    let mut rng = Rng::new(3);
    let x = Matrix::from_vec(300, 12, rng.gaussian_vec(3600, 1.0)).unwrap();
    let mut cfg = TrainConfig::new(20, 3);
    cfg.epochs = 4;
    cfg.seed = 11;
    let a = train(init_model(12, &cfg), &x, &cfg).unwrap();
    let b = train(init_model(12, &cfg), &x, &cfg).unwrap();
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model.w), bits(&b.model.w));
    assert_eq!(a.history, b.history);
    cfg.seed = 12;
    let c = train(init_model(12, &cfg), &x, &cfg).unwrap();
    assert_ne!(bits(&a.model.w), bits(&c.model.w));
}

#[test]
fn every_epoch_uses_exactly_the_scheduled_k() {
    let mut rng = Rng::new(4);
    let x = Matrix::from_vec(250, 10, rng.gaussian_vec(2500, 1.0)).unwrap();
    for schedule in [true, false] {
        let mut cfg = TrainConfig::new(30, 2);
        cfg.epochs = 9;
        cfg.k_initial = 20;
        cfg.k_schedule_enabled = schedule;
        cfg.batch_size = 64;
        let out = train(init_model(10, &cfg), &x, &cfg).unwrap();
        for r in &out.history {
            assert_eq!(r.k, scheduled_k(&cfg, r.epoch));
            // one support of exactly k units per sample, partial batch included
            assert_eq!(r.unit_usage.iter().sum::<u64>(), 250 * r.k as u64);
        }
        assert_eq!(out.history[0].k, if schedule { 20 } else { 2 });
        assert_eq!(out.history.last().unwrap().k, 2);
    }
}

#[test]
fn trained_encoder_agrees_with_iterative_recovery() {
    let x = orthonormal_data(1, 2000);
    let cfg = orthonormal_config(1);
    let out = train(init_model(64, &cfg), &x, &cfg).unwrap();
    let batch = x.select_rows(&(0..200).collect::<Vec<_>>());
    let report = ksae_core::recovery::ksae_vs_iti_diagnostic(&out.model, &batch, 5).unwrap();
    assert!(report.support_agreement >= 0.9, "{report:?}");
    assert!(report.decoder_identity_max_diff < 1e-10);
    assert!(report.encoder_identity_max_diff < 1e-10);
}
