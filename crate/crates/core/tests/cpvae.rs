use pvae_policy::cpvae::{ips_weights, train_cpvae, CpvaeConfig, CpvaeModel, PredictMode};
use pvae_policy::harness::{simulate, LinearEnv, LoggedDataset, LoggedRow, Missingness};
use pvae_policy::pvae::{TrainConfig, VaeDims};
use pvae_policy::{AttributeKind, FeatureSchema, PartialFeature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims() -> VaeDims {
    VaeDims {
        embed_dim: 5,
        feature_dim: 10,
        latent_dim: 4,
        h_hidden: vec![],
        f_hidden: vec![20],
        decoder_hidden: vec![20],
    }
}

fn linear_env() -> LinearEnv {
    LinearEnv::new(vec![0.0, 0.5], vec![vec![1.0, -0.5, 0.3], vec![-0.8, 0.4, 0.6]], 0.1).unwrap()
}

fn linear_data(n: usize, seed: u64) -> LoggedDataset {
    simulate(&linear_env(), n, &Missingness::none(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn config(epochs: usize, ips: bool) -> CpvaeConfig {
    CpvaeConfig {
        dims: dims(),
        train: TrainConfig {
            epochs,
            lr: 3e-3,
            seed: 1,
            ..Default::default()
        },
        ips,
        ..Default::default()
    }
}

#[test]
fn uniform_propensities_scale_the_loss_by_the_action_count() {
    let data = linear_data(300, 1);
    let props = vec![vec![0.5, 0.5]; data.len()];
    let w = ips_weights(&data, &props, 100.0).unwrap();
    assert!(w.iter().all(|&v| v == 2.0));
    let model = CpvaeModel::new(&data.schema, 2, 0.0, 1.0, dims(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for r in data.rows.iter().take(20) {
        let noise = model.vae().draw_noise(1, &mut rng);
        let plain = model.weighted_elbo(&r.feature, r.action, r.reward, true, 1.0, &noise, None).unwrap();
        let weighted = model.weighted_elbo(&r.feature, r.action, r.reward, true, 2.0, &noise, None).unwrap();
        assert!((weighted - 2.0 * plain).abs() < 1e-12 * plain.abs().max(1.0));
    }
}

#[test]
fn weights_are_capped_and_checked() {
    let data = linear_data(4, 2);
    let props: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| {
            let mut p = vec![0.5, 0.5];
            p[r.action] = 0.001;
            p[1 - r.action] = 0.999;
            p
        })
        .collect();
    assert!(ips_weights(&data, &props, 50.0).unwrap().iter().all(|&w| w == 50.0));
    let mut zero = props.clone();
    zero[0][data.rows[0].action] = 0.0;
    assert!(ips_weights(&data, &zero, 50.0).is_err());
    assert!(ips_weights(&data, &props[..2], 50.0).is_err());
}

#[test]
fn training_improves_and_repeats_exactly() {
    let data = linear_data(1000, 3);
    let props = data.truth.as_ref().unwrap().propensities.clone();
    let a = train_cpvae(&data, &props, &config(8, true)).unwrap();
    let b = train_cpvae(&data, &props, &config(8, true)).unwrap();
    assert!(a.loss_trace.last().unwrap() < a.loss_trace.first().unwrap());
    assert_eq!(a.model, b.model);
}

#[test]
fn constant_reward_is_predicted_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let schema = FeatureSchema::new(vec![AttributeKind::Continuous { mean: 0.0, std: 1.0 }; 2]).unwrap();
    let rows = (0..2000)
        .map(|_| LoggedRow {
            feature: PartialFeature::complete(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]),
            action: rng.random_range(0..3),
            reward: 2.5,
        })
        .collect();
    let data = LoggedDataset::new(schema, 3, rows, None).unwrap();
    let props = vec![vec![1.0 / 3.0; 3]; data.len()];
    let model = train_cpvae(&data, &props, &config(5, true)).unwrap().model;
    for x in [[0.0, 0.0], [1.5, -1.5], [-2.0, 2.0]] {
        for p in model.predict_all(&PartialFeature::complete(x.to_vec()), PredictMode::Point, 0).unwrap() {
            // the reward spread is zero, so the head works in unit "std" units
            assert!((p.mean - 2.5).abs() < 0.1, "{}", p.mean);
        }
    }
}

#[test]
fn linear_rewards_are_learned() {
    let data = linear_data(5000, 5);
    let props = data.truth.as_ref().unwrap().propensities.clone();
    let cfg = CpvaeConfig {
        train: TrainConfig {
            epochs: 40,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = train_cpvae(&data, &props, &cfg).unwrap().model;
    let (_, sd) = data.reward_stats();
    let test = linear_data(500, 6);
    let truth = test.truth.as_ref().unwrap();
    let mut err = 0.0;
    for (i, r) in test.rows.iter().enumerate() {
        let p = model.predict_all(&r.feature, PredictMode::Point, 0).unwrap();
        for a in 0..2 {
            err += (p[a].mean - truth.reward_means[i][a]).abs();
        }
    }
    let mae = err / 1000.0 / sd;
    assert!(mae < 0.15, "mean absolute error {mae} reward std units");
}

#[test]
fn prediction_and_sampling_contracts() {
    let data = linear_data(200, 7);
    let model = CpvaeModel::new(&data.schema, 2, 0.0, 1.0, dims(), 7).unwrap();
    let xt = PartialFeature::new(vec![0.3, 0.0, -1.0], vec![false, true, false]).unwrap();
    let p = model.predict_reward(&xt, 1, PredictMode::Point, 0).unwrap();
    assert_eq!(p, model.predict_reward(&xt, 1, PredictMode::Point, 99).unwrap());
    let mc = model.predict_all(&xt, PredictMode::Mc(4), 11).unwrap();
    assert_eq!(mc, model.predict_all(&xt, PredictMode::Mc(4), 11).unwrap());
    assert!(model.predict_all(&xt, PredictMode::Mc(0), 0).is_err());
    assert!(model.predict_reward(&xt, 2, PredictMode::Point, 0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for x in model.sample_posterior_features(&xt, 1, 30, &mut rng).unwrap() {
        assert_eq!(x.len(), 3);
        assert_eq!((x[0], x[2]), (0.3, -1.0));
    }
    let once = |s| model.sample_posterior_features(&xt, 0, 1, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
    assert_eq!(once(3), once(3));
    let imp = model.impute(&xt, 0).unwrap();
    assert_eq!((imp[0], imp[2]), (0.3, -1.0));
}

#[test]
fn invalid_configuration_is_rejected() {
    let data = linear_data(50, 8);
    let props = data.truth.as_ref().unwrap().propensities.clone();
    let mut cfg = config(1, true);
    cfg.reward_dropout = 1.0;
    assert!(train_cpvae(&data, &props, &cfg).is_err());
    let unweighted = train_cpvae(&data, &[], &config(1, false));
    assert!(unweighted.is_ok());
}
