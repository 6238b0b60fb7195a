//! Logging-policy fits and similarity-weighted reward estimates against
//! environments whose truth is known.

use pvae_policy::estimators::{
    ips_weight_identity_check, ExactMatchSimilarity, SpvaeEstimator, SpvaeOptions,
};
use pvae_policy::harness::{gen_digit_bandit, simulate, DigitConfig, LoggedDataset, Missingness, TableEnv};
use pvae_policy::propensity::{fit_propensity, PropensityConfig};
use pvae_policy::pvae::VaeDims;
use pvae_policy::PvaeModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Four binary attributes, three actions, reward means built from the bits.
fn table_env() -> TableEnv {
    let theta = (0..16)
        .map(|s| {
            let b: Vec<f64> = (0..4).map(|j| ((s >> j) & 1) as f64).collect();
            vec![
                (b[0] + b[1]) / 3.0,
                (b[2] + b[3]) / 3.0 + 0.1,
                0.2 + 0.15 * (b[0] + b[3]),
            ]
        })
        .collect();
    TableEnv::new(vec![2; 4], theta, Vec::new()).unwrap()
}

fn sample(env: &TableEnv, n: usize, seed: u64) -> LoggedDataset {
    simulate(env, n, &Missingness::none(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn exact_estimator(data: &LoggedDataset) -> SpvaeEstimator<ExactMatchSimilarity> {
    let props = data.truth.as_ref().unwrap().propensities.clone();
    SpvaeEstimator::new(data, ExactMatchSimilarity::new(&data.features()), props, SpvaeOptions::default()).unwrap()
}

#[test]
fn exact_match_ips_recovers_the_reward_table() {
    let env = table_env();
    let data = sample(&env, 20_000, 1);
    let est = exact_estimator(&data);
    for s in 0..16 {
        let x = env.values_of(s);
        for (a, t) in est.theta_all(&x).unwrap().iter().enumerate() {
            assert!((t.value - env.theta[s][a]).abs() < 0.1, "state {s} action {a}: {}", t.value);
        }
    }
}

#[test]
fn matched_and_ips_estimates_agree() {
    let env = table_env();
    let data = sample(&env, 20_000, 2);
    let est = exact_estimator(&data);
    for s in 0..16 {
        let x = env.values_of(s);
        let ips = est.theta_all(&x).unwrap();
        let matched = est.theta_matched_all(&x).unwrap();
        for a in 0..3 {
            let m = matched[a].expect("every action is logged");
            assert!((m - ips[a].value).abs() < 0.1);
            assert!((m - env.theta[s][a]).abs() < 0.1);
        }
    }
}

#[test]
fn weight_identity_under_uniform_logging() {
    let env = table_env();
    let x = env.values_of(9);
    for a in 0..3 {
        let mean = ips_weight_identity_check(
            |trial| Ok(sample(&env, 500, 100 + trial as u64)),
            |d| Ok(ExactMatchSimilarity::new(&d.features())),
            &x,
            a,
            200,
        )
        .unwrap();
        assert!((mean - 1.0).abs() < 0.05, "action {a}: {mean}");
    }
}

#[test]
fn weight_identity_under_parity_logging() {
    // digit logging: 1/20 or 3/20 depending on the parity of the label
    let x = {
        let (_, d) = gen_digit_bandit(&DigitConfig {
            n: 1,
            erase_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        d.truth.unwrap().complete[0].clone()
    };
    let similarity = |d: &LoggedDataset| -> pvae_policy::Result<ExactMatchSimilarity> {
        // fully erased copies match every query, so the weights are uniform
        Ok(ExactMatchSimilarity::new(
            &d.features()
                .iter()
                .map(|f| pvae_policy::PartialFeature::all_missing(f.len()))
                .collect::<Vec<_>>(),
        ))
    };
    for a in [0, 7] {
        let mean = ips_weight_identity_check(
            |trial| {
                gen_digit_bandit(&DigitConfig {
                    n: 2000,
                    erase_rate: 0.0,
                    seed: 500 + trial as u64,
                    ..Default::default()
                })
                .map(|(_, d)| d)
            },
            similarity,
            &x,
            a,
            200,
        )
        .unwrap();
        assert!((mean - 1.0).abs() < 0.05, "action {a}: {mean}");
    }
}

#[test]
fn uniform_logging_gives_flat_propensities() {
    let theta = vec![vec![0.5; 4]; 16];
    let env = TableEnv::new(vec![2; 4], theta, Vec::new()).unwrap();
    let data = sample(&env, 5000, 3);
    let pvae = PvaeModel::new(data.schema.clone(), VaeDims::default(), 3).unwrap();
    let cfg = PropensityConfig {
        imputations: 1,
        ..Default::default()
    };
    let model = fit_propensity(&data, &pvae, &cfg).unwrap();
    for s in 0..16 {
        let p = model.probabilities_complete(&env.values_of(s));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for q in p {
            assert!((q - 0.25).abs() < 0.05, "state {s}: {q}");
        }
    }
}

#[test]
fn parity_logging_is_calibrated() {
    let (_, data) = gen_digit_bandit(&DigitConfig {
        n: 5000,
        erase_rate: 0.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let pvae = PvaeModel::new(data.schema.clone(), VaeDims::default(), 4).unwrap();
    let model = fit_propensity(&data, &pvae, &PropensityConfig { seed: 4, ..Default::default() }).unwrap();
    let est = model.estimate_all(&pvae, &data).unwrap();
    let truth = &data.truth.as_ref().unwrap().propensities;
    let mae = est
        .iter()
        .zip(truth)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()))
        .sum::<f64>()
        / (data.len() * 10) as f64;
    assert!(mae < 0.03, "mean absolute calibration error {mae}");
}

#[test]
fn complete_rows_make_propensities_deterministic() {
    let env = table_env();
    let data = sample(&env, 600, 5);
    let pvae = PvaeModel::new(data.schema.clone(), VaeDims::default(), 5).unwrap();
    let a = fit_propensity(&data, &pvae, &PropensityConfig { seed: 1, ..Default::default() }).unwrap();
    let b = fit_propensity(&data, &pvae, &PropensityConfig { seed: 2, ..Default::default() }).unwrap();
    // no cell is missing, so the imputation seed cannot matter
    assert_eq!(a, b);
    let xt = &data.rows[0].feature;
    assert_eq!(a.estimate(&pvae, xt).unwrap(), a.estimate(&pvae, xt).unwrap());
}

#[test]
fn missing_action_cannot_be_fitted() {
    let theta = vec![vec![0.5; 2]; 16];
    let logging = vec![vec![1.0, 0.0]; 16];
    let env = TableEnv::new(vec![2; 4], theta, logging).unwrap();
    let data = sample(&env, 100, 6);
    let pvae = PvaeModel::new(data.schema.clone(), VaeDims::default(), 6).unwrap();
    let err = fit_propensity(&data, &pvae, &PropensityConfig::default()).unwrap_err();
    assert!(err.to_string().contains("action 1"));
}
