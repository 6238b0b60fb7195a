use pvae_policy::harness::{
    estimate_ate, evaluate_policy, evaluate_policy_par, gen_digit_bandit, gen_glucose_bandit, gen_ihdp_b,
    inject_missingness, BanditEnv, Context, DigitConfig, EvalConfig, GlucoseConfig, IhdpConfig, LoggedDataset,
    Missingness,
};
use pvae_policy::PartialFeature;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn missing_fraction(data: &LoggedDataset) -> f64 {
    let cells = data.rows.len() * data.schema.len();
    let gaps: usize = data.rows.iter().map(|r| r.feature.mask().iter().filter(|&&m| m).count()).sum();
    gaps as f64 / cells as f64
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn digit_rewards_and_logging_follow_the_label() {
    let (_, data) = gen_digit_bandit(&DigitConfig {
        n: 8000,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let truth = data.truth.as_ref().unwrap();
    let mut favoured = 0usize;
    for (row, means) in data.rows.iter().zip(&truth.reward_means) {
        let y = argmax(means);
        for (a, m) in means.iter().enumerate() {
            assert!((m + (y as f64 - a as f64).abs()).abs() < 1e-12);
        }
        if y.is_multiple_of(2) == (row.action >= 5) {
            favoured += 1;
        }
    }
    let share = favoured as f64 / data.len() as f64;
    assert!((share - 0.75).abs() < 0.02, "favoured share {share}");
    assert!((missing_fraction(&data) - 0.5).abs() < 0.01);
}

#[test]
fn ihdp_effect_and_missing_rate() {
    let (_, data) = gen_ihdp_b(&IhdpConfig {
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let truth = data.truth.as_ref().unwrap();
    let pot = truth.potential_rewards.as_ref().unwrap();
    let tau = pot.iter().map(|r| r[1] - r[0]).sum::<f64>() / data.len() as f64;
    assert!((tau - 4.0).abs() < 1e-9);
    assert!((missing_fraction(&data) - 0.3).abs() < 0.02);
    for (row, r) in data.rows.iter().zip(pot) {
        assert_eq!(row.reward, r[row.action]);
    }
    let counts = data.action_counts();
    assert!(counts.iter().all(|&c| c > 50), "{counts:?}");
}

#[test]
fn glucose_logging_covers_every_dose() {
    let (_, data) = gen_glucose_bandit(&GlucoseConfig {
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let truth = data.truth.as_ref().unwrap();
    for p in &truth.propensities {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&q| q >= 0.05 - 1e-12));
    }
    for (a, &c) in data.action_counts().iter().enumerate() {
        assert!(c as f64 / data.len() as f64 >= 0.03, "dose {a}: {c}");
    }
    assert!(data.rows.iter().all(|r| r.reward <= 1.0));
}

#[test]
fn mar_erasure_tracks_the_anchor() {
    let (_, data) = gen_glucose_bandit(&GlucoseConfig {
        n: 3000,
        erase_rate: 0.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let mech = Missingness::Mar {
        rate: 0.3,
        anchor: Some(0),
        slope: 2.0,
    };
    let masked = inject_missingness(&data, &mech, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let anchor: Vec<f64> = masked.rows.iter().map(|r| r.feature.values()[0]).collect();
    let gaps: Vec<f64> = masked
        .rows
        .iter()
        .map(|r| r.feature.mask().iter().filter(|&&m| m).count() as f64)
        .collect();
    assert!(masked.rows.iter().all(|r| !r.feature.mask()[0]));
    let rho = pearson(&ranks(&anchor), &ranks(&gaps));
    assert!(rho > 0.5, "rank correlation {rho}");

    let same = inject_missingness(&data, &Missingness::none(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(same, data);
}

#[test]
fn knowing_the_rewards_beats_guessing() {
    let (env, data) = gen_glucose_bandit(&GlucoseConfig {
        n: 100,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let cfg = EvalConfig {
        n_test: 400,
        missing: Missingness::none(),
        tail_threshold: -1e9,
        seed: 6,
    };
    let oracle = |_: usize, xt: &PartialFeature| {
        let ctx = Context {
            x: xt.values().to_vec(),
            hidden: vec![],
        };
        Ok(argmax(&env.reward_means(&ctx)))
    };
    let best = evaluate_policy(&env, &data.schema, &cfg, oracle).unwrap();
    assert_eq!(best.tail_count, 0);
    for a in 0..env.num_actions() {
        let fixed = evaluate_policy(&env, &data.schema, &cfg, |_, _| Ok(a)).unwrap();
        assert!(best.avg_expected_reward >= fixed.avg_expected_reward);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let uniform = evaluate_policy(&env, &data.schema, &cfg, |_, _| {
        Ok(rand::Rng::random_range(&mut rng, 0..10))
    })
    .unwrap();
    assert!(best.avg_reward > uniform.avg_reward + 0.1);
    let everything = EvalConfig {
        tail_threshold: 2.0,
        ..cfg
    };
    let all = evaluate_policy(&env, &data.schema, &everything, |_, _| Ok(0)).unwrap();
    assert_eq!(all.tail_count, all.n_test);
    assert!(evaluate_policy(&env, &data.schema, &everything, |_, _| Ok(10)).is_err());
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let (env, data) = gen_digit_bandit(&DigitConfig {
        n: 50,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let cfg = EvalConfig {
        n_test: 101,
        seed: 9,
        ..Default::default()
    };
    let rule = |i: usize, xt: &PartialFeature| Ok((i + xt.mask().iter().filter(|&&m| m).count()) % 10);
    let seq = evaluate_policy(&env, &data.schema, &cfg, rule).unwrap();
    for threads in [1, 3, 8] {
        assert_eq!(evaluate_policy_par(&env, &data.schema, &cfg, threads, rule).unwrap(), seq);
    }
}

#[test]
fn ate_with_true_surfaces() {
    let (_, data) = gen_ihdp_b(&IhdpConfig {
        seed: 10,
        ..Default::default()
    })
    .unwrap();
    let truth = data.truth.clone().unwrap();
    let pot = truth.potential_rewards.clone().unwrap();
    let exact = estimate_ate(&data, |i, _| Ok(pot[i].clone())).unwrap();
    assert!(exact.delta < 1e-12);
    // expected outcomes differ from realized ones by averaged unit noise
    let means = estimate_ate(&data, |i, _| Ok(truth.reward_means[i].clone())).unwrap();
    assert!(means.delta < 0.2, "{}", means.delta);
    assert!(estimate_ate(&data, |_, _| Ok(vec![0.0])).is_err());
}
