//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Runs as a plain binary (`harness = false`) so that the report is always
//! visible in the test output.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pvae_policy::cpvae::{train_cpvae, CpvaeConfig, CpvaeModel, PredictMode};
use pvae_policy::estimators::{ips_weight_identity_check, ExactMatchSimilarity, PvaeSimilarity, SpvaeEstimator, SpvaeOptions};
use pvae_policy::harness::{
    estimate_ate, evaluate_policy, gen_digit_bandit, gen_glucose_bandit, gen_ihdp_b, glucose_reward, simulate,
    DigitConfig, EvalConfig, GlucoseConfig, IhdpConfig, Missingness, TableEnv,
};
use pvae_policy::nn::gradcheck::check_gradient;
use pvae_policy::nn::{Activation, DenseNet, Parameterized};
use pvae_policy::propensity::{fit_propensity, PropensityConfig};
use pvae_policy::pvae::{train_pvae, PartialVae, PvaeModel, TrainConfig, VaeDims, VaeParams};
use pvae_policy::strategies::{
    conservative_candidates, conservative_set, recommend, recommend_mer, risk_for_dims, CpvaeOracle, RewardOracle,
    SpvaeOracle, StrategyOptions, StrategySpec,
};
use pvae_policy::{AttributeKind, FeatureSchema, PartialFeature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pvae-policy"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = bin()
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

// ------------------------------------------------------------ criterion 1

fn example1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let stdout = run_cli(dir.path(), &["limits", "--example1", "--out", "limits.json"])?;
    let secs = start.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(dir.path().join("limits.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let get = |k: &str| v[k].as_f64().unwrap_or(f64::NAN);
    let (h_a, i, h_cond, heur) = (get("h_a"), get("i_x_xt"), get("h_cond_direct"), get("heuristic_accuracy"));
    let agree = (get("h_cond_direct") - get("h_cond_decomposition")).abs();
    let ok = (0.8955..=0.8965).contains(&h_a)
        && (i - 2.0).abs() <= 1e-9
        && (0.569..=0.571).contains(&h_cond)
        && (0.672..=0.674).contains(&heur)
        && agree <= 1e-9
        && secs < 1.0
        && stdout.starts_with("H_a=");
    check(
        ok,
        format!(
            "H_a={h_a:.4} I={i:.9} H_cond={h_cond:.4} heuristic={heur:.4} |direct-decomp|={agree:.1e} ({secs:.2}s)"
        ),
    )
}

// ------------------------------------------------------------ criterion 2

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn mixed_schema(rng: &mut ChaCha8Rng, d: usize) -> FeatureSchema {
    let attrs = (0..d)
        .map(|j| {
            if j % 3 == 2 {
                AttributeKind::Categorical { cardinality: 2 + j % 4 }
            } else {
                AttributeKind::Continuous {
                    mean: rng.random_range(-1.0..1.0),
                    std: rng.random_range(0.5..2.0),
                }
            }
        })
        .collect();
    FeatureSchema::new(attrs).expect("valid schema")
}

fn random_partial(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> (PartialFeature, PartialFeature) {
    let values: Vec<f64> = schema
        .attributes()
        .iter()
        .map(|a| match a {
            AttributeKind::Continuous { mean, std } => mean + std * rng.random_range(-2.0..2.0),
            AttributeKind::Categorical { cardinality } => rng.random_range(0..*cardinality) as f64,
        })
        .collect();
    let mut mask: Vec<bool> = (0..values.len()).map(|_| rng.random::<f64>() < 0.3).collect();
    mask[0] = false;
    let target = PartialFeature::new(values.clone(), mask.clone()).expect("valid");
    let enc_mask: Vec<bool> = mask.iter().map(|&m| m || rng.random::<f64>() < 0.3).collect();
    (PartialFeature::new(values, enc_mask).expect("valid"), target)
}

fn small_dims(seed: u64) -> VaeDims {
    VaeDims {
        embed_dim: 3 + seed as usize % 3,
        feature_dim: 4,
        latent_dim: 2 + seed as usize % 2,
        h_hidden: if seed.is_multiple_of(2) { vec![] } else { vec![5] },
        f_hidden: vec![6],
        decoder_hidden: vec![5, 4],
    }
}

fn jitter(p: &mut VaeParams, rng: &mut ChaCha8Rng) {
    let mut flat = p.to_flat();
    for v in &mut flat {
        *v += rng.random_range(-0.1..0.1);
    }
    p.read_params(&flat);
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = 2 + seed as usize % 4;
        let hidden: Vec<usize> = (0..1 + seed as usize % 3).map(|_| rng.random_range(2..7)).collect();
        let output = 1 + seed as usize % 3;
        let mut net = DenseNet::mlp(input, &hidden, output, Activation::Identity, &mut rng);
        let mut flat = net.to_flat();
        for v in &mut flat {
            *v += rng.random_range(-0.1..0.1);
        }
        net.read_params(&flat);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x).map_err(|e| e.to_string())?;
        let (g, _) = net.backward(&cache, &c).map_err(|e| e.to_string())?;
        let res = check_gradient(&net, &g.to_flat(), STEP, FLOOR, |n| {
            n.predict(&x).expect("forward").iter().zip(&c).map(|(o, w)| o * w).sum()
        });
        worst[0] = worst[0].max(res.max_rel_error);

        let schema = mixed_schema(&mut rng, 3 + seed as usize % 4);
        let mut vae = PartialVae::new(schema.clone(), small_dims(seed), 0, seed).map_err(|e| e.to_string())?;
        jitter(vae.params_mut(), &mut rng);
        let (enc, target) = random_partial(&schema, &mut rng);
        let noise = vae.draw_noise(1 + seed as usize % 2, &mut rng);
        let mut grads = vae.params().zeros_like();
        vae.elbo_with_noise(&enc, &target, &[], &noise, Some((&mut grads, 1.0)))
            .map_err(|e| e.to_string())?;
        let res = check_gradient(vae.params(), &grads.to_flat(), STEP, FLOOR, |p| {
            let mut v = vae.clone();
            *v.params_mut() = p.clone();
            v.elbo_with_noise(&enc, &target, &[], &noise, None).expect("elbo").elbo()
        });
        worst[1] = worst[1].max(res.max_rel_error);

        let k = 2 + seed as usize % 3;
        let mut model = CpvaeModel::new(&schema, k, 0.4, 1.7, small_dims(seed), seed).map_err(|e| e.to_string())?;
        jitter(model.params_mut(), &mut rng);
        let (_, target) = random_partial(&schema, &mut rng);
        let action = rng.random_range(0..k);
        let reward = rng.random_range(-2.0..3.0);
        let visible = seed % 3 != 0;
        let weight = rng.random_range(1.0..10.0);
        let noise = model.vae().draw_noise(1, &mut rng);
        let mut grads = model.params().zeros_like();
        model
            .weighted_elbo(&target, action, reward, visible, weight, &noise, Some((&mut grads, 1.0)))
            .map_err(|e| e.to_string())?;
        let res = check_gradient(model.params(), &grads.to_flat(), STEP, FLOOR, |p| {
            let mut m = model.clone();
            *m.params_mut() = p.clone();
            m.weighted_elbo(&target, action, reward, visible, weight, &noise, None).expect("elbo")
        });
        worst[2] = worst[2].max(res.max_rel_error);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst.iter().all(|&w| w < TOL) && secs < 30.0,
        format!(
            "max relative error over 20 configs: dense {:.1e}, pvae {:.1e}, cpvae {:.1e} ({secs:.1}s)",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ------------------------------------------------------------ criterion 3

/// Four binary attributes, three actions, Bernoulli rewards with a known table.
fn binary_table_env() -> TableEnv {
    let theta = (0..16)
        .map(|s| {
            let bits: Vec<f64> = (0..4).map(|j| ((s >> j) & 1) as f64).collect();
            vec![
                (bits[0] + bits[1]) / 3.0,
                (bits[2] + bits[3]) / 3.0 + 0.1,
                0.2 + 0.15 * (bits[0] + bits[3]),
            ]
        })
        .collect();
    TableEnv::new(vec![2; 4], theta, Vec::new()).expect("valid table")
}

fn consistency() -> Outcome {
    let start = Instant::now();
    let env = binary_table_env();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = simulate(&env, 20_000, &Missingness::none(), &mut rng).map_err(|e| e.to_string())?;
    // With four independent uniform bits a trained PVAE reaches its ELBO
    // optimum with the latent ignored, so its similarity is flat. The
    // estimator is therefore run with the exact conditional density of this
    // environment, which for fully observed rows is the match indicator.
    let props = data.truth.as_ref().expect("simulated").propensities.clone();
    let sim = ExactMatchSimilarity::new(&data.features());
    let est = SpvaeEstimator::new(&data, sim, props, SpvaeOptions::default()).map_err(|e| e.to_string())?;
    let mut max_err = 0.0f64;
    for s in 0..env.num_states() {
        let x = env.values_of(s);
        let th = est.theta_all(&x).map_err(|e| e.to_string())?;
        for (a, t) in th.iter().enumerate() {
            max_err = max_err.max((t.value - env.theta[s][a]).abs());
        }
    }
    let mut identity_worst = 0.0f64;
    for (q, a) in [(5usize, 0usize), (10, 1), (15, 2)] {
        let x = env.values_of(q);
        let mean = ips_weight_identity_check(
            |trial| {
                let mut r = ChaCha8Rng::seed_from_u64(10_000 + trial as u64);
                simulate(&env, 20_000, &Missingness::none(), &mut r)
            },
            |d| Ok(ExactMatchSimilarity::new(&d.features())),
            &x,
            a,
            200,
        )
        .map_err(|e| e.to_string())?;
        identity_worst = identity_worst.max((mean - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        max_err < 0.1 && identity_worst <= 0.05 && secs < 300.0,
        format!("max |theta_hat - theta| = {max_err:.4}, worst |identity - 1| = {identity_worst:.4} ({secs:.0}s)"),
    )
}

// ------------------------------------------------------------ criterion 4

struct DigitRun {
    avg: [f64; 5],
    tail: [usize; 5],
}

fn digit_seed(seed: u64) -> Result<DigitRun, String> {
    let cfg = DigitConfig {
        seed,
        ..Default::default()
    };
    let (env, data) = gen_digit_bandit(&cfg).map_err(|e| e.to_string())?;
    let dims = VaeDims {
        embed_dim: 10,
        feature_dim: 20,
        latent_dim: 10,
        h_hidden: vec![],
        f_hidden: vec![50],
        decoder_hidden: vec![50],
    };
    let tc = TrainConfig {
        epochs: 60,
        batch_size: 8,
        lr: 3e-3,
        seed,
        n_mc: 1,
    };
    let pvae = train_pvae(&data.features(), data.schema.clone(), dims, &tc)
        .map_err(|e| e.to_string())?
        .model;
    let prop = fit_propensity(&data, &pvae, &PropensityConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    let props = prop.estimate_all(&pvae, &data).map_err(|e| e.to_string())?;
    let sim = PvaeSimilarity::new(&pvae, &data.features(), 1, 0).map_err(|e| e.to_string())?;
    let est = SpvaeEstimator::new(&data, sim, props, SpvaeOptions::default()).map_err(|e| e.to_string())?;
    let oracle = SpvaeOracle {
        estimator: &est,
        pvae: &pvae,
        matched: true,
    };
    let ecfg = EvalConfig {
        n_test: 300,
        missing: Missingness::Mcar { rate: 0.5 },
        tail_threshold: -7.0,
        seed: seed + 1000,
    };
    let specs = [
        StrategySpec::Mer { t: 20 },
        StrategySpec::Imputation,
        StrategySpec::Conservative { c: 0.7, u: 50 },
        StrategySpec::Conservative { c: 0.1, u: 50 },
        StrategySpec::Conservative { c: 0.001, u: 50 },
    ];
    let opts = StrategyOptions::default();
    let mut run = DigitRun {
        avg: [0.0; 5],
        tail: [0; 5],
    };
    for (s, spec) in specs.iter().enumerate() {
        let r = evaluate_policy(&env, &data.schema, &ecfg, |i, xt| {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            Ok(recommend(&oracle, xt, spec, &opts, &mut rng)?.action)
        })
        .map_err(|e| e.to_string())?;
        run.avg[s] = r.avg_reward;
        run.tail[s] = r.tail_count;
    }
    Ok(run)
}

fn digit_ordering() -> Outcome {
    let start = Instant::now();
    let mut passes = 0;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let r = digit_seed(seed)?;
        let chain = r.avg.windows(2).all(|w| w[0] >= w[1] - 0.05);
        // tails over the conservative thresholds 0.7, 0.1, 0.001
        let tails = r.tail[2] >= r.tail[3] && r.tail[3] >= r.tail[4] && r.tail[4] == 0;
        if chain && tails {
            passes += 1;
        }
        rows.push(format!(
            "s{seed}:{}{}",
            if chain { "" } else { "order" },
            if tails { "" } else { "tail" }
        ));
        println!(
            "    digit seed {seed}: avg MER {:.3} Imp {:.3} C0.7 {:.3} C0.1 {:.3} C0.001 {:.3} | tails {:?}",
            r.avg[0], r.avg[1], r.avg[2], r.avg[3], r.avg[4], r.tail
        );
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        passes >= 8 && secs < 900.0,
        format!("{passes}/10 seeds satisfy the ordering and tail conditions ({secs:.0}s)"),
    )
}

// ------------------------------------------------------------ criterion 5

struct AteRun {
    spvae: f64,
    cpvae: f64,
}

fn ihdp_seed(seed: u64, rate: f64) -> Result<AteRun, String> {
    let cfg = IhdpConfig {
        seed,
        missing: rate,
        ..Default::default()
    };
    let (_, data) = gen_ihdp_b(&cfg).map_err(|e| e.to_string())?;
    let dims = VaeDims::default();
    let tc = TrainConfig {
        epochs: 25,
        batch_size: 8,
        lr: 1e-3,
        seed,
        n_mc: 1,
    };
    let pvae = train_pvae(&data.features(), data.schema.clone(), dims.clone(), &tc)
        .map_err(|e| e.to_string())?
        .model;
    let prop = fit_propensity(&data, &pvae, &PropensityConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    let props = prop.estimate_all(&pvae, &data).map_err(|e| e.to_string())?;
    let sim = PvaeSimilarity::new(&pvae, &data.features(), 1, 0).map_err(|e| e.to_string())?;
    let est = SpvaeEstimator::new(&data, sim, props.clone(), SpvaeOptions::default()).map_err(|e| e.to_string())?;
    let oracle = SpvaeOracle {
        estimator: &est,
        pvae: &pvae,
        matched: true,
    };
    let spvae = estimate_ate(&data, |i, xt| {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        Ok(recommend_mer(&oracle, xt, 5, &mut rng)?.scores)
    })
    .map_err(|e| e.to_string())?
    .delta;
    let cc = CpvaeConfig {
        dims,
        train: tc,
        ..Default::default()
    };
    let model = train_cpvae(&data, &props, &cc).map_err(|e| e.to_string())?.model;
    let cpvae = estimate_ate(&data, |i, xt| {
        Ok(model
            .predict_all(xt, PredictMode::Mc(5), i as u64)?
            .iter()
            .map(|p| p.mean)
            .collect())
    })
    .map_err(|e| e.to_string())?
    .delta;
    Ok(AteRun { spvae, cpvae })
}

fn ihdp_ate() -> Outcome {
    let start = Instant::now();
    let mut med_s = Vec::new();
    let mut med_c = Vec::new();
    for rate in [0.1, 0.3, 0.5] {
        let runs = (0..10u64).map(|s| ihdp_seed(s, rate)).collect::<Result<Vec<_>, _>>()?;
        med_s.push(median(&runs.iter().map(|r| r.spvae).collect::<Vec<_>>()));
        med_c.push(median(&runs.iter().map(|r| r.cpvae).collect::<Vec<_>>()));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = med_s[1] < 0.3 && med_s[2] <= med_s[1] + 0.15 && med_c.iter().all(|&d| d < 0.4) && secs < 1200.0;
    check(
        ok,
        format!(
            "median delta SPVAE-MER(t=5) 10/30/50%: {:.3}/{:.3}/{:.3}; CPVAE: {:.3}/{:.3}/{:.3} ({secs:.0}s)",
            med_s[0], med_s[1], med_s[2], med_c[0], med_c[1], med_c[2]
        ),
    )
}

// ------------------------------------------------------------ criterion 6

fn conservative_semantics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let schema = FeatureSchema::new(
        (0..5)
            .map(|j| {
                if j == 4 {
                    AttributeKind::Categorical { cardinality: 3 }
                } else {
                    AttributeKind::Continuous { mean: 0.0, std: 1.0 }
                }
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let pvae = PvaeModel::new(schema.clone(), VaeDims::default(), 6).map_err(|e| e.to_string())?;
    let grid = [0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99];
    let mut nested = 0;
    for inst in 0..100u64 {
        let values: Vec<f64> = (0..5)
            .map(|j| if j == 4 { rng.random_range(0..3) as f64 } else { rng.sample(StandardNormal) })
            .collect();
        let mut mask: Vec<bool> = (0..5).map(|_| rng.random::<f64>() < 0.5).collect();
        mask[inst as usize % 5] = true;
        let xt = PartialFeature::new(values, mask).map_err(|e| e.to_string())?;
        let cands = conservative_candidates(&pvae, &xt, 50, true, &mut rng).map_err(|e| e.to_string())?;
        let sets = grid
            .iter()
            .map(|&c| {
                let mut r = ChaCha8Rng::seed_from_u64(inst);
                conservative_set(&pvae, &xt, c, &cands, 1, &mut r).map(|s| s.admitted)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if sets.windows(2).all(|w| w[1].iter().all(|i| w[0].contains(i))) {
            nested += 1;
        }
    }
    let zero = (1..=5).all(|d| risk_for_dims(d, 0.0).is_ok_and(|r| r == 0.0));
    let increasing = (1..=5).all(|d| {
        let r: Vec<f64> = (1..=9).map(|k| risk_for_dims(d, k as f64 / 10.0).expect("valid c")).collect();
        r.windows(2).all(|w| w[1] > w[0])
    });
    let c = (-0.5f64).exp();
    let closed = risk_for_dims(1, c).map_err(|e| e.to_string())?;
    let mut mc_rng = ChaCha8Rng::seed_from_u64(1_000_000);
    let n = 1_000_000;
    let outside = (0..n)
        .filter(|_| {
            let z: f64 = mc_rng.sample(StandardNormal);
            z * z > -2.0 * c.ln()
        })
        .count();
    let mc = outside as f64 / n as f64;
    let secs = start.elapsed().as_secs_f64();
    let ok = nested == 100
        && zero
        && increasing
        && (closed - 0.3173).abs() <= 0.001
        && (mc - 0.3173).abs() <= 0.001
        && secs < 60.0;
    check(
        ok,
        format!(
            "nested {nested}/100, R(0)=0 {zero}, increasing {increasing}, R(d=1, e^-1/2) closed {closed:.5} MC {mc:.5} ({secs:.1}s)"
        ),
    )
}

// ------------------------------------------------------------ criterion 7

fn glucose_seed(seed: u64) -> Result<(f64, f64), String> {
    let cfg = GlucoseConfig {
        n: 3000,
        seed,
        ..Default::default()
    };
    let (env, data) = gen_glucose_bandit(&cfg).map_err(|e| e.to_string())?;
    let dims = VaeDims {
        embed_dim: 5,
        feature_dim: 8,
        latent_dim: 5,
        h_hidden: vec![],
        f_hidden: vec![10, 10],
        decoder_hidden: vec![10, 10],
    };
    let tc = TrainConfig {
        epochs: 25,
        batch_size: 8,
        lr: 3e-3,
        seed,
        n_mc: 1,
    };
    let pvae = train_pvae(&data.features(), data.schema.clone(), dims.clone(), &tc)
        .map_err(|e| e.to_string())?
        .model;
    let prop = fit_propensity(&data, &pvae, &PropensityConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    let props = prop.estimate_all(&pvae, &data).map_err(|e| e.to_string())?;
    let cc = CpvaeConfig {
        dims,
        train: TrainConfig { epochs: 40, ..tc },
        ..Default::default()
    };
    let model = train_cpvae(&data, &props, &cc).map_err(|e| e.to_string())?.model;
    let oracle = CpvaeOracle {
        model: &model,
        pvae: &pvae,
        mode: PredictMode::Point,
        seed: 0,
    };
    let ecfg = EvalConfig {
        n_test: 500,
        missing: Missingness::Mcar { rate: 0.3 },
        tail_threshold: -2.0,
        seed: seed + 1000,
    };
    let opts = StrategyOptions::default();
    let tail = |spec: StrategySpec| {
        evaluate_policy(&env, &data.schema, &ecfg, |i, xt| {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            Ok(recommend(&oracle as &dyn RewardOracle, xt, &spec, &opts, &mut rng)?.action)
        })
        .map(|r| r.tail_fraction)
        .map_err(|e| e.to_string())
    };
    Ok((tail(StrategySpec::Mer { t: 20 })?, tail(StrategySpec::Conservative { c: 0.4, u: 50 })?))
}

fn glucose_suite() -> Outcome {
    let start = Instant::now();
    let exact = glucose_reward(80.0) == 0.0 && glucose_reward(100.0) == 1.0 && glucose_reward(230.0) == -1.0;
    let eps = 1e-12;
    let continuous = [90.0, 130.0]
        .iter()
        .all(|&b| (glucose_reward(b - eps) - glucose_reward(b + eps)).abs() < 1e-9);
    let mut wins = 0;
    let mut mer_sum = 0.0;
    let mut cons_sum = 0.0;
    for seed in 0..10u64 {
        let (mer, cons) = glucose_seed(seed)?;
        println!("    glucose seed {seed}: tail fraction MER {mer:.3} Cons(0.4) {cons:.3}");
        mer_sum += mer;
        cons_sum += cons;
        if cons <= mer {
            wins += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        exact && continuous && wins >= 8 && secs < 600.0,
        format!(
            "reward values exact {exact}, continuous {continuous}; Cons(0.4) <= MER tail in {wins}/10 seeds (mean {:.3} vs {:.3}) ({secs:.0}s)",
            cons_sum / 10.0,
            mer_sum / 10.0
        ),
    )
}

// ------------------------------------------------------------ criterion 8

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let small = ["--epochs", "3", "--cpvae-epochs", "3"];
    let mut steps: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--family", "ihdp-b", "--missing", "0.3", "--seed", "7", "--out", "ihdp.csv"],
        vec!["train-pvae", "--family", "ihdp-b", "--data", "ihdp.csv", "--out", "pvae.json"],
        vec!["fit-propensity", "--data", "ihdp.csv", "--pvae", "pvae.json", "--out", "prop.json"],
        vec![
            "train-cpvae", "--family", "ihdp-b", "--data", "ihdp.csv", "--pvae", "pvae.json", "--propensity", "prop.json",
            "--out", "cpvae.json",
        ],
        vec![
            "recommend", "--family", "ihdp-b", "--data", "ihdp.csv", "--pvae", "pvae.json", "--propensity", "prop.json",
            "--rows", "ihdp.csv", "--strategy", "conservative", "--c", "0.5", "--u", "10", "--out", "rec.csv",
        ],
        vec![
            "evaluate", "--family", "glucose", "--n", "400", "--estimator", "cpvae", "--n-test", "50", "--strategy",
            "mer", "--t", "5", "--out", "eval.csv",
        ],
        vec![
            "ate", "--family", "ihdp-b", "--data", "ihdp.csv", "--pvae", "pvae.json", "--propensity", "prop.json",
            "--estimator", "spvae-matched", "--t", "3", "--out", "ate.csv",
        ],
        vec!["limits", "--example1", "--out", "limits.json"],
        vec!["risk", "--strategy", "conservative", "--c", "0.3", "--dims", "3", "--out", "risk.json"],
    ];
    for s in &mut steps {
        if matches!(s[0], "train-pvae" | "train-cpvae" | "evaluate") {
            s.extend_from_slice(&small);
        }
    }
    let mut manifests = Vec::new();
    for s in &steps {
        run_cli(d, s)?;
        let out = s[s.iter().position(|a| *a == "--out").expect("every step has --out") + 1];
        let stem = Path::new(out).file_stem().expect("stem").to_string_lossy().into_owned();
        manifests.push(format!("{stem}.manifest.json"));
    }
    let mut identical = 0;
    let mut failures = Vec::new();
    for m in &manifests {
        match run_cli(d, &["replay", "--manifest", m, "--check"]) {
            Ok(_) => identical += 1,
            Err(e) => failures.push(e),
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{identical}/{} subcommands replayed byte-identically{}",
            manifests.len(),
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
        ),
    )
}

fn main() {
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("example 1 decomposition", example1),
        ("gradient suite", gradients),
        ("estimator consistency", consistency),
        ("digit strategy ordering", digit_ordering),
        ("IHDP ATE", ihdp_ate),
        ("conservative semantics", conservative_semantics),
        ("glucose suite", glucose_suite),
        ("manifest replay determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let n = k + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
