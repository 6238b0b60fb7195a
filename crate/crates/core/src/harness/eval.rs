use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LoggedDataset;
use super::envs::{BanditEnv, Context};
use super::missing::{mask_feature, Missingness};
use crate::error::{Error, Result};
use crate::pvae::{FeatureSchema, PartialFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_test: usize,
    pub missing: Missingness,
    /// Rewards strictly below this count towards the tail.
    pub tail_threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_test: 500,
            missing: Missingness::Mcar { rate: 0.5 },
            tail_threshold: -7.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub avg_reward: f64,
    /// Standard error of the mean realized reward over test instances.
    pub se: f64,
    /// Mean of the expected reward of the chosen actions.
    pub avg_expected_reward: f64,
    pub tail_fraction: f64,
    pub tail_count: usize,
    pub n_test: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Draws fresh test individuals, masks them, asks `recommend` for an action
/// given the masked feature, and scores the action with a reward drawn from
/// the environment's law.
///
/// Contexts and masks come from one stream and reward noise from another, so
/// two recommenders evaluated with the same config see identical test sets
/// and identical noise per instance.
pub fn evaluate_policy<E, F>(env: &E, schema: &FeatureSchema, cfg: &EvalConfig, mut recommend: F) -> Result<EvalResult>
where
    E: BanditEnv + ?Sized,
    F: FnMut(usize, &PartialFeature) -> Result<usize>,
{
    let (contexts, masked) = draw_test_set(env, schema, cfg)?;
    let actions = masked
        .iter()
        .enumerate()
        .map(|(i, xt)| recommend(i, xt))
        .collect::<Result<Vec<_>>>()?;
    score_actions(env, cfg, &contexts, actions)
}

/// Same as [`evaluate_policy`] but spreads the recommendation calls over up
/// to `threads` workers. The result is identical to the sequential run.
pub fn evaluate_policy_par<E, F>(
    env: &E,
    schema: &FeatureSchema,
    cfg: &EvalConfig,
    threads: usize,
    recommend: F,
) -> Result<EvalResult>
where
    E: BanditEnv + ?Sized,
    F: Fn(usize, &PartialFeature) -> Result<usize> + Sync,
{
    let (contexts, masked) = draw_test_set(env, schema, cfg)?;
    let threads = threads.clamp(1, masked.len());
    let chunk = masked.len().div_ceil(threads);
    let recommend = &recommend;
    let parts: Vec<Result<Vec<usize>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = masked
            .chunks(chunk)
            .enumerate()
            .map(|(c, rows)| {
                scope.spawn(move || {
                    rows.iter()
                        .enumerate()
                        .map(|(j, xt)| recommend(c * chunk + j, xt))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Estimation("evaluation worker panicked".into()))))
            .collect()
    });
    let mut actions = Vec::with_capacity(masked.len());
    for part in parts {
        actions.extend(part?);
    }
    score_actions(env, cfg, &contexts, actions)
}

fn draw_test_set<E: BanditEnv + ?Sized>(
    env: &E,
    schema: &FeatureSchema,
    cfg: &EvalConfig,
) -> Result<(Vec<Context>, Vec<PartialFeature>)> {
    if cfg.n_test == 0 {
        return Err(Error::Config("n_test must be >= 1".into()));
    }
    cfg.missing.validate(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut contexts = Vec::with_capacity(cfg.n_test);
    let mut masked = Vec::with_capacity(cfg.n_test);
    for _ in 0..cfg.n_test {
        let ctx = env.sample_context(&mut rng);
        masked.push(mask_feature(schema, &ctx.x, &cfg.missing, &mut rng));
        contexts.push(ctx);
    }
    Ok((contexts, masked))
}

fn score_actions<E: BanditEnv + ?Sized>(
    env: &E,
    cfg: &EvalConfig,
    contexts: &[Context],
    actions: Vec<usize>,
) -> Result<EvalResult> {
    let k = env.num_actions();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e57_0000_0000_0001);
    let mut rewards = Vec::with_capacity(actions.len());
    let mut expected = 0.0;
    for (ctx, &a) in contexts.iter().zip(&actions) {
        if a >= k {
            return Err(Error::Argument(format!("recommender returned action {a} outside 0..{k}")));
        }
        expected += env.reward_means(ctx)[a];
        rewards.push(env.draw_reward(ctx, a, &mut noise_rng));
    }
    let n = actions.len() as f64;
    let avg = rewards.iter().sum::<f64>() / n;
    let var = if actions.len() > 1 {
        rewards.iter().map(|r| (r - avg).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let tail_count = rewards.iter().filter(|&&r| r < cfg.tail_threshold).count();
    Ok(EvalResult {
        avg_reward: avg,
        se: (var / n).sqrt(),
        avg_expected_reward: expected / n,
        tail_fraction: tail_count as f64 / n,
        tail_count,
        n_test: actions.len(),
        actions,
        rewards,
    })
}

/// Aggregate over repeated runs (seeds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg_reward: f64,
    /// Standard error across runs.
    pub se: f64,
    pub tail_fraction: f64,
    pub tail_count: f64,
    pub runs: usize,
}

pub fn summarize(runs: &[EvalResult]) -> Summary {
    let n = runs.len().max(1) as f64;
    let mean = runs.iter().map(|r| r.avg_reward).sum::<f64>() / n;
    let var = if runs.len() > 1 {
        runs.iter().map(|r| (r.avg_reward - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Summary {
        avg_reward: mean,
        se: (var / n).sqrt(),
        tail_fraction: runs.iter().map(|r| r.tail_fraction).sum::<f64>() / n,
        tail_count: runs.iter().map(|r| r.tail_count as f64).sum::<f64>() / n,
        runs: runs.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub tau_hat: f64,
    /// In-sample mean of `R(1) − R(0)` from the retained potential outcomes.
    pub tau_true: f64,
    pub delta: f64,
}

/// `τ̂ = (1/n) Σ_i [θ̂_i(1) − θ̂_i(0)]` where `theta(i, x̃_i)` returns the
/// per-action estimates for row `i`, compared against the potential outcomes.
pub fn estimate_ate<F>(data: &LoggedDataset, mut theta: F) -> Result<AteResult>
where
    F: FnMut(usize, &PartialFeature) -> Result<Vec<f64>>,
{
    if data.num_actions != 2 {
        return Err(Error::Config(format!("ATE needs exactly 2 actions, dataset has {}", data.num_actions)));
    }
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::Data("ATE evaluation needs the ground-truth block".into()))?;
    let n = data.len() as f64;
    let tau_true = match &truth.potential_rewards {
        Some(p) => p.iter().map(|r| r[1] - r[0]).sum::<f64>() / n,
        None => truth.reward_means.iter().map(|m| m[1] - m[0]).sum::<f64>() / n,
    };
    let mut total = 0.0;
    for (i, row) in data.rows.iter().enumerate() {
        let t = theta(i, &row.feature)?;
        if t.len() != 2 {
            return Err(Error::Shape(format!("row {i}: expected 2 estimates, got {}", t.len())));
        }
        total += t[1] - t[0];
    }
    let tau_hat = total / n;
    Ok(AteResult {
        tau_hat,
        tau_true,
        delta: (tau_hat - tau_true).abs(),
    })
}
