use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{GroundTruth, LoggedDataset, LoggedRow};
use super::missing::{mask_feature, Missingness};
use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::pvae::{AttributeKind, FeatureSchema};

/// A drawn individual: the complete feature plus anything the environment
/// keeps hidden from the learner (a class label, a state index).
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub x: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// A simulator with a known reward law and logging policy.
pub trait BanditEnv {
    fn num_actions(&self) -> usize;

    /// Attribute kinds; continuous summary statistics may be placeholders,
    /// since [`simulate`] re-estimates them from the drawn features.
    fn schema(&self) -> FeatureSchema;

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context;

    fn reward_means(&self, ctx: &Context) -> Vec<f64>;

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64;

    fn logging_policy(&self, ctx: &Context) -> Vec<f64>;
}

fn normal(rng: &mut dyn rand::RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_index(p: &[f64], rng: &mut dyn rand::RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Replaces continuous summary statistics with those of `complete`.
fn refit_schema(template: &FeatureSchema, complete: &[Vec<f64>]) -> Result<FeatureSchema> {
    let n = complete.len().max(1) as f64;
    let attrs = template
        .attributes()
        .iter()
        .enumerate()
        .map(|(j, kind)| match kind {
            AttributeKind::Continuous { .. } => {
                let mean = complete.iter().map(|x| x[j]).sum::<f64>() / n;
                let var = complete.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
                let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
                AttributeKind::Continuous { mean, std }
            }
            other => *other,
        })
        .collect();
    FeatureSchema::new(attrs)
}

/// Draws `n` logged triples: context, logged action from the logging policy,
/// realized reward, then missingness. Ground truth is retained.
pub fn simulate<E: BanditEnv + ?Sized>(env: &E, n: usize, mech: &Missingness, rng: &mut dyn rand::RngCore) -> Result<LoggedDataset> {
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let contexts: Vec<Context> = (0..n).map(|_| env.sample_context(rng)).collect();
    let complete: Vec<Vec<f64>> = contexts.iter().map(|c| c.x.clone()).collect();
    let schema = refit_schema(&env.schema(), &complete)?;
    mech.validate(&schema)?;
    let mut rows = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let mut props = Vec::with_capacity(n);
    for ctx in &contexts {
        let p = env.logging_policy(ctx);
        let a = draw_index(&p, rng);
        let reward = env.draw_reward(ctx, a, rng);
        rows.push((a, reward));
        means.push(env.reward_means(ctx));
        props.push(p);
    }
    let rows = rows
        .into_iter()
        .zip(&complete)
        .map(|((action, reward), x)| LoggedRow {
            feature: mask_feature(&schema, x, mech, rng),
            action,
            reward,
        })
        .collect();
    LoggedDataset::new(
        schema,
        env.num_actions(),
        rows,
        Some(GroundTruth {
            complete,
            reward_means: means,
            propensities: props,
            potential_rewards: None,
        }),
    )
}

// ---------------------------------------------------------------- digits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DigitConfig {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub erase_rate: f64,
    /// Standard deviation of the class prototype entries.
    pub prototype_scale: f64,
    /// Label pairs whose prototypes coincide except on `twin_distinct`
    /// attributes, so that heavy erasure can leave them indistinguishable.
    pub twins: Vec<(usize, usize)>,
    pub twin_distinct: usize,
    /// Offset (with random sign) between twin prototypes on each distinct
    /// attribute.
    pub twin_gap: f64,
    /// Seed of the class prototypes (fixed across data seeds so that train
    /// and test sets share one environment).
    pub prototype_seed: u64,
    pub cluster_sd: f64,
    pub reward_sd: f64,
    pub seed: u64,
}

impl Default for DigitConfig {
    fn default() -> Self {
        DigitConfig {
            n: 5000,
            d: 20,
            classes: 10,
            erase_rate: 0.5,
            prototype_scale: 1.5,
            twins: vec![(0, 8), (1, 9)],
            twin_distinct: 6,
            twin_gap: 3.0,
            prototype_seed: 2021,
            cluster_sd: 1.0,
            reward_sd: 0.1,
            seed: 0,
        }
    }
}

/// Ten Gaussian clusters standing in for digit images. Cluster `y` is centred
/// at a random prototype whose entries are `N(0, prototype_scale²)`, so the
/// label is spread over every attribute and some classes are closer than
/// others. The reward for action `a` is `N(−|y − a|, reward_sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitEnv {
    pub cfg: DigitConfig,
    pub prototypes: Vec<Vec<f64>>,
}

impl DigitEnv {
    pub fn new(cfg: DigitConfig) -> Result<Self> {
        if cfg.classes != 10 {
            return Err(Error::Config(format!("digit bandit needs 10 classes, got {}", cfg.classes)));
        }
        if cfg.d == 0 {
            return Err(Error::Config("digit bandit needs d >= 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.erase_rate) {
            return Err(Error::Config(format!("erase_rate must lie in [0, 1), got {}", cfg.erase_rate)));
        }
        if cfg.cluster_sd <= 0.0 || cfg.reward_sd < 0.0 {
            return Err(Error::Config("cluster_sd must be > 0 and reward_sd >= 0".into()));
        }
        if cfg.twin_distinct > cfg.d || cfg.twins.iter().any(|&(a, b)| a >= cfg.classes || b >= cfg.classes || a == b) {
            return Err(Error::Config("twin pairs must name two distinct labels and twin_distinct <= d".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.prototype_seed);
        let mut prototypes: Vec<Vec<f64>> = (0..cfg.classes)
            .map(|_| (0..cfg.d).map(|_| cfg.prototype_scale * normal(&mut rng)).collect())
            .collect();
        for (k, &(a, b)) in cfg.twins.iter().enumerate() {
            // the twin copies `a` except on a block of attributes
            let start = (k * cfg.twin_distinct) % cfg.d;
            let distinct: Vec<usize> = (0..cfg.twin_distinct).map(|i| (start + i) % cfg.d).collect();
            for j in 0..cfg.d {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                prototypes[b][j] = prototypes[a][j] + if distinct.contains(&j) { sign * cfg.twin_gap } else { 0.0 };
            }
        }
        Ok(DigitEnv { cfg, prototypes })
    }

    pub fn label(ctx: &Context) -> usize {
        ctx.hidden[0] as usize
    }

    /// Logging rule: even labels favour actions 5..9, odd labels favour 0..4.
    pub fn logging_probs(y: usize) -> Vec<f64> {
        (0..10)
            .map(|a| {
                let low = a < 5;
                if y.is_multiple_of(2) == low {
                    1.0 / 20.0
                } else {
                    3.0 / 20.0
                }
            })
            .collect()
    }
}

impl BanditEnv for DigitEnv {
    fn num_actions(&self) -> usize {
        self.cfg.classes
    }

    fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(vec![AttributeKind::Continuous { mean: 0.0, std: 1.0 }; self.cfg.d]).expect("valid schema")
    }

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context {
        let y = rng.random_range(0..self.cfg.classes);
        let x = self.prototypes[y]
            .iter()
            .map(|m| m + self.cfg.cluster_sd * normal(rng))
            .collect();
        Context { x, hidden: vec![y as f64] }
    }

    fn reward_means(&self, ctx: &Context) -> Vec<f64> {
        let y = Self::label(ctx) as f64;
        (0..self.cfg.classes).map(|a| -(y - a as f64).abs()).collect()
    }

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64 {
        -(Self::label(ctx) as f64 - a as f64).abs() + self.cfg.reward_sd * normal(rng)
    }

    fn logging_policy(&self, ctx: &Context) -> Vec<f64> {
        Self::logging_probs(Self::label(ctx))
    }
}

pub fn gen_digit_bandit(cfg: &DigitConfig) -> Result<(DigitEnv, LoggedDataset)> {
    let env = DigitEnv::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = simulate(&env, cfg.n, &Missingness::Mcar { rate: cfg.erase_rate }, &mut rng)?;
    Ok((env, data))
}

// ---------------------------------------------------------------- IHDP-B

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IhdpConfig {
    pub n: usize,
    pub continuous: usize,
    pub binary: usize,
    /// Support of the coefficient draw and its probabilities.
    pub beta_support: Vec<f64>,
    pub beta_probs: Vec<f64>,
    /// Offset added to every covariate inside the control-arm exponential.
    pub offset: f64,
    pub tau: f64,
    pub missing: f64,
    /// Slope of the logistic treatment assignment on the standardized score.
    pub propensity_slope: f64,
    /// Range of the Bernoulli prevalences of the binary covariates.
    pub prevalence: (f64, f64),
    pub seed: u64,
}

impl Default for IhdpConfig {
    fn default() -> Self {
        IhdpConfig {
            n: 747,
            continuous: 6,
            binary: 19,
            beta_support: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            beta_probs: vec![0.6, 0.1, 0.1, 0.1, 0.1],
            offset: 0.5,
            tau: 4.0,
            missing: 0.3,
            propensity_slope: 0.5,
            prevalence: (0.1, 0.5),
            seed: 0,
        }
    }
}

/// Semi-synthetic treatment-effect environment with response surfaces
/// `μ₀ = exp((x + offset)·β)` and `μ₁ = x·β − ω`, unit-variance outcome noise.
#[derive(Debug, Clone, PartialEq)]
pub struct IhdpEnv {
    pub cfg: IhdpConfig,
    pub beta: Vec<f64>,
    pub prevalence: Vec<f64>,
    /// Coefficients of the assignment score.
    pub assign: Vec<f64>,
    pub omega: f64,
}

impl IhdpEnv {
    /// Draws coefficients with `ω = 0`; [`gen_ihdp_b`] calibrates it.
    pub fn draw(cfg: &IhdpConfig, rng: &mut dyn rand::RngCore) -> Result<Self> {
        let d = cfg.continuous + cfg.binary;
        if d == 0 || cfg.n == 0 {
            return Err(Error::Config("IHDP-B needs n >= 1 and at least one covariate".into()));
        }
        if cfg.beta_support.len() != cfg.beta_probs.len() || cfg.beta_support.is_empty() {
            return Err(Error::Config("beta_support and beta_probs must have equal nonzero length".into()));
        }
        if (cfg.beta_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("beta_probs must sum to 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.missing) {
            return Err(Error::Config(format!("missing must lie in [0, 1), got {}", cfg.missing)));
        }
        let (lo, hi) = cfg.prevalence;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config("prevalence range must satisfy 0 < lo <= hi < 1".into()));
        }
        let beta = (0..d).map(|_| cfg.beta_support[draw_index(&cfg.beta_probs, rng)]).collect();
        let prevalence = (0..cfg.binary).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        let assign = (0..d).map(|_| normal(rng) / (d as f64).sqrt()).collect();
        Ok(IhdpEnv {
            cfg: cfg.clone(),
            beta,
            prevalence,
            assign,
            omega: 0.0,
        })
    }

    fn linear(&self, x: &[f64], offset: f64) -> f64 {
        x.iter().zip(&self.beta).map(|(v, b)| (v + offset) * b).sum()
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        self.linear(x, self.cfg.offset).exp()
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        self.linear(x, 0.0) - self.omega
    }
}

impl BanditEnv for IhdpEnv {
    fn num_actions(&self) -> usize {
        2
    }

    fn schema(&self) -> FeatureSchema {
        let mut attrs = vec![AttributeKind::Continuous { mean: 0.0, std: 1.0 }; self.cfg.continuous];
        attrs.extend(std::iter::repeat_n(AttributeKind::Categorical { cardinality: 2 }, self.cfg.binary));
        FeatureSchema::new(attrs).expect("valid schema")
    }

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context {
        // continuous block: stationary AR(1) with correlation 0.5
        let mut x = Vec::with_capacity(self.cfg.continuous + self.cfg.binary);
        let mut prev = normal(rng);
        for k in 0..self.cfg.continuous {
            if k > 0 {
                prev = 0.5 * prev + 0.75f64.sqrt() * normal(rng);
            }
            x.push(prev);
        }
        for &p in &self.prevalence {
            x.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        Context { x, hidden: vec![] }
    }

    fn reward_means(&self, ctx: &Context) -> Vec<f64> {
        vec![self.mu0(&ctx.x), self.mu1(&ctx.x)]
    }

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64 {
        self.reward_means(ctx)[a] + normal(rng)
    }

    fn logging_policy(&self, ctx: &Context) -> Vec<f64> {
        let s: f64 = ctx.x.iter().zip(&self.assign).map(|(v, w)| v * w).sum();
        let p1 = crate::nn::sigmoid(self.cfg.propensity_slope * s);
        vec![1.0 - p1, p1]
    }
}

/// Draws covariates and both potential outcomes, then shifts the treated
/// surface by `ω` so the in-sample mean of `R(1) − R(0)` equals `tau`.
pub fn gen_ihdp_b(cfg: &IhdpConfig) -> Result<(IhdpEnv, LoggedDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env = IhdpEnv::draw(cfg, &mut rng)?;
    let contexts: Vec<Context> = (0..cfg.n).map(|_| env.sample_context(&mut rng)).collect();
    let noise: Vec<(f64, f64)> = (0..cfg.n).map(|_| (normal(&mut rng), normal(&mut rng))).collect();
    let n = cfg.n as f64;
    let raw_gap: f64 = contexts
        .iter()
        .zip(&noise)
        .map(|(c, (e0, e1))| (env.mu1(&c.x) + e1) - (env.mu0(&c.x) + e0))
        .sum::<f64>()
        / n;
    env.omega = raw_gap - cfg.tau;
    let complete: Vec<Vec<f64>> = contexts.iter().map(|c| c.x.clone()).collect();
    let schema = refit_schema(&env.schema(), &complete)?;
    let mech = Missingness::Mcar { rate: cfg.missing };
    let mut rows = Vec::with_capacity(cfg.n);
    let mut means = Vec::with_capacity(cfg.n);
    let mut props = Vec::with_capacity(cfg.n);
    let mut potential = Vec::with_capacity(cfg.n);
    for (c, (e0, e1)) in contexts.iter().zip(&noise) {
        let m = env.reward_means(c);
        let r = vec![m[0] + e0, m[1] + e1];
        let p = env.logging_policy(c);
        let a = draw_index(&p, &mut rng);
        rows.push(LoggedRow {
            feature: mask_feature(&schema, &c.x, &mech, &mut rng),
            action: a,
            reward: r[a],
        });
        means.push(m);
        props.push(p);
        potential.push(r);
    }
    let data = LoggedDataset::new(
        schema,
        2,
        rows,
        Some(GroundTruth {
            complete,
            reward_means: means,
            propensities: props,
            potential_rewards: Some(potential),
        }),
    )?;
    Ok((env, data))
}

// ---------------------------------------------------------------- glucose

/// Piecewise-linear reward of a glucose reading in mg/dL: rising through the
/// hypoglycemic range, 1 in `[90, 130]`, falling through hyperglycemia.
pub fn glucose_reward(cgm: f64) -> f64 {
    if cgm <= 90.0 {
        (cgm - 80.0) / 10.0
    } else if cgm < 130.0 {
        1.0
    } else {
        (180.0 - cgm) / 50.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlucoseConfig {
    pub n: usize,
    pub erase_rate: f64,
    pub baseline: f64,
    /// Linear effect of each of the nine attributes on the glucose reading.
    pub weights: Vec<f64>,
    pub dose_linear: f64,
    pub dose_quadratic: f64,
    pub noise_sd: f64,
    /// Attribute `k` loads on latent factor `k mod factors`.
    pub factors: usize,
    /// Loading of every attribute on its factor; the rest of its unit
    /// variance is independent noise.
    pub loading: f64,
    /// Glucose level the logging action generator aims for.
    pub logging_target: f64,
    /// Width (in dose units) of the logging action generator.
    pub logging_width: f64,
    /// Share of actions drawn uniformly rather than from the generator.
    pub uniform_share: f64,
    pub seed: u64,
}

impl Default for GlucoseConfig {
    fn default() -> Self {
        GlucoseConfig {
            n: 5000,
            erase_rate: 0.3,
            baseline: 140.0,
            weights: vec![15.0, -10.0, 12.0, 8.0, -6.0, 10.0, 5.0, -4.0, 7.0],
            dose_linear: -120.0,
            dose_quadratic: 60.0,
            noise_sd: 5.0,
            factors: 3,
            loading: 0.9,
            logging_target: 110.0,
            logging_width: 0.15,
            uniform_share: 0.5,
            seed: 0,
        }
    }
}

pub const GLUCOSE_ACTIONS: usize = 10;

/// Insulin-dose bandit: ten doses `k/9`, glucose reading
/// `baseline + w·x + dose_linear·dose + dose_quadratic·dose² + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseEnv {
    pub cfg: GlucoseConfig,
}

impl GlucoseEnv {
    pub fn new(cfg: GlucoseConfig) -> Result<Self> {
        if cfg.weights.len() != 9 {
            return Err(Error::Config(format!("glucose bandit needs 9 weights, got {}", cfg.weights.len())));
        }
        if !(0.0..1.0).contains(&cfg.erase_rate) {
            return Err(Error::Config(format!("erase_rate must lie in [0, 1), got {}", cfg.erase_rate)));
        }
        if !(0.0..=1.0).contains(&cfg.uniform_share) || cfg.logging_width <= 0.0 || cfg.noise_sd < 0.0 {
            return Err(Error::Config("uniform_share must lie in [0, 1], logging_width > 0, noise_sd >= 0".into()));
        }
        if cfg.factors == 0 || !(0.0..=1.0).contains(&cfg.loading) {
            return Err(Error::Config("factors must be >= 1 and loading must lie in [0, 1]".into()));
        }
        Ok(GlucoseEnv { cfg })
    }

    pub fn dose(a: usize) -> f64 {
        a as f64 / (GLUCOSE_ACTIONS - 1) as f64
    }

    pub fn mean_cgm(&self, x: &[f64], a: usize) -> f64 {
        let d = Self::dose(a);
        let lin: f64 = x.iter().zip(&self.cfg.weights).map(|(v, w)| v * w).sum();
        self.cfg.baseline + lin + self.cfg.dose_linear * d + self.cfg.dose_quadratic * d * d
    }

    /// `E[glucose_reward(m + σZ)]` by trapezoidal integration over ±8σ.
    pub fn expected_reward(&self, mean_cgm: f64) -> f64 {
        let s = self.cfg.noise_sd;
        if s == 0.0 {
            return glucose_reward(mean_cgm);
        }
        const STEPS: usize = 800;
        let h = 16.0 / STEPS as f64;
        let mut total = 0.0;
        for k in 0..=STEPS {
            let z = -8.0 + k as f64 * h;
            let w = if k == 0 || k == STEPS { 0.5 } else { 1.0 };
            total += w * glucose_reward(mean_cgm + s * z) * (-0.5 * z * z).exp();
        }
        total * h / (2.0 * std::f64::consts::PI).sqrt()
    }
}

impl BanditEnv for GlucoseEnv {
    fn num_actions(&self) -> usize {
        GLUCOSE_ACTIONS
    }

    fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(vec![AttributeKind::Continuous { mean: 0.0, std: 1.0 }; 9]).expect("valid schema")
    }

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context {
        let f: Vec<f64> = (0..self.cfg.factors).map(|_| normal(rng)).collect();
        let l = self.cfg.loading;
        let x = (0..9)
            .map(|k| l * f[k % self.cfg.factors] + (1.0 - l * l).sqrt() * normal(rng))
            .collect();
        Context { x, hidden: vec![] }
    }

    fn reward_means(&self, ctx: &Context) -> Vec<f64> {
        (0..GLUCOSE_ACTIONS).map(|a| self.expected_reward(self.mean_cgm(&ctx.x, a))).collect()
    }

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64 {
        glucose_reward(self.mean_cgm(&ctx.x, a) + self.cfg.noise_sd * normal(rng))
    }

    fn logging_policy(&self, ctx: &Context) -> Vec<f64> {
        let w = self.cfg.logging_width;
        let logits: Vec<f64> = (0..GLUCOSE_ACTIONS)
            .map(|a| {
                let gap = (self.mean_cgm(&ctx.x, a) - self.cfg.logging_target) / (-self.cfg.dose_linear).max(1.0);
                -(gap * gap) / (2.0 * w * w)
            })
            .collect();
        let p = softmax(&logits);
        let u = self.cfg.uniform_share;
        p.iter().map(|q| (1.0 - u) * q + u / GLUCOSE_ACTIONS as f64).collect()
    }
}

pub fn gen_glucose_bandit(cfg: &GlucoseConfig) -> Result<(GlucoseEnv, LoggedDataset)> {
    let env = GlucoseEnv::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = simulate(&env, cfg.n, &Missingness::Mcar { rate: cfg.erase_rate }, &mut rng)?;
    Ok((env, data))
}

// ---------------------------------------------------------------- small envs

/// Categorical features with uniform prior over the joint states, a reward
/// table and a logging table. Rewards are Bernoulli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEnv {
    pub cardinalities: Vec<usize>,
    /// `θ(x, a)` per joint state (attribute 0 least significant).
    pub theta: Vec<Vec<f64>>,
    /// Logging probabilities per joint state; uniform when empty.
    #[serde(default)]
    pub logging: Vec<Vec<f64>>,
}

impl TableEnv {
    pub fn new(cardinalities: Vec<usize>, theta: Vec<Vec<f64>>, logging: Vec<Vec<f64>>) -> Result<Self> {
        let n: usize = cardinalities.iter().product();
        if cardinalities.iter().any(|&c| c < 2) {
            return Err(Error::Config("table env attributes need cardinality >= 2".into()));
        }
        let k = theta.first().map_or(0, |r| r.len());
        if theta.len() != n || k == 0 || theta.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("theta must be {n} rows of equal positive width")));
        }
        if theta.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("Bernoulli reward means must lie in [0, 1]".into()));
        }
        if !logging.is_empty()
            && (logging.len() != n
                || logging
                    .iter()
                    .any(|r| r.len() != k || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 || r.iter().any(|p| *p < 0.0)))
        {
            return Err(Error::Config("logging table rows must be distributions over the actions".into()));
        }
        Ok(TableEnv {
            cardinalities,
            theta,
            logging,
        })
    }

    pub fn num_states(&self) -> usize {
        self.cardinalities.iter().product()
    }

    pub fn state_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (j, &c) in self.cardinalities.iter().enumerate().rev() {
            idx = idx * c + x[j] as usize;
        }
        idx
    }

    pub fn values_of(&self, mut s: usize) -> Vec<f64> {
        self.cardinalities
            .iter()
            .map(|&c| {
                let v = s % c;
                s /= c;
                v as f64
            })
            .collect()
    }
}

impl BanditEnv for TableEnv {
    fn num_actions(&self) -> usize {
        self.theta[0].len()
    }

    fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(
            self.cardinalities
                .iter()
                .map(|&c| AttributeKind::Categorical { cardinality: c })
                .collect(),
        )
        .expect("valid schema")
    }

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context {
        let s = rng.random_range(0..self.num_states());
        Context {
            x: self.values_of(s),
            hidden: vec![s as f64],
        }
    }

    fn reward_means(&self, ctx: &Context) -> Vec<f64> {
        self.theta[ctx.hidden[0] as usize].clone()
    }

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64 {
        if rng.random::<f64>() < self.theta[ctx.hidden[0] as usize][a] {
            1.0
        } else {
            0.0
        }
    }

    fn logging_policy(&self, ctx: &Context) -> Vec<f64> {
        if self.logging.is_empty() {
            let k = self.num_actions();
            vec![1.0 / k as f64; k]
        } else {
            self.logging[ctx.hidden[0] as usize].clone()
        }
    }
}

/// Standard normal features, rewards `b_a + w_a·x + N(0, noise_sd²)`, uniform
/// logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEnv {
    pub intercepts: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub noise_sd: f64,
}

impl LinearEnv {
    pub fn new(intercepts: Vec<f64>, weights: Vec<Vec<f64>>, noise_sd: f64) -> Result<Self> {
        let d = weights.first().map_or(0, |w| w.len());
        if intercepts.is_empty() || intercepts.len() != weights.len() || d == 0 || weights.iter().any(|w| w.len() != d) {
            return Err(Error::Config("linear env needs one weight vector of common width per action".into()));
        }
        Ok(LinearEnv {
            intercepts,
            weights,
            noise_sd,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }
}

impl BanditEnv for LinearEnv {
    fn num_actions(&self) -> usize {
        self.intercepts.len()
    }

    fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(vec![AttributeKind::Continuous { mean: 0.0, std: 1.0 }; self.dim()]).expect("valid schema")
    }

    fn sample_context(&self, rng: &mut dyn rand::RngCore) -> Context {
        Context {
            x: (0..self.dim()).map(|_| normal(rng)).collect(),
            hidden: vec![],
        }
    }

    fn reward_means(&self, ctx: &Context) -> Vec<f64> {
        self.intercepts
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| b + w.iter().zip(&ctx.x).map(|(p, q)| p * q).sum::<f64>())
            .collect()
    }

    fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut dyn rand::RngCore) -> f64 {
        self.reward_means(ctx)[a] + self.noise_sd * normal(rng)
    }

    fn logging_policy(&self, _ctx: &Context) -> Vec<f64> {
        let k = self.num_actions();
        vec![1.0 / k as f64; k]
    }
}

// ---------------------------------------------------------------- config

/// Environment family selector for JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EnvConfig {
    Digit(DigitConfig),
    IhdpB(IhdpConfig),
    Glucose(GlucoseConfig),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Digit(_) => "digit",
            EnvConfig::IhdpB(_) => "ihdp-b",
            EnvConfig::Glucose(_) => "glucose",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            EnvConfig::Digit(c) => c.seed,
            EnvConfig::IhdpB(c) => c.seed,
            EnvConfig::Glucose(c) => c.seed,
        }
    }

    pub fn generate(&self) -> Result<(Box<dyn BanditEnv>, LoggedDataset)> {
        Ok(match self {
            EnvConfig::Digit(c) => {
                let (e, d) = gen_digit_bandit(c)?;
                (Box::new(e), d)
            }
            EnvConfig::IhdpB(c) => {
                let (e, d) = gen_ihdp_b(c)?;
                (Box::new(e), d)
            }
            EnvConfig::Glucose(c) => {
                let (e, d) = gen_glucose_bandit(c)?;
                (Box::new(e), d)
            }
        })
    }
}
