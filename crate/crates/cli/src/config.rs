use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pvae_policy::cpvae::CpvaeConfig;
use pvae_policy::estimators::SpvaeOptions;
use pvae_policy::harness::{DigitConfig, EnvConfig, EvalConfig, GlucoseConfig, IhdpConfig, Missingness};
use pvae_policy::propensity::PropensityConfig;
use pvae_policy::pvae::{TrainConfig, VaeDims};
use pvae_policy::strategies::{StrategyOptions, StrategySpec};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    TrainPvae,
    TrainCpvae,
    FitPropensity,
    Recommend,
    Evaluate,
    Ate,
    Limits,
    Risk,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainPvae => "train-pvae",
            Command::TrainCpvae => "train-cpvae",
            Command::FitPropensity => "fit-propensity",
            Command::Recommend => "recommend",
            Command::Evaluate => "evaluate",
            Command::Ate => "ate",
            Command::Limits => "limits",
            Command::Risk => "risk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Digit,
    IhdpB,
    Glucose,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Digit => "digit",
            Family::IhdpB => "ihdp-b",
            Family::Glucose => "glucose",
        }
    }

    fn of(env: &EnvConfig) -> Family {
        match env {
            EnvConfig::Digit(_) => Family::Digit,
            EnvConfig::IhdpB(_) => Family::IhdpB,
            EnvConfig::Glucose(_) => Family::Glucose,
        }
    }

    /// Network sizes and training schedule used when nothing else is given.
    fn model_preset(self) -> (VaeDims, TrainConfig) {
        let train = |epochs| TrainConfig {
            epochs,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            n_mc: 1,
        };
        match self {
            Family::Digit => (
                VaeDims {
                    embed_dim: 20,
                    feature_dim: 400,
                    latent_dim: 20,
                    h_hidden: vec![],
                    f_hidden: vec![500, 200],
                    decoder_hidden: vec![200, 500],
                },
                train(20),
            ),
            Family::IhdpB => (
                VaeDims {
                    embed_dim: 10,
                    feature_dim: 5,
                    latent_dim: 10,
                    h_hidden: vec![],
                    f_hidden: vec![20, 20, 20],
                    decoder_hidden: vec![20, 20],
                },
                train(25),
            ),
            Family::Glucose => (
                VaeDims {
                    embed_dim: 5,
                    feature_dim: 8,
                    latent_dim: 5,
                    h_hidden: vec![],
                    f_hidden: vec![10, 10],
                    decoder_hidden: vec![10, 10],
                },
                train(25),
            ),
        }
    }

    fn default_env(self) -> EnvConfig {
        match self {
            Family::Digit => EnvConfig::Digit(DigitConfig::default()),
            Family::IhdpB => EnvConfig::IhdpB(IhdpConfig::default()),
            Family::Glucose => EnvConfig::Glucose(GlucoseConfig::default()),
        }
    }

    /// Test-time missingness and tail threshold of each experiment. Families
    /// without a reported tail use `NO_TAIL`.
    fn eval_preset(self) -> (f64, f64) {
        match self {
            Family::Digit => (0.5, -7.0),
            Family::IhdpB => (0.3, NO_TAIL),
            Family::Glucose => (0.3, -2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Spvae,
    SpvaeMatched,
    Cpvae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Imputation,
    Mer,
    Conservative,
}

/// Every setting a run can take. Read from the `--config` JSON file and from
/// flags; a flag wins over the file. Unset values fall back to the family
/// preset, then to library defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// JSON config file with any of these settings (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// Environment family: picks the generator and the hyperparameter preset.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// JSON file holding a full environment config (tagged by "family").
    #[arg(long)]
    pub env_file: Option<PathBuf>,
    #[arg(skip)]
    pub env: Option<EnvConfig>,
    /// Number of logged rows to generate.
    #[arg(long)]
    pub n: Option<usize>,
    /// MCAR erasure rate of the generated log.
    #[arg(long)]
    pub missing: Option<f64>,

    /// Logged dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub pvae: Option<PathBuf>,
    #[arg(long)]
    pub cpvae: Option<PathBuf>,
    #[arg(long)]
    pub propensity: Option<PathBuf>,
    /// Primary output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest path (default: next to the output).
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    /// Conservative density-ratio threshold.
    #[arg(long)]
    pub c: Option<f64>,
    /// Posterior samples for MER.
    #[arg(long)]
    pub t: Option<usize>,
    /// Prior samples for the conservative strategy.
    #[arg(long)]
    pub u: Option<usize>,
    /// Several strategies evaluated in one run (config file only).
    #[arg(skip)]
    pub strategies: Option<Vec<StrategySpec>>,

    /// Attribute embedding width d_e.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Width K of the aggregated set representation.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Latent width d_z.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub h_hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub f_hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub decoder_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs of the conditional model (defaults to `epochs`).
    #[arg(long)]
    pub cpvae_epochs: Option<usize>,
    #[arg(long)]
    pub cpvae_lr: Option<f64>,

    /// Imputations m of the propensity fit.
    #[arg(long)]
    pub imputations: Option<usize>,
    /// Probability floor ε of the fitted propensities.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Cap W_max on inverse-propensity weights.
    #[arg(long)]
    pub weight_cap: Option<f64>,
    /// Posterior draws L for densities p(x | x̃).
    #[arg(long)]
    pub draws: Option<usize>,
    /// Rows M sampled per SPVAE query (default: all).
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub reward_dropout: Option<f64>,
    /// Weight the CPVAE loss by inverse propensity.
    #[arg(long)]
    pub ips: Option<bool>,
    /// Posterior draws for CPVAE reward prediction (0 = posterior mean).
    #[arg(long)]
    pub predict_draws: Option<usize>,

    #[arg(long)]
    pub n_test: Option<usize>,
    /// MCAR erasure rate of the test contexts.
    #[arg(long)]
    pub test_missing: Option<f64>,
    /// Rewards below this count as tail events.
    #[arg(long, allow_negative_numbers = true)]
    pub tail: Option<f64>,
    #[arg(long)]
    pub eval_seed: Option<u64>,

    /// Dataset CSV whose feature rows get recommendations.
    #[arg(long)]
    pub rows: Option<PathBuf>,
    /// One feature row for `recommend`/`risk`, comma separated, `NA` = missing.
    #[arg(long, allow_hyphen_values = true)]
    pub row: Option<String>,
    /// Use the worked binary example for `limits`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub example1: Option<bool>,
    /// JSON file with a discrete environment for `limits`.
    #[arg(long)]
    pub limits_env: Option<PathBuf>,
    /// Erasure probability of the example channel.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of missing continuous attributes for `risk`.
    #[arg(long)]
    pub dims: Option<usize>,
}

macro_rules! take {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Overrides {
    /// Values in `flags` replace those already present.
    pub fn merge(mut self, flags: &Overrides) -> Overrides {
        take!(self, flags; seed, family, env_file, env, n, missing, data, pvae, cpvae, propensity, out, manifest,
            estimator, strategy, c, t, u, strategies, embed_dim, feature_dim, latent_dim, h_hidden, f_hidden,
            decoder_hidden, epochs, batch, lr, cpvae_epochs, cpvae_lr, imputations, clip, weight_cap, draws,
            subsample, reward_dropout, ips, predict_draws, n_test, test_missing, tail, eval_seed, rows, row, example1,
            limits_env, rho, dims);
        self
    }

    /// File settings (if `--config` is given) overridden by the flags.
    pub fn load(flags: &Overrides) -> Result<Overrides> {
        let base = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                serde_json::from_str::<Overrides>(&text)
                    .map_err(|e| UsageError(format!("config file {}: {e}", path.display())))?
            }
            None => Overrides::default(),
        };
        Ok(base.merge(flags))
    }
}

/// Fully resolved settings of one run; stored in the manifest and sufficient
/// to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub family: Option<Family>,
    pub env: Option<EnvConfig>,
    pub data: Option<PathBuf>,
    pub pvae: Option<PathBuf>,
    pub cpvae: Option<PathBuf>,
    pub propensity: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub estimator: EstimatorKind,
    pub strategies: Vec<StrategySpec>,
    pub strategy_options: StrategyOptions,
    pub dims: VaeDims,
    pub train: TrainConfig,
    pub cpvae_train: CpvaeConfig,
    pub propensity_fit: PropensityConfig,
    pub spvae: SpvaeOptions,
    pub similarity_draws: usize,
    pub predict_draws: usize,
    pub eval: EvalConfig,
    pub rows: Option<PathBuf>,
    pub row: Option<String>,
    pub limits: Option<LimitsSource>,
    pub risk_dims: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum LimitsSource {
    Example1 { rho: f64 },
    File { path: PathBuf },
}

/// Tail threshold that no reward falls below. Finite so that it survives a
/// JSON round trip through the manifest.
const NO_TAIL: f64 = f64::MIN;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require(value: &Option<PathBuf>, flag: &str, command: Command) -> Result<()> {
    if value.is_none() {
        bail!(usage(format!("{} needs --{flag}", command.name())));
    }
    Ok(())
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        bail!(usage(format!("{name} must lie in [0, 1), got {v}")));
    }
    Ok(())
}

fn apply_env_overrides(env: &mut EnvConfig, o: &Overrides, seed: u64) -> Result<()> {
    if let Some(m) = o.missing {
        check_rate("missing", m)?;
    }
    match env {
        EnvConfig::Digit(c) => {
            c.seed = seed;
            if let Some(n) = o.n {
                c.n = n;
            }
            if let Some(m) = o.missing {
                c.erase_rate = m;
            }
        }
        EnvConfig::IhdpB(c) => {
            c.seed = seed;
            if let Some(n) = o.n {
                c.n = n;
            }
            if let Some(m) = o.missing {
                c.missing = m;
            }
        }
        EnvConfig::Glucose(c) => {
            c.seed = seed;
            if let Some(n) = o.n {
                c.n = n;
            }
            if let Some(m) = o.missing {
                c.erase_rate = m;
            }
        }
    }
    Ok(())
}

fn strategy_from(o: &Overrides) -> Result<StrategySpec> {
    let kind = o.strategy.unwrap_or(StrategyKind::Mer);
    let spec = match kind {
        StrategyKind::Imputation => StrategySpec::Imputation,
        StrategyKind::Mer => StrategySpec::Mer { t: o.t.unwrap_or(20) },
        StrategyKind::Conservative => StrategySpec::Conservative {
            c: o.c.ok_or_else(|| usage("--strategy conservative needs --c"))?,
            u: o.u.unwrap_or(50),
        },
    };
    Ok(spec)
}

fn default_manifest(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

impl RunConfig {
    pub fn resolve(command: Command, o: &Overrides) -> Result<RunConfig> {
        let seed = o.seed.unwrap_or(0);

        let mut env = match (&o.env_file, &o.env) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading environment file {}", path.display()))?;
                Some(
                    serde_json::from_str::<EnvConfig>(&text)
                        .map_err(|e| usage(format!("env_file {}: {e}", path.display())))?,
                )
            }
            (None, Some(env)) => Some(env.clone()),
            (None, None) => o.family.map(Family::default_env),
        };
        if let Some(e) = env.as_mut() {
            apply_env_overrides(e, o, seed)?;
        }
        let family = o.family.or(env.as_ref().map(Family::of));
        if let (Some(f), Some(e)) = (o.family, env.as_ref()) {
            if Family::of(e) != f {
                bail!(usage(format!("family {} disagrees with the environment config ({})", f.name(), e.name())));
            }
        }

        let (mut dims, mut train) = family.map(Family::model_preset).unwrap_or_default();
        if let Some(v) = o.embed_dim {
            dims.embed_dim = v;
        }
        if let Some(v) = o.feature_dim {
            dims.feature_dim = v;
        }
        if let Some(v) = o.latent_dim {
            dims.latent_dim = v;
        }
        if let Some(v) = &o.h_hidden {
            dims.h_hidden = v.clone();
        }
        if let Some(v) = &o.f_hidden {
            dims.f_hidden = v.clone();
        }
        if let Some(v) = &o.decoder_hidden {
            dims.decoder_hidden = v.clone();
        }
        dims.validate().map_err(|e| usage(e.to_string()))?;
        train.seed = seed;
        if let Some(v) = o.epochs {
            train.epochs = v;
        }
        if let Some(v) = o.batch {
            train.batch_size = v;
        }
        if let Some(v) = o.lr {
            train.lr = v;
        }
        train.validate().map_err(|e| usage(e.to_string()))?;

        let mut cpvae_train = CpvaeConfig {
            dims: dims.clone(),
            train: train.clone(),
            ..Default::default()
        };
        if let Some(v) = o.cpvae_epochs {
            cpvae_train.train.epochs = v;
        }
        if let Some(v) = o.cpvae_lr {
            cpvae_train.train.lr = v;
        }
        if let Some(v) = o.reward_dropout {
            check_rate("reward_dropout", v)?;
            cpvae_train.reward_dropout = v;
        }
        if let Some(v) = o.ips {
            cpvae_train.ips = v;
        }

        let mut spvae = SpvaeOptions { seed, ..Default::default() };
        if let Some(v) = o.weight_cap {
            if !(v >= 1.0) {
                bail!(usage(format!("weight_cap must be >= 1, got {v}")));
            }
            spvae.weight_cap = v;
            cpvae_train.weight_cap = v;
        }
        if let Some(m) = o.subsample {
            if m == 0 {
                bail!(usage("subsample must be >= 1"));
            }
            spvae.subsample = Some(m);
        }

        let mut propensity_fit = PropensityConfig { seed, ..Default::default() };
        if let Some(v) = o.imputations {
            if v == 0 {
                bail!(usage("imputations must be >= 1"));
            }
            propensity_fit.imputations = v;
        }
        if let Some(v) = o.clip {
            if !(0.0..0.5).contains(&v) {
                bail!(usage(format!("clip must lie in [0, 0.5), got {v}")));
            }
            propensity_fit.clip = v;
        }

        let similarity_draws = o.draws.unwrap_or(1);
        if similarity_draws == 0 {
            bail!(usage("draws must be >= 1"));
        }
        let strategy_options = StrategyOptions {
            density_draws: similarity_draws,
            ..Default::default()
        };

        let strategies = match &o.strategies {
            Some(list) if o.strategy.is_none() => list.clone(),
            _ => vec![strategy_from(o)?],
        };
        if strategies.is_empty() {
            bail!(usage("strategies must not be empty"));
        }
        for s in &strategies {
            s.validate().map_err(|e| usage(format!("strategy {}: {e}", s.label())))?;
        }

        let (test_missing, tail) = family.map(Family::eval_preset).unwrap_or((0.3, NO_TAIL));
        if let Some(t) = o.tail.filter(|t| !t.is_finite()) {
            bail!(usage(format!("tail must be a finite number, got {t}")));
        }
        let eval = EvalConfig {
            n_test: o.n_test.unwrap_or(500),
            missing: Missingness::Mcar {
                rate: o.test_missing.unwrap_or(test_missing),
            },
            tail_threshold: o.tail.unwrap_or(tail),
            seed: o.eval_seed.unwrap_or(seed.wrapping_add(1_000_003)),
        };
        if let Some(v) = o.test_missing {
            check_rate("test_missing", v)?;
        }
        if eval.n_test == 0 {
            bail!(usage("n_test must be >= 1"));
        }

        let limits = match (o.example1.unwrap_or(false), &o.limits_env) {
            (true, Some(_)) => bail!(usage("give either --example1 or --limits-env, not both")),
            (true, None) => Some(LimitsSource::Example1 { rho: o.rho.unwrap_or(0.5) }),
            (false, Some(path)) => Some(LimitsSource::File { path: path.clone() }),
            (false, None) => None,
        };

        let cfg = RunConfig {
            command,
            seed,
            family,
            env,
            data: o.data.clone(),
            pvae: o.pvae.clone(),
            cpvae: o.cpvae.clone(),
            propensity: o.propensity.clone(),
            out: o.out.clone(),
            estimator: o.estimator.unwrap_or(EstimatorKind::Spvae),
            strategies,
            strategy_options,
            dims,
            train,
            cpvae_train,
            propensity_fit,
            spvae,
            similarity_draws,
            predict_draws: o.predict_draws.unwrap_or(0),
            eval,
            rows: o.rows.clone(),
            row: o.row.clone(),
            limits,
            risk_dims: o.dims,
        };
        cfg.check_inputs()?;
        Ok(cfg)
    }

    /// Per-command presence checks on paths and sources.
    fn check_inputs(&self) -> Result<()> {
        let c = self.command;
        match c {
            Command::GenData => {
                if self.env.is_none() {
                    bail!(usage("gen-data needs --family or --env-file"));
                }
                require(&self.out, "out", c)?;
            }
            Command::TrainPvae => {
                require(&self.data, "data", c)?;
                require(&self.out, "out", c)?;
            }
            Command::FitPropensity => {
                require(&self.data, "data", c)?;
                require(&self.pvae, "pvae", c)?;
                require(&self.out, "out", c)?;
            }
            Command::TrainCpvae => {
                require(&self.data, "data", c)?;
                require(&self.pvae, "pvae", c)?;
                require(&self.propensity, "propensity", c)?;
                require(&self.out, "out", c)?;
            }
            Command::Recommend => {
                require(&self.data, "data", c)?;
                require(&self.pvae, "pvae", c)?;
                require(&self.out, "out", c)?;
                if self.row.is_some() == self.rows.is_some() {
                    bail!(usage("recommend needs exactly one of --row and --rows"));
                }
                self.check_estimator_inputs()?;
            }
            Command::Evaluate => {
                if self.env.is_none() {
                    bail!(usage("evaluate needs --family or --env-file"));
                }
                require(&self.out, "out", c)?;
            }
            Command::Ate => {
                require(&self.out, "out", c)?;
                if self.data.is_none() && self.env.is_none() {
                    bail!(usage("ate needs --data or --family ihdp-b"));
                }
            }
            Command::Limits => {
                if self.limits.is_none() {
                    bail!(usage("limits needs --example1 or --limits-env"));
                }
            }
            Command::Risk => {
                let Some(spec) = self.strategies.first() else { unreachable!() };
                if spec.c().is_none() {
                    bail!(usage("risk needs --strategy conservative with --c"));
                }
                if self.risk_dims.is_none() && (self.row.is_none() || self.data.is_none()) {
                    bail!(usage("risk needs --dims, or --row together with --data for the schema"));
                }
            }
        }
        if let Some(out) = &self.out {
            let inputs = [&self.data, &self.pvae, &self.cpvae, &self.propensity, &self.rows];
            if inputs.iter().any(|p| p.as_ref() == Some(out)) {
                bail!(usage(format!("--out {} must differ from every input path", out.display())));
            }
        }
        Ok(())
    }

    /// Recommendation from saved models needs the estimator's inputs on disk.
    fn check_estimator_inputs(&self) -> Result<()> {
        match self.estimator {
            EstimatorKind::Cpvae => require(&self.cpvae, "cpvae", self.command),
            EstimatorKind::Spvae | EstimatorKind::SpvaeMatched => {
                require(&self.data, "data", self.command)?;
                require(&self.propensity, "propensity", self.command)
            }
        }
    }

    pub fn manifest_path(&self, explicit: Option<&Path>) -> Option<PathBuf> {
        explicit.map(Path::to_path_buf).or_else(|| self.out.as_deref().map(default_manifest))
    }
}
