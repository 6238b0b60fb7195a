use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use pvae_policy::cpvae::{train_cpvae, CpvaeModel, PredictMode};
use pvae_policy::estimators::{PvaeSimilarity, SpvaeEstimator};
use pvae_policy::harness::{estimate_ate, evaluate_policy_par, EvalResult, LoggedDataset};
use pvae_policy::io::{load_dataset, save_dataset, schema_path, truth_path, write_atomic, write_json_atomic, ModelFile};
use pvae_policy::limits::{bayes_accuracy, decomposition, DiscreteEnv};
use pvae_policy::propensity::{fit_propensity, PropensityModel};
use pvae_policy::pvae::{train_pvae, PvaeModel};
use pvae_policy::strategies::{
    estimate_risk, recommend, risk_for_dims, CpvaeOracle, RewardOracle, SpvaeOracle, StrategySpec,
};
use pvae_policy::PartialFeature;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{Command, EstimatorKind, LimitsSource, RunConfig};
use crate::UsageError;

/// Files written by a run and a small JSON summary for the manifest.
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
    /// Lines for standard output.
    pub report: Vec<String>,
}

pub fn run(cfg: &RunConfig, threads: usize) -> Result<Outcome> {
    info!("resolved config: {}", serde_json::to_string(cfg)?);
    match cfg.command {
        Command::GenData => gen_data(cfg),
        Command::TrainPvae => train_pvae_cmd(cfg),
        Command::FitPropensity => fit_propensity_cmd(cfg),
        Command::TrainCpvae => train_cpvae_cmd(cfg),
        Command::Recommend => recommend_cmd(cfg, threads),
        Command::Evaluate => evaluate_cmd(cfg, threads),
        Command::Ate => ate_cmd(cfg),
        Command::Limits => limits_cmd(cfg),
        Command::Risk => risk_cmd(cfg),
    }
}

fn out_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| UsageError(format!("{} needs --out", cfg.command.name())).into())
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn load_data(path: &Path) -> Result<LoggedDataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model file {}", path.display()))
}

fn gen_data(cfg: &RunConfig) -> Result<Outcome> {
    let env = cfg.env.as_ref().expect("checked at resolution");
    let out = out_path(cfg)?;
    let (_, data) = env.generate()?;
    save_dataset(&data, out)?;
    let mut outputs = vec![out.to_path_buf(), schema_path(out)];
    if data.truth.is_some() {
        outputs.push(truth_path(out));
    }
    let rates = data.missing_rates();
    let mean_missing = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
    let summary = json!({
        "rows": data.len(),
        "attributes": data.schema.len(),
        "actions": data.num_actions,
        "action_counts": data.action_counts(),
        "missing_rate": mean_missing,
    });
    let report = vec![format!(
        "wrote {} rows ({} attributes, {:.3} missing) to {}",
        data.len(),
        data.schema.len(),
        mean_missing,
        out.display()
    )];
    Ok(Outcome { outputs, summary, report })
}

fn trained_pvae(cfg: &RunConfig, data: &LoggedDataset) -> Result<(PvaeModel, Vec<f64>)> {
    info!("training pvae on {} rows for {} epochs", data.len(), cfg.train.epochs);
    let t = train_pvae(&data.features(), data.schema.clone(), cfg.dims.clone(), &cfg.train)?;
    Ok((t.model, t.loss_trace))
}

fn train_pvae_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let data = load_data(cfg.data.as_deref().expect("checked"))?;
    let out = out_path(cfg)?;
    let (model, trace) = trained_pvae(cfg, &data)?;
    ModelFile::Pvae { model }.save(out)?;
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({ "loss_trace": trace }),
        report: vec![format!("pvae final loss {last:.4}, saved to {}", out.display())],
    })
}

fn fit_propensity_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let data = load_data(cfg.data.as_deref().expect("checked"))?;
    let pvae = load_model(cfg.pvae.as_deref().expect("checked"))?.into_pvae()?;
    let out = out_path(cfg)?;
    let model = fit_propensity(&data, &pvae, &cfg.propensity_fit)?;
    let summary = propensity_summary(&model, &pvae, &data)?;
    ModelFile::Propensity { model }.save(out)?;
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary,
        report: vec![format!("propensity model saved to {}", out.display())],
    })
}

fn propensity_summary(model: &PropensityModel, pvae: &PvaeModel, data: &LoggedDataset) -> Result<serde_json::Value> {
    let props = model.estimate_all(pvae, data)?;
    let n = data.len() as f64;
    let loglik = data
        .rows
        .iter()
        .zip(&props)
        .map(|(r, p)| p[r.action].ln())
        .sum::<f64>()
        / n;
    let mut v = json!({ "mean_log_likelihood": loglik });
    if let Some(truth) = &data.truth {
        let mae = props
            .iter()
            .zip(&truth.propensities)
            .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
            .sum::<f64>()
            / n;
        v["mean_abs_error_vs_truth"] = json!(mae);
    }
    Ok(v)
}

fn trained_cpvae(cfg: &RunConfig, data: &LoggedDataset, props: &[Vec<f64>]) -> Result<(CpvaeModel, Vec<f64>)> {
    info!("training cpvae for {} epochs", cfg.cpvae_train.train.epochs);
    let t = train_cpvae(data, props, &cfg.cpvae_train)?;
    Ok((t.model, t.loss_trace))
}

fn train_cpvae_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let data = load_data(cfg.data.as_deref().expect("checked"))?;
    let pvae = load_model(cfg.pvae.as_deref().expect("checked"))?.into_pvae()?;
    let prop = load_model(cfg.propensity.as_deref().expect("checked"))?.into_propensity()?;
    let out = out_path(cfg)?;
    let props = prop.estimate_all(&pvae, &data)?;
    let (model, trace) = trained_cpvae(cfg, &data, &props)?;
    ModelFile::Cpvae { model }.save(out)?;
    let last = trace.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({ "loss_trace": trace }),
        report: vec![format!("cpvae final loss {last:.4}, saved to {}", out.display())],
    })
}

/// Everything a recommender needs, either loaded from disk or trained here.
struct Models {
    data: LoggedDataset,
    pvae: PvaeModel,
    propensities: Option<Vec<Vec<f64>>>,
    cpvae: Option<CpvaeModel>,
    losses: serde_json::Value,
}

impl Models {
    /// Loads whatever paths are set in `cfg` and trains the rest on `data`.
    fn prepare(cfg: &RunConfig, data: LoggedDataset) -> Result<Models> {
        let mut losses = json!({});
        let pvae = match &cfg.pvae {
            Some(p) => load_model(p)?.into_pvae()?,
            None => {
                let (m, trace) = trained_pvae(cfg, &data)?;
                losses["pvae"] = json!(trace.last());
                m
            }
        };
        let prop_model = match &cfg.propensity {
            Some(p) => Some(load_model(p)?.into_propensity()?),
            None if cfg.estimator != EstimatorKind::Cpvae || cfg.cpvae.is_none() => {
                Some(fit_propensity(&data, &pvae, &cfg.propensity_fit)?)
            }
            None => None,
        };
        let propensities = match &prop_model {
            Some(m) => Some(m.estimate_all(&pvae, &data)?),
            None => None,
        };
        let cpvae = match (cfg.estimator, &cfg.cpvae) {
            (EstimatorKind::Cpvae, Some(p)) => Some(load_model(p)?.into_cpvae()?),
            (EstimatorKind::Cpvae, None) => {
                let props = propensities.as_deref().expect("fitted above");
                let (m, trace) = trained_cpvae(cfg, &data, props)?;
                losses["cpvae"] = json!(trace.last());
                Some(m)
            }
            _ => None,
        };
        Ok(Models {
            data,
            pvae,
            propensities,
            cpvae,
            losses,
        })
    }

    fn spvae(&self, cfg: &RunConfig) -> Result<SpvaeEstimator<PvaeSimilarity>> {
        let sim = PvaeSimilarity::new(&self.pvae, &self.data.features(), cfg.similarity_draws, cfg.seed)?;
        let props = self.propensities.clone().expect("propensities are fitted for spvae");
        Ok(SpvaeEstimator::new(&self.data, sim, props, cfg.spvae.clone())?)
    }
}

fn predict_mode(cfg: &RunConfig) -> PredictMode {
    match cfg.predict_draws {
        0 => PredictMode::Point,
        n => PredictMode::Mc(n),
    }
}

/// Runs `f` with the oracle selected by `cfg.estimator`.
fn with_oracle<T>(cfg: &RunConfig, models: &Models, f: impl FnOnce(&(dyn RewardOracle + Sync)) -> Result<T>) -> Result<T> {
    match cfg.estimator {
        EstimatorKind::Spvae | EstimatorKind::SpvaeMatched => {
            let est = models.spvae(cfg)?;
            let oracle = SpvaeOracle {
                estimator: &est,
                pvae: &models.pvae,
                matched: cfg.estimator == EstimatorKind::SpvaeMatched,
            };
            f(&oracle)
        }
        EstimatorKind::Cpvae => {
            let oracle = CpvaeOracle {
                model: models.cpvae.as_ref().expect("cpvae prepared"),
                pvae: &models.pvae,
                mode: predict_mode(cfg),
                seed: cfg.seed,
            };
            f(&oracle)
        }
    }
}

/// Per-instance stream: identical whether instances run in order or not.
fn instance_rng(seed: u64, strategy: usize, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((strategy as u64) << 32) | i as u64);
    rng
}

fn parse_row(text: &str, len: usize) -> Result<PartialFeature> {
    let cells = text
        .split(',')
        .map(|c| {
            let t = c.trim();
            if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
                Ok(None)
            } else {
                t.parse::<f64>()
                    .map(Some)
                    .map_err(|_| UsageError(format!("row: cannot parse {t:?} as a number")))
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if cells.len() != len {
        bail!(UsageError(format!("row has {} cells, the model expects {len}", cells.len())));
    }
    Ok(PartialFeature::from_options(&cells)?)
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn recommend_cmd(cfg: &RunConfig, threads: usize) -> Result<Outcome> {
    let data = load_data(cfg.data.as_deref().expect("checked"))?;
    let out = out_path(cfg)?;
    let models = Models::prepare(cfg, data)?;
    let d = models.pvae.schema().len();
    let rows: Vec<PartialFeature> = match (&cfg.row, &cfg.rows) {
        (Some(text), _) => vec![parse_row(text, d)?],
        (None, Some(path)) => load_data(path)?.features(),
        (None, None) => unreachable!("checked at resolution"),
    };
    for xt in &rows {
        models.pvae.schema().check_partial(xt)?;
    }
    let k = models.data.num_actions;
    let mut csv = String::from("row,strategy,c,action");
    for a in 0..k {
        write!(csv, ",score_{a}")?;
    }
    csv.push_str(",survivors,risk\n");
    let mut report = Vec::new();
    with_oracle(cfg, &models, |oracle| {
        for (s, spec) in cfg.strategies.iter().enumerate() {
            let recs = par_map(&rows, threads, |i, xt| {
                let mut rng = instance_rng(cfg.seed, s, i);
                recommend(oracle, xt, spec, &cfg.strategy_options, &mut rng).map_err(anyhow::Error::from)
            })?;
            for (i, r) in recs.iter().enumerate() {
                write!(csv, "{i},{},{},{}", strategy_kind(spec), spec.c().map(fmt_f64).unwrap_or_default(), r.action)?;
                for v in &r.scores {
                    write!(csv, ",{}", fmt_f64(*v))?;
                }
                let surv = r.diagnostics.survivors.map(|v| v.to_string()).unwrap_or_default();
                let risk = r.diagnostics.risk.map(fmt_f64).unwrap_or_default();
                writeln!(csv, ",{surv},{risk}")?;
                if rows.len() == 1 {
                    report.push(format!("{}: action {}", spec.label(), r.action));
                }
            }
        }
        Ok(())
    })?;
    write_atomic(out, csv.as_bytes())?;
    report.push(format!("recommendations for {} rows written to {}", rows.len(), out.display()));
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({ "rows": rows.len(), "losses": models.losses }),
        report,
    })
}

fn strategy_kind(spec: &StrategySpec) -> &'static str {
    match spec {
        StrategySpec::Imputation => "imputation",
        StrategySpec::Mer { .. } => "mer",
        StrategySpec::Conservative { .. } => "conservative",
    }
}

/// Order-preserving parallel map over at most `threads` workers.
fn par_map<T, U, F>(items: &[T], threads: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync,
{
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let threads = threads.clamp(1, items.len());
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, x)| f(c * chunk + j, x))
                        .collect::<Result<Vec<U>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            let part = h.join().map_err(|_| anyhow::anyhow!("worker thread panicked"))??;
            out.extend(part);
        }
        Ok(out)
    })
}

const METRICS_HEADER: &str = "run_id,family,strategy,c,avg_reward,se,tail_fraction,tail_count,n_test,delta_ate\n";

fn run_id(cfg: &RunConfig) -> String {
    let family = cfg.family.map(|f| f.name()).unwrap_or("custom");
    format!("{}-{family}-s{}", cfg.command.name(), cfg.seed)
}

fn evaluate_cmd(cfg: &RunConfig, threads: usize) -> Result<Outcome> {
    let env_cfg = cfg.env.as_ref().expect("checked at resolution");
    let out = out_path(cfg)?;
    let (env, generated) = env_cfg.generate()?;
    let data = match &cfg.data {
        Some(p) => load_data(p)?,
        None => generated,
    };
    let models = Models::prepare(cfg, data)?;
    let schema = models.data.schema.clone();
    let results: Vec<EvalResult> = with_oracle(cfg, &models, |oracle| {
        cfg.strategies
            .iter()
            .enumerate()
            .map(|(s, spec)| {
                info!("evaluating {}", spec.label());
                evaluate_policy_par(env.as_ref(), &schema, &cfg.eval, threads, |i, xt| {
                    let mut rng = instance_rng(cfg.eval.seed, s, i);
                    Ok(recommend(oracle, xt, spec, &cfg.strategy_options, &mut rng)?.action)
                })
                .map_err(anyhow::Error::from)
            })
            .collect()
    })?;
    let id = run_id(cfg);
    let family = env_cfg.name();
    let mut metrics = String::from(METRICS_HEADER);
    let mut instances = String::from("run_id,strategy,c,instance,action,reward\n");
    let mut report = Vec::new();
    for (spec, r) in cfg.strategies.iter().zip(&results) {
        let c = spec.c().map(fmt_f64).unwrap_or_default();
        writeln!(
            metrics,
            "{id},{family},{},{c},{},{},{},{},{},",
            strategy_kind(spec),
            r.avg_reward,
            r.se,
            r.tail_fraction,
            r.tail_count,
            r.n_test
        )?;
        for (i, (a, rw)) in r.actions.iter().zip(&r.rewards).enumerate() {
            writeln!(instances, "{id},{},{c},{i},{a},{rw}", strategy_kind(spec))?;
        }
        report.push(format!(
            "{:<24} avg_reward {:>8.4} (se {:.4})  tail {}/{}",
            spec.label(),
            r.avg_reward,
            r.se,
            r.tail_count,
            r.n_test
        ));
    }
    let inst_path = sibling(out, "_instances", "csv");
    write_atomic(out, metrics.as_bytes())?;
    write_atomic(&inst_path, instances.as_bytes())?;
    let summary = json!({
        "losses": models.losses,
        "strategies": cfg.strategies.iter().zip(&results).map(|(s, r)| json!({
            "strategy": s.label(),
            "avg_reward": r.avg_reward,
            "avg_expected_reward": r.avg_expected_reward,
            "tail_count": r.tail_count,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        outputs: vec![out.to_path_buf(), inst_path],
        summary,
        report,
    })
}

fn ate_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let out = out_path(cfg)?;
    let data = match (&cfg.data, &cfg.env) {
        (Some(p), _) => load_data(p)?,
        (None, Some(env)) => env.generate()?.1,
        (None, None) => unreachable!("checked at resolution"),
    };
    if data.num_actions != 2 {
        bail!(UsageError(format!("ate needs a two-action dataset, got {} actions", data.num_actions)));
    }
    let models = Models::prepare(cfg, data)?;
    let spec = cfg.strategies[0];
    let res = with_oracle(cfg, &models, |oracle| {
        estimate_ate(&models.data, |i, xt| {
            let mut rng = instance_rng(cfg.seed, 0, i);
            Ok(recommend(oracle, xt, &spec, &cfg.strategy_options, &mut rng)?.scores)
        })
        .map_err(anyhow::Error::from)
    })?;
    let family = cfg.family.map(|f| f.name()).unwrap_or("custom");
    let mut metrics = String::from(METRICS_HEADER);
    let c = spec.c().map(fmt_f64).unwrap_or_default();
    writeln!(metrics, "{},{family},{},{c},,,,,{},{}", run_id(cfg), strategy_kind(&spec), models.data.len(), res.delta)?;
    write_atomic(out, metrics.as_bytes())?;
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({
            "tau_hat": res.tau_hat,
            "tau_true": res.tau_true,
            "delta": res.delta,
            "losses": models.losses,
        }),
        report: vec![format!(
            "tau_hat {:.4}  tau_true {:.4}  delta {:.4}",
            res.tau_hat, res.tau_true, res.delta
        )],
    })
}

fn limits_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let env = match cfg.limits.as_ref().expect("checked") {
        LimitsSource::Example1 { rho } => {
            if !(0.0..=1.0).contains(rho) {
                bail!(UsageError(format!("rho must lie in [0, 1], got {rho}")));
            }
            DiscreteEnv::example1_with_rho(*rho)
        }
        LimitsSource::File { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            DiscreteEnv::from_json(&text)?
        }
    };
    let d = decomposition(&env)?;
    let bayes = bayes_accuracy(&env)?;
    let agree = (d.h_cond_direct - d.h_cond_prop1).abs();
    let report = vec![
        format!(
            "H_a={:.4} I={:.4} H_cond={:.4} heuristic={:.4}",
            d.h_a,
            d.i_xxt,
            d.h_cond_direct,
            d.heuristic_accuracy()
        ),
        format!(
            "I(X;X~|a)={:.6} H_cond(direct)={:.12} H_cond(decomposition)={:.12} |diff|={agree:.1e}",
            d.i_cond, d.h_cond_direct, d.h_cond_prop1
        ),
        format!("bayes_accuracy={bayes:.6}"),
    ];
    let summary = json!({
        "h_a": d.h_a,
        "i_x_xt": d.i_xxt,
        "i_x_xt_given_a": d.i_cond,
        "h_cond_direct": d.h_cond_direct,
        "h_cond_decomposition": d.h_cond_prop1,
        "heuristic_accuracy": d.heuristic_accuracy(),
        "bayes_accuracy": bayes,
    });
    let mut outputs = Vec::new();
    if let Some(out) = &cfg.out {
        write_json_atomic(out, &summary)?;
        outputs.push(out.clone());
    }
    Ok(Outcome { outputs, summary, report })
}

fn risk_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let c = cfg.strategies[0].c().expect("checked");
    let (value, dims) = match (cfg.risk_dims, &cfg.row, &cfg.data) {
        (Some(d), _, _) => (risk_for_dims(d, c)?, d),
        (None, Some(row), Some(data)) => {
            let data = load_data(data)?;
            let xt = parse_row(row, data.schema.len())?;
            let r = estimate_risk(&data.schema, &xt, c)?;
            (r.value, r.dims)
        }
        _ => unreachable!("checked at resolution"),
    };
    let summary = json!({ "c": c, "dims": dims, "risk": value });
    let mut outputs = Vec::new();
    if let Some(out) = &cfg.out {
        write_json_atomic(out, &summary)?;
        outputs.push(out.clone());
    }
    Ok(Outcome {
        outputs,
        summary,
        report: vec![format!("risk(c={c}, d_miss={dims}) = {value:.6}")],
    })
}
