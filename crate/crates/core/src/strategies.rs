//! Recommendation strategies over a reward estimator: imputation, maximum
//! expected reward (MER), and the conservative max-min rule, plus the
//! Gaussian proxy for the risk of the conservative threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::cpvae::{CpvaeModel, PredictMode};
use crate::error::{Error, Result};
use crate::estimators::{Similarity, SpvaeEstimator};
use crate::pvae::{FeatureSchema, PartialFeature, PvaeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategySpec {
    Imputation,
    Mer { t: usize },
    Conservative { c: f64, u: usize },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategySpec::Imputation => Ok(()),
            StrategySpec::Mer { t: 0 } => Err(Error::Argument("MER needs t >= 1".into())),
            StrategySpec::Mer { .. } => Ok(()),
            StrategySpec::Conservative { c, u } => {
                if !(0.0..1.0).contains(&c) {
                    Err(Error::Argument(format!("conservative c must lie in [0, 1), got {c}")))
                } else if u == 0 {
                    Err(Error::Argument("conservative strategy needs u >= 1".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StrategySpec::Imputation => "imputation".into(),
            StrategySpec::Mer { .. } => "mer".into(),
            StrategySpec::Conservative { c, .. } => format!("conservative(c={c})"),
        }
    }

    pub fn c(&self) -> Option<f64> {
        match *self {
            StrategySpec::Conservative { c, .. } => Some(c),
            _ => None,
        }
    }
}

/// Settings shared by the sampling strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyOptions {
    /// Posterior latents used for `p(x | x̃)` (1 = posterior mean).
    pub density_draws: usize,
    /// Overwrite the observed attributes of prior samples with the observed
    /// values, so that candidates are completions of `x̃`.
    pub pin_observed: bool,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions {
            density_draws: 1,
            pin_observed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScore {
    pub value: f64,
    pub no_support: bool,
}

impl ActionScore {
    pub fn supported(value: f64) -> Self {
        ActionScore {
            value,
            no_support: false,
        }
    }
}

/// Reward estimates `θ̂(·, a)` together with the generative model used for
/// imputation, sampling and posterior densities.
pub trait RewardOracle {
    fn num_actions(&self) -> usize;

    fn generator(&self) -> &PvaeModel;

    fn score_complete(&self, x: &[f64]) -> Result<Vec<ActionScore>>;

    /// Scores used by the imputation strategy. Defaults to scoring the
    /// mean-mode imputation.
    fn score_partial(&self, xt: &PartialFeature) -> Result<Vec<ActionScore>> {
        let x = self.generator().impute_mean(xt)?;
        self.score_complete(&x)
    }
}

/// SPVAE-backed oracle; `matched` selects the propensity-free variant.
pub struct SpvaeOracle<'a, S: Similarity> {
    pub estimator: &'a SpvaeEstimator<S>,
    pub pvae: &'a PvaeModel,
    pub matched: bool,
}

impl<S: Similarity> RewardOracle for SpvaeOracle<'_, S> {
    fn num_actions(&self) -> usize {
        self.estimator.num_actions()
    }

    fn generator(&self) -> &PvaeModel {
        self.pvae
    }

    fn score_complete(&self, x: &[f64]) -> Result<Vec<ActionScore>> {
        if self.matched {
            Ok(self
                .estimator
                .theta_matched_all(x)?
                .into_iter()
                .map(|v| ActionScore {
                    value: v.unwrap_or(0.0),
                    no_support: v.is_none(),
                })
                .collect())
        } else {
            Ok(self
                .estimator
                .theta_all(x)?
                .into_iter()
                .map(|t| ActionScore {
                    value: t.value,
                    no_support: t.no_support,
                })
                .collect())
        }
    }
}

/// CPVAE-backed oracle. Partial features are scored directly (reward
/// treated as missing); `pvae` supplies imputation, sampling and densities.
pub struct CpvaeOracle<'a> {
    pub model: &'a CpvaeModel,
    pub pvae: &'a PvaeModel,
    pub mode: PredictMode,
    pub seed: u64,
}

impl RewardOracle for CpvaeOracle<'_> {
    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn generator(&self) -> &PvaeModel {
        self.pvae
    }

    fn score_complete(&self, x: &[f64]) -> Result<Vec<ActionScore>> {
        self.score_partial(&PartialFeature::complete(x.to_vec()))
    }

    fn score_partial(&self, xt: &PartialFeature) -> Result<Vec<ActionScore>> {
        Ok(self
            .model
            .predict_all(xt, self.mode, self.seed)?
            .into_iter()
            .map(|p| ActionScore::supported(p.mean))
            .collect())
    }
}

/// Oracle from a plain function of the complete feature.
pub struct FnOracle<'a, F: Fn(&[f64]) -> Vec<f64>> {
    pub f: F,
    pub pvae: &'a PvaeModel,
    pub num_actions: usize,
}

impl<F: Fn(&[f64]) -> Vec<f64>> RewardOracle for FnOracle<'_, F> {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn generator(&self) -> &PvaeModel {
        self.pvae
    }

    fn score_complete(&self, x: &[f64]) -> Result<Vec<ActionScore>> {
        Ok((self.f)(x).into_iter().map(ActionScore::supported).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `|S|` for the conservative strategy (includes `x̂`).
    pub survivors: Option<usize>,
    pub risk: Option<f64>,
    /// Feature samples drawn.
    pub samples: usize,
    pub no_support: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub action: usize,
    pub scores: Vec<f64>,
    pub strategy: StrategySpec,
    pub diagnostics: Diagnostics,
}

/// Index of the largest supported score; ties go to the lowest index.
pub fn argmax_supported(scores: &[f64], no_support: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (a, &s) in scores.iter().enumerate() {
        if no_support.get(a).copied().unwrap_or(false) {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(a);
        }
    }
    best
}

fn finish(scores: Vec<f64>, no_support: Vec<bool>, strategy: StrategySpec, mut diag: Diagnostics) -> Result<Recommendation> {
    let action = argmax_supported(&scores, &no_support)
        .ok_or_else(|| Error::Estimation("no action has support in the logged data".into()))?;
    diag.no_support = no_support;
    Ok(Recommendation {
        action,
        scores,
        strategy,
        diagnostics: diag,
    })
}

fn check_len<O: RewardOracle + ?Sized>(oracle: &O, s: &[ActionScore]) -> Result<()> {
    if s.len() != oracle.num_actions() {
        return Err(Error::Shape(format!(
            "oracle returned {} scores for {} actions",
            s.len(),
            oracle.num_actions()
        )));
    }
    Ok(())
}

pub fn recommend_imputation<O: RewardOracle + ?Sized>(oracle: &O, xt: &PartialFeature) -> Result<Recommendation> {
    let s = oracle.score_partial(xt)?;
    check_len(oracle, &s)?;
    finish(
        s.iter().map(|v| v.value).collect(),
        s.iter().map(|v| v.no_support).collect(),
        StrategySpec::Imputation,
        Diagnostics::default(),
    )
}

/// Averages `θ̂(x_i, a)` over `t` posterior feature samples.
pub fn recommend_mer<O: RewardOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    xt: &PartialFeature,
    t: usize,
    rng: &mut R,
) -> Result<Recommendation> {
    let spec = StrategySpec::Mer { t };
    spec.validate()?;
    let samples = oracle.generator().sample_posterior_features(xt, t, rng)?;
    let k = oracle.num_actions();
    let mut sums = vec![0.0; k];
    let mut unsupported = vec![0usize; k];
    for x in &samples {
        let s = oracle.score_complete(x)?;
        check_len(oracle, &s)?;
        for (a, v) in s.iter().enumerate() {
            sums[a] += v.value;
            if v.no_support {
                unsupported[a] += 1;
            }
        }
    }
    let scores = sums.iter().map(|s| s / t as f64).collect();
    let no_support = unsupported.iter().map(|&u| u == t).collect();
    finish(
        scores,
        no_support,
        spec,
        Diagnostics {
            samples: t,
            ..Default::default()
        },
    )
}

/// Candidates passing the conservative density threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivorSet {
    /// `x̂` first, then the admitted samples in draw order.
    pub members: Vec<Vec<f64>>,
    /// Indices (into the candidate list) of the admitted samples.
    pub admitted: Vec<usize>,
    pub log_density_mode: f64,
}

/// `S = {x_i : log p(x_i | x̃) > ln c + log p(x̂ | x̃)} ∪ {x̂}` over the given
/// candidates. Densities are evaluated with `density_draws` posterior latents
/// drawn from `rng`.
pub fn conservative_set<R: Rng + ?Sized>(
    pvae: &PvaeModel,
    xt: &PartialFeature,
    c: f64,
    candidates: &[Vec<f64>],
    density_draws: usize,
    rng: &mut R,
) -> Result<SurvivorSet> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Argument(format!("c must lie in [0, 1), got {c}")));
    }
    let x_hat = pvae.impute_mean(xt)?;
    let post = pvae.decoded_posterior(xt, density_draws, rng)?;
    let log_mode = post.log_density(&x_hat);
    let threshold = c.ln() + log_mode;
    let admitted: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, x)| post.log_density(x) > threshold)
        .map(|(i, _)| i)
        .collect();
    let mut members = vec![x_hat];
    members.extend(admitted.iter().map(|&i| candidates[i].clone()));
    Ok(SurvivorSet {
        members,
        admitted,
        log_density_mode: log_mode,
    })
}

/// Draws `u` prior samples, optionally pinning observed attributes to `x̃`.
pub fn conservative_candidates<R: Rng + ?Sized>(
    pvae: &PvaeModel,
    xt: &PartialFeature,
    u: usize,
    pin_observed: bool,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut samples = pvae.sample_prior_features(u, rng)?;
    if pin_observed {
        for x in &mut samples {
            for j in xt.observed() {
                x[j] = xt.values()[j];
            }
        }
    }
    Ok(samples)
}

/// Max-min recommendation over the survivors of the density threshold.
pub fn recommend_conservative<O: RewardOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    xt: &PartialFeature,
    c: f64,
    u: usize,
    opts: &StrategyOptions,
    rng: &mut R,
) -> Result<Recommendation> {
    let spec = StrategySpec::Conservative { c, u };
    spec.validate()?;
    let pvae = oracle.generator();
    let candidates = conservative_candidates(pvae, xt, u, opts.pin_observed, rng)?;
    let set = conservative_set(pvae, xt, c, &candidates, opts.density_draws, rng)?;
    let k = oracle.num_actions();
    let mut mins = vec![f64::INFINITY; k];
    let mut seen = vec![false; k];
    for x in &set.members {
        let s = oracle.score_complete(x)?;
        check_len(oracle, &s)?;
        for (a, v) in s.iter().enumerate() {
            if !v.no_support {
                seen[a] = true;
                mins[a] = mins[a].min(v.value);
            }
        }
    }
    let no_support: Vec<bool> = seen.iter().map(|s| !s).collect();
    let scores = mins
        .iter()
        .zip(&seen)
        .map(|(&m, &s)| if s { m } else { 0.0 })
        .collect();
    let risk = estimate_risk(pvae.schema(), xt, c)?;
    finish(
        scores,
        no_support,
        spec,
        Diagnostics {
            survivors: Some(set.members.len()),
            risk: Some(risk.value),
            samples: u,
            ..Default::default()
        },
    )
}

pub fn recommend<O: RewardOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    xt: &PartialFeature,
    spec: &StrategySpec,
    opts: &StrategyOptions,
    rng: &mut R,
) -> Result<Recommendation> {
    spec.validate()?;
    match *spec {
        StrategySpec::Imputation => recommend_imputation(oracle, xt),
        StrategySpec::Mer { t } => recommend_mer(oracle, xt, t, rng),
        StrategySpec::Conservative { c, u } => recommend_conservative(oracle, xt, c, u, opts, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    /// Missing continuous attributes entering the proxy.
    pub dims: usize,
    /// Set when no continuous attribute is missing (the proxy is then 0).
    pub degenerate: bool,
}

/// Posterior mass outside `{x : p(x|x̃) ≥ c·p(x̂|x̃)}` under a diagonal
/// Gaussian proxy centred at `x̂`: the chi-square upper tail with
/// `d_miss` degrees of freedom at `−2 ln c`.
pub fn estimate_risk(schema: &FeatureSchema, xt: &PartialFeature, c: f64) -> Result<RiskEstimate> {
    schema.check_partial(xt)?;
    let d = schema
        .attributes()
        .iter()
        .zip(xt.mask())
        .filter(|(a, &m)| m && a.is_continuous())
        .count();
    Ok(RiskEstimate {
        value: risk_for_dims(d, c)?,
        dims: d,
        degenerate: d == 0,
    })
}

pub fn risk_for_dims(d_miss: usize, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Argument(format!("c must lie in [0, 1), got {c}")));
    }
    if d_miss == 0 || c == 0.0 {
        return Ok(0.0);
    }
    // P(χ²_d > r²) = Q(d/2, r²/2) with r² = −2 ln c
    Ok(gamma_ur(d_miss as f64 / 2.0, -c.ln()))
}
