//! Logging-policy estimation: multiple imputation with the partial VAE, one
//! multinomial logistic regression per completed dataset, and averaging of
//! the fitted probabilities at query time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::LoggedDataset;
use crate::nn::{softmax, AdamState, Matrix};
use crate::pvae::{AttributeKind, FeatureSchema, PartialFeature, PvaeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropensityConfig {
    /// Number of completed datasets.
    pub imputations: usize,
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Floor applied to every averaged probability before renormalizing.
    pub clip: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            imputations: 5,
            lr: 0.05,
            epochs: 300,
            l2: 1e-4,
            seed: 0,
            clip: 0.01,
        }
    }
}

/// Numeric design vector for a complete feature: standardized continuous
/// attributes, treatment-coded categoricals, no intercept.
pub fn design_vector(schema: &FeatureSchema, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for (a, &v) in schema.attributes().iter().zip(x) {
        match *a {
            AttributeKind::Continuous { mean, std } => out.push((v - mean) / std),
            AttributeKind::Categorical { cardinality } => {
                for k in 1..cardinality {
                    out.push(if v as usize == k { 1.0 } else { 0.0 });
                }
            }
        }
    }
    out
}

/// Multinomial logistic regression; row `a` of `weights` holds the
/// coefficients of action `a` followed by its intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    weights: Matrix,
}

impl SoftmaxRegression {
    pub fn num_actions(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn probabilities(&self, design: &[f64]) -> Vec<f64> {
        let p = design.len();
        let logits: Vec<f64> = (0..self.weights.rows())
            .map(|a| {
                let w = self.weights.row(a);
                w[..p].iter().zip(design).map(|(wi, xi)| wi * xi).sum::<f64>() + w[p]
            })
            .collect();
        softmax(&logits)
    }

    /// Full-batch Adam on mean cross-entropy plus `l2/2 · ‖W‖²` (intercepts
    /// unpenalized). Starts from zero weights, so the result is deterministic.
    pub fn fit(designs: &[Vec<f64>], actions: &[usize], num_actions: usize, cfg: &PropensityConfig) -> Result<Self> {
        let n = designs.len();
        if n == 0 || n != actions.len() {
            return Err(Error::Fit("design matrix and action list must be non-empty and equal length".into()));
        }
        let p = designs[0].len();
        let cols = p + 1;
        let mut w = vec![0.0; num_actions * cols];
        let mut adam = AdamState::new(w.len(), cfg.lr);
        let mut grad = vec![0.0; w.len()];
        let mut logits = vec![0.0; num_actions];
        for _ in 0..cfg.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, &a) in designs.iter().zip(actions) {
                for (k, l) in logits.iter_mut().enumerate() {
                    let row = &w[k * cols..(k + 1) * cols];
                    *l = row[..p].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + row[p];
                }
                let probs = softmax(&logits);
                for (k, pk) in probs.iter().enumerate() {
                    let r = (pk - if k == a { 1.0 } else { 0.0 }) / n as f64;
                    let g = &mut grad[k * cols..(k + 1) * cols];
                    for (gi, xi) in g[..p].iter_mut().zip(x) {
                        *gi += r * xi;
                    }
                    g[p] += r;
                }
            }
            for k in 0..num_actions {
                for i in 0..p {
                    grad[k * cols + i] += cfg.l2 * w[k * cols + i];
                }
            }
            adam.step(&mut w, &grad, None)
                .map_err(|e| Error::Fit(format!("softmax regression: {e}")))?;
        }
        Ok(SoftmaxRegression {
            weights: Matrix::from_vec(num_actions, cols, w)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    schema: FeatureSchema,
    num_actions: usize,
    clip: f64,
    models: Vec<SoftmaxRegression>,
}

impl PropensityModel {
    pub fn from_parts(schema: FeatureSchema, num_actions: usize, clip: f64, models: Vec<SoftmaxRegression>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config("propensity model needs at least one imputation model".into()));
        }
        if !(clip > 0.0 && clip < 1.0 / num_actions as f64) {
            return Err(Error::Config(format!(
                "clip must lie in (0, 1/{num_actions}), got {clip}"
            )));
        }
        if models.iter().any(|m| m.num_actions() != num_actions) {
            return Err(Error::Shape("sub-model action count mismatch".into()));
        }
        Ok(PropensityModel {
            schema,
            num_actions,
            clip,
            models,
        })
    }

    pub fn imputations(&self) -> usize {
        self.models.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn with_clip(mut self, clip: f64) -> Result<Self> {
        if !(clip > 0.0 && clip < 1.0 / self.num_actions as f64) {
            return Err(Error::Config(format!(
                "clip must lie in (0, 1/{}), got {clip}",
                self.num_actions
            )));
        }
        self.clip = clip;
        Ok(self)
    }

    pub fn models(&self) -> &[SoftmaxRegression] {
        &self.models
    }

    /// Averages the sub-model probabilities for a complete feature, floors
    /// each entry at `clip`, and renormalizes.
    pub fn probabilities_complete(&self, x: &[f64]) -> Vec<f64> {
        let design = design_vector(&self.schema, x);
        let mut avg = vec![0.0; self.num_actions];
        for m in &self.models {
            for (s, p) in avg.iter_mut().zip(m.probabilities(&design)) {
                *s += p;
            }
        }
        let k = self.models.len() as f64;
        for v in &mut avg {
            *v = (*v / k).max(self.clip);
        }
        let total: f64 = avg.iter().sum();
        avg.into_iter().map(|v| v / total).collect()
    }

    /// `π̂₀(· | x̃)`: mean-mode imputation, then
    /// [`probabilities_complete`](Self::probabilities_complete).
    pub fn estimate(&self, pvae: &PvaeModel, xt: &PartialFeature) -> Result<Vec<f64>> {
        let x = pvae.impute_mean(xt)?;
        Ok(self.probabilities_complete(&x))
    }

    /// Propensity vectors for every logged row.
    pub fn estimate_all(&self, pvae: &PvaeModel, data: &LoggedDataset) -> Result<Vec<Vec<f64>>> {
        data.rows.iter().map(|r| self.estimate(pvae, &r.feature)).collect()
    }
}

/// Fits the logging policy from `data`. Each of the `cfg.imputations`
/// completed datasets fills missing cells with one posterior draw.
pub fn fit_propensity(data: &LoggedDataset, pvae: &PvaeModel, cfg: &PropensityConfig) -> Result<PropensityModel> {
    if cfg.imputations == 0 {
        return Err(Error::Config("imputations must be >= 1".into()));
    }
    if pvae.schema() != &data.schema {
        return Err(Error::Fit("PVAE schema differs from dataset schema".into()));
    }
    if let Some(a) = data.action_counts().iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!(
            "action {a} never appears in the log; its propensity cannot be estimated"
        )));
    }
    let actions: Vec<usize> = data.rows.iter().map(|r| r.action).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut models = Vec::with_capacity(cfg.imputations);
    for _ in 0..cfg.imputations {
        let designs = data
            .rows
            .iter()
            .map(|r| {
                let x = if r.feature.is_complete() {
                    r.feature.values().to_vec()
                } else {
                    pvae.sample_posterior_features(&r.feature, 1, &mut rng)?.remove(0)
                };
                Ok(design_vector(&data.schema, &x))
            })
            .collect::<Result<Vec<_>>>()?;
        models.push(SoftmaxRegression::fit(&designs, &actions, data.num_actions, cfg)?);
    }
    PropensityModel::from_parts(data.schema.clone(), data.num_actions, cfg.clip, models)
}
