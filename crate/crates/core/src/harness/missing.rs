use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LoggedDataset, LoggedRow};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::pvae::{AttributeKind, FeatureSchema, PartialFeature};

/// How attributes are erased.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Missingness {
    /// Every cell is erased independently with probability `rate`.
    Mcar { rate: f64 },
    /// Attribute `j ≠ anchor` is erased with probability
    /// `sigmoid(logit(rate) + slope · z)`, where `z` is the standardized
    /// anchor value. The anchor itself is never erased.
    Mar {
        rate: f64,
        #[serde(default)]
        anchor: Option<usize>,
        #[serde(default = "default_slope")]
        slope: f64,
    },
}

fn default_slope() -> f64 {
    2.0
}

impl Missingness {
    pub fn none() -> Self {
        Missingness::Mcar { rate: 0.0 }
    }

    pub fn rate(&self) -> f64 {
        match *self {
            Missingness::Mcar { rate } | Missingness::Mar { rate, .. } => rate,
        }
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let rate = self.rate();
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("missing rate must lie in [0, 1), got {rate}")));
        }
        if let Missingness::Mar { anchor, slope, .. } = *self {
            let a = anchor.ok_or_else(|| Error::Config("MAR missingness needs an anchor attribute".into()))?;
            if a >= schema.len() {
                return Err(Error::Config(format!("MAR anchor {a} outside 0..{}", schema.len())));
            }
            if !slope.is_finite() {
                return Err(Error::Config("MAR slope must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Applies the mechanism to one complete feature. The mechanism must already
/// be validated against `schema`.
pub fn mask_feature<R: Rng + ?Sized>(schema: &FeatureSchema, x: &[f64], mech: &Missingness, rng: &mut R) -> PartialFeature {
    let mut out = PartialFeature::complete(x.to_vec());
    match *mech {
        Missingness::Mcar { rate } => {
            if rate > 0.0 {
                for j in 0..x.len() {
                    if rng.random::<f64>() < rate {
                        out.set_missing(j);
                    }
                }
            }
        }
        Missingness::Mar { rate, anchor, slope } => {
            let a = anchor.expect("validated MAR mechanism");
            let z = match schema.attributes()[a] {
                AttributeKind::Continuous { mean, std } => (x[a] - mean) / std,
                AttributeKind::Categorical { cardinality } => 2.0 * x[a] / (cardinality - 1) as f64 - 1.0,
            };
            let base = if rate > 0.0 { (rate / (1.0 - rate)).ln() } else { f64::NEG_INFINITY };
            let p = sigmoid(base + slope * z);
            for j in 0..x.len() {
                if j != a && rng.random::<f64>() < p {
                    out.set_missing(j);
                }
            }
        }
    }
    out
}

/// Re-masks every row. Rows are completed from the ground-truth block when
/// present; otherwise only already-observed cells can be erased further.
pub fn inject_missingness<R: Rng + ?Sized>(data: &LoggedDataset, mech: &Missingness, rng: &mut R) -> Result<LoggedDataset> {
    mech.validate(&data.schema)?;
    if mech.rate() == 0.0 {
        return Ok(data.clone());
    }
    let rows = data
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let feature = match &data.truth {
                Some(t) => mask_feature(&data.schema, &t.complete[i], mech, rng),
                None => {
                    let fresh = mask_feature(&data.schema, r.feature.values(), mech, rng);
                    let mut f = r.feature.clone();
                    for j in 0..f.len() {
                        if fresh.is_missing(j) {
                            f.set_missing(j);
                        }
                    }
                    f
                }
            };
            LoggedRow {
                feature,
                action: r.action,
                reward: r.reward,
            }
        })
        .collect();
    LoggedDataset::new(data.schema.clone(), data.num_actions, rows, data.truth.clone())
}
