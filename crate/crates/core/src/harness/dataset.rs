use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvae::{FeatureSchema, PartialFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRow {
    pub feature: PartialFeature,
    pub action: usize,
    pub reward: f64,
}

/// Quantities only a simulator knows; retained for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Complete features before missingness was injected.
    pub complete: Vec<Vec<f64>>,
    /// Expected reward of every action for every row.
    pub reward_means: Vec<Vec<f64>>,
    /// Logging-policy probabilities of every action for every row.
    pub propensities: Vec<Vec<f64>>,
    /// Realized reward of every action (potential outcomes), when the
    /// generator draws them all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_rewards: Option<Vec<Vec<f64>>>,
}

/// Logged triples `(x̃_i, a_i, r_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedDataset {
    pub schema: FeatureSchema,
    pub num_actions: usize,
    pub rows: Vec<LoggedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
}

impl LoggedDataset {
    pub fn new(
        schema: FeatureSchema,
        num_actions: usize,
        rows: Vec<LoggedRow>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let ds = LoggedDataset {
            schema,
            num_actions,
            rows,
            truth,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions == 0 {
            return Err(Error::Data("dataset needs at least one action".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.action >= self.num_actions {
                return Err(Error::Data(format!(
                    "row {i}: action {} outside 0..{}",
                    r.action, self.num_actions
                )));
            }
            if !r.reward.is_finite() {
                return Err(Error::Data(format!("row {i}: non-finite reward")));
            }
            self.schema
                .check_partial(&r.feature)
                .map_err(|e| Error::Data(format!("row {i}: {e}")))?;
        }
        if let Some(t) = &self.truth {
            let n = self.rows.len();
            let lens_ok = t.complete.len() == n
                && t.reward_means.len() == n
                && t.propensities.len() == n
                && t.potential_rewards.as_ref().is_none_or(|p| p.len() == n);
            if !lens_ok {
                return Err(Error::Data("ground-truth block does not match row count".into()));
            }
            let widths_ok = t.reward_means.iter().all(|m| m.len() == self.num_actions)
                && t.propensities.iter().all(|p| p.len() == self.num_actions)
                && t.complete.iter().all(|x| x.len() == self.schema.len());
            if !widths_ok {
                return Err(Error::Data("ground-truth rows have wrong width".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<PartialFeature> {
        self.rows.iter().map(|r| r.feature.clone()).collect()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_actions];
        for r in &self.rows {
            c[r.action] += 1;
        }
        c
    }

    /// Fraction of missing cells per attribute.
    pub fn missing_rates(&self) -> Vec<f64> {
        let d = self.schema.len();
        let mut c = vec![0usize; d];
        for r in &self.rows {
            for (j, &m) in r.feature.mask().iter().enumerate() {
                if m {
                    c[j] += 1;
                }
            }
        }
        c.into_iter().map(|k| k as f64 / self.rows.len().max(1) as f64).collect()
    }

    /// Mean and population standard deviation of the logged rewards.
    pub fn reward_stats(&self) -> (f64, f64) {
        let n = self.rows.len().max(1) as f64;
        let mean = self.rows.iter().map(|r| r.reward).sum::<f64>() / n;
        let var = self.rows.iter().map(|r| (r.reward - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}
