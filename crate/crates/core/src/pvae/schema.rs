use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AttributeKind {
    /// Real-valued attribute, standardized with `(x - mean) / std` inside the model.
    Continuous { mean: f64, std: f64 },
    /// Category index in `0..cardinality`.
    Categorical { cardinality: usize },
}

impl AttributeKind {
    /// Number of decoder outputs for this attribute.
    pub fn head_width(&self) -> usize {
        match self {
            AttributeKind::Continuous { .. } => 2,
            AttributeKind::Categorical { cardinality } => *cardinality,
        }
    }

    /// Scalar fed to the encoder in place of the raw value.
    pub fn encoder_scalar(&self, v: f64) -> f64 {
        match *self {
            AttributeKind::Continuous { mean, std } => (v - mean) / std,
            AttributeKind::Categorical { cardinality } => (v + 1.0) / cardinality as f64,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, AttributeKind::Continuous { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    attributes: Vec<AttributeKind>,
}

impl FeatureSchema {
    pub fn new(attributes: Vec<AttributeKind>) -> Result<Self> {
        for (j, a) in attributes.iter().enumerate() {
            match *a {
                AttributeKind::Continuous { mean, std } => {
                    if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
                        return Err(Error::Config(format!(
                            "attribute {j}: std must be positive and finite (mean {mean}, std {std})"
                        )));
                    }
                }
                AttributeKind::Categorical { cardinality } => {
                    if cardinality < 2 {
                        return Err(Error::Config(format!(
                            "attribute {j}: categorical cardinality must be >= 2, got {cardinality}"
                        )));
                    }
                }
            }
        }
        Ok(FeatureSchema { attributes })
    }

    /// All-continuous schema with normalization statistics taken from the
    /// observed cells of `rows`. A column with no spread gets `std = 1`.
    pub fn infer_continuous(rows: &[PartialFeature], dims: usize) -> Result<Self> {
        let mut attrs = Vec::with_capacity(dims);
        for j in 0..dims {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| !r.is_missing(j))
                .map(|r| r.values[j])
                .collect();
            let n = vals.len() as f64;
            let mean = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / n };
            let var = if vals.len() < 2 {
                0.0
            } else {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            };
            let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
            attrs.push(AttributeKind::Continuous { mean, std });
        }
        FeatureSchema::new(attrs)
    }

    pub fn attributes(&self) -> &[AttributeKind] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn head_width(&self) -> usize {
        self.attributes.iter().map(AttributeKind::head_width).sum()
    }

    /// Offset of each attribute's head in the decoder output.
    pub fn head_offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.attributes
            .iter()
            .map(|a| {
                let o = at;
                at += a.head_width();
                o
            })
            .collect()
    }

    /// Schema with one extra attribute appended.
    pub fn with_attribute(&self, extra: AttributeKind) -> Result<Self> {
        let mut attrs = self.attributes.clone();
        attrs.push(extra);
        FeatureSchema::new(attrs)
    }

    pub fn check_value(&self, j: usize, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::Data(format!("attribute {j}: non-finite value {v}")));
        }
        if let AttributeKind::Categorical { cardinality } = self.attributes[j] {
            if v < 0.0 || v.fract() != 0.0 || v as usize >= cardinality {
                return Err(Error::Data(format!(
                    "attribute {j}: category {v} outside 0..{cardinality}"
                )));
            }
        }
        Ok(())
    }

    pub fn check_partial(&self, xt: &PartialFeature) -> Result<()> {
        if xt.len() != self.len() {
            return Err(Error::Shape(format!(
                "feature has {} attributes, schema has {}",
                xt.len(),
                self.len()
            )));
        }
        for j in xt.observed() {
            self.check_value(j, xt.values[j])?;
        }
        Ok(())
    }

    pub fn check_complete(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::Shape(format!(
                "feature has {} attributes, schema has {}",
                x.len(),
                self.len()
            )));
        }
        (0..x.len()).try_for_each(|j| self.check_value(j, x[j]))
    }
}

/// A feature vector with a missingness mask (`true` = missing). Missing
/// cells are stored as `0.0` and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFeature {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl PartialFeature {
    pub fn new(mut values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.len() != missing.len() {
            return Err(Error::Shape(format!(
                "{} values but mask of length {}",
                values.len(),
                missing.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Data(format!("observed value {v} is not finite")));
            }
        }
        Ok(PartialFeature { values, missing })
    }

    pub fn complete(values: Vec<f64>) -> Self {
        let n = values.len();
        PartialFeature {
            values,
            missing: vec![false; n],
        }
    }

    pub fn from_options(cells: &[Option<f64>]) -> Result<Self> {
        let values = cells.iter().map(|c| c.unwrap_or(0.0)).collect();
        let missing = cells.iter().map(Option::is_none).collect();
        PartialFeature::new(values, missing)
    }

    pub fn all_missing(len: usize) -> Self {
        PartialFeature {
            values: vec![0.0; len],
            missing: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.missing[j]
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        (!self.missing[j]).then(|| self.values[j])
    }

    pub fn observed(&self) -> impl Iterator<Item = usize> + '_ {
        self.missing
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(j, _)| j)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing.iter().all(|m| !m)
    }

    pub fn set_missing(&mut self, j: usize) {
        self.missing[j] = true;
        self.values[j] = 0.0;
    }

    pub fn set_value(&mut self, j: usize, v: f64) {
        self.missing[j] = false;
        self.values[j] = v;
    }

    pub fn to_options(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|j| self.get(j)).collect()
    }

    /// Copy with one more attribute appended.
    pub fn extended(&self, value: Option<f64>) -> Self {
        let mut f = self.clone();
        f.values.push(value.unwrap_or(0.0));
        f.missing.push(value.is_none());
        f
    }
}
