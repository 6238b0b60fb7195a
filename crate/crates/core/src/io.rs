//! File formats: logged-data CSV with schema and ground-truth companions,
//! tagged JSON model files, and atomic writes.
//!
//! A dataset stored at `runs/train.csv` has up to two companions:
//! `runs/train.schema.json` (attribute kinds and action count) and
//! `runs/train_truth.csv` (complete features, reward means, logging
//! probabilities and, when drawn, potential rewards).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpvae::CpvaeModel;
use crate::error::{Error, Result};
use crate::harness::{GroundTruth, LoggedDataset, LoggedRow};
use crate::propensity::PropensityModel;
use crate::pvae::{FeatureSchema, PartialFeature, PvaeModel};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn schema_path(path: &Path) -> PathBuf {
    with_suffix(path, ".schema.json")
}

pub fn truth_path(path: &Path) -> PathBuf {
    with_suffix(path, "_truth.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: FeatureSchema,
    pub num_actions: usize,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Logged rows as CSV: `x0..x{d-1}, action, reward`, missing cells as `NA`.
pub fn dataset_csv(data: &LoggedDataset) -> Result<Vec<u8>> {
    let d = data.schema.len();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("action".into());
    header.push("reward".into());
    csv_bytes(
        header,
        data.rows.iter().map(|r| {
            let mut rec: Vec<String> = r
                .feature
                .to_options()
                .into_iter()
                .map(|c| c.map_or_else(|| "NA".to_string(), fmt))
                .collect();
            rec.push(r.action.to_string());
            rec.push(fmt(r.reward));
            rec
        }),
    )
}

pub fn truth_csv(truth: &GroundTruth, d: usize, k: usize) -> Result<Vec<u8>> {
    let mut header: Vec<String> = (0..d).map(|j| format!("c{j}")).collect();
    header.extend((0..k).map(|a| format!("mean{a}")));
    header.extend((0..k).map(|a| format!("prop{a}")));
    if truth.potential_rewards.is_some() {
        header.extend((0..k).map(|a| format!("potential{a}")));
    }
    csv_bytes(
        header,
        (0..truth.complete.len()).map(|i| {
            let mut rec: Vec<String> = truth.complete[i].iter().copied().map(fmt).collect();
            rec.extend(truth.reward_means[i].iter().copied().map(fmt));
            rec.extend(truth.propensities[i].iter().copied().map(fmt));
            if let Some(p) = &truth.potential_rewards {
                rec.extend(p[i].iter().copied().map(fmt));
            }
            rec
        }),
    )
}

/// Writes the dataset CSV plus its schema and (if present) truth companions.
pub fn save_dataset(data: &LoggedDataset, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_csv(data)?)?;
    write_json_atomic(
        &schema_path(path),
        &DatasetMeta {
            schema: data.schema.clone(),
            num_actions: data.num_actions,
        },
    )?;
    if let Some(t) = &data.truth {
        write_atomic(&truth_path(path), &truth_csv(t, data.schema.len(), data.num_actions)?)?;
    }
    Ok(())
}

fn parse_cell(s: &str, what: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Data(format!("{what}: cannot parse {t:?} as a number")))
}

fn parse_required(s: &str, what: &str) -> Result<f64> {
    parse_cell(s, what)?.ok_or_else(|| Error::Data(format!("{what}: value is missing")))
}

/// Reads a dataset CSV. The schema comes from the `.schema.json` companion
/// when present; otherwise every attribute is taken as continuous with
/// statistics estimated from the observed cells and the action count is
/// `max(action) + 1`. The truth companion is loaded when present.
pub fn load_dataset(path: &Path) -> Result<LoggedDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let action_col = cols
        .iter()
        .position(|c| *c == "action")
        .ok_or_else(|| Error::Data(format!("{}: no `action` column", path.display())))?;
    let reward_col = cols
        .iter()
        .position(|c| *c == "reward")
        .ok_or_else(|| Error::Data(format!("{}: no `reward` column", path.display())))?;
    let feature_cols: Vec<usize> = (0..cols.len()).filter(|&c| c != action_col && c != reward_col).collect();
    let mut features = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cells = feature_cols
            .iter()
            .map(|&c| parse_cell(&rec[c], &format!("line {line}, column {}", cols[c])))
            .collect::<Result<Vec<_>>>()?;
        features.push(PartialFeature::from_options(&cells).map_err(|e| Error::Data(format!("line {line}: {e}")))?);
        let a = parse_required(&rec[action_col], &format!("line {line}, action"))?;
        if a < 0.0 || a.fract() != 0.0 {
            return Err(Error::Data(format!("line {line}: action {a} is not a non-negative integer")));
        }
        actions.push(a as usize);
        rewards.push(parse_required(&rec[reward_col], &format!("line {line}, reward"))?);
    }
    let sp = schema_path(path);
    let meta = if sp.exists() {
        read_json::<DatasetMeta>(&sp)?
    } else {
        DatasetMeta {
            schema: FeatureSchema::infer_continuous(&features, feature_cols.len())?,
            num_actions: actions.iter().max().map_or(1, |m| m + 1),
        }
    };
    if meta.schema.len() != feature_cols.len() {
        return Err(Error::Data(format!(
            "schema has {} attributes, CSV has {} feature columns",
            meta.schema.len(),
            feature_cols.len()
        )));
    }
    let tp = truth_path(path);
    let truth = if tp.exists() {
        Some(load_truth(&tp, meta.schema.len(), meta.num_actions)?)
    } else {
        None
    };
    let rows = features
        .into_iter()
        .zip(actions)
        .zip(rewards)
        .map(|((feature, action), reward)| LoggedRow { feature, action, reward })
        .collect();
    LoggedDataset::new(meta.schema, meta.num_actions, rows, truth)
}

pub fn load_truth(path: &Path, d: usize, k: usize) -> Result<GroundTruth> {
    let mut rdr = csv::Reader::from_path(path)?;
    let width = rdr.headers()?.len();
    let has_potential = match width {
        w if w == d + 2 * k => false,
        w if w == d + 3 * k => true,
        w => {
            return Err(Error::Data(format!(
                "{}: {w} columns, expected {} or {}",
                path.display(),
                d + 2 * k,
                d + 3 * k
            )))
        }
    };
    let mut truth = GroundTruth {
        complete: vec![],
        reward_means: vec![],
        propensities: vec![],
        potential_rewards: has_potential.then(Vec::new),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|c| parse_required(c, &format!("{} line {}", path.display(), i + 2)))
            .collect::<Result<Vec<f64>>>()?;
        truth.complete.push(vals[..d].to_vec());
        truth.reward_means.push(vals[d..d + k].to_vec());
        truth.propensities.push(vals[d + k..d + 2 * k].to_vec());
        if let Some(p) = truth.potential_rewards.as_mut() {
            p.push(vals[d + 2 * k..].to_vec());
        }
    }
    Ok(truth)
}

/// A trained artifact as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Pvae { model: PvaeModel },
    Cpvae { model: CpvaeModel },
    Propensity { model: PropensityModel },
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Pvae { .. } => "pvae",
            ModelFile::Cpvae { .. } => "cpvae",
            ModelFile::Propensity { .. } => "propensity",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn into_pvae(self) -> Result<PvaeModel> {
        match self {
            ModelFile::Pvae { model } => {
                model.vae().validate()?;
                Ok(model)
            }
            other => Err(Error::Data(format!("expected a pvae model file, found {}", other.kind()))),
        }
    }

    pub fn into_cpvae(self) -> Result<CpvaeModel> {
        match self {
            ModelFile::Cpvae { model } => {
                model.validate()?;
                Ok(model)
            }
            other => Err(Error::Data(format!("expected a cpvae model file, found {}", other.kind()))),
        }
    }

    pub fn into_propensity(self) -> Result<PropensityModel> {
        match self {
            ModelFile::Propensity { model } => Ok(model),
            other => Err(Error::Data(format!("expected a propensity model file, found {}", other.kind()))),
        }
    }
}
