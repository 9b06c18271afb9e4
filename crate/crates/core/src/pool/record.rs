use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::models::Checkpoint;
use crate::sharpness::{sharpness, SharpnessConfig};

use super::kendall_tau;

/// One sharpness value of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessValue {
    pub measure: String,
    pub rho: f64,
    pub value: f64,
}

/// One trained model of a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub id: String,
    /// Relative to the pool directory.
    pub checkpoint: String,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub train_error: f64,
    pub test_error: f64,
    #[serde(default)]
    pub ood_error: Option<f64>,
    /// `test_error − train_error`
    pub gen_gap: f64,
    /// Failed the training-error filter; never enters correlations.
    #[serde(default)]
    pub excluded: bool,
    #[serde(default)]
    pub sharpness: Vec<SharpnessValue>,
    /// Diagnostics of measurements that failed for this record.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl PoolRecord {
    pub fn sharpness_value(&self, measure: &str, rho: f64) -> Option<f64> {
        self.sharpness
            .iter()
            .find(|s| s.measure == measure && s.rho == rho)
            .map(|s| s.value)
    }

    pub fn target(&self, target: Target) -> Option<f64> {
        match target {
            Target::TestError => Some(self.test_error),
            Target::GenGap => Some(self.gen_gap),
            Target::OodError => self.ood_error,
        }
    }

    /// Hyperparameter rendered as a subgroup label.
    pub fn subgroup(&self, key: &str) -> Option<String> {
        self.hyperparameters.get(key).map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    TestError,
    GenGap,
    OodError,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::TestError => "test_error",
            Target::GenGap => "gen_gap",
            Target::OodError => "ood_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub model_id: String,
    pub measure: f64,
    pub target: f64,
    pub subgroup: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTau {
    pub subgroup: String,
    pub n: usize,
    /// `None` with fewer than 2 records.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub measure: String,
    pub rho: f64,
    pub target: Target,
    pub n: usize,
    pub tau: Option<f64>,
    pub subgroups: Vec<SubgroupTau>,
    pub scatter: Vec<ScatterRow>,
}

/// Kendall τ between a sharpness measure and a generalization target over
/// the non-excluded records, globally and per value of `subgroup`.
pub fn correlate_pool(
    records: &[PoolRecord],
    measure: &str,
    rho: f64,
    target: Target,
    subgroup: Option<&str>,
) -> Result<CorrelationReport> {
    let mut missing = Vec::new();
    let mut scatter = Vec::new();
    for r in records.iter().filter(|r| !r.excluded) {
        let m = r.sharpness_value(measure, rho);
        let t = r.target(target);
        let g = match subgroup {
            Some(key) => r.subgroup(key),
            None => Some("all".into()),
        };
        match (m, t, g) {
            (Some(m), Some(t), Some(g)) => scatter.push(ScatterRow {
                model_id: r.id.clone(),
                measure: m,
                target: t,
                subgroup: g,
            }),
            (m, t, g) => {
                let mut what = Vec::new();
                if m.is_none() {
                    what.push(format!("{measure}@{rho}"));
                }
                if t.is_none() {
                    what.push(target.name().to_string());
                }
                if g.is_none() {
                    what.push(subgroup.unwrap_or_default().to_string());
                }
                missing.push(format!("{}: {}", r.id, what.join(", ")));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "missing keys: {}",
            missing.join("; ")
        )));
    }
    let tau = |rows: &[&ScatterRow]| {
        let m: Vec<f64> = rows.iter().map(|r| r.measure).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.target).collect();
        kendall_tau(&m, &t).ok()
    };
    let all: Vec<&ScatterRow> = scatter.iter().collect();
    let mut groups: BTreeMap<&str, Vec<&ScatterRow>> = BTreeMap::new();
    for r in &scatter {
        groups.entry(r.subgroup.as_str()).or_default().push(r);
    }
    let subgroups = groups
        .iter()
        .map(|(g, rows)| SubgroupTau {
            subgroup: g.to_string(),
            n: rows.len(),
            tau: tau(rows),
        })
        .collect();
    Ok(CorrelationReport {
        measure: measure.to_string(),
        rho,
        target,
        n: scatter.len(),
        tau: tau(&all),
        subgroups,
        scatter,
    })
}

/// Attaches one value per `(record, config)` pair, evaluating every model
/// on the same leading rows of `data` with each config's own seed.
/// Values already present are kept. A failing record gets a diagnostic in
/// `failures` (replacing those of earlier attempts) and the others proceed. Returns the number of values added.
pub fn measure_pool(
    records: &mut [PoolRecord],
    configs: &[SharpnessConfig],
    data: &Dataset,
    pool_dir: &Path,
) -> usize {
    let updates = exec::map_indexed(records.len(), |i| {
        let r = &records[i];
        let todo: Vec<&SharpnessConfig> = configs
            .iter()
            .filter(|c| r.sharpness_value(&c.measure_name(), c.rho).is_none())
            .collect();
        if todo.is_empty() {
            return None;
        }
        let ckpt = match Checkpoint::load(pool_dir.join(&r.checkpoint)) {
            Ok(c) => c,
            Err(e) => return Some((Vec::new(), vec![format!("checkpoint: {e}")])),
        };
        let mut values = Vec::new();
        let mut failures = Vec::new();
        for c in todo {
            match sharpness(&ckpt.spec, &ckpt.weights, data, c) {
                Ok(rep) => values.push(SharpnessValue {
                    measure: rep.measure,
                    rho: c.rho,
                    value: rep.mean,
                }),
                Err(e) => failures.push(format!("{}@{}: {e}", c.measure_name(), c.rho)),
            }
        }
        Some((values, failures))
    });
    let mut added = 0;
    for (r, update) in records.iter_mut().zip(updates) {
        // failures only describe the latest attempt
        if let Some((values, failures)) = update {
            added += values.len();
            r.sharpness.extend(values);
            r.failures = failures;
        }
    }
    added
}
