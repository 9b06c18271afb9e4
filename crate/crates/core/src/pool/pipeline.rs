use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GaussianMixture};
use crate::error::{Error, Result};
use crate::exec;
use crate::models::{Checkpoint, ModelSpec};
use crate::rng::{derive_seed, stream};
use crate::sharpness::SharpnessConfig;

use super::record::{correlate_pool, measure_pool, CorrelationReport, PoolRecord, Target};
use super::train::{train_model, TrainConfig};

fn default_replicates() -> usize {
    1
}

fn default_momentum() -> f64 {
    0.9
}

fn default_warmup() -> f64 {
    0.4
}

fn default_filter() -> f64 {
    0.01
}

/// A pool: every combination of learning rate, SAM radius and replicate
/// is trained once on one Gaussian-mixture task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub data: GaussianMixture,
    pub n_train: usize,
    pub n_test: usize,
    /// Noise level of the corrupted copy of the test set.
    #[serde(default)]
    pub ood_sigma: Option<f64>,
    pub spec: ModelSpec,
    pub lrs: Vec<f64>,
    #[serde(default)]
    pub sam_rhos: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_filter")]
    pub max_train_error: f64,
    pub measures: Vec<SharpnessConfig>,
    /// Hyperparameter used to split correlation reports (e.g. `sam_rho`).
    #[serde(default)]
    pub subgroup: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl PoolConfig {
    /// Training configurations in model-index order.
    pub fn jobs(&self) -> Vec<(String, TrainConfig, BTreeMap<String, serde_json::Value>)> {
        let sams = if self.sam_rhos.is_empty() {
            vec![0.0]
        } else {
            self.sam_rhos.clone()
        };
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &sam in &sams {
                for rep in 0..self.replicates {
                    let k = out.len();
                    let seed = derive_seed(self.seed, &[2, k as u64]);
                    let cfg = TrainConfig {
                        spec: self.spec.clone(),
                        lr,
                        momentum: self.momentum,
                        warmup_fraction: self.warmup_fraction,
                        epochs: self.epochs,
                        batch_size: self.batch_size,
                        sam_rho: sam,
                        seed,
                        max_train_error: self.max_train_error,
                        init_scale: 1.0,
                    };
                    let mut hp = BTreeMap::new();
                    hp.insert("lr".into(), serde_json::json!(lr));
                    hp.insert("sam_rho".into(), serde_json::json!(sam));
                    hp.insert("replicate".into(), serde_json::json!(rep));
                    hp.insert("seed".into(), serde_json::json!(seed));
                    out.push((format!("model_{k:03}"), cfg, hp));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.lrs.is_empty() || self.replicates == 0 {
            return Err(Error::InvalidArgument("pool has no models".into()));
        }
        for m in &self.measures {
            m.validate()?;
            if m.m * m.n_batches > self.n_train {
                return Err(Error::InvalidArgument(format!(
                    "measure {} needs {} training points, pool has {}",
                    m.measure_name(),
                    m.m * m.n_batches,
                    self.n_train
                )));
            }
        }
        for (_, job, _) in self.jobs() {
            job.validate()?;
        }
        Ok(())
    }

    /// Train, test and (optionally) corrupted test sets.
    pub fn datasets(&self) -> Result<(Dataset, Dataset, Option<Dataset>)> {
        let train = self.data.sample(self.n_train, 0)?;
        let test = self.data.sample(self.n_test, 1)?;
        let ood = self
            .ood_sigma
            .map(|s| test.corrupted(s, &mut stream(self.seed, &[3])));
        Ok((train, test, ood))
    }

    pub fn targets(&self) -> Vec<Target> {
        let mut t = vec![Target::TestError, Target::GenGap];
        if self.ood_sigma.is_some() {
            t.push(Target::OodError);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolOutcome {
    pub records: Vec<PoolRecord>,
    pub reports: Vec<CorrelationReport>,
    /// Models trained by this invocation.
    pub trained: usize,
    /// Sharpness values computed by this invocation.
    pub measured: usize,
}

pub const MANIFEST: &str = "manifest.json";

pub fn load_manifest(path: &Path) -> Result<Vec<PoolRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn save_manifest(path: &Path, records: &[PoolRecord]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, records)?;
        w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Train → measure → correlate, with the manifest in `dir`. Records
/// already in the manifest are not retrained and values already present
/// are not recomputed. Failed trainings are reported on the log and left
/// out of the manifest.
pub fn run_pool(cfg: &PoolConfig, dir: &Path) -> Result<PoolOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST);
    let mut done: BTreeMap<String, PoolRecord> = if manifest.exists() {
        load_manifest(&manifest)?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect()
    } else {
        BTreeMap::new()
    };
    let (train, test, ood) = cfg.datasets()?;
    let jobs = cfg.jobs();
    let todo: Vec<usize> = (0..jobs.len())
        .filter(|&k| {
            done.get(&jobs[k].0)
                .is_none_or(|r| !dir.join(&r.checkpoint).exists())
        })
        .collect();
    let fresh = exec::map_indexed(todo.len(), |i| {
        let (id, job, hp) = &jobs[todo[i]];
        let model = train_model(job, &train, &test, ood.as_ref())?;
        let rel = format!("checkpoints/{id}.json");
        let mut ckpt = Checkpoint::new(job.spec.clone(), model.weights.clone())?;
        ckpt.metadata = hp.clone();
        ckpt.save(dir.join(&rel))?;
        Ok::<_, Error>(PoolRecord {
            id: id.clone(),
            checkpoint: rel,
            hyperparameters: hp.clone(),
            train_error: model.train_error,
            test_error: model.test_error,
            ood_error: model.ood_error,
            gen_gap: model.test_error - model.train_error,
            excluded: model.excluded,
            sharpness: Vec::new(),
            failures: Vec::new(),
        })
    });
    let mut trained = 0;
    for (k, r) in todo.iter().zip(fresh) {
        match r {
            Ok(rec) => {
                trained += 1;
                done.insert(rec.id.clone(), rec);
            }
            Err(e) => log::warn!("{}: training failed: {e}", jobs[*k].0),
        }
    }
    // manifest order follows the job list
    let mut records: Vec<PoolRecord> = jobs
        .iter()
        .filter_map(|(id, _, _)| done.remove(id))
        .collect();
    save_manifest(&manifest, &records)?;

    let measured = measure_pool(&mut records, &cfg.measures, &train, dir);
    for r in &records {
        for f in &r.failures {
            log::warn!("{}: {f}", r.id);
        }
    }
    save_manifest(&manifest, &records)?;

    let mut reports = Vec::new();
    for m in &cfg.measures {
        for t in cfg.targets() {
            match correlate_pool(
                &records,
                &m.measure_name(),
                m.rho,
                t,
                cfg.subgroup.as_deref(),
            ) {
                Ok(r) => reports.push(r),
                Err(e) => log::warn!("{} vs {}: {e}", m.measure_name(), t.name()),
            }
        }
    }
    Ok(PoolOutcome {
        records,
        reports,
        trained,
        measured,
    })
}
