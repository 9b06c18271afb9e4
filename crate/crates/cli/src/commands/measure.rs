use std::path::PathBuf;

use adasharp::data::Dataset;
use adasharp::models::Checkpoint;
use adasharp::sharpness::{sharpness, SharpnessConfig, SharpnessReport, SharpnessRow};
use serde::Deserialize;

use super::Context;
use crate::failure::{Failure, OrRuntime};
use crate::io;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureConfig {
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    measures: Vec<SharpnessConfig>,
    #[serde(default)]
    model_id: Option<String>,
    /// Replaces the seed of every measure.
    #[serde(default)]
    seed: Option<u64>,
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let cfg: MeasureConfig = io::read_config(ctx.config.as_deref(), true)?;
    let field = |v: &Option<PathBuf>, name: &str| -> Result<PathBuf, Failure> {
        let p = v
            .as_ref()
            .ok_or_else(|| Failure::Config(format!("missing field `{name}`")))?;
        let p = io::resolve(ctx.config.as_deref(), p);
        if !p.exists() {
            return Err(Failure::Config(format!(
                "`{name}`: {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    };
    let ckpt_path = field(&cfg.checkpoint, "checkpoint")?;
    let data_path = field(&cfg.data, "data")?;
    if cfg.measures.is_empty() {
        return Err(Failure::Config("`measures` is empty".into()));
    }
    let mut measures = cfg.measures.clone();
    if let Some(seed) = ctx.seed.or(cfg.seed) {
        for m in &mut measures {
            m.seed = seed;
        }
    }
    for m in &measures {
        m.validate().config()?;
    }

    let ckpt = Checkpoint::load(&ckpt_path).runtime()?;
    let data = Dataset::load(&data_path).runtime()?;
    let model_id = cfg.model_id.clone().unwrap_or_else(|| {
        ckpt_path
            .file_stem()
            .map_or("model".into(), |s| s.to_string_lossy().into_owned())
    });

    let mut reports: Vec<SharpnessReport> = Vec::new();
    for m in &measures {
        log::info!("{}: {} at rho {}", model_id, m.measure_name(), m.rho);
        let r = sharpness(&ckpt.spec, &ckpt.weights, &data, m)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", m.measure_name())))?;
        reports.push(r);
    }
    let rows: Vec<SharpnessRow> = reports.iter().map(|r| r.row(&model_id)).collect();

    io::create_dir(&ctx.out)?;
    io::write_json(&ctx.out.join("report.json"), &reports)?;
    io::write_csv(&ctx.out.join("sharpness.csv"), &rows)?;
    for r in &rows {
        println!(
            "{}\t{}\t{}\t{:.6e}",
            r.model_id, r.measure_name, r.rho, r.value
        );
    }
    Ok(())
}
