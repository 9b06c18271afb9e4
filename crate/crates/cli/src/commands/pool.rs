use adasharp::pool::{run_pool, PoolConfig};
use serde::Serialize;

use super::Context;
use crate::failure::{Failure, OrRuntime};
use crate::io;

#[derive(Serialize)]
struct TauRow<'a> {
    measure: &'a str,
    rho: f64,
    target: &'a str,
    /// `all` for the pooled value.
    subgroup: &'a str,
    n: usize,
    tau: Option<f64>,
}

#[derive(Serialize)]
struct ScatterLine<'a> {
    model_id: &'a str,
    measure: &'a str,
    rho: f64,
    target: &'a str,
    measure_value: f64,
    target_value: f64,
    subgroup: &'a str,
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: PoolConfig = io::read_config(ctx.config.as_deref(), true)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate().config()?;
    io::create_dir(&ctx.out)?;
    io::write_json(&ctx.out.join("config.json"), &cfg)?;
    let outcome = run_pool(&cfg, &ctx.out).runtime()?;

    let mut taus = Vec::new();
    let mut scatter = Vec::new();
    for r in &outcome.reports {
        let target = r.target.name();
        taus.push(TauRow {
            measure: &r.measure,
            rho: r.rho,
            target,
            subgroup: "all",
            n: r.n,
            tau: r.tau,
        });
        for s in &r.subgroups {
            taus.push(TauRow {
                measure: &r.measure,
                rho: r.rho,
                target,
                subgroup: &s.subgroup,
                n: s.n,
                tau: s.tau,
            });
        }
        for p in &r.scatter {
            scatter.push(ScatterLine {
                model_id: &p.model_id,
                measure: &r.measure,
                rho: r.rho,
                target,
                measure_value: p.measure,
                target_value: p.target,
                subgroup: &p.subgroup,
            });
        }
    }
    io::write_csv(&ctx.out.join("tau.csv"), &taus)?;
    io::write_csv(&ctx.out.join("scatter.csv"), &scatter)?;

    let excluded = outcome.records.iter().filter(|r| r.excluded).count();
    let failed = outcome
        .records
        .iter()
        .filter(|r| !r.failures.is_empty())
        .count();
    println!(
        "models {}  trained now {}  excluded {}  with failures {}  values computed {}",
        outcome.records.len(),
        outcome.trained,
        excluded,
        failed,
        outcome.measured
    );
    for t in &taus {
        let tau = t.tau.map_or("undefined".into(), |v| format!("{v:.3}"));
        println!(
            "{}\trho={}\t{}\t{}\tn={}\ttau={}",
            t.measure, t.rho, t.target, t.subgroup, t.n, tau
        );
    }
    Ok(())
}
