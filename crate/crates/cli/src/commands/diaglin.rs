use adasharp::diaglin::{run_study, StudyConfig};

use super::Context;
use crate::failure::{Failure, OrRuntime};
use crate::io;

fn show(tau: Option<f64>) -> String {
    tau.map_or("undefined".into(), |t| format!("{t:.3}"))
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: StudyConfig = io::read_config(ctx.config.as_deref(), false)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate().config()?;
    let result = run_study(&cfg).runtime()?;

    io::create_dir(&ctx.out)?;
    io::write_csv(&ctx.out.join("models.csv"), &result.rows)?;
    io::write_json(&ctx.out.join("summary.json"), &result.summary)?;
    io::write_json(&ctx.out.join("config.json"), &cfg)?;

    let s = &result.summary;
    println!(
        "models {}  passed {}  excluded {}",
        s.n_models, s.n_passed, s.n_excluded
    );
    println!("tau(l1 norm, test loss)            {}", show(s.tau_l1_test));
    println!(
        "tau(half trace rescaled, test)     {}",
        show(s.tau_half_trace_rescaled_test)
    );
    println!(
        "tau(half trace, test)              {}",
        show(s.tau_half_trace_test)
    );
    println!(
        "tau(half lmax rescaled, test)      {}",
        show(s.tau_half_lambda_max_rescaled_test)
    );
    println!(
        "tau(l1 norm, half trace rescaled)  {}",
        show(s.tau_l1_half_trace_rescaled)
    );
    Ok(())
}
