use adasharp::autodiff::Array;
use adasharp::data::{Dataset, GaussianMixture, Targets};
use adasharp::diaglin::{make_task, TaskConfig};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::failure::{Failure, OrRuntime};
use crate::io;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TaskSpec {
    SparseRegression {
        #[serde(flatten)]
        task: TaskConfig,
        #[serde(default)]
        seed: u64,
    },
    GaussianMixture {
        #[serde(flatten)]
        mixture: GaussianMixture,
        n_train: usize,
        n_test: usize,
    },
}

#[derive(Serialize)]
struct BetaRow {
    index: usize,
    beta: f64,
}

fn regression(x: &Array<f64>, y: &[f64]) -> Result<Dataset, Failure> {
    Dataset::new(x.clone(), Targets::Values(y.to_vec())).runtime()
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let spec: TaskSpec = io::read_config(ctx.config.as_deref(), true)?;
    io::create_dir(&ctx.out)?;
    let (train, test) = match spec {
        TaskSpec::SparseRegression { task, seed } => {
            let task_seed = ctx.seed.unwrap_or(seed);
            let t = make_task(&task, task_seed).config()?;
            let beta: Vec<BetaRow> = t
                .beta_star
                .iter()
                .enumerate()
                .map(|(index, &beta)| BetaRow { index, beta })
                .collect();
            io::write_csv(&ctx.out.join("beta_star.csv"), &beta)?;
            (
                regression(&t.x_train, &t.y_train)?,
                regression(&t.x_test, &t.y_test)?,
            )
        }
        TaskSpec::GaussianMixture {
            mut mixture,
            n_train,
            n_test,
        } => {
            if let Some(s) = ctx.seed {
                mixture.seed = s;
            }
            (
                mixture.sample(n_train, 0).config()?,
                mixture.sample(n_test, 1).config()?,
            )
        }
    };
    train.save(ctx.out.join("train.csv")).runtime()?;
    test.save(ctx.out.join("test.csv")).runtime()?;
    println!(
        "train {} x {}  test {} x {}",
        train.len(),
        train.dim(),
        test.len(),
        test.dim()
    );
    Ok(())
}
