use std::path::PathBuf;

pub mod diaglin;
pub mod gen_task;
pub mod invariance;
pub mod measure;
pub mod pool;

/// Global flags shared by every subcommand.
pub struct Context {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}
