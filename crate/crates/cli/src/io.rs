use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{Failure, OrRuntime};

/// Parses the config file, or an empty object when there is none and the
/// schema has defaults for everything.
pub fn read_config<T: DeserializeOwned>(path: Option<&Path>, required: bool) -> Result<T, Failure> {
    let text = match path {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None if required => {
            return Err(Failure::Config(
                "--config is required for this subcommand".into(),
            ))
        }
        None => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| {
        let origin = path.map_or("<defaults>".to_string(), |p| p.display().to_string());
        Failure::Config(format!("{origin}: {e}"))
    })
}

/// `rel` interpreted relative to the directory of the config file.
pub fn resolve(config: Option<&Path>, rel: &Path) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(dir) if rel.is_relative() => dir.join(rel),
        _ => rel.to_path_buf(),
    }
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).runtime()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).runtime()?;
    }
    w.flush()
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}
