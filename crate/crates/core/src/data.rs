//! Datasets, batching and the synthetic Gaussian-mixture task.
//!
//! External datasets can be read from JSON (the [`DatasetFile`] layout) or
//! from CSV with a header `x0,...,x{d-1},label` (classification, integer
//! labels, `n_classes = max label + 1`) or `x0,...,x{d-1},target`
//! (regression).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes {
        labels: Vec<usize>,
        n_classes: usize,
    },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs `x` (n×d) with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array<f64>,
    targets: Targets,
}

impl Dataset {
    pub fn new(x: Array<f64>, targets: Targets) -> Result<Self> {
        if x.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} targets",
                x.rows(),
                targets.len()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        if let Targets::Classes { labels, n_classes } = &targets {
            if let Some(bad) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} out of range for {n_classes} classes"
                )));
            }
        }
        Ok(Dataset { x, targets })
    }

    pub fn x(&self) -> &Array<f64> {
        &self.x
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Classes { n_classes, .. } => Some(n_classes),
            Targets::Values(_) => None,
        }
    }

    /// Targets as a graph input: one-hot rows for classes, a column for values.
    pub fn target_array(&self) -> Array<f64> {
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                Array::from_fn(labels.len(), *n_classes, |i, j| {
                    if labels[i] == j {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            Targets::Values(v) => Array::column(v.clone()),
        }
    }

    /// Rows selected by `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let x = Array::from_fn(idx.len(), d, |i, j| self.x.get(idx[i], j));
        let targets = match &self.targets {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        };
        Dataset::new(x, targets)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} invalid for {} rows",
                self.len()
            )));
        }
        self.select(&(start..end).collect::<Vec<_>>())
    }

    /// `n_batches` disjoint consecutive batches of `m` rows from the front.
    pub fn batches(&self, m: usize, n_batches: usize) -> Result<Vec<Dataset>> {
        if m == 0 || n_batches == 0 {
            return Err(Error::InvalidArgument(
                "batch size and count must be positive".into(),
            ));
        }
        if m * n_batches > self.len() {
            return Err(Error::InvalidArgument(format!(
                "{n_batches} batches of {m} need {} rows, dataset has {}",
                m * n_batches,
                self.len()
            )));
        }
        (0..n_batches)
            .map(|b| self.slice(b * m, (b + 1) * m))
            .collect()
    }

    /// Copy with additive Gaussian noise of standard deviation `sigma` on the inputs.
    pub fn corrupted(&self, sigma: f64, rng: &mut impl Rng) -> Dataset {
        let mut x = self.x.clone();
        for v in x.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
        Dataset {
            x,
            targets: self.targets.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            return Dataset::read_csv(file);
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let raw: DatasetFile = serde_json::from_reader(BufReader::new(file))?;
        raw.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        if is_csv {
            return self.write_csv(file);
        }
        serde_json::to_writer(BufWriter::new(file), &DatasetFile::from(self))?;
        Ok(())
    }

    pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let last = headers
            .iter()
            .next_back()
            .ok_or_else(|| Error::InvalidArgument("empty CSV header".into()))?
            .to_string();
        let classification = match last.as_str() {
            "label" => true,
            "target" => false,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "last CSV column must be `label` or `target`, found `{other}`"
                )))
            }
        };
        let d = headers.len() - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for field in rec.iter().take(d) {
                xs.push(parse_f64(field)?);
            }
            ys.push(parse_f64(&rec[d])?);
        }
        let n = ys.len();
        let x = Array::new(n, d, xs)?;
        let targets = if classification {
            let labels: Vec<usize> = ys.iter().map(|&y| y as usize).collect();
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            Targets::Classes { labels, n_classes }
        } else {
            Targets::Values(ys)
        };
        Dataset::new(x, targets)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push(match self.targets {
            Targets::Classes { .. } => "label".into(),
            Targets::Values(_) => "target".into(),
        });
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(match &self.targets {
                Targets::Classes { labels, .. } => labels[i].to_string(),
                Targets::Values(v) => v[i].to_string(),
            });
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: `{s}`")))
}

/// JSON layout of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
}

impl From<&Dataset> for DatasetFile {
    fn from(ds: &Dataset) -> Self {
        let x = (0..ds.len()).map(|i| ds.x.row(i).to_vec()).collect();
        match &ds.targets {
            Targets::Classes { labels, n_classes } => DatasetFile {
                x,
                labels: Some(labels.clone()),
                n_classes: Some(*n_classes),
                targets: None,
            },
            Targets::Values(v) => DatasetFile {
                x,
                labels: None,
                n_classes: None,
                targets: Some(v.clone()),
            },
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = Error;

    fn try_from(f: DatasetFile) -> Result<Dataset> {
        let n = f.x.len();
        let d = f.x.first().map_or(0, |r| r.len());
        if f.x.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows in dataset file".into()));
        }
        let x = Array::new(n, d, f.x.into_iter().flatten().collect())?;
        let targets = match (f.labels, f.targets) {
            (Some(labels), None) => {
                let n_classes = f
                    .n_classes
                    .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
                Targets::Classes { labels, n_classes }
            }
            (None, Some(values)) => Targets::Values(values),
            _ => {
                return Err(Error::InvalidArgument(
                    "dataset file needs exactly one of `labels` or `targets`".into(),
                ))
            }
        };
        Dataset::new(x, targets)
    }
}

/// Balanced Gaussian mixture: class `k` has center `separation · e_k`
/// (a random unit direction) and identity covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub n_classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl GaussianMixture {
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let mut rng = crate::rng::stream(self.seed, &[0]);
        (0..self.n_classes)
            .map(|_| {
                let z: Vec<f64> = (0..self.dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                z.iter().map(|v| self.separation * v / norm).collect()
            })
            .collect()
    }

    /// `n` points drawn from stream `split` (use different splits for
    /// train and test). Labels cycle through the classes.
    pub fn sample(&self, n: usize, split: u64) -> Result<Dataset> {
        if self.n_classes < 2 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "mixture needs at least 2 classes and 1 dimension".into(),
            ));
        }
        let centers = self.centers();
        let mut rng = crate::rng::stream(self.seed, &[1, split]);
        let labels: Vec<usize> = (0..n).map(|i| i % self.n_classes).collect();
        let x = Array::from_fn(n, self.dim, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            centers[labels[i]][j] + z
        });
        Dataset::new(
            x,
            Targets::Classes {
                labels,
                n_classes: self.n_classes,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Array::from_fn(6, 2, |i, j| (i * 2 + j) as f64);
        Dataset::new(
            x,
            Targets::Classes {
                labels: vec![0, 1, 2, 0, 1, 2],
                n_classes: 3,
            },
        )
        .unwrap()
    }

    #[test]
    fn batches_are_disjoint_and_ordered() {
        let ds = toy();
        let b = ds.batches(2, 3).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b[1].x().row(0), &[4.0, 5.0]);
        assert!(ds.batches(4, 2).is_err());
        assert!(ds.batches(0, 1).is_err());
    }

    #[test]
    fn one_hot_targets() {
        let t = toy().target_array();
        assert_eq!(t.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy();
        for name in ["d.csv", "d.json"] {
            let p = dir.path().join(name);
            ds.save(&p).unwrap();
            assert_eq!(Dataset::load(&p).unwrap(), ds);
        }
        let reg = Dataset::new(
            Array::column(vec![1.5, -2.0]),
            Targets::Values(vec![0.25, 3.0]),
        )
        .unwrap();
        let p = dir.path().join("r.csv");
        reg.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), reg);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let x = Array::zeros(3, 2);
        assert!(Dataset::new(x, Targets::Values(vec![1.0])).is_err());
        let x = Array::zeros(1, 2);
        assert!(Dataset::new(
            x,
            Targets::Classes {
                labels: vec![3],
                n_classes: 2
            }
        )
        .is_err());
    }

    #[test]
    fn mixture_is_deterministic() {
        let gm = GaussianMixture {
            n_classes: 3,
            dim: 4,
            separation: 3.0,
            seed: 9,
        };
        assert_eq!(gm.sample(30, 0).unwrap(), gm.sample(30, 0).unwrap());
        assert_ne!(gm.sample(30, 0).unwrap(), gm.sample(30, 1).unwrap());
    }
}
