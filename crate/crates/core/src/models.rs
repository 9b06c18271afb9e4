//! Model zoo: linear classifier, ReLU MLP and diagonal linear network.
//!
//! Parameters live in one flat vector. Each dense layer stores its weight
//! matrix (`fan_in × fan_out`, row-major) followed by its bias row when
//! biases are enabled. The diagonal network stores `u` then `v`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Deref;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, GraphBuilder, HvpMethod, NodeId, LOGIT_VARIANCE_FLOOR};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear {
        input_dim: usize,
        classes: usize,
        #[serde(default)]
        bias: bool,
    },
    /// `widths = [input, hidden..., classes]`, ReLU between layers.
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        bias: bool,
    },
    /// Regression with `β = u ⊙ v`.
    DiagLin { dim: usize },
    /// Regression `⟨x, w⟩` with loss `½‖Xw − y‖²`.
    LinReg { dim: usize },
}

/// One contiguous block of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ModelSpec::Linear {
                input_dim, classes, ..
            } => *input_dim > 0 && *classes > 0,
            ModelSpec::Mlp { widths, .. } => widths.len() >= 2 && widths.iter().all(|&w| w > 0),
            ModelSpec::DiagLin { dim } | ModelSpec::LinReg { dim } => *dim > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid model spec {self:?}"
            )))
        }
    }

    /// Layer widths of the dense stack, `[1, 1]`-shaped blocks for diaglin.
    fn widths(&self) -> Vec<usize> {
        match self {
            ModelSpec::Linear {
                input_dim, classes, ..
            } => vec![*input_dim, *classes],
            ModelSpec::Mlp { widths, .. } => widths.clone(),
            ModelSpec::DiagLin { dim } | ModelSpec::LinReg { dim } => vec![*dim, 1],
        }
    }

    fn has_bias(&self) -> bool {
        match self {
            ModelSpec::Linear { bias, .. } | ModelSpec::Mlp { bias, .. } => *bias,
            ModelSpec::DiagLin { .. } | ModelSpec::LinReg { .. } => false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths()[0]
    }

    /// Number of logits (1 for regression).
    pub fn output_dim(&self) -> usize {
        *self.widths().last().unwrap_or(&1)
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, ModelSpec::DiagLin { .. } | ModelSpec::LinReg { .. })
    }

    /// Number of weight layers (diaglin counts as one `(u, v)` pair).
    pub fn n_layers(&self) -> usize {
        self.widths().len() - 1
    }

    pub fn segments(&self) -> Vec<Segment> {
        if let ModelSpec::DiagLin { dim } = self {
            return vec![
                Segment {
                    name: "u".into(),
                    layer: 0,
                    rows: *dim,
                    cols: 1,
                    offset: 0,
                },
                Segment {
                    name: "v".into(),
                    layer: 0,
                    rows: *dim,
                    cols: 1,
                    offset: *dim,
                },
            ];
        }
        if let ModelSpec::LinReg { dim } = self {
            return vec![Segment {
                name: "w".into(),
                layer: 0,
                rows: *dim,
                cols: 1,
                offset: 0,
            }];
        }
        let widths = self.widths();
        let mut out = Vec::new();
        let mut offset = 0;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            out.push(Segment {
                name: format!("layer{l}.weight"),
                layer: l,
                rows: fan_in,
                cols: fan_out,
                offset,
            });
            offset += fan_in * fan_out;
            if self.has_bias() {
                out.push(Segment {
                    name: format!("layer{l}.bias"),
                    layer: l,
                    rows: 1,
                    cols: fan_out,
                    offset,
                });
                offset += fan_out;
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.segments().iter().map(Segment::len).sum()
    }

    /// He-normal weights times `scale`, zero biases; the regression models
    /// draw every weight from `scale·N(0, 1)`.
    pub fn init(&self, scale: f64, rng: &mut impl Rng) -> ParamVector {
        let mut values = vec![0.0; self.n_params()];
        for seg in self.segments() {
            if seg.name.ends_with("bias") {
                continue;
            }
            let std = if self.is_classifier() {
                scale * (2.0 / seg.rows as f64).sqrt()
            } else {
                scale
            };
            for v in &mut values[seg.range()] {
                let z: f64 = StandardNormal.sample(rng);
                *v = std * z;
            }
        }
        ParamVector {
            values,
            segments: self.segments(),
        }
    }

    /// Appends the network to `b`, returning the `n×K` output node.
    fn build_forward(&self, b: &mut GraphBuilder, x: NodeId) -> Result<NodeId> {
        let segs = self.segments();
        if let ModelSpec::DiagLin { .. } = self {
            let u = b.param(segs[0].offset, segs[0].rows, 1)?;
            let v = b.param(segs[1].offset, segs[1].rows, 1)?;
            let beta = b.mul(u, v)?;
            return b.matmul(x, beta);
        }
        if let ModelSpec::LinReg { dim } = self {
            let w = b.param(0, *dim, 1)?;
            return b.matmul(x, w);
        }
        let n_layers = self.n_layers();
        let mut h = x;
        let mut it = segs.iter().peekable();
        while let Some(seg) = it.next() {
            let w = b.param(seg.offset, seg.rows, seg.cols)?;
            h = b.matmul(h, w)?;
            if let Some(next) = it.peek() {
                if next.layer == seg.layer {
                    let bias = b.param(next.offset, 1, next.cols)?;
                    h = b.add(h, bias)?;
                    it.next();
                }
            }
            if seg.layer + 1 < n_layers {
                h = b.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Graph with input `X (rows×d)` and output the raw logits.
    pub fn logits_graph(&self, rows: usize) -> Result<Graph> {
        self.validate()?;
        let mut b = GraphBuilder::new(self.n_params());
        let x = b.input(rows, self.input_dim());
        let out = self.build_forward(&mut b, x)?;
        b.build(out)
    }

    /// Scalar training loss with inputs `X` and the target array of
    /// [`Dataset::target_array`]. Classification: mean cross-entropy,
    /// optionally on normalized logits. Diaglin: `½‖Xβ − y‖²` summed.
    pub fn loss_graph(&self, rows: usize, normalize: bool) -> Result<Graph> {
        self.validate()?;
        let mut b = GraphBuilder::new(self.n_params());
        let x = b.input(rows, self.input_dim());
        let t = b.input(rows, self.output_dim());
        let mut out = self.build_forward(&mut b, x)?;
        let loss = if self.is_classifier() {
            if normalize {
                out = b.normalize_logits(out)?;
            }
            b.softmax_cross_entropy(out, t)?
        } else {
            if normalize {
                return Err(Error::InvalidArgument(
                    "logit normalization applies to classifiers only".into(),
                ));
            }
            b.half_squared_error(out, t)?
        };
        b.build(loss)
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        let n = self.n_params();
        if w.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: w.len(),
            });
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input features, data has {}",
                self.input_dim(),
                data.dim()
            )));
        }
        match (self.is_classifier(), data.targets()) {
            (true, Targets::Classes { n_classes, .. }) if *n_classes == self.output_dim() => Ok(()),
            (false, Targets::Values(_)) => Ok(()),
            _ => Err(Error::Shape(format!(
                "targets do not fit a model with {} outputs",
                self.output_dim()
            ))),
        }
    }
}

/// Flat weights with the segment layout of their [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        spec.check_weights(&values)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight {i} is not finite")));
        }
        Ok(ParamVector {
            values,
            segments: spec.segments(),
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.range()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub fn predict_logits(spec: &ModelSpec, w: &[f64], x: &Array<f64>) -> Result<Array<f64>> {
    spec.check_weights(w)?;
    if x.cols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "model expects {} input features, got {}",
            spec.input_dim(),
            x.cols()
        )));
    }
    spec.logits_graph(x.rows())?.forward(w, &[x])
}

/// `f / sqrt(mean((f − mean f)²))` for one row of logits.
pub fn normalize_logits(f: &[f64]) -> Result<Vec<f64>> {
    if f.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "logit normalization needs at least 2 classes, got {}",
            f.len()
        )));
    }
    let k = f.len() as f64;
    let mean = f.iter().sum::<f64>() / k;
    let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
    if !(var >= LOGIT_VARIANCE_FLOOR) {
        return Err(Error::DegenerateLogits { variance: var });
    }
    let s = var.sqrt();
    Ok(f.iter().map(|x| x / s).collect())
}

/// Loss of one batch, compiled once and evaluated at many weight vectors.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    graph: Graph,
    x: Array<f64>,
    t: Array<f64>,
}

impl BatchLoss {
    pub fn new(spec: &ModelSpec, batch: &Dataset, normalize: bool) -> Result<Self> {
        spec.check_data(batch)?;
        Ok(BatchLoss {
            graph: spec.loss_graph(batch.len(), normalize)?,
            x: batch.x().clone(),
            t: batch.target_array(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.graph.n_params()
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        self.graph.value(w, &[&self.x, &self.t])
    }

    pub fn value_and_grad(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.graph.value_and_grad(w, &[&self.x, &self.t])
    }

    pub fn hvp(&self, w: &[f64], v: &[f64], method: HvpMethod) -> Result<Vec<f64>> {
        self.graph.hvp(w, &[&self.x, &self.t], v, method)
    }
}

pub fn loss(spec: &ModelSpec, w: &[f64], batch: &Dataset, normalize: bool) -> Result<f64> {
    spec.check_weights(w)?;
    BatchLoss::new(spec, batch, normalize)?.value(w)
}

/// Fraction of misclassified rows (classifiers only).
pub fn error_rate(spec: &ModelSpec, w: &[f64], data: &Dataset) -> Result<f64> {
    let Targets::Classes { labels, .. } = data.targets() else {
        return Err(Error::InvalidArgument(
            "error rate needs class labels".into(),
        ));
    };
    let logits = predict_logits(spec, w, data.x())?;
    let wrong = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = logits.row(i);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap_or(0);
            best != y
        })
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Multiplies layer `layer` (weights and bias) by `alpha` and divides the
/// weights of layer `layer + 1` by `alpha`. For diaglin, `(αu, v/α)`.
/// The network function is unchanged. Linear models have no such pair.
pub fn reparametrize_scale(
    spec: &ModelSpec,
    w: &[f64],
    layer: usize,
    alpha: f64,
) -> Result<ParamVector> {
    spec.check_weights(w)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {alpha}"
        )));
    }
    let mut out = w.to_vec();
    let segs = spec.segments();
    if let ModelSpec::DiagLin { .. } = spec {
        if layer != 0 {
            return Err(Error::InvalidArgument(format!(
                "diagonal network has no layer {layer}"
            )));
        }
        out[segs[0].range()].iter_mut().for_each(|x| *x *= alpha);
        out[segs[1].range()].iter_mut().for_each(|x| *x /= alpha);
        return ParamVector::new(spec, out);
    }
    if layer + 1 >= spec.n_layers() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} has no following layer ({} layers)",
            spec.n_layers()
        )));
    }
    for seg in &segs {
        if seg.layer == layer {
            out[seg.range()].iter_mut().for_each(|x| *x *= alpha);
        } else if seg.layer == layer + 1 && seg.name.ends_with("weight") {
            out[seg.range()].iter_mut().for_each(|x| *x /= alpha);
        }
    }
    ParamVector::new(spec, out)
}

/// Multiplies the last layer (weights and bias) by `alpha`, scaling every
/// logit by `alpha`.
pub fn scale_output(spec: &ModelSpec, w: &[f64], alpha: f64) -> Result<ParamVector> {
    spec.check_weights(w)?;
    let last = spec.n_layers() - 1;
    let mut out = w.to_vec();
    for seg in spec.segments() {
        if seg.layer == last && seg.name != "v" {
            out[seg.range()].iter_mut().for_each(|x| *x *= alpha);
        }
    }
    ParamVector::new(spec, out)
}

/// Saved model: spec, flat weights and free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, weights: Vec<f64>) -> Result<Self> {
        ParamVector::new(&spec, weights.clone())?;
        Ok(Checkpoint {
            spec,
            weights,
            metadata: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::new(&self.spec, self.weights.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        ckpt.params()?;
        Ok(ckpt)
    }
}
