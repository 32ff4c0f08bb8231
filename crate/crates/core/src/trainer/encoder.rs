//! Projection heads over frozen base embeddings, with the `REINF-ENC v1`
//! file format.
//!
//! ```text
//! REINF-ENC v1 in_dim=16 out_dim=8 layers=16x8:tanh seed=42 config_digest=<hex>
//! weight<TAB>0<TAB><base64 f32[out*in], row-major>
//! bias<TAB>0<TAB><base64 f32[out]>
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Header};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

const ENC_FORMAT: &str = "REINF-ENC v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::config(format!("unknown activation {s:?}"))),
        }
    }
}

/// One affine map followed by an activation. `weight` is row-major
/// `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform in `±1/√in_dim`; values are drawn as `f32` so the layer is
    /// exactly representable in the encoder file.
    pub fn uniform(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f32).sqrt();
        let mut draw = || f64::from(rng.gen_range(-bound..=bound));
        let weight = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Layer {
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        }
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
            .collect()
    }
}

/// Trainable encoder: a chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layers: Vec<Layer>,
}

/// Activations recorded during a forward pass, for backpropagation.
pub(crate) struct Trace {
    /// `inputs[i]` feeds layer `i`; the last element is the output.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace has an output")
    }
}

impl EncoderParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("encoder needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::domain(format!("layer {i} has a zero dimension")));
            }
            if layer.weight.len() != layer.in_dim * layer.out_dim || layer.bias.len() != layer.out_dim {
                return Err(Error::domain(format!("layer {i} parameter shapes are inconsistent")));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim != layer.out_dim {
                    return Err(Error::domain(format!(
                        "layer {i} outputs {} values but layer {} expects {}",
                        layer.out_dim,
                        i + 1,
                        next.in_dim
                    )));
                }
            }
            if layer.weight.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("layer {i} has a non-finite parameter")));
            }
        }
        Ok(EncoderParams { layers })
    }

    /// Linear identity map on `dim`-vectors.
    pub fn identity(dim: usize) -> Self {
        let mut layer = Layer::zeros(dim, dim, Activation::Linear);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        EncoderParams { layers: vec![layer] }
    }

    /// Single affine layer `in_dim → out_dim` with the given activation.
    pub fn head(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        EncoderParams {
            layers: vec![Layer::uniform(in_dim, out_dim, activation, rng)],
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim, l.activation))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// Round every parameter to `f32` precision, the encoder file's storage.
    pub fn quantize_f32(&mut self) {
        for p in self.params_mut() {
            *p = f64::from(*p as f32);
        }
    }

    pub(crate) fn forward_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer
                .preactivation(&cur)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(cur)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.in_dim() {
            return Err(Error::domain(format!(
                "encoder expects input dim {}, got {len}",
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Apply the encoder to a base embedding.
    pub fn project(&self, base: &EmbeddingVector) -> Result<EmbeddingVector> {
        EmbeddingVector::new(self.forward_slice(base.values())?)
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x.len())?;
        let mut values = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.preactivation(values.last().expect("non-empty"));
            let y = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            pre.push(z);
            values.push(y);
        }
        Ok(Trace { values, pre })
    }

    /// Accumulate `∂L/∂θ` into `grads` given `∂L/∂output`.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut EncoderParams) {
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.values[i];
            let output = &trace.values[i + 1];
            let delta: Vec<f64> = g
                .iter()
                .zip(&trace.pre[i])
                .zip(output)
                .map(|((gi, z), y)| gi * layer.activation.derivative(*z, *y))
                .collect();
            let acc = &mut grads.layers[i];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                acc.bias[r] += d;
                let row = &mut acc.weight[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (w, x) in row.iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            if i > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for (r, d) in delta.iter().enumerate() {
                    let row = &layer.weight[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
                g = next;
            }
        }
    }

    pub fn layer_spec(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("{}x{}:{}", l.in_dim, l.out_dim, l.activation))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn payload(&self) -> String {
        let mut out = String::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!(
                "weight\t{i}\t{}\n",
                codec::encode_f32(layer.weight.iter().map(|&v| v as f32))
            ));
            out.push_str(&format!(
                "bias\t{i}\t{}\n",
                codec::encode_f32(layer.bias.iter().map(|&v| v as f32))
            ));
        }
        out
    }

    /// SHA-256 over the layer spec and `f32` parameter payload.
    pub fn digest(&self) -> String {
        codec::sha256_hex(format!("{}\n{}", self.layer_spec(), self.payload()).as_bytes())
    }
}

/// An encoder with the metadata stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderFile {
    pub params: EncoderParams,
    pub seed: u64,
    pub config_digest: String,
}

impl EncoderFile {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let digest = if self.config_digest.is_empty() {
            "none"
        } else {
            &self.config_digest
        };
        format!(
            "{ENC_FORMAT} in_dim={} out_dim={} layers={} seed={} config_digest={digest}\n{}",
            p.in_dim(),
            p.out_dim(),
            p.layer_spec(),
            self.seed,
            p.payload()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines = codec::lines(ENC_FORMAT, text)?;
        let header = Header::parse(ENC_FORMAT, ENC_FORMAT, lines.first(), None)?;
        let head = lines[0];
        let in_dim: usize = header.get_parsed("in_dim")?;
        let out_dim: usize = header.get_parsed("out_dim")?;
        let seed: u64 = header.get_parsed("seed")?;
        let config_digest = match header.get("config_digest")? {
            "none" => String::new(),
            d => d.to_string(),
        };
        let mut shapes = Vec::new();
        for spec in header.get("layers")?.split(',') {
            let parsed = spec.split_once(':').and_then(|(dims, act)| {
                let (i, o) = dims.split_once('x')?;
                Some((i.parse::<usize>().ok()?, o.parse::<usize>().ok()?, act.parse::<Activation>().ok()?))
            });
            shapes.push(parsed.ok_or_else(|| head.error(ENC_FORMAT, format!("bad layer spec {spec:?}")))?);
        }
        let rows = &lines[1..];
        if rows.len() != shapes.len() * 2 {
            let at = rows.last().unwrap_or(&head);
            return Err(at.error(
                ENC_FORMAT,
                format!("expected {} parameter rows, found {}", shapes.len() * 2, rows.len()),
            ));
        }
        let mut layers = Vec::new();
        for (i, (li, lo, act)) in shapes.into_iter().enumerate() {
            let read_row = |line: &codec::Line<'_>, kind: &str, len: usize| -> Result<Vec<f64>> {
                let mut parts = line.text.splitn(3, '\t');
                let (k, idx, payload) = (parts.next(), parts.next(), parts.next());
                if k != Some(kind) || idx != Some(i.to_string().as_str()) {
                    return Err(line.error(ENC_FORMAT, format!("expected {kind} row for layer {i}")));
                }
                let payload = payload.ok_or_else(|| line.error(ENC_FORMAT, "missing payload"))?;
                Ok(codec::decode_f32(ENC_FORMAT, line, payload, len)?
                    .into_iter()
                    .map(f64::from)
                    .collect())
            };
            let weight = read_row(&rows[2 * i], "weight", li * lo)?;
            let bias = read_row(&rows[2 * i + 1], "bias", lo)?;
            layers.push(Layer {
                in_dim: li,
                out_dim: lo,
                weight,
                bias,
                activation: act,
            });
        }
        let params = EncoderParams::new(layers).map_err(|e| head.error(ENC_FORMAT, e.to_string()))?;
        if params.in_dim() != in_dim || params.out_dim() != out_dim {
            return Err(head.error(ENC_FORMAT, "in_dim/out_dim disagree with the layer spec"));
        }
        Ok(EncoderFile {
            params,
            seed,
            config_digest,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        codec::write_string(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&codec::read_to_string(path)?)
    }
}
