//! Tensor checkpoint files.
//!
//! Layout: one text header line per tensor (`name d0 d1 ...`), a blank line,
//! then every tensor's values as row-major little-endian `f64`, concatenated
//! in header order. A tensor with no dimensions on its header line is a scalar.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::numcore::{Dense, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        let t = Self {
            name: name.into(),
            shape,
            data,
        };
        debug_assert_eq!(t.numel(), t.data.len());
        t
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, Vec::new(), vec![value])
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut header = String::new();
    for t in tensors {
        if t.name.is_empty() || t.name.contains(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "invalid tensor name {:?}",
                t.name
            )));
        }
        if t.numel() != t.data.len() {
            return Err(Error::Shape(format!(
                "tensor {} has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        header.push_str(&t.name);
        for d in &t.shape {
            header.push(' ');
            header.push_str(&d.to_string());
        }
        header.push('\n');
    }
    header.push('\n');
    let mut out = header.into_bytes();
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let ctx = "checkpoint";
    let mut specs = Vec::new();
    let mut pos = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| Error::parse(ctx, "header is not terminated by a blank line"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| Error::parse(ctx, "header is not valid UTF-8"))?;
        pos = end + 1;
        if line.is_empty() {
            break;
        }
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or_default().to_string();
        let shape = parts
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|e| Error::parse(ctx, format!("{name}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        specs.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(specs.len());
    for (name, shape) in specs {
        let n: usize = shape.iter().product();
        let len = n * 8;
        if bytes.len() < pos + len {
            return Err(Error::parse(
                ctx,
                format!("truncated data for tensor {name}"),
            ));
        }
        let data = bytes[pos..pos + len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        pos += len;
        tensors.push(NamedTensor { name, shape, data });
    }
    if pos != bytes.len() {
        return Err(Error::parse(ctx, "trailing bytes after the last tensor"));
    }
    Ok(tensors)
}

pub fn save(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode(tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::parse(path.display().to_string(), msg),
        other => other,
    })
}

pub fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Result<&'a NamedTensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::parse("checkpoint", format!("missing tensor {name}")))
}

impl Mlp {
    /// Tensors named `{prefix}.{layer}.weight` / `{prefix}.{layer}.bias`.
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        self.layers()
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    NamedTensor::new(
                        format!("{prefix}.{i}.weight"),
                        vec![l.out_dim(), l.in_dim()],
                        l.weight.iter().copied().collect(),
                    ),
                    NamedTensor::new(
                        format!("{prefix}.{i}.bias"),
                        vec![l.out_dim()],
                        l.bias.to_vec(),
                    ),
                ]
            })
            .collect()
    }

    pub fn from_tensors(prefix: &str, tensors: &[NamedTensor]) -> Result<Mlp> {
        let mut layers = Vec::new();
        for i in 0.. {
            let wname = format!("{prefix}.{i}.weight");
            let Some(w) = tensors.iter().find(|t| t.name == wname) else {
                break;
            };
            let b = find(tensors, &format!("{prefix}.{i}.bias"))?;
            let [rows, cols] = w.shape[..] else {
                return Err(Error::Shape(format!("{wname} must be 2-D")));
            };
            let weight = Array2::from_shape_vec((rows, cols), w.data.clone())
                .map_err(|e| Error::Shape(format!("{wname}: {e}")))?;
            layers.push(Dense {
                weight,
                bias: Array1::from(b.data.clone()),
            });
        }
        if layers.is_empty() {
            return Err(Error::parse(
                "checkpoint",
                format!("no layers with prefix {prefix}"),
            ));
        }
        Mlp::new(layers)
    }
}
