//! Weight persistence.
//!
//! Little-endian binary layout:
//!
//! ```text
//! "FOVW"            4 bytes   magic
//! version           u32       currently 1
//! classes           u32
//! input shape       u32 x 3   channels, height, width
//! layer count       u32
//! per layer:        u8 tag    0 conv, 1 relu, 2 maxpool, 3 flatten, 4 dense
//!   conv            u32 x 6   out, in, kh, kw, stride, padding
//!   maxpool         u32 x 1   window
//!   dense           u32 x 2   out, in
//! payload           f64 x N   parameters in layer order (conv weight;
//!                             dense weight then bias)
//! checksum          u64       FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Array;

use super::{Layer, Predictor};

const MAGIC: &[u8; 4] = b"FOVW";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("weight file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated at byte offset {0}")]
    Truncated(usize),
    #[error("unknown layer tag {tag} at byte offset {offset}")]
    UnknownLayerTag { tag: u8, offset: usize },
    #[error("weight file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
}

/// FNV-1a 64-bit hash.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn save_weights<T: Scalar>(predictor: &Predictor<T>, path: &Path) -> Result<(), WeightFileError> {
    Ok(fs::write(path, to_bytes(predictor))?)
}

pub fn load_weights<T: Scalar>(path: &Path) -> Result<Predictor<T>, WeightFileError> {
    from_bytes(&fs::read(path)?)
}

pub fn to_bytes<T: Scalar>(predictor: &Predictor<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    push_u32(&mut out, predictor.classes() as u32);
    for &d in predictor.input_shape() {
        push_u32(&mut out, d as u32);
    }
    push_u32(&mut out, predictor.layers().len() as u32);
    for layer in predictor.layers() {
        match layer {
            Layer::Conv { weight, stride, padding } => {
                out.push(0);
                for &d in weight.shape() {
                    push_u32(&mut out, d as u32);
                }
                push_u32(&mut out, *stride as u32);
                push_u32(&mut out, *padding as u32);
            }
            Layer::Relu => out.push(1),
            Layer::MaxPool { window } => {
                out.push(2);
                push_u32(&mut out, *window as u32);
            }
            Layer::Flatten => out.push(3),
            Layer::Dense { weight, .. } => {
                out.push(4);
                push_u32(&mut out, weight.shape()[0] as u32);
                push_u32(&mut out, weight.shape()[1] as u32);
            }
        }
    }
    for layer in predictor.layers() {
        match layer {
            Layer::Conv { weight, .. } => push_params(&mut out, weight),
            Layer::Dense { weight, bias } => {
                push_params(&mut out, weight);
                push_params(&mut out, bias);
            }
            _ => {}
        }
    }
    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Predictor<T>, WeightFileError> {
    if bytes.len() < 8 {
        return Err(WeightFileError::Truncated(bytes.len()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
    let computed = fnv1a(body);
    if computed != stored {
        return Err(WeightFileError::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, offset: 0 };
    if r.take(4)? != MAGIC {
        return Err(WeightFileError::BadMagic);
    }
    let version = r.take_u32()?;
    if version != VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let classes = r.take_u32()? as usize;
    let input_shape = vec![r.take_u32()? as usize, r.take_u32()? as usize, r.take_u32()? as usize];
    let layer_count = r.take_u32()? as usize;

    enum Descriptor {
        Conv { shape: Vec<usize>, stride: usize, padding: usize },
        Relu,
        MaxPool { window: usize },
        Flatten,
        Dense { out: usize, input: usize },
    }
    let mut descriptors = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let offset = r.offset;
        let tag = r.take(1)?[0];
        descriptors.push(match tag {
            0 => Descriptor::Conv {
                shape: vec![
                    r.take_u32()? as usize,
                    r.take_u32()? as usize,
                    r.take_u32()? as usize,
                    r.take_u32()? as usize,
                ],
                stride: r.take_u32()? as usize,
                padding: r.take_u32()? as usize,
            },
            1 => Descriptor::Relu,
            2 => Descriptor::MaxPool { window: r.take_u32()? as usize },
            3 => Descriptor::Flatten,
            4 => Descriptor::Dense { out: r.take_u32()? as usize, input: r.take_u32()? as usize },
            tag => return Err(WeightFileError::UnknownLayerTag { tag, offset }),
        });
    }

    let mut layers = Vec::with_capacity(layer_count);
    for d in &descriptors {
        layers.push(match d {
            Descriptor::Conv { shape, stride, padding } => Layer::Conv {
                weight: r.take_params(shape.clone())?,
                stride: *stride,
                padding: *padding,
            },
            Descriptor::Relu => Layer::Relu,
            Descriptor::MaxPool { window } => Layer::MaxPool { window: *window },
            Descriptor::Flatten => Layer::Flatten,
            Descriptor::Dense { out, input } => Layer::Dense {
                weight: r.take_params(vec![*out, *input])?,
                bias: r.take_params(vec![*out])?,
            },
        });
    }
    if r.offset != body.len() {
        return Err(WeightFileError::TrailingBytes(body.len() - r.offset));
    }
    match layers.iter().rev().find_map(|l| match l {
        Layer::Dense { weight, .. } => Some(weight.shape()[0]),
        _ => None,
    }) {
        Some(out) if out == classes => {}
        Some(out) => {
            return Err(WeightFileError::ArchitectureMismatch(format!(
                "header declares {classes} classes but the final dense layer outputs {out}"
            )))
        }
        None => {
            return Err(WeightFileError::ArchitectureMismatch(
                "no dense layer to produce class logits".into(),
            ))
        }
    }
    Ok(Predictor::from_layers(layers, input_shape, classes))
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_params<T: Scalar>(out: &mut Vec<u8>, a: &Array<T>) {
    for &v in a.data() {
        out.extend_from_slice(&v.to_f64().expect("scalar converts to f64").to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightFileError> {
        if self.offset + n > self.bytes.len() {
            return Err(WeightFileError::Truncated(self.bytes.len()));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn take_u32(&mut self) -> Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn take_params<T: Scalar>(&mut self, shape: Vec<usize>) -> Result<Array<T>, WeightFileError> {
        let numel: usize = shape.iter().product();
        let bytes = self.take(numel * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Ok(Array::new(shape, data))
    }
}
