//! Model file format: magic `MNET`, a version byte, the layer specs, the
//! standardization statistics, the class ordering, and every weight as a
//! little-endian 64-bit float. Writing is deterministic, so identical
//! models produce identical files.

use std::fs;
use std::path::Path;

use super::{LayerSpec, Model, Network, Standardizer};
use crate::channels::N_CHANNELS;
use crate::{Error, Result, N_CLASSES};

const MAGIC: &[u8; 4] = b"MNET";
const VERSION: u8 = 1;

const KIND_CONV: u8 = 0;
const KIND_MAXPOOL: u8 = 1;
const KIND_DROPOUT: u8 = 2;
const KIND_DENSE: u8 = 3;
const KIND_SOFTMAX: u8 = 4;

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::format(format!("not a {what} file (bad magic)")));
        }
        Ok(())
    }

    pub fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let net = &model.network;
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u8(VERSION);
    w.u64(net.seed);
    w.u32(net.input_len as u32);
    w.u32(net.input_channels as u32);
    w.u32(net.layers.len() as u32);
    for layer in &net.layers {
        match layer {
            LayerSpec::Conv {
                kernel_size,
                n_kernels,
                stride,
                leaky_slope,
            } => {
                w.u8(KIND_CONV);
                w.u32(*kernel_size as u32);
                w.u32(*n_kernels as u32);
                w.u32(*stride as u32);
                w.f64(*leaky_slope);
            }
            LayerSpec::MaxPool { pool_size, stride } => {
                w.u8(KIND_MAXPOOL);
                w.u32(*pool_size as u32);
                w.u32(*stride as u32);
            }
            LayerSpec::Dropout { p } => {
                w.u8(KIND_DROPOUT);
                w.f64(*p);
            }
            LayerSpec::Dense { units } => {
                w.u8(KIND_DENSE);
                w.u32(*units as u32);
            }
            LayerSpec::Softmax => w.u8(KIND_SOFTMAX),
        }
    }
    for m in model.standardizer.mean {
        w.f64(m);
    }
    for s in model.standardizer.std {
        w.f64(s);
    }
    w.u8(N_CLASSES as u8);
    for c in 0..N_CLASSES {
        w.u8(c as u8);
    }
    w.u64(net.params.len() as u64);
    for p in &net.params {
        w.f64(*p);
    }
    w.buf
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, "model")?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported model version {version}"
        )));
    }
    let seed = r.u64()?;
    let input_len = r.u32()? as usize;
    let input_channels = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let layer = match r.u8()? {
            KIND_CONV => LayerSpec::Conv {
                kernel_size: r.u32()? as usize,
                n_kernels: r.u32()? as usize,
                stride: r.u32()? as usize,
                leaky_slope: r.f64()?,
            },
            KIND_MAXPOOL => LayerSpec::MaxPool {
                pool_size: r.u32()? as usize,
                stride: r.u32()? as usize,
            },
            KIND_DROPOUT => LayerSpec::Dropout { p: r.f64()? },
            KIND_DENSE => LayerSpec::Dense {
                units: r.u32()? as usize,
            },
            KIND_SOFTMAX => LayerSpec::Softmax,
            k => return Err(Error::format(format!("unknown layer kind {k}"))),
        };
        layers.push(layer);
    }
    let mut mean = [0.0; N_CHANNELS];
    for m in &mut mean {
        *m = r.f64()?;
    }
    let mut std = [0.0; N_CHANNELS];
    for s in &mut std {
        *s = r.f64()?;
    }
    let n_classes = r.u8()? as usize;
    if n_classes != N_CLASSES {
        return Err(Error::format(format!(
            "model has {n_classes} classes; expected {N_CLASSES}"
        )));
    }
    for c in 0..N_CLASSES {
        if r.u8()? as usize != c {
            return Err(Error::format("unsupported class ordering"));
        }
    }
    let n_params = r.u64()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.f64()?);
    }
    r.done()?;
    let network = Network::from_parts(input_len, input_channels, layers, seed, params)?;
    Ok(Model {
        network,
        standardizer: Standardizer { mean, std },
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    model_from_bytes(&bytes)
}
