//! Versioned binary model files.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic    8 bytes  "DSNRECMF"
//! version  u32      FORMAT_VERSION
//! kind     u8       1 = domain separation network, 2 = item autoencoder
//! echo     u32 length + UTF-8   resolved configuration that produced the model
//! networks u32 count, then per network:
//!     name   u32 length + UTF-8
//!     layers u32 count, then per layer:
//!         in u64, out u64, activation u8, dropout f64,
//!         weight f64 x (in * out) row-major, bias f64 x out
//! tensors  u32 count, then per tensor:
//!     name u32 length + UTF-8, rows u64, cols u64, f64 x (rows * cols)
//! ```
//!
//! Values are stored bit-exactly, so a reloaded model scores identically.

use std::fs;
use std::path::Path;

use crate::dsn::DsnModel;
use crate::nn::{Activation, Dense, Matrix, Mlp, Param};
use crate::sdae::SdaeModel;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSNRECMF";
pub const FORMAT_VERSION: u32 = 1;

const KIND_DSN: u8 = 1;
const KIND_SDAE: u8 = 2;

const DSN_NETWORKS: [&str; 6] = [
    "shared_encoder",
    "private_source",
    "private_target",
    "decoder",
    "classifier",
    "discriminator",
];

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn network(&mut self, name: &str, net: &Mlp) {
        self.str(name);
        self.u32(net.layers().len() as u32);
        for l in net.layers() {
            self.u64(l.in_dim() as u64);
            self.u64(l.out_dim() as u64);
            self.u8(l.activation.tag());
            self.f64s(&[l.dropout]);
            self.f64s(l.weight.value.as_slice());
            self.f64s(l.bias.value.as_slice());
        }
    }
    fn tensor(&mut self, name: &str, m: &Matrix) {
        self.str(name);
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        self.f64s(m.as_slice());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| corrupt("size overflows usize"))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("size overflow"))?;
        Matrix::from_vec(rows, cols, self.f64s(n)?)
    }
    fn network(&mut self, expect: &str) -> Result<Mlp> {
        let name = self.str()?;
        if name != expect {
            return Err(corrupt(format!("expected network `{expect}`, found `{name}`")));
        }
        let n = self.u32()? as usize;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let (i, o) = (self.u64()?, self.u64()?);
            let tag = self.u8()?;
            let activation = Activation::from_tag(tag).ok_or_else(|| corrupt(format!("unknown activation {tag}")))?;
            let dropout = self.f64s(1)?[0];
            let weight = self.matrix(i, o)?;
            let bias = self.matrix(1, o)?;
            layers.push(Dense {
                weight: Param::new(weight),
                bias: Param::new(bias),
                activation,
                dropout,
            });
        }
        Mlp::from_layers(layers)
    }
    fn tensor(&mut self, expect: &str) -> Result<Matrix> {
        let name = self.str()?;
        if name != expect {
            return Err(corrupt(format!("expected tensor `{expect}`, found `{name}`")));
        }
        let (r, c) = (self.u64()?, self.u64()?);
        self.matrix(r, c)
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }
        Ok(())
    }
}

fn header(kind: u8, echo: &str) -> Writer {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(kind);
    w.str(echo);
    w
}

fn open(buf: &[u8], kind: u8) -> Result<(Reader<'_>, String)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err(corrupt("not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let found = r.u8()?;
    if found != kind {
        return Err(corrupt(format!("model kind {found} where {kind} was expected")));
    }
    let echo = r.str()?;
    Ok((r, echo))
}

pub fn encode_dsn(model: &DsnModel, echo: &str) -> Vec<u8> {
    let mut w = header(KIND_DSN, echo);
    w.u32(DSN_NETWORKS.len() as u32);
    for (name, net) in DSN_NETWORKS.iter().zip([
        &model.shared_encoder,
        &model.private_source,
        &model.private_target,
        &model.decoder,
        &model.classifier,
        &model.discriminator,
    ]) {
        w.network(name, net);
    }
    w.u32(1);
    w.tensor("softmax_weights", &model.softmax_weights.value);
    w.0
}

/// Returns the model and the configuration echo stored with it.
pub fn decode_dsn(buf: &[u8]) -> Result<(DsnModel, String)> {
    let (mut r, echo) = open(buf, KIND_DSN)?;
    if r.u32()? as usize != DSN_NETWORKS.len() {
        return Err(corrupt("wrong network count"));
    }
    let mut nets = Vec::with_capacity(DSN_NETWORKS.len());
    for name in DSN_NETWORKS {
        nets.push(r.network(name)?);
    }
    if r.u32()? != 1 {
        return Err(corrupt("wrong tensor count"));
    }
    let v = r.tensor("softmax_weights")?;
    r.finish()?;
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("six networks");
    let model = DsnModel {
        shared_encoder: next(),
        private_source: next(),
        private_target: next(),
        decoder: next(),
        classifier: next(),
        discriminator: next(),
        softmax_weights: Param::new(v),
    };
    model.validate()?;
    Ok((model, echo))
}

pub fn encode_sdae(model: &SdaeModel, echo: &str) -> Vec<u8> {
    let mut w = header(KIND_SDAE, echo);
    w.u32(2);
    w.network("encoder", &model.encoder);
    w.network("decoder", &model.decoder);
    w.u32(1);
    w.tensor("input_corruption", &Matrix::row_vector(&[model.input_corruption]));
    w.0
}

pub fn decode_sdae(buf: &[u8]) -> Result<(SdaeModel, String)> {
    let (mut r, echo) = open(buf, KIND_SDAE)?;
    if r.u32()? != 2 {
        return Err(corrupt("wrong network count"));
    }
    let encoder = r.network("encoder")?;
    let decoder = r.network("decoder")?;
    if r.u32()? != 1 {
        return Err(corrupt("wrong tensor count"));
    }
    let rate = r.tensor("input_corruption")?;
    r.finish()?;
    if rate.shape() != (1, 1) {
        return Err(corrupt("input_corruption must be a scalar"));
    }
    Ok((SdaeModel::from_parts(encoder, decoder, rate.get(0, 0))?, echo))
}

pub fn save_dsn(path: &Path, model: &DsnModel, echo: &str) -> Result<()> {
    fs::write(path, encode_dsn(model, echo)).map_err(|e| Error::io(path, e))
}

pub fn load_dsn(path: &Path) -> Result<(DsnModel, String)> {
    decode_dsn(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_sdae(path: &Path, model: &SdaeModel, echo: &str) -> Result<()> {
    fs::write(path, encode_sdae(model, echo)).map_err(|e| Error::io(path, e))
}

pub fn load_sdae(path: &Path) -> Result<(SdaeModel, String)> {
    decode_sdae(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
