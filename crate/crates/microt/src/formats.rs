//! Binary artifacts. All integers and floats are little-endian.
//!
//! | magic  | contents                                                   |
//! |--------|------------------------------------------------------------|
//! | `MCRT` | float network: block table then f32 parameters              |
//! | `MCRQ` | int8 extractor: block table with per-tensor f32 scales       |
//! | `MCLF` | device classifier: learning rate then an `MCRT` body          |
//! | `MEMB` | teacher embeddings: `(id, label, width × f32)` records        |
//! | `MFEA` | device embedding store: `(label, sequence, dim × f32)` records |

use std::fs;
use std::path::Path;

use microt_core::device::{record_footprint, DeviceClassifier, EmbeddingRecord, EmbeddingStore};
use microt_core::distill::{EmbeddingDataset, EmbeddingEntry};
use microt_core::quant::{QuantBlock, QuantNet, QuantTensor};
use microt_core::{Block, BlockNet, Conv2d, Dense, Head, Tensor};
use thiserror::Error;

use crate::error::{PipelineError, Result};

pub const VERSION: u8 = 1;
/// Free-text header of every `MCRQ` file.
pub const QUANT_NOTES: &str = "symmetric per-tensor int8; scale = max|w| / 127; round half away from zero; \
activation scales from calibration max; int32 accumulation; classifier head excluded";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct FormatError(pub String);

type Decoded<T> = std::result::Result<T, FormatError>;

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError(msg.into())
}

fn from_core(e: microt_core::Error) -> FormatError {
    FormatError(e.to_string())
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("value fits in u32");
        self.bytes(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }
    fn dims(&mut self, dims: &[usize]) {
        self.u32(dims.len());
        dims.iter().for_each(|&d| self.u32(d));
    }
    fn tensor(&mut self, t: &Tensor) {
        t.data().iter().for_each(|&v| self.f32(v as f32));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Decoded<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Decoded<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Decoded<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Decoded<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }
    fn f32(&mut self) -> Decoded<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Decoded<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn i32(&mut self) -> Decoded<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }
    fn magic(&mut self, magic: &[u8; 4]) -> Decoded<()> {
        if &self.array::<4>()? != magic {
            return Err(bad(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }
    fn version(&mut self) -> Decoded<()> {
        match self.u8()? {
            VERSION => Ok(()),
            v => Err(bad(format!("unsupported version {v}"))),
        }
    }
    fn dims(&mut self) -> Decoded<Vec<usize>> {
        let n = self.u32()?;
        if n > 8 {
            return Err(bad("implausible tensor rank"));
        }
        (0..n).map(|_| self.u32()).collect()
    }
    fn tensor(&mut self, shape: Vec<usize>) -> Decoded<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Tensor::new(shape, data).map_err(from_core)
    }
    fn finish(&self) -> Decoded<()> {
        if self.pos != self.buf.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(())
    }
}

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_GAP: u8 = 3;
const TAG_SOFTMAX: u8 = 4;

fn write_net_body(w: &mut Writer, net: &BlockNet) {
    w.dims(net.input_shape());
    w.u32(net.blocks().len());
    for b in net.blocks() {
        match b {
            Block::Dense(d) => {
                w.u8(TAG_DENSE);
                w.u32(d.inputs());
                w.u32(d.outputs());
            }
            Block::Conv2d(c) => {
                let s = c.weight.shape();
                w.u8(TAG_CONV);
                w.u32(s[1]);
                w.u32(s[0]);
                w.u32(s[2]);
                w.u32(c.stride);
                w.u32(c.padding);
            }
            Block::Relu => w.u8(TAG_RELU),
            Block::GlobalAvgPool => w.u8(TAG_GAP),
            Block::Softmax { temperature } => {
                w.u8(TAG_SOFTMAX);
                w.f64(*temperature);
            }
        }
    }
    match net.head() {
        Some(h) => {
            w.u8(1);
            w.u32(h.dense.inputs());
            w.u32(h.dense.outputs());
            w.f64(h.temperature);
        }
        None => w.u8(0),
    }
    for p in net.params() {
        w.tensor(p);
    }
}

enum Layout {
    Dense(usize, usize),
    Conv { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    Gap,
    Softmax(f64),
}

fn read_net_body(r: &mut Reader<'_>) -> Decoded<BlockNet> {
    let input_shape = r.dims()?;
    let n = r.u32()?;
    let mut layout = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        layout.push(match r.u8()? {
            TAG_DENSE => Layout::Dense(r.u32()?, r.u32()?),
            TAG_CONV => Layout::Conv {
                in_ch: r.u32()?,
                out_ch: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
                padding: r.u32()?,
            },
            TAG_RELU => Layout::Relu,
            TAG_GAP => Layout::Gap,
            TAG_SOFTMAX => Layout::Softmax(r.f64()?),
            t => return Err(bad(format!("unknown block tag {t}"))),
        });
    }
    let head = match r.u8()? {
        0 => None,
        1 => Some((r.u32()?, r.u32()?, r.f64()?)),
        t => return Err(bad(format!("bad head flag {t}"))),
    };
    let mut blocks = Vec::with_capacity(layout.len());
    for l in layout {
        blocks.push(match l {
            Layout::Dense(i, o) => {
                let weight = r.tensor(vec![o, i])?;
                let bias = r.tensor(vec![o])?;
                Block::Dense(Dense::new(weight, bias).map_err(from_core)?)
            }
            Layout::Conv { in_ch, out_ch, kernel, stride, padding } => {
                let weight = r.tensor(vec![out_ch, in_ch, kernel, kernel])?;
                let bias = r.tensor(vec![out_ch])?;
                Block::Conv2d(Conv2d::new(weight, bias, stride, padding).map_err(from_core)?)
            }
            Layout::Relu => Block::Relu,
            Layout::Gap => Block::GlobalAvgPool,
            Layout::Softmax(t) => Block::Softmax { temperature: t },
        });
    }
    let head = match head {
        Some((i, o, temperature)) => {
            let weight = r.tensor(vec![o, i])?;
            let bias = r.tensor(vec![o])?;
            Some(Head {
                dense: Dense::new(weight, bias).map_err(from_core)?,
                temperature,
            })
        }
        None => None,
    };
    BlockNet::new(input_shape, blocks, head).map_err(from_core)
}

pub fn encode_model(net: &BlockNet) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(b"MCRT");
    w.u8(VERSION);
    write_net_body(&mut w, net);
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Decoded<BlockNet> {
    let mut r = Reader::new(bytes);
    r.magic(b"MCRT")?;
    r.version()?;
    let net = read_net_body(&mut r)?;
    r.finish()?;
    Ok(net)
}

pub fn encode_classifier(clf: &DeviceClassifier) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(b"MCLF");
    w.u8(VERSION);
    w.f64(clf.lr());
    write_net_body(&mut w, clf.net());
    w.0
}

pub fn decode_classifier(bytes: &[u8]) -> Decoded<DeviceClassifier> {
    let mut r = Reader::new(bytes);
    r.magic(b"MCLF")?;
    r.version()?;
    let lr = r.f64()?;
    let net = read_net_body(&mut r)?;
    r.finish()?;
    DeviceClassifier::from_net(net, lr).map_err(from_core)
}

fn write_quant_tensor(w: &mut Writer, t: &QuantTensor) {
    w.dims(&t.shape);
    w.f32(t.scale);
    w.bytes(&t.values.iter().map(|&v| v as u8).collect::<Vec<_>>());
}

fn read_quant_tensor(r: &mut Reader<'_>) -> Decoded<QuantTensor> {
    let shape = r.dims()?;
    let scale = r.f32()?;
    let n: usize = shape.iter().product();
    let values = r.take(n)?.iter().map(|&b| b as i8).collect();
    Ok(QuantTensor { shape, values, scale })
}

pub fn encode_quant(net: &QuantNet) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(b"MCRQ");
    w.u8(VERSION);
    w.u32(QUANT_NOTES.len());
    w.bytes(QUANT_NOTES.as_bytes());
    w.dims(net.input_shape());
    w.u32(net.blocks().len());
    for b in net.blocks() {
        match b {
            QuantBlock::Dense { weight, bias, input_scale } => {
                w.u8(TAG_DENSE);
                w.f32(*input_scale);
                write_quant_tensor(&mut w, weight);
                w.u32(bias.len());
                bias.iter().for_each(|&v| w.i32(v));
            }
            QuantBlock::Conv2d { weight, bias, input_scale, stride, padding } => {
                w.u8(TAG_CONV);
                w.u32(*stride);
                w.u32(*padding);
                w.f32(*input_scale);
                write_quant_tensor(&mut w, weight);
                w.u32(bias.len());
                bias.iter().for_each(|&v| w.i32(v));
            }
            QuantBlock::Relu => w.u8(TAG_RELU),
            QuantBlock::GlobalAvgPool => w.u8(TAG_GAP),
            QuantBlock::Softmax { temperature } => {
                w.u8(TAG_SOFTMAX);
                w.f64(*temperature);
            }
        }
    }
    w.0
}

pub fn decode_quant(bytes: &[u8]) -> Decoded<QuantNet> {
    let mut r = Reader::new(bytes);
    r.magic(b"MCRQ")?;
    r.version()?;
    let notes = r.u32()?;
    r.take(notes)?;
    let input_shape = r.dims()?;
    let n = r.u32()?;
    let mut blocks = Vec::with_capacity(n.min(1024));
    let bias = |r: &mut Reader<'_>| -> Decoded<Vec<i32>> {
        let n = r.u32()?;
        (0..n).map(|_| r.i32()).collect()
    };
    for _ in 0..n {
        blocks.push(match r.u8()? {
            TAG_DENSE => {
                let input_scale = r.f32()?;
                let weight = read_quant_tensor(&mut r)?;
                QuantBlock::Dense { weight, bias: bias(&mut r)?, input_scale }
            }
            TAG_CONV => {
                let stride = r.u32()?;
                let padding = r.u32()?;
                let input_scale = r.f32()?;
                let weight = read_quant_tensor(&mut r)?;
                QuantBlock::Conv2d { weight, bias: bias(&mut r)?, input_scale, stride, padding }
            }
            TAG_RELU => QuantBlock::Relu,
            TAG_GAP => QuantBlock::GlobalAvgPool,
            TAG_SOFTMAX => QuantBlock::Softmax { temperature: r.f64()? },
            t => return Err(bad(format!("unknown block tag {t}"))),
        });
    }
    r.finish()?;
    QuantNet::new(input_shape, blocks).map_err(from_core)
}

pub fn encode_embeddings(emb: &EmbeddingDataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(b"MEMB");
    w.u32(emb.len());
    w.u32(emb.width());
    for e in emb.records() {
        w.u32(e.id as usize);
        w.u32(e.label as usize);
        w.tensor(&e.embedding);
    }
    w.0
}

pub fn decode_embeddings(bytes: &[u8]) -> Decoded<EmbeddingDataset> {
    let mut r = Reader::new(bytes);
    r.magic(b"MEMB")?;
    let count = r.u32()?;
    let width = r.u32()?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.u32()? as u32;
        let label = r.u32()? as u32;
        records.push(EmbeddingEntry {
            id,
            label,
            embedding: r.tensor(vec![width])?,
        });
    }
    r.finish()?;
    EmbeddingDataset::new(width, records).map_err(from_core)
}

/// Encodes records with their position as sequence number; each record
/// takes exactly `record_footprint(dim)` bytes.
pub fn encode_store(dim: usize, records: &[EmbeddingRecord]) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(b"MFEA");
    w.u8(VERSION);
    w.u32(records.len());
    w.u32(dim);
    for (seq, rec) in records.iter().enumerate() {
        assert_eq!(rec.features.len(), dim, "record width");
        w.u32(rec.label as usize);
        w.u32(seq);
        rec.features.iter().for_each(|&v| w.f32(v));
    }
    debug_assert_eq!(w.0.len(), 13 + records.len() * record_footprint(dim));
    w.0
}

pub fn decode_store(bytes: &[u8]) -> Decoded<(usize, Vec<EmbeddingRecord>)> {
    let mut r = Reader::new(bytes);
    r.magic(b"MFEA")?;
    r.version()?;
    let count = r.u32()?;
    let dim = r.u32()?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let label = r.u32()? as u32;
        if r.u32()? != i {
            return Err(bad(format!("record {i} out of sequence")));
        }
        let features = (0..dim).map(|_| r.f32()).collect::<Decoded<Vec<_>>>()?;
        records.push(EmbeddingRecord { label, features });
    }
    r.finish()?;
    Ok((dim, records))
}

pub fn encode_embedding_store(store: &EmbeddingStore) -> Vec<u8> {
    encode_store(store.dim(), store.records())
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| PipelineError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Reads and decodes an artifact, mapping a missing file to
/// [`PipelineError::MissingArtifact`].
pub fn read_file<T>(stage: &'static str, path: &Path, decode: impl FnOnce(&[u8]) -> Decoded<T>) -> Result<T> {
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            PipelineError::MissingArtifact {
                stage,
                path: path.to_path_buf(),
            }
        } else {
            PipelineError::Io {
                stage,
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    decode(&bytes).map_err(|e| PipelineError::Format {
        stage,
        path: path.to_path_buf(),
        message: e.0,
    })
}
