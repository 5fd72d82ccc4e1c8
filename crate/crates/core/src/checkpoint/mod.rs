//! Single-file model checkpoints and kernel mosaics.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DCCK"  u32 version
//! u32 C, u32 H, u32 W                     input shape
//! u32 layer count, then per layer:
//!     u8 tag  0 conv (u32 out, u32 in, u32 k) | 1 relu
//!             2 maxpool (u32 window, u32 stride) | 3 flatten
//!             4 fc (u32 out, u32 in) | 5 softmax_xent
//! u32 flags   bit 0: trainer state present; other bits must be zero
//! f32 payload: weights then biases of every conv/fc layer, in layer order
//! trainer state: u64 step, u64 epoch, u64 cursor, f32 lr,
//!     u32 slot count, per slot u8 present, then weight and bias velocities
//! u32 CRC-32 of every preceding byte
//! ```

mod pgm;

pub use pgm::{export_kernel_grid, kernel_grid, KernelGrid};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{ConvLayerParams, FcLayerParams, Layer, MaxPool, Network, ParamGrads};
use crate::tensor::Tensor;
use crate::trainer::TrainerState;

pub const MAGIC: &[u8; 4] = b"DCCK";
pub const VERSION: u32 = 1;
const FLAG_TRAINER_STATE: u32 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, t: &Tensor) {
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(format!("checkpoint ends early at byte {}", self.pos));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::new(shape, data)
    }
}

/// Parameter shapes of one manifest entry, `None` for parameter-free layers.
fn param_shapes(layer: &Layer) -> Option<(Vec<usize>, Vec<usize>)> {
    match layer {
        Layer::Conv(p) => Some((p.weights().shape().to_vec(), p.biases().shape().to_vec())),
        Layer::Fc(p) => Some((p.weights().shape().to_vec(), p.biases().shape().to_vec())),
        _ => None,
    }
}

/// Serializes a model, and optionally trainer state, to bytes.
pub fn to_bytes(model: &Network, state: Option<&TrainerState>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    for d in model.input_shape() {
        w.u32(d);
    }
    w.u32(model.layers().len());
    for layer in model.layers() {
        match layer {
            Layer::Conv(p) => {
                w.u8(0);
                w.u32(p.out_channels());
                w.u32(p.in_channels());
                w.u32(p.kernel_size());
            }
            Layer::Relu => w.u8(1),
            Layer::MaxPool(p) => {
                w.u8(2);
                w.u32(p.window);
                w.u32(p.stride);
            }
            Layer::Flatten => w.u8(3),
            Layer::Fc(p) => {
                w.u8(4);
                w.u32(p.out_features());
                w.u32(p.in_features());
            }
            Layer::SoftmaxXent => w.u8(5),
        }
    }
    w.u32(if state.is_some() { FLAG_TRAINER_STATE as usize } else { 0 });
    for layer in model.layers() {
        match layer {
            Layer::Conv(p) => {
                w.floats(p.weights());
                w.floats(p.biases());
            }
            Layer::Fc(p) => {
                w.floats(p.weights());
                w.floats(p.biases());
            }
            _ => {}
        }
    }
    if let Some(s) = state {
        w.u64(s.step);
        w.u64(s.epoch);
        w.u64(s.cursor as u64);
        w.0.extend_from_slice(&s.lr.to_le_bytes());
        w.u32(s.velocity.len());
        for slot in &s.velocity {
            match slot {
                None => w.u8(0),
                Some(v) => {
                    w.u8(1);
                    w.floats(&v.weights);
                    w.floats(&v.biases);
                }
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

/// Parses bytes produced by [`to_bytes`]. The checksum is verified before
/// anything else is decoded, so a damaged file never yields a model.
pub fn from_bytes(bytes: &[u8]) -> Result<(Network, Option<TrainerState>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return format_err("not a DCCK checkpoint (bad magic)");
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return format_err("checkpoint checksum mismatch (file truncated or corrupted)");
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION as usize {
        return format_err(format!("unsupported checkpoint version {version} (expected {VERSION})"));
    }
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let count = r.u32()?;
    let mut manifest = Vec::with_capacity(count.min(1024));
    for idx in 0..count {
        let tag = r.u8()?;
        let entry = match tag {
            0 => {
                let (n, d, k) = (r.u32()?, r.u32()?, r.u32()?);
                Layer::Conv(ConvLayerParams::new(Tensor::zeros(&[n, d, k, k])?, Tensor::zeros(&[n])?)?)
            }
            1 => Layer::Relu,
            2 => Layer::MaxPool(MaxPool::new(r.u32()?, r.u32()?)?),
            3 => Layer::Flatten,
            4 => {
                let (out, inp) = (r.u32()?, r.u32()?);
                Layer::Fc(FcLayerParams::new(Tensor::zeros(&[out, inp])?, Tensor::zeros(&[out])?)?)
            }
            5 => Layer::SoftmaxXent,
            other => return format_err(format!("layer {idx}: unknown layer tag {other}")),
        };
        manifest.push(entry);
    }
    let flags = r.u32()? as u32;
    if flags & !FLAG_TRAINER_STATE != 0 {
        return format_err(format!("unknown checkpoint flags {flags:#x}"));
    }
    let mut layers = Vec::with_capacity(manifest.len());
    for entry in manifest {
        let layer = match (&entry, param_shapes(&entry)) {
            (Layer::Conv(_), Some((ws, bs))) => Layer::Conv(ConvLayerParams::new(r.tensor(&ws)?, r.tensor(&bs)?)?),
            (Layer::Fc(_), Some((ws, bs))) => Layer::Fc(FcLayerParams::new(r.tensor(&ws)?, r.tensor(&bs)?)?),
            _ => entry,
        };
        layers.push(layer);
    }
    let state = if flags & FLAG_TRAINER_STATE != 0 {
        let step = r.u64()?;
        let epoch = r.u64()?;
        let cursor = r.u64()? as usize;
        let lr = r.f32()?;
        let slots = r.u32()?;
        if slots != 0 && slots != layers.len() {
            return format_err(format!("{slots} velocity slots for {} layers", layers.len()));
        }
        let mut velocity = Vec::with_capacity(slots);
        for idx in 0..slots {
            velocity.push(match r.u8()? {
                0 => None,
                1 => {
                    let Some((ws, bs)) = param_shapes(&layers[idx]) else {
                        return format_err(format!("velocity stored for parameter-free layer {idx}"));
                    };
                    Some(ParamGrads { weights: r.tensor(&ws)?, biases: r.tensor(&bs)? })
                }
                other => return format_err(format!("bad velocity marker {other} for layer {idx}")),
            });
        }
        Some(TrainerState { step, epoch, cursor, lr, velocity })
    } else {
        None
    };
    if r.pos != body.len() {
        return format_err(format!("{} unexpected trailing bytes", body.len() - r.pos));
    }
    let model = Network::new(input_shape, layers)?;
    Ok((model, state))
}

pub fn save(model: &Network, state: Option<&TrainerState>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model, state)).map_err(Error::at(path))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Network, Option<TrainerState>)> {
    from_bytes(&fs::read(path).map_err(Error::at(path))?)
}
