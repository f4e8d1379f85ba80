//! Binary model format, little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "CNNM"
//! version      u32      1
//! input        3 × u32  channels, height, width
//! layer count  u32
//! per layer:
//!   tag        u8       0 conv, 1 relu, 2 maxpool, 3 fully connected, 4 softmax
//!   group      u8       0 none, 1 conv, 2 fully connected, 3 classifier
//!   params     4 × u32  conv: filters kernel pad stride; maxpool: window stride 0 0;
//!                       fully connected: units 0 0 0; otherwise zeros
//!   weights    u32 count, then count × f64
//!   biases     u32 count, then count × f64
//! ```
//!
//! Conv weights are ordered (filter, input channel, ky, kx); fully connected
//! weights are (output unit, input index) over the channel-major flattening.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{CnnModel, LayerSpec, ParamGroup, Shape};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"CNNM";
pub const MODEL_VERSION: u32 = 1;

fn group_code(g: Option<ParamGroup>) -> u8 {
    match g {
        None => 0,
        Some(ParamGroup::Conv) => 1,
        Some(ParamGroup::FullyConnected) => 2,
        Some(ParamGroup::Classifier) => 3,
    }
}

fn read_u32_usize(r: &mut impl Read) -> Result<usize> {
    Ok(r.read_u32::<LE>()? as usize)
}

impl CnnModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LE>(MODEL_VERSION)?;
        for v in [self.input.channels, self.input.height, self.input.width, self.layers.len()] {
            w.write_u32::<LE>(v as u32)?;
        }
        for layer in &self.layers {
            let (tag, params) = match layer.spec {
                LayerSpec::Conv { filters, kernel, pad, stride } => (0u8, [filters, kernel, pad, stride]),
                LayerSpec::Relu => (1, [0; 4]),
                LayerSpec::MaxPool { window, stride } => (2, [window, stride, 0, 0]),
                LayerSpec::FullyConnected { units } => (3, [units, 0, 0, 0]),
                LayerSpec::Softmax => (4, [0; 4]),
            };
            w.write_u8(tag)?;
            w.write_u8(group_code(layer.group))?;
            for p in params {
                w.write_u32::<LE>(p as u32)?;
            }
            for block in [&layer.weights, &layer.bias] {
                w.write_u32::<LE>(block.len() as u32)?;
                for v in block.iter() {
                    w.write_f64::<LE>(*v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format("cnn model", "bad magic bytes"));
        }
        let version = r.read_u32::<LE>()?;
        if version != MODEL_VERSION {
            return Err(Error::format("cnn model", format!("unsupported version {version}")));
        }
        let input = Shape::new(read_u32_usize(r)?, read_u32_usize(r)?, read_u32_usize(r)?);
        let count = read_u32_usize(r)?;
        if count > 4096 {
            return Err(Error::format("cnn model", format!("implausible layer count {count}")));
        }
        let mut specs = Vec::with_capacity(count);
        let mut groups = Vec::with_capacity(count);
        let mut blocks = Vec::with_capacity(count);
        for i in 0..count {
            let tag = r.read_u8()?;
            let group = r.read_u8()?;
            let mut p = [0usize; 4];
            for v in &mut p {
                *v = read_u32_usize(r)?;
            }
            let spec = match tag {
                0 => LayerSpec::Conv {
                    filters: p[0],
                    kernel: p[1],
                    pad: p[2],
                    stride: p[3],
                },
                1 => LayerSpec::Relu,
                2 => LayerSpec::MaxPool { window: p[0], stride: p[1] },
                3 => LayerSpec::FullyConnected { units: p[0] },
                4 => LayerSpec::Softmax,
                t => return Err(Error::format("cnn model", format!("layer {i}: unknown tag {t}"))),
            };
            let mut pair = Vec::with_capacity(2);
            for _ in 0..2 {
                let n = read_u32_usize(r)?;
                if n > 1 << 28 {
                    return Err(Error::format("cnn model", format!("layer {i}: implausible parameter count {n}")));
                }
                let mut block = vec![0.0; n];
                r.read_f64_into::<LE>(&mut block)?;
                pair.push(block);
            }
            specs.push(spec);
            groups.push(group);
            blocks.push(pair);
        }
        let mut model = CnnModel::new(input, &specs)?;
        for (i, ((layer, group), mut pair)) in model.layers.iter_mut().zip(groups).zip(blocks).enumerate() {
            if group_code(layer.group) != group {
                return Err(Error::format("cnn model", format!("layer {i}: parameter group mismatch")));
            }
            let bias = pair.pop().expect("two blocks");
            let weights = pair.pop().expect("two blocks");
            if weights.len() != layer.weights.len() || bias.len() != layer.bias.len() {
                return Err(Error::format("cnn model", format!("layer {i}: parameter count does not match layer shape")));
            }
            if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(Error::format("cnn model", format!("layer {i}: non-finite parameter")));
            }
            layer.weights = weights;
            layer.bias = bias;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::default_architecture;

    #[test]
    fn save_and_load_preserve_the_model() {
        let mut m = CnnModel::new(Shape::new(3, 16, 16), &default_architecture(2)).unwrap();
        m.init_he(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cnn");
        m.save(&path).unwrap();
        assert_eq!(CnnModel::load(&path).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let m = CnnModel::new(Shape::new(1, 2, 2), &[LayerSpec::FullyConnected { units: 2 }, LayerSpec::Softmax]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"CNNM");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[20..24], &2u32.to_le_bytes());
        assert_eq!(buf[24], 3);
        assert_eq!(buf[25], 3);
        // header 24, fc layer 2 + 16 + 4 + 64 + 4 + 16, softmax 2 + 16 + 8
        assert_eq!(buf.len(), 24 + 106 + 26);
        buf[0] = b'X';
        assert!(CnnModel::read_from(&mut buf.as_slice()).is_err());
    }
}
