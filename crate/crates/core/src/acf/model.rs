//! Tree ensemble and its binary model format.
//!
//! All fields are little-endian:
//!
//! ```text
//! offset size  field
//! 0      4     magic "ACFM"
//! 4      4     u32 format version (1)
//! 8      4     u32 window width, pixels
//! 12     4     u32 window height, pixels
//! 16     4     u32 shrink
//! 20     4     u32 channel count (10)
//! 24     8     f64 cascade reject threshold (may be -inf)
//! 32     8     f64 acceptance threshold
//! 40     4     u32 tree count T
//! 44     56*T  trees, each:
//!                3 x u32 node feature index (root, left child, right child)
//!                3 x f32 node threshold     (go left when value < threshold)
//!                4 x f64 leaf value         (LL, LR, RL, RR)
//! ```
//!
//! Feature index `f` addresses channel `c`, cell row `y`, cell column `x` of
//! the window footprint as `f = (c * cells_h + y) * cells_w + x`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::imageproc::{ChannelStack, NUM_CHANNELS};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"ACFM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthTwoTree {
    pub features: [u32; 3],
    pub thresholds: [f32; 3],
    pub leaves: [f64; 4],
}

impl DepthTwoTree {
    /// A tree that ignores its input and always outputs `value`.
    pub fn constant(value: f64) -> Self {
        Self {
            features: [0; 3],
            thresholds: [0.0; 3],
            leaves: [value; 4],
        }
    }

    #[inline]
    pub fn leaf_index(&self, feature: impl Fn(usize) -> f32) -> usize {
        let right = feature(self.features[0] as usize) >= self.thresholds[0];
        let node = 1 + right as usize;
        let second = feature(self.features[node] as usize) >= self.thresholds[node];
        2 * (node - 1) + second as usize
    }

    #[inline]
    pub fn eval(&self, feature: impl Fn(usize) -> f32) -> f64 {
        self.leaves[self.leaf_index(feature)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub trees: Vec<DepthTwoTree>,
    pub window_width: usize,
    pub window_height: usize,
    pub shrink: usize,
    pub cascade_reject: f64,
    pub accept_threshold: f64,
}

impl TreeEnsemble {
    pub fn cells_w(&self) -> usize {
        self.window_width / self.shrink
    }

    pub fn cells_h(&self) -> usize {
        self.window_height / self.shrink
    }

    pub fn num_features(&self) -> usize {
        NUM_CHANNELS * self.cells_w() * self.cells_h()
    }

    pub fn validate(&self) -> Result<()> {
        if self.shrink == 0 || !self.window_width.is_multiple_of(self.shrink) || !self.window_height.is_multiple_of(self.shrink) {
            return Err(Error::invalid(format!(
                "window {}x{} is not a multiple of shrink {}",
                self.window_width, self.window_height, self.shrink
            )));
        }
        let n = self.num_features() as u32;
        for (i, t) in self.trees.iter().enumerate() {
            if t.features.iter().any(|f| *f >= n) {
                return Err(Error::invalid(format!("tree {i} addresses a feature outside the window")));
            }
            if t.leaves.iter().any(|v| !v.is_finite()) || t.thresholds.iter().any(|v| v.is_nan()) {
                return Err(Error::invalid(format!("tree {i} has non-finite parameters")));
            }
        }
        if self.cascade_reject.is_nan() || self.accept_threshold.is_nan() {
            return Err(Error::invalid("NaN threshold"));
        }
        Ok(())
    }

    /// Offset of every node's feature relative to the window's top-left cell
    /// in a stack of the given size.
    pub(crate) fn node_offsets(&self, stack_w: usize, stack_h: usize) -> Vec<[usize; 3]> {
        let (cw, ch) = (self.cells_w(), self.cells_h());
        let offset = |f: u32| {
            let f = f as usize;
            let c = f / (cw * ch);
            let rem = f % (cw * ch);
            c * stack_w * stack_h + (rem / cw) * stack_w + rem % cw
        };
        self.trees
            .iter()
            .map(|t| [offset(t.features[0]), offset(t.features[1]), offset(t.features[2])])
            .collect()
    }

    /// Soft-cascade score of the window whose top-left cell is (`cx`, `cy`).
    /// Returns `None` when the running sum falls below the reject threshold.
    pub fn score_window(&self, stack: &ChannelStack, cx: usize, cy: usize) -> Option<f64> {
        let offsets = self.node_offsets(stack.width, stack.height);
        score_with_offsets(self, &offsets, &stack.data, cy * stack.width + cx)
    }
}

#[inline]
pub(crate) fn score_with_offsets(
    model: &TreeEnsemble,
    offsets: &[[usize; 3]],
    data: &[f32],
    base: usize,
) -> Option<f64> {
    let mut score = 0.0;
    for (tree, off) in model.trees.iter().zip(offsets) {
        let right = data[base + off[0]] >= tree.thresholds[0];
        let node = 1 + right as usize;
        let second = data[base + off[node]] >= tree.thresholds[node];
        score += tree.leaves[2 * (node - 1) + second as usize];
        if score < model.cascade_reject {
            return None;
        }
    }
    Some(score)
}

impl TreeEnsemble {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u32::<LittleEndian>(self.window_width as u32)?;
        w.write_u32::<LittleEndian>(self.window_height as u32)?;
        w.write_u32::<LittleEndian>(self.shrink as u32)?;
        w.write_u32::<LittleEndian>(NUM_CHANNELS as u32)?;
        w.write_f64::<LittleEndian>(self.cascade_reject)?;
        w.write_f64::<LittleEndian>(self.accept_threshold)?;
        w.write_u32::<LittleEndian>(self.trees.len() as u32)?;
        for t in &self.trees {
            for f in t.features {
                w.write_u32::<LittleEndian>(f)?;
            }
            for v in t.thresholds {
                w.write_f32::<LittleEndian>(v)?;
            }
            for v in t.leaves {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format("ACF model", "bad magic bytes"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != MODEL_VERSION {
            return Err(Error::format("ACF model", format!("unsupported version {version}")));
        }
        let window_width = r.read_u32::<LittleEndian>()? as usize;
        let window_height = r.read_u32::<LittleEndian>()? as usize;
        let shrink = r.read_u32::<LittleEndian>()? as usize;
        let channels = r.read_u32::<LittleEndian>()? as usize;
        if channels != NUM_CHANNELS {
            return Err(Error::format("ACF model", format!("expected {NUM_CHANNELS} channels, found {channels}")));
        }
        let cascade_reject = r.read_f64::<LittleEndian>()?;
        let accept_threshold = r.read_f64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut trees = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let mut t = DepthTwoTree::constant(0.0);
            for f in t.features.iter_mut() {
                *f = r.read_u32::<LittleEndian>()?;
            }
            for v in t.thresholds.iter_mut() {
                *v = r.read_f32::<LittleEndian>()?;
            }
            for v in t.leaves.iter_mut() {
                *v = r.read_f64::<LittleEndian>()?;
            }
            trees.push(t);
        }
        let model = Self {
            trees,
            window_width,
            window_height,
            shrink,
            cascade_reject,
            accept_threshold,
        };
        model.validate().map_err(|e| Error::format("ACF model", e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}
