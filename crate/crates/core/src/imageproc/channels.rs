use super::{gradient_channels, rgb_to_luv, Image};
use crate::{Error, Result};

pub const NUM_CHANNELS: usize = 10;

/// Block-aggregated channels stored plane by plane: index
/// `(channel * height + row) * width + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub shrink: usize,
    pub data: Vec<f32>,
}

impl ChannelStack {
    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Sums each `shrink`×`shrink` block of every channel. Images whose sides
/// are not multiples of `shrink` are first padded by replication.
pub fn block_sum(img: &Image, shrink: usize) -> Result<ChannelStack> {
    if shrink < 1 {
        return Err(Error::invalid("shrink factor must be at least 1"));
    }
    let cw = img.width().div_ceil(shrink);
    let ch = img.height().div_ceil(shrink);
    let padded;
    let src = if cw * shrink != img.width() || ch * shrink != img.height() {
        padded = img.pad_replicate(cw * shrink, ch * shrink);
        &padded
    } else {
        img
    };
    let depth = src.depth();
    let mut data = vec![0.0f32; depth * cw * ch];
    let row_len = src.width() * depth;
    for y in 0..src.height() {
        let row = &src.data()[y * row_len..(y + 1) * row_len];
        let cy = y / shrink;
        for (x, px) in row.chunks_exact(depth).enumerate() {
            let cx = x / shrink;
            for (c, v) in px.iter().enumerate() {
                data[(c * ch + cy) * cw + cx] += v;
            }
        }
    }
    Ok(ChannelStack {
        width: cw,
        height: ch,
        channels: depth,
        shrink,
        data,
    })
}

/// One pass of separable [1 2 1]/4 smoothing per channel, replicating edges.
pub fn smooth_cells(stack: &mut ChannelStack) {
    let (w, h) = (stack.width, stack.height);
    if w == 0 || h == 0 {
        return;
    }
    let mut tmp = vec![0.0f32; w * h];
    for c in 0..stack.channels {
        let plane = &mut stack.data[c * w * h..(c + 1) * w * h];
        for y in 0..h {
            for x in 0..w {
                let l = plane[y * w + x.saturating_sub(1)];
                let r = plane[y * w + (x + 1).min(w - 1)];
                tmp[y * w + x] = 0.25 * l + 0.5 * plane[y * w + x] + 0.25 * r;
            }
        }
        for y in 0..h {
            let up = y.saturating_sub(1);
            let dn = (y + 1).min(h - 1);
            for x in 0..w {
                plane[y * w + x] = 0.25 * tmp[up * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[dn * w + x];
            }
        }
    }
}

/// Block sum followed by one smoothing pass.
pub fn aggregate(img: &Image, shrink: usize) -> Result<ChannelStack> {
    let mut stack = block_sum(img, shrink)?;
    smooth_cells(&mut stack);
    Ok(stack)
}

/// Full 10-channel aggregated representation of an RGB image.
pub fn compute_channels(rgb: &Image, shrink: usize) -> Result<ChannelStack> {
    let luv = rgb_to_luv(rgb)?;
    let grad = gradient_channels(&luv);
    let (w, h) = (rgb.width(), rgb.height());
    let mut data = Vec::with_capacity(w * h * NUM_CHANNELS);
    for (l, g) in luv.data().chunks_exact(3).zip(grad.data().chunks_exact(7)) {
        data.extend_from_slice(l);
        data.extend_from_slice(g);
    }
    aggregate(&Image::from_raw(w, h, NUM_CHANNELS, data), shrink)
}
