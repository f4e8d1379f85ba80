use super::gemm::gemm;
use super::{softmax, Layer, LayerSpec, Shape};

fn im2col(input: &[f64], s: Shape, kernel: usize, pad: usize, stride: usize, out: Shape) -> Vec<f64> {
    let positions = out.height * out.width;
    let mut cols = vec![0.0; s.channels * kernel * kernel * positions];
    for c in 0..s.channels {
        let plane = &input[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..out.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * s.width..(iy as usize + 1) * s.width];
                    for ox in 0..out.width {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < s.width as isize {
                            dst[oy * out.width + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], s: Shape, kernel: usize, pad: usize, stride: usize, out: Shape) -> Vec<f64> {
    let positions = out.height * out.width;
    let mut img = vec![0.0; s.len()];
    for c in 0..s.channels {
        let plane = &mut img[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..out.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for ox in 0..out.width {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < s.width as isize {
                            plane[iy as usize * s.width + ix as usize] += src[oy * out.width + ox];
                        }
                    }
                }
            }
        }
    }
    img
}

/// Index of the maximum of each pooling window (first maximum on ties).
fn pool_argmax(input: &[f64], s: Shape, window: usize, stride: usize, out: Shape) -> Vec<usize> {
    let mut idx = Vec::with_capacity(out.len());
    for c in 0..out.channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        let i = (c * s.height + oy * stride + dy) * s.width + ox * stride + dx;
                        if input[i] > best_v || best == usize::MAX {
                            best_v = input[i];
                            best = i;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    idx
}

pub(crate) fn forward(layer: &Layer, input: &[f64]) -> Vec<f64> {
    let (s, o) = (layer.input, layer.output);
    match layer.spec {
        LayerSpec::Conv { kernel, pad, stride, filters } => {
            let cols = im2col(input, s, kernel, pad, stride, o);
            let positions = o.height * o.width;
            let mut out = vec![0.0; o.len()];
            for (f, b) in layer.bias.iter().enumerate() {
                out[f * positions..(f + 1) * positions].fill(*b);
            }
            gemm(filters, s.channels * kernel * kernel, positions, &layer.weights, false, &cols, false, &mut out, true);
            out
        }
        LayerSpec::Relu => input.iter().map(|v| v.max(0.0)).collect(),
        LayerSpec::MaxPool { window, stride } => pool_argmax(input, s, window, stride, o).into_iter().map(|i| input[i]).collect(),
        LayerSpec::FullyConnected { units } => {
            let mut out = layer.bias.clone();
            gemm(units, s.len(), 1, &layer.weights, false, input, false, &mut out, true);
            out
        }
        LayerSpec::Softmax => softmax(input),
    }
}

type ParamGrads = Option<(Vec<f64>, Vec<f64>)>;

/// Returns the gradient with respect to the layer input (empty when
/// `need_input` is false) and, for parametrized layers, (dW, db).
pub(crate) fn backward(layer: &Layer, input: &[f64], output: &[f64], delta: &[f64], need_input: bool) -> (Vec<f64>, ParamGrads) {
    let (s, o) = (layer.input, layer.output);
    match layer.spec {
        LayerSpec::Conv { kernel, pad, stride, filters } => {
            let positions = o.height * o.width;
            let k = s.channels * kernel * kernel;
            let cols = im2col(input, s, kernel, pad, stride, o);
            let mut dw = vec![0.0; filters * k];
            gemm(filters, positions, k, delta, false, &cols, true, &mut dw, false);
            let db = delta.chunks_exact(positions).map(|r| r.iter().sum()).collect();
            let d_in = if need_input {
                let mut dcols = vec![0.0; k * positions];
                gemm(k, filters, positions, &layer.weights, true, delta, false, &mut dcols, false);
                col2im(&dcols, s, kernel, pad, stride, o)
            } else {
                Vec::new()
            };
            (d_in, Some((dw, db)))
        }
        LayerSpec::Relu => (delta.iter().zip(output).map(|(d, y)| if *y > 0.0 { *d } else { 0.0 }).collect(), None),
        LayerSpec::MaxPool { window, stride } => {
            let mut d_in = vec![0.0; s.len()];
            for (i, d) in pool_argmax(input, s, window, stride, o).into_iter().zip(delta) {
                d_in[i] += d;
            }
            (d_in, None)
        }
        LayerSpec::FullyConnected { units } => {
            let n = s.len();
            let mut dw = vec![0.0; units * n];
            gemm(units, 1, n, delta, false, input, false, &mut dw, false);
            let d_in = if need_input {
                let mut d = vec![0.0; n];
                gemm(n, units, 1, &layer.weights, true, delta, false, &mut d, false);
                d
            } else {
                Vec::new()
            };
            (d_in, Some((dw, delta.to_vec())))
        }
        LayerSpec::Softmax => unreachable!("softmax gradient is folded into the loss"),
    }
}
