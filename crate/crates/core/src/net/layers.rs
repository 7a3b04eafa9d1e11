//! Per-block forward and backward kernels on single samples.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]`.
///
/// Inputs of any shape are accepted as long as they hold `in` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// 2-D convolution over `[channels, height, width]` inputs.
///
/// Weights are `[out_ch, in_ch, k, k]`. `padding` zero-pads every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape {
                context: "dense parameters",
                expected: vec![bias.len(), 0],
                found: weight.shape().to_vec(),
            });
        }
        Ok(Dense { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn macs(&self) -> u64 {
        (self.inputs() * self.outputs()) as u64
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (outs, ins) = (self.outputs(), self.inputs());
        if x.len() != ins {
            return Err(Error::Dimension {
                context: "dense input",
                expected: ins,
                found: x.len(),
            });
        }
        let w = self.weight.data();
        let xs = x.data();
        let y = (0..outs)
            .map(|o| {
                let row = &w[o * ins..(o + 1) * ins];
                self.bias.data()[o] + row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(Tensor::vector(y))
    }

    /// Returns `(dW, db, dx)` with `dx` shaped like `x`.
    pub fn backward(&self, x: &Tensor, gy: &Tensor) -> (Tensor, Tensor, Tensor) {
        let (outs, ins) = (self.outputs(), self.inputs());
        let w = self.weight.data();
        let xs = x.data();
        let g = gy.data();
        let mut gw = vec![0.0; outs * ins];
        let mut gx = vec![0.0; ins];
        for o in 0..outs {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            let row = &w[o * ins..(o + 1) * ins];
            let grow = &mut gw[o * ins..(o + 1) * ins];
            for i in 0..ins {
                grow[i] = go * xs[i];
                gx[i] += row[i] * go;
            }
        }
        (
            Tensor::from_parts(vec![outs, ins], gw),
            Tensor::from_parts(vec![outs], g.to_vec()),
            Tensor::from_parts(x.shape().to_vec(), gx),
        )
    }
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s[2] != s[3] || bias.shape() != [s[0]] || stride == 0 {
            return Err(Error::Shape {
                context: "conv2d parameters",
                expected: vec![bias.len(), 0, 0, 0],
                found: s.to_vec(),
            });
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        conv_output_shape(
            input,
            self.in_channels(),
            self.out_channels(),
            self.kernel(),
            self.stride,
            self.padding,
        )
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (oc, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
        let (k, s, p) = (self.kernel(), self.stride, self.padding as isize);
        let wt = self.weight.data();
        let xs = x.data();
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias.data()[o]);
            for c in 0..ic {
                let xin = &xs[c * h * w..(c + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((o * ic + c) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    *ov += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(out_shape, out))
    }

    /// Returns `(dW, db, dx)`.
    pub fn backward(&self, x: &Tensor, gy: &Tensor) -> (Tensor, Tensor, Tensor) {
        let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (oc, oh, ow) = (gy.shape()[0], gy.shape()[1], gy.shape()[2]);
        let (k, s, p) = (self.kernel(), self.stride, self.padding as isize);
        let wt = self.weight.data();
        let xs = x.data();
        let g = gy.data();
        let mut gw = vec![0.0; wt.len()];
        let mut gb = vec![0.0; oc];
        let mut gx = vec![0.0; xs.len()];
        for o in 0..oc {
            let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
            gb[o] = gplane.iter().sum();
            for c in 0..ic {
                let xin = &xs[c * h * w..(c + 1) * h * w];
                let gxin = &mut gx[c * h * w..(c + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * ic + c) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = iy as usize * w;
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    let gv = gplane[oy * ow + ox];
                                    acc += gv * xin[base + ix as usize];
                                    gxin[base + ix as usize] += wv * gv;
                                }
                            }
                        }
                        gw[widx] = acc;
                    }
                }
            }
        }
        (
            Tensor::from_parts(self.weight.shape().to_vec(), gw),
            Tensor::from_parts(vec![oc], gb),
            Tensor::from_parts(x.shape().to_vec(), gx),
        )
    }
}

pub(crate) fn conv_output_shape(
    input: &[usize],
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<usize>> {
    if input.len() != 3 || input[0] != in_ch {
        return Err(Error::Shape {
            context: "conv2d input",
            expected: vec![in_ch, 0, 0],
            found: input.to_vec(),
        });
    }
    let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
    if h < k || w < k || stride == 0 {
        return Err(Error::Shape {
            context: "conv2d input smaller than kernel",
            expected: vec![in_ch, k, k],
            found: input.to_vec(),
        });
    }
    Ok(vec![out_ch, (h - k) / stride + 1, (w - k) / stride + 1])
}

pub(crate) fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub(crate) fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub(crate) fn gap_forward(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 3 {
        return Err(Error::Shape {
            context: "global average pool input",
            expected: vec![0, 0, 0],
            found: x.shape().to_vec(),
        });
    }
    let c = x.shape()[0];
    let area = x.shape()[1] * x.shape()[2];
    let data = x
        .data()
        .chunks(area)
        .map(|plane| plane.iter().sum::<f64>() / area as f64)
        .collect::<Vec<_>>();
    debug_assert_eq!(data.len(), c);
    Ok(Tensor::vector(data))
}

pub(crate) fn gap_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let area = x.shape()[1] * x.shape()[2];
    let mut data = Vec::with_capacity(x.len());
    for &g in gy.data() {
        let v = g / area as f64;
        data.extend(core::iter::repeat_n(v, area));
    }
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub(crate) fn softmax_forward(x: &Tensor, temperature: f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), math::softmax(x.data(), temperature))
}

/// Backward through `y = softmax(x / T)` given the forward output `y`.
pub(crate) fn softmax_backward(y: &Tensor, gy: &Tensor, temperature: f64) -> Tensor {
    let dot: f64 = y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
    let data = y
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&p, &g)| p * (g - dot) / temperature)
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}
