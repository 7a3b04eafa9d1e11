//! Post-training symmetric INT8 quantization of feature extractors.
//!
//! Weights get one scale per tensor (`max|w| / 127`), activations one
//! scale per weighted layer input taken from a calibration pass. Dense and
//! convolution layers run as `i8 × i8` products accumulated in `i32`, with
//! the bias pre-quantized to the accumulator scale, then rescaled to real
//! values before the next layer. Classifier heads are never quantized.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::net::{conv_output_shape, Block, BlockNet, Extractor};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const QMAX: i32 = 127;

/// `value ≈ scale × q` with `q ∈ [−127, 127]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub shape: Vec<usize>,
    pub values: Vec<i8>,
    pub scale: f32,
}

/// Scale for a symmetric range of `max_abs`; all-zero data gets 1.0.
pub fn symmetric_scale(max_abs: f64) -> f32 {
    if max_abs > 0.0 {
        (max_abs / QMAX as f64) as f32
    } else {
        1.0
    }
}

/// Round half away from zero, then clamp to `[−127, 127]`.
fn quantize_value(v: f64, scale: f64) -> (i8, bool) {
    let q = math::round(v / scale);
    let clipped = q > QMAX as f64 || q < -QMAX as f64;
    (q.clamp(-QMAX as f64, QMAX as f64) as i8, clipped)
}

impl QuantTensor {
    pub fn quantize(t: &Tensor) -> Self {
        let scale = symmetric_scale(t.max_abs());
        let s = f64::from(scale);
        QuantTensor {
            shape: t.shape().to_vec(),
            values: t.data().iter().map(|&v| quantize_value(v, s).0).collect(),
            scale,
        }
    }

    pub fn dequantize(&self) -> Tensor {
        let s = f64::from(self.scale);
        Tensor::from_parts(self.shape.clone(), self.values.iter().map(|&q| s * f64::from(q)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantBlock {
    Dense {
        weight: QuantTensor,
        /// Bias in accumulator units (`weight.scale × input_scale`).
        bias: Vec<i32>,
        input_scale: f32,
    },
    Conv2d {
        weight: QuantTensor,
        bias: Vec<i32>,
        input_scale: f32,
        stride: usize,
        padding: usize,
    },
    Relu,
    GlobalAvgPool,
    Softmax {
        temperature: f64,
    },
}

/// Quantized mirror of a headless [`BlockNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantNet {
    input_shape: Vec<usize>,
    blocks: Vec<QuantBlock>,
}

/// Output of [`QuantNet::quant_forward`] with overflow diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantOutput {
    pub output: Tensor,
    /// Accumulators that overflowed `i32` and were saturated.
    pub saturated: usize,
    /// Activations outside the calibrated range, clipped to ±127.
    pub clipped: usize,
}

fn quantize_bias(bias: &Tensor, weight_scale: f32, input_scale: f32) -> Vec<i32> {
    let acc_scale = f64::from(weight_scale) * f64::from(input_scale);
    bias.data()
        .iter()
        .map(|&b| math::round(b / acc_scale).clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        .collect()
}

/// Builds a [`QuantNet`] from the extractor of `net` (any head is dropped).
pub fn quantize(net: &BlockNet, calibration: &[Tensor]) -> Result<QuantNet> {
    if calibration.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    let extractor = net.without_head();
    let mut max_in = vec![0.0f64; extractor.blocks().len()];
    for x in calibration {
        let acts = extractor.forward(x)?;
        for (m, a) in max_in.iter_mut().zip(acts.boundaries()) {
            *m = m.max(a.max_abs());
        }
    }
    let blocks = extractor
        .blocks()
        .iter()
        .zip(&max_in)
        .map(|(b, &m)| match b {
            Block::Dense(d) => {
                let weight = QuantTensor::quantize(&d.weight);
                let input_scale = symmetric_scale(m);
                QuantBlock::Dense {
                    bias: quantize_bias(&d.bias, weight.scale, input_scale),
                    weight,
                    input_scale,
                }
            }
            Block::Conv2d(c) => {
                let weight = QuantTensor::quantize(&c.weight);
                let input_scale = symmetric_scale(m);
                QuantBlock::Conv2d {
                    bias: quantize_bias(&c.bias, weight.scale, input_scale),
                    weight,
                    input_scale,
                    stride: c.stride,
                    padding: c.padding,
                }
            }
            Block::Relu => QuantBlock::Relu,
            Block::GlobalAvgPool => QuantBlock::GlobalAvgPool,
            Block::Softmax { temperature } => QuantBlock::Softmax {
                temperature: *temperature,
            },
        })
        .collect();
    QuantNet::new(extractor.input_shape().to_vec(), blocks)
}

fn accumulate(acc: i32, term: i32, saturated: &mut bool) -> i32 {
    match acc.checked_add(term) {
        Some(v) => v,
        None => {
            *saturated = true;
            if term > 0 {
                i32::MAX
            } else {
                i32::MIN
            }
        }
    }
}

impl QuantBlock {
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            QuantBlock::Dense { weight, .. } => {
                let n: usize = input.iter().product();
                if n != weight.shape[1] {
                    return Err(Error::Dimension {
                        context: "quantized dense input",
                        expected: weight.shape[1],
                        found: n,
                    });
                }
                Ok(vec![weight.shape[0]])
            }
            QuantBlock::Conv2d { weight, stride, padding, .. } => {
                conv_output_shape(input, weight.shape[1], weight.shape[0], weight.shape[2], *stride, *padding)
            }
            QuantBlock::Relu | QuantBlock::Softmax { .. } => Ok(input.to_vec()),
            QuantBlock::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(Error::Shape {
                        context: "global average pool input",
                        expected: vec![0, 0, 0],
                        found: input.to_vec(),
                    });
                }
                Ok(vec![input[0]])
            }
        }
    }

    fn macs(&self, input: &[usize]) -> Result<u64> {
        Ok(match self {
            QuantBlock::Dense { weight, .. } => (weight.shape[0] * weight.shape[1]) as u64,
            QuantBlock::Conv2d { weight, .. } => {
                let out = self.output_shape(input)?;
                (weight.values.len() * out[1] * out[2]) as u64
            }
            _ => 0,
        })
    }

    fn validate(&self) -> Result<()> {
        let check = |w: &QuantTensor, bias: &[i32], rank: usize, input_scale: f32| {
            let numel: usize = w.shape.iter().product();
            if w.shape.len() != rank || numel != w.values.len() || bias.len() != w.shape[0] {
                return Err(Error::invalid("quantized parameter shapes are inconsistent"));
            }
            if w.values.contains(&i8::MIN) {
                return Err(Error::invalid("int8 weights must lie in [-127, 127]"));
            }
            if !(w.scale > 0.0 && input_scale > 0.0) {
                return Err(Error::invalid("quantization scales must be positive"));
            }
            Ok(())
        };
        match self {
            QuantBlock::Dense { weight, bias, input_scale } => check(weight, bias, 2, *input_scale),
            QuantBlock::Conv2d { weight, bias, input_scale, stride, .. } => {
                check(weight, bias, 4, *input_scale)?;
                if *stride == 0 || weight.shape[2] != weight.shape[3] {
                    return Err(Error::invalid("conv kernel must be square with positive stride"));
                }
                Ok(())
            }
            QuantBlock::Softmax { temperature } if !(*temperature > 0.0) => {
                Err(Error::invalid("softmax temperature must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn quantize_input(x: &Tensor, input_scale: f32, clipped: &mut usize) -> Vec<i8> {
        let s = f64::from(input_scale);
        x.data()
            .iter()
            .map(|&v| {
                let (q, c) = quantize_value(v, s);
                *clipped += usize::from(c);
                q
            })
            .collect()
    }

    fn forward(&self, x: &Tensor, out: &mut QuantOutput) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        match self {
            QuantBlock::Dense { weight, bias, input_scale } => {
                let qx = Self::quantize_input(x, *input_scale, &mut out.clipped);
                let ins = weight.shape[1];
                let rescale = f64::from(weight.scale) * f64::from(*input_scale);
                let data = (0..weight.shape[0])
                    .map(|o| {
                        let mut sat = false;
                        let mut acc = bias[o];
                        for (w, xv) in weight.values[o * ins..(o + 1) * ins].iter().zip(&qx) {
                            acc = accumulate(acc, i32::from(*w) * i32::from(*xv), &mut sat);
                        }
                        out.saturated += usize::from(sat);
                        f64::from(acc) * rescale
                    })
                    .collect();
                Ok(Tensor::from_parts(out_shape, data))
            }
            QuantBlock::Conv2d { weight, bias, input_scale, stride, padding } => {
                let qx = Self::quantize_input(x, *input_scale, &mut out.clipped);
                let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oc, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
                let k = weight.shape[2];
                let p = *padding as isize;
                let rescale = f64::from(weight.scale) * f64::from(*input_scale);
                let mut data = Vec::with_capacity(oc * oh * ow);
                for (o, &b) in bias.iter().enumerate().take(oc) {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut sat = false;
                            let mut acc = b;
                            for c in 0..ic {
                                for ky in 0..k {
                                    let iy = (oy * stride + ky) as isize - p;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..k {
                                        let ix = (ox * stride + kx) as isize - p;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let wq = weight.values[((o * ic + c) * k + ky) * k + kx];
                                        let xq = qx[(c * h + iy as usize) * w + ix as usize];
                                        acc = accumulate(acc, i32::from(wq) * i32::from(xq), &mut sat);
                                    }
                                }
                            }
                            out.saturated += usize::from(sat);
                            data.push(f64::from(acc) * rescale);
                        }
                    }
                }
                Ok(Tensor::from_parts(out_shape, data))
            }
            QuantBlock::Relu => Ok(Tensor::from_parts(
                out_shape,
                x.data().iter().map(|&v| v.max(0.0)).collect(),
            )),
            QuantBlock::GlobalAvgPool => {
                let area = x.shape()[1] * x.shape()[2];
                let data = x.data().chunks(area).map(|c| c.iter().sum::<f64>() / area as f64).collect();
                Ok(Tensor::from_parts(out_shape, data))
            }
            QuantBlock::Softmax { temperature } => {
                Ok(Tensor::from_parts(out_shape, math::softmax(x.data(), *temperature)))
            }
        }
    }
}

impl QuantNet {
    pub fn new(input_shape: Vec<usize>, blocks: Vec<QuantBlock>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid("input shape must have positive extents"));
        }
        let net = QuantNet { input_shape, blocks };
        for b in &net.blocks {
            b.validate()?;
        }
        net.boundary_shapes()?;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn blocks(&self) -> &[QuantBlock] {
        &self.blocks
    }

    pub fn boundary_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for b in &self.blocks {
            let next = b.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn quant_forward(&self, input: &Tensor) -> Result<QuantOutput> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                context: "quantized network input",
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        let mut out = QuantOutput {
            output: input.clone(),
            saturated: 0,
            clipped: 0,
        };
        let mut x = input.clone();
        for b in &self.blocks {
            x = b.forward(&x, &mut out)?;
        }
        out.output = x;
        Ok(out)
    }

    pub fn macs(&self) -> u64 {
        let mut shape = self.input_shape.clone();
        let mut total = 0;
        for b in &self.blocks {
            total += b.macs(&shape).expect("validated at construction");
            shape = b.output_shape(&shape).expect("validated at construction");
        }
        total
    }

    pub fn split_at(&self, index: usize) -> Result<(QuantNet, QuantNet)> {
        if index > self.blocks.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.blocks.len(),
            });
        }
        let shapes = self.boundary_shapes()?;
        Ok((
            QuantNet {
                input_shape: self.input_shape.clone(),
                blocks: self.blocks[..index].to_vec(),
            },
            QuantNet {
                input_shape: shapes[index].clone(),
                blocks: self.blocks[index..].to_vec(),
            },
        ))
    }
}

impl Extractor for QuantNet {
    fn extract(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.quant_forward(input)?.output)
    }

    fn extractor_macs(&self) -> u64 {
        self.macs()
    }

    fn output_shape(&self) -> Vec<usize> {
        self.boundary_shapes()
            .expect("validated at construction")
            .pop()
            .expect("non-empty")
    }
}
