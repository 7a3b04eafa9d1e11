//! Sequential networks of typed blocks with reverse-mode gradients.
//!
//! A [`BlockNet`] is a feature extractor (ordered [`Block`]s) plus an
//! optional dense+softmax [`Head`]. It is the unit that gets split,
//! trained, quantized and serialized. Inputs are single samples; batch
//! training accumulates [`GradientTape`]s.

mod layers;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use layers::{Conv2d, Dense};
pub(crate) use layers::conv_output_shape;

use crate::tensor::Tensor;
use crate::{math, seeded_rng, Error, Result};

/// Anything that maps an input to a feature tensor with a known MAC cost:
/// float or quantized extractors, whole or split.
pub trait Extractor {
    fn extract(&self, input: &Tensor) -> Result<Tensor>;
    /// MACs of one extraction, excluding any classifier head.
    fn extractor_macs(&self) -> u64;
    fn output_shape(&self) -> Vec<usize>;
}

impl Extractor for BlockNet {
    fn extract(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        let mut x = input.clone();
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        Ok(x)
    }

    fn extractor_macs(&self) -> u64 {
        let head = self.head.as_ref().map_or(0, |h| h.dense.macs());
        self.macs() - head
    }

    fn output_shape(&self) -> Vec<usize> {
        self.feature_shape().expect("validated at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense(Dense),
    Conv2d(Conv2d),
    Relu,
    GlobalAvgPool,
    Softmax { temperature: f64 },
}

/// Dense classifier followed by `softmax(logits / temperature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub dense: Dense,
    pub temperature: f64,
}

/// Parameter-free description of a block, used by [`NetSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    GlobalAvgPool,
    Softmax { temperature: f64 },
}

/// How freshly built parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    #[default]
    FanUniform,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSpec {
    pub classes: usize,
    pub temperature: f64,
    pub init: Init,
}

impl HeadSpec {
    pub fn new(classes: usize) -> Self {
        HeadSpec {
            classes,
            temperature: 1.0,
            init: Init::FanUniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub input_shape: Vec<usize>,
    pub blocks: Vec<BlockSpec>,
    pub head: Option<HeadSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockNet {
    input_shape: Vec<usize>,
    blocks: Vec<Block>,
    head: Option<Head>,
}

/// Values recorded by [`BlockNet::forward`] for the backward pass.
///
/// `values[0]` is the input and `values[i + 1]` the output of block `i`,
/// so there is one entry per block boundary.
#[derive(Debug, Clone)]
pub struct Activations {
    fingerprint: u64,
    values: Vec<Tensor>,
    head_logits: Option<Tensor>,
    head_probs: Option<Tensor>,
}

impl Activations {
    /// Network output: head probabilities, or the last block's output.
    pub fn output(&self) -> &Tensor {
        self.head_probs
            .as_ref()
            .unwrap_or_else(|| self.values.last().expect("activations hold the input"))
    }

    /// Output of the feature extractor, i.e. the head's input.
    pub fn features(&self) -> &Tensor {
        self.values.last().expect("activations hold the input")
    }

    pub fn logits(&self) -> Option<&Tensor> {
        self.head_logits.as_ref()
    }

    /// Activation at block boundary `i` (0 is the input).
    pub fn boundary(&self, i: usize) -> Option<&Tensor> {
        self.values.get(i)
    }

    pub fn boundaries(&self) -> &[Tensor] {
        &self.values
    }
}

/// Gradients of a scalar loss with respect to every trainable parameter,
/// in [`BlockNet::params`] order, plus the gradient at the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub grads: Vec<Tensor>,
    pub input_grad: Tensor,
}

impl GradientTape {
    /// All-zero tape aligned with `net`.
    pub fn zeros_like(net: &BlockNet) -> Self {
        GradientTape {
            grads: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            input_grad: Tensor::zeros(&net.input_shape),
        }
    }

    pub fn accumulate(&mut self, other: &GradientTape) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::ArchitectureMismatch("gradient tapes differ in length"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        self.input_grad.add_assign(&other.input_grad)
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale(factor);
        }
        self.input_grad.scale(factor);
    }

    /// Sum of squared parameter gradients.
    pub fn sq_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum()
    }
}

/// Rescales the tapes together so their joint parameter-gradient norm is at
/// most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(tapes: &mut [&mut GradientTape], max_norm: f64) -> f64 {
    let norm = math::sqrt(tapes.iter().map(|t| t.sq_norm()).sum());
    if norm > max_norm && norm.is_finite() {
        let factor = max_norm / norm;
        tapes.iter_mut().for_each(|t| t.scale(factor));
    }
    norm
}

impl Block {
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Block::Dense(d) => {
                let n: usize = input.iter().product();
                if n != d.inputs() {
                    return Err(Error::Dimension {
                        context: "dense input",
                        expected: d.inputs(),
                        found: n,
                    });
                }
                Ok(vec![d.outputs()])
            }
            Block::Conv2d(c) => c.output_shape(input),
            Block::Relu | Block::Softmax { .. } => Ok(input.to_vec()),
            Block::GlobalAvgPool => {
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
            Block::Dense(d) => d.macs(),
            Block::Conv2d(c) => {
                let out = c.output_shape(input)?;
                (c.out_channels() * c.in_channels() * c.kernel() * c.kernel() * out[1] * out[2]) as u64
            }
            Block::Relu | Block::GlobalAvgPool | Block::Softmax { .. } => 0,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Block::Dense(d) => d.forward(x),
            Block::Conv2d(c) => c.forward(x),
            Block::Relu => Ok(layers::relu_forward(x)),
            Block::GlobalAvgPool => layers::gap_forward(x),
            Block::Softmax { temperature } => Ok(layers::softmax_forward(x, *temperature)),
        }
    }

    fn params(&self) -> Option<[&Tensor; 2]> {
        match self {
            Block::Dense(d) => Some([&d.weight, &d.bias]),
            Block::Conv2d(c) => Some([&c.weight, &c.bias]),
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<[&mut Tensor; 2]> {
        match self {
            Block::Dense(d) => Some([&mut d.weight, &mut d.bias]),
            Block::Conv2d(c) => Some([&mut c.weight, &mut c.bias]),
            _ => None,
        }
    }

    fn kind_tag(&self) -> u64 {
        match self {
            Block::Dense(_) => 1,
            Block::Conv2d(_) => 2,
            Block::Relu => 3,
            Block::GlobalAvgPool => 4,
            Block::Softmax { .. } => 5,
        }
    }
}

impl Head {
    pub fn classes(&self) -> usize {
        self.dense.outputs()
    }
}

impl BlockNet {
    /// Assembles a network, checking every block boundary for `input_shape`.
    pub fn new(input_shape: Vec<usize>, blocks: Vec<Block>, head: Option<Head>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid("input shape must have positive extents"));
        }
        let net = BlockNet {
            input_shape,
            blocks,
            head,
        };
        for b in &net.blocks {
            if let Block::Softmax { temperature } = b {
                if !(*temperature > 0.0) {
                    return Err(Error::invalid("softmax temperature must be positive"));
                }
            }
        }
        let features = net.feature_shape()?;
        if let Some(h) = &net.head {
            if !(h.temperature > 0.0) {
                return Err(Error::invalid("head temperature must be positive"));
            }
            let width: usize = features.iter().product();
            if width != h.dense.inputs() {
                return Err(Error::Dimension {
                    context: "head input",
                    expected: width,
                    found: h.dense.inputs(),
                });
            }
            if h.classes() < 1 {
                return Err(Error::invalid("head needs at least one output"));
            }
        }
        Ok(net)
    }

    /// Builds a network from `spec`; the same `(spec, seed)` always yields
    /// bit-identical parameters.
    pub fn seeded_init(spec: &NetSpec, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut shape = spec.input_shape.clone();
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for b in &spec.blocks {
            let block = match *b {
                BlockSpec::Dense { inputs, outputs } => {
                    Block::Dense(init_dense(&mut rng, inputs, outputs, Init::FanUniform))
                }
                BlockSpec::Conv2d { in_ch, out_ch, kernel, stride, padding } => {
                    let fan_in = in_ch * kernel * kernel;
                    let fan_out = out_ch * kernel * kernel;
                    let weight = uniform_tensor(&mut rng, &[out_ch, in_ch, kernel, kernel], fan_in, fan_out);
                    Block::Conv2d(Conv2d::new(weight, Tensor::zeros(&[out_ch]), stride, padding)?)
                }
                BlockSpec::Relu => Block::Relu,
                BlockSpec::GlobalAvgPool => Block::GlobalAvgPool,
                BlockSpec::Softmax { temperature } => Block::Softmax { temperature },
            };
            shape = block.output_shape(&shape)?;
            blocks.push(block);
        }
        let head = spec.head.map(|h| Head {
            dense: init_dense(&mut rng, shape.iter().product(), h.classes, h.init),
            temperature: h.temperature,
        });
        BlockNet::new(spec.input_shape.clone(), blocks, head)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> Option<&Head> {
        self.head.as_ref()
    }

    pub fn head_mut(&mut self) -> Option<&mut Head> {
        self.head.as_mut()
    }

    pub fn set_head(&mut self, head: Option<Head>) -> Result<()> {
        let candidate = BlockNet::new(self.input_shape.clone(), self.blocks.clone(), head)?;
        *self = candidate;
        Ok(())
    }

    pub fn without_head(&self) -> BlockNet {
        BlockNet {
            input_shape: self.input_shape.clone(),
            blocks: self.blocks.clone(),
            head: None,
        }
    }

    /// Shape at every block boundary, starting with the input.
    pub fn boundary_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for b in &self.blocks {
            let next = b.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Shape of the extractor output (the head input).
    pub fn feature_shape(&self) -> Result<Vec<usize>> {
        Ok(self.boundary_shapes()?.pop().expect("non-empty"))
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_shape()
            .map(|s| s.iter().product())
            .expect("validated at construction")
    }

    pub fn forward(&self, input: &Tensor) -> Result<Activations> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        let mut values = Vec::with_capacity(self.blocks.len() + 1);
        values.push(input.clone());
        for b in &self.blocks {
            let y = b.forward(values.last().expect("non-empty"))?;
            values.push(y);
        }
        let (head_logits, head_probs) = match &self.head {
            Some(h) => {
                let logits = h.dense.forward(values.last().expect("non-empty"))?;
                let probs = layers::softmax_forward(&logits, h.temperature);
                (Some(logits), Some(probs))
            }
            None => (None, None),
        };
        Ok(Activations {
            fingerprint: self.fingerprint(),
            values,
            head_logits,
            head_probs,
        })
    }

    /// Convenience: the network output for one input.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut acts = self.forward(input)?;
        Ok(match acts.head_probs.take() {
            Some(p) => p,
            None => acts.values.pop().expect("non-empty"),
        })
    }

    /// Gradients given `loss_grad = ∂loss/∂output`.
    pub fn backward(&self, loss_grad: &Tensor, acts: &Activations) -> Result<GradientTape> {
        self.check_activations(acts)?;
        match (&self.head, &acts.head_probs) {
            (Some(h), Some(probs)) => {
                check_same_shape("output gradient", probs, loss_grad)?;
                let gl = layers::softmax_backward(probs, loss_grad, h.temperature);
                self.backward_inner(Some(&gl), None, acts)
            }
            _ => self.backward_inner(None, Some(loss_grad), acts),
        }
    }

    /// Gradients given `∂loss/∂logits` of the head, skipping its softmax.
    pub fn backward_logits(&self, logits_grad: &Tensor, acts: &Activations) -> Result<GradientTape> {
        self.check_activations(acts)?;
        if self.head.is_none() {
            return Err(Error::invalid("backward_logits needs a head"));
        }
        self.backward_inner(Some(logits_grad), None, acts)
    }

    /// Gradients given `∂loss/∂logits` (when `logits_grad` is set and a head
    /// exists) plus an optional extra gradient at the extractor output.
    pub fn backward_with_features(
        &self,
        logits_grad: Option<&Tensor>,
        feature_grad: Option<&Tensor>,
        acts: &Activations,
    ) -> Result<GradientTape> {
        self.check_activations(acts)?;
        if logits_grad.is_some() && self.head.is_none() {
            return Err(Error::invalid("logit gradient given for a headless network"));
        }
        self.backward_inner(logits_grad, feature_grad, acts)
    }

    fn check_activations(&self, acts: &Activations) -> Result<()> {
        if acts.values.len() != self.blocks.len() + 1 || acts.fingerprint != self.fingerprint() {
            return Err(Error::StaleActivations);
        }
        Ok(())
    }

    fn backward_inner(
        &self,
        logits_grad: Option<&Tensor>,
        feature_grad: Option<&Tensor>,
        acts: &Activations,
    ) -> Result<GradientTape> {
        let features = acts.features();
        let mut grads_rev: Vec<Tensor> = Vec::new();
        let mut g = Tensor::zeros(features.shape());
        if let (Some(h), Some(gl)) = (&self.head, logits_grad) {
            if gl.len() != h.classes() {
                return Err(Error::Dimension {
                    context: "logit gradient",
                    expected: h.classes(),
                    found: gl.len(),
                });
            }
            let (gw, gb, gx) = h.dense.backward(features, gl);
            grads_rev.push(gb);
            grads_rev.push(gw);
            g = gx;
        } else if let Some(h) = &self.head {
            grads_rev.push(Tensor::zeros(&[h.classes()]));
            grads_rev.push(Tensor::zeros(h.dense.weight.shape()));
        }
        if let Some(fg) = feature_grad {
            if fg.len() != g.len() {
                return Err(Error::Dimension {
                    context: "feature gradient",
                    expected: g.len(),
                    found: fg.len(),
                });
            }
            for (a, b) in g.data_mut().iter_mut().zip(fg.data()) {
                *a += b;
            }
        }
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let x = &acts.values[i];
            let y = &acts.values[i + 1];
            g = match b {
                Block::Dense(d) => {
                    let (gw, gb, gx) = d.backward(x, &g);
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    gx
                }
                Block::Conv2d(c) => {
                    let (gw, gb, gx) = c.backward(x, &g);
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    gx
                }
                Block::Relu => layers::relu_backward(x, &g),
                Block::GlobalAvgPool => layers::gap_backward(x, &g),
                Block::Softmax { temperature } => layers::softmax_backward(y, &g, *temperature),
            };
        }
        grads_rev.reverse();
        Ok(GradientTape {
            grads: grads_rev,
            input_grad: g,
        })
    }

    /// Plain SGD, `θ ← θ − lr·g`. Nothing is written if any gradient is
    /// non-finite.
    pub fn sgd_step(&mut self, tape: &GradientTape, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        let shapes: Vec<Vec<usize>> = self.params().iter().map(|p| p.shape().to_vec()).collect();
        if tape.grads.len() != shapes.len() {
            return Err(Error::ArchitectureMismatch("gradient tape length"));
        }
        for (i, (g, s)) in tape.grads.iter().zip(&shapes).enumerate() {
            if g.shape() != s.as_slice() {
                return Err(Error::Shape {
                    context: "gradient tape entry",
                    expected: s.clone(),
                    found: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: i });
            }
        }
        for (p, g) in self.params_mut().into_iter().zip(&tape.grads) {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * d;
            }
        }
        Ok(())
    }

    /// Trainable parameters: `(weight, bias)` per parameterized block, then the head's.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.blocks.iter().filter_map(Block::params).flatten().collect();
        if let Some(h) = &self.head {
            out.push(&h.dense.weight);
            out.push(&h.dense.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.blocks.iter_mut().filter_map(Block::params_mut).flatten().collect();
        if let Some(h) = &mut self.head {
            out.push(&mut h.dense.weight);
            out.push(&mut h.dense.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// MACs for one input of `input_shape`, including the head if present.
    pub fn mac_count(&self, input_shape: &[usize]) -> Result<u64> {
        let mut shape = input_shape.to_vec();
        let mut total = 0u64;
        for b in &self.blocks {
            total += b.macs(&shape)?;
            shape = b.output_shape(&shape)?;
        }
        if let Some(h) = &self.head {
            total += h.dense.macs();
        }
        Ok(total)
    }

    /// MACs at the network's own input shape.
    pub fn macs(&self) -> u64 {
        self.mac_count(&self.input_shape).expect("validated at construction")
    }

    /// Splits into `blocks[..index]` (headless) and `blocks[index..]`
    /// (keeping the head). The remainder's input is the part's output.
    pub fn split_at(&self, index: usize) -> Result<(BlockNet, BlockNet)> {
        if index > self.blocks.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.blocks.len(),
            });
        }
        let shapes = self.boundary_shapes()?;
        let part = BlockNet {
            input_shape: self.input_shape.clone(),
            blocks: self.blocks[..index].to_vec(),
            head: None,
        };
        let remainder = BlockNet {
            input_shape: shapes[index].clone(),
            blocks: self.blocks[index..].to_vec(),
            head: self.head.clone(),
        };
        Ok((part, remainder))
    }

    /// Inverse of [`split_at`](Self::split_at).
    pub fn concat(part: &BlockNet, remainder: &BlockNet) -> Result<BlockNet> {
        if part.head.is_some() {
            return Err(Error::invalid("the leading network of a concatenation must be headless"));
        }
        if part.feature_shape()? != remainder.input_shape {
            return Err(Error::Shape {
                context: "concatenation boundary",
                expected: part.feature_shape()?,
                found: remainder.input_shape.clone(),
            });
        }
        let mut blocks = part.blocks.clone();
        blocks.extend(remainder.blocks.iter().cloned());
        BlockNet::new(part.input_shape.clone(), blocks, remainder.head.clone())
    }

    /// Same blocks and head parameters, evaluated at a different input shape.
    pub fn with_input_shape(&self, input_shape: Vec<usize>) -> Result<BlockNet> {
        BlockNet::new(input_shape, self.blocks.clone(), self.head.clone())
    }

    /// Same parameter layout (kinds, shapes, hyper-parameters).
    pub fn same_architecture(&self, other: &BlockNet) -> bool {
        self.input_shape == other.input_shape
            && self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.kind_tag() == b.kind_tag() && hyper_eq(a, b))
            && self.head.as_ref().map(|h| h.dense.weight.shape().to_vec())
                == other.head.as_ref().map(|h| h.dense.weight.shape().to_vec())
            && self
                .params()
                .iter()
                .zip(other.params())
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// FNV-style word hash over the architecture and the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        self.fingerprint()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for &d in &self.input_shape {
            h.write(d as u64);
        }
        for b in &self.blocks {
            h.write(b.kind_tag());
            match b {
                Block::Conv2d(c) => {
                    h.write(c.stride as u64);
                    h.write(c.padding as u64);
                }
                Block::Softmax { temperature } => h.write(temperature.to_bits()),
                _ => {}
            }
        }
        if let Some(head) = &self.head {
            h.write(head.temperature.to_bits());
        }
        for p in self.params() {
            for &d in p.shape() {
                h.write(d as u64);
            }
            for v in p.data() {
                h.write(v.to_bits());
            }
        }
        h.finish()
    }
}

fn hyper_eq(a: &Block, b: &Block) -> bool {
    match (a, b) {
        (Block::Conv2d(x), Block::Conv2d(y)) => x.stride == y.stride && x.padding == y.padding,
        (Block::Softmax { temperature: x }, Block::Softmax { temperature: y }) => x == y,
        _ => true,
    }
}

fn check_same_shape(context: &'static str, expected: &Tensor, found: &Tensor) -> Result<()> {
    if expected.shape() != found.shape() {
        return Err(Error::Shape {
            context,
            expected: expected.shape().to_vec(),
            found: found.shape().to_vec(),
        });
    }
    Ok(())
}

fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

pub(crate) fn init_dense(rng: &mut impl Rng, inputs: usize, outputs: usize, init: Init) -> Dense {
    match init {
        Init::FanUniform => Dense {
            weight: uniform_tensor(rng, &[outputs, inputs], inputs, outputs),
            bias: Tensor::zeros(&[outputs]),
        },
        Init::Zeros => Dense::zeros(inputs, outputs),
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x0100_0000_01b3);
        self.0 ^= self.0 >> 29;
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests;
