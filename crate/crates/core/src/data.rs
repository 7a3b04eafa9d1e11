//! In-memory labelled datasets, seeded splits and the bundled synthetic
//! glyph images used as the public (cloud) and local (device) data.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Tensor>,
    labels: Vec<u32>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<u32>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Dimension {
                context: "dataset labels",
                expected: inputs.len(),
                found: labels.len(),
            });
        }
        if let Some(first) = inputs.first() {
            if let Some(bad) = inputs.iter().find(|x| x.shape() != first.shape()) {
                return Err(Error::Shape {
                    context: "dataset sample",
                    expected: first.shape().to_vec(),
                    found: bad.shape().to_vec(),
                });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::invalid(alloc::format!("label {l} outside {classes} classes")));
        }
        Ok(Dataset { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input(&self, i: usize) -> &Tensor {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn input_shape(&self) -> Option<&[usize]> {
        self.inputs.first().map(Tensor::shape)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, u32)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Applies `f` to every input, keeping labels.
    pub fn map_inputs(&self, mut f: impl FnMut(&Tensor) -> Result<Tensor>) -> Result<Dataset> {
        let inputs = self.inputs.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Dataset::new(inputs, self.labels.clone(), self.classes)
    }
}

/// Disjoint index sets covering a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub val: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it by `ratios` (train:test:val).
pub fn split_indices(n: usize, ratios: [u32; 3], seed: u64) -> Result<Splits> {
    let total: u32 = ratios.iter().sum();
    if total == 0 {
        return Err(Error::invalid("split ratios sum to zero"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let n_train = n * ratios[0] as usize / total as usize;
    let n_test = n * ratios[1] as usize / total as usize;
    let val = idx.split_off(n_train + n_test);
    let test = idx.split_off(n_train);
    Ok(Splits { train: idx, test, val })
}

/// 5×5 binary stencils stamped into the synthetic images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    HBar,
    VBar,
    Diagonal,
    AntiDiagonal,
    Plus,
    Cross,
    Checker,
    Block,
    Ring,
    LShape,
    TShape,
    Corners,
}

impl Glyph {
    pub const SIDE: usize = 5;

    pub fn covers(self, r: usize, c: usize) -> bool {
        let last = Self::SIDE - 1;
        let mid = Self::SIDE / 2;
        match self {
            Glyph::HBar => r == mid,
            Glyph::VBar => c == mid,
            Glyph::Diagonal => r == c,
            Glyph::AntiDiagonal => r + c == last,
            Glyph::Plus => r == mid || c == mid,
            Glyph::Cross => r == c || r + c == last,
            Glyph::Checker => (r + c).is_multiple_of(2),
            Glyph::Block => (1..=3).contains(&r) && (1..=3).contains(&c),
            Glyph::Ring => r == 0 || c == 0 || r == last || c == last,
            Glyph::LShape => c == 0 || r == last,
            Glyph::TShape => r == 0 || c == mid,
            Glyph::Corners => (r == 0 || r == last) && (c == 0 || c == last),
        }
    }
}

/// Noisy single-channel images containing one glyph at a random position.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImages {
    pub side: usize,
    pub glyphs: Vec<Glyph>,
    pub background: f64,
    pub intensity: (f64, f64),
    pub noise_sigma: f64,
}

impl SyntheticImages {
    /// Eight-class population standing in for the public cloud data.
    pub fn public(side: usize) -> Self {
        SyntheticImages {
            side,
            glyphs: vec![
                Glyph::HBar,
                Glyph::VBar,
                Glyph::Diagonal,
                Glyph::AntiDiagonal,
                Glyph::Plus,
                Glyph::Cross,
                Glyph::Checker,
                Glyph::Block,
            ],
            background: 0.1,
            intensity: (0.5, 0.9),
            noise_sigma: 0.2,
        }
    }

    /// Four-class population with glyphs never seen in the public data.
    pub fn local(side: usize) -> Self {
        SyntheticImages {
            glyphs: vec![Glyph::Ring, Glyph::LShape, Glyph::TShape, Glyph::Corners],
            ..SyntheticImages::public(side)
        }
    }

    /// `n` samples with labels cycling through the glyph list.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if self.glyphs.len() < 2 || self.side < Glyph::SIDE {
            return Err(Error::invalid("synthetic images need >= 2 glyphs and side >= 5"));
        }
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|_| Error::invalid("noise sigma"))?;
        let mut rng = seeded_rng(seed);
        let (s, k) = (self.side, Glyph::SIDE);
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % self.glyphs.len();
            let glyph = self.glyphs[label];
            let top = rng.random_range(0..=s - k);
            let left = rng.random_range(0..=s - k);
            let amp = rng.random_range(self.intensity.0..=self.intensity.1);
            let mut px = vec![self.background; s * s];
            for r in 0..k {
                for c in 0..k {
                    if glyph.covers(r, c) {
                        px[(top + r) * s + left + c] += amp;
                    }
                }
            }
            for v in &mut px {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            inputs.push(Tensor::from_parts(vec![1, s, s], px));
            labels.push(label as u32);
        }
        Dataset::new(inputs, labels, self.glyphs.len())
    }
}
