//! Linear probes: standardized softmax regression on frozen features.
//!
//! Used to score candidate split points and to compare extractors.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::distill::cross_entropy_grad;
use crate::net::{init_dense, Dense, Init};
use crate::tensor::Tensor;
use crate::{math, seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 30,
            lr: 0.1,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    dense: Dense,
}

impl LinearProbe {
    fn standardize(&self, x: &[f64]) -> Tensor {
        Tensor::vector(
            x.iter()
                .zip(&self.mean)
                .zip(&self.inv_std)
                .map(|((v, m), s)| (v - m) * s)
                .collect(),
        )
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.dense.forward(&self.standardize(features))?.into_data())
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(math::argmax(&self.logits(features)?))
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::Empty("probe evaluation set"));
        }
        let mut correct = 0;
        for (f, &l) in features.iter().zip(labels) {
            if self.predict(f)? == l as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / features.len() as f64)
    }
}

/// Fits a probe with minibatch SGD on cross-entropy.
pub fn train_probe(
    features: &[Vec<f64>],
    labels: &[u32],
    classes: usize,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<LinearProbe> {
    if features.is_empty() {
        return Err(Error::Empty("probe training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::Dimension {
            context: "probe labels",
            expected: features.len(),
            found: labels.len(),
        });
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::Dimension {
            context: "probe feature",
            expected: dim,
            found: bad.len(),
        });
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let inv_std = var.iter().map(|&v| if v > 1e-12 { 1.0 / math::sqrt(v) } else { 0.0 }).collect();
    let mut rng = seeded_rng(seed);
    let mut probe = LinearProbe {
        mean,
        inv_std,
        dense: init_dense(&mut rng, dim, classes, Init::Zeros),
    };
    let inputs: Vec<Tensor> = features.iter().map(|f| probe.standardize(f)).collect();
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut gw = vec![0.0; dim * classes];
            let mut gb = vec![0.0; classes];
            for &i in batch {
                let logits = probe.dense.forward(&inputs[i])?;
                let (_, g) = cross_entropy_grad(logits.data(), labels[i] as usize)?;
                let x = inputs[i].data();
                for (o, &go) in g.iter().enumerate() {
                    gb[o] += go;
                    for (w, xv) in gw[o * dim..(o + 1) * dim].iter_mut().zip(x) {
                        *w += go * xv;
                    }
                }
            }
            let step = cfg.lr / batch.len() as f64;
            for (w, g) in probe.dense.weight.data_mut().iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in probe.dense.bias.data_mut().iter_mut().zip(&gb) {
                *b -= step * g;
            }
        }
    }
    if !probe.dense.weight.is_finite() {
        return Err(Error::NonFiniteLoss { stage: "probe", step: 0 });
    }
    Ok(probe)
}
