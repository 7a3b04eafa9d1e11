use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::loss::ssl_loss_grad;
use super::stream_seed;
use crate::data::Dataset;
use crate::image::Augmentation;
use crate::net::{BlockNet, GradientTape, NetSpec};
use crate::tensor::Tensor;
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SslConfig {
    pub tau_guide: f64,
    pub tau_explore: f64,
    pub ema_momentum: f64,
    pub augmentation: Augmentation,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// When set, guide logits are centred by a running mean with this
    /// momentum before the sharpened softmax.
    pub center_momentum: Option<f64>,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            tau_guide: 0.04,
            tau_explore: 0.1,
            ema_momentum: 0.996,
            augmentation: Augmentation::default(),
            epochs: 10,
            lr: 0.05,
            batch_size: 16,
            center_momentum: Some(0.9),
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_guide > 0.0 && self.tau_explore > 0.0) {
            return Err(Error::invalid("ssl temperatures must be positive"));
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return Err(Error::invalid("ema momentum must lie in [0, 1)"));
        }
        if let Some(c) = self.center_momentum {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::invalid("center momentum must lie in [0, 1)"));
            }
        }
        if self.batch_size == 0 || !(self.lr >= 0.0) {
            return Err(Error::invalid("batch size must be positive and lr non-negative"));
        }
        self.augmentation.validate()
    }
}

/// Guide (EMA target) and exploration (gradient-trained) networks.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPair {
    pub guide: BlockNet,
    pub explore: BlockNet,
}

impl TeacherPair {
    /// Both networks start from the same parameters.
    pub fn new(net: BlockNet) -> Self {
        TeacherPair {
            guide: net.clone(),
            explore: net,
        }
    }

    pub fn from_parts(guide: BlockNet, explore: BlockNet) -> Result<Self> {
        if !guide.same_architecture(&explore) {
            return Err(Error::ArchitectureMismatch("guide and explore networks"));
        }
        Ok(TeacherPair { guide, explore })
    }

    /// `guide ← m·guide + (1 − m)·explore`, parameter-wise.
    pub fn ema_update(&mut self, m: f64) -> Result<()> {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::invalid("ema momentum must lie in [0, 1)"));
        }
        if !self.guide.same_architecture(&self.explore) {
            return Err(Error::ArchitectureMismatch("guide and explore networks"));
        }
        let explore = self.explore.params();
        for (g, e) in self.guide.params_mut().into_iter().zip(explore) {
            for (gv, ev) in g.data_mut().iter_mut().zip(e.data()) {
                *gv = m * *gv + (1.0 - m) * ev;
            }
        }
        Ok(())
    }
}

/// Self-supervised training of a network with a projection head; returns
/// the trained guide.
///
/// Each step takes two augmented views of one sample, the first through
/// the guide and the second through the exploration network. Gradients of
/// the guide/exploration cross-entropy are averaged over `batch_size`
/// samples, applied to the exploration network with SGD, and followed by an
/// EMA update of the guide.
pub fn train_teacher(dataset: &Dataset, arch: &NetSpec, cfg: &SslConfig, seed: u64) -> Result<BlockNet> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("ssl dataset"));
    }
    let net = BlockNet::seeded_init(arch, seed)?;
    let width = net
        .head()
        .ok_or_else(|| Error::invalid("ssl training needs a projection head"))?
        .classes();
    let mut pair = TeacherPair::new(net);
    let mut rng = seeded_rng(stream_seed(seed, 1));
    let mut center = vec![0.0; width];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = GradientTape::zeros_like(&pair.explore);
            let mut batch_mean = vec![0.0; width];
            for &i in batch {
                let x = dataset.input(i);
                let v1 = cfg.augmentation.apply(&mut rng, x)?;
                let v2 = cfg.augmentation.apply(&mut rng, x)?;
                let g_acts = pair.guide.forward(&v1)?;
                let e_acts = pair.explore.forward(&v2)?;
                let g_logits = g_acts.logits().expect("head present").data();
                for (m, v) in batch_mean.iter_mut().zip(g_logits) {
                    *m += v / batch.len() as f64;
                }
                let target: Vec<f64> = match cfg.center_momentum {
                    Some(_) => g_logits.iter().zip(&center).map(|(g, c)| g - c).collect(),
                    None => g_logits.to_vec(),
                };
                let (loss, grad) = ssl_loss_grad(&target, e_acts.logits().expect("head present").data(), cfg)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { stage: "ssl", step });
                }
                tape.accumulate(&pair.explore.backward_logits(&Tensor::vector(grad), &e_acts)?)?;
            }
            tape.scale(1.0 / batch.len() as f64);
            pair.explore.sgd_step(&tape, cfg.lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { stage: "ssl", step },
                other => other,
            })?;
            pair.ema_update(cfg.ema_momentum)?;
            if let Some(cm) = cfg.center_momentum {
                for (c, m) in center.iter_mut().zip(&batch_mean) {
                    *c = cm * *c + (1.0 - cm) * m;
                }
            }
            step += 1;
        }
    }
    Ok(pair.guide)
}
