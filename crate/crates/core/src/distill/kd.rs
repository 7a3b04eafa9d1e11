use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::loss::{distill_loss_grad, joint_loss_grad, JointTerms};
use super::stream_seed;
use crate::data::Dataset;
use crate::net::{clip_global_norm, init_dense, Block, BlockNet, GradientTape, Head, Init};
use crate::tensor::Tensor;
use crate::{seeded_rng, Error, Result};

/// One teacher embedding, keyed by the index of its input in the public dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEntry {
    pub id: u32,
    pub label: u32,
    pub embedding: Tensor,
}

/// Teacher features taken before the head, one entry per public sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    width: usize,
    records: Vec<EmbeddingEntry>,
}

impl EmbeddingDataset {
    pub fn new(width: usize, records: Vec<EmbeddingEntry>) -> Result<Self> {
        if let Some(bad) = records.iter().find(|r| r.embedding.len() != width) {
            return Err(Error::Dimension {
                context: "embedding record",
                expected: width,
                found: bad.embedding.len(),
            });
        }
        Ok(EmbeddingDataset { width, records })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn records(&self) -> &[EmbeddingEntry] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Runs every input through the teacher's extractor, order-preserving.
pub fn extract_embeddings(teacher: &BlockNet, dataset: &Dataset) -> Result<EmbeddingDataset> {
    let extractor = teacher.without_head();
    let width = extractor.feature_dim();
    let records = dataset
        .iter()
        .enumerate()
        .map(|(i, (x, label))| {
            Ok(EmbeddingEntry {
                id: i as u32,
                label,
                embedding: extractor.predict(x)?.flatten(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingDataset::new(width, records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Weight of the full-model feature MSE.
    pub alpha: f64,
    /// Weight of the part-model feature MSE (joint training only).
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// When set, each step's gradients are rescaled to at most this joint norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 1.0,
            beta: 1.0,
            epochs: 10,
            lr: 0.05,
            batch_size: 16,
            max_grad_norm: None,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        for w in [self.alpha, self.beta] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid("alpha and beta must be finite and non-negative"));
            }
        }
        if self.batch_size == 0 || !(self.lr >= 0.0) {
            return Err(Error::invalid("batch size must be positive and lr non-negative"));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid("gradient norm limit must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// Matching layer (student width → teacher width) plus a temporary
/// classification head on the matched features.
fn adapter(input_shape: Vec<usize>, teacher_width: usize, classes: usize, seed: u64) -> Result<BlockNet> {
    let mut rng = seeded_rng(seed);
    let width: usize = input_shape.iter().product();
    let matching = init_dense(&mut rng, width, teacher_width, Init::FanUniform);
    let head = Head {
        dense: init_dense(&mut rng, teacher_width, classes, Init::FanUniform),
        temperature: 1.0,
    };
    BlockNet::new(input_shape, alloc::vec![Block::Dense(matching)], Some(head))
}

fn check_alignment(emb: &EmbeddingDataset, raw: &Dataset) -> Result<()> {
    if emb.is_empty() || raw.is_empty() {
        return Err(Error::Empty("distillation data"));
    }
    if emb.len() != raw.len() {
        return Err(Error::Dimension {
            context: "embedding records vs raw samples",
            expected: raw.len(),
            found: emb.len(),
        });
    }
    if emb.records().iter().enumerate().any(|(i, r)| r.id as usize != i) {
        return Err(Error::invalid("embedding ids must follow raw dataset order"));
    }
    Ok(())
}

fn diverged(stage: &'static str, step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { stage, step },
        other => other,
    }
}

/// Trains a headless student extractor against teacher embeddings and
/// labels with `α·MSE + CE`. The matching layer and training head exist
/// only inside this function; the returned network has the student's
/// original architecture.
pub fn run_distillation(
    student: &BlockNet,
    emb: &EmbeddingDataset,
    raw: &Dataset,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<BlockNet> {
    cfg.validate()?;
    check_alignment(emb, raw)?;
    let mut student = student.without_head();
    let mut adapt = adapter(student.feature_shape()?, emb.width(), raw.classes(), stream_seed(seed, 2))?;
    let mut rng = seeded_rng(stream_seed(seed, 3));
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut s_tape = GradientTape::zeros_like(&student);
            let mut a_tape = GradientTape::zeros_like(&adapt);
            for &i in batch {
                let s_acts = student.forward(raw.input(i))?;
                let a_acts = adapt.forward(s_acts.features())?;
                let g = distill_loss_grad(
                    a_acts.features().data(),
                    emb.records()[i].embedding.data(),
                    a_acts.logits().expect("adapter head").data(),
                    raw.label(i) as usize,
                    cfg.alpha,
                )?;
                if !g.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { stage: "distill", step });
                }
                let at = adapt.backward_with_features(
                    Some(&Tensor::vector(g.logits)),
                    Some(&Tensor::vector(g.feature)),
                    &a_acts,
                )?;
                let st = student.backward(&at.input_grad, &s_acts)?;
                a_tape.accumulate(&at)?;
                s_tape.accumulate(&st)?;
            }
            let inv = 1.0 / batch.len() as f64;
            a_tape.scale(inv);
            s_tape.scale(inv);
            if let Some(c) = cfg.max_grad_norm {
                clip_global_norm(&mut [&mut a_tape, &mut s_tape], c);
            }
            adapt.sgd_step(&a_tape, cfg.lr).map_err(diverged("distill", step))?;
            student.sgd_step(&s_tape, cfg.lr).map_err(diverged("distill", step))?;
            step += 1;
        }
    }
    Ok(student)
}

/// Fine-tunes the student so that both its prefix `blocks[..split_index]`
/// and the whole extractor match the teacher and classify the public
/// labels, each through its own matching layer and training head.
pub fn joint_train(
    student: &BlockNet,
    split_index: usize,
    emb: &EmbeddingDataset,
    raw: &Dataset,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<BlockNet> {
    cfg.validate()?;
    check_alignment(emb, raw)?;
    let (mut part, mut rest) = student.without_head().split_at(split_index)?;
    let mut part_adapt = adapter(rest.input_shape().to_vec(), emb.width(), raw.classes(), stream_seed(seed, 4))?;
    let mut full_adapt = adapter(rest.feature_shape()?, emb.width(), raw.classes(), stream_seed(seed, 5))?;
    let mut rng = seeded_rng(stream_seed(seed, 6));
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut tapes = [
                GradientTape::zeros_like(&part),
                GradientTape::zeros_like(&rest),
                GradientTape::zeros_like(&part_adapt),
                GradientTape::zeros_like(&full_adapt),
            ];
            for &i in batch {
                let p_acts = part.forward(raw.input(i))?;
                let r_acts = rest.forward(p_acts.features())?;
                let pa = part_adapt.forward(p_acts.features())?;
                let fa = full_adapt.forward(r_acts.features())?;
                let g = joint_loss_grad(
                    JointTerms {
                        part_feat: pa.features().data(),
                        full_feat: fa.features().data(),
                        teacher_feat: emb.records()[i].embedding.data(),
                        part_out: pa.logits().expect("adapter head").data(),
                        full_out: fa.logits().expect("adapter head").data(),
                        label: raw.label(i) as usize,
                    },
                    cfg.alpha,
                    cfg.beta,
                )?;
                if !g.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { stage: "joint-train", step });
                }
                let fat = full_adapt.backward_with_features(
                    Some(&Tensor::vector(g.full_logits)),
                    Some(&Tensor::vector(g.full_feat)),
                    &fa,
                )?;
                let pat = part_adapt.backward_with_features(
                    Some(&Tensor::vector(g.part_logits)),
                    Some(&Tensor::vector(g.part_feat)),
                    &pa,
                )?;
                let rt = rest.backward(&fat.input_grad, &r_acts)?;
                let mut boundary_grad = rt.input_grad.clone();
                boundary_grad.add_assign(&pat.input_grad)?;
                let pt = part.backward(&boundary_grad, &p_acts)?;
                for (tape, t) in tapes.iter_mut().zip([&pt, &rt, &pat, &fat]) {
                    tape.accumulate(t)?;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            tapes.iter_mut().for_each(|t| t.scale(inv));
            if let Some(c) = cfg.max_grad_norm {
                let [a, b, c2, d] = &mut tapes;
                clip_global_norm(&mut [a, b, c2, d], c);
            }
            let err = diverged("joint-train", step);
            part.sgd_step(&tapes[0], cfg.lr).map_err(&err)?;
            rest.sgd_step(&tapes[1], cfg.lr).map_err(&err)?;
            part_adapt.sgd_step(&tapes[2], cfg.lr).map_err(&err)?;
            full_adapt.sgd_step(&tapes[3], cfg.lr).map_err(&err)?;
            step += 1;
        }
    }
    BlockNet::concat(&part, &rest)
}
