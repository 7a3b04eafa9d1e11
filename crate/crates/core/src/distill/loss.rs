//! Objectives of the cloud side, each with its analytic gradient.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

use super::SslConfig;

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { context, expected, found });
    }
    Ok(())
}

/// Softmax cross-entropy `−log softmax(logits)[label]` and its logit gradient
/// `softmax(logits) − onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if label >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: label,
            len: logits.len(),
        });
    }
    let log_p = math::log_softmax(logits, 1.0);
    let mut grad: Vec<f64> = log_p.iter().map(|&lp| math::exp(lp)).collect();
    grad[label] -= 1.0;
    Ok((-log_p[label], grad))
}

pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    cross_entropy_grad(logits, label).map(|(l, _)| l)
}

/// Mean squared error and its gradient with respect to `p`.
pub fn mse_grad(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("mse operands", q.len(), p.len())?;
    if p.is_empty() {
        return Err(Error::Empty("mse operands"));
    }
    let n = p.len() as f64;
    let loss = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let grad = p.iter().zip(q).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok((loss, grad))
}

pub fn mse(p: &[f64], q: &[f64]) -> Result<f64> {
    mse_grad(p, q).map(|(l, _)| l)
}

/// Guide/exploration cross-entropy
/// `−Σ softmax(g/τ_g) · log softmax(e/τ_e)` and its gradient with respect to
/// the exploration logits. The guide side is a constant target.
pub fn ssl_loss_grad(guide_logits: &[f64], explore_logits: &[f64], cfg: &SslConfig) -> Result<(f64, Vec<f64>)> {
    check_len("ssl logits", guide_logits.len(), explore_logits.len())?;
    if guide_logits.is_empty() {
        return Err(Error::Empty("ssl logits"));
    }
    if !(cfg.tau_guide > 0.0 && cfg.tau_explore > 0.0) {
        return Err(Error::invalid("ssl temperatures must be positive"));
    }
    let target = math::softmax(guide_logits, cfg.tau_guide);
    let log_q = math::log_softmax(explore_logits, cfg.tau_explore);
    let loss = -target.iter().zip(&log_q).map(|(t, lq)| t * lq).sum::<f64>();
    let grad = target
        .iter()
        .zip(&log_q)
        .map(|(t, lq)| (math::exp(*lq) - t) / cfg.tau_explore)
        .collect();
    Ok((loss, grad))
}

pub fn ssl_loss(guide_logits: &[f64], explore_logits: &[f64], cfg: &SslConfig) -> Result<f64> {
    ssl_loss_grad(guide_logits, explore_logits, cfg).map(|(l, _)| l)
}

/// Per-sample distillation loss and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillGrad {
    pub loss: f64,
    /// With respect to the matched student features.
    pub feature: Vec<f64>,
    /// With respect to the student output logits.
    pub logits: Vec<f64>,
}

/// `α·MSE(p, q) + CE(student_out, label)` with `p` already matched to the
/// teacher width.
pub fn distill_loss_grad(
    student_feat: &[f64],
    teacher_feat: &[f64],
    student_out: &[f64],
    label: usize,
    alpha: f64,
) -> Result<DistillGrad> {
    check_weight(alpha)?;
    let (m, mut gm) = mse_grad(student_feat, teacher_feat)?;
    let (ce, gl) = cross_entropy_grad(student_out, label)?;
    gm.iter_mut().for_each(|g| *g *= alpha);
    Ok(DistillGrad {
        loss: alpha * m + ce,
        feature: gm,
        logits: gl,
    })
}

pub fn distill_loss(
    student_feat: &[f64],
    teacher_feat: &[f64],
    student_out: &[f64],
    label: usize,
    alpha: f64,
) -> Result<f64> {
    distill_loss_grad(student_feat, teacher_feat, student_out, label, alpha).map(|g| g.loss)
}

/// Inputs of the joint part/full objective for one sample.
#[derive(Debug, Clone, Copy)]
pub struct JointTerms<'a> {
    pub part_feat: &'a [f64],
    pub full_feat: &'a [f64],
    pub teacher_feat: &'a [f64],
    pub part_out: &'a [f64],
    pub full_out: &'a [f64],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGrad {
    pub loss: f64,
    pub part_feat: Vec<f64>,
    pub full_feat: Vec<f64>,
    pub part_logits: Vec<f64>,
    pub full_logits: Vec<f64>,
}

/// `α·MSE(p_F, q) + β·MSE(p_P, q) + CE(full_out) + CE(part_out)`.
pub fn joint_loss_grad(terms: JointTerms<'_>, alpha: f64, beta: f64) -> Result<JointGrad> {
    check_weight(alpha)?;
    check_weight(beta)?;
    let (mf, mut gf) = mse_grad(terms.full_feat, terms.teacher_feat)?;
    let (mp, mut gp) = mse_grad(terms.part_feat, terms.teacher_feat)?;
    let (cf, glf) = cross_entropy_grad(terms.full_out, terms.label)?;
    let (cp, glp) = cross_entropy_grad(terms.part_out, terms.label)?;
    gf.iter_mut().for_each(|g| *g *= alpha);
    gp.iter_mut().for_each(|g| *g *= beta);
    Ok(JointGrad {
        loss: alpha * mf + beta * mp + cf + cp,
        part_feat: gp,
        full_feat: gf,
        part_logits: glp,
        full_logits: glf,
    })
}

pub fn joint_loss(terms: JointTerms<'_>, alpha: f64, beta: f64) -> Result<f64> {
    joint_loss_grad(terms, alpha, beta).map(|g| g.loss)
}

fn check_weight(w: f64) -> Result<()> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::invalid("loss weights must be finite and non-negative"));
    }
    Ok(())
}
