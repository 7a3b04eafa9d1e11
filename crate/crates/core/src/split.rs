//! Fused-score search for the part/full segmentation point.
//!
//! Every prefix `blocks[..i]` in the candidate range is scored by accuracy
//! (a freshly trained linear probe on the prefix output) and MACs. Raw
//! series are collected first, normalized across the candidate set with
//! min-max, and combined into
//! `F = 3xyz / (x + y + z)` where `x = 1 − R_A^norm`, `y = G^norm`,
//! `z = R_M^norm`. The highest score wins; ties go to the smaller index.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::distill::stream_seed;
use crate::net::BlockNet;
use crate::probe::{train_probe, ProbeConfig};
use crate::{Error, Result};

/// Scores of one candidate prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMetrics {
    /// Prefix length in blocks.
    pub index: usize,
    pub accuracy: f64,
    pub macs: u64,
    /// `None` for the first candidate.
    pub delta_acc: Option<f64>,
    pub delta_mac: Option<i64>,
    /// `ΔA / ΔM`; `±∞` when `ΔM = 0` and `ΔA ≠ 0`.
    pub gain: Option<f64>,
    pub gain_norm: f64,
    pub acc_loss_ratio: f64,
    pub acc_loss_ratio_norm: f64,
    pub mac_reduction_ratio: f64,
    pub mac_reduction_ratio_norm: f64,
    pub fused_score: f64,
    /// The prefix scored higher than the full extractor (`R_A < 0`).
    pub beats_full: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub candidates: Vec<CandidateMetrics>,
    pub optimal_index: usize,
    /// Inclusive prefix lengths considered.
    pub candidate_range: (usize, usize),
    pub accuracy_full: f64,
    pub macs_full: u64,
    /// How accuracies were measured, for the report header.
    pub accuracy_source: &'static str,
}

impl SplitReport {
    pub fn optimal(&self) -> &CandidateMetrics {
        self.candidates
            .iter()
            .find(|c| c.index == self.optimal_index)
            .expect("optimal index is one of the candidates")
    }
}

/// `3xyz / (x + y + z)`, or 0 when the denominator vanishes.
pub fn fused_score(one_minus_ra_norm: f64, gain_norm: f64, rm_norm: f64) -> Result<f64> {
    let (x, y, z) = (one_minus_ra_norm, gain_norm, rm_norm);
    if x < 0.0 || y < 0.0 || z < 0.0 || !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(Error::invalid("fused score arguments must be finite and non-negative"));
    }
    let denom = x + y + z;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(3.0 * x * y * z / denom)
}

/// `(v − min) / (max − min)`; an all-equal series maps to 0.5.
///
/// Infinite entries are pinned (`+∞ → 1`, `−∞ → 0`) and the finite entries
/// are normalized among themselves.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("normalization input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFiniteValue("normalization input"));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(values
        .iter()
        .map(|&v| {
            if v == f64::INFINITY {
                1.0
            } else if v == f64::NEG_INFINITY {
                0.0
            } else if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.5
            }
        })
        .collect())
}

/// Candidate range covering 25%–85% of the block count.
pub fn default_range(blocks: usize) -> (usize, usize) {
    let lo = (libm::ceil(blocks as f64 * 0.25) as usize).max(1);
    let hi = (libm::floor(blocks as f64 * 0.85) as usize).max(lo).min(blocks);
    (lo.min(hi), hi)
}

/// Two-pass scoring of measured `(index, accuracy, macs)` profiles.
pub fn score_candidates(profile: &[(usize, f64, u64)], accuracy_full: f64, macs_full: u64) -> Result<SplitReport> {
    if profile.len() < 2 {
        return Err(Error::invalid("split search needs at least two candidates"));
    }
    if profile.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("candidate indices must be strictly increasing"));
    }
    let n = profile.len();
    let mut delta_acc = Vec::with_capacity(n);
    let mut delta_mac = Vec::with_capacity(n);
    let mut gain = Vec::with_capacity(n);
    for i in 0..n {
        if i == 0 {
            delta_acc.push(None);
            delta_mac.push(None);
            gain.push(None);
            continue;
        }
        let da = profile[i].1 - profile[i - 1].1;
        let dm = profile[i].2 as i64 - profile[i - 1].2 as i64;
        let g = if dm != 0 {
            da / dm as f64
        } else if da > 0.0 {
            f64::INFINITY
        } else if da < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        delta_acc.push(Some(da));
        delta_mac.push(Some(dm));
        gain.push(Some(g));
    }
    let ra: Vec<f64> = profile
        .iter()
        .map(|&(_, a, _)| if accuracy_full > 0.0 { (accuracy_full - a) / accuracy_full } else { 0.0 })
        .collect();
    let rm: Vec<f64> = profile
        .iter()
        .map(|&(_, _, m)| if macs_full > 0 { (macs_full as f64 - m as f64) / macs_full as f64 } else { 0.0 })
        .collect();
    let ra_norm = min_max_normalize(&ra)?;
    let rm_norm = min_max_normalize(&rm)?;
    let defined: Vec<f64> = gain.iter().flatten().copied().collect();
    let mut gain_norm = alloc::vec![0.0];
    gain_norm.extend(min_max_normalize(&defined)?);

    let mut candidates = Vec::with_capacity(n);
    let mut best = 0;
    let mut best_score = 0.0;
    for i in 0..n {
        let score = fused_score(1.0 - ra_norm[i], gain_norm[i], rm_norm[i])?;
        if score > best_score {
            best_score = score;
            best = i;
        }
        candidates.push(CandidateMetrics {
            index: profile[i].0,
            accuracy: profile[i].1,
            macs: profile[i].2,
            delta_acc: delta_acc[i],
            delta_mac: delta_mac[i],
            gain: gain[i],
            gain_norm: gain_norm[i],
            acc_loss_ratio: ra[i],
            acc_loss_ratio_norm: ra_norm[i],
            mac_reduction_ratio: rm[i],
            mac_reduction_ratio_norm: rm_norm[i],
            fused_score: score,
            beats_full: ra[i] < 0.0,
        });
    }
    Ok(SplitReport {
        optimal_index: profile[best].0,
        candidate_range: (profile[0].0, profile[n - 1].0),
        candidates,
        accuracy_full,
        macs_full,
        accuracy_source: "linear-probe",
    })
}

/// Labelled data for the temporary probes: train on one split, score on the other.
#[derive(Debug, Clone, Copy)]
pub struct ProbeData<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

fn prefix_features(net: &BlockNet, data: &Dataset, indices: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out: Vec<Vec<Vec<f64>>> = indices.iter().map(|_| Vec::with_capacity(data.len())).collect();
    for x in data.inputs() {
        let acts = net.forward(x)?;
        for (slot, &i) in out.iter_mut().zip(indices) {
            slot.push(acts.boundary(i).expect("index checked").data().to_vec());
        }
    }
    Ok(out)
}

/// Per-candidate `(index, accuracy, macs)` plus the full extractor's `(accuracy, macs)`.
pub type CandidateEvaluation = (Vec<(usize, f64, u64)>, (f64, u64));

/// Probe accuracy and MACs of every prefix in `range`, followed by the
/// full extractor's `(accuracy, macs)`.
pub fn evaluate_candidates(
    net: &BlockNet,
    probe: ProbeData<'_>,
    range: (usize, usize),
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<CandidateEvaluation> {
    let extractor = net.without_head();
    let n = extractor.blocks().len();
    let (lo, hi) = range;
    if lo > hi {
        return Err(Error::Empty("candidate range"));
    }
    if lo == 0 || hi > n {
        return Err(Error::IndexOutOfRange { index: hi.max(lo), len: n });
    }
    if probe.train.is_empty() || probe.test.is_empty() {
        return Err(Error::Empty("probe dataset"));
    }
    let mut indices: Vec<usize> = (lo..=hi).collect();
    if hi != n {
        indices.push(n);
    }
    let train = prefix_features(&extractor, probe.train, &indices)?;
    let test = prefix_features(&extractor, probe.test, &indices)?;
    let mut scored = Vec::with_capacity(indices.len());
    for (k, &i) in indices.iter().enumerate() {
        let p = train_probe(&train[k], probe.train.labels(), probe.train.classes(), cfg, stream_seed(seed, i as u64))?;
        let acc = p.accuracy(&test[k], probe.test.labels())?;
        let (part, _) = extractor.split_at(i)?;
        scored.push((i, acc, part.macs()));
    }
    let (_, a_full, m_full) = *scored.last().expect("non-empty");
    if hi != n {
        scored.pop();
    }
    Ok((scored, (a_full, m_full)))
}

pub fn find_optimal_split(
    net: &BlockNet,
    probe: ProbeData<'_>,
    range: (usize, usize),
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<SplitReport> {
    if range.1 < range.0 + 1 {
        return Err(Error::invalid("split search needs at least two candidates"));
    }
    let (profile, (a_full, m_full)) = evaluate_candidates(net, probe, range, cfg, seed)?;
    score_candidates(&profile, a_full, m_full)
}

/// `(blocks[..index], blocks[index..])`; the head stays with the remainder.
pub fn split_model(net: &BlockNet, index: usize) -> Result<(BlockNet, BlockNet)> {
    net.split_at(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_score_examples() {
        assert_eq!(fused_score(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(fused_score(0.0, 0.7, 0.9).unwrap(), 0.0);
        assert_eq!(fused_score(0.3, 0.0, 0.9).unwrap(), 0.0);
        assert_eq!(fused_score(0.0, 0.0, 0.0).unwrap(), 0.0);
        // 3·0.125 / 1.5
        assert!((fused_score(0.5, 0.5, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(fused_score(-0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&[2.0, 4.0, 6.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[3.0, 3.0]).unwrap(), [0.5, 0.5]);
        let spanning = [0.0, 0.25, 1.0];
        assert_eq!(min_max_normalize(&spanning).unwrap(), spanning);
        assert_eq!(min_max_normalize(&[1.0, f64::INFINITY, 3.0]).unwrap(), [0.0, 1.0, 1.0]);
        assert!(min_max_normalize(&[]).is_err());
    }

    #[test]
    fn default_range_covers_middle_blocks() {
        assert_eq!(default_range(20), (5, 17));
        assert_eq!(default_range(7), (2, 5));
        assert_eq!(default_range(1), (1, 1));
    }

    #[test]
    fn dominant_candidate_wins() {
        // index 3: best accuracy per MAC step, lowest accuracy loss, fewest MACs among the others
        let profile = [(2, 0.50, 100), (3, 0.85, 110), (4, 0.86, 400), (5, 0.87, 900)];
        let report = score_candidates(&profile, 0.9, 1000).unwrap();
        assert_eq!(report.optimal_index, 3);
        assert_eq!(report.candidate_range, (2, 5));
        assert_eq!(report.candidates[0].gain_norm, 0.0);
        assert!(report.candidates[0].delta_acc.is_none());
    }

    #[test]
    fn all_zero_scores_fall_back_to_first_candidate() {
        // the last candidate equals the full model, so its MAC reduction is zero
        let profile = [(1, 0.5, 10), (2, 0.9, 20)];
        let report = score_candidates(&profile, 0.9, 20).unwrap();
        assert!(report.candidates.iter().all(|c| c.fused_score == 0.0));
        assert_eq!(report.optimal_index, 1);
    }

    #[test]
    fn zero_mac_step_counts_as_maximal_gain() {
        let profile = [(1, 0.4, 10), (2, 0.6, 10), (3, 0.7, 30)];
        let report = score_candidates(&profile, 0.8, 60).unwrap();
        assert_eq!(report.candidates[1].gain, Some(f64::INFINITY));
        assert_eq!(report.candidates[1].gain_norm, 1.0);
    }

    #[test]
    fn part_better_than_full_is_flagged() {
        let profile = [(1, 0.4, 10), (2, 0.9, 20)];
        let report = score_candidates(&profile, 0.8, 40).unwrap();
        assert!(report.candidates[1].beats_full);
        assert!(!report.candidates[0].beats_full);
    }

    #[test]
    fn rejects_single_candidate() {
        assert!(score_candidates(&[(1, 0.5, 10)], 0.5, 10).is_err());
    }
}
