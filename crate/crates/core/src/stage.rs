//! Confidence-based routing between the part and full models.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::device::DeviceClassifier;
use crate::net::Extractor;
use crate::tensor::Tensor;
use crate::{cost, math, seeded_rng, Error, Result};

const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Maximum class probability of a softmax output.
pub fn confidence(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::NotSimplex);
    }
    let mut sum = 0.0;
    let mut best = 0.0f64;
    for &p in probs {
        if !p.is_finite() || !(-SIMPLEX_TOLERANCE..=1.0 + SIMPLEX_TOLERANCE).contains(&p) {
            return Err(Error::NotSimplex);
        }
        sum += p;
        best = best.max(p);
    }
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::NotSimplex);
    }
    Ok(best)
}

/// Median of a sorted slice: the middle element, or the mean of the two
/// middle elements for even lengths.
pub fn sorted_median(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len();
    if n == 0 {
        return Err(Error::Empty("calibration samples"));
    }
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Confidences, ascending.
    pub confidences: Vec<f64>,
    pub median: f64,
    pub adjust_factor: f64,
    pub threshold: f64,
    pub n_samples: usize,
}

impl CalibrationResult {
    pub fn from_confidences(mut confidences: Vec<f64>, adjust_factor: f64) -> Result<Self> {
        if !(adjust_factor > 0.0) || !adjust_factor.is_finite() {
            return Err(Error::invalid("adjust factor must be positive"));
        }
        if confidences.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteValue("confidence"));
        }
        confidences.sort_by(f64::total_cmp);
        let median = sorted_median(&confidences)?;
        Ok(CalibrationResult {
            n_samples: confidences.len(),
            confidences,
            median,
            adjust_factor,
            threshold: median * adjust_factor,
        })
    }

    /// Same calibration population with a different factor.
    pub fn with_factor(&self, adjust_factor: f64) -> Result<Self> {
        Self::from_confidences(self.confidences.clone(), adjust_factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedSample {
    pub confidence: f64,
    pub exited_early: bool,
    pub prediction: usize,
    pub label: Option<u32>,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingOutcome {
    pub samples: Vec<RoutedSample>,
    /// Fraction of samples answered by the part model.
    pub ratio: f64,
}

impl RoutingOutcome {
    fn new(samples: Vec<RoutedSample>) -> Self {
        let exited = samples.iter().filter(|s| s.exited_early).count();
        let ratio = if samples.is_empty() {
            0.0
        } else {
            exited as f64 / samples.len() as f64
        };
        RoutingOutcome { samples, ratio }
    }

    pub fn exited(&self) -> usize {
        self.samples.iter().filter(|s| s.exited_early).count()
    }

    pub fn total_macs(&self) -> u64 {
        self.samples.iter().map(|s| s.macs).sum()
    }

    /// Accuracy over samples that carry a label.
    pub fn accuracy(&self) -> Option<f64> {
        let labelled: Vec<_> = self.samples.iter().filter_map(|s| s.label.map(|l| (s.prediction, l))).collect();
        if labelled.is_empty() {
            return None;
        }
        let correct = labelled.iter().filter(|(p, l)| *p == *l as usize).count();
        Some(correct as f64 / labelled.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    pub threshold: f64,
    pub ratio: f64,
    pub accuracy: Option<f64>,
    pub expected_macs: f64,
}

/// Part and full models sharing a split boundary.
#[derive(Debug, Clone, Copy)]
pub struct StagePipeline<'a, P: Extractor + ?Sized, R: Extractor + ?Sized> {
    pub part: &'a P,
    pub remainder: &'a R,
    pub part_classifier: &'a DeviceClassifier,
    pub full_classifier: &'a DeviceClassifier,
}

struct PartPass {
    boundary: Tensor,
    confidence: f64,
    prediction: usize,
}

impl<'a, P: Extractor + ?Sized, R: Extractor + ?Sized> StagePipeline<'a, P, R> {
    pub fn new(
        part: &'a P,
        remainder: &'a R,
        part_classifier: &'a DeviceClassifier,
        full_classifier: &'a DeviceClassifier,
    ) -> Result<Self> {
        let boundary: usize = part.output_shape().iter().product();
        if boundary != part_classifier.feature_dim() {
            return Err(Error::Dimension {
                context: "part classifier input",
                expected: boundary,
                found: part_classifier.feature_dim(),
            });
        }
        let features: usize = remainder.output_shape().iter().product();
        if features != full_classifier.feature_dim() {
            return Err(Error::Dimension {
                context: "full classifier input",
                expected: features,
                found: full_classifier.feature_dim(),
            });
        }
        if part_classifier.classes() != full_classifier.classes() {
            return Err(Error::ArchitectureMismatch("part and full classifiers disagree on classes"));
        }
        Ok(StagePipeline {
            part,
            remainder,
            part_classifier,
            full_classifier,
        })
    }

    /// MACs of an early exit: part extractor and part head.
    pub fn part_macs(&self) -> u64 {
        self.part.extractor_macs() + self.part_classifier.macs()
    }

    /// MACs of a full-path sample: the part path plus remainder and full head.
    pub fn full_macs(&self) -> u64 {
        self.part_macs() + self.remainder.extractor_macs() + self.full_classifier.macs()
    }

    fn part_pass(&self, input: &Tensor) -> Result<PartPass> {
        let boundary = self.part.extract(input)?;
        let probs = self.part_classifier.probabilities(&boundary.clone().flatten())?;
        Ok(PartPass {
            confidence: confidence(probs.data())?,
            prediction: math::argmax(probs.data()),
            boundary,
        })
    }

    fn finish(&self, pass: PartPass, exit: bool, label: Option<u32>) -> Result<RoutedSample> {
        if exit {
            return Ok(RoutedSample {
                confidence: pass.confidence,
                exited_early: true,
                prediction: pass.prediction,
                label,
                macs: self.part_macs(),
            });
        }
        let features = self.remainder.extract(&pass.boundary)?.flatten();
        Ok(RoutedSample {
            confidence: pass.confidence,
            exited_early: false,
            prediction: self.full_classifier.predict(&features)?,
            label,
            macs: self.full_macs(),
        })
    }

    /// Part-model confidence of one input.
    pub fn confidence_of(&self, input: &Tensor) -> Result<f64> {
        Ok(self.part_pass(input)?.confidence)
    }

    /// Median-based threshold from `samples`.
    pub fn calibrate(&self, samples: &[Tensor], adjust_factor: f64) -> Result<CalibrationResult> {
        if samples.is_empty() {
            return Err(Error::Empty("calibration samples"));
        }
        let confidences = samples.iter().map(|x| self.confidence_of(x)).collect::<Result<Vec<_>>>()?;
        CalibrationResult::from_confidences(confidences, adjust_factor)
    }

    /// Exits early when the part confidence reaches the threshold;
    /// otherwise continues from the boundary activation.
    pub fn route(&self, threshold: f64, inputs: &[Tensor], labels: Option<&[u32]>) -> Result<RoutingOutcome> {
        check_labels(inputs, labels)?;
        let samples = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let pass = self.part_pass(x)?;
                let exit = !(pass.confidence < threshold);
                self.finish(pass, exit, labels.map(|l| l[i]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RoutingOutcome::new(samples))
    }

    /// Baseline that sends a uniformly random subset of
    /// `round(ratio * M)` samples down the early exit.
    pub fn route_random(&self, ratio: f64, inputs: &[Tensor], labels: Option<&[u32]>, seed: u64) -> Result<RoutingOutcome> {
        check_labels(inputs, labels)?;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::invalid("ratio must lie in [0, 1]"));
        }
        let exits = math::round(ratio * inputs.len() as f64) as usize;
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut seeded_rng(seed));
        let mut exit = alloc::vec![false; inputs.len()];
        for &i in &order[..exits] {
            exit[i] = true;
        }
        let samples = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let pass = self.part_pass(x)?;
                self.finish(pass, exit[i], labels.map(|l| l[i]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RoutingOutcome::new(samples))
    }

    /// One routing pass per adjust factor.
    pub fn sweep_ratio(
        &self,
        calibration: &CalibrationResult,
        inputs: &[Tensor],
        labels: Option<&[u32]>,
        factors: &[f64],
    ) -> Result<Vec<SweepRow>> {
        factors
            .iter()
            .map(|&f| {
                let calib = calibration.with_factor(f)?;
                let outcome = self.route(calib.threshold, inputs, labels)?;
                Ok(SweepRow {
                    factor: f,
                    threshold: calib.threshold,
                    ratio: outcome.ratio,
                    accuracy: outcome.accuracy(),
                    expected_macs: cost::expected_cost(self.part_macs(), self.full_macs(), outcome.ratio)?,
                })
            })
            .collect()
    }
}

fn check_labels(inputs: &[Tensor], labels: Option<&[u32]>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Empty("routing inputs"));
    }
    if let Some(l) = labels {
        if l.len() != inputs.len() {
            return Err(Error::Dimension {
                context: "routing labels",
                expected: inputs.len(),
                found: l.len(),
            });
        }
    }
    Ok(())
}
