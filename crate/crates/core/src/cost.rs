//! MAC-based proxy for inference and training energy.

use crate::{Error, Result};

/// Default energy per MAC; 1.0 reports costs in MAC units.
pub const DEFAULT_JOULES_PER_MAC: f64 = 1.0;

fn check_pair(mac_part: u64, mac_full: u64) -> Result<()> {
    if mac_part > mac_full {
        return Err(Error::invalid("part cost exceeds full cost"));
    }
    Ok(())
}

/// Mean MACs per sample when a fraction `ratio` of samples exits early.
pub fn expected_cost(mac_part: u64, mac_full: u64, ratio: f64) -> Result<f64> {
    check_pair(mac_part, mac_full)?;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid("ratio must lie in [0, 1]"));
    }
    Ok(mac_part as f64 + (1.0 - ratio) * (mac_full - mac_part) as f64)
}

/// Total MACs over `total` samples of which `exited` exit early, in exact
/// integer arithmetic.
pub fn expected_total(mac_part: u64, mac_full: u64, exited: usize, total: usize) -> Result<u64> {
    check_pair(mac_part, mac_full)?;
    if exited > total {
        return Err(Error::invalid("more early exits than samples"));
    }
    Ok(exited as u64 * mac_part + (total - exited) as u64 * mac_full)
}

/// Percentage saved by `new` relative to `baseline`.
pub fn savings(baseline: f64, new: f64) -> Result<f64> {
    if !(baseline > 0.0) || !baseline.is_finite() || !new.is_finite() {
        return Err(Error::invalid("baseline cost must be positive and finite"));
    }
    Ok(100.0 * (baseline - new) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub mac_part: u64,
    pub mac_full: u64,
    pub ratio: f64,
    pub expected_macs: f64,
    pub proxy_energy: f64,
    pub savings_percent: f64,
}

pub fn cost_report(mac_part: u64, mac_full: u64, ratio: f64, joules_per_mac: f64) -> Result<CostReport> {
    if !(joules_per_mac > 0.0) || !joules_per_mac.is_finite() {
        return Err(Error::invalid("joules per MAC must be positive"));
    }
    let expected_macs = expected_cost(mac_part, mac_full, ratio)?;
    Ok(CostReport {
        mac_part,
        mac_full,
        ratio,
        expected_macs,
        proxy_energy: expected_macs * joules_per_mac,
        savings_percent: savings(mac_full as f64, expected_macs)?,
    })
}

/// On-device training schemes compared by cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingPlan {
    /// Frozen extractor, only the dense head is updated.
    ClassifierOnly,
    /// Head plus an auxiliary trainable module costing `aux_macs` per
    /// iteration (forward and backward together).
    WithAuxiliary { aux_macs: u64 },
}

/// Training MACs over `iterations` single-sample steps. A head step costs
/// one forward plus one weight-gradient pass of the same size.
pub fn training_cost(extractor_macs: u64, head_macs: u64, plan: TrainingPlan, iterations: u64) -> Result<u64> {
    if iterations == 0 {
        return Err(Error::invalid("iterations must be positive"));
    }
    let aux = match plan {
        TrainingPlan::ClassifierOnly => 0,
        TrainingPlan::WithAuxiliary { aux_macs } => aux_macs,
    };
    Ok(iterations * (extractor_macs + 2 * head_macs + aux))
}

/// MACs of stage-training both classifiers, with the part prefix run once
/// per iteration.
pub fn stage_training_cost(
    part_extractor: u64,
    part_head: u64,
    remainder: u64,
    full_head: u64,
    iterations: u64,
) -> Result<u64> {
    if iterations == 0 {
        return Err(Error::invalid("iterations must be positive"));
    }
    Ok(iterations * (part_extractor + 2 * part_head + remainder + 2 * full_head))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn expected_cost_examples() {
        assert_eq!(expected_cost(100, 300, 0.5).unwrap(), 200.0);
        assert_eq!(expected_cost(100, 300, 1.0).unwrap(), 100.0);
        assert_eq!(expected_cost(100, 300, 0.0).unwrap(), 300.0);
        assert!(expected_cost(100, 300, 1.5).is_err());
        assert!(expected_cost(100, 300, -0.1).is_err());
        assert!(expected_cost(400, 300, 0.5).is_err());
    }

    #[test]
    fn savings_examples() {
        assert!(close(savings(10.97, 9.38).unwrap(), 14.49, 0.005));
        assert!(close(savings(5.42, 4.66).unwrap(), 14.02, 0.005));
        assert_eq!(savings(3.0, 3.0).unwrap(), 0.0);
        assert!(savings(0.0, 1.0).is_err());
        assert!(savings(-1.0, 1.0).is_err());
    }

    #[test]
    fn total_matches_mean() {
        for exited in 0..=10 {
            let total = expected_total(40, 90, exited, 10).unwrap();
            let mean = expected_cost(40, 90, exited as f64 / 10.0).unwrap();
            assert!(close(total as f64, 10.0 * mean, 1e-9));
        }
        assert!(expected_total(40, 90, 11, 10).is_err());
    }

    #[test]
    fn report_fields() {
        let r = cost_report(100, 300, 0.5, 2.0).unwrap();
        assert_eq!(r.expected_macs, 200.0);
        assert_eq!(r.proxy_energy, 400.0);
        assert!(close(r.savings_percent, 100.0 / 3.0, 1e-12));
        assert!(cost_report(100, 300, 0.5, 0.0).is_err());
    }

    #[test]
    fn training_costs() {
        let plain = training_cost(1000, 50, TrainingPlan::ClassifierOnly, 4000).unwrap();
        assert_eq!(plain, 4000 * 1100);
        let heavy = training_cost(1000, 50, TrainingPlan::WithAuxiliary { aux_macs: 1 }, 4000).unwrap();
        assert!(plain < heavy);
        assert!(training_cost(1, 1, TrainingPlan::ClassifierOnly, 0).is_err());
        assert_eq!(stage_training_cost(100, 10, 200, 20, 3).unwrap(), 3 * (100 + 20 + 200 + 40));
    }

    proptest::proptest! {
        #[test]
        fn expected_cost_linear_and_bounded(part in 0u64..10_000, extra in 0u64..10_000, r in 0.0f64..=1.0) {
            let full = part + extra;
            let e = expected_cost(part, full, r).unwrap();
            proptest::prop_assert!(e >= part as f64 - 1e-9 && e <= full as f64 + 1e-9);
            let lo = expected_cost(part, full, 0.0).unwrap();
            let hi = expected_cost(part, full, 1.0).unwrap();
            proptest::prop_assert!((e - (lo + r * (hi - lo))).abs() < 1e-6);
        }

        #[test]
        fn savings_complement(base in 0.1f64..1e6, frac in 0.0f64..1.0) {
            let new = base * frac;
            let s = savings(base, new).unwrap();
            proptest::prop_assert!((new / base - (1.0 - s / 100.0)).abs() < 1e-12);
        }
    }
}
