//! Equal-width binning of confidence and uncertainty, per-bin statistics,
//! and the two scalar miscalibration metrics built on them.
//!
//! ECE bins on confidence and weights the per-bin |accuracy - confidence|
//! gap by bin occupancy. UCE does the same on the uncertainty axis with the
//! |error rate - mean uncertainty| gap. A perfectly calibrated model scores
//! zero on both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{mc_integrate, normalized_entropy, LogitSampleSet};

/// Default bin count for ECE/UCE and reliability tables.
pub const DEFAULT_BINS: usize = 15;

/// One scored prediction: what the model claimed and what was true.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    /// `max p` of the predictive distribution, in `[0, 1]`.
    pub confidence: f64,
    /// Normalized entropy of the predictive distribution, in `[0, 1]`.
    pub uncertainty: f64,
    /// Predicted class index.
    pub predicted: usize,
    /// True class index.
    pub label: usize,
}

impl PredictionRecord {
    pub fn new(confidence: f64, uncertainty: f64, predicted: usize, label: usize) -> Result<Self> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::OutOfUnitInterval {
                value: confidence,
                context: "confidence",
            });
        }
        if !uncertainty.is_finite() || !(0.0..=1.0).contains(&uncertainty) {
            return Err(Error::OutOfUnitInterval {
                value: uncertainty,
                context: "uncertainty",
            });
        }
        Ok(Self {
            confidence,
            uncertainty,
            predicted,
            label,
        })
    }

    /// Score one sample set at temperature `t`: MC-integrate, then read off
    /// confidence, normalized entropy, and the predicted class.
    pub fn from_samples(set: &LogitSampleSet, t: f64) -> Result<Self> {
        let p = mc_integrate(set, t)?;
        Self::new(
            p.confidence(),
            normalized_entropy(&p)?,
            p.argmax(),
            set.label(),
        )
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// Which per-record value drives the bin assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinningAxis {
    Confidence,
    Uncertainty,
}

impl BinningAxis {
    fn value_of(self, record: &PredictionRecord) -> f64 {
        match self {
            BinningAxis::Confidence => record.confidence,
            BinningAxis::Uncertainty => record.uncertainty,
        }
    }
}

/// Statistics of a single bin. All stats are `None` when the bin is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_uncertainty: Option<f64>,
    pub error_rate: Option<f64>,
}

/// The full per-bin table plus the two weighted-gap scalars computed from
/// this table's own binning.
///
/// `ece` equals [`ece`] when `axis` is confidence, and `uce` equals [`uce`]
/// when `axis` is uncertainty; the off-axis scalar uses the same bins and is
/// reported for completeness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub axis: BinningAxis,
    pub m_bins: usize,
    pub total_n: usize,
    pub ece: f64,
    pub uce: f64,
    pub bins: Vec<BinStats>,
}

/// Map a value in `[0, 1]` to one of `m` equal-width bins.
///
/// Bin `k > 0` owns `(k/m, (k+1)/m]`; bin 0 additionally owns the left
/// endpoint, so 0.0 lands in bin 0 and 1.0 in bin `m - 1`.
pub fn assign_bin(value: f64, m: usize) -> Result<usize> {
    if m < 1 {
        return Err(Error::InvalidConfig("bin count must be at least 1".into()));
    }
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfUnitInterval {
            value,
            context: "bin assignment",
        });
    }
    if value == 0.0 {
        return Ok(0);
    }
    let k = (value * m as f64).ceil() as usize;
    Ok((k - 1).min(m - 1))
}

/// [`assign_bin`] applied to a slice.
pub fn assign_bins(values: &[f64], m: usize) -> Result<Vec<usize>> {
    values.iter().map(|&v| assign_bin(v, m)).collect()
}

/// Expected calibration error over `m` equal-width confidence bins.
pub fn ece(records: &[PredictionRecord], m: usize) -> Result<f64> {
    Ok(reliability_table(records, m, BinningAxis::Confidence)?.ece)
}

/// Expected uncertainty calibration error over `m` equal-width
/// uncertainty bins.
pub fn uce(records: &[PredictionRecord], m: usize) -> Result<f64> {
    Ok(reliability_table(records, m, BinningAxis::Uncertainty)?.uce)
}

/// Bin all records along `axis` and compute the full per-bin table.
///
/// Empty bins are emitted with count 0 and absent statistics; they
/// contribute nothing to the weighted gaps.
pub fn reliability_table(
    records: &[PredictionRecord],
    m: usize,
    axis: BinningAxis,
) -> Result<BinnedReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "reliability table needs at least one record",
        ));
    }
    if m < 1 {
        return Err(Error::InvalidConfig("bin count must be at least 1".into()));
    }

    let mut counts = vec![0usize; m];
    let mut conf_sums = vec![0.0f64; m];
    let mut unc_sums = vec![0.0f64; m];
    let mut correct = vec![0usize; m];
    for record in records {
        let bin = assign_bin(axis.value_of(record), m)?;
        counts[bin] += 1;
        conf_sums[bin] += record.confidence;
        unc_sums[bin] += record.uncertainty;
        if record.is_correct() {
            correct[bin] += 1;
        }
    }

    let n = records.len() as f64;
    let mut bins = Vec::with_capacity(m);
    let mut ece = 0.0;
    let mut uce = 0.0;
    for bin in 0..m {
        if counts[bin] == 0 {
            bins.push(BinStats {
                count: 0,
                mean_confidence: None,
                accuracy: None,
                mean_uncertainty: None,
                error_rate: None,
            });
            continue;
        }
        let count = counts[bin] as f64;
        let mean_confidence = conf_sums[bin] / count;
        let accuracy = correct[bin] as f64 / count;
        let mean_uncertainty = unc_sums[bin] / count;
        let error_rate = (counts[bin] - correct[bin]) as f64 / count;
        ece += count / n * (accuracy - mean_confidence).abs();
        uce += count / n * (error_rate - mean_uncertainty).abs();
        bins.push(BinStats {
            count: counts[bin],
            mean_confidence: Some(mean_confidence),
            accuracy: Some(accuracy),
            mean_uncertainty: Some(mean_uncertainty),
            error_rate: Some(error_rate),
        });
    }

    Ok(BinnedReport {
        axis,
        m_bins: m,
        total_n: records.len(),
        ece,
        uce,
        bins,
    })
}

impl BinnedReport {
    /// Re-derive the weighted gap scalars from the stored per-bin
    /// statistics. Used to cross-check serialized tables.
    pub fn recompute_gaps(&self) -> (f64, f64) {
        let n = self.total_n as f64;
        let mut ece = 0.0;
        let mut uce = 0.0;
        for bin in &self.bins {
            if bin.count == 0 {
                continue;
            }
            let count = bin.count as f64;
            if let (Some(acc), Some(conf)) = (bin.accuracy, bin.mean_confidence) {
                ece += count / n * (acc - conf).abs();
            }
            if let (Some(err), Some(unc)) = (bin.error_rate, bin.mean_uncertainty) {
                uce += count / n * (err - unc).abs();
            }
        }
        (ece, uce)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(confidence: f64, uncertainty: f64, correct: bool) -> PredictionRecord {
        PredictionRecord::new(confidence, uncertainty, 0, if correct { 0 } else { 1 }).unwrap()
    }

    /// The 4-record worked example used across this module's tests:
    /// bin 0 holds uncertainties {0.2, 0.4} with one wrong, bin 1 holds
    /// {0.6, 0.8} with both wrong.
    fn four_records() -> Vec<PredictionRecord> {
        vec![
            rec(0.9, 0.2, true),
            rec(0.9, 0.4, false),
            rec(0.9, 0.6, false),
            rec(0.9, 0.8, false),
        ]
    }

    #[test]
    fn assign_bin_boundaries() {
        assert_eq!(assign_bin(0.0, 15).unwrap(), 0);
        assert_eq!(assign_bin(1.0, 15).unwrap(), 14);
        assert_eq!(
            assign_bins(&[0.2, 0.4, 0.6, 0.8], 2).unwrap(),
            vec![0, 0, 1, 1]
        );
        // Upper edges are inclusive: 0.5 belongs to (0, 0.5].
        assert_eq!(assign_bin(0.5, 2).unwrap(), 0);
        assert!(assign_bin(1.1, 15).is_err());
        assert!(assign_bin(-0.1, 15).is_err());
        assert!(assign_bin(f64::NAN, 15).is_err());
        assert!(assign_bin(0.5, 0).is_err());
    }

    #[test]
    fn ece_single_bin_hand_value() {
        let records = vec![rec(0.7, 0.1, true), rec(0.9, 0.1, true)];
        // acc 1.0, mean conf 0.8 -> gap 0.2
        assert!((ece(&records, 1).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ece_zero_when_confidence_matches_accuracy() {
        // One bin, two records at confidence 0.5, one correct: acc == conf.
        let records = vec![rec(0.5, 0.3, true), rec(0.5, 0.3, false)];
        assert_eq!(ece(&records, 1).unwrap(), 0.0);
    }

    #[test]
    fn uce_four_record_hand_value() {
        // bin 0: err 0.5, uncert 0.3; bin 1: err 1.0, uncert 0.7
        // UCE = 0.5*0.2 + 0.5*0.3 = 0.25
        assert!((uce(&four_records(), 2).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn uce_zero_for_certain_and_correct() {
        let records = vec![rec(1.0, 0.0, true), rec(1.0, 0.0, true)];
        assert_eq!(uce(&records, 15).unwrap(), 0.0);
    }

    #[test]
    fn empty_records_are_domain_errors() {
        assert!(matches!(ece(&[], 15), Err(Error::EmptyInput(_))));
        assert!(matches!(uce(&[], 15), Err(Error::EmptyInput(_))));
        assert!(matches!(
            reliability_table(&[], 15, BinningAxis::Confidence),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn reliability_table_concentrates_single_bin() {
        let records = vec![rec(0.95, 0.1, true); 7];
        let report = reliability_table(&records, 15, BinningAxis::Confidence).unwrap();
        assert_eq!(report.bins.len(), 15);
        assert_eq!(report.bins[14].count, 7);
        assert_eq!(report.bins.iter().map(|b| b.count).sum::<usize>(), 7);
        assert!(report.bins[..14]
            .iter()
            .all(|b| b.count == 0 && b.accuracy.is_none()));
    }

    #[test]
    fn reliability_table_four_record_bins() {
        let report = reliability_table(&four_records(), 2, BinningAxis::Uncertainty).unwrap();
        let b0 = &report.bins[0];
        let b1 = &report.bins[1];
        assert_eq!(b0.count, 2);
        assert!((b0.error_rate.unwrap() - 0.5).abs() < 1e-12);
        assert!((b0.mean_uncertainty.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(b1.count, 2);
        assert!((b1.error_rate.unwrap() - 1.0).abs() < 1e-12);
        assert!((b1.mean_uncertainty.unwrap() - 0.7).abs() < 1e-12);
        assert!((report.uce - 0.25).abs() < 1e-12);
    }

    #[test]
    fn report_gaps_resum_exactly() {
        let records = random_records(500, 11);
        for axis in [BinningAxis::Confidence, BinningAxis::Uncertainty] {
            let report = reliability_table(&records, 15, axis).unwrap();
            let (ece2, uce2) = report.recompute_gaps();
            assert_eq!(report.ece, ece2);
            assert_eq!(report.uce, uce2);
        }
    }

    // Independent naive oracle: double loop over bins and records, with the
    // bin membership test done directly on the edge definition.
    fn naive_bin_of(value: f64, m: usize) -> usize {
        if value == 0.0 {
            return 0;
        }
        for k in 0..m {
            let lower = k as f64 / m as f64;
            let upper = (k + 1) as f64 / m as f64;
            if value > lower && value <= upper {
                return k;
            }
        }
        m - 1
    }

    fn naive_ece(records: &[PredictionRecord], m: usize) -> f64 {
        let n = records.len() as f64;
        let mut total = 0.0;
        for bin in 0..m {
            let mut count = 0usize;
            let mut conf_sum = 0.0;
            let mut correct = 0usize;
            for r in records {
                if naive_bin_of(r.confidence, m) == bin {
                    count += 1;
                    conf_sum += r.confidence;
                    if r.is_correct() {
                        correct += 1;
                    }
                }
            }
            if count > 0 {
                let acc = correct as f64 / count as f64;
                let conf = conf_sum / count as f64;
                total += count as f64 / n * (acc - conf).abs();
            }
        }
        total
    }

    fn naive_uce(records: &[PredictionRecord], m: usize) -> f64 {
        let n = records.len() as f64;
        let mut total = 0.0;
        for bin in 0..m {
            let mut count = 0usize;
            let mut unc_sum = 0.0;
            let mut wrong = 0usize;
            for r in records {
                if naive_bin_of(r.uncertainty, m) == bin {
                    count += 1;
                    unc_sum += r.uncertainty;
                    if !r.is_correct() {
                        wrong += 1;
                    }
                }
            }
            if count > 0 {
                let err = wrong as f64 / count as f64;
                let unc = unc_sum / count as f64;
                total += count as f64 / n * (err - unc).abs();
            }
        }
        total
    }

    fn random_records(n: usize, seed: u64) -> Vec<PredictionRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                rec(
                    rng.random_range(0.0..=1.0),
                    rng.random_range(0.0..=1.0),
                    rng.random_bool(0.7),
                )
            })
            .collect()
    }

    #[test]
    fn ece_uce_match_naive_oracle_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.random_range(1..=300usize);
            let m = *[1usize, 2, 15, 50].get(rng.random_range(0..4)).unwrap();
            let records = random_records(n, rng.random());
            assert_eq!(ece(&records, m).unwrap(), naive_ece(&records, m));
            assert_eq!(uce(&records, m).unwrap(), naive_uce(&records, m));
        }
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(seed in 0u64..500, n in 1usize..120, m in 1usize..40) {
            let records = random_records(n, seed);
            let e = ece(&records, m).unwrap();
            let u = uce(&records, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((0.0..=1.0).contains(&u));
        }

        #[test]
        fn metrics_are_permutation_invariant(seed in 0u64..500, n in 2usize..120) {
            let records = random_records(n, seed);
            let mut reversed = records.clone();
            reversed.reverse();
            prop_assert!((ece(&records, 15).unwrap() - ece(&reversed, 15).unwrap()).abs() < 1e-12);
            prop_assert!((uce(&records, 15).unwrap() - uce(&reversed, 15).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn bin_counts_sum_to_n(seed in 0u64..500, n in 1usize..120, m in 1usize..40) {
            let records = random_records(n, seed);
            let report = reliability_table(&records, m, BinningAxis::Uncertainty).unwrap();
            prop_assert_eq!(report.bins.iter().map(|b| b.count).sum::<usize>(), n);
        }

        // Merging two adjacent bins never increases the weighted gap sum
        // beyond what the triangle inequality allows.
        #[test]
        fn merged_bin_gap_obeys_triangle_inequality(seed in 0u64..500, n in 4usize..200) {
            let records = random_records(n, seed);
            let report = reliability_table(&records, 16, BinningAxis::Confidence).unwrap();
            for pair in report.bins.chunks(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if a.count == 0 || b.count == 0 {
                    continue;
                }
                let (na, nb) = (a.count as f64, b.count as f64);
                let gap_a = a.accuracy.unwrap() - a.mean_confidence.unwrap();
                let gap_b = b.accuracy.unwrap() - b.mean_confidence.unwrap();
                let merged_acc = (na * a.accuracy.unwrap() + nb * b.accuracy.unwrap()) / (na + nb);
                let merged_conf =
                    (na * a.mean_confidence.unwrap() + nb * b.mean_confidence.unwrap()) / (na + nb);
                let lhs = (merged_acc - merged_conf).abs() * (na + nb);
                let rhs = na * gap_a.abs() + nb * gap_b.abs();
                prop_assert!(lhs <= rhs + 1e-9);
            }
        }

        // Coarsening nested equal-width bins can only shrink the metric.
        #[test]
        fn coarser_nested_bins_never_increase_ece(seed in 0u64..500, n in 2usize..200, m in 1usize..20) {
            let records = random_records(n, seed);
            prop_assert!(ece(&records, m).unwrap() <= ece(&records, 2 * m).unwrap() + 1e-9);
            prop_assert!(uce(&records, m).unwrap() <= uce(&records, 2 * m).unwrap() + 1e-9);
        }
    }
}
