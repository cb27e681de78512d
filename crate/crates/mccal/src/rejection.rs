//! Rejection of uncertain predictions.
//!
//! Sweeping an uncertainty ceiling downward abstains from ever more of the
//! test set; on calibrated uncertainty the error of the retained set falls
//! roughly linearly with the ceiling.

use serde::{Deserialize, Serialize};

use crate::binning::PredictionRecord;
use crate::error::{Error, Result};

/// Retained-set statistics at one uncertainty ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPoint {
    /// The ceiling: records with uncertainty above it are rejected.
    pub h_max: f64,
    pub retained_count: usize,
    pub retained_fraction: f64,
    /// Top-1 error over the retained records; absent when nothing is
    /// retained (not zero, which would overstate the quality of an empty
    /// set).
    pub top1_error: Option<f64>,
}

/// The full sweep, thresholds in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub total_n: usize,
    pub points: Vec<RejectionPoint>,
}

/// The default sweep used by the CLI: 1.00 down to 0.00 in steps of 0.01.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).rev().map(|i| i as f64 / 100.0).collect()
}

/// Evaluate the retained set at every threshold.
///
/// Records exactly at the ceiling are retained, so `h_max = 1` keeps the
/// whole set including uniform predictions. Thresholds are sorted into
/// descending order before evaluation.
pub fn reject_sweep(records: &[PredictionRecord], thresholds: &[f64]) -> Result<RejectionCurve> {
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "rejection sweep needs at least one record",
        ));
    }
    for &t in thresholds {
        if !t.is_finite() || !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfUnitInterval {
                value: t,
                context: "rejection threshold",
            });
        }
    }
    let mut sorted: Vec<f64> = thresholds.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let n = records.len();
    let points = sorted
        .into_iter()
        .map(|h_max| {
            let mut retained = 0usize;
            let mut wrong = 0usize;
            for r in records {
                if r.uncertainty <= h_max {
                    retained += 1;
                    if !r.is_correct() {
                        wrong += 1;
                    }
                }
            }
            RejectionPoint {
                h_max,
                retained_count: retained,
                retained_fraction: retained as f64 / n as f64,
                top1_error: if retained > 0 {
                    Some(wrong as f64 / retained as f64)
                } else {
                    None
                },
            }
        })
        .collect();
    Ok(RejectionCurve { total_n: n, points })
}
