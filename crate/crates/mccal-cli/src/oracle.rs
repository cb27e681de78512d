//! Naive reference implementations used to audit the library's fast paths.
//!
//! Everything here recomputes results from the plain definitions: bin
//! membership by scanning edges, ECE/UCE by an O(n*M) double loop, MC
//! integration and NLL by freshly written loops. None of it shares code
//! with the paths it checks, so a match is meaningful.

use mccal::binning::{ece, uce, PredictionRecord};
use mccal::prob::{mc_integrate, nll, LogitSampleSet, LogitVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Edge-scan bin assignment: bin 0 owns `[0, 1/m]`, bin k owns
/// `(k/m, (k+1)/m]`.
pub fn naive_bin_of(value: f64, m: usize) -> usize {
    if value == 0.0 {
        return 0;
    }
    for k in 0..m {
        if value > k as f64 / m as f64 && value <= (k + 1) as f64 / m as f64 {
            return k;
        }
    }
    m - 1
}

pub fn naive_ece(records: &[PredictionRecord], m: usize) -> f64 {
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

pub fn naive_uce(records: &[PredictionRecord], m: usize) -> f64 {
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

fn naive_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = z.iter().map(|&v| ((v - max) / t).exp()).collect();
    let denom: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= denom;
    }
    exps
}

pub fn naive_mc_integrate(set: &LogitSampleSet, t: f64) -> Vec<f64> {
    let classes = set.classes();
    let mut acc = vec![0.0; classes];
    for sample in set.samples() {
        let p = naive_softmax(sample.values(), t);
        for c in 0..classes {
            acc[c] += p[c];
        }
    }
    for a in &mut acc {
        *a /= set.passes() as f64;
    }
    acc
}

pub fn naive_nll(sets: &[LogitSampleSet], t: f64) -> f64 {
    let mut total = 0.0;
    for set in sets {
        let p = naive_mc_integrate(set, t);
        total -= p[set.label()].max(1e-300).ln();
    }
    total
}

pub fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<PredictionRecord> {
    (0..n)
        .map(|_| {
            PredictionRecord::new(
                rng.random_range(0.0..=1.0),
                rng.random_range(0.0..=1.0),
                0,
                if rng.random_bool(0.7) { 0 } else { 1 },
            )
            .expect("generated record is in range")
        })
        .collect()
}

pub fn random_sets(rng: &mut ChaCha8Rng, n: usize) -> Vec<LogitSampleSet> {
    (0..n)
        .map(|_| {
            let classes = rng.random_range(2..8usize);
            let passes = rng.random_range(1..12usize);
            let samples: Vec<LogitVector> = (0..passes)
                .map(|_| {
                    LogitVector::new((0..classes).map(|_| rng.random_range(-6.0..6.0)).collect())
                        .expect("generated logits are finite")
                })
                .collect();
            LogitSampleSet::new(samples, rng.random_range(0..classes))
                .expect("generated set is consistent")
        })
        .collect()
}

pub struct OracleOutcome {
    pub binning_instances: usize,
    pub integration_sets: usize,
    pub nll_batches: usize,
    pub mismatches: Vec<String>,
}

/// Run every cross-check; any recorded mismatch means the audit failed.
pub fn run_checks(seed: u64, instances: usize, max_n: usize) -> mccal::Result<OracleOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    let bin_choices = [1usize, 2, 15, 50];

    for instance in 0..instances {
        let n = rng.random_range(1..=max_n.max(1));
        let m = bin_choices[rng.random_range(0..bin_choices.len())];
        let records = random_records(&mut rng, n);
        let fast_ece = ece(&records, m)?;
        let slow_ece = naive_ece(&records, m);
        if fast_ece.to_bits() != slow_ece.to_bits() {
            mismatches.push(format!(
                "instance {instance}: ece {fast_ece:?} != oracle {slow_ece:?} (n={n}, m={m})"
            ));
        }
        let fast_uce = uce(&records, m)?;
        let slow_uce = naive_uce(&records, m);
        if fast_uce.to_bits() != slow_uce.to_bits() {
            mismatches.push(format!(
                "instance {instance}: uce {fast_uce:?} != oracle {slow_uce:?} (n={n}, m={m})"
            ));
        }
    }

    let integration_sets = 500;
    let sets = random_sets(&mut rng, integration_sets);
    for (i, set) in sets.iter().enumerate() {
        let t = rng.random_range(0.1..5.0);
        let fast = mc_integrate(set, t)?;
        let slow = naive_mc_integrate(set, t);
        if fast.probs() != slow.as_slice() {
            mismatches.push(format!(
                "set {i}: mc integration diverged from the naive loop"
            ));
        }
    }

    let nll_batches = 50;
    for batch in 0..nll_batches {
        let sets = random_sets(&mut rng, 20);
        let t = rng.random_range(0.1..5.0);
        let fast = nll(&sets, t)?;
        let slow = naive_nll(&sets, t);
        if fast.to_bits() != slow.to_bits() {
            mismatches.push(format!("batch {batch}: nll {fast:?} != oracle {slow:?}"));
        }
    }

    Ok(OracleOutcome {
        binning_instances: instances,
        integration_sets,
        nll_batches,
        mismatches,
    })
}
