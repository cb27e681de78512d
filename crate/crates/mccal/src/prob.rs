//! Numerically stable probability primitives.
//!
//! Everything downstream (metrics, temperature fitting, rejection) is built
//! from four operations: temperature-scaled [`softmax`], [`mc_integrate`] over
//! a stack of stochastic-forward-pass logits, [`normalized_entropy`], and
//! [`nll`]. All of them are pure functions of their inputs.

use crate::error::{Error, Result};

/// Floor applied to per-sample probabilities before taking logs in [`nll`].
pub const PROB_FLOOR: f64 = 1e-300;

/// A single forward pass worth of logits for one input.
///
/// Unbounded, unitless reals; at least two classes, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewClasses(values.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of classes.
    pub fn classes(&self) -> usize {
        self.values.len()
    }

    /// Index of the largest logit; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

/// The stack of `N` stochastic-forward-pass logit vectors for one input,
/// together with its true label.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSampleSet {
    samples: Vec<LogitVector>,
    label: usize,
}

impl LogitSampleSet {
    pub fn new(samples: Vec<LogitVector>, label: usize) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput(
            "sample set needs at least one forward pass",
        ))?;
        let classes = first.classes();
        for sample in &samples {
            if sample.classes() != classes {
                return Err(Error::ClassCountMismatch {
                    expected: classes,
                    got: sample.classes(),
                });
            }
        }
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[LogitVector] {
        &self.samples
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn classes(&self) -> usize {
        self.samples[0].classes()
    }

    /// Number of stochastic forward passes.
    pub fn passes(&self) -> usize {
        self.samples.len()
    }
}

/// A length-`C` categorical distribution: entries non-negative, summing to
/// one within `1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidProbability(format!(
                    "entry {p} is negative or non-finite"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// The predicted class: index of the largest probability, ties to the
    /// lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Confidence of the prediction, `max p`.
    pub fn confidence(&self) -> f64 {
        self.probs[self.argmax()]
    }
}

/// A fitted temperature scalar with its fit metadata.
///
/// The equivalent logit multiplier is `1/t`; it is never stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureParam {
    pub t: f64,
    /// Validation NLL at `t`.
    pub fit_nll: f64,
    /// Number of objective evaluations the fit spent.
    pub fit_iterations: usize,
}

impl TemperatureParam {
    pub fn new(t: f64, fit_nll: f64, fit_iterations: usize) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidTemperature(t));
        }
        Ok(Self {
            t,
            fit_nll,
            fit_iterations,
        })
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_temperature(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    Ok(())
}

/// Temperature-scaled softmax `p_k = exp(z_k/t) / sum_l exp(z_l/t)`.
///
/// The shift by `max z` happens before the division by `t`, so the
/// exponent is never positive and nothing overflows even for logits near
/// the f64 range limit or for very small `t`.
pub fn softmax(z: &LogitVector, t: f64) -> Result<ProbVector> {
    check_temperature(t)?;
    let values = z.values();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps = Vec::with_capacity(values.len());
    let mut denom = 0.0;
    for &v in values {
        let e = ((v - max) / t).exp();
        exps.push(e);
        denom += e;
    }
    for e in &mut exps {
        *e /= denom;
    }
    ProbVector::new(exps)
}

/// Predictive distribution by Monte Carlo integration: the mean of the
/// temperature-scaled softmax over all stochastic forward passes. With
/// `t = 1` this is plain MC-dropout integration.
pub fn mc_integrate(set: &LogitSampleSet, t: f64) -> Result<ProbVector> {
    check_temperature(t)?;
    let classes = set.classes();
    let mut acc = vec![0.0; classes];
    for sample in set.samples() {
        let p = softmax(sample, t)?;
        for (a, &pc) in acc.iter_mut().zip(p.probs()) {
            *a += pc;
        }
    }
    let n = set.passes() as f64;
    for a in &mut acc {
        *a /= n;
    }
    ProbVector::new(acc)
}

/// Shannon entropy of `p` divided by `log C`, mapped to `[0, 1]`.
///
/// Uses the `0 * log 0 = 0` convention and clamps the result against
/// rounding. Errors for `C < 2` where the normalizer vanishes.
pub fn normalized_entropy(p: &ProbVector) -> Result<f64> {
    let classes = p.classes();
    if classes < 2 {
        return Err(Error::TooFewClasses(classes));
    }
    let mut h = 0.0;
    for &pc in p.probs() {
        if pc > 0.0 {
            h -= pc * pc.ln();
        }
    }
    Ok((h / (classes as f64).ln()).clamp(0.0, 1.0))
}

/// Negative log-likelihood of the true labels under MC-integrated,
/// temperature-scaled predictions, summed over all sample sets.
///
/// Each per-sample probability is floored at [`PROB_FLOOR`] before the log,
/// so the result is always finite.
pub fn nll(sets: &[LogitSampleSet], t: f64) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("nll needs at least one sample set"));
    }
    let mut total = 0.0;
    for set in sets {
        let p = mc_integrate(set, t)?;
        total -= p.probs()[set.label()].max(PROB_FLOOR).ln();
    }
    Ok(total)
}
