//! Temperature fitting by minimizing validation NLL under MC integration.
//!
//! The MC-averaged objective is not provably unimodal in the temperature,
//! so the fit runs a coarse log-spaced grid first and only then refines the
//! best bracket with golden-section search. The search space is 1-D and the
//! objective cheap, so robustness wins over cleverness here. The logit
//! samples are drawn once by the caller and frozen: every candidate
//! temperature sees the same validation set, which keeps the fit
//! deterministic.

use crate::error::{Error, Result};
use crate::prob::{nll, softmax, LogitSampleSet, TemperatureParam, PROB_FLOOR};

/// Search-space and stopping configuration for [`fit_temperature`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub t_min: f64,
    pub t_max: f64,
    /// Number of coarse log-spaced grid evaluations.
    pub grid_points: usize,
    /// Termination width of the refinement bracket, measured on `log T`.
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            t_min: 0.05,
            t_max: 10.0,
            grid_points: 50,
            refine_tolerance: 1e-4,
            max_refine_iters: 100,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite()
            && self.t_max.is_finite()
            && 0.0 < self.t_min
            && self.t_min < self.t_max)
        {
            return Err(Error::InvalidConfig(format!(
                "need 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.grid_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 grid points, got {}",
                self.grid_points
            )));
        }
        if !(self.refine_tolerance.is_finite() && self.refine_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "refine tolerance must be positive, got {}",
                self.refine_tolerance
            )));
        }
        Ok(())
    }
}

/// Fit the temperature on a frozen validation set.
///
/// Coarse log-spaced grid over `[t_min, t_max]`, golden-section refinement
/// inside the best grid bracket, and `T = 1` always kept as an explicit
/// candidate so that fitting can never come out worse than not scaling.
/// The returned parameter records the achieved NLL and the number of
/// objective evaluations spent.
pub fn fit_temperature(validation: &[LogitSampleSet], cfg: &FitConfig) -> Result<TemperatureParam> {
    cfg.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptyInput(
            "temperature fit needs a nonempty validation set",
        ));
    }

    let log_min = cfg.t_min.ln();
    let log_max = cfg.t_max.ln();
    let mut evals = 0usize;
    let mut objective = |log_t: f64| -> Result<f64> {
        evals += 1;
        nll(validation, log_t.exp())
    };

    // Coarse grid.
    let step = (log_max - log_min) / (cfg.grid_points - 1) as f64;
    let mut best_idx = None;
    let mut best_val = f64::INFINITY;
    let mut grid = Vec::with_capacity(cfg.grid_points);
    for i in 0..cfg.grid_points {
        let log_t = log_min + step * i as f64;
        let value = objective(log_t)?;
        grid.push(log_t);
        if value.is_finite() && value < best_val {
            best_val = value;
            best_idx = Some(i);
        }
    }
    let best_idx = best_idx
        .ok_or_else(|| Error::FitFailed("objective was non-finite at every grid point".into()))?;

    // Golden-section refinement inside the bracket around the best grid point.
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut lo = grid[best_idx.saturating_sub(1)];
    let mut hi = grid[(best_idx + 1).min(cfg.grid_points - 1)];
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    let mut iters = 0usize;
    while hi - lo > cfg.refine_tolerance && iters < cfg.max_refine_iters {
        iters += 1;
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let refined_log_t = (lo + hi) / 2.0;
    let refined_val = objective(refined_log_t)?;

    // Keep whichever candidate is best: refined point, best grid point, or
    // the do-nothing temperature when it lies inside the search range.
    let mut best_t = refined_log_t.exp();
    let mut best_nll = refined_val;
    if best_val < best_nll {
        best_t = grid[best_idx].exp();
        best_nll = best_val;
    }
    if (cfg.t_min..=cfg.t_max).contains(&1.0) {
        let unscaled = objective(0.0)?;
        if unscaled < best_nll {
            best_t = 1.0;
            best_nll = unscaled;
        }
    }

    TemperatureParam::new(best_t, best_nll, evals)
}

/// Analytic derivative of [`nll`] with respect to the temperature.
///
/// For one forward pass with logits `z` and `p = softmax(z/t)`, the scaled
/// softmax differentiates to `dp_k/dt = -p_k (z_k - E_p[z]) / t^2`; chaining
/// through the MC mean and the log gives the per-set term below. Sets whose
/// floored probability sits on the floor contribute zero, matching the
/// clamped objective.
pub fn nll_grad_t(validation: &[LogitSampleSet], t: f64) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyInput(
            "nll gradient needs at least one sample set",
        ));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    let mut grad = 0.0;
    for set in validation {
        let label = set.label();
        let n = set.passes() as f64;
        let mut q = 0.0;
        let mut weighted = 0.0;
        for sample in set.samples() {
            let p = softmax(sample, t)?;
            let probs = p.probs();
            let z = sample.values();
            let z_mean: f64 = probs.iter().zip(z).map(|(&pc, &zc)| pc * zc).sum();
            q += probs[label];
            weighted += probs[label] * (z[label] - z_mean);
        }
        q /= n;
        weighted /= n;
        if q > PROB_FLOOR {
            grad += weighted / (q * t * t);
        }
    }
    Ok(grad)
}
