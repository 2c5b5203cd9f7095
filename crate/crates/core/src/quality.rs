//! Detection-score to sample-weight conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Range scores are clipped into at ingestion, so saturated detector
/// outputs still have a finite logit.
pub const SCORE_CLIP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    /// Upper clamp on the half-logit.
    #[serde(default = "default_t")]
    pub t: f64,
    /// Softmax temperature.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_t() -> f64 {
    7.0
}

fn default_q() -> f64 {
    0.3
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            t: default_t(),
            q: default_q(),
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Config(format!("quality clamp t must be > 0, got {}", self.t)));
        }
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::Config(format!("quality temperature q must be >= 0, got {}", self.q)));
        }
        Ok(())
    }
}

/// Normalized per-sample weights; positive and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityWeights<T>(Vec<T>);

impl<T: Scalar> QualityWeights<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `min(½·ln(d / (1 − d)), t)`.
pub fn clamp_logit<T: Scalar>(d: T, t: T) -> Result<T> {
    if !(d > T::zero() && d < T::one()) {
        return Err(Error::validation(format!("detection score {d} outside (0, 1)")));
    }
    Ok((T::of(0.5) * (d / (T::one() - d)).ln()).min(t))
}

/// Softmax of `q·l_i` over the clamped logits of `scores`.
pub fn quality_weights<T: Scalar>(scores: &[T], cfg: &QualityConfig) -> Result<QualityWeights<T>> {
    if scores.is_empty() {
        return Err(Error::validation("cannot weight an empty score sequence"));
    }
    let t = T::of(cfg.t);
    let q = T::of(cfg.q);
    let z = scores
        .iter()
        .map(|&d| clamp_logit(d, t).map(|l| q * l))
        .collect::<Result<Vec<T>>>()?;
    let peak = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - peak).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(QualityWeights(exps.into_iter().map(|e| e / total).collect()))
}

/// Clips a raw detector score into `[1e-6, 1 − 1e-6]`.
pub fn clip_score(d: f64) -> f64 {
    d.clamp(SCORE_CLIP, 1.0 - SCORE_CLIP)
}
