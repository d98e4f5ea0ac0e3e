//! Miscellaneous-aspect handling: normalized entropy of K-aspect
//! predictions, quantile threshold estimation, and label augmentation.

use serde::{Deserialize, Serialize};

use crate::pseudo_label::LabelDistribution;
use crate::{Error, Result};

/// Shannon entropy of `p` divided by log K, in [0, 1]. Zero-probability
/// entries contribute nothing.
pub fn normalized_entropy(p: &LabelDistribution) -> Result<f64> {
    let k = p.len();
    if k < 2 {
        return Err(Error::validation(format!(
            "normalized entropy needs at least 2 classes, got {k}"
        )));
    }
    let h: f64 = p
        .iter()
        .map(|&q| if q > 0.0 { -q * q.ln() } else { 0.0 })
        .sum();
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Empirical quantile with linear interpolation between the two closest
/// order statistics.
pub fn estimate_gamma(h_values: &[f64], quantile: f64) -> Result<f64> {
    if h_values.is_empty() {
        return Err(Error::validation("cannot take a quantile of an empty collection"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::validation(format!("quantile {quantile} outside [0, 1]")));
    }
    if h_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("entropy population contains non-finite values"));
    }
    let mut sorted = h_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let pos = quantile * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Misc-aspect likelihood from normalized entropy: zero below the threshold,
/// rising linearly to one at maximum entropy.
pub fn misc_probability(h: f64, gamma: f64) -> Result<f64> {
    if gamma >= 1.0 {
        return Err(Error::validation("gamma must be below 1"));
    }
    Ok(if h < gamma { 0.0 } else { (h - gamma) / (1.0 - gamma) })
}

/// Extends a K-aspect distribution with a misc entry: predefined aspects are
/// scaled by (1 - p_misc) and p_misc takes the final slot.
pub fn augment_labels(p: &LabelDistribution, p_misc: f64) -> LabelDistribution {
    let mut probs: Vec<f64> = p.iter().map(|&q| (1.0 - p_misc) * q).collect();
    probs.push(p_misc);
    LabelDistribution::new(probs).expect("augmentation preserves the unit sum")
}

/// Per-segment entropy and misc-likelihood scores for one iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiscScores {
    pub gamma: f64,
    pub h_norm: Vec<f64>,
    pub p_misc: Vec<f64>,
}

impl MiscScores {
    /// Computes H_norm for all predictions, resolves gamma as the configured
    /// quantile of that population, and derives every misc likelihood.
    ///
    /// A degenerate population whose quantile reaches 1.0 would make the
    /// linear ramp undefined; gamma is nudged just below 1 so fully uniform
    /// predictions still map to p_misc = 1.
    pub fn compute(predictions: &[LabelDistribution], gamma_quantile: f64) -> Result<MiscScores> {
        let h_norm = predictions
            .iter()
            .map(normalized_entropy)
            .collect::<Result<Vec<f64>>>()?;
        let gamma = estimate_gamma(&h_norm, gamma_quantile)?.min(1.0 - 1e-9);
        let p_misc = h_norm
            .iter()
            .map(|&h| misc_probability(h, gamma))
            .collect::<Result<Vec<f64>>>()?;
        Ok(MiscScores { gamma, h_norm, p_misc })
    }

    /// CSV dump of (segment id, h_norm, p_misc), one row per segment.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment_id,h_norm,p_misc\n");
        for (i, (h, m)) in self.h_norm.iter().zip(&self.p_misc).enumerate() {
            out.push_str(&format!("{i},{h},{m}\n"));
        }
        out
    }
}
