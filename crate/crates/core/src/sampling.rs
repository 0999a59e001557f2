//! Fixed-size weighted sampling without replacement.
//!
//! Implemented with exponential race keys: each candidate gets
//! key = Exp(1)/weight and the k smallest keys win, which is
//! distributionally identical to drawing candidates one at a time with
//! probability proportional to weight and removing them. Keys are
//! drawn in the caller-supplied candidate order, so results are
//! reproducible given the rng state.

use rand::Rng;

use crate::error::{Error, Result};

/// Draws `k` distinct candidate indices (into `weights`) without
/// replacement, successive-draw probabilities proportional to weight.
pub fn weighted_sample_without_replacement<R: Rng>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > weights.len() {
        return Err(Error::Simulation(format!(
            "requested {k} draws from {} candidates",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Simulation("weights must be finite and nonnegative".into()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Simulation("all weights zero with positive sample size".into()));
    }

    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // Exp(1) via inverse CDF; u in (0,1].
            let u: f64 = 1.0 - rng.gen::<f64>();
            let e = -u.ln();
            let key = if w > 0.0 { e / w } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keyed.into_iter().take(k).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}
