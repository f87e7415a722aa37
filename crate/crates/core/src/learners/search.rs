//! Seeded random hyperparameter search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub n_candidates: usize,
    pub seed: u64,
}

impl SearchSpec {
    pub const OFFLINE_DEFAULT: usize = 3;
    pub const ONLINE_DEFAULT: usize = 10;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome<P> {
    pub best_index: usize,
    pub best: P,
    pub candidates: Vec<P>,
    /// Validation loss per candidate; failed evaluations score `+inf`.
    pub scores: Vec<f64>,
}

/// Index where the time-ordered validation tail (last 20% of `n` rows)
/// begins.
pub fn validation_split(n: usize) -> usize {
    n - (n as f64 * 0.2).round() as usize
}

/// Draws `n_candidates` parameter sets from a generator seeded with
/// `spec.seed`, evaluates them in parallel and returns the lowest score.
/// Ties go to the earliest candidate.
pub fn random_search<P, S, E>(spec: &SearchSpec, mut sample: S, evaluate: E) -> Result<SearchOutcome<P>>
where
    P: Clone + Send + Sync,
    S: FnMut(&mut ChaCha8Rng) -> P,
    E: Fn(&P) -> Result<f64> + Sync,
{
    if spec.n_candidates == 0 {
        return Err(Error::Invalid("random search needs at least one candidate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let candidates: Vec<P> = (0..spec.n_candidates).map(|_| sample(&mut rng)).collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|p| match evaluate(p) {
            Ok(s) if !s.is_nan() => s,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::warn!("search candidate failed: {e}");
                f64::INFINITY
            }
        })
        .collect();
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best_index] {
            best_index = i;
        }
    }
    if scores[best_index] == f64::INFINITY {
        return Err(Error::Invalid("every search candidate failed".into()));
    }
    Ok(SearchOutcome { best_index, best: candidates[best_index].clone(), candidates, scores })
}
