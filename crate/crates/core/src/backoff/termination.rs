use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Probability that one of `p` proposers, all at retry level `l`, gets a
/// collision-free stretch long enough to finish both phases after GST:
/// `(1 - 1/2^(l-1))^(p-1)`, clamped to [0, 1].
pub fn termination_probability(l: u32, p: u32) -> Result<f64> {
    if l == 0 {
        return Err(Error::Domain("retry level must be at least 1".into()));
    }
    if p == 0 {
        return Err(Error::Domain("proposer count must be at least 1".into()));
    }
    let base = 1.0 - 0.5f64.powi(l as i32 - 1);
    Ok(base.powi(p as i32 - 1).clamp(0.0, 1.0))
}

/// Sampled counterpart of [`termination_probability`].
///
/// With one-way bound `delta = 1`, every proposer leaves backoff at a uniform
/// offset in a window of length `2^(l+2)`. Proposer 0 succeeds when no other
/// proposer leaves backoff within `4` of it: earlier ones would still be
/// running their two phases, later ones would cut into its own.
pub fn monte_carlo_single_winner(l: u32, p: u32, trials: u64, seed: u64) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("proposer count must be at least 1".into()));
    }
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let window = 2f64.powi(l as i32 + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0u64;
    for _ in 0..trials {
        let mine = rng.random::<f64>() * window;
        let clear = (1..p).all(|_| (rng.random::<f64>() * window - mine).abs() >= 4.0);
        if clear {
            wins += 1;
        }
    }
    Ok(wins as f64 / trials as f64)
}
