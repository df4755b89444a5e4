//! Spacing statistics of consecutive chain points.

use super::ChainState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeIncrements {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainQuality {
    /// Statistics of `|α_n(k+1) - α_n(k)|` over consecutive pairs that are not exact copies.
    pub per_mode: Vec<ModeIncrements>,
    /// Fraction of those pairs with some mode increment below `delta_min`.
    pub fraction_below_delta_min: f64,
    /// Fraction of consecutive pairs that are exact copies (rejected proposals).
    pub duplicate_fraction: f64,
}

impl ChainQuality {
    pub fn max_increment(&self) -> f64 {
        self.per_mode.iter().map(|m| m.max).fold(0.0, f64::max)
    }

    /// True when consecutive points have drifted too far apart for finite differences, or
    /// when some pair has nearly collapsed.
    pub fn needs_reformat(&self, spacing_cap: f64) -> bool {
        self.max_increment() > 2.0 * spacing_cap || self.fraction_below_delta_min > 0.0
    }
}

pub fn chain_quality(chain: &ChainState, delta_min: f64) -> ChainQuality {
    let m = chain.n_modes();
    let pairs = chain.len() - 1;
    let mut stats = vec![
        ModeIncrements {
            max: 0.0,
            min: f64::INFINITY,
            mean: 0.0,
        };
        m
    ];
    let mut counted = 0usize;
    let mut below = 0usize;
    for k in 0..pairs {
        if chain.alpha(k) == chain.alpha(k + 1) && chain.phi(k) == chain.phi(k + 1) {
            continue;
        }
        counted += 1;
        let mut small = false;
        for (n, s) in stats.iter_mut().enumerate() {
            let inc = (chain.alpha(k + 1)[n] - chain.alpha(k)[n]).norm();
            s.max = s.max.max(inc);
            s.min = s.min.min(inc);
            s.mean += inc;
            small |= inc < delta_min;
        }
        below += small as usize;
    }
    for s in &mut stats {
        if counted == 0 {
            s.min = 0.0;
        } else {
            s.mean /= counted as f64;
        }
    }
    ChainQuality {
        per_mode: stats,
        fraction_below_delta_min: if counted == 0 {
            0.0
        } else {
            below as f64 / counted as f64
        },
        duplicate_fraction: (pairs - counted) as f64 / pairs as f64,
    }
}
