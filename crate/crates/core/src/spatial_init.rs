//! Raster-grid geometry and draft-token initialization strategies.
//!
//! Generated tokens form a `height x width` grid traversed in raster order
//! (left to right, top to bottom), so index `i` sits at row `i / width`,
//! column `i % width`. Fresh window slots are initialized from one of five
//! strategies; each records the distribution the token was actually drawn
//! from as the slot's verification reference, so the first acceptance test
//! of a fresh token is a proper speculative step:
//!
//! - `random`: token uniform over the full vocabulary, uniform reference
//!   (one uniform consumed);
//! - `h_repeat` / `v_repeat`: copy the left / above neighbor, point-mass
//!   reference at that token (no uniforms; one on fallback);
//! - `h_sample` / `v_sample`: draw from the neighbor's cached shaped
//!   distribution, which also becomes the reference (one uniform).
//!
//! Every strategy falls back to `random` at grid boundaries or when the
//! neighbor's distribution is no longer cached; the fallback chain never
//! recurses further.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::{DraftSlot, PrefixState};
use crate::model::Distribution;
use crate::rng::SplitMix64;
use crate::{EngineError, Result};

/// Raster-grid shape of the generated token sequence.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeom {
    pub height: usize,
    pub width: usize,
}

impl GridGeom {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    /// Total number of grid cells (the run's token budget).
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raster index to (row, col).
    pub fn index_to_rc(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.len() {
            return Err(EngineError::InvalidConfig(format!(
                "grid index {index} out of range for {}x{}",
                self.height, self.width
            )));
        }
        Ok((index / self.width, index % self.width))
    }

    /// (row, col) to raster index.
    pub fn rc_to_index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.height || col >= self.width {
            return Err(EngineError::InvalidConfig(format!(
                "grid cell ({row},{col}) out of range for {}x{}",
                self.height, self.width
            )));
        }
        Ok(row * self.width + col)
    }
}

/// Draft-token initialization strategy for fresh window slots.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitStrategy {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "h_repeat")]
    HorizontalRepeat,
    #[serde(rename = "v_repeat")]
    VerticalRepeat,
    #[serde(rename = "h_sample")]
    HorizontalSample,
    #[serde(rename = "v_sample")]
    VerticalSample,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 5] = [
        InitStrategy::Random,
        InitStrategy::HorizontalRepeat,
        InitStrategy::VerticalRepeat,
        InitStrategy::HorizontalSample,
        InitStrategy::VerticalSample,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InitStrategy::Random => "random",
            InitStrategy::HorizontalRepeat => "h_repeat",
            InitStrategy::VerticalRepeat => "v_repeat",
            InitStrategy::HorizontalSample => "h_sample",
            InitStrategy::VerticalSample => "v_sample",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        InitStrategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                EngineError::InvalidConfig(format!(
                    "unknown init strategy {s:?}; expected one of random, h_repeat, v_repeat, h_sample, v_sample"
                ))
            })
    }
}

/// Token currently occupying generated-sequence position `pos`, looking at
/// committed tokens first and then at the live window (which always starts
/// right after the committed prefix).
fn token_at(pos: usize, state: &PrefixState, window: &[DraftSlot]) -> Option<u32> {
    let n = state.committed.len();
    if pos < n {
        Some(state.committed[pos])
    } else if pos - n < window.len() {
        Some(window[pos - n].token)
    } else {
        None
    }
}

/// Shaped distribution associated with position `pos`: the slot reference
/// for live positions, the distribution cache for committed ones.
fn dist_at<'a>(pos: usize, state: &'a PrefixState, window: &'a [DraftSlot]) -> Option<&'a Distribution> {
    let n = state.committed.len();
    if pos < n {
        state.dist_cache.get(pos)
    } else if pos - n < window.len() {
        Some(&window[pos - n].ref_dist)
    } else {
        None
    }
}

fn random_slot(vocab: u32, rng: &mut SplitMix64) -> DraftSlot {
    let ref_dist = Distribution::uniform(vocab);
    let token = ref_dist.sample(rng);
    DraftSlot { token, ref_dist }
}

/// Initialize the draft slot at generated-sequence index `abs_index`.
///
/// `window` holds the slots already placed this iteration (the live window
/// under construction), which always begins at the committed-prefix
/// boundary. The slot's `ref_dist` never assigns zero probability to its own
/// token.
pub fn init_token(
    strategy: InitStrategy,
    abs_index: usize,
    state: &PrefixState,
    window: &[DraftSlot],
    geom: GridGeom,
    vocab: u32,
    rng: &mut SplitMix64,
) -> DraftSlot {
    debug_assert!(abs_index >= state.committed.len());
    debug_assert!(abs_index < geom.len());
    let row = abs_index / geom.width;
    let col = abs_index % geom.width;

    let neighbor = match strategy {
        InitStrategy::Random => None,
        InitStrategy::HorizontalRepeat | InitStrategy::HorizontalSample => {
            (col > 0).then(|| abs_index - 1)
        }
        InitStrategy::VerticalRepeat | InitStrategy::VerticalSample => {
            (row > 0).then(|| abs_index - geom.width)
        }
    };
    let Some(neighbor) = neighbor else {
        return random_slot(vocab, rng);
    };

    match strategy {
        InitStrategy::Random => unreachable!(),
        InitStrategy::HorizontalRepeat | InitStrategy::VerticalRepeat => {
            match token_at(neighbor, state, window) {
                Some(token) => DraftSlot { token, ref_dist: Distribution::point_mass(token, vocab) },
                None => random_slot(vocab, rng),
            }
        }
        InitStrategy::HorizontalSample | InitStrategy::VerticalSample => {
            match dist_at(neighbor, state, window) {
                Some(dist) => {
                    let ref_dist = dist.clone();
                    let token = ref_dist.sample(rng);
                    DraftSlot { token, ref_dist }
                }
                None => random_slot(vocab, rng),
            }
        }
    }
}
