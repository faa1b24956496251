//! The four decoding modes: autoregressive, vanilla Jacobi, speculative
//! Jacobi (SJD) and speculative Jacobi with token reuse (SJD++).
//!
//! Every mode charges one NFE per loop iteration (one `eval_window` call)
//! and commits at least one token per iteration, so `steps <= N` and the
//! step compression ratio `S = N / steps` is at least 1. A run consumes a
//! single seeded RNG stream; the per-iteration draw order is fixed:
//!
//! 1. one uniform per verified slot, up to and including the first
//!    rejection (a rejected slot still consumes its acceptance uniform);
//! 2. one uniform for the residual resample when a rejection occurred;
//! 3. for each surviving slot in left-to-right order, one uniform iff the
//!    slot resamples (a reused slot consumes nothing);
//! 4. initialization draws for refilled tail slots, in slot order
//!    (`random`/`*_sample`: one each; `*_repeat`: none, one on fallback).
//!
//! Two runs with equal seeds therefore produce identical traces. Vanilla
//! Jacobi replaces steps 1-3 with deterministic greedy matching and
//! consumes uniforms only for initialization; autoregressive decoding
//! consumes exactly one uniform per token, even when the shaped
//! distribution is a point mass.
//!
//! Near the token budget the window shrinks to `min(W, N - n)`, so a run
//! never commits past its budget.

use serde::{Deserialize, Serialize};

use crate::model::{Distribution, MeteredModel, Model, TokenId};
use crate::rng::SplitMix64;
use crate::spatial_init::{init_token, GridGeom, InitStrategy};
use crate::{EngineError, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Ar,
    Jacobi,
    Sjd,
    Sjdpp,
}

impl DecodeMode {
    pub fn name(&self) -> &'static str {
        match self {
            DecodeMode::Ar => "ar",
            DecodeMode::Jacobi => "jacobi",
            DecodeMode::Sjd => "sjd",
            DecodeMode::Sjdpp => "sjdpp",
        }
    }
}

impl std::str::FromStr for DecodeMode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar" => Ok(DecodeMode::Ar),
            "jacobi" => Ok(DecodeMode::Jacobi),
            "sjd" => Ok(DecodeMode::Sjd),
            "sjdpp" => Ok(DecodeMode::Sjdpp),
            _ => Err(EngineError::InvalidConfig(format!(
                "unknown mode {s:?}; expected ar, jacobi, sjd or sjdpp"
            ))),
        }
    }
}

/// All decoding knobs for a single run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    /// Jacobi window size W.
    pub window: usize,
    /// Top-K truncation applied after temperature.
    pub top_k: usize,
    pub temperature: f64,
    /// Overrides the model spec's CFG weight when guidance is enabled.
    pub cfg_weight: Option<f64>,
    /// Reuse threshold tau; only consulted in `sjdpp` mode.
    pub reuse_threshold: f64,
    pub init: InitStrategy,
    pub grid: GridGeom,
    pub prompt: Vec<TokenId>,
    pub seed: u64,
    /// When false, surviving slots are discarded and re-initialized instead
    /// of refined. Ablation knob; leave true for normal decoding.
    pub refine: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Sjdpp,
            window: 16,
            top_k: 16,
            temperature: 1.0,
            cfg_weight: None,
            reuse_threshold: 0.5,
            init: InitStrategy::Random,
            grid: GridGeom::new(16, 16),
            prompt: Vec::new(),
            seed: 0,
            refine: true,
        }
    }
}

impl DecodeConfig {
    /// Token budget N (one token per grid cell).
    pub fn total_tokens(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self, vocab: u32) -> Result<()> {
        if self.window == 0 {
            return Err(EngineError::InvalidConfig("window must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(EngineError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(EngineError::InvalidConfig(
                "temperature must be positive and finite".into(),
            ));
        }
        if self.reuse_threshold.is_nan() || self.reuse_threshold < 0.0 {
            return Err(EngineError::InvalidConfig(
                "reuse_threshold must be non-negative".into(),
            ));
        }
        if let Some(w) = self.cfg_weight {
            if !w.is_finite() {
                return Err(EngineError::InvalidConfig("cfg_weight must be finite".into()));
            }
        }
        if self.grid.is_empty() {
            return Err(EngineError::InvalidConfig("grid must contain at least one cell".into()));
        }
        if let Some(&t) = self.prompt.iter().find(|&&t| t >= vocab) {
            return Err(EngineError::TokenOutOfRange { token: t, vocab });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Run state
// ---------------------------------------------------------------------------

/// Ring cache of the most recent per-position shaped distributions, keyed by
/// generated-sequence index. Sized `width + window + 1` so the above
/// neighbor (exactly `width` positions back) is always available to the
/// vertical sampling strategy.
#[derive(Clone, Debug)]
pub struct DistCache {
    slots: Vec<Option<(usize, Distribution)>>,
}

impl DistCache {
    pub fn new(capacity: usize) -> Self {
        Self { slots: vec![None; capacity.max(1)] }
    }

    pub fn insert(&mut self, pos: usize, dist: Distribution) {
        let k = pos % self.slots.len();
        self.slots[k] = Some((pos, dist));
    }

    pub fn get(&self, pos: usize) -> Option<&Distribution> {
        match &self.slots[pos % self.slots.len()] {
            Some((p, d)) if *p == pos => Some(d),
            _ => None,
        }
    }
}

/// Accepted-prefix bookkeeping for a run in progress.
#[derive(Clone, Debug)]
pub struct PrefixState {
    /// Generated tokens committed so far (prompt excluded).
    pub committed: Vec<TokenId>,
    /// ln of the shaped probability each committed token was drawn or
    /// accepted under.
    pub committed_logprobs: Vec<f64>,
    /// Decoder-side forward-pass count.
    pub nfe: usize,
    pub dist_cache: DistCache,
}

impl PrefixState {
    pub fn new(cache_capacity: usize) -> Self {
        Self {
            committed: Vec::new(),
            committed_logprobs: Vec::new(),
            nfe: 0,
            dist_cache: DistCache::new(cache_capacity),
        }
    }

    /// Append a token at the next generated position, caching the shaped
    /// distribution it was committed under.
    pub fn commit(&mut self, token: TokenId, logprob: f64, dist: Distribution) {
        let pos = self.committed.len();
        self.dist_cache.insert(pos, dist);
        self.committed.push(token);
        self.committed_logprobs.push(logprob);
    }
}

/// One Jacobi-window position: its current token and the distribution it is
/// drafted under (the denominator of its next acceptance ratio).
#[derive(Clone, Debug, PartialEq)]
pub struct DraftSlot {
    pub token: TokenId,
    pub ref_dist: Distribution,
}

/// Per-iteration trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub j: usize,
    pub accepted_count: usize,
    /// 1 when the iteration committed a residual-resampled (or Jacobi
    /// corrected) token, 0 otherwise.
    pub committed_by_resample: usize,
    pub reused_count: usize,
    pub resampled_count: usize,
    pub fresh_count: usize,
    /// Confidence ratios computed for surviving slots this iteration.
    pub confidences: Vec<f64>,
}

/// Output of a completed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub tokens: Vec<TokenId>,
    /// Total NFE (model forward passes).
    pub steps: usize,
    /// N / steps.
    pub step_compression: f64,
    pub iteration_trace: Vec<IterationRecord>,
    pub logprob_mean: f64,
    pub logprob_std: f64,
}

// ---------------------------------------------------------------------------
// Verification primitives
// ---------------------------------------------------------------------------

/// Result of sequentially verifying a window.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    /// Length of the accepted prefix.
    pub accepted_count: usize,
    /// Index of the first rejected slot, `None` when all were accepted.
    pub rejected_at: Option<usize>,
    /// The acceptance uniforms consumed, in slot order.
    pub uniforms: Vec<f64>,
}

/// Sequential speculative verification.
///
/// Slot `s` is accepted iff `r < min(1, new[token] / ref[token])` with a
/// fresh uniform `r`; scanning stops at the first failure, which implicitly
/// rejects every later slot. A `0/0` ratio counts as 0 (reject). Exactly
/// `accepted_count + 1` uniforms are consumed on rejection, `L` when all
/// slots are accepted.
pub fn verify_window(
    drafts: &[DraftSlot],
    new_dists: &[Distribution],
    rng: &mut SplitMix64,
) -> VerifyOutcome {
    debug_assert_eq!(drafts.len(), new_dists.len());
    let mut uniforms = Vec::with_capacity(drafts.len());
    for (s, slot) in drafts.iter().enumerate() {
        let r = rng.uniform();
        uniforms.push(r);
        let p_new = new_dists[s].prob(slot.token);
        let p_ref = slot.ref_dist.prob(slot.token);
        let ratio = if p_new == 0.0 {
            0.0
        } else if p_ref == 0.0 {
            f64::INFINITY
        } else {
            p_new / p_ref
        };
        if r >= ratio.min(1.0) {
            return VerifyOutcome { accepted_count: s, rejected_at: Some(s), uniforms };
        }
    }
    VerifyOutcome { accepted_count: drafts.len(), rejected_at: None, uniforms }
}

/// Sample the replacement token at the first rejected slot from the
/// calibrated residual `normalize(max(0, new - ref))`.
///
/// Consumes exactly one uniform. If the positive part has negligible mass
/// (analytically unreachable once a rejection occurred) the draw falls
/// back to `new` itself.
pub fn residual_resample(
    d_new: &Distribution,
    d_ref: &Distribution,
    rng: &mut SplitMix64,
) -> TokenId {
    debug_assert_eq!(d_new.len(), d_ref.len());
    let mut residual: Vec<f64> = d_new
        .probs()
        .iter()
        .zip(d_ref.probs())
        .map(|(&n, &r)| (n - r).max(0.0))
        .collect();
    let total: f64 = residual.iter().sum();
    let u = rng.uniform();
    if total < 1e-12 {
        return d_new.sample_with_uniform(u);
    }
    for p in &mut residual {
        *p /= total;
    }
    Distribution::new(residual).sample_with_uniform(u)
}

/// Outcome of refining one surviving slot.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub token: TokenId,
    /// Confidence ratio `new[token] / ref[token]` (0/0 counts as 0).
    pub confidence: f64,
    pub reused: bool,
}

/// Refinement of a slot that survived past the first rejection.
///
/// In `sjd` mode the token is always resampled from the fresh conditional
/// `d_s` (one uniform). In `sjdpp` mode the token is kept when its
/// confidence exceeds `tau` (no uniform) and resampled otherwise. Either
/// way the slot's reference becomes `d_s`.
pub fn refine_or_reuse(
    slot: &DraftSlot,
    d_s: &Distribution,
    mode: DecodeMode,
    tau: f64,
    rng: &mut SplitMix64,
) -> RefineOutcome {
    let p_new = d_s.prob(slot.token);
    let p_ref = slot.ref_dist.prob(slot.token);
    let confidence = if p_new == 0.0 {
        0.0
    } else if p_ref == 0.0 {
        f64::INFINITY
    } else {
        p_new / p_ref
    };
    if mode == DecodeMode::Sjdpp && confidence > tau {
        RefineOutcome { token: slot.token, confidence, reused: true }
    } else {
        RefineOutcome { token: d_s.sample(rng), confidence, reused: false }
    }
}

// ---------------------------------------------------------------------------
// Decode loops
// ---------------------------------------------------------------------------

/// Run one decode with the mode selected by the config.
///
/// The result is fully determined by `(model, config)`.
pub fn decode(model: &Model, config: &DecodeConfig) -> Result<RunResult> {
    let (result, model_nfe) = decode_counted(model, config)?;
    debug_assert_eq!(result.steps as u64, model_nfe);
    Ok(result)
}

/// Like [`decode`], additionally returning the model-side NFE counter so
/// callers can cross-check it against the decoder-side step count.
pub fn decode_counted(model: &Model, config: &DecodeConfig) -> Result<(RunResult, u64)> {
    config.validate(model.vocab_size())?;
    let metered = MeteredModel::new(model);
    let mut rng = SplitMix64::new(config.seed);
    let result = match config.mode {
        DecodeMode::Ar => decode_ar(&metered, config, &mut rng)?,
        DecodeMode::Jacobi => decode_jacobi(&metered, config, &mut rng)?,
        DecodeMode::Sjd | DecodeMode::Sjdpp => decode_sjd(&metered, config, &mut rng)?,
    };
    Ok((result, metered.nfe()))
}

fn cache_capacity(config: &DecodeConfig) -> usize {
    config.grid.width + config.window + 1
}

fn finalize(state: PrefixState, trace: Vec<IterationRecord>) -> RunResult {
    let n = state.committed.len();
    debug_assert_eq!(state.nfe, trace.len());
    let steps = trace.len();
    let mean = state.committed_logprobs.iter().sum::<f64>() / n as f64;
    let var = state
        .committed_logprobs
        .iter()
        .map(|lp| (lp - mean) * (lp - mean))
        .sum::<f64>()
        / n as f64;
    RunResult {
        tokens: state.committed,
        steps,
        step_compression: n as f64 / steps as f64,
        iteration_trace: trace,
        logprob_mean: mean,
        logprob_std: var.sqrt(),
    }
}

/// Extend the window to `min(W, N - n)` fresh slots; returns how many were
/// added. Slots are initialized in order so later ones can see earlier
/// ones.
fn refill_window(
    window: &mut Vec<DraftSlot>,
    config: &DecodeConfig,
    state: &PrefixState,
    vocab: u32,
    rng: &mut SplitMix64,
) -> usize {
    let n = state.committed.len();
    let target = config.window.min(config.total_tokens() - n);
    debug_assert!(window.len() <= target);
    let mut added = 0;
    while window.len() < target {
        let abs = n + window.len();
        let slot = init_token(config.init, abs, state, window, config.grid, vocab, rng);
        window.push(slot);
        added += 1;
    }
    added
}

fn decode_ar(
    model: &MeteredModel<'_>,
    config: &DecodeConfig,
    rng: &mut SplitMix64,
) -> Result<RunResult> {
    let n_total = config.total_tokens();
    let mut state = PrefixState::new(cache_capacity(config));
    let mut seq = config.prompt.clone();
    let mut trace = Vec::with_capacity(n_total);
    for j in 0..n_total {
        // The draft token value is irrelevant at window length one.
        let dists = model.eval_window(&seq, &[0], config)?;
        state.nfe += 1;
        let d = &dists[0];
        let token = d.sample(rng);
        state.commit(token, d.prob(token).ln(), d.clone());
        seq.push(token);
        trace.push(IterationRecord {
            j,
            accepted_count: 1,
            committed_by_resample: 0,
            reused_count: 0,
            resampled_count: 0,
            fresh_count: 0,
            confidences: Vec::new(),
        });
    }
    Ok(finalize(state, trace))
}

/// Vanilla Jacobi decoding with the deterministic convergence criterion.
///
/// Intended for greedy sampling (K = 1); with larger K it still runs, with
/// drafts updated by the greedy of the shaped distributions. Each iteration
/// accepts the longest prefix of slots whose token equals the greedy of its
/// fresh conditional. Because the conditional at the first mismatch is
/// exact (everything before it just verified), its greedy token is
/// committed as well, so every iteration makes progress.
fn decode_jacobi(
    model: &MeteredModel<'_>,
    config: &DecodeConfig,
    rng: &mut SplitMix64,
) -> Result<RunResult> {
    let n_total = config.total_tokens();
    let vocab = model.vocab_size();
    let mut state = PrefixState::new(cache_capacity(config));
    let mut seq = config.prompt.clone();
    let mut window = Vec::new();
    refill_window(&mut window, config, &state, vocab, rng);
    let mut trace = Vec::new();
    let mut j = 0;
    while state.committed.len() < n_total {
        let draft_tokens: Vec<TokenId> = window.iter().map(|s| s.token).collect();
        let dists = model.eval_window(&seq, &draft_tokens, config)?;
        state.nfe += 1;
        let len = window.len();

        let mut matched = 0;
        while matched < len && window[matched].token == dists[matched].greedy() {
            matched += 1;
        }
        for s in 0..matched {
            let t = window[s].token;
            state.commit(t, dists[s].prob(t).ln(), dists[s].clone());
            seq.push(t);
        }
        let mut corrected = 0;
        if matched < len {
            let t = dists[matched].greedy();
            state.commit(t, dists[matched].prob(t).ln(), dists[matched].clone());
            seq.push(t);
            corrected = 1;
        }

        let survivor_start = matched + corrected;
        let mut next_window: Vec<DraftSlot> = (survivor_start..len)
            .map(|s| DraftSlot { token: dists[s].greedy(), ref_dist: dists[s].clone() })
            .collect();
        let resampled = next_window.len();
        let fresh = refill_window(&mut next_window, config, &state, vocab, rng);
        trace.push(IterationRecord {
            j,
            accepted_count: matched,
            committed_by_resample: corrected,
            reused_count: 0,
            resampled_count: resampled,
            fresh_count: fresh,
            confidences: Vec::new(),
        });
        window = next_window;
        j += 1;
    }
    Ok(finalize(state, trace))
}

/// Speculative Jacobi decoding; covers both `sjd` and `sjdpp` (the modes
/// differ only in how surviving slots are refined).
fn decode_sjd(
    model: &MeteredModel<'_>,
    config: &DecodeConfig,
    rng: &mut SplitMix64,
) -> Result<RunResult> {
    let n_total = config.total_tokens();
    let vocab = model.vocab_size();
    let mut state = PrefixState::new(cache_capacity(config));
    let mut seq = config.prompt.clone();
    let mut window = Vec::new();
    refill_window(&mut window, config, &state, vocab, rng);
    let mut trace = Vec::new();
    let mut j = 0;
    while state.committed.len() < n_total {
        let draft_tokens: Vec<TokenId> = window.iter().map(|s| s.token).collect();
        let dists = model.eval_window(&seq, &draft_tokens, config)?;
        state.nfe += 1;
        let len = window.len();

        let outcome = verify_window(&window, &dists, rng);
        for s in 0..outcome.accepted_count {
            let t = window[s].token;
            state.commit(t, dists[s].prob(t).ln(), dists[s].clone());
            seq.push(t);
        }
        let mut by_resample = 0;
        if let Some(s_star) = outcome.rejected_at {
            let t = residual_resample(&dists[s_star], &window[s_star].ref_dist, rng);
            state.commit(t, dists[s_star].prob(t).ln(), dists[s_star].clone());
            seq.push(t);
            by_resample = 1;
        }

        let survivor_start = outcome.accepted_count + by_resample;
        let mut next_window = Vec::new();
        let mut reused = 0;
        let mut resampled = 0;
        let mut confidences = Vec::new();
        if config.refine {
            for s in survivor_start..len {
                let refined =
                    refine_or_reuse(&window[s], &dists[s], config.mode, config.reuse_threshold, rng);
                confidences.push(refined.confidence);
                if refined.reused {
                    reused += 1;
                } else {
                    resampled += 1;
                }
                next_window.push(DraftSlot { token: refined.token, ref_dist: dists[s].clone() });
            }
        }
        let fresh = refill_window(&mut next_window, config, &state, vocab, rng);
        trace.push(IterationRecord {
            j,
            accepted_count: outcome.accepted_count,
            committed_by_resample: by_resample,
            reused_count: reused,
            resampled_count: resampled,
            fresh_count: fresh,
            confidences,
        });
        window = next_window;
        j += 1;
    }
    Ok(finalize(state, trace))
}
