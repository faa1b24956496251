//! Categorical autoregressive model contract plus the two synthetic models
//! that back it.
//!
//! A model call ([`Model::eval_window`]) is one parallel forward pass over a
//! draft window: it returns one shaped conditional distribution per draft
//! position, where position `s` conditions on `prefix ++ draft[0..s]`
//! (position 0 sees the prefix only). Exactly one NFE is charged per call,
//! independent of the window length and of the internal double evaluation
//! when classifier-free guidance is enabled.
//!
//! Shaping is applied in a fixed order: raw logits, then CFG combination
//! (when enabled), then temperature, then top-K truncation, then
//! renormalization. Every downstream draft, acceptance ratio, residual and
//! refinement draw operates on these shaped distributions.
//!
//! # Hash-logit recipe
//!
//! `HashLogit` produces `logits[v] = sharpness * u` where `u` in `[0, 1)`
//! comes from a chained SplitMix64 mix over 64-bit words, bit-exact across
//! platforms:
//!
//! ```text
//! h = mix64(model_seed)
//! for each context token t (oldest to newest, length context_len,
//!                           left-padded with the sentinel -1,
//!                           encoded as two's-complement u64):
//!     h = mix64(h ^ t)
//! h = mix64(h ^ position)        // absolute position in the sequence
//! h = mix64(h ^ v)               // candidate token id
//! u = (h >> 11) / 2^53
//! ```
//!
//! `mix64` is the one-shot SplitMix64 step from [`crate::rng`].
//!
//! # Grid n-gram corpus recipe
//!
//! `GridNGram` trains Laplace-smoothed n-gram counts on a procedurally
//! generated corpus of raster-serialized token grids. Grid `g` is drawn from
//! a fresh `SplitMix64` stream seeded with `derive_seed(corpus_seed, g)`:
//!
//! ```text
//! fill the height x width grid with recipe.background
//! k = min_rects + below(max_rects - min_rects + 1)   // one draw, always
//! repeat k times:
//!     r0 = below(height); h = 1 + below(height - r0)
//!     c0 = below(width);  w = 1 + below(width  - c0)
//!     tok = below(vocab_size)
//!     fill rows r0..r0+h, cols c0..c0+w with tok
//! ```
//!
//! Counting walks each grid in raster order; the context for position `i` is
//! the previous `order - 1` tokens, left-padded with the sentinel -1 at the
//! start of the grid. The conditional is `(count + a) / (total + a * V)`
//! with smoothing `a`, and its logits are the logarithms of those values.

use std::cell::Cell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decoder::DecodeConfig;
use crate::rng::{derive_seed, mix64, SplitMix64};
use crate::{EngineError, Result};

/// Index into the vocabulary, in `[0, vocab_size)`.
pub type TokenId = u32;

/// Pre-softmax scores, one per vocabulary entry. Always finite.
pub type Logits = Vec<f64>;

/// Sentinel used when a context window reaches past the start of a sequence.
pub const CONTEXT_PAD: i64 = -1;

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

/// A probability vector over the vocabulary.
///
/// Invariants: entries are non-negative and sum to 1 within 1e-9; after
/// top-K filtering at most K entries are nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Self {
        let d = Self { probs };
        debug_assert!(d.is_normalized(), "unnormalized distribution: {:?}", d.probs);
        d
    }

    pub fn uniform(vocab: u32) -> Self {
        Self::new(vec![1.0 / f64::from(vocab); vocab as usize])
    }

    pub fn point_mass(token: TokenId, vocab: u32) -> Self {
        let mut probs = vec![0.0; vocab as usize];
        probs[token as usize] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token as usize]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        let sum: f64 = self.probs.iter().sum();
        (sum - 1.0).abs() <= 1e-9 && self.probs.iter().all(|&p| p >= 0.0)
    }

    /// Inverse-CDF draw for a given uniform, scanning token ids in ascending
    /// order. Only entries with positive probability can be selected; if
    /// floating-point rounding leaves `u` past the accumulated total, the
    /// highest positive-probability id is returned.
    pub fn sample_with_uniform(&self, u: f64) -> TokenId {
        let mut cum = 0.0;
        let mut last_positive = 0u32;
        for (id, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last_positive = id as u32;
                if u < cum {
                    return id as u32;
                }
            }
        }
        last_positive
    }

    /// Draw a token, consuming exactly one uniform from `rng`.
    pub fn sample(&self, rng: &mut SplitMix64) -> TokenId {
        let u = rng.uniform();
        self.sample_with_uniform(u)
    }

    /// Argmax with ties broken toward the lowest token id.
    pub fn greedy(&self) -> TokenId {
        let mut best = 0usize;
        for (id, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = id;
            }
        }
        best as u32
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

/// Classifier-free guidance settings carried by a model spec.
///
/// When present, `eval_window` evaluates the model a second time with the
/// run's prompt replaced by `uncond_prompt` (empty by default) and combines
/// the two logit vectors before temperature and top-K. The weight can be
/// overridden per run via `DecodeConfig::cfg_weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfgSpec {
    pub weight: f64,
    #[serde(default)]
    pub uncond_prompt: Vec<TokenId>,
}

/// Parameters of the procedural rectangle-grid corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecipe {
    pub num_grids: usize,
    pub height: usize,
    pub width: usize,
    pub min_rects: usize,
    pub max_rects: usize,
    /// Token every grid starts filled with.
    pub background: TokenId,
}

impl Default for CorpusRecipe {
    fn default() -> Self {
        Self {
            num_grids: 64,
            height: 16,
            width: 16,
            min_rects: 1,
            max_rects: 4,
            background: 0,
        }
    }
}

/// Which synthetic model backs a run, and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelSpec {
    /// Deterministic hash-driven logits; `sharpness` controls entropy
    /// (0 = uniform everywhere) and `context_len` the Markov order.
    #[serde(rename = "hash_logit")]
    HashLogit {
        vocab_size: u32,
        context_len: usize,
        sharpness: f64,
        model_seed: u64,
        #[serde(default)]
        cfg: Option<CfgSpec>,
    },
    /// Laplace-smoothed n-gram trained on the rectangle-grid corpus,
    /// giving conditionals with genuine spatial locality.
    #[serde(rename = "grid_ngram")]
    GridNGram {
        vocab_size: u32,
        order: usize,
        smoothing: f64,
        corpus_seed: u64,
        #[serde(default)]
        recipe: CorpusRecipe,
        #[serde(default)]
        cfg: Option<CfgSpec>,
    },
}

impl ModelSpec {
    pub fn hash_logit(vocab_size: u32, context_len: usize, sharpness: f64, model_seed: u64) -> Self {
        ModelSpec::HashLogit { vocab_size, context_len, sharpness, model_seed, cfg: None }
    }

    pub fn grid_ngram(vocab_size: u32, order: usize, smoothing: f64, corpus_seed: u64, recipe: CorpusRecipe) -> Self {
        ModelSpec::GridNGram { vocab_size, order, smoothing, corpus_seed, recipe, cfg: None }
    }

    /// Named presets accepted by the CLI `--model` flag.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "hash" => Some(Self::hash_logit(64, 2, 4.0, 0)),
            "hash-sharp" => Some(Self::hash_logit(64, 2, 8.0, 0)),
            "ngram" => Some(Self::grid_ngram(8, 2, 0.1, 0, CorpusRecipe::default())),
            _ => None,
        }
    }

    pub fn vocab_size(&self) -> u32 {
        match self {
            ModelSpec::HashLogit { vocab_size, .. } | ModelSpec::GridNGram { vocab_size, .. } => {
                *vocab_size
            }
        }
    }

    pub fn cfg(&self) -> Option<&CfgSpec> {
        match self {
            ModelSpec::HashLogit { cfg, .. } | ModelSpec::GridNGram { cfg, .. } => cfg.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size() < 2 {
            return Err(EngineError::InvalidConfig(format!(
                "vocab_size must be at least 2, got {}",
                self.vocab_size()
            )));
        }
        match self {
            ModelSpec::HashLogit { context_len, sharpness, .. } => {
                if *context_len == 0 {
                    return Err(EngineError::InvalidConfig(
                        "hash context_len must be at least 1".into(),
                    ));
                }
                if !sharpness.is_finite() || *sharpness < 0.0 {
                    return Err(EngineError::InvalidConfig(
                        "hash sharpness must be finite and non-negative".into(),
                    ));
                }
            }
            ModelSpec::GridNGram { order, smoothing, recipe, vocab_size, .. } => {
                if !(*order == 2 || *order == 3) {
                    return Err(EngineError::InvalidConfig(format!(
                        "n-gram order must be 2 or 3, got {order}"
                    )));
                }
                if !smoothing.is_finite() || *smoothing <= 0.0 {
                    return Err(EngineError::InvalidConfig(
                        "n-gram smoothing must be positive and finite".into(),
                    ));
                }
                if recipe.height == 0 || recipe.width == 0 {
                    return Err(EngineError::InvalidConfig(
                        "corpus grids must be non-empty".into(),
                    ));
                }
                if recipe.max_rects < recipe.min_rects {
                    return Err(EngineError::InvalidConfig(
                        "corpus max_rects must be >= min_rects".into(),
                    ));
                }
                if recipe.background >= *vocab_size {
                    return Err(EngineError::TokenOutOfRange {
                        token: recipe.background,
                        vocab: *vocab_size,
                    });
                }
            }
        }
        if let Some(cfg) = self.cfg() {
            if !cfg.weight.is_finite() {
                return Err(EngineError::InvalidConfig("cfg weight must be finite".into()));
            }
            if let Some(&t) = cfg.uncond_prompt.iter().find(|&&t| t >= self.vocab_size()) {
                return Err(EngineError::TokenOutOfRange { token: t, vocab: self.vocab_size() });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shaping pipeline
// ---------------------------------------------------------------------------

/// Classifier-free guidance combination: `uncond + w * (cond - uncond)`.
pub fn cfg_combine(cond: &[f64], uncond: &[f64], weight: f64) -> Logits {
    debug_assert_eq!(cond.len(), uncond.len());
    cond.iter()
        .zip(uncond)
        .map(|(&c, &u)| u + weight * (c - u))
        .collect()
}

/// Softmax at the given temperature, then keep the K most probable entries
/// (ties broken toward the lower token id) and renormalize.
pub fn shape_distribution(logits: &[f64], temperature: f64, top_k: usize) -> Distribution {
    debug_assert!(temperature > 0.0);
    debug_assert!(top_k >= 1);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    if top_k < probs.len() {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        // Sort by probability descending, id ascending on ties; the sort is
        // stable so equal keys keep ascending-id order.
        order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap());
        let mut kept = vec![false; probs.len()];
        for &id in order.iter().take(top_k) {
            kept[id] = true;
        }
        let mut kept_sum = 0.0;
        for (id, p) in probs.iter_mut().enumerate() {
            if kept[id] {
                kept_sum += *p;
            } else {
                *p = 0.0;
            }
        }
        for p in &mut probs {
            *p /= kept_sum;
        }
    }
    Distribution::new(probs)
}

/// Greedy conversion of a distribution into a token (argmax, lowest id wins
/// ties).
pub fn greedy(dist: &Distribution) -> TokenId {
    dist.greedy()
}

/// Draw a token from a shaped distribution by inverse CDF, consuming exactly
/// one uniform.
pub fn sample(dist: &Distribution, rng: &mut SplitMix64) -> TokenId {
    dist.sample(rng)
}

// ---------------------------------------------------------------------------
// Hash-logit evaluation
// ---------------------------------------------------------------------------

fn hash_u01(model_seed: u64, context: &[i64], position: u64, token: u32) -> f64 {
    let mut h = mix64(model_seed);
    for &t in context {
        h = mix64(h ^ (t as u64));
    }
    h = mix64(h ^ position);
    h = mix64(h ^ u64::from(token));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Raw hash-model logits for an explicit context window.
///
/// `context_window` must have length `context_len`, left-padded with the
/// sentinel -1. The chain of SplitMix64 mixes is documented in the module
/// docs; the function is total and bit-exact.
///
/// Panics if `spec` is not a `HashLogit`.
pub fn hash_logit_logits(spec: &ModelSpec, context_window: &[i64], position: u64) -> Logits {
    match spec {
        ModelSpec::HashLogit { vocab_size, context_len, sharpness, model_seed, .. } => {
            debug_assert_eq!(context_window.len(), *context_len);
            (0..*vocab_size)
                .map(|v| sharpness * hash_u01(*model_seed, context_window, position, v))
                .collect()
        }
        ModelSpec::GridNGram { .. } => panic!("hash_logit_logits called on a grid n-gram spec"),
    }
}

/// The last `len` tokens of `seq[..pos]` as i64, left-padded with -1.
fn padded_context(seq: &[TokenId], pos: usize, len: usize) -> Vec<i64> {
    let mut ctx = vec![CONTEXT_PAD; len];
    for k in 0..len.min(pos) {
        ctx[len - 1 - k] = i64::from(seq[pos - 1 - k]);
    }
    ctx
}

// ---------------------------------------------------------------------------
// Grid n-gram model
// ---------------------------------------------------------------------------

/// Generate the rectangle-grid corpus for a recipe. Each grid is serialized
/// in raster order. Exposed so tests can count transitions by hand.
pub fn generate_corpus(recipe: &CorpusRecipe, corpus_seed: u64, vocab_size: u32) -> Vec<Vec<TokenId>> {
    let mut grids = Vec::with_capacity(recipe.num_grids);
    for g in 0..recipe.num_grids {
        let mut rng = SplitMix64::new(derive_seed(corpus_seed, g as u64));
        let mut grid = vec![recipe.background; recipe.height * recipe.width];
        let span = (recipe.max_rects - recipe.min_rects + 1) as u64;
        let k = recipe.min_rects + rng.below(span) as usize;
        for _ in 0..k {
            let r0 = rng.below(recipe.height as u64) as usize;
            let h = 1 + rng.below((recipe.height - r0) as u64) as usize;
            let c0 = rng.below(recipe.width as u64) as usize;
            let w = 1 + rng.below((recipe.width - c0) as u64) as usize;
            let tok = rng.below(u64::from(vocab_size)) as u32;
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    grid[r * recipe.width + c] = tok;
                }
            }
        }
        grids.push(grid);
    }
    grids
}

#[derive(Clone, Debug)]
struct CountRow {
    counts: Vec<u64>,
    total: u64,
}

#[derive(Clone, Debug)]
struct NgramTable {
    context_len: usize,
    vocab: u32,
    smoothing: f64,
    rows: HashMap<Vec<i64>, CountRow>,
}

impl NgramTable {
    fn train(
        order: usize,
        smoothing: f64,
        corpus_seed: u64,
        recipe: &CorpusRecipe,
        vocab: u32,
    ) -> Result<Self> {
        if recipe.num_grids == 0 {
            return Err(EngineError::EmptyCorpus);
        }
        let context_len = order - 1;
        let mut rows: HashMap<Vec<i64>, CountRow> = HashMap::new();
        for grid in generate_corpus(recipe, corpus_seed, vocab) {
            for i in 0..grid.len() {
                let ctx = padded_context(&grid, i, context_len);
                let row = rows.entry(ctx).or_insert_with(|| CountRow {
                    counts: vec![0; vocab as usize],
                    total: 0,
                });
                row.counts[grid[i] as usize] += 1;
                row.total += 1;
            }
        }
        Ok(Self { context_len, vocab, smoothing, rows })
    }

    /// Log of the smoothed conditional; unseen contexts fall back to the
    /// uniform `a / (a * V)` automatically.
    fn logits(&self, ctx: &[i64]) -> Logits {
        let a = self.smoothing;
        let denom_base = a * f64::from(self.vocab);
        match self.rows.get(ctx) {
            Some(row) => {
                let denom = row.total as f64 + denom_base;
                row.counts
                    .iter()
                    .map(|&c| ((c as f64 + a) / denom).ln())
                    .collect()
            }
            None => vec![(a / denom_base).ln(); self.vocab as usize],
        }
    }
}

// ---------------------------------------------------------------------------
// Model: the evaluation surface
// ---------------------------------------------------------------------------

/// A constructed model: the spec plus any trained state. Immutable after
/// construction; evaluation is a pure function of its arguments, so a model
/// may be shared freely across concurrent runs.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    ngram: Option<NgramTable>,
}

impl Model {
    /// Validate the spec and train the n-gram table when needed.
    pub fn build(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let ngram = match &spec {
            ModelSpec::GridNGram { order, smoothing, corpus_seed, recipe, vocab_size, .. } => Some(
                NgramTable::train(*order, *smoothing, *corpus_seed, recipe, *vocab_size)?,
            ),
            ModelSpec::HashLogit { .. } => None,
        };
        Ok(Self { spec, ngram })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn vocab_size(&self) -> u32 {
        self.spec.vocab_size()
    }

    /// Raw (unshaped) logits for the token at `pos` in `seq`, conditioned on
    /// `seq[..pos]`.
    fn conditional_logits(&self, seq: &[TokenId], pos: usize) -> Logits {
        match &self.spec {
            ModelSpec::HashLogit { context_len, sharpness, model_seed, vocab_size, .. } => {
                let ctx = padded_context(seq, pos, *context_len);
                (0..*vocab_size)
                    .map(|v| sharpness * hash_u01(*model_seed, &ctx, pos as u64, v))
                    .collect()
            }
            ModelSpec::GridNGram { .. } => {
                let table = self.ngram.as_ref().expect("n-gram table trained at build time");
                let ctx = padded_context(seq, pos, table.context_len);
                table.logits(&ctx)
            }
        }
    }

    /// One parallel forward pass over a draft window.
    ///
    /// Returns the shaped conditional for each draft position; entry `s`
    /// conditions on `prefix ++ draft[0..s]`. Later draft tokens never
    /// influence earlier outputs. With CFG enabled the model is evaluated a
    /// second time on the prompt-substituted sequence, but the call still
    /// counts as a single NFE.
    pub fn eval_window(
        &self,
        prefix: &[TokenId],
        draft: &[TokenId],
        config: &DecodeConfig,
    ) -> Result<Vec<Distribution>> {
        if draft.is_empty() {
            return Err(EngineError::EmptyDraft);
        }
        let vocab = self.vocab_size();
        if let Some(&t) = prefix.iter().chain(draft).find(|&&t| t >= vocab) {
            return Err(EngineError::TokenOutOfRange { token: t, vocab });
        }

        let mut seq = Vec::with_capacity(prefix.len() + draft.len());
        seq.extend_from_slice(prefix);
        seq.extend_from_slice(draft);

        // CFG substitutes the run prompt with the spec's unconditional
        // prompt and re-evaluates on that sequence.
        let uncond = self.spec.cfg().map(|cfg_spec| {
            let prompt_len = config.prompt.len().min(prefix.len());
            let mut useq = cfg_spec.uncond_prompt.clone();
            useq.extend_from_slice(&seq[prompt_len..]);
            let weight = config.cfg_weight.unwrap_or(cfg_spec.weight);
            let uprefix_len = cfg_spec.uncond_prompt.len() + (prefix.len() - prompt_len);
            (useq, uprefix_len, weight)
        });

        let mut out = Vec::with_capacity(draft.len());
        for s in 0..draft.len() {
            let pos = prefix.len() + s;
            let mut logits = self.conditional_logits(&seq, pos);
            if let Some((useq, uprefix_len, weight)) = &uncond {
                let ulogits = self.conditional_logits(useq, uprefix_len + s);
                logits = cfg_combine(&logits, &ulogits, *weight);
            }
            out.push(shape_distribution(&logits, config.temperature, config.top_k));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// NFE accounting
// ---------------------------------------------------------------------------

/// Forward-pass counter owned by a single run. The decoder keeps its own
/// iteration count; reports require the two to agree.
#[derive(Debug, Default)]
pub struct NfeMeter {
    count: Cell<u64>,
}

impl NfeMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }
}

/// A model handle that charges one NFE per `eval_window` call.
pub struct MeteredModel<'a> {
    model: &'a Model,
    meter: NfeMeter,
}

impl<'a> MeteredModel<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self { model, meter: NfeMeter::new() }
    }

    pub fn vocab_size(&self) -> u32 {
        self.model.vocab_size()
    }

    pub fn nfe(&self) -> u64 {
        self.meter.count()
    }

    pub fn eval_window(
        &self,
        prefix: &[TokenId],
        draft: &[TokenId],
        config: &DecodeConfig,
    ) -> Result<Vec<Distribution>> {
        self.meter.count.set(self.meter.count.get() + 1);
        self.model.eval_window(prefix, draft, config)
    }
}
