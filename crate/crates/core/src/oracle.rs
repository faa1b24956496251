//! Executable verification that speculative decoding preserves the shaped
//! autoregressive law.
//!
//! Two layers: [`one_step_marginal`] checks the accept-or-resample identity
//! analytically for a single slot (the combined law of "keep the draft with
//! probability `min(1, new/ref)`, otherwise draw from the calibrated
//! residual" must equal the fresh conditional exactly), and the
//! enumeration / Monte Carlo pair checks end-to-end sequence laws at tiny
//! scale. The conditional-independence assumption behind the identity is
//! structural here: a draft token never feeds into the distribution
//! computed for its own position, which is the model module's causal
//! consistency property.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::decoder::{decode, DecodeConfig};
use crate::model::{Distribution, Model, ModelSpec, TokenId};
use crate::rng::derive_seed;
use crate::{EngineError, Result};

/// Hard cap on `V^L` for exact enumeration.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exact or empirical probability of each length-L token sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDistribution {
    vocab: u32,
    len: usize,
    probs: HashMap<Vec<TokenId>, f64>,
}

impl SequenceDistribution {
    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, seq: &[TokenId]) -> f64 {
        self.probs.get(seq).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<TokenId>, f64)> {
        self.probs.iter().map(|(k, &v)| (k, v))
    }
}

/// Analytic one-step marginal of draft-then-accept-or-resample.
///
/// Computes `min(new, ref) + P_reject * residual` with
/// `P_reject = sum max(0, new - ref)` and
/// `residual = normalize(max(0, new - ref))`. For every pair of
/// distributions this equals `d_new`; the acceptance suite checks the
/// identity to 1e-12.
pub fn one_step_marginal(d_ref: &Distribution, d_new: &Distribution) -> Distribution {
    debug_assert_eq!(d_ref.len(), d_new.len());
    let positive: Vec<f64> = d_new
        .probs()
        .iter()
        .zip(d_ref.probs())
        .map(|(&n, &r)| (n - r).max(0.0))
        .collect();
    let p_reject: f64 = positive.iter().sum();
    let probs: Vec<f64> = d_new
        .probs()
        .iter()
        .zip(d_ref.probs())
        .zip(&positive)
        .map(|((&n, &r), &pos)| {
            let accept = n.min(r);
            if p_reject > 0.0 {
                accept + p_reject * (pos / p_reject)
            } else {
                accept
            }
        })
        .collect();
    Distribution::new(probs)
}

/// Exact shaped-AR law over all `V^L` sequences by the chain rule.
///
/// Zero-probability branches (tokens truncated away by top-K) are pruned,
/// so the walk visits only the reachable part of the tree. Guarded by
/// [`ENUMERATION_LIMIT`].
pub fn enumerate_ar_distribution(
    model: &Model,
    config: &DecodeConfig,
) -> Result<SequenceDistribution> {
    config.validate(model.vocab_size())?;
    let vocab = model.vocab_size();
    let len = config.total_tokens();
    let states = u32::try_from(len)
        .ok()
        .and_then(|l| u128::from(vocab).checked_pow(l))
        .unwrap_or(u128::MAX);
    if states > ENUMERATION_LIMIT {
        return Err(EngineError::EnumerationGuard { states, limit: ENUMERATION_LIMIT });
    }

    let mut probs = HashMap::new();
    let mut prefix: Vec<TokenId> = config.prompt.clone();
    let mut partial: Vec<TokenId> = Vec::with_capacity(len);
    walk(model, config, &mut prefix, &mut partial, 1.0, len, &mut probs)?;
    Ok(SequenceDistribution { vocab, len, probs })
}

fn walk(
    model: &Model,
    config: &DecodeConfig,
    prefix: &mut Vec<TokenId>,
    partial: &mut Vec<TokenId>,
    mass: f64,
    len: usize,
    out: &mut HashMap<Vec<TokenId>, f64>,
) -> Result<()> {
    if partial.len() == len {
        out.insert(partial.clone(), mass);
        return Ok(());
    }
    let dist = model.eval_window(prefix, &[0], config)?.remove(0);
    for v in 0..model.vocab_size() {
        let p = dist.prob(v);
        if p == 0.0 {
            continue;
        }
        prefix.push(v);
        partial.push(v);
        walk(model, config, prefix, partial, mass * p, len, out)?;
        prefix.pop();
        partial.pop();
    }
    Ok(())
}

/// Empirical sequence law of [`decode`] over independent seeded trials.
///
/// Trial `i` runs with seed `derive_seed(config.seed, i)`. Trials are
/// independent, so they run in parallel; counts merge commutatively and the
/// result is deterministic.
pub fn mc_decode_distribution(
    model: &Model,
    config: &DecodeConfig,
    trials: u64,
) -> Result<SequenceDistribution> {
    if trials == 0 {
        return Err(EngineError::InvalidConfig("trials must be at least 1".into()));
    }
    config.validate(model.vocab_size())?;
    let counts: HashMap<Vec<TokenId>, u64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(config.seed, i);
            decode(model, &cfg).map(|r| r.tokens)
        })
        .try_fold(HashMap::new, |mut acc: HashMap<Vec<TokenId>, u64>, tokens| {
            let tokens = tokens?;
            *acc.entry(tokens).or_insert(0) += 1;
            Ok::<_, EngineError>(acc)
        })
        .try_reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })?;

    let probs = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / trials as f64))
        .collect();
    Ok(SequenceDistribution { vocab: model.vocab_size(), len: config.total_tokens(), probs })
}

/// Total variation distance: half the L1 distance over the union support.
pub fn tv_distance(p: &SequenceDistribution, q: &SequenceDistribution) -> Result<f64> {
    if p.vocab != q.vocab || p.len != q.len {
        return Err(EngineError::ShapeMismatch);
    }
    let mut l1 = 0.0;
    for (seq, pp) in p.iter() {
        l1 += (pp - q.prob(seq)).abs();
    }
    for (seq, qq) in q.iter() {
        if p.probs.contains_key(seq) {
            continue;
        }
        l1 += qq;
    }
    Ok(l1 / 2.0)
}

/// Verdict emitted by the `oracle` CLI subcommand.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleVerdict {
    pub identity_max_err: f64,
    pub tv_sjd: f64,
    pub tv_sjdpp: f64,
    pub pass: bool,
}

/// The tiny configuration used for end-to-end law checks: a 2x2 grid over a
/// four-token vocabulary with top-3 truncation and a two-slot window.
pub fn tiny_law_config(mode: crate::decoder::DecodeMode, seed: u64) -> (ModelSpec, DecodeConfig) {
    let spec = ModelSpec::hash_logit(4, 2, 3.0, 11);
    let config = DecodeConfig {
        mode,
        window: 2,
        top_k: 3,
        temperature: 1.0,
        grid: crate::spatial_init::GridGeom::new(2, 2),
        init: crate::spatial_init::InitStrategy::Random,
        seed,
        ..DecodeConfig::default()
    };
    (spec, config)
}

/// Max L-infinity error of the one-step identity over `pairs` random
/// distribution pairs at each vocabulary size in `vocabs`. Pairs mix dense
/// Dirichlet draws with top-K-truncated ones so sparse supports are
/// exercised too.
pub fn identity_max_error(vocabs: &[u32], pairs: u32, seed: u64) -> f64 {
    let mut rng = crate::rng::SplitMix64::new(seed);
    let mut max_err = 0.0f64;
    for &v in vocabs {
        for i in 0..pairs {
            let truncate = i % 5 == 4;
            let d_ref = random_distribution(v, truncate, &mut rng);
            let d_new = random_distribution(v, truncate, &mut rng);
            let marginal = one_step_marginal(&d_ref, &d_new);
            for (m, n) in marginal.probs().iter().zip(d_new.probs()) {
                max_err = max_err.max((m - n).abs());
            }
        }
    }
    max_err
}

fn random_distribution(vocab: u32, truncate: bool, rng: &mut crate::rng::SplitMix64) -> Distribution {
    // Normalized exponentials give a flat Dirichlet draw.
    let mut w: Vec<f64> = (0..vocab).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    if truncate && vocab > 2 {
        let k = 1 + rng.below(u64::from(vocab) - 1) as usize;
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap());
        for &i in order.iter().skip(k) {
            w[i] = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / sum).collect())
}

/// Run the full oracle suite: the analytic identity at V in {2, 3, 8, 64}
/// plus Monte Carlo total-variation checks of SJD and SJD++ against the
/// exact shaped-AR law at the tiny configuration.
pub fn run_suite(trials: u64, seed: u64) -> Result<OracleVerdict> {
    let identity_max_err = identity_max_error(&[2, 3, 8, 64], 10_000, derive_seed(seed, 101));

    let (spec, sjd_cfg) = tiny_law_config(crate::decoder::DecodeMode::Sjd, seed);
    let model = Model::build(spec)?;
    let exact = enumerate_ar_distribution(&model, &sjd_cfg)?;
    let sjd_emp = mc_decode_distribution(&model, &sjd_cfg, trials)?;
    let tv_sjd = tv_distance(&sjd_emp, &exact)?;

    let (_, sjdpp_cfg) = tiny_law_config(crate::decoder::DecodeMode::Sjdpp, seed);
    let sjdpp_emp = mc_decode_distribution(&model, &sjdpp_cfg, trials)?;
    let tv_sjdpp = tv_distance(&sjdpp_emp, &exact)?;

    Ok(OracleVerdict {
        identity_max_err,
        tv_sjd,
        tv_sjdpp,
        pass: identity_max_err < 1e-12 && tv_sjd < 0.01 && tv_sjdpp < 0.05,
    })
}
