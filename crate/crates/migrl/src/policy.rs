//! Order-n character softmax policy with exact analytic gradients.
//!
//! The policy is a table mapping a context window of `order` token indices to
//! a logit vector over the vocabulary; sampling is ancestral from the softmax
//! at each step. The table is small enough that the gradient of the GRPO and
//! DAPO losses can be written out exactly, which is what lets the whole
//! optimization stack be verified against finite differences.
//!
//! Sampling is reproducible under parallelism: every rollout derives its own
//! counter-based RNG from `(seed, prompt_id, rollout index)`, so results do
//! not depend on scheduling order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::rlcore::{dapo_loss, grpo_loss, Algorithm, RlConfig, RlError, Rollout, RolloutGroup};
use crate::util::mix;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("vocabulary must contain at least 2 regular symbols, all distinct")]
    InvalidVocabulary,
    #[error("character '{ch}' at position {position} is not in the vocabulary")]
    OutOfVocabulary { ch: char, position: usize },
    #[error("token id {0} is out of range for vocabulary of size {1}")]
    TokenOutOfRange(u32, usize),
    #[error("completion must be non-empty")]
    EmptyCompletion,
    #[error("group size must be >= 2, got {0}")]
    GroupTooSmall(usize),
    #[error("max_len must be >= 1")]
    ZeroMaxLen,
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sentinel characters representing the reserved markers in the symbol
/// table. Control characters, so they can never collide with program text.
const BOS_CHAR: char = '\u{2}';
const EOS_CHAR: char = '\u{3}';

/// Ordered character vocabulary with reserved BOS (index 0) and EOS
/// (index 1) markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: BTreeMap<char, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from the regular symbols; BOS and EOS are
    /// prepended automatically.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self, PolicyError> {
        let mut all = vec![BOS_CHAR, EOS_CHAR];
        all.extend(symbols);
        let mut index = BTreeMap::new();
        for (i, &ch) in all.iter().enumerate() {
            if index.insert(ch, i as u32).is_some() {
                return Err(PolicyError::InvalidVocabulary);
            }
        }
        if all.len() < 4 {
            return Err(PolicyError::InvalidVocabulary);
        }
        Ok(Self { symbols: all, index })
    }

    pub fn bos(&self) -> u32 {
        0
    }

    pub fn eos(&self) -> u32 {
        1
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn token(&self, ch: char) -> Option<u32> {
        self.index.get(&ch).copied()
    }

    pub fn symbol(&self, token: u32) -> Option<char> {
        self.symbols.get(token as usize).copied()
    }

    /// Maps text to token ids; fails on the first out-of-vocabulary
    /// character, naming its position.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, PolicyError> {
        text.chars()
            .enumerate()
            .map(|(position, ch)| {
                self.token(ch)
                    .ok_or(PolicyError::OutOfVocabulary { ch, position })
            })
            .collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize); BOS/EOS markers render as
    /// nothing so sampled rollouts can be passed directly.
    pub fn detokenize(&self, tokens: &[u32]) -> Result<String, PolicyError> {
        let mut out = String::with_capacity(tokens.len());
        for &t in tokens {
            let ch = self
                .symbol(t)
                .ok_or(PolicyError::TokenOutOfRange(t, self.len()))?;
            if ch != BOS_CHAR && ch != EOS_CHAR {
                out.push(ch);
            }
        }
        Ok(out)
    }
}

/// Gradient with respect to the logit table; missing contexts are zero.
pub type GradTable = BTreeMap<Vec<u32>, Vec<f64>>;

/// Default context order.
pub const DEFAULT_ORDER: usize = 2;

/// Parameters of the toy policy: a lazily materialized dense logit table
/// keyed by the last `order` token indices. Absent contexts are all-zero,
/// i.e. a uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicyParams {
    vocab: Vocabulary,
    order: usize,
    logits: BTreeMap<Vec<u32>, Vec<f64>>,
}

impl ToyPolicyParams {
    pub fn new(vocab: Vocabulary, order: usize) -> Self {
        assert!(order >= 1, "context order must be >= 1");
        Self {
            vocab,
            order,
            logits: BTreeMap::new(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of materialized contexts.
    pub fn table_len(&self) -> usize {
        self.logits.len()
    }

    pub fn logit(&self, ctx: &[u32], token: u32) -> f64 {
        self.logits
            .get(ctx)
            .map(|row| row[token as usize])
            .unwrap_or(0.0)
    }

    pub fn set_logit(&mut self, ctx: &[u32], token: u32, value: f64) {
        let v = self.vocab.len();
        let row = self
            .logits
            .entry(ctx.to_vec())
            .or_insert_with(|| vec![0.0; v]);
        row[token as usize] = value;
    }

    /// Contexts that have been materialized so far.
    pub fn contexts(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.logits.keys()
    }

    /// Log-softmax over the vocabulary for one context.
    pub fn context_logprobs(&self, ctx: &[u32]) -> Vec<f64> {
        match self.logits.get(ctx) {
            Some(row) => log_softmax(row),
            None => vec![-(self.vocab.len() as f64).ln(); self.vocab.len()],
        }
    }

    /// Softmax probabilities for one context.
    pub fn context_probs(&self, ctx: &[u32]) -> Vec<f64> {
        self.context_logprobs(ctx).iter().map(|lp| lp.exp()).collect()
    }

    /// The context window preceding position `pos` of the completion, over
    /// the virtual sequence `BOS^order ++ prompt ++ completion`.
    fn context_at(&self, prompt: &[u32], completion: &[u32], pos: usize) -> Vec<u32> {
        let n = self.order;
        let total = prompt.len() + pos;
        let mut ctx = Vec::with_capacity(n);
        for k in 0..n {
            let idx = total as i64 - n as i64 + k as i64;
            if idx < 0 {
                ctx.push(self.vocab.bos());
            } else {
                let i = idx as usize;
                ctx.push(if i < prompt.len() {
                    prompt[i]
                } else {
                    completion[i - prompt.len()]
                });
            }
        }
        ctx
    }

    /// Deep, immutable copy serving as the old or reference policy.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    /// Writes the versioned checkpoint; the byte stream round-trips exactly.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), PolicyError> {
        let file = CheckpointFile::from_params(self);
        let text =
            serde_json::to_string(&file).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, PolicyError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        file.into_params()
    }

    /// The checkpoint as a JSON value, for embedding in larger state files.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(CheckpointFile::from_params(self)).expect("checkpoint serializes")
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, PolicyError> {
        let file: CheckpointFile =
            serde_json::from_value(value).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        file.into_params()
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    order: usize,
    symbols: String,
    logits: Vec<(Vec<u32>, Vec<f64>)>,
}

impl CheckpointFile {
    fn from_params(params: &ToyPolicyParams) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            order: params.order,
            // Skip the two reserved markers; Vocabulary::new re-adds them.
            symbols: params.vocab.symbols[2..].iter().collect(),
            logits: params.logits.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    fn into_params(self) -> Result<ToyPolicyParams, PolicyError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let vocab = Vocabulary::new(self.symbols.chars())?;
        let mut params = ToyPolicyParams::new(vocab, self.order);
        let v = params.vocab.len();
        for (ctx, row) in self.logits {
            if ctx.len() != self.order || row.len() != v {
                return Err(PolicyError::Checkpoint(
                    "logit table entry has wrong shape".into(),
                ));
            }
            params.logits.insert(ctx, row);
        }
        Ok(params)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn rollout_seed(seed: u64, prompt_id: u64, rollout_idx: usize) -> u64 {
    mix(mix(seed, prompt_id), rollout_idx as u64)
}

fn sample_one(
    params: &ToyPolicyParams,
    prompt: &[u32],
    max_len: usize,
    rng_seed: u64,
) -> (Vec<u32>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut tokens: Vec<u32> = Vec::new();
    let mut logprobs: Vec<f64> = Vec::new();
    let eos = params.vocab.eos();
    while tokens.len() < max_len {
        let ctx = params.context_at(prompt, &tokens, tokens.len());
        let lps = params.context_logprobs(&ctx);
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut chosen = (lps.len() - 1) as u32;
        for (i, lp) in lps.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                chosen = i as u32;
                break;
            }
        }
        tokens.push(chosen);
        logprobs.push(lps[chosen as usize]);
        if chosen == eos {
            break;
        }
    }
    (tokens, logprobs)
}

/// Samples G rollouts for one prompt. Deterministic in
/// `(params, prompt, prompt_id, g, max_len, seed)` and independent of
/// evaluation order; `logprobs_new`, `logprobs_old`, and `logprobs_ref` are
/// all filled with the sampling-time log-probabilities.
pub fn sample_rollouts(
    params: &ToyPolicyParams,
    prompt: &[u32],
    prompt_id: u64,
    g: usize,
    max_len: usize,
    seed: u64,
) -> Result<RolloutGroup, PolicyError> {
    if g < 2 {
        return Err(PolicyError::GroupTooSmall(g));
    }
    if max_len == 0 {
        return Err(PolicyError::ZeroMaxLen);
    }
    let sampled = exec::map_indices(g, |i| {
        sample_one(params, prompt, max_len, rollout_seed(seed, prompt_id, i))
    });
    let mut rollouts = Vec::with_capacity(g);
    for (tokens, logprobs) in sampled {
        rollouts.push(Rollout::new(
            tokens,
            logprobs.clone(),
            logprobs.clone(),
            logprobs,
        )?);
    }
    Ok(RolloutGroup::new(prompt_id, rollouts))
}

/// Per-token conditional log-probabilities of `completion` given `prompt`.
pub fn sequence_logprobs(
    params: &ToyPolicyParams,
    prompt: &[u32],
    completion: &[u32],
) -> Result<Vec<f64>, PolicyError> {
    if completion.is_empty() {
        return Err(PolicyError::EmptyCompletion);
    }
    let v = params.vocab.len() as u32;
    for &t in prompt.iter().chain(completion) {
        if t >= v {
            return Err(PolicyError::TokenOutOfRange(t, v as usize));
        }
    }
    let mut out = Vec::with_capacity(completion.len());
    for (pos, &tok) in completion.iter().enumerate() {
        let ctx = params.context_at(prompt, completion, pos);
        out.push(params.context_logprobs(&ctx)[tok as usize]);
    }
    Ok(out)
}

/// Greedy (argmax) completion, used for deterministic held-out evaluation.
pub fn greedy_completion(params: &ToyPolicyParams, prompt: &[u32], max_len: usize) -> Vec<u32> {
    let mut tokens: Vec<u32> = Vec::new();
    let eos = params.vocab.eos();
    while tokens.len() < max_len {
        let ctx = params.context_at(prompt, &tokens, tokens.len());
        let lps = params.context_logprobs(&ctx);
        let mut best = 0usize;
        for (i, lp) in lps.iter().enumerate() {
            if *lp > lps[best] {
                best = i;
            }
        }
        tokens.push(best as u32);
        if best as u32 == eos {
            break;
        }
    }
    tokens
}

/// One prompt's sampled group, kept together with the prompt tokens so the
/// loss can be re-evaluated as a function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroup {
    pub prompt: Vec<u32>,
    pub group: RolloutGroup,
}

/// A full batch of sampled groups plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub groups: Vec<SampledGroup>,
    pub seed: u64,
}

/// Recomputes `logprobs_new` for every rollout under `params`, leaving the
/// old and reference log-probabilities untouched.
pub fn refresh_new_logprobs(
    params: &ToyPolicyParams,
    sampled: &mut SampledGroup,
) -> Result<(), PolicyError> {
    for rollout in &mut sampled.group.rollouts {
        rollout.logprobs_new = sequence_logprobs(params, &sampled.prompt, &rollout.token_ids)?;
    }
    Ok(())
}

/// The training loss for `groups` as a function of `params`: mean per-group
/// GRPO loss, or the joint token-level DAPO loss. Rewards and advantages are
/// taken as fixed.
pub fn loss_value(
    params: &ToyPolicyParams,
    groups: &[SampledGroup],
    cfg: &RlConfig,
) -> Result<f64, PolicyError> {
    if groups.is_empty() {
        return Err(PolicyError::Rl(RlError::EmptyGroups));
    }
    let mut refreshed: Vec<SampledGroup> = groups.to_vec();
    for g in &mut refreshed {
        refresh_new_logprobs(params, g)?;
    }
    match cfg.algorithm {
        Algorithm::Grpo => {
            let mut acc = 0.0;
            for g in &refreshed {
                acc += grpo_loss(&g.group, cfg)?;
            }
            Ok(acc / refreshed.len() as f64)
        }
        Algorithm::Dapo => {
            let plain: Vec<RolloutGroup> = refreshed.into_iter().map(|g| g.group).collect();
            Ok(dapo_loss(&plain, cfg)?)
        }
    }
}

/// Analytic gradient of [`loss_value`] with respect to every logit entry
/// touched by the rollouts; untouched contexts are absent (zero). Returns
/// the loss as well.
pub fn loss_gradient(
    params: &ToyPolicyParams,
    groups: &[SampledGroup],
    cfg: &RlConfig,
) -> Result<(f64, GradTable), PolicyError> {
    let loss = loss_value(params, groups, cfg)?;

    let total_tokens: usize = groups.iter().map(|g| g.group.total_tokens()).sum();
    let n_groups = groups.len();

    // Per-group partials computed independently, then merged in group order
    // so the reduction is bit-reproducible.
    let partials = exec::map_slice(groups, |sampled| {
        grad_for_group(params, sampled, cfg, n_groups, total_tokens)
    });

    let mut grad: GradTable = BTreeMap::new();
    for partial in partials {
        for (ctx, row) in partial? {
            let acc = grad
                .entry(ctx)
                .or_insert_with(|| vec![0.0; params.vocab.len()]);
            for (a, b) in acc.iter_mut().zip(row) {
                *a += b;
            }
        }
    }
    Ok((loss, grad))
}

fn grad_for_group(
    params: &ToyPolicyParams,
    sampled: &SampledGroup,
    cfg: &RlConfig,
    n_groups: usize,
    total_tokens: usize,
) -> Result<GradTable, PolicyError> {
    let group = &sampled.group;
    let advantages = group
        .advantages
        .as_deref()
        .ok_or(RlError::MissingAdvantages(group.prompt_id))?;

    let mut grad: GradTable = BTreeMap::new();
    let v = params.vocab.len();

    for (rollout, &adv) in group.rollouts.iter().zip(advantages) {
        let len = rollout.len();
        // Outer weight of one token's objective term.
        let weight = match cfg.algorithm {
            Algorithm::Grpo => 1.0 / (n_groups as f64 * group.rollouts.len() as f64 * len as f64),
            Algorithm::Dapo => 1.0 / total_tokens as f64,
        };
        for (pos, &tok) in rollout.token_ids.iter().enumerate() {
            let ctx = params.context_at(&sampled.prompt, &rollout.token_ids, pos);
            let lps = params.context_logprobs(&ctx);
            let lnew = lps[tok as usize];
            let ratio = (lnew - rollout.logprobs_old[pos]).exp();

            // d(surrogate)/d(lnew): zero where the active clip flattens it.
            let upper_clipped = adv > 0.0 && ratio > 1.0 + cfg.eps_high;
            let lower_clipped = adv < 0.0 && ratio < 1.0 - cfg.eps_low;
            let mut d_obj = if upper_clipped || lower_clipped {
                0.0
            } else {
                adv * ratio
            };
            if cfg.algorithm == Algorithm::Grpo && cfg.beta != 0.0 {
                // k3 = r - log r - 1 with r = exp(lref - lnew), so
                // d(-beta*k3)/d(lnew) = beta*(r - 1).
                let r = (rollout.logprobs_ref[pos] - lnew).exp();
                d_obj += cfg.beta * (r - 1.0);
            }
            // The loss is the negative objective.
            let coef = -weight * d_obj;

            let row = grad.entry(ctx.clone()).or_insert_with(|| vec![0.0; v]);
            for (sym, slot) in row.iter_mut().enumerate() {
                let p = lps[sym].exp();
                let indicator = if sym as u32 == tok { 1.0 } else { 0.0 };
                *slot += coef * (indicator - p);
            }
        }
    }
    Ok(grad)
}

/// Gradient-descent step: `logits <- logits - lr * grad`, as a pure value
/// update so snapshots of the previous parameters stay valid.
pub fn apply_update(params: &ToyPolicyParams, grad: &GradTable, lr: f64) -> ToyPolicyParams {
    assert!(lr >= 0.0, "learning rate must be nonnegative");
    let mut next = params.clone();
    let v = next.vocab.len();
    for (ctx, row) in grad {
        // Keep the table canonical: never materialize a row that stays
        // all-zero, and drop rows that return to exactly zero.
        if !params.logits.contains_key(ctx) && row.iter().all(|g| *g == 0.0) {
            continue;
        }
        let slot = next
            .logits
            .entry(ctx.clone())
            .or_insert_with(|| vec![0.0; v]);
        for (s, g) in slot.iter_mut().zip(row) {
            *s -= lr * g;
        }
        if slot.iter().all(|s| *s == 0.0) {
            next.logits.remove(ctx);
        }
    }
    next
}
