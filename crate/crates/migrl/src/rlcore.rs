//! Group-relative policy optimization primitives.
//!
//! Implements the pieces shared by GRPO and DAPO: within-group reward
//! standardization as the advantage, the clipped importance-ratio surrogate,
//! a per-token k3 KL estimate against the reference policy, dynamic sampling
//! of non-degenerate groups, and the soft over-length penalty.
//!
//! GRPO aggregates sequence-level (mean over a rollout's tokens, then mean
//! over the group) and regularizes toward the reference policy with weight
//! `beta`. DAPO aggregates token-level (one sum over all tokens of all
//! groups), drops the KL term, relaxes the upper clip bound, and keeps only
//! groups whose rewards actually vary.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Errors from the RL core operations.
#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("group must contain at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("log-probability sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rollout is invalid: {0}")]
    InvalidRollout(String),
    #[error("advantages have not been computed for group {0}")]
    MissingAdvantages(u64),
    #[error("operation requires a non-empty group list")]
    EmptyGroups,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Policy-gradient objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Grpo,
    Dapo,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Dapo => "dapo",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grpo" => Ok(Algorithm::Grpo),
            "dapo" => Ok(Algorithm::Dapo),
            other => Err(format!("unknown algorithm '{other}' (expected grpo or dapo)")),
        }
    }
}

/// RL hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub algorithm: Algorithm,
    /// Rollouts sampled per prompt (G).
    pub group_size: usize,
    /// KL regularization weight; GRPO only.
    pub beta: f64,
    /// Lower clip offset: ratios below `1 - eps_low` are clipped.
    pub eps_low: f64,
    /// Upper clip offset: ratios above `1 + eps_high` are clipped.
    pub eps_high: f64,
    /// Threshold on the population standard deviation of a group's rewards
    /// below which the group carries no learning signal.
    pub variance_floor: f64,
    /// Hard response-length limit for the length penalty.
    pub max_len: usize,
    /// Width of the soft penalty band below `max_len`.
    pub cache_len: usize,
    /// Whether the soft length penalty is added to rewards (DAPO mode).
    pub use_length_penalty: bool,
}

impl RlConfig {
    /// GRPO defaults: G=8, beta=0.001, symmetric clip at 0.2.
    pub fn grpo() -> Self {
        Self {
            algorithm: Algorithm::Grpo,
            group_size: 8,
            beta: 0.001,
            eps_low: 0.2,
            eps_high: 0.2,
            variance_floor: 1e-6,
            max_len: 256,
            cache_len: 64,
            use_length_penalty: false,
        }
    }

    /// DAPO defaults: G=8, no KL, relaxed upper clip at 0.28, length penalty on.
    pub fn dapo() -> Self {
        Self {
            algorithm: Algorithm::Dapo,
            group_size: 8,
            beta: 0.0,
            eps_low: 0.2,
            eps_high: 0.28,
            variance_floor: 1e-6,
            max_len: 256,
            cache_len: 64,
            use_length_penalty: true,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if self.group_size < 2 {
            return Err(RlError::InvalidConfig("group_size must be >= 2".into()));
        }
        if !(self.eps_low > 0.0 && self.eps_low <= self.eps_high && self.eps_high < 1.0) {
            return Err(RlError::InvalidConfig(
                "clip bounds must satisfy 0 < eps_low <= eps_high < 1".into(),
            ));
        }
        if !(self.cache_len > 0 && self.cache_len < self.max_len) {
            return Err(RlError::InvalidConfig(
                "lengths must satisfy 0 < cache_len < max_len".into(),
            ));
        }
        if self.beta < 0.0 {
            return Err(RlError::InvalidConfig("beta must be >= 0".into()));
        }
        if self.variance_floor <= 0.0 {
            return Err(RlError::InvalidConfig("variance_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// One sampled completion with per-token log-probabilities under the
/// current, old (sampling-time), and reference policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub token_ids: Vec<u32>,
    pub logprobs_new: Vec<f64>,
    pub logprobs_old: Vec<f64>,
    pub logprobs_ref: Vec<f64>,
    /// Total reward from the composite breakdown.
    pub reward: f64,
}

impl Rollout {
    /// Validates the length and log-probability invariants.
    pub fn new(
        token_ids: Vec<u32>,
        logprobs_new: Vec<f64>,
        logprobs_old: Vec<f64>,
        logprobs_ref: Vec<f64>,
    ) -> Result<Self, RlError> {
        let n = token_ids.len();
        if n == 0 {
            return Err(RlError::InvalidRollout("rollout must have >= 1 token".into()));
        }
        for (name, lp) in [
            ("logprobs_new", &logprobs_new),
            ("logprobs_old", &logprobs_old),
            ("logprobs_ref", &logprobs_ref),
        ] {
            if lp.len() != n {
                return Err(RlError::LengthMismatch(n, lp.len()));
            }
            if lp.iter().any(|v| !v.is_finite() || *v > 0.0) {
                return Err(RlError::InvalidRollout(format!(
                    "{name} must be finite and <= 0"
                )));
            }
        }
        Ok(Self {
            token_ids,
            logprobs_new,
            logprobs_old,
            logprobs_ref,
            reward: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// The G rollouts sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub prompt_id: u64,
    pub rollouts: Vec<Rollout>,
    pub advantages: Option<Vec<f64>>,
}

impl RolloutGroup {
    pub fn new(prompt_id: u64, rollouts: Vec<Rollout>) -> Self {
        Self {
            prompt_id,
            rollouts,
            advantages: None,
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.rollouts.iter().map(Rollout::len).sum()
    }

    /// Computes and stores the group-relative advantages.
    pub fn compute_advantages(&mut self, variance_floor: f64) -> Result<(), RlError> {
        self.advantages = Some(group_advantages(&self.rewards(), variance_floor)?);
        Ok(())
    }

    fn advantages_or_err(&self) -> Result<&[f64], RlError> {
        self.advantages
            .as_deref()
            .ok_or(RlError::MissingAdvantages(self.prompt_id))
    }
}

/// Population standard deviation (divide by n, not n-1).
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

/// Group-relative advantages: `(r_i - mean) / std` with the population
/// standard deviation. A group whose std is below `variance_floor` carries
/// no signal and gets all-zero advantages instead of amplified noise.
pub fn group_advantages(rewards: &[f64], variance_floor: f64) -> Result<Vec<f64>, RlError> {
    if rewards.len() < 2 {
        return Err(RlError::GroupTooSmall(rewards.len()));
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let std = population_std(rewards);
    if std < variance_floor {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Per-token k3 KL estimate of `KL(new || ref)`, averaged over tokens:
/// `r - ln r - 1` with `r = exp(logprob_ref - logprob_new)`. Nonnegative,
/// and zero iff the sequences are identical.
pub fn kl_estimate(logprobs_new: &[f64], logprobs_ref: &[f64]) -> Result<f64, RlError> {
    if logprobs_new.len() != logprobs_ref.len() {
        return Err(RlError::LengthMismatch(
            logprobs_new.len(),
            logprobs_ref.len(),
        ));
    }
    if logprobs_new.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = logprobs_new
        .iter()
        .zip(logprobs_ref)
        .map(|(&lnew, &lref)| {
            let log_r = lref - lnew;
            log_r.exp() - log_r - 1.0
        })
        .sum();
    Ok(sum / logprobs_new.len() as f64)
}

/// The clipped surrogate for one token:
/// `min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps_low: f64, eps_high: f64) -> f64 {
    debug_assert!(ratio > 0.0, "importance ratio must be positive");
    let clipped = ratio.clamp(1.0 - eps_low, 1.0 + eps_high);
    (ratio * advantage).min(clipped * advantage)
}

fn per_token_terms(
    group: &RolloutGroup,
    cfg: &RlConfig,
) -> Result<Vec<(usize, f64)>, RlError> {
    // Returns (rollout length, summed clipped terms minus beta*k3) per rollout.
    let advantages = group.advantages_or_err()?;
    if advantages.len() != group.rollouts.len() {
        return Err(RlError::InvalidRollout(
            "advantage count does not match rollout count".into(),
        ));
    }
    let mut out = Vec::with_capacity(group.rollouts.len());
    for (rollout, &adv) in group.rollouts.iter().zip(advantages) {
        let mut sum = 0.0;
        for t in 0..rollout.len() {
            let ratio = (rollout.logprobs_new[t] - rollout.logprobs_old[t]).exp();
            sum += clipped_term(ratio, adv, cfg.eps_low, cfg.eps_high);
            if cfg.beta != 0.0 {
                let log_r = rollout.logprobs_ref[t] - rollout.logprobs_new[t];
                sum -= cfg.beta * (log_r.exp() - log_r - 1.0);
            }
        }
        out.push((rollout.len(), sum));
    }
    Ok(out)
}

/// Negative GRPO objective for one group, sequence-level aggregation:
/// mean over tokens within each rollout, then mean over the G rollouts,
/// with the per-token KL penalty weighted by `beta`.
pub fn grpo_loss(group: &RolloutGroup, cfg: &RlConfig) -> Result<f64, RlError> {
    if group.rollouts.is_empty() {
        return Err(RlError::EmptyGroups);
    }
    let mut objective = 0.0;
    for (len, sum) in per_token_terms(group, cfg)? {
        objective += sum / len as f64;
    }
    Ok(-(objective / group.rollouts.len() as f64))
}

/// Negative DAPO objective, token-level aggregation: sum of clipped terms
/// over all tokens of all rollouts of all groups, divided by the total token
/// count. No KL term; the clip is asymmetric via the config.
pub fn dapo_loss(groups: &[RolloutGroup], cfg: &RlConfig) -> Result<f64, RlError> {
    if groups.is_empty() {
        return Err(RlError::EmptyGroups);
    }
    let kl_free = RlConfig { beta: 0.0, ..cfg.clone() };
    let mut total_tokens = 0usize;
    let mut objective = 0.0;
    for group in groups {
        for (len, sum) in per_token_terms(group, &kl_free)? {
            total_tokens += len;
            objective += sum;
        }
    }
    if total_tokens == 0 {
        return Err(RlError::EmptyGroups);
    }
    Ok(-(objective / total_tokens as f64))
}

/// Keeps only groups whose rewards carry learning signal (population std at
/// or above the variance floor). Order is preserved; the result may be empty.
pub fn dynamic_sample_filter(groups: Vec<RolloutGroup>, cfg: &RlConfig) -> Vec<RolloutGroup> {
    groups
        .into_iter()
        .filter(|g| population_std(&g.rewards()) >= cfg.variance_floor)
        .collect()
}

/// Soft over-length penalty:
/// 0 up to `max_len - cache_len`, -1 beyond `max_len`, linear in between.
pub fn length_penalty(length: usize, cfg: &RlConfig) -> f64 {
    let knee = cfg.max_len - cfg.cache_len;
    if length <= knee {
        0.0
    } else if length > cfg.max_len {
        -1.0
    } else {
        (knee as f64 - length as f64) / cfg.cache_len as f64
    }
}

/// Fraction of groups whose rewards have population std below the variance
/// floor. With `exclude_ceiling`, groups whose maximum reward already sits at
/// the given ceiling are left out of the count entirely, mirroring the
/// "discard data with an initial reward at the top" diagnostic.
pub fn zero_variance_fraction(
    groups: &[RolloutGroup],
    cfg: &RlConfig,
    exclude_ceiling: Option<f64>,
) -> Result<f64, RlError> {
    if groups.is_empty() {
        return Err(RlError::EmptyGroups);
    }
    let mut counted = 0usize;
    let mut degenerate = 0usize;
    for group in groups {
        let rewards = group.rewards();
        if let Some(ceiling) = exclude_ceiling {
            let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if (max - ceiling).abs() < 1e-9 {
                continue;
            }
        }
        counted += 1;
        if population_std(&rewards) < cfg.variance_floor {
            degenerate += 1;
        }
    }
    if counted == 0 {
        return Ok(0.0);
    }
    Ok(degenerate as f64 / counted as f64)
}
