//! Deterministic synthetic annotators.
//!
//! Each prompt carries a signed latent quality gap (positive favours model
//! A). The gap drives two things independently: how far model B's token
//! distribution is tilted away from model A's uniform one, and how likely an
//! annotator is to call the pair a tie. The harness therefore has to recover
//! the decisive prompts from log-probabilities alone.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregation::{Choice, Vote};
use crate::metrics::LogProbSequence;
use crate::ranking::{CompletionPair, EvaluationSet, FamilyMode};
use crate::rng::{keyed_coin, stream_rng, Stream};
use crate::storage::{PositionMap, VoteRecord};
use crate::{Error, Result};

pub const SIM_MODEL_A: &str = "sim-model-a";
pub const SIM_MODEL_B: &str = "sim-model-b";

/// Gap spread of the calibration fixture; with the default annotator model
/// it yields a pairwise agreement rate of about 0.65.
pub const CALIBRATION_GAP_SCALE: f64 = 3.0;

pub const DEFAULT_SEQ_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExperiment {
    pub n_prompts: usize,
    pub latent_gaps: Vec<f64>,
    /// Standard deviation of per-token log-prob jitter.
    pub dissimilarity_noise: f64,
    pub seed: u64,
    /// Tokens per completion (shared by both models).
    pub seq_len: usize,
}

impl SyntheticExperiment {
    pub fn new(latent_gaps: Vec<f64>, dissimilarity_noise: f64, seed: u64) -> Self {
        Self {
            n_prompts: latent_gaps.len(),
            latent_gaps,
            dissimilarity_noise,
            seed,
            seq_len: DEFAULT_SEQ_LEN,
        }
    }

    /// Gaps drawn from Normal(`gap_mean`, `gap_scale`) on the seed's gap stream.
    pub fn sampled(
        n_prompts: usize,
        gap_mean: f64,
        gap_scale: f64,
        dissimilarity_noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let normal = Normal::new(gap_mean, gap_scale)
            .map_err(|e| Error::Config(format!("gap distribution: {e}")))?;
        let mut rng = stream_rng(seed, Stream::SimulatorGaps);
        let gaps = (0..n_prompts).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self::new(gaps, dissimilarity_noise, seed))
    }

    /// Calibration fixture: zero-mean gaps, so |gap| is folded-normal.
    pub fn calibration(n_prompts: usize, seed: u64) -> Self {
        Self::sampled(n_prompts, 0.0, CALIBRATION_GAP_SCALE, 0.0, seed).expect("valid fixture")
    }

    fn validate(&self) -> Result<()> {
        if self.n_prompts == 0 || self.latent_gaps.len() != self.n_prompts {
            return Err(Error::Config(format!(
                "need n_prompts >= 1 matching {} latent gaps",
                self.latent_gaps.len()
            )));
        }
        if self.latent_gaps.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("latent gaps must be finite".into()));
        }
        if self.dissimilarity_noise.is_nan() || self.dissimilarity_noise < 0.0 || self.seq_len < 2 {
            return Err(Error::Config("noise must be >= 0 and seq_len >= 2".into()));
        }
        Ok(())
    }

    pub fn prompt_id(i: usize) -> String {
        format!("sim-{i:05}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorModel {
    pub n_annotators: usize,
    pub tie_base: f64,
    pub tie_decay: f64,
    pub flip_noise: f64,
}

impl Default for AnnotatorModel {
    fn default() -> Self {
        Self {
            n_annotators: 10,
            tie_base: 0.8,
            tie_decay: 1.0,
            flip_noise: 0.1,
        }
    }
}

impl AnnotatorModel {
    pub fn p_tie(&self, gap: f64) -> f64 {
        self.tie_base * (-self.tie_decay * gap.abs()).exp()
    }

    fn validate(&self) -> Result<()> {
        if self.n_annotators == 0
            || !(self.tie_base > 0.0 && self.tie_base < 1.0)
            || self.tie_decay.is_nan()
            || self.tie_decay <= 0.0
            || !(0.0..0.5).contains(&self.flip_noise)
        {
            return Err(Error::Config(format!("invalid annotator model {self:?}")));
        }
        Ok(())
    }
}

/// Builds the pair set. Model A's tokens all have probability 1/2; model B's
/// log-probs fall off linearly across the sequence with slope |gap|, so the
/// sum-normalized KL divergence grows strictly with |gap|.
pub fn generate_pairs(exp: &SyntheticExperiment) -> Result<EvaluationSet> {
    exp.validate()?;
    let mut rng = stream_rng(exp.seed, Stream::SimulatorPairs);
    let base = 0.5f64.ln();
    let last = (exp.seq_len - 1) as f64;
    let mut jitter = move || exp.dissimilarity_noise * rng.sample::<f64, _>(StandardNormal);

    let pairs = exp
        .latent_gaps
        .iter()
        .enumerate()
        .map(|(i, gap)| {
            let tilt = gap.abs();
            let mut a = Vec::with_capacity(exp.seq_len);
            let mut b = Vec::with_capacity(exp.seq_len);
            for j in 0..exp.seq_len {
                a.push((base + jitter()).min(0.0));
                b.push((base - tilt * j as f64 / last + jitter()).min(0.0));
            }
            let id = SyntheticExperiment::prompt_id(i);
            // Neutral texts; which model gets which label is a seeded coin.
            let (first, second) = (
                format!("Synthetic answer {i}, variant 1."),
                format!("Synthetic answer {i}, variant 2."),
            );
            let (text_a, text_b) = if keyed_coin(exp.seed, "completion-text", &id) {
                (first, second)
            } else {
                (second, first)
            };
            Ok(CompletionPair::new(
                id,
                format!("Synthetic prompt {i}"),
                SIM_MODEL_A,
                SIM_MODEL_B,
                text_a,
                text_b,
                LogProbSequence::new_named(a, "logprobs_a")?,
                LogProbSequence::new_named(b, "logprobs_b")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    EvaluationSet::new(pairs, SIM_MODEL_A, SIM_MODEL_B, FamilyMode::IntraFamily)
}

pub fn annotator_id(a: usize) -> String {
    format!("annotator-{a:02}")
}

fn sim_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Simulated vote log, numbered from sequence 1, one vote per annotator per
/// prompt in prompt-major order.
///
/// Every vote consumes exactly four uniforms (tie, flip, coin for a zero
/// gap, screen position), so negating all gaps under the same seed swaps
/// every A/B preference and changes nothing else.
pub fn simulate_vote_log(
    exp: &SyntheticExperiment,
    model: &AnnotatorModel,
) -> Result<Vec<VoteRecord>> {
    exp.validate()?;
    model.validate()?;
    let mut rng = stream_rng(exp.seed, Stream::SimulatorVotes);
    let epoch = sim_epoch();
    let mut records = Vec::with_capacity(exp.n_prompts * model.n_annotators);
    for (i, &gap) in exp.latent_gaps.iter().enumerate() {
        let p_tie = model.p_tie(gap);
        let prompt_id = SyntheticExperiment::prompt_id(i);
        for a in 0..model.n_annotators {
            let u_tie: f64 = rng.gen();
            let u_flip: f64 = rng.gen();
            let u_coin: f64 = rng.gen();
            let u_pos: f64 = rng.gen();
            let choice = if u_tie < p_tie {
                Choice::BothGood
            } else {
                let favoured = if gap > 0.0 {
                    Choice::PreferA
                } else if gap < 0.0 {
                    Choice::PreferB
                } else if u_coin < 0.5 {
                    Choice::PreferA
                } else {
                    Choice::PreferB
                };
                if u_flip < model.flip_noise {
                    favoured.swapped()
                } else {
                    favoured
                }
            };
            let seq = records.len() as u64 + 1;
            records.push(VoteRecord {
                seq,
                annotator_id: annotator_id(a),
                prompt_id: prompt_id.clone(),
                choice,
                position_map: if u_pos < 0.5 {
                    PositionMap::ALeft
                } else {
                    PositionMap::ARight
                },
                submitted_at: epoch + Duration::seconds(seq as i64),
            });
        }
    }
    Ok(records)
}

pub fn simulate_votes(exp: &SyntheticExperiment, model: &AnnotatorModel) -> Result<Vec<Vote>> {
    Ok(simulate_vote_log(exp, model)?
        .iter()
        .map(VoteRecord::vote)
        .collect())
}
