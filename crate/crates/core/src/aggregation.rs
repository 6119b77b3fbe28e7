//! Soft-vote aggregation of annotator votes into per-prompt outcomes.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ranking::FamilyMode;
use crate::{Error, Result};

/// Slack on the inclusive tie boundary so thresholds like 0.2 behave the same
/// regardless of how the vote margin rounds.
const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    PreferA,
    PreferB,
    BothGood,
    BothBad,
}

impl Choice {
    /// Annotation-level label: a tie credits both models with 1.
    pub fn label_scores(self) -> (f64, f64) {
        match self {
            Choice::PreferA => (1.0, 0.0),
            Choice::PreferB => (0.0, 1.0),
            Choice::BothGood | Choice::BothBad => (1.0, 1.0),
        }
    }

    /// Complementary per-vote scores averaged by soft voting.
    pub fn soft_scores(self) -> (f64, f64) {
        match self {
            Choice::PreferA => (1.0, 0.0),
            Choice::PreferB => (0.0, 1.0),
            Choice::BothGood | Choice::BothBad => (0.5, 0.5),
        }
    }

    /// The same judgement with models A and B relabelled.
    pub fn swapped(self) -> Self {
        match self {
            Choice::PreferA => Choice::PreferB,
            Choice::PreferB => Choice::PreferA,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub annotator_id: String,
    pub prompt_id: String,
    pub choice: Choice,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    AWins,
    BWins,
    Tie,
}

impl Outcome {
    pub fn swapped(self) -> Self {
        match self {
            Outcome::AWins => Outcome::BWins,
            Outcome::BWins => Outcome::AWins,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedOutcome {
    pub prompt_id: String,
    pub mean_score_a: f64,
    pub mean_score_b: f64,
    pub outcome: Outcome,
    pub n_votes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub tie_threshold: f64,
}

impl AggregationConfig {
    pub fn new(tie_threshold: f64) -> Result<Self> {
        let c = Self { tie_threshold };
        c.validate()?;
        Ok(c)
    }

    pub fn for_family(mode: FamilyMode) -> Self {
        Self {
            tie_threshold: mode.default_tie_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tie_threshold) {
            return Err(Error::Config(format!(
                "tie threshold must lie in [0, 1), got {}",
                self.tie_threshold
            )));
        }
        Ok(())
    }
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self::for_family(FamilyMode::IntraFamily)
    }
}

/// Soft vote over one prompt's (already de-duplicated) votes.
///
/// Ties are decided on the absolute difference of the mean scores, with the
/// threshold itself counting as a tie.
pub fn soft_vote(votes: &[Vote], config: &AggregationConfig) -> Result<AggregatedOutcome> {
    let first = votes
        .first()
        .ok_or_else(|| Error::InsufficientData("soft vote needs at least one vote".into()))?;
    if let Some(v) = votes.iter().find(|v| v.prompt_id != first.prompt_id) {
        return Err(Error::Contract(format!(
            "votes for prompts {} and {} passed to one soft vote",
            first.prompt_id, v.prompt_id
        )));
    }

    let (mut a, mut b, mut ties) = (0usize, 0usize, 0usize);
    for v in votes {
        match v.choice {
            Choice::PreferA => a += 1,
            Choice::PreferB => b += 1,
            Choice::BothGood | Choice::BothBad => ties += 1,
        }
    }
    let n = votes.len() as f64;
    let mean_score_a = (a as f64 + 0.5 * ties as f64) / n;
    let mean_score_b = (b as f64 + 0.5 * ties as f64) / n;
    // meanA - meanB reduces to (a - b) / n exactly.
    let margin = a.abs_diff(b) as f64 / n;
    let outcome = if margin <= config.tie_threshold + BOUNDARY_SLACK {
        Outcome::Tie
    } else if a > b {
        Outcome::AWins
    } else {
        Outcome::BWins
    };
    Ok(AggregatedOutcome {
        prompt_id: first.prompt_id.clone(),
        mean_score_a,
        mean_score_b,
        outcome,
        n_votes: votes.len(),
    })
}

/// Elo match scores: 1 for a win, 1/2 for a tie, 0 for a loss.
pub fn outcome_to_elo_scores(outcome: &AggregatedOutcome) -> (f64, f64) {
    outcome_scores(outcome.outcome)
}

pub fn outcome_scores(outcome: Outcome) -> (f64, f64) {
    match outcome {
        Outcome::AWins => (1.0, 0.0),
        Outcome::BWins => (0.0, 1.0),
        Outcome::Tie => (0.5, 0.5),
    }
}

/// Groups votes by prompt, preserving input order within each group.
pub fn group_by_prompt(votes: &[Vote]) -> BTreeMap<String, Vec<Vote>> {
    let mut groups: BTreeMap<String, Vec<Vote>> = BTreeMap::new();
    for v in votes {
        groups
            .entry(v.prompt_id.clone())
            .or_default()
            .push(v.clone());
    }
    groups
}

/// Soft-votes every prompt that has at least `min_votes` votes.
pub fn aggregate_all(
    votes: &[Vote],
    config: &AggregationConfig,
    min_votes: usize,
) -> Result<BTreeMap<String, AggregatedOutcome>> {
    group_by_prompt(votes)
        .into_iter()
        .filter(|(_, vs)| vs.len() >= min_votes.max(1))
        .map(|(id, vs)| soft_vote(&vs, config).map(|o| (id, o)))
        .collect()
}

/// Mean over prompts of the share of vote pairs that agree exactly.
/// Prompts with fewer than two votes are skipped.
pub fn agreement_rate<'a, I>(groups: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [Vote]>,
{
    let mut total = 0.0;
    let mut prompts = 0usize;
    for votes in groups {
        let n = votes.len();
        if n < 2 {
            continue;
        }
        let mut agree = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if votes[i].choice == votes[j].choice {
                    agree += 1;
                }
            }
        }
        total += agree as f64 / (n * (n - 1) / 2) as f64;
        prompts += 1;
    }
    if prompts == 0 {
        return Err(Error::InsufficientData(
            "agreement needs a prompt with at least two votes".into(),
        ));
    }
    Ok(total / prompts as f64)
}
