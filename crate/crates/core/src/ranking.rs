//! Evaluation sets and the orderings built over them.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{pair_dissimilarity, LogProbSequence, Metric, MetricConfig, Normalization};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// One prompt with both models' completions and their token log-probs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionPair {
    pub prompt_id: String,
    pub prompt: String,
    pub model_a: String,
    pub model_b: String,
    pub completion_a: String,
    pub completion_b: String,
    pub logprobs_a: LogProbSequence,
    pub logprobs_b: LogProbSequence,
}

impl CompletionPair {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prompt_id: impl Into<String>,
        prompt: impl Into<String>,
        model_a: impl Into<String>,
        model_b: impl Into<String>,
        completion_a: impl Into<String>,
        completion_b: impl Into<String>,
        logprobs_a: LogProbSequence,
        logprobs_b: LogProbSequence,
    ) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            prompt: prompt.into(),
            model_a: model_a.into(),
            model_b: model_b.into(),
            completion_a: completion_a.into(),
            completion_b: completion_b.into(),
            logprobs_a,
            logprobs_b,
        }
    }

    /// Both completions are byte-identical (text and log-probs).
    pub fn is_identical(&self) -> bool {
        self.completion_a == self.completion_b && self.logprobs_a == self.logprobs_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FamilyMode {
    #[default]
    IntraFamily,
    InterFamily,
}

impl FamilyMode {
    pub fn default_normalization(self) -> Normalization {
        match self {
            FamilyMode::IntraFamily => Normalization::SumNormalize,
            FamilyMode::InterFamily => Normalization::MinMaxThenSumNormalize,
        }
    }

    pub fn default_tie_threshold(self) -> f64 {
        match self {
            FamilyMode::IntraFamily => 0.2,
            FamilyMode::InterFamily => 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    pairs: Vec<CompletionPair>,
    pub model_a_name: String,
    pub model_b_name: String,
    pub family_mode: FamilyMode,
}

impl EvaluationSet {
    pub fn new(
        pairs: Vec<CompletionPair>,
        model_a_name: impl Into<String>,
        model_b_name: impl Into<String>,
        family_mode: FamilyMode,
    ) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            if let Some(first) = seen.insert(&p.prompt_id, i) {
                return Err(Error::DuplicatePrompt {
                    prompt_id: p.prompt_id.clone(),
                    first: first + 1,
                    second: i + 1,
                });
            }
        }
        Ok(Self {
            pairs,
            model_a_name: model_a_name.into(),
            model_b_name: model_b_name.into(),
            family_mode,
        })
    }

    pub fn pairs(&self) -> &[CompletionPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn prompt_ids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.prompt_id.clone()).collect()
    }

    pub fn index_of(&self, prompt_id: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p.prompt_id == prompt_id)
    }

    /// Prompts whose two completions are byte-identical. They stay in the
    /// set (scoring 0, so ranked last) and are flagged in reports.
    pub fn identical_prompts(&self) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|p| p.is_identical())
            .map(|p| p.prompt_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrderingMetric {
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "CE")]
    Ce,
    Random,
}

impl From<Metric> for OrderingMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Kl => OrderingMetric::Kl,
            Metric::Ce => OrderingMetric::Ce,
        }
    }
}

impl std::fmt::Display for OrderingMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrderingMetric::Kl => "KL",
            OrderingMetric::Ce => "CE",
            OrderingMetric::Random => "Random",
        })
    }
}

/// A permutation over pair indices. `permutation[i]` is the original index
/// of the pair shown at position `i`. `scores` is aligned to original
/// indices and empty for random orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOrder {
    pub permutation: Vec<usize>,
    pub scores: Vec<f64>,
    pub metric: OrderingMetric,
    pub seed: Option<u64>,
}

impl RankedOrder {
    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_bijection(&self.permutation, n)
    }
}

pub fn check_bijection(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "length {} over {n} items",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPermutation(format!(
                "index {i} out of range or repeated"
            )));
        }
    }
    Ok(())
}

/// Dissimilarity of every pair, aligned with the input order.
pub fn score_all(set: &EvaluationSet, config: &MetricConfig) -> Result<Vec<f64>> {
    config.validate()?;
    set.pairs
        .par_iter()
        .map(|p| pair_dissimilarity(p, config).map_err(|e| Error::for_pair(&p.prompt_id, e)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Most dissimilar first; equal scores keep ascending original index.
pub fn rank_by_score(scores: &[f64], metric: Metric) -> Result<RankedOrder> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores to rank".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            field: "score".into(),
            index: i,
        });
    }
    let mut permutation: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so equal scores stay in index order.
    permutation.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    Ok(RankedOrder {
        permutation,
        scores: scores.to_vec(),
        metric: metric.into(),
        seed: None,
    })
}

/// `count` Fisher–Yates shuffles of `0..n` drawn from one seeded stream.
pub fn random_permutations(n: usize, count: usize, seed: u64) -> Result<Vec<RankedOrder>> {
    if n == 0 {
        return Err(Error::InsufficientData("cannot permute zero items".into()));
    }
    if count == 0 {
        return Err(Error::InsufficientData(
            "permutation count must be >= 1".into(),
        ));
    }
    let mut rng = stream_rng(seed, Stream::BaselinePermutations);
    Ok((0..count)
        .map(|_| {
            let mut permutation: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                permutation.swap(i, j);
            }
            RankedOrder {
                permutation,
                scores: Vec::new(),
                metric: OrderingMetric::Random,
                seed: Some(seed),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp(v: &[f64]) -> LogProbSequence {
        LogProbSequence::new(v.to_vec()).unwrap()
    }

    fn set(pairs: Vec<CompletionPair>) -> EvaluationSet {
        EvaluationSet::new(pairs, "a", "b", FamilyMode::IntraFamily).unwrap()
    }

    fn pair(id: &str, a: &[f64], b: &[f64]) -> CompletionPair {
        CompletionPair::new(id, "", "a", "b", "x", "y", lp(a), lp(b))
    }

    #[test]
    fn score_all_examples() {
        let cfg = MetricConfig::default();
        assert!(score_all(&set(vec![]), &cfg).unwrap().is_empty());
        let h = 0.5f64.ln();
        assert_eq!(
            score_all(&set(vec![pair("p", &[h, h], &[h, h])]), &cfg).unwrap(),
            vec![0.0]
        );
        let s = score_all(
            &set(vec![
                pair("p1", &[h, h], &[0.25f64.ln(), 0.75f64.ln()]),
                pair("p2", &[h, h], &[h, h]),
            ]),
            &cfg,
        )
        .unwrap();
        assert!((s[0] - 0.143_841_036_225_890_4).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn score_all_names_malformed_pair() {
        let err = score_all(
            &set(vec![pair("ok", &[0.0], &[0.0]), pair("bad", &[], &[0.0])]),
            &MetricConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::Pair { prompt_id, .. } => assert_eq!(prompt_id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_prompt_ids_rejected() {
        let err = EvaluationSet::new(
            vec![pair("x", &[0.0], &[0.0]), pair("x", &[0.0], &[0.0])],
            "a",
            "b",
            FamilyMode::IntraFamily,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicatePrompt {
                first: 1,
                second: 2,
                ..
            }
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            rank_by_score(&[0.1, 0.9, 0.5], Metric::Kl)
                .unwrap()
                .permutation,
            vec![1, 2, 0]
        );
        assert_eq!(
            rank_by_score(&[0.5, 0.5], Metric::Kl).unwrap().permutation,
            vec![0, 1]
        );
        assert_eq!(
            rank_by_score(&[0.3; 5], Metric::Ce).unwrap().permutation,
            vec![0, 1, 2, 3, 4]
        );
        assert!(rank_by_score(&[0.1, f64::NAN], Metric::Kl).is_err());
        assert!(rank_by_score(&[], Metric::Kl).is_err());
    }

    #[test]
    fn random_permutation_examples() {
        for o in random_permutations(1, 4, 3).unwrap() {
            assert_eq!(o.permutation, vec![0]);
        }
        let perms = random_permutations(3, 6, 11).unwrap();
        assert_eq!(perms.len(), 6);
        for o in &perms {
            o.validate(3).unwrap();
            assert_eq!(o.metric, OrderingMetric::Random);
        }
        assert_eq!(
            random_permutations(5, 2, 7).unwrap(),
            random_permutations(5, 2, 7).unwrap()
        );
        assert!(random_permutations(0, 1, 7).is_err());
    }

    #[test]
    fn identical_pairs_flagged() {
        let same = CompletionPair::new("a", "", "a", "b", "x", "x", lp(&[0.0]), lp(&[0.0]));
        let s = set(vec![same, pair("b", &[0.0], &[0.0])]);
        assert_eq!(s.identical_prompts(), vec!["a".to_string()]);
    }

    proptest! {
        #[test]
        fn ranking_is_bijection_and_descending(scores in prop::collection::vec(-10.0f64..10.0, 1..64)) {
            let o = rank_by_score(&scores, Metric::Kl).unwrap();
            o.validate(scores.len()).unwrap();
            for w in o.permutation.windows(2) {
                prop_assert!(scores[w[0]] >= scores[w[1]]);
            }
        }

        #[test]
        fn ranking_invariant_under_positive_affine(
            raw in prop::collection::vec(0u32..200, 1..64),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            // Integer-valued scores: a positive affine map cannot merge or split ties.
            let scores: Vec<f64> = raw.iter().map(|&s| f64::from(s)).collect();
            let moved: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            prop_assert_eq!(
                rank_by_score(&scores, Metric::Kl).unwrap().permutation,
                rank_by_score(&moved, Metric::Kl).unwrap().permutation
            );
        }

        #[test]
        fn permutations_are_bijections(n in 1usize..50, count in 1usize..10, seed in any::<u64>()) {
            for o in random_permutations(n, count, seed).unwrap() {
                prop_assert!(o.validate(n).is_ok());
            }
        }
    }
}
