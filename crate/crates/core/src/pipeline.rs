//! End-to-end analysis of one experiment snapshot, shared by the CLI, the
//! service's export route and the acceptance suite.

use std::collections::BTreeMap;

use rand::Rng;

use crate::aggregation::{agreement_rate, group_by_prompt, AggregatedOutcome};
use crate::analysis::{
    build_report, live_summary, ordered_match_scores, restrict_order, LiveSummary, Models, Report,
    ReportFlags, ReportInputs, ReportMetadata, CI_METHOD, TOP_K_RULE,
};
use crate::elo::{gold_standard, run_sequence};
use crate::metrics::Metric;
use crate::ranking::{
    random_permutations, rank_by_score, score_all, EvaluationSet, OrderingMetric, RankedOrder,
};
use crate::rng::{stream_rng, Stream, RNG_ALGORITHM};
use crate::storage::{ExperimentConfig, Snapshot};
use crate::{Error, Result};

/// KL- and CE-ranked orders over the full evaluation set.
pub fn metric_orders(set: &EvaluationSet, config: &ExperimentConfig) -> Result<Vec<RankedOrder>> {
    [Metric::Kl, Metric::Ce]
        .into_iter()
        .map(|m| {
            let scores = score_all(set, &config.metric.with_metric(m))?;
            rank_by_score(&scores, m)
        })
        .collect()
}

/// The order in which the service hands prompts to annotators.
pub fn serving_order(set: &EvaluationSet, config: &ExperimentConfig) -> Result<RankedOrder> {
    match config.ordering {
        OrderingMetric::Kl => rank_by_score(
            &score_all(set, &config.metric.with_metric(Metric::Kl))?,
            Metric::Kl,
        ),
        OrderingMetric::Ce => rank_by_score(
            &score_all(set, &config.metric.with_metric(Metric::Ce))?,
            Metric::Ce,
        ),
        OrderingMetric::Random => {
            let seed = stream_rng(config.master_seed, Stream::ServiceOrdering).gen();
            Ok(random_permutations(set.len(), 1, seed)?.remove(0))
        }
    }
}

fn check_ids(config: &ExperimentConfig, snapshot: &Snapshot) -> Result<()> {
    if snapshot.experiment_id != config.experiment_id {
        return Err(Error::ExperimentMismatch {
            expected: config.experiment_id.clone(),
            found: snapshot.experiment_id.clone(),
        });
    }
    Ok(())
}

fn models(set: &EvaluationSet, config: &ExperimentConfig) -> Models {
    if set.model_a_name.is_empty() && set.model_b_name.is_empty() {
        Models {
            a: config.model_a_name.clone(),
            b: config.model_b_name.clone(),
        }
    } else {
        Models {
            a: set.model_a_name.clone(),
            b: set.model_b_name.clone(),
        }
    }
}

/// Live statistics of `snapshot` folded in `order` (an order over the full set).
pub fn live_stats(
    config: &ExperimentConfig,
    snapshot: &Snapshot,
    order: &RankedOrder,
) -> Result<LiveSummary> {
    check_ids(config, snapshot)?;
    let outcomes = snapshot.outcomes(&config.aggregation, config.min_votes_per_prompt)?;
    live_summary(
        order,
        &snapshot.set.prompt_ids(),
        &outcomes,
        snapshot.latest_votes().len(),
        &config.elo,
    )
}

/// Full report over the prompts of `snapshot` that have reached the minimum
/// vote count.
pub fn run_analysis(config: &ExperimentConfig, snapshot: &Snapshot) -> Result<Report> {
    check_ids(config, snapshot)?;
    config.validate()?;
    let set = &*snapshot.set;
    let all_ids = set.prompt_ids();
    let outcomes: BTreeMap<String, AggregatedOutcome> =
        snapshot.outcomes(&config.aggregation, config.min_votes_per_prompt)?;
    let keep: Vec<bool> = all_ids.iter().map(|id| outcomes.contains_key(id)).collect();
    let n_analyzed = keep.iter().filter(|k| **k).count();
    if n_analyzed == 0 {
        return Err(Error::InsufficientData(format!(
            "no prompt has reached {} vote(s)",
            config.min_votes_per_prompt
        )));
    }

    let mut originals = Vec::new();
    let mut orders = Vec::new();
    for full in metric_orders(set, config)? {
        let (restricted, kept) = restrict_order(&full, &keep);
        originals = kept;
        orders.push(restricted);
    }
    let ids: Vec<String> = originals.iter().map(|&i| all_ids[i].clone()).collect();
    let random = random_permutations(n_analyzed, config.n_perms, config.master_seed)?;

    let mut traces = Vec::new();
    for o in orders.iter().chain(random.first()) {
        traces.push(run_sequence(
            &ordered_match_scores(o, &ids, &outcomes)?,
            &config.elo,
            o.metric,
        )?);
    }

    let index_order = RankedOrder {
        permutation: (0..n_analyzed).collect(),
        scores: Vec::new(),
        metric: OrderingMetric::Random,
        seed: None,
    };
    let base_scores = ordered_match_scores(&index_order, &ids, &outcomes)?;
    let perms: Vec<Vec<usize>> = random.iter().map(|o| o.permutation.clone()).collect();
    let gold = gold_standard(&base_scores, &perms, &config.elo)?;

    let latest = snapshot.latest_votes();
    let groups = group_by_prompt(&latest);
    let agreement = agreement_rate(groups.values().map(Vec::as_slice)).ok();

    let counts = snapshot.vote_counts();
    let flags = ReportFlags {
        identical_completions: set.identical_prompts(),
        excluded_prompts: all_ids
            .iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(id, _)| id.clone())
            .collect(),
        below_target_votes: ids
            .iter()
            .filter(|id| counts.get(*id).copied().unwrap_or(0) < config.target_votes_per_prompt)
            .cloned()
            .collect(),
    };
    let metadata = ReportMetadata {
        rng_algorithm: RNG_ALGORITHM.to_string(),
        ci_method: CI_METHOD.to_string(),
        top_k_rule: TOP_K_RULE.to_string(),
        snapshot_seq: snapshot.high_water,
        n_prompts: set.len(),
        n_analyzed,
        n_votes: latest.len(),
    };

    build_report(
        ReportInputs {
            experiment_id: &snapshot.experiment_id,
            models: models(set, config),
            prompt_ids: &ids,
            metric_orders: &orders,
            random_orders: &random,
            outcomes: &outcomes,
            traces,
            gold_standard: &gold,
            agreement_rate: agreement,
            flags,
            metadata,
        },
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Choice;
    use crate::metrics::LogProbSequence;
    use crate::ranking::{CompletionPair, FamilyMode};
    use crate::storage::{PositionMap, VoteRecord};
    use chrono::{DateTime, Utc};

    fn minimal() -> (ExperimentConfig, Snapshot) {
        let h = 0.5f64.ln();
        let pairs = vec![
            CompletionPair::new(
                "p0",
                "",
                "m1",
                "m2",
                "x",
                "y",
                LogProbSequence::new(vec![h, h]).unwrap(),
                LogProbSequence::new(vec![0.25f64.ln(), 0.75f64.ln()]).unwrap(),
            ),
            CompletionPair::new(
                "p1",
                "",
                "m1",
                "m2",
                "x",
                "x",
                LogProbSequence::new(vec![h, h]).unwrap(),
                LogProbSequence::new(vec![h, h]).unwrap(),
            ),
        ];
        let set = EvaluationSet::new(pairs, "m1", "m2", FamilyMode::IntraFamily).unwrap();
        let records = [("p0", Choice::PreferA), ("p1", Choice::BothGood)]
            .iter()
            .enumerate()
            .map(|(i, (p, c))| VoteRecord {
                seq: i as u64 + 1,
                annotator_id: "solo".into(),
                prompt_id: p.to_string(),
                choice: *c,
                position_map: PositionMap::ALeft,
                submitted_at: DateTime::<Utc>::UNIX_EPOCH,
            })
            .collect();
        let config = ExperimentConfig::new("mini", FamilyMode::IntraFamily);
        (config, Snapshot::from_parts("mini", set, records))
    }

    #[test]
    fn minimal_experiment_has_every_section() {
        let (config, snap) = minimal();
        let report = run_analysis(&config, &snap).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        for key in [
            "schema_version",
            "config",
            "metadata",
            "flags",
            "tie_rates",
            "win_rates",
            "elo",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(report.tie_rates.curves.len(), 2);
        assert_eq!(report.tie_rates.percent_decrease.rows.len(), 2);
        assert_eq!(report.elo.traces.len(), 3);
        assert_eq!(report.elo.gold_standard.entries.len(), 2);
        assert_eq!(report.flags.identical_completions, vec!["p1"]);
        assert_eq!(report.agreement_rate, None);
        assert_eq!(report.win_rates.wins_a, 1);
        // p0 is the dissimilar pair, so KL ranks its win first.
        assert_eq!(report.elo.traces[0].ratings_a[1], 1416.0);
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let (config, snap) = minimal();
        assert_eq!(
            run_analysis(&config, &snap).unwrap().to_json().unwrap(),
            run_analysis(&config, &snap).unwrap().to_json().unwrap()
        );
    }

    #[test]
    fn mismatched_experiment_is_rejected() {
        let (mut config, snap) = minimal();
        config.experiment_id = "other".into();
        assert!(matches!(
            run_analysis(&config, &snap),
            Err(Error::ExperimentMismatch { .. })
        ));
    }

    #[test]
    fn no_votes_is_insufficient() {
        let (config, snap) = minimal();
        let empty = Snapshot::from_parts("mini", (*snap.set).clone(), vec![]);
        assert!(matches!(
            run_analysis(&config, &empty),
            Err(Error::InsufficientData(_))
        ));
        let order = serving_order(&snap.set, &config).unwrap();
        let live = live_stats(&config, &empty, &order).unwrap();
        assert_eq!(live.tie_rate, None);
        assert_eq!(live.rating_a, 1400.0);
    }
}
