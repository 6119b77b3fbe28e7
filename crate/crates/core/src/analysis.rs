//! Tie-rate-at-top-k curves, the random baseline, percent-decrease tables,
//! win-rate summaries and the report document.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregation::{outcome_scores, AggregatedOutcome, Outcome};
use crate::elo::{run_sequence, EloConfig, EloTrace, GoldStandard, MatchScore};
use crate::ranking::{OrderingMetric, RankedOrder};
use crate::storage::ExperimentConfig;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Columns of the percent-decrease table.
pub const DECREASE_PERCENTILES: [f64; 5] = [5.0, 10.0, 20.0, 30.0, 50.0];

pub const CI_METHOD: &str =
    "empirical 2.5th/97.5th percentiles of per-permutation tie rates, linear interpolation between order statistics";
pub const TOP_K_RULE: &str = "first ceil(k * N / 100) prompts of the ordering";

/// Number of prompts in the top `k_percent` of `n`.
pub fn top_k_count(n: usize, k_percent: f64) -> usize {
    // The slack keeps products like 0.3 * 10 from rounding up past 3.
    let raw = k_percent * n as f64 / 100.0;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn check_k(k_percent: f64) -> Result<()> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::Contract(format!(
            "k must lie in (0, 100], got {k_percent}"
        )));
    }
    Ok(())
}

/// Tie flag per original index; fails on the first prompt without an outcome.
pub fn tie_flags(
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
) -> Result<Vec<bool>> {
    prompt_ids
        .iter()
        .map(|id| {
            outcomes
                .get(id)
                .map(|o| o.outcome == Outcome::Tie)
                .ok_or_else(|| Error::MissingOutcome(id.clone()))
        })
        .collect()
}

fn tie_rate_from_flags(permutation: &[usize], ties: &[bool], k_percent: f64) -> f64 {
    let m = top_k_count(permutation.len(), k_percent);
    if m == 0 {
        return 0.0;
    }
    let n_ties = permutation[..m].iter().filter(|&&i| ties[i]).count();
    n_ties as f64 / m as f64
}

/// Share of ties among the first ⌈k·N/100⌉ prompts of `order`.
/// `prompt_ids[i]` names the pair at original index `i`.
pub fn tie_rate_top_k(
    order: &RankedOrder,
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
    k_percent: f64,
) -> Result<f64> {
    check_k(k_percent)?;
    order.validate(prompt_ids.len())?;
    let ties = tie_flags(prompt_ids, outcomes)?;
    Ok(tie_rate_from_flags(&order.permutation, &ties, k_percent))
}

/// Linear-interpolation quantile (`(n - 1) * q` positioning) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub k: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-k tie rate of every permutation: `result[k_index][perm_index]`.
pub fn per_permutation_tie_rates(
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
    perms: &[RankedOrder],
    percentiles: &[f64],
) -> Result<Vec<Vec<f64>>> {
    for &k in percentiles {
        check_k(k)?;
    }
    let ties = tie_flags(prompt_ids, outcomes)?;
    for p in perms {
        p.validate(prompt_ids.len())?;
    }
    Ok(percentiles
        .iter()
        .map(|&k| {
            perms
                .iter()
                .map(|p| tie_rate_from_flags(&p.permutation, &ties, k))
                .collect()
        })
        .collect())
}

/// Mean tie rate over random orderings with a 95% percentile interval.
pub fn random_baseline(
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
    perms: &[RankedOrder],
    percentiles: &[f64],
) -> Result<Vec<BaselinePoint>> {
    if perms.len() < 2 {
        return Err(Error::InsufficientData(
            "random baseline needs at least two permutations".into(),
        ));
    }
    let rates = per_permutation_tie_rates(prompt_ids, outcomes, perms, percentiles)?;
    Ok(percentiles
        .iter()
        .zip(rates)
        .map(|(&k, mut values)| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
            BaselinePoint {
                k,
                mean,
                ci_low: quantile_sorted(&values, 0.025),
                ci_high: quantile_sorted(&values, 0.975),
            }
        })
        .collect())
}

/// Relative reduction in ties, in percent, of `metric_rate` versus `random_rate`.
pub fn percent_decrease(metric_rate: f64, random_rate: f64) -> Result<f64> {
    if random_rate.is_nan() || random_rate <= 0.0 {
        return Err(Error::UndefinedDecrease);
    }
    Ok(100.0 * (random_rate - metric_rate) / random_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateSummary {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_tie: f64,
}

impl WinRateSummary {
    pub fn from_outcomes<'a, I>(outcomes: I) -> Self
    where
        I: IntoIterator<Item = &'a AggregatedOutcome>,
    {
        let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
        for o in outcomes {
            match o.outcome {
                Outcome::AWins => wins_a += 1,
                Outcome::BWins => wins_b += 1,
                Outcome::Tie => ties += 1,
            }
        }
        let n = (wins_a + wins_b + ties) as f64;
        let rate = |c: usize| if n > 0.0 { c as f64 / n } else { 0.0 };
        Self {
            wins_a,
            wins_b,
            ties,
            rate_a: rate(wins_a),
            rate_b: rate(wins_b),
            rate_tie: rate(ties),
        }
    }

    pub fn total(&self) -> usize {
        self.wins_a + self.wins_b + self.ties
    }
}

/// Outcomes in the order given by `order`, as Elo match scores.
pub fn ordered_match_scores(
    order: &RankedOrder,
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
) -> Result<Vec<MatchScore>> {
    order
        .permutation
        .iter()
        .map(|&i| {
            let id = &prompt_ids[i];
            outcomes
                .get(id)
                .map(|o| MatchScore::from(outcome_scores(o.outcome)))
                .ok_or_else(|| Error::MissingOutcome(id.clone()))
        })
        .collect()
}

/// Restricts `order` to the indices where `keep` is true, renumbering them
/// densely while preserving relative order. Returns the restricted order and
/// the original index of each retained item.
pub fn restrict_order(order: &RankedOrder, keep: &[bool]) -> (RankedOrder, Vec<usize>) {
    let mut new_index = vec![usize::MAX; keep.len()];
    let mut originals = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        if k {
            new_index[i] = originals.len();
            originals.push(i);
        }
    }
    let permutation = order
        .permutation
        .iter()
        .filter(|&&i| keep[i])
        .map(|&i| new_index[i])
        .collect();
    let scores = if order.scores.is_empty() {
        Vec::new()
    } else {
        originals.iter().map(|&i| order.scores[i]).collect()
    };
    (
        RankedOrder {
            permutation,
            scores,
            metric: order.metric,
            seed: order.seed,
        },
        originals,
    )
}

// ---------------------------------------------------------------------------
// Live summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
}

/// Running statistics over a snapshot, folded in the experiment's ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSummary {
    pub ordering: OrderingMetric,
    pub n_prompts: usize,
    pub n_votes: usize,
    /// Prompts that have reached the minimum vote count.
    pub prompts_complete: usize,
    pub percent_complete: f64,
    pub counts: OutcomeCounts,
    /// `None` until at least one prompt has an outcome.
    pub tie_rate: Option<f64>,
    pub elo: EloTrace,
    pub rating_a: f64,
    pub rating_b: f64,
}

/// Folds the outcomes of prompts that have an outcome, in `order`, through
/// Elo. `outcomes` should already be filtered to the minimum vote count.
pub fn live_summary(
    order: &RankedOrder,
    prompt_ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
    n_votes: usize,
    elo: &EloConfig,
) -> Result<LiveSummary> {
    order.validate(prompt_ids.len())?;
    let ranked: Vec<&AggregatedOutcome> = order
        .permutation
        .iter()
        .filter_map(|&i| outcomes.get(&prompt_ids[i]))
        .collect();
    let scores: Vec<MatchScore> = ranked
        .iter()
        .map(|o| MatchScore::from(outcome_scores(o.outcome)))
        .collect();
    let trace = run_sequence(&scores, elo, order.metric)?;
    let wins = WinRateSummary::from_outcomes(ranked.iter().copied());
    let n = prompt_ids.len();
    Ok(LiveSummary {
        ordering: order.metric,
        n_prompts: n,
        n_votes,
        prompts_complete: ranked.len(),
        percent_complete: if n == 0 {
            100.0
        } else {
            100.0 * ranked.len() as f64 / n as f64
        },
        counts: OutcomeCounts {
            a_wins: wins.wins_a,
            b_wins: wins.wins_b,
            ties: wins.ties,
        },
        tie_rate: (wins.total() > 0).then_some(wins.rate_tie),
        rating_a: trace.final_a,
        rating_b: trace.final_b,
        elo: trace,
    })
}

// ---------------------------------------------------------------------------
// Report document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub metric: OrderingMetric,
    /// Tie rate at each entry of `TieRateReport::percentiles`.
    pub tie_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseRow {
    pub metric: OrderingMetric,
    /// `None` where the random tie rate is zero.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentDecreaseTable {
    pub percentiles: Vec<f64>,
    pub rows: Vec<DecreaseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieRateReport {
    pub percentiles: Vec<f64>,
    pub global_tie_rate: f64,
    pub curves: Vec<MetricCurve>,
    pub random_baseline: Vec<BaselinePoint>,
    pub n_perms: usize,
    pub percent_decrease: PercentDecreaseTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloAtTopK {
    pub metric: OrderingMetric,
    pub k: f64,
    pub n_outcomes: usize,
    pub rating_a: f64,
    pub rating_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandardEntry {
    pub model: String,
    pub mean: f64,
    pub sem: f64,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandardSection {
    pub n_perms: usize,
    pub entries: Vec<GoldStandardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloSection {
    pub traces: Vec<EloTrace>,
    pub at_top_k: Vec<EloAtTopK>,
    pub gold_standard: GoldStandardSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    /// Prompts whose completions are byte-identical (score 0, ranked last).
    pub identical_completions: Vec<String>,
    /// Prompts below the minimum vote count, excluded from analysis.
    pub excluded_prompts: Vec<String>,
    /// Prompts analysed but below the configured target vote count.
    pub below_target_votes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub rng_algorithm: String,
    pub ci_method: String,
    pub top_k_rule: String,
    pub snapshot_seq: u64,
    pub n_prompts: usize,
    pub n_analyzed: usize,
    pub n_votes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment_id: String,
    pub models: Models,
    pub config: ExperimentConfig,
    pub metadata: ReportMetadata,
    pub flags: ReportFlags,
    pub tie_rates: TieRateReport,
    pub win_rates: WinRateSummary,
    pub agreement_rate: Option<f64>,
    pub elo: EloSection,
}

impl Report {
    /// Canonical serialization: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Everything `build_report` assembles, computed for one experiment over
/// the analysed prompts (those with an outcome).
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub experiment_id: &'a str,
    pub models: Models,
    /// Analysed prompt ids, indexed like the orders below.
    pub prompt_ids: &'a [String],
    pub metric_orders: &'a [RankedOrder],
    pub random_orders: &'a [RankedOrder],
    pub outcomes: &'a BTreeMap<String, AggregatedOutcome>,
    pub traces: Vec<EloTrace>,
    pub gold_standard: &'a GoldStandard,
    pub agreement_rate: Option<f64>,
    pub flags: ReportFlags,
    pub metadata: ReportMetadata,
}

pub fn build_report(inputs: ReportInputs<'_>, config: &ExperimentConfig) -> Result<Report> {
    if inputs.experiment_id != config.experiment_id {
        return Err(Error::ExperimentMismatch {
            expected: config.experiment_id.clone(),
            found: inputs.experiment_id.to_string(),
        });
    }
    let ids = inputs.prompt_ids;
    let outcomes = inputs.outcomes;
    let percentiles = &config.percentiles;

    let curves = inputs
        .metric_orders
        .iter()
        .map(|o| {
            Ok(MetricCurve {
                metric: o.metric,
                tie_rates: percentiles
                    .iter()
                    .map(|&k| tie_rate_top_k(o, ids, outcomes, k))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let random_baseline = random_baseline(ids, outcomes, inputs.random_orders, percentiles)?;

    // The decrease table always uses the fixed column grid.
    let decrease_baseline =
        random_baseline_means(ids, outcomes, inputs.random_orders, &DECREASE_PERCENTILES)?;
    let rows = inputs
        .metric_orders
        .iter()
        .map(|o| {
            Ok(DecreaseRow {
                metric: o.metric,
                values: DECREASE_PERCENTILES
                    .iter()
                    .zip(&decrease_baseline)
                    .map(|(&k, &rand_rate)| {
                        let rate = tie_rate_top_k(o, ids, outcomes, k)?;
                        Ok(percent_decrease(rate, rand_rate).ok())
                    })
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let win_rates = WinRateSummary::from_outcomes(ids.iter().filter_map(|id| outcomes.get(id)));

    let n = ids.len();
    let mut at_top_k = Vec::new();
    for trace in &inputs.traces {
        for &k in percentiles {
            let m = top_k_count(n, k);
            let (rating_a, rating_b) = trace.at(m);
            at_top_k.push(EloAtTopK {
                metric: trace.ordering_metric,
                k,
                n_outcomes: m,
                rating_a,
                rating_b,
            });
        }
    }

    let g = inputs.gold_standard;
    let gold_standard = GoldStandardSection {
        n_perms: g.n_perms,
        entries: vec![
            GoldStandardEntry {
                model: inputs.models.a.clone(),
                mean: g.mean_a,
                sem: g.sem_a,
                display: g.display_a(),
            },
            GoldStandardEntry {
                model: inputs.models.b.clone(),
                mean: g.mean_b,
                sem: g.sem_b,
                display: g.display_b(),
            },
        ],
    };

    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment_id: config.experiment_id.clone(),
        models: inputs.models,
        config: config.clone(),
        metadata: inputs.metadata,
        flags: inputs.flags,
        tie_rates: TieRateReport {
            percentiles: percentiles.clone(),
            global_tie_rate: win_rates.rate_tie,
            curves,
            random_baseline,
            n_perms: inputs.random_orders.len(),
            percent_decrease: PercentDecreaseTable {
                percentiles: DECREASE_PERCENTILES.to_vec(),
                rows,
            },
        },
        win_rates,
        agreement_rate: inputs.agreement_rate,
        elo: EloSection {
            traces: inputs.traces,
            at_top_k,
            gold_standard,
        },
    })
}

fn random_baseline_means(
    ids: &[String],
    outcomes: &BTreeMap<String, AggregatedOutcome>,
    perms: &[RankedOrder],
    percentiles: &[f64],
) -> Result<Vec<f64>> {
    Ok(
        per_permutation_tie_rates(ids, outcomes, perms, percentiles)?
            .into_iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect(),
    )
}

/// Plain-text rendering of the report's tables for terminals.
pub fn render_tables(report: &Report) -> String {
    let mut out = String::new();
    let t = &report.tie_rates;
    let _ = writeln!(
        out,
        "Experiment {}: {} vs {}",
        report.experiment_id, report.models.a, report.models.b
    );
    let _ = writeln!(
        out,
        "Analysed {} of {} prompts, {} votes (snapshot seq {})\n",
        report.metadata.n_analyzed,
        report.metadata.n_prompts,
        report.metadata.n_votes,
        report.metadata.snapshot_seq
    );

    let _ = writeln!(out, "Tie rate at top-k%");
    let _ = write!(out, "{:<16}", "ordering");
    for k in &t.percentiles {
        let _ = write!(out, "{:>11}", format!("{k}%"));
    }
    out.push('\n');
    for c in &t.curves {
        let _ = write!(out, "{:<16}", c.metric.to_string());
        for r in &c.tie_rates {
            let _ = write!(out, "{r:>11.3}");
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<16}", format!("Random (n={})", t.n_perms));
    for b in &t.random_baseline {
        let _ = write!(out, "{:>11.3}", b.mean);
    }
    out.push('\n');
    let _ = write!(out, "{:<16}", "  95% CI");
    for b in &t.random_baseline {
        let _ = write!(out, "{:>11}", format!("{:.2}-{:.2}", b.ci_low, b.ci_high));
    }
    out.push_str("\n\n");

    let _ = writeln!(out, "% decrease in ties relative to random selection");
    let _ = write!(out, "{:<16}", "metric");
    for k in &t.percent_decrease.percentiles {
        let _ = write!(out, "{:>9}", format!("{k}%"));
    }
    out.push('\n');
    for row in &t.percent_decrease.rows {
        let name = match row.metric {
            OrderingMetric::Kl => "KL Divergence",
            OrderingMetric::Ce => "Cross-Entropy",
            OrderingMetric::Random => "Random",
        };
        let _ = write!(out, "{name:<16}");
        for v in &row.values {
            match v {
                Some(v) => {
                    let _ = write!(out, "{v:>9.2}");
                }
                None => {
                    let _ = write!(out, "{:>9}", "n/a");
                }
            }
        }
        out.push('\n');
    }
    out.push('\n');

    let g = &report.elo.gold_standard;
    let _ = writeln!(
        out,
        "Gold-standard Elo (mean ± SEM over {} permutations)",
        g.n_perms
    );
    for e in &g.entries {
        let _ = writeln!(out, "  {:<24}{}", e.model, e.display);
    }
    out.push('\n');

    let w = &report.win_rates;
    let _ = writeln!(
        out,
        "Outcomes: {} wins {} ({:.1}%), {} wins {} ({:.1}%), ties {} ({:.1}%)",
        report.models.a,
        w.wins_a,
        100.0 * w.rate_a,
        report.models.b,
        w.wins_b,
        100.0 * w.rate_b,
        w.ties,
        100.0 * w.rate_tie
    );
    if let Some(a) = report.agreement_rate {
        let _ = writeln!(out, "Annotator agreement: {:.1}%", 100.0 * a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::random_permutations;

    fn outcome(id: &str, o: Outcome) -> AggregatedOutcome {
        AggregatedOutcome {
            prompt_id: id.into(),
            mean_score_a: 0.5,
            mean_score_b: 0.5,
            outcome: o,
            n_votes: 1,
        }
    }

    fn fixture(pattern: &str) -> (Vec<String>, BTreeMap<String, AggregatedOutcome>) {
        let ids: Vec<String> = (0..pattern.len()).map(|i| format!("p{i}")).collect();
        let map = ids
            .iter()
            .zip(pattern.chars())
            .map(|(id, c)| {
                let o = match c {
                    'W' => Outcome::AWins,
                    'L' => Outcome::BWins,
                    _ => Outcome::Tie,
                };
                (id.clone(), outcome(id, o))
            })
            .collect();
        (ids, map)
    }

    fn identity(n: usize) -> RankedOrder {
        RankedOrder {
            permutation: (0..n).collect(),
            scores: vec![],
            metric: OrderingMetric::Kl,
            seed: None,
        }
    }

    #[test]
    fn top_k_uses_ceiling() {
        assert_eq!(top_k_count(10, 20.0), 2);
        assert_eq!(top_k_count(10, 30.0), 3);
        assert_eq!(top_k_count(10, 5.0), 1);
        assert_eq!(top_k_count(7, 100.0), 7);
        assert_eq!(top_k_count(200, 5.0), 10);
        assert_eq!(top_k_count(3, 10.0), 1);
    }

    #[test]
    fn tie_rate_examples() {
        let (ids, map) = fixture("WWTWTTTTTT");
        let o = identity(10);
        assert_eq!(tie_rate_top_k(&o, &ids, &map, 20.0).unwrap(), 0.0);
        // Direct count: three wins and seven ties.
        assert!((tie_rate_top_k(&o, &ids, &map, 100.0).unwrap() - 0.7).abs() < 1e-15);
        let (ids, map) = fixture("TTTT");
        for k in [5.0, 50.0, 100.0] {
            assert_eq!(tie_rate_top_k(&identity(4), &ids, &map, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn tie_rate_errors() {
        let (ids, mut map) = fixture("WT");
        assert!(tie_rate_top_k(&identity(2), &ids, &map, 0.0).is_err());
        assert!(tie_rate_top_k(&identity(2), &ids, &map, 101.0).is_err());
        map.remove("p1");
        match tie_rate_top_k(&identity(2), &ids, &map, 100.0) {
            Err(Error::MissingOutcome(id)) => assert_eq!(id, "p1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn baseline_all_ties_is_flat() {
        let (ids, map) = fixture("TTTTTTTTTT");
        let perms = random_permutations(10, 20, 1).unwrap();
        for b in random_baseline(&ids, &map, &perms, &[5.0, 20.0, 100.0]).unwrap() {
            assert_eq!((b.mean, b.ci_low, b.ci_high), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn baseline_at_full_set_has_zero_width() {
        let (ids, map) = fixture("WTLTWTTWLT");
        let perms = random_permutations(10, 50, 9).unwrap();
        let b = &random_baseline(&ids, &map, &perms, &[100.0]).unwrap()[0];
        assert_eq!(b.ci_low, b.ci_high);
        assert!((b.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn baseline_by_hand_on_three_permutations() {
        // Ties at indices 5..10; k = 20% of 10 takes the first two.
        let (ids, map) = fixture("WWWWWTTTTT");
        let mk = |p: Vec<usize>| RankedOrder {
            permutation: p,
            scores: vec![],
            metric: OrderingMetric::Random,
            seed: None,
        };
        let perms = vec![
            mk(vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9]), // W W -> 0
            mk(vec![5, 0, 1, 2, 3, 4, 6, 7, 8, 9]), // T W -> 0.5
            mk(vec![9, 8, 7, 6, 5, 4, 3, 2, 1, 0]), // T T -> 1
        ];
        let b = &random_baseline(&ids, &map, &perms, &[20.0]).unwrap()[0];
        assert!((b.mean - 0.5).abs() < 1e-15);
        // Sorted [0, 0.5, 1]: 2.5th percentile at position 0.05 -> 0.025.
        assert!((b.ci_low - 0.025).abs() < 1e-12);
        assert!((b.ci_high - 0.975).abs() < 1e-12);
        assert!(random_baseline(&ids, &map, &perms[..1], &[20.0]).is_err());
    }

    #[test]
    fn percent_decrease_examples() {
        assert_eq!(percent_decrease(0.25, 0.5).unwrap(), 50.0);
        assert_eq!(percent_decrease(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(percent_decrease(0.0, 0.7).unwrap(), 100.0);
        assert!(matches!(
            percent_decrease(0.1, 0.0),
            Err(Error::UndefinedDecrease)
        ));
    }

    #[test]
    fn win_rates_sum_to_one() {
        let (_ids, map) = fixture("WWLTTTL");
        let w = WinRateSummary::from_outcomes(map.values());
        assert_eq!((w.wins_a, w.wins_b, w.ties), (2, 2, 3));
        assert!((w.rate_a + w.rate_b + w.rate_tie - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restrict_preserves_relative_order() {
        let o = RankedOrder {
            permutation: vec![3, 0, 2, 1],
            scores: vec![0.1, 0.2, 0.3, 0.4],
            metric: OrderingMetric::Kl,
            seed: None,
        };
        let (r, originals) = restrict_order(&o, &[true, false, true, true]);
        assert_eq!(originals, vec![0, 2, 3]);
        assert_eq!(r.permutation, vec![2, 0, 1]);
        assert_eq!(r.scores, vec![0.1, 0.3, 0.4]);
    }

    #[test]
    fn live_summary_with_no_outcomes() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let s = live_summary(
            &identity(2),
            &ids,
            &BTreeMap::new(),
            0,
            &EloConfig::default(),
        )
        .unwrap();
        assert_eq!(s.tie_rate, None);
        assert_eq!((s.rating_a, s.rating_b), (1400.0, 1400.0));
        assert_eq!(s.percent_complete, 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn full_set_rate_is_permutation_free(pattern in "[WLT]{1,40}", seed in any::<u64>()) {
                let (ids, map) = fixture(&pattern);
                let n = ids.len();
                let global = tie_rate_top_k(&identity(n), &ids, &map, 100.0).unwrap();
                for p in random_permutations(n, 5, seed).unwrap() {
                    prop_assert_eq!(tie_rate_top_k(&p, &ids, &map, 100.0).unwrap(), global);
                }
            }

            #[test]
            fn baseline_mean_is_bracketed(pattern in "[WLT]{2,40}", seed in any::<u64>(), k in 1.0f64..100.0) {
                let (ids, map) = fixture(&pattern);
                let perms = random_permutations(ids.len(), 30, seed).unwrap();
                let rates = per_permutation_tie_rates(&ids, &map, &perms, &[k]).unwrap().remove(0);
                let b = &random_baseline(&ids, &map, &perms, &[k]).unwrap()[0];
                let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo - 1e-12 <= b.mean && b.mean <= hi + 1e-12);
                prop_assert!(b.ci_low <= b.mean + 1e-12 && b.mean <= b.ci_high + 1e-12);
                prop_assert!((0.0..=1.0).contains(&b.ci_low) && (0.0..=1.0).contains(&b.ci_high));
            }
        }
    }
}
