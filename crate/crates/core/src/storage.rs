//! On-disk contracts: completion-pair files, the append-only vote log,
//! experiment configuration and snapshots.
//!
//! Pair files and the vote log are UTF-8 JSON lines. The vote log is only
//! ever appended to; every append is flushed with `fsync` before its
//! sequence number is published to readers.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_all, AggregatedOutcome, AggregationConfig, Choice, Vote};
use crate::elo::EloConfig;
use crate::metrics::{LogProbSequence, Metric, MetricConfig, Normalization, DEFAULT_EPSILON};
use crate::ranking::{CompletionPair, EvaluationSet, FamilyMode, OrderingMetric};
use crate::{Error, Result};

pub const DATA_DIR_ENV: &str = "PREFEVAL_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

pub const DEFAULT_PERCENTILES: [f64; 6] = [5.0, 10.0, 20.0, 30.0, 50.0, 100.0];

/// Data directory, honouring the `PREFEVAL_DATA_DIR` override.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

// ---------------------------------------------------------------------------
// Pair files
// ---------------------------------------------------------------------------

/// Reads a JSON-lines pair file into an evaluation set, preserving file order.
pub fn load_pairs(path: &Path, family_mode: FamilyMode) -> Result<EvaluationSet> {
    let file = File::open(path)?;
    let mut pairs: Vec<CompletionPair> = Vec::new();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: RawPair =
            serde_json::from_str(&null_non_finite(&line)).map_err(|e| parse_err(e.to_string()))?;
        let pair = raw.into_pair().map_err(|e| parse_err(e.to_string()))?;
        if let Some(first) = pairs.first() {
            if pair.model_a != first.model_a || pair.model_b != first.model_b {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!(
                        "model names ({}, {}) differ from the first record ({}, {})",
                        pair.model_a, pair.model_b, first.model_a, first.model_b
                    ),
                });
            }
        }
        if let Some(first) = lines_of.insert(pair.prompt_id.clone(), line_no) {
            return Err(Error::DuplicatePrompt {
                prompt_id: pair.prompt_id,
                first,
                second: line_no,
            });
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        log::warn!("{} contains no completion pairs", path.display());
    }
    let (a, b) = pairs
        .first()
        .map(|p| (p.model_a.clone(), p.model_b.clone()))
        .unwrap_or_default();
    EvaluationSet::new(pairs, a, b, family_mode)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    prompt_id: String,
    prompt: String,
    model_a: String,
    model_b: String,
    completion_a: String,
    completion_b: String,
    logprobs_a: Vec<Option<f64>>,
    logprobs_b: Vec<Option<f64>>,
}

impl RawPair {
    fn into_pair(self) -> Result<CompletionPair> {
        let seq = |values: Vec<Option<f64>>, field: &str| {
            let values = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            LogProbSequence::new_named(values, field)
        };
        Ok(CompletionPair {
            logprobs_a: seq(self.logprobs_a, "logprobs_a")?,
            logprobs_b: seq(self.logprobs_b, "logprobs_b")?,
            prompt_id: self.prompt_id,
            prompt: self.prompt,
            model_a: self.model_a,
            model_b: self.model_b,
            completion_a: self.completion_a,
            completion_b: self.completion_b,
        })
    }
}

/// Replaces bare `NaN`, `Infinity` and `-Infinity` tokens outside string
/// literals with `null`, so non-finite values surface as field errors rather
/// than as JSON syntax errors.
fn null_non_finite(line: &str) -> std::borrow::Cow<'_, str> {
    if !(line.contains("NaN") || line.contains("Infinity")) {
        return std::borrow::Cow::Borrowed(line);
    }
    let mut out = String::with_capacity(line.len());
    let (mut in_string, mut escaped) = (false, false);
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else if let Some(token) = ["-Infinity", "Infinity", "NaN"]
            .iter()
            .find(|t| rest.starts_with(**t))
        {
            out.push_str("null");
            rest = &rest[token.len()..];
            continue;
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    std::borrow::Cow::Owned(out)
}

pub fn save_pairs(path: &Path, set: &EvaluationSet) -> Result<()> {
    let mut out = Vec::new();
    for p in set.pairs() {
        serde_json::to_writer(&mut out, p)?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Fully materialized experiment configuration. Every default is resolved
/// on load, so downstream code never sees an implicit value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExperimentConfig")]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub model_a_name: String,
    pub model_b_name: String,
    pub family_mode: FamilyMode,
    pub metric: MetricConfig,
    pub aggregation: AggregationConfig,
    pub elo: EloConfig,
    pub n_perms: usize,
    pub master_seed: u64,
    /// Order in which the annotation service serves prompts.
    pub ordering: OrderingMetric,
    pub percentiles: Vec<f64>,
    pub min_votes_per_prompt: usize,
    pub target_votes_per_prompt: usize,
    pub guidelines: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    metric: Option<Metric>,
    epsilon: Option<f64>,
    normalization: Option<Normalization>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAggregation {
    tie_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElo {
    initial_rating: Option<f64>,
    k_factor: Option<f64>,
    scale: Option<f64>,
    base: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperimentConfig {
    experiment_id: String,
    model_a_name: Option<String>,
    model_b_name: Option<String>,
    family_mode: Option<FamilyMode>,
    #[serde(default)]
    metric: RawMetric,
    #[serde(default)]
    aggregation: RawAggregation,
    #[serde(default)]
    elo: RawElo,
    n_perms: Option<usize>,
    master_seed: Option<u64>,
    ordering: Option<OrderingMetric>,
    percentiles: Option<Vec<f64>>,
    min_votes_per_prompt: Option<usize>,
    target_votes_per_prompt: Option<usize>,
    guidelines: Option<Vec<String>>,
}

/// Annotation criteria shown in the UI help panel, in priority order.
pub fn default_guidelines() -> Vec<String> {
    [
        "Task fulfilment: does the completion do what the prompt asks?",
        "Grammatical correctness",
        "Semantic coherence with the prompt and context",
        "Creativity and naturalness of the response",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl TryFrom<RawExperimentConfig> for ExperimentConfig {
    type Error = Error;

    fn try_from(raw: RawExperimentConfig) -> Result<Self> {
        let family_mode = raw.family_mode.unwrap_or_default();
        let elo_defaults = EloConfig::default();
        if raw.elo.scale.is_some_and(|s| s != elo_defaults.scale)
            || raw.elo.base.is_some_and(|b| b != elo_defaults.base)
        {
            return Err(Error::Config(
                "elo scale and base are fixed at 400 and 10".into(),
            ));
        }
        let cfg = ExperimentConfig {
            experiment_id: raw.experiment_id,
            model_a_name: raw.model_a_name.unwrap_or_else(|| "model_a".into()),
            model_b_name: raw.model_b_name.unwrap_or_else(|| "model_b".into()),
            family_mode,
            metric: MetricConfig {
                metric: raw.metric.metric.unwrap_or(Metric::Kl),
                epsilon: raw.metric.epsilon.unwrap_or(DEFAULT_EPSILON),
                normalization: raw
                    .metric
                    .normalization
                    .unwrap_or_else(|| family_mode.default_normalization()),
            },
            aggregation: AggregationConfig {
                tie_threshold: raw
                    .aggregation
                    .tie_threshold
                    .unwrap_or_else(|| family_mode.default_tie_threshold()),
            },
            elo: EloConfig {
                initial_rating: raw
                    .elo
                    .initial_rating
                    .unwrap_or(elo_defaults.initial_rating),
                k_factor: raw.elo.k_factor.unwrap_or(elo_defaults.k_factor),
                ..elo_defaults
            },
            n_perms: raw.n_perms.unwrap_or(100),
            master_seed: raw.master_seed.unwrap_or(0),
            ordering: raw.ordering.unwrap_or(OrderingMetric::Kl),
            percentiles: raw
                .percentiles
                .unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec()),
            min_votes_per_prompt: raw.min_votes_per_prompt.unwrap_or(1),
            target_votes_per_prompt: raw.target_votes_per_prompt.unwrap_or(1),
            guidelines: raw.guidelines.unwrap_or_else(default_guidelines),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Defaults for `family_mode`, as if loaded from `{"experiment_id": id}`.
    pub fn new(experiment_id: impl Into<String>, family_mode: FamilyMode) -> Self {
        RawExperimentConfig {
            experiment_id: experiment_id.into(),
            family_mode: Some(family_mode),
            ..Default::default()
        }
        .try_into()
        .expect("default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return Err(Error::Config("experiment_id must not be empty".into()));
        }
        self.metric.validate()?;
        self.aggregation.validate()?;
        self.elo.validate()?;
        if self.n_perms < 2 {
            return Err(Error::Config("n_perms must be at least 2".into()));
        }
        if self.percentiles.is_empty()
            || self.percentiles.iter().any(|k| !(*k > 0.0 && *k <= 100.0))
        {
            return Err(Error::Config("percentiles must lie in (0, 100]".into()));
        }
        if self.min_votes_per_prompt == 0 {
            return Err(Error::Config(
                "min_votes_per_prompt must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Vote log
// ---------------------------------------------------------------------------

/// Which side of the screen model A's completion was shown on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PositionMap {
    #[serde(rename = "A-left")]
    ALeft,
    #[serde(rename = "A-right")]
    ARight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub seq: u64,
    pub annotator_id: String,
    pub prompt_id: String,
    pub choice: Choice,
    pub position_map: PositionMap,
    pub submitted_at: DateTime<Utc>,
}

impl VoteRecord {
    pub fn vote(&self) -> Vote {
        Vote {
            annotator_id: self.annotator_id.clone(),
            prompt_id: self.prompt_id.clone(),
            choice: self.choice,
            submitted_at: self.submitted_at,
        }
    }
}

/// Result of an idempotent append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendOutcome {
    pub seq: u64,
    pub duplicate: bool,
}

/// Append-only vote log. Appends are serialized through one writer; readers
/// see only records whose append has completed.
#[derive(Debug)]
pub struct VoteLog {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    records: RwLock<Vec<VoteRecord>>,
}

impl VoteLog {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            writer: Mutex::new(None),
            records: RwLock::new(Vec::new()),
        }
    }

    /// Opens (creating if needed) a log file and replays it. A trailing
    /// partial line left by a crash mid-append is truncated away.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;

        let complete = buf.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if complete < buf.len() {
            log::warn!(
                "{}: dropping {} trailing bytes of an incomplete record",
                path.display(),
                buf.len() - complete
            );
            file.set_len(complete as u64)?;
            file.sync_data()?;
        }
        let records = parse_records(&buf[..complete], path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            writer: Mutex::new(Some(file)),
            records: RwLock::new(records),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn high_water(&self) -> u64 {
        self.records.read().unwrap().last().map_or(0, |r| r.seq)
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records with `seq <= high_water`.
    pub fn records_until(&self, high_water: u64) -> Vec<VoteRecord> {
        let records = self.records.read().unwrap();
        let end = records.partition_point(|r| r.seq <= high_water);
        records[..end].to_vec()
    }

    pub fn records(&self) -> Vec<VoteRecord> {
        self.records.read().unwrap().clone()
    }

    /// Appends one vote and returns its sequence number.
    pub fn append(&self, vote: &Vote, position_map: PositionMap) -> Result<u64> {
        let mut writer = self.writer.lock().unwrap();
        self.append_locked(&mut writer, vote, position_map)
    }

    /// Appends unless the latest record for this (annotator, prompt) already
    /// carries the same choice and position map, in which case that record's
    /// sequence number is returned.
    pub fn append_idempotent(
        &self,
        vote: &Vote,
        position_map: PositionMap,
    ) -> Result<AppendOutcome> {
        let mut writer = self.writer.lock().unwrap();
        let existing = self
            .records
            .read()
            .unwrap()
            .iter()
            .rev()
            .find(|r| r.annotator_id == vote.annotator_id && r.prompt_id == vote.prompt_id)
            .filter(|r| r.choice == vote.choice && r.position_map == position_map)
            .map(|r| r.seq);
        if let Some(seq) = existing {
            return Ok(AppendOutcome {
                seq,
                duplicate: true,
            });
        }
        let seq = self.append_locked(&mut writer, vote, position_map)?;
        Ok(AppendOutcome {
            seq,
            duplicate: false,
        })
    }

    fn append_locked(
        &self,
        writer: &mut Option<File>,
        vote: &Vote,
        position_map: PositionMap,
    ) -> Result<u64> {
        let record = VoteRecord {
            seq: self.high_water() + 1,
            annotator_id: vote.annotator_id.clone(),
            prompt_id: vote.prompt_id.clone(),
            choice: vote.choice,
            position_map,
            submitted_at: vote.submitted_at,
        };
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            let before = file.metadata()?.len();
            if let Err(e) = file.write_all(&line).and_then(|_| file.sync_data()) {
                // Roll back whatever part of the record reached the file.
                let _ = file.set_len(before);
                return Err(e.into());
            }
        }
        let seq = record.seq;
        self.records.write().unwrap().push(record);
        Ok(seq)
    }
}

fn parse_records(bytes: &[u8], path: &Path) -> Result<Vec<VoteRecord>> {
    let mut records: Vec<VoteRecord> = Vec::new();
    for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: VoteRecord = serde_json::from_slice(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = records.last() {
            if record.seq <= prev.seq {
                return Err(Error::CorruptLog(format!(
                    "{}:{}: sequence {} does not follow {}",
                    path.display(),
                    i + 1,
                    record.seq,
                    prev.seq
                )));
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Serializes vote records as JSON lines, the vote log's on-disk format.
pub fn write_vote_records(path: &Path, records: &[VoteRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiments and snapshots
// ---------------------------------------------------------------------------

/// A configured experiment: its immutable pairs and live vote log.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub set: Arc<EvaluationSet>,
    pub log: VoteLog,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, set: EvaluationSet, log: VoteLog) -> Self {
        Self {
            config,
            set: Arc::new(set),
            log,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot_at(self.log.high_water())
    }

    pub fn snapshot_at(&self, high_water: u64) -> Snapshot {
        Snapshot {
            experiment_id: self.config.experiment_id.clone(),
            high_water,
            set: Arc::clone(&self.set),
            records: Arc::from(self.log.records_until(high_water)),
        }
    }
}

/// Frozen view of an experiment's pairs and the votes up to `high_water`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub experiment_id: String,
    pub high_water: u64,
    pub set: Arc<EvaluationSet>,
    pub records: Arc<[VoteRecord]>,
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.experiment_id == other.experiment_id
            && self.high_water == other.high_water
            && *self.set == *other.set
            && self.records == other.records
    }
}

impl Snapshot {
    pub fn from_parts(
        experiment_id: impl Into<String>,
        set: EvaluationSet,
        records: Vec<VoteRecord>,
    ) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            high_water: records.last().map_or(0, |r| r.seq),
            set: Arc::new(set),
            records: Arc::from(records),
        }
    }

    /// One vote per (annotator, prompt), the latest by sequence number,
    /// ordered by that sequence number.
    pub fn latest_votes(&self) -> Vec<Vote> {
        let mut latest: BTreeMap<(&str, &str), &VoteRecord> = BTreeMap::new();
        for r in self.records.iter() {
            latest.insert((&r.annotator_id, &r.prompt_id), r);
        }
        let mut winners: Vec<&VoteRecord> = latest.into_values().collect();
        winners.sort_by_key(|r| r.seq);
        winners.into_iter().map(VoteRecord::vote).collect()
    }

    /// Soft-voted outcome for every prompt with at least `min_votes` votes.
    pub fn outcomes(
        &self,
        config: &AggregationConfig,
        min_votes: usize,
    ) -> Result<BTreeMap<String, AggregatedOutcome>> {
        aggregate_all(&self.latest_votes(), config, min_votes)
    }

    /// Distinct-annotator vote counts per prompt.
    pub fn vote_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for v in self.latest_votes() {
            *counts.entry(v.prompt_id).or_insert(0) += 1;
        }
        counts
    }
}
