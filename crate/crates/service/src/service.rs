use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use prefeval_core::aggregation::{Choice, Vote};
use prefeval_core::analysis::{LiveSummary, Report};
use prefeval_core::pipeline::{live_stats, run_analysis, serving_order};
use prefeval_core::ranking::{OrderingMetric, RankedOrder};
use prefeval_core::rng::keyed_coin;
use prefeval_core::storage::{load_pairs, Experiment, ExperimentConfig, PositionMap, VoteLog};

use crate::ServiceError;

/// Annotator's answer in screen terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenChoice {
    Left,
    Right,
    BothGood,
    BothBad,
}

impl ScreenChoice {
    pub fn to_choice(self, map: PositionMap) -> Choice {
        match (self, map) {
            (ScreenChoice::Left, PositionMap::ALeft)
            | (ScreenChoice::Right, PositionMap::ARight) => Choice::PreferA,
            (ScreenChoice::Left, PositionMap::ARight)
            | (ScreenChoice::Right, PositionMap::ALeft) => Choice::PreferB,
            (ScreenChoice::BothGood, _) => Choice::BothGood,
            (ScreenChoice::BothBad, _) => Choice::BothBad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub prompt_id: String,
    pub annotator_id: String,
    pub position_map: PositionMap,
    pub issued_at: DateTime<Utc>,
}

/// What the annotator sees. No model names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub prompt: String,
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Position of this prompt in the ranked order.
    pub rank: usize,
    pub voted: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextResponse {
    Assignment {
        assignment: AssignmentRecord,
        payload: Payload,
        progress: Progress,
    },
    Done {
        votes_cast: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub annotator_id: String,
    pub prompt_id: String,
    pub choice: ScreenChoice,
    /// Echo of the assignment's position map.
    pub position_map: PositionMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub seq: u64,
    pub prompt_id: String,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub experiment_id: String,
    pub snapshot_seq: u64,
    #[serde(flatten)]
    pub summary: LiveSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: String,
    pub ordering: OrderingMetric,
    pub n_prompts: usize,
    pub n_votes: usize,
    pub guidelines: Vec<String>,
}

struct Hosted {
    experiment: Experiment,
    order: RankedOrder,
    issued: Mutex<HashMap<(String, String), AssignmentRecord>>,
}

impl Hosted {
    fn position_map(&self, annotator: &str, prompt: &str) -> PositionMap {
        if keyed_coin(self.experiment.config.master_seed, annotator, prompt) {
            PositionMap::ALeft
        } else {
            PositionMap::ARight
        }
    }

    fn voted_by(&self, annotator: &str) -> HashSet<String> {
        self.experiment
            .log
            .records()
            .into_iter()
            .filter(|r| r.annotator_id == annotator)
            .map(|r| r.prompt_id)
            .collect()
    }

    fn issue(&self, annotator: &str, rank: usize, voted: usize) -> NextResponse {
        let set = &self.experiment.set;
        let pair = &set.pairs()[self.order.permutation[rank]];
        let position_map = self.position_map(annotator, &pair.prompt_id);
        let assignment = AssignmentRecord {
            prompt_id: pair.prompt_id.clone(),
            annotator_id: annotator.to_string(),
            position_map,
            issued_at: Utc::now(),
        };
        self.issued.lock().unwrap().insert(
            (annotator.to_string(), pair.prompt_id.clone()),
            assignment.clone(),
        );
        let (left, right) = match position_map {
            PositionMap::ALeft => (&pair.completion_a, &pair.completion_b),
            PositionMap::ARight => (&pair.completion_b, &pair.completion_a),
        };
        NextResponse::Assignment {
            assignment,
            payload: Payload {
                prompt: pair.prompt.clone(),
                left: left.clone(),
                right: right.clone(),
            },
            progress: Progress {
                rank,
                voted,
                total: set.len(),
            },
        }
    }

    fn next(&self, annotator: &str) -> NextResponse {
        let voted = self.voted_by(annotator);
        let pairs = self.experiment.set.pairs();
        let rank = self
            .order
            .permutation
            .iter()
            .position(|&i| !voted.contains(&pairs[i].prompt_id));
        match rank {
            Some(rank) => self.issue(annotator, rank, voted.len()),
            None => NextResponse::Done {
                votes_cast: voted.len(),
                total: pairs.len(),
            },
        }
    }
}

/// Hosts one or more experiments. All methods are synchronous; vote appends
/// block on the log's fsync and should run off the async executor.
pub struct AnnotationService {
    experiments: BTreeMap<String, Arc<Hosted>>,
}

impl AnnotationService {
    pub fn new() -> Self {
        Self {
            experiments: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, experiment: Experiment) -> Result<(), ServiceError> {
        let order = serving_order(&experiment.set, &experiment.config)?;
        let id = experiment.config.experiment_id.clone();
        if self.experiments.contains_key(&id) {
            return Err(ServiceError::BadRequest(format!(
                "experiment {id} is already hosted"
            )));
        }
        for r in experiment.log.records() {
            if experiment.set.index_of(&r.prompt_id).is_none() {
                log::warn!("vote {} references unknown prompt {}", r.seq, r.prompt_id);
            }
        }
        self.experiments.insert(
            id,
            Arc::new(Hosted {
                experiment,
                order,
                issued: Mutex::new(HashMap::new()),
            }),
        );
        Ok(())
    }

    /// Loads pairs and opens (or creates) the vote log for `config`.
    pub fn open(
        config: ExperimentConfig,
        pairs: &Path,
        votes: &Path,
    ) -> Result<Self, ServiceError> {
        let set = load_pairs(pairs, config.family_mode)?;
        let log = VoteLog::open(votes)?;
        let mut service = Self::new();
        service.add(Experiment::new(config, set, log))?;
        Ok(service)
    }

    fn hosted(&self, id: &str) -> Result<&Arc<Hosted>, ServiceError> {
        self.experiments
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("experiment {id}")))
    }

    pub fn experiment(&self, id: &str) -> Result<&Experiment, ServiceError> {
        Ok(&self.hosted(id)?.experiment)
    }

    pub fn order(&self, id: &str) -> Result<&RankedOrder, ServiceError> {
        Ok(&self.hosted(id)?.order)
    }

    pub fn list(&self) -> Vec<ExperimentSummary> {
        self.experiments
            .values()
            .map(|h| ExperimentSummary {
                experiment_id: h.experiment.config.experiment_id.clone(),
                ordering: h.order.metric,
                n_prompts: h.experiment.set.len(),
                n_votes: h.experiment.log.len(),
                guidelines: h.experiment.config.guidelines.clone(),
            })
            .collect()
    }

    pub fn next_assignment(&self, id: &str, annotator: &str) -> Result<NextResponse, ServiceError> {
        if annotator.trim().is_empty() {
            return Err(ServiceError::BadRequest("annotator id is required".into()));
        }
        Ok(self.hosted(id)?.next(annotator))
    }

    pub fn submit_vote(
        &self,
        id: &str,
        req: &SubmitRequest,
    ) -> Result<SubmitResponse, ServiceError> {
        let hosted = self.hosted(id)?;
        let set = &hosted.experiment.set;
        let rank = hosted
            .order
            .permutation
            .iter()
            .position(|&i| set.pairs()[i].prompt_id == req.prompt_id)
            .ok_or_else(|| ServiceError::NotFound(format!("prompt {}", req.prompt_id)))?;

        let key = (req.annotator_id.clone(), req.prompt_id.clone());
        let issued = hosted.issued.lock().unwrap().get(&key).cloned();
        let Some(assignment) = issued else {
            return Err(ServiceError::Conflict {
                message: format!("no assignment was issued for prompt {}", req.prompt_id),
                reissued: Box::new(hosted.next(&req.annotator_id)),
            });
        };
        if assignment.position_map != req.position_map {
            let voted = hosted.voted_by(&req.annotator_id).len();
            return Err(ServiceError::Conflict {
                message: "position map does not match the issued assignment".into(),
                reissued: Box::new(hosted.issue(&req.annotator_id, rank, voted)),
            });
        }

        let vote = Vote {
            annotator_id: req.annotator_id.clone(),
            prompt_id: req.prompt_id.clone(),
            choice: req.choice.to_choice(assignment.position_map),
            submitted_at: Utc::now(),
        };
        let appended = hosted
            .experiment
            .log
            .append_idempotent(&vote, assignment.position_map)?;
        Ok(SubmitResponse {
            seq: appended.seq,
            prompt_id: req.prompt_id.clone(),
            duplicate: appended.duplicate,
        })
    }

    pub fn live_stats(&self, id: &str) -> Result<StatsResponse, ServiceError> {
        let hosted = self.hosted(id)?;
        let snapshot = hosted.experiment.snapshot();
        let summary = live_stats(&hosted.experiment.config, &snapshot, &hosted.order)?;
        Ok(StatsResponse {
            experiment_id: snapshot.experiment_id,
            snapshot_seq: snapshot.high_water,
            summary,
        })
    }

    pub fn export(&self, id: &str) -> Result<Report, ServiceError> {
        let hosted = self.hosted(id)?;
        Ok(run_analysis(
            &hosted.experiment.config,
            &hosted.experiment.snapshot(),
        )?)
    }
}

impl Default for AnnotationService {
    fn default() -> Self {
        Self::new()
    }
}
