//! Numeric kernel: log-probabilities to probability vectors, normalization,
//! KL divergence, cross-entropy and min-max scaling.

use serde::{Deserialize, Serialize};

use crate::ranking::CompletionPair;
use crate::{Error, Result};

/// Tolerance used when checking that a vector sums to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Per-token natural-log probabilities of one completion.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LogProbSequence(Vec<f64>);

impl LogProbSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::new_named(values, "logprobs")
    }

    /// Like [`LogProbSequence::new`], naming `field` in the error.
    pub fn new_named(values: Vec<f64>, field: &str) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: field.to_string(),
                index,
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'de> Deserialize<'de> for LogProbSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // serde_json maps NaN/inf to null, so accept nulls here and reject them
        // with a position instead of an opaque type error.
        let raw: Vec<Option<f64>> = Vec::deserialize(deserializer)?;
        let values = raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.filter(|x| x.is_finite()).ok_or_else(|| {
                    serde::de::Error::custom(format!("non-finite log probability at index {i}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self(values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    entries: Vec<f64>,
    normalized: bool,
}

impl ProbabilityVector {
    /// Unnormalized vector; entries must be finite and non-negative.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract(format!(
                "probability entry {i} is negative or non-finite"
            )));
        }
        Ok(Self {
            entries,
            normalized: false,
        })
    }

    /// Vector already on the simplex. Fails unless the entries sum to one.
    pub fn normalized(entries: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(entries)?;
        let total: f64 = v.entries.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Contract(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        v.normalized = true;
        Ok(v)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "CE")]
    Ce,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Kl => "KL",
            Metric::Ce => "CE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    SumNormalize,
    MinMaxThenSumNormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub metric: Metric,
    pub epsilon: f64,
    pub normalization: Normalization,
}

impl MetricConfig {
    pub fn new(metric: Metric, normalization: Normalization) -> Self {
        Self {
            metric,
            epsilon: DEFAULT_EPSILON,
            normalization,
        }
    }

    pub fn with_metric(self, metric: Metric) -> Self {
        Self { metric, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self::new(Metric::Kl, Normalization::SumNormalize)
    }
}

/// Exponentiates `seq` and zero-pads it to `pad_to` entries.
pub fn to_probabilities(seq: &LogProbSequence, pad_to: usize) -> Result<ProbabilityVector> {
    if pad_to < seq.len() {
        return Err(Error::Length {
            len: seq.len(),
            pad_to,
        });
    }
    let mut entries: Vec<f64> = seq.values().iter().map(|s| s.exp()).collect();
    entries.resize(pad_to, 0.0);
    Ok(ProbabilityVector {
        entries,
        normalized: false,
    })
}

pub fn sum_normalize(vec: &ProbabilityVector) -> Result<ProbabilityVector> {
    let total: f64 = vec.entries.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate(
            "cannot sum-normalize an all-zero vector".into(),
        ));
    }
    Ok(ProbabilityVector {
        entries: vec.entries.iter().map(|v| v / total).collect(),
        normalized: true,
    })
}

fn check_pair(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            left: p.len(),
            right: q.len(),
        });
    }
    if !p.normalized || !q.normalized {
        return Err(Error::Contract(
            "metric inputs must be normalized probability vectors".into(),
        ));
    }
    Ok(())
}

/// KL(p‖q) = Σ p_i ln(p_i / max(q_i, ε)); zero-mass terms of `p` contribute 0.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector, epsilon: f64) -> Result<f64> {
    check_pair(p, q)?;
    Ok(p.entries
        .iter()
        .zip(&q.entries)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(epsilon)).ln())
        .sum())
}

/// CE(p, q) = −Σ p_i ln(max(q_i, ε)).
pub fn cross_entropy(p: &ProbabilityVector, q: &ProbabilityVector, epsilon: f64) -> Result<f64> {
    check_pair(p, q)?;
    Ok(-p
        .entries
        .iter()
        .zip(&q.entries)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * qi.max(epsilon).ln())
        .sum::<f64>())
}

/// Maps each value to `(v - min) / (max - min)`. A zero-width range maps
/// everything to 0.5.
pub fn min_max_scale(values: &[f64], global_min: f64, global_max: f64) -> Result<Vec<f64>> {
    if global_max < global_min || global_min.is_nan() || global_max.is_nan() {
        return Err(Error::Contract(format!(
            "min-max range is inverted: min {global_min} > max {global_max}"
        )));
    }
    let width = global_max - global_min;
    if width == 0.0 {
        return Ok(vec![0.5; values.len()]);
    }
    Ok(values
        .iter()
        .map(|v| ((v - global_min) / width).clamp(0.0, 1.0))
        .collect())
}

/// Dissimilarity between the two completions of `pair`, with model A as `p`.
pub fn pair_dissimilarity(pair: &CompletionPair, config: &MetricConfig) -> Result<f64> {
    let (a, b) = (&pair.logprobs_a, &pair.logprobs_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("empty log-prob sequence".into()));
    }
    let width = a.len().max(b.len());
    let mut pa = to_probabilities(a, width)?;
    let mut pb = to_probabilities(b, width)?;

    if config.normalization == Normalization::MinMaxThenSumNormalize {
        // Range over real tokens only; padding positions stay at zero mass.
        let real = pa.entries[..a.len()]
            .iter()
            .chain(&pb.entries[..b.len()])
            .copied();
        let (lo, hi) = real.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let scaled_a = min_max_scale(&pa.entries[..a.len()], lo, hi)?;
        let scaled_b = min_max_scale(&pb.entries[..b.len()], lo, hi)?;
        pa.entries[..a.len()].copy_from_slice(&scaled_a);
        pb.entries[..b.len()].copy_from_slice(&scaled_b);
    }

    let p = sum_normalize(&pa)?;
    let q = sum_normalize(&pb)?;
    match config.metric {
        Metric::Kl => kl_divergence(&p, &q, config.epsilon),
        Metric::Ce => cross_entropy(&p, &q, config.epsilon),
    }
}
