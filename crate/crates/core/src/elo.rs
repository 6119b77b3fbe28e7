//! Two-player Elo with tie handling, rating traces and permutation-averaged
//! gold-standard ratings.

use serde::{Deserialize, Serialize};

use crate::ranking::{check_bijection, OrderingMetric};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EloConfig {
    pub initial_rating: f64,
    pub k_factor: f64,
    /// Rating gap that corresponds to 10:1 odds.
    pub scale: f64,
    pub base: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            initial_rating: 1400.0,
            k_factor: 32.0,
            scale: 400.0,
            base: 10.0,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        let valid = self.k_factor > 0.0 && self.scale > 0.0 && self.base > 1.0;
        if !valid {
            return Err(Error::Config(format!(
                "elo needs k_factor > 0, scale > 0 and base > 1 (got {}, {}, {})",
                self.k_factor, self.scale, self.base
            )));
        }
        if !self.initial_rating.is_finite() {
            return Err(Error::Config("initial rating must be finite".into()));
        }
        Ok(())
    }
}

/// Match score pair `(S_A, S_B)`; each lies in {0, 1/2, 1} and they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub a: f64,
    pub b: f64,
}

impl MatchScore {
    pub const A_WINS: MatchScore = MatchScore { a: 1.0, b: 0.0 };
    pub const B_WINS: MatchScore = MatchScore { a: 0.0, b: 1.0 };
    pub const TIE: MatchScore = MatchScore { a: 0.5, b: 0.5 };

    pub fn new(a: f64, b: f64) -> Result<Self> {
        let s = Self { a, b };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let allowed = |v: f64| v == 0.0 || v == 0.5 || v == 1.0;
        if !allowed(self.a) || self.a + self.b != 1.0 {
            return Err(Error::Contract(format!(
                "invalid match score ({}, {})",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

impl From<(f64, f64)> for MatchScore {
    fn from((a, b): (f64, f64)) -> Self {
        Self { a, b }
    }
}

pub fn expected_scores(r_a: f64, r_b: f64, config: &EloConfig) -> (f64, f64) {
    let e_a = 1.0 / (1.0 + config.base.powf((r_b - r_a) / config.scale));
    let e_b = 1.0 / (1.0 + config.base.powf((r_a - r_b) / config.scale));
    (e_a, e_b)
}

pub fn update(r_a: f64, r_b: f64, score: MatchScore, config: &EloConfig) -> Result<(f64, f64)> {
    score.validate()?;
    let (e_a, e_b) = expected_scores(r_a, r_b, config);
    Ok((
        r_a + config.k_factor * (score.a - e_a),
        r_b + config.k_factor * (score.b - e_b),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTrace {
    pub ordering_metric: OrderingMetric,
    /// Entry 0 is the initial rating; entry i follows the i-th outcome.
    pub ratings_a: Vec<f64>,
    pub ratings_b: Vec<f64>,
    pub final_a: f64,
    pub final_b: f64,
}

impl EloTrace {
    /// Ratings after the first `n` outcomes (clamped to the trace length).
    pub fn at(&self, n: usize) -> (f64, f64) {
        let i = n.min(self.ratings_a.len() - 1);
        (self.ratings_a[i], self.ratings_b[i])
    }
}

/// Folds `outcomes` left to right from the initial ratings.
pub fn run_sequence(
    outcomes: &[MatchScore],
    config: &EloConfig,
    ordering_metric: OrderingMetric,
) -> Result<EloTrace> {
    config.validate()?;
    let mut ratings_a = Vec::with_capacity(outcomes.len() + 1);
    let mut ratings_b = Vec::with_capacity(outcomes.len() + 1);
    let (mut r_a, mut r_b) = (config.initial_rating, config.initial_rating);
    ratings_a.push(r_a);
    ratings_b.push(r_b);
    for s in outcomes {
        (r_a, r_b) = update(r_a, r_b, *s, config)?;
        ratings_a.push(r_a);
        ratings_b.push(r_b);
    }
    Ok(EloTrace {
        ordering_metric,
        ratings_a,
        ratings_b,
        final_a: r_a,
        final_b: r_b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub mean_a: f64,
    pub mean_b: f64,
    pub sem_a: f64,
    pub sem_b: f64,
    pub n_perms: usize,
}

impl GoldStandard {
    /// `mean ± sem` at two decimals.
    pub fn display_a(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean_a, self.sem_a)
    }

    pub fn display_b(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean_b, self.sem_b)
    }
}

/// Mean and standard error (sample standard deviation over √n). One sample
/// has an SEM of 0.
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Final ratings averaged over `perms` reorderings of `outcomes`.
pub fn gold_standard(
    outcomes: &[MatchScore],
    perms: &[Vec<usize>],
    config: &EloConfig,
) -> Result<GoldStandard> {
    if perms.is_empty() {
        return Err(Error::InsufficientData(
            "gold standard needs at least one permutation".into(),
        ));
    }
    let mut finals_a = Vec::with_capacity(perms.len());
    let mut finals_b = Vec::with_capacity(perms.len());
    let mut reordered = Vec::with_capacity(outcomes.len());
    for perm in perms {
        check_bijection(perm, outcomes.len())?;
        reordered.clear();
        reordered.extend(perm.iter().map(|&i| outcomes[i]));
        let t = run_sequence(&reordered, config, OrderingMetric::Random)?;
        finals_a.push(t.final_a);
        finals_b.push(t.final_b);
    }
    let (mean_a, sem_a) = mean_and_sem(&finals_a);
    let (mean_b, sem_b) = mean_and_sem(&finals_b);
    Ok(GoldStandard {
        mean_a,
        mean_b,
        sem_a,
        sem_b,
        n_perms: perms.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: EloConfig = EloConfig {
        initial_rating: 1400.0,
        k_factor: 32.0,
        scale: 400.0,
        base: 10.0,
    };

    // Independent evaluation of the logistic expectation.
    fn expected_oracle(r_a: f64, r_b: f64) -> f64 {
        1.0 / (1.0 + (std::f64::consts::LN_10 * (r_b - r_a) / 400.0).exp())
    }

    #[test]
    fn expected_examples() {
        assert_eq!(expected_scores(1500.0, 1500.0, &CFG), (0.5, 0.5));
        let (e_a, e_b) = expected_scores(1800.0, 1400.0, &CFG);
        assert!((e_a - 10.0 / 11.0).abs() < 1e-12);
        assert!((e_b - 1.0 / 11.0).abs() < 1e-12);
        let (e_a, _) = expected_scores(1400.0, 1800.0, &CFG);
        assert!((e_a - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn update_examples() {
        assert_eq!(
            update(1400.0, 1400.0, MatchScore::A_WINS, &CFG).unwrap(),
            (1416.0, 1384.0)
        );
        assert_eq!(
            update(1400.0, 1400.0, MatchScore::TIE, &CFG).unwrap(),
            (1400.0, 1400.0)
        );

        let (ra, rb) = update(1416.0, 1384.0, MatchScore::TIE, &CFG).unwrap();
        let e_a = expected_oracle(1416.0, 1384.0);
        assert!((e_a - 0.545_921_922_780_483_7).abs() < 1e-12);
        assert!((ra - (1416.0 - 1.469_501_528_975_479)).abs() < 1e-9);
        assert!((rb - (1384.0 + 1.469_501_528_975_479)).abs() < 1e-9);
    }

    #[test]
    fn invalid_scores_rejected() {
        assert!(update(1400.0, 1400.0, MatchScore { a: 0.7, b: 0.3 }, &CFG).is_err());
        assert!(update(1400.0, 1400.0, MatchScore { a: 1.0, b: 1.0 }, &CFG).is_err());
        assert!(MatchScore::new(0.5, 0.5).is_ok());
    }

    #[test]
    fn run_sequence_examples() {
        let t = run_sequence(&[], &CFG, OrderingMetric::Kl).unwrap();
        assert_eq!(t.ratings_a, vec![1400.0]);
        assert_eq!((t.final_a, t.final_b), (1400.0, 1400.0));

        let t = run_sequence(
            &[MatchScore::A_WINS, MatchScore::B_WINS],
            &CFG,
            OrderingMetric::Kl,
        )
        .unwrap();
        assert_eq!(t.ratings_a.len(), 3);
        assert!(t.final_a < 1400.0);
        let expected = 1416.0 - 32.0 * expected_oracle(1416.0, 1384.0);
        assert!((t.final_a - expected).abs() < 1e-9);

        let t = run_sequence(&[MatchScore::TIE; 7], &CFG, OrderingMetric::Ce).unwrap();
        assert!(t.ratings_a.iter().all(|r| *r == 1400.0));
    }

    #[test]
    fn gold_standard_examples() {
        let ties = [MatchScore::TIE; 4];
        let perms = vec![vec![0, 1, 2, 3], vec![3, 2, 1, 0]];
        let g = gold_standard(&ties, &perms, &CFG).unwrap();
        assert_eq!((g.mean_a, g.sem_a, g.sem_b), (1400.0, 0.0, 0.0));

        let o = [MatchScore::A_WINS, MatchScore::TIE, MatchScore::B_WINS];
        let g = gold_standard(&o, &[vec![2, 0, 1]], &CFG).unwrap();
        let t = run_sequence(&[o[2], o[0], o[1]], &CFG, OrderingMetric::Random).unwrap();
        assert_eq!((g.mean_a, g.mean_b), (t.final_a, t.final_b));
        assert_eq!(g.sem_a, 0.0);
        assert_eq!(g.n_perms, 1);

        assert!(gold_standard(&o, &[vec![0, 0, 1]], &CFG).is_err());
        assert!(gold_standard(&o, &[], &CFG).is_err());
    }

    #[test]
    fn sem_by_hand() {
        // values 1, 2, 3, 4: mean 2.5, sample var 5/3, sem sqrt(5/12)
        let (m, s) = mean_and_sem(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn display_format() {
        let g = GoldStandard {
            mean_a: 1432.6912,
            mean_b: 1367.3088,
            sem_a: 2.3449,
            sem_b: 2.3449,
            n_perms: 100,
        };
        assert_eq!(g.display_a(), "1432.69 ± 2.34");
        assert_eq!(g.display_b(), "1367.31 ± 2.34");
    }

    fn score() -> impl Strategy<Value = MatchScore> {
        prop_oneof![
            Just(MatchScore::A_WINS),
            Just(MatchScore::B_WINS),
            Just(MatchScore::TIE)
        ]
    }

    proptest! {
        #[test]
        fn expectations_sum_to_one(a in -5000.0f64..5000.0, b in -5000.0f64..5000.0) {
            let (e_a, e_b) = expected_scores(a, b, &CFG);
            prop_assert!((e_a + e_b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn expectations_translation_invariant(a in -3000.0f64..3000.0, b in -3000.0f64..3000.0, c in -3000.0f64..3000.0) {
            let (x, _) = expected_scores(a, b, &CFG);
            let (y, _) = expected_scores(a + c, b + c, &CFG);
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn rating_sum_conserved(s in prop::collection::vec(score(), 0..500)) {
            let t = run_sequence(&s, &CFG, OrderingMetric::Kl).unwrap();
            for (a, b) in t.ratings_a.iter().zip(&t.ratings_b) {
                prop_assert!((a + b - 2800.0).abs() < 1e-9);
            }
        }
    }
}
