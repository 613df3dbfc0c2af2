//! Turning a set of per-image confidence scores into an audit verdict.

pub mod student_t;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.0;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Discriminator,
    AdaptedBinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    scores: Vec<f64>,
    pub artist_id: String,
    pub source: ScoreSource,
}

impl ScoreSample {
    pub fn new(scores: Vec<f64>, artist_id: impl Into<String>, source: ScoreSource) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::TooFewScores(0));
        }
        if let Some(bad) = scores.iter().find(|c| !c.is_finite() || c.abs() > 1.0) {
            return Err(Error::InvalidConfig(format!("score {bad} outside [-1, 1]")));
        }
        Ok(ScoreSample {
            scores,
            artist_id: artist_id.into(),
            source,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    /// Sample standard deviation (n - 1 denominator); 0 for n = 1.
    pub fn stddev(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.scores.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Infringing,
    NotInfringing,
}

impl Verdict {
    pub fn is_infringing(self) -> bool {
        self == Verdict::Infringing
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Infringing => "infringing",
            Verdict::NotInfringing => "not_infringing",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Threshold,
    TTest,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Threshold => "threshold",
            Mechanism::TTest => "t_test",
        })
    }
}

/// Why a t-test recorded no statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateCase {
    /// All scores equal; decided by the sign of the mean.
    ZeroVariance,
}

/// Where a decision came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub tap_plan_hash: Option<String>,
    pub weights_digest: Option<String>,
    pub overlap_mode: Option<String>,
    pub ablation: Option<String>,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDecision {
    pub artist_id: String,
    pub verdict: Verdict,
    pub mechanism: Mechanism,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
    pub t_statistic: Option<f64>,
    pub critical_t: Option<f64>,
    pub degenerate: Option<DegenerateCase>,
    pub confidence_level: f64,
    pub threshold: f64,
    pub provenance: Option<Provenance>,
}

/// Infringing iff the mean score is strictly above `threshold`.
pub fn decide_threshold(sample: &ScoreSample, threshold: f64) -> AuditDecision {
    let mean = sample.mean();
    AuditDecision {
        artist_id: sample.artist_id.clone(),
        verdict: if mean > threshold {
            Verdict::Infringing
        } else {
            Verdict::NotInfringing
        },
        mechanism: Mechanism::Threshold,
        mean,
        stddev: sample.stddev(),
        n: sample.len(),
        t_statistic: None,
        critical_t: None,
        degenerate: None,
        confidence_level: DEFAULT_CONFIDENCE,
        threshold,
        provenance: None,
    }
}

/// One-sided t statistic `mean / (s / sqrt(n))`.
pub fn t_statistic(mean: f64, stddev: f64, n: usize) -> f64 {
    mean / (stddev / (n as f64).sqrt())
}

/// Upper critical value of the one-sided test at `confidence`.
pub fn critical_t(n: usize, confidence: f64) -> f64 {
    student_t::t_quantile(confidence, (n - 1) as f64)
}

/// One-sided t-test of H0: mu <= 0 against H1: mu > 0.
///
/// With zero sample variance the statistic is undefined; the verdict then
/// follows the sign of the mean and `degenerate` is set.
pub fn decide_ttest(sample: &ScoreSample, confidence: f64) -> Result<AuditDecision> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence {confidence} outside (0, 1)")));
    }
    let n = sample.len();
    let mean = sample.mean();
    let s = sample.stddev();
    let constant = sample.scores.iter().all(|&c| c == sample.scores[0]);
    let mut d = AuditDecision {
        artist_id: sample.artist_id.clone(),
        verdict: Verdict::NotInfringing,
        mechanism: Mechanism::TTest,
        mean,
        stddev: s,
        n,
        t_statistic: None,
        critical_t: None,
        degenerate: None,
        confidence_level: confidence,
        threshold: DEFAULT_THRESHOLD,
        provenance: None,
    };
    if n < 2 {
        return Err(Error::TooFewScores(n));
    }
    if constant || s == 0.0 {
        d.degenerate = Some(DegenerateCase::ZeroVariance);
        d.stddev = 0.0;
        if mean > 0.0 {
            d.verdict = Verdict::Infringing;
        }
        return Ok(d);
    }
    let t = t_statistic(mean, s, n);
    let crit = critical_t(n, confidence);
    d.t_statistic = Some(t);
    d.critical_t = Some(crit);
    if t > crit {
        d.verdict = Verdict::Infringing;
    }
    Ok(d)
}

pub fn decide(sample: &ScoreSample, mechanism: Mechanism) -> Result<AuditDecision> {
    match mechanism {
        Mechanism::Threshold => Ok(decide_threshold(sample, DEFAULT_THRESHOLD)),
        Mechanism::TTest => decide_ttest(sample, DEFAULT_CONFIDENCE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryPrediction {
    Positive,
    Negative,
}

/// Maps an external binary detector's outputs onto ±1.0 scores.
pub fn adapt_binary(predictions: &[BinaryPrediction], artist_id: &str) -> Result<ScoreSample> {
    let scores = predictions
        .iter()
        .map(|p| match p {
            BinaryPrediction::Positive => 1.0,
            BinaryPrediction::Negative => -1.0,
        })
        .collect();
    ScoreSample::new(scores, artist_id, ScoreSource::AdaptedBinary)
}

pub const CSV_HEADER: &str = "artist_id,mechanism,n,mean,stddev,t,critical_t,verdict";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AuditDecision {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.artist_id,
            self.mechanism,
            self.n,
            self.mean,
            self.stddev,
            opt(self.t_statistic),
            opt(self.critical_t),
            self.verdict
        )
    }
}

/// Writes decisions as CSV, header first.
pub fn write_csv<W: Write>(mut w: W, decisions: &[AuditDecision]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for d in decisions {
        writeln!(w, "{}", d.csv_row())?;
    }
    Ok(())
}
