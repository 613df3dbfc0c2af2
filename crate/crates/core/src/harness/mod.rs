//! End-to-end audit protocol: data preparation, discriminator
//! construction, auditing and metrics over many artists and seeds.

mod metrics;
mod query;

pub use metrics::{auc, Confusion, Stat};
pub use query::{caption_provider, CaptionProvider, LoggedResponse, ResponseLog, SuspiciousModel, TemplateCaptions, TEMPLATE_PROVIDER};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{augment, AugmentationConfig};
use crate::dataset::{resize_square, sample_negatives_n, split_train_valid, ArtworkRecord, ArtworkSet, Role};
use crate::decision::{decide_threshold, decide_ttest, AuditDecision, Mechanism, Provenance, ScoreSample, ScoreSource};
use crate::discriminator::{train, Discriminator, DistortionPair, LabeledExample, TrainConfig, TrainReport};
use crate::error::{Error, Result, StageExt};
use crate::exec::{self, Execution};
use crate::extractor::{extract_batch, Backbone, RepresentationCache, StyleRepresentation, TapPlan};
use crate::rng;
use crate::simulator::LoadedBenchmark;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($name::$variant => $text),+
                })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

string_enum!(MechanismChoice {
    Threshold => "threshold",
    TTest => "t_test",
    Both => "both",
});

string_enum!(OverlapMode {
    Complete => "complete",
    Partial => "partial",
    Disjoint => "disjoint",
});

string_enum!(Ablation {
    WithoutAugmentation => "without_augmentation",
    WithoutDistortion => "without_distortion",
});

impl MechanismChoice {
    pub fn mechanisms(self) -> Vec<Mechanism> {
        match self {
            MechanismChoice::Threshold => vec![Mechanism::Threshold],
            MechanismChoice::TTest => vec![Mechanism::TTest],
            MechanismChoice::Both => vec![Mechanism::Threshold, Mechanism::TTest],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub without_augmentation: bool,
    pub without_distortion: bool,
}

impl Ablations {
    pub fn only(a: Ablation) -> Self {
        Ablations {
            without_augmentation: a == Ablation::WithoutAugmentation,
            without_distortion: a == Ablation::WithoutDistortion,
        }
    }

    pub fn label(&self) -> Option<String> {
        let mut parts = Vec::new();
        if self.without_augmentation {
            parts.push(Ablation::WithoutAugmentation.to_string());
        }
        if self.without_distortion {
            parts.push(Ablation::WithoutDistortion.to_string());
        }
        (!parts.is_empty()).then(|| parts.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mechanism: MechanismChoice,
    pub seeds: Vec<u64>,
    pub queries_per_artist: usize,
    pub overlap_mode: OverlapMode,
    pub ablations: Ablations,
    pub caption_provider: String,
    pub threshold: f64,
    pub confidence: f64,
    /// Fraction of the audit set used for training, the rest validates.
    pub train_ratio: f64,
    /// Public artworks captioned and sent to the model per audit.
    pub distortion_pairs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mechanism: MechanismChoice::Both,
            seeds: vec![1, 2, 3, 4, 5],
            queries_per_artist: 20,
            overlap_mode: OverlapMode::Complete,
            ablations: Ablations::default(),
            caption_provider: TEMPLATE_PROVIDER.to_string(),
            threshold: crate::decision::DEFAULT_THRESHOLD,
            confidence: crate::decision::DEFAULT_CONFIDENCE,
            train_ratio: 0.8,
            distortion_pairs: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries_per_artist < 1 {
            return Err(Error::InvalidConfig("queries_per_artist must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be nonempty".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::InvalidConfig("train_ratio outside (0, 1)".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("confidence outside (0, 1)".into()));
        }
        caption_provider(&self.caption_provider).map(|_| ())
    }
}

/// Splits `target` into the adversary's fine-tuning set and the auditor's
/// audit set.
///
/// `Partial` shares `n / 2` records and deals the rest alternately;
/// `Disjoint` is an equal-size partition.
pub fn apply_overlap_mode(target: &ArtworkSet, mode: OverlapMode, seed: u64) -> Result<(ArtworkSet, ArtworkSet)> {
    let n = target.len();
    if n < 4 {
        return Err(Error::TooFewRecords { needed: 4, got: n });
    }
    if mode == OverlapMode::Complete {
        return Ok((target.clone(), target.clone()));
    }
    if mode == OverlapMode::Partial && n % 2 != 0 {
        return Err(Error::TooFewRecords { needed: n + 1, got: n });
    }
    let order = index::sample(&mut rng::seeded(seed), n, n).into_vec();
    let (mut fine, mut audit) = (Vec::new(), Vec::new());
    match mode {
        OverlapMode::Partial => {
            let (shared, rest) = order.split_at(n / 2);
            fine.extend_from_slice(shared);
            audit.extend_from_slice(shared);
            for (k, &i) in rest.iter().enumerate() {
                if k % 2 == 0 { fine.push(i) } else { audit.push(i) }
            }
        }
        _ => {
            let half = n / 2;
            fine.extend_from_slice(&order[..half]);
            audit.extend_from_slice(&order[half..2 * half]);
        }
    }
    let pick = |mut idx: Vec<usize>| {
        idx.sort_unstable();
        ArtworkSet {
            artist_id: target.artist_id.clone(),
            records: idx.into_iter().map(|i| target.records[i].clone()).collect(),
            split_seed: seed,
        }
    };
    Ok((pick(fine), pick(audit)))
}

/// Everything fixed across the audits of one experiment.
pub struct Pipeline<'a> {
    pub backbone: &'a Backbone,
    pub plan: &'a TapPlan,
    pub cache: Option<&'a RepresentationCache>,
    pub augmentation: AugmentationConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
    pub exec: Execution,
}

/// A trained discriminator together with the data that produced it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub discriminator: Discriminator,
    pub report: TrainReport,
    pub audit_set: ArtworkSet,
    pub n_positives: usize,
    pub n_negatives: usize,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub artist_id: String,
    pub seed: u64,
    pub decisions: Vec<AuditDecision>,
    pub scores: Vec<f64>,
    pub mean_score: f64,
    pub n_positives: usize,
    pub n_negatives: usize,
    pub n_pairs: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

fn audit_seed(seed: u64, artist: &str) -> u64 {
    rng::derive(seed, &format!("audit:{artist}"))
}

impl<'a> Pipeline<'a> {
    pub fn new(backbone: &'a Backbone, plan: &'a TapPlan) -> Self {
        Pipeline {
            backbone,
            plan,
            cache: None,
            augmentation: AugmentationConfig::default(),
            train: TrainConfig::default(),
            experiment: ExperimentConfig::default(),
            exec: Execution::default(),
        }
    }

    fn uses_augmentation(&self) -> bool {
        self.train.use_augmentation && !self.experiment.ablations.without_augmentation
    }

    fn uses_distortion(&self) -> bool {
        self.train.use_distortion_term && !self.experiment.ablations.without_distortion
    }

    fn side(&self) -> u32 {
        self.backbone.adapter().input_side
    }

    pub fn provenance(&self, seed: u64) -> Provenance {
        Provenance {
            seed: Some(seed),
            tap_plan_hash: Some(self.plan.hash.clone()),
            weights_digest: Some(self.backbone.digest().to_string()),
            overlap_mode: Some(self.experiment.overlap_mode.to_string()),
            ablation: self.experiment.ablations.label(),
            epochs_run: None,
            best_epoch: None,
        }
    }

    /// The auditor's share of `target` under the configured overlap mode.
    pub fn audit_set(&self, target: &ArtworkSet, seed: u64) -> Result<ArtworkSet> {
        let base = audit_seed(seed, &target.artist_id);
        Ok(apply_overlap_mode(target, self.experiment.overlap_mode, rng::derive(base, "overlap"))?.1)
    }

    /// Public records whose captions are sent to the model for distortion
    /// pairs. Shared by every artist audited under `seed`.
    pub fn pair_records<'p>(&self, pool: &'p ArtworkSet, seed: u64) -> Vec<&'p ArtworkRecord> {
        let public: Vec<&ArtworkRecord> = pool.records.iter().filter(|r| r.role == Role::Public).collect();
        let k = self.experiment.distortion_pairs.min(public.len());
        let mut picked = index::sample(&mut rng::seeded(rng::derive(seed, "pairs")), public.len(), k).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| public[i]).collect()
    }

    pub fn pair_prompts(&self, pool: &ArtworkSet, seed: u64) -> Result<Vec<String>> {
        let captions = caption_provider(&self.experiment.caption_provider)?;
        Ok(self.pair_records(pool, seed).into_iter().map(|r| captions.caption(r)).collect())
    }

    /// Target-tagged prompts for the audit queries.
    pub fn query_prompts(&self, audit_set: &ArtworkSet, seed: u64) -> Result<Vec<String>> {
        if audit_set.is_empty() {
            return Err(Error::TooFewRecords { needed: 1, got: 0 });
        }
        let captions = caption_provider(&self.experiment.caption_provider)?;
        Ok((0..self.experiment.queries_per_artist)
            .map(|k| {
                let r = &audit_set.records[k % audit_set.len()];
                format!("{}, variation {}, seed {seed}", captions.caption(r), k / audit_set.len())
            })
            .collect())
    }

    fn generate_set(&self, model: &dyn SuspiciousModel, artist: &str, prompts: &[String]) -> Result<ArtworkSet> {
        let side = self.side();
        let records = exec::try_map(self.exec, prompts, |_, prompt| {
            let img = resize_square(&model.generate(prompt)?, side);
            let mut r = ArtworkRecord::new(format!("generated:{prompt}"), artist, Role::Generated, img);
            r.caption = Some(prompt.clone());
            Ok::<_, Error>(r)
        })?;
        Ok(ArtworkSet::new(artist, records))
    }

    fn extract(&self, sets: &[&ArtworkSet]) -> Result<BTreeMap<String, StyleRepresentation>> {
        extract_batch(self.backbone, self.plan, sets, self.cache, self.exec)
    }

    /// Data preparation and discriminator construction for one artist.
    ///
    /// `pool` supplies negatives (any record not by the target artist) and,
    /// through its public records, the distortion pairs.
    pub fn train_discriminator(
        &self,
        target: &ArtworkSet,
        pool: &ArtworkSet,
        model: &dyn SuspiciousModel,
        seed: u64,
    ) -> Result<Trained> {
        self.experiment.validate()?;
        let artist = target.artist_id.as_str();
        let base = audit_seed(seed, artist);
        let audit_set = self.audit_set(target, seed).stage("overlap")?;
        let (train_pos, valid_pos) =
            split_train_valid(&audit_set, self.experiment.train_ratio, rng::derive(base, "split")).stage("split")?;
        let (train_pos, valid_pos) = if self.uses_augmentation() {
            let cfg = AugmentationConfig {
                seed: rng::derive(base, "augment"),
                ..self.augmentation.clone()
            };
            (
                augment(&train_pos, &cfg, self.exec).stage("augment")?,
                augment(&valid_pos, &cfg, self.exec).stage("augment")?,
            )
        } else {
            (train_pos, valid_pos)
        };

        let wanted = train_pos.len() + valid_pos.len();
        let available = pool.records.iter().filter(|r| r.artist_id != artist).count();
        let count = wanted.min(available);
        if count < wanted {
            debug!("{artist}: pool holds {available} negatives, wanted {wanted}");
        }
        let negatives = sample_negatives_n(artist, count, pool, rng::derive(base, "negatives")).stage("negatives")?;
        let n_train_neg = ((count * train_pos.len()) as f64 / wanted as f64).round() as usize;
        let n_train_neg = n_train_neg.clamp(1.min(count), count.saturating_sub(1).max(1.min(count)));
        let train_neg = ArtworkSet::new(artist, negatives.records[..n_train_neg].to_vec());
        let valid_neg = ArtworkSet::new(artist, negatives.records[n_train_neg..].to_vec());

        let (pair_public, pair_generated) = if self.uses_distortion() {
            let records: Vec<ArtworkRecord> = self.pair_records(pool, seed).into_iter().cloned().collect();
            let prompts = self.pair_prompts(pool, seed)?;
            let generated = self.generate_set(model, artist, &prompts).stage("distortion_pairs")?;
            (ArtworkSet::new(artist, records), generated)
        } else {
            (ArtworkSet::new(artist, Vec::new()), ArtworkSet::new(artist, Vec::new()))
        };

        let reps = self
            .extract(&[&train_pos, &valid_pos, &train_neg, &valid_neg, &pair_public, &pair_generated])
            .stage("extract")?;
        let examples = |set: &ArtworkSet, target: f64| -> Vec<LabeledExample> {
            set.records
                .iter()
                .map(|r| LabeledExample {
                    representation: reps[&r.id].clone(),
                    target,
                })
                .collect()
        };
        let mut train_examples = examples(&train_pos, 1.0);
        train_examples.extend(examples(&train_neg, -1.0));
        let mut valid_examples = examples(&valid_pos, 1.0);
        valid_examples.extend(examples(&valid_neg, -1.0));
        let pairs: Vec<DistortionPair> = pair_public
            .records
            .iter()
            .zip(&pair_generated.records)
            .map(|(p, g)| DistortionPair {
                public_rep: reps[&p.id].clone(),
                generated_rep: reps[&g.id].clone(),
            })
            .collect();

        let cfg = TrainConfig {
            seed: rng::derive(base, "train"),
            use_distortion_term: self.uses_distortion(),
            use_augmentation: self.uses_augmentation(),
            ..self.train.clone()
        };
        let (discriminator, report) = train(artist, &train_examples, &valid_examples, &pairs, &cfg).stage("train")?;
        Ok(Trained {
            discriminator,
            report,
            audit_set,
            n_positives: train_pos.len() + valid_pos.len(),
            n_negatives: count,
            n_pairs: pairs.len(),
        })
    }

    /// Queries the model with target-tagged prompts and scores the outputs.
    pub fn score_queries(
        &self,
        discriminator: &Discriminator,
        audit_set: &ArtworkSet,
        model: &dyn SuspiciousModel,
        seed: u64,
    ) -> Result<ScoreSample> {
        let artist = audit_set.artist_id.as_str();
        let prompts = self.query_prompts(audit_set, seed).stage("query")?;
        let generated = self.generate_set(model, artist, &prompts).stage("query")?;
        let reps = self.extract(&[&generated]).stage("extract")?;
        let ordered: Vec<StyleRepresentation> = generated.records.iter().map(|r| reps[&r.id].clone()).collect();
        let scores = discriminator.score_batch(&ordered).stage("score")?;
        ScoreSample::new(scores, artist, ScoreSource::Discriminator).stage("score")
    }

    pub fn decide(&self, sample: &ScoreSample, provenance: &Provenance) -> Result<Vec<AuditDecision>> {
        self.experiment
            .mechanism
            .mechanisms()
            .into_iter()
            .map(|m| {
                let mut d = match m {
                    Mechanism::Threshold => decide_threshold(sample, self.experiment.threshold),
                    Mechanism::TTest => decide_ttest(sample, self.experiment.confidence).stage("decision")?,
                };
                d.provenance = Some(provenance.clone());
                Ok(d)
            })
            .collect()
    }

    /// Full protocol for one target artist.
    pub fn run_audit(
        &self,
        target: &ArtworkSet,
        pool: &ArtworkSet,
        model: &dyn SuspiciousModel,
        seed: u64,
    ) -> Result<AuditOutcome> {
        if target.is_empty() {
            return Err(Error::TooFewRecords { needed: 1, got: 0 });
        }
        let trained = self.train_discriminator(target, pool, model, seed)?;
        let sample = self.score_queries(&trained.discriminator, &trained.audit_set, model, seed)?;
        let mut prov = self.provenance(seed);
        prov.epochs_run = Some(trained.report.epochs_run);
        prov.best_epoch = Some(trained.report.best_epoch);
        let decisions = self.decide(&sample, &prov)?;
        Ok(AuditOutcome {
            artist_id: target.artist_id.clone(),
            seed,
            decisions,
            mean_score: sample.mean(),
            scores: sample.scores().to_vec(),
            n_positives: trained.n_positives,
            n_negatives: trained.n_negatives,
            n_pairs: trained.n_pairs,
            epochs_run: trained.report.epochs_run,
            best_epoch: trained.report.best_epoch,
        })
    }

    /// Audits every artist under every seed and aggregates metrics.
    pub fn run_experiment(&self, data: &ExperimentData<'_>) -> Result<ExperimentResult> {
        self.experiment.validate()?;
        data.check()?;
        let pool = data.pool();
        let artists: Vec<(&String, &ArtworkSet)> = data.targets.iter().collect();
        let mut outcomes = Vec::new();
        for &seed in &self.experiment.seeds {
            let per_seed = exec::try_map(self.exec, &artists, |_, (id, set)| {
                self.run_audit(set, &pool, data.model, seed)
                    .map_err(|e| Error::Artwork {
                        id: (*id).clone(),
                        source: Box::new(e),
                    })
            })?;
            for o in &per_seed {
                info!("seed {seed} {}: mean score {:.3}", o.artist_id, o.mean_score);
            }
            outcomes.extend(per_seed);
        }
        let reports = self
            .experiment
            .mechanism
            .mechanisms()
            .into_iter()
            .map(|m| self.report(m, &outcomes, data))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentResult { reports, outcomes })
    }

    fn report(&self, mechanism: Mechanism, outcomes: &[AuditOutcome], data: &ExperimentData<'_>) -> Result<MetricsReport> {
        let mut per_seed = Vec::new();
        for &seed in &self.experiment.seeds {
            let of_seed: Vec<&AuditOutcome> = outcomes.iter().filter(|o| o.seed == seed).collect();
            let verdicts: Vec<(bool, bool)> = of_seed
                .iter()
                .map(|o| {
                    let d = o.decisions.iter().find(|d| d.mechanism == mechanism).expect("decided");
                    (d.verdict.is_infringing(), data.ground_truth[&o.artist_id])
                })
                .collect();
            let scored: Vec<(f64, bool)> = of_seed.iter().map(|o| (o.mean_score, data.ground_truth[&o.artist_id])).collect();
            let c = Confusion::from_pairs(&verdicts);
            per_seed.push(SeedMetrics {
                seed,
                accuracy: c.accuracy(),
                auc: auc(&scored)?,
                f1: c.f1(),
                fpr: c.fpr(),
                confusion: c,
            });
        }
        let stat = |f: fn(&SeedMetrics) -> f64| Stat::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsReport {
            mechanism,
            n_artists: data.targets.len(),
            overlap_mode: self.experiment.overlap_mode,
            ablation: self.experiment.ablations.label(),
            auc_aggregation: "artist_mean_score".to_string(),
            accuracy: stat(|m| m.accuracy),
            auc: stat(|m| m.auc),
            f1: stat(|m| m.f1),
            fpr: stat(|m| m.fpr),
            per_seed,
        })
    }

    /// Baseline (no ablation flags) and ablated runs on the same seeds and
    /// data.
    pub fn run_ablation(&self, data: &ExperimentData<'_>, ablations: Ablations) -> Result<AblationResult> {
        let with = |a: Ablations| Pipeline {
            experiment: ExperimentConfig {
                ablations: a,
                ..self.experiment.clone()
            },
            augmentation: self.augmentation.clone(),
            train: self.train.clone(),
            ..*self
        };
        Ok(AblationResult {
            ablations,
            baseline: with(Ablations::default()).run_experiment(data)?,
            ablated: with(ablations).run_experiment(data)?,
        })
    }
}

/// Targets, ground truth and model for an experiment.
pub struct ExperimentData<'a> {
    pub targets: BTreeMap<String, ArtworkSet>,
    /// Public artworks; pooled with all targets as the negative source.
    pub public: ArtworkSet,
    pub ground_truth: BTreeMap<String, bool>,
    pub model: &'a dyn SuspiciousModel,
}

impl<'a> ExperimentData<'a> {
    pub fn from_benchmark(bench: &LoadedBenchmark, model: &'a dyn SuspiciousModel) -> Self {
        ExperimentData {
            targets: bench.originals.clone(),
            public: bench.public.clone(),
            ground_truth: bench.manifest.ground_truth(),
            model,
        }
    }

    fn check(&self) -> Result<()> {
        let labels: HashSet<bool> = self.targets.keys().filter_map(|a| self.ground_truth.get(a).copied()).collect();
        if let Some(a) = self.targets.keys().find(|a| !self.ground_truth.contains_key(*a)) {
            return Err(Error::DegenerateGroundTruth(format!("no ground truth for {a}")));
        }
        if self.targets.len() < 2 || labels.len() < 2 {
            return Err(Error::DegenerateGroundTruth(
                "need at least one pirated and one non-pirated artist".into(),
            ));
        }
        Ok(())
    }

    pub fn pool(&self) -> ArtworkSet {
        ArtworkSet::pool(std::iter::once(&self.public).chain(self.targets.values()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
    pub fpr: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mechanism: Mechanism,
    pub n_artists: usize,
    pub overlap_mode: OverlapMode,
    pub ablation: Option<String>,
    /// How per-image scores become one AUC point per artist.
    pub auc_aggregation: String,
    pub accuracy: Stat,
    pub auc: Stat,
    pub f1: Stat,
    pub fpr: Stat,
    pub per_seed: Vec<SeedMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub reports: Vec<MetricsReport>,
    pub outcomes: Vec<AuditOutcome>,
}

impl ExperimentResult {
    pub fn report(&self, mechanism: Mechanism) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.mechanism == mechanism)
    }

    pub fn decisions(&self) -> impl Iterator<Item = (u64, &AuditDecision)> {
        self.outcomes.iter().flat_map(|o| o.decisions.iter().map(move |d| (o.seed, d)))
    }

    /// Decision CSV with a leading seed column.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed,{}", crate::decision::CSV_HEADER)?;
        for (seed, d) in self.decisions() {
            writeln!(w, "{seed},{}", d.csv_row())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub ablations: Ablations,
    pub baseline: ExperimentResult,
    pub ablated: ExperimentResult,
}
