//! Command-line front end. Every command reads one TOML config; flags
//! override individual settings.

mod config;

pub use config::{BackboneConfig, CorpusConfig, PathsConfig, RunConfig, RunSection};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::ArtworkSet;
use crate::decision::AuditDecision;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result, StageExt};
use crate::exec;
use crate::extractor::{extract_batch, Backbone, RepresentationCache, TapPlan};
use crate::harness::{
    Ablation, Ablations, ExperimentData, MechanismChoice, MetricsReport, OverlapMode, Pipeline, ResponseLog, SuspiciousModel,
};
use crate::rng;
use crate::simulator::{build_benchmark, LoadedBenchmark};

pub const METRICS_FILE: &str = "metrics.json";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CACHE_FILE: &str = "representations.json";

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Parser)]
#[command(name = "artaudit", version, about = "Audit a text-to-image model for unauthorized use of an artist's works")]
pub struct Cli {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the benchmark seed and the experiment seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_with::<MechanismChoice>)]
    pub mechanism: Option<MechanismChoice>,
    #[arg(long, global = true, value_parser = parse_with::<OverlapMode>)]
    pub overlap: Option<OverlapMode>,
    #[arg(long, global = true, value_parser = parse_with::<Ablation>)]
    pub ablation: Option<Ablation>,
    /// Parallel workers; 0 uses every core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (the benchmark directory for `benchmark`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark on disk.
    Benchmark,
    /// Extract and cache style representations of every stored artwork.
    Extract,
    /// Train discriminators.
    Train {
        /// Only this artist; all artists when omitted.
        #[arg(long)]
        artist: Option<String>,
    },
    /// Audit one artist and print the decision JSON.
    Audit {
        #[arg(long)]
        artist: String,
    },
    /// Audit every artist under every seed and write metrics.
    Experiment,
    /// Render metrics.json as a table.
    Report,
    /// Write the reference backbone weights file.
    InitWeights,
    /// List every prompt an audit of the configured corpus will send.
    Prompts,
}

impl Cli {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).stage("config")?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.simulator.seed = s;
            cfg.experiment.seeds = vec![s];
        }
        if let Some(m) = self.mechanism {
            cfg.experiment.mechanism = m;
        }
        if let Some(o) = self.overlap {
            cfg.experiment.overlap_mode = o;
        }
        if let Some(j) = self.jobs {
            cfg.run.jobs = j;
        }
        if let Some(out) = &self.out {
            match self.command {
                Command::Benchmark => cfg.paths.benchmark_dir = out.clone(),
                _ => cfg.paths.out_dir = out.clone(),
            }
        }
        cfg.validate().stage("config")?;
        Ok(cfg)
    }
}

/// Runs a parsed command line and returns what it prints.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.resolve_config()?;
    let jobs = cfg.run.jobs;
    exec::with_jobs(jobs, || match &cli.command {
        Command::Benchmark => cmd_benchmark(&cfg).stage("benchmark"),
        Command::Extract => cmd_extract(&cfg).stage("extract"),
        Command::Train { artist } => cmd_train(&cfg, artist.as_deref()).stage("train"),
        Command::Audit { artist } => cmd_audit(&cfg, artist).stage("audit"),
        Command::Experiment => cmd_experiment(&cfg, cli.ablation).stage("experiment"),
        Command::Report => cmd_report(&cfg).stage("report"),
        Command::InitWeights => cmd_init_weights(&cfg, cli.out.as_deref()).stage("init-weights"),
        Command::Prompts => cmd_prompts(&cfg).stage("prompts"),
    })
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub weights_digest: String,
    pub tap_plan: TapPlan,
    pub data_source: String,
    pub data_digest: String,
    /// Output file name to its sha256.
    pub outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(rng::hex_digest(&fs::read(path)?))
}

/// Audit inputs from either the benchmark or a user corpus.
struct Inputs {
    targets: BTreeMap<String, ArtworkSet>,
    public: ArtworkSet,
    ground_truth: BTreeMap<String, bool>,
    model: Option<Box<dyn SuspiciousModel>>,
    source: String,
    digest: String,
}

impl Inputs {
    fn load(cfg: &RunConfig, need_model: bool) -> Result<Inputs> {
        let side = cfg.backbone.input_side;
        match &cfg.corpus {
            Some(c) => {
                let model: Option<Box<dyn SuspiciousModel>> = match (&c.responses, need_model) {
                    (Some(p), true) => Some(Box::new(ResponseLog::load(p)?)),
                    (None, true) => return Err(Error::InvalidConfig("corpus.responses is required".into())),
                    _ => None,
                };
                let targets = c.load_targets(side)?;
                let public = c.load_public(side)?;
                let mut digest_input = String::new();
                for set in targets.values().chain(std::iter::once(&public)) {
                    for r in &set.records {
                        let _ = writeln!(digest_input, "{} {}", r.id, rng::hex_digest(r.pixels.as_raw()));
                    }
                }
                Ok(Inputs {
                    targets,
                    public,
                    ground_truth: c.ground_truth.clone(),
                    model,
                    source: "corpus".into(),
                    digest: rng::hex_digest(digest_input.as_bytes()),
                })
            }
            None => {
                let manifest = cfg.paths.benchmark_dir.join(MANIFEST_FILE);
                let bench = LoadedBenchmark::read(&manifest)?;
                if bench.manifest.config.side != side {
                    return Err(Error::InvalidConfig(format!(
                        "benchmark side {} differs from backbone input side {side}",
                        bench.manifest.config.side
                    )));
                }
                let model: Option<Box<dyn SuspiciousModel>> = if need_model { Some(Box::new(bench.model()?)) } else { None };
                Ok(Inputs {
                    ground_truth: bench.manifest.ground_truth(),
                    targets: bench.originals,
                    public: bench.public,
                    model,
                    source: manifest.display().to_string(),
                    digest: sha256_file(&manifest)?,
                })
            }
        }
    }

    fn target(&self, artist: &str) -> Result<&ArtworkSet> {
        self.targets.get(artist).ok_or_else(|| Error::UnknownArtist(artist.to_string()))
    }

    fn pool(&self) -> ArtworkSet {
        ArtworkSet::pool(std::iter::once(&self.public).chain(self.targets.values()))
    }

    fn model(&self) -> &dyn SuspiciousModel {
        self.model.as_deref().expect("model requested at load")
    }
}

struct Env {
    backbone: Backbone,
    plan: TapPlan,
    cache: RepresentationCache,
}

impl Env {
    fn load(cfg: &RunConfig) -> Result<Env> {
        let backbone = cfg.backbone.load().stage("backbone")?;
        let plan = cfg.backbone.plan(&backbone)?;
        let cache = RepresentationCache::load(&cfg.paths.out_dir.join(CACHE_FILE))?;
        Ok(Env { backbone, plan, cache })
    }

    fn pipeline<'a>(&'a self, cfg: &RunConfig) -> Pipeline<'a> {
        Pipeline {
            backbone: &self.backbone,
            plan: &self.plan,
            cache: Some(&self.cache),
            augmentation: cfg.augmentation.clone(),
            train: cfg.train.clone(),
            experiment: cfg.experiment.clone(),
            exec: cfg.run.execution,
        }
    }

    fn write_run_manifest(&self, cfg: &RunConfig, command: &str, inputs: &Inputs, outputs: &[PathBuf]) -> Result<()> {
        let mut files = BTreeMap::new();
        for p in outputs {
            let name = p.strip_prefix(&cfg.paths.out_dir).unwrap_or(p).display().to_string();
            files.insert(name, sha256_file(p)?);
        }
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.clone(),
            seeds: cfg.experiment.seeds.clone(),
            weights_digest: self.backbone.digest().to_string(),
            tap_plan: self.plan.clone(),
            data_source: inputs.source.clone(),
            data_digest: inputs.digest.clone(),
            outputs: files,
        };
        fs::write(cfg.paths.out_dir.join(RUN_MANIFEST_FILE), serde_json::to_vec_pretty(&m)?)?;
        Ok(())
    }
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<String> {
    let bench = build_benchmark(&cfg.simulator, cfg.run.execution)?;
    fs::create_dir_all(&cfg.paths.benchmark_dir)?;
    let path = bench.write(&cfg.paths.benchmark_dir)?;
    Ok(format!("{}\n", path.display()))
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<String> {
    let env = Env::load(cfg)?;
    let inputs = Inputs::load(cfg, false)?;
    let mut sets: Vec<&ArtworkSet> = inputs.targets.values().collect();
    sets.push(&inputs.public);
    let reps = extract_batch(&env.backbone, &env.plan, &sets, Some(&env.cache), cfg.run.execution)?;
    fs::create_dir_all(&cfg.paths.out_dir)?;
    let path = cfg.paths.out_dir.join(CACHE_FILE);
    env.cache.save(&path)?;
    env.write_run_manifest(cfg, "extract", &inputs, &[path.clone()])?;
    Ok(format!(
        "{} representations of dim {} (tap plan {}) in {}\n",
        reps.len(),
        env.plan.expected_dim,
        env.plan.hash,
        path.display()
    ))
}

fn discriminator_path(cfg: &RunConfig, artist: &str) -> PathBuf {
    cfg.paths.out_dir.join("discriminators").join(format!("{artist}.json"))
}

pub fn cmd_train(cfg: &RunConfig, artist: Option<&str>) -> Result<String> {
    let env = Env::load(cfg)?;
    let inputs = Inputs::load(cfg, true)?;
    let pipeline = env.pipeline(cfg);
    let seed = cfg.experiment.seeds[0];
    let artists: Vec<String> = match artist {
        Some(a) => vec![inputs.target(a)?.artist_id.clone()],
        None => inputs.targets.keys().cloned().collect(),
    };
    let pool = inputs.pool();
    fs::create_dir_all(cfg.paths.out_dir.join("discriminators"))?;
    let mut out = String::new();
    let mut written = Vec::new();
    for a in &artists {
        let trained = pipeline.train_discriminator(inputs.target(a)?, &pool, inputs.model(), seed)?;
        let path = discriminator_path(cfg, a);
        trained.discriminator.save(&path)?;
        let report_path = path.with_extension("report.json");
        fs::write(&report_path, serde_json::to_vec_pretty(&trained.report)?)?;
        let _ = writeln!(
            out,
            "{a}: {} positives, {} negatives, {} pairs, best epoch {} of {} (validation loss {:.4})",
            trained.n_positives,
            trained.n_negatives,
            trained.n_pairs,
            trained.report.best_epoch,
            trained.report.epochs_run,
            trained.report.best_validation_loss
        );
        written.extend([path, report_path]);
    }
    env.write_run_manifest(cfg, "train", &inputs, &written)?;
    Ok(out)
}

pub fn cmd_audit(cfg: &RunConfig, artist: &str) -> Result<String> {
    let env = Env::load(cfg)?;
    let inputs = Inputs::load(cfg, true)?;
    let pipeline = env.pipeline(cfg);
    let seed = cfg.experiment.seeds[0];
    let target = inputs.target(artist)?;
    let path = discriminator_path(cfg, artist);
    let (disc, audit_set, prov) = if path.exists() {
        let d = Discriminator::load(&path)?;
        (d, pipeline.audit_set(target, seed)?, pipeline.provenance(seed))
    } else {
        let t = pipeline.train_discriminator(target, &inputs.pool(), inputs.model(), seed)?;
        let mut prov = pipeline.provenance(seed);
        prov.epochs_run = Some(t.report.epochs_run);
        prov.best_epoch = Some(t.report.best_epoch);
        (t.discriminator, t.audit_set, prov)
    };
    let sample = pipeline.score_queries(&disc, &audit_set, inputs.model(), seed)?;
    let decisions: Vec<AuditDecision> = pipeline.decide(&sample, &prov)?;
    let json = if decisions.len() == 1 {
        serde_json::to_string_pretty(&decisions[0])?
    } else {
        serde_json::to_string_pretty(&decisions)?
    };
    let dir = cfg.paths.out_dir.join("audit");
    fs::create_dir_all(&dir)?;
    let out_path = dir.join(format!("{artist}.json"));
    fs::write(&out_path, &json)?;
    env.write_run_manifest(cfg, "audit", &inputs, &[out_path])?;
    Ok(json + "\n")
}

/// Contents of metrics.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub reports: Vec<MetricsReport>,
    /// Present when an ablation ran; `reports` then holds the baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSection {
    pub ablations: Ablations,
    pub reports: Vec<MetricsReport>,
}

pub fn cmd_experiment(cfg: &RunConfig, ablation: Option<Ablation>) -> Result<String> {
    let env = Env::load(cfg)?;
    let inputs = Inputs::load(cfg, true)?;
    let pipeline = env.pipeline(cfg);
    let data = ExperimentData {
        targets: inputs.targets.clone(),
        public: inputs.public.clone(),
        ground_truth: inputs.ground_truth.clone(),
        model: inputs.model(),
    };
    fs::create_dir_all(&cfg.paths.out_dir)?;
    let metrics_path = cfg.paths.out_dir.join(METRICS_FILE);
    let csv_path = cfg.paths.out_dir.join(DECISIONS_FILE);
    let mut outputs = vec![metrics_path.clone(), csv_path.clone()];
    let file = match ablation {
        None => {
            let result = pipeline.run_experiment(&data)?;
            result.write_csv(fs::File::create(&csv_path)?)?;
            MetricsFile {
                reports: result.reports,
                ablation: None,
            }
        }
        Some(a) => {
            let result = pipeline.run_ablation(&data, Ablations::only(a))?;
            result.baseline.write_csv(fs::File::create(&csv_path)?)?;
            let ablated_csv = cfg.paths.out_dir.join(format!("decisions_{a}.csv"));
            result.ablated.write_csv(fs::File::create(&ablated_csv)?)?;
            outputs.push(ablated_csv);
            MetricsFile {
                reports: result.baseline.reports,
                ablation: Some(AblationSection {
                    ablations: result.ablations,
                    reports: result.ablated.reports,
                }),
            }
        }
    };
    fs::write(&metrics_path, serde_json::to_vec_pretty(&file)?)?;
    env.write_run_manifest(cfg, "experiment", &inputs, &outputs)?;
    Ok(render_metrics(&file))
}

fn metric_cell(s: crate::harness::Stat) -> String {
    format!("{:.3} ± {:.3}", s.mean, s.stddev)
}

fn render_table(out: &mut String, title: &str, reports: &[MetricsReport]) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "| mechanism | accuracy | auc | f1 | fpr | seeds | artists |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.mechanism,
            metric_cell(r.accuracy),
            metric_cell(r.auc),
            metric_cell(r.f1),
            metric_cell(r.fpr),
            r.per_seed.len(),
            r.n_artists
        );
    }
}

/// Headline metrics as mean ± stddev across seeds.
pub fn render_metrics(file: &MetricsFile) -> String {
    let mut out = String::new();
    let overlap = file.reports.first().map(|r| r.overlap_mode.to_string()).unwrap_or_default();
    match &file.ablation {
        None => render_table(&mut out, &format!("overlap: {overlap}"), &file.reports),
        Some(a) => {
            render_table(&mut out, &format!("baseline (overlap: {overlap})"), &file.reports);
            out.push('\n');
            let label = a.ablations.label().unwrap_or_else(|| "none".into());
            render_table(&mut out, &format!("ablation: {label}"), &a.reports);
        }
    }
    out
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let path = cfg.paths.out_dir.join(METRICS_FILE);
    let file: MetricsFile = serde_json::from_slice(&fs::read(&path)?)?;
    let text = render_metrics(&file);
    fs::write(cfg.paths.out_dir.join("report.md"), &text)?;
    Ok(text)
}

pub fn cmd_init_weights(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let path = match (out, &cfg.backbone.weights) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => cfg.paths.out_dir.join("reference_weights.bin"),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let backbone = cfg.backbone.reference()?;
    backbone.save(&path)?;
    Ok(format!("{} {}\n", path.display(), backbone.digest()))
}

pub fn cmd_prompts(cfg: &RunConfig) -> Result<String> {
    let env = Env::load(cfg)?;
    let inputs = Inputs::load(cfg, false)?;
    let pipeline = env.pipeline(cfg);
    let pool = inputs.pool();
    let mut prompts = BTreeSet::new();
    for &seed in &cfg.experiment.seeds {
        prompts.extend(pipeline.pair_prompts(&pool, seed)?);
        for target in inputs.targets.values() {
            prompts.extend(pipeline.query_prompts(&pipeline.audit_set(target, seed)?, seed)?);
        }
    }
    let prompts: Vec<String> = prompts.into_iter().collect();
    fs::create_dir_all(&cfg.paths.out_dir)?;
    let path = cfg.paths.out_dir.join("prompts.json");
    fs::write(&path, serde_json::to_vec_pretty(&prompts)?)?;
    Ok(format!("{} prompts in {}\n", prompts.len(), path.display()))
}
