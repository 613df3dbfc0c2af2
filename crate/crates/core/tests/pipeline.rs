//! End-to-end checks of the audit pipeline on small synthetic benchmarks.

use std::collections::BTreeMap;

use artaudit::dataset::{split_train_valid, ArtworkSet, AugmentationConfig};
use artaudit::decision::{Mechanism, Verdict};
use artaudit::discriminator::{train_from_reps, TrainConfig};
use artaudit::exec::Execution;
use artaudit::extractor::{extract_batch, plan_taps, Backbone, RepresentationCache, StyleRepresentation, DEFAULT_CHANNELS};
use artaudit::harness::{Ablations, ExperimentConfig, ExperimentData, MechanismChoice, Pipeline};
use artaudit::simulator::{build_benchmark, render_mimic, BenchmarkConfig, LoadedBenchmark};
use artaudit::Error;

fn tiny_benchmark() -> LoadedBenchmark {
    build_benchmark(
        &BenchmarkConfig {
            n_artists: 4,
            n_pirated: 2,
            per_artist: 10,
            n_public: 2,
            public_per_family: 10,
            mimics_per_artist: 2,
            side: 64,
            seed: 11,
            ..Default::default()
        },
        Execution::Parallel,
    )
    .unwrap()
}

fn tiny_backbone() -> Backbone {
    Backbone::reference(&[4, 8, 8, 8, 8], 64, 0).unwrap()
}

fn tiny_pipeline<'a>(backbone: &'a Backbone, plan: &'a artaudit::extractor::TapPlan) -> Pipeline<'a> {
    let mut p = Pipeline::new(backbone, plan);
    p.train = TrainConfig {
        hidden: vec![32, 8],
        max_epochs: 12,
        patience: 4,
        ..Default::default()
    };
    p.augmentation.multiplicity = 3;
    p.experiment = ExperimentConfig {
        seeds: vec![1, 2],
        queries_per_artist: 6,
        distortion_pairs: 4,
        ..Default::default()
    };
    p
}

fn mean_distance(a: &[&StyleRepresentation], b: &[&StyleRepresentation]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += x
                .vector
                .iter()
                .zip(y.vector.iter())
                .map(|(p, q)| ((p - q) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (a.len() * b.len()) as f64
}

#[test]
fn mimics_sit_closest_to_their_own_family() {
    let bench = build_benchmark(
        &BenchmarkConfig {
            per_artist: 10,
            fidelity: 0.8,
            distortion_sigma: 0.1,
            mimics_per_artist: 0,
            n_public: 1,
            public_per_family: 1,
            ..Default::default()
        },
        Execution::Parallel,
    )
    .unwrap();
    let backbone = Backbone::reference(&DEFAULT_CHANNELS, 224, 0).unwrap();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let originals: Vec<&ArtworkSet> = bench.originals.values().collect();
    let orig_reps = extract_batch(&backbone, &plan, &originals, None, Execution::Parallel).unwrap();
    let by_artist = |set: &ArtworkSet, reps: &BTreeMap<String, StyleRepresentation>| -> Vec<StyleRepresentation> {
        set.records.iter().map(|r| reps[&r.id].clone()).collect()
    };
    let families: BTreeMap<&str, _> = bench.manifest.families.iter().map(|f| (f.family_id.as_str(), f)).collect();
    for artist in bench.manifest.pirated() {
        let mimics = render_mimic(families[artist.as_str()], &bench.manifest.piracy, 10, 224).unwrap();
        let mreps = extract_batch(&backbone, &plan, &[&mimics], None, Execution::Parallel).unwrap();
        let m = by_artist(&mimics, &mreps);
        let m: Vec<&StyleRepresentation> = m.iter().collect();
        let mut own = f64::NAN;
        let mut others = Vec::new();
        for (id, set) in &bench.originals {
            let o = by_artist(set, &orig_reps);
            let d = mean_distance(&m, &o.iter().collect::<Vec<_>>());
            if *id == artist {
                own = d;
            } else {
                others.push(d);
            }
        }
        let nearest_other = others.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(own < nearest_other, "{artist}: own {own:.3} vs nearest other {nearest_other:.3}");
    }
}

#[test]
fn held_out_positives_outscore_negatives() {
    let bench = tiny_benchmark();
    let backbone = tiny_backbone();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let target = &bench.originals["artist_00"];
    let (train_pos, test_pos) = split_train_valid(target, 0.7, 1).unwrap();
    let others = ArtworkSet::pool(bench.originals.values().filter(|s| s.artist_id != "artist_00"));
    let (train_neg, test_neg) = split_train_valid(&others, 0.7, 1).unwrap();
    let reps = extract_batch(&backbone, &plan, &[&train_pos, &test_pos, &train_neg, &test_neg], None, Execution::Parallel).unwrap();
    let get = |s: &ArtworkSet| -> Vec<StyleRepresentation> { s.records.iter().map(|r| reps[&r.id].clone()).collect() };
    let cfg = TrainConfig {
        use_distortion_term: false,
        hidden: vec![32, 8],
        learning_rate: 1e-3,
        ..Default::default()
    };
    let (d, _) = train_from_reps("artist_00", &get(&train_pos), &get(&train_neg), &[], &cfg).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let sp = mean(d.score_batch(&get(&test_pos)).unwrap());
    let sn = mean(d.score_batch(&get(&test_neg)).unwrap());
    assert!(sp > sn, "held-out positives {sp:.3} vs negatives {sn:.3}");
    assert!(d.score_batch(&get(&test_neg)).unwrap().iter().all(|s| s.abs() < 1.0));
}

#[test]
fn single_query_t_test_reports_too_few_scores() {
    let bench = tiny_benchmark();
    let backbone = tiny_backbone();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let model = bench.model().unwrap();
    let mut p = tiny_pipeline(&backbone, &plan);
    p.experiment.queries_per_artist = 1;
    p.experiment.mechanism = MechanismChoice::TTest;
    let data = ExperimentData::from_benchmark(&bench, &model);
    let err = p.run_audit(&bench.originals["artist_01"], &data.pool(), &model, 1).unwrap_err();
    assert!(matches!(err.root(), Error::TooFewScores(1)), "{err}");
    assert!(err.to_string().contains("decision"), "{err}");
}

#[test]
fn augmentation_ablation_counts() {
    let bench = tiny_benchmark();
    let backbone = tiny_backbone();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let model = bench.model().unwrap();
    let mut p = tiny_pipeline(&backbone, &plan);
    p.augmentation = AugmentationConfig::default();
    let data = ExperimentData::from_benchmark(&bench, &model);
    let pool = data.pool();
    let target = &bench.originals["artist_02"];
    assert_eq!(target.len(), 10);
    let base = p.train_discriminator(target, &pool, &model, 1).unwrap();
    assert_eq!(base.n_positives, 100);
    p.experiment.ablations.without_augmentation = true;
    let ablated = p.train_discriminator(target, &pool, &model, 1).unwrap();
    assert_eq!(ablated.n_positives, 10);
    assert_eq!(ablated.n_negatives, 10);
}

#[test]
fn no_op_ablation_reports_match_and_experiments_repeat() {
    let bench = tiny_benchmark();
    let backbone = tiny_backbone();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let model = bench.model().unwrap();
    let cache = RepresentationCache::new();
    let mut p = tiny_pipeline(&backbone, &plan);
    p.cache = Some(&cache);
    let data = ExperimentData::from_benchmark(&bench, &model);
    let r = p.run_ablation(&data, Ablations::default()).unwrap();
    assert_eq!(r.baseline, r.ablated);
    // a fresh cache and sequential execution give the same report
    let seq = Pipeline {
        cache: None,
        exec: Execution::Sequential,
        ..tiny_pipeline(&backbone, &plan)
    };
    assert_eq!(seq.run_experiment(&data).unwrap(), r.baseline);

    for report in &r.baseline.reports {
        assert_eq!(report.per_seed.len(), 2);
        assert_eq!(report.n_artists, 4);
        for s in [report.accuracy, report.auc, report.f1, report.fpr] {
            assert!((0.0..=1.0).contains(&s.mean) && s.stddev >= 0.0);
        }
    }
    // every decision carries provenance
    for (_, d) in r.baseline.decisions() {
        let prov = d.provenance.as_ref().unwrap();
        assert_eq!(prov.tap_plan_hash.as_deref(), Some(plan.hash.as_str()));
        assert_eq!(prov.weights_digest.as_deref(), Some(backbone.digest()));
    }
}

#[test]
fn degenerate_ground_truth_is_rejected() {
    let bench = tiny_benchmark();
    let backbone = tiny_backbone();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let model = bench.model().unwrap();
    let mut data = ExperimentData::from_benchmark(&bench, &model);
    for v in data.ground_truth.values_mut() {
        *v = true;
    }
    let err = tiny_pipeline(&backbone, &plan).run_experiment(&data).unwrap_err();
    assert!(matches!(err, Error::DegenerateGroundTruth(_)));
}

#[test]
fn default_benchmark_audits_follow_ground_truth() {
    let bench = build_benchmark(&BenchmarkConfig::default(), Execution::Parallel).unwrap();
    let backbone = Backbone::reference(&DEFAULT_CHANNELS, 224, 0).unwrap();
    let plan = plan_taps(backbone.adapter()).unwrap();
    let model = bench.model().unwrap();
    let data = ExperimentData::from_benchmark(&bench, &model);
    let pool = data.pool();
    let p = Pipeline::new(&backbone, &plan);
    let gt = bench.manifest.ground_truth();
    let pirated = gt.iter().find(|(_, p)| **p).unwrap().0;
    let clean = gt.iter().find(|(_, p)| !**p).unwrap().0;
    for (artist, expected) in [(pirated, Verdict::Infringing), (clean, Verdict::NotInfringing)] {
        let out = p.run_audit(&bench.originals[artist], &pool, &model, 1).unwrap();
        for d in &out.decisions {
            assert_eq!(d.verdict, expected, "{artist} {}", d.mechanism);
        }
        let t = out.decisions.iter().find(|d| d.mechanism == Mechanism::TTest).unwrap();
        assert!(t.t_statistic.is_some() && t.critical_t.is_some());
    }
}
