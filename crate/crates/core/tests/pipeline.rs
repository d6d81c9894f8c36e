use std::collections::BTreeMap;
use std::fs;

use radiomark::baselines::{ddi_test, mia_split_test, sample_features, MiaMethod};
use radiomark::detect::{collect_outputs, detect_outputs, DetectConfig};
use radiomark::lm::{NgramModel, Tokenizer};
use radiomark::pipeline::corpus::{export, ingest, to_jsonl, training_sequences};
use radiomark::pipeline::{
    build_prompts, run_experiment, synth_corpus, watermark_corpus, CorpusMode, CorpusRecord,
    ExperimentMode, ExperimentSpec, PromptMode, RewriteConfig, SynthConfig,
};
use radiomark::wm::WatermarkKey;

fn corpus(stream: u64, n: usize) -> Vec<CorpusRecord> {
    let mut recs = synth_corpus(&SynthConfig {
        stream,
        target_tokens: n * 60,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(recs.len() >= n, "synthetic corpus too small");
    recs.truncate(n);
    recs
}

fn clean_model(records: &[CorpusRecord]) -> NgramModel {
    let spec = ExperimentSpec::default();
    let tok = Tokenizer::build(records.iter().flat_map(|r| [r.prompt.as_str(), r.response.as_str()]), spec.max_vocab);
    let mut m = NgramModel::new(tok, spec.ngram_config()).unwrap();
    m.train(&training_sequences(records, m.tokenizer())).unwrap();
    m
}

fn key(byte: u8, id: &str) -> WatermarkKey {
    WatermarkKey::new([byte; 32], id).unwrap()
}

#[test]
fn ingest_export_round_trip_on_1k_records() {
    let mut recs = corpus(0, 1_000);
    recs[3].context = Some("background, with \"quotes\"".into());
    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), serde_json::json!("synthetic"));
    meta.insert("rank".to_string(), serde_json::json!(2));
    recs[7].metadata = Some(meta);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    export(&recs, &path).unwrap();
    let ing = ingest(&path, CorpusMode::Qa).unwrap();
    assert!(ing.malformed.is_empty() && ing.warnings.is_empty());
    assert_eq!(ing.records, recs);
    assert_eq!(to_jsonl(&ing.records).unwrap(), fs::read_to_string(&path).unwrap());
}

#[test]
fn rewrite_selects_an_exact_reproducible_fraction() {
    let recs = corpus(0, 1_000);
    let model = clean_model(&recs);
    let k = key(9, "owner");
    let cfg = RewriteConfig {
        rho: 0.5,
        max_tokens: 24,
        seed: 11,
        ..RewriteConfig::default()
    };
    let (out, man) = watermark_corpus(&recs, &k, &model, &cfg).unwrap();
    assert_eq!(man.selected, 500);
    assert_eq!(man.rewritten.len() + man.failed.len(), 500);
    let (again, man2) = watermark_corpus(&recs, &k, &model, &cfg).unwrap();
    assert_eq!(out, again);
    assert_eq!(man.rewritten, man2.rewritten);

    let rewritten: std::collections::HashSet<&str> = man.rewritten.iter().map(String::as_str).collect();
    for (a, b) in recs.iter().zip(&out) {
        assert_eq!((&a.id, &a.prompt), (&b.id, &b.prompt));
        if !rewritten.contains(a.id.as_str()) {
            assert_eq!(a, b);
        }
    }

    let none = RewriteConfig { rho: 0.0, ..cfg.clone() };
    let (same, man0) = watermark_corpus(&recs, &k, &model, &none).unwrap();
    assert_eq!(same, recs);
    assert!(man0.rewritten.is_empty());
}

#[test]
fn clean_suspect_is_not_flagged() {
    let recs = corpus(2, 1_500);
    let model = clean_model(&recs);
    let spec = ExperimentSpec::default();
    let prompts = build_prompts(&recs, model.tokenizer(), PromptMode::Qa, 0.5).unwrap();
    let cfg = spec.detect_config(5, 40.0, 20_000);
    let outputs = collect_outputs(&model, &prompts.prompts, &cfg).unwrap();
    let r = detect_outputs(&outputs, &key(3, "owner"), &model, &cfg).unwrap();
    assert_eq!(r.n0, 20_000);
    assert!(r.p_value.unwrap() > 0.05, "clean model flagged: {r:?}");
    assert!(!r.low_power());
}

#[test]
fn short_budget_is_low_power() {
    let recs = corpus(2, 200);
    let model = clean_model(&recs);
    let prompts = build_prompts(&recs, model.tokenizer(), PromptMode::Qa, 0.5).unwrap();
    let cfg = DetectConfig {
        token_budget: 200,
        ..ExperimentSpec::default().detect_config(1, 40.0, 200)
    };
    let outputs = collect_outputs(&model, &prompts.prompts, &cfg).unwrap();
    let r = detect_outputs(&outputs, &key(3, "owner"), &model, &cfg).unwrap();
    assert!(r.low_power());
}

#[test]
fn membership_tests_detect_training_data() {
    let members = corpus(0, 2_000);
    let held_out: Vec<CorpusRecord> = corpus(1, 2_000)
        .into_iter()
        .map(|mut r| {
            r.id = format!("held-{}", r.id);
            r
        })
        .collect();
    let model = clean_model(&members);
    for method in [MiaMethod::Ppl, MiaMethod::Mink] {
        let r = mia_split_test(&model, &members, &held_out, method).unwrap();
        assert!(r.p_value.unwrap() < 0.05, "{method:?}: {r:?}");
        assert!(r.statistic.unwrap() < 0.0);
    }
    let fs = sample_features(&model, &members).unwrap();
    let fv = sample_features(&model, &held_out).unwrap();
    let ddi = ddi_test(&fs, &fv, 7).unwrap();
    assert!(ddi.p_value.unwrap() < 0.05, "{ddi:?}");
}

#[test]
fn experiment_bundle_layout_and_failure_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        seeds: vec![0],
        target_tokens: 30_000,
        token_budget: 10_000,
        compare_q: vec![],
        ..ExperimentSpec::for_mode(ExperimentMode::QaDetection)
    };
    let out = dir.path().join("bundle");
    let bundle = run_experiment(&spec, &out).unwrap();
    let digest = spec.digest().unwrap();
    for r in bundle.runs() {
        assert_eq!(r.spec_digest, digest);
        assert_eq!(r.report.seed, 0);
    }
    for f in ["spec.json", "summary.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read_dir(out.join("reports")).unwrap().count(), 2);
    let top: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(top.len(), 1, "bundle wrote outside its directory");

    let broken = ExperimentSpec {
        corpus_paths: vec![dir.path().join("missing.jsonl")],
        ..spec
    };
    let out2 = dir.path().join("broken");
    let err = run_experiment(&broken, &out2).unwrap_err();
    assert!(err.to_string().contains("load-corpus"), "{err}");
    assert!(out2.join("failed").join("error.txt").is_file());
}
