use std::fs;
use std::path::Path;

use dsnrec::config::Config;
use dsnrec::eval::Method;
use dsnrec::pipeline::{self, Layout};

fn small(overrides: &[&str]) -> Config {
    let text = include_str!("fixtures/small.toml");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Config::from_toml_str(text, &overrides).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn stages_run_end_to_end_and_seal_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = small(&[]);
    let layout = Layout::new(out, &config);

    pipeline::synth_gen(&config, out).unwrap();
    pipeline::build_vocab(&config, out).unwrap();
    pipeline::train_sdae(&config, out).unwrap();
    pipeline::train_model(&config, out).unwrap();
    let reports = pipeline::evaluate(&config, out).unwrap();
    pipeline::recommend(&config, out).unwrap();

    // three trained methods over two seeds, POP once
    assert_eq!(reports.len(), 7);
    assert_eq!(reports.iter().filter(|r| r.method == Method::Pop).count(), 1);
    for d in [layout.data.clone(), layout.vocab(), layout.models(), layout.checkpoints(), layout.reports()] {
        pipeline::verify_manifest(&d).unwrap();
        let echo = fs::read_to_string(d.join(pipeline::CONFIG_ECHO)).unwrap();
        assert_eq!(Config::from_toml_str(&echo, &[]).unwrap(), config);
    }
    let index = fs::read_to_string(layout.checkpoints().join(pipeline::CHECKPOINT_INDEX_FILE)).unwrap();
    assert_eq!(index.lines().count(), 1 + config.train.epochs);
    assert!(layout.checkpoints().join("epoch_002.bin").exists());

    let recs = fs::read_to_string(layout.reports().join(pipeline::RECOMMENDATIONS_FILE)).unwrap();
    let rows: Vec<&str> = recs.lines().skip(1).collect();
    assert_eq!(rows.len(), config.synth.n_test * config.recommend.k);
    assert!(rows[0].ends_with(|c: char| c.is_ascii_digit()));

    let table = fs::read_to_string(layout.reports().join(pipeline::TABLE_FILE)).unwrap();
    assert!(table.starts_with(dsnrec::eval::TABLE_HEADER));
    let json = pipeline::read_reports(&layout.reports().join(pipeline::REPORTS_FILE)).unwrap();
    assert_eq!(json, reports);
}

#[test]
fn popularity_needs_no_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = small(&["eval.methods=[\"POP\"]"]);
    pipeline::synth_gen(&config, out).unwrap();
    pipeline::build_vocab(&config, out).unwrap();
    let reports = pipeline::evaluate(&config, out).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(!Layout::new(out, &config).models().exists());
}

#[test]
fn tampered_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = small(&[]);
    let data = pipeline::synth_gen(&config, out).unwrap();
    let log = data.join(dsnrec::synth::SOURCE_LOG_FILE);
    let mut bytes = read(&log);
    bytes.push(b'\n');
    fs::write(&log, bytes).unwrap();
    let err = pipeline::build_vocab(&config, out).unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "{err}");
}

#[test]
fn missing_stages_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(&[]);
    assert!(pipeline::build_vocab(&config, dir.path()).is_err());
    pipeline::synth_gen(&config, dir.path()).unwrap();
    assert!(pipeline::train_model(&config, dir.path()).is_err());
    pipeline::build_vocab(&config, dir.path()).unwrap();
    assert!(pipeline::recommend(&config, dir.path()).is_err());
}

#[test]
fn regenerating_with_the_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = small(&[]);
    for d in [a.path(), b.path()] {
        pipeline::synth_gen(&config, d).unwrap();
        pipeline::build_vocab(&config, d).unwrap();
    }
    let la = Layout::new(a.path(), &config);
    let lb = Layout::new(b.path(), &config);
    assert_eq!(read(&la.data.join("MANIFEST")), read(&lb.data.join("MANIFEST")));
    assert_eq!(read(&la.vocab().join("MANIFEST")), read(&lb.vocab().join("MANIFEST")));
}
