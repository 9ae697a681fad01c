use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use signforge::config::PipelineConfig;
use signforge::fixture::write_toy_fixture;
use signforge::manifest::read_manifest;
use signforge::pipeline::{layout, method_manifest, Pipeline, RunOptions, Stage, StageStatus};
use signforge::searchlog::{read_log, LogWriter};
use signforge::Error;
use signforge_core::augment::Method;
use signforge_core::Provenance;

fn fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_fixture(dir.path(), 11, 24, 12).unwrap();
    (dir, cfg)
}

fn open(cfg: &Path, out: &Path, force: bool) -> Pipeline {
    let mut config = PipelineConfig::load(cfg).unwrap();
    config.out_dir = out.to_path_buf();
    Pipeline::open(config, RunOptions { force, ..RunOptions::default() }).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn prepare_writes_the_split_manifests() {
    let (dir, cfg) = fixture();
    let out = dir.path().join("out");
    let p = open(&cfg, &out, false);
    assert_eq!(p.run(&[Stage::Prepare]).unwrap(), vec![(Stage::Prepare, StageStatus::Ran)]);
    let count = |name: &str| read_manifest(&out.join("prepare").join(name)).unwrap().entries.len();
    assert_eq!(count(layout::DAY_TRAIN) + count(layout::DAY_TEST), 24);
    assert_eq!(count(layout::DAY_TRAIN), 19);
    assert_eq!(count(layout::NIGHT_POOL) + count(layout::NIGHT_TEST), 12);
    assert!(count(layout::NIGHT_TEST) > 0);

    match p.run(&[Stage::Evaluate]) {
        Err(e @ Error::Prerequisite { .. }) => {
            assert_eq!(e.exit_code(), 3);
            assert!(e.to_string().contains("evaluate"), "{e}");
        }
        other => panic!("expected a prerequisite error, got {other:?}"),
    }
}

#[test]
fn full_toy_run_is_reproducible_and_skips_when_current() {
    let (dir, cfg) = fixture();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    {
        let p = open(&cfg, &out_a, false);
        let statuses = p.run(&Stage::ALL).unwrap();
        assert!(statuses.iter().all(|(_, s)| *s == StageStatus::Ran));
        let again = p.run(&Stage::ALL).unwrap();
        assert!(again.iter().all(|(_, s)| *s == StageStatus::Skipped));
    }
    open(&cfg, &out_b, false).run(&Stage::ALL).unwrap();

    let report = String::from_utf8(read(out_a.join("evaluate").join(layout::REPORT_CSV))).unwrap();
    let mut seen = BTreeMap::new();
    for line in report.lines().skip(1) {
        let cells: Vec<_> = line.split(',').collect();
        *seen.entry(cells[0].to_string()).or_insert(0) += 1;
    }
    let methods: Vec<_> = ["bbgan", "no-aug", "rlaug", "rlaug+bbgan", "saug"].map(String::from).into();
    assert_eq!(seen.keys().cloned().collect::<Vec<_>>(), methods);
    assert!(seen.values().all(|&n| n == 3), "{seen:?}");

    let mut files = vec![
        "prepare/day_train.manifest".to_string(),
        "prepare/night_test.manifest".into(),
        "train-bbgan/bbgan.gan".into(),
        "search-policies/policies.txt".into(),
        "search-policies/search.log".into(),
        "train-detector/rlaug+bbgan.detector".into(),
        "evaluate/report.csv".into(),
        "evaluate/per_class.csv".into(),
        "evaluate/report.txt".into(),
    ];
    let defaults = PipelineConfig::load(&cfg).unwrap().methods;
    files.extend(defaults.iter().map(|m| format!("augment/{}", method_manifest(*m))));
    for f in &files {
        assert_eq!(read(out_a.join(f)), read(out_b.join(f)), "{f} differs between runs");
    }

    // The combined method is the four-way augmentation of the day training set.
    let day = read_manifest(&out_a.join("prepare").join(layout::DAY_TRAIN)).unwrap();
    let aug = read_manifest(&out_a.join("augment").join(method_manifest(Method::RlaugBbgan))).unwrap();
    assert_eq!(aug.entries.len(), 4 * day.entries.len());
    for src in &day.entries {
        let mut prov: Vec<_> =
            aug.entries.iter().filter(|e| e.source_id == src.image_id).map(|e| e.provenance).collect();
        prov.sort_by_key(|p| p.as_str());
        let mut want = vec![Provenance::Original, Provenance::Rlaug, Provenance::Bbgan, Provenance::RlaugBbgan];
        want.sort_by_key(|p| p.as_str());
        assert_eq!(prov, want);
    }

    // A different configuration may not overwrite existing outputs.
    let mut config = PipelineConfig::load(&cfg).unwrap();
    config.out_dir = out_a.clone();
    config.detector.eval.runs = 3;
    let before = read(out_a.join("evaluate").join(layout::REPORT_CSV));
    let p = Pipeline::open(config.clone(), RunOptions::default()).unwrap();
    assert!(matches!(p.run(&[Stage::Evaluate]), Err(Error::Stale { .. })));
    assert_eq!(read(out_a.join("evaluate").join(layout::REPORT_CSV)), before);
    // Evaluation settings do not invalidate trained detectors.
    assert_eq!(p.run(&[Stage::TrainDetector]).unwrap()[0].1, StageStatus::Skipped);
    drop(p);
    let p = Pipeline::open(config, RunOptions { force: true, ..RunOptions::default() }).unwrap();
    assert_eq!(p.run(&[Stage::Evaluate]).unwrap()[0].1, StageStatus::Ran);
}

#[test]
fn one_pipeline_per_output_directory() {
    let (dir, cfg) = fixture();
    let out = dir.path().join("out");
    let first = open(&cfg, &out, false);
    let config = first.config().clone();
    assert!(matches!(Pipeline::open(config.clone(), RunOptions::default()), Err(Error::Locked(_))));
    drop(first);
    assert!(Pipeline::open(config, RunOptions::default()).is_ok());
}

#[test]
fn interrupted_search_resumes_to_the_same_result() {
    let (dir, cfg) = fixture();
    let out = dir.path().join("out");
    let stage_dir = out.join("search-policies");
    let full_log;
    let full_policies;
    {
        let p = open(&cfg, &out, false);
        p.run(&[Stage::Prepare, Stage::SearchPolicies]).unwrap();
        full_log = read(stage_dir.join(layout::SEARCH_LOG));
        full_policies = read(stage_dir.join(layout::POLICIES));
    }
    // Keep only the first rounds, as if the run had been killed.
    let records = read_log(&stage_dir.join(layout::SEARCH_LOG)).unwrap();
    let partial = dir.path().join("partial.log");
    LogWriter::create(&partial, &records[..2]).unwrap();

    let mut config = PipelineConfig::load(&cfg).unwrap();
    config.out_dir = out.clone();
    let options = RunOptions { force: true, resume: Some(partial), verbose: false };
    Pipeline::open(config, options).unwrap().run(&[Stage::SearchPolicies]).unwrap();
    assert_eq!(read(stage_dir.join(layout::SEARCH_LOG)), full_log);
    assert_eq!(read(stage_dir.join(layout::POLICIES)), full_policies);
}

#[test]
fn cli_exit_codes() {
    let (dir, cfg) = fixture();
    let bin = env!("CARGO_BIN_EXE_signforge");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let cfg_s = cfg.to_str().unwrap();

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "dataset.train_csv = annotations.csv\ngan.depht = 2\n").unwrap();
    let o = run(&["prepare", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gan.depht"));

    assert_eq!(run(&["evaluate", "--config", cfg_s, "-q"]).status.code(), Some(3));
    assert_eq!(run(&["prepare", "--config", cfg_s, "-q"]).status.code(), Some(0));

    let text = fs::read_to_string(&cfg).unwrap();
    let diverging = dir.path().join("diverge.conf");
    fs::write(&diverging, text.replace("detector.epochs = 8", "detector.epochs = 3\ndetector.lr = 1e300")).unwrap();
    let d = diverging.to_str().unwrap();
    let out = dir.path().join("div");
    let out_s = out.to_str().unwrap();
    let o = run(&["all", "--config", d, "--out", out_s, "-q"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
