//! Staged pipeline: prepare, train-bbgan, search-policies, augment,
//! train-detector, evaluate.
//!
//! Each stage writes into `<out_dir>/<stage>/` and finishes by writing a
//! `summary.json` holding the hash of the configuration it ran under. A stage
//! whose summary matches the current hash is skipped; one whose summary
//! differs is refused unless `force` is set.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use signforge_core::augment::{method_dataset, Method};
use signforge_core::dataset::{center_crop, classify_day_night, split_indices, split_train_test};
use signforge_core::detect::{evaluate_with_resampling, Detector, EvalDomain, EvalReport, Spread, ToyDetector};
use signforge_core::gan::{image_to_tensor, train_bbgan, GanModel, GanSample};
use signforge_core::policy_search::{search, ChildTrainer, ClassifierChild, DetectionChild};
use signforge_core::rng::derive_seed;
use signforge_core::transforms::policy::{format_policies, parse_policies};
use signforge_core::transforms::Policy;
use signforge_core::{AnnotatedImage, Domain, Provenance};

use crate::annotations::parse_annotations;
use crate::checkpoint::{load_detector, load_gan, save_detector, save_gan};
use crate::config::{ChildKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::imageio::write_png;
use crate::manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry};
use crate::searchlog::{read_log, LogWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Prepare,
    TrainBbgan,
    SearchPolicies,
    Augment,
    TrainDetector,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Prepare,
        Stage::TrainBbgan,
        Stage::SearchPolicies,
        Stage::Augment,
        Stage::TrainDetector,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::TrainBbgan => "train-bbgan",
            Stage::SearchPolicies => "search-policies",
            Stage::Augment => "augment",
            Stage::TrainDetector => "train-detector",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// File names inside the output directory.
pub mod layout {
    pub const LOCK: &str = ".signforge.lock";
    pub const SUMMARY: &str = "summary.json";
    pub const DAY_TRAIN: &str = "day_train.manifest";
    pub const DAY_TEST: &str = "day_test.manifest";
    pub const NIGHT_POOL: &str = "night_pool.manifest";
    pub const NIGHT_TEST: &str = "night_test.manifest";
    pub const GAN: &str = "bbgan.gan";
    pub const GAN_LOSSES: &str = "losses.csv";
    pub const SEARCH_LOG: &str = "search.log";
    pub const POLICIES: &str = "policies.txt";
    pub const MANIFEST: &str = "dataset.manifest";
    pub const REPORT_TXT: &str = "report.txt";
    pub const REPORT_CSV: &str = "report.csv";
    pub const PER_CLASS_CSV: &str = "per_class.csv";
}

/// Record written last by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSummary {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Search log whose records are replayed before new rounds run.
    pub resume: Option<PathBuf>,
    /// Print progress to stderr.
    pub verbose: bool,
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join(layout::LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => {
                fs::write(&path, std::process::id().to_string()).map_err(Error::io(&path))?;
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path)(e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    options: RunOptions,
    _lock: Lock,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(Error::io(path))?))
}

/// Keys that never affect what a stage produces.
const UNTRACKED: &[&str] = &["out_dir"];

impl Pipeline {
    pub fn open(config: PipelineConfig, options: RunOptions) -> Result<Self> {
        let lock = Lock::acquire(&config.out_dir)?;
        Ok(Self { config, options, _lock: lock })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.config.out_dir.join(stage.as_str())
    }

    fn log(&self, stage: Stage, msg: impl fmt::Display) {
        if self.options.verbose {
            eprintln!("[{stage}] {msg}");
        }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.config.seed, stage.as_str())
    }

    /// Hash of every input that determines the stage's outputs.
    pub fn stage_hash(&self, stage: Stage) -> Result<String> {
        let cfg = &self.config;
        let (prefixes, skip): (&[&str], &[&str]) = match stage {
            Stage::Prepare => (&["seed", "dataset."], &[]),
            Stage::TrainBbgan => (&["seed", "dataset.", "gan."], &["gan.checkpoint"]),
            Stage::SearchPolicies => (&["seed", "dataset.", "search."], &[]),
            Stage::Augment => (&["seed", "dataset.", "saug.", "gan.", "search.", "augment."], &[]),
            Stage::TrainDetector => (
                &["seed", "dataset.", "saug.", "gan.", "search.", "augment.", "detector."],
                &["detector.checkpoint", "detector.iou_threshold", "detector.confidence_threshold", "detector.runs"],
            ),
            Stage::Evaluate => (&[""], UNTRACKED),
        };
        let mut text = format!("stage={stage}\n");
        for (k, v) in cfg.entries() {
            if prefixes.iter().any(|p| k.starts_with(p)) && !skip.contains(&k) {
                text += &format!("{k}={v}\n");
            }
        }
        text += &format!("train_csv_sha256={}\n", file_digest(&cfg.dataset.train_csv)?);
        let uses_gan_file = matches!(stage, Stage::Augment | Stage::TrainDetector | Stage::Evaluate);
        if let (true, Some(p)) = (uses_gan_file, &cfg.gan.checkpoint) {
            text += &format!("gan_checkpoint_sha256={}\n", file_digest(p)?);
        }
        if let (Stage::Evaluate, Some(p)) = (stage, &cfg.detector.checkpoint) {
            text += &format!("detector_checkpoint_sha256={}\n", file_digest(p)?);
        }
        Ok(sha256_hex(text.as_bytes()))
    }

    fn read_summary(&self, stage: Stage) -> Result<Option<StageSummary>> {
        let path = self.stage_dir(stage).join(layout::SUMMARY);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::parse(&path, e.line() as u64, e.to_string()))
    }

    /// Path of an artifact produced by `producer`, checked to exist and to
    /// come from the current configuration.
    fn require(&self, consumer: Stage, producer: Stage, name: &str) -> Result<PathBuf> {
        let path = self.stage_dir(producer).join(name);
        let summary = self.read_summary(producer)?;
        let Some(summary) = summary.filter(|_| path.exists()) else {
            return Err(Error::Prerequisite { stage: consumer.to_string(), artifact: path });
        };
        if summary.config_hash != self.stage_hash(producer)? {
            return Err(Error::Stale { stage: producer.to_string(), dir: self.stage_dir(producer) });
        }
        Ok(path)
    }

    pub fn run(&self, stages: &[Stage]) -> Result<Vec<(Stage, StageStatus)>> {
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        ordered.into_iter().map(|s| Ok((s, self.run_stage(s)?))).collect()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        let hash = self.stage_hash(stage)?;
        let dir = self.stage_dir(stage);
        if let Some(prev) = self.read_summary(stage)? {
            if !self.options.force {
                if prev.config_hash == hash {
                    self.log(stage, "up to date, skipped");
                    return Ok(StageStatus::Skipped);
                }
                return Err(Error::Stale { stage: stage.to_string(), dir });
            }
        }
        // Read before the stage directory is cleared: the log may live there.
        let resume = match (stage, &self.options.resume) {
            (Stage::SearchPolicies, Some(p)) => read_log(p)?,
            _ => Vec::new(),
        };
        self.check_prerequisites(stage)?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(Error::io(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        let mut summary = StageSummary {
            stage: stage.to_string(),
            config_hash: hash,
            seed: self.stage_seed(stage),
            artifacts: Vec::new(),
            notes: BTreeMap::new(),
        };
        self.log(stage, "running");
        match stage {
            Stage::Prepare => self.prepare(&dir, &mut summary)?,
            Stage::TrainBbgan => self.train_bbgan(&dir, &mut summary)?,
            Stage::SearchPolicies => self.search_policies(&dir, &resume, &mut summary)?,
            Stage::Augment => self.augment(&dir, &mut summary)?,
            Stage::TrainDetector => self.train_detector(&dir, &mut summary)?,
            Stage::Evaluate => self.evaluate(&dir, &mut summary)?,
        }
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
        crate::write_text(&dir.join(layout::SUMMARY), &(text + "\n"))?;
        self.log(stage, "done");
        Ok(StageStatus::Ran)
    }

    fn check_prerequisites(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Prepare => Ok(()),
            Stage::TrainBbgan => {
                self.require(stage, Stage::Prepare, layout::DAY_TRAIN)?;
                self.require(stage, Stage::Prepare, layout::NIGHT_POOL).map(drop)
            }
            Stage::SearchPolicies => self.require(stage, Stage::Prepare, layout::DAY_TRAIN).map(drop),
            Stage::Augment => {
                self.require(stage, Stage::Prepare, layout::DAY_TRAIN)?;
                if self.config.methods.iter().any(|m| m.needs_gan()) {
                    self.gan_path(stage)?;
                }
                if self.config.methods.iter().any(|m| m.needs_policies()) {
                    self.require(stage, Stage::SearchPolicies, layout::POLICIES)?;
                }
                Ok(())
            }
            Stage::TrainDetector => {
                for m in &self.config.methods {
                    self.require(stage, Stage::Augment, &method_manifest(*m))?;
                }
                Ok(())
            }
            Stage::Evaluate => {
                self.require(stage, Stage::Prepare, layout::DAY_TEST)?;
                self.require(stage, Stage::Prepare, layout::NIGHT_TEST)?;
                if self.config.detector.checkpoint.is_none() {
                    for m in &self.config.methods {
                        self.require(stage, Stage::TrainDetector, &detector_file(*m))?;
                    }
                }
                Ok(())
            }
        }
    }

    fn gan_path(&self, stage: Stage) -> Result<PathBuf> {
        match &self.config.gan.checkpoint {
            Some(p) => Ok(p.clone()),
            None => self.require(stage, Stage::TrainBbgan, layout::GAN),
        }
    }

    fn load_manifest_images(&self, path: &Path) -> Result<Vec<AnnotatedImage>> {
        read_manifest(path)?.load_images(path)
    }

    fn prepare(&self, dir: &Path, summary: &mut StageSummary) -> Result<()> {
        let cfg = &self.config;
        let metas = parse_annotations(&cfg.dataset.train_csv)?;
        let image_dir = cfg.image_dir();
        let mut day = Vec::new();
        let mut night = Vec::new();
        for meta in &metas {
            check_relative_id(&meta.image_id)?;
            let mut img = center_crop(&meta.load(&image_dir)?, cfg.dataset.crop_size)?;
            img.domain = classify_day_night(&img, cfg.dataset.night_threshold);
            match img.domain {
                Domain::Day => day.push(img),
                Domain::Night => night.push(img),
            }
        }
        self.log(Stage::Prepare, format!("{} images: {} day, {} night", metas.len(), day.len(), night.len()));
        let seed = self.stage_seed(Stage::Prepare);
        let (day_train, day_test) = split_train_test(&day, cfg.dataset.split_ratio, seed)?;
        let (pool_idx, test_idx) = if night.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            split_indices(night.len(), cfg.dataset.night_pool_ratio, derive_seed(seed, "night"))?
        };
        let pick = |idx: &[usize], split| {
            idx.iter()
                .map(|&i| {
                    let mut img = night[i].clone();
                    img.split = split;
                    img
                })
                .collect::<Vec<_>>()
        };
        let night_pool = pick(&pool_idx, signforge_core::Split::Train);
        let night_test = pick(&test_idx, signforge_core::Split::Test);
        let groups = [
            (layout::DAY_TRAIN, &day_train),
            (layout::DAY_TEST, &day_test),
            (layout::NIGHT_POOL, &night_pool),
            (layout::NIGHT_TEST, &night_test),
        ];
        for (name, images) in groups {
            let records: Vec<_> = images.iter().map(|img| (img, Provenance::Original, img.image_id.as_str())).collect();
            self.write_dataset(dir, name, &records, seed)?;
            summary.notes.insert(name.to_string(), images.len().to_string());
            summary.artifacts.push(name.to_string());
        }
        Ok(())
    }

    /// Writes the images under `dir/images/` and a manifest referencing them.
    fn write_dataset(
        &self,
        dir: &Path,
        manifest_name: &str,
        records: &[(&AnnotatedImage, Provenance, &str)],
        seed: u64,
    ) -> Result<()> {
        let mut manifest = DatasetManifest::new(seed);
        for &(img, provenance, source) in records {
            let rel = image_file(&img.image_id);
            write_png(&dir.join(&rel), &img.image)?;
            manifest.entries.push(ManifestEntry::describe(rel, img, provenance, source));
        }
        write_manifest(&manifest, &dir.join(manifest_name))
    }

    fn train_bbgan(&self, dir: &Path, summary: &mut StageSummary) -> Result<()> {
        let stage = Stage::TrainBbgan;
        let day = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::DAY_TRAIN)?)?;
        let night = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::NIGHT_POOL)?)?;
        let samples: Vec<_> = day.iter().map(GanSample::from_annotated).collect();
        let nights: Vec<_> = night.iter().map(|n| image_to_tensor(&n.image)).collect();
        let mut saved = Vec::new();
        let mut save_err = None;
        let outcome = train_bbgan(
            &samples,
            &nights,
            self.config.gan.arch,
            &self.config.gan.train,
            self.stage_seed(stage),
            |step, model| {
                let name = format!("checkpoints/step_{step:06}.gan");
                match save_gan(model, &dir.join(&name)) {
                    Ok(()) => saved.push(name),
                    Err(e) => save_err = save_err.take().or(Some(e)),
                }
            },
        )?;
        if let Some(e) = save_err {
            return Err(e);
        }
        save_gan(&outcome.model, &dir.join(layout::GAN))?;
        let mut w = csv_writer(&dir.join(layout::GAN_LOSSES))?;
        let csv_path = dir.join(layout::GAN_LOSSES);
        w.write_record(["step", "objective", "d_loss", "g_loss", "content", "alpha"])
            .map_err(|e| csv_err(&csv_path, e))?;
        for r in &outcome.history {
            w.write_record([
                r.step.to_string(),
                r.objective.to_string(),
                r.d_loss.to_string(),
                r.g_loss.to_string(),
                r.content.to_string(),
                r.alpha.to_string(),
            ])
            .map_err(|e| csv_err(&csv_path, e))?;
        }
        w.flush().map_err(Error::io(&csv_path))?;
        if let Some(last) = outcome.history.last() {
            self.log(stage, format!("step {}: alpha {:.4}, content {:.5}", last.step, last.alpha, last.content));
        }
        summary.notes.insert("alpha".into(), outcome.model.alpha.to_string());
        if let Some(report) = &outcome.gradcheck {
            summary.notes.insert("gradcheck_max_relative_error".into(), report.max_rel_error.to_string());
        }
        summary.artifacts.extend([layout::GAN.to_string(), layout::GAN_LOSSES.to_string()]);
        summary.artifacts.extend(saved);
        Ok(())
    }

    fn search_policies(
        &self,
        dir: &Path,
        resume: &[signforge_core::policy_search::RewardRecord],
        summary: &mut StageSummary,
    ) -> Result<()> {
        let stage = Stage::SearchPolicies;
        let cfg = &self.config;
        let day = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::DAY_TRAIN)?)?;
        let seed = self.stage_seed(stage);
        let (train_idx, val_idx) = split_indices(day.len(), 1.0 - cfg.search.val_fraction, derive_seed(seed, "val"))?;
        let train: Vec<_> = train_idx.iter().map(|&i| day[i].clone()).collect();
        let val: Vec<_> = val_idx.iter().map(|&i| day[i].clone()).collect();
        let child: Box<dyn ChildTrainer> = match cfg.search.child {
            ChildKind::Classifier => Box::new(ClassifierChild { config: cfg.search.classifier }),
            ChildKind::Detection => {
                Box::new(DetectionChild { detector: ToyDetector::new(cfg.detector.model), eval: cfg.detector.eval })
            }
        };
        let log_path = dir.join(layout::SEARCH_LOG);
        let mut writer = LogWriter::create(&log_path, resume)?;
        let mut write_err = None;
        let budget = cfg.search.search.budget;
        let verbose = self.options.verbose;
        let outcome =
            search(&cfg.search_space(), child.as_ref(), &train, &val, &cfg.search.search, seed, resume, |r| {
                if let Err(e) = writer.append(r) {
                    write_err = write_err.take().or(Some(e));
                }
                if verbose && (r.epoch + 1) % 10 == 0 {
                    eprintln!("[{stage}] round {}/{budget}: reward {:.4}", r.epoch + 1, r.reward);
                }
            })?;
        if let Some(e) = write_err {
            return Err(e);
        }
        let policies: Vec<Policy> = outcome.top.iter().map(|r| r.policy).collect();
        crate::write_text(&dir.join(layout::POLICIES), &format_policies(&policies))?;
        let rewards: Vec<String> = outcome.top.iter().map(|r| r.reward.to_string()).collect();
        summary.notes.insert("top_rewards".into(), rewards.join(","));
        summary.notes.insert("resumed_rounds".into(), resume.len().to_string());
        summary.artifacts.extend([layout::SEARCH_LOG.to_string(), layout::POLICIES.to_string()]);
        Ok(())
    }

    fn augment(&self, dir: &Path, summary: &mut StageSummary) -> Result<()> {
        let stage = Stage::Augment;
        let cfg = &self.config;
        let day = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::DAY_TRAIN)?)?;
        let gan: Option<GanModel> = if cfg.methods.iter().any(|m| m.needs_gan()) {
            Some(load_gan(&self.gan_path(stage)?, Some(&cfg.gan.arch))?)
        } else {
            None
        };
        let policies = if cfg.methods.iter().any(|m| m.needs_policies()) {
            let path = self.require(stage, Stage::SearchPolicies, layout::POLICIES)?;
            let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
            parse_policies(&text)?
        } else {
            Vec::new()
        };
        // Every method draws from the same seed so their datasets differ only by method.
        let seed = self.stage_seed(stage);
        for &m in &cfg.methods {
            let records = method_dataset(m, &day, gan.as_ref(), &policies, &cfg.saug, seed)?;
            let triples: Vec<_> = records.iter().map(|r| (&r.image, r.provenance, r.source_id.as_str())).collect();
            let method_dir = dir.join(m.as_str());
            self.write_dataset(&method_dir, layout::MANIFEST, &triples, seed)?;
            self.log(stage, format!("{m}: {} images", records.len()));
            summary.notes.insert(format!("{m}.images"), records.len().to_string());
            summary.artifacts.push(method_manifest(m));
        }
        Ok(())
    }

    fn train_detector(&self, dir: &Path, summary: &mut StageSummary) -> Result<()> {
        let stage = Stage::TrainDetector;
        let detector = ToyDetector::new(self.config.detector.model);
        let seed = self.stage_seed(stage);
        for &m in &self.config.methods {
            let data = self.load_manifest_images(&self.require(stage, Stage::Augment, &method_manifest(m))?)?;
            let params = detector.train(&data, seed)?;
            save_detector(&params, &dir.join(detector_file(m)))?;
            if let Some(l) = params.loss_history.last() {
                self.log(stage, format!("{m}: final loss {l:.4}"));
                summary.notes.insert(format!("{m}.final_loss"), l.to_string());
            }
            summary.artifacts.push(detector_file(m));
        }
        Ok(())
    }

    fn evaluate(&self, dir: &Path, summary: &mut StageSummary) -> Result<()> {
        let stage = Stage::Evaluate;
        let cfg = &self.config;
        let day = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::DAY_TEST)?)?;
        let night = self.load_manifest_images(&self.require(stage, Stage::Prepare, layout::NIGHT_TEST)?)?;
        let all: Vec<_> = day.iter().chain(&night).cloned().collect();
        let detectors: Vec<(String, PathBuf)> = match &cfg.detector.checkpoint {
            Some(p) => vec![("checkpoint".to_string(), p.clone())],
            None => cfg
                .methods
                .iter()
                .map(|&m| Ok((m.to_string(), self.require(stage, Stage::TrainDetector, &detector_file(m))?)))
                .collect::<Result<_>>()?,
        };
        // One resampling seed for every detector, so the comparison is paired.
        let seed = self.stage_seed(stage);
        let mut rows = Vec::new();
        for (name, path) in &detectors {
            let params = load_detector(path)?;
            let det = ToyDetector::new(params.config);
            for (domain, set) in [(EvalDomain::Day, &day), (EvalDomain::Night, &night), (EvalDomain::All, &all)] {
                if set.is_empty() {
                    continue;
                }
                let report = evaluate_with_resampling(&det, &params, set, domain, &cfg.detector.eval, seed)?;
                rows.push((name.clone(), report));
            }
        }
        crate::write_text(&dir.join(layout::REPORT_TXT), &report_table(&rows))?;
        write_report_csv(&dir.join(layout::REPORT_CSV), &rows)?;
        write_per_class_csv(&dir.join(layout::PER_CLASS_CSV), &rows)?;
        if self.options.verbose {
            eprint!("{}", report_table(&rows));
        }
        summary.notes.insert("detectors".into(), detectors.iter().map(|d| d.0.as_str()).collect::<Vec<_>>().join(","));
        summary.artifacts.extend([layout::REPORT_TXT, layout::REPORT_CSV, layout::PER_CLASS_CSV].map(String::from));
        Ok(())
    }
}

pub fn method_manifest(m: Method) -> String {
    format!("{}/{}", m.as_str(), layout::MANIFEST)
}

pub fn detector_file(m: Method) -> String {
    format!("{}.detector", m.as_str())
}

fn image_file(image_id: &str) -> PathBuf {
    let name = if image_id.ends_with(".png") { image_id.to_string() } else { format!("{image_id}.png") };
    Path::new("images").join(name)
}

fn check_relative_id(id: &str) -> Result<()> {
    let p = Path::new(id);
    if p.is_absolute() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(Error::Config(format!("image filename `{id}` must be a plain relative path")));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(Error::io(d))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn spread_cells(s: &Spread) -> [String; 2] {
    [opt(s.mean), opt(s.std)]
}

fn report_table(rows: &[(String, EvalReport)]) -> String {
    let cell = |s: &Spread| match (s.mean, s.std) {
        (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
        (Some(m), None) => format!("{m:.3}"),
        _ => "n/a".into(),
    };
    let mut out = format!("{:<16} {:<6} {:>16} {:>16}\n", "method", "domain", "precision", "recall");
    for (name, r) in rows {
        out += &format!(
            "{:<16} {:<6} {:>16} {:>16}\n",
            name,
            r.domain.as_str(),
            cell(&r.aggregate.precision),
            cell(&r.aggregate.recall)
        );
    }
    out
}

fn write_report_csv(path: &Path, rows: &[(String, EvalReport)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header =
        ["method", "domain", "runs", "tp", "fp", "fn", "precision_mean", "precision_std", "recall_mean", "recall_std"];
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (name, r) in rows {
        let s = &r.aggregate.stats;
        let mut rec = vec![
            name.clone(),
            r.domain.as_str().to_string(),
            r.runs.to_string(),
            s.tp.to_string(),
            s.fp.to_string(),
            s.fn_.to_string(),
        ];
        rec.extend(spread_cells(&r.aggregate.precision));
        rec.extend(spread_cells(&r.aggregate.recall));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(Error::io(path))
}

fn write_per_class_csv(path: &Path, rows: &[(String, EvalReport)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "method",
        "domain",
        "class",
        "tp",
        "fp",
        "fn",
        "precision_mean",
        "precision_std",
        "recall_mean",
        "recall_std",
    ])
    .map_err(|e| csv_err(path, e))?;
    for (name, r) in rows {
        for (class, m) in &r.per_class {
            let s = &m.stats;
            let mut rec = vec![
                name.clone(),
                r.domain.as_str().to_string(),
                class.clone(),
                s.tp.to_string(),
                s.fp.to_string(),
                s.fn_.to_string(),
            ];
            rec.extend(spread_cells(&m.precision));
            rec.extend(spread_cells(&m.recall));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(Error::io(path))
}
