//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional except `dataset.train_csv`; unknown keys are errors. Relative
//! paths are resolved against the config file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use signforge_core::augment::Method;
use signforge_core::autodiff::Activation;
use signforge_core::detect::{EvalOptions, ToyDetectorConfig};
use signforge_core::gan::{ArchConfig, TrainConfig};
use signforge_core::policy_search::{ClassifierChildConfig, SearchConfig, SearchSpace};
use signforge_core::transforms::SaugParams;

use crate::checkpoint::{activation_name, parse_activation};
use crate::error::{Error, Result};

/// Which child model scores policies during search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildKind {
    Classifier,
    Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub train_csv: PathBuf,
    /// Directory the CSV filenames are relative to; defaults to the CSV's directory.
    pub image_dir: Option<PathBuf>,
    pub crop_size: u32,
    pub split_ratio: f64,
    pub night_threshold: f64,
    /// Fraction of night images given to the GAN as its unpaired pool; the rest form the night test set.
    pub night_pool_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSection {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Use this checkpoint instead of the `train-bbgan` output.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSection {
    pub search: SearchConfig,
    pub extended_ops: bool,
    pub val_fraction: f64,
    pub child: ChildKind,
    pub classifier: ClassifierChildConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSection {
    pub model: ToyDetectorConfig,
    pub eval: EvalOptions,
    /// Evaluate this parameter file instead of the `train-detector` outputs.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub saug: SaugParams,
    pub gan: GanSection,
    pub search: SearchSection,
    pub detector: DetectorSection,
    pub methods: Vec<Method>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetSection {
                train_csv: PathBuf::new(),
                image_dir: None,
                crop_size: signforge_core::dataset::STANDARD_SIZE,
                split_ratio: 0.8,
                night_threshold: signforge_core::dataset::DEFAULT_NIGHT_THRESHOLD,
                night_pool_ratio: 0.5,
            },
            saug: SaugParams::default(),
            gan: GanSection { arch: ArchConfig::default(), train: TrainConfig::default(), checkpoint: None },
            search: SearchSection {
                search: SearchConfig::default(),
                extended_ops: true,
                val_fraction: 0.2,
                child: ChildKind::Classifier,
                classifier: ClassifierChildConfig::default(),
            },
            detector: DetectorSection {
                model: ToyDetectorConfig::default(),
                eval: EvalOptions::default(),
                checkpoint: None,
            },
            methods: vec![Method::NoAug, Method::Saug, Method::Bbgan, Method::Rlaug, Method::RlaugBbgan],
        }
    }
}

trait Value: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(u64, u32, usize, f64, bool);

impl Value for PathBuf {
    fn parse(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| PathBuf::from(s))
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

impl Value for Option<PathBuf> {
    fn parse(s: &str) -> Option<Self> {
        Some((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn show(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl Value for Activation {
    fn parse(s: &str) -> Option<Self> {
        parse_activation(s).ok()
    }
    fn show(&self) -> String {
        activation_name(*self)
    }
}

impl Value for Vec<Method> {
    fn parse(s: &str) -> Option<Self> {
        let v: Option<Vec<Method>> = s.split(',').map(|m| m.trim().parse().ok()).collect();
        v.filter(|v| !v.is_empty())
    }
    fn show(&self) -> String {
        self.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
    }
}

impl Value for [usize; 3] {
    fn parse(s: &str) -> Option<Self> {
        let v: Vec<usize> = s.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
        v.try_into().ok()
    }
    fn show(&self) -> String {
        format!("{},{},{}", self[0], self[1], self[2])
    }
}

impl Value for [usize; 2] {
    fn parse(s: &str) -> Option<Self> {
        let v: Vec<usize> = s.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
        v.try_into().ok()
    }
    fn show(&self) -> String {
        format!("{},{}", self[0], self[1])
    }
}

impl Value for ChildKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "classifier" => Some(ChildKind::Classifier),
            "detection" => Some(ChildKind::Detection),
            _ => None,
        }
    }
    fn show(&self) -> String {
        match self {
            ChildKind::Classifier => "classifier".into(),
            ChildKind::Detection => "detection".into(),
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => [$($field:tt)+];)*) => {
        /// Every accepted key, in canonical order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl PipelineConfig {
            fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$($field)+ = Value::parse(raw).ok_or_else(|| {
                            Error::Config(format!("`{key}`: cannot parse `{raw}`"))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// `(key, value)` for every key, including defaults.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, Value::show(&self.$($field)+))),*]
            }
        }
    };
}

config_keys! {
    "seed" => [seed];
    "out_dir" => [out_dir];
    "dataset.train_csv" => [dataset.train_csv];
    "dataset.image_dir" => [dataset.image_dir];
    "dataset.crop_size" => [dataset.crop_size];
    "dataset.split_ratio" => [dataset.split_ratio];
    "dataset.night_threshold" => [dataset.night_threshold];
    "dataset.night_pool_ratio" => [dataset.night_pool_ratio];
    "saug.beta_red" => [saug.beta[0]];
    "saug.beta_green" => [saug.beta[1]];
    "saug.beta_blue" => [saug.beta[2]];
    "saug.gamma" => [saug.gamma];
    "saug.sky_scale" => [saug.sky_scale];
    "gan.depth" => [gan.arch.depth];
    "gan.base_channels" => [gan.arch.base_channels];
    "gan.max_channels" => [gan.arch.max_channels];
    "gan.disc_layers" => [gan.arch.disc_layers];
    "gan.disc_channels" => [gan.arch.disc_channels];
    "gan.activation" => [gan.arch.activation];
    "gan.residual" => [gan.arch.residual];
    "gan.steps" => [gan.train.steps];
    "gan.batch_size" => [gan.train.batch_size];
    "gan.lr" => [gan.train.lr];
    "gan.alpha_init" => [gan.train.alpha_init];
    "gan.alpha_lr" => [gan.train.alpha_lr];
    "gan.train_alpha" => [gan.train.train_alpha];
    "gan.beta1" => [gan.train.beta1];
    "gan.beta2" => [gan.train.beta2];
    "gan.checkpoint_every" => [gan.train.checkpoint_every];
    "gan.debug_gradcheck" => [gan.train.debug_gradcheck];
    "gan.checkpoint" => [gan.checkpoint];
    "search.budget" => [search.search.budget];
    "search.top_k" => [search.search.top_k];
    "search.learning_rate" => [search.search.learning_rate];
    "search.extended_ops" => [search.extended_ops];
    "search.val_fraction" => [search.val_fraction];
    "search.child" => [search.child];
    "search.child_epochs" => [search.classifier.epochs];
    "search.child_crop_size" => [search.classifier.crop_size];
    "search.child_channels" => [search.classifier.channels];
    "search.child_lr" => [search.classifier.lr];
    "detector.channels" => [detector.model.channels];
    "detector.epochs" => [detector.model.epochs];
    "detector.batch_size" => [detector.model.batch_size];
    "detector.lr" => [detector.model.lr];
    "detector.anchor" => [detector.model.anchor];
    "detector.single_class" => [detector.model.single_class];
    "detector.nms_iou" => [detector.model.nms_iou];
    "detector.activation" => [detector.model.activation];
    "detector.iou_threshold" => [detector.eval.iou_threshold];
    "detector.confidence_threshold" => [detector.eval.confidence_threshold];
    "detector.runs" => [detector.eval.runs];
    "detector.checkpoint" => [detector.checkpoint];
    "augment.methods" => [methods];
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen = std::collections::HashSet::new();
        let mut have_csv = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, found `{line}`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` is set twice", i + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
            have_csv |= k == "dataset.train_csv";
        }
        if !have_csv {
            return Err(Error::Config("`dataset.train_csv` is required".into()));
        }
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.dataset.train_csv);
        for p in
            [&mut self.dataset.image_dir, &mut self.gan.checkpoint, &mut self.detector.checkpoint].into_iter().flatten()
        {
            fix(p);
        }
    }

    pub fn image_dir(&self) -> PathBuf {
        self.dataset
            .image_dir
            .clone()
            .unwrap_or_else(|| self.dataset.train_csv.parent().map(Path::to_path_buf).unwrap_or_default())
    }

    pub fn search_space(&self) -> SearchSpace {
        if self.search.extended_ops {
            SearchSpace::extended()
        } else {
            SearchSpace::base()
        }
    }

    /// Range checks and existence of every referenced input path.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be in (0, 1), got {v}")))
            }
        };
        frac("dataset.split_ratio", d.split_ratio)?;
        frac("dataset.night_pool_ratio", d.night_pool_ratio)?;
        frac("search.val_fraction", self.search.val_fraction)?;
        let iou = self.detector.eval.iou_threshold;
        frac("detector.iou_threshold", iou)?;
        if !(0.0..=1.0).contains(&self.detector.eval.confidence_threshold) {
            return Err(Error::Config("`detector.confidence_threshold` must be in [0, 1]".into()));
        }
        let positive = [
            ("dataset.crop_size", d.crop_size as usize),
            ("gan.steps", self.gan.train.steps),
            ("gan.batch_size", self.gan.train.batch_size),
            ("search.budget", self.search.search.budget),
            ("search.top_k", self.search.search.top_k),
            ("detector.epochs", self.detector.model.epochs),
            ("detector.batch_size", self.detector.model.batch_size),
            ("detector.runs", self.detector.eval.runs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if !(self.gan.train.alpha_init > 0.0 && self.gan.train.alpha_init < 1.0) {
            return Err(Error::Config("`gan.alpha_init` must be in (0, 1)".into()));
        }
        self.gan.arch.validate()?;
        self.saug.validate()?;
        let mut inputs = vec![("dataset.train_csv", d.train_csv.clone()), ("dataset.image_dir", self.image_dir())];
        inputs.extend(self.gan.checkpoint.clone().map(|p| ("gan.checkpoint", p)));
        inputs.extend(self.detector.checkpoint.clone().map(|p| ("detector.checkpoint", p)));
        for (name, p) in inputs {
            if !p.exists() {
                return Err(Error::Config(format!("`{name}`: {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it back gives an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }

    /// SHA-256 over the canonical lines whose key starts with one of `prefixes`.
    pub fn hash_of(&self, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if prefixes.iter().any(|p| k.starts_with(p)) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "filename,class,x_min,y_min,x_max,y_max\n").unwrap();
        dir
    }

    #[test]
    fn parses_and_round_trips() {
        let dir = base();
        let cfg = PipelineConfig::parse(
            "# toy\nseed = 7\ndataset.train_csv = a.csv\ngan.depth = 2\naugment.methods = no-aug, rlaug+bbgan\ndetector.channels = 4,8,8\n",
            dir.path(),
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.gan.arch.depth, 2);
        assert_eq!(cfg.methods, vec![Method::NoAug, Method::RlaugBbgan]);
        assert_eq!(cfg.dataset.train_csv, dir.path().join("a.csv"));
        assert_eq!(PipelineConfig::parse(&cfg.to_text(), dir.path()).unwrap(), cfg);
        assert_eq!(cfg.entries().len(), KEYS.len());
    }

    #[test]
    fn rejects_bad_input() {
        let dir = base();
        let p = |t: &str| PipelineConfig::parse(t, dir.path());
        assert!(
            matches!(p("dataset.train_csv = a.csv\ngan.dpeth = 3\n"), Err(Error::Config(m)) if m.contains("gan.dpeth"))
        );
        assert!(p("gan.depth = 3\n").is_err());
        assert!(p("dataset.train_csv = missing.csv\n").is_err());
        assert!(p("dataset.train_csv = a.csv\ndataset.split_ratio = 1.5\n").is_err());
        assert!(p("dataset.train_csv = a.csv\nseed = 1\nseed = 2\n").is_err());
        assert!(p("dataset.train_csv = a.csv\nsaug.beta_blue = 0.1\n").is_err());
        assert!(p("dataset.train_csv = a.csv\ngan.depth three\n").is_err());
    }

    #[test]
    fn hash_tracks_only_named_sections() {
        let dir = base();
        let a = PipelineConfig::parse("dataset.train_csv = a.csv\n", dir.path()).unwrap();
        let b = PipelineConfig::parse("dataset.train_csv = a.csv\ngan.steps = 5\n", dir.path()).unwrap();
        assert_eq!(a.hash_of(&["seed", "dataset."]), b.hash_of(&["seed", "dataset."]));
        assert_ne!(a.hash_of(&["gan."]), b.hash_of(&["gan."]));
    }
}
