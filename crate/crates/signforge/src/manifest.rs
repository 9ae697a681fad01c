//! Dataset manifests: a version header, a seed line, then one JSON record per image.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signforge_core::{AnnotatedImage, BoundingBox, Domain, Provenance, Split};

use crate::error::{Error, Result};
use crate::imageio::read_png;

pub const MANIFEST_HEADER: &str = "signforge-manifest v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image file, relative to the manifest's directory.
    pub path: PathBuf,
    pub image_id: String,
    /// The original image this one was derived from (itself for originals).
    pub source_id: String,
    pub width: u32,
    pub height: u32,
    pub domain: Domain,
    pub split: Split,
    pub provenance: Provenance,
    pub boxes: Vec<BoundingBox>,
}

impl ManifestEntry {
    pub fn describe(path: impl Into<PathBuf>, img: &AnnotatedImage, provenance: Provenance, source_id: &str) -> Self {
        Self {
            path: path.into(),
            image_id: img.image_id.clone(),
            source_id: source_id.to_string(),
            width: img.width(),
            height: img.height(),
            domain: img.domain,
            split: img.split,
            provenance,
            boxes: img.boxes.clone(),
        }
    }

    /// Loads the pixels (relative to `base`) and checks them against the recorded metadata.
    pub fn load(&self, base: &Path) -> Result<AnnotatedImage> {
        let path = base.join(&self.path);
        let pixels = read_png(&path)?;
        if (pixels.width(), pixels.height()) != (self.width, self.height) {
            return Err(Error::Config(format!(
                "{}: image is {}x{}, manifest says {}x{} for `{}`",
                path.display(),
                pixels.width(),
                pixels.height(),
                self.width,
                self.height,
                self.image_id
            )));
        }
        let mut img = AnnotatedImage::new(self.image_id.clone(), pixels, self.boxes.clone());
        img.domain = self.domain;
        img.split = self.split;
        img.validate()?;
        Ok(img)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBox {
    class: String,
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    path: String,
    image_id: String,
    source_id: String,
    width: u32,
    height: u32,
    domain: String,
    split: String,
    provenance: String,
    seed: u64,
    boxes: Vec<WireBox>,
}

impl DatasetManifest {
    pub fn new(seed: u64) -> Self {
        Self { seed, entries: Vec::new() }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_HEADER}\nseed {}\n", self.seed);
        for e in &self.entries {
            let path = e.path.to_str().ok_or_else(|| Error::Config(format!("non-UTF-8 path {}", e.path.display())))?;
            let wire = WireEntry {
                path: path.replace('\\', "/"),
                image_id: e.image_id.clone(),
                source_id: e.source_id.clone(),
                width: e.width,
                height: e.height,
                domain: e.domain.to_string(),
                split: e.split.to_string(),
                provenance: e.provenance.to_string(),
                seed: self.seed,
                boxes: e
                    .boxes
                    .iter()
                    .map(|b| WireBox {
                        class: b.class_label.clone(),
                        x_min: b.x_min,
                        y_min: b.y_min,
                        x_max: b.x_max,
                        y_max: b.y_max,
                    })
                    .collect(),
            };
            let line = serde_json::to_string(&wire).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(out, "{line}").expect("writing to a String");
        }
        Ok(out)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
        let header = lines.next().map_or("", |(_, l)| l.trim_end());
        if header != MANIFEST_HEADER {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: MANIFEST_HEADER.into(),
                found: header.into(),
            });
        }
        let (n, seed_line) = lines.next().ok_or_else(|| Error::parse(path, 2, "missing seed line"))?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::parse(path, n, format!("expected `seed <integer>`, found `{seed_line}`")))?;
        let mut m = DatasetManifest::new(seed);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let w: WireEntry = serde_json::from_str(line).map_err(|e| Error::parse(path, n, e.to_string()))?;
            if w.seed != seed {
                return Err(Error::parse(path, n, format!("record seed {} differs from manifest seed {seed}", w.seed)));
            }
            let bad = |e: signforge_core::Error| Error::parse(path, n, e.to_string());
            let boxes: Vec<BoundingBox> =
                w.boxes.into_iter().map(|b| BoundingBox::new(b.class, b.x_min, b.y_min, b.x_max, b.y_max)).collect();
            for b in &boxes {
                b.validate(&w.image_id, w.width, w.height).map_err(bad)?;
            }
            m.entries.push(ManifestEntry {
                path: PathBuf::from(w.path),
                image_id: w.image_id,
                source_id: w.source_id,
                width: w.width,
                height: w.height,
                domain: w.domain.parse().map_err(bad)?,
                split: w.split.parse().map_err(bad)?,
                provenance: w.provenance.parse().map_err(bad)?,
                boxes,
            });
        }
        Ok(m)
    }

    /// Loads every image, relative to the manifest file's directory.
    pub fn load_images(&self, manifest_path: &Path) -> Result<Vec<AnnotatedImage>> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        self.entries.iter().map(|e| e.load(base)).collect()
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    crate::write_text(path, &manifest.to_text()?)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    DatasetManifest::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_mismatch_names_both() {
        let err = DatasetManifest::parse("signforge-manifest v2\nseed 1\n", Path::new("m")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("v1") && msg.contains("v2"), "{msg}");
    }

    #[test]
    fn rejects_out_of_bounds_box() {
        let text = format!(
            "{MANIFEST_HEADER}\nseed 3\n{}\n",
            r#"{"path":"a.png","image_id":"a","source_id":"a","width":8,"height":8,"domain":"day","split":"train","provenance":"original","seed":3,"boxes":[{"class":"s","x_min":0,"y_min":0,"x_max":9,"y_max":4}]}"#
        );
        assert!(matches!(DatasetManifest::parse(&text, Path::new("m")), Err(Error::Parse { line: 3, .. })));
    }
}
