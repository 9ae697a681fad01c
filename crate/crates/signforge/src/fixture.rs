//! Procedural toy dataset on disk: PNGs, an annotation CSV and a small config.

use std::path::{Path, PathBuf};

use signforge_core::rng::seeded;
use signforge_core::synth::{day_corpus, night_corpus, SceneConfig};

use crate::annotations::{write_annotations, ImageMeta};
use crate::error::{Error, Result};
use crate::imageio::write_png;

pub const FIXTURE_CSV: &str = "annotations.csv";
pub const FIXTURE_CONFIG: &str = "signforge.conf";

/// Settings small enough for every stage to finish in seconds.
const TOY_CONFIG: &str = "\
# Toy configuration for the procedural fixture.
dataset.train_csv = annotations.csv
dataset.crop_size = 32
gan.depth = 3
gan.residual = true
gan.steps = 40
gan.batch_size = 4
search.budget = 6
search.top_k = 3
search.child_epochs = 2
detector.epochs = 8
detector.runs = 5
";

/// Writes `day` bright and `night` dark 32x32 scenes into `dir` and returns
/// the path of a config that runs the whole pipeline on them.
pub fn write_toy_fixture(dir: &Path, seed: u64, day: usize, night: usize) -> Result<PathBuf> {
    let cfg = SceneConfig::default();
    let mut rng = seeded(seed);
    let mut images = day_corpus(&mut rng, &cfg, day, "day");
    images.extend(night_corpus(&mut rng, &cfg, night, "night"));
    let mut metas = Vec::with_capacity(images.len());
    for img in images {
        let file = format!("images/{}.png", img.image_id);
        write_png(&dir.join(&file), &img.image)?;
        metas.push(ImageMeta { image_id: file, boxes: img.boxes });
    }
    write_annotations(&dir.join(FIXTURE_CSV), &metas)?;
    let config = dir.join(FIXTURE_CONFIG);
    crate::write_text(&config, &format!("seed = {seed}\nout_dir = out\n{TOY_CONFIG}"))?;
    if metas.iter().any(|m| m.boxes.is_empty()) {
        return Err(Error::Config("fixture produced an image without annotations".into()));
    }
    Ok(config)
}
