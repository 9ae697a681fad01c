//! Combined augmentation: policy ops, GAN translation and their composition.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};

use crate::gan::{translate_image, GanModel};
use crate::image::{string_enum, AnnotatedImage, Domain, Provenance, RgbImage};
use crate::rng::substream;
use crate::transforms::policy::{apply_policy, Policy};
use crate::transforms::roi::reinsert_roi;
use crate::transforms::saug::{saug_transform, SaugParams};
use crate::{Error, Result};

/// One output image and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub source_id: String,
    pub provenance: Provenance,
    pub image: AnnotatedImage,
}

/// Training-set recipes compared in the evaluation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    NoAug,
    Saug,
    Bbgan,
    BbganReinsert,
    Rlaug,
    RlaugBbgan,
}

string_enum!(Method {
    NoAug => "no-aug",
    Saug => "saug",
    Bbgan => "bbgan",
    BbganReinsert => "bbgan+reinsert",
    Rlaug => "rlaug",
    RlaugBbgan => "rlaug+bbgan",
});

impl Method {
    pub fn needs_gan(self) -> bool {
        matches!(self, Method::Bbgan | Method::BbganReinsert | Method::RlaugBbgan)
    }

    pub fn needs_policies(self) -> bool {
        matches!(self, Method::Rlaug | Method::RlaugBbgan)
    }
}

/// One sub-policy of one policy, both chosen uniformly.
pub fn rlaug_once<R: RngCore + ?Sized>(
    img: &AnnotatedImage,
    policies: &[Policy],
    rng: &mut R,
    pool: &[RgbImage],
) -> Result<AnnotatedImage> {
    if policies.is_empty() {
        return Err(Error::InvalidPolicy("at least one policy is required".into()));
    }
    let p = &policies[rng.random_range(0..policies.len())];
    apply_policy(img, p, rng, pool)
}

fn derived(src: &AnnotatedImage, provenance: Provenance, mut image: AnnotatedImage) -> AugmentedRecord {
    if provenance != Provenance::Original {
        image.image_id = alloc::format!("{}__{}", src.image_id, provenance);
    }
    AugmentedRecord { source_id: src.image_id.clone(), provenance, image }
}

fn check_day(dataset: &[AnnotatedImage]) -> Result<()> {
    match dataset.iter().find(|d| d.domain != Domain::Day) {
        Some(d) => Err(Error::Config(alloc::format!("image `{}` is not day-domain", d.image_id))),
        None => Ok(()),
    }
}

/// Emits original, RL(original), BBGAN(original) and RL(BBGAN(original))
/// for every input, in that order.
///
/// Image `i` draws from stream `i` of `seed`: first the RL variant of the
/// original, then the RL variant of the translation.
pub fn augment_4x(
    dataset: &[AnnotatedImage],
    gan: &GanModel,
    policies: &[Policy],
    seed: u64,
) -> Result<Vec<AugmentedRecord>> {
    method_dataset(Method::RlaugBbgan, dataset, Some(gan), policies, &SaugParams::default(), seed)
}

/// The training set for `method`: every original plus that method's variants.
///
/// Per-image streams match [`augment_4x`], so e.g. the `rlaug` records of
/// `Method::Rlaug` are the same images as in the combined set.
pub fn method_dataset(
    method: Method,
    dataset: &[AnnotatedImage],
    gan: Option<&GanModel>,
    policies: &[Policy],
    saug: &SaugParams,
    seed: u64,
) -> Result<Vec<AugmentedRecord>> {
    check_day(dataset)?;
    if method.needs_policies() && policies.is_empty() {
        return Err(Error::InvalidPolicy(alloc::format!("{method} needs at least one policy")));
    }
    let gan = match (method.needs_gan(), gan) {
        (true, None) => return Err(Error::Config(alloc::format!("{method} needs a GAN model"))),
        (_, g) => g,
    };
    if method == Method::Saug {
        saug.validate()?;
    }
    let pool: Vec<RgbImage> =
        if method.needs_policies() { dataset.iter().map(|d| d.image.clone()).collect() } else { Vec::new() };
    let mut out = Vec::with_capacity(dataset.len() * 4);
    for (i, img) in dataset.iter().enumerate() {
        let mut rng = substream(seed, i as u64);
        out.push(derived(img, Provenance::Original, img.clone()));
        match method {
            Method::NoAug => {}
            Method::Saug => out.push(derived(img, Provenance::Saug, saug_transform(img, saug))),
            Method::Rlaug => out.push(derived(img, Provenance::Rlaug, rlaug_once(img, policies, &mut rng, &pool)?)),
            Method::Bbgan | Method::BbganReinsert | Method::RlaugBbgan => {
                let g = gan.expect("checked above");
                let night = translate_image(g, img)?;
                match method {
                    Method::Bbgan => out.push(derived(img, Provenance::Bbgan, night)),
                    Method::BbganReinsert => {
                        out.push(derived(img, Provenance::Reinserted, reinsert_roi(&night, img)?));
                    }
                    _ => {
                        let rl = rlaug_once(img, policies, &mut rng, &pool)?;
                        let rl_night = rlaug_once(&night, policies, &mut rng, &pool)?;
                        out.push(derived(img, Provenance::Rlaug, rl));
                        out.push(derived(img, Provenance::Bbgan, night));
                        out.push(derived(img, Provenance::RlaugBbgan, rl_night));
                    }
                }
            }
        }
    }
    Ok(out)
}
