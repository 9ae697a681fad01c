//! The discretized augmentation-policy catalog.
//!
//! A [`Policy`] is five [`SubPolicy`]s; a sub-policy is two [`PolicyOp`]s
//! applied in order. Each op carries a probability level in `0..=10`
//! (`p = level / 10`) and a magnitude level in `0..=9`.
//!
//! Magnitude ranges (level 9 reaches the end of the range):
//!
//! | op | decoded magnitude |
//! |----|-------------------|
//! | shear-x / shear-y | `±0.3 * l/9`, sign drawn at random |
//! | translate-x / translate-y | `±0.45 * side * l/9`, random sign |
//! | rotate | `±30° * l/9`, random sign |
//! | solarize | threshold `256 - 256 * l/9` |
//! | posterize | `8 - round(4 * l/9)` bits |
//! | contrast, color, brightness, sharpness | factor `0.1 + 1.8 * l/9` |
//! | cutout | square of side `0.5 * min(w, h) * l/9`, gray fill |
//! | sample-pairing | blend weight `0.4 * l/9` with a random pool image |
//! | blur | box radius `l` |
//! | box-occlusion | black cover of `l/9` of every box |
//!
//! auto-contrast, invert and equalize ignore the magnitude.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};

use super::{geometry, photometric, roi};
use crate::image::{AnnotatedImage, RgbImage};
use crate::math::round;
use crate::{Error, Result};

pub const PROBABILITY_LEVELS: u8 = 11;
pub const MAGNITUDE_LEVELS: u8 = 10;
pub const OPS_PER_SUBPOLICY: usize = 2;
pub const SUBPOLICIES_PER_POLICY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
    SamplePairing,
    Blur,
    BoxOcclusion,
}

impl OpKind {
    /// The 16 base ops.
    pub const BASE: [OpKind; 16] = [
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Rotate,
        OpKind::AutoContrast,
        OpKind::Invert,
        OpKind::Equalize,
        OpKind::Solarize,
        OpKind::Posterize,
        OpKind::Contrast,
        OpKind::Color,
        OpKind::Brightness,
        OpKind::Sharpness,
        OpKind::Cutout,
        OpKind::SamplePairing,
    ];

    /// Base ops plus the blur and occlusion extensions.
    pub const EXTENDED: [OpKind; 18] = [
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Rotate,
        OpKind::AutoContrast,
        OpKind::Invert,
        OpKind::Equalize,
        OpKind::Solarize,
        OpKind::Posterize,
        OpKind::Contrast,
        OpKind::Color,
        OpKind::Brightness,
        OpKind::Sharpness,
        OpKind::Cutout,
        OpKind::SamplePairing,
        OpKind::Blur,
        OpKind::BoxOcclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::ShearX => "shear-x",
            OpKind::ShearY => "shear-y",
            OpKind::TranslateX => "translate-x",
            OpKind::TranslateY => "translate-y",
            OpKind::Rotate => "rotate",
            OpKind::AutoContrast => "auto-contrast",
            OpKind::Invert => "invert",
            OpKind::Equalize => "equalize",
            OpKind::Solarize => "solarize",
            OpKind::Posterize => "posterize",
            OpKind::Contrast => "contrast",
            OpKind::Color => "color",
            OpKind::Brightness => "brightness",
            OpKind::Sharpness => "sharpness",
            OpKind::Cutout => "cutout",
            OpKind::SamplePairing => "sample-pairing",
            OpKind::Blur => "blur",
            OpKind::BoxOcclusion => "box-occlusion",
        }
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, OpKind::ShearX | OpKind::ShearY | OpKind::TranslateX | OpKind::TranslateY | OpKind::Rotate)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::EXTENDED.iter().copied().find(|k| k.name() == s).ok_or_else(|| Error::UnknownOp(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyOp {
    pub kind: OpKind,
    pub probability_level: u8,
    pub magnitude_level: u8,
}

impl PolicyOp {
    pub fn new(kind: OpKind, probability_level: u8, magnitude_level: u8) -> Result<Self> {
        let op = Self { kind, probability_level, magnitude_level };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probability_level >= PROBABILITY_LEVELS {
            return Err(Error::InvalidPolicy(alloc::format!(
                "probability level {} not in 0..=10",
                self.probability_level
            )));
        }
        if self.magnitude_level >= MAGNITUDE_LEVELS {
            return Err(Error::InvalidPolicy(alloc::format!("magnitude level {} not in 0..=9", self.magnitude_level)));
        }
        Ok(())
    }

    pub fn probability(&self) -> f64 {
        self.probability_level as f64 / 10.0
    }

    /// Magnitude level as a fraction of the op's range, `0..=1`.
    pub fn strength(&self) -> f64 {
        self.magnitude_level as f64 / (MAGNITUDE_LEVELS - 1) as f64
    }
}

impl fmt::Display for PolicyOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.kind, self.probability_level, self.magnitude_level)
    }
}

impl FromStr for PolicyOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidPolicy(alloc::format!("expected `op,p,m`, got `{s}`")));
        }
        let level = |t: &str| t.parse::<u8>().map_err(|_| Error::InvalidPolicy(alloc::format!("bad level `{t}`")));
        PolicyOp::new(parts[0].parse()?, level(parts[1])?, level(parts[2])?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubPolicy {
    pub ops: [PolicyOp; OPS_PER_SUBPOLICY],
}

impl SubPolicy {
    pub fn new(first: PolicyOp, second: PolicyOp) -> Self {
        Self { ops: [first, second] }
    }

    pub fn validate(&self) -> Result<()> {
        self.ops.iter().try_for_each(PolicyOp::validate)
    }
}

impl fmt::Display for SubPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.ops[0], self.ops[1])
    }
}

impl FromStr for SubPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) =
            s.split_once('|').ok_or_else(|| Error::InvalidPolicy(alloc::format!("expected `opA|opB`, got `{s}`")))?;
        Ok(SubPolicy::new(a.parse()?, b.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Policy {
    pub sub_policies: [SubPolicy; SUBPOLICIES_PER_POLICY],
}

impl Policy {
    pub fn from_slice(subs: &[SubPolicy]) -> Result<Self> {
        let sub_policies: [SubPolicy; SUBPOLICIES_PER_POLICY] = subs
            .try_into()
            .map_err(|_| Error::InvalidPolicy(alloc::format!("a policy has 5 sub-policies, got {}", subs.len())))?;
        let p = Self { sub_policies };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.sub_policies.iter().try_for_each(SubPolicy::validate)
    }

    /// A policy whose every op has probability 0.
    pub fn identity() -> Self {
        let op = PolicyOp { kind: OpKind::Invert, probability_level: 0, magnitude_level: 0 };
        Self { sub_policies: [SubPolicy::new(op, op); SUBPOLICIES_PER_POLICY] }
    }

    /// Compact single-line form, sub-policies joined by `;`.
    pub fn to_line(&self) -> String {
        let parts: Vec<String> = self.sub_policies.iter().map(|s| s.to_string()).collect();
        parts.join(";")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let subs = line.split(';').map(str::parse).collect::<Result<Vec<SubPolicy>>>()?;
        Policy::from_slice(&subs)
    }
}

pub const POLICY_FILE_HEADER: &str = "signforge-policy v1";

/// Policy-file text: header, then one sub-policy per line, policies separated by a blank line.
pub fn format_policies(policies: &[Policy]) -> String {
    let mut out = String::from(POLICY_FILE_HEADER);
    out.push('\n');
    for (i, p) in policies.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for sp in &p.sub_policies {
            out.push_str(&sp.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn parse_policies(text: &str) -> Result<Vec<Policy>> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(POLICY_FILE_HEADER) => {}
        other => {
            return Err(Error::InvalidPolicy(alloc::format!(
                "expected header `{POLICY_FILE_HEADER}`, got `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut policies = Vec::new();
    let mut pending = Vec::new();
    for line in lines.map(str::trim).filter(|l| !l.starts_with('#')) {
        if line.is_empty() {
            if !pending.is_empty() {
                policies.push(Policy::from_slice(&pending)?);
                pending.clear();
            }
            continue;
        }
        pending.push(line.parse::<SubPolicy>()?);
        if pending.len() == SUBPOLICIES_PER_POLICY {
            policies.push(Policy::from_slice(&pending)?);
            pending.clear();
        }
    }
    if !pending.is_empty() {
        return Err(Error::InvalidPolicy(alloc::format!("trailing policy has {} sub-policies", pending.len())));
    }
    Ok(policies)
}

fn signed<R: RngCore + ?Sized>(rng: &mut R, v: f64) -> f64 {
    if rng.random::<bool>() {
        -v
    } else {
        v
    }
}

/// Applies `op` with probability `op.probability()`.
///
/// The first draw from `rng` decides application; stochastic ops draw
/// further values (sign, position, pairing partner) only when applied.
/// `pool` feeds sample-pairing; images with a different size are skipped.
pub fn apply_op<R: RngCore + ?Sized>(
    img: &AnnotatedImage,
    op: &PolicyOp,
    rng: &mut R,
    pool: &[RgbImage],
) -> Result<AnnotatedImage> {
    op.validate()?;
    let draw: f64 = rng.random();
    if draw >= op.probability() {
        return Ok(img.clone());
    }
    let s = op.strength();
    let (w, h) = (img.width(), img.height());
    let pix = |f: &dyn Fn(&RgbImage) -> RgbImage| img.with_image(f(&img.image));
    let out = match op.kind {
        OpKind::ShearX => geometry::shear_x(img, signed(rng, 0.3 * s)),
        OpKind::ShearY => geometry::shear_y(img, signed(rng, 0.3 * s)),
        OpKind::TranslateX => geometry::translate_x(img, signed(rng, 0.45 * w as f64 * s)),
        OpKind::TranslateY => geometry::translate_y(img, signed(rng, 0.45 * h as f64 * s)),
        OpKind::Rotate => geometry::rotate(img, signed(rng, 30.0 * s)),
        OpKind::AutoContrast => pix(&photometric::autocontrast),
        OpKind::Invert => pix(&photometric::invert),
        OpKind::Equalize => pix(&photometric::equalize),
        OpKind::Solarize => {
            let thr = round(256.0 - 256.0 * s) as u16;
            pix(&|i| photometric::solarize(i, thr))
        }
        OpKind::Posterize => {
            let bits = 8 - round(4.0 * s) as u8;
            pix(&|i| photometric::posterize(i, bits))
        }
        OpKind::Contrast => pix(&|i| photometric::contrast(i, 0.1 + 1.8 * s)),
        OpKind::Color => pix(&|i| photometric::color(i, 0.1 + 1.8 * s)),
        OpKind::Brightness => pix(&|i| photometric::brightness(i, 0.1 + 1.8 * s)),
        OpKind::Sharpness => pix(&|i| photometric::sharpness(i, 0.1 + 1.8 * s)),
        OpKind::Cutout => {
            let size = round(0.5 * w.min(h) as f64 * s) as u32;
            let cx = rng.random_range(0..w.max(1));
            let cy = rng.random_range(0..h.max(1));
            pix(&|i| photometric::cutout(i, cx, cy, size, geometry::FILL))
        }
        OpKind::SamplePairing => {
            let same: Vec<&RgbImage> = pool.iter().filter(|p| p.width() == w && p.height() == h).collect();
            if same.is_empty() {
                img.clone()
            } else {
                let other = same[rng.random_range(0..same.len())];
                pix(&|i| photometric::blend(i, other, 1.0 - 0.4 * s))
            }
        }
        OpKind::Blur => pix(&|i| photometric::box_blur(i, op.magnitude_level as u32)),
        OpKind::BoxOcclusion => {
            let mut cur = img.clone();
            for i in 0..img.boxes.len() {
                cur = roi::occlusion_op(&cur, i, s, roi::OcclusionFill::Black, rng)?;
            }
            cur
        }
    };
    Ok(out)
}

/// Applies both ops of `sp` in order.
pub fn apply_subpolicy<R: RngCore + ?Sized>(
    img: &AnnotatedImage,
    sp: &SubPolicy,
    rng: &mut R,
    pool: &[RgbImage],
) -> Result<AnnotatedImage> {
    let first = apply_op(img, &sp.ops[0], rng, pool)?;
    apply_op(&first, &sp.ops[1], rng, pool)
}

/// Picks one sub-policy uniformly and applies it.
pub fn apply_policy<R: RngCore + ?Sized>(
    img: &AnnotatedImage,
    policy: &Policy,
    rng: &mut R,
    pool: &[RgbImage],
) -> Result<AnnotatedImage> {
    let sp = &policy.sub_policies[rng.random_range(0..SUBPOLICIES_PER_POLICY)];
    apply_subpolicy(img, sp, rng, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BoundingBox;
    use crate::rng::seeded;
    use alloc::vec;

    fn sample() -> AnnotatedImage {
        let mut img = RgbImage::new(32, 32);
        for y in 0..32 {
            for x in 0..32 {
                img.put(x, y, [(x * 8) as u8, (y * 8) as u8, ((x + y) * 4) as u8]);
            }
        }
        AnnotatedImage::new("s", img, vec![BoundingBox::new("stop", 8, 10, 20, 22)])
    }

    fn op(kind: OpKind, p: u8, m: u8) -> PolicyOp {
        PolicyOp::new(kind, p, m).unwrap()
    }

    #[test]
    fn probability_zero_never_applies() {
        let img = sample();
        for kind in OpKind::EXTENDED {
            for seed in 0..5 {
                let out = apply_op(&img, &op(kind, 0, 9), &mut seeded(seed), &[]).unwrap();
                assert_eq!(out, img, "{kind}");
            }
        }
    }

    #[test]
    fn probability_ten_always_applies() {
        let img = sample();
        for seed in 0..20 {
            let out = apply_op(&img, &op(OpKind::Invert, 10, 0), &mut seeded(seed), &[]).unwrap();
            assert_eq!(out.image, photometric::invert(&img.image));
        }
    }

    #[test]
    fn photometric_ops_keep_boxes() {
        let img = sample();
        let pool = vec![RgbImage::filled(32, 32, [200, 10, 10])];
        for kind in OpKind::EXTENDED.iter().filter(|k| !k.is_geometric()) {
            for m in [0, 4, 9] {
                let out = apply_op(&img, &op(*kind, 10, m), &mut seeded(3), &pool).unwrap();
                assert_eq!(out.boxes, img.boxes, "{kind} level {m}");
            }
        }
    }

    #[test]
    fn double_invert_subpolicy_is_identity() {
        let img = sample();
        let sp = SubPolicy::new(op(OpKind::Invert, 10, 3), op(OpKind::Invert, 10, 7));
        assert_eq!(apply_subpolicy(&img, &sp, &mut seeded(9), &[]).unwrap(), img);
        let idle = SubPolicy::new(op(OpKind::Rotate, 0, 9), op(OpKind::Cutout, 0, 9));
        assert_eq!(apply_subpolicy(&img, &idle, &mut seeded(9), &[]).unwrap(), img);
    }

    #[test]
    fn subpolicy_equals_sequential_single_ops() {
        let img = sample();
        let sp = SubPolicy::new(op(OpKind::Rotate, 10, 5), op(OpKind::TranslateX, 10, 2));
        let composed = apply_subpolicy(&img, &sp, &mut seeded(11), &[]).unwrap();
        let mut rng = seeded(11);
        let a = apply_op(&img, &sp.ops[0], &mut rng, &[]).unwrap();
        let b = apply_op(&a, &sp.ops[1], &mut rng, &[]).unwrap();
        assert_eq!(composed, b);
    }

    #[test]
    fn levels_are_validated() {
        assert!(PolicyOp::new(OpKind::Blur, 11, 0).is_err());
        assert!(PolicyOp::new(OpKind::Blur, 10, 10).is_err());
        assert!(matches!("warp,1,1".parse::<PolicyOp>(), Err(Error::UnknownOp(_))));
    }

    #[test]
    fn policy_text_round_trips() {
        let p = Policy::from_slice(&[
            SubPolicy::new(op(OpKind::Rotate, 7, 3), op(OpKind::Blur, 2, 9)),
            SubPolicy::new(op(OpKind::ShearX, 10, 0), op(OpKind::BoxOcclusion, 5, 5)),
            SubPolicy::new(op(OpKind::Invert, 1, 1), op(OpKind::Equalize, 0, 0)),
            SubPolicy::new(op(OpKind::SamplePairing, 4, 8), op(OpKind::Cutout, 6, 2)),
            SubPolicy::new(op(OpKind::Color, 9, 9), op(OpKind::TranslateY, 3, 4)),
        ])
        .unwrap();
        let text = format_policies(&[p, Policy::identity()]);
        assert!(text.starts_with("signforge-policy v1\nrotate,7,3|blur,2,9\n"));
        assert_eq!(parse_policies(&text).unwrap(), vec![p, Policy::identity()]);
        assert_eq!(Policy::from_line(&p.to_line()).unwrap(), p);
        assert!(parse_policies("bogus\n").is_err());
        assert!(Policy::from_slice(&p.sub_policies[..4]).is_err());
    }
}
