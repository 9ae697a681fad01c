//! Raster images and their box annotations.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// 8-bit RGB raster, row-major, interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = vec![0u8; width as usize * height as usize * 3];
        for px in data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let want = width as usize * height as usize * 3;
        if data.len() != want {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{}x{} RGB needs {} bytes, got {}",
                width,
                height,
                want,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copies the `w x h` window at `(x0, y0)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> RgbImage {
        let mut out = RgbImage::new(w, h);
        for y in 0..h {
            let src = self.offset(x0, y0 + y);
            let dst = out.offset(0, y);
            out.data[dst..dst + w as usize * 3].copy_from_slice(&self.data[src..src + w as usize * 3]);
        }
        out
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, w: u32, h: u32) -> RgbImage {
        let mut out = RgbImage::new(w, h);
        for y in 0..h {
            let sy = ((y as u64 * self.height as u64) / h as u64) as u32;
            for x in 0..w {
                let sx = ((x as u64 * self.width as u64) / w as u64) as u32;
                out.put(x, y, self.get(sx, sy));
            }
        }
        out
    }

    /// Mean of `0.299 R + 0.587 G + 0.114 B` over all pixels.
    pub fn mean_luminance(&self) -> f64 {
        let n = self.width as usize * self.height as usize;
        if n == 0 {
            return 0.0;
        }
        let sum: f64 =
            self.data.chunks_exact(3).map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).sum();
        sum / n as f64
    }
}

/// Class-labelled pixel rectangle; `x_max` and `y_max` are exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub class_label: String,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(class_label: impl Into<String>, x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self { class_label: class_label.into(), x_min, y_min, x_max, y_max }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.x_max.saturating_sub(self.x_min)
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.y_max.saturating_sub(self.y_min)
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix0 = self.x_min.max(other.x_min);
        let iy0 = self.y_min.max(other.y_min);
        let ix1 = self.x_max.min(other.x_max);
        let iy1 = self.y_max.min(other.y_max);
        if ix1 <= ix0 || iy1 <= iy0 {
            return 0.0;
        }
        let inter = (ix1 - ix0) as f64 * (iy1 - iy0) as f64;
        let union = self.area() as f64 + other.area() as f64 - inter;
        inter / union
    }

    /// Checks the box against the documented invariants for an image of the given size.
    pub fn validate(&self, image_id: &str, width: u32, height: u32) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidBox { image_id: image_id.to_string(), reason });
        if self.class_label.is_empty() {
            return fail("empty class label".into());
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return fail(alloc::format!(
                "degenerate extent ({}, {}, {}, {})",
                self.x_min,
                self.y_min,
                self.x_max,
                self.y_max
            ));
        }
        if self.x_max > width || self.y_max > height {
            return fail(alloc::format!(
                "({}, {}, {}, {}) exceeds {}x{} image",
                self.x_min,
                self.y_min,
                self.x_max,
                self.y_max,
                width,
                height
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Day,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Unsplit,
}

/// How an image in a manifest was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Original,
    Saug,
    Bbgan,
    Rlaug,
    RlaugBbgan,
    Reinserted,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(alloc::format!(
                        concat!("unknown ", stringify!($ty), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

pub(crate) use string_enum;

string_enum!(Domain { Day => "day", Night => "night" });
string_enum!(Split { Train => "train", Test => "test", Unsplit => "unsplit" });
string_enum!(Provenance {
    Original => "original",
    Saug => "saug",
    Bbgan => "bbgan",
    Rlaug => "rlaug",
    RlaugBbgan => "rlaug_bbgan",
    Reinserted => "reinserted",
});

/// An image with its annotations and dataset tags.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub image: RgbImage,
    pub boxes: Vec<BoundingBox>,
    pub domain: Domain,
    pub split: Split,
}

impl AnnotatedImage {
    pub fn new(image_id: impl Into<String>, image: RgbImage, boxes: Vec<BoundingBox>) -> Self {
        Self { image_id: image_id.into(), image, boxes, domain: Domain::Day, split: Split::Unsplit }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.boxes {
            b.validate(&self.image_id, self.width(), self.height())?;
        }
        Ok(())
    }

    /// Same tags and boxes, different pixels.
    pub fn with_image(&self, image: RgbImage) -> Self {
        Self {
            image_id: self.image_id.clone(),
            image,
            boxes: self.boxes.clone(),
            domain: self.domain,
            split: self.split,
        }
    }

    /// Per-pixel union of all box interiors, row-major.
    pub fn roi_mask(&self) -> Vec<bool> {
        roi_mask(&self.boxes, self.width(), self.height())
    }
}

pub fn roi_mask(boxes: &[BoundingBox], width: u32, height: u32) -> Vec<bool> {
    let mut mask = vec![false; width as usize * height as usize];
    for b in boxes {
        for y in b.y_min..b.y_max.min(height) {
            let row = y as usize * width as usize;
            for x in b.x_min..b.x_max.min(width) {
                mask[row + x as usize] = true;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_identical_and_disjoint() {
        let a = BoundingBox::new("s", 0, 0, 10, 10);
        let b = BoundingBox::new("s", 5, 0, 15, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&BoundingBox::new("s", 20, 20, 30, 30)), 0.0);
    }

    #[test]
    fn validate_rejects_out_of_bounds_and_empty_label() {
        assert!(BoundingBox::new("s", 0, 0, 11, 5).validate("img", 10, 10).is_err());
        assert!(BoundingBox::new("", 0, 0, 5, 5).validate("img", 10, 10).is_err());
        assert!(BoundingBox::new("s", 5, 0, 5, 5).validate("img", 10, 10).is_err());
        match BoundingBox::new("s", 0, 0, 20, 5).validate("img_7", 10, 10) {
            Err(Error::InvalidBox { image_id, .. }) => assert_eq!(image_id, "img_7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enums_round_trip_through_strings() {
        for p in Provenance::ALL {
            assert_eq!(p.as_str().parse::<Provenance>().unwrap(), *p);
        }
        assert!("dusk".parse::<Domain>().is_err());
    }
}
