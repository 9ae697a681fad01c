use crate::image::{AnnotatedImage, Domain};
use crate::math::{powf, to_u8};
use crate::{Error, Result};

/// Parameters of the SAUG darkening.
///
/// Each channel value `v` first becomes `v * (1 - beta_c * (v / 255)^gamma)`,
/// which removes proportionally more from bright pixels; rows in the top half
/// are then multiplied by `sky_scale`. Box interiors are restored afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaugParams {
    /// Per-channel strength, RGB order. Blue must be the strongest.
    pub beta: [f64; 3],
    pub gamma: f64,
    pub sky_scale: f64,
}

impl Default for SaugParams {
    fn default() -> Self {
        Self { beta: [0.5, 0.5, 0.7], gamma: 2.0, sky_scale: 0.6 }
    }
}

impl SaugParams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in
            [("saug.beta_red", self.beta[0]), ("saug.beta_green", self.beta[1]), ("saug.beta_blue", self.beta[2])]
        {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::OutOfRange { name, value: b });
            }
        }
        if self.beta[2] < self.beta[0] || self.beta[2] < self.beta[1] {
            return Err(Error::Config("saug.beta_blue must be >= beta_red and beta_green".into()));
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::OutOfRange { name: "saug.gamma", value: self.gamma });
        }
        if !(0.0..=1.0).contains(&self.sky_scale) {
            return Err(Error::OutOfRange { name: "saug.sky_scale", value: self.sky_scale });
        }
        Ok(())
    }
}

/// Darkens a day image into a pseudo-night image, keeping box interiors verbatim.
pub fn saug_transform(img: &AnnotatedImage, params: &SaugParams) -> AnnotatedImage {
    let (w, h) = (img.width(), img.height());
    let mask = img.roi_mask();
    let src = img.image.as_raw();
    let mut out = img.image.clone();
    let dst = out.as_raw_mut();
    for y in 0..h {
        let sky = if y < h / 2 { params.sky_scale } else { 1.0 };
        for x in 0..w {
            let p = y as usize * w as usize + x as usize;
            if mask[p] {
                continue;
            }
            for c in 0..3 {
                let v = src[p * 3 + c] as f64;
                let dark = v * (1.0 - params.beta[c] * powf(v / 255.0, params.gamma));
                dst[p * 3 + c] = to_u8(dark * sky);
            }
        }
    }
    let mut res = img.with_image(out);
    res.domain = Domain::Night;
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{BoundingBox, RgbImage};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn black_stays_black_and_white_follows_formula() {
        let mut image = RgbImage::filled(4, 4, [255, 255, 255]);
        image.put(0, 3, [0, 0, 0]);
        let img = AnnotatedImage::new("a", image, vec![]);
        let out = saug_transform(&img, &SaugParams::default());
        assert_eq!(out.image.get(0, 3), [0, 0, 0]);
        // round(255 * (1 - beta)) for beta = 0.5, 0.5, 0.7
        assert_eq!(out.image.get(1, 3), [128, 128, 77]);
        // top half additionally scaled by 0.6: round(127.5 * 0.6), round(76.5 * 0.6)
        assert_eq!(out.image.get(1, 0), [77, 77, 46]);
        assert_eq!(out.domain, Domain::Night);
    }

    #[test]
    fn box_interior_is_copied() {
        let img =
            AnnotatedImage::new("a", RgbImage::filled(8, 8, [200, 150, 250]), vec![BoundingBox::new("s", 2, 2, 5, 6)]);
        let out = saug_transform(&img, &SaugParams::default());
        for y in 0..8 {
            for x in 0..8 {
                let inside = (2..5).contains(&x) && (2..6).contains(&y);
                assert_eq!(out.image.get(x, y) == img.image.get(x, y), inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn validate_rejects_weak_blue() {
        let p = SaugParams { beta: [0.6, 0.5, 0.5], ..SaugParams::default() };
        assert!(p.validate().is_err());
        assert!(SaugParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn never_brightens_outside_boxes(pixels in proptest::collection::vec(any::<u8>(), 6 * 6 * 3), bx in 0u32..5, by in 0u32..5) {
            let img = AnnotatedImage::new(
                "p",
                RgbImage::from_raw(6, 6, pixels).unwrap(),
                vec![BoundingBox::new("s", bx, by, bx + 1, by + 1)],
            );
            let out = saug_transform(&img, &SaugParams::default());
            let mask = img.roi_mask();
            for (i, (a, b)) in img.image.as_raw().iter().zip(out.image.as_raw()).enumerate() {
                if mask[i / 3] {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!(b <= a);
                }
            }
            // idempotent on box interiors
            let again = saug_transform(&out, &SaugParams::default());
            prop_assert_eq!(again.image.get(bx, by), img.image.get(bx, by));
        }
    }
}
