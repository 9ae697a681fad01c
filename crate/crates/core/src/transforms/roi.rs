//! Box-targeted ops: partial occlusion of a sign and re-insertion of daytime ROIs.

use rand::{Rng, RngCore};

use crate::image::AnnotatedImage;
use crate::math::{round, sqrt, to_u8};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionFill {
    Black,
    /// Mean colour of the box region.
    Mean,
}

/// Covers `fraction` of box `box_index` with a filled rectangle at a random
/// position inside the box. Annotations are unchanged.
pub fn occlusion_op<R: RngCore + ?Sized>(
    img: &AnnotatedImage,
    box_index: usize,
    fraction: f64,
    fill: OcclusionFill,
    rng: &mut R,
) -> Result<AnnotatedImage> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::OutOfRange { name: "occlusion fraction", value: fraction });
    }
    let b = img.boxes.get(box_index).ok_or(Error::BoxIndex { index: box_index, count: img.boxes.len() })?;
    let (bw, bh) = (b.width(), b.height());
    if fraction == 0.0 || bw == 0 || bh == 0 {
        return Ok(img.clone());
    }
    let target = fraction * (bw as f64 * bh as f64);
    let rw = (round(bw as f64 * sqrt(fraction)) as u32).clamp(1, bw);
    let rh = (round(target / rw as f64) as u32).clamp(1, bh);
    let x0 = b.x_min + rng.random_range(0..=bw - rw);
    let y0 = b.y_min + rng.random_range(0..=bh - rh);
    let color = match fill {
        OcclusionFill::Black => [0, 0, 0],
        OcclusionFill::Mean => {
            let mut acc = [0f64; 3];
            for y in b.y_min..b.y_max {
                for x in b.x_min..b.x_max {
                    let p = img.image.get(x, y);
                    for c in 0..3 {
                        acc[c] += p[c] as f64;
                    }
                }
            }
            acc.map(|a| to_u8(a / (bw as f64 * bh as f64)))
        }
    };
    let mut out = img.clone();
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            out.image.put(x, y, color);
        }
    }
    Ok(out)
}

/// Copies every pixel inside any box of `original` over `generated`.
pub fn reinsert_roi(generated: &AnnotatedImage, original: &AnnotatedImage) -> Result<AnnotatedImage> {
    if generated.width() != original.width() || generated.height() != original.height() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "generated {}x{} vs original {}x{} for `{}`",
            generated.width(),
            generated.height(),
            original.width(),
            original.height(),
            original.image_id
        )));
    }
    if generated.boxes != original.boxes {
        return Err(Error::BoxMismatch(original.image_id.clone()));
    }
    let mask = original.roi_mask();
    let mut out = generated.clone();
    let dst = out.image.as_raw_mut();
    let src = original.image.as_raw();
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        dst[p * 3..p * 3 + 3].copy_from_slice(&src[p * 3..p * 3 + 3]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{BoundingBox, RgbImage};
    use crate::rng::seeded;
    use alloc::vec;

    fn textured(boxes: alloc::vec::Vec<BoundingBox>) -> AnnotatedImage {
        let mut img = RgbImage::new(32, 32);
        for y in 0..32 {
            for x in 0..32 {
                img.put(x, y, [(x * 7 + 1) as u8, (y * 5 + 3) as u8, 90]);
            }
        }
        AnnotatedImage::new("t", img, boxes)
    }

    fn changed(a: &AnnotatedImage, b: &AnnotatedImage) -> usize {
        a.image.as_raw().chunks_exact(3).zip(b.image.as_raw().chunks_exact(3)).filter(|(p, q)| p != q).count()
    }

    #[test]
    fn occlusion_fraction_zero_is_identity() {
        let img = textured(vec![BoundingBox::new("s", 4, 4, 24, 24)]);
        let out = occlusion_op(&img, 0, 0.0, OcclusionFill::Black, &mut seeded(1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn occlusion_full_blacks_out_box() {
        let img = textured(vec![BoundingBox::new("s", 4, 4, 24, 24)]);
        let out = occlusion_op(&img, 0, 1.0, OcclusionFill::Black, &mut seeded(1)).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let inside = (4..24).contains(&x) && (4..24).contains(&y);
                assert_eq!(out.image.get(x, y) == [0, 0, 0], inside);
            }
        }
        assert_eq!(out.boxes, img.boxes);
    }

    #[test]
    fn occlusion_half_covers_about_half() {
        let img = textured(vec![BoundingBox::new("s", 4, 4, 24, 24)]);
        for seed in 0..10 {
            let out = occlusion_op(&img, 0, 0.5, OcclusionFill::Black, &mut seeded(seed)).unwrap();
            let n = changed(&img, &out) as i64;
            // 14 x 14 rectangle: within one row/column of 200
            assert!((n - 200).abs() <= 20, "{n}");
        }
    }

    #[test]
    fn occlusion_errors() {
        let img = textured(vec![BoundingBox::new("s", 4, 4, 24, 24)]);
        assert!(occlusion_op(&img, 0, 1.5, OcclusionFill::Black, &mut seeded(1)).is_err());
        assert!(matches!(
            occlusion_op(&img, 3, 0.5, OcclusionFill::Mean, &mut seeded(1)),
            Err(Error::BoxIndex { index: 3, count: 1 })
        ));
    }

    #[test]
    fn reinsert_copies_union_of_boxes() {
        let boxes = vec![BoundingBox::new("a", 2, 2, 10, 10), BoundingBox::new("b", 6, 6, 14, 12)];
        let original = textured(boxes.clone());
        let generated = original.with_image(RgbImage::new(32, 32));
        let out = reinsert_roi(&generated, &original).unwrap();
        let mask = original.roi_mask();
        for y in 0..32u32 {
            for x in 0..32u32 {
                let want = if mask[(y * 32 + x) as usize] { original.image.get(x, y) } else { [0, 0, 0] };
                assert_eq!(out.image.get(x, y), want);
            }
        }
        assert_eq!(reinsert_roi(&out, &original).unwrap(), out);
        assert_eq!(reinsert_roi(&original, &original).unwrap(), original);
    }

    #[test]
    fn reinsert_rejects_mismatch() {
        let original = textured(vec![BoundingBox::new("a", 2, 2, 10, 10)]);
        let small = AnnotatedImage::new("t", RgbImage::new(16, 16), original.boxes.clone());
        assert!(matches!(reinsert_roi(&small, &original), Err(Error::DimensionMismatch(_))));
        let mut other = original.clone();
        other.boxes.clear();
        assert!(matches!(reinsert_roi(&other, &original), Err(Error::BoxMismatch(_))));
    }
}
