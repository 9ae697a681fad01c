//! Geometry standardization, day/night tagging and reproducible splits.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::image::{AnnotatedImage, BoundingBox, Domain, Split};
use crate::{rng, Error, Result};

pub const STANDARD_SIZE: u32 = 256;

/// Mean luminance (0..255) below which an image counts as night.
pub const DEFAULT_NIGHT_THRESHOLD: f64 = 60.0;

/// Crops to the standard 256x256 geometry. See [`center_crop`].
pub fn center_crop_256(img: &AnnotatedImage) -> Result<AnnotatedImage> {
    center_crop(img, STANDARD_SIZE)
}

/// Crops a `size x size` window that keeps as many boxes fully inside as
/// possible, preferring the window closest to the image centre on ties.
/// Boxes not fully inside the window are dropped; the rest are shifted into
/// window coordinates. Never upscales.
pub fn center_crop(img: &AnnotatedImage, size: u32) -> Result<AnnotatedImage> {
    let (w, h) = (img.width(), img.height());
    if w < size || h < size {
        return Err(Error::ImageTooSmall { image_id: img.image_id.clone(), width: w, height: h, size });
    }
    let (ox, oy) = best_window(&img.boxes, w, h, size);
    let boxes = img
        .boxes
        .iter()
        .filter(|b| fits(b, ox, oy, size))
        .map(|b| BoundingBox {
            class_label: b.class_label.clone(),
            x_min: b.x_min - ox,
            y_min: b.y_min - oy,
            x_max: b.x_max - ox,
            y_max: b.y_max - oy,
        })
        .collect();
    Ok(AnnotatedImage {
        image_id: img.image_id.clone(),
        image: img.image.crop(ox, oy, size, size),
        boxes,
        domain: img.domain,
        split: img.split,
    })
}

#[inline]
fn fits(b: &BoundingBox, ox: u32, oy: u32, size: u32) -> bool {
    b.x_min >= ox && b.y_min >= oy && b.x_max <= ox + size && b.y_max <= oy + size
}

fn best_window(boxes: &[BoundingBox], w: u32, h: u32, size: u32) -> (u32, u32) {
    let (span_x, span_y) = (w - size, h - size);
    // Per-box feasible origin ranges, inclusive.
    let ranges: Vec<_> = boxes
        .iter()
        .filter(|b| b.width() <= size && b.height() <= size)
        .map(|b| (b.x_max.saturating_sub(size), b.x_min.min(span_x), b.y_max.saturating_sub(size), b.y_min.min(span_y)))
        .collect();
    let mut best = (span_x / 2, span_y / 2);
    let mut best_key = (0usize, u64::MAX);
    for oy in 0..=span_y {
        let dy = (2 * oy as i64 - span_y as i64).unsigned_abs();
        for ox in 0..=span_x {
            let count = ranges.iter().filter(|&&(x0, x1, y0, y1)| ox >= x0 && ox <= x1 && oy >= y0 && oy <= y1).count();
            let dx = (2 * ox as i64 - span_x as i64).unsigned_abs();
            let dist = dx * dx + dy * dy;
            if count > best_key.0 || (count == best_key.0 && dist < best_key.1) {
                best_key = (count, dist);
                best = (ox, oy);
            }
        }
    }
    best
}

/// Night iff mean luminance is strictly below `threshold` (0..255 scale).
pub fn classify_day_night(img: &AnnotatedImage, threshold: f64) -> Domain {
    if img.image.mean_luminance() < threshold {
        Domain::Night
    } else {
        Domain::Day
    }
}

/// Shuffles with a seeded stream and cuts at `round(ratio * N)`. Output
/// images carry their new split tag; both halves keep the original relative order.
pub fn split_train_test(
    dataset: &[AnnotatedImage],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<AnnotatedImage>, Vec<AnnotatedImage>)> {
    let (train_idx, test_idx) = split_indices(dataset.len(), ratio, seed)?;
    let tag = |idx: &[usize], split: Split| {
        idx.iter()
            .map(|&i| {
                let mut img = dataset[i].clone();
                img.split = split;
                img
            })
            .collect::<Vec<_>>()
    };
    Ok((tag(&train_idx, Split::Train), tag(&test_idx, Split::Test)))
}

/// Index-level split used by [`split_train_test`]; exposed for metadata-only datasets.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRatio(ratio));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_train = crate::math::round(ratio * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Checks unique ids and box validity across a dataset.
pub fn validate_dataset(dataset: &[AnnotatedImage]) -> Result<()> {
    let mut ids: Vec<&str> = dataset.iter().map(|d| d.image_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(alloc::format!("duplicate image_id `{}`", w[0])));
    }
    dataset.iter().try_for_each(AnnotatedImage::validate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RgbImage;
    use alloc::vec;

    fn img(w: u32, h: u32, boxes: Vec<BoundingBox>) -> AnnotatedImage {
        AnnotatedImage::new("img", RgbImage::filled(w, h, [90, 90, 90]), boxes)
    }

    /// Exhaustive scan written independently of `best_window`: evaluates
    /// every window with the retained-box count and the Euclidean distance
    /// of its centre from the image centre.
    fn oracle_window(boxes: &[BoundingBox], w: u32, h: u32, size: u32) -> (u32, u32) {
        let mut best = None::<(usize, f64, u32, u32)>;
        for oy in 0..=(h - size) {
            for ox in 0..=(w - size) {
                let kept = boxes.iter().filter(|b| fits(b, ox, oy, size)).count();
                let cx = ox as f64 + size as f64 / 2.0 - w as f64 / 2.0;
                let cy = oy as f64 + size as f64 / 2.0 - h as f64 / 2.0;
                let d = crate::math::sqrt(cx * cx + cy * cy);
                let better = match best {
                    None => true,
                    Some((k, bd, _, _)) => kept > k || (kept == k && d < bd),
                };
                if better {
                    best = Some((kept, d, ox, oy));
                }
            }
        }
        let (_, _, ox, oy) = best.unwrap();
        (ox, oy)
    }

    #[test]
    fn crop_of_standard_size_is_identity() {
        let src = img(256, 256, vec![BoundingBox::new("stop", 3, 4, 50, 60)]);
        assert_eq!(center_crop_256(&src).unwrap(), src);
    }

    #[test]
    fn crop_rejects_small_images() {
        let src = img(255, 300, vec![]);
        assert!(matches!(center_crop_256(&src), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn crop_single_box_matches_oracle() {
        let boxes = vec![BoundingBox::new("stop", 300, 300, 340, 340)];
        let src = img(512, 512, boxes.clone());
        let (ox, oy) = oracle_window(&boxes, 512, 512, 256);
        assert_eq!((ox, oy), (128, 128));
        let out = center_crop_256(&src).unwrap();
        assert_eq!(out.boxes, vec![BoundingBox::new("stop", 172, 172, 212, 212)]);
    }

    #[test]
    fn crop_two_distant_boxes_keeps_one() {
        let boxes = vec![BoundingBox::new("a", 20, 200, 60, 240), BoundingBox::new("b", 420, 200, 460, 240)];
        let src = img(512, 512, boxes.clone());
        let (ox, oy) = oracle_window(&boxes, 512, 512, 256);
        // The right-hand box is reachable from ox = 204, 76 px from centre,
        // versus ox = 20 (108 px) for the left one.
        assert_eq!((ox, oy), (204, 128));
        let out = center_crop_256(&src).unwrap();
        assert_eq!(out.boxes, vec![BoundingBox::new("b", 216, 72, 256, 112)]);
    }

    #[test]
    fn crop_window_agrees_with_oracle_on_mixed_layouts() {
        let layouts = [
            vec![
                BoundingBox::new("a", 10, 10, 30, 30),
                BoundingBox::new("b", 40, 50, 70, 90),
                BoundingBox::new("c", 250, 280, 300, 330),
            ],
            vec![BoundingBox::new("a", 0, 0, 300, 20), BoundingBox::new("b", 290, 100, 310, 120)],
            vec![],
        ];
        for boxes in layouts {
            assert_eq!(best_window(&boxes, 320, 340, 256), oracle_window(&boxes, 320, 340, 256));
        }
    }

    #[test]
    fn day_night_threshold() {
        let gray = |v| img(8, 8, vec![]).with_image(RgbImage::filled(8, 8, [v, v, v]));
        assert_eq!(classify_day_night(&gray(0), DEFAULT_NIGHT_THRESHOLD), Domain::Night);
        assert_eq!(classify_day_night(&gray(255), DEFAULT_NIGHT_THRESHOLD), Domain::Day);
        assert_eq!(classify_day_night(&gray(59), DEFAULT_NIGHT_THRESHOLD), Domain::Night);
        assert_eq!(classify_day_night(&gray(61), DEFAULT_NIGHT_THRESHOLD), Domain::Day);
    }

    #[test]
    fn split_sizes_and_errors() {
        let data: Vec<_> =
            (0..10).map(|i| AnnotatedImage::new(alloc::format!("i{i}"), RgbImage::new(1, 1), vec![])).collect();
        let (tr, te) = split_train_test(&data, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.iter().all(|d| d.split == Split::Train));
        assert!(te.iter().all(|d| d.split == Split::Test));
        assert_eq!(split_train_test(&data, 0.8, 7).unwrap(), (tr, te));
        assert_eq!(split_train_test(&[], 0.5, 1), Err(Error::EmptyDataset));
        assert!(matches!(split_train_test(&data, 1.0, 1), Err(Error::InvalidRatio(_))));
        assert!(matches!(split_train_test(&data, 0.0, 1), Err(Error::InvalidRatio(_))));
    }
}
