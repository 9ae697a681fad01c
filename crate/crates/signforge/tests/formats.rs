use std::path::{Path, PathBuf};

use proptest::prelude::*;
use signforge::annotations::{parse_annotations, write_annotations, ImageMeta};
use signforge::imageio::{read_png, write_png};
use signforge::manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry};
use signforge::Error;
use signforge_core::dataset::split_indices;
use signforge_core::{BoundingBox, Domain, Provenance, RgbImage, Split};

fn entry(i: usize, boxes: Vec<BoundingBox>) -> ManifestEntry {
    ManifestEntry {
        path: PathBuf::from(format!("images/{i:05}.png")),
        image_id: format!("{i:05}.png"),
        source_id: format!("{i:05}.png"),
        width: 256,
        height: 256,
        domain: Domain::Day,
        split: Split::Unsplit,
        provenance: Provenance::Original,
        boxes,
    }
}

#[test]
fn lisa_sized_manifest_totals() {
    // 9924 images carrying 10503 signs: 579 images hold two signs.
    let mut m = DatasetManifest::new(3);
    for i in 0..9924 {
        let n = if i < 10503 - 9924 { 2 } else { 1 };
        let boxes = (0..n).map(|k| BoundingBox::new("stop", 10 + 40 * k, 10, 30 + 40 * k, 30)).collect();
        m.entries.push(entry(i, boxes));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lisa.manifest");
    write_manifest(&m, &path).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.entries.len(), 9924);
    assert_eq!(back.entries.iter().map(|e| e.boxes.len()).sum::<usize>(), 10503);

    let (train, test) = split_indices(9924, 7819.0 / 9924.0, 0).unwrap();
    assert_eq!((train.len(), test.len()), (7819, 2105));
}

#[test]
fn csv_fixture_loads_pixels_and_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage::filled(40, 30, [200, 10, 10]);
    write_png(&dir.path().join("a.png"), &img).unwrap();
    write_png(&dir.path().join("sub/b.png"), &RgbImage::filled(20, 20, [0, 0, 0])).unwrap();
    std::fs::write(
        dir.path().join("ann.csv"),
        "filename,class,x_min,y_min,x_max,y_max\na.png,stop,1,2,11,12\nsub/b.png,yield,0,0,5,5\na.png,speed,20,5,30,15\n",
    )
    .unwrap();
    let metas = parse_annotations(&dir.path().join("ann.csv")).unwrap();
    assert_eq!(metas.len(), 2);
    assert_eq!(metas[0].boxes.len(), 2);
    let a = metas[0].load(dir.path()).unwrap();
    assert_eq!(a.image, img);
    assert_eq!(a.boxes[1], BoundingBox::new("speed", 20, 5, 30, 15));

    let out = dir.path().join("copy.csv");
    write_annotations(&out, &metas).unwrap();
    assert_eq!(parse_annotations(&out).unwrap(), metas);
}

#[test]
fn box_outside_image_is_reported_with_its_image() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&dir.path().join("a.png"), &RgbImage::filled(10, 10, [0, 0, 0])).unwrap();
    let meta = ImageMeta { image_id: "a.png".into(), boxes: vec![BoundingBox::new("stop", 0, 0, 12, 5)] };
    let err = meta.load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("a.png"), "{err}");
}

#[test]
fn missing_png_is_an_io_error() {
    assert!(matches!(read_png(Path::new("/nonexistent/x.png")), Err(Error::Io { .. })));
}

#[test]
fn manifest_rejects_other_versions() {
    let err = DatasetManifest::parse("signforge-manifest v2\nseed 0\n", Path::new("m")).unwrap_err();
    assert!(matches!(err, Error::Version { .. }));
}

fn arb_box(w: u32, h: u32) -> impl Strategy<Value = BoundingBox> {
    (0..w, 0..h, "[a-z]{1,8}").prop_flat_map(move |(x0, y0, class)| {
        (x0 + 1..=w, y0 + 1..=h).prop_map(move |(x1, y1)| BoundingBox::new(class.clone(), x0, y0, x1, y1))
    })
}

fn arb_entry() -> impl Strategy<Value = ManifestEntry> {
    (1u32..300, 1u32..300).prop_flat_map(|(w, h)| {
        (
            "[a-z0-9_/]{1,20}\\.png",
            "[ -~]{1,24}",
            "[ -~]{1,24}",
            prop::collection::vec(arb_box(w, h), 0..4),
            prop::sample::select(vec![Domain::Day, Domain::Night]),
            prop::sample::select(vec![Split::Train, Split::Test, Split::Unsplit]),
            prop::sample::select(vec![
                Provenance::Original,
                Provenance::Saug,
                Provenance::Bbgan,
                Provenance::Rlaug,
                Provenance::RlaugBbgan,
                Provenance::Reinserted,
            ]),
        )
            .prop_map(move |(path, image_id, source_id, boxes, domain, split, provenance)| ManifestEntry {
                path: PathBuf::from(path),
                image_id,
                source_id,
                width: w,
                height: h,
                domain,
                split,
                provenance,
                boxes,
            })
    })
}

proptest! {
    #[test]
    fn manifest_text_round_trips(seed in any::<u64>(), entries in prop::collection::vec(arb_entry(), 0..6)) {
        let m = DatasetManifest { seed, entries };
        let text = m.to_text().unwrap();
        let back = DatasetManifest::parse(&text, Path::new("m")).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_text().unwrap(), text);
    }
}
