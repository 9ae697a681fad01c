use signforge_core::detect::{
    evaluate_with_resampling, match_detections, Detector, EvalDomain, EvalOptions, ToyDetector, ToyDetectorConfig,
};
use signforge_core::rng::seeded;
use signforge_core::synth::square_scene;
use signforge_core::AnnotatedImage;

fn squares(seed: u64, n: usize) -> Vec<AnnotatedImage> {
    let mut rng = seeded(seed);
    (0..n).map(|i| square_scene(&mut rng, 32, &format!("sq{i}"))).collect()
}

fn single_class() -> ToyDetector {
    ToyDetector::new(ToyDetectorConfig { single_class: true, ..ToyDetectorConfig::default() })
}

#[test]
fn learns_high_contrast_squares() {
    let det = single_class();
    let mut recalls = Vec::new();
    for seed in 0..3 {
        let train = squares(100 + seed, 50);
        let test = squares(200 + seed, 50);
        let params = det.train(&train, seed).unwrap();
        let h = &params.loss_history;
        assert!(h.last().unwrap() < &h[0], "loss did not decrease: {h:?}");
        let opts = EvalOptions { runs: 1, ..EvalOptions::default() };
        let r = evaluate_with_resampling(&det, &params, &test, EvalDomain::All, &opts, 0).unwrap();
        recalls.push(r.aggregate.stats.recall.unwrap());
    }
    recalls.sort_by(f64::total_cmp);
    eprintln!("square recall per seed (sorted): {recalls:?}");
    assert!(recalls[1] >= 0.8, "median recall {}", recalls[1]);
}

#[test]
fn empty_annotations_train_quietly() {
    let mut data = squares(7, 20);
    for d in &mut data {
        d.boxes.clear();
    }
    let det = single_class();
    let params = det.train(&data, 1).unwrap();
    let fps: usize = data.iter().map(|d| det.predict(&params, &d.image_id, &d.image, 0.5).len()).sum();
    assert!(fps as f64 / data.len() as f64 <= 1.0, "{fps} false positives");
    let m = match_detections(&det.predict(&params, "x", &data[0].image, 0.5), &[], 0.5);
    assert_eq!(m.total().tp, 0);
}
