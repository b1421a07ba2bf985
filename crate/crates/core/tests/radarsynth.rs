use filterprune::radarsynth::{build_dataset, DatasetConfig, RadarClass};

/// Nearest-centroid accuracy on raw channel-0 pixels.
fn centroid_accuracy(per_class: usize, snr: f64) -> f64 {
    let cfg = DatasetConfig { per_class, snr_set: vec![snr], seed: 7, ..DatasetConfig::default() };
    let ds = build_dataset(&cfg).unwrap();
    let classes = RadarClass::ALL.len();
    let dim = ds.train.examples[0].input.channel(0).len();
    let mut centroids = vec![vec![0.0f64; dim]; classes];
    let mut counts = vec![0usize; classes];
    for ex in &ds.train.examples {
        for (c, &v) in centroids[ex.label].iter_mut().zip(ex.input.channel(0)) {
            *c += v as f64;
        }
        counts[ex.label] += 1;
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *n as f64);
    }
    let correct = ds
        .test
        .examples
        .iter()
        .filter(|ex| {
            let x = ex.input.channel(0);
            let d = |c: &[f64]| c.iter().zip(x).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>();
            let best = (0..classes).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap();
            best == ex.label
        })
        .count();
    correct as f64 / ds.test.len() as f64
}

#[test]
fn classes_are_separable_by_nearest_centroid() {
    let acc = centroid_accuracy(30, 20.0);
    println!("nearest-centroid accuracy {acc:.3}");
    assert!(acc >= 0.5, "accuracy {acc}");
}
