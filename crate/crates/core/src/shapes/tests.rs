use std::collections::BTreeMap;
use std::path::Path;

use super::*;

fn spec(kind: ShapeKind, cy: f64, cx: f64, size: f64) -> ShapeSpec {
    ShapeSpec {
        kind,
        center: (cy, cx),
        size,
        fill_color: [1.0, 0.0, 0.0],
    }
}

/// Lattice points of a disk counted row by row from the chord length.
fn disk_oracle(cy: f64, cx: f64, r: f64, h: usize, w: usize) -> usize {
    (0..h)
        .map(|y| {
            let dy = y as f64 + 0.5 - cy;
            if dy.abs() > r {
                return 0;
            }
            let half = (r * r - dy * dy).sqrt();
            (0..w).filter(|&x| (x as f64 + 0.5 - cx).abs() <= half).count()
        })
        .sum()
}

#[test]
fn square_population_is_exact() {
    let m = rasterize_shape(&spec(ShapeKind::Square, 32.0, 32.0, 10.0), 64, 64).unwrap();
    assert_eq!(m.count(), 400);
}

#[test]
fn circle_population_matches_area() {
    let m = rasterize_shape(&spec(ShapeKind::Circle, 32.0, 32.0, 16.0), 64, 64).unwrap();
    assert_eq!(m.count(), disk_oracle(32.0, 32.0, 16.0, 64, 64));
    let area = std::f64::consts::PI * 256.0;
    assert!((m.count() as f64 - area).abs() / area < 0.03);
}

#[test]
fn triangle_fills_half_its_box() {
    for (cy, cx, s) in [(32.0, 32.0, 16.0), (30.3, 41.7, 12.2), (64.0, 64.0, 30.0)] {
        let tri = rasterize_shape(&spec(ShapeKind::Triangle, cy, cx, s), 128, 128).unwrap();
        let boxed = rasterize_shape(&spec(ShapeKind::Square, cy, cx, s), 128, 128).unwrap();
        let ratio = tri.count() as f64 / boxed.count() as f64;
        assert!((ratio - 0.5).abs() < 0.05 * 0.5, "ratio {ratio}");
        // Every triangle pixel lies in the box.
        assert!(tri.as_slice().iter().zip(boxed.as_slice()).all(|(&t, &b)| t <= b));
    }
}

#[test]
fn placement_is_checked() {
    assert!(matches!(
        rasterize_shape(&spec(ShapeKind::Circle, 10.0, 32.0, 9.0), 64, 64),
        Err(Error::Placement(_))
    ));
    assert!(rasterize_shape(&spec(ShapeKind::Circle, 11.0, 32.0, 9.0), 64, 64).is_ok());
}

#[test]
fn scenarios_are_the_six_ordered_pairs() {
    let names: Vec<String> = Scenario::all().iter().map(|s| s.to_string()).collect();
    assert_eq!(
        names,
        [
            "circle2square",
            "circle2triangle",
            "square2circle",
            "square2triangle",
            "triangle2circle",
            "triangle2square"
        ]
    );
    assert_eq!("triangle2square".parse::<Scenario>().unwrap().target(), ShapeKind::Square);
    let err = "circle2circle".parse::<Scenario>().unwrap_err().to_string();
    assert!(names.iter().all(|n| err.contains(n.as_str())));
    assert!(Scenario::new(ShapeKind::Square, ShapeKind::Square).is_err());
}

#[test]
fn backgrounds_are_deterministic() {
    for bg in [BackgroundSpec::UniformNoise, BackgroundSpec::SmoothNoise] {
        let a = synth_background::<f32>(&bg, 64, 64, 5).unwrap();
        let b = synth_background::<f32>(&bg, 64, 64, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_background::<f32>(&bg, 64, 64, 6).unwrap());
    }
    let u = synth_background::<f64>(&BackgroundSpec::UniformNoise, 64, 64, 1).unwrap();
    let mean = u.pixels().iter().sum::<f64>() / u.pixels().len() as f64;
    assert!((0.45..=0.55).contains(&mean));
}

#[test]
fn file_backgrounds() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.png");
    let img = RawImage::<f32>::from_fn(20, 30, |y, x, c| ((y + x + c) % 7) as f32 / 7.0).unwrap();
    crate::io::write_rgb_png(&small, &img).unwrap();
    let spec = BackgroundSpec::ImageFile { path: small.clone() };
    let crop = synth_background::<f32>(&spec, 16, 16, 3).unwrap();
    assert_eq!(crop.height(), 16);
    let err = synth_background::<f32>(&spec, 32, 32, 3).unwrap_err();
    assert!(matches!(err, Error::BackgroundTooSmall { width: 30, height: 20, .. }));
    assert!(err.to_string().contains("resize"));
    let missing = BackgroundSpec::ImageFile {
        path: dir.path().join("nope.png"),
    };
    assert!(matches!(synth_background::<f32>(&missing, 16, 16, 0), Err(Error::MissingAsset(_))));
}

#[test]
fn samples_agree_with_their_masks() {
    let opts = SampleOptions::default();
    for seed in 0..40 {
        for kind in ShapeKind::ALL {
            let s = generate_sample::<f32>(kind, &opts, 64, 64, seed).unwrap();
            let mask = rasterize_shape(&s.spec, 64, 64).unwrap();
            let labels: Vec<u16> = mask.as_slice().iter().map(|&m| m as u16).collect();
            assert_eq!(s.classes.labels(), labels.as_slice());
            assert!(s.spec.size >= 0.15 * 64.0 && s.spec.size <= 0.3 * 64.0);
            let bg = synth_background::<f32>(&opts.background, 64, 64, derive_seed(&[seed, 1])).unwrap();
            for y in 0..64 {
                for x in 0..64 {
                    let border = y < 2 || x < 2 || y >= 62 || x >= 62;
                    if border {
                        assert!(!mask.get(y, x));
                    }
                    for c in 0..3 {
                        if mask.get(y, x) {
                            assert_eq!(s.image.get(y, x, c), s.spec.fill_color[c] as f32);
                        } else {
                            assert_eq!(s.image.get(y, x, c).to_bits(), bg.get(y, x, c).to_bits());
                        }
                    }
                }
            }
        }
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn datasets_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sc: Scenario = "circle2triangle".parse().unwrap();
    let opts = DatasetOptions::new(10, 32, 7);
    let meta = generate_dataset(sc, &opts, &dir.path().join("a")).unwrap();
    assert_eq!(meta.counts["trainA"], 10);
    assert_eq!(meta.counts["testB"], 2);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| generate_dataset(sc, &opts, &dir.path().join("b")).unwrap());
    let a = tree(&dir.path().join("a"));
    assert_eq!(a, tree(&dir.path().join("b")));
    assert_eq!(a.len(), 2 * (10 + 10 + 2 + 2) + 2);
    assert_eq!(crate::io::list_pngs(&dir.path().join("a/trainB/images")).unwrap().len(), 10);

    let split = crate::io::load_split::<f32>(&dir.path().join("a/trainA"), 2).unwrap();
    let direct = generate_sample::<f32>(ShapeKind::Circle, &opts.sample, 32, 32, sample_seed(7, 0, 3)).unwrap();
    assert_eq!(split[3].labels, direct.classes);
    assert_eq!(DatasetMeta::read(&dir.path().join("a")).unwrap(), meta);
}

#[test]
fn tiny_canvases_are_rejected() {
    assert!(matches!(
        generate_sample::<f32>(ShapeKind::Circle, &SampleOptions::default(), 5, 5, 0),
        Err(Error::Placement(_))
    ));
}
