use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::datamodel::{ClassMap, PixelMask, RawImage};
use crate::Error;

fn map(h: usize, w: usize, m: usize, labels: &[u16]) -> ClassMap {
    ClassMap::new(h, w, m, labels.to_vec()).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, m: usize) -> ClassMap {
    let labels: Vec<u16> = (0..h * w).map(|_| rng.random_range(0..m as u16)).collect();
    map(h, w, m, &labels)
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RawImage<f64> {
    RawImage::from_fn(h, w, |_, _, _| rng.random::<f64>()).unwrap()
}

fn constant(h: usize, w: usize, v: f64) -> RawImage<f64> {
    RawImage::from_fn(h, w, |_, _, _| v).unwrap()
}

#[test]
fn two_by_two_segmentation_example() {
    let pred = map(2, 2, 2, &[1, 1, 0, 0]);
    let gt = map(2, 2, 2, &[1, 0, 1, 0]);
    let r = segmentation_report(&[pred], &[gt], 2, &[]).unwrap();
    assert_eq!(r.iou, vec![Some(1.0 / 3.0), Some(1.0 / 3.0)]);
    assert_eq!(r.miou, 1.0 / 3.0);
    assert_eq!(r.pixel_accuracy, 0.5);

    let perfect = map(2, 2, 2, &[1, 0, 0, 1]);
    let r = segmentation_report(std::slice::from_ref(&perfect), std::slice::from_ref(&perfect), 2, &[]).unwrap();
    assert_eq!((r.miou, r.pixel_accuracy), (1.0, 1.0));
}

#[test]
fn segmentation_matches_pixel_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let m = rng.random_range(2..6);
        let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
        let n = rng.random_range(1..4);
        let preds: Vec<ClassMap> = (0..n).map(|_| random_map(&mut rng, h, w, m)).collect();
        let gts: Vec<ClassMap> = (0..n).map(|_| random_map(&mut rng, h, w, m)).collect();
        let exclude: Vec<u16> = if rng.random_bool(0.3) { vec![0] } else { vec![] };
        let r = segmentation_report(&preds, &gts, m, &exclude);

        let (mut tp, mut fp, mut fnn) = (vec![0usize; m], vec![0usize; m], vec![0usize; m]);
        let (mut correct, mut total) = (0, 0);
        for (p, g) in preds.iter().zip(&gts) {
            for y in 0..h {
                for x in 0..w {
                    let (a, b) = (p.get(y, x) as usize, g.get(y, x) as usize);
                    total += 1;
                    if a == b {
                        tp[a] += 1;
                        correct += 1;
                    } else {
                        fp[a] += 1;
                        fnn[b] += 1;
                    }
                }
            }
        }
        let mut scored = vec![];
        for c in 0..m {
            let union = tp[c] + fp[c] + fnn[c];
            let want = (union > 0).then(|| tp[c] as f64 / union as f64);
            if let Ok(r) = &r {
                assert_eq!(r.iou[c], want);
            }
            if let Some(v) = want {
                if !exclude.contains(&(c as u16)) {
                    scored.push(v);
                }
            }
        }
        if scored.is_empty() {
            assert!(r.is_err());
            continue;
        }
        let r = r.unwrap();
        assert_eq!(r.miou, scored.iter().sum::<f64>() / scored.len() as f64);
        assert_eq!(r.pixel_accuracy, correct as f64 / total as f64);
        assert!(r.iou.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn absent_classes_leave_the_mean() {
    let pred = map(1, 4, 4, &[0, 1, 1, 0]);
    let gt = map(1, 4, 4, &[0, 1, 0, 0]);
    let r = segmentation_report(std::slice::from_ref(&pred), std::slice::from_ref(&gt), 4, &[]).unwrap();
    assert_eq!(r.iou[2], None);
    assert_eq!(r.iou[3], None);
    assert_eq!(r.miou, (2.0 / 3.0 + 0.5) / 2.0);
    let r = segmentation_report(&[pred], &[gt], 4, &[0]).unwrap();
    assert_eq!(r.miou, 0.5);
}

#[test]
fn confusion_matrices_merge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let maps: Vec<(ClassMap, ClassMap)> =
        (0..6).map(|_| (random_map(&mut rng, 5, 4, 3), random_map(&mut rng, 5, 4, 3))).collect();
    let mut whole = ConfusionMatrix::new(3);
    let (mut left, mut right) = (ConfusionMatrix::new(3), ConfusionMatrix::new(3));
    for (i, (g, p)) in maps.iter().enumerate() {
        whole.accumulate(g, p).unwrap();
        if i < 2 { &mut left } else { &mut right }.accumulate(g, p).unwrap();
    }
    left.merge(&right).unwrap();
    assert_eq!(left, whole);
    assert_eq!(whole.total(), 6 * 20);
    assert!(left.merge(&ConfusionMatrix::new(4)).is_err());
}

#[test]
fn segmentation_errors() {
    let a = map(2, 2, 2, &[0; 4]);
    let b = map(2, 3, 2, &[0; 6]);
    assert!(segmentation_report(&[], &[], 2, &[]).is_err());
    assert!(matches!(segmentation_report(std::slice::from_ref(&a), &[b], 2, &[]), Err(Error::Shape(_))));
    assert!(segmentation_report(std::slice::from_ref(&a), &[a.clone(), a.clone()], 2, &[]).is_err());
}

#[test]
fn l1_properties() {
    let (a, b) = (constant(8, 9, 0.2), constant(8, 9, 0.5));
    assert!((l1_distance(&a, &b).unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (x, y, z) = (random_image(&mut rng, 8, 9), random_image(&mut rng, 8, 9), random_image(&mut rng, 8, 9));
        let (xy, yz, xz) = (l1_distance(&x, &y).unwrap(), l1_distance(&y, &z).unwrap(), l1_distance(&x, &z).unwrap());
        assert_eq!(xy, l1_distance(&y, &x).unwrap());
        assert!(xz <= xy + yz + 1e-9);
    }
    assert!(l1_distance(&a, &constant(9, 8, 0.2)).is_err());
}

/// SSIM evaluated window by window with an explicit 2-D Gaussian.
#[allow(clippy::needless_range_loop)]
fn ssim_oracle(a: &RawImage<f64>, b: &RawImage<f64>) -> f64 {
    let (h, w) = (a.height(), a.width());
    let mut k = [[0.0; 11]; 11];
    let mut s = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dy * dy + dx * dx) / 4.5).exp();
            s += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let (mut total, mut n) = (0.0, 0);
    for c in 0..3 {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let g = k[i][j] / s;
                        let (p, q) = (a.get(y0 + i, x0 + j, c), b.get(y0 + i, x0 + j, c));
                        mx += g * p;
                        my += g * q;
                        sxx += g * p * p;
                        syy += g * q * q;
                        sxy += g * p * q;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

#[test]
fn ssim_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_image(&mut rng, 16, 13);
    let y = random_image(&mut rng, 16, 13);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-6);
    let xy = ssim(&x, &y).unwrap();
    assert!((xy - ssim(&y, &x).unwrap()).abs() < 1e-9);
    assert!((xy - ssim_oracle(&x, &y)).abs() < 1e-9);

    let c1: f64 = 1e-4;
    let v = ssim(&constant(12, 12, 0.0), &constant(12, 12, 1.0)).unwrap();
    assert!((v - c1 / (1.0 + c1)).abs() < 1e-9);
    assert!((v - 1.0e-4).abs() < 1e-5);

    assert!(matches!(ssim(&constant(10, 30, 0.0), &constant(10, 30, 0.0)), Err(Error::Shape(_))));
}

fn embedding(rows: &[&[f64]]) -> EmbeddingSet {
    let dim = rows[0].len();
    EmbeddingSet::new("test", dim, rows.concat()).unwrap()
}

#[test]
fn frechet_closed_forms() {
    let a = embedding(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
    let b = embedding(&[&[3.0, 4.0], &[3.0, 4.0]]);
    assert!((frechet_distance(&a, &b).unwrap() - 25.0).abs() < 1e-6);

    // One dimension: (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2.
    let xs = [1.0, 2.0, 4.0, 7.0];
    let ys = [0.5, -1.0, 3.0];
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
        (m, var.sqrt())
    };
    let ((ma, sa), (mb, sb)) = (stats(&xs), stats(&ys));
    let ea = EmbeddingSet::new("t", 1, xs.to_vec()).unwrap();
    let eb = EmbeddingSet::new("t", 1, ys.to_vec()).unwrap();
    let want = (ma - mb).powi(2) + (sa - sb).powi(2);
    assert!((frechet_distance(&ea, &eb).unwrap() - want).abs() < 1e-9);
}

#[test]
fn frechet_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut draw = |n: usize, d: usize, shift: f64| {
        let rows: Vec<f64> = (0..n * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            } * (1.0 + (i % d) as f64 * 0.3) + shift)
            .collect();
        EmbeddingSet::new("g", d, rows).unwrap()
    };
    let a = draw(40, 5, 0.0);
    let b = draw(60, 5, 0.5);
    assert!(frechet_distance(&a, &a).unwrap() <= 1e-6);
    let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
    assert!((ab - ba).abs() < 1e-6);
    assert!(ab > 0.0);

    // Fewer samples than dimensions gives singular covariances.
    let s = draw(3, 6, 0.0);
    assert!(frechet_distance(&s, &s).unwrap() <= 1e-6);
    assert!(frechet_distance(&s, &draw(4, 6, 0.0)).unwrap().is_finite());
}

#[test]
fn frechet_converges_for_matching_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut draw = || {
        let rows: Vec<f64> = (0..10_000 * 8).map(|_| StandardNormal.sample(&mut rng)).collect();
        EmbeddingSet::new("g", 8, rows).unwrap()
    };
    let (a, b) = (draw(), draw());
    assert!(frechet_distance(&a, &b).unwrap() < 0.05);
}

#[test]
fn frechet_errors() {
    let one = embedding(&[&[1.0, 2.0]]);
    let two = embedding(&[&[1.0, 2.0], &[0.0, 1.0]]);
    let three = embedding(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]]);
    assert!(frechet_distance(&one, &two).is_err());
    assert!(matches!(frechet_distance(&two, &three), Err(Error::Shape(_))));
    assert!(EmbeddingSet::new("x", 2, vec![1.0; 3]).is_err());
}

#[test]
fn embedders() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let images: Vec<RawImage<f64>> = (0..5).map(|_| random_image(&mut rng, 20, 24)).collect();
    let e = load_embedder(None).unwrap();
    let a = embed_images(&images, e.as_ref()).unwrap();
    assert_eq!(a, embed_images(&images, e.as_ref()).unwrap());
    assert_eq!((a.len(), a.dim()), (5, FALLBACK_DIM));
    assert!(frechet_distance(&a, &a).unwrap() <= 1e-6);

    // A hand-built asset that averages all pixels through a 1x1 thumbnail.
    let dir = tempfile::tempdir().unwrap();
    let asset = dir.path().join("mean.json");
    std::fs::write(&asset, r#"{"id":"mean","input_side":1,"dim":1,"weights":[1,1,1]}"#).unwrap();
    let mean = load_embedder(Some(asset)).unwrap();
    let f = embed_images(&[constant(8, 10, 0.25)], mean.as_ref()).unwrap();
    assert!((f.row(0)[0] - 0.75).abs() < 1e-12);
    assert_eq!(f.embedder(), "mean");

    assert!(matches!(load_embedder(Some(dir.path().join("none.json"))), Err(Error::MissingAsset(_))));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id":"bad","input_side":2,"dim":1,"weights":[1]}"#).unwrap();
    assert!(matches!(load_embedder(Some(bad)), Err(Error::Config(_))));

    let mut merged = a.clone();
    merged.merge(&a).unwrap();
    assert_eq!(merged.len(), 10);
    assert!(merged.merge(&f).is_err());
}

#[test]
fn masking() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = (random_image(&mut rng, 12, 12), random_image(&mut rng, 12, 12));
    let ones = PixelMask::filled(12, 12, true);
    let (mx, my) = masked_metrics(&x, &y, &ones).unwrap();
    assert_eq!(l1_distance(&mx, &my).unwrap(), l1_distance(&x, &y).unwrap());
    assert_eq!(ssim(&mx, &my).unwrap(), ssim(&x, &y).unwrap());

    let (zx, zy) = masked_metrics(&x, &y, &PixelMask::filled(12, 12, false)).unwrap();
    assert_eq!(l1_distance(&zx, &zy).unwrap(), 0.0);

    let bits: Vec<u8> = (0..144).map(|i| u8::from(i % 3 == 0)).collect();
    let mask = PixelMask::new(12, 12, bits).unwrap();
    let (px, py) = masked_metrics(&x, &y, &mask).unwrap();
    let before = l1_distance(&px, &py).unwrap();
    let bumped = RawImage::from_fn(12, 12, |r, c, ch| if (r, c) == (0, 1) { 0.99 } else { x.get(r, c, ch) }).unwrap();
    let (bx, by) = masked_metrics(&bumped, &y, &mask).unwrap();
    assert_eq!(l1_distance(&bx, &by).unwrap(), before);
    assert!(masked_metrics(&x, &y, &PixelMask::filled(11, 12, true)).is_err());
}

#[test]
fn report_formats() {
    let mut r = MetricReport::default();
    r.add_segmentation(&SegmentationReport {
        iou: vec![Some(0.5), None],
        miou: 0.5,
        pixel_accuracy: 0.75,
    });
    r.push("l1", Some(0.125), Some(0.25));
    r.notes.push("embedder: none".into());
    assert_eq!(
        r.to_csv(),
        "metric,full,masked\niou_0,0.500000,\niou_1,,\nmiou,0.500000,\npixel_accuracy,0.750000,\nl1,0.125000,0.250000\n"
    );
    let text = r.to_text();
    assert!(text.starts_with("metric"));
    assert!(text.contains("# embedder: none"));
    r.validate().unwrap();
    r.push("ssim", Some(1.5), None);
    assert!(r.validate().is_err());
}
