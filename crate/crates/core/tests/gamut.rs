use camspec::synthetic::{self, knee_expansion};
use camspec::*;
use rand::RngExt;

fn rgb(r: f64, g: f64, b: f64) -> RawTristimulus<f64> {
    RawTristimulus::new(r, g, b).unwrap()
}

fn random_points(n: usize, extent: f64, seed: u64) -> Vec<RawTristimulus<f64>> {
    let mut rng = synthetic::rng(seed);
    (0..n).map(|_| rgb(rng.random_range(0.0..extent), rng.random_range(0.0..extent), rng.random_range(0.0..extent))).collect()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn reference_chromaticities() {
    let white = rgb_to_xy(&rgb(1.0, 1.0, 1.0)).unwrap();
    assert!((white.x - 0.3127).abs() < 5e-4 && (white.y - 0.3290).abs() < 5e-4, "{white:?}");
    let red = rgb_to_xy(&rgb(1.0, 0.0, 0.0)).unwrap();
    assert!((red.x - 0.64).abs() < 5e-4 && (red.y - 0.33).abs() < 5e-4, "{red:?}");
    let green = ChromaticityPoint::<f64>::srgb_green();
    assert!((green.x - 0.30).abs() < 5e-4 && (green.y - 0.60).abs() < 5e-4);
    let blue = ChromaticityPoint::<f64>::srgb_blue();
    assert!((blue.x - 0.15).abs() < 5e-4 && (blue.y - 0.06).abs() < 5e-4);
}

#[test]
fn black_has_no_chromaticity() {
    assert!(matches!(rgb_to_xy(&rgb(0.0, 0.0, 0.0)), Err(Error::UndefinedChromaticity { .. })));
    let err = partition_gamut(&[rgb(0.2, 0.2, 0.2), rgb(0.0, 0.0, 0.0)], 0.6).unwrap_err();
    assert!(matches!(err, Error::UndefinedChromaticity { index: Some(1) }), "{err}");
}

#[test]
fn partition_examples() {
    let points = [rgb(0.5, 0.5, 0.5), rgb(1.0, 0.0, 0.0), rgb(0.6, 0.5, 0.5), rgb(0.0, 0.0, 0.3), rgb(0.1, 0.9, 0.1)];
    let p = partition_gamut(&points, 0.6).unwrap();
    assert_eq!(p.inner_indices, vec![0, 2]);
    assert_eq!(p.outer_indices, vec![1, 3, 4]);
    assert!(p.is_inner(0) && !p.is_inner(1));
    // neutral colors are inner for any shrink factor
    let tiny = partition_gamut(&points, 1e-3).unwrap();
    assert_eq!(tiny.inner_indices, vec![0]);
}

#[test]
fn alpha_outside_unit_interval_is_rejected() {
    for alpha in [0.0, -0.5, 1.5, f64::NAN] {
        assert_eq!(partition_gamut(&[rgb(1.0, 1.0, 1.0)], alpha).unwrap_err().rule(), Some("alpha_in_unit_interval"));
    }
}

#[test]
fn translation_is_absorbed_by_the_affine_part() {
    let pts = random_points(80, 1.0, 1);
    let t = [0.1, -0.05, 0.2];
    let targets: Vec<[f64; 3]> = pts.iter().map(|s| std::array::from_fn(|i| s.values()[i] + t[i])).collect();
    let map = fit_gamut_map(&pts, &targets, &RbfConfig::default()).unwrap();
    for (i, row) in map.affine.iter().enumerate() {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((row[j] - want).abs() < 1e-10);
        }
        assert!((row[3] - t[i]).abs() < 1e-10);
    }
    assert!(map.weights.iter().flatten().all(|w| w.abs() < 1e-8));
}

#[test]
fn unregularized_fit_reproduces_centers() {
    let pts = random_points(60, 1.0, 2);
    let targets: Vec<[f64; 3]> = pts.iter().map(|s| knee_expansion(s.values(), 0.4, 0.5)).collect();
    let map = fit_gamut_map(&pts, &targets, &RbfConfig { max_centers: 60, ridge: 0.0, kernel_width: None }).unwrap();
    assert_eq!(map.centers.len(), 60);
    for (s, t) in pts.iter().zip(&targets) {
        assert!(dist(map.apply(s), *t) < 1e-8);
    }
    assert!(map.training_max < 1e-8);
}

#[test]
fn single_center_map_is_least_squares_affine_plus_one_bump() {
    let pts = random_points(40, 1.0, 3);
    let targets: Vec<[f64; 3]> = pts.iter().map(|s| knee_expansion(s.values(), 0.5, 0.3)).collect();
    let map = fit_gamut_map(&pts, &targets, &RbfConfig { max_centers: 1, ridge: 0.0, kernel_width: Some(0.5) }).unwrap();
    assert_eq!(map.centers.len(), 1);

    // oracle: normal equations of [S 1] X = E, then the single weight by scalar least squares
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [[0.0f64; 3]; 4];
    for (s, t) in pts.iter().zip(&targets) {
        let row = [s.r(), s.g(), s.b(), 1.0];
        for a in 0..4 {
            for b in 0..4 {
                ata[a][b] += row[a] * row[b];
            }
            for o in 0..3 {
                atb[a][o] += row[a] * t[o];
            }
        }
    }
    let m = nalgebra::Matrix4::from_fn(|a, b| ata[a][b]);
    let inv = m.try_inverse().unwrap();
    for o in 0..3 {
        let x = inv * nalgebra::Vector4::from_fn(|a, _| atb[a][o]);
        for j in 0..4 {
            assert!((map.affine[o][j] - x[j]).abs() < 1e-9, "row {o} col {j}");
        }
        let c = map.centers[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for (s, t) in pts.iter().zip(&targets) {
            let v = s.values();
            let phi = (-dist(v, c).powi(2) / (2.0 * 0.25)).exp();
            let resid = t[o] - (x[0] * v[0] + x[1] * v[1] + x[2] * v[2] + x[3]);
            num += phi * resid;
            den += phi * phi;
        }
        assert!((map.weights[0][o] - num / den).abs() < 1e-9);
    }
}

#[test]
fn affine_only_map_is_affine() {
    let a = [[1.1, 0.1, 0.0, 0.01], [0.0, 0.9, 0.05, 0.0], [0.2, 0.0, 1.0, -0.02]];
    let map = RbfGamutMap::affine_only(a);
    map.validate().unwrap();
    let s = rgb(0.3, 0.6, 0.2);
    let out = map.apply(&s);
    for i in 0..3 {
        let want = a[i][0] * 0.3 + a[i][1] * 0.6 + a[i][2] * 0.2 + a[i][3];
        assert!((out[i] - want).abs() < 1e-15);
    }
}

#[test]
fn lipschitz_bound_holds_on_random_pairs() {
    let map = synthetic::knee_gamut_map::<f64>(0.3, 1.0, 1.2).unwrap();
    let bound = map.lipschitz_bound();
    let pts = random_points(400, 1.5, 4);
    let mut worst: f64 = 0.0;
    for pair in pts.chunks(2) {
        let d = dist(pair[0].values(), pair[1].values());
        worst = worst.max(dist(map.apply(&pair[0]), map.apply(&pair[1])) / d);
    }
    // and along tiny steps, where the local slope is approached
    for s in &pts {
        let v = s.values();
        let t = rgb(v[0] + 1e-6, v[1], v[2]);
        worst = worst.max(dist(map.apply(s), map.apply(&t)) / 1e-6);
    }
    assert!(worst <= bound, "{worst} > {bound}");
}

#[test]
fn planar_samples_are_degenerate() {
    let pts: Vec<_> = (0..20).map(|i| rgb(i as f64 * 0.05, 0.3, 0.7 - i as f64 * 0.01)).collect();
    let targets: Vec<[f64; 3]> = pts.iter().map(|s| s.values()).collect();
    assert!(matches!(fit_gamut_map(&pts, &targets, &RbfConfig::default()), Err(Error::DegenerateGeometry(_))));
}

#[test]
fn fit_preconditions() {
    let pts = random_points(10, 1.0, 5);
    let targets: Vec<[f64; 3]> = pts.iter().map(|s| s.values()).collect();
    assert_eq!(fit_gamut_map(&pts[..3], &targets[..3], &RbfConfig::default()).unwrap_err().rule(), Some("at_least_four_samples"));
    assert_eq!(fit_gamut_map(&pts, &targets[..9], &RbfConfig::default()).unwrap_err().rule(), Some("equal_length_inputs"));
    let cfg = RbfConfig { max_centers: 0, ..RbfConfig::default() };
    assert_eq!(fit_gamut_map(&pts, &targets, &cfg).unwrap_err().rule(), Some("max_centers_positive"));
    let mut bad = targets.clone();
    bad[4][1] = f64::NAN;
    assert_eq!(fit_gamut_map(&pts, &bad, &RbfConfig::default()).unwrap_err().rule(), Some("finite_targets"));
}
