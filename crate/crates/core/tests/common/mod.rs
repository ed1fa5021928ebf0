#![allow(dead_code)]

use camspec::synthetic::{self, led_illuminants, random_reflectance};
use camspec::*;
use rand_distr::{Distribution, Normal};

pub fn grid() -> SpectralGrid {
    SpectralGrid::visible()
}

/// Neutral patches log-spaced from `darkest` to full reflectance.
pub fn gray_ramp(grid: &SpectralGrid, n: usize, darkest: f64) -> Vec<SpectralCurve64> {
    (0..n).map(|j| synthetic::gray(grid, darkest.powf(1.0 - j as f64 / (n - 1) as f64)).unwrap()).collect()
}

/// A gray ramp under flat light, exposed so the brightest patch reaches full scale at `e = 1`.
pub fn ramp_stack(cam: &CameraModel64, n: usize, exposures: &[f64]) -> ExposureStack64 {
    let grid = cam.grid;
    let light = SpectralCurve::constant(grid, 1.0, CurveKind::Illuminant).unwrap();
    let patches = gray_ramp(&grid, n, 0.008);
    let brightest = cam.raw_tristimulus(&light, patches.last().unwrap()).unwrap().values().into_iter().fold(0.0, f64::max);
    let scaled: Vec<f64> = exposures.iter().map(|e| e / brightest).collect();
    render_calibration_input(cam, vec![light], patches, &scaled).unwrap().stacks.remove(0)
}

/// Linear measurement rows from `leds` narrowband primaries times `per_led` random patches.
pub fn led_rows(omega: &SensitivityMatrix64, leds: usize, per_led: usize, noise: f64, seed: u64) -> MeasurementSet64 {
    let grid = *omega.grid();
    let mut rng = synthetic::rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut radiance = Vec::new();
    let mut intensities = Vec::new();
    for l in led_illuminants::<f64>(&grid, leds, 15.0).unwrap() {
        for _ in 0..per_led {
            let r = random_reflectance::<f64>(&grid, &mut rng).unwrap();
            let p = spectral_product(&l, &r).unwrap();
            let s = integrate_sensitivity(&p, omega).unwrap().values();
            intensities.push(s.map(|v| v * (1.0 + noise * normal.sample(&mut rng))));
            radiance.push(p.into_values());
        }
    }
    let n = radiance.len();
    MeasurementSet::new(grid, radiance, intensities, vec![true; n]).unwrap()
}

pub fn database() -> SensitivityDatabase64 {
    synthetic::synthetic_database(&grid(), 24, 7).unwrap()
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn peak(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}
