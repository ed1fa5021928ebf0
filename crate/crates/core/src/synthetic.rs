//! Synthetic cameras, spectra and sensitivity databases used as ground truth.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forward::{CameraModel, ResponseCurve, SensitivityMatrix, CHANNELS};
use crate::gamut::{fit_gamut_map, GamutMap, RawTristimulus, RbfConfig, RbfGamutMap};
use crate::scalar::Real;
use crate::sensitivity::{DatabaseEntry, SensitivityDatabase};
use crate::spectral::{CurveKind, SpectralCurve, SpectralGrid};

/// Gaussian atom centers per channel (nm); every synthetic sensitivity is a nonnegative
/// combination of these, so any database built here has rank at most six per channel.
pub const ATOM_CENTERS_NM: [[f64; 6]; CHANNELS] = [
    [560.0, 580.0, 600.0, 620.0, 640.0, 660.0],
    [480.0, 500.0, 520.0, 540.0, 560.0, 580.0],
    [410.0, 430.0, 450.0, 470.0, 490.0, 510.0],
];
pub const ATOM_WIDTH_NM: f64 = 22.0;

pub fn gaussian(grid: &SpectralGrid, center_nm: f64, width_nm: f64, peak: f64) -> Vec<f64> {
    grid.wavelengths()
        .map(|w| peak * (-0.5 * ((w - center_nm) / width_nm).powi(2)).exp())
        .collect()
}

fn to_t<T: Real>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::lit).collect()
}

/// Channel curve `sum_a weights[a] * atom_a` on `grid`.
pub fn atom_combination(grid: &SpectralGrid, channel: usize, weights: &[f64; 6]) -> Vec<f64> {
    let mut out = vec![0.0; grid.count()];
    for (c, &w) in ATOM_CENTERS_NM[channel].iter().zip(weights) {
        for (o, g) in out.iter_mut().zip(gaussian(grid, *c, ATOM_WIDTH_NM, 1.0)) {
            *o += w * g;
        }
    }
    out
}

fn random_sensitivity(grid: &SpectralGrid, rng: &mut ChaCha8Rng) -> [Vec<f64>; CHANNELS] {
    std::array::from_fn(|k| {
        let weights: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        atom_combination(grid, k, &weights)
    })
}

/// Parametric stand-in for a database of measured camera sensitivities.
pub fn synthetic_database<T: Real>(grid: &SpectralGrid, entries: usize, seed: u64) -> Result<SensitivityDatabase<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..entries)
        .map(|i| {
            let ch = random_sensitivity(grid, &mut rng);
            Ok(DatabaseEntry {
                name: format!("synthetic-{i:03}"),
                omega: SensitivityMatrix::new(*grid, ch.map(to_t))?,
            })
        })
        .collect::<Result<_>>()?;
    SensitivityDatabase::new(entries)
}

/// Random sensitivity inside the span of [`synthetic_database`], each channel scaled to unit sum.
pub fn synthetic_sensitivity<T: Real>(grid: &SpectralGrid, seed: u64) -> Result<SensitivityMatrix<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e45_1717);
    let channels = random_sensitivity(grid, &mut rng).map(|mut ch| {
        let sum: f64 = ch.iter().sum();
        ch.iter_mut().for_each(|v| *v /= sum);
        to_t(ch)
    });
    SensitivityMatrix::new(*grid, channels)
}

/// Single Gaussian bump per channel (red 600 nm, green 540 nm, blue 450 nm), unit sum.
pub fn gaussian_sensitivity<T: Real>(grid: &SpectralGrid) -> Result<SensitivityMatrix<T>> {
    let params = [(600.0, 35.0), (540.0, 35.0), (450.0, 30.0)];
    let channels = params.map(|(c, w)| {
        let mut ch = gaussian(grid, c, w, 1.0);
        let sum: f64 = ch.iter().sum();
        ch.iter_mut().for_each(|v| *v /= sum);
        to_t(ch)
    });
    SensitivityMatrix::new(*grid, channels)
}

/// Chroma-dependent saturation boost `E = Y + C (1 + beta |C|)`, `Y` the channel mean and
/// `C = S - Y`: identity on the neutral axis, growing towards the gamut boundary.
pub fn saturation_boost(s: [f64; 3], beta: f64) -> [f64; 3] {
    let y = (s[0] + s[1] + s[2]) / 3.0;
    let c = s.map(|v| v - y);
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    c.map(|ci| y + ci * (1.0 + beta * norm))
}

/// Chroma expansion past a knee: with `r = |C| / Y`, colors with `r <= knee` pass through
/// unchanged and beyond it `C` is scaled by a gain rising smoothly from 1 towards `1 + beta`.
/// Homogeneous of degree one, so it commutes with exposure scaling.
pub fn knee_expansion(s: [f64; 3], beta: f64, knee: f64) -> [f64; 3] {
    let y = (s[0] + s[1] + s[2]) / 3.0;
    if y <= 0.0 {
        return s;
    }
    let c = s.map(|v| v - y);
    let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() / y;
    let excess = (r - knee).max(0.0);
    let e2 = excess * excess;
    c.map(|ci| y + ci * (1.0 + beta * e2 / (e2 + 0.1)))
}

/// RBF gamut map fitted to [`saturation_boost`] on a regular grid over `[0, extent]^3`.
pub fn boost_gamut_map<T: Real>(beta: f64, extent: f64) -> Result<RbfGamutMap<T>> {
    warp_gamut_map(|s| saturation_boost(s, beta), extent, 6)
}

/// RBF gamut map fitted to [`knee_expansion`] on a regular grid over `[0, extent]^3`.
pub fn knee_gamut_map<T: Real>(beta: f64, knee: f64, extent: f64) -> Result<RbfGamutMap<T>> {
    warp_gamut_map(|s| knee_expansion(s, beta, knee), extent, 8)
}

/// Interpolating RBF through `warp` sampled on an `n^3` grid over `[0, extent]^3`.
pub fn warp_gamut_map<T: Real>(warp: impl Fn([f64; 3]) -> [f64; 3], extent: f64, n: usize) -> Result<RbfGamutMap<T>> {
    let mut samples = Vec::with_capacity(n * n * n);
    let mut targets = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let s = [a, b, c].map(|i| extent * i as f64 / (n - 1) as f64);
                samples.push(RawTristimulus::new(T::lit(s[0]), T::lit(s[1]), T::lit(s[2]))?);
                targets.push(warp(s).map(T::lit));
            }
        }
    }
    fit_gamut_map(&samples, &targets, &RbfConfig { max_centers: n * n * n, ridge: 1e-10, kernel_width: None })
}

/// 8-bit camera with a gamma-2.2 response, in-span sensitivity and the given gamut map.
pub fn synthetic_camera<T: Real>(grid: &SpectralGrid, gamut: GamutMap<T>, seed: u64) -> Result<CameraModel<T>> {
    CameraModel::new(synthetic_sensitivity(grid, seed)?, ResponseCurve::gamma(8, 2.2)?, gamut)
}

/// Sum of 2-4 positive Gaussian bumps.
pub fn random_illuminant<T: Real>(grid: &SpectralGrid, rng: &mut ChaCha8Rng) -> Result<SpectralCurve<T>> {
    let bumps = rng.random_range(2..=4);
    let mut v = vec![0.0; grid.count()];
    for _ in 0..bumps {
        let center = rng.random_range(grid.start_nm()..=grid.end_nm());
        let width = rng.random_range(20.0..80.0);
        let peak = rng.random_range(0.4..1.0);
        for (o, g) in v.iter_mut().zip(gaussian(grid, center, width, peak)) {
            *o += g;
        }
    }
    SpectralCurve::new(*grid, to_t(v), CurveKind::Illuminant)
}

/// `count` narrowband unit-peak Gaussian primaries with centers evenly spaced over the grid,
/// the spectral layout of a tunable LED luminaire.
pub fn led_illuminants<T: Real>(grid: &SpectralGrid, count: usize, width_nm: f64) -> Result<Vec<SpectralCurve<T>>> {
    let span = grid.end_nm() - grid.start_nm();
    (0..count)
        .map(|i| {
            let center = grid.start_nm() + (i as f64 + 0.5) / count as f64 * span;
            SpectralCurve::new(*grid, to_t(gaussian(grid, center, width_nm, 1.0)), CurveKind::Illuminant)
        })
        .collect()
}

/// Smooth reflectance: uniform knots every ~40 nm, 3-tap smoothed, linearly interpolated and
/// scaled by a per-patch albedo; stays within `[0, 1]`.
pub fn random_reflectance<T: Real>(grid: &SpectralGrid, rng: &mut ChaCha8Rng) -> Result<SpectralCurve<T>> {
    let span = grid.end_nm() - grid.start_nm();
    let n_knots = ((span / 40.0).round() as usize).max(1) + 1;
    let raw: Vec<f64> = (0..n_knots).map(|_| rng.random::<f64>()).collect();
    let knots: Vec<f64> = (0..n_knots)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n_knots - 1);
            (raw[lo] + 2.0 * raw[i] + raw[hi]) / 4.0
        })
        .collect();
    let albedo = rng.random_range(0.05..1.0);
    let values = grid
        .wavelengths()
        .map(|w| {
            let pos = (w - grid.start_nm()) / span * (n_knots - 1) as f64;
            let i = (pos.floor() as usize).min(n_knots - 2);
            let t = pos - i as f64;
            (albedo * (knots[i] * (1.0 - t) + knots[i + 1] * t)).clamp(0.0, 1.0)
        })
        .collect();
    SpectralCurve::new(*grid, to_t(values), CurveKind::Reflectance)
}

/// Flat (spectrally neutral) reflectance.
pub fn gray<T: Real>(grid: &SpectralGrid, level: f64) -> Result<SpectralCurve<T>> {
    SpectralCurve::constant(*grid, T::lit(level), CurveKind::Reflectance)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
