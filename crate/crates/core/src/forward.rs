//! Camera forward model: spectra -> raw tristimulus -> gamut map -> exposure -> response -> codes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamut::{GamutMap, RawTristimulus};
use crate::scalar::Real;
use crate::spectral::{integrate_sensitivity, spectral_product, SpectralCurve, SpectralGrid};

pub const CHANNELS: usize = 3;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["r", "g", "b"];

/// Per-channel spectral sensitivity, one column per camera channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SensitivityMatrix<T: Real> {
    grid: SpectralGrid,
    channels: [Vec<T>; CHANNELS],
}

impl<T: Real> SensitivityMatrix<T> {
    pub fn new(grid: SpectralGrid, channels: [Vec<T>; CHANNELS]) -> Result<Self> {
        let m = SensitivityMatrix { grid, channels };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, ch) in self.channels.iter().enumerate() {
            if ch.len() != self.grid.count() {
                return Err(Error::invariant(
                    "values_match_grid",
                    format!("channel {} has {} values for a {}-sample grid", CHANNEL_NAMES[k], ch.len(), self.grid.count()),
                ));
            }
            if let Some(i) = ch.iter().position(|&v| !v.is_finite() || v < T::zero()) {
                return Err(Error::invariant(
                    "nonnegative_sensitivity",
                    format!("channel {} value {} at {} nm", CHANNEL_NAMES[k], ch[i], self.grid.wavelength(i)),
                ));
            }
            if !ch.iter().any(|&v| v > T::zero()) {
                return Err(Error::invariant(
                    "positive_entry_per_channel",
                    format!("channel {} is identically zero", CHANNEL_NAMES[k]),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn channel(&self, k: usize) -> &[T] {
        &self.channels[k]
    }

    pub fn channels(&self) -> &[Vec<T>; CHANNELS] {
        &self.channels
    }

    pub fn peak(&self) -> T {
        self.channels.iter().flatten().fold(T::zero(), |m, &v| m.max(v))
    }

    /// Copy with channel `k` multiplied by `factor`.
    pub fn scaled_channel(&self, k: usize, factor: T) -> Result<Self> {
        let mut channels = self.channels.clone();
        channels[k].iter_mut().for_each(|v| *v *= factor);
        SensitivityMatrix::new(self.grid, channels)
    }
}

/// Per-channel response stored as `ln g^-1(z)` for every code `z`.
///
/// Code 0 cannot carry `ln 0`, so tables built from a closed-form inverse evaluate it at half a
/// code step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ResponseCurve<T: Real> {
    bit_depth: u32,
    ln_inverse: [Vec<T>; CHANNELS],
}

impl<T: Real> ResponseCurve<T> {
    pub fn new(bit_depth: u32, ln_inverse: [Vec<T>; CHANNELS]) -> Result<Self> {
        let curve = ResponseCurve { bit_depth, ln_inverse };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bit_depth) {
            return Err(Error::invariant("bit_depth_range", format!("bit depth {} outside 1..=16", self.bit_depth)));
        }
        let n = self.levels();
        for (k, table) in self.ln_inverse.iter().enumerate() {
            if table.len() != n {
                return Err(Error::invariant(
                    "table_length",
                    format!("channel {} has {} entries, expected {n}", CHANNEL_NAMES[k], table.len()),
                ));
            }
            if let Some(z) = table.iter().position(|v| !v.is_finite()) {
                return Err(Error::invariant("finite_table", format!("channel {} code {z}", CHANNEL_NAMES[k])));
            }
            if let Some(z) = table.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::invariant(
                    "strictly_increasing_response",
                    format!("channel {} table not increasing at code {}", CHANNEL_NAMES[k], z + 1),
                ));
            }
        }
        Ok(())
    }

    /// Builds the table from a closed-form inverse response `code -> linear exposure`.
    pub fn from_inverse_fn(bit_depth: u32, inverse: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let n = 1usize << bit_depth;
        let table = |k: usize| -> Vec<T> {
            (0..n)
                .map(|z| {
                    let code = if z == 0 { 0.5 } else { z as f64 };
                    T::lit(inverse(k, code).ln())
                })
                .collect()
        };
        ResponseCurve::new(bit_depth, [table(0), table(1), table(2)])
    }

    /// `g^-1(z) = z / z_max`.
    pub fn linear(bit_depth: u32) -> Result<Self> {
        let max = ((1u64 << bit_depth) - 1) as f64;
        Self::from_inverse_fn(bit_depth, |_, z| z / max)
    }

    /// `g^-1(z) = (z / z_max)^gamma`, i.e. an encoding gamma of `1 / gamma`.
    pub fn gamma(bit_depth: u32, gamma: f64) -> Result<Self> {
        let max = ((1u64 << bit_depth) - 1) as f64;
        Self::from_inverse_fn(bit_depth, |_, z| (z / max).powf(gamma))
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn levels(&self) -> usize {
        1usize << self.bit_depth
    }

    pub fn max_code(&self) -> u32 {
        (self.levels() - 1) as u32
    }

    pub fn ln_table(&self, channel: usize) -> &[T] {
        &self.ln_inverse[channel]
    }

    /// Linear exposure `g^-1(code)`.
    pub fn invert(&self, code: u32, channel: usize) -> Result<T> {
        if code > self.max_code() {
            return Err(Error::SaturatedInput { code, channel });
        }
        Ok(self.ln_inverse[channel][code as usize].exp())
    }

    /// Largest code whose table value does not exceed `ln exposure`, clamped to the code range.
    pub fn apply(&self, exposure: T, channel: usize) -> u32 {
        let table = &self.ln_inverse[channel];
        if !(exposure > T::zero()) {
            return 0;
        }
        let ln_e = exposure.ln();
        let slack = T::eps() * T::lit(16.0) * (T::one() + ln_e.abs());
        let above = table.partition_point(|&t| t <= ln_e + slack);
        above.saturating_sub(1) as u32
    }

    /// Continuous code value `g(exposure)`: piecewise linear in the exposure domain between
    /// table entries, extended linearly past both ends.
    pub fn code_of(&self, exposure: T, channel: usize) -> T {
        let table = &self.ln_inverse[channel];
        let n = table.len();
        let at = |z: usize| table[z].exp();
        if exposure.is_nan() {
            return T::zero();
        }
        let (lo, hi) = if exposure <= at(0) {
            (0, 1)
        } else if exposure >= at(n - 1) {
            (n - 2, n - 1)
        } else {
            // exposure is strictly inside (at(0), at(n-1))
            let ln_e = exposure.ln();
            let idx = table.partition_point(|&t| t <= ln_e).clamp(1, n - 1);
            (idx - 1, idx)
        };
        let (e0, e1) = (at(lo), at(hi));
        T::from_usize_lossy(lo) + (exposure - e0) / (e1 - e0)
    }

    /// Round-half-up quantization of a continuous code, clamped to the code range.
    pub fn quantize(&self, code: T) -> u32 {
        quantize_code(code, self.max_code())
    }
}

pub(crate) fn quantize_code<T: Real>(code: T, max_code: u32) -> u32 {
    if code.is_nan() {
        return 0;
    }
    let rounded = (code + T::lit(0.5)).floor();
    if rounded <= T::zero() {
        0
    } else if rounded >= T::lit(max_code as f64) {
        max_code
    } else {
        rounded.to_f64_lossy() as u32
    }
}

/// Exposure time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExposureSetting<T: Real>(T);

impl<T: Real> ExposureSetting<T> {
    pub fn new(seconds: T) -> Result<Self> {
        if seconds.is_finite() && seconds > T::zero() {
            Ok(ExposureSetting(seconds))
        } else {
            Err(Error::invariant("positive_exposure", format!("exposure {seconds} s")))
        }
    }

    pub fn seconds(&self) -> T {
        self.0
    }
}

/// Digital RGB output of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelTriplet(pub [u32; CHANNELS]);

impl PixelTriplet {
    pub fn new(values: [u32; CHANNELS], bit_depth: u32) -> Result<Self> {
        let max = (1u64 << bit_depth) - 1;
        if let Some(k) = values.iter().position(|&v| v as u64 > max) {
            return Err(Error::invariant(
                "code_in_range",
                format!("channel {} value {} exceeds {max}", CHANNEL_NAMES[k], values[k]),
            ));
        }
        Ok(PixelTriplet(values))
    }

    pub fn get(&self, k: usize) -> u32 {
        self.0[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    UnderSaturated,
    Valid,
    OverSaturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SaturationFlags {
    pub channels: [Saturation; CHANNELS],
}

impl SaturationFlags {
    /// Saturation of any channel taints the whole triplet.
    pub fn any_saturated(&self) -> bool {
        self.channels.iter().any(|&s| s != Saturation::Valid)
    }
}

/// Codes strictly below `lo` or strictly above `hi` are saturated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationThresholds {
    pub lo: u32,
    pub hi: u32,
}

impl SaturationThresholds {
    pub fn new(lo: u32, hi: u32, bit_depth: u32) -> Result<Self> {
        let max = (1u64 << bit_depth) - 1;
        if lo >= hi || hi as u64 > max {
            return Err(Error::invariant(
                "threshold_order",
                format!("need 0 <= lo < hi < 2^bits, got lo={lo} hi={hi} bits={bit_depth}"),
            ));
        }
        Ok(SaturationThresholds { lo, hi })
    }

    /// 10 / 230 at 8 bits, scaled proportionally for other depths.
    pub fn default_for(bit_depth: u32) -> Self {
        let max = ((1u64 << bit_depth) - 1) as f64;
        let lo = (10.0 * max / 255.0).round() as u32;
        let hi = (230.0 * max / 255.0).round() as u32;
        SaturationThresholds { lo, hi }
    }

    pub fn classify(&self, pixel: PixelTriplet) -> SaturationFlags {
        classify_saturation(pixel, self.lo, self.hi)
    }
}

pub fn classify_saturation(pixel: PixelTriplet, sat_lo: u32, sat_hi: u32) -> SaturationFlags {
    let channels = pixel.0.map(|v| {
        if v < sat_lo {
            Saturation::UnderSaturated
        } else if v > sat_hi {
            Saturation::OverSaturated
        } else {
            Saturation::Valid
        }
    });
    SaturationFlags { channels }
}

/// Where exposure time enters relative to the gamut map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureStage {
    /// `I = g(h(S) * e)`
    #[default]
    AfterGamut,
    /// `I = g(h(S * e))`
    BeforeGamut,
}

/// Complete camera: sensitivity, gamut map, response and saturation thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CameraModel<T: Real> {
    pub grid: SpectralGrid,
    pub omega: SensitivityMatrix<T>,
    pub response: ResponseCurve<T>,
    pub gamut: GamutMap<T>,
    pub bit_depth: u32,
    pub sat_lo: u32,
    pub sat_hi: u32,
    #[serde(default)]
    pub exposure_stage: ExposureStage,
}

impl<T: Real> CameraModel<T> {
    /// Camera with identity gamut map and default thresholds for the response's bit depth.
    pub fn new(omega: SensitivityMatrix<T>, response: ResponseCurve<T>, gamut: GamutMap<T>) -> Result<Self> {
        let bit_depth = response.bit_depth();
        let t = SaturationThresholds::default_for(bit_depth);
        let cam = CameraModel {
            grid: *omega.grid(),
            omega,
            response,
            gamut,
            bit_depth,
            sat_lo: t.lo,
            sat_hi: t.hi,
            exposure_stage: ExposureStage::AfterGamut,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        self.omega.validate()?;
        self.response.validate()?;
        self.grid.ensure_same(self.omega.grid(), "camera sensitivity grid")?;
        if self.response.bit_depth() != self.bit_depth {
            return Err(Error::invariant(
                "bit_depth_agrees",
                format!("camera says {} bits, response table has {}", self.bit_depth, self.response.bit_depth()),
            ));
        }
        SaturationThresholds::new(self.sat_lo, self.sat_hi, self.bit_depth)?;
        self.gamut.validate()
    }

    pub fn thresholds(&self) -> SaturationThresholds {
        SaturationThresholds { lo: self.sat_lo, hi: self.sat_hi }
    }

    pub fn max_code(&self) -> u32 {
        self.response.max_code()
    }

    pub fn raw_tristimulus(&self, illuminant: &SpectralCurve<T>, reflectance: &SpectralCurve<T>) -> Result<RawTristimulus<T>> {
        let radiance = spectral_product(illuminant, reflectance)?;
        integrate_sensitivity(&radiance, &self.omega)
    }

    /// Pre-quantization code values for a raw tristimulus at exposure `e`.
    pub fn continuous_codes(&self, s: &RawTristimulus<T>, e: ExposureSetting<T>) -> [T; CHANNELS] {
        let linear = self.linear_exposure(s, e);
        std::array::from_fn(|k| self.response.code_of(linear[k], k))
    }

    /// Linear signal entering the response, `E_k * e` (or `h(S e)_k`).
    pub fn linear_exposure(&self, s: &RawTristimulus<T>, e: ExposureSetting<T>) -> [T; CHANNELS] {
        let secs = e.seconds();
        match self.exposure_stage {
            ExposureStage::AfterGamut => self.gamut.apply(s).map(|v| v * secs),
            ExposureStage::BeforeGamut => {
                let scaled = RawTristimulus::from_array_unchecked(s.values().map(|v| v * secs));
                self.gamut.apply(&scaled)
            }
        }
    }

    pub fn render(&self, s: &RawTristimulus<T>, e: ExposureSetting<T>) -> PixelTriplet {
        let codes = self.continuous_codes(s, e);
        PixelTriplet(codes.map(|c| self.response.quantize(c)))
    }
}

/// Digital output of `cam` for a surface `reflectance` under `illuminant` at exposure `e`.
pub fn simulate_pixel<T: Real>(
    cam: &CameraModel<T>,
    illuminant: &SpectralCurve<T>,
    reflectance: &SpectralCurve<T>,
    e: ExposureSetting<T>,
) -> Result<PixelTriplet> {
    let s = cam.raw_tristimulus(illuminant, reflectance)?;
    Ok(cam.render(&s, e))
}

pub fn apply_response<T: Real>(exposure: T, curve: &ResponseCurve<T>, channel: usize) -> u32 {
    curve.apply(exposure, channel)
}

pub fn invert_response<T: Real>(code: u32, curve: &ResponseCurve<T>, channel: usize) -> Result<T> {
    curve.invert(code, channel)
}
