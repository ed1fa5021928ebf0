//! Discrete wavelength grids and elementwise spectral algebra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SensitivityMatrix;
use crate::gamut::RawTristimulus;
use crate::scalar::Real;

const GRID_TOLERANCE_NM: f64 = 1e-9;

/// Uniform wavelength sampling `start_nm + i * step_nm`, `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    start_nm: f64,
    step_nm: f64,
    count: usize,
}

impl SpectralGrid {
    pub fn new(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if !start_nm.is_finite() || !step_nm.is_finite() || step_nm <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "step_nm must be positive and finite (start {start_nm}, step {step_nm})"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("count must be at least 2, got {count}")));
        }
        Ok(SpectralGrid { start_nm, step_nm, count })
    }

    /// 400-720 nm in 10 nm steps (33 samples).
    pub fn visible() -> Self {
        SpectralGrid { start_nm: 400.0, step_nm: 10.0, count: 33 }
    }

    pub fn start_nm(&self) -> f64 {
        self.start_nm
    }

    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.count - 1)
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.wavelength(i))
    }

    /// Grids are compatible when they agree sample for sample.
    pub fn same_as(&self, other: &SpectralGrid) -> bool {
        self.count == other.count
            && (self.start_nm - other.start_nm).abs() <= GRID_TOLERANCE_NM
            && (self.step_nm - other.step_nm).abs() <= GRID_TOLERANCE_NM
    }

    pub(crate) fn ensure_same(&self, other: &SpectralGrid, context: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                context: format!(
                    "{context}: {}+{}x{} vs {}+{}x{}",
                    self.start_nm, self.step_nm, self.count, other.start_nm, other.step_nm, other.count
                ),
            })
        }
    }

    /// Builds a grid from explicit wavelengths, which must be strictly increasing and uniform.
    pub fn from_wavelengths(wavelengths: &[f64]) -> Result<Self> {
        if wavelengths.len() < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 wavelengths, got {}", wavelengths.len())));
        }
        let step = wavelengths[1] - wavelengths[0];
        for (i, pair) in wavelengths.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidGrid(format!(
                    "wavelengths must be strictly increasing ({} then {} at row {})",
                    pair[0],
                    pair[1],
                    i + 1
                )));
            }
            if ((pair[1] - pair[0]) - step).abs() > 1e-6 * step.abs().max(1.0) {
                return Err(Error::InvalidGrid(format!("wavelength spacing is not uniform at row {}", i + 1)));
            }
        }
        SpectralGrid::new(wavelengths[0], step, wavelengths.len())
    }
}

impl Default for SpectralGrid {
    fn default() -> Self {
        SpectralGrid::visible()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Illuminant,
    Reflectance,
    Radiance,
    Sensitivity,
}

/// Nonnegative function of wavelength sampled on a [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralCurve<T: Real> {
    grid: SpectralGrid,
    values: Vec<T>,
    kind: CurveKind,
}

impl<T: Real> SpectralCurve<T> {
    pub fn new(grid: SpectralGrid, values: Vec<T>, kind: CurveKind) -> Result<Self> {
        let curve = SpectralCurve { grid, values, kind };
        curve.validate()?;
        Ok(curve)
    }

    pub fn constant(grid: SpectralGrid, value: T, kind: CurveKind) -> Result<Self> {
        SpectralCurve::new(grid, vec![value; grid.count()], kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.count() {
            return Err(Error::invariant(
                "values_match_grid",
                format!("{} values for a {}-sample grid", self.values.len(), self.grid.count()),
            ));
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::invariant(
                    "nonnegative_values",
                    format!("{:?} value {v} at {} nm", self.kind, self.grid.wavelength(i)),
                ));
            }
            if self.kind == CurveKind::Reflectance && v > T::one() {
                return Err(Error::invariant(
                    "reflectance_at_most_one",
                    format!("reflectance {v} at {} nm", self.grid.wavelength(i)),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Linear interpolation onto `target`; zero outside the source support.
    pub fn resample(&self, target: &SpectralGrid) -> SpectralCurve<T> {
        if self.grid.same_as(target) {
            return SpectralCurve { grid: *target, ..self.clone() };
        }
        let src = &self.grid;
        let last = src.count() - 1;
        let values = target
            .wavelengths()
            .map(|w| {
                let pos = (w - src.start_nm()) / src.step_nm();
                let tol = 1e-9;
                if pos < -tol || pos > last as f64 + tol {
                    return T::zero();
                }
                let pos = pos.clamp(0.0, last as f64);
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if frac <= tol || lo == last {
                    self.values[lo]
                } else if 1.0 - frac <= tol {
                    self.values[lo + 1]
                } else {
                    let t = T::lit(frac);
                    self.values[lo] * (T::one() - t) + self.values[lo + 1] * t
                }
            })
            .collect();
        SpectralCurve { grid: *target, values, kind: self.kind }
    }
}

/// Scene radiance `p[i] = l[i] * r[i]` of an illuminated surface.
pub fn spectral_product<T: Real>(
    illuminant: &SpectralCurve<T>,
    reflectance: &SpectralCurve<T>,
) -> Result<SpectralCurve<T>> {
    illuminant.grid.ensure_same(&reflectance.grid, "spectral_product")?;
    let values = illuminant
        .values
        .iter()
        .zip(&reflectance.values)
        .map(|(&l, &r)| l * r)
        .collect();
    Ok(SpectralCurve { grid: illuminant.grid, values, kind: CurveKind::Radiance })
}

/// Raw channel responses `S_k = sum_i p[i] * omega_k[i]` (plain dot product, no wavelength step).
pub fn integrate_sensitivity<T: Real>(
    radiance: &SpectralCurve<T>,
    omega: &SensitivityMatrix<T>,
) -> Result<RawTristimulus<T>> {
    radiance.grid.ensure_same(omega.grid(), "integrate_sensitivity")?;
    let s = std::array::from_fn(|k| dot(&radiance.values, omega.channel(k)));
    Ok(RawTristimulus::from_array_unchecked(s))
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
