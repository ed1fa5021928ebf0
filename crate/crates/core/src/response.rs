//! Recovery of the per-channel response `g` from an exposure stack.
//!
//! Each channel is solved independently as a linear least-squares problem over the unknowns
//! `ln g^-1(z)` (one per code) and `ln E_j` (one per patch):
//!
//! ```text
//! w(z_ji) * (ln g^-1(z_ji) - ln E_j - ln e_i) = 0           for every unsaturated sample
//! lambda * w(z) * (ln g^-1(z-1) - 2 ln g^-1(z) + ln g^-1(z+1)) = 0   for 0 < z < z_max
//! ln g^-1(z_anchor) = 0
//! ```
//!
//! with the hat weight `w(z) = min(z, z_max - z)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    ExposureSetting, PixelTriplet, ResponseCurve, Saturation, SaturationFlags, SaturationThresholds, CHANNELS,
};
use crate::scalar::Real;

/// Digital values of a set of patches, each captured at every exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExposureStack<T: Real> {
    exposures: Vec<ExposureSetting<T>>,
    patch_ids: Vec<String>,
    /// `samples[patch][exposure]`
    samples: Vec<Vec<PixelTriplet>>,
    bit_depth: u32,
    thresholds: SaturationThresholds,
}

impl<T: Real> ExposureStack<T> {
    pub fn new(
        exposures: Vec<ExposureSetting<T>>,
        patch_ids: Vec<String>,
        samples: Vec<Vec<PixelTriplet>>,
        bit_depth: u32,
        thresholds: SaturationThresholds,
    ) -> Result<Self> {
        let stack = ExposureStack { exposures, patch_ids, samples, bit_depth, thresholds };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exposures.is_empty() {
            return Err(Error::invariant("at_least_one_exposure", "stack has no exposures"));
        }
        if self.patch_ids.len() != self.samples.len() {
            return Err(Error::invariant(
                "patch_ids_match_samples",
                format!("{} ids for {} patches", self.patch_ids.len(), self.samples.len()),
            ));
        }
        let max = (1u64 << self.bit_depth) - 1;
        for (j, row) in self.samples.iter().enumerate() {
            if row.len() != self.exposures.len() {
                return Err(Error::invariant(
                    "every_patch_at_every_exposure",
                    format!("patch {} has {} samples for {} exposures", self.patch_ids[j], row.len(), self.exposures.len()),
                ));
            }
            if let Some(px) = row.iter().find(|px| px.0.iter().any(|&v| v as u64 > max)) {
                return Err(Error::invariant(
                    "code_in_range",
                    format!("patch {} value {:?} exceeds {max}", self.patch_ids[j], px.0),
                ));
            }
        }
        SaturationThresholds::new(self.thresholds.lo, self.thresholds.hi, self.bit_depth)?;
        Ok(())
    }

    pub fn exposures(&self) -> &[ExposureSetting<T>] {
        &self.exposures
    }

    pub fn patch_ids(&self) -> &[String] {
        &self.patch_ids
    }

    pub fn samples(&self) -> &[Vec<PixelTriplet>] {
        &self.samples
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn thresholds(&self) -> SaturationThresholds {
        self.thresholds
    }

    pub fn n_patches(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, patch: usize, exposure: usize) -> PixelTriplet {
        self.samples[patch][exposure]
    }

    pub fn flags(&self, patch: usize, exposure: usize) -> SaturationFlags {
        self.thresholds.classify(self.samples[patch][exposure])
    }

    pub fn distinct_exposures(&self) -> usize {
        let mut secs: Vec<T> = self.exposures.iter().map(|e| e.seconds()).collect();
        secs.sort_by(|a, b| a.partial_cmp(b).expect("finite exposures"));
        secs.dedup();
        secs.len()
    }

    /// Stack restricted to the listed patches, in the given order.
    pub fn select_patches(&self, patches: &[usize]) -> Self {
        ExposureStack {
            exposures: self.exposures.clone(),
            patch_ids: patches.iter().map(|&j| self.patch_ids[j].clone()).collect(),
            samples: patches.iter().map(|&j| self.samples[j].clone()).collect(),
            bit_depth: self.bit_depth,
            thresholds: self.thresholds,
        }
    }

    /// Stack with every exposure multiplied by `factor`.
    pub fn with_scaled_exposures(&self, factor: T) -> Result<Self> {
        let exposures = self
            .exposures
            .iter()
            .map(|e| ExposureSetting::new(e.seconds() * factor))
            .collect::<Result<_>>()?;
        Ok(ExposureStack { exposures, ..self.clone() })
    }

    /// Stack with one patch appended.
    pub fn with_patch(&self, id: impl Into<String>, row: Vec<PixelTriplet>) -> Result<Self> {
        let mut out = self.clone();
        out.patch_ids.push(id.into());
        out.samples.push(row);
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseFitConfig {
    pub smoothness_lambda: f64,
    /// Code pinned to `ln g^-1 = 0`; `None` uses the mid code.
    pub anchor: Option<u32>,
}

impl Default for ResponseFitConfig {
    fn default() -> Self {
        ResponseFitConfig { smoothness_lambda: 50.0, anchor: None }
    }
}

fn hat_weight(z: usize, max_code: usize) -> f64 {
    z.min(max_code - z) as f64
}

/// Response fit together with its per-channel byproducts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ResponseFit<T: Real> {
    pub curve: ResponseCurve<T>,
    /// Fitted `ln E_j` per channel for every patch that contributed (`None` otherwise).
    pub ln_irradiance: [Vec<Option<T>>; CHANNELS],
    /// RMS of the unweighted data residuals `ln g^-1(z) - ln E_j - ln e_i`.
    pub residual_rms: [f64; CHANNELS],
    pub samples_used: usize,
    /// Whether isotonic projection had to repair the raw solution, per channel.
    pub projected: [bool; CHANNELS],
}

/// Fits `ln g^-1` for every channel from the unsaturated samples of `stack`.
pub fn estimate_response<T: Real>(stack: &ExposureStack<T>, cfg: &ResponseFitConfig) -> Result<ResponseCurve<T>> {
    estimate_response_masked(stack, cfg, |_, _| true).map(|fit| fit.curve)
}

/// As [`estimate_response`], using only samples `(patch, exposure)` for which `include` holds.
pub fn estimate_response_masked<T: Real>(
    stack: &ExposureStack<T>,
    cfg: &ResponseFitConfig,
    include: impl Fn(usize, usize) -> bool + Sync,
) -> Result<ResponseFit<T>> {
    if stack.distinct_exposures() < 2 {
        return Err(Error::precondition(
            "two_distinct_exposures",
            format!("{} distinct exposure(s); a nonlinear response needs at least 2", stack.distinct_exposures()),
        ));
    }
    if !(cfg.smoothness_lambda >= 0.0) {
        return Err(Error::precondition("nonnegative_smoothness", format!("lambda = {}", cfg.smoothness_lambda)));
    }
    let levels = 1usize << stack.bit_depth();
    let anchor = cfg.anchor.map(|a| a as usize).unwrap_or(levels / 2);
    if anchor >= levels {
        return Err(Error::precondition("anchor_in_range", format!("anchor {anchor} >= {levels}")));
    }
    let n_exp = stack.exposures().len();
    for k in 0..CHANNELS {
        let any_valid = (0..stack.n_patches())
            .any(|j| (0..n_exp).any(|i| include(j, i) && stack.flags(j, i).channels[k] == Saturation::Valid));
        if !any_valid {
            return Err(Error::AllSaturated { channel: k });
        }
    }

    // (patch, code-independent) sample selection shared by all channels
    let mut used: Vec<(usize, usize)> = Vec::new();
    for j in 0..stack.n_patches() {
        for i in 0..n_exp {
            if include(j, i) && !stack.flags(j, i).any_saturated() {
                used.push((j, i));
            }
        }
    }

    let fits: Vec<Result<ChannelFit<T>>> = std::thread::scope(|scope| {
        let used = &used;
        let handles: Vec<_> = (0..CHANNELS)
            .map(|k| scope.spawn(move || fit_channel(stack, used, cfg, anchor, k)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("response fit thread panicked")).collect()
    });
    let mut tables: [Vec<T>; CHANNELS] = Default::default();
    let mut ln_irradiance: [Vec<Option<T>>; CHANNELS] = Default::default();
    let mut residual_rms = [0.0; CHANNELS];
    let mut projected = [false; CHANNELS];
    for (k, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        tables[k] = fit.table;
        ln_irradiance[k] = fit.ln_irradiance;
        residual_rms[k] = fit.residual_rms;
        projected[k] = fit.projected;
    }
    Ok(ResponseFit {
        curve: ResponseCurve::new(stack.bit_depth(), tables)?,
        ln_irradiance,
        residual_rms,
        samples_used: used.len(),
        projected,
    })
}

struct ChannelFit<T> {
    table: Vec<T>,
    ln_irradiance: Vec<Option<T>>,
    residual_rms: f64,
    projected: bool,
}

fn fit_channel<T: Real>(
    stack: &ExposureStack<T>,
    used: &[(usize, usize)],
    cfg: &ResponseFitConfig,
    anchor: usize,
    k: usize,
) -> Result<ChannelFit<T>> {
    let levels = 1usize << stack.bit_depth();
    let max_code = levels - 1;
    if used.is_empty() {
        return Err(Error::AllSaturated { channel: k });
    }

    // patches without a usable sample get no unknown
    let mut column_of: Vec<Option<usize>> = vec![None; stack.n_patches()];
    let mut active = 0usize;
    for &(j, _) in used {
        if column_of[j].is_none() {
            column_of[j] = Some(active);
            active += 1;
        }
    }

    let unknowns = levels + active;
    let equations = used.len() + (levels - 2) + 1;
    if equations < unknowns {
        return Err(Error::Underdetermined { channel: k, equations, unknowns });
    }

    let mut a = DMatrix::<T>::zeros(equations, unknowns);
    let mut b = DVector::<T>::zeros(equations);
    let mut r = 0;
    for &(j, i) in used {
        let z = stack.sample(j, i).get(k) as usize;
        let w = T::lit(hat_weight(z, max_code));
        a[(r, z)] = w;
        a[(r, levels + column_of[j].expect("used patch"))] = -w;
        b[r] = w * stack.exposures()[i].seconds().ln();
        r += 1;
    }
    let lambda = T::lit(cfg.smoothness_lambda);
    for z in 1..max_code {
        let w = lambda * T::lit(hat_weight(z, max_code));
        a[(r, z - 1)] = w;
        a[(r, z)] = -T::lit(2.0) * w;
        a[(r, z + 1)] = w;
        r += 1;
    }
    a[(r, anchor)] = T::one();

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * T::lit(1e-12)) {
        return Err(Error::Underdetermined { channel: k, equations, unknowns });
    }
    let x = svd.solve(&b, T::zero()).map_err(|e| Error::Singular(format!("channel {k}: {e}")))?;
    let mut table: Vec<T> = x.iter().take(levels).copied().collect();
    if table.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("channel {k}: non-finite response")));
    }
    let ln_irradiance: Vec<Option<T>> = column_of.iter().map(|c| c.map(|c| x[levels + c])).collect();
    let projected = table.windows(2).any(|w| w[1] <= w[0]);
    if projected {
        isotonic_strict(&mut table);
        let shift = table[anchor];
        table.iter_mut().for_each(|v| *v -= shift);
    }
    let sum_sq: f64 = used
        .iter()
        .map(|&(j, i)| {
            let z = stack.sample(j, i).get(k) as usize;
            let ln_e = ln_irradiance[j].expect("used patch");
            (table[z] - ln_e - stack.exposures()[i].seconds().ln()).to_f64_lossy().powi(2)
        })
        .sum();
    Ok(ChannelFit { table, ln_irradiance, residual_rms: (sum_sq / used.len() as f64).sqrt(), projected })
}

/// Pool-adjacent-violators projection onto non-decreasing sequences (unit weights).
pub fn isotonic_projection<T: Real>(values: &[T]) -> Vec<T> {
    // blocks of (sum, count)
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / T::from_usize_lossy(n0) >= s1 / T::from_usize_lossy(n1) {
                blocks.pop();
                *blocks.last_mut().expect("two blocks") = (s0 + s1, n0 + n1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / T::from_usize_lossy(n), n))
        .collect()
}

/// Isotonic projection followed by the smallest upward nudge that makes ties strict.
fn isotonic_strict<T: Real>(values: &mut [T]) {
    let projected = isotonic_projection(values);
    let span = projected.last().copied().unwrap_or_else(T::zero) - projected[0];
    let step = T::lit(1e-9) * (span.abs() + T::one()) / T::from_usize_lossy(values.len());
    values.copy_from_slice(&projected);
    for i in 1..values.len() {
        if values[i] <= values[i - 1] {
            values[i] = values[i - 1] + step;
        }
    }
}

/// Agreement of the data with exposure reciprocity `g^-1(I_1) / g^-1(I_2) = e_1 / e_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciprocityReport {
    pub channels: [ChannelReciprocity; CHANNELS],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelReciprocity {
    pub pairs: usize,
    /// max / mean of `|g^-1(I_1)/g^-1(I_2) - e_1/e_2|`
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
    /// Same deviation divided by `e_1/e_2`.
    pub max_rel_deviation: f64,
}

pub fn check_exposure_reciprocity<T: Real>(
    stack: &ExposureStack<T>,
    curve: &ResponseCurve<T>,
) -> Result<ReciprocityReport> {
    if curve.bit_depth() != stack.bit_depth() {
        return Err(Error::precondition(
            "matching_bit_depth",
            format!("curve has {} bits, stack {}", curve.bit_depth(), stack.bit_depth()),
        ));
    }
    let n_exp = stack.exposures().len();
    let mut channels = [ChannelReciprocity::default(); CHANNELS];
    let mut sums = [0.0f64; CHANNELS];
    for j in 0..stack.n_patches() {
        for a in 0..n_exp {
            if stack.flags(j, a).any_saturated() {
                continue;
            }
            for b in a + 1..n_exp {
                if stack.flags(j, b).any_saturated() {
                    continue;
                }
                let expected = (stack.exposures()[a].seconds() / stack.exposures()[b].seconds()).to_f64_lossy();
                for (k, ch) in channels.iter_mut().enumerate() {
                    let num = curve.invert(stack.sample(j, a).get(k), k)?;
                    let den = curve.invert(stack.sample(j, b).get(k), k)?;
                    let dev = ((num / den).to_f64_lossy() - expected).abs();
                    ch.pairs += 1;
                    ch.max_abs_deviation = ch.max_abs_deviation.max(dev);
                    ch.max_rel_deviation = ch.max_rel_deviation.max(dev / expected);
                    sums[k] += dev;
                }
            }
        }
    }
    if channels[0].pairs == 0 {
        return Err(Error::precondition("valid_exposure_pairs", "no patch has two unsaturated exposures"));
    }
    for (ch, s) in channels.iter_mut().zip(sums) {
        ch.mean_abs_deviation = s / ch.pairs as f64;
    }
    Ok(ReciprocityReport { channels })
}
