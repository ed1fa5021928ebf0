//! Chromaticity projection, inner/outer gamut partition and the RBF gamut map `E = h(S)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::CHANNELS;
use crate::scalar::Real;

/// Linear sRGB (D65) to CIE XYZ, row-major.
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Raw channel response `S = sum p * omega` before gamut mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RawTristimulus<T: Real>([T; CHANNELS]);

impl<T: Real> RawTristimulus<T> {
    pub fn new(r: T, g: T, b: T) -> Result<Self> {
        let v = [r, g, b];
        if v.iter().any(|&x| !x.is_finite() || x < T::zero()) {
            return Err(Error::invariant("nonnegative_tristimulus", format!("{v:?}")));
        }
        Ok(RawTristimulus(v))
    }

    pub(crate) fn from_array_unchecked(v: [T; CHANNELS]) -> Self {
        RawTristimulus(v)
    }

    pub fn values(&self) -> [T; CHANNELS] {
        self.0
    }

    pub fn r(&self) -> T {
        self.0[0]
    }

    pub fn g(&self) -> T {
        self.0[1]
    }

    pub fn b(&self) -> T {
        self.0[2]
    }
}

/// CIE 1931 `(x, y)` chromaticity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChromaticityPoint<T: Real> {
    pub x: T,
    pub y: T,
}

impl<T: Real> ChromaticityPoint<T> {
    /// Chromaticity of the linear-sRGB primaries and white.
    pub fn srgb_red() -> Self {
        Self::of_rgb([T::one(), T::zero(), T::zero()])
    }

    pub fn srgb_green() -> Self {
        Self::of_rgb([T::zero(), T::one(), T::zero()])
    }

    pub fn srgb_blue() -> Self {
        Self::of_rgb([T::zero(), T::zero(), T::one()])
    }

    pub fn d65() -> Self {
        Self::of_rgb([T::one(); 3])
    }

    fn of_rgb(rgb: [T; 3]) -> Self {
        rgb_to_xy(&RawTristimulus(rgb)).expect("nonzero literal")
    }

    pub fn distance(&self, other: &Self) -> T {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Projects a camera RGB triplet (treated as linear sRGB) to CIE 1931 chromaticity.
pub fn rgb_to_xy<T: Real>(s: &RawTristimulus<T>) -> Result<ChromaticityPoint<T>> {
    xy_of_values(s.values())
}

pub(crate) fn xy_of_values<T: Real>(rgb: [T; 3]) -> Result<ChromaticityPoint<T>> {
    let xyz: [T; 3] =
        std::array::from_fn(|i| (0..3).fold(T::zero(), |acc, j| acc + T::lit(SRGB_TO_XYZ[i][j]) * rgb[j]));
    let sum = xyz[0] + xyz[1] + xyz[2];
    if !(sum > T::zero()) || !sum.is_finite() {
        return Err(Error::UndefinedChromaticity { index: None });
    }
    Ok(ChromaticityPoint { x: xyz[0] / sum, y: xyz[1] / sum })
}

/// Split of samples into the inner (near-white) and outer gamut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamutPartition {
    pub alpha: f64,
    pub inner_indices: Vec<usize>,
    pub outer_indices: Vec<usize>,
}

impl GamutPartition {
    pub fn is_inner(&self, index: usize) -> bool {
        self.inner_indices.binary_search(&index).is_ok()
    }
}

/// The sRGB primary triangle shrunk about the D65 white point by `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct InnerGamut<T: Real> {
    vertices: [ChromaticityPoint<T>; 3],
}

impl<T: Real> InnerGamut<T> {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::precondition("alpha_in_unit_interval", format!("alpha = {alpha}")));
        }
        let w = ChromaticityPoint::<T>::d65();
        let a = T::lit(alpha);
        let shrink = |p: ChromaticityPoint<T>| ChromaticityPoint { x: w.x + a * (p.x - w.x), y: w.y + a * (p.y - w.y) };
        Ok(InnerGamut {
            vertices: [
                shrink(ChromaticityPoint::srgb_red()),
                shrink(ChromaticityPoint::srgb_green()),
                shrink(ChromaticityPoint::srgb_blue()),
            ],
        })
    }

    pub fn vertices(&self) -> [ChromaticityPoint<T>; 3] {
        self.vertices
    }

    /// Inclusive point-in-triangle test via edge orientation signs.
    pub fn contains(&self, p: &ChromaticityPoint<T>) -> bool {
        let [a, b, c] = self.vertices;
        let cross = |o: ChromaticityPoint<T>, u: ChromaticityPoint<T>| (u.x - o.x) * (p.y - o.y) - (u.y - o.y) * (p.x - o.x);
        let tol = T::lit(1e-12);
        let d = [cross(a, b), cross(b, c), cross(c, a)];
        let has_neg = d.iter().any(|&v| v < -tol);
        let has_pos = d.iter().any(|&v| v > tol);
        !(has_neg && has_pos)
    }
}

/// Classifies each sample as inner or outer gamut by chromaticity.
pub fn partition_gamut<T: Real>(points: &[RawTristimulus<T>], alpha: f64) -> Result<GamutPartition> {
    let region = InnerGamut::<T>::new(alpha)?;
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for (i, s) in points.iter().enumerate() {
        let xy = rgb_to_xy(s).map_err(|_| Error::UndefinedChromaticity { index: Some(i) })?;
        if region.contains(&xy) {
            inner.push(i);
        } else {
            outer.push(i);
        }
    }
    Ok(GamutPartition { alpha, inner_indices: inner, outer_indices: outer })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfConfig {
    pub max_centers: usize,
    /// Tikhonov weight on the RBF coefficients.
    pub ridge: f64,
    /// Gaussian width; `None` uses the median pairwise center distance.
    pub kernel_width: Option<f64>,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig { max_centers: 200, ridge: 1e-8, kernel_width: None }
    }
}

/// Affine map plus Gaussian radial basis residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RbfGamutMap<T: Real> {
    pub centers: Vec<[T; 3]>,
    pub weights: Vec<[T; 3]>,
    pub kernel_width: T,
    pub ridge: T,
    /// Rows map `[S_r, S_g, S_b, 1]` to one output channel.
    pub affine: [[T; 4]; 3],
    #[serde(default)]
    pub training_rms: T,
    #[serde(default)]
    pub training_max: T,
}

impl<T: Real> RbfGamutMap<T> {
    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::invariant("at_least_one_center", "no RBF centers"));
        }
        if self.centers.len() != self.weights.len() {
            return Err(Error::invariant(
                "centers_match_weights",
                format!("{} centers, {} weight rows", self.centers.len(), self.weights.len()),
            ));
        }
        if !(self.kernel_width > T::zero()) || !self.kernel_width.is_finite() {
            return Err(Error::invariant("positive_kernel_width", format!("width {}", self.kernel_width)));
        }
        if !(self.ridge >= T::zero()) {
            return Err(Error::invariant("nonnegative_ridge", format!("ridge {}", self.ridge)));
        }
        Ok(())
    }

    /// Pure affine map (single zero-weight center).
    pub fn affine_only(affine: [[T; 4]; 3]) -> Self {
        RbfGamutMap {
            centers: vec![[T::zero(); 3]],
            weights: vec![[T::zero(); 3]],
            kernel_width: T::one(),
            ridge: T::zero(),
            affine,
            training_rms: T::zero(),
            training_max: T::zero(),
        }
    }

    pub fn apply(&self, s: &RawTristimulus<T>) -> [T; 3] {
        let s = s.values();
        let mut out: [T; 3] = std::array::from_fn(|i| {
            let row = &self.affine[i];
            row[0] * s[0] + row[1] * s[1] + row[2] * s[2] + row[3]
        });
        let denom = T::lit(2.0) * self.kernel_width * self.kernel_width;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let phi = (-sq_dist(&s, c) / denom).exp();
            for i in 0..3 {
                out[i] += w[i] * phi;
            }
        }
        out
    }

    /// Upper bound on the Lipschitz constant of [`RbfGamutMap::apply`] in the Euclidean norm.
    pub fn lipschitz_bound(&self) -> T {
        let affine = self
            .affine
            .iter()
            .flat_map(|row| row[..3].iter())
            .fold(T::zero(), |acc, &a| acc + a * a)
            .sqrt();
        // max |d/dr exp(-r^2 / 2w^2)| = 1 / (w sqrt(e))
        let slope = T::one() / (self.kernel_width * T::lit(std::f64::consts::E.sqrt()));
        let rbf = self
            .weights
            .iter()
            .map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt())
            .fold(T::zero(), |acc, n| acc + n);
        affine + rbf * slope
    }
}

/// The camera's gamut mapping `h`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "T: Real")]
pub enum GamutMap<T: Real> {
    #[default]
    Identity,
    Rbf(RbfGamutMap<T>),
}

impl<T: Real> GamutMap<T> {
    pub fn apply(&self, s: &RawTristimulus<T>) -> [T; 3] {
        match self {
            GamutMap::Identity => s.values(),
            GamutMap::Rbf(map) => map.apply(s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GamutMap::Identity => Ok(()),
            GamutMap::Rbf(map) => map.validate(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, GamutMap::Identity)
    }
}

pub fn apply_gamut_map<T: Real>(map: &RbfGamutMap<T>, s: &RawTristimulus<T>) -> [T; 3] {
    map.apply(s)
}

fn sq_dist<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    (0..3).fold(T::zero(), |acc, i| acc + (a[i] - b[i]) * (a[i] - b[i]))
}

/// Greedy farthest-point selection of up to `k` distinct samples, starting from the sample
/// farthest from the centroid.
fn farthest_point_centers<T: Real>(points: &[[T; 3]], k: usize) -> Vec<usize> {
    let n = points.len();
    let inv_n = T::one() / T::from_usize_lossy(n);
    let centroid: [T; 3] = std::array::from_fn(|i| points.iter().fold(T::zero(), |acc, p| acc + p[i]) * inv_n);
    let mut chosen = Vec::with_capacity(k);
    let mut best = 0;
    let mut best_d = -T::one();
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(p, &centroid);
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    chosen.push(best);
    let mut min_d: Vec<T> = points.iter().map(|p| sq_dist(p, &points[best])).collect();
    while chosen.len() < k {
        let (next, d) = min_d
            .iter()
            .enumerate()
            .fold((0, -T::one()), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) });
        if !(d > T::zero()) {
            break; // only duplicates remain
        }
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &points[next]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

fn median<T: Real>(mut v: Vec<T>) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0) })
}

/// Fits `E = h(S)` as an affine least-squares map plus a Gaussian RBF on its residuals.
pub fn fit_gamut_map<T: Real>(
    samples: &[RawTristimulus<T>],
    targets: &[[T; 3]],
    cfg: &RbfConfig,
) -> Result<RbfGamutMap<T>> {
    let n = samples.len();
    if n != targets.len() {
        return Err(Error::precondition("equal_length_inputs", format!("{n} samples vs {} targets", targets.len())));
    }
    if n < 4 {
        return Err(Error::precondition("at_least_four_samples", format!("{n} samples")));
    }
    if let Some(i) = targets.iter().position(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::precondition("finite_targets", format!("target {i} is not finite")));
    }
    if cfg.max_centers == 0 {
        return Err(Error::precondition("max_centers_positive", "max_centers = 0"));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(Error::precondition("nonnegative_ridge", format!("ridge {}", cfg.ridge)));
    }
    let pts: Vec<[T; 3]> = samples.iter().map(|s| s.values()).collect();

    // affine part: [S 1] X = E in the least-squares sense
    let design = DMatrix::from_fn(n, 4, |i, j| if j < 3 { pts[i][j] } else { T::one() });
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > T::zero()) || smin <= smax * T::lit(1e-10) {
        return Err(Error::DegenerateGeometry(format!(
            "samples do not span an affine 3-D volume (singular values {:e}..{:e})",
            smin.to_f64_lossy(),
            smax.to_f64_lossy()
        )));
    }
    let rhs = DMatrix::from_fn(n, 3, |i, j| targets[i][j]);
    let coef = svd
        .solve(&rhs, T::eps())
        .map_err(|e| Error::Singular(format!("affine fit: {e}")))?; // 4 x 3
    let affine: [[T; 4]; 3] = std::array::from_fn(|out| std::array::from_fn(|j| coef[(j, out)]));
    let residual = rhs - &design * &coef;

    let center_idx = farthest_point_centers(&pts, cfg.max_centers.min(n));
    let centers: Vec<[T; 3]> = center_idx.iter().map(|&i| pts[i]).collect();
    let k = centers.len();
    let width = match cfg.kernel_width {
        Some(w) if w > 0.0 && w.is_finite() => T::lit(w),
        Some(w) => return Err(Error::precondition("positive_kernel_width", format!("width {w}"))),
        None => {
            let mut dists = Vec::with_capacity(k * (k - 1) / 2);
            for a in 0..k {
                for b in a + 1..k {
                    dists.push(sq_dist(&centers[a], &centers[b]).sqrt());
                }
            }
            match median(dists) {
                Some(w) if w > T::zero() => w,
                _ => T::one(),
            }
        }
    };
    let denom = T::lit(2.0) * width * width;
    let phi = DMatrix::from_fn(n, k, |i, j| (-sq_dist(&pts[i], &centers[j]) / denom).exp());
    let ridge = T::lit(cfg.ridge);

    let weights_mat = if k == n && cfg.ridge == 0.0 {
        phi.clone()
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::Singular("RBF interpolation matrix is singular".into()))?
    } else {
        let lambda = ridge.sqrt();
        let mut aug = DMatrix::zeros(n + k, k);
        aug.view_mut((0, 0), (n, k)).copy_from(&phi);
        for j in 0..k {
            aug[(n + j, j)] = lambda;
        }
        let mut aug_rhs = DMatrix::zeros(n + k, 3);
        aug_rhs.view_mut((0, 0), (n, 3)).copy_from(&residual);
        if cfg.ridge > 0.0 {
            // the ridge rows give the augmented matrix full column rank, so QR is stable
            let qr = aug.qr();
            let qtb = qr.q().transpose() * aug_rhs;
            qr.r()
                .solve_upper_triangular(&qtb)
                .ok_or_else(|| Error::Singular("RBF system singular after ridge".into()))?
        } else {
            let svd = aug.svd(true, true);
            let smax = svd.singular_values.max();
            if !(smax > T::zero()) {
                return Err(Error::Singular("RBF system has no rank".into()));
            }
            let tol = smax * T::eps() * T::from_usize_lossy(n + k);
            svd.solve(&aug_rhs, tol).map_err(|e| Error::Singular(format!("RBF fit: {e}")))?
        }
    };
    let weights: Vec<[T; 3]> = (0..k).map(|j| std::array::from_fn(|o| weights_mat[(j, o)])).collect();
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Singular("non-finite RBF weights".into()));
    }

    let mut map = RbfGamutMap {
        centers,
        weights,
        kernel_width: width,
        ridge,
        affine,
        training_rms: T::zero(),
        training_max: T::zero(),
    };
    let mut sum_sq = T::zero();
    let mut max_err = T::zero();
    for (s, t) in samples.iter().zip(targets) {
        let out = map.apply(s);
        for i in 0..3 {
            let e = (out[i] - t[i]).abs();
            sum_sq += e * e;
            max_err = max_err.max(e);
        }
    }
    map.training_rms = (sum_sq / T::from_usize_lossy(3 * n)).sqrt();
    map.training_max = max_err;
    Ok(map)
}
