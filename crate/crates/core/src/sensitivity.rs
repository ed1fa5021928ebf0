//! Spectral sensitivity estimation from known radiances and linearized intensities.
//!
//! Two estimators are provided: the direct pseudo-inverse of `P omega_k = I_k`, and a
//! basis-restricted least squares `min ||P B_k^T c - I_k||` subject to `B_k^T c >= 0` at every
//! grid point, where `B_k` holds the leading right singular vectors of a database of known
//! camera sensitivities.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{SensitivityMatrix, CHANNELS, CHANNEL_NAMES};
use crate::scalar::Real;
use crate::spectral::SpectralGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DatabaseEntry<T: Real> {
    pub name: String,
    pub omega: SensitivityMatrix<T>,
}

/// Known camera sensitivities on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SensitivityDatabase<T: Real> {
    entries: Vec<DatabaseEntry<T>>,
}

impl<T: Real> SensitivityDatabase<T> {
    pub fn new(entries: Vec<DatabaseEntry<T>>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::invariant("at_least_two_entries", format!("{} entries", entries.len())));
        }
        let grid = *entries[0].omega.grid();
        for e in &entries[1..] {
            grid.ensure_same(e.omega.grid(), &format!("database entry {}", e.name))
                .map_err(|_| Error::invariant("common_grid", format!("entry {} is on a different grid", e.name)))?;
        }
        Ok(SensitivityDatabase { entries })
    }

    pub fn entries(&self) -> &[DatabaseEntry<T>] {
        &self.entries
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.entries[0].omega.grid()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Orthonormal basis for one channel: rows of `vectors` span the retained subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChannelBasis<T: Real> {
    pub vectors: Vec<Vec<T>>,
    /// All singular values of the stacked database, descending.
    pub singular_values: Vec<T>,
    /// Fraction of the total squared singular mass kept by the retained vectors.
    pub captured_variance: f64,
}

impl<T: Real> ChannelBasis<T> {
    /// `d x M` matrix whose rows are the basis vectors.
    pub fn matrix(&self) -> DMatrix<T> {
        let d = self.vectors.len();
        let m = self.vectors[0].len();
        DMatrix::from_fn(d, m, |i, j| self.vectors[i][j])
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Curve `B^T c`.
    pub fn reconstruct(&self, coefficients: &[T]) -> Vec<T> {
        let m = self.vectors[0].len();
        (0..m)
            .map(|i| self.vectors.iter().zip(coefficients).fold(T::zero(), |acc, (v, &c)| acc + v[i] * c))
            .collect()
    }

    /// Coefficients of the orthogonal projection of `curve` onto the basis.
    pub fn project(&self, curve: &[T]) -> Vec<T> {
        self.vectors.iter().map(|v| crate::spectral::dot(v, curve)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SensitivityBasis<T: Real> {
    pub grid: SpectralGrid,
    pub dim: usize,
    pub channels: [ChannelBasis<T>; CHANNELS],
}

impl<T: Real> SensitivityBasis<T> {
    pub fn channel(&self, k: usize) -> &ChannelBasis<T> {
        &self.channels[k]
    }
}

/// Per-channel truncated SVD of the database (no mean removal).
pub fn build_basis<T: Real>(db: &SensitivityDatabase<T>, d: usize) -> Result<SensitivityBasis<T>> {
    let grid = *db.grid();
    let m = grid.count();
    let n = db.len();
    if d == 0 || d > n.min(m) {
        return Err(Error::precondition(
            "basis_dim_in_range",
            format!("d = {d} must be in 1..={} (entries {n}, wavelengths {m})", n.min(m)),
        ));
    }
    let channels: Vec<ChannelBasis<T>> = (0..CHANNELS)
        .map(|k| {
            let x = DMatrix::from_fn(n, m, |i, j| db.entries[i].omega.channel(k)[j]);
            let svd = x.svd(false, true);
            let v_t = svd.v_t.expect("requested V^T");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).expect("finite"));
            let singular_values: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
            let vectors: Vec<Vec<T>> = order[..d]
                .iter()
                .map(|&i| {
                    let mut row: Vec<T> = v_t.row(i).iter().copied().collect();
                    // sign fix: dominant mass positive
                    let sum = row.iter().fold(T::zero(), |a, &v| a + v);
                    if sum < T::zero() {
                        row.iter_mut().for_each(|v| *v = -*v);
                    }
                    row
                })
                .collect();
            let total = singular_values.iter().fold(0.0, |a, s| a + s.to_f64_lossy().powi(2));
            let kept = singular_values[..d].iter().fold(0.0, |a, s| a + s.to_f64_lossy().powi(2));
            ChannelBasis {
                vectors,
                singular_values,
                captured_variance: if total > 0.0 { kept / total } else { 1.0 },
            }
        })
        .collect();
    let channels: [ChannelBasis<T>; CHANNELS] = channels.try_into().expect("three channels");
    Ok(SensitivityBasis { grid, dim: d, channels })
}

/// Radiance spectra with their linearized, exposure-normalized channel intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MeasurementSet<T: Real> {
    grid: SpectralGrid,
    radiance: Vec<Vec<T>>,
    intensities: Vec<[T; CHANNELS]>,
    valid: Vec<bool>,
}

impl<T: Real> MeasurementSet<T> {
    pub fn new(grid: SpectralGrid, radiance: Vec<Vec<T>>, intensities: Vec<[T; CHANNELS]>, valid: Vec<bool>) -> Result<Self> {
        let set = MeasurementSet { grid, radiance, intensities, valid };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.radiance.len();
        if self.intensities.len() != n || self.valid.len() != n {
            return Err(Error::invariant(
                "consistent_row_count",
                format!("{n} spectra, {} intensity rows, {} mask entries", self.intensities.len(), self.valid.len()),
            ));
        }
        for (i, row) in self.radiance.iter().enumerate() {
            if row.len() != self.grid.count() {
                return Err(Error::invariant("values_match_grid", format!("row {i} has {} samples", row.len())));
            }
            if row.iter().any(|&v| !v.is_finite() || v < T::zero()) {
                return Err(Error::invariant("nonnegative_radiance", format!("row {i}")));
            }
            if self.valid[i] && self.intensities[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant("finite_intensity", format!("row {i}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.radiance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radiance.is_empty()
    }

    pub fn radiance(&self) -> &[Vec<T>] {
        &self.radiance
    }

    pub fn intensities(&self) -> &[[T; CHANNELS]] {
        &self.intensities
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.valid[i]).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Same rows with a different validity mask.
    pub fn with_mask(&self, valid: Vec<bool>) -> Result<Self> {
        MeasurementSet::new(self.grid, self.radiance.clone(), self.intensities.clone(), valid)
    }

    /// Copy keeping only rows for which `keep` is true.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        MeasurementSet {
            grid: self.grid,
            radiance: idx.iter().map(|&i| self.radiance[i].clone()).collect(),
            intensities: idx.iter().map(|&i| self.intensities[i]).collect(),
            valid: idx.iter().map(|&i| self.valid[i]).collect(),
        }
    }

    fn design(&self, rows: &[usize]) -> DMatrix<T> {
        DMatrix::from_fn(rows.len(), self.grid.count(), |r, j| self.radiance[rows[r]][j])
    }

    fn target(&self, rows: &[usize], k: usize) -> DVector<T> {
        DVector::from_fn(rows.len(), |r, _| self.intensities[rows[r]][k])
    }
}

const PINV_CONDITION_LIMIT: f64 = 1e12;

/// Unconstrained least squares `(P^T P)^-1 P^T I_k` over the valid rows; may go negative.
pub fn estimate_pinv<T: Real>(m: &MeasurementSet<T>, k: usize) -> Result<Vec<T>> {
    let rows = m.valid_rows();
    let cols = m.grid.count();
    if rows.len() < cols {
        return Err(Error::precondition(
            "valid_rows_at_least_wavelengths",
            format!("{} valid rows for {cols} wavelengths", rows.len()),
        ));
    }
    let p = m.design(&rows);
    let y = m.target(&rows, k);
    let svd = p.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > T::zero() { (smax / smin).to_f64_lossy() } else { f64::INFINITY };
    if !(condition < PINV_CONDITION_LIMIT) {
        return Err(Error::RankDeficient { condition });
    }
    let x = svd.solve(&y, T::zero()).map_err(|e| Error::Singular(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedOptions {
    /// Defaults to `100 * d`.
    pub max_iterations: Option<usize>,
    /// Relative constraint violation tolerated at termination.
    pub violation_tol: f64,
    /// Relative stationarity residual tolerated at termination.
    pub kkt_tol: f64,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        ConstrainedOptions { max_iterations: None, violation_tol: 1e-10, kkt_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SensitivityFit<T: Real> {
    pub channel: usize,
    pub coefficients: Vec<T>,
    /// Reconstructed sensitivity `B_k^T c` on the grid, nonnegative.
    pub omega_hat: Vec<T>,
    pub residual_rms: T,
    pub active_constraints: Vec<usize>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Result of [`lsi_active_set`].
#[derive(Debug, Clone)]
pub struct LsiSolution<T: Real> {
    pub x: DVector<T>,
    pub active: Vec<usize>,
    pub multipliers: Vec<T>,
    pub iterations: usize,
    pub max_violation: f64,
    pub kkt_residual: f64,
}

/// Solves `min ||A x - y||^2` subject to `G x >= 0` with a dual active-set method.
///
/// Starts from the unconstrained minimizer and adds the most violated constraint at each major
/// iteration, dropping active constraints whose multipliers would turn negative (Goldfarb-Idnani).
/// `A` must have full column rank.
pub fn lsi_active_set<T: Real>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    g: &DMatrix<T>,
    opts: &ConstrainedOptions,
) -> Result<LsiSolution<T>> {
    let (nrows, d) = a.shape();
    assert_eq!(g.ncols(), d, "constraint matrix column count");
    assert_eq!(y.len(), nrows, "target length");
    let max_iter = opts.max_iterations.unwrap_or(100 * d);

    let qr = a.clone().qr();
    let r = qr.r();
    let rdiag_max = (0..d).map(|i| r[(i, i)].abs()).fold(T::zero(), |m, v| m.max(v));
    let rdiag_min = (0..d).map(|i| r[(i, i)].abs()).fold(rdiag_max, |m, v| m.min(v));
    if !(rdiag_min > rdiag_max * T::lit(1e-13)) {
        return Err(Error::Infeasible(format!(
            "reduced design is rank deficient (|R_ii| range {:e}..{:e})",
            rdiag_min.to_f64_lossy(),
            rdiag_max.to_f64_lossy()
        )));
    }
    // H = R^T R, so H^-1 = J J^T with J = R^-1
    let j_mat = r
        .clone()
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Infeasible("triangular factor not invertible".into()))?;
    let qty = qr.q().transpose() * y;
    let mut x = &j_mat * qty;

    let aty = a.transpose() * y;
    let grad_scale = aty.amax().max(T::lit(1e-300));

    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<T> = Vec::new();
    let mut iterations = 0usize;
    let tiny = T::eps() * T::lit(100.0);

    let scale_of = |x: &DVector<T>| -> T { (g * x).amax().max(T::lit(1e-300)) };

    loop {
        let s = g * &x;
        let scale = scale_of(&x);
        let add_tol = T::lit(opts.violation_tol * 1e-2) * scale;
        let mut p = None;
        let mut worst = -add_tol;
        for i in 0..g.nrows() {
            if s[i] < worst && !active.contains(&i) {
                worst = s[i];
                p = Some(i);
            }
        }
        let Some(p) = p else { break };
        let n_p: DVector<T> = g.row(p).transpose();
        let mut u_p = T::zero();

        loop {
            iterations += 1;
            if iterations > max_iter {
                let (viol, kkt) = diagnostics(a, y, g, &x, &active, &u, grad_scale);
                return Err(Error::NotConverged { iterations: max_iter, max_violation: viol, kkt_residual: kkt });
            }
            let dvec = j_mat.transpose() * &n_p;
            let (z, rvec) = if active.is_empty() {
                (&j_mat * &dvec, DVector::zeros(0))
            } else {
                let nj = DMatrix::from_fn(d, active.len(), |i, c| {
                    (0..d).fold(T::zero(), |acc, l| acc + j_mat[(l, i)] * g[(active[c], l)])
                });
                let qr_n = nj.qr();
                let q1 = qr_n.q();
                let r1 = qr_n.r();
                let proj = q1.transpose() * &dvec;
                let rvec = r1
                    .solve_upper_triangular(&proj)
                    .ok_or_else(|| Error::Infeasible("active constraints became dependent".into()))?;
                let resid = &dvec - &q1 * proj;
                (&j_mat * resid, rvec)
            };

            // partial (dual) step limit
            let mut t1: Option<(T, usize)> = None;
            for (c, &rc) in rvec.iter().enumerate() {
                if rc > tiny {
                    let ratio = u[c] / rc;
                    if t1.map(|(t, _)| ratio < t).unwrap_or(true) {
                        t1 = Some((ratio, c));
                    }
                }
            }
            let s_p = n_p.dot(&x);
            let zn = z.dot(&n_p);
            let z_small = z.amax() <= tiny * x.amax().max(T::one()) || zn <= T::zero();
            let t2 = if z_small { None } else { Some(-s_p / zn) };

            match (t1, t2) {
                (None, None) => {
                    return Err(Error::Infeasible(format!(
                        "constraint {p} cannot be satisfied together with the active set"
                    )));
                }
                (Some((t, l)), None) => {
                    for (c, uc) in u.iter_mut().enumerate() {
                        *uc -= t * rvec[c];
                    }
                    u_p += t;
                    active.remove(l);
                    u.remove(l);
                }
                (t1, Some(t2)) => {
                    let partial = matches!(t1, Some((t, _)) if t < t2);
                    let t = if partial { t1.expect("partial step").0 } else { t2 };
                    x += &z * t;
                    for (c, uc) in u.iter_mut().enumerate() {
                        *uc -= t * rvec[c];
                    }
                    u_p += t;
                    if partial {
                        let l = t1.expect("partial step").1;
                        active.remove(l);
                        u.remove(l);
                    } else {
                        active.push(p);
                        u.push(u_p);
                        break;
                    }
                }
            }
        }
    }

    let (max_violation, kkt_residual) = diagnostics(a, y, g, &x, &active, &u, grad_scale);
    let scale = scale_of(&x).to_f64_lossy();
    if max_violation > opts.violation_tol * scale.max(f64::MIN_POSITIVE) || kkt_residual > opts.kkt_tol {
        return Err(Error::NotConverged { iterations, max_violation, kkt_residual });
    }
    Ok(LsiSolution { x, active, multipliers: u, iterations, max_violation, kkt_residual })
}

/// (max absolute constraint violation, relative stationarity residual)
fn diagnostics<T: Real>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    g: &DMatrix<T>,
    x: &DVector<T>,
    active: &[usize],
    u: &[T],
    grad_scale: T,
) -> (f64, f64) {
    let s = g * x;
    let viol = s.iter().fold(T::zero(), |m, &v| m.max(-v)).to_f64_lossy();
    let mut grad = a.transpose() * (a * x - y);
    for (&i, &ui) in active.iter().zip(u) {
        for c in 0..grad.len() {
            grad[c] -= ui * g[(i, c)];
        }
    }
    (viol, (grad.amax() / grad_scale).to_f64_lossy())
}

/// Basis-restricted nonnegative estimate of channel `k`.
pub fn estimate_constrained<T: Real>(
    m: &MeasurementSet<T>,
    basis: &SensitivityBasis<T>,
    k: usize,
) -> Result<SensitivityFit<T>> {
    estimate_constrained_with(m, basis, k, &ConstrainedOptions::default())
}

pub fn estimate_constrained_with<T: Real>(
    m: &MeasurementSet<T>,
    basis: &SensitivityBasis<T>,
    k: usize,
    opts: &ConstrainedOptions,
) -> Result<SensitivityFit<T>> {
    m.grid.ensure_same(&basis.grid, "measurement vs basis")?;
    let rows = m.valid_rows();
    let d = basis.dim;
    if rows.len() < d {
        return Err(Error::precondition(
            "valid_rows_at_least_basis_dim",
            format!("{} valid rows for basis dimension {d} (channel {})", rows.len(), CHANNEL_NAMES[k]),
        ));
    }
    let b = basis.channel(k).matrix(); // d x M
    let p = m.design(&rows);
    let a = &p * b.transpose();
    let y = m.target(&rows, k);
    let g = b.transpose();
    let sol = lsi_active_set(&a, &y, &g, opts)?;

    let coefficients: Vec<T> = sol.x.iter().copied().collect();
    let mut omega_hat: Vec<T> = (&g * &sol.x).iter().copied().collect();
    // clear round-off below zero left within the violation tolerance
    omega_hat.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero();
        }
    });
    let fitted = &p * DVector::from_column_slice(&omega_hat);
    let residual_rms = rms(&(fitted - &y));
    Ok(SensitivityFit {
        channel: k,
        coefficients,
        omega_hat,
        residual_rms,
        active_constraints: sol.active,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

/// Constrained fit of all three channels, assembled into a sensitivity matrix.
pub fn estimate_all_constrained<T: Real>(
    m: &MeasurementSet<T>,
    basis: &SensitivityBasis<T>,
) -> Result<([SensitivityFit<T>; CHANNELS], SensitivityMatrix<T>)> {
    let fits: Vec<SensitivityFit<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..CHANNELS).map(|k| scope.spawn(move || estimate_constrained(m, basis, k))).collect();
        handles.into_iter().map(|h| h.join().expect("sensitivity fit thread panicked")).collect::<Result<_>>()
    })?;
    let fits: [SensitivityFit<T>; CHANNELS] = fits.try_into().expect("three channels");
    let omega = SensitivityMatrix::new(*m.grid(), std::array::from_fn(|k| fits[k].omega_hat.clone()))?;
    Ok((fits, omega))
}

fn rms<T: Real>(v: &DVector<T>) -> T {
    if v.is_empty() {
        return T::zero();
    }
    (v.iter().fold(T::zero(), |a, &x| a + x * x) / T::from_usize_lossy(v.len())).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CrossValidationReport<T: Real> {
    pub folds: usize,
    pub seed: u64,
    /// Mean of the per-fold estimates.
    pub mu: SensitivityMatrix<T>,
    /// Per-wavelength sample standard deviation across folds.
    pub sigma: [Vec<T>; CHANNELS],
    /// Held-out intensity RMSE of each fold (all channels pooled).
    pub heldout_rmse: Vec<f64>,
    pub training_rmse: Vec<f64>,
}

/// K-fold cross-validation of the constrained estimator over the valid rows.
pub fn cross_validate<T: Real>(
    m: &MeasurementSet<T>,
    basis: &SensitivityBasis<T>,
    folds: usize,
    seed: u64,
) -> Result<CrossValidationReport<T>> {
    let mut rows = m.valid_rows();
    if folds < 2 {
        return Err(Error::precondition("at_least_two_folds", format!("folds = {folds}")));
    }
    if rows.len() < folds {
        return Err(Error::precondition(
            "valid_rows_at_least_folds",
            format!("{} valid rows for {folds} folds", rows.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let mut fold_of = vec![usize::MAX; m.len()];
    for (pos, &row) in rows.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let grid = *m.grid();
    let mut estimates: Vec<[Vec<T>; CHANNELS]> = Vec::with_capacity(folds);
    let mut heldout_rmse = Vec::with_capacity(folds);
    let mut training_rmse = Vec::with_capacity(folds);
    for f in 0..folds {
        let train = m.with_mask((0..m.len()).map(|i| m.valid[i] && fold_of[i] != f).collect())?;
        let fits: Vec<SensitivityFit<T>> =
            (0..CHANNELS).map(|k| estimate_constrained(&train, basis, k)).collect::<Result<_>>()?;
        let omega: [Vec<T>; CHANNELS] = std::array::from_fn(|k| fits[k].omega_hat.clone());
        heldout_rmse.push(prediction_rmse(m, &omega, |i| fold_of[i] == f));
        training_rmse.push(prediction_rmse(m, &omega, |i| m.valid[i] && fold_of[i] != f));
        estimates.push(omega);
    }

    let nf = T::from_usize_lossy(folds);
    let mut mu: [Vec<T>; CHANNELS] = Default::default();
    let mut sigma: [Vec<T>; CHANNELS] = Default::default();
    for k in 0..CHANNELS {
        for i in 0..grid.count() {
            let mean = estimates.iter().fold(T::zero(), |a, e| a + e[k][i]) / nf;
            let var = estimates.iter().fold(T::zero(), |a, e| a + (e[k][i] - mean).powi(2)) / (nf - T::one());
            mu[k].push(mean);
            sigma[k].push(var.sqrt());
        }
    }
    Ok(CrossValidationReport {
        folds,
        seed,
        mu: SensitivityMatrix::new(grid, mu)?,
        sigma,
        heldout_rmse,
        training_rmse,
    })
}

fn prediction_rmse<T: Real>(m: &MeasurementSet<T>, omega: &[Vec<T>; CHANNELS], select: impl Fn(usize) -> bool) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in (0..m.len()).filter(|&i| select(i)) {
        for (k, om) in omega.iter().enumerate() {
            let pred = crate::spectral::dot(&m.radiance[i], om);
            sum += (pred - m.intensities[i][k]).to_f64_lossy().powi(2);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}
