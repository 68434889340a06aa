//! Gaussian Lasso by cyclic coordinate descent over a lambda path, k-fold
//! cross-validation with minimum and one-standard-error selection, and fit
//! diagnostics.
//!
//! Fits minimise `(1/(2n)) * RSS + lambda * sum |beta_j|` over standardized
//! predictors (mean 0, variance 1 with denominator `n`) and a centered
//! response. Reported coefficients are mapped back to the original scale.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::signal::check_finite;

pub const CD_TOLERANCE: f64 = 1e-7;
pub const CD_MAX_SWEEPS: usize = 10_000;

/// Named predictor columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n: usize,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: columns.len(),
                actual: names.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        for c in &columns {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
            check_finite(c)?;
        }
        Ok(Self { names, columns, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// Design restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            n: rows.len(),
        }
    }
}

/// Standardized design and centered response, with everything needed to map
/// coefficients back.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    pub columns: Vec<Vec<f64>>,
    /// Original column index of each standardized column.
    pub retained: Vec<usize>,
    pub dropped: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub y_mean: f64,
    pub y: Vec<f64>,
    pub n: usize,
    pub p_total: usize,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn standardize(design: &DesignMatrix, y: &[f64]) -> Result<StandardizedDesign> {
    let n = design.n();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 3 {
        return Err(Error::SeriesTooShort {
            required: 3,
            actual: n,
        });
    }
    check_finite(y)?;
    let mut out = StandardizedDesign {
        columns: Vec::new(),
        retained: Vec::new(),
        dropped: Vec::new(),
        means: Vec::new(),
        sds: Vec::new(),
        y_mean: 0.0,
        y: Vec::new(),
        n,
        p_total: design.p(),
    };
    for (j, col) in design.columns.iter().enumerate() {
        let (m, sd) = mean_sd(col);
        let max_abs = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max_abs == 0.0 || sd <= 1e-10 * max_abs {
            warn!("dropping constant column `{}`", design.names[j]);
            out.dropped.push(design.names[j].clone());
            continue;
        }
        out.columns.push(col.iter().map(|v| (v - m) / sd).collect());
        out.retained.push(j);
        out.means.push(m);
        out.sds.push(sd);
    }
    out.y_mean = y.iter().sum::<f64>() / n as f64;
    out.y = y.iter().map(|v| v - out.y_mean).collect();
    Ok(out)
}

/// One Lasso solution on the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub lambda: f64,
    /// Coefficients for every original column; dropped columns carry 0.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub df: usize,
    pub rss: f64,
    /// Coefficients on the standardized scale, one per retained column.
    pub std_beta: Vec<f64>,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn predict(&self, design: &DesignMatrix) -> Vec<f64> {
        let mut out = vec![self.intercept; design.n()];
        for (b, col) in self.beta.iter().zip(design.columns()) {
            if *b != 0.0 {
                for (o, x) in out.iter_mut().zip(col) {
                    *o += b * x;
                }
            }
        }
        out
    }

    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// `max_j |<x_j, y>| / n`: the smallest lambda with an all-zero solution.
pub fn lambda_max(std: &StandardizedDesign) -> f64 {
    let n = std.n as f64;
    std.columns
        .iter()
        .map(|c| dot(c, &std.y).abs() / n)
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Penalised objective at standardized coefficients.
pub fn objective(std: &StandardizedDesign, std_beta: &[f64], lambda: f64) -> f64 {
    let resid = residual(std, std_beta);
    0.5 * dot(&resid, &resid) / std.n as f64 + lambda * std_beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn residual(std: &StandardizedDesign, std_beta: &[f64]) -> Vec<f64> {
    let mut r = std.y.clone();
    for (b, c) in std_beta.iter().zip(&std.columns) {
        if *b != 0.0 {
            for (ri, x) in r.iter_mut().zip(c) {
                *ri -= b * x;
            }
        }
    }
    r
}

/// Sweeps between attempts to jump to the exact solution for the current signs.
const POLISH_EVERY: usize = 50;

/// Feature-sign step on the current active set `A` with signs `s_A`. The
/// penalized objective restricted to that sign orthant is the quadratic
/// `b' G b / 2 - c' b` with `G = X_A' X_A / n` and `c = X_A' y / n - lambda s_A`.
/// When `c` has a component in the null space of `G` (more active columns
/// than rank) the quadratic falls linearly along it, so `beta` moves that way
/// until a coefficient reaches zero. Otherwise `beta` moves towards the
/// minimiser nearest to it, stopping where the first coefficient would change
/// sign. Either move never increases the objective. Coordinate descent on
/// nearly collinear columns otherwise crawls towards the same point.
fn polish_active_set(std: &StandardizedDesign, lambda: f64, beta: &mut [f64], resid: &mut [f64]) {
    let start = beta.iter().filter(|b| **b != 0.0).count();
    for _ in 0..=start {
        if !feature_sign_step(std, lambda, beta) {
            break;
        }
    }
    resid.copy_from_slice(&residual(std, beta));
}

/// One move of [`polish_active_set`]; true when a coefficient was zeroed and
/// the reduced active set is worth another move.
fn feature_sign_step(std: &StandardizedDesign, lambda: f64, beta: &mut [f64]) -> bool {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return false;
    }
    let n = std.n as f64;
    let m = active.len();
    let gram = DMatrix::from_fn(m, m, |a, b| dot(&std.columns[active[a]], &std.columns[active[b]]) / n);
    let rhs = DVector::from_fn(m, |a, _| dot(&std.columns[active[a]], &std.y) / n - lambda * beta[active[a]].signum());
    let current = DVector::from_fn(m, |a, _| beta[active[a]]);
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(top > 0.0) || !top.is_finite() {
        return false;
    }
    let mut range_sol = DVector::zeros(m);
    let mut null_rhs = DVector::zeros(m);
    let mut null_beta = DVector::zeros(m);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        if ev > 1e-10 * top {
            range_sol += v * (v.dot(&rhs) / ev);
        } else {
            null_rhs += v * v.dot(&rhs);
            null_beta += v * v.dot(&current);
        }
    }
    let (direction, max_step) = if null_rhs.norm() > 1e-12 * rhs.norm().max(f64::MIN_POSITIVE) {
        (null_rhs, f64::INFINITY)
    } else {
        (range_sol + null_beta - &current, 1.0)
    };
    if direction.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let mut step = max_step;
    let mut crossing = None;
    for (a, &j) in active.iter().enumerate() {
        let d = direction[a];
        if d != 0.0 && d.signum() != beta[j].signum() {
            let t = -beta[j] / d;
            if t < step {
                step = t;
                crossing = Some(j);
            }
        }
    }
    if !step.is_finite() {
        return false;
    }
    for (a, &j) in active.iter().enumerate() {
        beta[j] += step * direction[a];
    }
    if let Some(j) = crossing {
        beta[j] = 0.0;
    }
    crossing.is_some()
}

fn cd_solve(
    std: &StandardizedDesign,
    lambda: f64,
    beta: &mut [f64],
    resid: &mut [f64],
    mut trace: Option<&mut Vec<f64>>,
) -> Result<usize> {
    let n = std.n as f64;
    let penalty = |b: &[f64]| lambda * b.iter().map(|v| v.abs()).sum::<f64>();
    if let Some(t) = trace.as_deref_mut() {
        t.push(0.5 * dot(resid, resid) / n + penalty(beta));
    }
    let mut gap = f64::INFINITY;
    for sweep in 1..=CD_MAX_SWEEPS {
        gap = 0.0;
        for (j, col) in std.columns.iter().enumerate() {
            let old = beta[j];
            let z = dot(col, resid) / n + old;
            let new = soft_threshold(z, lambda);
            let delta = new - old;
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
                gap = gap.max(delta.abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(0.5 * dot(resid, resid) / n + penalty(beta));
        }
        if gap < CD_TOLERANCE {
            return Ok(sweep);
        }
        if sweep % POLISH_EVERY == 0 {
            polish_active_set(std, lambda, beta, resid);
        }
    }
    Err(Error::NoConvergence {
        sweeps: CD_MAX_SWEEPS,
        gap,
    })
}

fn finish_fit(std: &StandardizedDesign, lambda: f64, std_beta: Vec<f64>, resid: &[f64], sweeps: usize) -> LassoFit {
    let mut beta = vec![0.0; std.p_total];
    let mut intercept = std.y_mean;
    for (k, &j) in std.retained.iter().enumerate() {
        if std_beta[k] != 0.0 {
            beta[j] = std_beta[k] / std.sds[k];
            intercept -= beta[j] * std.means[k];
        }
    }
    LassoFit {
        lambda,
        df: std_beta.iter().filter(|b| **b != 0.0).count(),
        rss: dot(resid, resid),
        intercept,
        beta,
        std_beta,
        sweeps,
    }
}

/// Lasso solution at `lambda`, optionally warm-started from standardized
/// coefficients.
pub fn coordinate_descent(
    std: &StandardizedDesign,
    lambda: f64,
    warm: Option<&[f64]>,
) -> Result<LassoFit> {
    coordinate_descent_traced(std, lambda, warm, None)
}

/// As [`coordinate_descent`], recording the objective before the first sweep
/// and after every sweep.
pub fn coordinate_descent_traced(
    std: &StandardizedDesign,
    lambda: f64,
    warm: Option<&[f64]>,
    trace: Option<&mut Vec<f64>>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = std.columns.len();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.to_vec(),
        _ => vec![0.0; p],
    };
    let mut resid = residual(std, &beta);
    let sweeps = cd_solve(std, lambda, &mut beta, &mut resid, trace)?;
    Ok(finish_fit(std, lambda, beta, &resid, sweeps))
}

/// Null model: every coefficient zero, intercept at the response mean.
pub fn null_fit(std: &StandardizedDesign, lambda: f64) -> LassoFit {
    let beta = vec![0.0; std.columns.len()];
    finish_fit(std, lambda, beta, &std.y, 0)
}

/// Largest KKT violation of `fit`: `|g_j - lambda * sign(beta_j)|` for active
/// coordinates and `max(|g_j| - lambda, 0)` for inactive ones, where
/// `g_j = <x_j, r> / n` on the standardized scale.
pub fn kkt_violation(std: &StandardizedDesign, fit: &LassoFit) -> f64 {
    let r = residual(std, &fit.std_beta);
    let n = std.n as f64;
    std.columns
        .iter()
        .zip(&fit.std_beta)
        .map(|(c, &b)| {
            let g = dot(c, &r) / n;
            if b != 0.0 {
                (g - fit.lambda * b.signum()).abs()
            } else {
                (g.abs() - fit.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Log-spaced descending grid from `lambda_max` to `ratio * lambda_max`.
pub fn lambda_path(std: &StandardizedDesign, n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::InvalidParameter("n_lambda must be >= 2".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let top = lambda_max(std);
    if !(top > 0.0) {
        return Err(Error::AllZeroCorrelation);
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    let mut grid: Vec<f64> = (0..n_lambda).map(|i| top * (step * i as f64).exp()).collect();
    grid[0] = top;
    Ok(grid)
}

/// Warm-started fits along a descending grid.
pub fn fit_path(std: &StandardizedDesign, grid: &[f64]) -> Result<Vec<LassoFit>> {
    let mut fits = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in grid {
        let fit = coordinate_descent(std, lambda, warm.as_deref())?;
        warm = Some(fit.std_beta.clone());
        fits.push(fit);
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvScheme {
    Random,
    /// `k` consecutive segments, for serially dependent rows.
    #[default]
    ContiguousBlocks,
}

impl CvScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            CvScheme::Random => "random",
            CvScheme::ContiguousBlocks => "blocks",
        }
    }
}

impl std::str::FromStr for CvScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(CvScheme::Random),
            "blocks" | "contiguous" => Ok(CvScheme::ContiguousBlocks),
            other => Err(Error::Config(format!("unknown cv scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub scheme: CvScheme,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            scheme: CvScheme::ContiguousBlocks,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaRule {
    #[default]
    Min,
    OneSe,
}

impl LambdaRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            LambdaRule::Min => "lambda_min",
            LambdaRule::OneSe => "lambda_1se",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub index_min: usize,
    pub index_1se: usize,
    pub lambda_min: f64,
    pub lambda_1se: f64,
}

impl CvResult {
    pub fn index(&self, rule: LambdaRule) -> usize {
        match rule {
            LambdaRule::Min => self.index_min,
            LambdaRule::OneSe => self.index_1se,
        }
    }

    pub fn lambda(&self, rule: LambdaRule) -> f64 {
        self.lambda_grid[self.index(rule)]
    }
}

/// Assignment of each row to a fold.
pub fn fold_assignment(n: usize, k: usize, scheme: CvScheme, seed: u64) -> Vec<usize> {
    match scheme {
        CvScheme::ContiguousBlocks => (0..n).map(|i| i * k / n).collect(),
        CvScheme::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut fold = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                fold[row] = pos % k;
            }
            fold
        }
    }
}

/// Held-out mean squared error along `grid` for each fold.
fn fold_errors(design: &DesignMatrix, y: &[f64], grid: &[f64], folds: &[usize], f: usize) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
    let d_train = design.select_rows(&train);
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let d_test = design.select_rows(&test);
    let std = standardize(&d_train, &y_train)?;
    let fits = fit_path(&std, grid)?;
    Ok(fits
        .iter()
        .map(|fit| {
            let pred = fit.predict(&d_test);
            test.iter()
                .zip(&pred)
                .map(|(&i, p)| (y[i] - p).powi(2))
                .sum::<f64>()
                / test.len() as f64
        })
        .collect())
}

/// K-fold cross-validation over `grid`. Folds are fitted independently with
/// their own standardization and warm starts along the grid.
pub fn cross_validate(
    design: &DesignMatrix,
    y: &[f64],
    grid: &[f64],
    opts: &CvOptions,
) -> Result<CvResult> {
    let n = y.len();
    let k = opts.folds;
    if k < 2 || n < 2 * k {
        return Err(Error::TooFewRows { rows: n, folds: k });
    }
    if design.n() != n {
        return Err(Error::LengthMismatch {
            expected: design.n(),
            actual: n,
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let folds = fold_assignment(n, k, opts.scheme, opts.seed);
    let errors = par::try_map_range(k, |f| fold_errors(design, y, grid, &folds, f))?;
    let kf = k as f64;
    let mut cv_mean = Vec::with_capacity(grid.len());
    let mut cv_se = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let m = errors.iter().map(|e| e[i]).sum::<f64>() / kf;
        let var = errors.iter().map(|e| (e[i] - m).powi(2)).sum::<f64>() / (kf - 1.0);
        cv_mean.push(m);
        cv_se.push((var / kf).sqrt());
    }
    let mut index_min = 0;
    for i in 1..grid.len() {
        if cv_mean[i] < cv_mean[index_min] {
            index_min = i;
        }
    }
    let bound = cv_mean[index_min] + cv_se[index_min];
    let index_1se = (0..=index_min)
        .find(|&i| cv_mean[i] <= bound)
        .unwrap_or(index_min);
    Ok(CvResult {
        lambda_min: grid[index_min],
        lambda_1se: grid[index_1se],
        lambda_grid: grid.to_vec(),
        cv_mean,
        cv_se,
        index_min,
        index_1se,
    })
}

fn total_sum_of_squares(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum()
}

/// `1 - RSS / TSS`.
pub fn r_squared(fit: &LassoFit, y: &[f64]) -> Result<f64> {
    let tss = total_sum_of_squares(y);
    if tss == 0.0 {
        return Err(Error::ZeroVarianceResponse);
    }
    Ok(1.0 - fit.rss / tss)
}

/// `(RSS / n) / (1 - (df + 1) / n)^2`; infinite once the effective degrees of
/// freedom reach `n`.
pub fn gcv(fit: &LassoFit, y: &[f64]) -> f64 {
    gcv_from_parts(fit.rss, y.len(), fit.df + 1)
}

pub fn gcv_from_parts(rss: f64, n: usize, df_eff: usize) -> f64 {
    let n = n as f64;
    let shrink = 1.0 - df_eff as f64 / n;
    if shrink <= 0.0 {
        return f64::INFINITY;
    }
    (rss / n) / (shrink * shrink)
}
