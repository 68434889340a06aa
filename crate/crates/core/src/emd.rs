//! Univariate empirical mode decomposition by sifting, and per-IMF
//! descriptive statistics.

use chrono::{Datelike, Days, NaiveDate};
use log::warn;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{
    check_finite, envelope, envelope_mean, find_extrema, zero_crossings, BoundaryPolicy, Envelope,
};

/// Hard ceiling on extracted modes when `max_imfs` is unset.
pub const IMF_SAFETY_CAP: usize = 64;

/// Amplitudes below this are excluded from the sifting stop test.
const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Sifting parameters. Thresholds follow the usual two-threshold stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
    pub max_sift_iters: usize,
    pub max_imfs: Option<usize>,
    pub boundary: BoundaryPolicy,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            theta1: 0.05,
            theta2: 0.5,
            alpha: 0.05,
            max_sift_iters: 200,
            max_imfs: None,
            boundary: BoundaryPolicy::Mirror,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0 && self.theta1 < self.theta2) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < theta1 < theta2, got theta1 = {}, theta2 = {}",
                self.theta1, self.theta2
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_sift_iters == 0 {
            return Err(Error::InvalidParameter("max_sift_iters must be >= 1".into()));
        }
        if self.max_imfs == Some(0) {
            return Err(Error::InvalidParameter("max_imfs must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn imf_cap(&self) -> usize {
        self.max_imfs.unwrap_or(IMF_SAFETY_CAP)
    }
}

/// An intrinsic mode function, `order` counted from 1 (fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Imf {
    pub values: Vec<f64>,
    pub order: usize,
}

impl Imf {
    pub fn new(values: Vec<f64>, order: usize) -> Self {
        Self { values, order }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_period(&self) -> Result<f64> {
        mean_period(&self.values)
    }

    pub fn peak_to_peak_amplitude(&self) -> Result<f64> {
        peak_to_peak_amplitude(&self.values)
    }

    pub fn instantaneous_amplitude(&self) -> Vec<f64> {
        instantaneous_amplitude(&self.values)
    }

    /// Extrema count and zero-crossing count differ by at most one.
    pub fn satisfies_mode_property(&self) -> bool {
        let ext = match find_extrema(&self.values) {
            Ok(e) => e.count() as i64,
            Err(_) => return false,
        };
        (ext - zero_crossings(&self.values) as i64).abs() <= 1
    }
}

/// Ordered IMFs (fastest first) plus the residue.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub imfs: Vec<Imf>,
    pub residue: Vec<f64>,
    pub source_len: usize,
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.imfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imfs.is_empty()
    }

    /// `sum_k C_k(t) + r(t)`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(&imf.values) {
                *o += v;
            }
        }
        out
    }

    /// `max_t |x(t) - reconstruct(t)|`.
    pub fn reconstruction_error(&self, source: &[f64]) -> f64 {
        self.reconstruct()
            .iter()
            .zip(source)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One sifting step: `h - mean(envelope(h))`. Returns the new prototype and
/// the subtracted mean.
pub fn sift_once(h: &[f64], boundary: BoundaryPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    let env = envelope(h, boundary)?;
    let m = envelope_mean(&env)?;
    let next = h.iter().zip(&m).map(|(a, b)| a - b).collect();
    Ok((next, m))
}

/// Two-threshold test on the evaluation function `sigma = |mean| / amplitude`:
/// `sigma < theta1` on at least `1 - alpha` of the samples and
/// `sigma < theta2` everywhere. Samples with vanishing amplitude are skipped.
pub fn stop_criterion<I>(sigma_parts: I, params: &SiftParams) -> bool
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut valid = 0usize;
    let mut below = 0usize;
    for (mean_abs, amp) in sigma_parts {
        if amp < AMPLITUDE_FLOOR {
            continue;
        }
        let sigma = mean_abs / amp;
        if sigma >= params.theta2 {
            return false;
        }
        valid += 1;
        if sigma < params.theta1 {
            below += 1;
        }
    }
    below as f64 >= (1.0 - params.alpha) * valid as f64
}

pub fn rilling_stop(h: &[f64], env: &Envelope, params: &SiftParams) -> bool {
    debug_assert_eq!(h.len(), env.upper.len());
    stop_criterion(
        env.upper
            .iter()
            .zip(&env.lower)
            .map(|(u, l)| ((0.5 * (u + l)).abs(), 0.5 * (u - l))),
        params,
    )
}

/// Sifts one IMF out of `residual`. Returns the IMF and the number of sifting
/// iterations, or `None` iterations when the cap was hit.
fn extract_imf(residual: &[f64], params: &SiftParams) -> (Vec<f64>, Option<usize>) {
    let mut h = residual.to_vec();
    for iter in 0..params.max_sift_iters {
        let env = match envelope(&h, params.boundary) {
            Ok(env) => env,
            Err(_) => return (h, Some(iter)),
        };
        if rilling_stop(&h, &env, params) {
            return (h, Some(iter));
        }
        for ((v, u), l) in h.iter_mut().zip(&env.upper).zip(&env.lower) {
            *v -= 0.5 * (u + l);
        }
    }
    (h, None)
}

/// Decomposes `series` into IMFs and a residue with fewer than two extrema.
pub fn emd_decompose(series: &[f64], params: &SiftParams) -> Result<Decomposition> {
    params.validate()?;
    let n = series.len();
    if n < 8 {
        return Err(Error::SeriesTooShort {
            required: 8,
            actual: n,
        });
    }
    check_finite(series)?;
    let mut residual = series.to_vec();
    let mut imfs = Vec::new();
    let mut warnings = Vec::new();
    let cap = params.imf_cap();
    while imfs.len() < cap {
        let ext = find_extrema(&residual)?;
        if ext.count() < 2 || ext.maxima.is_empty() || ext.minima.is_empty() {
            if ext.count() == 1 {
                log::debug!("residue keeps a single extremum; classified as trend");
            }
            break;
        }
        let (imf, iters) = extract_imf(&residual, params);
        if iters.is_none() {
            let msg = format!(
                "IMF {} hit the sifting cap of {} iterations",
                imfs.len() + 1,
                params.max_sift_iters
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        for (r, c) in residual.iter_mut().zip(&imf) {
            *r -= c;
        }
        imfs.push(Imf::new(imf, imfs.len() + 1));
    }
    if params.max_imfs.is_none() && imfs.len() == cap {
        let msg = format!("stopped at the safety cap of {cap} IMFs");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Decomposition {
        imfs,
        residue: residual,
        source_len: n,
        warnings,
    })
}

/// Mean spacing between consecutive maxima, in samples.
pub fn mean_period(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::TooFewPeaks);
    }
    let ext = find_extrema(values)?;
    let peaks = ext.max_indices();
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks);
    }
    Ok((peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64)
}

/// Mean of `|max - min|` over adjacent extremum pairs of opposite kind.
pub fn peak_to_peak_amplitude(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::TooFewExtrema);
    }
    let ext = find_extrema(values)?;
    if ext.maxima.is_empty() || ext.minima.is_empty() {
        return Err(Error::TooFewExtrema);
    }
    let mut merged: Vec<(usize, f64, bool)> = ext
        .maxima
        .iter()
        .map(|&(i, v)| (i, v, true))
        .chain(ext.minima.iter().map(|&(i, v)| (i, v, false)))
        .collect();
    merged.sort_by_key(|&(i, _, _)| i);
    let (sum, count) = merged
        .windows(2)
        .filter(|w| w[0].2 != w[1].2)
        .fold((0.0, 0usize), |(s, c), w| (s + (w[0].1 - w[1].1).abs(), c + 1));
    if count == 0 {
        return Err(Error::TooFewExtrema);
    }
    Ok(sum / count as f64)
}

/// Modulus of the analytic signal, with the Hilbert transform taken in the
/// frequency domain. No tapering: the first and last few percent of samples
/// carry edge effects.
pub fn instantaneous_amplitude(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // One-sided spectrum weights: DC and Nyquist kept, positive doubled.
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= w;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}

/// Instantaneous amplitude averaged by calendar day of year. Index `d - 1`
/// holds day `d`; day 366 only collects leap-year samples. Days without any
/// sample hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DayOfYearProfile {
    pub mean: Vec<f64>,
    pub count: Vec<usize>,
}

pub fn amplitude_by_day_of_year(imf: &[f64], start: Option<NaiveDate>) -> Result<DayOfYearProfile> {
    let start = start.ok_or(Error::MissingDateLabel)?;
    if imf.len() < 365 {
        return Err(Error::SeriesTooShort {
            required: 365,
            actual: imf.len(),
        });
    }
    let amp = instantaneous_amplitude(imf);
    let mut sum = vec![0.0; 366];
    let mut count = vec![0usize; 366];
    for (t, a) in amp.iter().enumerate() {
        let day = start
            .checked_add_days(Days::new(t as u64))
            .ok_or_else(|| Error::InvalidParameter("date overflow".into()))?;
        let d = day.ordinal0() as usize;
        sum[d] += a;
        count[d] += 1;
    }
    let mean = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    Ok(DayOfYearProfile { mean, count })
}
