//! Multivariate EMD through envelopes of scalar projections onto
//! quasi-uniform sphere directions, and its noise-assisted variant.

use chrono::NaiveDate;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::emd::{stop_criterion, Decomposition, Imf, SiftParams};
use crate::error::{Error, Result};
use crate::par;
use crate::signal::{check_finite, extend_knots, find_extrema, BoundaryPolicy, NaturalSpline};

/// Directions per parallel work unit; fixed so sums are reduced in the same
/// order whatever the thread count.
const DIRECTION_CHUNK: usize = 8;

/// Equal-length named channels sharing one time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSeries {
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
    start: Option<NaiveDate>,
}

impl MultichannelSeries {
    pub fn new(names: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != channels.len() {
            return Err(Error::BadDimension(format!(
                "{} names for {} channels",
                names.len(),
                channels.len()
            )));
        }
        if channels.is_empty() {
            return Err(Error::BadDimension("no channels".into()));
        }
        let n = channels[0].len();
        for (name, c) in names.iter().zip(&channels) {
            if c.len() != n {
                return Err(Error::ChannelLengthMismatch {
                    channel: name.clone(),
                    expected: n,
                    actual: c.len(),
                });
            }
            check_finite(c)?;
        }
        Ok(Self {
            names,
            channels,
            start: None,
        })
    }

    pub fn with_start(mut self, start: Option<NaiveDate>) -> Self {
        self.start = start;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.channels[i].as_slice())
    }

    pub fn start(&self) -> Option<NaiveDate> {
        self.start
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New series with `values` as the first channel.
    pub fn prepend(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        let mut names = vec![name.to_string()];
        names.extend(self.names.iter().cloned());
        let mut channels = vec![values];
        channels.extend(self.channels.iter().cloned());
        Ok(Self::new(names, channels)?.with_start(self.start))
    }
}

/// Unit vectors on the (p-1)-sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(k);
    let mut c = 2u64;
    while primes.len() < k {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// `int_0^phi sin^m(s) ds`.
fn sin_power_integral(m: usize, phi: f64) -> f64 {
    match m {
        0 => phi,
        1 => 1.0 - phi.cos(),
        _ => {
            let mf = m as f64;
            -phi.sin().powi(m as i32 - 1) * phi.cos() / mf
                + (mf - 1.0) / mf * sin_power_integral(m - 2, phi)
        }
    }
}

/// Inverse CDF of the polar-angle density proportional to `sin^m` on `[0, pi]`.
fn polar_angle(m: usize, u: f64) -> f64 {
    use std::f64::consts::PI;
    if m == 1 {
        return (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos();
    }
    let total = sin_power_integral(m, PI);
    let target = u * total;
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if sin_power_integral(m, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hammersley point set mapped to the sphere through hyperspherical
/// coordinates. The first Hammersley coordinate drives the azimuth, the
/// radical-inverse coordinates drive the polar angles through the inverse of
/// their marginal CDFs. `seed` offsets the radical-inverse index.
pub fn generate_directions(p: usize, count: usize, seed: u64) -> Result<DirectionSet> {
    use std::f64::consts::PI;
    if p < 2 {
        return Err(Error::BadDimension(format!("need p >= 2, got {p}")));
    }
    if count < 2 * p {
        return Err(Error::BadDimension(format!(
            "need at least {} directions for p = {p}, got {count}",
            2 * p
        )));
    }
    let primes = first_primes(p.saturating_sub(2));
    let offset = seed % (1 << 20);
    let mut vectors = Vec::with_capacity(count);
    for i in 0..count {
        let azimuth = 2.0 * PI * (i as f64 + 0.5) / count as f64;
        // Polar angles phi_1..phi_{p-2}; phi_j has density sin^{p-1-j}.
        let polars: Vec<f64> = primes
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let u = radical_inverse(i as u64 + offset + 1, b);
                polar_angle(p - 2 - j, u)
            })
            .collect();
        let mut v = Vec::with_capacity(p);
        let mut sin_prod = 1.0;
        for &phi in &polars {
            v.push(sin_prod * phi.cos());
            sin_prod *= phi.sin();
        }
        v.push(sin_prod * azimuth.cos());
        v.push(sin_prod * azimuth.sin());
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        vectors.push(v);
    }
    Ok(DirectionSet { dim: p, vectors })
}

/// Per-channel decompositions sharing a common IMF count.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateDecomposition {
    names: Vec<String>,
    per_channel: Vec<Decomposition>,
    pub warnings: Vec<String>,
}

impl MultivariateDecomposition {
    pub fn new(names: Vec<String>, per_channel: Vec<Decomposition>) -> Result<Self> {
        if names.len() != per_channel.len() || names.is_empty() {
            return Err(Error::BadDimension("names and channels disagree".into()));
        }
        let k = per_channel[0].len();
        if per_channel.iter().any(|d| d.len() != k) {
            return Err(Error::BadDimension("channels disagree on IMF count".into()));
        }
        Ok(Self {
            names,
            per_channel,
            warnings: Vec::new(),
        })
    }

    /// Common number of IMFs.
    pub fn k(&self) -> usize {
        self.per_channel[0].len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channels(&self) -> &[Decomposition] {
        &self.per_channel
    }

    pub fn get(&self, name: &str) -> Option<&Decomposition> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.per_channel[i])
    }
}

/// White-noise channels appended for the noise-assisted variant.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub n_noise: usize,
    pub variance_ratio: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            n_noise: 2,
            variance_ratio: 0.10,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_noise < 1 {
            return Err(Error::InvalidParameter("n_noise must be >= 1".into()));
        }
        if !(self.variance_ratio > 0.0 && self.variance_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "variance_ratio must lie in (0, 1), got {}",
                self.variance_ratio
            )));
        }
        Ok(())
    }
}

/// Direction-averaged envelope mean of a p-variate signal.
struct MeanEnvelope {
    /// Sum over contributing directions of `(upper + lower) / 2`, per channel.
    mean: Vec<Vec<f64>>,
    /// Sum over contributing directions of `|upper - lower| / 2`.
    amp: Vec<f64>,
    active: usize,
}

fn project(signal: &[Vec<f64>], dir: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (c, &w) in signal.iter().zip(dir) {
        for (o, x) in out.iter_mut().zip(c) {
            *o += w * x;
        }
    }
}

fn spline_channels(
    signal: &[Vec<f64>],
    indices: &[usize],
    boundary: BoundaryPolicy,
) -> Option<Vec<Vec<f64>>> {
    let n = signal[0].len();
    let ext = extend_knots(indices, n, boundary);
    let spline = NaturalSpline::new(&ext.positions).ok()?;
    let mut ys = vec![0.0; ext.sources.len()];
    Some(
        signal
            .iter()
            .map(|c| {
                for (y, &s) in ys.iter_mut().zip(&ext.sources) {
                    *y = c[s];
                }
                let mut out = vec![0.0; n];
                spline.eval_grid(&ys, &mut out);
                out
            })
            .collect(),
    )
}

fn multivariate_mean(
    signal: &[Vec<f64>],
    dirs: &DirectionSet,
    boundary: BoundaryPolicy,
) -> MeanEnvelope {
    let p = signal.len();
    let n = signal[0].len();
    let n_chunks = dirs.count().div_ceil(DIRECTION_CHUNK);
    let partials = par::map_range(n_chunks, |chunk| {
        let mut acc = MeanEnvelope {
            mean: vec![vec![0.0; n]; p],
            amp: vec![0.0; n],
            active: 0,
        };
        let mut proj = vec![0.0; n];
        let lo = chunk * DIRECTION_CHUNK;
        let hi = (lo + DIRECTION_CHUNK).min(dirs.count());
        for dir in &dirs.vectors[lo..hi] {
            project(signal, dir, &mut proj);
            let ext = match find_extrema(&proj) {
                Ok(e) => e,
                Err(_) => continue,
            };
            if ext.maxima.is_empty() || ext.minima.is_empty() || ext.count() < 3 {
                continue;
            }
            let upper = spline_channels(signal, &ext.max_indices(), boundary);
            let lower = spline_channels(signal, &ext.min_indices(), boundary);
            let (Some(upper), Some(lower)) = (upper, lower) else {
                continue;
            };
            acc.active += 1;
            let mut gap = vec![0.0; n];
            for c in 0..p {
                for t in 0..n {
                    let (u, l) = (upper[c][t], lower[c][t]);
                    acc.mean[c][t] += 0.5 * (u + l);
                    gap[t] += (u - l) * (u - l);
                }
            }
            for (a, g) in acc.amp.iter_mut().zip(&gap) {
                *a += 0.5 * g.sqrt();
            }
        }
        acc
    });
    let mut total = MeanEnvelope {
        mean: vec![vec![0.0; n]; p],
        amp: vec![0.0; n],
        active: 0,
    };
    for part in partials {
        total.active += part.active;
        for (tc, pc) in total.mean.iter_mut().zip(&part.mean) {
            for (a, b) in tc.iter_mut().zip(pc) {
                *a += b;
            }
        }
        for (a, b) in total.amp.iter_mut().zip(&part.amp) {
            *a += b;
        }
    }
    total
}

/// Number of directions whose projection of `signal` has at least three
/// extrema.
fn oscillating_projections(signal: &[Vec<f64>], dirs: &DirectionSet) -> usize {
    let n = signal[0].len();
    let counts = par::map_slice(&dirs.vectors, |dir| {
        let mut proj = vec![0.0; n];
        project(signal, dir, &mut proj);
        match find_extrema(&proj) {
            Ok(e) if e.count() >= 3 => 1usize,
            _ => 0,
        }
    });
    counts.into_iter().sum()
}

/// Sifts one multivariate IMF out of `residual`. Returns the IMF and whether
/// the iteration cap was hit.
fn extract_multivariate_imf(
    residual: &[Vec<f64>],
    dirs: &DirectionSet,
    params: &SiftParams,
) -> (Vec<Vec<f64>>, bool) {
    let mut h = residual.to_vec();
    for _ in 0..params.max_sift_iters {
        let env = multivariate_mean(&h, dirs, params.boundary);
        if env.active == 0 {
            return (h, false);
        }
        let scale = 1.0 / env.active as f64;
        let n = h[0].len();
        let parts = (0..n).map(|t| {
            let norm = env.mean.iter().map(|c| (c[t] * scale).powi(2)).sum::<f64>().sqrt();
            (norm, env.amp[t] * scale)
        });
        if stop_criterion(parts, params) {
            return (h, false);
        }
        for (hc, mc) in h.iter_mut().zip(&env.mean) {
            for (v, m) in hc.iter_mut().zip(mc) {
                *v -= m * scale;
            }
        }
    }
    (h, true)
}

/// Minimum number of oscillating projections for another IMF to be sifted.
const MIN_OSCILLATING_PROJECTIONS: usize = 3;

/// Per-channel IMFs (`[channel][order][t]`), per-channel residues and warnings.
type RawMemd = (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<String>);

fn memd_raw(channels: &[Vec<f64>], dirs: &DirectionSet, params: &SiftParams) -> Result<RawMemd> {
    params.validate()?;
    let p = channels.len();
    if p < 2 {
        return Err(Error::BadDimension(format!("need at least 2 channels, got {p}")));
    }
    if dirs.dim() != p {
        return Err(Error::BadDimension(format!(
            "directions have dimension {}, signal has {p} channels",
            dirs.dim()
        )));
    }
    let n = channels[0].len();
    if n < 8 * p {
        return Err(Error::SeriesTooShort {
            required: 8 * p,
            actual: n,
        });
    }
    let mut residual = channels.to_vec();
    let mut imfs: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut warnings = Vec::new();
    let cap = params.imf_cap();
    while imfs.len() < cap {
        if oscillating_projections(&residual, dirs) < MIN_OSCILLATING_PROJECTIONS {
            break;
        }
        let (imf, capped) = extract_multivariate_imf(&residual, dirs, params);
        if capped {
            let msg = format!(
                "multivariate IMF {} hit the sifting cap of {} iterations",
                imfs.len() + 1,
                params.max_sift_iters
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        for (rc, ic) in residual.iter_mut().zip(&imf) {
            for (r, v) in rc.iter_mut().zip(ic) {
                *r -= v;
            }
        }
        imfs.push(imf);
    }
    if params.max_imfs.is_none() && imfs.len() == cap {
        warnings.push(format!("stopped at the safety cap of {cap} IMFs"));
    }
    Ok((imfs, residual, warnings))
}

fn assemble(
    names: &[String],
    imfs: &[Vec<Vec<f64>>],
    residual: Vec<Vec<f64>>,
    keep: usize,
    n: usize,
    warnings: Vec<String>,
) -> Result<MultivariateDecomposition> {
    let per_channel = residual
        .into_iter()
        .take(keep)
        .enumerate()
        .map(|(c, residue)| Decomposition {
            imfs: imfs
                .iter()
                .enumerate()
                .map(|(k, imf)| Imf::new(imf[c].clone(), k + 1))
                .collect(),
            residue,
            source_len: n,
            warnings: Vec::new(),
        })
        .collect();
    let mut out = MultivariateDecomposition::new(names[..keep].to_vec(), per_channel)?;
    out.warnings = warnings;
    Ok(out)
}

/// Joint decomposition of all channels; every channel receives the same number
/// of IMFs.
pub fn memd_decompose(
    series: &MultichannelSeries,
    dirs: &DirectionSet,
    params: &SiftParams,
) -> Result<MultivariateDecomposition> {
    let (imfs, residual, warnings) = memd_raw(series.channels(), dirs, params)?;
    assemble(
        series.names(),
        &imfs,
        residual,
        series.dim(),
        series.len(),
        warnings,
    )
}

fn mean_and_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Noise-assisted MEMD: appends white-noise channels, decomposes jointly
/// and discards the noise channels. With `standardize` the data channels are
/// decomposed in z-scored form and the IMFs mapped back to original units.
pub fn na_memd_decompose(
    series: &MultichannelSeries,
    noise: &NoiseConfig,
    n_directions: usize,
    params: &SiftParams,
    standardize: bool,
) -> Result<MultivariateDecomposition> {
    noise.validate()?;
    let n = series.len();
    let scales: Vec<(f64, f64)> = series
        .channels()
        .iter()
        .map(|c| {
            let (m, s) = mean_and_sd(c);
            if standardize && s > 0.0 {
                (m, s)
            } else {
                (0.0, 1.0)
            }
        })
        .collect();
    let mut channels: Vec<Vec<f64>> = series
        .channels()
        .iter()
        .zip(&scales)
        .map(|(c, &(m, s))| {
            if standardize {
                c.iter().map(|v| (v - m) / s).collect()
            } else {
                c.clone()
            }
        })
        .collect();
    let base_var = channels
        .iter()
        .map(|c| mean_and_sd(c).1.powi(2))
        .sum::<f64>()
        / channels.len() as f64;
    let sd = (noise.variance_ratio * base_var).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, if sd > 0.0 { sd } else { 1.0 })
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for _ in 0..noise.n_noise {
        channels.push((0..n).map(|_| normal.sample(&mut rng)).collect());
    }
    let p = channels.len();
    let dirs = generate_directions(p, n_directions, noise.seed)?;
    let (imfs, residual, warnings) = memd_raw(&channels, &dirs, params)?;
    let keep = series.dim();
    let mut out = assemble(series.names(), &imfs, residual, keep, n, warnings)?;
    if standardize {
        for (d, (&(_, s), raw)) in out
            .per_channel
            .iter_mut()
            .zip(scales.iter().zip(series.channels()))
        {
            for imf in &mut d.imfs {
                imf.values.iter_mut().for_each(|v| *v *= s);
            }
            // Residue absorbs the rescaling error so the channel stays complete.
            let mut residue = raw.clone();
            for imf in &d.imfs {
                for (r, v) in residue.iter_mut().zip(&imf.values) {
                    *r -= v;
                }
            }
            d.residue = residue;
        }
    }
    Ok(out)
}
