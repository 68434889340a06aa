//! Series representation, extrema detection and cubic-spline envelopes: the
//! inner kernel of every sifting iteration.

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Uniformly sampled real series with unit sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    start: Option<NaiveDate>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self { values, start: None })
    }

    pub fn with_start(values: Vec<f64>, start: NaiveDate) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self {
            values,
            start: Some(start),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn start(&self) -> Option<NaiveDate> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteInput { index }),
        None => Ok(()),
    }
}

/// Local maxima and minima as `(index, value)` pairs in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtremaSet {
    pub maxima: Vec<(usize, f64)>,
    pub minima: Vec<(usize, f64)>,
}

impl ExtremaSet {
    pub fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }

    pub fn max_indices(&self) -> Vec<usize> {
        self.maxima.iter().map(|&(i, _)| i).collect()
    }

    pub fn min_indices(&self) -> Vec<usize> {
        self.minima.iter().map(|&(i, _)| i).collect()
    }
}

/// Edge treatment applied to the knot list before spline fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Reflect the first and last two extrema across the series endpoints.
    #[default]
    Mirror,
    /// Pin the envelope at both endpoints to the value of the nearest extremum.
    ClampEndpoints,
}

impl BoundaryPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryPolicy::Mirror => "mirror",
            BoundaryPolicy::ClampEndpoints => "clamp",
        }
    }
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirror" => Ok(BoundaryPolicy::Mirror),
            "clamp" | "clamp_endpoints" => Ok(BoundaryPolicy::ClampEndpoints),
            other => Err(Error::Config(format!("unknown boundary policy `{other}`"))),
        }
    }
}

/// Upper and lower spline envelopes of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Finds strict local extrema. A plateau flanked on both sides by lower
/// (resp. higher) samples yields one maximum (resp. minimum) at its midpoint,
/// rounded down. Endpoints are never extrema.
pub fn find_extrema(values: &[f64]) -> Result<ExtremaSet> {
    let n = values.len();
    if n < 3 {
        return Err(Error::SeriesTooShort {
            required: 3,
            actual: n,
        });
    }
    let mut out = ExtremaSet::default();
    let mut start = 1;
    while start < n - 1 {
        let v = values[start];
        let mut end = start;
        while end + 1 < n && values[end + 1] == v {
            end += 1;
        }
        if end < n - 1 {
            let left = values[start - 1];
            let right = values[end + 1];
            let mid = (start + end) / 2;
            if left < v && right < v {
                out.maxima.push((mid, v));
            } else if left > v && right > v {
                out.minima.push((mid, v));
            }
        }
        start = end + 1;
    }
    Ok(out)
}

/// Number of sign changes, counting a run of exact zeros between opposite
/// signs as one crossing.
pub fn zero_crossings(values: &[f64]) -> usize {
    let mut count = 0;
    let mut last_sign = 0i8;
    for &v in values {
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                count += 1;
            }
            last_sign = s;
        }
    }
    count
}

/// Knot positions after boundary extension, each paired with the sample index
/// whose value the knot carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedKnots {
    pub positions: Vec<f64>,
    pub sources: Vec<usize>,
}

/// Applies `boundary` to the knot indices of a length-`n` series.
pub fn extend_knots(indices: &[usize], n: usize, boundary: BoundaryPolicy) -> ExtendedKnots {
    let mut positions = Vec::with_capacity(indices.len() + 4);
    let mut sources = Vec::with_capacity(indices.len() + 4);
    if indices.is_empty() {
        return ExtendedKnots { positions, sources };
    }
    let last = (n - 1) as f64;
    match boundary {
        BoundaryPolicy::Mirror => {
            for &i in indices.iter().take(2).rev() {
                if i > 0 {
                    positions.push(-(i as f64));
                    sources.push(i);
                }
            }
            for &i in indices {
                positions.push(i as f64);
                sources.push(i);
            }
            for &i in indices.iter().rev().take(2) {
                if i < n - 1 {
                    positions.push(2.0 * last - i as f64);
                    sources.push(i);
                }
            }
        }
        BoundaryPolicy::ClampEndpoints => {
            let first = indices[0];
            let tail = indices[indices.len() - 1];
            if first > 0 {
                positions.push(0.0);
                sources.push(first);
            }
            for &i in indices {
                positions.push(i as f64);
                sources.push(i);
            }
            if tail < n - 1 {
                positions.push(last);
                sources.push(tail);
            }
        }
    }
    ExtendedKnots { positions, sources }
}

/// Natural cubic spline over a fixed set of knot positions. The tridiagonal
/// factorisation is shared, so several value vectors over the same knots
/// (one per channel) cost one back-substitution each.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    h: Vec<f64>,
    // Thomas factorisation of the interior system.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(xs: &[f64]) -> Result<Self> {
        let m = xs.len();
        if m < 2 {
            return Err(Error::InsufficientExtrema);
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let interior = m.saturating_sub(2);
        let mut c_prime = vec![0.0; interior];
        let mut denom = vec![0.0; interior];
        for r in 0..interior {
            let sub = h[r];
            let diag = 2.0 * (h[r] + h[r + 1]);
            let sup = h[r + 1];
            let d = if r == 0 { diag } else { diag - sub * c_prime[r - 1] };
            denom[r] = d;
            c_prime[r] = sup / d;
        }
        Ok(Self {
            xs: xs.to_vec(),
            h,
            c_prime,
            denom,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    /// Second derivatives at the knots for the given knot values.
    fn second_derivatives(&self, ys: &[f64]) -> Vec<f64> {
        let m = self.xs.len();
        let mut second = vec![0.0; m];
        let interior = m - 2;
        if interior == 0 {
            return second;
        }
        let h = &self.h;
        let mut d_prime = vec![0.0; interior];
        for r in 0..interior {
            let i = r + 1;
            let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
            d_prime[r] = if r == 0 {
                rhs / self.denom[0]
            } else {
                (rhs - h[r] * d_prime[r - 1]) / self.denom[r]
            };
        }
        second[interior] = d_prime[interior - 1];
        for r in (0..interior - 1).rev() {
            second[r + 1] = d_prime[r] - self.c_prime[r] * second[r + 2];
        }
        second
    }

    /// Evaluates the spline at sample positions `0..out.len()`. Positions
    /// outside the knot range use the nearest end segment's cubic.
    pub fn eval_grid(&self, ys: &[f64], out: &mut [f64]) {
        debug_assert_eq!(ys.len(), self.xs.len());
        let second = self.second_derivatives(ys);
        let xs = &self.xs;
        let n_seg = xs.len() - 1;
        let len = out.len();
        let mut t = 0usize;
        for seg in 0..n_seg {
            // Samples t < xs[seg + 1]; the last segment takes the rest.
            let stop = if seg + 1 == n_seg {
                len
            } else {
                let edge = xs[seg + 1];
                if edge < 0.0 {
                    continue;
                }
                (edge.ceil() as usize).min(len)
            };
            if t >= stop {
                continue;
            }
            let h = self.h[seg];
            let (y0, y1) = (ys[seg], ys[seg + 1]);
            let (m0, m1) = (second[seg], second[seg + 1]);
            let b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
            let c = 0.5 * m0;
            let e = (m1 - m0) / (6.0 * h);
            let x0 = xs[seg];
            for (i, slot) in out[t..stop].iter_mut().enumerate() {
                let d = (t + i) as f64 - x0;
                *slot = y0 + d * (b + d * (c + d * e));
            }
            t = stop;
        }
    }
}

/// Natural cubic spline through `knots` after boundary extension, evaluated at
/// every sample index of `series`.
pub fn spline_envelope(
    series: &[f64],
    knots: &[(usize, f64)],
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    let n = series.len();
    let indices: Vec<usize> = knots.iter().map(|&(i, _)| i).collect();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!(
            "knot index {bad} outside series of length {n}"
        )));
    }
    let ext = extend_knots(&indices, n, boundary);
    if ext.positions.len() < 2 {
        return Err(Error::InsufficientExtrema);
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "knot indices must be strictly increasing".into(),
        ));
    }
    let value_at = |src: usize| match indices.binary_search(&src) {
        Ok(k) => knots[k].1,
        Err(_) => series[src],
    };
    let ys: Vec<f64> = ext.sources.iter().map(|&s| value_at(s)).collect();
    let spline = NaturalSpline::new(&ext.positions)?;
    let mut out = vec![0.0; n];
    spline.eval_grid(&ys, &mut out);
    Ok(out)
}

/// Upper and lower envelopes of `values`; fails when either extremum list is
/// empty.
pub fn envelope(values: &[f64], boundary: BoundaryPolicy) -> Result<Envelope> {
    let ext = find_extrema(values)?;
    envelope_from_extrema(values, &ext, boundary)
}

pub fn envelope_from_extrema(
    values: &[f64],
    ext: &ExtremaSet,
    boundary: BoundaryPolicy,
) -> Result<Envelope> {
    if ext.maxima.is_empty() || ext.minima.is_empty() {
        return Err(Error::InsufficientExtrema);
    }
    Ok(Envelope {
        upper: knot_spline(values, &ext.max_indices(), boundary)?,
        lower: knot_spline(values, &ext.min_indices(), boundary)?,
    })
}

fn knot_spline(values: &[f64], indices: &[usize], boundary: BoundaryPolicy) -> Result<Vec<f64>> {
    let ext = extend_knots(indices, values.len(), boundary);
    let spline = NaturalSpline::new(&ext.positions)?;
    let ys: Vec<f64> = ext.sources.iter().map(|&s| values[s]).collect();
    let mut out = vec![0.0; values.len()];
    spline.eval_grid(&ys, &mut out);
    Ok(out)
}

/// Midline `(upper + lower) / 2` of an envelope.
pub fn envelope_mean(env: &Envelope) -> Result<Vec<f64>> {
    if env.upper.len() != env.lower.len() {
        return Err(Error::LengthMismatch {
            expected: env.upper.len(),
            actual: env.lower.len(),
        });
    }
    Ok(env
        .upper
        .iter()
        .zip(&env.lower)
        .map(|(u, l)| 0.5 * (u + l))
        .collect())
}
