//! EMD-regression designs.
//!
//! * `R1`: predictors alone are decomposed; one Lasso explains the raw
//!   response from all lagged predictor IMFs and residues.
//! * `R2`: response and predictors are decomposed jointly; each response IMF
//!   is regressed on the same-order predictor IMFs, the response residue on
//!   the predictor residues, and the predictions are summed.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{derive_seed, LassoOptions, RunConfig};
use crate::emd::Decomposition;
use crate::error::{Error, Result};
use crate::lasso::{
    coordinate_descent, cross_validate, fit_path, gcv_from_parts, lambda_path, null_fit,
    standardize, CvOptions, CvResult, DesignMatrix, LambdaRule, LassoFit,
};
use crate::memd::{na_memd_decompose, MultichannelSeries, MultivariateDecomposition};
use crate::par;
use crate::signal::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    R1,
    R2,
}

impl Design {
    pub fn as_str(&self) -> &'static str {
        match self {
            Design::R1 => "r1",
            Design::R2 => "r2",
        }
    }
}

fn parse_order(s: &str) -> Option<usize> {
    s.strip_prefix("imf")?.parse().ok().filter(|k| *k >= 1)
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1" => Ok(Design::R1),
            "r2" => Ok(Design::R2),
            other => Err(Error::InvalidParameter(format!("unknown design `{other}`"))),
        }
    }
}

/// Which part of a channel's decomposition a regressor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Imf(usize),
    Residue,
}

impl Component {
    pub fn label(&self) -> String {
        match self {
            Component::Imf(k) => format!("imf{k}"),
            Component::Residue => "residue".into(),
        }
    }

    fn values<'a>(&self, d: &'a Decomposition) -> &'a [f64] {
        match self {
            Component::Imf(k) => &d.imfs[k - 1].values,
            Component::Residue => &d.residue,
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "residue" {
            return Ok(Component::Residue);
        }
        parse_order(s)
            .map(Component::Imf)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown component `{s}`")))
    }
}

/// How a term's amplitude was measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeKind {
    /// Mean peak-to-peak amplitude of the oscillating component.
    PeakToPeak,
    /// `max - min` of a non-oscillating component.
    Range,
}

impl AmplitudeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AmplitudeKind::PeakToPeak => "peak_to_peak",
            AmplitudeKind::Range => "range",
        }
    }
}

impl FromStr for AmplitudeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak_to_peak" => Ok(AmplitudeKind::PeakToPeak),
            "range" => Ok(AmplitudeKind::Range),
            other => Err(Error::InvalidParameter(format!("unknown amplitude kind `{other}`"))),
        }
    }
}

/// One regressor: a lagged predictor component.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub predictor: String,
    pub component: Component,
    pub lag: usize,
    pub max_lag: usize,
    pub ccf: f64,
    pub mean_period: Option<f64>,
    pub amplitude: f64,
    pub amplitude_kind: AmplitudeKind,
}

impl Term {
    pub fn name(&self) -> String {
        format!("{}:{}", self.predictor, self.component.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmodelKind {
    /// The single R1 model on the raw response.
    Full,
    /// R2 model for response IMF `k`.
    Order(usize),
    /// R2 model for the response residue.
    Trend,
}

impl SubmodelKind {
    pub fn label(&self) -> String {
        match self {
            SubmodelKind::Full => "full".into(),
            SubmodelKind::Order(k) => format!("imf{k}"),
            SubmodelKind::Trend => "trend".into(),
        }
    }
}

impl FromStr for SubmodelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubmodelKind::Full),
            "trend" => Ok(SubmodelKind::Trend),
            other => parse_order(other)
                .map(SubmodelKind::Order)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown submodel `{other}`"))),
        }
    }
}

/// One fitted Lasso with the regression problem it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct Submodel {
    pub kind: SubmodelKind,
    pub terms: Vec<Term>,
    pub design: DesignMatrix,
    pub response: Vec<f64>,
    pub rule: LambdaRule,
    pub cv: Option<CvResult>,
    pub fit: LassoFit,
    pub fitted: Vec<f64>,
    /// For one-SE fits: whether the support is contained in the lambda-min support.
    pub support_nested: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdrModel {
    pub design: Design,
    pub response_name: String,
    pub predictor_names: Vec<String>,
    pub decomposition: MultivariateDecomposition,
    /// Leading rows dropped so that every lagged regressor is defined.
    pub trim: usize,
    /// Observed response on the retained rows.
    pub observed: Vec<f64>,
    pub submodels: Vec<Submodel>,
    pub warnings: Vec<String>,
}

impl EmdrModel {
    /// Training predictions: the single fit for R1, the sum over submodels for R2.
    pub fn fitted(&self) -> Vec<f64> {
        sum_predictions(self.submodels.iter().map(|s| s.fitted.as_slice()), self.observed.len())
    }

    pub fn rss(&self) -> f64 {
        self.fitted()
            .iter()
            .zip(&self.observed)
            .map(|(f, y)| (y - f).powi(2))
            .sum()
    }

    /// In-sample `R^2` of [`EmdrModel::fitted`] against the observed response.
    pub fn r_squared(&self) -> Result<f64> {
        let n = self.observed.len() as f64;
        let m = self.observed.iter().sum::<f64>() / n;
        let tss: f64 = self.observed.iter().map(|y| (y - m).powi(2)).sum();
        if tss == 0.0 {
            return Err(Error::ZeroVarianceResponse);
        }
        Ok(1.0 - self.rss() / tss)
    }

    /// Effective degrees of freedom: nonzero coefficients plus one intercept
    /// per submodel.
    pub fn df_eff(&self) -> usize {
        self.submodels.iter().map(|s| s.fit.df + 1).sum()
    }

    pub fn gcv(&self) -> f64 {
        gcv_from_parts(self.rss(), self.observed.len(), self.df_eff())
    }

    pub fn n_rows(&self) -> usize {
        self.observed.len()
    }
}

fn sum_predictions<'a, I>(parts: I, n: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = vec![0.0; n];
    for part in parts {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

fn centred(values: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let scale = (dev.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    (scale > 0.0 && scale.is_finite()).then_some((dev, scale))
}

/// Sample cross-correlation of `imf` leading `target` by each lag in
/// `0..=max_lag`: full-sample means and scales, lag products summed over the
/// overlap and divided by `n`.
pub fn cross_correlation(imf: &[f64], target: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = imf.len();
    if target.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: target.len(),
        });
    }
    let (Some((dx, sx)), Some((dy, sy))) = (centred(imf), centred(target)) else {
        return Err(Error::DegenerateSeries);
    };
    let norm = n as f64 * sx * sy;
    Ok((0..=max_lag.min(n - 1))
        .map(|lag| dx[..n - lag].iter().zip(&dy[lag..]).map(|(a, b)| a * b).sum::<f64>() / norm)
        .collect())
}

/// Lag in `0..=max_lag` maximising `|ccf|` of `imf(t - lag)` against
/// `target(t)`. Ties go to the smaller lag.
pub fn select_lag(imf: &[f64], target: &[f64], max_lag: usize) -> Result<(usize, f64)> {
    let ccf = cross_correlation(imf, target, max_lag)?;
    let mut best = (0, ccf[0]);
    for (lag, &c) in ccf.iter().enumerate().skip(1) {
        if c.abs() > best.1.abs() + 1e-12 {
            best = (lag, c);
        }
    }
    Ok(best)
}

/// Upper lag bound for a component: `min(floor(mean period), n / 4)`, zero
/// for components without two maxima.
pub fn lag_bound(values: &[f64]) -> usize {
    match crate::emd::mean_period(values) {
        Ok(period) => (period.floor() as usize).min(values.len() / 4),
        Err(_) => 0,
    }
}

fn build_term(predictor: &str, component: Component, values: &[f64], target: &[f64]) -> Term {
    let (mean_period, max_lag) = match component {
        Component::Imf(_) => (crate::emd::mean_period(values).ok(), lag_bound(values)),
        Component::Residue => (None, 0),
    };
    let (lag, ccf) = select_lag(values, target, max_lag).unwrap_or((0, 0.0));
    let (amplitude, amplitude_kind) = match component {
        Component::Imf(_) => match crate::emd::peak_to_peak_amplitude(values) {
            Ok(a) => (a, AmplitudeKind::PeakToPeak),
            Err(_) => (range(values), AmplitudeKind::Range),
        },
        Component::Residue => (range(values), AmplitudeKind::Range),
    };
    Term {
        predictor: predictor.to_string(),
        component,
        lag,
        max_lag,
        ccf,
        mean_period,
        amplitude,
        amplitude_kind,
    }
}

fn range(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// `values[trim - lag ..][.. n - trim]`: the regressor aligned to rows
/// `trim..n` of the response.
fn lagged(values: &[f64], lag: usize, trim: usize) -> Vec<f64> {
    values[trim - lag..values.len() - lag].to_vec()
}

fn design_for(terms: &[Term], sources: &[&Decomposition], names: &[String], trim: usize) -> Result<DesignMatrix> {
    let columns = terms
        .iter()
        .map(|t| {
            let j = names
                .iter()
                .position(|n| *n == t.predictor)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown predictor `{}`", t.predictor)))?;
            Ok(lagged(t.component.values(sources[j]), t.lag, trim))
        })
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::new(terms.iter().map(Term::name).collect(), columns)
}

struct SubmodelFit {
    cv: Option<CvResult>,
    fit: LassoFit,
    support_nested: Option<bool>,
}

/// Cross-validates over the full lambda path of `design` and refits at the
/// lambda picked by `rule`. Responses no predictor correlates with get the
/// null model.
fn fit_regression(
    design: &DesignMatrix,
    response: &[f64],
    rule: LambdaRule,
    lasso: &LassoOptions,
    cv_opts: &CvOptions,
) -> Result<SubmodelFit> {
    let std = standardize(design, response)?;
    let grid = match lambda_path(&std, lasso.n_lambda, lasso.ratio) {
        Ok(g) => g,
        Err(Error::AllZeroCorrelation) => {
            return Ok(SubmodelFit {
                cv: None,
                fit: null_fit(&std, 0.0),
                support_nested: None,
            })
        }
        Err(e) => return Err(e),
    };
    let cv = cross_validate(design, response, &grid, cv_opts)?;
    let chosen = cv.index(rule);
    let last = chosen.max(cv.index_min);
    let fits = fit_path(&std, &grid[..=last])?;
    let fit = fits[chosen].clone();
    let support_nested = (rule == LambdaRule::OneSe).then(|| {
        let wide = fits[cv.index_min].support();
        fit.support().iter().all(|j| wide.contains(j))
    });
    Ok(SubmodelFit {
        cv: Some(cv),
        fit,
        support_nested,
    })
}

fn check_inputs(y: &TimeSeries, predictors: &MultichannelSeries) -> Result<()> {
    if y.len() != predictors.len() {
        return Err(Error::LengthMismatch {
            expected: predictors.len(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// R1: NA-MEMD of the predictors, then one Lasso of the raw response on all
/// lagged predictor IMFs and residues, with lambda by the one-SE rule.
pub fn fit_emdr1(y: &TimeSeries, predictors: &MultichannelSeries, config: &RunConfig) -> Result<EmdrModel> {
    check_inputs(y, predictors)?;
    let dec = na_memd_decompose(
        predictors,
        &config.noise_config(),
        config.directions,
        &config.sift,
        config.standardize,
    )?;
    let name = response_channel_name(config, predictors);
    fit_emdr1_with(y.values(), &name, dec, config)
}

/// R1 on an existing predictor decomposition.
pub fn fit_emdr1_with(
    y: &[f64],
    response_name: &str,
    decomposition: MultivariateDecomposition,
    config: &RunConfig,
) -> Result<EmdrModel> {
    let names = decomposition.names().to_vec();
    let sources: Vec<&Decomposition> = decomposition.channels().iter().collect();
    let n = y.len();
    if let Some(d) = sources.iter().find(|d| d.source_len != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: d.source_len,
        });
    }
    let mut terms = Vec::new();
    for (name, d) in names.iter().zip(&sources) {
        for imf in &d.imfs {
            terms.push(build_term(name, Component::Imf(imf.order), &imf.values, y));
        }
        terms.push(build_term(name, Component::Residue, &d.residue, y));
    }
    let trim = terms.iter().map(|t| t.lag).max().unwrap_or(0);
    let design = design_for(&terms, &sources, &names, trim)?;
    let response = y[trim..].to_vec();
    let sub = fit_regression(&design, &response, LambdaRule::OneSe, &config.lasso, &config.cv_options())?;
    let mut warnings = decomposition.warnings.clone();
    if sub.support_nested == Some(false) {
        warnings.push("lambda_1se support is not contained in the lambda_min support".into());
    }
    let fitted = sub.fit.predict(&design);
    Ok(EmdrModel {
        design: Design::R1,
        response_name: response_name.to_string(),
        predictor_names: names,
        decomposition,
        trim,
        observed: response.clone(),
        submodels: vec![Submodel {
            kind: SubmodelKind::Full,
            terms,
            design,
            response,
            rule: LambdaRule::OneSe,
            cv: sub.cv,
            fit: sub.fit,
            fitted,
            support_nested: sub.support_nested,
        }],
        warnings,
    })
}

/// R2: joint NA-MEMD of response and predictors, one Lasso per IMF order
/// and one for the trend, each with lambda at the CV minimum.
pub fn fit_emdr2(y: &TimeSeries, predictors: &MultichannelSeries, config: &RunConfig) -> Result<EmdrModel> {
    check_inputs(y, predictors)?;
    let response_name = response_channel_name(config, predictors);
    let joint = predictors.prepend(&response_name, y.values().to_vec())?;
    let dec = na_memd_decompose(
        &joint,
        &config.noise_config(),
        config.directions,
        &config.sift,
        config.standardize,
    )?;
    fit_emdr2_with(y.values(), &response_name, dec, config)
}

/// `config.response`, or `response` when unset, suffixed until it differs
/// from every predictor name.
fn response_channel_name(config: &RunConfig, predictors: &MultichannelSeries) -> String {
    let mut name = if config.response.is_empty() {
        "response".to_string()
    } else {
        config.response.clone()
    };
    while predictors.names().contains(&name) {
        name.push('_');
    }
    name
}

/// R2 on an existing joint decomposition that contains `response_name`.
pub fn fit_emdr2_with(
    y: &[f64],
    response_name: &str,
    decomposition: MultivariateDecomposition,
    config: &RunConfig,
) -> Result<EmdrModel> {
    let response_dec = decomposition
        .get(response_name)
        .ok_or_else(|| Error::InvalidParameter(format!("no channel `{response_name}` in decomposition")))?
        .clone();
    let n = y.len();
    let (names, sources): (Vec<String>, Vec<&Decomposition>) = decomposition
        .names()
        .iter()
        .zip(decomposition.channels())
        .filter(|(name, _)| name.as_str() != response_name)
        .map(|(name, d)| (name.clone(), d))
        .unzip();
    if names.is_empty() {
        return Err(Error::BadDimension("no predictor channels".into()));
    }
    if let Some(d) = sources.iter().find(|d| d.source_len != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: d.source_len,
        });
    }
    let k_common = decomposition.k();
    let mut blocks: Vec<(SubmodelKind, &[f64], Vec<Term>)> = Vec::with_capacity(k_common + 1);
    for k in 1..=k_common {
        let target = response_dec.imfs[k - 1].values.as_slice();
        let terms = names
            .iter()
            .zip(&sources)
            .map(|(name, d)| build_term(name, Component::Imf(k), &d.imfs[k - 1].values, target))
            .collect();
        blocks.push((SubmodelKind::Order(k), target, terms));
    }
    let trend_target = response_dec.residue.as_slice();
    let trend_terms = names
        .iter()
        .zip(&sources)
        .map(|(name, d)| build_term(name, Component::Residue, &d.residue, trend_target))
        .collect();
    blocks.push((SubmodelKind::Trend, trend_target, trend_terms));

    let trim = blocks
        .iter()
        .flat_map(|(_, _, terms)| terms.iter().map(|t| t.lag))
        .max()
        .unwrap_or(0);
    let cv_opts = config.cv_options();
    let submodels = par::try_map_range(blocks.len(), |b| {
        let (kind, target, terms) = &blocks[b];
        let design = design_for(terms, &sources, &names, trim)?;
        let response = target[trim..].to_vec();
        let sub = fit_regression(&design, &response, LambdaRule::Min, &config.lasso, &cv_opts)?;
        let fitted = sub.fit.predict(&design);
        Ok::<_, Error>(Submodel {
            kind: *kind,
            terms: terms.clone(),
            design,
            response,
            rule: LambdaRule::Min,
            cv: sub.cv,
            fit: sub.fit,
            fitted,
            support_nested: None,
        })
    })?;
    Ok(EmdrModel {
        design: Design::R2,
        response_name: response_name.to_string(),
        predictor_names: names,
        trim,
        observed: y[trim..].to_vec(),
        submodels,
        warnings: decomposition.warnings.clone(),
        decomposition,
    })
}

/// Sums the R2 submodel predictions on new predictor decompositions, given
/// in the model's predictor order with the model's IMF count. Rows before
/// the model's trim are dropped.
pub fn predict_r2(model: &EmdrModel, predictors: &[Decomposition]) -> Result<Vec<f64>> {
    if model.design != Design::R2 {
        return Err(Error::DesignMismatch { expected: "r2" });
    }
    if predictors.len() != model.predictor_names.len() {
        return Err(Error::BadDimension(format!(
            "expected {} predictor decompositions, got {}",
            model.predictor_names.len(),
            predictors.len()
        )));
    }
    let k_common = model.submodels.len() - 1;
    let n = predictors[0].source_len;
    for d in predictors {
        if d.len() != k_common {
            return Err(Error::BadDimension(format!(
                "decomposition has {} IMFs, model expects {k_common}",
                d.len()
            )));
        }
        if d.source_len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: d.source_len,
            });
        }
    }
    if n <= model.trim {
        return Err(Error::SeriesTooShort {
            required: model.trim + 1,
            actual: n,
        });
    }
    let sources: Vec<&Decomposition> = predictors.iter().collect();
    let parts = model
        .submodels
        .iter()
        .map(|s| Ok(s.fit.predict(&design_for(&s.terms, &sources, &model.predictor_names, model.trim)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_predictions(parts.iter().map(Vec::as_slice), n - model.trim))
}

/// One retained coefficient with its sensitivity `beta * amplitude`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub design: Design,
    pub submodel: SubmodelKind,
    pub predictor: String,
    pub component: Component,
    pub mean_period: Option<f64>,
    pub lag: usize,
    pub beta: f64,
    pub amplitude: f64,
    pub amplitude_kind: AmplitudeKind,
    pub sensitivity: f64,
    pub interval: Option<Interval>,
}

/// Percentile interval of a coefficient and the matching sensitivity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub s_lower: f64,
    pub s_upper: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityRow {
    /// Row for `term` with coefficient `beta`; `S = beta * A` by construction.
    pub fn new(design: Design, submodel: SubmodelKind, term: &Term, beta: f64, interval: Option<Interval>) -> Self {
        Self {
            design,
            submodel,
            predictor: term.predictor.clone(),
            component: term.component,
            mean_period: term.mean_period,
            lag: term.lag,
            beta,
            amplitude: term.amplitude,
            amplitude_kind: term.amplitude_kind,
            sensitivity: beta * term.amplitude,
            interval,
        }
    }
}

/// Whether a term gets a sensitivity row: retained IMFs and every residue.
pub fn reported(term: &Term, beta: f64) -> bool {
    beta != 0.0 || term.component == Component::Residue
}

/// Sensitivity rows for every nonzero IMF coefficient and every residue
/// term, with bootstrap intervals when `bootstrap` is given.
pub fn sensitivities(model: &EmdrModel, bootstrap: Option<&BootstrapResult>) -> SensitivityTable {
    let mut rows = Vec::new();
    for (s_idx, sub) in model.submodels.iter().enumerate() {
        for (j, term) in sub.terms.iter().enumerate() {
            let beta = sub.fit.beta[j];
            if !reported(term, beta) {
                continue;
            }
            let interval = bootstrap.map(|b| b.intervals[s_idx][j].with_amplitude(term.amplitude));
            rows.push(SensitivityRow::new(model.design, sub.kind, term, beta, interval));
        }
    }
    SensitivityTable { rows }
}

/// Percentile bounds of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefInterval {
    pub lower: f64,
    pub upper: f64,
}

impl CoefInterval {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Interval {
        let (a, b) = (self.lower * amplitude, self.upper * amplitude);
        Interval {
            beta_lower: self.lower,
            beta_upper: self.upper,
            s_lower: a.min(b),
            s_upper: a.max(b),
            significant: self.excludes_zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub reps: usize,
    pub block_len: usize,
    pub seed: u64,
    /// `intervals[s][j]`: coefficient `j` of problem `s`.
    pub intervals: Vec<Vec<CoefInterval>>,
}

/// A regression refitted on every replication at a fixed lambda.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapProblem<'a> {
    pub design: &'a DesignMatrix,
    pub response: &'a [f64],
    pub lambda: f64,
}

/// Row indices of one moving-block resample of `n` rows.
pub fn moving_block_indices<R: Rng>(n: usize, block_len: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n + block_len);
    while idx.len() < n {
        let start = rng.random_range(0..=n - block_len);
        idx.extend(start..start + block_len);
    }
    idx.truncate(n);
    idx
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Moving-block bootstrap over problems sharing one row axis. Every
/// replication draws one set of block starts, applies it to all problems and
/// refits each Lasso at its own fixed lambda. Replication `b` uses a stream
/// seeded from `(seed, b)`, so results do not depend on scheduling.
pub fn bootstrap_problems(
    problems: &[BootstrapProblem<'_>],
    reps: usize,
    block_len: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let n = problems.first().map_or(0, |p| p.response.len());
    if reps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replications, got {reps}")));
    }
    if block_len < 1 || block_len > n / 2 {
        return Err(Error::BadBlockLength { block_len, n });
    }
    for p in problems {
        if p.response.len() != n || p.design.n() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: p.response.len(),
            });
        }
    }
    let draws = par::try_map_range(reps, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
        let idx = moving_block_indices(n, block_len, &mut rng);
        problems
            .iter()
            .map(|p| {
                let design = p.design.select_rows(&idx);
                let response: Vec<f64> = idx.iter().map(|&i| p.response[i]).collect();
                let std = standardize(&design, &response)?;
                Ok(coordinate_descent(&std, p.lambda, None)?.beta)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let intervals = problems
        .iter()
        .enumerate()
        .map(|(s, p)| {
            (0..p.design.p())
                .map(|j| {
                    let mut v: Vec<f64> = draws.iter().map(|d| d[s][j]).collect();
                    v.sort_by(f64::total_cmp);
                    CoefInterval {
                        lower: quantile_sorted(&v, 0.025),
                        upper: quantile_sorted(&v, 0.975),
                    }
                })
                .collect()
        })
        .collect();
    Ok(BootstrapResult {
        reps,
        block_len,
        seed,
        intervals,
    })
}

/// Bootstrap of a fitted model with its decomposition and lags held fixed.
pub fn block_bootstrap(model: &EmdrModel, reps: usize, block_len: usize, seed: u64) -> Result<BootstrapResult> {
    let problems: Vec<BootstrapProblem<'_>> = model
        .submodels
        .iter()
        .map(|s| BootstrapProblem {
            design: &s.design,
            response: &s.response,
            lambda: s.fit.lambda,
        })
        .collect();
    bootstrap_problems(&problems, reps, block_len, seed)
}
