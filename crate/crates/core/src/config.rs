//! Run configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::emd::SiftParams;
use crate::error::{Error, Result};
use crate::lasso::{CvOptions, CvScheme};
use crate::memd::NoiseConfig;
use crate::signal::BoundaryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesignChoice {
    R1,
    R2,
    #[default]
    Both,
}

impl DesignChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignChoice::R1 => "r1",
            DesignChoice::R2 => "r2",
            DesignChoice::Both => "both",
        }
    }

    pub fn includes_r1(&self) -> bool {
        matches!(self, DesignChoice::R1 | DesignChoice::Both)
    }

    pub fn includes_r2(&self) -> bool {
        matches!(self, DesignChoice::R2 | DesignChoice::Both)
    }
}

impl FromStr for DesignChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1" => Ok(DesignChoice::R1),
            "r2" => Ok(DesignChoice::R2),
            "both" => Ok(DesignChoice::Both),
            other => Err(Error::Config(format!("unknown design `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    pub folds: usize,
    pub scheme: CvScheme,
    pub n_lambda: usize,
    pub ratio: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            scheme: CvScheme::ContiguousBlocks,
            n_lambda: 100,
            ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub reps: usize,
    /// `None` means `ceil(n^(1/3))`.
    pub block_len: Option<usize>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            reps: 500,
            block_len: None,
        }
    }
}

impl BootstrapOptions {
    pub fn resolved_block_len(&self, n: usize) -> usize {
        self.block_len
            .unwrap_or_else(|| (n as f64).cbrt().ceil() as usize)
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub response: String,
    pub predictors: Vec<String>,
    pub date_column: Option<String>,
    pub design: DesignChoice,
    pub sift: SiftParams,
    pub noise_channels: usize,
    pub noise_variance_ratio: f64,
    pub directions: usize,
    pub standardize: bool,
    pub lasso: LassoOptions,
    pub bootstrap: BootstrapOptions,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            response: String::new(),
            predictors: Vec::new(),
            date_column: None,
            design: DesignChoice::Both,
            sift: SiftParams::default(),
            noise_channels: 2,
            noise_variance_ratio: 0.10,
            directions: 128,
            standardize: true,
            lasso: LassoOptions::default(),
            bootstrap: BootstrapOptions::default(),
            seed: 0,
        }
    }
}

/// SplitMix64 finaliser; derives independent stream seeds from the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_NOISE: u64 = 1;
const STREAM_CV: u64 = 2;
const STREAM_BOOTSTRAP: u64 = 3;

/// Keys accepted in config files, in emission order.
pub const CONFIG_KEYS: &[&str] = &[
    "response",
    "predictors",
    "date_column",
    "design",
    "seed",
    "sift.theta1",
    "sift.theta2",
    "sift.alpha",
    "sift.max_iters",
    "sift.max_imfs",
    "sift.boundary",
    "noise.channels",
    "noise.variance_ratio",
    "memd.directions",
    "memd.standardize",
    "lasso.folds",
    "lasso.scheme",
    "lasso.n_lambda",
    "lasso.ratio",
    "bootstrap.reps",
    "bootstrap.block_len",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Sets one key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "response" => self.response = value.to_string(),
            "predictors" => {
                self.predictors = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "date_column" => {
                self.date_column = match value {
                    "" | "none" => None,
                    v => Some(v.to_string()),
                }
            }
            "design" => self.design = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "sift.theta1" => self.sift.theta1 = parse_num(key, value)?,
            "sift.theta2" => self.sift.theta2 = parse_num(key, value)?,
            "sift.alpha" => self.sift.alpha = parse_num(key, value)?,
            "sift.max_iters" => self.sift.max_sift_iters = parse_num(key, value)?,
            "sift.max_imfs" => {
                self.sift.max_imfs = match value {
                    "none" | "unlimited" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "sift.boundary" => self.sift.boundary = value.parse::<BoundaryPolicy>()?,
            "noise.channels" => self.noise_channels = parse_num(key, value)?,
            "noise.variance_ratio" => self.noise_variance_ratio = parse_num(key, value)?,
            "memd.directions" => self.directions = parse_num(key, value)?,
            "memd.standardize" => self.standardize = parse_bool(key, value)?,
            "lasso.folds" => self.lasso.folds = parse_num(key, value)?,
            "lasso.scheme" => self.lasso.scheme = value.parse()?,
            "lasso.n_lambda" => self.lasso.n_lambda = parse_num(key, value)?,
            "lasso.ratio" => self.lasso.ratio = parse_num(key, value)?,
            "bootstrap.reps" => self.bootstrap.reps = parse_num(key, value)?,
            "bootstrap.block_len" => {
                self.bootstrap.block_len = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value, defaults included.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("response", self.response.clone());
        put("predictors", self.predictors.join(","));
        put(
            "date_column",
            self.date_column.clone().unwrap_or_else(|| "none".into()),
        );
        put("design", self.design.as_str().into());
        put("seed", self.seed.to_string());
        put("sift.theta1", self.sift.theta1.to_string());
        put("sift.theta2", self.sift.theta2.to_string());
        put("sift.alpha", self.sift.alpha.to_string());
        put("sift.max_iters", self.sift.max_sift_iters.to_string());
        put(
            "sift.max_imfs",
            self.sift
                .max_imfs
                .map_or_else(|| "none".into(), |k| k.to_string()),
        );
        put("sift.boundary", self.sift.boundary.as_str().into());
        put("noise.channels", self.noise_channels.to_string());
        put("noise.variance_ratio", self.noise_variance_ratio.to_string());
        put("memd.directions", self.directions.to_string());
        put("memd.standardize", self.standardize.to_string());
        put("lasso.folds", self.lasso.folds.to_string());
        put("lasso.scheme", self.lasso.scheme.as_str().into());
        put("lasso.n_lambda", self.lasso.n_lambda.to_string());
        put("lasso.ratio", self.lasso.ratio.to_string());
        put("bootstrap.reps", self.bootstrap.reps.to_string());
        put(
            "bootstrap.block_len",
            self.bootstrap
                .block_len
                .map_or_else(|| "auto".into(), |b| b.to_string()),
        );
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(Error::Config("`response` is not set".into()));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config("`predictors` is empty".into()));
        }
        if self.predictors.contains(&self.response) {
            return Err(Error::Config(format!(
                "response `{}` is also listed as a predictor",
                self.response
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.predictors {
            if !seen.insert(p) {
                return Err(Error::Config(format!("predictor `{p}` listed twice")));
            }
        }
        self.sift.validate()?;
        self.noise_config().validate()?;
        if self.lasso.folds < 2 {
            return Err(Error::Config("`lasso.folds` must be >= 2".into()));
        }
        if self.lasso.n_lambda < 2 {
            return Err(Error::Config("`lasso.n_lambda` must be >= 2".into()));
        }
        if !(self.lasso.ratio > 0.0 && self.lasso.ratio < 1.0) {
            return Err(Error::Config("`lasso.ratio` must lie in (0, 1)".into()));
        }
        if self.bootstrap.reps < 2 {
            return Err(Error::Config("`bootstrap.reps` must be >= 2".into()));
        }
        Ok(())
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            n_noise: self.noise_channels,
            variance_ratio: self.noise_variance_ratio,
            seed: derive_seed(self.seed, STREAM_NOISE),
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            folds: self.lasso.folds,
            scheme: self.lasso.scheme,
            seed: derive_seed(self.seed, STREAM_CV),
        }
    }

    pub fn bootstrap_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_BOOTSTRAP)
    }
}
