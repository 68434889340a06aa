//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};

use emdr_core::config::DesignChoice;
use emdr_core::emd::{amplitude_by_day_of_year, Decomposition};
use emdr_core::emdr::{
    bootstrap_problems, fit_emdr1, fit_emdr2, reported, sensitivities, BootstrapProblem, Component, Design,
    EmdrModel, SensitivityRow, SubmodelKind, Term,
};
use emdr_core::lasso::DesignMatrix;
use emdr_core::memd::{na_memd_decompose, MultichannelSeries};
use emdr_core::signal::TimeSeries;
use emdr_core::RunConfig;

use crate::bundle::{self, num, opt_num, write_table, Manifest, Table};
use crate::dataset::{Dataset, DATE_FORMAT};
use crate::error::{CliError, Result};

/// Reads a config file and applies a `--seed` override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_text(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn row_prefix(dates: Option<&[NaiveDate]>, t: usize) -> Vec<String> {
    let mut cells = vec![t.to_string()];
    if let Some(d) = dates {
        cells.push(d[t].format(DATE_FORMAT).to_string());
    }
    cells
}

fn write_decomposition(path: &Path, d: &Decomposition, dates: Option<&[NaiveDate]>) -> Result<()> {
    let mut header = vec!["row".to_string()];
    if dates.is_some() {
        header.push("date".into());
    }
    header.extend(d.imfs.iter().map(|imf| format!("imf{}", imf.order)));
    header.push("residue".into());
    let rows: Vec<Vec<String>> = (0..d.source_len)
        .map(|t| {
            let mut cells = row_prefix(dates, t);
            cells.extend(d.imfs.iter().map(|imf| num(imf.values[t])));
            cells.push(num(d.residue[t]));
            cells
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, &rows)
}

#[derive(Debug, Clone)]
pub struct DecomposeOutcome {
    pub channels: Vec<String>,
    pub imfs: usize,
    pub warnings: Vec<String>,
}

/// Joint NA-MEMD of the configured response and predictor columns, or of
/// every numeric column when neither is set.
pub fn decompose(input: &Path, config_path: &Path, out: &Path, seed: Option<u64>) -> Result<DecomposeOutcome> {
    let cfg = load_config(config_path, seed)?;
    cfg.sift.validate()?;
    cfg.noise_config().validate()?;
    let mut wanted = Vec::new();
    if !cfg.response.is_empty() {
        wanted.push(cfg.response.clone());
    }
    wanted.extend(cfg.predictors.iter().cloned());
    let data = Dataset::read(input, cfg.date_column.as_deref(), &wanted)?;
    let series = MultichannelSeries::new(data.names.clone(), data.columns.clone())?.with_start(data.start());
    info!("decomposing {} channel(s) of {} samples", series.dim(), series.len());
    let dec = na_memd_decompose(&series, &cfg.noise_config(), cfg.directions, &cfg.sift, cfg.standardize)?;
    bundle::ensure_dir(out)?;
    for (name, d) in dec.names().iter().zip(dec.channels()) {
        write_decomposition(&out.join(bundle::decomposition_file(None, name)), d, data.dates.as_deref())?;
    }
    let mut manifest = Manifest::new(cfg);
    manifest.set("command", "decompose");
    manifest.set("input", input.display().to_string());
    manifest.set("rows", data.len().to_string());
    manifest.set("channels", dec.names().join(","));
    manifest.set("imfs", dec.k().to_string());
    manifest.set("warnings", dec.warnings.join("; "));
    manifest.write(out)?;
    for w in &dec.warnings {
        warn!("{w}");
    }
    Ok(DecomposeOutcome {
        channels: dec.names().to_vec(),
        imfs: dec.k(),
        warnings: dec.warnings.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct DesignSummary {
    pub design: Design,
    pub r_squared: f64,
    pub gcv: f64,
    pub submodels: usize,
    pub retained: usize,
}

const TERMS_HEADER: &[&str] = &[
    "submodel",
    "term",
    "predictor",
    "component",
    "lag",
    "max_lag",
    "ccf",
    "mean_period",
    "amplitude",
    "amplitude_kind",
    "beta",
];

const SUBMODELS_HEADER: &[&str] = &[
    "submodel",
    "rule",
    "lambda",
    "intercept",
    "df",
    "rss",
    "rows",
    "lambda_min",
    "lambda_1se",
    "support_nested",
];

const SENSITIVITY_HEADER: &[&str] = &[
    "design",
    "submodel",
    "predictor",
    "component",
    "mean_period",
    "log2_period",
    "lag",
    "beta",
    "amplitude",
    "amplitude_kind",
    "sensitivity",
    "beta_lower",
    "beta_upper",
    "s_lower",
    "s_upper",
    "significant",
];

const DIAGNOSTICS_HEADER: &[&str] = &[
    "design",
    "rows",
    "trim",
    "imfs",
    "submodels",
    "df_eff",
    "rss",
    "r_squared",
    "gcv",
];

fn sensitivity_cells(row: &SensitivityRow) -> Vec<String> {
    let iv = row.interval;
    vec![
        row.design.as_str().into(),
        row.submodel.label(),
        row.predictor.clone(),
        row.component.label(),
        opt_num(row.mean_period),
        opt_num(row.mean_period.map(f64::log2)),
        row.lag.to_string(),
        num(row.beta),
        num(row.amplitude),
        row.amplitude_kind.as_str().into(),
        num(row.sensitivity),
        opt_num(iv.map(|i| i.beta_lower)),
        opt_num(iv.map(|i| i.beta_upper)),
        opt_num(iv.map(|i| i.s_lower)),
        opt_num(iv.map(|i| i.s_upper)),
        iv.map(|i| i.significant.to_string()).unwrap_or_default(),
    ]
}

fn write_model(dir: &Path, model: &EmdrModel, dates: Option<&[NaiveDate]>) -> Result<()> {
    let d = model.design.as_str();
    for (name, dec) in model.decomposition.names().iter().zip(model.decomposition.channels()) {
        write_decomposition(&dir.join(bundle::decomposition_file(Some(d), name)), dec, dates)?;
    }
    let mut term_rows = Vec::new();
    let mut sub_rows = Vec::new();
    for sub in &model.submodels {
        let label = sub.kind.label();
        for (term, &beta) in sub.terms.iter().zip(&sub.fit.beta) {
            term_rows.push(vec![
                label.clone(),
                term.name(),
                term.predictor.clone(),
                term.component.label(),
                term.lag.to_string(),
                term.max_lag.to_string(),
                num(term.ccf),
                opt_num(term.mean_period),
                num(term.amplitude),
                term.amplitude_kind.as_str().into(),
                num(beta),
            ]);
        }
        sub_rows.push(vec![
            label.clone(),
            sub.rule.as_str().into(),
            num(sub.fit.lambda),
            num(sub.fit.intercept),
            sub.fit.df.to_string(),
            num(sub.fit.rss),
            sub.response.len().to_string(),
            opt_num(sub.cv.as_ref().map(|c| c.lambda_min)),
            opt_num(sub.cv.as_ref().map(|c| c.lambda_1se)),
            sub.support_nested.map(|b| b.to_string()).unwrap_or_default(),
        ]);

        let mut header = vec!["row".to_string(), "response".to_string()];
        header.extend(sub.design.names().iter().cloned());
        let rows: Vec<Vec<String>> = (0..sub.response.len())
            .map(|i| {
                let mut cells = vec![(i + model.trim).to_string(), num(sub.response[i])];
                cells.extend(sub.design.columns().iter().map(|c| num(c[i])));
                cells
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(&dir.join(bundle::design_file(d, &label)), &header, &rows)?;

        if let Some(cv) = &sub.cv {
            let rows: Vec<Vec<String>> = (0..cv.lambda_grid.len())
                .map(|i| vec![num(cv.lambda_grid[i]), num(cv.cv_mean[i]), num(cv.cv_se[i])])
                .collect();
            write_table(&dir.join(bundle::cv_file(d, &label)), &["lambda", "cv_mean", "cv_se"], &rows)?;
        }
    }
    write_table(&dir.join(bundle::terms_file(d)), TERMS_HEADER, &term_rows)?;
    write_table(&dir.join(bundle::submodels_file(d)), SUBMODELS_HEADER, &sub_rows)?;

    let fitted = model.fitted();
    let mut header = vec!["row"];
    if dates.is_some() {
        header.push("date");
    }
    header.extend(["observed", "fitted"]);
    let rows: Vec<Vec<String>> = (0..fitted.len())
        .map(|i| {
            let mut cells = row_prefix(dates, i + model.trim);
            cells.push(num(model.observed[i]));
            cells.push(num(fitted[i]));
            cells
        })
        .collect();
    write_table(&dir.join(bundle::fitted_file(d)), &header, &rows)
}

fn diagnostics_cells(model: &EmdrModel) -> Result<Vec<String>> {
    Ok(vec![
        model.design.as_str().into(),
        model.n_rows().to_string(),
        model.trim.to_string(),
        model.decomposition.k().to_string(),
        model.submodels.len().to_string(),
        model.df_eff().to_string(),
        num(model.rss()),
        num(model.r_squared()?),
        num(model.gcv()),
    ])
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub designs: Vec<DesignSummary>,
    pub warnings: Vec<String>,
}

/// Fits the configured designs and writes a result bundle to `out`.
pub fn fit(
    input: &Path,
    config_path: &Path,
    design: Option<DesignChoice>,
    out: &Path,
    seed: Option<u64>,
) -> Result<FitOutcome> {
    let mut cfg = load_config(config_path, seed)?;
    if let Some(d) = design {
        cfg.design = d;
    }
    cfg.validate()?;
    let mut wanted = vec![cfg.response.clone()];
    wanted.extend(cfg.predictors.iter().cloned());
    let data = Dataset::read(input, cfg.date_column.as_deref(), &wanted)?;
    let y = TimeSeries::new(data.columns[0].clone())?;
    let predictors = MultichannelSeries::new(data.names[1..].to_vec(), data.columns[1..].to_vec())?
        .with_start(data.start());

    let mut models = Vec::new();
    if cfg.design.includes_r1() {
        info!("fitting R1 on {} rows", y.len());
        models.push(fit_emdr1(&y, &predictors, &cfg)?);
    }
    if cfg.design.includes_r2() {
        info!("fitting R2 on {} rows", y.len());
        models.push(fit_emdr2(&y, &predictors, &cfg)?);
    }

    bundle::ensure_dir(out)?;
    let dates = data.dates.as_deref();
    let mut sens_rows = Vec::new();
    let mut diag_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut warnings = Vec::new();
    for model in &models {
        write_model(out, model, dates)?;
        let table = sensitivities(model, None);
        sens_rows.extend(table.rows.iter().map(sensitivity_cells));
        diag_rows.push(diagnostics_cells(model)?);
        warnings.extend(model.warnings.iter().map(|w| format!("{}: {w}", model.design.as_str())));
        summaries.push(DesignSummary {
            design: model.design,
            r_squared: model.r_squared()?,
            gcv: model.gcv(),
            submodels: model.submodels.len(),
            retained: model.submodels.iter().map(|s| s.fit.df).sum(),
        });
    }
    write_table(&out.join(bundle::SENSITIVITY), SENSITIVITY_HEADER, &sens_rows)?;
    write_table(&out.join(bundle::DIAGNOSTICS), DIAGNOSTICS_HEADER, &diag_rows)?;

    let mut manifest = Manifest::new(cfg);
    manifest.set("command", "fit");
    manifest.set("input", input.display().to_string());
    manifest.set("rows", data.len().to_string());
    manifest.set(
        "designs",
        models.iter().map(|m| m.design.as_str()).collect::<Vec<_>>().join(","),
    );
    manifest.set("trend_amplitude", "range");
    manifest.set("warnings", warnings.join("; "));
    manifest.write(out)?;
    for w in &warnings {
        warn!("{w}");
    }
    Ok(FitOutcome {
        designs: summaries,
        warnings,
    })
}

/// `--block-len` value: `auto` or an explicit length.
pub fn parse_block_len(text: &str) -> std::result::Result<Option<usize>, String> {
    match text {
        "auto" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|_| format!("expected `auto` or a positive integer, got `{v}`")),
    }
}

struct StoredSubmodel {
    kind: SubmodelKind,
    lambda: f64,
    design: DesignMatrix,
    response: Vec<f64>,
    terms: Vec<(Term, f64)>,
}

fn load_design(dir: &Path, design: Design) -> Result<Vec<StoredSubmodel>> {
    let d = design.as_str();
    let subs = Table::read(&dir.join(bundle::submodels_file(d)))?;
    let terms = Table::read(&dir.join(bundle::terms_file(d)))?;
    let mut out = Vec::new();
    for row in &subs.rows {
        let label = subs.get(row, "submodel")?;
        let kind: SubmodelKind = label.parse()?;
        let lambda: f64 = subs.parse(row, "lambda")?;
        let mut stored_terms = Vec::new();
        for t in terms.rows.iter().filter(|t| t[0] == label) {
            let term = Term {
                predictor: terms.get(t, "predictor")?.to_string(),
                component: terms.get(t, "component")?.parse::<Component>()?,
                lag: terms.parse(t, "lag")?,
                max_lag: terms.parse(t, "max_lag")?,
                ccf: terms.parse(t, "ccf")?,
                mean_period: terms.parse_opt(t, "mean_period")?,
                amplitude: terms.parse(t, "amplitude")?,
                amplitude_kind: terms.get(t, "amplitude_kind")?.parse()?,
            };
            stored_terms.push((term, terms.parse::<f64>(t, "beta")?));
        }
        let table = Table::read(&dir.join(bundle::design_file(d, label)))?;
        let response = table.numeric_column("response")?;
        let names: Vec<String> = stored_terms.iter().map(|(t, _)| t.name()).collect();
        let columns = names
            .iter()
            .map(|n| table.numeric_column(n))
            .collect::<Result<Vec<_>>>()?;
        let design = DesignMatrix::new(names, columns)?;
        out.push(StoredSubmodel {
            kind,
            lambda,
            design,
            response,
            terms: stored_terms,
        });
    }
    if out.is_empty() {
        return Err(CliError::bundle(dir, format!("no submodels stored for design {d}")));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub reps: usize,
    /// `(design, block length, significant sensitivity rows)`.
    pub designs: Vec<(Design, usize, usize)>,
}

/// Moving-block bootstrap of every fitted design in a bundle; rewrites the
/// sensitivity table with interval columns and writes `bootstrap.csv`.
pub fn bootstrap(
    dir: &Path,
    reps: Option<usize>,
    block_len: Option<Option<usize>>,
    seed: Option<u64>,
) -> Result<BootstrapOutcome> {
    let mut manifest = Manifest::read(dir)?;
    if let Some(s) = seed {
        manifest.config.seed = s;
    }
    if let Some(r) = reps {
        manifest.config.bootstrap.reps = r;
    }
    if let Some(b) = block_len {
        manifest.config.bootstrap.block_len = b;
    }
    let designs = manifest.designs();
    if designs.is_empty() {
        return Err(CliError::bundle(dir, "bundle has no fitted designs; run `emdr fit` first"));
    }
    let cfg = manifest.config.clone();
    let mut sens_rows = Vec::new();
    let mut boot_rows = Vec::new();
    let mut summary = Vec::new();
    for label in designs {
        let design: Design = label.parse()?;
        let stored = load_design(dir, design)?;
        let n = stored[0].response.len();
        let block = cfg.bootstrap.resolved_block_len(n);
        info!("bootstrapping {label}: {} replications, block length {block}", cfg.bootstrap.reps);
        let problems: Vec<BootstrapProblem<'_>> = stored
            .iter()
            .map(|s| BootstrapProblem {
                design: &s.design,
                response: &s.response,
                lambda: s.lambda,
            })
            .collect();
        let result = bootstrap_problems(&problems, cfg.bootstrap.reps, block, cfg.bootstrap_seed())?;
        let mut significant = 0;
        for (s, sub) in stored.iter().enumerate() {
            for (j, (term, beta)) in sub.terms.iter().enumerate() {
                let ci = result.intervals[s][j];
                boot_rows.push(vec![
                    label.clone(),
                    sub.kind.label(),
                    term.name(),
                    num(*beta),
                    num(ci.lower),
                    num(ci.upper),
                    ci.excludes_zero().to_string(),
                ]);
                if reported(term, *beta) {
                    let row = SensitivityRow::new(design, sub.kind, term, *beta, Some(ci.with_amplitude(term.amplitude)));
                    significant += usize::from(ci.excludes_zero());
                    sens_rows.push(sensitivity_cells(&row));
                }
            }
        }
        manifest.set(&format!("bootstrap.block_len.{label}"), block.to_string());
        summary.push((design, block, significant));
    }
    write_table(&dir.join(bundle::SENSITIVITY), SENSITIVITY_HEADER, &sens_rows)?;
    write_table(
        &dir.join(bundle::BOOTSTRAP),
        &["design", "submodel", "term", "beta", "beta_lower", "beta_upper", "significant"],
        &boot_rows,
    )?;
    manifest.set("bootstrap.reps", cfg.bootstrap.reps.to_string());
    manifest.set("bootstrap.seed", cfg.bootstrap_seed().to_string());
    manifest.write(dir)?;
    Ok(BootstrapOutcome {
        reps: cfg.bootstrap.reps,
        designs: summary,
    })
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    /// One line per significant sensitivity row.
    pub significant: Vec<String>,
}

const SEASONAL_MIN_ROWS: usize = 365;

/// Writes plot-ready tables under `<bundle>/report/`.
const REPORT_SENSITIVITY_HEADER: &[&str] = &[
    "design",
    "submodel",
    "predictor",
    "component",
    "mean_period",
    "log2_period",
    "beta",
    "amplitude",
    "sensitivity",
    "s_lower",
    "s_upper",
    "significant",
];

pub fn report(dir: &Path) -> Result<ReportOutcome> {
    let manifest = Manifest::read(dir)?;
    let out = dir.join(bundle::REPORT_DIR);
    bundle::ensure_dir(&out)?;
    let mut files = Vec::new();
    let mut significant = Vec::new();

    let sens_path = dir.join(bundle::SENSITIVITY);
    if sens_path.exists() {
        let sens = Table::read(&sens_path)?;
        let mut rows: Vec<(String, String, f64, Vec<String>)> = Vec::new();
        for r in &sens.rows {
            let period: Option<f64> = sens.parse_opt(r, "mean_period")?;
            let cells = REPORT_SENSITIVITY_HEADER
                .iter()
            .map(|c| sens.get(r, c).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
            if sens.get(r, "significant")? == "true" {
                significant.push(format!(
                    "{} {} {}:{} period={} S={} [{}, {}]",
                    cells[0], cells[1], cells[2], cells[3], cells[4], cells[8], cells[9], cells[10]
                ));
            }
            rows.push((cells[0].clone(), cells[2].clone(), period.unwrap_or(f64::INFINITY), cells));
        }
        rows.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)).then(a.2.total_cmp(&b.2)));
        let path = out.join("sensitivity_by_period.csv");
        let rows: Vec<Vec<String>> = rows.into_iter().map(|r| r.3).collect();
        write_table(
            &path,
            REPORT_SENSITIVITY_HEADER,
            &rows,
        )?;
        files.push(path);
    }

    let diag_path = dir.join(bundle::DIAGNOSTICS);
    if diag_path.exists() {
        let diag = Table::read(&diag_path)?;
        let rows = diag
            .rows
            .iter()
            .map(|r| {
                ["design", "rows", "df_eff", "r_squared", "gcv"]
                    .iter()
                    .map(|c| diag.get(r, c).map(str::to_string))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let path = out.join("diagnostics.csv");
        write_table(&path, &["design", "rows", "df_eff", "r_squared", "gcv"], &rows)?;
        files.push(path);
    }

    for path in decomposition_files(dir, &manifest)? {
        let table = Table::read(&path)?;
        if table.column_index("date").is_err() || table.rows.len() < SEASONAL_MIN_ROWS {
            continue;
        }
        let first = table.get(&table.rows[0], "date")?;
        let start = NaiveDate::parse_from_str(first, DATE_FORMAT)
            .map_err(|_| CliError::bundle(&path, format!("bad date `{first}`")))?;
        let imf_names: Vec<String> = table.header.iter().filter(|h| h.starts_with("imf")).cloned().collect();
        let mut profiles = Vec::new();
        for name in &imf_names {
            profiles.push(amplitude_by_day_of_year(&table.numeric_column(name)?, Some(start))?);
        }
        let Some(first_profile) = profiles.first() else {
            continue;
        };
        let rows: Vec<Vec<String>> = (0..first_profile.mean.len())
            .map(|day| {
                let mut cells = vec![(day + 1).to_string(), first_profile.count[day].to_string()];
                cells.extend(profiles.iter().map(|p| num(p.mean[day])));
                cells
            })
            .collect();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("decomposition");
        let target = out.join(format!(
            "amplitude_doy_{}.csv",
            stem.trim_start_matches("decomposition_")
        ));
        let mut header = vec!["day_of_year".to_string(), "count".to_string()];
        header.extend(imf_names.iter().cloned());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(&target, &header, &rows)?;
        files.push(target);
    }
    Ok(ReportOutcome { files, significant })
}

fn decomposition_files(dir: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let designs = manifest.designs();
    if designs.is_empty() {
        for ch in manifest.get("channels").unwrap_or("").split(',').filter(|c| !c.is_empty()) {
            files.push(dir.join(bundle::decomposition_file(None, ch)));
        }
    } else {
        let cfg = &manifest.config;
        for d in &designs {
            let mut channels: Vec<String> = Vec::new();
            if d == "r2" {
                channels.push(cfg.response.clone());
            }
            channels.extend(cfg.predictors.iter().cloned());
            for ch in channels {
                files.push(dir.join(bundle::decomposition_file(Some(d), &ch)));
            }
        }
    }
    Ok(files.into_iter().filter(|p| p.exists()).collect())
}
