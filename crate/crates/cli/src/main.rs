use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use emdr_cli::commands::{self, parse_block_len};
use emdr_cli::CliError;
use emdr_core::config::DesignChoice;

#[derive(Debug, Parser)]
#[command(name = "emdr", version, about = "EMD-regression on CSV time series")]
struct Cli {
    /// Master seed; overrides `seed` in the config or manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the data-parallel stages: a count or `auto`.
    #[arg(long, global = true, value_parser = parse_threads)]
    threads: Option<Threads>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose the configured columns into IMFs.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit R1, R2 or both and write a result bundle.
    Fit {
        #[arg(long, value_parser = parse_design)]
        design: Option<DesignChoice>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add moving-block bootstrap intervals to a bundle.
    Bootstrap {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        /// `auto` (cube root of the row count) or a length in rows.
        #[arg(long, value_parser = parse_block_arg)]
        block_len: Option<BlockLen>,
    },
    /// Write plot-ready tables for a bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn parse_design(text: &str) -> Result<DesignChoice, String> {
    text.parse().map_err(|e: emdr_core::Error| e.to_string())
}

/// Parsed `--block-len`; `None` inside means the cube-root default.
#[derive(Debug, Clone, Copy)]
struct BlockLen(Option<usize>);

fn parse_block_arg(text: &str) -> Result<BlockLen, String> {
    parse_block_len(text).map(BlockLen)
}

#[derive(Debug, Clone, Copy)]
enum Threads {
    /// Leave the pool at its default size.
    Auto,
    Count(usize),
}

fn parse_threads(text: &str) -> Result<Threads, String> {
    if text == "auto" {
        return Ok(Threads::Auto);
    }
    match text.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(Threads::Count(n)),
        Err(_) => Err(format!("expected a count or `auto`, got `{text}`")),
    }
}

fn configure_threads(threads: Option<Threads>) -> Result<(), CliError> {
    let Some(Threads::Count(n)) = threads else {
        return Ok(());
    };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without the parallel feature; ignoring --threads {n}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let say = |line: String| {
        if !cli.quiet {
            println!("{line}");
        }
    };
    match cli.command {
        Command::Decompose { input, config, out } => {
            let o = commands::decompose(&input, &config, &out, cli.seed)?;
            say(format!(
                "decomposed {} into {} IMFs -> {}",
                o.channels.join(", "),
                o.imfs,
                out.display()
            ));
        }
        Command::Fit {
            design,
            input,
            config,
            out,
        } => {
            let o = commands::fit(&input, &config, design, &out, cli.seed)?;
            for d in &o.designs {
                say(format!(
                    "{}: R^2 = {:.4}, GCV = {:.6}, {} submodel(s), {} nonzero coefficient(s)",
                    d.design.as_str(),
                    d.r_squared,
                    d.gcv,
                    d.submodels,
                    d.retained
                ));
            }
            say(format!("bundle -> {}", out.display()));
        }
        Command::Bootstrap {
            bundle,
            reps,
            block_len,
        } => {
            let o = commands::bootstrap(&bundle, reps, block_len.map(|b| b.0), cli.seed)?;
            for (design, block, significant) in &o.designs {
                say(format!(
                    "{}: {} replications, block length {block}, {significant} significant row(s)",
                    design.as_str(),
                    o.reps
                ));
            }
        }
        Command::Report { bundle } => {
            let o = commands::report(&bundle)?;
            for line in &o.significant {
                say(format!("significant: {line}"));
            }
            for f in &o.files {
                say(format!("wrote {}", f.display()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { LevelFilter::Error } else { LevelFilter::Info })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emdr: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
