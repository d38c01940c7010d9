use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use newtonspec::verify::{
    check_theorem, converge, emit_report, identity_scan, report_to_csv, report_to_json, spectrum,
    to_fixed_json, ReportFormat, VerifyConfig,
};
use newtonspec::{Error, Surface};

/// Eigenvalue bounds for the operators L_r on closed submanifolds of space forms.
#[derive(Parser, Debug)]
#[command(name = "newtonspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for assembly and integration (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log verbosity; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every inequality and identity at one refinement level.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        level: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Record per-phase wall-clock times in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Run `verify` over a range of levels and tabulate observed orders.
    Converge {
        #[command(flatten)]
        run: RunArgs,
        /// Inclusive range `a..b`.
        #[arg(long, value_parser = parse_levels)]
        levels: Levels,
    },
    /// Smallest nonzero eigenvalues only.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        level: usize,
    },
    /// Pointwise algebraic identities at random surface points; no mesh.
    Identities {
        #[arg(long)]
        surface: String,
        #[arg(long)]
        c: Option<u8>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `sphere:R[@n]`, `ellipsoid:a1,..,a(n+1)`, `flattorus:r1,r2` or `cliffordtorus:r1,r2`.
    #[arg(long)]
    surface: String,
    /// Ambient curvature; must match the surface (0 for R^N, 1 for the unit sphere).
    #[arg(long)]
    c: Option<u8>,
    #[arg(long, default_value_t = 0)]
    r: usize,
    /// Number of nonzero eigenvalues (default n + 2, never fewer than n).
    #[arg(long)]
    eigs: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    quad: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mass::Lumped)]
    mass: Mass,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Allowed excess of the slack ratio on equality cases.
    #[arg(long, default_value_t = 0.03)]
    tol_discr: f64,
    /// Random trial functions for the lemma check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mass {
    Lumped,
    Consistent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
struct Levels(Vec<usize>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: usize = a.parse().map_err(|_| format!("bad level {a:?}"))?;
    let b: usize = b.parse().map_err(|_| format!("bad level {b:?}"))?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok(Levels((a..=b).collect()))
}

fn surface(text: &str, c: Option<u8>) -> anyhow::Result<Surface> {
    let spec: Surface = text.parse()?;
    if let Some(c) = c {
        let actual = spec.ambient().curvature();
        if c != actual {
            bail!("{spec} lives in an ambient space of curvature {actual}, not {c}");
        }
    }
    Ok(spec)
}

impl RunArgs {
    fn config(&self, level: usize) -> VerifyConfig {
        VerifyConfig {
            r: self.r,
            level,
            eigs: self.eigs,
            tol: self.tol,
            quadrature: self.quad,
            lumped: matches!(self.mass, Mass::Lumped),
            seed: self.seed,
            tol_discr: self.tol_discr,
            lemma_trials: self.trials,
            ..VerifyConfig::default()
        }
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> newtonspec::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::ReportWrite {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::ReportWrite {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn execute(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Verify {
            run,
            level,
            format,
            timings,
        } => {
            let spec = surface(&run.surface, run.c)?;
            let config = VerifyConfig {
                record_timings: timings,
                ..run.config(level)
            };
            let report = check_theorem(&spec, &config)?;
            log::info!(
                "{spec}: lambda_1 = {:.10}, thm1 {:.6}, thm2 {:.6}, pass {}",
                report.eigenvalues[0],
                report.thm1.slack_ratio,
                report.thm2.slack_ratio,
                report.pass
            );
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
            };
            match &run.out {
                Some(path) => emit_report(&report, path, format)?,
                None => {
                    let text = match format {
                        ReportFormat::Json => report_to_json(&report),
                        ReportFormat::Csv => report_to_csv(&report),
                    };
                    write_out(&None, &text)?;
                }
            }
            Ok(report.exit_code())
        }
        Command::Converge { run, levels } => {
            let spec = surface(&run.surface, run.c)?;
            let config = run.config(0);
            let table = converge(&spec, &levels.0, &config)?;
            write_out(&run.out, &to_fixed_json(&table))?;
            Ok(0)
        }
        Command::Spectrum { run, level } => {
            let spec = surface(&run.surface, run.c)?;
            let report = spectrum(&spec, &run.config(level))?;
            write_out(&run.out, &to_fixed_json(&report))?;
            Ok(0)
        }
        Command::Identities {
            surface: text,
            c,
            samples,
            seed,
            out,
        } => {
            let spec = surface(&text, c)?;
            let scan = identity_scan(&spec, samples, seed)?;
            write_out(&out, &to_fixed_json(&scan))?;
            Ok(scan.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();

    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")
        {
            eprintln!("error: {err:#}");
            return ExitCode::from(1);
        }
    }

    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => match err.downcast_ref::<Error>() {
            // the library's messages already include their source
            Some(core) => {
                eprintln!("error: {core}");
                ExitCode::from(core.exit_code() as u8)
            }
            None => {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges_are_inclusive() {
        assert_eq!(parse_levels("2..5").unwrap().0, vec![2, 3, 4, 5]);
        assert_eq!(parse_levels("3..3").unwrap().0, vec![3]);
        assert!(parse_levels("4..2").is_err());
        assert!(parse_levels("4").is_err());
        assert!(parse_levels("a..2").is_err());
    }

    #[test]
    fn curvature_must_match_the_surface() {
        assert!(surface("sphere:1", Some(0)).is_ok());
        assert!(surface("sphere:1", None).is_ok());
        assert!(surface("cliffordtorus:0.6,0.8", Some(1)).is_ok());
        assert!(surface("flattorus:1,1", Some(1)).is_err());
    }
}
