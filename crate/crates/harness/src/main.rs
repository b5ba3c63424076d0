use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdglab::config::RunConfig;
use bdglab::{plot, run, sweep, validate, HarnessError, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdglab", version, about = "Semiclassical pair-dynamics lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One run per ħ in the config, quantum and classical side by side.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// ħ sweep with rate fits; writes report.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Pass/fail table of the bounds on a short trajectory.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// SVG figures from a sweep report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let root = out.join(&cfg.output_dir);
            for (i, &hbar) in cfg.hbar.iter().enumerate() {
                let dir = if cfg.hbar.len() == 1 { root.clone() } else { root.join(format!("cell_{i:02}")) };
                let r = run::run_single(&cfg, hbar, Some(&dir))?;
                for s in &r.samples {
                    println!("hbar = {:.6e}  t = {:<6}  total error = {:.6e}", hbar, s.t, s.metric.total());
                }
            }
            Ok(())
        }
        Cmd::Sweep { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let report = sweep::run_sweep(&cfg, Some(&out.join(&cfg.output_dir)))?;
            for f in &report.fits {
                println!(
                    "t = {:<6} {}  {}",
                    f.t,
                    if f.floor_subtracted { "t=0 subtracted" } else { "raw           " },
                    plot::slope_annotation(f)
                );
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            println!("all validation rows pass: {}", report.all_validation_pass);
            Ok(())
        }
        Cmd::Validate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let rows = validate::validate(&cfg, Some(&out.join(&cfg.output_dir)))?;
            for r in &rows {
                println!(
                    "{:<24} {}  lhs = {:.6e}  rhs = {:.6e}  margin = {:.4}",
                    r.name,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.lhs,
                    r.rhs,
                    r.margin
                );
            }
            Ok(())
        }
        Cmd::Plot { report, out } => {
            let text = std::fs::read_to_string(&report).map_err(|e| HarnessError::Io(format!("{}: {e}", report.display())))?;
            let dir = out.unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
            std::fs::create_dir_all(&dir)?;
            for (name, svg) in plot::plot(&text)? {
                std::fs::write(dir.join(&name), svg)?;
                println!("{}", dir.join(&name).display());
            }
            Ok(())
        }
    }
}
