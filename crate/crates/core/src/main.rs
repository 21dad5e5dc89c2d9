use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use vtsig::data::{schema, FeatureSequence};
use vtsig::experiment::{run_experiment, write_report, ExperimentConfig};
use vtsig::manifest::{ingest, read_matrix};
use vtsig::signature::{path_signature, flat_to_multi_index, render_term_compact, PiecewiseLinearPath};
use vtsig::synth::{synth_generate, SynthSpec};
use vtsig::visibility::{visibility_names, visibility_transform};

const EXIT_INVALID: u8 = 1;
const EXIT_CELLS_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "vtsig", version, about = "Signature features for multi-turn interviews")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and its matrices; prints an ingestion summary.
    Validate { manifest: PathBuf },
    /// Write a synthetic dataset whose classes differ only in within-turn frame order.
    Synth {
        #[arg(long)]
        subjects: usize,
        #[arg(long)]
        turns: usize,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment grid and write report.json and report.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for outer folds (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the truncated signature of a CSV matrix, one term per line.
    Sig {
        matrix: PathBuf,
        #[arg(long)]
        level: usize,
        /// Apply the visibility transform first.
        #[arg(long)]
        visibility: bool,
    },
}

fn validate(manifest: &Path) -> anyhow::Result<u8> {
    match ingest(manifest) {
        Ok((ds, summary)) => {
            println!(
                "{}: {} subjects, {} turns kept, {} short turns removed",
                ds.name, summary.subjects, summary.turns, summary.removed_short_turns
            );
            for w in &summary.warnings {
                println!("warning: {w}");
            }
            Ok(0)
        }
        Err(e) => {
            for d in &e.0 {
                eprintln!("error: {d}");
            }
            Ok(EXIT_INVALID)
        }
    }
}

fn run(config: &Path, manifest: &Path, out: &Path, jobs: Option<usize>) -> anyhow::Result<u8> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("{}: invalid config", config.display()))?;
    let ds = match ingest(manifest) {
        Ok((ds, summary)) => {
            for w in &summary.warnings {
                log::warn!("{w}");
            }
            ds
        }
        Err(e) => {
            for d in &e.0 {
                eprintln!("error: {d}");
            }
            return Ok(EXIT_INVALID);
        }
    };
    let report = run_experiment(&ds, &cfg)?;
    write_report(&report, out).with_context(|| format!("writing reports to {}", out.display()))?;
    print!("{}", report.to_table());
    Ok(if report.has_failures() { EXIT_CELLS_FAILED } else { 0 })
}

fn sig(matrix: &Path, level: usize, visibility: bool) -> anyhow::Result<u8> {
    let m = read_matrix(matrix)?;
    let (path, names) = if visibility {
        let seq = FeatureSequence::new(schema(&m.header), m.data)?;
        (visibility_transform(&seq)?, visibility_names(&m.header))
    } else {
        let dim = m.header.len();
        (PiecewiseLinearPath::new(dim, m.data)?, m.header)
    };
    let s = path_signature(&path, level)?;
    let mut out = String::new();
    for (pos, v) in s.coeffs().iter().enumerate() {
        let k = flat_to_multi_index(pos, names.len(), level)?;
        out.push_str(&format!("{} {v}\n", render_term_compact(&k, &names)));
    }
    print!("{out}");
    Ok(0)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Synth {
            subjects,
            turns,
            frames,
            dim,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                subjects,
                turns,
                frames,
                dim,
                seed,
            };
            std::fs::create_dir_all(&out)?;
            synth_generate(&spec, &out)?;
            println!("{}", out.join("manifest.json").display());
            Ok(0)
        }
        Command::Run {
            config,
            manifest,
            out,
            jobs,
        } => run(&config, &manifest, &out, jobs),
        Command::Sig {
            matrix,
            level,
            visibility,
        } => sig(&matrix, level, visibility),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
