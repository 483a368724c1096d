//! `multigrasp` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input data, 2 usage or configuration
//! error, 3 file or record I/O error, 4 numerical failure. Failures print a
//! single `error[<category>]: <message>` line to stderr. Log verbosity is
//! read from `MULTIGRASP_LOG` (`error`, `warn`, `info`, `debug`, `trace`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use multigrasp::Error;

#[derive(Parser, Debug)]
#[command(name = "multigrasp", version, about = "Multi-object pre-grasp synthesis, refinement, reach planning and evaluation")]
struct Cli {
    /// Seed of all randomness; a random seed is chosen and printed when
    /// neither this nor the config sets one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run configuration, TOML or JSON (by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hand model JSON; defaults to the bundled reference hand.
    #[arg(long, global = true)]
    hand: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample pre-grasps for a scene and write the filtered ones as JSONL.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of chains (overrides the config).
        #[arg(long)]
        chains: Option<usize>,
        /// Iterations per chain (overrides the config).
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Refine grasp records toward contact and out of penetration.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        /// Scene file; defaults to each record's own scene.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a reach from the flat-hand start to a recorded pre-grasp.
    PlanReach {
        /// Grasp records (JSONL).
        #[arg(long)]
        grasp: PathBuf,
        /// Record to plan for, counting from 0.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure grasp quality and write a JSON report.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Include wall-clock time in the report (makes it run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Generate or verify a dataset.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Export a recorded grasp for offline visualization.
    Export {
        #[arg(long)]
        grasp: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Place, synthesize, refine, evaluate and align grasps for every object
    /// combination of an inventory.
    Gen {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest objects per combination (overrides the config).
        #[arg(long)]
        max_objects: Option<usize>,
        /// Scenes per combination (overrides the config).
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Recompute a dataset's manifest from its files and compare.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    /// Wavefront OBJ triangle meshes.
    Obj,
    /// Points with normals, `x y z nx ny nz` per line.
    Xyz,
}

/// Exit code and category of a pipeline error.
fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Config(_) => (2, "config"),
        Error::Io { .. } | Error::MalformedRecord { .. } | Error::Serde(_) => (3, "io"),
        Error::Numerical { .. } => (4, "numerical"),
        Error::Input(_) | Error::Model(_) | Error::PlacementInfeasible { .. } | Error::AlignmentUndefined => {
            (1, "input")
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MULTIGRASP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if usage {
                eprintln!("error[usage]: invalid command line");
            }
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = classify(&e);
            eprintln!("error[{category}]: {e}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests;
