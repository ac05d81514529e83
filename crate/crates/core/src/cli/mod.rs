//! Command-line front end: one subcommand per pipeline stage, each writing
//! its artifact next to a reproducibility manifest.

mod commands;
pub mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{profile_report, ProfileReport};
pub use config::RunConfig;
pub use manifest::{file_sha256, write_manifest};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mixpinn", version, about = "Rigid-aware graph attention surrogate for probe-induced tissue deformation")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Optional only so `--dump-config` can run alone.
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file applied over the defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long = "edge-features", global = true, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub edge_features: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub rel: Option<bool>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub vn: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub ve: Option<bool>,
    /// 8 layers, 2 heads, 256 hidden
    #[arg(long = "paper-scale", global = true)]
    pub paper_scale: bool,
    /// Solve every depth on the rest configuration (no geometry update)
    #[arg(long = "linear-only", global = true)]
    pub linear_only: bool,
    /// Print the resolved configuration and exit
    #[arg(long = "dump-config", global = true)]
    pub dump_config: bool,
    /// Output directory shorthand for every `paths.*` key
    #[arg(long = "out", global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled tetrahedral phantom
    Phantom,
    /// Run the probe sweep and write the ground-truth dataset
    Simulate,
    /// Build graph features for every sample and write the graph cache
    BuildGraphs,
    /// Train on the position-held-out split and write checkpoint, curves and test report
    Train,
    /// Evaluate a checkpoint on the test split
    Eval,
    /// Train every configuration of the ablation grid
    Ablate {
        /// Only run these experiment numbers (default: all 13)
        #[arg(long, value_delimiter = ',')]
        rows: Vec<usize>,
    },
    /// Predict the displacement field of one dataset sample
    Predict {
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Time oracle solves against model inference
    Profile {
        #[arg(long, default_value_t = 60)]
        samples: usize,
    },
}

impl CommonArgs {
    /// Defaults ← config file ← flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(dir) = &self.out {
            c.set("paths.dir", &dir.display().to_string())?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            c.set(k.trim(), v)?;
        }
        if self.paper_scale {
            c.model.layers = 8;
            c.model.heads = 2;
            c.model.hidden = 256;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.jobs {
            c.jobs = v;
        }
        if let Some(v) = self.heads {
            c.model.heads = v;
        }
        if let Some(v) = self.edge_features {
            c.model.use_edge_features = v;
        }
        if let Some(v) = self.rel {
            c.train.rel = v;
        }
        if let Some(v) = self.lambda {
            c.train.rel_weight = v;
        }
        if let Some(v) = self.vn {
            c.graph.virtual_nodes = v;
        }
        if let Some(v) = self.ve {
            c.graph.virtual_edges = v;
        }
        if self.linear_only {
            c.sweep.geometry_update = false;
        }
        c.finalize()?;
        Ok(c)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    if cli.common.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    let name = match command {
        Command::Phantom => "phantom",
        Command::Simulate => "simulate",
        Command::BuildGraphs => "build-graphs",
        Command::Train => "train",
        Command::Eval => "eval",
        Command::Ablate { .. } => "ablate",
        Command::Predict { .. } => "predict",
        Command::Profile { .. } => "profile",
    };
    log::info!("{name}: seed {} jobs {}", cfg.seed, cfg.jobs);
    match command {
        Command::Phantom => commands::cmd_phantom(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::BuildGraphs => commands::cmd_build_graphs(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::Ablate { rows } => commands::cmd_ablate(&cfg, rows),
        Command::Predict { sample } => commands::cmd_predict(&cfg, *sample),
        Command::Profile { samples } => commands::cmd_profile(&cfg, *samples),
    }
}
