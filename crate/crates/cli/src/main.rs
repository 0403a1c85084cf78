//! `gmmt`: data preparation, staged training, generation and scoring for the
//! desk-scale multimodal translation pipeline.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "gmmt", version, about = "Grounded multimodal machine translation at desk scale")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic Visual Genome style TSVs and detector outputs.
    SynthData(commands::synth::Args),
    /// Render instruction instances, stage mixes, references and corpus statistics.
    PrepareData(commands::prepare::Args),
    /// Run the configured training stages.
    Train(commands::train::Args),
    /// Decode hypotheses from a checkpoint.
    Generate(commands::generate::Args),
    /// Score a hypothesis file against references.
    Evaluate(commands::evaluate::Args),
    /// Assemble metric reports into a leaderboard table.
    Report(commands::evaluate::ReportArgs),
    /// Grid-search stage-3 learning rate and epochs.
    Sweep(commands::sweep::Args),
}

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Runtime,
}

impl Kind {
    fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Runtime => 4,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Config => "configuration error",
            Kind::Data => "data error",
            Kind::Runtime => "runtime error",
        })
    }
}

fn classify_core(e: &gmmt_core::Error) -> Kind {
    use gmmt_core::Error as E;
    match e {
        E::Config(_) | E::Stage(_) => Kind::Config,
        E::Parse { .. }
        | E::OutOfVocabulary(_)
        | E::Sample { .. }
        | E::ContextOverflow { .. }
        | E::LengthMismatch { .. }
        | E::EmptyCorpus
        | E::EmptyDataset
        | E::Checkpoint(_)
        | E::CheckpointVersion { .. }
        | E::Io { .. }
        | E::Json(_) => Kind::Data,
        _ => Kind::Runtime,
    }
}

fn classify(err: &anyhow::Error) -> Kind {
    if let Some(k) = err.downcast_ref::<Kind>() {
        return *k;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gmmt_core::Error>() {
            return classify_core(e);
        }
        if cause.is::<toml::de::Error>() {
            return Kind::Config;
        }
        if cause.is::<std::io::Error>() {
            return Kind::Data;
        }
    }
    Kind::Runtime
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| e.context(Kind::Config))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::SynthData(a) => commands::synth::run(&cfg, a),
        Command::PrepareData(a) => commands::prepare::run(&cfg, a),
        Command::Train(a) => commands::train::run(&cfg, a),
        Command::Generate(a) => commands::generate::run(&cfg, a),
        Command::Evaluate(a) => commands::evaluate::run(&cfg, a),
        Command::Report(a) => commands::evaluate::report(a),
        Command::Sweep(a) => commands::sweep::run(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            let label = kind.to_string();
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).filter(|m| *m != label).collect();
            eprintln!("error ({kind}): {}", chain.join(": "));
            ExitCode::from(kind.exit_code())
        }
    }
}
