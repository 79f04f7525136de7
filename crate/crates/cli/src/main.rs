use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use refnet::embed::{FeatureSet, ModelKind};
use refnet_cli::{run, CliError, Command, Overrides, RunConfig};

/// Physician referral network analysis.
///
/// Settings come from the TOML file given by --config (defaults otherwise);
/// flags override the file.
#[derive(Parser)]
#[command(name = "refnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Largest PC-to-SC gap counted as a referral.
    #[arg(long, global = true)]
    max_gap_days: Option<u32>,

    /// Comma-separated embedding models (node2vec, graphsage, attri2vec).
    #[arg(long, global = true, value_delimiter = ',')]
    model: Option<Vec<ModelKind>>,

    /// Comma-separated feature sets (with_social, without_social).
    #[arg(long, global = true, value_delimiter = ',')]
    features: Option<Vec<FeatureSet>>,

    /// Social coupling of the synthetic generator.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate synthetic consultations and physicians with planted mechanisms.
    Synth,
    /// Validate and normalize the input CSVs.
    Ingest,
    /// Extract PC -> SC interactions and build the referral network.
    BuildReferral,
    /// Build the professional network from shared backgrounds.
    BuildProfessional,
    /// Interval distribution, physicians per patient, summary tables.
    Eda,
    /// Degree, eigenvector and betweenness of the professional network.
    Centrality,
    /// Node embeddings of the referral network.
    Embed,
    /// Link prediction with and without professional-network features.
    Experiment,
    /// Exact Shapley attribution of a pair classifier.
    Explain,
    /// Synthetic data, link-prediction table and SHAP ranking end to end.
    Reproduce,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::Ingest => Command::Ingest,
            Cmd::BuildReferral => Command::BuildReferral,
            Cmd::BuildProfessional => Command::BuildProfessional,
            Cmd::Eda => Command::Eda,
            Cmd::Centrality => Command::Centrality,
            Cmd::Embed => Command::Embed,
            Cmd::Experiment => Command::Experiment,
            Cmd::Explain => Command::Explain,
            Cmd::Reproduce => Command::Reproduce,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("refnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        max_gap_days: cli.max_gap_days,
        models: cli.model.clone(),
        features: cli.features.clone(),
        alpha: cli.alpha,
    };
    let cfg = base.resolve(&overrides)?;
    let outcome = run(cli.command.into(), &cfg, cli.threads)?;
    // A closed stdout (e.g. piped into `head`) is not a pipeline failure.
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(outcome.report.as_bytes());
    for f in &outcome.files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(())
}
