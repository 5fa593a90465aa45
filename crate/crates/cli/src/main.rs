mod commands;
mod json;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Instrumental-variable estimands for randomized trials with intercurrent events.
#[derive(Debug, Parser)]
#[command(name = "ivtrial", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trial dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate estimands from a CSV dataset and write a JSON report.
    Estimate(EstimateArgs),
    /// Re-run a published simulation study and compare against its numbers.
    Replicate(ReplicateArgs),
    /// Run a Monte Carlo campaign described by a key-value config file.
    Campaign(CampaignArgs),
    /// Implied CACE over a grid of defier proportions and defier effects.
    Sensitivity(SensitivityArgs),
    /// Check the three IV conditions on a DAG file by d-separation.
    CheckIv(CheckIvArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// pain_a, biomarker_b or adherence_c (A, B, C also accepted).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// confounded or randomized_compliance (pain_a only).
    #[arg(long)]
    pub variant: Option<String>,
    /// Key-value config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub overrides: Vec<String>,
    /// Also write the latent confounder column `u`.
    #[arg(long)]
    pub emit_latent: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RoleArgs {
    #[arg(long, default_value = "r")]
    pub r_col: String,
    #[arg(long, default_value = "t")]
    pub t_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "a")]
    pub a_col: String,
    #[arg(long, default_value = "z")]
    pub z_col: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated estimator names, configured by the option flags below.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "policy,compliance,iv_ratio"
    )]
    pub estimators: Vec<String>,
    /// Full estimator spec such as `extended_tsls covariate=s`; repeatable and
    /// added after `--estimators`.
    #[arg(long = "spec", value_name = "SPEC")]
    pub specs: Vec<String>,
    #[command(flatten)]
    pub roles: RoleArgs,
    /// Adjustment covariates for tsls and the naive comparators.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Interaction covariate for extended_tsls and adherence.
    #[arg(long)]
    pub interaction_covariate: Option<String>,
    /// Event column for policy_in_s_plus_star and responder (default: the --z-col column).
    #[arg(long)]
    pub event: Option<String>,
    /// linear or logistic.
    #[arg(long, default_value = "linear")]
    pub link: String,
    /// Bootstrap resamples for standard errors (at least 100).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// section_5_4, setting_1 or setting_2.
    #[arg(long)]
    pub study: String,
    /// Replications per campaign (default: the published count).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run replications on one thread.
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub roles: RoleArgs,
    /// Defier average causal effect range `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub dace_range: String,
    /// Defier proportion range `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub pi_d_range: String,
    /// Grid points per axis.
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckIvArgs {
    #[arg(long)]
    pub dag: PathBuf,
    #[arg(long)]
    pub instrument: String,
    #[arg(long)]
    pub treatment: String,
    #[arg(long)]
    pub outcome: String,
    /// Comma-separated confounder nodes.
    #[arg(long, value_delimiter = ',')]
    pub confounders: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Replicate(a) => commands::replicate(&a),
        Command::Campaign(a) => commands::campaign(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
        Command::CheckIv(a) => commands::check_iv(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
