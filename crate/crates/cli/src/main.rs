mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dappcheck", version, about = "Check a DApp's advertised behavior against its contract")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write an inconsistency report.
    /// Exit status: 0 clean, 1 findings, 2 error.
    Audit(Box<AuditArgs>),
    /// Write the base and derived relations of a program as TSV files.
    Facts {
        #[arg(long)]
        ir: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the captured checkpoint states of every planned function.
    Symexec {
        #[arg(long)]
        ir: PathBuf,
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a DApp description into the attributes JSON.
    Extract {
        #[arg(long)]
        description: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(id = "claims", multiple = false)]
pub struct ClaimArgs {
    /// Attributes JSON
    #[arg(long)]
    pub attrs: Option<PathBuf>,
    /// Plain-text DApp description, read through the LLM
    #[arg(long)]
    pub description: Option<PathBuf>,
}

#[derive(Args)]
pub struct LlmArgs {
    #[arg(long, env = "LLM_ENDPOINT_URL")]
    pub llm_url: Option<String>,
    /// Fixed answers instead of an endpoint: {"numeric": "...", "boolean": {"pause": "..."}}
    #[arg(long, conflicts_with = "llm_url")]
    pub canned: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    pub llm_timeout_secs: u64,
    /// Prompt templates directory, one file per prompt
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Anchor phrase directory, one file per numeric attribute
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long, default_value_t = dappcheck::frontend::DEFAULT_SEGMENT_TOKENS)]
    pub segment_tokens: usize,
}

#[derive(Args)]
#[group(multiple = false)]
pub struct ChainArgs {
    /// Mock chain JSON
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long, env = "CHAIN_RPC_URL")]
    pub rpc_url: Option<String>,
}

#[derive(Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub loop_bound: Option<u32>,
    #[arg(long)]
    pub max_states: Option<usize>,
    /// Expected chain id, checked before the first RPC query
    #[arg(long)]
    pub chain_id: Option<u64>,
}

#[derive(Args)]
pub struct AuditArgs {
    /// IR file of a single contract
    #[arg(long, required_unless_present = "dir", conflicts_with = "dir")]
    pub ir: Option<PathBuf>,
    /// Directory of contract bundles (contract.ir, attrs.json, chain.json)
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[command(flatten)]
    pub claims: ClaimArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub limits: LimitArgs,
    /// Report file, or report directory with --dir; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also accept supply cap checks that run after the store
    #[arg(long)]
    pub strict_uts: bool,
    /// Also write relation TSVs into this directory
    #[arg(long)]
    pub facts_dump: Option<PathBuf>,
    /// Contracts audited in parallel with --dir
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(args) => run::audit(&args),
        Command::Facts { ir, out } => run::facts(&ir, &out).map(|_| false),
        Command::Symexec { ir, chain, limits, out } => run::symexec(&ir, &chain, &limits, out.as_deref()).map(|_| false),
        Command::Extract { description, llm, out } => run::extract(&description, &llm, out.as_deref()).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
