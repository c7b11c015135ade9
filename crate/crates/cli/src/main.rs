//! `regionlime` command-line tool.
//!
//! `explain`, `edit` and `segment` talk to the HTTP service, either one given
//! with `--server` or one started in-process on a loopback port. `robustness`
//! and `train-mnist` run locally.

mod batch;
mod error;
mod interactive;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regionlime_core::explainer::{DistanceMode, Occlusion};
use regionlime_core::predictor::PredictorSpec;
use serde::Serialize;

use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "regionlime", version, about = "Region-constrained superpixel explanations for image classifiers")]
struct Cli {
    /// Print results and errors as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Use a running service instead of an in-process one.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explain one image: segment, perturb, fit the surrogate, render masks.
    Explain(ExplainArgs),
    /// Apply region edits and compare predictions before and after.
    Edit(EditArgs),
    /// Split an image into superpixels, inside and outside an optional mask.
    Segment(SegmentArgs),
    /// Sweep Gaussian noise levels and measure explanation drift.
    Robustness(batch::RobustnessArgs),
    /// Train the builtin MLP on MNIST-style IDX data.
    TrainMnist(batch::TrainArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SegmentOpts {
    /// Region mask PNG; without it the whole image is clustered.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Superpixel budget, split between inside and outside the mask by area.
    #[arg(long)]
    pub total_k: Option<usize>,
    #[arg(long, requires = "outer_k")]
    pub inner_k: Option<usize>,
    #[arg(long, requires = "inner_k")]
    pub outer_k: Option<usize>,
    #[arg(long)]
    pub spatial_weight: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub seg: SegmentOpts,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Superpixels kept in the overlay and trinary mask.
    #[arg(long, default_value_t = 5)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub kernel_width: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ridge_alpha: f64,
    /// mean-color, constant-gray or black.
    #[arg(long, default_value = "mean-color", value_parser = parse_kebab::<Occlusion>)]
    pub occlusion: Occlusion,
    /// target-class or l2.
    #[arg(long, default_value = "target-class", value_parser = parse_kebab::<DistanceMode>)]
    pub distance: DistanceMode,
    /// Class to explain; defaults to the most probable one.
    #[arg(long)]
    pub target_class: Option<usize>,
    /// `builtin-mlp:PATH`, `builtin-linear[:PATH]`, `remote:URL` with optional
    /// `,dims=HxWxC,batch=N,classes=N`, or a JSON object.
    #[arg(long)]
    pub predictor: PredictorSpec,
    /// Output location; not echoed in provenance so reruns compare equal.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EditArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// JSON list of edit operations.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub predictor: PredictorSpec,
    /// Output location; not echoed in provenance so reruns compare equal.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub seg: SegmentOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output location; not echoed in provenance so reruns compare equal.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Predictor for sessions created without one.
    #[arg(long)]
    predictor: Option<PredictorSpec>,
    /// Directory with the browser UI bundle, served under /.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    max_sessions: usize,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Config echo written into every JSON output.
#[derive(Serialize)]
pub struct Provenance<'a, A: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub args: &'a A,
}

pub fn provenance<'a, A: Serialize>(command: &'static str, args: &'a A) -> Provenance<'a, A> {
    Provenance { tool: "regionlime", version: env!("CARGO_PKG_VERSION"), command, args }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// What a successful command reports: a line for people, a value for `--json`.
pub struct Outcome {
    pub human: String,
    pub json: serde_json::Value,
}

fn serve(args: ServeArgs) -> CliResult<Outcome> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let cfg = regionlime_service::ServiceConfig {
            default_predictor: args.predictor,
            static_dir: args.static_dir,
            max_sessions: args.max_sessions,
            ..Default::default()
        };
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        regionlime_service::serve(listener, cfg, shutdown).await?;
        Ok(Outcome { human: "stopped".into(), json: serde_json::json!({ "status": "stopped" }) })
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let server = cli.server.as_deref();
    let result = match cli.command {
        Command::Explain(a) => interactive::explain(server, &a),
        Command::Edit(a) => interactive::edit(server, &a),
        Command::Segment(a) => interactive::segment(server, &a),
        Command::Robustness(a) => batch::robustness(&a),
        Command::TrainMnist(a) => batch::train(&a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                println!("{}", out.human);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {}", e.code, e.message);
            if cli.json {
                println!("{}", serde_json::to_string(&e).unwrap_or_default());
            }
            ExitCode::from(e.exit_code as u8)
        }
    }
}
