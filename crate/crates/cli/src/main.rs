mod annotate;
mod backends;
mod commands;
mod config;
mod http;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use xplan_core::{RegionMode, RoutingProfile};

use crate::config::{ConfigError, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "xplan",
    version,
    about = "Plan, refine, execute and evaluate complex image edits"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "XPLAN_CONFIG")]
    config: Option<PathBuf>,
    /// Use the deterministic in-process backends instead of HTTP services.
    #[arg(long, global = true)]
    mock: bool,
    /// Worker threads for batch commands (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, global = true)]
    planner_url: Option<String>,
    #[arg(long, global = true)]
    editor_url: Option<String>,
    #[arg(long, global = true)]
    segmenter_url: Option<String>,
    #[arg(long, global = true)]
    verifier_url: Option<String>,
    #[arg(long, global = true)]
    embedder_url: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoutingArg {
    SingleModel,
    BagOfModels,
}

impl From<RoutingArg> for RoutingProfile {
    fn from(r: RoutingArg) -> Self {
        match r {
            RoutingArg::SingleModel => RoutingProfile::SingleModel,
            RoutingArg::BagOfModels => RoutingProfile::BagOfModels,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegionArg {
    Refined,
    FullImage,
}

impl From<RegionArg> for RegionMode {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Refined => RegionMode::Refined,
            RegionArg::FullImage => RegionMode::FullImage,
        }
    }
}

/// Where the plan comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PlanSource {
    /// Complex instruction sent to the planner.
    #[arg(long)]
    pub instruction: Option<String>,
    /// File with one bracketed sub-instruction per line.
    #[arg(long)]
    pub plan_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExecArgs {
    #[arg(long, value_enum)]
    routing: Option<RoutingArg>,
    /// Score each step and retry below the threshold.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    threshold: Option<u8>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long, value_enum)]
    region_mode: Option<RegionArg>,
    /// Dilation radius as a fraction of the equivalent-disk radius.
    #[arg(long)]
    dilation: Option<f64>,
    /// Smallest insertion box area as a fraction of the image.
    #[arg(long)]
    min_box_area: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Produce a validated plan and print it in bracket syntax.
    Plan {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        source: PlanSource,
        /// Print the plan as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Compute and save the control region of every step.
    Refine {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        plan_file: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Use a mask file for an anchor instead of the segmenter.
        #[arg(long = "mask", value_name = "ANCHOR=PNG")]
        masks: Vec<String>,
        #[arg(long)]
        dilation: Option<f64>,
        #[arg(long)]
        min_box_area: Option<f64>,
    },
    /// Plan and execute an edit.
    Edit {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        source: PlanSource,
        #[arg(long)]
        out: PathBuf,
        /// Write the execution trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Build training records from a corpus of captioned images.
    Annotate {
        /// JSONL with `image_ref`, `caption` and optional `source_tag`, `post_image_ref`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Directory image refs are resolved against.
        #[arg(long, default_value = ".")]
        image_root: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        level: LevelArg,
    },
    /// Run records through the pipeline and report metrics.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = ".")]
        image_root: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSONL of `{id, gt, preds}` box samples for localization scores.
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Summarize a record file.
    Stats {
        records: PathBuf,
        #[arg(long)]
        json: bool,
        /// Compare category shares with the configured targets.
        #[arg(long)]
        categories: bool,
    },
    /// Serve the deterministic demo backends over HTTP.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8700")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Bad input that the user must fix.
    #[error("{0}")]
    Input(String),
    /// The run finished but some items failed.
    #[error("{0}")]
    Partial(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Partial(_) | CliError::Other(_) => 1,
        }
    }
}

pub type CliResult = Result<(), CliError>;

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            planner_url: self.planner_url.clone(),
            editor_url: self.editor_url.clone(),
            segmenter_url: self.segmenter_url.clone(),
            verifier_url: self.verifier_url.clone(),
            embedder_url: self.embedder_url.clone(),
            ..Overrides::default()
        }
    }
}

impl ExecArgs {
    fn apply(&self, o: &mut Overrides) {
        o.routing = self.routing.map(Into::into);
        o.verify = self.verify.then_some(true);
        o.threshold = self.threshold;
        o.max_retries = self.max_retries;
        o.region_mode = self.region_mode.map(Into::into);
        o.dilation_percent = self.dilation;
        o.min_box_area = self.min_box_area;
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    if g.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.jobs)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    let mut overrides = g.overrides();
    match &cli.command {
        Command::Edit { exec, .. } | Command::Eval { exec, .. } => exec.apply(&mut overrides),
        Command::Refine {
            dilation,
            min_box_area,
            ..
        } => {
            overrides.dilation_percent = *dilation;
            overrides.min_box_area = *min_box_area;
        }
        _ => {}
    }
    let cfg = config::load(g.config.as_deref(), &overrides, |k| std::env::var(k).ok())?;
    eprintln!("config fingerprint: {}", cfg.fingerprint(g.mock));
    let clients = backends::Clients::build(&cfg, g.mock);

    match cli.command {
        Command::Plan {
            image,
            source,
            json,
        } => commands::plan(&clients, &image, &source, json),
        Command::Refine {
            image,
            plan_file,
            out_dir,
            masks,
            ..
        } => commands::refine(&cfg, &clients, &image, &plan_file, &out_dir, &masks),
        Command::Edit {
            image,
            source,
            out,
            trace,
            ..
        } => commands::edit(&cfg, &clients, &image, &source, &out, trace.as_deref()),
        Command::Annotate {
            corpus,
            out_dir,
            image_root,
            level,
        } => annotate::run(&cfg, &clients, &corpus, &out_dir, &image_root, level),
        Command::Eval {
            records,
            image_root,
            out,
            boxes,
            k,
            ..
        } => commands::eval(
            &cfg,
            &clients,
            &records,
            &image_root,
            out.as_deref(),
            boxes.as_deref(),
            k,
        ),
        Command::Stats {
            records,
            json,
            categories,
        } => commands::stats(&cfg, &records, json, categories),
        Command::MockServe { addr, workers } => commands::mock_serve(&addr, workers),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
