//! `voxlabel` command line. Every subcommand prints JSON on stdout; logs go
//! to stderr. Exit status is 0 on success, 2 on usage errors and 1 on
//! runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;
use voxlabel_core::active::{rank, Strategy};
use voxlabel_core::datastore::Datastore;
use voxlabel_core::guidance::{simulate_clicks_with, ClickSimOptions};
use voxlabel_core::planner::{plan_with, save_plan};
use voxlabel_core::volume::{dice, nifti};
use voxlabel_core::{ClickSet, LabelMask, Volume};
use voxlabel_server::{
    active_learning_model, encode_label, infer, load_models, parse_scribbles, ApiError, AppManifest, InferParams,
    ServerConfig, DEFAULT_PORT,
};

#[derive(Debug, Parser)]
#[command(name = "voxlabel", version, about = "Interactive volumetric labeling engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP annotation server.
    Serve {
        #[arg(long, env = "LABEL_SERVER_ROOT", default_value = ".")]
        root: PathBuf,
        #[arg(long, env = "LABEL_SERVER_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        budget_bytes: Option<u64>,
        #[arg(long)]
        max_body_bytes: Option<usize>,
        /// Directory of a static web client, served under /ui.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Print the training plan for the labeled images under --root.
    Plan {
        #[arg(long, default_value = ".")]
        root: PathBuf,
        #[arg(long)]
        budget_bytes: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write plan.json into the root.
        #[arg(long)]
        save: bool,
    },
    /// One-shot inference on a NIfTI file.
    Infer {
        #[arg(long)]
        model: String,
        #[arg(long)]
        image: PathBuf,
        /// Click set as JSON, e.g. '{"foreground": [[4,5,6]]}'.
        #[arg(long)]
        clicks: Option<String>,
        #[arg(long)]
        scribbles: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Directory holding the manifest and checkpoints.
        #[arg(long, default_value = ".")]
        root: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Rank the unlabeled images under --root.
    Rank {
        #[arg(long, default_value = ".")]
        root: PathBuf,
        #[arg(long, default_value = "epistemic")]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Corrective clicks for a prediction against a reference label.
    SimulateClicks {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_clicks: usize,
        #[arg(long)]
        jitter: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Create or refresh the datastore index under --root.
    DatastoreInit {
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
    /// Dice overlap between two label files.
    Eval { a: PathBuf, b: PathBuf },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<voxlabel_core::Error> for Failure {
    fn from(e: voxlabel_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        match e.code {
            "MissingScribbles" | "MissingClicks" | "BadParams" | "UnknownModel" => {
                Failure::Usage(format!("{}: {}", e.code, e.message))
            }
            _ => Failure::Runtime(anyhow::anyhow!("{}: {}", e.code, e.message)),
        }
    }
}

type CliResult = Result<serde_json::Value, Failure>;

fn read_volume(path: &Path) -> anyhow::Result<Volume> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    nifti::read(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_mask(path: &Path) -> anyhow::Result<LabelMask> {
    let v = read_volume(path)?;
    LabelMask::from_volume(&v).with_context(|| format!("{} is not a binary label", path.display()))
}

fn plan_cmd(root: &Path, budget: u64, manifest: Option<&Path>, save: bool) -> CliResult {
    let manifest = AppManifest::load(manifest, root)?;
    let stats = Datastore::open_or_init(root)?.stats()?;
    let p = plan_with(&stats, budget, &manifest.planner.config)?;
    if save {
        save_plan(root, &p).context("writing plan.json")?;
    }
    Ok(serde_json::to_value(p).expect("plan serializes"))
}

#[allow(clippy::too_many_arguments)]
fn infer_cmd(
    model: &str,
    image: &Path,
    clicks: Option<&str>,
    scribbles: Option<&Path>,
    out: &Path,
    root: &Path,
    manifest: Option<&Path>,
) -> CliResult {
    let clicks: ClickSet = match clicks {
        Some(s) => serde_json::from_str(s).map_err(|e| Failure::Usage(format!("--clicks: {e}")))?,
        None => ClickSet::default(),
    };
    let manifest = AppManifest::load(manifest, root)?;
    let models = load_models(&manifest, root)?;
    let volume = read_volume(image)?;
    let scribbles = match scribbles {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Some(parse_scribbles(&bytes, &volume)?)
        }
        None => None,
    };
    let params = InferParams {
        clicks,
        ..Default::default()
    };
    let mask = infer(&manifest, &models, model, &volume, &params, scribbles.as_ref()).map_err(|e| {
        let flag = match e.code {
            "MissingScribbles" => "--scribbles",
            "MissingClicks" => "--clicks",
            _ => return Failure::from(e),
        };
        Failure::Usage(format!("{flag}: {}: {}", e.code, e.message))
    })?;
    std::fs::write(out, encode_label(&mask, &volume)).with_context(|| format!("writing {}", out.display()))?;
    Ok(json!({"out": out, "label_voxel_count": mask.count()}))
}

fn rank_cmd(root: &Path, strategy: &str, seed: u64, manifest: Option<&Path>) -> CliResult {
    let strategy = Strategy::from_name(strategy, seed)
        .ok_or_else(|| Failure::Usage(format!("--strategy: unknown strategy {strategy:?}")))?;
    let manifest = AppManifest::load(manifest, root)?;
    let models = load_models(&manifest, root)?;
    let model = active_learning_model(&manifest, &models);
    let ds = Datastore::open_or_init(root)?;
    let (_, pool) = ds.partition();
    let ranked = rank(&pool, &strategy, &model, &ds)?;
    Ok(serde_json::to_value(ranked).expect("ranking serializes"))
}

fn simulate_cmd(pred: &Path, gt: &Path, max_clicks: usize, jitter: bool, seed: u64) -> CliResult {
    let clicks = simulate_clicks_with(&read_mask(pred)?, &read_mask(gt)?, max_clicks, ClickSimOptions { jitter, seed })?;
    Ok(serde_json::to_value(clicks).expect("clicks serialize"))
}

fn datastore_init_cmd(root: &Path) -> CliResult {
    let ds = Datastore::open_or_init(root)?;
    let (labeled, unlabeled) = ds.partition();
    Ok(json!({"root": ds.root(), "images": ds.len(), "labeled": labeled, "unlabeled": unlabeled}))
}

fn eval_cmd(a: &Path, b: &Path) -> CliResult {
    Ok(json!(dice(&read_mask(a)?, &read_mask(b)?)?))
}

#[allow(clippy::too_many_arguments)]
fn serve_cmd(
    root: PathBuf,
    port: u16,
    manifest: Option<PathBuf>,
    budget_bytes: Option<u64>,
    max_body_bytes: Option<usize>,
    ui_dir: Option<PathBuf>,
) -> CliResult {
    let mut config = ServerConfig::new(root);
    config.port = port;
    config.manifest = manifest;
    config.budget_bytes = budget_bytes;
    config.ui_dir = ui_dir;
    if let Some(n) = max_body_bytes {
        config.max_body_bytes = n;
    }
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(voxlabel_server::serve(config)).context("server stopped")?;
    Ok(serde_json::Value::Null)
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Serve {
            root,
            port,
            manifest,
            budget_bytes,
            max_body_bytes,
            ui_dir,
        } => serve_cmd(root, port, manifest, budget_bytes, max_body_bytes, ui_dir),
        Command::Plan {
            root,
            budget_bytes,
            manifest,
            save,
        } => plan_cmd(&root, budget_bytes, manifest.as_deref(), save),
        Command::Infer {
            model,
            image,
            clicks,
            scribbles,
            out,
            root,
            manifest,
        } => infer_cmd(
            &model,
            &image,
            clicks.as_deref(),
            scribbles.as_deref(),
            &out,
            &root,
            manifest.as_deref(),
        ),
        Command::Rank {
            root,
            strategy,
            seed,
            manifest,
        } => rank_cmd(&root, &strategy, seed, manifest.as_deref()),
        Command::SimulateClicks {
            pred,
            gt,
            max_clicks,
            jitter,
            seed,
        } => simulate_cmd(&pred, &gt, max_clicks, jitter, seed),
        Command::DatastoreInit { root } => datastore_init_cmd(&root),
        Command::Eval { a, b } => eval_cmd(&a, &b),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(serde_json::Value::Null) => 0,
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json output"));
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
