//! `anycbm` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage, configuration or input errors,
//! 2 when training or evaluation fails numerically.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anycbm::anycbm::{train_anycbm, AnyCbmHeads};
use anycbm::blackbox::{train_blackbox, BlackBoxModel};
use anycbm::cbm::train_cbm;
use anycbm::checkpoint::{hash_bytes, Checkpoint};
use anycbm::data::DATA_DIR_ENV;
use anycbm::experiments::{self, load_splits, Report, RunConfig, SeedModels};
use anycbm::nn::grad_check_suite;
use anycbm::train::TrainLog;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "anycbm", version, about = "Train and evaluate concept bottlenecks on frozen classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write its checkpoint.
    Train(TrainArgs),
    /// Black box, CBM and AnyCBM on one dataset over every seed.
    Table1(RunArgs),
    /// RGB-trained black box with grey-trained CBM and AnyCBM heads.
    Table2(RunArgs),
    /// Intervention curves for AnyCBM and CBM under embedding noise.
    Interventions(RunArgs),
    /// Serve a black box and its heads over HTTP.
    Serve(ServeArgs),
    /// Compare backprop against finite differences on random networks.
    GradCheck(GradCheckArgs),
    /// Describe a checkpoint, or the effective configuration.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Blackbox,
    Cbm,
    Anycbm,
}

#[derive(Debug, Args)]
struct TrainArgs {
    kind: ModelKind,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path; defaults to `<out_dir>/<kind>-seed<seed>.acbm`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Black-box checkpoint the heads attach to (anycbm only).
    #[arg(long)]
    blackbox: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    blackbox: PathBuf,
    #[arg(long)]
    heads: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    /// Random networks per layer/loss combination.
    #[arg(long, default_value_t = 20)]
    nets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct InfoArgs {
    /// Checkpoint to describe.
    path: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<anycbm::Error> for Failure {
    fn from(e: anycbm::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;
type Runner = fn(&RunConfig) -> anycbm::Result<(Report, Vec<SeedModels>)>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Table1(args) => cmd_run("table1", args, experiments::run_table1),
        Command::Table2(args) => cmd_run("table2", args, experiments::run_table2),
        Command::Interventions(args) => cmd_run("interventions", args, experiments::run_interventions),
        Command::Serve(args) => cmd_serve(args),
        Command::GradCheck(args) => cmd_grad_check(args),
        Command::Info(args) => cmd_info(args),
    }
}

/// File values first, then `--set`, then dedicated flags. The data
/// directory environment variable sits between the file and the flag.
fn build_config(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        cfg.data_dir = PathBuf::from(dir);
    }
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags = [
        ("dataset", args.dataset.clone()),
        ("data_dir", args.data_dir.as_ref().map(|p| p.display().to_string())),
        ("seeds", args.seeds.clone()),
        ("sigma", args.sigma.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if args.sequential {
        cfg.parallel = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_log(checkpoint: &Path, log: &TrainLog) -> CliResult {
    let path = checkpoint.with_extension("log.json");
    let text = serde_json::to_string_pretty(log).map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    if args.kind == ModelKind::Anycbm && args.blackbox.is_none() {
        return Err(Failure::Usage("train anycbm needs --blackbox <checkpoint>".into()));
    }
    let cfg = build_config(&args.config)?;
    let name = match args.kind {
        ModelKind::Blackbox => "blackbox",
        ModelKind::Cbm => "cbm",
        ModelKind::Anycbm => "anycbm",
    };
    let out = args
        .out
        .unwrap_or_else(|| cfg.out_dir.join(format!("{name}-seed{}.acbm", args.seed)));
    let splits = load_splits(&cfg)?;
    let (ckpt, log) = match args.kind {
        ModelKind::Blackbox => {
            let (model, log) = train_blackbox(&splits.train, &splits.val, &cfg.blackbox_config(args.seed))?;
            println!("test task ROC-AUC {:.4}", model.task_auc(&splits.test)?);
            (model.to_checkpoint(), log)
        }
        ModelKind::Cbm => {
            let (model, log) = train_cbm(&splits.train, &splits.val, &cfg.cbm_config(args.seed), cfg.cbm_mode)?;
            let (t, c) = anycbm::cbm::cbm_scores(&model, &splits.test)?;
            println!("test task ROC-AUC {t:.4}, concept ROC-AUC {c:.4}");
            (model.to_checkpoint(), log)
        }
        ModelKind::Anycbm => {
            let path = args.blackbox.as_ref().expect("checked above");
            let blackbox = BlackBoxModel::from_checkpoint(&Checkpoint::load(path)?)?;
            let (heads, log) = train_anycbm(
                &blackbox,
                &splits.train,
                &splits.val,
                &cfg.anycbm_config(args.seed),
                cfg.anycbm_mode,
            )?;
            let (t, c) = anycbm::anycbm::anycbm_scores(&blackbox, &heads, &splits.test)?;
            println!("test task ROC-AUC {t:.4}, concept ROC-AUC {c:.4}");
            (heads.to_checkpoint(), log)
        }
    };
    ckpt.save(&out)?;
    write_log(&out, &log)?;
    println!("wrote {} (sha256 {})", out.display(), ckpt.hash());
    Ok(())
}

fn cmd_run(
    name: &str,
    args: RunArgs,
    runner: Runner,
) -> CliResult {
    let mut cfg = build_config(&args.config)?;
    if let Some(dir) = args.out_dir {
        cfg.out_dir = dir;
    }
    let (report, models) = runner(&cfg)?;
    let dir = cfg.out_dir.join(name);
    experiments::write_run(&dir, &cfg, &report, &models)?;
    print!("{}", report.table);
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let blackbox = BlackBoxModel::from_checkpoint(&Checkpoint::load(&args.blackbox)?)?;
    let heads = AnyCbmHeads::from_checkpoint(&Checkpoint::load(&args.heads)?)?;
    let mut cfg = build_config(&args.config)?;
    if args.config.dataset.is_none() {
        if let Some(variant) = blackbox.variant() {
            cfg.dataset = variant;
        }
    }
    let splits = load_splits(&cfg)?;
    let state = anycbm_serve::AppState::new(blackbox, heads, &splits.train, splits.test, cfg.noise_layer)?;
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(anycbm_serve::serve(Arc::new(state), addr))?;
    Ok(())
}

fn cmd_grad_check(args: GradCheckArgs) -> CliResult {
    let outcomes = grad_check_suite(args.nets, args.seed, args.step)?;
    let mut failed = 0;
    for o in &outcomes {
        let ok = o.worst < args.tolerance;
        if !ok {
            failed += 1;
        }
        println!(
            "{} hidden={} output={} loss={} nets={} max_rel_err={:.3e}",
            if ok { "PASS" } else { "FAIL" },
            o.combo.hidden,
            o.combo.output,
            o.combo.loss,
            o.nets,
            o.worst
        );
    }
    if failed > 0 {
        return Err(Failure::Numeric(format!(
            "{failed} combination(s) exceeded relative error {}",
            args.tolerance
        )));
    }
    Ok(())
}

fn cmd_info(args: InfoArgs) -> CliResult {
    match args.path {
        Some(path) => {
            let bytes = std::fs::read(&path)?;
            let ckpt = Checkpoint::from_bytes(&bytes)?;
            println!("file: {}", path.display());
            println!("sha256: {}", hash_bytes(&bytes));
            println!("tensors:");
            for t in &ckpt.tensors {
                println!("  {} {:?}", t.name, t.shape);
            }
            println!("metadata: {}", ckpt.metadata);
        }
        None => {
            let cfg = build_config(&args.config)?;
            print!("{}", cfg.to_kv());
            let files = [
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
            ];
            let missing: Vec<&str> = files.iter().copied().filter(|f| !cfg.data_dir.join(f).exists()).collect();
            if missing.is_empty() {
                println!("# MNIST files found in {}", cfg.data_dir.display());
            } else {
                println!("# missing from {}: {}", cfg.data_dir.display(), missing.join(", "));
            }
        }
    }
    Ok(())
}
