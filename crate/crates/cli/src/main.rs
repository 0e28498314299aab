//! `glc`: prepare corrupted datasets, train, sweep rates and ablate loss
//! terms. Exit codes: 0 success, 1 config error, 2 I/O error, 3 numerical
//! abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glc_core::data::Setting;
use glc_core::error::GlcError;
use glc_core::model::Profile;
use glc_core::pipeline::Ablation;
use serde_json::{json, Map, Value};

use crate::config::Command;

#[derive(Parser)]
#[command(
    name = "glc",
    version,
    about = "Graph-guided contrastive multi-view clustering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Write a corrupted copy of a dataset.
    Prepare(Flags),
    /// Pretrain, train and evaluate one run.
    Train(Flags),
    /// Run every setting x rate cell.
    Sweep(Flags),
    /// Run the rec, rec+ggc and full rows for every setting x rate.
    Ablate(Flags),
}

#[derive(Args, Default)]
#[command(allow_negative_numbers = true)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or `synthetic:n=..,k=..,v=..,dims=..,separation=..,seed=..`.
    #[arg(long)]
    dataset: Option<String>,
    /// Setting, or a comma list for sweep and ablate.
    #[arg(long, value_delimiter = ',')]
    setting: Option<Vec<Setting>>,
    #[arg(long, conflicts_with = "rates")]
    rate: Option<f64>,
    /// Comma-separated rates.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// [default: 0.4]
    #[arg(long)]
    noise_std: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    alpha: Option<f64>,
    /// [default: 1.0]
    #[arg(long)]
    beta: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    tau: Option<f64>,
    /// Percent of each graph row mined as positives [default: 1]
    #[arg(long)]
    pos: Option<f64>,
    /// Percent of each graph row mined as negatives [default: 50]
    #[arg(long)]
    neg: Option<f64>,
    /// [default: 256]
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// rec, rec+ggc or full (train and sweep).
    #[arg(long)]
    ablation: Option<Ablation>,
    /// paper or desk [default: paper]
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(key.to_string(), v);
            }
        };
        put("dataset", self.dataset.as_ref().map(|v| json!(v)));
        put("settings", self.setting.as_ref().map(|v| json!(v)));
        put(
            "rates",
            self.rate
                .map(|r| json!([r]))
                .or_else(|| self.rates.as_ref().map(|v| json!(v))),
        );
        put("noise_std", self.noise_std.map(|v| json!(v)));
        put("alpha", self.alpha.map(|v| json!(v)));
        put("beta", self.beta.map(|v| json!(v)));
        put("tau", self.tau.map(|v| json!(v)));
        put("pos", self.pos.map(|v| json!(v)));
        put("neg", self.neg.map(|v| json!(v)));
        put("batch_size", self.batch.map(|v| json!(v)));
        put("epochs", self.epochs.map(|v| json!(v)));
        put("pretrain_epochs", self.pretrain_epochs.map(|v| json!(v)));
        put("ablation", self.ablation.map(|v| json!(v)));
        put("profile", self.profile.map(|v| json!(v)));
        put("seed", self.seed.map(|v| json!(v)));
        put("out", self.out.as_ref().map(|v| json!(v)));
        m
    }
}

pub(crate) fn exit_code(e: &GlcError) -> i32 {
    match e {
        GlcError::Io { .. } | GlcError::Format(_) | GlcError::Parse(_) | GlcError::Invariant(_) => 2,
        GlcError::Numeric(_) => 3,
        GlcError::Config(_) | GlcError::Usage(_) | GlcError::Shape(_) => 1,
    }
}

fn thread_pool() -> Result<(), GlcError> {
    let Ok(raw) = std::env::var("GLC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| GlcError::Config(format!("GLC_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| GlcError::Config(e.to_string()))
}

fn print_metrics(report: &glc_core::pipeline::ClusterReport) {
    let (m, s) = (report.mean, report.std);
    println!(
        "ACC {:.4} ± {:.4}  NMI {:.4} ± {:.4}  ARI {:.4} ± {:.4}",
        m.acc, s.acc, m.nmi, s.nmi, m.ari, s.ari
    );
}

fn run(cli: Cli) -> Result<i32, GlcError> {
    thread_pool()?;
    let (command, flags) = match &cli.command {
        Sub::Prepare(f) => (Command::Prepare, f),
        Sub::Train(f) => (Command::Train, f),
        Sub::Sweep(f) => (Command::Sweep, f),
        Sub::Ablate(f) => (Command::Ablate, f),
    };
    let cfg = config::resolve(command, flags.config.as_deref(), flags.overrides())?;
    eprintln!("{}", serde_json::to_string(&cfg).expect("config serializes"));
    let cells = match command {
        Command::Prepare => {
            let out = commands::prepare(&cfg)?;
            println!("wrote {}", out.display());
            return Ok(0);
        }
        Command::Train => {
            let (out, report) = commands::train(&cfg)?;
            print_metrics(&report);
            println!("wrote {}", out.display());
            return Ok(0);
        }
        Command::Sweep => commands::sweep(&cfg)?,
        Command::Ablate => commands::ablate(&cfg)?,
    };
    let (out, records) = cells;
    for c in &records {
        match &c.report {
            Some(r) => println!(
                "{} rate {} {}: ACC {:.4} NMI {:.4} ARI {:.4}",
                c.setting,
                c.rate,
                c.ablation.name(),
                r.mean.acc,
                r.mean.nmi,
                r.mean.ari
            ),
            None => println!(
                "{} rate {} {}: FAILED {}",
                c.setting,
                c.rate,
                c.ablation.name(),
                c.error.as_deref().unwrap_or("")
            ),
        }
    }
    println!("wrote {}", out.display());
    let failed: Vec<&commands::CellRecord> = records.iter().filter(|c| c.exit_code != 0).collect();
    if let Some(first) = failed.first() {
        eprintln!("error: {} of {} cells failed", failed.len(), records.len());
        return Ok(first.exit_code);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
