use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glc_core::data::{save_dataset, Manifest, MultiViewDataset, Setting, MANIFEST_FILE};
use glc_core::error::{GlcError, Result};
use glc_core::pipeline::{run_experiment, Ablation, ClusterReport, ExperimentResult};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_source, run_seed, Command, ExperimentConfig};

/// Bumped whenever a field is added, removed or renamed in any artifact.
pub const SCHEMA_VERSION: u32 = 1;

pub const SWEEP_CSV_HEADER: &str =
    "setting,rate,ablation,seed,status,acc_mean,acc_std,nmi_mean,nmi_std,ari_mean,ari_std,config_hash,wall_time_s";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| GlcError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| GlcError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let (setting, rate) = cfg.single_cell("prepare")?;
    let out = cfg.out_dir(Command::Prepare);
    let source = Path::new(&cfg.dataset);
    if setting == Setting::Clean && source.is_dir() {
        copy_clean(source, &out)?;
    } else {
        let ds = load_source(&cfg.dataset)?;
        save_dataset(&setting.apply(&ds, rate, cfg.noise_std, cfg.train.seed)?, &out)?;
    }
    Ok(out)
}

/// Copy the listed files unchanged and add an all-ones mask if there is none.
fn copy_clean(src: &Path, dst: &Path) -> Result<()> {
    let mut manifest = Manifest::read(src)?;
    // validates the contents before anything is written
    let ds = load_source(&src.display().to_string())?;
    create_dir(dst)?;
    let same = |a: &Path, b: &Path| matches!((a.canonicalize(), b.canonicalize()), (Ok(x), Ok(y)) if x == y);
    if same(src, dst) {
        return Err(GlcError::Config(format!(
            "prepare would overwrite its input {}",
            src.display()
        )));
    }
    let listed = manifest
        .views
        .iter()
        .chain(&manifest.labels)
        .chain(&manifest.mask)
        .chain(&manifest.noise_flags);
    for name in listed {
        let (from, to) = (src.join(name), dst.join(name));
        if let Some(parent) = to.parent() {
            create_dir(parent)?;
        }
        fs::copy(&from, &to).map_err(|e| GlcError::io(&from, e))?;
    }
    if manifest.mask.is_none() {
        let row = vec!["1"; ds.n_views()].join(",");
        let text: String = (0..ds.n_samples()).map(|_| format!("{row}\n")).collect();
        write_file(&dst.join("mask.csv"), &text)?;
        manifest.mask = Some("mask.csv".into());
    }
    write_file(&dst.join(MANIFEST_FILE), &to_json(&manifest))
}

#[derive(Debug, Serialize)]
struct RunArtifact<'a, T: Serialize> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    config_hash: String,
    seed: u64,
    run_seed: u64,
    #[serde(flatten)]
    body: T,
}

fn artifact<T: Serialize>(cfg: &ExperimentConfig, run_seed: u64, body: T) -> RunArtifact<'_, T> {
    RunArtifact {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        run_seed,
        body,
    }
}

/// Corrupt, train and evaluate one cell. `cell` has a single setting and rate.
fn run_cell(base: &MultiViewDataset, cell: &ExperimentConfig) -> Result<(u64, ExperimentResult)> {
    let (setting, rate) = cell.single_cell("a run")?;
    let seed = run_seed(cell.train.seed, setting, rate);
    let ds = setting.apply(base, rate, cell.noise_std, seed)?;
    let mut train = cell.train.clone();
    train.seed = seed;
    Ok((seed, run_experiment(&ds, &train)?))
}

pub fn train(cfg: &ExperimentConfig) -> Result<(PathBuf, ClusterReport)> {
    let (setting, rate) = cfg.single_cell("train")?;
    let cell = ExperimentConfig {
        out: cfg.out.clone(),
        ..cfg.cell(setting, rate, cfg.ablation)
    };
    let out = cell.out_dir(Command::Train);
    create_dir(&out)?;
    let base = load_source(&cell.dataset)?;
    let t = Instant::now();
    let (seed, result) = run_cell(&base, &cell)?;
    info!("trained in {:.1}s", t.elapsed().as_secs_f64());
    #[derive(Serialize)]
    struct Checkpoint<'a> {
        model: &'a glc_core::model::GlcModel,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        report: &'a ClusterReport,
    }
    write_file(&out.join("history.csv"), &result.history.to_csv())?;
    write_file(
        &out.join("checkpoint.json"),
        &to_json(&artifact(&cell, seed, Checkpoint { model: &result.model })),
    )?;
    write_file(
        &out.join("report.json"),
        &to_json(&artifact(&cell, seed, Report { report: &result.report })),
    )?;
    Ok((out, result.report))
}

/// One (setting, rate, ablation) cell of a sweep or ablation.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub setting: Setting,
    pub rate: f64,
    pub ablation: Ablation,
    pub run_seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
    pub status: &'static str,
    pub error: Option<String>,
    /// Exit code the failure maps to; 0 when the cell succeeded.
    #[serde(skip)]
    pub exit_code: i32,
    pub report: Option<ClusterReport>,
}

impl CellRecord {
    fn dir_name(&self) -> String {
        format!(
            "{}_{}_{}",
            self.setting,
            self.rate,
            self.ablation.name().replace('+', "-")
        )
    }
}

#[derive(Debug, Serialize)]
pub struct SweepReport<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: &'a ExperimentConfig,
    pub config_hash: String,
    pub cells: &'a [CellRecord],
}

fn run_cells(cfg: &ExperimentConfig, out: &Path, cells: Vec<ExperimentConfig>) -> Result<Vec<CellRecord>> {
    let base = load_source(&cfg.dataset)?;
    let records: Vec<(CellRecord, Option<String>)> = cells
        .into_par_iter()
        .map(|cell| {
            let t = Instant::now();
            let outcome = run_cell(&base, &cell);
            let (setting, rate) = (cell.settings[0], cell.rates[0]);
            let mut record = CellRecord {
                setting,
                rate,
                ablation: cell.ablation,
                run_seed: run_seed(cell.train.seed, setting, rate),
                config_hash: cell.hash(),
                config: cell,
                wall_time_s: t.elapsed().as_secs_f64(),
                status: "ok",
                error: None,
                exit_code: 0,
                report: None,
            };
            let history = match outcome {
                Ok((_, result)) => {
                    record.report = Some(result.report);
                    Some(result.history.to_csv())
                }
                Err(e) => {
                    log::error!("cell {}: {e}", record.dir_name());
                    record.status = "failed";
                    record.exit_code = crate::exit_code(&e);
                    record.error = Some(e.to_string());
                    None
                }
            };
            info!("cell {} done in {:.1}s", record.dir_name(), record.wall_time_s);
            (record, history)
        })
        .collect();
    for (record, history) in &records {
        if let Some(csv) = history {
            let dir = out.join("cells").join(record.dir_name());
            create_dir(&dir)?;
            write_file(&dir.join("history.csv"), csv)?;
        }
    }
    Ok(records.into_iter().map(|(r, _)| r).collect())
}

fn write_report(cfg: &ExperimentConfig, command: &'static str, out: &Path, cells: &[CellRecord]) -> Result<()> {
    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg,
        config_hash: cfg.hash(),
        cells,
    };
    write_file(&out.join(format!("{command}.json")), &to_json(&report))
}

pub fn sweep_csv(cells: &[CellRecord]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for c in cells {
        let stats = match &c.report {
            Some(r) => format!(
                "{},{},{},{},{},{}",
                r.mean.acc, r.std.acc, r.mean.nmi, r.std.nmi, r.mean.ari, r.std.ari
            ),
            None => ",,,,,".into(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{stats},{},{:.3}",
            c.setting,
            c.rate,
            c.ablation.name(),
            c.run_seed,
            c.status,
            c.config_hash,
            c.wall_time_s
        );
    }
    s
}

fn mean_cell(cells: &[CellRecord], setting: Setting, rate: f64, ablation: Ablation) -> String {
    cells
        .iter()
        .find(|c| c.setting == setting && c.rate == rate && c.ablation == ablation)
        .and_then(|c| c.report.as_ref())
        .map_or_else(|| ",".to_string(), |r| format!("{:.4},{:.4}", r.mean.acc, r.mean.nmi))
}

/// Wide table: one row per rate, mean ACC and NMI columns per setting.
pub fn sweep_table(cfg: &ExperimentConfig, cells: &[CellRecord]) -> String {
    let mut s = "rate".to_string();
    for setting in &cfg.settings {
        let _ = write!(s, ",{setting}_acc,{setting}_nmi");
    }
    s.push('\n');
    for &rate in &cfg.rates {
        s.push_str(&rate.to_string());
        for &setting in &cfg.settings {
            let _ = write!(s, ",{}", mean_cell(cells, setting, rate, cfg.ablation));
        }
        s.push('\n');
    }
    s
}

fn short_name(setting: Setting) -> &'static str {
    match setting {
        Setting::Clean => "C",
        Setting::Incomplete => "I",
        Setting::Noise => "N",
        Setting::Combined => "I+N",
    }
}

/// One row per (rate, ablation row), mean ACC and NMI columns per setting.
pub fn ablation_table(cfg: &ExperimentConfig, cells: &[CellRecord]) -> String {
    let mut s = "rate,row".to_string();
    for &setting in &cfg.settings {
        let n = short_name(setting);
        let _ = write!(s, ",{n}_acc,{n}_nmi");
    }
    s.push('\n');
    for &rate in &cfg.rates {
        for row in Ablation::ALL {
            let _ = write!(s, "{rate},{}", row.name());
            for &setting in &cfg.settings {
                let _ = write!(s, ",{}", mean_cell(cells, setting, rate, row));
            }
            s.push('\n');
        }
    }
    s
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<CellRecord>)> {
    let out = cfg.out_dir(Command::Sweep);
    create_dir(&out)?;
    let cells = cfg
        .settings
        .iter()
        .flat_map(|&s| cfg.rates.iter().map(move |&r| cfg.cell(s, r, cfg.ablation)))
        .collect();
    let records = run_cells(cfg, &out, cells)?;
    write_report(cfg, "sweep", &out, &records)?;
    write_file(&out.join("sweep.csv"), &sweep_csv(&records))?;
    write_file(&out.join("sweep_table.csv"), &sweep_table(cfg, &records))?;
    Ok((out, records))
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<CellRecord>)> {
    let out = cfg.out_dir(Command::Ablate);
    create_dir(&out)?;
    let cells = cfg
        .settings
        .iter()
        .flat_map(|&s| {
            cfg.rates
                .iter()
                .flat_map(move |&r| Ablation::ALL.into_iter().map(move |a| cfg.cell(s, r, a)))
        })
        .collect();
    let records = run_cells(cfg, &out, cells)?;
    write_report(cfg, "ablate", &out, &records)?;
    write_file(&out.join("ablation_cells.csv"), &sweep_csv(&records))?;
    write_file(&out.join("ablation.csv"), &ablation_table(cfg, &records))?;
    Ok((out, records))
}
