//! Dataset directory format.
//!
//! ```text
//! manifest.json   {"n_views", "n_samples", "K", "views": [...], "labels"?, "mask"?,
//!                  "noise_flags"?, "standardize"?}
//! view_<v>.csv    headerless comma-separated floats, one sample per row
//! labels.csv      one integer per line
//! mask.csv        N rows of V comma-separated 0/1
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FlagMatrix, IndicatorMatrix, MultiViewDataset};
use crate::error::{GlcError, Result};
use crate::nn::DenseMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_views: usize,
    pub n_samples: usize,
    #[serde(rename = "K")]
    pub n_clusters: usize,
    pub views: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_flags: Option<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| GlcError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| GlcError::Format(format!("{}: {e}", path.display())))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GlcError::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    GlcError::Parse(format!(
                        "{}:{line_no}: column {} is not a number: '{cell}'",
                        path.display(),
                        col + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(GlcError::Format(format!(
                    "{}:{line_no}: {} columns, expected {}",
                    path.display(),
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    data_lines(&text)
        .map(|(line_no, l)| {
            l.parse::<usize>()
                .map_err(|_| GlcError::Parse(format!("{}:{line_no}: bad label '{l}'", path.display())))
        })
        .collect()
}

fn read_flags(path: &Path, n_views: usize) -> Result<FlagMatrix> {
    let text = read_text(path)?;
    let mut bits = Vec::new();
    let mut rows = 0;
    for (line_no, line) in data_lines(&text) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_views {
            return Err(GlcError::Format(format!(
                "{}:{line_no}: {} entries, expected {n_views}",
                path.display(),
                cells.len()
            )));
        }
        for cell in cells {
            bits.push(match cell {
                "1" => true,
                "0" => false,
                other => {
                    return Err(GlcError::Parse(format!(
                        "{}:{line_no}: expected 0 or 1, got '{other}'",
                        path.display()
                    )))
                }
            });
        }
        rows += 1;
    }
    FlagMatrix::new(rows, n_views, bits)
}

/// Load and validate a dataset directory. A missing mask means every view is
/// available; features are standardized when the manifest asks for it.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(dir)?;
    if manifest.views.len() != manifest.n_views {
        return Err(GlcError::Format(format!(
            "manifest lists {} view files for n_views = {}",
            manifest.views.len(),
            manifest.n_views
        )));
    }
    let views = manifest
        .views
        .iter()
        .map(|f| read_matrix(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    for (v, x) in views.iter().enumerate() {
        if x.rows() != manifest.n_samples {
            return Err(GlcError::Format(format!(
                "{} has {} rows, manifest declares {}",
                manifest.views[v],
                x.rows(),
                manifest.n_samples
            )));
        }
    }
    let labels = manifest
        .labels
        .as_ref()
        .map(|f| read_labels(&dir.join(f)))
        .transpose()?;
    let mask = manifest
        .mask
        .as_ref()
        .map(|f| read_flags(&dir.join(f), manifest.n_views).and_then(IndicatorMatrix::try_from))
        .transpose()?;
    let mut ds = MultiViewDataset::new(views, labels, mask, manifest.n_clusters)?;
    if let Some(f) = &manifest.noise_flags {
        ds.noise_flags = Some(read_flags(&dir.join(f), manifest.n_views)?);
        ds.validate()?;
    }
    if manifest.standardize {
        ds.standardize();
    }
    Ok(ds)
}

pub(crate) fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, x) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn format_flags(f: &FlagMatrix) -> String {
    let mut out = String::new();
    for i in 0..f.n_samples() {
        let row: Vec<&str> = f.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| GlcError::io(path, e))
}

/// Write `dataset` in directory format, including the mask and any noise
/// flags. Values are written as-is and the manifest disables
/// standardization.
pub fn save_dataset(dataset: &MultiViewDataset, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GlcError::io(dir, e))?;
    let views: Vec<String> = (1..=dataset.n_views()).map(|v| format!("view_{v}.csv")).collect();
    for (name, x) in views.iter().zip(&dataset.views) {
        write_file(&dir.join(name), &format_matrix(x))?;
    }
    let labels = dataset.labels.as_ref().map(|labels| {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        ("labels.csv".to_string(), text)
    });
    if let Some((name, text)) = &labels {
        write_file(&dir.join(name), text)?;
    }
    write_file(&dir.join("mask.csv"), &format_flags(dataset.mask.flags()))?;
    if let Some(flags) = &dataset.noise_flags {
        write_file(&dir.join("noise_flags.csv"), &format_flags(flags))?;
    }
    let manifest = Manifest {
        n_views: dataset.n_views(),
        n_samples: dataset.n_samples(),
        n_clusters: dataset.n_clusters,
        views,
        labels: labels.map(|l| l.0),
        mask: Some("mask.csv".into()),
        noise_flags: dataset.noise_flags.as_ref().map(|_| "noise_flags.csv".into()),
        standardize: false,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &(json + "\n"))?;
    Ok(manifest)
}
