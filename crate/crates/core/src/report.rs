//! Dataset evaluation and CSV report emission.
//!
//! `table_psnr.csv` / `table_ssim.csv` hold one row per dataset with the
//! noisy-input score followed by one column per model variant;
//! `per_image.csv` holds the rows those means are taken over. Every file
//! opens with a `#` provenance comment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::DatasetSpec;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, SsimParams};
use crate::network::{load_model, Network};
use crate::noise::{add_noise, derive_seed, NoiseSpec};
use crate::train::TrainHistory;
use crate::VERSION;

/// Variant label of the noisy input column.
pub const INPUT_VARIANT: &str = "input";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRow {
    pub dataset: String,
    pub image: String,
    pub variant: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub configs: Vec<String>,
    pub seed: u64,
    pub sigma: f64,
    pub noise: String,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!(
            "framelet {VERSION} config={} seed={} sigma={} noise={}",
            if self.configs.is_empty() {
                "-".to_string()
            } else {
                self.configs.join("+")
            },
            self.seed,
            self.sigma,
            self.noise
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub provenance: Provenance,
    /// Model variant labels in column order (the input column excluded).
    pub variants: Vec<String>,
    /// Dataset labels in row order.
    pub datasets: Vec<String>,
    pub rows: Vec<ImageRow>,
    pub histories: Vec<(String, TrainHistory)>,
}

/// `(psnr, ssim)` means for one table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
}

impl EvalReport {
    pub fn new(provenance: Provenance, variants: Vec<String>) -> Self {
        Self {
            provenance,
            variants,
            datasets: Vec::new(),
            rows: Vec::new(),
            histories: Vec::new(),
        }
    }

    /// Arithmetic mean over the per-image rows of `(dataset, variant)`.
    pub fn mean(&self, dataset: &str, variant: &str) -> Option<CellMean> {
        let (mut p, mut s, mut n) = (0.0, 0.0, 0usize);
        for r in self
            .rows
            .iter()
            .filter(|r| r.dataset == dataset && r.variant == variant)
        {
            p += r.psnr;
            s += r.ssim;
            n += 1;
        }
        (n > 0).then(|| CellMean {
            psnr: p / n as f64,
            ssim: s / n as f64,
            count: n,
        })
    }

    fn columns(&self) -> Vec<&str> {
        std::iter::once(INPUT_VARIANT)
            .chain(self.variants.iter().map(String::as_str))
            .collect()
    }

    fn table(&self, pick: impl Fn(&CellMean) -> f64) -> String {
        let mut out = format!("# {}\ndataset", self.provenance.comment());
        for c in self.columns() {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for d in &self.datasets {
            out.push_str(d);
            for c in self.columns() {
                out.push(',');
                if let Some(m) = self.mean(d, c) {
                    out.push_str(&fmt_value(pick(&m)));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn psnr_table(&self) -> String {
        self.table(|m| m.psnr)
    }

    pub fn ssim_table(&self) -> String {
        self.table(|m| m.ssim)
    }

    pub fn per_image_csv(&self) -> String {
        let mut out = format!(
            "# {}\ndataset,image,variant,psnr,ssim\n",
            self.provenance.comment()
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.dataset,
                r.image,
                r.variant,
                fmt_value(r.psnr),
                fmt_value(r.ssim)
            );
        }
        out
    }
}

/// Shortest round-trip representation; `inf` for identical-image PSNR.
pub fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `table_psnr.csv`, `table_ssim.csv`, `per_image.csv` and one
/// `history_<variant>.csv` per recorded training history. Returns the
/// paths written.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_file(dir.join("table_psnr.csv"), report.psnr_table().as_bytes())?,
        write_file(dir.join("table_ssim.csv"), report.ssim_table().as_bytes())?,
        write_file(dir.join("per_image.csv"), report.per_image_csv().as_bytes())?,
    ];
    for (variant, history) in &report.histories {
        let mut buf = Vec::new();
        history
            .write_csv(&mut buf, &[report.provenance.comment()])
            .expect("writing to memory");
        written.push(write_file(
            dir.join(format!("history_{variant}.csv")),
            &buf,
        )?);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub datasets: Vec<DatasetSpec>,
    pub models: Vec<PathBuf>,
    /// Model, σ and base seed; per-image noise seeds derive from it.
    pub noise: NoiseSpec,
    pub ssim: SsimParams,
}

/// Labels models by config string, falling back to the file stem when two
/// models share one.
fn variant_labels(models: &[(PathBuf, Network)]) -> Vec<String> {
    let digits: Vec<&str> = models.iter().map(|(_, n)| n.config().digits()).collect();
    models
        .iter()
        .map(|(path, net)| {
            let d = net.config().digits();
            if digits.iter().filter(|&&x| x == d).count() > 1 || d == INPUT_VARIANT {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| d.to_string())
            } else {
                d.to_string()
            }
        })
        .collect()
}

/// Corrupts every image with seeded noise, denoises it with every model and
/// scores input and outputs against the clean image.
pub fn run_eval(opts: &EvalOptions) -> Result<EvalReport> {
    opts.noise.validate()?;
    let models: Vec<(PathBuf, Network)> = opts
        .models
        .iter()
        .map(|p| Ok((p.clone(), load_model(p)?)))
        .collect::<Result<_>>()?;
    evaluate_networks(opts, &models)
}

/// [`run_eval`] with networks already in memory.
pub fn evaluate_networks(opts: &EvalOptions, models: &[(PathBuf, Network)]) -> Result<EvalReport> {
    opts.noise.validate()?;
    let labels = variant_labels(models);
    let provenance = Provenance {
        configs: models
            .iter()
            .map(|(_, n)| n.config().digits().to_string())
            .collect(),
        seed: opts.noise.seed,
        sigma: opts.noise.sigma,
        noise: opts.noise.model.name().to_string(),
    };
    let mut report = EvalReport::new(provenance, labels.clone());

    for (d_idx, spec) in opts.datasets.iter().enumerate() {
        let dataset = spec.name.label().to_string();
        let images = spec.load()?;
        let per_image: Vec<Vec<ImageRow>> = images
            .par_iter()
            .enumerate()
            .map(|(i, (name, clean))| {
                let seed = derive_seed(opts.noise.seed, d_idx as u64, i as u64);
                let noisy = add_noise(clean, &opts.noise.with_seed(seed))?;
                let row = |variant: &str, test: &crate::Image| -> Result<ImageRow> {
                    let m = evaluate(clean, test, &opts.ssim)?;
                    Ok(ImageRow {
                        dataset: dataset.clone(),
                        image: name.clone(),
                        variant: variant.to_string(),
                        psnr: m.psnr_db,
                        ssim: m.ssim,
                    })
                };
                let mut rows = vec![row(INPUT_VARIANT, &noisy)?];
                for ((_, net), label) in models.iter().zip(&labels) {
                    let out = net.denoise_padded(&noisy)?.clamped(0.0, 255.0);
                    rows.push(row(label, &out)?);
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        report.rows.extend(per_image.into_iter().flatten());
        report.datasets.push(dataset);
    }
    Ok(report)
}
