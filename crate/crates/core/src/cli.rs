//! The `framelet` command-line front end.
//!
//! Exit codes: 0 on success, 2 on a usage error (unknown subcommand or
//! flag, malformed or out-of-range value), 1 on a runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::dataset::{load_image, save_image, DatasetSpec};
use crate::error::{Error, Result};
use crate::hankel::{hankel_lift, hankel_svd, DEFAULT_RANK_TOL};
use crate::metrics::{evaluate, SsimParams};
use crate::network::{build_network, load_model, save_model};
use crate::noise::{add_noise, calibrate_noise, NoiseModel, NoiseSpec};
use crate::report::{run_eval, write_report, EvalOptions, Provenance};
use crate::train::train_with;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "framelet",
    version,
    about = "Wavelet framelet denoising toolkit"
)]
struct Cli {
    /// Worker threads (defaults to all cores; results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

fn sigma_value(raw: &str) -> std::result::Result<f64, String> {
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("invalid parameter: {raw:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!(
            "invalid parameter: sigma must be finite and non-negative, got {raw}"
        ))
    }
}

fn noise_model(raw: &str) -> std::result::Result<NoiseModel, String> {
    raw.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network from a key=value experiment file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Denoise one image with a saved model.
    Denoise {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score noisy inputs and model outputs over dataset directories.
    Eval {
        /// Dataset directories (repeat or comma-separate).
        #[arg(long, required = true, value_delimiter = ',')]
        dataset: Vec<PathBuf>,
        /// Model files (repeat or comma-separate).
        #[arg(long, required = true, value_delimiter = ',')]
        models: Vec<PathBuf>,
        #[arg(long, allow_hyphen_values = true, value_parser = sigma_value)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gaussian", value_parser = noise_model)]
        noise: NoiseModel,
        /// Keep noisy values outside [0, 255].
        #[arg(long)]
        no_clip: bool,
    },
    /// Inject seeded speckle or Gaussian noise into an image.
    Noise {
        #[arg(long, value_parser = noise_model)]
        model: NoiseModel,
        #[arg(long, allow_hyphen_values = true, value_parser = sigma_value)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_clip: bool,
    },
    /// PSNR and SSIM of a test image against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Singular spectrum of the Hankel lift of a 1-D signal.
    Decompose {
        /// Text file of comma- or whitespace-separated samples.
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        patch: usize,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
    },
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.threads {
        Some(0) => {
            let _ = writeln!(err, "error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::State(e.to_string()))
            .and_then(|pool| {
                let mut buf = Vec::new();
                let r = pool.install(|| execute(cli.command, &mut buf));
                let _ = out.write_all(&buf);
                r
            }),
        None => execute(cli.command, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn print(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train { config } => train_cmd(&ExperimentConfig::from_file(&config)?, out),
        Command::Denoise {
            model,
            input,
            out: dest,
        } => {
            let net = load_model(&model)?;
            let img = load_image(&input)?;
            let clean = net.denoise_padded(&img)?.clamped(0.0, 255.0);
            save_image(&clean, &dest)?;
            print(out, format_args!("wrote {}\n", dest.display()))
        }
        Command::Eval {
            dataset,
            models,
            sigma,
            seed,
            out: dir,
            noise,
            no_clip,
        } => {
            let opts = EvalOptions {
                datasets: dataset.iter().map(DatasetSpec::from_dir).collect(),
                models,
                noise: NoiseSpec {
                    model: noise,
                    sigma,
                    seed,
                    clip: !no_clip,
                },
                ssim: SsimParams::default(),
            };
            let report = run_eval(&opts)?;
            let table = report.psnr_table();
            for line in table.lines().filter(|l| !l.starts_with('#')) {
                print(out, format_args!("{line}\n"))?;
            }
            for path in write_report(&report, &dir)? {
                print(out, format_args!("wrote {}\n", path.display()))?;
            }
            Ok(())
        }
        Command::Noise {
            model,
            sigma,
            seed,
            input,
            out: dest,
            no_clip,
        } => {
            let img = load_image(&input)?;
            let spec = NoiseSpec {
                model,
                sigma,
                seed,
                clip: !no_clip,
            };
            save_image(&add_noise(&img, &spec)?, &dest)?;
            print(out, format_args!("wrote {}\n", dest.display()))
        }
        Command::Metrics { reference, test } => {
            let m = evaluate(
                &load_image(&reference)?,
                &load_image(&test)?,
                &SsimParams::default(),
            )?;
            if m.psnr_db.is_infinite() {
                print(out, format_args!("psnr=inf ssim={:.6}\n", m.ssim))
            } else {
                print(
                    out,
                    format_args!("psnr={:.4} ssim={:.6}\n", m.psnr_db, m.ssim),
                )
            }
        }
        Command::Decompose {
            signal,
            patch,
            rank_tol,
        } => {
            let text = fs::read_to_string(&signal).map_err(|e| Error::io(&signal, e))?;
            let samples = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::NumericInput(format!("{t:?} in {}", signal.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            let svd = hankel_svd(&hankel_lift(&samples, patch)?, rank_tol)?;
            print(
                out,
                format_args!("rank,singular_value,energy,cumulative_energy\n"),
            )?;
            let mut cumulative = 0.0;
            for (i, (s, e)) in svd.s.iter().zip(svd.energy()).enumerate() {
                cumulative += e;
                print(out, format_args!("{},{s},{e},{cumulative}\n", i + 1))?;
            }
            Ok(())
        }
    }
}

fn train_cmd(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let images: Vec<_> = config
        .dataset
        .load()?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let mut plan = config.plan.clone();
    if let Some(target) = config.target_psnr {
        let cal = calibrate_noise(&images, target, &plan.noise)?;
        print(
            out,
            format_args!(
                "calibrated sigma {} -> noisy input {:.4} dB\n",
                cal.sigma, cal.psnr_db
            ),
        )?;
        plan.noise.sigma = cal.sigma;
    }
    let net = match &config.model {
        Some(path) => load_model(path)?,
        None => build_network(&config.stage, config.seed)?,
    };
    print(
        out,
        format_args!(
            "training {} on {} images ({} parameters)\n",
            net.config().digits(),
            images.len(),
            net.param_count()
        ),
    )?;
    let mut lines = Vec::new();
    let (trained, history) = train_with(&net, &images, &plan, |r| {
        lines.push(format!(
            "epoch {} lr {:e} loss {:.6} psnr {:.4} ssim {:.4}\n",
            r.epoch, r.lr, r.loss, r.psnr, r.ssim
        ));
    })?;
    for l in &lines {
        print(out, format_args!("{l}"))?;
    }

    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let model_path = config.out.join("model.frm");
    save_model(&trained, &model_path)?;
    let provenance = Provenance {
        configs: vec![trained.config().digits().to_string()],
        seed: config.seed,
        sigma: plan.noise.sigma,
        noise: plan.noise.model.name().to_string(),
    };
    let history_path = config.out.join("history.csv");
    let mut buf = Vec::new();
    history
        .write_csv(&mut buf, &[provenance.comment()])
        .map_err(|e| Error::io(&history_path, e))?;
    fs::write(&history_path, buf).map_err(|e| Error::io(&history_path, e))?;
    print(
        out,
        format_args!(
            "wrote {}\nwrote {}\n",
            model_path.display(),
            history_path.display()
        ),
    )
}
