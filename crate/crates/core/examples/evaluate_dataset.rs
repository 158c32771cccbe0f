//! Writes a small synthetic dataset, saves two untrained models, and runs
//! the evaluation harness that produces `table_psnr.csv`, `table_ssim.csv`
//! and `per_image.csv`.
//!
//! ```bash
//! cargo run --release -p framelet --example evaluate_dataset -- /tmp/framelet-eval
//! ```

use std::path::PathBuf;

use framelet::dataset::{save_image, DatasetSpec};
use framelet::metrics::SsimParams;
use framelet::network::{build_network, save_model, StageConfig};
use framelet::noise::NoiseSpec;
use framelet::report::{run_eval, write_report, EvalOptions};
use framelet::synth::phantom;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("framelet-eval"));
    let root = out.join("Set12");
    std::fs::create_dir_all(&root)?;
    for i in 0..4 {
        save_image(&phantom(96, 80, i), root.join(format!("phantom{i}.png")))?;
    }
    let mut models = Vec::new();
    for digits in ["2222", "4422"] {
        let path = out.join(format!("{digits}.frm"));
        save_model(&build_network(&StageConfig::new(digits, 4)?, 0)?, &path)?;
        models.push(path);
    }

    let report = run_eval(&EvalOptions {
        datasets: vec![DatasetSpec::from_dir(&root)],
        models,
        noise: NoiseSpec::gaussian(30.0, 1),
        ssim: SsimParams::default(),
    })?;
    print!("{}", report.psnr_table());
    print!("{}", report.ssim_table());
    for path in write_report(&report, out.join("report"))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
