//! PSNR table over peaks and noise realizations, written as CSV to stdout.
//!
//! `cargo run --release --example experiment_table -- [realizations] [dct|trained] [peaks...]`

use spda::experiment::{run_experiment, ExperimentOptions, InitDictionary, Method};
use spda::pipeline::SpdaConfig;
use spda::testimage::ridges;

fn main() -> spda::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let realizations = args.first().map_or(2, |s| s.parse().expect("realizations"));
    let init = match args.get(1).map(String::as_str) {
        Some("trained") => InitDictionary::Trained,
        _ => InitDictionary::Dct,
    };
    let mut peaks: Vec<f64> = args.iter().skip(2).map(|s| s.parse().expect("peak")).collect();
    if peaks.is_empty() {
        peaks = vec![0.2, 4.0];
    }
    let opts = ExperimentOptions {
        image_name: "ridges".into(),
        peaks,
        realizations,
        methods: Method::ALL.to_vec(),
        init,
        timings: true,
    };
    let table = run_experiment(&ridges(64)?, &opts, &SpdaConfig::desk())?;
    table.write_csv(std::io::stdout().lock())
}
