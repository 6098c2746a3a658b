//! Runs setups I to V on the ridges image and prints the PSNR of each.
//!
//! `cargo run --release --example ablation -- [peak] [seeds]`

use spda::image::scale_to_peak;
use spda::learning::init_dictionary_dct;
use spda::noise::{sample_poisson, NoiseSeed};
use spda::pipeline::{spda_denoise, stage_kinds, Setup, SpdaConfig};
use spda::testimage::ridges;

fn main() -> spda::Result<()> {
    let mut args = std::env::args().skip(1);
    let peak: f64 = args.next().map_or(2.0, |s| s.parse().expect("peak"));
    let seeds: u64 = args.next().map_or(2, |s| s.parse().expect("seeds"));

    let clean = scale_to_peak(&ridges(64)?, peak)?;
    let d0 = init_dictionary_dct(8)?;
    let setups = [Setup::I, Setup::II, Setup::III, Setup::IV, Setup::V];
    let mut totals = [0.0; 5];
    for seed in 0..seeds {
        let noisy = sample_poisson(&clean, NoiseSeed(seed))?;
        for (i, &setup) in setups.iter().enumerate() {
            let cfg = SpdaConfig::desk().with_setup(setup);
            let rep = spda_denoise(&noisy, &d0, &cfg, Some(&clean))?;
            let p = rep.psnr_vs_reference.expect("reference given");
            totals[i] += p;
            println!("seed {seed} setup {setup:?}: {p:.2} dB in {:.1} s, stages {:?}", rep.seconds, stage_kinds(&rep.stages));
        }
    }
    for (setup, t) in setups.iter().zip(totals) {
        println!("setup {setup:?}: mean {:.2} dB", t / seeds as f64);
    }
    Ok(())
}
