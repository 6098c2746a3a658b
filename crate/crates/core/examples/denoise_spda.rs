//! Denoise the 64x64 ridges image at peak 2 with the desk profile.
//!
//! Run with `cargo run --release --example denoise_spda [peak] [seed]`.

use spda::image::{psnr, scale_to_peak};
use spda::learning::init_dictionary_dct;
use spda::noise::{sample_poisson, NoiseSeed};
use spda::pipeline::{spda_denoise, SpdaConfig};
use spda::testimage::ridges;

fn main() -> spda::Result<()> {
    let mut args = std::env::args().skip(1);
    let peak: f64 = args.next().map_or(2.0, |s| s.parse().expect("peak"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));

    let clean = scale_to_peak(&ridges(64)?, peak)?;
    let noisy = sample_poisson(&clean, NoiseSeed(seed))?;
    let cfg = SpdaConfig::desk();
    let d0 = init_dictionary_dct(cfg.patch_side)?;

    let report = spda_denoise(&noisy, &d0, &cfg, Some(&clean))?;
    println!("noisy  {:.2} dB", psnr(&clean, &noisy)?);
    println!("spda   {:.2} dB", report.psnr_vs_reference.unwrap_or(f64::NAN));
    for r in &report.rounds {
        println!(
            "phase {} round {}: objective {:.3}, width {}, mean |T| {:.2}",
            r.phase, r.round, r.objective, r.dictionary_width, r.mean_cardinality
        );
    }
    println!("{} groups, {:.1} s", report.group_count, report.seconds);
    Ok(())
}
