//! Trains the initial dictionaries on the procedural training image and
//! compares them with the DCT start on a noisy image.

use spda::experiment::training_size;
use spda::image::scale_to_peak;
use spda::learning::{init_dictionary_dct, train_initial_dictionary, training_peak_for};
use spda::noise::{sample_poisson, NoiseSeed};
use spda::pipeline::{spda_denoise, SpdaConfig};
use spda::testimage::{ridges, training_image};

fn main() -> spda::Result<()> {
    let cfg = SpdaConfig::desk();
    let train = training_image(training_size(cfg.patch_side))?;
    let peak = 1.0;
    let trained = train_initial_dictionary(&train, peak, &cfg)?;
    println!(
        "trained at peak {} (bucket for {peak}): {} atoms of {} pixels",
        training_peak_for(peak),
        trained.len(),
        trained.dim()
    );

    let clean = scale_to_peak(&ridges(64)?, peak)?;
    let noisy = sample_poisson(&clean, NoiseSeed(3))?;
    for (name, d0) in [("dct", init_dictionary_dct(cfg.patch_side)?), ("trained", trained)] {
        let rep = spda_denoise(&noisy, &d0, &cfg, Some(&clean))?;
        println!("{name:>8} start: {:.2} dB", rep.psnr_vs_reference.unwrap());
    }
    Ok(())
}
