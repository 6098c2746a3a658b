//! Compares plain and binned denoising across peaks.

use spda::image::{bin_image, psnr, scale_to_peak, upscale_bilinear};
use spda::learning::init_dictionary_dct;
use spda::noise::{sample_poisson, NoiseSeed};
use spda::pipeline::{spda_denoise, spda_denoise_binned, SpdaConfig};
use spda::testimage::ridges;

fn main() -> spda::Result<()> {
    let cfg = SpdaConfig::desk();
    let d0 = init_dictionary_dct(cfg.patch_side)?;
    for peak in [0.2, 4.0] {
        let clean = scale_to_peak(&ridges(64)?, peak)?;
        let noisy = sample_poisson(&clean, NoiseSeed(11))?;
        let low = bin_image(&noisy, 3)?;
        println!(
            "peak {peak}: binned image {:?} with peak {:.1}, naive bin+upscale {:.2} dB",
            low.dims(),
            bin_image(&clean, 3)?.max(),
            psnr(&clean, &upscale_bilinear(&low, 3, 64, 64)?)?
        );
        let plain = spda_denoise(&noisy, &d0, &cfg, Some(&clean))?;
        let binned = spda_denoise_binned(&noisy, &d0, &cfg, Some(&clean))?;
        println!(
            "  noisy {:.2} dB, spda {:.2} dB, spda-bin {:.2} dB",
            psnr(&clean, &noisy)?,
            plain.psnr_vs_reference.unwrap(),
            binned.psnr_vs_reference.unwrap()
        );
    }
    Ok(())
}
