//! Groups the patches of a noisy image and reports group sizes and purity.

use spda::clustering::{group_patches, GroupingParams};
use spda::image::{extract_patches, scale_to_peak, Kernel};
use spda::noise::{sample_poisson, NoiseSeed};
use spda::testimage::ridges;

fn main() -> spda::Result<()> {
    let clean = scale_to_peak(&ridges(48)?, 2.0)?;
    let noisy = sample_poisson(&clean, NoiseSeed(5))?;
    let clean_patches = extract_patches(&clean, 6)?;

    for (name, kernel) in [("identity", Kernel::identity()), ("gaussian 7x7", Kernel::gaussian(7, 1.5)?)] {
        let params = GroupingParams {
            patch_side: 6,
            min_group: 12,
            kernel,
            eps: 0.0,
        };
        let part = group_patches(&noisy, &params)?;
        part.validate(clean_patches.len(), 12)?;
        // mean distance of clean patches to their group mean: lower is purer
        let mut spread = 0.0;
        for g in part.groups() {
            let sel = clean_patches.select(g);
            let mean = sel.mean_axis(ndarray::Axis(1)).expect("non-empty group");
            for c in sel.columns() {
                spread += (&c - &mean).mapv(|v| v * v).sum().sqrt();
            }
        }
        let sizes: Vec<usize> = part.groups().iter().map(Vec::len).collect();
        println!(
            "{name:>12}: {} groups, sizes {}..={}, mean clean spread {:.3}",
            part.len(),
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            spread / clean_patches.len() as f64
        );
    }
    Ok(())
}
