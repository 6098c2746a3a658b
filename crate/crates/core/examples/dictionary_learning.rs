//! Codes the groups of a noisy image, then runs learning rounds in both modes
//! and prints the objective after each alternation.

use spda::clustering::{group_patches, GroupingParams};
use spda::image::{extract_patches, scale_to_peak, Kernel};
use spda::learning::{
    dictionary_learning_round, init_dictionary_dct, prune_unused_atoms, InnerSteps, LearningMode, LearningState,
};
use spda::noise::{sample_poisson, NoiseSeed};
use spda::pursuit::{greedy_pursuit_group, PursuitOptions};
use spda::testimage::training_image;

fn main() -> spda::Result<()> {
    let clean = scale_to_peak(&training_image(40)?, 3.0)?;
    let noisy = sample_poisson(&clean, NoiseSeed(1))?;
    let side = 6;
    let params = GroupingParams {
        patch_side: side,
        min_group: 10,
        kernel: Kernel::gaussian(5, 1.5)?,
        eps: 0.0,
    };
    let part = group_patches(&noisy, &params)?;
    let patches = extract_patches(&noisy, side)?;
    let groups: Vec<_> = part.groups().iter().map(|g| patches.select(g)).collect();

    let dict = init_dictionary_dct(side)?;
    let codes = groups
        .iter()
        .map(|q| Ok(greedy_pursuit_group(&dict, q.view(), 2, None, &PursuitOptions::default())?.code))
        .collect::<spda::Result<Vec<_>>>()?;

    for mode in [LearningMode::Simple, LearningMode::Advanced] {
        let state = prune_unused_atoms(LearningState::new(dict.clone(), codes.clone())?)?;
        println!("{mode:?}: {} of {} atoms in use", state.dictionary().len(), dict.len());
        let (state, trace) = dictionary_learning_round(state, &groups, 5, mode, InnerSteps::default())?;
        for (i, f) in trace.objective.iter().enumerate() {
            println!("  after {i} alternations: {f:.3}");
        }
        let norms = state.dictionary().column_norms();
        println!("  atom norms after renormalization: {:.6}..{:.6}", norms.iter().cloned().fold(f64::INFINITY, f64::min), norms.iter().cloned().fold(0.0, f64::max));
    }
    Ok(())
}
