//! Joint pursuit on one group of noisy patches, with and without the
//! bootstrapped stopping rule.

use ndarray::{Array2, ShapeBuilder};
use spda::learning::init_dictionary_dct;
use spda::noise::poisson_draw;
use spda::pursuit::{greedy_pursuit_group, PursuitOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> spda::Result<()> {
    let dict = init_dictionary_dct(4)?;
    let d = dict.dim();
    // clean patches: a shared two-level edge at intensity ~ 3
    let clean = Array2::from_shape_fn((d, 8).f(), |(r, _)| if r % 4 < 2 { 1.0 } else { 5.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy = clean.mapv(|l| poisson_draw(&mut rng, l) as f64);

    let opts = PursuitOptions::default();
    let fixed = greedy_pursuit_group(&dict, noisy.view(), 6, None, &opts)?;
    println!("fixed k = 6: support {:?}", fixed.code.support().indices());
    for (t, f) in fixed.objective_trace.iter().enumerate() {
        println!("  t = {}: objective {f:.4}", t + 1);
    }

    let boot = greedy_pursuit_group(&dict, noisy.view(), 10, Some(clean.view()), &opts)?;
    println!(
        "bootstrapped (oracle = clean): stopped after {} atoms ({:?}), errors {:?}",
        boot.iterations_used,
        boot.stopped_by,
        boot.error_trace.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>()
    );
    Ok(())
}
