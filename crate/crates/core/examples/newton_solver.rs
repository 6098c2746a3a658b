//! The fixed-support Poisson Newton solver on a single patch.

use ndarray::array;
use spda::model::{gradient, newton_trace, NewtonOptions};

fn main() -> spda::Result<()> {
    // two atoms on a 3-pixel patch
    let dt = array![[1.0, 0.0], [0.5, 1.0], [0.0, 1.0]];
    let q = [4.0, 6.0, 2.0];
    let mut alpha = [0.0, 0.0];
    let (solve, trace) = newton_trace(dt.view(), &q, &mut alpha, NewtonOptions::with_iters(25))?;
    for (i, f) in trace.iter().enumerate() {
        println!("iter {i:>2}: objective {f:.10}");
    }
    println!(
        "alpha = {alpha:?}, |grad| = {:.2e}, estimate = {:?}",
        solve.grad_norm,
        dt.dot(&ndarray::arr1(&alpha)).mapv(f64::exp).to_vec()
    );
    println!("gradient check: {:?}", gradient(dt.view(), &alpha, &q)?);
    Ok(())
}
