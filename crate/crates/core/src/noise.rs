//! Poisson noise synthesis and the Anscombe variance-stabilizing transform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::image::Image;

/// Seed for reproducible noise realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSeed(pub u64);

/// Means below this use sequential inversion; above it, transformed rejection.
const INVERSION_LIMIT: f64 = 10.0;

/// Draws independent Poisson counts with means given by `clean`.
///
/// Row `r` is generated from its own ChaCha stream (`r`) of the seed, so the
/// result does not depend on how rows are scheduled across threads.
pub fn sample_poisson(clean: &Image, seed: NoiseSeed) -> Result<Image> {
    let (rows, cols) = clean.dims();
    let px = clean.pixels();
    let data: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
            rng.set_stream(r as u64);
            px.row(r)
                .iter()
                .map(|&lambda| poisson_draw(&mut rng, lambda) as f64)
                .collect()
        })
        .collect();
    let out = Array2::from_shape_vec((rows, cols), data.concat()).expect("shape matches");
    Image::new(out)
}

/// One Poisson variate with mean `lambda >= 0`.
pub fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        0
    } else if lambda < INVERSION_LIMIT {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // The tail beyond 1000 has no representable mass for lambda < 10.
    while u > cdf && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Hörmann's transformed rejection with squeeze (PTRS).
fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Elementwise `2 sqrt(y + 3/8)`.
pub fn anscombe_forward(y: &Image) -> Result<Image> {
    // Image already forbids negative pixels.
    y.map(|v| 2.0 * (v + 0.375).sqrt())
}

/// Elementwise `(z/2)^2 - 3/8`, clamped below at zero.
pub fn anscombe_algebraic_inverse(z: &Image) -> Result<Image> {
    z.map(|v| ((v / 2.0).powi(2) - 0.375).max(0.0))
}

/// Scalar form of the forward transform, for callers working on raw values.
pub fn anscombe(v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::arg(format!("Anscombe transform needs y >= 0, got {v}")));
    }
    Ok(2.0 * (v + 0.375).sqrt())
}
