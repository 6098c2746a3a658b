//! Photon-limited image denoising with a sparse exponential patch model.
//!
//! Noisy Poisson counts are split into overlapping patches, grouped by
//! similarity, and coded jointly per group with a greedy pursuit that
//! maximizes the Poisson likelihood of `exp(D a)`. The dictionary `D` is
//! learned in place with alternating Newton steps, and the patches are
//! averaged back into an image.
//!
//! The crate is organized bottom-up:
//!
//! - [`image`]: images, patch extraction and re-projection, filtering,
//!   binning, PSNR.
//! - [`noise`]: Poisson sampling and the Anscombe transform.
//! - [`model`]: the Poisson objective, its derivatives, and the fixed-support
//!   Newton solver.
//! - [`clustering`]: greedy pivot-based patch grouping.
//! - [`pursuit`]: joint-sparsity greedy pursuit with bootstrapped stopping.
//! - [`learning`]: dictionary updates, pruning, and initial dictionaries.
//! - [`pipeline`]: the end-to-end denoiser, its binned variant, and ablation
//!   setups.
//! - [`experiment`]: the PSNR evaluation harness and CSV output.

pub mod cli;
pub mod clustering;
pub mod error;
pub mod experiment;
pub mod image;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod pursuit;
pub mod testimage;

pub use error::{Error, Result};
pub use image::{Image, Kernel, PatchMatrix};
pub use model::{Dictionary, GroupCode, NewtonOptions, Support};
pub use noise::NoiseSeed;
