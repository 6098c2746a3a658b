//! Procedural piecewise-constant test images.
//!
//! All generators are deterministic and return intensities in `[0, 1]`; scale
//! them with [`crate::image::scale_to_peak`] before adding noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Smallest side accepted by the generators.
pub const MIN_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestImageKind {
    Ridges,
    FlagLike,
    Constant,
    /// Overlapping triangles and rectangles, used to train initial dictionaries.
    Training,
}

impl fmt::Display for TestImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ridges => "ridges",
            Self::FlagLike => "flag-like",
            Self::Constant => "constant",
            Self::Training => "training",
        })
    }
}

impl FromStr for TestImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridges" => Ok(Self::Ridges),
            "flag-like" | "flag" => Ok(Self::FlagLike),
            "constant" => Ok(Self::Constant),
            "training" => Ok(Self::Training),
            _ => Err(Error::arg(format!("unknown test image kind '{s}'"))),
        }
    }
}

pub fn make_test_image(kind: TestImageKind, size: usize) -> Result<Image> {
    if size < MIN_SIZE {
        return Err(Error::arg(format!("test images need size >= {MIN_SIZE}, got {size}")));
    }
    match kind {
        TestImageKind::Ridges => ridges(size),
        TestImageKind::FlagLike => flag_like(size),
        TestImageKind::Constant => Image::filled(size, size, 1.0),
        TestImageKind::Training => training_image(size),
    }
}

const RIDGE_LEVELS: [f64; 4] = [0.1, 1.0, 0.3, 0.75];

/// Diagonal stripes whose width grows from thin lines in the top-left
/// corner to broad bands in the bottom-right.
pub fn ridges(size: usize) -> Result<Image> {
    let n = size as f64;
    // band boundaries along r + c; widths scale with the image
    let mut bounds = Vec::new();
    let mut pos = 0.0;
    let mut w = 1.5 * n / 64.0;
    while pos < 2.0 * n {
        pos += w.max(1.0);
        bounds.push(pos);
        w *= 1.22;
    }
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let s = (r + c) as f64 + 0.5;
            let band = bounds.iter().position(|&b| s < b).unwrap_or(bounds.len());
            data.push(RIDGE_LEVELS[band % RIDGE_LEVELS.len()]);
        }
    }
    Image::from_vec(size, size, data)
}

/// Horizontal stripes with a dark canton holding a grid of bright stars.
pub fn flag_like(size: usize) -> Result<Image> {
    let stripe = (size / 13).max(1);
    let canton_rows = stripe * 7;
    let canton_cols = size * 2 / 5;
    let step = (canton_cols / 5).max(4);
    let arm = (step / 4).max(1) as isize;
    let mut data = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            data[r * size + c] = if (r / stripe) % 2 == 0 { 0.9 } else { 0.35 };
        }
    }
    for r in 0..canton_rows.min(size) {
        for c in 0..canton_cols {
            data[r * size + c] = 0.15;
        }
    }
    let mut cr = step / 2;
    while cr < canton_rows.min(size) {
        let mut cc = step / 2;
        while cc < canton_cols {
            for d in -arm..=arm {
                for (dr, dc) in [(d, 0), (0, d), (d, d), (d, -d)] {
                    let rr = cr as isize + dr;
                    let c2 = cc as isize + dc;
                    if rr >= 0 && c2 >= 0 && (rr as usize) < canton_rows && (c2 as usize) < canton_cols {
                        data[rr as usize * size + c2 as usize] = 1.0;
                    }
                }
            }
            cc += step;
        }
        cr += step;
    }
    Image::from_vec(size, size, data)
}

/// Overlapping rectangles and triangles on a dark background.
pub fn training_image(size: usize) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7261_6e67);
    let n = size as f64;
    let mut data = vec![0.05; size * size];
    for shape in 0..24 {
        let level = [0.2, 0.45, 0.7, 1.0][rng.random_range(0..4)];
        let cx = rng.random_range(0.0..n);
        let cy = rng.random_range(0.0..n);
        let half = rng.random_range(0.06..0.22) * n;
        if shape % 2 == 0 {
            let hw = half * rng.random_range(0.4..1.6);
            for r in 0..size {
                for c in 0..size {
                    let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                    if (x - cx).abs() <= hw && (y - cy).abs() <= half {
                        data[r * size + c] = level;
                    }
                }
            }
        } else {
            let a = (cx, cy - half);
            let b = (cx - half * rng.random_range(0.5..1.5), cy + half);
            let cpt = (cx + half * rng.random_range(0.5..1.5), cy + half * rng.random_range(-0.5..1.0));
            for r in 0..size {
                for c in 0..size {
                    if in_triangle((c as f64 + 0.5, r as f64 + 0.5), a, b, cpt) {
                        data[r * size + c] = level;
                    }
                }
            }
        }
    }
    Image::from_vec(size, size, data)
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), u: (f64, f64), v: (f64, f64)| {
        (u.0 - o.0) * (v.1 - o.1) - (u.1 - o.1) * (v.0 - o.0)
    };
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}
