//! Sequential pivot-based grouping of patches.
//!
//! Patches are compared in a low-pass filtered copy of the image. Starting
//! from the patch of smallest filtered energy, each group takes the patches
//! nearest its pivot, one at a time, until it holds more than `l` members and
//! the next candidate is no longer within `eps^2` of the last admitted
//! distance. The first candidate turned away becomes the next pivot. A final
//! undersized group is merged into its predecessor.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{convolve_same, extract_patches, Image, Kernel};

/// Disjoint groups of patch indices covering every patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Checks disjointness, coverage of `0..n_patches`, and minimum size.
    pub fn validate(&self, n_patches: usize, min_size: usize) -> Result<()> {
        let mut seen = vec![false; n_patches];
        for (g, group) in self.groups.iter().enumerate() {
            if group.len() < min_size {
                return Err(Error::Internal(format!(
                    "group {g} has {} patches, fewer than {min_size}",
                    group.len()
                )));
            }
            for &i in group {
                if i >= n_patches || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Internal(format!(
                        "patch {i} is out of range or assigned twice"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Internal(format!("patch {i} is not in any group")));
        }
        Ok(())
    }
}

/// Grouping parameters.
#[derive(Debug, Clone)]
pub struct GroupingParams {
    pub patch_side: usize,
    /// Target group size `l`.
    pub min_group: usize,
    pub kernel: Kernel,
    /// Distance tolerance `eps`; candidates within `eps^2` of the previous
    /// admitted distance extend a full group.
    pub eps: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Partitions the overlapping patches of `img` into groups of similar patches.
pub fn group_patches(img: &Image, params: &GroupingParams) -> Result<GroupPartition> {
    let l = params.min_group;
    if l == 0 {
        return Err(Error::arg("target group size must be at least 1"));
    }
    if !(params.eps >= 0.0) {
        return Err(Error::arg(format!("eps must be >= 0, got {}", params.eps)));
    }
    let filtered = if params.kernel.is_identity() {
        img.clone()
    } else {
        convolve_same(img, &params.kernel)?
    };
    let patches = extract_patches(&filtered, params.patch_side)?;
    let n = patches.len();
    if n < l {
        return Err(Error::arg(format!(
            "{n} patches cannot fill a group of size {l}"
        )));
    }
    let eps2 = params.eps * params.eps;

    let norms: Vec<f64> = (0..n)
        .map(|i| patches.patch(i).iter().map(|v| v * v).sum())
        .collect();
    // lowest index among equal minima
    let mut pivot = 0;
    for i in 1..n {
        if norms[i] < norms[pivot] {
            pivot = i;
        }
    }

    let mut in_pool = vec![true; n];
    let mut remaining = n;
    let mut prev = pivot;
    let mut groups: Vec<Vec<usize>> = Vec::new();

    while remaining > 0 {
        let pivot_patch = patches.patch(pivot);
        let pool: Vec<usize> = (0..n).filter(|&i| in_pool[i]).collect();
        let mut order: Vec<(f64, usize)> = pool
            .par_iter()
            .map(|&i| (sq_dist(pivot_patch, patches.patch(i)), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut group = Vec::new();
        let mut pos = 0;
        while pos < order.len() {
            let (cand_dist, cand) = order[pos];
            let prev_dist = sq_dist(pivot_patch, patches.patch(prev));
            if !(group.len() <= l || (cand_dist - prev_dist).abs() <= eps2) {
                break;
            }
            group.push(cand);
            in_pool[cand] = false;
            remaining -= 1;
            prev = cand;
            pos += 1;
        }
        groups.push(group);
        if pos < order.len() {
            pivot = order[pos].1;
        }
    }

    if groups.len() >= 2 && groups.last().map_or(0, Vec::len) < l {
        let last = groups.pop().expect("at least two groups");
        groups.last_mut().expect("at least one group").extend(last);
    }
    Ok(GroupPartition { groups })
}
