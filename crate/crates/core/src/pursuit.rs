//! Joint-sparsity greedy pursuit under the Poisson objective.
//!
//! All patches of a group share one support. Each iteration tries every atom
//! not yet in the support, scores it by the minimized group objective on the
//! enlarged support, and admits the best one. When estimates of the clean
//! patches are supplied, the pursuit stops as soon as the squared error
//! against them goes up and returns the previous iterate.

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    clamped_exp, fit_group, ColMatrix, Dictionary, GroupCode, NewtonOptions, Support, SupportFit,
    Workspace,
};

/// Newton budgets for candidate scoring and for the refit after admission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PursuitOptions {
    pub score_iters: usize,
    pub refit_iters: usize,
}

impl Default for PursuitOptions {
    fn default() -> Self {
        Self {
            score_iters: 5,
            refit_iters: 25,
        }
    }
}

impl PursuitOptions {
    fn score(&self) -> NewtonOptions {
        NewtonOptions::with_iters(self.score_iters)
    }

    fn refit(&self) -> NewtonOptions {
        NewtonOptions::with_iters(self.refit_iters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Cardinality,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PursuitResult {
    pub code: GroupCode,
    /// `exp(D a_i)` per patch, `d x l`.
    pub estimates: Array2<f64>,
    pub iterations_used: usize,
    pub stopped_by: StopReason,
    /// Group objective after each admitted atom, including any iterate that
    /// was rolled back by the bootstrap rule.
    pub objective_trace: Vec<f64>,
    /// Squared error against the oracle patches per iteration (empty without
    /// an oracle).
    pub error_trace: Vec<f64>,
}

impl PursuitResult {
    /// Group objective of the returned code.
    pub fn objective(&self) -> f64 {
        self.objective_trace[self.iterations_used - 1]
    }
}

fn check_group(dict: &Dictionary, patches: &ArrayView2<'_, f64>) -> Result<()> {
    if patches.ncols() == 0 {
        return Err(Error::arg("pursuit needs a non-empty group"));
    }
    if patches.nrows() != dict.dim() {
        return Err(Error::dim(format!(
            "patches have {} pixels, atoms {}",
            patches.nrows(),
            dict.dim()
        )));
    }
    Ok(())
}

/// Candidate evaluation state for one pursuit iteration: `D_{T_prev}` with a
/// free trailing column, and the previous coefficients padded with zeros.
struct CandidateFrame {
    dt: Vec<f64>,
    init: Vec<f64>,
    support: Support,
    d: usize,
}

impl CandidateFrame {
    fn new(dict: &Dictionary, prev: &GroupCode) -> Self {
        let d = dict.dim();
        let mut dt = dict.gather(prev.support());
        dt.resize(dt.len() + d, 0.0);
        let t = prev.support().len();
        let l = prev.group_len();
        let mut init = Vec::with_capacity((t + 1) * l);
        for i in 0..l {
            init.extend_from_slice(prev.patch_coeffs(i));
            init.push(0.0);
        }
        let mut support = prev.support().clone();
        // placeholder index, overwritten per candidate
        support.push(usize::MAX).expect("placeholder is unique");
        Self { dt, init, support, d }
    }

    fn evaluate(
        &mut self,
        dict: &Dictionary,
        j: usize,
        patches: ArrayView2<'_, f64>,
        opts: NewtonOptions,
        ws: &mut Workspace,
    ) -> Result<SupportFit> {
        let off = self.dt.len() - self.d;
        self.dt[off..].copy_from_slice(dict.atom(j));
        let mut support = self.support.clone();
        let last = support.len() - 1;
        support.set_last(last, j);
        fit_group(&self.dt, self.d, &support, patches, self.init.clone(), opts, ws)
    }
}

/// Minimized group objective on `prev.support() + {j}`, warm-started from
/// `prev` with a zero coefficient for `j`.
pub fn score_atom(
    dict: &Dictionary,
    prev: &GroupCode,
    j: usize,
    patches: ArrayView2<'_, f64>,
    opts: &PursuitOptions,
) -> Result<f64> {
    check_group(dict, &patches)?;
    if j >= dict.len() {
        return Err(Error::arg(format!("atom {j} outside a {}-atom dictionary", dict.len())));
    }
    if prev.support().contains(j) {
        return Err(Error::arg(format!("atom {j} is already in the support")));
    }
    if prev.group_len() != patches.ncols() {
        return Err(Error::dim("previous code and patches disagree on group size"));
    }
    let mut frame = CandidateFrame::new(dict, prev);
    Ok(frame
        .evaluate(dict, j, patches, opts.score(), &mut Workspace::default())?
        .objective)
}

fn estimates_of(dict: &Dictionary, code: &GroupCode) -> Array2<f64> {
    let d = dict.dim();
    let l = code.group_len();
    let dt = dict.gather(code.support());
    let m = ColMatrix::new(&dt, d, code.support().len());
    let mut out = vec![0.0; d * l];
    for i in 0..l {
        let o = &mut out[i * d..(i + 1) * d];
        m.mul_vec(code.patch_coeffs(i), o);
        o.iter_mut().for_each(|v| *v = clamped_exp(*v));
    }
    Array2::from_shape_vec((d, l).f(), out).expect("shape matches")
}

fn squared_error(est: &Array2<f64>, oracle: &ArrayView2<'_, f64>) -> f64 {
    est.iter()
        .zip(oracle.t().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Greedy joint pursuit for one group, up to `k` atoms.
///
/// With `oracle` (the current estimate of the clean patches, same shape as
/// `patches`), iteration `t > 1` is rolled back and the pursuit stops when its
/// squared error against the oracle exceeds that of iteration `t - 1`.
pub fn greedy_pursuit_group(
    dict: &Dictionary,
    patches: ArrayView2<'_, f64>,
    k: usize,
    oracle: Option<ArrayView2<'_, f64>>,
    opts: &PursuitOptions,
) -> Result<PursuitResult> {
    check_group(dict, &patches)?;
    if k == 0 {
        return Err(Error::arg("pursuit cardinality must be at least 1"));
    }
    if k > dict.len() {
        return Err(Error::arg(format!(
            "cardinality {k} exceeds the {} available atoms",
            dict.len()
        )));
    }
    if let Some(o) = &oracle {
        if o.dim() != patches.dim() {
            return Err(Error::dim(format!(
                "oracle patches {:?} do not match group {:?}",
                o.dim(),
                patches.dim()
            )));
        }
    }
    // The oracle is compared in memory order against column-major estimates.
    let oracle_cm = oracle.map(|o| crate::image::to_fortran(o.to_owned()));

    let l = patches.ncols();
    let mut ws = Workspace::default();
    let mut code = GroupCode::empty(l);
    let mut estimates = Array2::zeros((dict.dim(), l).f());
    let mut objective_trace = Vec::with_capacity(k);
    let mut error_trace = Vec::new();

    for t in 1..=k {
        let mut frame = CandidateFrame::new(dict, &code);
        let mut best: Option<(usize, SupportFit)> = None;
        for j in 0..dict.len() {
            if code.support().contains(j) {
                continue;
            }
            let fit = frame.evaluate(dict, j, patches, opts.score(), &mut ws)?;
            // strict comparison keeps the lowest index among ties
            if best.as_ref().is_none_or(|(_, b)| fit.objective < b.objective) {
                best = Some((j, fit));
            }
        }
        let (_, candidate) = best.expect("k <= n leaves a candidate");
        let dt = dict.gather(candidate.code.support());
        let refit = fit_group(
            &dt,
            dict.dim(),
            candidate.code.support(),
            patches,
            candidate.code.flat().to_vec(),
            opts.refit(),
            &mut ws,
        )?;
        let next_estimates = estimates_of(dict, &refit.code);
        objective_trace.push(refit.objective);

        if let Some(o) = &oracle_cm {
            let e = squared_error(&next_estimates, &o.t());
            let worse = error_trace.last().is_some_and(|&prev| e > prev);
            error_trace.push(e);
            if t > 1 && worse {
                return Ok(PursuitResult {
                    code,
                    estimates,
                    iterations_used: t - 1,
                    stopped_by: StopReason::Bootstrap,
                    objective_trace,
                    error_trace,
                });
            }
        }
        code = refit.code;
        estimates = next_estimates;
    }
    Ok(PursuitResult {
        code,
        estimates,
        iterations_used: k,
        stopped_by: StopReason::Cardinality,
        objective_trace,
        error_trace,
    })
}
