//! Dictionary learning on fixed supports.
//!
//! With every group's support frozen, the total objective
//! `sum_i 1^T exp(D_{T_i} a_i) - q_i^T D_{T_i} a_i` is minimized by
//! alternating damped Newton steps on the coefficients (per patch) and on
//! the dictionary. The dictionary step splits by pixel row: row `r` of `D`
//! only enters pixel `r` of every estimate, so each row is an independent
//! convex problem.

use std::f64::consts::PI;

use ndarray::{Array2, ShapeBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::model::{
    clamped_exp, fit_group, objective_from_log, ColMatrix, Dictionary, GroupCode, NewtonOptions,
    Workspace, ARMIJO_C, HESSIAN_RIDGE, MAX_BACKTRACKS,
};

/// Offset inside the logarithm of the DCT initialization.
pub const DCT_OFFSET: f64 = 0.01;

/// Relative tolerance for the descent check across alternations.
pub const DESCENT_TOL: f64 = 1e-9;

/// Which blocks an alternation updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    /// Dictionary step only; coefficients stay as the pursuit left them.
    Simple,
    /// Coefficient step followed by dictionary step.
    Advanced,
}

/// Newton steps inside one alternation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSteps {
    pub coeff_steps: usize,
    pub row_steps: usize,
}

impl Default for InnerSteps {
    fn default() -> Self {
        Self {
            coeff_steps: 3,
            row_steps: 3,
        }
    }
}

/// Dictionary, per-group codes, and per-atom usage counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningState {
    dictionary: Dictionary,
    codes: Vec<GroupCode>,
    usage: Vec<usize>,
}

impl LearningState {
    pub fn new(dictionary: Dictionary, codes: Vec<GroupCode>) -> Result<Self> {
        let n = dictionary.len();
        let mut usage = vec![0; n];
        for code in &codes {
            for &j in code.support().indices() {
                if j >= n {
                    return Err(Error::arg(format!(
                        "support uses atom {j} of a {n}-atom dictionary"
                    )));
                }
                usage[j] += 1;
            }
        }
        Ok(Self {
            dictionary,
            codes,
            usage,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn codes(&self) -> &[GroupCode] {
        &self.codes
    }

    /// Number of groups whose support contains each atom.
    pub fn usage(&self) -> &[usize] {
        &self.usage
    }

    pub fn into_parts(self) -> (Dictionary, Vec<GroupCode>) {
        (self.dictionary, self.codes)
    }

    /// Total objective over all groups; `patches[g]` is `d x l_g`.
    pub fn objective(&self, patches: &[Array2<f64>]) -> Result<f64> {
        check_groups(self, patches)?;
        let per_group: Vec<Result<f64>> = self
            .codes
            .par_iter()
            .zip(patches.par_iter())
            .map(|(code, q)| group_objective(&self.dictionary, code, q))
            .collect();
        let mut total = 0.0;
        for v in per_group {
            total += v?;
        }
        Ok(total)
    }

    /// `exp(D_{T_i} a_i)` for every patch of group `g`, `d x l_g`.
    pub fn group_estimates(&self, g: usize) -> Array2<f64> {
        let code = &self.codes[g];
        let d = self.dictionary.dim();
        let l = code.group_len();
        let flat = crate::model::group_estimates(&self.dictionary, code);
        Array2::from_shape_vec((d, l).f(), flat).expect("shape matches")
    }
}

fn check_groups(state: &LearningState, patches: &[Array2<f64>]) -> Result<()> {
    if patches.len() != state.codes.len() {
        return Err(Error::dim(format!(
            "{} patch groups for {} codes",
            patches.len(),
            state.codes.len()
        )));
    }
    let d = state.dictionary.dim();
    for (g, (q, code)) in patches.iter().zip(&state.codes).enumerate() {
        if q.nrows() != d || q.ncols() != code.group_len() {
            return Err(Error::dim(format!(
                "group {g}: patches {:?}, code covers {} patches of {d} pixels",
                q.dim(),
                code.group_len()
            )));
        }
    }
    Ok(())
}

fn column<'a>(q: &'a Array2<f64>, i: usize) -> &'a [f64] {
    let d = q.nrows();
    &q.as_slice_memory_order().expect("column-major patches")[i * d..(i + 1) * d]
}

fn group_objective(dict: &Dictionary, code: &GroupCode, q: &Array2<f64>) -> Result<f64> {
    let d = dict.dim();
    let t = code.support().len();
    let dt = dict.gather(code.support());
    let m = ColMatrix::new(&dt, d, t);
    let mut u = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..code.group_len() {
        if t == 0 {
            u.fill(0.0);
        } else {
            m.mul_vec(code.patch_coeffs(i), &mut u);
        }
        let f = objective_from_log(&u, column(q, i));
        if !f.is_finite() {
            return Err(Error::Overflow { patch: i });
        }
        total += f;
    }
    Ok(total)
}

/// Removes atoms that no support uses and renumbers the supports.
pub fn prune_unused_atoms(state: LearningState) -> Result<LearningState> {
    let keep: Vec<usize> = (0..state.dictionary.len())
        .filter(|&j| state.usage[j] > 0)
        .collect();
    if keep.is_empty() {
        return Err(Error::arg("pruning would remove every atom"));
    }
    if keep.len() == state.dictionary.len() {
        return Ok(state);
    }
    let mut map = vec![None; state.dictionary.len()];
    for (new, &old) in keep.iter().enumerate() {
        map[old] = Some(new);
    }
    let dictionary = state.dictionary.select_atoms(&keep)?;
    let mut codes = state.codes;
    for code in &mut codes {
        code.support_mut().remap(&map);
    }
    let usage = keep.iter().map(|&j| state.usage[j]).collect();
    Ok(LearningState {
        dictionary,
        codes,
        usage,
    })
}

/// Objective values recorded during one learning round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Objective before the first alternation and after each one.
    pub objective: Vec<f64>,
}

/// Runs `iters` alternations, then renormalizes atoms to unit norm.
pub fn dictionary_learning_round(
    state: LearningState,
    patches: &[Array2<f64>],
    iters: usize,
    mode: LearningMode,
    steps: InnerSteps,
) -> Result<(LearningState, RoundTrace)> {
    if iters == 0 {
        return Err(Error::arg("a learning round needs at least one alternation"));
    }
    check_groups(&state, patches)?;
    let mut state = state;
    let mut trace = RoundTrace {
        objective: vec![state.objective(patches)?],
    };
    for _ in 0..iters {
        if mode == LearningMode::Advanced && steps.coeff_steps > 0 {
            coefficient_step(&mut state, patches, steps.coeff_steps)?;
        }
        if steps.row_steps > 0 {
            dictionary_step(&mut state, patches, steps.row_steps)?;
        }
        let f = state.objective(patches)?;
        let prev = *trace.objective.last().expect("seeded");
        if f > prev + DESCENT_TOL * prev.abs().max(1.0) {
            return Err(Error::Internal(format!(
                "learning objective increased from {prev} to {f}"
            )));
        }
        trace.objective.push(f);
    }
    normalize_atoms(&mut state);
    Ok((state, trace))
}

/// Per-patch Newton on the coefficients, supports and dictionary fixed.
pub fn coefficient_step(state: &mut LearningState, patches: &[Array2<f64>], steps: usize) -> Result<()> {
    let opts = NewtonOptions::with_iters(steps);
    let dict = &state.dictionary;
    let updated: Vec<Result<GroupCode>> = state
        .codes
        .par_iter()
        .zip(patches.par_iter())
        .map_init(Workspace::default, |ws, (code, q)| {
            if code.support().is_empty() {
                return Ok(code.clone());
            }
            let dt = dict.gather(code.support());
            let fit = fit_group(&dt, dict.dim(), code.support(), q.view(), code.flat().to_vec(), opts, ws)?;
            Ok(fit.code)
        })
        .collect();
    let mut codes = Vec::with_capacity(updated.len());
    for c in updated {
        codes.push(c?);
    }
    state.codes = codes;
    Ok(())
}

/// Flattened view of every patch's support and coefficients, shared by all
/// row problems.
struct RowProblemData<'a> {
    supports: Vec<&'a [usize]>,
    coeffs: Vec<&'a [f64]>,
    patches: Vec<&'a [f64]>,
}

impl<'a> RowProblemData<'a> {
    fn new(codes: &'a [GroupCode], patches: &'a [Array2<f64>]) -> Self {
        let mut supports = Vec::new();
        let mut coeffs = Vec::new();
        let mut qs = Vec::new();
        for (code, q) in codes.iter().zip(patches) {
            if code.support().is_empty() {
                continue;
            }
            for i in 0..code.group_len() {
                supports.push(code.support().indices());
                coeffs.push(code.patch_coeffs(i));
                qs.push(column(q, i));
            }
        }
        Self {
            supports,
            coeffs,
            patches: qs,
        }
    }

    fn len(&self) -> usize {
        self.supports.len()
    }

    fn row_logs(&self, row: &[f64], out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.supports[p]
                .iter()
                .zip(self.coeffs[p])
                .map(|(&j, a)| row[j] * a)
                .sum();
        }
    }

    fn row_objective(&self, r: usize, logs: &[f64]) -> f64 {
        logs.iter()
            .enumerate()
            .map(|(p, &u)| clamped_exp(u) - self.patches[p][r] * u)
            .sum()
    }

    /// Gradient of the row-`r` objective with respect to the dictionary row.
    fn row_gradient(&self, r: usize, logs: &[f64], n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for (p, &u) in logs.iter().enumerate() {
            let resid = clamped_exp(u) - self.patches[p][r];
            for (&j, a) in self.supports[p].iter().zip(self.coeffs[p]) {
                g[j] += resid * a;
            }
        }
        g
    }
}

/// Damped Newton with Armijo on one dictionary row. Returns the new row.
fn newton_row(data: &RowProblemData<'_>, r: usize, mut row: Vec<f64>, steps: usize) -> Result<Vec<f64>> {
    let n = row.len();
    let np = data.len();
    let mut logs = vec![0.0; np];
    let mut trial = vec![0.0; np];
    let mut dir_logs = vec![0.0; np];
    data.row_logs(&row, &mut logs);
    let mut f = data.row_objective(r, &logs);
    if !f.is_finite() {
        return Err(Error::Overflow { patch: r });
    }
    for _ in 0..steps {
        let g = data.row_gradient(r, &logs, n);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= crate::model::GRADIENT_TOL {
            break;
        }
        let mut h = vec![0.0; n * n];
        for (p, &u) in logs.iter().enumerate() {
            let w = clamped_exp(u);
            let sup = data.supports[p];
            let a = data.coeffs[p];
            for (x, &jx) in sup.iter().enumerate() {
                let wa = w * a[x];
                for (y, &jy) in sup.iter().enumerate() {
                    h[jx * n + jy] += wa * a[y];
                }
            }
        }
        for j in 0..n {
            h[j * n + j] += HESSIAN_RIDGE;
        }
        let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
        if !linalg::solve_spd(&mut h, n, &mut step) {
            return Err(Error::Internal(format!(
                "row {r} Hessian is not positive definite"
            )));
        }
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            break;
        }
        data.row_logs(&step, &mut dir_logs);
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            for ((t, &u), &v) in trial.iter_mut().zip(&logs).zip(&dir_logs) {
                *t = u + s * v;
            }
            let ft = data.row_objective(r, &trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * s * slope {
                accepted = Some(ft);
                break;
            }
            s *= 0.5;
        }
        let Some(f_new) = accepted else { break };
        for (x, st) in row.iter_mut().zip(&step) {
            *x += s * st;
        }
        std::mem::swap(&mut logs, &mut trial);
        f = f_new;
    }
    Ok(row)
}

/// Objective and gradient of the row-`r` subproblem of the dictionary step,
/// as functions of row `r` of the dictionary.
pub fn row_objective_gradient(state: &LearningState, patches: &[Array2<f64>], r: usize) -> Result<(f64, Vec<f64>)> {
    check_groups(state, patches)?;
    if r >= state.dictionary.dim() {
        return Err(Error::arg(format!("row {r} outside {} pixel rows", state.dictionary.dim())));
    }
    let data = RowProblemData::new(&state.codes, patches);
    let row = state.dictionary.atoms().row(r).to_vec();
    let mut logs = vec![0.0; data.len()];
    data.row_logs(&row, &mut logs);
    Ok((data.row_objective(r, &logs), data.row_gradient(r, &logs, row.len())))
}

/// Row-wise Newton on the dictionary with supports and coefficients fixed.
pub fn dictionary_step(state: &mut LearningState, patches: &[Array2<f64>], steps: usize) -> Result<()> {
    let d = state.dictionary.dim();
    let n = state.dictionary.len();
    let data = RowProblemData::new(&state.codes, patches);
    let atoms = state.dictionary.atoms();
    let rows: Vec<Result<Vec<f64>>> = (0..d)
        .into_par_iter()
        .map(|r| newton_row(&data, r, atoms.row(r).to_vec(), steps))
        .collect();
    let mut new_atoms = Array2::zeros((d, n).f());
    for (r, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            new_atoms[[r, j]] = v;
        }
    }
    state.dictionary = Dictionary::new(new_atoms)?;
    Ok(())
}

/// Scales every nonzero atom to unit norm and compensates its coefficients,
/// leaving each `D_T a` unchanged.
pub fn normalize_atoms(state: &mut LearningState) {
    let norms = state.dictionary.column_norms();
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 && s.is_finite() {
            state.dictionary.atom_mut(j).iter_mut().for_each(|v| *v /= s);
        }
    }
    for code in &mut state.codes {
        let t = code.support().len();
        let scale: Vec<f64> = code
            .support()
            .indices()
            .iter()
            .map(|&j| if norms[j] > 0.0 && norms[j].is_finite() { norms[j] } else { 1.0 })
            .collect();
        for (k, a) in code.flat_mut().iter_mut().enumerate() {
            *a *= scale[k % t];
        }
    }
}

/// Square dictionary from the separable 2-D DCT-II basis, mapped elementwise
/// by `v -> sign(v) ln(1 + |v| / 0.01)` and normalized to unit-norm columns.
///
/// The magnitude is `ln(|v| + 0.01)` shifted to vanish at zero. Keeping the
/// sign matters: every `|DCT|` atom is symmetric under both reflections, so
/// the unsigned map has rank at most `ceil(s/2)^2`.
pub fn init_dictionary_dct(patch_side: usize) -> Result<Dictionary> {
    if patch_side < 2 {
        return Err(Error::arg(format!("patch side must be >= 2, got {patch_side}")));
    }
    let s = patch_side;
    let d = s * s;
    let basis_1d = |k: usize, x: usize| {
        let c = if k == 0 { (1.0 / s as f64).sqrt() } else { (2.0 / s as f64).sqrt() };
        c * (PI * (2 * x + 1) as f64 * k as f64 / (2 * s) as f64).cos()
    };
    let mut flat = Vec::with_capacity(d * d);
    for kv in 0..s {
        for ku in 0..s {
            let start = flat.len();
            // column-stacked: x (row) runs fastest
            for y in 0..s {
                for x in 0..s {
                    let v = basis_1d(ku, x) * basis_1d(kv, y);
                    flat.push(v.signum() * (v.abs() / DCT_OFFSET).ln_1p());
                }
            }
            let norm = flat[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
            flat[start..].iter_mut().for_each(|v| *v /= norm);
        }
    }
    Dictionary::new(Array2::from_shape_vec((d, d).f(), flat).expect("shape matches"))
}

/// Peak at which the initial dictionary for a given image peak is trained.
pub fn training_peak_for(peak: f64) -> f64 {
    if peak <= 0.2 {
        0.2
    } else if peak <= 4.0 {
        2.0
    } else {
        18.0
    }
}

/// Trains an initial dictionary by running the full denoiser on the clean
/// image scaled to the training peak for `peak`, with the clean image itself
/// as the input.
pub fn train_initial_dictionary(
    clean: &Image,
    peak: f64,
    cfg: &crate::pipeline::SpdaConfig,
) -> Result<Dictionary> {
    if clean.max() <= clean.min() {
        return Err(Error::arg("training image must not be constant"));
    }
    let scaled = crate::image::scale_to_peak(clean, training_peak_for(peak))?;
    let start = init_dictionary_dct(cfg.patch_side)?;
    let report = crate::pipeline::spda_denoise(&scaled, &start, cfg, None)?;
    Ok(report.dictionary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Support;
    use ndarray::array;

    fn code(support: Vec<usize>, coeffs: Array2<f64>) -> GroupCode {
        GroupCode::new(Support::from_indices(support).unwrap(), coeffs).unwrap()
    }

    fn fortran(a: Array2<f64>) -> Array2<f64> {
        crate::image::to_fortran(a)
    }

    #[test]
    fn prune_remaps_indices() {
        let dict = Dictionary::new(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let codes = vec![code(vec![0], array![[1.0]]), code(vec![2, 0], array![[0.5], [0.25]])];
        let patches = vec![fortran(array![[1.0], [2.0]]), fortran(array![[0.0], [3.0]])];
        let state = LearningState::new(dict, codes).unwrap();
        let before = state.objective(&patches).unwrap();
        let pruned = prune_unused_atoms(state).unwrap();
        assert_eq!(pruned.dictionary().len(), 2);
        assert_eq!(pruned.dictionary().atom(1), &[3.0, 6.0]);
        assert_eq!(pruned.codes()[1].support().indices(), &[1, 0]);
        assert_eq!(pruned.usage(), &[2, 1]);
        assert_eq!(pruned.objective(&patches).unwrap(), before);
    }

    #[test]
    fn prune_all_used_is_identity_and_empty_fails() {
        let dict = Dictionary::new(array![[1.0, 2.0]]).unwrap();
        let state = LearningState::new(dict.clone(), vec![code(vec![1, 0], array![[1.0], [1.0]])]).unwrap();
        assert_eq!(prune_unused_atoms(state.clone()).unwrap(), state);
        let unused = LearningState::new(dict, vec![GroupCode::empty(1)]).unwrap();
        assert!(prune_unused_atoms(unused).is_err());
    }

    #[test]
    fn scalar_dictionary_entry_converges_to_log_target() {
        let dict = Dictionary::new(array![[0.0]]).unwrap();
        let state = LearningState::new(dict, vec![code(vec![0], array![[1.0]])]).unwrap();
        let patches = vec![fortran(array![[3.0]])];
        let mut st = state;
        dictionary_step(&mut st, &patches, 30).unwrap();
        let entry = st.dictionary().atom(0)[0];
        assert!((entry - 3f64.ln()).abs() < 1e-6, "{entry}");
    }

    #[test]
    fn zero_iterations_rejected() {
        let dict = Dictionary::new(array![[1.0]]).unwrap();
        let state = LearningState::new(dict, vec![code(vec![0], array![[1.0]])]).unwrap();
        let r = dictionary_learning_round(state, &[fortran(array![[3.0]])], 0, LearningMode::Advanced, InnerSteps::default());
        assert!(r.is_err());
    }

    #[test]
    fn normalization_preserves_estimates() {
        let dict = Dictionary::new(array![[2.0, 0.1], [1.0, -0.3], [0.5, 0.7]]).unwrap();
        let codes = vec![code(vec![1, 0], array![[0.4, -1.2], [0.3, 0.05]])];
        let mut state = LearningState::new(dict, codes).unwrap();
        let before = state.group_estimates(0);
        normalize_atoms(&mut state);
        let after = state.group_estimates(0);
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for n in state.dictionary().column_norms() {
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dct_dictionary_shape_and_norms() {
        let d = init_dictionary_dct(20).unwrap();
        assert_eq!((d.dim(), d.len()), (400, 400));
        let d = init_dictionary_dct(4).unwrap();
        assert!(d.column_norms().iter().all(|n| (n - 1.0).abs() < 1e-12));
        assert!(init_dictionary_dct(1).is_err());
    }

    #[test]
    fn dct_dictionary_full_rank() {
        for s in [4, 6, 8] {
            let d = init_dictionary_dct(s).unwrap();
            let n = s * s;
            let m = nalgebra::DMatrix::from_fn(n, n, |r, c| d.atoms()[[r, c]]);
            let sv = m.singular_values();
            let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min > 1e-8, "side {s}: min singular value {min}");
        }
    }

    #[test]
    fn unsigned_log_dct_is_rank_deficient() {
        // every |DCT| atom is mirror-symmetric, so only ceil(s/2)^2 directions survive
        let s = 4;
        let m = nalgebra::DMatrix::from_fn(16, 16, |r, c| {
            let (x, y) = (r % s, r / s);
            let (u, v) = (c % s, c / s);
            let b = |k: usize, t: usize| {
                let a = if k == 0 { 0.5 } else { (0.5f64).sqrt() };
                a * (PI * (2 * t + 1) as f64 * k as f64 / 8.0).cos()
            };
            ((b(u, x) * b(v, y)).abs() + 0.01).ln()
        });
        let rank = m.singular_values().iter().filter(|&&v| v > 1e-8).count();
        assert!(rank <= 4, "rank {rank}");
    }

    #[test]
    fn training_buckets() {
        assert_eq!(training_peak_for(0.1), 0.2);
        assert_eq!(training_peak_for(0.2), 0.2);
        assert_eq!(training_peak_for(1.0), 2.0);
        assert_eq!(training_peak_for(4.0), 2.0);
        assert_eq!(training_peak_for(9.0), 18.0);
    }
}
