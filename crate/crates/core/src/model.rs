//! The exponential Poisson patch model.
//!
//! A patch `q` (photon counts) is explained by `exp(D_T a)`, where `D_T` holds
//! the dictionary atoms on a support `T`. Its negative log-likelihood, up to
//! terms independent of `a`, is
//!
//! ```text
//! f(a) = sum_r exp((D_T a)_r) - q^T D_T a
//! ```
//!
//! which is convex in `a` for a fixed support. Everything here works on that
//! function: evaluation, derivatives, and a damped Newton solver with Armijo
//! backtracking that pursuit and dictionary learning both build on.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg;

/// Exponent arguments are clamped here before `exp`.
pub const EXP_CLAMP: f64 = 50.0;
/// Ridge added to every Newton Hessian.
pub const HESSIAN_RIDGE: f64 = 1e-6;
pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_BACKTRACKS: usize = 30;
pub const GRADIENT_TOL: f64 = 1e-6;

#[inline]
pub(crate) fn clamped_exp(u: f64) -> f64 {
    u.min(EXP_CLAMP).exp()
}

/// Atoms stored as the columns of a `d x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    // column-major so each atom is a contiguous slice
    atoms: Array2<f64>,
}

impl Dictionary {
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        let (d, n) = atoms.dim();
        if d == 0 || n == 0 {
            return Err(Error::dim(format!("dictionary must be non-empty, got {d}x{n}")));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("dictionary entries must be finite"));
        }
        Ok(Self {
            atoms: crate::image::to_fortran(atoms),
        })
    }

    /// Pixels per atom.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.atoms.as_slice_memory_order().expect("contiguous")[j * d..(j + 1) * d]
    }

    pub(crate) fn atom_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.atoms.as_slice_memory_order_mut().expect("contiguous")[j * d..(j + 1) * d]
    }

    /// `D_T` as a column-major `d x |T|` buffer.
    pub fn gather(&self, support: &Support) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() * support.len());
        for &j in support.indices() {
            out.extend_from_slice(self.atom(j));
        }
        out
    }

    /// `D_T` as a `d x |T|` matrix.
    pub fn restrict(&self, support: &Support) -> Array2<f64> {
        Array2::from_shape_vec((self.dim(), support.len()).f(), self.gather(support))
            .expect("shape matches")
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| self.atom(j).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Keeps only the listed atoms, in the given order.
    pub fn select_atoms(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::arg("a dictionary needs at least one atom"));
        }
        let d = self.dim();
        let mut flat = Vec::with_capacity(d * keep.len());
        for &j in keep {
            flat.extend_from_slice(self.atom(j));
        }
        Self::new(Array2::from_shape_vec((d, keep.len()).f(), flat).expect("shape matches"))
    }
}

/// Ordered set of distinct atom indices; order records greedy selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let mut s = Self::new();
        for j in indices {
            s.push(j)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, j: usize) -> Result<()> {
        if self.0.contains(&j) {
            return Err(Error::arg(format!("atom {j} is already in the support")));
        }
        self.0.push(j);
        Ok(())
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.contains(&j)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn set_last(&mut self, pos: usize, j: usize) {
        self.0[pos] = j;
    }

    pub(crate) fn remap(&mut self, map: &[Option<usize>]) {
        for j in &mut self.0 {
            *j = map[*j].expect("remapped atom is in use");
        }
    }
}

/// A shared support plus one coefficient column per patch of the group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCode {
    support: Support,
    // |T| x group size, column-major
    coeffs: Array2<f64>,
}

impl GroupCode {
    pub fn new(support: Support, coeffs: Array2<f64>) -> Result<Self> {
        if coeffs.nrows() != support.len() {
            return Err(Error::dim(format!(
                "{} coefficient rows for a support of size {}",
                coeffs.nrows(),
                support.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("coefficients must be finite"));
        }
        Ok(Self {
            support,
            coeffs: crate::image::to_fortran(coeffs),
        })
    }

    pub(crate) fn from_flat(support: Support, group_len: usize, flat: Vec<f64>) -> Self {
        let coeffs = Array2::from_shape_vec((support.len(), group_len).f(), flat)
            .expect("shape matches");
        Self { support, coeffs }
    }

    /// Empty support for a group of `group_len` patches.
    pub fn empty(group_len: usize) -> Self {
        Self::from_flat(Support::new(), group_len, Vec::new())
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn coeffs(&self) -> ArrayView2<'_, f64> {
        self.coeffs.view()
    }

    pub fn group_len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn patch_coeffs(&self, i: usize) -> &[f64] {
        let t = self.support.len();
        &self.coeffs.as_slice_memory_order().expect("contiguous")[i * t..(i + 1) * t]
    }

    pub(crate) fn flat(&self) -> &[f64] {
        self.coeffs.as_slice_memory_order().expect("contiguous")
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        self.coeffs.as_slice_memory_order_mut().expect("contiguous")
    }

    pub(crate) fn support_mut(&mut self) -> &mut Support {
        &mut self.support
    }

    /// Coefficients laid out for `target`: entries of atoms already in this
    /// code are copied, new atoms start at zero.
    pub fn extended_to(&self, target: &Support) -> Vec<f64> {
        let t = target.len();
        let pos: Vec<Option<usize>> = target
            .indices()
            .iter()
            .map(|j| self.support.indices().iter().position(|k| k == j))
            .collect();
        let mut out = vec![0.0; t * self.group_len()];
        for i in 0..self.group_len() {
            let src = self.patch_coeffs(i);
            for (r, p) in pos.iter().enumerate() {
                if let Some(p) = p {
                    out[i * t + r] = src[*p];
                }
            }
        }
        out
    }
}

/// Borrowed column-major `d x t` matrix.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ColMatrix<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> ColMatrix<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.col(j)) {
                    *o += a * xj;
                }
            }
        }
    }
}

fn as_col_major(a: ArrayView2<'_, f64>) -> Vec<f64> {
    a.t().iter().copied().collect()
}

/// Per-patch objective given the log-estimate `u = D_T a`.
#[inline]
pub(crate) fn objective_from_log(u: &[f64], q: &[f64]) -> f64 {
    u.iter().zip(q).map(|(&u, &q)| clamped_exp(u) - q * u).sum()
}

/// Group objective `sum_i [1^T exp(D_T a_i) - q_i^T D_T a_i]`.
///
/// `dt` is `d x |T|`, `coeffs` is `|T| x l`, `patches` is `d x l`.
pub fn objective(
    dt: ArrayView2<'_, f64>,
    coeffs: ArrayView2<'_, f64>,
    patches: ArrayView2<'_, f64>,
) -> Result<f64> {
    let (d, t) = dt.dim();
    if coeffs.nrows() != t || patches.nrows() != d || coeffs.ncols() != patches.ncols() {
        return Err(Error::dim(format!(
            "objective: D_T {:?}, coefficients {:?}, patches {:?}",
            dt.dim(),
            coeffs.dim(),
            patches.dim()
        )));
    }
    let dt_flat = as_col_major(dt);
    let m = ColMatrix::new(&dt_flat, d, t);
    let mut u = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..patches.ncols() {
        let a: Vec<f64> = coeffs.column(i).to_vec();
        let q: Vec<f64> = patches.column(i).to_vec();
        m.mul_vec(&a, &mut u);
        let f = objective_from_log(&u, &q);
        if !f.is_finite() {
            return Err(Error::Overflow { patch: i });
        }
        total += f;
    }
    Ok(total)
}

fn check_single(dt: &ArrayView2<'_, f64>, alpha: &[f64], q: &[f64]) -> Result<()> {
    if dt.ncols() != alpha.len() || dt.nrows() != q.len() {
        return Err(Error::dim(format!(
            "D_T {:?} with {} coefficients and {} pixels",
            dt.dim(),
            alpha.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `D_T^T (exp(D_T a) - q)` for a single patch.
pub fn gradient(dt: ArrayView2<'_, f64>, alpha: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    check_single(&dt, alpha, q)?;
    let (d, t) = dt.dim();
    let flat = as_col_major(dt);
    let m = ColMatrix::new(&flat, d, t);
    let mut u = vec![0.0; d];
    m.mul_vec(alpha, &mut u);
    let r: Vec<f64> = u.iter().zip(q).map(|(&u, &q)| clamped_exp(u) - q).collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { patch: 0 });
    }
    Ok((0..t)
        .map(|j| m.col(j).iter().zip(&r).map(|(a, b)| a * b).sum())
        .collect())
}

/// `D_T^T diag(exp(D_T a)) D_T + ridge I` for a single patch.
pub fn hessian(dt: ArrayView2<'_, f64>, alpha: &[f64], q: &[f64]) -> Result<Array2<f64>> {
    check_single(&dt, alpha, q)?;
    let (d, t) = dt.dim();
    let flat = as_col_major(dt);
    let m = ColMatrix::new(&flat, d, t);
    let mut u = vec![0.0; d];
    m.mul_vec(alpha, &mut u);
    let w: Vec<f64> = u.iter().map(|&u| clamped_exp(u)).collect();
    let mut h = vec![0.0; t * t];
    weighted_gram(&m, &w, &mut h);
    Ok(Array2::from_shape_vec((t, t), h).expect("shape matches"))
}

/// `out = M^T diag(w) M + ridge I`, row-major `t x t`.
fn weighted_gram(m: &ColMatrix<'_>, w: &[f64], out: &mut [f64]) {
    let t = m.cols;
    for a in 0..t {
        let ca = m.col(a);
        for b in 0..=a {
            let cb = m.col(b);
            let mut s = 0.0;
            for r in 0..m.rows {
                s += ca[r] * w[r] * cb[r];
            }
            out[a * t + b] = s;
            out[b * t + a] = s;
        }
        out[a * t + a] += HESSIAN_RIDGE;
    }
}

/// Newton budget and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl NewtonOptions {
    pub fn with_iters(max_iters: usize) -> Self {
        Self {
            max_iters,
            grad_tol: GRADIENT_TOL,
        }
    }
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self::with_iters(5)
    }
}

/// Outcome of one per-patch Newton solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSolve {
    pub objective: f64,
    pub iterations: usize,
    /// Infinity norm of the gradient at the returned point.
    pub grad_norm: f64,
    /// Whether any exponent hit [`EXP_CLAMP`].
    pub clamped: bool,
}

/// Scratch buffers reused across per-patch solves.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    u: Vec<f64>,
    w: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    step: Vec<f64>,
    v: Vec<f64>,
    trial: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, d: usize, t: usize) {
        self.u.resize(d, 0.0);
        self.w.resize(d, 0.0);
        self.v.resize(d, 0.0);
        self.trial.resize(d, 0.0);
        self.g.resize(t, 0.0);
        self.step.resize(t, 0.0);
        self.h.resize(t * t, 0.0);
    }
}

/// Damped Newton with Armijo backtracking on one patch, starting from `alpha`.
///
/// `trace`, when given, receives the objective at the start and after every
/// accepted step.
pub(crate) fn newton_patch(
    m: ColMatrix<'_>,
    q: &[f64],
    alpha: &mut [f64],
    opts: NewtonOptions,
    ws: &mut Workspace,
    patch_index: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<PatchSolve> {
    let (d, t) = (m.rows, m.cols);
    ws.prepare(d, t);
    m.mul_vec(alpha, &mut ws.u);
    let mut f = objective_from_log(&ws.u, q);
    if !f.is_finite() {
        return Err(Error::Overflow { patch: patch_index });
    }
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(f);
    }
    let mut clamped = ws.u.iter().any(|&u| u > EXP_CLAMP);
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        for (w, &u) in ws.w.iter_mut().zip(&ws.u) {
            *w = clamped_exp(u);
        }
        grad_norm = 0.0f64;
        for j in 0..t {
            let g: f64 = m
                .col(j)
                .iter()
                .zip(ws.w.iter().zip(q))
                .map(|(a, (w, q))| a * (w - q))
                .sum();
            ws.g[j] = g;
            grad_norm = grad_norm.max(g.abs());
        }
        if !grad_norm.is_finite() {
            return Err(Error::Overflow { patch: patch_index });
        }
        if grad_norm <= opts.grad_tol || iterations >= opts.max_iters {
            break;
        }
        weighted_gram(&m, &ws.w, &mut ws.h);
        for j in 0..t {
            ws.step[j] = -ws.g[j];
        }
        if !linalg::solve_spd(&mut ws.h, t, &mut ws.step) {
            return Err(Error::Internal(format!(
                "Newton Hessian not positive definite on patch {patch_index}"
            )));
        }
        let slope: f64 = ws.g.iter().zip(&ws.step).map(|(g, s)| g * s).sum();
        if !(slope < 0.0) {
            break;
        }
        m.mul_vec(&ws.step, &mut ws.v);
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            for ((tr, &u), &v) in ws.trial.iter_mut().zip(&ws.u).zip(&ws.v) {
                *tr = u + s * v;
            }
            let ft = objective_from_log(&ws.trial, q);
            if ft.is_finite() && ft <= f + ARMIJO_C * s * slope {
                accepted = Some(ft);
                break;
            }
            s *= 0.5;
        }
        let Some(f_new) = accepted else {
            // no sufficient decrease at any step length: stationary to working precision
            break;
        };
        if f_new > f {
            return Err(Error::Internal(format!(
                "objective increased from {f} to {f_new} on patch {patch_index}"
            )));
        }
        for (a, st) in alpha.iter_mut().zip(&ws.step) {
            *a += s * st;
        }
        std::mem::swap(&mut ws.u, &mut ws.trial);
        clamped |= ws.u.iter().any(|&u| u > EXP_CLAMP);
        f = f_new;
        iterations += 1;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(f);
        }
    }
    Ok(PatchSolve {
        objective: f,
        iterations,
        grad_norm,
        clamped,
    })
}

/// Result of fitting a group on a fixed support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportFit {
    pub code: GroupCode,
    /// Group objective at the returned coefficients.
    pub objective: f64,
    /// Largest per-patch Newton iteration count.
    pub iterations: usize,
    /// Largest per-patch gradient infinity norm.
    pub grad_norm: f64,
}

/// Fits every patch of a group on `D_T` (column-major `d x t`), starting
/// from `init` (column-major `t x l`).
pub(crate) fn fit_group(
    dt: &[f64],
    d: usize,
    support: &Support,
    patches: ArrayView2<'_, f64>,
    init: Vec<f64>,
    opts: NewtonOptions,
    ws: &mut Workspace,
) -> Result<SupportFit> {
    let t = support.len();
    let l = patches.ncols();
    let m = ColMatrix::new(dt, d, t);
    let mut coeffs = init;
    let mut total = 0.0;
    let mut iterations = 0;
    let mut grad_norm = 0.0f64;
    let mut qbuf = Vec::new();
    for i in 0..l {
        let col = patches.column(i);
        let q: &[f64] = match col.as_slice() {
            Some(s) => s,
            None => {
                qbuf.clear();
                qbuf.extend(col.iter());
                &qbuf
            }
        };
        let a = &mut coeffs[i * t..(i + 1) * t];
        let r = newton_patch(m, q, a, opts, ws, i, None)?;
        total += r.objective;
        iterations = iterations.max(r.iterations);
        grad_norm = grad_norm.max(r.grad_norm);
    }
    Ok(SupportFit {
        code: GroupCode::from_flat(support.clone(), l, coeffs),
        objective: total,
        iterations,
        grad_norm,
    })
}

/// Minimizes the group objective over coefficients on a fixed support.
///
/// Patches are independent given the support, so each gets its own damped
/// Newton solve. The start point is `warm_start` extended by zeros for atoms
/// it does not contain, or zero.
pub fn solve_fixed_support(
    dict: &Dictionary,
    support: &Support,
    patches: ArrayView2<'_, f64>,
    warm_start: Option<&GroupCode>,
    opts: NewtonOptions,
) -> Result<SupportFit> {
    if support.is_empty() {
        return Err(Error::arg("fixed-support solve needs a non-empty support"));
    }
    if patches.ncols() == 0 {
        return Err(Error::arg("fixed-support solve needs at least one patch"));
    }
    if patches.nrows() != dict.dim() {
        return Err(Error::dim(format!(
            "patches have {} pixels, dictionary atoms {}",
            patches.nrows(),
            dict.dim()
        )));
    }
    if let Some(&j) = support.indices().iter().find(|&&j| j >= dict.len()) {
        return Err(Error::arg(format!("atom {j} outside a {}-atom dictionary", dict.len())));
    }
    let init = match warm_start {
        Some(w) if w.group_len() == patches.ncols() => w.extended_to(support),
        Some(w) => {
            return Err(Error::dim(format!(
                "warm start covers {} patches, group has {}",
                w.group_len(),
                patches.ncols()
            )))
        }
        None => vec![0.0; support.len() * patches.ncols()],
    };
    let dt = dict.gather(support);
    fit_group(&dt, dict.dim(), support, patches, init, opts, &mut Workspace::default())
}

/// Solves a single patch and returns the objective after every accepted step.
pub fn newton_trace(
    dt: ArrayView2<'_, f64>,
    q: &[f64],
    alpha: &mut [f64],
    opts: NewtonOptions,
) -> Result<(PatchSolve, Vec<f64>)> {
    check_single(&dt, alpha, q)?;
    let (d, t) = dt.dim();
    let flat = as_col_major(dt);
    let mut trace = Vec::new();
    let r = newton_patch(
        ColMatrix::new(&flat, d, t),
        q,
        alpha,
        opts,
        &mut Workspace::default(),
        0,
        Some(&mut trace),
    )?;
    Ok((r, trace))
}

/// `exp(D_T a_i)` for every patch of a group, as a `d x l` column-major buffer.
pub(crate) fn group_estimates(dict: &Dictionary, code: &GroupCode) -> Vec<f64> {
    let d = dict.dim();
    let l = code.group_len();
    if code.support().is_empty() {
        return vec![1.0; d * l];
    }
    let dt = dict.gather(code.support());
    let m = ColMatrix::new(&dt, d, code.support().len());
    let mut out = vec![0.0; d * l];
    for i in 0..l {
        let o = &mut out[i * d..(i + 1) * d];
        m.mul_vec(code.patch_coeffs(i), o);
        for v in o.iter_mut() {
            *v = clamped_exp(*v);
        }
    }
    out
}
