//! Least-squares subproblem solvers used by every CDL update.
//!
//! The code and ridge problems reduce to symmetric positive definite normal
//! equations solved by Cholesky. The norm-constrained dictionary problem is
//! solved by block coordinate descent over dictionary columns, each column
//! update being the exact minimizer over the unit ball.

use nalgebra::Cholesky;

use crate::error::{mismatch, CdlError, Result};
use crate::Matrix;

/// One weighted least-squares term `weight * ‖target − dict · Z‖²` of a code problem.
#[derive(Debug, Clone, Copy)]
pub struct CodeTerm<'a> {
    pub dict: &'a Matrix,
    pub target: &'a Matrix,
    pub weight: f64,
}

impl<'a> CodeTerm<'a> {
    pub fn new(dict: &'a Matrix, target: &'a Matrix, weight: f64) -> Self {
        Self {
            dict,
            target,
            weight,
        }
    }
}

/// One weighted term `weight * ‖target − D · codes‖²` of a dictionary problem.
#[derive(Debug, Clone, Copy)]
pub struct DictTarget<'a> {
    pub target: &'a Matrix,
    pub codes: &'a Matrix,
    pub weight: f64,
}

impl<'a> DictTarget<'a> {
    pub fn new(target: &'a Matrix, codes: &'a Matrix, weight: f64) -> Self {
        Self {
            target,
            codes,
            weight,
        }
    }
}

/// Stopping rule of the column sweeps in [`solve_dictionary`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionaryOptions {
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub rel_tol: f64,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub dictionary: Matrix,
    /// Atoms whose code row is zero in every weighted target; left at their start value.
    pub unused_atoms: Vec<usize>,
    pub sweeps: usize,
    pub objective: f64,
}

pub fn frob_sq(m: &Matrix) -> f64 {
    m.norm_squared()
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CdlError::NonFinite {
            what: what.to_string(),
        })
    }
}

fn ensure_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CdlError::InvalidHyperparam {
            name,
            reason: format!("must be finite and >= 0, got {value}"),
        })
    }
}

/// Minimizes `Σ_t w_t ‖T_t − D_t · Z‖² + ridge_eps ‖Z‖²` over the shared code `Z`.
pub fn solve_code(terms: &[CodeTerm<'_>], ridge_eps: f64) -> Result<Matrix> {
    solve_code_near(terms, ridge_eps, None)
}

/// Like [`solve_code`] but with the ridge centred on `anchor`, i.e. the
/// penalty is `ridge_eps ‖Z − anchor‖²`. The result never has a larger
/// unregularized objective than the anchor itself.
pub fn solve_code_near(
    terms: &[CodeTerm<'_>],
    ridge_eps: f64,
    anchor: Option<&Matrix>,
) -> Result<Matrix> {
    ensure_nonneg("ridge_eps", ridge_eps)?;
    let first = terms
        .first()
        .ok_or_else(|| CdlError::InvalidArgument("code problem without terms".into()))?;
    let n_b = first.dict.ncols();
    let n = first.target.ncols();
    for t in terms {
        ensure_nonneg("weight", t.weight)?;
        if t.dict.nrows() != t.target.nrows() {
            return Err(mismatch("dictionary", t.dict, "target", t.target));
        }
        if t.dict.ncols() != n_b {
            return Err(mismatch("dictionary", t.dict, "dictionary", first.dict));
        }
        if t.target.ncols() != n {
            return Err(mismatch("target", t.target, "target", first.target));
        }
    }

    let mut gram = Matrix::identity(n_b, n_b) * ridge_eps;
    let mut rhs = Matrix::zeros(n_b, n);
    for t in terms.iter().filter(|t| t.weight > 0.0) {
        gram.gemm_tr(t.weight, t.dict, t.dict, 1.0);
        rhs.gemm_tr(t.weight, t.dict, t.target, 1.0);
    }
    if let Some(a) = anchor {
        if a.shape() != rhs.shape() {
            return Err(mismatch("anchor", a, "code", &rhs));
        }
        if ridge_eps > 0.0 {
            rhs += a * ridge_eps;
        }
    }
    solve_spd(gram, &rhs, ridge_eps == 0.0, "code normal equations")
}

/// Solves `gram · Z = rhs` for symmetric positive definite `gram`.
fn solve_spd(gram: Matrix, rhs: &Matrix, strict: bool, context: &'static str) -> Result<Matrix> {
    let scale = gram.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b));
    let n = gram.nrows();
    let chol = Cholesky::new(gram).ok_or(CdlError::SingularSystem { context })?;
    if strict {
        // Without a ridge a numerically rank-deficient Gram matrix can slip
        // through Cholesky with round-off sized pivots.
        let l = chol.l_dirty();
        let floor = (n as f64) * f64::EPSILON * scale;
        if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= floor) {
            return Err(CdlError::SingularSystem { context });
        }
    }
    let z = chol.solve(rhs);
    ensure_finite(&z, context)?;
    Ok(z)
}

/// Shared code of the coupled least-squares problem
/// `‖P − D1·Z‖² + λ‖C − D2·Z‖²`, regularized by `ridge_eps·‖Z‖²`.
pub fn solve_joint_code(
    d1: &Matrix,
    d2: &Matrix,
    p: &Matrix,
    c: &Matrix,
    lambda: f64,
    ridge_eps: f64,
) -> Result<Matrix> {
    solve_joint_code_near(d1, d2, p, c, lambda, ridge_eps, None)
}

/// [`solve_joint_code`] with the ridge centred on `anchor` (see [`solve_code_near`]).
pub fn solve_joint_code_near(
    d1: &Matrix,
    d2: &Matrix,
    p: &Matrix,
    c: &Matrix,
    lambda: f64,
    ridge_eps: f64,
    anchor: Option<&Matrix>,
) -> Result<Matrix> {
    ensure_nonneg("lambda", lambda)?;
    if p.ncols() != c.ncols() {
        return Err(mismatch("P", p, "C", c));
    }
    if d1.ncols() != d2.ncols() {
        return Err(mismatch("D1", d1, "D2", d2));
    }
    if d1.nrows() != p.nrows() {
        return Err(mismatch("D1", d1, "P", p));
    }
    if d2.nrows() != c.nrows() {
        return Err(mismatch("D2", d2, "C", c));
    }
    solve_code_near(
        &[CodeTerm::new(d1, p, 1.0), CodeTerm::new(d2, c, lambda)],
        ridge_eps,
        anchor,
    )
}

/// Ridge code `argmin_Z ‖X − D·Z‖² + γ‖Z‖²`.
pub fn ridge_encode(d: &Matrix, x: &Matrix, gamma: f64) -> Result<Matrix> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CdlError::InvalidHyperparam {
            name: "gamma",
            reason: format!("must be > 0, got {gamma}"),
        });
    }
    if d.nrows() != x.nrows() {
        return Err(mismatch("D", d, "X", x));
    }
    solve_code(&[CodeTerm::new(d, x, 1.0)], gamma)
}

/// Returns the per-class sample counts of a label indicator, checking that
/// every column is one-hot.
pub fn one_hot_counts(h: &Matrix) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; h.nrows()];
    for (col, column) in h.column_iter().enumerate() {
        let mut hot = None;
        for (row, &v) in column.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(row);
            } else if v != 0.0 {
                return Err(CdlError::NotOneHot { column: col });
            }
        }
        match hot {
            Some(row) => counts[row] += 1.0,
            None => return Err(CdlError::NotOneHot { column: col }),
        }
    }
    Ok(counts)
}

/// Seen-class prototypes `argmin_P ‖P − D1Z‖² + β‖X − P·H‖²`.
///
/// `H·Hᵀ` is diagonal with the class counts, so the inverse in the closed
/// form `(D1Z + β·X·Hᵀ)(I + β·H·Hᵀ)⁻¹` is a column scaling.
pub fn solve_prototype(d1z: &Matrix, x: &Matrix, h: &Matrix, beta: f64) -> Result<Matrix> {
    ensure_nonneg("beta", beta)?;
    if x.nrows() != d1z.nrows() {
        return Err(mismatch("D1Z", d1z, "X", x));
    }
    if h.nrows() != d1z.ncols() || h.ncols() != x.ncols() {
        return Err(mismatch("H", h, "X", x));
    }
    let counts = one_hot_counts(h)?;
    let mut p = d1z.clone();
    p.gemm(beta, x, &h.transpose(), 1.0);
    for (k, mut column) in p.column_iter_mut().enumerate() {
        column /= 1.0 + beta * counts[k];
    }
    ensure_finite(&p, "prototypes")?;
    Ok(p)
}

/// Value of `Σ w‖T − D·Z‖²` from the sufficient statistics
/// `G = Σ w Z Zᵀ`, `E = Σ w T Zᵀ`, `c0 = Σ w ‖T‖²`.
fn dict_objective(d: &Matrix, gram: &Matrix, cross: &Matrix, c0: f64) -> f64 {
    c0 - 2.0 * d.dot(cross) + d.dot(&(d * gram))
}

fn project_unit_ball(mut column: nalgebra::DVectorViewMut<'_, f64>) {
    let norm = column.norm();
    if norm > 1.0 {
        column /= norm;
    }
}

/// Direct evaluation of the weighted dictionary objective.
pub fn dictionary_objective(targets: &[DictTarget<'_>], d: &Matrix) -> f64 {
    targets
        .iter()
        .map(|t| t.weight * frob_sq(&(t.target - d * t.codes)))
        .sum()
}

/// Minimizes `Σ_i w_i ‖P_i − D·Z_i‖²` subject to every column of `D` lying
/// in the unit Euclidean ball.
///
/// Starts from `start` when given (projected onto the constraint set), else
/// from the projected ridge least-squares solution. Columns are visited in
/// index order; each is replaced by the projection of its unconstrained
/// minimizer, so the objective never increases.
pub fn solve_dictionary(
    targets: &[DictTarget<'_>],
    start: Option<&Matrix>,
    opts: &DictionaryOptions,
) -> Result<DictionaryFit> {
    let first = targets
        .first()
        .ok_or_else(|| CdlError::InvalidArgument("dictionary problem without targets".into()))?;
    let rows = first.target.nrows();
    let n_b = first.codes.nrows();
    for t in targets {
        ensure_nonneg("weight", t.weight)?;
        if t.target.nrows() != rows {
            return Err(mismatch("target", t.target, "target", first.target));
        }
        if t.codes.nrows() != n_b {
            return Err(mismatch("codes", t.codes, "codes", first.codes));
        }
        if t.codes.ncols() != t.target.ncols() {
            return Err(mismatch("codes", t.codes, "target", t.target));
        }
    }
    if targets.iter().all(|t| t.weight == 0.0) {
        return Err(CdlError::AllWeightsZero);
    }

    let mut gram = Matrix::zeros(n_b, n_b);
    let mut cross = Matrix::zeros(rows, n_b);
    let mut c0 = 0.0;
    for t in targets.iter().filter(|t| t.weight > 0.0) {
        gram.gemm(t.weight, t.codes, &t.codes.transpose(), 1.0);
        cross.gemm(t.weight, t.target, &t.codes.transpose(), 1.0);
        c0 += t.weight * frob_sq(t.target);
    }
    let unused_atoms: Vec<usize> = (0..n_b).filter(|&j| gram[(j, j)] <= 0.0).collect();

    let mut d = match start {
        Some(s) => {
            if s.nrows() != rows || s.ncols() != n_b {
                return Err(CdlError::DimensionMismatch {
                    left: "start dictionary",
                    left_shape: crate::error::shape(s),
                    right: "dictionary",
                    right_shape: format!("{rows}x{n_b}"),
                });
            }
            s.clone()
        }
        None => {
            let mean_diag = gram.trace() / n_b as f64;
            let delta = 1e-10 * mean_diag.max(f64::MIN_POSITIVE);
            let ridged = &gram + Matrix::identity(n_b, n_b) * delta;
            // (G + δI) is symmetric, so D0ᵀ = (G + δI)⁻¹ Eᵀ.
            solve_spd(ridged, &cross.transpose(), false, "dictionary warm start")?.transpose()
        }
    };
    for column in d.column_iter_mut() {
        project_unit_ball(column);
    }

    let mut objective = dict_objective(&d, &gram, &cross, c0);
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for j in 0..n_b {
            let g_jj = gram[(j, j)];
            if g_jj <= 0.0 {
                continue;
            }
            // residual direction E_j − Σ_{k≠j} d_k G_kj
            let mut col = cross.column(j) - &d * gram.column(j) + d.column(j) * g_jj;
            col /= g_jj;
            let norm = col.norm();
            if norm > 1.0 {
                col /= norm;
            }
            d.set_column(j, &col);
        }
        let next = dict_objective(&d, &gram, &cross, c0);
        let decrease = objective - next;
        objective = next;
        if decrease <= opts.rel_tol * (objective.abs() + f64::EPSILON * c0) {
            break;
        }
    }
    ensure_finite(&d, "dictionary")?;

    Ok(DictionaryFit {
        dictionary: d,
        unused_atoms,
        sweeps,
        objective,
    })
}
