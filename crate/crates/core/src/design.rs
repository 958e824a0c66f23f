//! Design matrices for the asymmetry families.
//!
//! Columns are built from score vectors `s_h` (the score of variable `h` at
//! every cell) and their differences between neighbouring variables. The
//! symmetric block `X^S` holds one indicator column per orbit, ordered by
//! sorted representative.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::table::{cell_of_index, Orbits, TableShape};

/// Asymmetry families that share the linear-form construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsymmetryFamily {
    Gs,
    Els,
    Ls,
}

impl AsymmetryFamily {
    pub fn name(self) -> &'static str {
        match self {
            AsymmetryFamily::Gs => "GS",
            AsymmetryFamily::Els => "ELS",
            AsymmetryFamily::Ls => "LS",
        }
    }

    fn has_diagonal(self) -> bool {
        !matches!(self, AsymmetryFamily::Ls)
    }

    fn has_pairs(self) -> bool {
        matches!(self, AsymmetryFamily::Gs)
    }
}

impl std::str::FromStr for AsymmetryFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gs" => Ok(AsymmetryFamily::Gs),
            "els" => Ok(AsymmetryFamily::Els),
            "ls" => Ok(AsymmetryFamily::Ls),
            _ => Err(Error::Config(format!("`{s}` is not an asymmetry family (gs, els, ls)"))),
        }
    }
}

/// Number of asymmetry columns `d₂` for a family with `t` variables.
pub fn asymmetry_dim(family: AsymmetryFamily, t: usize) -> usize {
    match family {
        AsymmetryFamily::Gs => (t * t + 3 * t - 6) / 2,
        AsymmetryFamily::Els => 2 * t - 2,
        AsymmetryFamily::Ls => t - 1,
    }
}

/// Number of interaction-difference columns, `T(T-1)/2 - 1`.
pub fn v2_len(t: usize) -> usize {
    t * (t - 1) / 2 - 1
}

/// Named column spans of a design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnLayout {
    pub alpha: Range<usize>,
    pub beta_diag: Range<usize>,
    pub beta_offdiag: Range<usize>,
    pub gamma: Range<usize>,
}

impl ColumnLayout {
    fn new(family: AsymmetryFamily, t: usize, n_orbits: usize) -> Self {
        let a = t - 1;
        let d = if family.has_diagonal() { t - 1 } else { 0 };
        let o = if family.has_pairs() { v2_len(t) } else { 0 };
        ColumnLayout {
            alpha: 0..a,
            beta_diag: a..a + d,
            beta_offdiag: a + d..a + d + o,
            gamma: a + d + o..a + d + o + n_orbits,
        }
    }

    /// Columns carrying asymmetry (everything before the γ block).
    pub fn asymmetry(&self) -> Range<usize> {
        0..self.gamma.start
    }

    pub fn total(&self) -> usize {
        self.gamma.end
    }
}

/// All matrices attached to one (shape, family) pair.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    pub shape: TableShape,
    pub family: AsymmetryFamily,
    /// `r^T × L` design matrix `[Δ-blocks, X^S]`.
    pub x: DMatrix<f64>,
    /// Orbit indicator matrix.
    pub xs: DMatrix<f64>,
    /// Orthonormal basis of the orthogonal complement of span(X).
    pub u: DMatrix<f64>,
    /// Moment matrix whose rows are every Δ vector (the full GS set).
    pub m: DMatrix<f64>,
    /// Unordered variable pairs (1-based) in lexicographic order.
    pub pair_chain: Vec<(usize, usize)>,
    pub layout: ColumnLayout,
}

fn check_variable(shape: &TableShape, h: usize, max: usize) -> Result<()> {
    if h == 0 || h > max {
        return Err(Error::Dimension(format!(
            "variable index {h} outside 1..={max} for T = {}",
            shape.t()
        )));
    }
    Ok(())
}

/// `s_h`: the score of variable `h` (1-based) at every cell.
pub fn score_vector(shape: &TableShape, h: usize) -> Result<DVector<f64>> {
    check_variable(shape, h, shape.t())?;
    let r = shape.r();
    let stride = r.pow((shape.t() - h) as u32);
    Ok(DVector::from_fn(shape.n_cells(), |i, _| {
        shape.scores()[(i / stride) % r]
    }))
}

fn all_scores(shape: &TableShape) -> Vec<DVector<f64>> {
    (1..=shape.t())
        .map(|h| score_vector(shape, h).expect("h in range"))
        .collect()
}

/// `Δ₁^{(h)} = s_h - s_{h+1}`.
pub fn delta1(shape: &TableShape, h: usize) -> Result<DVector<f64>> {
    check_variable(shape, h, shape.t() - 1)?;
    Ok(score_vector(shape, h)? - score_vector(shape, h + 1)?)
}

/// `Δ₂^{(h)} = s_h² - s_{h+1}²` (elementwise squares).
pub fn delta2(shape: &TableShape, h: usize) -> Result<DVector<f64>> {
    check_variable(shape, h, shape.t() - 1)?;
    let a = score_vector(shape, h)?;
    let b = score_vector(shape, h + 1)?;
    Ok(a.component_mul(&a) - b.component_mul(&b))
}

/// Unordered variable pairs `(s, t)`, `s < t`, in lexicographic order. The
/// chain always ends at `(T-1, T)`.
pub fn pair_chain(t: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(t * (t.saturating_sub(1)) / 2);
    for s in 1..=t {
        for u in s + 1..=t {
            out.push((s, u));
        }
    }
    out
}

fn pair_product(scores: &[DVector<f64>], (s, t): (usize, usize)) -> DVector<f64> {
    scores[s - 1].component_mul(&scores[t - 1])
}

/// `Δ_{V₂}^{(k)}`: difference of the `k`-th and `(k+1)`-th pair products.
pub fn delta_v2(shape: &TableShape, k: usize) -> Result<DVector<f64>> {
    let len = v2_len(shape.t());
    if k == 0 || k > len {
        return Err(Error::Dimension(format!(
            "pair difference index {k} outside 1..={len}"
        )));
    }
    let scores = all_scores(shape);
    let chain = pair_chain(shape.t());
    Ok(pair_product(&scores, chain[k - 1]) - pair_product(&scores, chain[k]))
}

/// Orbit indicator matrix `X^S`.
pub fn symmetry_matrix(shape: &TableShape, orbits: &Orbits) -> DMatrix<f64> {
    let mut xs = DMatrix::zeros(shape.n_cells(), orbits.len());
    for i in 0..shape.n_cells() {
        xs[(i, orbits.orbit_of(i))] = 1.0;
    }
    xs
}

fn delta_blocks(shape: &TableShape) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let t = shape.t();
    let d1 = (1..t).map(|h| delta1(shape, h).unwrap()).collect();
    let d2 = (1..t).map(|h| delta2(shape, h).unwrap()).collect();
    let dv = (1..=v2_len(t)).map(|k| delta_v2(shape, k).unwrap()).collect();
    (d1, d2, dv)
}

/// Moment matrix `M` with rows `Δ₁`, `Δ₂` and `Δ_{V₂}`. `Mπ = 0` is the
/// equality of marginal means and second moments.
pub fn moment_matrix(shape: &TableShape) -> DMatrix<f64> {
    let (d1, d2, dv) = delta_blocks(shape);
    let rows: Vec<_> = d1.iter().chain(&d2).chain(&dv).map(|v| v.transpose()).collect();
    if rows.is_empty() {
        return DMatrix::zeros(0, shape.n_cells());
    }
    DMatrix::from_rows(&rows)
}

/// Build `X`, `X^S`, `U` and `M` for a family, checking rank block by block.
pub fn design_matrix(shape: &TableShape, family: AsymmetryFamily) -> Result<DesignSystem> {
    let orbits = Orbits::new(shape);
    let xs = symmetry_matrix(shape, &orbits);
    let layout = ColumnLayout::new(family, shape.t(), orbits.len());
    let (d1, d2, dv) = delta_blocks(shape);

    let mut blocks: Vec<(&'static str, Vec<DVector<f64>>)> = vec![("alpha", d1)];
    if family.has_diagonal() {
        blocks.push(("beta_diag", d2));
    }
    if family.has_pairs() {
        blocks.push(("beta_offdiag", dv));
    }
    blocks.push(("gamma", xs.column_iter().map(|c| c.into_owned()).collect()));

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(layout.total());
    for (name, block) in blocks {
        columns.extend(block);
        if columns.is_empty() {
            continue;
        }
        let partial = DMatrix::from_columns(&columns);
        let rk = linalg::rank(&partial);
        if rk < columns.len() {
            return Err(Error::RankDeficient {
                block: name,
                rank: rk,
                expected: columns.len(),
            });
        }
    }
    let x = DMatrix::from_columns(&columns);
    let u = linalg::orthogonal_complement(&x);

    Ok(DesignSystem {
        shape: shape.clone(),
        family,
        x,
        xs,
        u,
        m: moment_matrix(shape),
        pair_chain: pair_chain(shape.t()),
        layout,
    })
}

impl DesignSystem {
    /// `d₁`, the number of independent constraints of the model.
    pub fn n_constraints(&self) -> usize {
        self.u.ncols()
    }

    /// `d₂` for this family.
    pub fn n_asymmetry(&self) -> usize {
        self.layout.gamma.start
    }

    /// Rows of `M` that belong to this family's asymmetry columns.
    pub fn family_moment_rows(&self) -> DMatrix<f64> {
        self.x.columns(0, self.n_asymmetry()).transpose()
    }
}

/// Undo the neighbour differences of one block: returns raw per-item
/// coefficients, shifted so the last is zero.
fn telescope(diffs: &[f64], len: usize) -> Vec<f64> {
    let mut raw = vec![0.0; len];
    for k in 0..len {
        let cur = if k < diffs.len() { diffs[k] } else { 0.0 };
        let prev = if k > 0 { diffs[k - 1] } else { 0.0 };
        raw[k] = cur - prev;
    }
    let last = raw[len - 1];
    raw.iter().map(|v| v - last).collect()
}

/// Map the Δ-basis coefficients back to `(α, B)` with `α_T = 0`,
/// `B_TT = 0` and `B_(T-1)T = 0`.
///
/// `theta_prime` may hold only the asymmetry block or the full parameter
/// vector including γ; the γ part is ignored. The pair coefficient `b_st`
/// multiplies `u_s u_t` once, so the matrix entry is `B_st = b_st / 2`.
pub fn recover_coefficients(
    ds: &DesignSystem,
    theta_prime: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let lay = &ds.layout;
    if theta_prime.len() != lay.gamma.start && theta_prime.len() != lay.total() {
        return Err(Error::Dimension(format!(
            "expected {} or {} coefficients, got {}",
            lay.gamma.start,
            lay.total(),
            theta_prime.len()
        )));
    }
    let t = ds.shape.t();
    let alpha = telescope(&theta_prime[lay.alpha.clone()], t);
    let mut b = DMatrix::zeros(t, t);
    if !lay.beta_diag.is_empty() {
        let diag = telescope(&theta_prime[lay.beta_diag.clone()], t);
        for h in 0..t {
            b[(h, h)] = diag[h];
        }
    }
    if !lay.beta_offdiag.is_empty() {
        let pairs = telescope(&theta_prime[lay.beta_offdiag.clone()], ds.pair_chain.len());
        for (k, &(s, u)) in ds.pair_chain.iter().enumerate() {
            b[(s - 1, u - 1)] = pairs[k] / 2.0;
            b[(u - 1, s - 1)] = pairs[k] / 2.0;
        }
    }
    Ok((DVector::from_vec(alpha), b))
}

/// `u_iᵀα + u_iᵀB u_i` at every cell.
pub fn quadratic_predictor(shape: &TableShape, alpha: &DVector<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..shape.n_cells())
        .map(|i| {
            let cell = cell_of_index(shape, i).expect("index in range");
            let u = DVector::from_iterator(
                shape.t(),
                cell.coords().iter().map(|&c| shape.score(c)),
            );
            u.dot(alpha) + (u.transpose() * b * &u)[(0, 0)]
        })
        .collect()
}
