//! Wald statistics for S, GS[f] and ME₂ and the S = GS[f] + ME₂ partition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{design_matrix, AsymmetryFamily, DesignSystem};
use crate::error::{Error, Result};
use crate::fdiv::FFunction;
use crate::linalg;
use crate::mle::{fit_model, pvalue, LinkConstraint, ModelFamily, ModelSpec};
use crate::table::{CountTable, Orbits, ProbTable, TableShape};

/// Condition number above which the middle matrix is ridged.
pub const MAX_CONDITION: f64 = 1e12;

/// Multinomial covariance `diag(p) - p pᵀ`.
pub fn sigma(p: &ProbTable) -> DMatrix<f64> {
    let v = DVector::from_row_slice(p.probs());
    DMatrix::from_diagonal(&v) - &v * v.transpose()
}

/// Orbit-averaging matrix `J` with `J_ij = 1/|D(i)|` when `i` and `j` share
/// an orbit.
pub fn orbit_averaging_matrix(shape: &TableShape) -> DMatrix<f64> {
    let orbits = Orbits::new(shape);
    let n = shape.n_cells();
    let mut j = DMatrix::zeros(n, n);
    for members in orbits.iter() {
        let w = 1.0 / members.len() as f64;
        for &a in members {
            for &b in members {
                j[(a, b)] = w;
            }
        }
    }
    j
}

/// `F(π_i / π^S_i)` at every cell.
pub fn link_vector(p: &ProbTable, ff: &FFunction) -> Result<Vec<f64>> {
    let orbits = Orbits::new(p.shape());
    let cond = orbits.conditional(p.probs())?;
    Ok(cond
        .iter()
        .enumerate()
        .map(|(i, c)| ff.link(c * orbits.size_of_cell(i) as f64))
        .collect())
}

/// Jacobian of `π ↦ F(π/π^S)`:
/// `F_ij = f''(π_i/π^S_i) (δ_ij/π^S_i - π_i / (|D(i)| (π^S_i)²))` for `j`
/// in the orbit of `i`, zero otherwise.
pub fn f_jacobian(p: &ProbTable, ff: &FFunction) -> Result<DMatrix<f64>> {
    if !p.is_interior() {
        return Err(Error::InvalidTable("f_jacobian needs a strictly positive table".into()));
    }
    let shape = p.shape();
    let c = LinkConstraint::from_parts(Orbits::new(shape), DMatrix::zeros(shape.n_cells(), 0), *ff);
    Ok(c.link_jacobian(p.probs())?.1)
}

/// A Wald statistic together with the conditioning of its middle matrix.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaldValue {
    pub w: f64,
    pub condition: f64,
    pub ridged: bool,
}

/// `n hᵀ (H Σ Hᵀ)⁻¹ h` with a ridge guard on the middle matrix.
pub fn wald_statistic_detailed(
    h: &DVector<f64>,
    jac: &DMatrix<f64>,
    p: &ProbTable,
    n: f64,
) -> Result<WaldValue> {
    if jac.nrows() != h.len() || jac.ncols() != p.probs().len() {
        return Err(Error::Dimension("constraint and Jacobian sizes differ".into()));
    }
    if h.iter().all(|v| *v == 0.0) {
        return Ok(WaldValue {
            w: 0.0,
            condition: 1.0,
            ridged: false,
        });
    }
    let middle = jac * sigma(p) * jac.transpose();
    let middle = (&middle + middle.transpose()) * 0.5;
    let sol = linalg::solve_spd_guarded(&middle, h, MAX_CONDITION)?;
    Ok(WaldValue {
        w: (n * h.dot(&sol.x)).max(0.0),
        condition: sol.condition,
        ridged: sol.ridged,
    })
}

/// Plain Wald statistic; see [`wald_statistic_detailed`].
pub fn wald_statistic(h: &DVector<f64>, jac: &DMatrix<f64>, p: &ProbTable, n: f64) -> Result<f64> {
    wald_statistic_detailed(h, jac, p, n).map(|v| v.w)
}

/// `h₁ = Uᵀ F(π/π^S)` and `H₁ = Uᵀ F_jac` for a design.
pub fn gs_constraint(ds: &DesignSystem, p: &ProbTable, ff: &FFunction) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let c = LinkConstraint::from_parts(Orbits::new(&ds.shape), ds.u.clone(), *ff);
    let (link, jac) = c.link_jacobian(p.probs())?;
    if link.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTable("link is infinite at an empty cell".into()));
    }
    let ut = ds.u.transpose();
    Ok((&ut * DVector::from_vec(link), ut * jac))
}

/// One row of the G² partition table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionRow {
    pub model: String,
    pub g2: f64,
    pub df: usize,
    pub pvalue: f64,
    pub wald: Option<f64>,
    pub wald_pvalue: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaldReport {
    pub ff: String,
    pub w_gs: f64,
    pub w_me2: f64,
    pub w_s: f64,
    pub df_gs: usize,
    pub df_me2: usize,
    pub df_s: usize,
    pub p_gs: f64,
    pub p_me2: f64,
    pub p_s: f64,
    /// `|W(S) - W(GS) - W(ME₂)|`.
    pub additivity_gap: f64,
    /// `|G²(S) - G²(GS) - G²(ME₂)|`.
    pub g2_gap: f64,
    /// `max |H₁ Σ H₂ᵀ|` at the symmetrised observed table.
    pub orthogonality_residual: f64,
    /// A ridge was added to some middle matrix.
    pub ridged: bool,
    /// Statistics were evaluated at smoothed proportions because the
    /// observed table has empty cells where the link is infinite.
    pub smoothed: bool,
    pub partition: Vec<PartitionRow>,
}

fn needs_smoothing(counts: &CountTable, ff: &FFunction) -> bool {
    if counts.counts().iter().all(|&c| c > 0) {
        return false;
    }
    let orbits = Orbits::new(counts.shape());
    let empty_orbit = orbits.sums(&counts.as_f64()).iter().any(|&s| s == 0.0);
    empty_orbit || !ff.link(f64::MIN_POSITIVE.sqrt()).is_finite() || ff.link(0.0).is_infinite()
}

/// Evaluation point for the Wald statistics: observed proportions, or the
/// additively smoothed table when the link cannot be evaluated there.
pub fn evaluation_point(counts: &CountTable, ff: &FFunction) -> Result<(ProbTable, bool)> {
    if needs_smoothing(counts, ff) {
        let n = counts.n() as f64;
        let k = counts.counts().len() as f64;
        let w = counts.as_f64().iter().map(|c| (c + 0.5) / (n + 0.5 * k)).collect();
        Ok((ProbTable::from_weights(counts.shape().clone(), w)?, true))
    } else {
        Ok((counts.proportions(), false))
    }
}

/// W(GS[f]), W(ME₂) and W(S) at a given evaluation point.
pub fn wald_triplet(
    ds: &DesignSystem,
    p: &ProbTable,
    ff: &FFunction,
    n: f64,
) -> Result<(WaldValue, WaldValue, WaldValue)> {
    let (h1, jac1) = gs_constraint(ds, p, ff)?;
    let m = &ds.m;
    let h2 = m * DVector::from_row_slice(p.probs());
    let w1 = wald_statistic_detailed(&h1, &jac1, p, n)?;
    let w2 = wald_statistic_detailed(&h2, m, p, n)?;
    let h3 = DVector::from_iterator(h1.len() + h2.len(), h1.iter().chain(h2.iter()).cloned());
    let jac3 = DMatrix::from_fn(jac1.nrows() + m.nrows(), m.ncols(), |r, c| {
        if r < jac1.nrows() {
            jac1[(r, c)]
        } else {
            m[(r - jac1.nrows(), c)]
        }
    });
    let w3 = wald_statistic_detailed(&h3, &jac3, p, n)?;
    Ok((w1, w2, w3))
}

/// `max |H₁ Σ H₂ᵀ|` at the symmetric average of `p`.
pub fn orthogonality_residual(ds: &DesignSystem, p: &ProbTable, ff: &FFunction) -> Result<f64> {
    let sym = crate::table::symmetric_average(p);
    let (_, jac1) = gs_constraint(ds, &sym, ff)?;
    Ok((jac1 * sigma(&sym) * ds.m.transpose()).amax())
}

/// Wald statistics and the likelihood-ratio partition for S, GS[f], ME₂,
/// ME, VE and CE.
pub fn decompose(counts: &CountTable, ff: FFunction) -> Result<WaldReport> {
    let shape = counts.shape();
    let ds = design_matrix(shape, AsymmetryFamily::Gs)?;
    let n = counts.n() as f64;
    let (p, smoothed) = evaluation_point(counts, &ff)?;
    let (w1, w2, w3) = wald_triplet(&ds, &p, &ff, n)?;
    let ortho = orthogonality_residual(&ds, &p, &ff)?;

    let mut partition = Vec::new();
    let mut g2_of = std::collections::HashMap::new();
    let rows = [
        (ModelSpec::symmetry(), Some(w3)),
        (ModelSpec::asymmetry(AsymmetryFamily::Gs, ff), Some(w1)),
        (ModelSpec::new(ModelFamily::Me2, None)?, Some(w2)),
        (ModelSpec::new(ModelFamily::Me, None)?, None),
        (ModelSpec::new(ModelFamily::Ve, None)?, None),
        (ModelSpec::new(ModelFamily::Ce, None)?, None),
    ];
    for (spec, wald) in rows {
        let fit = fit_model(counts, &spec)?;
        g2_of.insert(spec.family, fit.g2);
        partition.push(PartitionRow {
            model: spec.label(),
            g2: fit.g2,
            df: fit.df,
            pvalue: fit.pvalue,
            wald: wald.map(|w| w.w),
            wald_pvalue: wald.map(|w| pvalue(w.w, fit.df)),
        });
    }
    let df_gs = ds.n_constraints();
    let df_me2 = ds.m.nrows();
    Ok(WaldReport {
        ff: ff.name(),
        w_gs: w1.w,
        w_me2: w2.w,
        w_s: w3.w,
        df_gs,
        df_me2,
        df_s: df_gs + df_me2,
        p_gs: pvalue(w1.w, df_gs),
        p_me2: pvalue(w2.w, df_me2),
        p_s: pvalue(w3.w, df_gs + df_me2),
        additivity_gap: (w3.w - w1.w - w2.w).abs(),
        g2_gap: (g2_of[&ModelFamily::S] - g2_of[&ModelFamily::Gs] - g2_of[&ModelFamily::Me2]).abs(),
        orthogonality_residual: ortho,
        ridged: w1.ridged || w2.ridged || w3.ridged,
        smoothed,
        partition,
    })
}
