//! Cells, lexicographic indexing and symmetric orbits of `r^T` tables.
//!
//! Cells are 1-based coordinate vectors `(i_1, ..., i_T)`. The linear index
//! orders cells lexicographically with the first coordinate most significant,
//! so the index of `i` is `sum_h (i_h - 1) r^(T-h)`.
//!
//! The orbit `D(i)` of a cell is the set of its distinct coordinate
//! permutations. Orbits are identified by their sorted representative, and
//! [`Orbits`] numbers them in lexicographic order of those representatives.

use std::fmt;

use crate::error::{Error, Result};

/// Largest number of cells a [`TableShape`] may describe.
pub const MAX_CELLS: usize = 10_000_000;

/// Number of categories, number of variables and the category scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TableShape {
    r: usize,
    t: usize,
    scores: Vec<f64>,
}

impl TableShape {
    pub fn new(r: usize, t: usize, scores: Vec<f64>) -> Result<Self> {
        if r < 2 {
            return Err(Error::Shape(format!("need at least 2 categories, got {r}")));
        }
        if t < 2 {
            return Err(Error::Shape(format!("need at least 2 variables, got {t}")));
        }
        let cells = (0..t).try_fold(1usize, |acc, _| acc.checked_mul(r));
        match cells {
            Some(c) if c <= MAX_CELLS => {}
            _ => {
                return Err(Error::Shape(format!(
                    "{r}^{t} cells exceeds the cap of {MAX_CELLS}"
                )))
            }
        }
        if scores.len() != r {
            return Err(Error::Shape(format!(
                "expected {r} scores, got {}",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Shape("scores must be finite".into()));
        }
        if scores.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("scores must be strictly increasing".into()));
        }
        Ok(Self { r, t, scores })
    }

    /// Shape with scores `1, 2, ..., r`.
    pub fn equally_spaced(r: usize, t: usize) -> Result<Self> {
        Self::new(r, t, (1..=r).map(|i| i as f64).collect())
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Score of a 1-based category.
    pub fn score(&self, category: usize) -> f64 {
        self.scores[category - 1]
    }

    pub fn n_cells(&self) -> usize {
        self.r.pow(self.t as u32)
    }

    /// Number of orbits, `C(r + T - 1, T)`.
    pub fn n_orbits(&self) -> usize {
        symmetric_class_count(self.r, self.t)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(move |i| self.cell_unchecked(i))
    }

    fn cell_unchecked(&self, mut index: usize) -> Cell {
        let mut coords = vec![0; self.t];
        for slot in coords.iter_mut().rev() {
            *slot = index % self.r + 1;
            index /= self.r;
        }
        Cell(coords)
    }
}

/// `C(r + t - 1, t)`: the number of non-decreasing coordinate vectors.
pub fn symmetric_class_count(r: usize, t: usize) -> usize {
    binomial(r + t - 1, t)
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// A cell of the table as 1-based coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell(Vec<usize>);

impl Cell {
    pub fn new(coords: Vec<usize>) -> Self {
        Cell(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted coordinates; constant on each orbit.
    pub fn representative(&self) -> Cell {
        let mut c = self.0.clone();
        c.sort_unstable();
        Cell(c)
    }

    /// `T! / prod(m_k!)` where `m_k` are the coordinate multiplicities.
    pub fn orbit_size(&self) -> usize {
        let rep = self.representative();
        let mut denom = 1usize;
        let mut run = 1usize;
        for w in rep.0.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                denom *= factorial(run);
                run = 1;
            }
        }
        denom *= factorial(run);
        factorial(self.0.len()) / denom
    }

    /// All distinct permutations of the coordinates, in lexicographic order.
    pub fn orbit(&self) -> Vec<Cell> {
        let mut cur = self.representative().0;
        let mut out = vec![Cell(cur.clone())];
        while next_permutation(&mut cur) {
            out.push(Cell(cur.clone()));
        }
        out
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for Cell {
    fn from(v: Vec<usize>) -> Self {
        Cell(v)
    }
}

// Standard next-lexicographic-permutation step; skips duplicates naturally.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub fn cell_index(shape: &TableShape, cell: &Cell) -> Result<usize> {
    if cell.len() != shape.t {
        return Err(Error::Dimension(format!(
            "cell {cell} has {} coordinates, table has {} variables",
            cell.len(),
            shape.t
        )));
    }
    let mut idx = 0usize;
    for (position, &c) in cell.0.iter().enumerate() {
        if c == 0 || c > shape.r {
            return Err(Error::CellRange {
                position: position + 1,
                value: c,
                r: shape.r,
            });
        }
        idx = idx * shape.r + (c - 1);
    }
    Ok(idx)
}

pub fn cell_of_index(shape: &TableShape, index: usize) -> Result<Cell> {
    if index >= shape.n_cells() {
        return Err(Error::Dimension(format!(
            "index {index} out of range for {} cells",
            shape.n_cells()
        )));
    }
    Ok(shape.cell_unchecked(index))
}

pub fn orbit(cell: &Cell) -> Vec<Cell> {
    cell.orbit()
}

pub fn orbit_representative(cell: &Cell) -> Cell {
    cell.representative()
}

/// Orbit membership for every cell of a shape.
///
/// Orbit ids follow the lexicographic order of the sorted representatives,
/// which is also the column order of the symmetry indicator matrix.
#[derive(Debug, Clone)]
pub struct Orbits {
    orbit_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    representatives: Vec<Cell>,
}

impl Orbits {
    pub fn new(shape: &TableShape) -> Self {
        let n = shape.n_cells();
        // Sorted representatives are themselves cells, so index them directly.
        let mut id_of_rep = vec![usize::MAX; n];
        let mut representatives = Vec::with_capacity(shape.n_orbits());
        let mut orbit_of = vec![0; n];
        // Cells are visited in lexicographic order and a sorted vector is
        // lexicographically no greater than any of its permutations, so each
        // representative is reached before the rest of its orbit.
        for (i, cell) in shape.cells().enumerate() {
            let rep = cell.representative();
            let rep_idx = cell_index(shape, &rep).expect("representative is in range");
            if id_of_rep[rep_idx] == usize::MAX {
                id_of_rep[rep_idx] = representatives.len();
                representatives.push(rep);
            }
            orbit_of[i] = id_of_rep[rep_idx];
        }
        let mut members = vec![Vec::new(); representatives.len()];
        for (i, &o) in orbit_of.iter().enumerate() {
            members[o].push(i);
        }
        Self {
            orbit_of,
            members,
            representatives,
        }
    }

    /// Number of orbits.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.orbit_of.len()
    }

    pub fn orbit_of(&self, cell: usize) -> usize {
        self.orbit_of[cell]
    }

    /// Linear indices of the cells in an orbit, ascending.
    pub fn members(&self, orbit: usize) -> &[usize] {
        &self.members[orbit]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    pub fn representative(&self, orbit: usize) -> &Cell {
        &self.representatives[orbit]
    }

    /// `|D(i)|` for a cell index.
    pub fn size_of_cell(&self, cell: usize) -> usize {
        self.members[self.orbit_of[cell]].len()
    }

    pub fn sums(&self, values: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.iter().map(|&i| values[i]).sum())
            .collect()
    }

    /// Orbit average at every cell.
    pub fn symmetrize(&self, values: &[f64]) -> Vec<f64> {
        let sums = self.sums(values);
        self.orbit_of
            .iter()
            .map(|&o| sums[o] / self.members[o].len() as f64)
            .collect()
    }

    /// `values_i / sum_{j in D(i)} values_j`.
    pub fn conditional(&self, values: &[f64]) -> Result<Vec<f64>> {
        let sums = self.sums(values);
        if let Some(o) = sums.iter().position(|&s| s <= 0.0) {
            return Err(Error::DegenerateOrbit {
                representative: self.representatives[o].coords().to_vec(),
            });
        }
        Ok(values
            .iter()
            .zip(&self.orbit_of)
            .map(|(&v, &o)| v / sums[o])
            .collect())
    }
}

/// Observed cell counts in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    shape: TableShape,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn new(shape: TableShape, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != shape.n_cells() {
            return Err(Error::Dimension(format!(
                "expected {} counts, got {}",
                shape.n_cells(),
                counts.len()
            )));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidTable("total count must be positive".into()));
        }
        Ok(Self { shape, counts })
    }

    pub fn shape(&self) -> &TableShape {
        &self.shape
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn proportions(&self) -> ProbTable {
        let n = self.n() as f64;
        ProbTable {
            shape: self.shape.clone(),
            probs: self.counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    pub fn get(&self, cell: &Cell) -> Result<u64> {
        Ok(self.counts[cell_index(&self.shape, cell)?])
    }
}

/// Cell probabilities in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    shape: TableShape,
    probs: Vec<f64>,
}

impl ProbTable {
    pub fn new(shape: TableShape, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != shape.n_cells() {
            return Err(Error::Dimension(format!(
                "expected {} probabilities, got {}",
                shape.n_cells(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidTable(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        let tol = 1e-12_f64.max(probs.len() as f64 * 1e-15);
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidTable(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { shape, probs })
    }

    /// Normalises non-negative weights to a probability table.
    pub fn from_weights(shape: TableShape, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidTable("weights must have a positive sum".into()));
        }
        Self::new(shape, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(shape: TableShape) -> Self {
        let n = shape.n_cells();
        Self {
            shape,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn shape(&self) -> &TableShape {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn get(&self, cell: &Cell) -> Result<f64> {
        Ok(self.probs[cell_index(&self.shape, cell)?])
    }
}

/// Complete-symmetry average `pi^S_i = |D(i)|^-1 sum_{j in D(i)} pi_j`.
pub fn symmetric_average(p: &ProbTable) -> ProbTable {
    let orbits = Orbits::new(p.shape());
    ProbTable {
        shape: p.shape.clone(),
        probs: orbits.symmetrize(&p.probs),
    }
}

/// Probability of each cell conditional on its orbit.
pub fn conditional_within_orbit(p: &ProbTable) -> Result<Vec<f64>> {
    Orbits::new(p.shape()).conditional(&p.probs)
}
