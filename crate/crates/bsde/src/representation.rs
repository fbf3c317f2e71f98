//! Martingale representation and the gains-process equivalence relation.
//!
//! At a non-terminal atom with kernel row p, the one-step martingale
//! difference takes the values e_j - p for supported states j. A gains matrix
//! Z (K rows, N columns) acts on those differences; two matrices are
//! *equivalent* when they produce the same realized increments Z (e_j - p)
//! for every supported j, which is all the dynamics can ever see.
//!
//! Every equivalence class contains exactly one *canonical* representative:
//! off-support columns zero and Z p = 0. [`canonicalize`] projects onto it,
//! [`represent`] builds it directly from a zero-mean family of child values,
//! and the rest of the crate passes canonical matrices around so drivers can
//! never distinguish equivalent inputs.

use crate::error::{Error, Result};
use crate::tree::{Atom, AdaptedProcess, ScenarioTree};

/// Tolerance for declaring realized increments (and hence matrices) equal.
pub const EQUIV_TOL: f64 = 1e-10;
/// A conditional mean above this norm disqualifies input to [`represent`].
pub const MEAN_TOL: f64 = 1e-10;
/// Canonical-form residual allowed on the invariant Z p = 0.
pub const CANONICAL_TOL: f64 = 1e-12;

/// Dense K x N matrix mapping martingale differences in R^N to increments in
/// R^K. Plain row-major storage; all structure lives in the operations.
#[derive(Clone, Debug, PartialEq)]
pub struct GainsMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GainsMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GainsMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if r == 0 || c == 0 {
            return Err(Error::InvalidInput("gains matrix must be nonempty".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch(
                    "gains matrix rows have mixed lengths".into(),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(GainsMatrix { rows: r, cols: c, data })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix-vector product Z v for v in R^N.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Realized increment Z (e_state - p) at the atom, in R^K.
    pub fn increment(&self, tree: &ScenarioTree, atom: Atom, state: usize) -> Result<Vec<f64>> {
        let d = tree.martingale_difference(atom, state)?;
        self.check_cols(tree)?;
        Ok(self.apply(&d))
    }

    /// All realized increments at the atom, one per supported state, in
    /// support order.
    pub fn increments(&self, tree: &ScenarioTree, atom: Atom) -> Result<Vec<Vec<f64>>> {
        self.check_cols(tree)?;
        tree.support(atom)?
            .iter()
            .map(|&j| self.increment(tree, atom, j))
            .collect()
    }

    pub fn sub(&self, other: &GainsMatrix) -> Result<GainsMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(
                "gains matrices have different shapes".into(),
            ));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    fn check_cols(&self, tree: &ScenarioTree) -> Result<()> {
        if self.cols != tree.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "gains matrix has {} columns, tree has {} states",
                self.cols,
                tree.n_states()
            )));
        }
        Ok(())
    }

    /// Whether the matrix is in canonical form at the atom: off-support
    /// columns vanish and Z p = 0, both within [`CANONICAL_TOL`].
    pub fn is_canonical(&self, tree: &ScenarioTree, atom: Atom) -> Result<bool> {
        self.check_cols(tree)?;
        let row = tree.kernel_row(atom)?;
        for j in 0..self.cols {
            if row[j] == 0.0 {
                for i in 0..self.rows {
                    if self.get(i, j).abs() > CANONICAL_TOL {
                        return Ok(false);
                    }
                }
            }
        }
        let zp = self.apply(row);
        Ok(zp.iter().all(|x| x.abs() <= CANONICAL_TOL))
    }
}

/// Projects a gains matrix onto the canonical representative of its
/// equivalence class at the atom: column j becomes the realized increment
/// Z (e_j - p) for supported j and zero otherwise.
pub fn canonicalize(tree: &ScenarioTree, atom: Atom, z: &GainsMatrix) -> Result<GainsMatrix> {
    let support = tree.support(atom)?;
    let mut out = GainsMatrix::zeros(z.n_rows(), z.n_cols());
    for &j in support {
        let inc = z.increment(tree, atom, j)?;
        for (i, v) in inc.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Builds the canonical gains matrix representing a zero-mean family of child
/// values: `w[k]` is the R^K value attached to the k-th supported state. The
/// resulting Z satisfies Z (e_j - p) = w_j exactly on the support.
pub fn represent(tree: &ScenarioTree, atom: Atom, w: &[Vec<f64>]) -> Result<GainsMatrix> {
    let support = tree.support(atom)?;
    let row = tree.kernel_row(atom)?;
    if w.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} child values supplied, support has {} states",
            w.len(),
            support.len()
        )));
    }
    let dim = w.first().map(|v| v.len()).unwrap_or(0);
    if dim == 0 {
        return Err(Error::InvalidInput("child values must be nonempty".into()));
    }
    let mut mean = vec![0.0; dim];
    for (k, &j) in support.iter().enumerate() {
        if w[k].len() != dim {
            return Err(Error::DimensionMismatch(
                "child values have mixed dimensions".into(),
            ));
        }
        for (m, x) in mean.iter_mut().zip(&w[k]) {
            *m += row[j] * x;
        }
    }
    let norm = mean.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if norm > MEAN_TOL {
        return Err(Error::NonzeroConditionalMean { norm });
    }

    let mut z = GainsMatrix::zeros(dim, tree.n_states());
    for (k, &j) in support.iter().enumerate() {
        for i in 0..dim {
            z.set(i, j, w[k][i]);
        }
    }
    Ok(z)
}

/// Represents the centered child values of a process at `atom`: subtracts the
/// conditional mean first, so any process can be fed in.
pub fn represent_centered(
    tree: &ScenarioTree,
    atom: Atom,
    v: &AdaptedProcess,
) -> Result<GainsMatrix> {
    let mean = tree.cond_expect(v, atom)?;
    let mut w = Vec::new();
    for (_, child) in tree.children(atom)? {
        let centered: Vec<f64> = v
            .value(child)
            .iter()
            .zip(&mean)
            .map(|(x, m)| x - m)
            .collect();
        w.push(centered);
    }
    represent(tree, atom, &w)
}

/// Largest absolute difference of realized increments between two matrices
/// over the support of the atom.
pub fn increment_distance(
    tree: &ScenarioTree,
    atom: Atom,
    z1: &GainsMatrix,
    z2: &GainsMatrix,
) -> Result<f64> {
    let d = z1.sub(z2)?;
    let mut worst = 0.0_f64;
    for inc in d.increments(tree, atom)? {
        for x in inc {
            worst = worst.max(x.abs());
        }
    }
    Ok(worst)
}

/// Whether two gains matrices are equivalent at the atom, i.e. produce the
/// same realized increments within [`EQUIV_TOL`].
pub fn equivalent(
    tree: &ScenarioTree,
    atom: Atom,
    z1: &GainsMatrix,
    z2: &GainsMatrix,
) -> Result<bool> {
    Ok(increment_distance(tree, atom, z1, z2)? <= EQUIV_TOL)
}

/// Gains process: one matrix per non-terminal atom for times 0..last_time.
#[derive(Clone, Debug, PartialEq)]
pub struct GainsProcess {
    dim: usize,
    /// levels[t][atom_index]
    levels: Vec<Vec<GainsMatrix>>,
}

impl GainsProcess {
    pub fn new(dim: usize, levels: Vec<Vec<GainsMatrix>>) -> Self {
        GainsProcess { dim, levels }
    }

    pub fn zeros(tree: &ScenarioTree, last_time: usize, dim: usize) -> Result<Self> {
        let mut levels = Vec::with_capacity(last_time);
        for t in 0..last_time {
            levels.push(vec![
                GainsMatrix::zeros(dim, tree.n_states());
                tree.n_atoms_at(t)?
            ]);
        }
        Ok(GainsProcess { dim, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One past the last time carrying a matrix.
    pub fn end_time(&self) -> usize {
        self.levels.len()
    }

    pub fn at(&self, atom: Atom) -> &GainsMatrix {
        &self.levels[atom.time()][atom.index()]
    }

    pub fn set(&mut self, atom: Atom, z: GainsMatrix) {
        self.levels[atom.time()][atom.index()] = z;
    }
}

/// Seminorm induced by the martingale differences:
/// sum over times and atoms of P(atom) * sum_j p_j |Z (e_j - p)|^2, square
/// rooted. Vanishes exactly on processes equivalent to zero.
pub fn seminorm(tree: &ScenarioTree, z: &GainsProcess) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..z.end_time() {
        for atom in tree.atoms_at(t)? {
            let row = tree.kernel_row(atom)?;
            let p_atom = tree.prob(atom);
            for &j in tree.support(atom)? {
                let inc = z.at(atom).increment(tree, atom, j)?;
                let sq: f64 = inc.iter().map(|x| x * x).sum();
                total += p_atom * row[j] * sq;
            }
        }
    }
    Ok(total.sqrt())
}
