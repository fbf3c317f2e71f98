//! Drivers: the generator F(omega, t, y, Z) of a backward equation.
//!
//! A driver is evaluated per atom on the current value y in R^K and a gains
//! matrix Z. Well-posedness of the backward step requires that F cannot
//! distinguish equivalent gains matrices; this crate enforces that
//! structurally by canonicalizing Z before every evaluation (see
//! [`Driver::eval`]). The raw, unprojected entry point stays available for
//! the assumption prober, which uses it to detect user closures that would
//! have broken the invariance.
//!
//! Flags on the driver are declarations, not proofs: `y_independent` lets the
//! solver skip root finding, `normalized` (F(y, 0) = 0) is required for
//! driver-backed nonlinear expectations. Probes exist to spot-check both.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::representation::{canonicalize, GainsMatrix};
use crate::tree::{Atom, ScenarioTree};

type EvalFn = dyn Fn(&ScenarioTree, Atom, &[f64], &GainsMatrix) -> Vec<f64> + Send + Sync;
/// Maps a target c to the y solving y - F(y, Z) = c at the given atom.
type InverseFn = dyn Fn(&ScenarioTree, Atom, &[f64], &GainsMatrix) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
pub struct Driver {
    dim: usize,
    label: String,
    y_independent: bool,
    normalized: bool,
    eval: Arc<EvalFn>,
    explicit_inverse: Option<Arc<InverseFn>>,
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Driver")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("y_independent", &self.y_independent)
            .field("normalized", &self.normalized)
            .field("explicit_inverse", &self.explicit_inverse.is_some())
            .finish()
    }
}

impl Driver {
    pub fn from_fn(
        dim: usize,
        label: impl Into<String>,
        y_independent: bool,
        normalized: bool,
        eval: impl Fn(&ScenarioTree, Atom, &[f64], &GainsMatrix) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Driver {
            dim,
            label: label.into(),
            y_independent,
            normalized,
            eval: Arc::new(eval),
            explicit_inverse: None,
        }
    }

    pub fn with_explicit_inverse(
        mut self,
        inverse: impl Fn(&ScenarioTree, Atom, &[f64], &GainsMatrix) -> Result<Vec<f64>>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.explicit_inverse = Some(Arc::new(inverse));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_y_independent(&self) -> bool {
        self.y_independent
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn has_explicit_inverse(&self) -> bool {
        self.explicit_inverse.is_some()
    }

    /// Evaluates the driver on the canonical representative of `z`, checking
    /// the result for shape and finiteness.
    pub fn eval(
        &self,
        tree: &ScenarioTree,
        atom: Atom,
        y: &[f64],
        z: &GainsMatrix,
    ) -> Result<Vec<f64>> {
        let canonical = canonicalize(tree, atom, z)?;
        self.eval_canonical(tree, atom, y, &canonical)
    }

    /// Like [`Driver::eval`] but trusts the caller that `z` is already
    /// canonical at the atom. Internal hot path for the solver.
    pub(crate) fn eval_canonical(
        &self,
        tree: &ScenarioTree,
        atom: Atom,
        y: &[f64],
        z: &GainsMatrix,
    ) -> Result<Vec<f64>> {
        debug_assert!(z.is_canonical(tree, atom).unwrap_or(false));
        self.check_shapes(tree, y, z)?;
        let out = (self.eval)(tree, atom, y, z);
        self.check_output(tree, atom, &out)?;
        Ok(out)
    }

    /// Raw evaluation without the canonical projection. Only the assumption
    /// prober should want this.
    pub fn eval_raw(
        &self,
        tree: &ScenarioTree,
        atom: Atom,
        y: &[f64],
        z: &GainsMatrix,
    ) -> Result<Vec<f64>> {
        self.check_shapes(tree, y, z)?;
        let out = (self.eval)(tree, atom, y, z);
        self.check_output(tree, atom, &out)?;
        Ok(out)
    }

    /// Applies the declared inverse if one exists: returns y solving
    /// y - F(y, Z) = target.
    pub(crate) fn apply_inverse(
        &self,
        tree: &ScenarioTree,
        atom: Atom,
        target: &[f64],
        z: &GainsMatrix,
    ) -> Option<Result<Vec<f64>>> {
        self.explicit_inverse
            .as_ref()
            .map(|inv| inv(tree, atom, target, z))
    }

    fn check_shapes(&self, tree: &ScenarioTree, y: &[f64], z: &GainsMatrix) -> Result<()> {
        if y.len() != self.dim || z.n_rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "driver '{}' has dimension {}, got y of length {} and Z with {} rows",
                self.label,
                self.dim,
                y.len(),
                z.n_rows()
            )));
        }
        if z.n_cols() != tree.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "gains matrix has {} columns, tree has {} states",
                z.n_cols(),
                tree.n_states()
            )));
        }
        Ok(())
    }

    fn check_output(&self, tree: &ScenarioTree, atom: Atom, out: &[f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "driver '{}' returned {} components, declared {}",
                self.label,
                out.len(),
                self.dim
            )));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDriverValue {
                path: tree.label(atom),
                time: atom.time(),
            });
        }
        Ok(())
    }

    // ---- builtin families -------------------------------------------------

    /// F identically zero: the linear conditional expectation.
    pub fn zero(dim: usize) -> Self {
        Driver::from_fn(dim, "zero", true, true, move |_, _, _, _| vec![0.0; dim])
    }

    /// Affine driver F(y, Z) = A y + b + sum_j c_j Z (e_j - p), with A a
    /// K x K matrix, b in R^K and per-state scalar weights c. When I - A is
    /// invertible the backward step is solved exactly by a precomputed LU.
    pub fn linear(
        dim: usize,
        y_matrix: Vec<Vec<f64>>,
        increment_weights: Vec<f64>,
        offset: Vec<f64>,
    ) -> Result<Self> {
        if y_matrix.len() != dim || y_matrix.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "y_matrix must be {dim} x {dim}"
            )));
        }
        if offset.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "offset must have length {dim}"
            )));
        }
        for row in &y_matrix {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("y_matrix entries must be finite".into()));
            }
        }
        if increment_weights.iter().any(|v| !v.is_finite())
            || offset.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "driver coefficients must be finite".into(),
            ));
        }

        let y_independent = y_matrix.iter().flatten().all(|&v| v == 0.0);
        let normalized = y_independent && offset.iter().all(|&v| v == 0.0);
        let label = format!(
            "linear(a={:?}, c={:?}, b={:?})",
            y_matrix, increment_weights, offset
        );

        let a = y_matrix.clone();
        let c = increment_weights.clone();
        let b = offset.clone();
        let eval = move |tree: &ScenarioTree, atom: Atom, y: &[f64], z: &GainsMatrix| {
            let mut out = b.clone();
            for i in 0..out.len() {
                for (k, yk) in y.iter().enumerate() {
                    out[i] += a[i][k] * yk;
                }
            }
            if let Ok(support) = tree.support(atom) {
                for &j in support {
                    let w = if j < c.len() { c[j] } else { 0.0 };
                    if w == 0.0 {
                        continue;
                    }
                    if let Ok(inc) = z.increment(tree, atom, j) {
                        for (o, v) in out.iter_mut().zip(&inc) {
                            *o += w * v;
                        }
                    }
                }
            }
            out
        };

        let mut driver = Driver::from_fn(dim, label, y_independent, normalized, eval);

        // y - F(y, Z) = c reduces to (I - A) y = c + b + sum_j c_j Z(e_j - p).
        let mut ima = DMatrix::<f64>::identity(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                ima[(i, j)] -= y_matrix[i][j];
            }
        }
        let lu = ima.lu();
        if lu.is_invertible() {
            let lu = Arc::new(lu);
            let c = increment_weights;
            let b = offset;
            driver = driver.with_explicit_inverse(
                move |tree: &ScenarioTree, atom: Atom, target: &[f64], z: &GainsMatrix| {
                    let mut rhs: Vec<f64> = target.iter().zip(&b).map(|(t, b)| t + b).collect();
                    for &j in tree.support(atom)? {
                        let w = if j < c.len() { c[j] } else { 0.0 };
                        if w == 0.0 {
                            continue;
                        }
                        let inc = z.increment(tree, atom, j)?;
                        for (r, v) in rhs.iter_mut().zip(&inc) {
                            *r += w * v;
                        }
                    }
                    let rhs = DVector::from_vec(rhs);
                    let sol = lu.solve(&rhs).ok_or_else(|| {
                        Error::RootFindDivergence("linear driver inverse failed".into())
                    })?;
                    Ok(sol.iter().copied().collect())
                },
            );
        }

        Ok(driver)
    }

    /// Risk-averse tilt: componentwise gamma * min over supported states of
    /// the realized increment. Normalized and y-independent; balanced for
    /// 0 < gamma < 1.
    pub fn worst_case_tilt(dim: usize, gamma: f64) -> Result<Self> {
        Self::tilt(dim, gamma, true)
    }

    /// Optimistic tilt: componentwise gamma * max over supported states of
    /// the realized increment.
    pub fn best_case_tilt(dim: usize, gamma: f64) -> Result<Self> {
        Self::tilt(dim, gamma, false)
    }

    fn tilt(dim: usize, gamma: f64, worst: bool) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidInput("tilt gamma must be finite".into()));
        }
        let label = if worst {
            format!("worst_case_tilt(gamma={gamma})")
        } else {
            format!("best_case_tilt(gamma={gamma})")
        };
        Ok(Driver::from_fn(
            dim,
            label,
            true,
            true,
            move |tree: &ScenarioTree, atom: Atom, _y: &[f64], z: &GainsMatrix| {
                let mut out = vec![0.0; dim];
                let support = match tree.support(atom) {
                    Ok(s) => s,
                    Err(_) => return out,
                };
                for i in 0..dim {
                    let mut extreme = f64::NAN;
                    for &j in support {
                        let inc = match z.increment(tree, atom, j) {
                            Ok(v) => v[i],
                            Err(_) => return vec![f64::NAN; dim],
                        };
                        extreme = if extreme.is_nan() {
                            inc
                        } else if worst {
                            extreme.min(inc)
                        } else {
                            extreme.max(inc)
                        };
                    }
                    out[i] = gamma * extreme;
                }
                out
            },
        ))
    }

    /// Scalar driver interpolated from a table of values over a grid on
    /// (y, zeta_0, .., zeta_{N-1}), where zeta_j is the realized increment at
    /// state j. Evaluation clamps to the grid boundary.
    pub fn tabular(
        n_states: usize,
        y_axis: Vec<f64>,
        increment_axes: Vec<Vec<f64>>,
        values: Vec<f64>,
        y_independent: bool,
        normalized: bool,
    ) -> Result<Self> {
        if increment_axes.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "need one increment axis per state: got {}, states {}",
                increment_axes.len(),
                n_states
            )));
        }
        let mut axes = vec![y_axis];
        axes.extend(increment_axes);
        let table = MultilinearTable::new(axes, values)?;
        let label = format!("tabular({} points)", table.values.len());
        Ok(Driver::from_fn(
            1,
            label,
            y_independent,
            normalized,
            move |tree: &ScenarioTree, atom: Atom, y: &[f64], z: &GainsMatrix| {
                let mut point = Vec::with_capacity(1 + tree.n_states());
                point.push(y[0]);
                for j in 0..tree.n_states() {
                    let zeta = match tree.kernel_row(atom) {
                        Ok(row) if row[j] > 0.0 => match z.increment(tree, atom, j) {
                            Ok(v) => v[0],
                            Err(_) => return vec![f64::NAN],
                        },
                        _ => 0.0,
                    };
                    point.push(zeta);
                }
                vec![table.eval(&point)]
            },
        ))
    }
}

/// Multilinear interpolation over a rectilinear grid, values flattened with
/// the last axis fastest. Out-of-range coordinates clamp to the boundary.
struct MultilinearTable {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl MultilinearTable {
    fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let mut size = 1usize;
        for axis in &axes {
            if axis.is_empty() {
                return Err(Error::InvalidInput("interpolation axis is empty".into()));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(
                    "interpolation axes must be strictly increasing".into(),
                ));
            }
            size = size
                .checked_mul(axis.len())
                .ok_or_else(|| Error::InvalidInput("interpolation grid too large".into()))?;
        }
        if values.len() != size {
            return Err(Error::DimensionMismatch(format!(
                "table has {} values, grid needs {}",
                values.len(),
                size
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table values must be finite".into()));
        }
        let mut strides = vec![1usize; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        Ok(MultilinearTable {
            axes,
            strides,
            values,
        })
    }

    fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.axes.len());
        let d = self.axes.len();
        // (cell index, fraction) per axis, clamped to the grid.
        let mut cells = Vec::with_capacity(d);
        for (axis, &x) in self.axes.iter().zip(point) {
            let n = axis.len();
            if n == 1 || x <= axis[0] {
                cells.push((0usize, 0.0));
            } else if x >= axis[n - 1] {
                cells.push((n - 2, 1.0));
            } else {
                let hi = axis.partition_point(|&a| a <= x).min(n - 1);
                let lo = hi - 1;
                cells.push((lo, (x - axis[lo]) / (axis[hi] - axis[lo])));
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for k in 0..d {
                let (lo, frac) = cells[k];
                let high = corner >> k & 1 == 1;
                let idx = if high {
                    weight *= frac;
                    (lo + 1).min(self.axes[k].len() - 1)
                } else {
                    weight *= 1.0 - frac;
                    lo
                };
                flat += idx * self.strides[k];
            }
            if weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        acc
    }
}
