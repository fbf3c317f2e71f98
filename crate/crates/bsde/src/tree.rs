//! Scenario trees for a finite-state process observed at times 0..=T.
//!
//! The driving process takes values in {0, .., N-1} (identified with the unit
//! basis vectors of R^N). Randomness is resolved along paths: an *atom* at
//! time t is a positive-probability path (x_0, .., x_t), and the atoms at time
//! t are exactly the cells of the natural filtration. Kernel rows may depend
//! on the whole path, so the tree covers both Markov chains and fully
//! path-dependent dynamics.
//!
//! Construction prunes branches whose one-step probability falls below
//! [`PRUNE_TOL`]; rows are validated to sum to 1 within [`ROW_SUM_TOL`] and
//! then renormalized exactly, so downstream conditional expectations never
//! see the input rounding error.
//!
//! Atoms at a given time are ordered lexicographically by path and are
//! addressed by `(time, index)` pairs; every iteration in the crate follows
//! that order, which is what makes solver output and reports reproducible
//! byte for byte.

use crate::error::{Error, Result};

/// One-step probabilities below this are treated as exact zeros.
pub const PRUNE_TOL: f64 = 1e-12;
/// Accepted deviation of a kernel row sum from 1 before renormalization.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Handle to a positive-probability path cell. Only meaningful together with
/// the tree that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    time: usize,
    index: usize,
}

impl Atom {
    pub fn time(&self) -> usize {
        self.time
    }

    /// Position of the atom within the lexicographically ordered level.
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
struct Level {
    /// Full paths (x_0, .., x_t), lexicographically ordered.
    paths: Vec<Vec<usize>>,
    /// Unconditional probabilities.
    probs: Vec<f64>,
    /// Index of the parent in the previous level (0 for the root).
    parents: Vec<usize>,
    /// Kernel rows after pruning and renormalization; absent on the terminal
    /// level.
    kernels: Vec<Vec<f64>>,
    /// Supported next states per atom (ascending); empty vectors on the
    /// terminal level.
    supports: Vec<Vec<usize>>,
    /// (state, child index in the next level) pairs per atom.
    children: Vec<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug)]
pub struct ScenarioTree {
    n_states: usize,
    horizon: usize,
    initial_state: usize,
    levels: Vec<Level>,
}

/// Formats a path as `(x0,x1,..)` for error messages and reports.
pub fn path_label(path: &[usize]) -> String {
    let inner: Vec<String> = path.iter().map(|s| s.to_string()).collect();
    format!("({})", inner.join(","))
}

enum KernelSource<'a> {
    Markov(&'a [Vec<f64>]),
    Rows(&'a [(Vec<usize>, Vec<f64>)]),
}

impl ScenarioTree {
    /// Builds a tree driven by a time-homogeneous Markov matrix
    /// (`matrix[i][j]` = probability of moving from state i to state j).
    pub fn markov(
        n_states: usize,
        horizon: usize,
        initial_state: usize,
        matrix: &[Vec<f64>],
    ) -> Result<Self> {
        if matrix.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "markov matrix has {} rows, expected {}",
                matrix.len(),
                n_states
            )));
        }
        Self::assemble(
            n_states,
            horizon,
            initial_state,
            KernelSource::Markov(matrix),
        )
    }

    /// Builds a tree from explicit per-atom kernel rows. Each entry pairs a
    /// full path (x_0, .., x_t) with the distribution of x_{t+1}; a row must
    /// be present for every reachable non-terminal atom.
    pub fn from_kernel_rows(
        n_states: usize,
        horizon: usize,
        initial_state: usize,
        rows: &[(Vec<usize>, Vec<f64>)],
    ) -> Result<Self> {
        Self::assemble(n_states, horizon, initial_state, KernelSource::Rows(rows))
    }

    fn assemble(
        n_states: usize,
        horizon: usize,
        initial_state: usize,
        source: KernelSource,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::HorizonZero);
        }
        if n_states == 0 {
            return Err(Error::InvalidInput("n_states must be positive".into()));
        }
        if initial_state >= n_states {
            return Err(Error::InvalidInput(format!(
                "initial_state {} is outside 0..{}",
                initial_state, n_states
            )));
        }

        let mut levels = Vec::with_capacity(horizon + 1);
        levels.push(Level {
            paths: vec![vec![initial_state]],
            probs: vec![1.0],
            parents: vec![0],
            kernels: Vec::new(),
            supports: Vec::new(),
            children: Vec::new(),
        });

        for t in 0..horizon {
            let mut next_paths = Vec::new();
            let mut next_probs = Vec::new();
            let mut next_parents = Vec::new();

            let n_atoms = levels[t].paths.len();
            let mut kernels = Vec::with_capacity(n_atoms);
            let mut supports = Vec::with_capacity(n_atoms);
            let mut children = Vec::with_capacity(n_atoms);

            for a in 0..n_atoms {
                let path = &levels[t].paths[a];
                let raw: &[f64] = match &source {
                    KernelSource::Markov(matrix) => &matrix[*path.last().expect("nonempty path")],
                    KernelSource::Rows(rows) => rows
                        .iter()
                        .find(|(p, _)| p == path)
                        .map(|(_, r)| r.as_slice())
                        .ok_or_else(|| Error::MissingKernelRow {
                            path: path_label(path),
                        })?,
                };
                let row = validate_row(raw, n_states, path)?;

                let support: Vec<usize> =
                    (0..n_states).filter(|&j| row[j] > 0.0).collect();
                let mut kids = Vec::with_capacity(support.len());
                for &j in &support {
                    let mut child_path = path.clone();
                    child_path.push(j);
                    kids.push((j, next_paths.len()));
                    next_paths.push(child_path);
                    next_probs.push(levels[t].probs[a] * row[j]);
                    next_parents.push(a);
                }

                kernels.push(row);
                supports.push(support);
                children.push(kids);
            }

            let level = &mut levels[t];
            level.kernels = kernels;
            level.supports = supports;
            level.children = children;

            levels.push(Level {
                paths: next_paths,
                probs: next_probs,
                parents: next_parents,
                kernels: Vec::new(),
                supports: Vec::new(),
                children: Vec::new(),
            });
        }

        Ok(ScenarioTree {
            n_states,
            horizon,
            initial_state,
            levels,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn root(&self) -> Atom {
        Atom { time: 0, index: 0 }
    }

    pub fn n_atoms_at(&self, time: usize) -> Result<usize> {
        self.check_time(time)?;
        Ok(self.levels[time].paths.len())
    }

    /// All atoms at a time level, in lexicographic path order.
    pub fn atoms_at(&self, time: usize) -> Result<Vec<Atom>> {
        self.check_time(time)?;
        Ok((0..self.levels[time].paths.len())
            .map(|index| Atom { time, index })
            .collect())
    }

    pub fn atom(&self, time: usize, index: usize) -> Result<Atom> {
        self.check_time(time)?;
        if index >= self.levels[time].paths.len() {
            return Err(Error::InvalidInput(format!(
                "atom index {} out of range at time {}",
                index, time
            )));
        }
        Ok(Atom { time, index })
    }

    /// Looks up the atom with the given full path, if it is reachable.
    pub fn find_atom(&self, path: &[usize]) -> Option<Atom> {
        if path.is_empty() || path.len() > self.horizon + 1 {
            return None;
        }
        let time = path.len() - 1;
        let level = &self.levels[time];
        level
            .paths
            .binary_search_by(|p| p.as_slice().cmp(path))
            .ok()
            .map(|index| Atom { time, index })
    }

    pub fn path(&self, atom: Atom) -> &[usize] {
        &self.levels[atom.time].paths[atom.index]
    }

    pub fn label(&self, atom: Atom) -> String {
        path_label(self.path(atom))
    }

    /// Unconditional probability of the atom.
    pub fn prob(&self, atom: Atom) -> f64 {
        self.levels[atom.time].probs[atom.index]
    }

    pub fn is_terminal(&self, atom: Atom) -> bool {
        atom.time == self.horizon
    }

    fn check_time(&self, time: usize) -> Result<()> {
        if time > self.horizon {
            return Err(Error::TimeOutOfRange {
                time,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn check_not_terminal(&self, atom: Atom) -> Result<()> {
        if self.is_terminal(atom) {
            return Err(Error::TerminalAtom {
                path: self.label(atom),
                time: atom.time,
            });
        }
        Ok(())
    }

    /// Kernel row (after pruning and renormalization) at a non-terminal atom.
    pub fn kernel_row(&self, atom: Atom) -> Result<&[f64]> {
        self.check_not_terminal(atom)?;
        Ok(&self.levels[atom.time].kernels[atom.index])
    }

    /// Next states reachable with positive probability, ascending.
    pub fn support(&self, atom: Atom) -> Result<&[usize]> {
        self.check_not_terminal(atom)?;
        Ok(&self.levels[atom.time].supports[atom.index])
    }

    /// Child atoms as (state, atom) pairs, in state order.
    pub fn children(&self, atom: Atom) -> Result<Vec<(usize, Atom)>> {
        self.check_not_terminal(atom)?;
        Ok(self.levels[atom.time].children[atom.index]
            .iter()
            .map(|&(state, index)| {
                (
                    state,
                    Atom {
                        time: atom.time + 1,
                        index,
                    },
                )
            })
            .collect())
    }

    pub fn parent(&self, atom: Atom) -> Option<Atom> {
        if atom.time == 0 {
            return None;
        }
        Some(Atom {
            time: atom.time - 1,
            index: self.levels[atom.time].parents[atom.index],
        })
    }

    /// Ancestor of `atom` at the (weakly earlier) time `time`.
    pub fn ancestor_at(&self, atom: Atom, time: usize) -> Result<Atom> {
        if time > atom.time {
            return Err(Error::TimeOutOfRange {
                time,
                horizon: atom.time,
            });
        }
        let mut a = atom;
        while a.time > time {
            a = self.parent(a).expect("non-root atom has a parent");
        }
        Ok(a)
    }

    pub fn is_ancestor(&self, ancestor: Atom, descendant: Atom) -> bool {
        if ancestor.time > descendant.time {
            return false;
        }
        self.ancestor_at(descendant, ancestor.time)
            .map(|a| a == ancestor)
            .unwrap_or(false)
    }

    /// Realized martingale difference e_j - p at a non-terminal atom, as a
    /// vector in R^N. `state` must lie in the support.
    pub fn martingale_difference(&self, atom: Atom, state: usize) -> Result<Vec<f64>> {
        let row = self.kernel_row(atom)?;
        if state >= self.n_states || row[state] <= 0.0 {
            return Err(Error::OffSupportIndex {
                state,
                path: self.label(atom),
            });
        }
        let mut d: Vec<f64> = row.iter().map(|p| -p).collect();
        d[state] += 1.0;
        Ok(d)
    }

    /// One-step conditional expectation of a process given the atom:
    /// the kernel-weighted average of the values at the children.
    pub fn cond_expect(&self, v: &AdaptedProcess, atom: Atom) -> Result<Vec<f64>> {
        self.check_not_terminal(atom)?;
        if !v.covers(atom.time + 1) {
            return Err(Error::MissingChildValue { time: atom.time + 1 });
        }
        let row = self.kernel_row(atom)?;
        let mut acc = vec![0.0; v.dim()];
        for (state, child) in self.children(atom)? {
            let w = row[state];
            for (a, x) in acc.iter_mut().zip(v.value(child)) {
                *a += w * x;
            }
        }
        Ok(acc)
    }
}

fn validate_row(raw: &[f64], n_states: usize, path: &[usize]) -> Result<Vec<f64>> {
    if raw.len() != n_states {
        return Err(Error::DimensionMismatch(format!(
            "kernel row for atom {} has {} entries, expected {}",
            path_label(path),
            raw.len(),
            n_states
        )));
    }
    for &p in raw {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::NegativeProbability {
                path: path_label(path),
                value: p,
            });
        }
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::RowSumOutOfTolerance {
            path: path_label(path),
            sum,
        });
    }
    let mut row: Vec<f64> = raw
        .iter()
        .map(|&p| if p < PRUNE_TOL { 0.0 } else { p })
        .collect();
    let kept: f64 = row.iter().sum();
    for p in &mut row {
        *p /= kept;
    }
    Ok(row)
}

/// An R^K-valued process adapted to the tree: one value per atom for each
/// time in a contiguous range. Values are stored per level in atom order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedProcess {
    dim: usize,
    first_time: usize,
    /// levels[t - first_time][atom_index] is a vector of length `dim`.
    levels: Vec<Vec<Vec<f64>>>,
}

impl AdaptedProcess {
    pub fn zeros(tree: &ScenarioTree, first_time: usize, last_time: usize, dim: usize) -> Result<Self> {
        if first_time > last_time {
            return Err(Error::InvalidInput(
                "first_time must not exceed last_time".into(),
            ));
        }
        let mut levels = Vec::with_capacity(last_time - first_time + 1);
        for t in first_time..=last_time {
            levels.push(vec![vec![0.0; dim]; tree.n_atoms_at(t)?]);
        }
        Ok(AdaptedProcess {
            dim,
            first_time,
            levels,
        })
    }

    /// Single-level process with values computed per atom.
    pub fn from_fn(
        tree: &ScenarioTree,
        time: usize,
        dim: usize,
        mut f: impl FnMut(Atom) -> Vec<f64>,
    ) -> Result<Self> {
        let mut level = Vec::with_capacity(tree.n_atoms_at(time)?);
        for atom in tree.atoms_at(time)? {
            let v = f(atom);
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "value at atom {} has dimension {}, expected {}",
                    tree.label(atom),
                    v.len(),
                    dim
                )));
            }
            level.push(v);
        }
        Ok(AdaptedProcess {
            dim,
            first_time: time,
            levels: vec![level],
        })
    }

    /// Terminal-time process from values listed in lexicographic atom order.
    pub fn terminal_from_lex(tree: &ScenarioTree, values: Vec<Vec<f64>>) -> Result<Self> {
        let t = tree.horizon();
        let n = tree.n_atoms_at(t)?;
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} terminal values supplied, tree has {} terminal atoms",
                values.len(),
                n
            )));
        }
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidInput("terminal values must be nonempty".into()));
        }
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(
                    "terminal values have mixed dimensions".into(),
                ));
            }
        }
        Ok(AdaptedProcess {
            dim,
            first_time: t,
            levels: vec![values],
        })
    }

    /// Scalar terminal process, a convenience for K = 1.
    pub fn terminal_scalar(tree: &ScenarioTree, values: &[f64]) -> Result<Self> {
        Self::terminal_from_lex(tree, values.iter().map(|&x| vec![x]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn first_time(&self) -> usize {
        self.first_time
    }

    pub fn last_time(&self) -> usize {
        self.first_time + self.levels.len() - 1
    }

    pub fn covers(&self, time: usize) -> bool {
        time >= self.first_time && time <= self.last_time()
    }

    pub fn value(&self, atom: Atom) -> &[f64] {
        &self.levels[atom.time() - self.first_time][atom.index()]
    }

    pub fn set(&mut self, atom: Atom, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "value dimension mismatch");
        self.levels[atom.time() - self.first_time][atom.index()] = v;
    }

    /// Values at one level in atom order.
    pub fn level(&self, time: usize) -> Result<&[Vec<f64>]> {
        if !self.covers(time) {
            return Err(Error::MissingChildValue { time });
        }
        Ok(&self.levels[time - self.first_time])
    }

    /// Extracts a single-level copy.
    pub fn slice_level(&self, time: usize) -> Result<AdaptedProcess> {
        Ok(AdaptedProcess {
            dim: self.dim,
            first_time: time,
            levels: vec![self.level(time)?.to_vec()],
        })
    }

    /// Largest absolute entry across all covered levels.
    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .flatten()
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Pointwise difference, requiring identical shape.
    pub fn sub(&self, other: &AdaptedProcess) -> Result<AdaptedProcess> {
        if self.dim != other.dim
            || self.first_time != other.first_time
            || self.levels.len() != other.levels.len()
        {
            return Err(Error::DimensionMismatch(
                "processes have different shapes".into(),
            ));
        }
        let mut out = self.clone();
        for (lo, ls) in out.levels.iter_mut().zip(&other.levels) {
            for (vo, vs) in lo.iter_mut().zip(ls) {
                for (a, b) in vo.iter_mut().zip(vs) {
                    *a -= b;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise sum, requiring identical shape.
    pub fn add(&self, other: &AdaptedProcess) -> Result<AdaptedProcess> {
        if self.dim != other.dim
            || self.first_time != other.first_time
            || self.levels.len() != other.levels.len()
        {
            return Err(Error::DimensionMismatch(
                "processes have different shapes".into(),
            ));
        }
        let mut out = self.clone();
        for (lo, ls) in out.levels.iter_mut().zip(&other.levels) {
            for (vo, vs) in lo.iter_mut().zip(ls) {
                for (a, b) in vo.iter_mut().zip(vs) {
                    *a += b;
                }
            }
        }
        Ok(out)
    }

    /// Every entry multiplied by a scalar factor.
    pub fn scale(&self, factor: f64) -> AdaptedProcess {
        let mut out = self.clone();
        for level in out.levels.iter_mut() {
            for v in level.iter_mut() {
                for x in v.iter_mut() {
                    *x *= factor;
                }
            }
        }
        out
    }
}

/// Spreads a single-level process forward: every atom at `target_time` takes
/// the value of its ancestor at `v.first_time()`. This is how an F_t
/// measurable variable is re-read as a terminal one.
pub fn embed_forward(
    tree: &ScenarioTree,
    v: &AdaptedProcess,
    target_time: usize,
) -> Result<AdaptedProcess> {
    let source_time = v.first_time();
    if v.last_time() != source_time {
        return Err(Error::InvalidInput(
            "embed_forward expects a single-level process".into(),
        ));
    }
    if target_time < source_time {
        return Err(Error::TimeOutOfRange {
            time: target_time,
            horizon: source_time,
        });
    }
    AdaptedProcess::from_fn(tree, target_time, v.dim(), |atom| {
        let anc = tree
            .ancestor_at(atom, source_time)
            .expect("target_time >= source_time");
        v.value(anc).to_vec()
    })
}

/// Zeroes a process outside the subtree rooted at `atom` (multiplication by
/// the indicator of the atom). The process may not start before the atom's
/// time, since the indicator is not measurable earlier.
pub fn mask_to_subtree(
    tree: &ScenarioTree,
    v: &AdaptedProcess,
    atom: Atom,
) -> Result<AdaptedProcess> {
    if v.first_time() < atom.time() {
        return Err(Error::InvalidInput(
            "cannot mask a process that starts before the indicator's time".into(),
        ));
    }
    let mut out = v.clone();
    for t in v.first_time()..=v.last_time() {
        for a in tree.atoms_at(t)? {
            if !tree.is_ancestor(atom, a) {
                out.set(a, vec![0.0; v.dim()]);
            }
        }
    }
    Ok(out)
}
