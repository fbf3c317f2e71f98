//! Extension of static scalar valuation maps to dynamic families.
//!
//! A static map sends a terminal variable to a single number. When the map
//! is trivial on constants and strictly monotone, there is at most one
//! adapted family `Y_t` agreeing with it in the sense that masking by any
//! time-`t` atom cannot distinguish `Q` from `Y_t`:
//!
//! ```text
//! E(1_A Q) = E(1_A Y_t)   for every atom A at time t.
//! ```
//!
//! [`extend_static`] constructs that family by per-atom monotone bisection
//! and then validates it across levels: solving against the next level
//! embedded as a terminal variable must reproduce the same values. When the
//! validation fails the map admits no consistent dynamic extension, and the
//! certificate records the numeric trail. The classical expectation, the
//! essential infimum (on suitable inputs) and the entropic map extend; a
//! convex mixture of expectation and infimum is the standard map that does
//! not.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nlexp::NonlinearExpectation;
use crate::tree::{embed_forward, AdaptedProcess, Atom, ScenarioTree};

/// Absolute tolerance on the solved per-atom value.
const SOLVE_TOL: f64 = 1e-10;
/// Tolerance for the cross-level consistency check and for the residual
/// that separates a solvable equation from a certified jump.
const CONSISTENCY_TOL: f64 = 1e-8;
/// Widest bracket tried before declaring a numeric failure.
const MAX_BRACKET_WIDTH: f64 = (1u64 << 20) as f64;
/// Level size at which per-atom solves switch to the parallel path.
const PAR_THRESHOLD: usize = 64;

type StaticMap = dyn Fn(&ScenarioTree, &AdaptedProcess) -> Result<f64> + Send + Sync;

/// A static scalar valuation map on terminal variables.
#[derive(Clone)]
pub struct StaticExpectation {
    label: String,
    monotone_declared: bool,
    eval: Arc<StaticMap>,
}

impl fmt::Debug for StaticExpectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StaticExpectation")
            .field("label", &self.label)
            .field("monotone_declared", &self.monotone_declared)
            .finish()
    }
}

impl StaticExpectation {
    /// Wraps a pure map from scalar terminal variables to numbers.
    /// `monotone_declared` records the caller's claim that the map is
    /// strictly monotone; [`probe_monotonicity`] can test it.
    pub fn new(
        label: impl Into<String>,
        monotone_declared: bool,
        eval: impl Fn(&ScenarioTree, &AdaptedProcess) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        StaticExpectation {
            label: label.into(),
            monotone_declared,
            eval: Arc::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn monotone_declared(&self) -> bool {
        self.monotone_declared
    }

    /// Evaluates the map on a scalar single-level variable.
    pub fn eval(&self, tree: &ScenarioTree, q: &AdaptedProcess) -> Result<f64> {
        if q.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "static maps act on scalar variables, got dimension {}",
                q.dim()
            )));
        }
        if q.first_time() != q.last_time() {
            return Err(Error::InvalidInput(
                "static maps act on single-level variables".into(),
            ));
        }
        let out = (self.eval)(tree, q)?;
        if !out.is_finite() {
            return Err(Error::InvalidInput(format!(
                "static map '{}' returned a non-finite value",
                self.label
            )));
        }
        Ok(out)
    }
}

/// Selector for the shipped static maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StaticKind {
    /// Probability-weighted average under the tree measure.
    Mean,
    /// Smallest value attained with positive probability.
    EssInf,
    /// `alpha * mean + (1 - alpha) * essinf`.
    Mixture { alpha: f64 },
    /// `-(1/gamma) * ln E[exp(-gamma Q)]`.
    Entropic { gamma: f64 },
}

fn level_mean(tree: &ScenarioTree, q: &AdaptedProcess) -> Result<f64> {
    let mut sum = 0.0;
    for atom in tree.atoms_at(q.first_time())? {
        sum += tree.prob(atom) * q.value(atom)[0];
    }
    Ok(sum)
}

fn level_min(tree: &ScenarioTree, q: &AdaptedProcess) -> Result<f64> {
    let mut min = f64::INFINITY;
    for atom in tree.atoms_at(q.first_time())? {
        min = min.min(q.value(atom)[0]);
    }
    Ok(min)
}

/// Builds one of the shipped static maps.
pub fn builtin_static(kind: StaticKind) -> Result<StaticExpectation> {
    match kind {
        StaticKind::Mean => Ok(StaticExpectation::new("mean", true, level_mean)),
        StaticKind::EssInf => Ok(StaticExpectation::new("essinf", false, level_min)),
        StaticKind::Mixture { alpha } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidInput(format!(
                    "mixture weight must lie in [0, 1], got {alpha}"
                )));
            }
            Ok(StaticExpectation::new(
                format!("mixture(alpha={alpha})"),
                alpha > 0.0,
                move |tree, q| {
                    Ok(alpha * level_mean(tree, q)? + (1.0 - alpha) * level_min(tree, q)?)
                },
            ))
        }
        StaticKind::Entropic { gamma } => {
            if !gamma.is_finite() || gamma <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "entropic parameter must be positive and finite, got {gamma}"
                )));
            }
            Ok(StaticExpectation::new(
                format!("entropic(gamma={gamma})"),
                true,
                move |tree, q| {
                    let mut sum = 0.0;
                    for atom in tree.atoms_at(q.first_time())? {
                        sum += tree.prob(atom) * (-gamma * q.value(atom)[0]).exp();
                    }
                    Ok(-sum.ln() / gamma)
                },
            ))
        }
    }
}

/// The variable `1_A y`: equal to `y` on the terminal atoms below `atom`,
/// zero elsewhere on the same level as `q`.
fn masked_constant(
    tree: &ScenarioTree,
    level_time: usize,
    atom: Atom,
    y: f64,
) -> Result<AdaptedProcess> {
    AdaptedProcess::from_fn(tree, level_time, 1, |term| {
        if tree.is_ancestor(atom, term) {
            vec![y]
        } else {
            vec![0.0]
        }
    })
}

/// The variable `1_A q`: `q` on the subtree below `atom`, zero elsewhere.
fn masked_variable(
    tree: &ScenarioTree,
    q: &AdaptedProcess,
    atom: Atom,
) -> Result<AdaptedProcess> {
    AdaptedProcess::from_fn(tree, q.first_time(), 1, |term| {
        if tree.is_ancestor(atom, term) {
            q.value(term).to_vec()
        } else {
            vec![0.0]
        }
    })
}

/// Solves `E(1_A q) = E(1_A y)` for the scalar `y` at one atom by monotone
/// bisection. The bracket starts at `bracket_hint` (default: the range of
/// `q` widened by one) and is expanded geometrically; exhaustion past width
/// 2^20 is a numeric failure, not evidence of inconsistency. Returns the
/// solved value and the achieved map value `E(1_A y*)`.
pub fn solve_atom_value(
    tree: &ScenarioTree,
    e: &StaticExpectation,
    atom: Atom,
    q: &AdaptedProcess,
    bracket_hint: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    let target = e.eval(tree, &masked_variable(tree, q, atom)?)?;
    let level_time = q.first_time();
    let g = |y: f64| -> Result<f64> {
        Ok(e.eval(tree, &masked_constant(tree, level_time, atom, y)?)? - target)
    };

    let (mut lo, mut hi) = match bracket_hint {
        Some((a, b)) if a < b => (a, b),
        Some(_) => {
            return Err(Error::InvalidInput(
                "bracket hint must be an increasing pair".into(),
            ))
        }
        None => {
            let values = tree
                .atoms_at(level_time)?
                .iter()
                .map(|&a| q.value(a)[0])
                .collect::<Vec<_>>();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (min - 1.0, max + 1.0)
        }
    };
    let mut g_lo = g(lo)?;
    let mut g_hi = g(hi)?;
    let mut width = hi - lo;
    while g_lo > 0.0 || g_hi < 0.0 {
        if width > MAX_BRACKET_WIDTH {
            return Err(Error::RootFindDivergence(format!(
                "no bracket for the atom equation at {} within width {:.1e}",
                tree.label(atom),
                width
            )));
        }
        width *= 2.0;
        if g_lo > 0.0 {
            lo -= width;
            g_lo = g(lo)?;
        }
        if g_hi < 0.0 {
            hi += width;
            g_hi = g(hi)?;
        }
    }
    for _ in 0..200 {
        if hi - lo <= SOLVE_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    let achieved = g(y)? + target;
    Ok((y, achieved))
}

/// Why no consistent dynamic family exists for the probed terminal
/// variable.
#[derive(Clone, Debug)]
pub enum Inconsistency {
    /// The per-atom equation has no solution: the masked map jumps over the
    /// target value.
    UnsolvableAtom {
        time: usize,
        path: String,
        /// `E(1_A Q)`, the value the bisection tried to hit.
        target: f64,
        /// Best achievable `E(1_A y)` at the bisection limit.
        nearest_value: f64,
        /// The `y` at which the bisection stalled.
        y_nearest: f64,
    },
    /// Every atom equation is solvable, but re-solving against the next
    /// level embedded as a terminal variable gives a different answer.
    TowerMismatch {
        time: usize,
        /// The level whose values were embedded and re-read.
        slice_time: usize,
        path: String,
        /// Value solved against the original terminal variable.
        y_from_terminal: f64,
        /// Value solved against the embedded next-level slice.
        y_from_slice: f64,
        /// `E(1_A Q)`.
        e_terminal: f64,
        /// `E(1_A embedded slice)`.
        e_slice: f64,
        /// `|y_from_slice - y_from_terminal|`.
        gap: f64,
    },
}

/// Outcome of [`extend_static`]: a full adapted family or a certificate
/// that none exists.
#[derive(Clone, Debug)]
pub enum ExtensionResult {
    /// The dynamic family `Y_t` for all `t`, with the terminal level equal
    /// to the input variable.
    Extended(AdaptedProcess),
    Inconsistent(Inconsistency),
}

impl ExtensionResult {
    pub fn is_extended(&self) -> bool {
        matches!(self, ExtensionResult::Extended(_))
    }

    pub fn family(&self) -> Option<&AdaptedProcess> {
        match self {
            ExtensionResult::Extended(f) => Some(f),
            ExtensionResult::Inconsistent(_) => None,
        }
    }

    pub fn certificate(&self) -> Option<&Inconsistency> {
        match self {
            ExtensionResult::Extended(_) => None,
            ExtensionResult::Inconsistent(c) => Some(c),
        }
    }
}

fn probe_triviality(tree: &ScenarioTree, e: &StaticExpectation, level_time: usize) -> Result<()> {
    for c in [-1.0, 0.0, 2.5] {
        let constant = AdaptedProcess::from_fn(tree, level_time, 1, |_| vec![c])?;
        let got = e.eval(tree, &constant)?;
        if (got - c).abs() > CONSISTENCY_TOL {
            return Err(Error::InvalidInput(format!(
                "static map '{}' fails the triviality probe: constant {} maps to {}",
                e.label(),
                c,
                got
            )));
        }
    }
    Ok(())
}

fn solve_level(
    tree: &ScenarioTree,
    e: &StaticExpectation,
    time: usize,
    q: &AdaptedProcess,
) -> Result<Vec<(f64, f64)>> {
    let atoms = tree.atoms_at(time)?;
    if atoms.len() >= PAR_THRESHOLD {
        atoms
            .par_iter()
            .map(|&atom| solve_atom_value(tree, e, atom, q, None))
            .collect()
    } else {
        atoms
            .iter()
            .map(|&atom| solve_atom_value(tree, e, atom, q, None))
            .collect()
    }
}

/// Constructs the dynamic family agreeing with a static map on a scalar
/// terminal variable, or certifies that none exists.
///
/// For each time from the terminal level down to zero and each atom, the
/// equation `E(1_A Q) = E(1_A y)` is solved by monotone bisection. A
/// residual above tolerance at a collapsed bracket certifies an unsolvable
/// atom. After each level, the values are validated against the previous
/// level re-read as a terminal variable; a mismatch certifies that the map
/// is not consistent across levels. Bracket exhaustion, by contrast, is a
/// numeric error, never a certificate.
pub fn extend_static(
    tree: &ScenarioTree,
    e: &StaticExpectation,
    q: &AdaptedProcess,
) -> Result<ExtensionResult> {
    if q.dim() != 1 {
        return Err(Error::DimensionMismatch(
            "static extension is defined for scalar variables".into(),
        ));
    }
    if q.first_time() != q.last_time() {
        return Err(Error::InvalidInput(
            "the input variable must live on a single level".into(),
        ));
    }
    let end = q.first_time();
    probe_triviality(tree, e, end)?;

    let mut family = AdaptedProcess::zeros(tree, 0, end, 1)?;
    for atom in tree.atoms_at(end)? {
        family.set(atom, q.value(atom).to_vec());
    }

    for t in (0..end).rev() {
        let atoms = tree.atoms_at(t)?;
        let solved = solve_level(tree, e, t, q)?;
        for (&atom, &(y, achieved)) in atoms.iter().zip(&solved) {
            let target = e.eval(tree, &masked_variable(tree, q, atom)?)?;
            if (achieved - target).abs() > CONSISTENCY_TOL {
                return Ok(ExtensionResult::Inconsistent(Inconsistency::UnsolvableAtom {
                    time: t,
                    path: tree.label(atom),
                    target,
                    nearest_value: achieved,
                    y_nearest: y,
                }));
            }
            family.set(atom, vec![y]);
        }

        // Cross-level validation: the next level, re-read as a terminal
        // variable, must reproduce the values just solved.
        let slice = family.slice_level(t + 1)?;
        let embedded = embed_forward(tree, &slice, end)?;
        for &atom in &atoms {
            let (y_slice, _) = solve_atom_value(tree, e, atom, &embedded, None)?;
            let y_terminal = family.value(atom)[0];
            if (y_slice - y_terminal).abs() > CONSISTENCY_TOL {
                let e_terminal = e.eval(tree, &masked_variable(tree, q, atom)?)?;
                let e_slice = e.eval(tree, &masked_variable(tree, &embedded, atom)?)?;
                return Ok(ExtensionResult::Inconsistent(Inconsistency::TowerMismatch {
                    time: t,
                    slice_time: t + 1,
                    path: tree.label(atom),
                    y_from_terminal: y_terminal,
                    y_from_slice: y_slice,
                    e_terminal,
                    e_slice,
                    gap: (y_slice - y_terminal).abs(),
                }));
            }
        }
    }
    Ok(ExtensionResult::Extended(family))
}

/// Wraps a static map as a dynamic operator family: every evaluation embeds
/// its input as a terminal variable, runs the extension, and reads the
/// requested level. Inconsistent maps surface as errors.
pub fn extension_operator(e: &StaticExpectation) -> NonlinearExpectation {
    let e = e.clone();
    let label = format!("extension({})", e.label());
    NonlinearExpectation::external(1, label, move |tree, q, t| {
        let terminal = if q.first_time() == tree.horizon() {
            q.clone()
        } else {
            embed_forward(tree, q, tree.horizon())?
        };
        match extend_static(tree, &e, &terminal)? {
            ExtensionResult::Extended(family) => family.slice_level(t),
            ExtensionResult::Inconsistent(c) => Err(Error::OracleInconsistent(format!(
                "static map '{}' admits no consistent dynamic extension: {:?}",
                e.label(),
                c
            ))),
        }
    })
}

/// One refutation of a declared monotonicity claim.
#[derive(Clone, Debug)]
pub struct StaticMonotonicityFinding {
    /// Indices into the probed family: the dominating and dominated
    /// variables.
    pub upper: usize,
    pub lower: usize,
    pub detail: String,
}

/// Probes the strict monotonicity hypothesis on a finite family: for every
/// ordered pair, the map values must be ordered, with equality only when
/// the variables agree everywhere.
pub fn probe_monotonicity(
    tree: &ScenarioTree,
    e: &StaticExpectation,
    family: &[AdaptedProcess],
) -> Result<Vec<StaticMonotonicityFinding>> {
    let mut findings = Vec::new();
    for a in 0..family.len() {
        for b in 0..family.len() {
            if a == b || family[a].first_time() != family[b].first_time() {
                continue;
            }
            let atoms = tree.atoms_at(family[a].first_time())?;
            let dominates = atoms
                .iter()
                .all(|&atom| family[a].value(atom)[0] >= family[b].value(atom)[0] - 1e-12);
            if !dominates {
                continue;
            }
            let ea = e.eval(tree, &family[a])?;
            let eb = e.eval(tree, &family[b])?;
            if ea < eb - 1e-12 {
                findings.push(StaticMonotonicityFinding {
                    upper: a,
                    lower: b,
                    detail: format!("ordered inputs map to {ea} < {eb}"),
                });
            } else if (ea - eb).abs() <= 1e-12 {
                let identical = atoms
                    .iter()
                    .all(|&atom| (family[a].value(atom)[0] - family[b].value(atom)[0]).abs() <= 1e-12);
                if !identical {
                    findings.push(StaticMonotonicityFinding {
                        upper: a,
                        lower: b,
                        detail: format!(
                            "distinct ordered inputs map to the same value {ea}"
                        ),
                    });
                }
            }
        }
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::Driver;
    use crate::nlexp::verify_axioms;
    use crate::solver::solve;

    fn coin_tree(horizon: usize) -> ScenarioTree {
        ScenarioTree::markov(2, horizon, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn biased_tree(horizon: usize) -> ScenarioTree {
        ScenarioTree::markov(2, horizon, 0, &[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap()
    }

    #[test]
    fn mean_extension_reproduces_conditional_expectations() {
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[0.0, -2.0, 4.0, -1.0]).unwrap();
        let e = builtin_static(StaticKind::Mean).unwrap();
        let result = extend_static(&tree, &e, &q).unwrap();
        let family = result.family().expect("mean map must extend");

        let atoms = tree.atoms_at(1).unwrap();
        assert!((family.value(atoms[0])[0] - (-1.0)).abs() <= 1e-9);
        assert!((family.value(atoms[1])[0] - 1.5).abs() <= 1e-9);
        assert!((family.value(tree.root())[0] - 0.25).abs() <= 1e-9);
    }

    #[test]
    fn essinf_extension_is_the_running_minimum_on_negative_variables() {
        let tree = coin_tree(2);
        let values = [-3.0, -1.0, -4.0, -2.0];
        let q = AdaptedProcess::terminal_scalar(&tree, &values).unwrap();
        let e = builtin_static(StaticKind::EssInf).unwrap();
        let result = extend_static(&tree, &e, &q).unwrap();
        let family = result.family().expect("essinf must extend on negatives");

        for t in 0..=2 {
            for atom in tree.atoms_at(t).unwrap() {
                let min = tree
                    .atoms_at(2)
                    .unwrap()
                    .iter()
                    .filter(|&&term| tree.is_ancestor(atom, term))
                    .map(|&term| q.value(term)[0])
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    (family.value(atom)[0] - min).abs() <= 1e-9,
                    "running minimum mismatch at {}",
                    tree.label(atom)
                );
            }
        }
    }

    #[test]
    fn mixture_map_produces_the_tower_mismatch_certificate() {
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[0.0, -2.0, 4.0, -1.0]).unwrap();
        let e = builtin_static(StaticKind::Mixture { alpha: 0.1 }).unwrap();

        // Independent hand computation: on the first time-1 atom the masked
        // variable is (0, -2, 0, 0), so the map value is
        // 0.1 * (-0.5) + 0.9 * (-2) = -1.85, and the masked constant solves
        // 0.95 y = -1.85. Similarly -0.825 and 0.95 y on the second atom,
        // and the full variable evaluates to 0.1 * 0.25 + 0.9 * (-2).
        let atoms = tree.atoms_at(1).unwrap();
        let (y0, _) = solve_atom_value(&tree, &e, atoms[0], &q, None).unwrap();
        let (y1, _) = solve_atom_value(&tree, &e, atoms[1], &q, None).unwrap();
        assert!((y0 - (-1.85 / 0.95)).abs() <= 1e-9);
        assert!((y1 - (-0.825 / 0.95)).abs() <= 1e-9);

        let result = extend_static(&tree, &e, &q).unwrap();
        let cert = result.certificate().expect("mixture map must fail");
        match cert {
            Inconsistency::TowerMismatch {
                time,
                slice_time,
                path,
                y_from_terminal,
                y_from_slice,
                e_terminal,
                e_slice,
                gap,
            } => {
                assert_eq!(*time, 0);
                assert_eq!(*slice_time, 1);
                assert_eq!(path, "(0)");
                assert!((y_from_terminal - (-1.775)).abs() <= 1e-9);
                assert!((e_terminal - (-1.775)).abs() <= 1e-9);
                // Slice value: 0.1 * mean(Y_1) + 0.9 * min(Y_1) with
                // Y_1 = (-1.85, -0.825) / 0.95.
                let y_1 = [-1.85 / 0.95, -0.825 / 0.95];
                let expected = 0.1 * (y_1[0] + y_1[1]) / 2.0 + 0.9 * y_1[0];
                assert!((y_from_slice - expected).abs() <= 1e-9);
                assert!((e_slice - expected).abs() <= 1e-9);
                assert!(*gap >= 0.05);
                assert!((gap - 0.1184210526).abs() <= 1e-9);
            }
            other => panic!("expected a tower mismatch, got {other:?}"),
        }
    }

    #[test]
    fn mixture_endpoints_match_mean_and_essinf() {
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let mean = builtin_static(StaticKind::Mean).unwrap();
        let essinf = builtin_static(StaticKind::EssInf).unwrap();
        let as_mean = builtin_static(StaticKind::Mixture { alpha: 1.0 }).unwrap();
        let as_inf = builtin_static(StaticKind::Mixture { alpha: 0.0 }).unwrap();
        assert_eq!(
            mean.eval(&tree, &q).unwrap(),
            as_mean.eval(&tree, &q).unwrap()
        );
        assert_eq!(
            essinf.eval(&tree, &q).unwrap(),
            as_inf.eval(&tree, &q).unwrap()
        );
        assert!(!as_inf.monotone_declared());
        assert!(as_mean.monotone_declared());
    }

    #[test]
    fn small_entropic_parameter_approximates_the_mean() {
        let tree = biased_tree(2);
        let e = builtin_static(StaticKind::Entropic { gamma: 1e-6 }).unwrap();
        let mean = builtin_static(StaticKind::Mean).unwrap();
        for values in [
            [0.0, -2.0, 4.0, -1.0],
            [1.0, 1.0, 1.0, 1.0],
            [-3.0, 2.0, 0.5, -0.25],
        ] {
            let q = AdaptedProcess::terminal_scalar(&tree, &values).unwrap();
            let a = e.eval(&tree, &q).unwrap();
            let b = mean.eval(&tree, &q).unwrap();
            assert!((a - b).abs() <= 1e-4, "entropic {a} vs mean {b}");
        }
    }

    #[test]
    fn entropic_map_extends_consistently() {
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[0.0, -2.0, 4.0, -1.0]).unwrap();
        let e = builtin_static(StaticKind::Entropic { gamma: 1.0 }).unwrap();
        let result = extend_static(&tree, &e, &q).unwrap();
        let family = result.family().expect("entropic map must extend");

        let expected_root = -(0.25 * (1.0 + (2.0_f64).exp() + (-4.0_f64).exp() + 1.0_f64.exp()))
            .ln();
        assert!((family.value(tree.root())[0] - expected_root).abs() <= 1e-9);

        let operator = extension_operator(&e);
        let q1 = AdaptedProcess::terminal_scalar(&tree, &[1.0, 0.5, 2.0, 0.0]).unwrap();
        let q2 = AdaptedProcess::terminal_scalar(&tree, &[0.0, -1.0, 1.5, -0.5]).unwrap();
        let report = verify_axioms(&tree, &operator, &[(q1, q2)]).unwrap();
        assert!(
            report.clean(),
            "entropic extension should satisfy the axioms, got {:?}",
            report.findings
        );
    }

    #[test]
    fn jump_map_is_certified_unsolvable_at_an_atom() {
        let tree = coin_tree(2);
        let e = StaticExpectation::new("mean plus spread step", false, |tree, q| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for atom in tree.atoms_at(q.first_time())? {
                min = min.min(q.value(atom)[0]);
                max = max.max(q.value(atom)[0]);
            }
            let step = if max - min > 1.0 { 0.25 } else { 0.0 };
            Ok(level_mean(tree, q)? + step)
        });
        let q = AdaptedProcess::terminal_scalar(&tree, &[1.6, 0.2, 0.0, 0.0]).unwrap();
        let result = extend_static(&tree, &e, &q).unwrap();
        match result.certificate() {
            Some(Inconsistency::UnsolvableAtom {
                time,
                path,
                target,
                nearest_value,
                ..
            }) => {
                assert_eq!(*time, 1);
                assert_eq!(path, "(0,0)");
                assert!((target - 0.7).abs() <= 1e-12);
                assert!((nearest_value - target).abs() > CONSISTENCY_TOL);
            }
            other => panic!("expected an unsolvable atom, got {other:?}"),
        }
    }

    #[test]
    fn triviality_probe_rejects_squared_mean() {
        let tree = coin_tree(1);
        let e = StaticExpectation::new("squared mean", false, |tree, q| {
            Ok(level_mean(tree, q)?.powi(2))
        });
        let q = AdaptedProcess::terminal_scalar(&tree, &[1.0, 2.0]).unwrap();
        let err = extend_static(&tree, &e, &q).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn monotonicity_probe_flags_essinf_and_clears_the_mixture() {
        let tree = coin_tree(1);
        let family = vec![
            AdaptedProcess::terminal_scalar(&tree, &[2.0, 0.0]).unwrap(),
            AdaptedProcess::terminal_scalar(&tree, &[1.0, 0.0]).unwrap(),
        ];
        let essinf = builtin_static(StaticKind::EssInf).unwrap();
        let findings = probe_monotonicity(&tree, &essinf, &family).unwrap();
        assert!(!findings.is_empty());

        let mixture = builtin_static(StaticKind::Mixture { alpha: 0.1 }).unwrap();
        let findings = probe_monotonicity(&tree, &mixture, &family).unwrap();
        assert!(findings.is_empty());
    }

    #[test]
    fn balanced_driver_expectation_survives_the_extension_round_trip() {
        let tree = biased_tree(3);
        let driver = Driver::worst_case_tilt(1, 0.35).unwrap();
        let q = AdaptedProcess::terminal_scalar(
            &tree,
            &[0.8, -1.2, 2.0, 0.1, -0.6, 1.4, -2.3, 0.9],
        )
        .unwrap();
        let solution = solve(&tree, &driver, &q).unwrap();

        let inner = driver.clone();
        let e = StaticExpectation::new("driver-backed at time zero", true, move |tree, q| {
            Ok(solve(tree, &inner, q)?.y_at(0)?.value(tree.root())[0])
        });
        let result = extend_static(&tree, &e, &q).unwrap();
        let family = result.family().expect("a balanced driver must extend");

        for t in 0..=3 {
            for atom in tree.atoms_at(t).unwrap() {
                assert!(
                    (family.value(atom)[0] - solution.y.value(atom)[0]).abs() <= 1e-8,
                    "extension disagrees with the solver at {}",
                    tree.label(atom)
                );
            }
        }
    }

    #[test]
    fn resolving_from_different_brackets_is_stable() {
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[0.0, -2.0, 4.0, -1.0]).unwrap();
        let e = builtin_static(StaticKind::Mixture { alpha: 0.1 }).unwrap();
        let atom = tree.atoms_at(1).unwrap()[0];
        let (a, _) = solve_atom_value(&tree, &e, atom, &q, None).unwrap();
        let (b, _) = solve_atom_value(&tree, &e, atom, &q, Some((-500.0, 250.0))).unwrap();
        let (c, _) = solve_atom_value(&tree, &e, atom, &q, Some((-2.1, -1.9))).unwrap();
        assert!((a - b).abs() <= 1e-9);
        assert!((a - c).abs() <= 1e-9);
    }
}
