//! Order comparison of two backward solutions.
//!
//! Given two problems (driver, terminal value) on the same tree, four
//! pointwise conditions decide whether the first solution dominates the
//! second at every atom and component:
//!
//! 1. terminal order: Q1 >= Q2,
//! 2. driver order gap: F1(Y2, Z2) >= F2(Y2, Z2),
//! 3. gains sensitivity margin: per component i,
//!    F1_i(Y2, Z1) - F1_i(Y2, Z2) >= min_j e_i (Z1 - Z2)(e_j - p)
//!    over supported states j,
//! 4. backward-map monotonicity: Y1 - F1(Y1, Z1) >= Y2 - F1(Y2, Z1)
//!    componentwise must force Y1 >= Y2.
//!
//! The alternate schedule swaps the evaluation points of conditions 3 and 4
//! (F1 at Y1 in 3, at Z2 in 4); either variant may be chosen per time. The
//! checker solves both equations, evaluates every condition at the realized
//! solutions, classifies margins against a boundary tolerance, and reports
//! whether the order conclusion actually holds. Equality atoms are analyzed
//! separately: where a component of Y1 touches Y2, strict domination forces
//! equality of the data on the whole subtree, and [`strictness_analysis`]
//! verifies exactly that.

use std::collections::BTreeMap;

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::representation::GainsMatrix;
use crate::solver::{solve, BsdeSolution};
use crate::tree::{AdaptedProcess, Atom, ScenarioTree};

/// Margins within this band around zero are classified as boundary: the
/// inequality holds but not strictly.
pub const MARGIN_TOL: f64 = 1e-10;
/// States whose gap lies within this band of the minimum are reported as
/// tied minimizers.
pub const TIE_TOL: f64 = 1e-12;
/// Tolerance for per-row increment equivalence of two gains matrices.
const ROW_EQUIV_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionMode {
    /// Condition 3 compares F1 at (Y2, Z1) vs (Y2, Z2); condition 4 uses Z1.
    Standard,
    /// Condition 3 compares F1 at (Y1, Z1) vs (Y1, Z2); condition 4 uses Z2.
    Alternate,
}

impl ConditionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionMode::Standard => "standard",
            ConditionMode::Alternate => "alternate",
        }
    }
}

/// Per-time choice of condition variant. Either variant is sufficient at
/// each time, and they may be mixed freely across times.
#[derive(Clone, Debug)]
pub struct ModeSchedule {
    default_mode: ConditionMode,
    overrides: BTreeMap<usize, ConditionMode>,
}

impl ModeSchedule {
    pub fn standard() -> Self {
        ModeSchedule {
            default_mode: ConditionMode::Standard,
            overrides: BTreeMap::new(),
        }
    }

    pub fn alternate() -> Self {
        ModeSchedule {
            default_mode: ConditionMode::Alternate,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_mode_at(mut self, time: usize, mode: ConditionMode) -> Self {
        self.overrides.insert(time, mode);
        self
    }

    pub fn mode_at(&self, time: usize) -> ConditionMode {
        self.overrides.get(&time).copied().unwrap_or(self.default_mode)
    }
}

impl Default for ModeSchedule {
    fn default() -> Self {
        ModeSchedule::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginClass {
    /// Strictly positive beyond the boundary tolerance.
    Strict,
    /// Within the boundary tolerance of zero.
    Boundary,
    /// Negative beyond the boundary tolerance: the condition fails.
    Negative,
}

impl MarginClass {
    pub fn of(margin: f64) -> MarginClass {
        if margin > MARGIN_TOL {
            MarginClass::Strict
        } else if margin >= -MARGIN_TOL {
            MarginClass::Boundary
        } else {
            MarginClass::Negative
        }
    }

    pub fn holds(&self) -> bool {
        !matches!(self, MarginClass::Negative)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MarginClass::Strict => "strict",
            MarginClass::Boundary => "boundary",
            MarginClass::Negative => "negative",
        }
    }
}

/// Verdict of the monotone-implication condition at realized values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImplicationVerdict {
    /// The hypothesis inequality fails, so the implication is vacuous here.
    HypothesisFailed,
    /// Hypothesis and conclusion both hold.
    Implied,
    /// The hypothesis holds but the conclusion fails: the condition is
    /// refuted at this atom.
    Violated,
}

impl ImplicationVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImplicationVerdict::HypothesisFailed => "hypothesis-failed",
            ImplicationVerdict::Implied => "implied",
            ImplicationVerdict::Violated => "violated",
        }
    }
}

/// Minimum over supported states of one row of (Z1 - Z2) applied to the
/// martingale differences, together with every state attaining it.
#[derive(Clone, Debug)]
pub struct MinGap {
    pub value: f64,
    /// Supported states within [`TIE_TOL`] of the minimum, ascending.
    pub argmin: Vec<usize>,
}

pub fn min_gap(
    tree: &ScenarioTree,
    atom: Atom,
    component: usize,
    z1: &GainsMatrix,
    z2: &GainsMatrix,
) -> Result<MinGap> {
    let support = tree.support(atom)?.to_vec();
    if support.is_empty() {
        return Err(Error::TerminalAtom {
            path: tree.label(atom),
            time: atom.time(),
        });
    }
    let mut gaps = Vec::with_capacity(support.len());
    for &j in &support {
        let inc1 = z1.increment(tree, atom, j)?;
        let inc2 = z2.increment(tree, atom, j)?;
        gaps.push((j, inc1[component] - inc2[component]));
    }
    let value = gaps.iter().map(|&(_, g)| g).fold(f64::INFINITY, f64::min);
    let argmin = gaps
        .iter()
        .filter(|&&(_, g)| g - value <= TIE_TOL)
        .map(|&(j, _)| j)
        .collect();
    Ok(MinGap { value, argmin })
}

/// One component of the per-atom condition table.
#[derive(Clone, Debug)]
pub struct ComponentCheck {
    pub component: usize,
    /// F1_i(Y2, Z2) - F2_i(Y2, Z2).
    pub order_gap: f64,
    pub order_gap_class: MarginClass,
    /// Left side of the sensitivity condition at this component.
    pub sensitivity_lhs: f64,
    pub min_gap: f64,
    pub min_gap_argmin: Vec<usize>,
    /// sensitivity_lhs - min_gap.
    pub sensitivity_margin: f64,
    pub sensitivity_class: MarginClass,
    /// Whether row i of Z1 and Z2 realize the same increments.
    pub row_equivalent: bool,
}

/// Condition table for one non-terminal atom.
#[derive(Clone, Debug)]
pub struct AtomCheck {
    pub time: usize,
    pub path: String,
    pub mode: ConditionMode,
    pub components: Vec<ComponentCheck>,
    pub monotonicity_verdict: ImplicationVerdict,
    /// min_i of hypothesis left minus right side.
    pub hypothesis_margin: f64,
    /// Strict-increase grid probe of y - F1(y, Z) for scalar problems.
    pub scalar_monotone_probe: Option<bool>,
}

/// Terminal order gap at one atom and component.
#[derive(Clone, Debug)]
pub struct TerminalGap {
    pub path: String,
    pub component: usize,
    pub gap: f64,
    pub class: MarginClass,
}

#[derive(Clone, Debug)]
pub struct ConclusionViolation {
    pub time: usize,
    pub path: String,
    pub component: usize,
    pub difference: f64,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// Terminal condition gaps, atom-lexicographic then by component.
    pub terminal_gaps: Vec<TerminalGap>,
    /// Non-terminal checks, time ascending then atom-lexicographic.
    pub atom_checks: Vec<AtomCheck>,
    pub terminal_order_holds: bool,
    pub driver_order_holds: bool,
    pub sensitivity_holds: bool,
    pub monotonicity_holds: bool,
    /// Y1 - Y2 at the root.
    pub root_difference: Vec<f64>,
    /// Smallest Y1 - Y2 over all atoms, components and times.
    pub conclusion_min: f64,
    pub conclusion_violations: Vec<ConclusionViolation>,
}

impl ComparisonReport {
    pub fn conditions_hold(&self) -> bool {
        self.terminal_order_holds
            && self.driver_order_holds
            && self.sensitivity_holds
            && self.monotonicity_holds
    }

    pub fn conclusion_holds(&self) -> bool {
        self.conclusion_violations.is_empty()
    }
}

/// Everything check_conditions computes, including both solutions for
/// follow-up analysis.
#[derive(Clone, Debug)]
pub struct ComparisonOutcome {
    pub report: ComparisonReport,
    pub solution1: BsdeSolution,
    pub solution2: BsdeSolution,
}

fn row_equivalent(
    tree: &ScenarioTree,
    atom: Atom,
    component: usize,
    z1: &GainsMatrix,
    z2: &GainsMatrix,
) -> Result<bool> {
    for &j in tree.support(atom)? {
        let inc1 = z1.increment(tree, atom, j)?;
        let inc2 = z2.increment(tree, atom, j)?;
        if (inc1[component] - inc2[component]).abs() > ROW_EQUIV_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Grid points for the scalar monotonicity probe, spanning the realized
/// values with margin.
fn probe_grid(y1: f64, y2: f64) -> Vec<f64> {
    let lo = y1.min(y2).min(-1.0) - 1.0;
    let hi = y1.max(y2).max(1.0) + 1.0;
    (0..21).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect()
}

/// Solves both problems and evaluates all four conditions at the realized
/// solutions. Terminal conditions must live on the same level.
pub fn check_conditions(
    tree: &ScenarioTree,
    driver1: &Driver,
    driver2: &Driver,
    q1: &AdaptedProcess,
    q2: &AdaptedProcess,
    modes: &ModeSchedule,
) -> Result<ComparisonOutcome> {
    if q1.first_time() != q2.first_time() || q1.last_time() != q2.last_time() {
        return Err(Error::InvalidInput(
            "terminal conditions must live on the same level".into(),
        ));
    }
    if driver1.dim() != driver2.dim() {
        return Err(Error::DimensionMismatch(
            "drivers must share a dimension".into(),
        ));
    }
    let dim = driver1.dim();
    let end = q1.first_time();

    let solution1 = solve(tree, driver1, q1)?;
    let solution2 = solve(tree, driver2, q2)?;

    let mut terminal_gaps = Vec::new();
    for atom in tree.atoms_at(end)? {
        let v1 = q1.value(atom);
        let v2 = q2.value(atom);
        for i in 0..dim {
            let gap = v1[i] - v2[i];
            terminal_gaps.push(TerminalGap {
                path: tree.label(atom),
                component: i,
                gap,
                class: MarginClass::of(gap),
            });
        }
    }

    let mut atom_checks = Vec::new();
    for t in 0..end {
        let mode = modes.mode_at(t);
        for atom in tree.atoms_at(t)? {
            let y1 = solution1.y.value(atom).to_vec();
            let y2 = solution2.y.value(atom).to_vec();
            let z1 = solution1.z.at(atom);
            let z2 = solution2.z.at(atom);

            let f1_y2z2 = driver1.eval(tree, atom, &y2, z2)?;
            let f2_y2z2 = driver2.eval(tree, atom, &y2, z2)?;
            let (lhs_hi, lhs_lo) = match mode {
                ConditionMode::Standard => {
                    let a = driver1.eval(tree, atom, &y2, z1)?;
                    (a, f1_y2z2.clone())
                }
                ConditionMode::Alternate => {
                    let a = driver1.eval(tree, atom, &y1, z1)?;
                    let b = driver1.eval(tree, atom, &y1, z2)?;
                    (a, b)
                }
            };

            let mut components = Vec::with_capacity(dim);
            for i in 0..dim {
                let gap = min_gap(tree, atom, i, z1, z2)?;
                let lhs = lhs_hi[i] - lhs_lo[i];
                let margin = lhs - gap.value;
                let order_gap = f1_y2z2[i] - f2_y2z2[i];
                components.push(ComponentCheck {
                    component: i,
                    order_gap,
                    order_gap_class: MarginClass::of(order_gap),
                    sensitivity_lhs: lhs,
                    min_gap: gap.value,
                    min_gap_argmin: gap.argmin,
                    sensitivity_margin: margin,
                    sensitivity_class: MarginClass::of(margin),
                    row_equivalent: row_equivalent(tree, atom, i, z1, z2)?,
                });
            }

            // Monotone implication at the realized values: the hypothesis
            // compares the backward maps at Y1 and Y2 through F1 with the
            // mode's gains matrix.
            let z_hyp = match mode {
                ConditionMode::Standard => z1,
                ConditionMode::Alternate => z2,
            };
            let f1_y1 = driver1.eval(tree, atom, &y1, z_hyp)?;
            let f1_y2 = driver1.eval(tree, atom, &y2, z_hyp)?;
            let hypothesis_margin = (0..dim)
                .map(|i| (y1[i] - f1_y1[i]) - (y2[i] - f1_y2[i]))
                .fold(f64::INFINITY, f64::min);
            let conclusion_margin = (0..dim)
                .map(|i| y1[i] - y2[i])
                .fold(f64::INFINITY, f64::min);
            let monotonicity_verdict = if hypothesis_margin < -MARGIN_TOL {
                ImplicationVerdict::HypothesisFailed
            } else if conclusion_margin >= -MARGIN_TOL {
                ImplicationVerdict::Implied
            } else {
                ImplicationVerdict::Violated
            };

            let scalar_monotone_probe = if dim == 1 {
                let mut increasing = true;
                let mut prev: Option<f64> = None;
                for yv in probe_grid(y1[0], y2[0]) {
                    let f = driver1.eval(tree, atom, &[yv], z_hyp)?;
                    let m = yv - f[0];
                    if let Some(p) = prev {
                        if m - p <= 1e-12 * (1.0 + m.abs()) {
                            increasing = false;
                            break;
                        }
                    }
                    prev = Some(m);
                }
                Some(increasing)
            } else {
                None
            };

            atom_checks.push(AtomCheck {
                time: t,
                path: tree.label(atom),
                mode,
                components,
                monotonicity_verdict,
                hypothesis_margin,
                scalar_monotone_probe,
            });
        }
    }

    let terminal_order_holds = terminal_gaps.iter().all(|g| g.class.holds());
    let driver_order_holds = atom_checks
        .iter()
        .flat_map(|a| &a.components)
        .all(|c| c.order_gap_class.holds());
    let sensitivity_holds = atom_checks
        .iter()
        .flat_map(|a| &a.components)
        .all(|c| c.sensitivity_class.holds());
    let monotonicity_holds = atom_checks.iter().all(|a| {
        a.monotonicity_verdict != ImplicationVerdict::Violated
            && a.scalar_monotone_probe.unwrap_or(true)
    });

    let mut conclusion_violations = Vec::new();
    let mut conclusion_min = f64::INFINITY;
    for t in 0..=end {
        for atom in tree.atoms_at(t)? {
            let v1 = solution1.y.value(atom);
            let v2 = solution2.y.value(atom);
            for i in 0..dim {
                let d = v1[i] - v2[i];
                conclusion_min = conclusion_min.min(d);
                if d < -MARGIN_TOL {
                    conclusion_violations.push(ConclusionViolation {
                        time: t,
                        path: tree.label(atom),
                        component: i,
                        difference: d,
                    });
                }
            }
        }
    }

    let root_difference = solution1
        .y
        .value(tree.root())
        .iter()
        .zip(solution2.y.value(tree.root()))
        .map(|(a, b)| a - b)
        .collect();

    Ok(ComparisonOutcome {
        report: ComparisonReport {
            terminal_gaps,
            atom_checks,
            terminal_order_holds,
            driver_order_holds,
            sensitivity_holds,
            monotonicity_holds,
            root_difference,
            conclusion_min,
            conclusion_violations,
        },
        solution1,
        solution2,
    })
}

/// One atom where a solution component touches the other solution, with the
/// verification that equality propagates through its whole subtree.
#[derive(Clone, Debug)]
pub struct EqualityFinding {
    pub time: usize,
    pub path: String,
    pub component: usize,
    pub propagation_ok: bool,
    /// Human-readable descriptions of any propagation violations.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct StrictnessReport {
    pub equalities: Vec<EqualityFinding>,
}

impl StrictnessReport {
    pub fn all_propagate(&self) -> bool {
        self.equalities.iter().all(|e| e.propagation_ok)
    }
}

/// Where a component of Y1 equals Y2 (within tolerance) at some atom, strict
/// domination requires that on every atom of its subtree the same component
/// of the two solutions, their terminal data, the evaluated drivers and the
/// gains rows all agree. Verifies that propagation and reports violations.
pub fn strictness_analysis(
    tree: &ScenarioTree,
    driver1: &Driver,
    driver2: &Driver,
    outcome: &ComparisonOutcome,
) -> Result<StrictnessReport> {
    let sol1 = &outcome.solution1;
    let sol2 = &outcome.solution2;
    let dim = sol1.y.dim();
    let end = sol1.y.last_time();
    let mut report = StrictnessReport::default();

    for t in 0..=end {
        for atom in tree.atoms_at(t)? {
            let y1 = sol1.y.value(atom);
            let y2 = sol2.y.value(atom);
            for i in 0..dim {
                if (y1[i] - y2[i]).abs() > MARGIN_TOL {
                    continue;
                }
                let mut failures = Vec::new();
                for s in t..=end {
                    for desc in tree.atoms_at(s)? {
                        if !tree.is_ancestor(atom, desc) {
                            continue;
                        }
                        let w1 = sol1.y.value(desc);
                        let w2 = sol2.y.value(desc);
                        if (w1[i] - w2[i]).abs() > MARGIN_TOL {
                            failures.push(format!(
                                "solutions differ by {:.3e} at {} (component {i})",
                                w1[i] - w2[i],
                                tree.label(desc)
                            ));
                        }
                        if s == end {
                            continue;
                        }
                        let z1 = sol1.z.at(desc);
                        let z2 = sol2.z.at(desc);
                        let f1 = driver1.eval(tree, desc, w2, z2)?;
                        let f2 = driver2.eval(tree, desc, w2, z2)?;
                        if (f1[i] - f2[i]).abs() > MARGIN_TOL {
                            failures.push(format!(
                                "drivers differ by {:.3e} at {} (component {i})",
                                f1[i] - f2[i],
                                tree.label(desc)
                            ));
                        }
                        if !row_equivalent(tree, desc, i, z1, z2)? {
                            failures.push(format!(
                                "gains rows inequivalent at {} (component {i})",
                                tree.label(desc)
                            ));
                        }
                    }
                }
                report.equalities.push(EqualityFinding {
                    time: t,
                    path: tree.label(atom),
                    component: i,
                    propagation_ok: failures.is_empty(),
                    failures,
                });
            }
        }
    }
    Ok(report)
}

/// Root-level response of the solution difference to a terminal-mean shift
/// under an affine driver F = f + B y: solves (I - B) dY = dE. The response
/// is highly sign-sensitive in B: with B = [[-2,0],[0,-2]] and dE = (1,1)
/// the difference is (1/3, 1/3), while B = [[2,0],[0,2]] reverses every
/// component to (-1,-1).
pub fn linear_delta_analysis(b: &[Vec<f64>], delta_e: &[f64]) -> Result<Vec<f64>> {
    let k = delta_e.len();
    if b.len() != k || b.iter().any(|row| row.len() != k) {
        return Err(Error::DimensionMismatch(
            "matrix and shift vector sizes differ".into(),
        ));
    }
    let mut m = nalgebra::DMatrix::<f64>::identity(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] -= b[i][j];
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(delta_e);
    m.lu()
        .solve(&rhs)
        .map(|sol| sol.iter().copied().collect())
        .ok_or_else(|| {
            Error::RootFindDivergence("identity minus matrix is singular".into())
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::represent;

    fn coin_tree(horizon: usize) -> ScenarioTree {
        ScenarioTree::markov(2, horizon, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn min_gap_of_opposed_row_is_minus_one() {
        // K = 1, p = (0.5, 0.5), Z1 - Z2 realizing increments (1, -1):
        // the minimum over j is -1, attained at state 1.
        let tree = coin_tree(1);
        let root = tree.root();
        let z1 = represent(&tree, root, &[vec![1.0], vec![-1.0]]).unwrap();
        let z2 = GainsMatrix::zeros(1, 2);
        let gap = min_gap(&tree, root, 0, &z1, &z2).unwrap();
        assert!((gap.value + 1.0).abs() <= 1e-12);
        assert_eq!(gap.argmin, vec![1]);
    }

    #[test]
    fn min_gap_of_equal_matrices_is_zero_with_all_states_tied() {
        let tree = coin_tree(1);
        let root = tree.root();
        let z = represent(&tree, root, &[vec![2.0], vec![-2.0]]).unwrap();
        let gap = min_gap(&tree, root, 0, &z, &z).unwrap();
        assert_eq!(gap.value, 0.0);
        assert_eq!(gap.argmin, vec![0, 1]);
    }

    #[test]
    fn min_gap_on_deterministic_step_is_zero() {
        let tree = ScenarioTree::markov(2, 1, 0, &[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let root = tree.root();
        let mut z1 = GainsMatrix::zeros(1, 2);
        z1.set(0, 0, 7.0);
        let z2 = GainsMatrix::zeros(1, 2);
        let gap = min_gap(&tree, root, 0, &z1, &z2).unwrap();
        assert!(gap.value.abs() <= 1e-12);
        assert_eq!(gap.argmin, vec![0]);
    }

    #[test]
    fn min_gap_rejects_terminal_atoms() {
        let tree = coin_tree(1);
        let terminal = tree.atoms_at(1).unwrap()[0];
        let z = GainsMatrix::zeros(1, 2);
        let err = min_gap(&tree, terminal, 0, &z, &z).unwrap_err();
        assert!(matches!(err, Error::TerminalAtom { .. }));
    }

    #[test]
    fn min_gap_negates_under_swap_with_max() {
        let tree = coin_tree(1);
        let root = tree.root();
        let z1 = represent(&tree, root, &[vec![1.5], vec![-1.5]]).unwrap();
        let z2 = represent(&tree, root, &[vec![-0.5], vec![0.5]]).unwrap();
        let forward = min_gap(&tree, root, 0, &z1, &z2).unwrap();
        // max_j of the swapped difference equals -min_j of the original.
        let mut max_back = f64::NEG_INFINITY;
        for &j in tree.support(root).unwrap() {
            let d = z2.increment(&tree, root, j).unwrap()[0]
                - z1.increment(&tree, root, j).unwrap()[0];
            max_back = max_back.max(d);
        }
        assert!((forward.value + max_back).abs() <= 1e-12);
    }

    #[test]
    fn identical_problems_compare_as_equality() {
        let tree = coin_tree(2);
        let driver = Driver::worst_case_tilt(1, 0.3).unwrap();
        let q = AdaptedProcess::terminal_scalar(&tree, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let outcome =
            check_conditions(&tree, &driver, &driver, &q, &q, &ModeSchedule::standard())
                .unwrap();
        let report = &outcome.report;
        assert!(report.conditions_hold());
        assert!(report.conclusion_holds());
        for check in &report.atom_checks {
            for c in &check.components {
                assert_eq!(c.order_gap, 0.0);
                assert!(c.sensitivity_margin.abs() <= MARGIN_TOL);
                assert!(c.row_equivalent);
            }
        }
        assert!(report.conclusion_min.abs() <= MARGIN_TOL);
    }

    #[test]
    fn zero_drivers_with_ordered_terminals_dominate_everywhere() {
        let tree = coin_tree(2);
        let driver = Driver::zero(1);
        let q2 = AdaptedProcess::terminal_scalar(&tree, &[0.0, -1.0, 2.0, 0.5]).unwrap();
        let q1 = AdaptedProcess::terminal_scalar(&tree, &[0.5, -1.0, 2.25, 1.5]).unwrap();
        let outcome =
            check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())
                .unwrap();
        assert!(outcome.report.conditions_hold());
        assert!(outcome.report.conclusion_holds());
        assert!(outcome.report.root_difference[0] > 0.0);
    }

    #[test]
    fn vector_affine_coupling_defeats_the_order_conclusion() {
        // K = 2, T = 1, F1 = F2 = B y with B = [[0, -1], [0, 0]] and
        // E[Q1 - Q2] = (0, 5). The root difference solves
        // (I - B) d = (0, 5), giving (-5, 5): component 0 drops below zero
        // even though terminal order and both gap conditions hold. The
        // monotone-implication condition is the one that breaks.
        let tree = coin_tree(1);
        let b = vec![vec![0.0, -1.0], vec![0.0, 0.0]];
        let driver = Driver::linear(2, b.clone(), vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let q2 = AdaptedProcess::terminal_from_lex(
            &tree,
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let q1 = AdaptedProcess::terminal_from_lex(
            &tree,
            vec![vec![0.0, 5.0], vec![0.0, 5.0]],
        )
        .unwrap();
        let outcome =
            check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())
                .unwrap();
        let report = &outcome.report;
        assert!((report.root_difference[0] + 5.0).abs() <= 1e-10);
        assert!((report.root_difference[1] - 5.0).abs() <= 1e-10);
        assert!(report.terminal_order_holds);
        assert!(report.driver_order_holds);
        assert!(report.sensitivity_holds);
        assert!(!report.monotonicity_holds);
        assert!(report
            .atom_checks
            .iter()
            .any(|a| a.monotonicity_verdict == ImplicationVerdict::Violated));
        assert!(!report.conclusion_holds());

        let delta = linear_delta_analysis(&b, &[0.0, 5.0]).unwrap();
        assert!((delta[0] + 5.0).abs() <= 1e-12);
        assert!((delta[1] - 5.0).abs() <= 1e-12);
    }

    #[test]
    fn scalar_sensitivity_failure_reverses_the_order() {
        // Identical terminal data, two steps. The first driver reacts to the
        // state-0 increment with weight -2, pushing its sensitivity margin
        // below the minimum gap at the root; the order conclusion flips.
        let tree = coin_tree(2);
        let q = AdaptedProcess::terminal_scalar(&tree, &[-1.0, 1.0, 0.0, 0.0]).unwrap();
        let driver1 = Driver::linear(1, vec![vec![0.0]], vec![-2.0, 0.0], vec![0.0]).unwrap();
        let driver2 = Driver::zero(1);
        let outcome =
            check_conditions(&tree, &driver1, &driver2, &q, &q, &ModeSchedule::standard())
                .unwrap();
        let report = &outcome.report;

        assert!((outcome.solution1.y.value(tree.root())[0] + 1.0).abs() <= 1e-12);
        assert!(outcome.solution2.y.value(tree.root())[0].abs() <= 1e-12);

        assert!(report.terminal_order_holds);
        assert!(report.driver_order_holds);
        assert!(report.monotonicity_holds);
        assert!(!report.sensitivity_holds);
        let root_check = report
            .atom_checks
            .iter()
            .find(|a| a.time == 0)
            .unwrap();
        let c = &root_check.components[0];
        assert!((c.sensitivity_lhs + 2.0).abs() <= 1e-10);
        assert!((c.min_gap + 1.0).abs() <= 1e-10);
        assert!((c.sensitivity_margin + 1.0).abs() <= 1e-10);
        assert_eq!(c.sensitivity_class, MarginClass::Negative);
        assert!(!report.conclusion_holds());
        assert!(report.root_difference[0] < 0.0);
    }

    #[test]
    fn alternate_mode_inspects_first_solution_values() {
        // With a y-independent scalar driver the two modes agree on every
        // margin, which pins down the argument swap without new oracles.
        let tree = coin_tree(2);
        let q1 = AdaptedProcess::terminal_scalar(&tree, &[2.0, 1.0, 0.5, 0.0]).unwrap();
        let q2 = AdaptedProcess::terminal_scalar(&tree, &[1.0, 0.0, 0.5, -1.0]).unwrap();
        let driver = Driver::worst_case_tilt(1, 0.5).unwrap();
        let standard =
            check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())
                .unwrap();
        let alternate = check_conditions(
            &tree,
            &driver,
            &driver,
            &q1,
            &q2,
            &ModeSchedule::alternate().with_mode_at(1, ConditionMode::Standard),
        )
        .unwrap();
        for (a, b) in standard
            .report
            .atom_checks
            .iter()
            .zip(&alternate.report.atom_checks)
        {
            for (ca, cb) in a.components.iter().zip(&b.components) {
                assert!((ca.sensitivity_margin - cb.sensitivity_margin).abs() <= 1e-12);
            }
        }
        assert_eq!(alternate.report.atom_checks[0].mode, ConditionMode::Alternate);
        assert_eq!(
            alternate
                .report
                .atom_checks
                .iter()
                .find(|a| a.time == 1)
                .unwrap()
                .mode,
            ConditionMode::Standard
        );
        assert!(alternate.report.conclusion_holds());
    }

    #[test]
    fn equality_on_one_subtree_propagates_through_it() {
        // Terminal data agree exactly on the subtree of path (0,0) and
        // differ off it; with zero drivers the equality atoms are exactly
        // that subtree and every propagation check passes.
        let tree = coin_tree(2);
        let driver = Driver::zero(1);
        let q2 = AdaptedProcess::terminal_scalar(&tree, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let q1 = AdaptedProcess::terminal_scalar(&tree, &[1.0, 2.0, 4.0, 5.0]).unwrap();
        let outcome =
            check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())
                .unwrap();
        let strict = strictness_analysis(&tree, &driver, &driver, &outcome).unwrap();
        assert!(strict.all_propagate());
        let paths: Vec<&str> = strict.equalities.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["(0,0)", "(0,0,0)", "(0,0,1)"]);
    }

    #[test]
    fn shifted_terminal_produces_no_equality_atoms() {
        let tree = coin_tree(2);
        let driver = Driver::zero(1);
        let q2 = AdaptedProcess::terminal_scalar(&tree, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let q1 = AdaptedProcess::terminal_scalar(&tree, &[2.0, 3.0, 4.0, 5.0]).unwrap();
        let outcome =
            check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())
                .unwrap();
        let strict = strictness_analysis(&tree, &driver, &driver, &outcome).unwrap();
        assert!(strict.equalities.is_empty());
    }

    #[test]
    fn diagonal_response_matches_direct_inversion() {
        let delta = linear_delta_analysis(
            &[vec![-2.0, 0.0], vec![0.0, -2.0]],
            &[1.0, 1.0],
        )
        .unwrap();
        assert!((delta[0] - 1.0 / 3.0).abs() <= 1e-12);
        assert!((delta[1] - 1.0 / 3.0).abs() <= 1e-12);

        let flipped =
            linear_delta_analysis(&[vec![2.0, 0.0], vec![0.0, 2.0]], &[1.0, 1.0]).unwrap();
        assert!((flipped[0] + 1.0).abs() <= 1e-12);
        assert!((flipped[1] + 1.0).abs() <= 1e-12);

        let singular = linear_delta_analysis(&[vec![1.0]], &[1.0]).unwrap_err();
        assert!(matches!(singular, Error::RootFindDivergence(_)));
    }
}
