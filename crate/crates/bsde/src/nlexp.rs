//! Dynamic nonlinear expectations and risk measures on scenario trees.
//!
//! A nonlinear expectation is a family of operators `E(. | F_t)` mapping a
//! variable known at one level of the tree to an adapted value at an earlier
//! level, subject to four axioms: monotonicity (with a strictness clause),
//! triviality on already-measurable inputs, the tower property across times,
//! and locality under multiplication by event indicators. Negating such an
//! operator yields a dynamic risk measure.
//!
//! The bridge to the rest of this crate runs in both directions. A driver
//! that is independent of `y`, normalized at `Z = 0`, and balanced (its
//! `Z`-sensitivity dominates the worst supported noise gap) induces a
//! nonlinear expectation through the backward solver; conversely, evaluating
//! an expectation at the one-step variable `Z (e_j - p)` recovers the driver.
//! [`expectation_from_driver`] and [`driver_from_expectation`] implement the
//! two directions, [`verify_axioms`] probes the axioms on finite families,
//! and [`check_balanced`] certifies the balance conditions pairwise over a
//! caller-supplied family of terminal variables.

use std::fmt;
use std::sync::Arc;

use crate::comparison::{check_conditions, ImplicationVerdict, MarginClass, ModeSchedule};
use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::representation::GainsMatrix;
use crate::solver::solve;
use crate::tree::{embed_forward, mask_to_subtree, AdaptedProcess, Atom, ScenarioTree};

/// Numeric tolerance for axiom checks that go through the backward solver.
const AXIOM_TOL: f64 = 1e-8;
/// Tolerance for deciding that two evaluations coincide (strictness clause)
/// and for probing declared driver flags.
const FLAG_PROBE_TOL: f64 = 1e-10;

type EvalMap = dyn Fn(&ScenarioTree, &AdaptedProcess, usize) -> Result<AdaptedProcess> + Send + Sync;

/// A family of conditional evaluation operators `E(. | F_t)`.
///
/// Instances are either driver-backed (the operator is the `Y`-part of the
/// backward solution under a stored driver) or external (an arbitrary
/// user-supplied operator family, typically destined for [`verify_axioms`]).
/// Driver-backed instances can only be built through
/// [`expectation_from_driver`], which probes the driver's declared flags and
/// balance conditions first.
#[derive(Clone)]
pub struct NonlinearExpectation {
    label: String,
    dim: usize,
    driver: Option<Driver>,
    eval: Arc<EvalMap>,
}

impl fmt::Debug for NonlinearExpectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearExpectation")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("driver_backed", &self.driver.is_some())
            .finish()
    }
}

impl NonlinearExpectation {
    /// Wraps an externally defined operator family. The closure receives a
    /// single-level variable and a target time and must return the value
    /// process at that time.
    pub fn external(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&ScenarioTree, &AdaptedProcess, usize) -> Result<AdaptedProcess>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        NonlinearExpectation {
            label: label.into(),
            dim,
            driver: None,
            eval: Arc::new(eval),
        }
    }

    pub(crate) fn from_driver_unchecked(driver: Driver) -> Self {
        let dim = driver.dim();
        let label = format!("driver-backed({})", driver.label());
        let backing = driver.clone();
        NonlinearExpectation {
            label,
            dim,
            driver: Some(driver),
            eval: Arc::new(move |tree, q, t| solve(tree, &backing, q)?.y_at(t)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_driver_backed(&self) -> bool {
        self.driver.is_some()
    }

    /// The backing driver, when the operator was built from one.
    pub fn driver(&self) -> Option<&Driver> {
        self.driver.as_ref()
    }

    /// Evaluates `E(q | F_time)`. The input must live on a single level at
    /// or after `time`; the result lives on the level at `time`.
    pub fn evaluate(
        &self,
        tree: &ScenarioTree,
        q: &AdaptedProcess,
        time: usize,
    ) -> Result<AdaptedProcess> {
        if q.first_time() != q.last_time() {
            return Err(Error::InvalidInput(
                "evaluate expects a single-level input variable".into(),
            ));
        }
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator '{}' has dimension {}, input has dimension {}",
                self.label,
                self.dim,
                q.dim()
            )));
        }
        if time > q.first_time() {
            return Err(Error::TimeOutOfRange {
                time,
                horizon: q.first_time(),
            });
        }
        let out = (self.eval)(tree, q, time)?;
        if out.first_time() != time || out.last_time() != time || out.dim() != self.dim {
            return Err(Error::OracleInconsistent(format!(
                "operator '{}' returned levels {}..{} of dimension {}, expected level {} of dimension {}",
                self.label,
                out.first_time(),
                out.last_time(),
                out.dim(),
                time,
                self.dim
            )));
        }
        Ok(out)
    }
}

/// One pairwise sensitivity check from [`check_balanced`]: the strict margin
/// of the noise-gap condition at one atom and component, for one ordered
/// pair of terminal variables.
#[derive(Clone, Debug)]
pub struct BalancedCheck {
    /// Indices into the probed family: (acting as solution 1, as solution 2).
    pub pair: (usize, usize),
    pub time: usize,
    pub path: String,
    pub component: usize,
    /// F_i(Y2, Z1) - F_i(Y2, Z2) - min supported noise gap.
    pub sensitivity_margin: f64,
    pub class: MarginClass,
    /// Whether the two gains rows realize identical increments.
    pub row_equivalent: bool,
    /// Strict margin, or a boundary margin excused by row equivalence.
    pub strictness_ok: bool,
}

/// A monotonicity-side failure from [`check_balanced`]: either the
/// order-implication is violated at the realized solutions or the scalar
/// grid probe found a flat or decreasing stretch.
#[derive(Clone, Debug)]
pub struct BalanceMonotonicityFailure {
    pub pair: (usize, usize),
    pub time: usize,
    pub path: String,
    pub verdict: ImplicationVerdict,
    pub scalar_probe_ok: Option<bool>,
}

/// Pairwise balance certification over a finite family of terminal
/// variables. Balance is never certified universally: a clean report says
/// only that no probed pair refutes the conditions.
#[derive(Clone, Debug)]
pub struct BalancedReport {
    pub checks: Vec<BalancedCheck>,
    pub monotonicity_failures: Vec<BalanceMonotonicityFailure>,
}

impl BalancedReport {
    pub fn is_balanced(&self) -> bool {
        self.checks.iter().all(|c| c.strictness_ok) && self.monotonicity_failures.is_empty()
    }

    /// Human-readable description of the first failing check, if any.
    pub fn first_violation(&self) -> Option<String> {
        if let Some(c) = self.checks.iter().find(|c| !c.strictness_ok) {
            return Some(format!(
                "pair ({}, {}) at atom {} time {} component {}: sensitivity margin {:.3e} is {} and rows are {}equivalent",
                c.pair.0,
                c.pair.1,
                c.path,
                c.time,
                c.component,
                c.sensitivity_margin,
                c.class.as_str(),
                if c.row_equivalent { "" } else { "not " }
            ));
        }
        self.monotonicity_failures.first().map(|m| {
            format!(
                "pair ({}, {}) at atom {} time {}: order implication {} (scalar probe ok: {:?})",
                m.pair.0,
                m.pair.1,
                m.path,
                m.time,
                m.verdict.as_str(),
                m.scalar_probe_ok
            )
        })
    }
}

/// Certifies the balance conditions for one driver pairwise over a family
/// of terminal variables: for every ordered pair the two backward solutions
/// are compared, the per-component sensitivity margin must be strictly
/// positive unless the gains rows are equivalent, and the order implication
/// (with its scalar grid probe) must not be violated.
pub fn check_balanced(
    tree: &ScenarioTree,
    driver: &Driver,
    q_family: &[AdaptedProcess],
) -> Result<BalancedReport> {
    let mut checks = Vec::new();
    let mut monotonicity_failures = Vec::new();
    let schedule = ModeSchedule::standard();
    for a in 0..q_family.len() {
        for b in 0..q_family.len() {
            if a == b {
                continue;
            }
            let outcome =
                check_conditions(tree, driver, driver, &q_family[a], &q_family[b], &schedule)?;
            for atom_check in &outcome.report.atom_checks {
                for comp in &atom_check.components {
                    let strictness_ok = match comp.sensitivity_class {
                        MarginClass::Strict => true,
                        MarginClass::Boundary => comp.row_equivalent,
                        MarginClass::Negative => false,
                    };
                    checks.push(BalancedCheck {
                        pair: (a, b),
                        time: atom_check.time,
                        path: atom_check.path.clone(),
                        component: comp.component,
                        sensitivity_margin: comp.sensitivity_margin,
                        class: comp.sensitivity_class,
                        row_equivalent: comp.row_equivalent,
                        strictness_ok,
                    });
                }
                let probe_failed = atom_check.scalar_monotone_probe == Some(false);
                if atom_check.monotonicity_verdict == ImplicationVerdict::Violated || probe_failed
                {
                    monotonicity_failures.push(BalanceMonotonicityFailure {
                        pair: (a, b),
                        time: atom_check.time,
                        path: atom_check.path.clone(),
                        verdict: atom_check.monotonicity_verdict,
                        scalar_probe_ok: atom_check.scalar_monotone_probe,
                    });
                }
            }
        }
    }
    Ok(BalancedReport {
        checks,
        monotonicity_failures,
    })
}

/// Probes that a driver really is independent of `y` and normalized at
/// `Z = 0`, as its flags claim, at every non-terminal atom.
fn probe_driver_flags(tree: &ScenarioTree, driver: &Driver) -> Result<()> {
    if !driver.is_y_independent() {
        return Err(Error::DriverDependsOnY(format!(
            "driver '{}' does not declare independence of y",
            driver.label()
        )));
    }
    if !driver.is_normalized() {
        return Err(Error::DriverNotNormalized(format!(
            "driver '{}' does not declare normalization at Z = 0",
            driver.label()
        )));
    }
    let dim = driver.dim();
    let n = tree.n_states();
    let zero = GainsMatrix::zeros(dim, n);
    let mut ramp = GainsMatrix::zeros(dim, n);
    for i in 0..dim {
        for j in 0..n {
            ramp.set(i, j, (i + 1) as f64 * (j as f64 - 0.5));
        }
    }
    let y_probes = [-2.0, 0.0, 1.5];
    for t in 0..tree.horizon() {
        for atom in tree.atoms_at(t)? {
            for z in [&zero, &ramp] {
                let base = driver.eval(tree, atom, &vec![y_probes[0]; dim], z)?;
                for &yv in &y_probes[1..] {
                    let probe = driver.eval(tree, atom, &vec![yv; dim], z)?;
                    let diff = base
                        .iter()
                        .zip(&probe)
                        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                    if diff > FLAG_PROBE_TOL {
                        return Err(Error::DriverDependsOnY(format!(
                            "driver '{}' changes by {:.3e} with y at atom {}",
                            driver.label(),
                            diff,
                            tree.label(atom)
                        )));
                    }
                }
            }
            let at_zero = driver.eval(tree, atom, &vec![0.0; dim], &zero)?;
            let norm = at_zero.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if norm > FLAG_PROBE_TOL {
                return Err(Error::DriverNotNormalized(format!(
                    "driver '{}' evaluates to {:.3e} at Z = 0 at atom {}",
                    driver.label(),
                    norm,
                    tree.label(atom)
                )));
            }
        }
    }
    Ok(())
}

/// Builds the nonlinear expectation induced by a driver: `evaluate(q, t)` is
/// the time-`t` value of the backward solution with terminal condition `q`.
///
/// The driver must declare, and survive probing of, independence of `y` and
/// normalization at `Z = 0`; the balance conditions are certified pairwise
/// over `q_family` (an empty or single-element family makes that check
/// vacuous, which the caller accepts by supplying it).
pub fn expectation_from_driver(
    tree: &ScenarioTree,
    driver: &Driver,
    q_family: &[AdaptedProcess],
) -> Result<NonlinearExpectation> {
    probe_driver_flags(tree, driver)?;
    let report = check_balanced(tree, driver, q_family)?;
    if !report.is_balanced() {
        return Err(Error::BalancednessProbeFailed(format!(
            "driver '{}': {}",
            driver.label(),
            report
                .first_violation()
                .unwrap_or_else(|| "unspecified violation".into())
        )));
    }
    Ok(NonlinearExpectation::from_driver_unchecked(driver.clone()))
}

/// Recovers the driver value `F(t, ., Z)` at one atom by evaluating the
/// expectation at the one-step variable with child values `Z (e_j - p)`
/// (zero outside the atom's subtree) and reading the answer at the atom.
pub fn driver_from_expectation(
    tree: &ScenarioTree,
    e: &NonlinearExpectation,
    atom: Atom,
    z: &GainsMatrix,
) -> Result<Vec<f64>> {
    let t = atom.time();
    if t >= tree.horizon() {
        return Err(Error::TerminalAtom {
            path: tree.label(atom),
            time: t,
        });
    }
    if z.n_rows() != e.dim() || z.n_cols() != tree.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "gains matrix is {} x {}, expected {} x {}",
            z.n_rows(),
            z.n_cols(),
            e.dim(),
            tree.n_states()
        )));
    }
    let mut v = AdaptedProcess::zeros(tree, t + 1, t + 1, e.dim())?;
    for (state, child) in tree.children(atom)? {
        v.set(child, z.increment(tree, atom, state)?);
    }
    let out = e.evaluate(tree, &v, t)?;
    Ok(out.value(atom).to_vec())
}

/// The dynamic risk measure associated with an expectation: the negated
/// evaluation, `rho_t(q) = -E(q | F_t)`.
pub fn risk_measure(
    tree: &ScenarioTree,
    e: &NonlinearExpectation,
    q: &AdaptedProcess,
    time: usize,
) -> Result<AdaptedProcess> {
    Ok(e.evaluate(tree, q, time)?.scale(-1.0))
}

/// The axiom a finding refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axiom {
    /// Ordered inputs must produce ordered evaluations.
    Monotonicity,
    /// Component equality of ordered evaluations is allowed only when the
    /// inputs agree on the whole subtree.
    MonotonicityStrictness,
    /// Variables already measurable at the evaluation time map to
    /// themselves.
    Triviality,
    /// Evaluating in two stages agrees with evaluating in one.
    Recursivity,
    /// Multiplying by an event indicator commutes with evaluation.
    Locality,
    /// Adding a variable known at the evaluation time shifts the result by
    /// exactly that variable.
    TranslationInvariance,
}

impl Axiom {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axiom::Monotonicity => "monotonicity",
            Axiom::MonotonicityStrictness => "monotonicity strictness",
            Axiom::Triviality => "triviality",
            Axiom::Recursivity => "recursivity",
            Axiom::Locality => "locality",
            Axiom::TranslationInvariance => "translation invariance",
        }
    }
}

/// One probe failure found by [`verify_axioms`].
#[derive(Clone, Debug)]
pub struct AxiomFinding {
    pub axiom: Axiom,
    /// Index of the probe pair that triggered the finding.
    pub probe: usize,
    pub time: usize,
    pub path: String,
    pub detail: String,
}

/// Outcome of probing the expectation axioms over a finite family.
#[derive(Clone, Debug)]
pub struct AxiomReport {
    pub probes_run: usize,
    pub checks_run: usize,
    pub findings: Vec<AxiomFinding>,
}

impl AxiomReport {
    pub fn clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Probes the nonlinear-expectation axioms on a finite family of pairs of
/// single-level variables. Monotonicity (with its strictness clause) is
/// checked on pairs whose first element dominates the second; triviality,
/// recursivity, locality and translation invariance are checked on every
/// variable of every pair. Violations are reported as findings, never as
/// errors; errors surface only when an evaluation itself fails.
pub fn verify_axioms(
    tree: &ScenarioTree,
    e: &NonlinearExpectation,
    probes: &[(AdaptedProcess, AdaptedProcess)],
) -> Result<AxiomReport> {
    let mut findings = Vec::new();
    let mut checks_run = 0usize;
    for (k, (qa, qb)) in probes.iter().enumerate() {
        if qa.first_time() != qa.last_time() || qb.first_time() != qb.last_time() {
            return Err(Error::InvalidInput(
                "axiom probes must be single-level variables".into(),
            ));
        }
        if qa.first_time() != qb.first_time() || qa.dim() != qb.dim() {
            return Err(Error::InvalidInput(
                "both elements of an axiom probe must share level and dimension".into(),
            ));
        }
        let tq = qa.first_time();
        let terminal_atoms = tree.atoms_at(tq)?;
        let ordered = terminal_atoms
            .iter()
            .all(|&a| {
                qa.value(a)
                    .iter()
                    .zip(qb.value(a))
                    .all(|(x, y)| *x >= *y - 1e-12)
            });

        for t in 0..tq {
            let atoms = tree.atoms_at(t)?;
            if ordered {
                let ea = e.evaluate(tree, qa, t)?;
                let eb = e.evaluate(tree, qb, t)?;
                checks_run += 1;
                for &atom in &atoms {
                    let va = ea.value(atom);
                    let vb = eb.value(atom);
                    for i in 0..e.dim() {
                        if va[i] < vb[i] - FLAG_PROBE_TOL {
                            findings.push(AxiomFinding {
                                axiom: Axiom::Monotonicity,
                                probe: k,
                                time: t,
                                path: tree.label(atom),
                                detail: format!(
                                    "component {}: evaluations {:.6e} < {:.6e} under ordered inputs",
                                    i, va[i], vb[i]
                                ),
                            });
                        } else if (va[i] - vb[i]).abs() <= FLAG_PROBE_TOL {
                            let subtree_equal = terminal_atoms.iter().all(|&term| {
                                !tree.is_ancestor(atom, term)
                                    || (qa.value(term)[i] - qb.value(term)[i]).abs() <= AXIOM_TOL
                            });
                            if !subtree_equal {
                                findings.push(AxiomFinding {
                                    axiom: Axiom::MonotonicityStrictness,
                                    probe: k,
                                    time: t,
                                    path: tree.label(atom),
                                    detail: format!(
                                        "component {}: evaluations coincide but the inputs differ on the subtree",
                                        i
                                    ),
                                });
                            }
                        }
                    }
                }
            }

            for q in [qa, qb] {
                let eq = e.evaluate(tree, q, t)?;

                // Triviality: a value already known at time t, re-read at the
                // input's level, must evaluate back to itself.
                let embedded = embed_forward(tree, &eq, tq)?;
                let back = e.evaluate(tree, &embedded, t)?;
                checks_run += 1;
                let err = back.sub(&eq)?.max_abs();
                if err > AXIOM_TOL {
                    findings.push(AxiomFinding {
                        axiom: Axiom::Triviality,
                        probe: k,
                        time: t,
                        path: tree.label(tree.root()),
                        detail: format!(
                            "re-evaluating a time-{t} measurable variable moved it by {err:.3e}"
                        ),
                    });
                }

                // Recursivity: evaluating at an intermediate time first must
                // not change the final answer.
                for s in 0..t {
                    let two_stage = e.evaluate(tree, &eq, s)?;
                    let one_stage = e.evaluate(tree, q, s)?;
                    checks_run += 1;
                    let err = two_stage.sub(&one_stage)?.max_abs();
                    if err > AXIOM_TOL {
                        findings.push(AxiomFinding {
                            axiom: Axiom::Recursivity,
                            probe: k,
                            time: s,
                            path: tree.label(tree.root()),
                            detail: format!(
                                "two-stage evaluation via time {t} differs by {err:.3e}"
                            ),
                        });
                    }
                }

                // Locality: masking outside an atom's subtree must zero the
                // evaluation elsewhere and leave it unchanged at the atom.
                for &atom in &atoms {
                    let masked = mask_to_subtree(tree, q, atom)?;
                    let em = e.evaluate(tree, &masked, t)?;
                    checks_run += 1;
                    for &other in &atoms {
                        let got = em.value(other);
                        let want: Vec<f64> = if other == atom {
                            eq.value(other).to_vec()
                        } else {
                            vec![0.0; e.dim()]
                        };
                        let err = max_abs_diff(got, &want);
                        if err > AXIOM_TOL {
                            findings.push(AxiomFinding {
                                axiom: Axiom::Locality,
                                probe: k,
                                time: t,
                                path: tree.label(atom),
                                detail: format!(
                                    "indicator of {} read at {}: off by {:.3e}",
                                    tree.label(atom),
                                    tree.label(other),
                                    err
                                ),
                            });
                        }
                    }
                }

                // Translation invariance: shifting the input by a variable
                // known at time t shifts the output by exactly that much.
                let shift = AdaptedProcess::from_fn(tree, t, e.dim(), |a| {
                    (0..e.dim())
                        .map(|i| 0.5 + 0.25 * a.index() as f64 + 0.1 * i as f64)
                        .collect()
                })?;
                let shifted_input = q.add(&embed_forward(tree, &shift, tq)?)?;
                let want = eq.add(&shift)?;
                let got = e.evaluate(tree, &shifted_input, t)?;
                checks_run += 1;
                let err = got.sub(&want)?.max_abs();
                if err > AXIOM_TOL {
                    findings.push(AxiomFinding {
                        axiom: Axiom::TranslationInvariance,
                        probe: k,
                        time: t,
                        path: tree.label(tree.root()),
                        detail: format!("shifted evaluation off by {err:.3e}"),
                    });
                }
            }
        }

        // Triviality at the input's own level: evaluation must be the
        // identity there.
        for q in [qa, qb] {
            let same = e.evaluate(tree, q, tq)?;
            checks_run += 1;
            let err = same.sub(q)?.max_abs();
            if err > AXIOM_TOL {
                findings.push(AxiomFinding {
                    axiom: Axiom::Triviality,
                    probe: k,
                    time: tq,
                    path: tree.label(tree.root()),
                    detail: format!("evaluation at the input's own level moved it by {err:.3e}"),
                });
            }
        }
    }
    Ok(AxiomReport {
        probes_run: probes.len(),
        checks_run,
        findings,
    })
}
