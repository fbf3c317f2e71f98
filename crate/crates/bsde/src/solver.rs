//! Backward solver for one-step and multi-step equations on the tree.
//!
//! At each non-terminal atom the step splits cleanly: the gains matrix is
//! pinned down by martingale representation of the centered children values,
//! after which the scalar/vector equation y - F(t, y, Z) = E[Y_next | atom]
//! is solved for y. Uniqueness needs y |-> y - F(t, y, Z) to be a bijection;
//! the solver takes the declared inverse when the driver carries one, skips
//! root finding entirely for y-independent drivers, and otherwise falls back
//! to bisection (K = 1) or damped Newton.
//!
//! [`check_driver_assumptions`] spot-checks on a grid the two properties the
//! theory requires: invariance under equivalent gains matrices and strict
//! monotonicity (invertibility) of y - F. A clean report means no violation
//! was found on the probe grid; it is never a proof.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::representation::{canonicalize, represent, GainsMatrix, GainsProcess};
use crate::roots::{bisect_from, newton_damped, RootDiagnostics, RESIDUAL_TOL};
use crate::tree::{AdaptedProcess, Atom, ScenarioTree};

/// Atom count per level above which the backward sweep runs in parallel.
const PAR_THRESHOLD: usize = 64;

pub type StepDiagnostics = RootDiagnostics;

#[derive(Clone, Debug, Default)]
pub struct SolveDiagnostics {
    /// Root-finder effort per level (time ascending), one entry per atom.
    pub per_level: Vec<Vec<StepDiagnostics>>,
    pub max_residual: f64,
    pub total_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BsdeSolution {
    /// Value process on 0..=terminal time.
    pub y: AdaptedProcess,
    /// Gains process on 0..terminal time, canonical at every atom.
    pub z: GainsProcess,
    pub diagnostics: SolveDiagnostics,
}

impl BsdeSolution {
    /// Single-level copy of the value process.
    pub fn y_at(&self, time: usize) -> Result<AdaptedProcess> {
        self.y.slice_level(time)
    }
}

/// Solves the one-step equation at `atom` against the next-time values
/// `y_next`, returning the value, the canonical gains matrix and the
/// root-finder effort.
pub fn one_step_solve(
    tree: &ScenarioTree,
    driver: &Driver,
    atom: Atom,
    y_next: &AdaptedProcess,
) -> Result<(Vec<f64>, GainsMatrix, StepDiagnostics)> {
    let dim = driver.dim();
    if y_next.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "driver dimension {} vs process dimension {}",
            dim,
            y_next.dim()
        )));
    }
    let mu = tree.cond_expect(y_next, atom)?;

    let mut w = Vec::new();
    for (_, child) in tree.children(atom)? {
        w.push(
            y_next
                .value(child)
                .iter()
                .zip(&mu)
                .map(|(v, m)| v - m)
                .collect(),
        );
    }
    let z = represent(tree, atom, &w)?;

    let (y, diag) = if driver.is_y_independent() {
        let f = driver.eval_canonical(tree, atom, &mu, &z)?;
        let y: Vec<f64> = mu.iter().zip(&f).map(|(m, fi)| m + fi).collect();
        (y, StepDiagnostics::default())
    } else if let Some(inv) = driver.apply_inverse(tree, atom, &mu, &z) {
        (inv?, StepDiagnostics::default())
    } else if dim == 1 {
        let mut g = |yv: f64| -> Result<f64> {
            let f = driver.eval_canonical(tree, atom, &[yv], &z)?;
            Ok(yv - f[0] - mu[0])
        };
        let (y, diag) = bisect_from(&mut g, mu[0], 1.0)?;
        (vec![y], diag)
    } else {
        let mut h = |yv: &[f64]| -> Result<Vec<f64>> {
            let f = driver.eval_canonical(tree, atom, yv, &z)?;
            Ok(yv
                .iter()
                .zip(&f)
                .zip(&mu)
                .map(|((yi, fi), mi)| yi - fi - mi)
                .collect())
        };
        newton_damped(&mut h, &mu)?
    };

    // The step is only accepted when the equation actually holds; a declared
    // inverse or a bisection stuck on a jump both get caught here.
    let f = driver.eval_canonical(tree, atom, &y, &z)?;
    let residual = y
        .iter()
        .zip(&f)
        .zip(&mu)
        .map(|((yi, fi), mi)| (yi - fi - mi).abs())
        .fold(0.0_f64, f64::max);
    if !residual.is_finite() || residual > RESIDUAL_TOL {
        return Err(Error::RootFindDivergence(format!(
            "one-step residual {residual:.3e} exceeds {RESIDUAL_TOL:.1e}"
        )));
    }

    let diag = StepDiagnostics {
        iterations: diag.iterations,
        residual,
    };
    Ok((y, z, diag))
}

/// Solves the backward equation with the given single-level terminal
/// condition, back to time 0. The terminal time may be any level in the
/// tree, which is what the dynamic-consistency checks rely on.
pub fn solve(tree: &ScenarioTree, driver: &Driver, terminal: &AdaptedProcess) -> Result<BsdeSolution> {
    if terminal.first_time() != terminal.last_time() {
        return Err(Error::InvalidInput(
            "terminal condition must live on a single level".into(),
        ));
    }
    let end = terminal.first_time();
    if end > tree.horizon() {
        return Err(Error::TimeOutOfRange {
            time: end,
            horizon: tree.horizon(),
        });
    }
    let dim = driver.dim();
    if terminal.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "driver dimension {} vs terminal dimension {}",
            dim,
            terminal.dim()
        )));
    }

    let mut y = AdaptedProcess::zeros(tree, 0, end, dim)?;
    for atom in tree.atoms_at(end)? {
        y.set(atom, terminal.value(atom).to_vec());
    }
    let mut z = GainsProcess::zeros(tree, end, dim)?;
    let mut per_level = vec![Vec::new(); end];

    for t in (0..end).rev() {
        let next = y.slice_level(t + 1)?;
        let atoms = tree.atoms_at(t)?;
        let step = |atom: &Atom| {
            one_step_solve(tree, driver, *atom, &next)
                .map_err(|e| e.at(tree.label(*atom), t))
        };
        let results: Vec<_> = if atoms.len() >= PAR_THRESHOLD {
            atoms.par_iter().map(step).collect()
        } else {
            atoms.iter().map(step).collect()
        };
        let mut diags = Vec::with_capacity(atoms.len());
        for (atom, res) in atoms.iter().zip(results) {
            let (yv, zv, diag) = res?;
            y.set(*atom, yv);
            z.set(*atom, zv);
            diags.push(diag);
        }
        per_level[t] = diags;
    }

    let max_residual = per_level
        .iter()
        .flatten()
        .map(|d| d.residual)
        .fold(0.0_f64, f64::max);
    let total_iterations = per_level.iter().flatten().map(|d| d.iterations).sum();

    Ok(BsdeSolution {
        y,
        z,
        diagnostics: SolveDiagnostics {
            per_level,
            max_residual,
            total_iterations,
        },
    })
}

/// Runs the dynamics forward from a root value along a given gains process:
/// Y_{t+1} = Y_t - F(t, Y_t, Z_t) + Z_t (e_j - p) path by path. Matrices are
/// canonicalized before use, so equivalent inputs generate identical paths.
pub fn forward_generate(
    tree: &ScenarioTree,
    driver: &Driver,
    y0: &[f64],
    z: &GainsProcess,
) -> Result<AdaptedProcess> {
    let dim = driver.dim();
    if y0.len() != dim || z.dim() != dim {
        return Err(Error::DimensionMismatch(
            "initial value, driver and gains process must share a dimension".into(),
        ));
    }
    let end = z.end_time();
    if end > tree.horizon() {
        return Err(Error::TimeOutOfRange {
            time: end,
            horizon: tree.horizon(),
        });
    }
    let mut y = AdaptedProcess::zeros(tree, 0, end, dim)?;
    y.set(tree.root(), y0.to_vec());

    for t in 0..end {
        for atom in tree.atoms_at(t)? {
            let zc = canonicalize(tree, atom, z.at(atom))?;
            let yt = y.value(atom).to_vec();
            let f = driver.eval_canonical(tree, atom, &yt, &zc)?;
            for (state, child) in tree.children(atom)? {
                let inc = zc.increment(tree, atom, state)?;
                let next: Vec<f64> = yt
                    .iter()
                    .zip(&f)
                    .zip(&inc)
                    .map(|((yi, fi), zi)| yi - fi + zi)
                    .collect();
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteDriverValue {
                        path: tree.label(atom),
                        time: t,
                    });
                }
                y.set(child, next);
            }
        }
    }
    Ok(y)
}

// ---- assumption probing ----------------------------------------------------

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    /// Grid (lo, hi, count) of y values per component.
    pub y_grid: (f64, f64, usize),
    /// Random gains matrices tried per atom.
    pub z_samples: usize,
    pub seed: u64,
    /// Agreement tolerance for the equivalence-invariance check, relative to
    /// the value magnitude.
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            y_grid: (-10.0, 10.0, 21),
            z_samples: 5,
            seed: 7,
            tolerance: 1e-9,
        }
    }
}

impl ProbeConfig {
    pub fn y_points(&self) -> Vec<f64> {
        let (lo, hi, n) = self.y_grid;
        if n <= 1 {
            return vec![lo];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeFindingKind {
    /// eval disagreed between a matrix and an equivalent perturbation of it.
    EquivalenceInvarianceBroken,
    /// y - F(y, Z) was flat somewhere on the grid.
    NotInjective,
    /// y - F(y, Z) strictly decreased somewhere on the grid.
    DecreasingInY,
    /// The finite-difference Jacobian of y - F(y, Z) was singular.
    SingularJacobian,
}

impl ProbeFindingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeFindingKind::EquivalenceInvarianceBroken => "equivalence-invariance-broken",
            ProbeFindingKind::NotInjective => "not-injective",
            ProbeFindingKind::DecreasingInY => "decreasing-in-y",
            ProbeFindingKind::SingularJacobian => "singular-jacobian",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeFinding {
    pub kind: ProbeFindingKind,
    pub path: String,
    pub time: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct AssumptionReport {
    pub atoms_probed: usize,
    pub evaluations: usize,
    pub findings: Vec<ProbeFinding>,
}

impl AssumptionReport {
    /// True when no violation was found. Grid evidence only, not a proof.
    pub fn clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Draws a canonical gains matrix with increments of the given scale.
fn random_canonical(
    tree: &ScenarioTree,
    atom: Atom,
    dim: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GainsMatrix> {
    let row = tree.kernel_row(atom)?.to_vec();
    let support = tree.support(atom)?.to_vec();
    let mut w: Vec<Vec<f64>> = (0..support.len())
        .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    for i in 0..dim {
        let mean: f64 = support
            .iter()
            .zip(&w)
            .map(|(&j, wv)| row[j] * wv[i])
            .sum();
        for wv in &mut w {
            wv[i] -= mean;
        }
    }
    represent(tree, atom, &w)
}

/// Adds an equivalence-preserving perturbation: the same random vector to
/// every supported column and independent noise to dead columns. Realized
/// increments are unchanged, so a sound driver must not react.
fn perturb_equivalent(
    tree: &ScenarioTree,
    atom: Atom,
    z: &GainsMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<GainsMatrix> {
    let row = tree.kernel_row(atom)?;
    let dim = z.n_rows();
    let common: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut out = z.clone();
    for j in 0..z.n_cols() {
        if row[j] > 0.0 {
            for i in 0..dim {
                out.set(i, j, out.get(i, j) + common[i]);
            }
        } else {
            for i in 0..dim {
                out.set(i, j, rng.random_range(-10.0..10.0));
            }
        }
    }
    Ok(out)
}

/// Probes the two solvability assumptions at every non-terminal atom:
/// equivalence invariance of the raw driver, and injectivity plus (for
/// scalars) strict increase of y |-> y - F(y, Z) on a grid.
pub fn check_driver_assumptions(
    tree: &ScenarioTree,
    driver: &Driver,
    probe: &ProbeConfig,
) -> Result<AssumptionReport> {
    let dim = driver.dim();
    let y_points = probe.y_points();
    let mut report = AssumptionReport::default();

    for t in 0..tree.horizon() {
        for atom in tree.atoms_at(t)? {
            report.atoms_probed += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(
                probe
                    .seed
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add((t as u64) << 32)
                    .wrapping_add(atom.index() as u64),
            );

            for _ in 0..probe.z_samples.max(1) {
                let z = random_canonical(tree, atom, dim, 5.0, &mut rng)?;

                // (a) equivalent perturbations must go unnoticed
                let y_probe = vec![y_points[y_points.len() / 2]; dim];
                let f0 = driver.eval_raw(tree, atom, &y_probe, &z)?;
                let z_pert = perturb_equivalent(tree, atom, &z, &mut rng)?;
                let f1 = driver.eval_raw(tree, atom, &y_probe, &z_pert)?;
                report.evaluations += 2;
                let diff = f0
                    .iter()
                    .zip(&f1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                let scale = 1.0 + f0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if diff > probe.tolerance * scale {
                    report.findings.push(ProbeFinding {
                        kind: ProbeFindingKind::EquivalenceInvarianceBroken,
                        path: tree.label(atom),
                        time: t,
                        detail: format!("values differ by {diff:.3e} across equivalent inputs"),
                    });
                }

                // (b) bijectivity of y - F(y, Z)
                if dim == 1 {
                    let mut prev: Option<f64> = None;
                    let mut flagged_flat = false;
                    let mut flagged_down = false;
                    for &yv in &y_points {
                        let f = driver.eval_canonical(tree, atom, &[yv], &z)?;
                        report.evaluations += 1;
                        let m = yv - f[0];
                        if let Some(p) = prev {
                            let step = m - p;
                            let flat_tol = 1e-12 * (1.0 + m.abs());
                            if step < -flat_tol && !flagged_down {
                                flagged_down = true;
                                report.findings.push(ProbeFinding {
                                    kind: ProbeFindingKind::DecreasingInY,
                                    path: tree.label(atom),
                                    time: t,
                                    detail: format!(
                                        "y - F(y, Z) decreases by {:.3e} between grid points",
                                        -step
                                    ),
                                });
                            } else if step.abs() <= flat_tol && !flagged_flat {
                                flagged_flat = true;
                                report.findings.push(ProbeFinding {
                                    kind: ProbeFindingKind::NotInjective,
                                    path: tree.label(atom),
                                    time: t,
                                    detail: "y - F(y, Z) is flat between grid points".into(),
                                });
                            }
                        }
                        prev = Some(m);
                    }
                } else {
                    for &yv in [y_points[0], y_points[y_points.len() / 2], *y_points.last().unwrap()].iter() {
                        let y0 = vec![yv; dim];
                        let f0 = driver.eval_canonical(tree, atom, &y0, &z)?;
                        let mut jac = nalgebra::DMatrix::<f64>::zeros(dim, dim);
                        for jcol in 0..dim {
                            let h = 1e-7 * yv.abs().max(1.0);
                            let mut yp = y0.clone();
                            yp[jcol] += h;
                            let fp = driver.eval_canonical(tree, atom, &yp, &z)?;
                            report.evaluations += 1;
                            for irow in 0..dim {
                                let d = if irow == jcol { 1.0 } else { 0.0 };
                                jac[(irow, jcol)] = d - (fp[irow] - f0[irow]) / h;
                            }
                        }
                        if !jac.lu().is_invertible() {
                            report.findings.push(ProbeFinding {
                                kind: ProbeFindingKind::SingularJacobian,
                                path: tree.label(atom),
                                time: t,
                                detail: format!(
                                    "finite-difference jacobian of y - F singular near y = {yv}"
                                ),
                            });
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_tree(horizon: usize) -> ScenarioTree {
        ScenarioTree::markov(2, horizon, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn two_step_solve_matches_hand_recursion() {
        // Fair coin, T = 2, Q = (0, -2, 4, -1), F(y, Z) = 0.1 * max_j Z(e_j - p).
        // Backward by hand: Y1 = (-0.9, 1.75), Y0 = 0.5575.
        let tree = coin_tree(2);
        let driver = Driver::best_case_tilt(1, 0.1).unwrap();
        let q = AdaptedProcess::terminal_scalar(&tree, &[0.0, -2.0, 4.0, -1.0]).unwrap();
        let sol = solve(&tree, &driver, &q).unwrap();
        let y1 = sol.y.level(1).unwrap();
        assert!((y1[0][0] + 0.9).abs() <= 1e-12);
        assert!((y1[1][0] - 1.75).abs() <= 1e-12);
        assert!((sol.y.value(tree.root())[0] - 0.5575).abs() <= 1e-12);
    }

    #[test]
    fn scalar_root_finding_handles_y_dependence() {
        // F = 0.5 y without a declared inverse: bisection must find y = 6
        // when the conditional mean is 3.
        let tree = coin_tree(1);
        let driver = Driver::from_fn(1, "halfy", false, false, |_, _, y: &[f64], _| {
            vec![0.5 * y[0]]
        });
        let q = AdaptedProcess::terminal_scalar(&tree, &[3.0, 3.0]).unwrap();
        let sol = solve(&tree, &driver, &q).unwrap();
        assert!((sol.y.value(tree.root())[0] - 6.0).abs() <= 1e-10);
    }

    #[test]
    fn newton_and_declared_inverse_agree_on_vector_affine_step() {
        // F(y, Z) = B y with B = [[0, -1], [0, 0]]; mean (0, 5) gives
        // y = (I - B)^{-1} (0, 5) = (-5, 5).
        let tree = coin_tree(1);
        let q = AdaptedProcess::terminal_from_lex(&tree, vec![vec![0.0, 5.0], vec![0.0, 5.0]])
            .unwrap();

        let b = vec![vec![0.0, -1.0], vec![0.0, 0.0]];
        let with_inverse =
            Driver::linear(2, b.clone(), vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(with_inverse.has_explicit_inverse());
        let sol1 = solve(&tree, &with_inverse, &q).unwrap();

        let bb = b.clone();
        let newton_only = Driver::from_fn(2, "affine", false, false, move |_, _, y: &[f64], _| {
            vec![
                bb[0][0] * y[0] + bb[0][1] * y[1],
                bb[1][0] * y[0] + bb[1][1] * y[1],
            ]
        });
        let sol2 = solve(&tree, &newton_only, &q).unwrap();

        for sol in [&sol1, &sol2] {
            let y0 = sol.y.value(tree.root());
            assert!((y0[0] + 5.0).abs() <= 1e-9, "got {:?}", y0);
            assert!((y0[1] - 5.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn identity_driver_makes_the_step_unsolvable() {
        // F = y: the backward map y - F is constant, no unique step exists.
        let tree = coin_tree(1);
        let driver = Driver::from_fn(1, "identity", false, false, |_, _, y: &[f64], _| {
            vec![y[0]]
        });
        let q = AdaptedProcess::terminal_scalar(&tree, &[1.0, 2.0]).unwrap();
        let err = solve(&tree, &driver, &q).unwrap_err();
        match err {
            Error::SolveAt { time, source, .. } => {
                assert_eq!(time, 0);
                assert!(matches!(*source, Error::RootFindDivergence(_)));
            }
            other => panic!("expected SolveAt, got {other:?}"),
        }
    }

    #[test]
    fn zero_driver_solution_is_a_martingale() {
        let tree = ScenarioTree::markov(
            3,
            3,
            0,
            &[
                vec![0.2, 0.5, 0.3],
                vec![0.0, 0.4, 0.6],
                vec![0.5, 0.0, 0.5],
            ],
        )
        .unwrap();
        let driver = Driver::zero(1);
        let q = AdaptedProcess::from_fn(&tree, 3, 1, |a| {
            vec![tree.path(a).iter().map(|&s| s as f64 + 0.5).sum()]
        })
        .unwrap();
        let sol = solve(&tree, &driver, &q).unwrap();
        for t in 0..3 {
            for atom in tree.atoms_at(t).unwrap() {
                let next = sol.y.slice_level(t + 1).unwrap();
                let mean = tree.cond_expect(&next, atom).unwrap();
                assert!((sol.y.value(atom)[0] - mean[0]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn solve_then_forward_generate_reproduces_the_terminal_condition() {
        let tree = coin_tree(3);
        let driver = Driver::worst_case_tilt(1, 0.4).unwrap();
        let q = AdaptedProcess::terminal_scalar(
            &tree,
            &[1.0, -0.5, 2.0, 0.0, -3.0, 4.0, 0.25, 1.5],
        )
        .unwrap();
        let sol = solve(&tree, &driver, &q).unwrap();
        let y0 = sol.y.value(tree.root()).to_vec();
        let regenerated = forward_generate(&tree, &driver, &y0, &sol.z).unwrap();
        for atom in tree.atoms_at(3).unwrap() {
            assert!((regenerated.value(atom)[0] - q.value(atom)[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn terminal_at_intermediate_time_is_supported() {
        let tree = coin_tree(3);
        let driver = Driver::zero(1);
        let v = AdaptedProcess::from_fn(&tree, 2, 1, |a| vec![tree.path(a)[1] as f64]).unwrap();
        let sol = solve(&tree, &driver, &v).unwrap();
        assert_eq!(sol.y.last_time(), 2);
        assert_eq!(sol.z.end_time(), 2);
    }

    #[test]
    fn prober_accepts_sound_drivers() {
        let tree = coin_tree(2);
        for driver in [
            Driver::zero(1),
            Driver::worst_case_tilt(1, 0.5).unwrap(),
            Driver::linear(1, vec![vec![0.25]], vec![0.1, 0.1], vec![0.0]).unwrap(),
        ] {
            let report =
                check_driver_assumptions(&tree, &driver, &ProbeConfig::default()).unwrap();
            assert!(report.clean(), "{}: {:?}", driver.label(), report.findings);
        }
    }

    #[test]
    fn prober_flags_decreasing_and_flat_backward_maps() {
        let tree = coin_tree(1);
        let doubling = Driver::from_fn(1, "2y", false, false, |_, _, y: &[f64], _| {
            vec![2.0 * y[0]]
        });
        let report = check_driver_assumptions(&tree, &doubling, &ProbeConfig::default()).unwrap();
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == ProbeFindingKind::DecreasingInY));

        let identity = Driver::from_fn(1, "y", false, false, |_, _, y: &[f64], _| vec![y[0]]);
        let report = check_driver_assumptions(&tree, &identity, &ProbeConfig::default()).unwrap();
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == ProbeFindingKind::NotInjective));
    }

    #[test]
    fn prober_flags_raw_entry_sensitivity() {
        let tree = coin_tree(1);
        // Reads a raw matrix entry instead of an increment: changes under
        // equivalent perturbations.
        let peeking = Driver::from_fn(1, "peek", true, true, |_, _, _, z: &GainsMatrix| {
            vec![z.get(0, 0)]
        });
        let report = check_driver_assumptions(&tree, &peeking, &ProbeConfig::default()).unwrap();
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == ProbeFindingKind::EquivalenceInvarianceBroken));
    }

    #[test]
    fn vector_prober_flags_singular_jacobian() {
        let tree = coin_tree(1);
        // F = y projects out nothing: I - dF/dy = 0.
        let driver = Driver::from_fn(2, "identity2", false, false, |_, _, y: &[f64], _| {
            y.to_vec()
        });
        let report = check_driver_assumptions(&tree, &driver, &ProbeConfig::default()).unwrap();
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == ProbeFindingKind::SingularJacobian));
    }
}
