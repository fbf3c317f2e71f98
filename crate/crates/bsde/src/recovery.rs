//! Driver recovery from observed solution behaviour.
//!
//! Two observation models are supported. In the first, a one-step map is
//! available: for any next-time values it reports the current value the
//! solved equation assigns. Writing a query as a shift plus gains increments,
//! Y_next = s + Z M, root-finding over the shift s pins down the unique
//! query the map sends to a target value y, and the driver value falls out
//! as F(y, Z) = y - E[Y_next | atom].
//!
//! In the second model only endpoints are observed: a map from terminal
//! values to the value at a fixed time t, together with the driver's
//! zero-gains section F(u, y, 0) at later times. Running the zero-gains
//! recursion Y_{u+1} = Y_u - F(u, Y_u, 0) forward turns any next-time value
//! into a terminal value, the endpoint map carries it back to time t, and
//! recovery reduces to the one-step case. The zero-gains section is far from
//! unique (shifting it by a constant at one time and compensating at the
//! next preserves every endpoint), yet the recovered driver at time t is
//! the same for every consistent choice; [`shifted_zero_hedging`] builds
//! such alternatives for testing and demonstration.

use std::sync::Arc;

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::representation::{represent_centered, GainsMatrix};
use crate::roots::{bisect_from, newton_damped};
use crate::solver::{one_step_solve, solve, ProbeConfig};
use crate::tree::{AdaptedProcess, Atom, ScenarioTree};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Agreement tolerance for recovered driver values and consistency checks.
pub const RECOVERY_TOL: f64 = 1e-8;

type LevelMap = dyn Fn(&AdaptedProcess) -> Result<AdaptedProcess> + Send + Sync;

/// Observed one-step solution map: next-time values to current values.
#[derive(Clone)]
pub struct OneStepOracle {
    time: usize,
    dim: usize,
    query: Arc<LevelMap>,
}

impl std::fmt::Debug for OneStepOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OneStepOracle")
            .field("time", &self.time)
            .field("dim", &self.dim)
            .finish()
    }
}

impl OneStepOracle {
    /// Wraps a map from single-level processes at `time + 1` to single-level
    /// processes at `time`.
    pub fn new(
        time: usize,
        dim: usize,
        query: impl Fn(&AdaptedProcess) -> Result<AdaptedProcess> + Send + Sync + 'static,
    ) -> Self {
        OneStepOracle {
            time,
            dim,
            query: Arc::new(query),
        }
    }

    /// The observable map of a known driver: answers queries by solving the
    /// one-step equation at every atom of the level.
    pub fn from_driver(tree: &ScenarioTree, driver: &Driver, time: usize) -> Result<Self> {
        if time >= tree.horizon() {
            return Err(Error::TimeOutOfRange {
                time,
                horizon: tree.horizon(),
            });
        }
        let dim = driver.dim();
        let tree = tree.clone();
        let driver = driver.clone();
        Ok(OneStepOracle::new(time, dim, move |y_next: &AdaptedProcess| {
            let mut out = AdaptedProcess::zeros(&tree, time, time, driver.dim())?;
            for atom in tree.atoms_at(time)? {
                let (y, _, _) = one_step_solve(&tree, &driver, atom, y_next)
                    .map_err(|e| e.at(tree.label(atom), time))?;
                out.set(atom, y);
            }
            Ok(out)
        }))
    }

    /// Time of the values this oracle reports; queries live one step later.
    pub fn time(&self) -> usize {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn query(&self, y_next: &AdaptedProcess) -> Result<AdaptedProcess> {
        if y_next.first_time() != self.time + 1 || y_next.last_time() != self.time + 1 {
            return Err(Error::InvalidInput(format!(
                "one-step query must be a single level at time {}",
                self.time + 1
            )));
        }
        let out = (self.query)(y_next)?;
        if out.first_time() != self.time || out.last_time() != self.time {
            return Err(Error::OracleInconsistent(format!(
                "oracle answered at time {} instead of {}",
                out.first_time(),
                self.time
            )));
        }
        Ok(out)
    }
}

/// Builds the query process s + Z M over the children of `atom`, leaving
/// other atoms of the level at zero.
fn shifted_query(
    tree: &ScenarioTree,
    atom: Atom,
    s: &[f64],
    z: &GainsMatrix,
) -> Result<AdaptedProcess> {
    let t = atom.time();
    let mut v = AdaptedProcess::zeros(tree, t + 1, t + 1, s.len())?;
    for (state, child) in tree.children(atom)? {
        let inc = z.increment(tree, atom, state)?;
        v.set(child, s.iter().zip(&inc).map(|(a, b)| a + b).collect());
    }
    Ok(v)
}

/// Evaluates the oracle on s + Z M and reads the answer at `atom`.
fn phi_at(
    tree: &ScenarioTree,
    oracle: &OneStepOracle,
    atom: Atom,
    s: &[f64],
    z: &GainsMatrix,
) -> Result<Vec<f64>> {
    let v = shifted_query(tree, atom, s, z)?;
    Ok(oracle.query(&v)?.value(atom).to_vec())
}

/// Recovers the driver value F(t, y, Z) at one atom from a one-step map.
/// Root-finds the shift s whose query s + Z M the oracle maps back to y,
/// then F = y - s by the zero conditional mean of the increments.
pub fn recover_from_one_step(
    tree: &ScenarioTree,
    oracle: &OneStepOracle,
    atom: Atom,
    y: &[f64],
    z: &GainsMatrix,
) -> Result<Vec<f64>> {
    if atom.time() != oracle.time() {
        return Err(Error::InvalidInput(format!(
            "atom at time {} queried against an oracle at time {}",
            atom.time(),
            oracle.time()
        )));
    }
    let dim = y.len();
    let s = if dim == 1 {
        let mut g = |sv: f64| -> Result<f64> {
            Ok(phi_at(tree, oracle, atom, &[sv], z)?[0] - y[0])
        };
        let (s, _) = bisect_from(&mut g, y[0], 1.0).map_err(|e| {
            Error::OracleInconsistent(format!("no shift reproduces the target value: {e}"))
        })?;
        vec![s]
    } else {
        let mut g = |sv: &[f64]| -> Result<Vec<f64>> {
            let out = phi_at(tree, oracle, atom, sv, z)?;
            Ok(out.iter().zip(y).map(|(a, b)| a - b).collect())
        };
        let (s, _) = newton_damped(&mut g, y).map_err(|e| {
            Error::OracleInconsistent(format!("no shift reproduces the target value: {e}"))
        })?;
        s
    };

    let back = phi_at(tree, oracle, atom, &s, z)?;
    let residual = back
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    if residual > RECOVERY_TOL {
        return Err(Error::OracleInconsistent(format!(
            "best shift misses the target value by {residual:.3e}"
        )));
    }
    Ok(y.iter().zip(&s).map(|(yi, si)| yi - si).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiFindingKind {
    /// The shifted map was flat or direction-reversing on the grid.
    NotMonotone,
    /// The finite-difference sensitivity to the shift was singular.
    SingularSensitivity,
    /// Equivalent gains inputs produced different answers.
    EquivalenceBroken,
    /// The answer at an atom reacted to values outside that atom's children.
    NonLocal,
}

impl PhiFindingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhiFindingKind::NotMonotone => "not-monotone",
            PhiFindingKind::SingularSensitivity => "singular-sensitivity",
            PhiFindingKind::EquivalenceBroken => "equivalence-broken",
            PhiFindingKind::NonLocal => "non-local",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiFinding {
    pub kind: PhiFindingKind,
    pub path: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct PhiProbeReport {
    pub queries: usize,
    pub findings: Vec<PhiFinding>,
}

impl PhiProbeReport {
    /// True when no violation was found. Grid evidence only, not a proof.
    pub fn clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Probes the properties recovery relies on at one atom: the shifted map
/// s -> oracle(s + Z M) must be injective (strictly monotone for scalars,
/// invertible sensitivity for vectors), must not distinguish equivalent
/// gains matrices, and must ignore values off the atom's children.
pub fn validate_phi(
    tree: &ScenarioTree,
    oracle: &OneStepOracle,
    atom: Atom,
    probe: &ProbeConfig,
) -> Result<PhiProbeReport> {
    if atom.time() != oracle.time() {
        return Err(Error::InvalidInput(format!(
            "atom at time {} probed against an oracle at time {}",
            atom.time(),
            oracle.time()
        )));
    }
    let mut report = PhiProbeReport::default();
    let dim = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed.wrapping_add(atom.index() as u64));
    let grid = probe.y_points();

    for _ in 0..probe.z_samples.max(1) {
        let w: Vec<Vec<f64>> = (0..tree.children(atom)?.len())
            .map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let mut centered = w.clone();
        let row = tree.kernel_row(atom)?.to_vec();
        let support = tree.support(atom)?.to_vec();
        for i in 0..dim {
            let mean: f64 = support
                .iter()
                .zip(&centered)
                .map(|(&j, v)| row[j] * v[i])
                .sum();
            for v in &mut centered {
                v[i] -= mean;
            }
        }
        let z = crate::representation::represent(tree, atom, &centered)?;

        // Monotonicity or sensitivity of the shifted map.
        if dim == 1 {
            let mut values = Vec::with_capacity(grid.len());
            for &k in &grid {
                values.push(phi_at(tree, oracle, atom, &[k], &z)?[0]);
                report.queries += 1;
            }
            let mut signs = 0i32;
            let mut ok = true;
            for pair in values.windows(2) {
                let d = pair[1] - pair[0];
                if d.abs() <= 1e-12 * (1.0 + pair[1].abs()) {
                    ok = false;
                    break;
                }
                let sign = if d > 0.0 { 1 } else { -1 };
                if signs == 0 {
                    signs = sign;
                } else if signs != sign {
                    ok = false;
                    break;
                }
            }
            if !ok {
                report.findings.push(PhiFinding {
                    kind: PhiFindingKind::NotMonotone,
                    path: tree.label(atom),
                    detail: "shifted map is flat or reverses direction on the grid".into(),
                });
            }
        } else {
            let s0 = vec![grid[grid.len() / 2]; dim];
            let f0 = phi_at(tree, oracle, atom, &s0, &z)?;
            report.queries += 1;
            let mut jac = nalgebra::DMatrix::<f64>::zeros(dim, dim);
            for j in 0..dim {
                let h = 1e-6;
                let mut sp = s0.clone();
                sp[j] += h;
                let fp = phi_at(tree, oracle, atom, &sp, &z)?;
                report.queries += 1;
                for i in 0..dim {
                    jac[(i, j)] = (fp[i] - f0[i]) / h;
                }
            }
            if !jac.lu().is_invertible() {
                report.findings.push(PhiFinding {
                    kind: PhiFindingKind::SingularSensitivity,
                    path: tree.label(atom),
                    detail: "finite-difference shift sensitivity is singular".into(),
                });
            }
        }

        // Equivalent gains matrices must produce the same answer.
        let s_mid = vec![grid[grid.len() / 2]; dim];
        let base = phi_at(tree, oracle, atom, &s_mid, &z)?;
        let mut z_pert = z.clone();
        let common: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        for j in 0..z_pert.n_cols() {
            if row[j] > 0.0 {
                for i in 0..dim {
                    z_pert.set(i, j, z_pert.get(i, j) + common[i]);
                }
            } else {
                for i in 0..dim {
                    z_pert.set(i, j, rng.random_range(-5.0..5.0));
                }
            }
        }
        let pert = phi_at(tree, oracle, atom, &s_mid, &z_pert)?;
        report.queries += 2;
        let diff = base
            .iter()
            .zip(&pert)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if diff > probe.tolerance * (1.0 + base[0].abs()) {
            report.findings.push(PhiFinding {
                kind: PhiFindingKind::EquivalenceBroken,
                path: tree.label(atom),
                detail: format!("answers differ by {diff:.3e} across equivalent gains"),
            });
        }

        // Values off the atom's children must not matter.
        let mut noisy = shifted_query(tree, atom, &s_mid, &z)?;
        let mut touched = false;
        for other in tree.atoms_at(atom.time() + 1)? {
            let parent = tree.parent(other).expect("non-root level");
            if parent != atom {
                noisy.set(other, (0..dim).map(|_| rng.random_range(-9.0..9.0)).collect());
                touched = true;
            }
        }
        if touched {
            let far = oracle.query(&noisy)?.value(atom).to_vec();
            report.queries += 1;
            let diff = base
                .iter()
                .zip(&far)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            if diff > probe.tolerance * (1.0 + base[0].abs()) {
                report.findings.push(PhiFinding {
                    kind: PhiFindingKind::NonLocal,
                    path: tree.label(atom),
                    detail: format!(
                        "answer moved by {diff:.3e} when unrelated branches changed"
                    ),
                });
            }
        }
    }
    Ok(report)
}

/// Builds a driver from a one-step map. At the oracle's time the driver
/// inverts the shifted map numerically; at every other time it is zero. The
/// declared inverse answers the backward step by a single oracle query, so
/// solving with the derived driver needs no root finding at all. Failures
/// inside eval surface as non-finite values, which the solver rejects.
pub fn derive_driver_from_phi(tree: &ScenarioTree, oracle: &OneStepOracle) -> Driver {
    let dim = oracle.dim();
    let time = oracle.time();
    let eval_tree = tree.clone();
    let eval_oracle = oracle.clone();
    let inv_tree = tree.clone();
    let inv_oracle = oracle.clone();
    Driver::from_fn(
        dim,
        format!("derived-from-one-step(time={time})"),
        false,
        false,
        move |_, atom, y: &[f64], z: &GainsMatrix| {
            if atom.time() != time {
                return vec![0.0; y.len()];
            }
            recover_from_one_step(&eval_tree, &eval_oracle, atom, y, z)
                .unwrap_or_else(|_| vec![f64::NAN; y.len()])
        },
    )
    .with_explicit_inverse(move |_, atom, target: &[f64], z: &GainsMatrix| {
        if atom.time() != time {
            return Ok(target.to_vec());
        }
        phi_at(&inv_tree, &inv_oracle, atom, target, z)
    })
}

/// Observed endpoint map: terminal values to values at a fixed time.
#[derive(Clone)]
pub struct EndpointOracle {
    time: usize,
    dim: usize,
    query: Arc<LevelMap>,
}

impl std::fmt::Debug for EndpointOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointOracle")
            .field("time", &self.time)
            .field("dim", &self.dim)
            .finish()
    }
}

impl EndpointOracle {
    pub fn new(
        time: usize,
        dim: usize,
        query: impl Fn(&AdaptedProcess) -> Result<AdaptedProcess> + Send + Sync + 'static,
    ) -> Self {
        EndpointOracle {
            time,
            dim,
            query: Arc::new(query),
        }
    }

    /// The observable endpoint map of a known driver: solves the full
    /// backward equation and reports the level at `time`.
    pub fn from_driver(tree: &ScenarioTree, driver: &Driver, time: usize) -> Result<Self> {
        if time >= tree.horizon() {
            return Err(Error::TimeOutOfRange {
                time,
                horizon: tree.horizon(),
            });
        }
        let dim = driver.dim();
        let tree = tree.clone();
        let driver = driver.clone();
        Ok(EndpointOracle::new(time, dim, move |q: &AdaptedProcess| {
            solve(&tree, &driver, q)?.y_at(time)
        }))
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn query(&self, tree: &ScenarioTree, q: &AdaptedProcess) -> Result<AdaptedProcess> {
        if q.first_time() != tree.horizon() || q.last_time() != tree.horizon() {
            return Err(Error::InvalidInput(
                "endpoint query must be a terminal-level process".into(),
            ));
        }
        let out = (self.query)(q)?;
        if out.first_time() != self.time || out.last_time() != self.time {
            return Err(Error::OracleInconsistent(format!(
                "endpoint oracle answered at time {} instead of {}",
                out.first_time(),
                self.time
            )));
        }
        Ok(out)
    }
}

type ZeroHedgeFn = dyn Fn(&ScenarioTree, Atom, &[f64]) -> Vec<f64> + Send + Sync;

/// The driver's zero-gains section F(u, y, 0) as a standalone function.
#[derive(Clone)]
pub struct ZeroHedgingFunction {
    dim: usize,
    eval: Arc<ZeroHedgeFn>,
}

impl std::fmt::Debug for ZeroHedgingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZeroHedgingFunction")
            .field("dim", &self.dim)
            .finish()
    }
}

impl ZeroHedgingFunction {
    pub fn new(
        dim: usize,
        eval: impl Fn(&ScenarioTree, Atom, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ZeroHedgingFunction {
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn from_driver(driver: &Driver) -> Self {
        let driver = driver.clone();
        let dim = driver.dim();
        ZeroHedgingFunction::new(dim, move |tree, atom, y| {
            let z = GainsMatrix::zeros(dim, tree.n_states());
            driver
                .eval(tree, atom, y, &z)
                .unwrap_or_else(|_| vec![f64::NAN; dim])
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, tree: &ScenarioTree, atom: Atom, y: &[f64]) -> Vec<f64> {
        (self.eval)(tree, atom, y)
    }

    /// Runs the zero-gains recursion Y_{u+1} = Y_u - F(u, Y_u, 0) from a
    /// single-level process down to the terminal level.
    pub fn forward_to_terminal(
        &self,
        tree: &ScenarioTree,
        start: &AdaptedProcess,
    ) -> Result<AdaptedProcess> {
        if start.first_time() != start.last_time() {
            return Err(Error::InvalidInput(
                "recursion start must be a single-level process".into(),
            ));
        }
        let mut current = start.clone();
        for u in start.first_time()..tree.horizon() {
            let mut next = AdaptedProcess::zeros(tree, u + 1, u + 1, self.dim)?;
            for atom in tree.atoms_at(u)? {
                let yv = current.value(atom).to_vec();
                let f = self.eval(tree, atom, &yv);
                if f.len() != self.dim || f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteDriverValue {
                        path: tree.label(atom),
                        time: u,
                    });
                }
                let stepped: Vec<f64> = yv.iter().zip(&f).map(|(a, b)| a - b).collect();
                for (_, child) in tree.children(atom)? {
                    next.set(child, stepped.clone());
                }
            }
            current = next;
        }
        Ok(current)
    }
}

/// The compensated shift that leaves every endpoint unchanged: adds `k` to
/// the section at `time` and evaluates the next time at y + k minus k.
/// Demonstrates that the zero-gains section is not unique.
pub fn shifted_zero_hedging(
    zh: &ZeroHedgingFunction,
    time: usize,
    k: Vec<f64>,
) -> ZeroHedgingFunction {
    let inner = zh.clone();
    let dim = zh.dim();
    ZeroHedgingFunction::new(dim, move |tree, atom, y| {
        if atom.time() == time {
            let mut v = inner.eval(tree, atom, y);
            for (vi, ki) in v.iter_mut().zip(&k) {
                *vi += ki;
            }
            v
        } else if atom.time() == time + 1 {
            let shifted: Vec<f64> = y.iter().zip(&k).map(|(a, b)| a + b).collect();
            let mut v = inner.eval(tree, atom, &shifted);
            for (vi, ki) in v.iter_mut().zip(&k) {
                *vi -= ki;
            }
            v
        } else {
            inner.eval(tree, atom, y)
        }
    })
}

/// Verifies on sampled constant initial values that the zero-gains section
/// and the endpoint map tell the same story: running the recursion from a
/// value at the endpoint time and querying the endpoints must return that
/// value.
pub fn endpoint_pair_consistency(
    tree: &ScenarioTree,
    zh: &ZeroHedgingFunction,
    endpoints: &EndpointOracle,
    samples: &[Vec<f64>],
) -> Result<()> {
    for y0 in samples {
        if y0.len() != zh.dim() {
            return Err(Error::DimensionMismatch(
                "consistency sample has the wrong dimension".into(),
            ));
        }
        let t = endpoints.time();
        let start = AdaptedProcess::from_fn(tree, t, zh.dim(), |_| y0.clone())?;
        let q = zh.forward_to_terminal(tree, &start)?;
        let back = endpoints.query(tree, &q)?;
        for atom in tree.atoms_at(t)? {
            let got = back.value(atom);
            let err = got
                .iter()
                .zip(y0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            if err > RECOVERY_TOL {
                return Err(Error::InconsistentPair(format!(
                    "recursion from {y0:?} at {} returns {got:?} through the endpoints, off by {err:.3e}",
                    tree.label(atom)
                )));
            }
        }
    }
    Ok(())
}

/// Default initial values for the consistency spot check.
fn default_consistency_samples(dim: usize) -> Vec<Vec<f64>> {
    [-2.0, 0.0, 1.5]
        .iter()
        .map(|&v| vec![v; dim])
        .collect()
}

/// Recovered step data at one atom: the current value, the driver value and
/// the gains matrix extracted from the next-time values.
#[derive(Clone, Debug)]
pub struct RecoveredStep {
    pub y: Vec<f64>,
    pub f_value: Vec<f64>,
    pub z: GainsMatrix,
}

/// Recovers the driver value at `atom` from an endpoint map and a zero-gains
/// section: extends the next-time values to a terminal value by the
/// recursion, asks the endpoints for the current value, and reads off
/// F = y - E[y_next | atom] and Z from the centered next-time values.
/// The pair is first spot-checked for consistency on constant samples.
pub fn recover_from_endpoints(
    tree: &ScenarioTree,
    zh: &ZeroHedgingFunction,
    endpoints: &EndpointOracle,
    atom: Atom,
    y_next: &AdaptedProcess,
) -> Result<RecoveredStep> {
    let t = endpoints.time();
    if atom.time() != t {
        return Err(Error::InvalidInput(format!(
            "atom at time {} queried against endpoints at time {t}",
            atom.time()
        )));
    }
    if y_next.first_time() != t + 1 || y_next.last_time() != t + 1 {
        return Err(Error::InvalidInput(format!(
            "next-time values must be a single level at time {}",
            t + 1
        )));
    }
    endpoint_pair_consistency(
        tree,
        zh,
        endpoints,
        &default_consistency_samples(zh.dim()),
    )?;

    let q = zh.forward_to_terminal(tree, y_next)?;
    let y_t = endpoints.query(tree, &q)?;
    let y = y_t.value(atom).to_vec();
    let mu = tree.cond_expect(y_next, atom)?;
    let f_value: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
    let z = represent_centered(tree, atom, y_next)?;
    Ok(RecoveredStep { y, f_value, z })
}

/// Assembles the one-step map out of endpoint observations: each next-time
/// query is extended to a terminal value by the zero-gains recursion and
/// sent through the endpoint map. Composing with [`recover_from_one_step`]
/// recovers the driver at arbitrary (y, Z) probes.
pub fn one_step_oracle_from_endpoints(
    tree: &ScenarioTree,
    zh: &ZeroHedgingFunction,
    endpoints: &EndpointOracle,
) -> OneStepOracle {
    let time = endpoints.time();
    let dim = endpoints.dim();
    let tree = tree.clone();
    let zh = zh.clone();
    let endpoints = endpoints.clone();
    OneStepOracle::new(time, dim, move |y_next: &AdaptedProcess| {
        let q = zh.forward_to_terminal(&tree, y_next)?;
        endpoints.query(&tree, &q)
    })
}
