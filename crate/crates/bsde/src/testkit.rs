//! Seeded generators for random trees, terminal conditions and drivers.
//!
//! Property tests and examples need a stream of small, well-formed problem
//! instances. Everything here is deterministic given the seed and produces
//! inputs that satisfy the library's preconditions by construction; nothing
//! in the numerical code depends on this module.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::driver::Driver;
use crate::error::Result;
use crate::representation::{represent, GainsMatrix};
use crate::tree::{AdaptedProcess, Atom, ScenarioTree};

/// A reproducible generator for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random time-homogeneous tree with between 2 and `max_states` states and
/// between 1 and `max_horizon` steps. Roughly one kernel entry in five is
/// zeroed, so generated trees routinely exercise support pruning.
pub fn random_tree(rng: &mut ChaCha8Rng, max_states: usize, max_horizon: usize) -> ScenarioTree {
    let n = rng.random_range(2..=max_states.max(2));
    let horizon = rng.random_range(1..=max_horizon.max(1));
    loop {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random_range(0.05..1.0)
                    }
                })
                .collect();
            if row.iter().sum::<f64>() == 0.0 {
                let j = rng.random_range(0..n);
                row[j] = 1.0;
            }
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
            rows.push(row);
        }
        let initial = rng.random_range(0..n);
        if let Ok(tree) = ScenarioTree::markov(n, horizon, initial, &rows) {
            return tree;
        }
    }
}

/// Terminal condition with independent entries drawn from [-bound, bound).
pub fn random_terminal(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    dim: usize,
    bound: f64,
) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, tree.horizon(), dim, |_| {
        (0..dim).map(|_| rng.random_range(-bound..bound)).collect()
    })
    .expect("the terminal level always exists")
}

/// Child values over the supported states of an atom with the conditional
/// mean removed: the raw material of the representation theorem.
pub fn random_zero_mean_children(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    atom: Atom,
    dim: usize,
    bound: f64,
) -> Result<Vec<Vec<f64>>> {
    let children = tree.children(atom)?;
    let row = tree.kernel_row(atom)?.to_vec();
    let mut values: Vec<Vec<f64>> = children
        .iter()
        .map(|_| (0..dim).map(|_| rng.random_range(-bound..bound)).collect())
        .collect();
    for c in 0..dim {
        let mean: f64 = children
            .iter()
            .zip(&values)
            .map(|((state, _), v)| row[*state] * v[c])
            .sum();
        for v in values.iter_mut() {
            v[c] -= mean;
        }
    }
    Ok(values)
}

/// Canonical gains matrix at an atom, built by representing random
/// zero-mean child values.
pub fn random_canonical_gains(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    atom: Atom,
    dim: usize,
    bound: f64,
) -> Result<GainsMatrix> {
    let values = random_zero_mean_children(rng, tree, atom, dim, bound)?;
    represent(tree, atom, &values)
}

/// Scalar driver `F(y, Z) = a y + sum_j c_j zeta_j` with `|a| < 1`, all
/// `c_j >= 0` and `sum_j c_j < 1`. Such drivers keep `y - F` strictly
/// increasing and dominate the worst supported noise gap, so order
/// comparison holds between any two of their solutions with ordered
/// terminal conditions.
pub fn random_balanced_scalar_driver(rng: &mut ChaCha8Rng, n_states: usize) -> Driver {
    let a = rng.random_range(-0.9..0.9);
    let mut c: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.0..1.0)).collect();
    let total = rng.random_range(0.1..0.95);
    let sum: f64 = c.iter().sum();
    for v in c.iter_mut() {
        *v *= total / sum.max(1e-9);
    }
    Driver::linear(1, vec![vec![a]], c, vec![0.0]).expect("coefficients are finite")
}

/// One of the shipped driver families at random: zero, affine with a
/// contraction y-matrix, or a pessimistic/optimistic tilt.
pub fn random_builtin_driver(rng: &mut ChaCha8Rng, dim: usize, n_states: usize) -> Driver {
    match rng.random_range(0..4) {
        0 => Driver::zero(dim),
        1 => {
            let a: Vec<Vec<f64>> = (0..dim)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.random_range(-0.3..0.3) / dim as f64)
                        .collect()
                })
                .collect();
            let c: Vec<f64> = (0..n_states).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            Driver::linear(dim, a, c, b).expect("coefficients are finite")
        }
        2 => Driver::worst_case_tilt(dim, rng.random_range(0.05..0.9))
            .expect("gamma is finite"),
        _ => Driver::best_case_tilt(dim, rng.random_range(0.05..0.9))
            .expect("gamma is finite"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_per_seed() {
        let mut a = rng(11);
        let mut b = rng(11);
        let ta = random_tree(&mut a, 4, 5);
        let tb = random_tree(&mut b, 4, 5);
        assert_eq!(ta.n_states(), tb.n_states());
        assert_eq!(ta.horizon(), tb.horizon());
        let qa = random_terminal(&mut a, &ta, 2, 3.0);
        let qb = random_terminal(&mut b, &tb, 2, 3.0);
        assert_eq!(qa.sub(&qb).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn zero_mean_children_have_zero_conditional_mean() {
        let mut r = rng(5);
        for _ in 0..20 {
            let tree = random_tree(&mut r, 4, 3);
            let atom = tree.root();
            let values = random_zero_mean_children(&mut r, &tree, atom, 2, 4.0).unwrap();
            let row = tree.kernel_row(atom).unwrap().to_vec();
            let children = tree.children(atom).unwrap();
            for c in 0..2 {
                let mean: f64 = children
                    .iter()
                    .zip(&values)
                    .map(|((state, _), v)| row[*state] * v[c])
                    .sum();
                assert!(mean.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn balanced_scalar_drivers_have_contracting_coefficients() {
        let mut r = rng(7);
        for _ in 0..20 {
            let driver = random_balanced_scalar_driver(&mut r, 4);
            assert!(driver.dim() == 1);
            assert!(driver.is_normalized() || !driver.is_y_independent());
        }
    }

    #[test]
    fn random_trees_inhabit_the_requested_ranges() {
        let mut r = rng(3);
        for _ in 0..50 {
            let tree = random_tree(&mut r, 4, 5);
            assert!((2..=4).contains(&tree.n_states()));
            assert!((1..=5).contains(&tree.horizon()));
            assert!(tree.n_atoms_at(tree.horizon()).unwrap() >= 1);
        }
    }
}
