//! Represent centered one-step values as a gains matrix acting on the
//! state-indicator martingale differences, and inspect the equivalence
//! class that representation lives in.
//!
//! Run with:
//!
//! ```text
//! cargo run -p bsde --example martingale_representation
//! ```

use bsde::{
    canonicalize, equivalent, increment_distance, represent, AdaptedProcess, ScenarioTree,
};

fn main() -> bsde::Result<()> {
    let kernel = vec![vec![0.6, 0.4, 0.0], vec![0.3, 0.3, 0.4], vec![0.0, 0.5, 0.5]];
    let tree = ScenarioTree::markov(3, 2, 1, &kernel)?;
    let root = tree.root();

    // Next-time values with the conditional mean removed.
    let v = AdaptedProcess::from_fn(&tree, 1, 1, |atom| {
        vec![match tree.path(atom).last().copied().unwrap() {
            0 => 2.0,
            1 => -1.0,
            _ => 0.5,
        }]
    })?;
    let mu = tree.cond_expect(&v, root)?;
    let centered: Vec<Vec<f64>> = tree
        .children(root)?
        .into_iter()
        .map(|(_, child)| vec![v.value(child)[0] - mu[0]])
        .collect();

    let z = represent(&tree, root, &centered)?;
    println!("canonical gains matrix at the root (one row, one column per state):");
    print!("  [");
    for j in 0..z.n_cols() {
        print!(" {:+.6}", z.get(0, j));
    }
    println!(" ]");
    println!("is canonical: {}", z.is_canonical(&tree, root)?);

    // The representation reproduces the centered values exactly.
    for (state, w) in tree.support(root)?.iter().zip(&centered) {
        let inc = z.increment(&tree, root, *state)?;
        println!(
            "  state {state}: realized increment {:+.6}, centered value {:+.6}",
            inc[0], w[0]
        );
        assert!((inc[0] - w[0]).abs() <= 1e-12);
    }

    // Adding one common vector to every supported column changes the matrix
    // but not a single realized increment: the two matrices are equivalent.
    let mut shifted = z.clone();
    for &j in tree.support(root)? {
        shifted.set(0, j, shifted.get(0, j) + 7.5);
    }
    println!(
        "\ncommon column shift: equivalent = {}, increment distance = {:.3e}",
        equivalent(&tree, root, &z, &shifted)?,
        increment_distance(&tree, root, &z, &shifted)?
    );

    // Canonicalizing the shifted matrix lands back on the original.
    let canon = canonicalize(&tree, root, &shifted)?;
    let mut max_diff = 0.0_f64;
    for j in 0..z.n_cols() {
        max_diff = max_diff.max((canon.get(0, j) - z.get(0, j)).abs());
    }
    println!("canonicalized shift vs original: max difference = {max_diff:.3e}");
    assert!(max_diff <= 1e-12);

    // Disturbing a single supported increment leaves the class.
    let mut broken = z.clone();
    let first = tree.support(root)?[0];
    broken.set(0, first, broken.get(0, first) + 1.0);
    println!(
        "single-entry perturbation: equivalent = {}",
        equivalent(&tree, root, &z, &broken)?
    );
    Ok(())
}
