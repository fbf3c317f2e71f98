//! Extend a static expectation to a dynamic, time-consistent family, or
//! obtain a certificate that no such extension exists.
//!
//! The ordinary mean extends to the conditional expectations. A mixture of
//! mean and essential infimum looks harmless as a one-shot valuation, but
//! gluing it across time levels fails: the extension procedure returns a
//! concrete tower-property violation instead of a family. Run with:
//!
//! ```text
//! cargo run -p bsde --example extend_static
//! ```

use bsde::static2dyn::Inconsistency;
use bsde::{builtin_static, extend_static, AdaptedProcess, Atom, ExtensionResult, ScenarioTree, StaticKind};

/// Mean of a terminal variable over the subtree rooted at `atom`.
fn subtree_mean(tree: &ScenarioTree, q: &AdaptedProcess, atom: Atom) -> bsde::Result<f64> {
    let mut total = 0.0;
    for terminal in tree.atoms_at(tree.horizon())? {
        if tree.is_ancestor(atom, terminal) {
            total += tree.prob(terminal) * q.value(terminal)[0];
        }
    }
    Ok(total / tree.prob(atom))
}

fn main() -> bsde::Result<()> {
    let tree = ScenarioTree::markov(2, 2, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]])?;
    let q = AdaptedProcess::terminal_from_lex(&tree, vec![
        vec![0.0],
        vec![-2.0],
        vec![4.0],
        vec![-1.0],
    ])?;

    // The mean extends: the family it produces is the conditional
    // expectation process.
    let mean = builtin_static(StaticKind::Mean)?;
    match extend_static(&tree, &mean, &q)? {
        ExtensionResult::Extended(family) => {
            println!("the mean extends to a dynamic family:");
            for t in 0..=tree.horizon() {
                for atom in tree.atoms_at(t)? {
                    let y = family.value(atom)[0];
                    let reference = subtree_mean(&tree, &q, atom)?;
                    println!(
                        "  y at t={t} {} = {:+.6} (conditional mean {:+.6})",
                        tree.label(atom),
                        y,
                        reference
                    );
                    assert!((y - reference).abs() <= 1e-8);
                }
            }
        }
        ExtensionResult::Inconsistent(c) => panic!("the mean must extend, got {c:?}"),
    }

    // A mixture of mean and essential infimum values any single variable
    // just fine, but no dynamic family can agree with it on every level.
    let mixture = builtin_static(StaticKind::Mixture { alpha: 0.1 })?;
    println!("\nmixture (0.1 mean + 0.9 essinf) on the same variable:");
    match extend_static(&tree, &mixture, &q)? {
        ExtensionResult::Extended(_) => panic!("the mixture must not extend"),
        ExtensionResult::Inconsistent(Inconsistency::TowerMismatch {
            time,
            slice_time,
            path,
            y_from_terminal,
            y_from_slice,
            e_terminal,
            e_slice,
            gap,
        }) => {
            println!("certificate: tower property fails at t={time} {path}");
            println!("  valuing the terminal variable directly: y = {y_from_terminal:+.6}");
            println!("  valuing the t={slice_time} values re-read as terminal: y = {y_from_slice:+.6}");
            println!("  masked map of terminal = {e_terminal:+.6}");
            println!("  masked map of slice    = {e_slice:+.6}");
            println!("  gap = {gap:.6}");
            assert!(gap > 1e-6);
        }
        ExtensionResult::Inconsistent(other) => {
            panic!("expected a tower mismatch certificate, got {other:?}")
        }
    }
    Ok(())
}
