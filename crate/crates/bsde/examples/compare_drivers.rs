//! Check the order-comparison conditions for two backward problems and
//! watch the conclusion flip when the terminal order is broken.
//!
//! Both problems use the same risk-averse driver; the first terminal
//! variable dominates the second everywhere. The four conditions (terminal
//! order, driver order, sensitivity and monotonicity) then force the whole
//! first value process to dominate the second. Run with:
//!
//! ```text
//! cargo run -p bsde --example compare_drivers
//! ```

use bsde::comparison::{check_conditions, ComparisonReport, ModeSchedule};
use bsde::{AdaptedProcess, Driver, ScenarioTree};

fn print_verdict(label: &str, report: &ComparisonReport) {
    println!("{label}:");
    println!("  terminal order holds   = {}", report.terminal_order_holds);
    println!("  driver order holds     = {}", report.driver_order_holds);
    println!("  sensitivity holds      = {}", report.sensitivity_holds);
    println!("  monotonicity holds     = {}", report.monotonicity_holds);
    println!(
        "  root difference        = {:+.6}",
        report.root_difference[0]
    );
    println!("  minimum difference     = {:+.6}", report.conclusion_min);
    println!(
        "  conclusion             = {}",
        if report.conclusion_holds() {
            "order preserved everywhere"
        } else {
            "violated"
        }
    );
    for v in report.conclusion_violations.iter().take(3) {
        println!(
            "    violation at t={} {} component {}: {:+.6}",
            v.time, v.path, v.component, v.difference
        );
    }
}

fn main() -> bsde::Result<()> {
    let tree = ScenarioTree::markov(2, 3, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]])?;
    let driver = Driver::worst_case_tilt(1, 0.3)?;

    // Payoff counting up-moves, and the same payoff raised by one half.
    let q2 = AdaptedProcess::from_fn(&tree, tree.horizon(), 1, |atom| {
        let ups = tree.path(atom).iter().filter(|&&s| s == 1).count();
        vec![ups as f64 - 1.0]
    })?;
    let half = AdaptedProcess::from_fn(&tree, tree.horizon(), 1, |_| vec![0.5])?;
    let q1 = q2.add(&half)?;

    let ordered = check_conditions(&tree, &driver, &driver, &q1, &q2, &ModeSchedule::standard())?;
    print_verdict("dominating pair", &ordered.report);
    assert!(ordered.report.conditions_hold());
    assert!(ordered.report.conclusion_holds());

    // Dent the first terminal value on one path only. The terminal order
    // condition now fails and the report names a concrete violation.
    let dent = AdaptedProcess::from_fn(&tree, tree.horizon(), 1, |atom| {
        vec![if tree.path(atom).iter().all(|&s| s == 0) {
            -2.0
        } else {
            0.0
        }]
    })?;
    let q1_dented = q1.add(&dent)?;
    let crossed = check_conditions(
        &tree,
        &driver,
        &driver,
        &q1_dented,
        &q2,
        &ModeSchedule::standard(),
    )?;
    println!();
    print_verdict("dented pair", &crossed.report);
    assert!(!crossed.report.terminal_order_holds);
    assert!(!crossed.report.conclusion_holds());
    Ok(())
}
