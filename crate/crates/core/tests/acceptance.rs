//! End-to-end acceptance gate: runs the full verification suite and prints
//! one pass/fail line per criterion. Run with `--nocapture` to see the lines
//! even on success.

use wqed::verify::run_all;

#[test]
fn acceptance_criteria() {
    let results = run_all(0.0);
    assert_eq!(results.len(), 12);
    let mut all_ok = true;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {:2}: {}", r.id, r.name);
        if !r.passed {
            all_ok = false;
            for d in &r.details {
                println!("        {d}");
            }
        }
    }
    assert!(
        all_ok,
        "one or more acceptance criteria failed (details above)"
    );
}
