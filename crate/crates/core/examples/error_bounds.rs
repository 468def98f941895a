//! Bound evaluation: the test-domain bound as a function of the source
//! weight, the closed-form minimiser next to a grid search, and the
//! comparison against the bound without labeled test data.

use atta_lab::theory::{check_thm2, eval_test_error_bound, gap_term_approx, grid_argmin_w0, optimal_w0, OptimalW0};

fn main() -> atta_lab::Result<()> {
    // Divergence term A, sample count N, complexity d and constant c1.
    let (a, n, d, c1) = (0.3, 1000.0, 68.0, 1.0);
    let b = gap_term_approx(d, n, c1);
    println!("gap term B = {b:.4}");

    for lambda0 in [0.3, 0.6, 0.9] {
        let closed = optimal_w0(lambda0, a, n, d, c1)?;
        let grid = grid_argmin_w0(lambda0, a, b, 10_000)?;
        let at = |w: f64| eval_test_error_bound(w, lambda0, a, b);
        let kind = match closed {
            OptimalW0::Interior(_) => "interior",
            OptimalW0::Zero => "boundary",
        };
        println!(
            "lambda0 {lambda0}: w0* = {:.4} ({kind}), grid {grid:.4}; bound {:.4} at w0*, {:.4} at w0 = lambda0",
            closed.w0(),
            at(closed.w0())?,
            at(lambda0)?
        );
    }

    let lambdas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let report = check_thm2(a, |_| b, &lambdas)?;
    for c in &report.checks {
        println!("lambda0 {:.1}: with test labels {:.4}, without {:.4}", c.lambda0, c.with_labels, c.reference);
    }
    println!("violations: {}", report.violations());
    Ok(())
}
