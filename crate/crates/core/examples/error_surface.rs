//! Loss surface over the balancing pair (lambda0, w0) on synth-4. Prints the
//! seed-averaged test loss and, per lambda0, the w0 that minimises it.

use atta_lab::prelude::*;
use atta_lab::theory::{error_surface_sweep, SweepConfig};

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
    let table = error_surface_sweep(&phi, &bench, &SweepConfig::default())?;

    print!("lambda0\\w0");
    for w in &table.w_grid {
        print!("  {w:.1}  ");
    }
    println!();
    for (row, l) in table.mean_losses().iter().zip(&table.lambda_grid) {
        print!("{l:.1}       ");
        for (test, _, _) in row {
            print!(" {test:.3} ");
        }
        println!();
    }
    for (l, w) in table.test_argmin_w0() {
        println!("lambda0 {l:.1}: test loss lowest at w0 {w:.1}");
    }
    let (l, w) = table.combined_argmin();
    println!("source + test loss lowest at lambda0 {l:.1}, w0 {w:.1}");
    Ok(())
}
