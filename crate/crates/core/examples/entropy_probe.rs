//! Fine-tune the source model on the 300 lowest-entropy or the 300
//! highest-entropy target samples and compare what each does to source and
//! target loss.

use atta_lab::prelude::*;
use atta_lab::theory::{entropy_probe, ProbeConfig};

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
    let report = entropy_probe(&phi, &bench, &ProbeConfig::default(), &Rng::new(0))?;
    for (name, arm) in [("low entropy", &report.low), ("high entropy", &report.high)] {
        println!(
            "{name:<13} mean entropy {:.4}: source loss {:.4} (acc {:.3}), target loss {:.4} (acc {:.3})",
            arm.mean_entropy, arm.source_loss, arm.source_accuracy, arm.target_loss, arm.target_accuracy
        );
    }
    println!("oracle queries: {}", report.oracle_queries);
    Ok(())
}
