//! Adapt a source model to the synth-4 stream with SimATTA and print the
//! real-time and post-adaptation accuracies.

use atta_lab::prelude::*;
use atta_lab::report::domain_name;

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
    let stream = make_stream(&bench, StreamOrder::DomainWise, 100, 0)?;

    let cfg = EngineConfig { budget: 300, ..EngineConfig::default() };
    let report = run_stream(&phi, &bench, &stream, &cfg, 0)?;

    println!("labels used: {} of {}", report.budget_used, cfg.budget);
    for (segment, acc) in report.segment_accuracy().iter().enumerate() {
        println!("while streaming {}: {:.1}%", domain_name(segment + 1), 100.0 * acc);
    }
    for (k, (pre, post)) in report.pre_accuracy.iter().zip(&report.post_accuracy).enumerate() {
        println!("{:<9} source model {:5.1}%  adapted {:5.1}%", domain_name(k), 100.0 * pre, 100.0 * post);
    }
    Ok(())
}
