//! SimATTA next to the baselines on both stream orders: source-only, batch
//! statistics recalibration, entropy minimisation with 1 and 10 steps, and
//! the four pool selectors at SimATTA's realized budget.

use atta_lab::baselines::{run_ada, run_source_only, run_stats_adapt, run_tent, SelectorKind, TentConfig};
use atta_lab::engine::FinetuneConfig;
use atta_lab::prelude::*;

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
    let seed = 0;
    for order in [StreamOrder::DomainWise, StreamOrder::Random] {
        let stream = make_stream(&bench, order, 100, seed)?;
        let sim = run_stream(&phi, &bench, &stream, &EngineConfig::default(), seed)?;
        let mut reports = vec![
            run_source_only(&phi, &bench, &stream, seed)?,
            run_stats_adapt(&phi, &bench, &stream, seed, 100)?,
            run_tent(&phi, &bench, &stream, &TentConfig::default(), seed)?,
            run_tent(&phi, &bench, &stream, &TentConfig { steps: 10, ..TentConfig::default() }, seed)?,
        ];
        for kind in [SelectorKind::Random, SelectorKind::EntropyTopk, SelectorKind::Kmeans, SelectorKind::Clue] {
            reports.push(run_ada(kind, &phi, &bench, &stream, sim.budget_used, &FinetuneConfig::default(), seed)?);
        }
        reports.push(sim);
        println!("{} stream", order.as_str());
        println!("  {:<12} {:>7} {:>11} {:>11}", "method", "labels", "target acc", "source drop");
        for r in &reports {
            println!(
                "  {:<12} {:>7} {:>10.1}% {:>10.1}%",
                r.method,
                r.budget_used,
                100.0 * r.mean_target_accuracy(),
                100.0 * r.source_drop()
            );
        }
    }
    Ok(())
}
