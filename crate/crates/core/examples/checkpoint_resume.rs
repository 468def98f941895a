//! Stop a run halfway, serialise the engine state, and resume it. The resumed
//! run ends with exactly the same model and report as an uninterrupted one.

use atta_lab::engine::{Checkpoint, StreamRunner};
use atta_lab::prelude::*;

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let phi = pretrain_source(&bench, &PretrainConfig::default(), &mut Rng::new(0))?;
    let stream = make_stream(&bench, StreamOrder::Random, 100, 1)?;
    let cfg = EngineConfig::default();

    let uninterrupted = StreamRunner::new(&phi, &bench, &stream, &cfg, 1)?.finish("simatta")?;

    let mut first_half = StreamRunner::new(&phi, &bench, &stream, &cfg, 1)?;
    first_half.run_until(stream.len() / 2)?;
    let json = first_half.checkpoint().to_json()?;
    println!("checkpoint after {} steps: {} bytes, {} anchors", first_half.state().t, json.len(), first_half.state().budget_used());

    let resumed = StreamRunner::resume(&phi, &bench, &stream, &cfg, Checkpoint::from_json(&json)?)?.finish("simatta")?;
    println!("summary identical: {}", resumed.summary_csv() == uninterrupted.summary_csv());
    println!("step metrics identical: {}", resumed.metrics_jsonl()? == uninterrupted.metrics_jsonl()?);
    print!("{}", resumed.summary_csv());
    Ok(())
}
