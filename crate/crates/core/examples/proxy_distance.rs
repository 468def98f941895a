//! Proxy divergence between the synth-4 domains, from a linear domain
//! discriminator, plus the ideal joint error of each source/target pair.

use atta_lab::prelude::*;
use atta_lab::report::domain_name;
use atta_lab::theory::{estimate_gamma, proxy_h_delta_h, DiscriminatorConfig};

fn main() -> atta_lab::Result<()> {
    let bench = gen_benchmark(&BenchmarkSpec::synth4())?;
    let features = |k: usize| -> Vec<Vec<f64>> { bench.domains[k].train.iter().map(|s| s.features.clone()).collect() };
    let source = features(0);
    let held_out: Vec<Vec<f64>> = bench.source().test.iter().map(|s| s.features.clone()).collect();
    println!("source vs held-out source: {:.3}", proxy_h_delta_h(&source, &held_out, &mut Rng::new(0))?);
    for k in 1..bench.domains.len() {
        let d = proxy_h_delta_h(&source, &features(k), &mut Rng::new(0))?;
        let gamma = estimate_gamma(&bench.source().train, &bench.domains[k].train, bench.classes, &DiscriminatorConfig::default())?;
        println!("source vs {}: d_hat {d:.3}, joint error {gamma:.3}", domain_name(k));
    }
    Ok(())
}
