//! Incremental clustering over a drifting 2-D stream. A batch from a new
//! region spawns anchors; a batch from a region already covered only adds
//! weight to the anchors there, even though the cluster count keeps growing.

use atta_lab::cluster::{ic_step, AnchorSet, IcConfig};
use atta_lab::rng::Rng;
use atta_lab::streams::{SimulatedOracle, StreamSample};

fn blob(center: (f64, f64), n: usize, first_index: usize, rng: &mut Rng) -> Vec<StreamSample> {
    (0..n)
        .map(|i| StreamSample {
            index: first_index + i,
            features: vec![center.0 + 0.3 * rng.normal(), center.1 + 0.3 * rng.normal()],
        })
        .collect()
}

fn main() -> atta_lab::Result<()> {
    let mut rng = Rng::new(3);
    let mut anchors = AnchorSet::new();
    // The learner never sees these labels directly; each anchor costs one query.
    let mut oracle = SimulatedOracle::new((0..400).map(|i| usize::from(i >= 200)).collect());
    let batches = [
        ("region A", (0.0, 0.0)),
        ("region A again", (0.0, 0.0)),
        ("region B", (6.0, 6.0)),
        ("region B again", (6.0, 6.0)),
    ];
    let mut nc = 2;
    for (step, (name, center)) in batches.iter().enumerate() {
        let first = if step < 2 { 100 * step } else { 200 + 100 * (step - 2) };
        let batch = blob(*center, 100, first, &mut rng);
        let added = ic_step(&mut anchors, &batch, nc, |x| Ok(x.to_vec()), &mut oracle, &IcConfig::default(), &mut rng, step)?;
        println!(
            "{name:<15} nc {nc}: {added} new anchors, {} total, weight {}",
            anchors.len(),
            anchors.total_weight()
        );
        nc += 2;
    }
    for a in anchors.anchors() {
        println!("anchor at ({:5.2}, {:5.2}) label {} weight {}", a.features[0], a.features[1], a.label, a.weight);
    }
    println!("oracle queries: {}", atta_lab::streams::Oracle::queries(&oracle));
    Ok(())
}
