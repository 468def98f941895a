use proptest::prelude::*;

use atta_lab::baselines::{select_samples, SelectorKind};
use atta_lab::cluster::{anchor_budget_guard, ic_step, AnchorProposal, AnchorSet, AnchorWeight, IcConfig, KMeans};
use atta_lab::gate::{gate_batch, GateConfig};
use atta_lab::model::{ce_loss_grad, LabeledSample, ModelParams, Shape};
use atta_lab::rng::Rng;
use atta_lab::streams::{SimulatedOracle, StreamSample};
use atta_lab::theory::{bound_radical, eval_test_error_bound, gap_term_approx, grid_argmin_w0, optimal_w0, OptimalW0};

fn random_params(shape: Shape, scale: f64, rng: &mut Rng) -> ModelParams {
    let data = (0..shape.param_count()).map(|_| scale * rng.normal()).collect();
    ModelParams::from_parts(shape, data, None).unwrap()
}

fn model(seed: u64, dim: usize, classes: usize, scale: f64) -> ModelParams {
    random_params(Shape::linear(dim, classes), scale, &mut Rng::new(seed))
}

fn points(seed: u64, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| (0..dim).map(|_| spread * rng.normal()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_is_monotone_in_both_thresholds(
        seed in any::<u64>(),
        e_l in 1e-6f64..0.5,
        gap in 0.0f64..0.5,
        bump_l in 0.0f64..0.5,
        bump_h in 0.0f64..0.5,
    ) {
        let e_h = e_l + gap;
        let phi = model(seed, 3, 3, 4.0);
        let theta = model(seed ^ 1, 3, 3, 4.0);
        let batch = points(seed, 40, 3, 2.0);
        let base = gate_batch(&batch, &phi, &theta, &GateConfig { e_l, e_h }).unwrap();
        let wider = gate_batch(&batch, &phi, &theta, &GateConfig { e_l: e_l + bump_l, e_h: e_h + bump_l + bump_h }).unwrap();
        let wider_low: Vec<usize> = wider.low.iter().map(|p| p.position).collect();
        prop_assert!(base.low.iter().all(|p| wider_low.contains(&p.position)));
        prop_assert!(wider.high.iter().all(|i| base.high.contains(i)));
    }

    #[test]
    fn pseudo_labels_are_source_argmax(seed in any::<u64>()) {
        let phi = model(seed, 4, 3, 6.0);
        let theta = model(seed ^ 7, 4, 3, 1.0);
        let batch = points(seed, 60, 4, 3.0);
        let split = gate_batch(&batch, &phi, &theta, &GateConfig { e_l: 0.3, e_h: 0.5 }).unwrap();
        for p in &split.low {
            prop_assert_eq!(p.label, phi.predict(&batch[p.position]).unwrap());
        }
    }

    #[test]
    fn softmax_is_a_distribution(seed in any::<u64>(), scale in 0.01f64..50.0) {
        let m = model(seed, 5, 4, scale);
        for x in points(seed, 10, 5, 10.0) {
            let p = m.predict_proba(&x).unwrap();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>(), hidden in prop::option::of(1usize..4)) {
        let mut rng = Rng::new(seed);
        let shape = Shape { input_dim: 3, hidden, classes: 3 };
        let params = random_params(shape, 1.0, &mut rng);
        let batch: Vec<LabeledSample> =
            (0..5).map(|i| LabeledSample::new((0..3).map(|_| rng.normal()).collect(), i % 3)).collect();
        let weights: Vec<f64> = (0..5).map(|_| 0.5 + rng.uniform()).collect();
        let (_, grad) = ce_loss_grad(&params, &batch, &weights).unwrap();
        let h = 1e-3;
        for i in 0..params.as_slice().len() {
            let at = |delta: f64| {
                let mut p = params.clone();
                p.as_mut_slice()[i] += delta;
                ce_loss_grad(&p, &batch, &weights).unwrap().0
            };
            // Five-point stencil, accurate to O(h^4).
            let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let rel = (grad.data[i] - numeric).abs() / grad.data[i].abs().max(numeric.abs()).max(1e-8);
            prop_assert!(rel <= 1e-4, "param {} analytic {} numeric {}", i, grad.data[i], numeric);
        }
    }

    #[test]
    fn ic_conserves_weight_and_keeps_old_anchors(seed in any::<u64>(), sizes in prop::collection::vec(1usize..25, 1..12)) {
        let mut rng = Rng::new(seed);
        let mut anchors = AnchorSet::new();
        let mut oracle = SimulatedOracle::new(vec![0; 400]);
        let (mut fed, mut next) = (0, 0);
        for (step, &m) in sizes.iter().enumerate() {
            let center = 3.0 * rng.normal();
            let u_new: Vec<StreamSample> = (0..m)
                .map(|_| {
                    next += 1;
                    StreamSample { index: next - 1, features: vec![center + rng.normal()] }
                })
                .collect();
            let before = anchors.anchors().to_vec();
            let added = ic_step(&mut anchors, &u_new, 2 + step, |x| Ok(x.to_vec()), &mut oracle, &IcConfig::default(), &mut rng, step).unwrap();
            fed += m;
            prop_assert_eq!(anchors.len(), before.len() + added);
            for (old, now) in before.iter().zip(anchors.anchors()) {
                prop_assert_eq!(&old.features, &now.features);
                prop_assert_eq!(old.label, now.label);
            }
            prop_assert_eq!(anchors.total_weight(), AnchorWeight::from_count(fed));
        }
    }

    #[test]
    fn budget_guard_never_exceeds_remaining(sizes in prop::collection::vec(1usize..50, 0..20), remaining in 0usize..25) {
        let proposals: Vec<AnchorProposal> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| AnchorProposal { cluster: i, sample: i, cluster_size: s })
            .collect();
        let kept = anchor_budget_guard(&proposals, remaining);
        prop_assert_eq!(kept.len(), remaining.min(proposals.len()));
        prop_assert!(kept.windows(2).all(|w| w[0].cluster_size >= w[1].cluster_size));
        prop_assert!(kept.iter().all(|k| proposals.contains(k)));
        // Nothing left out is larger than anything kept.
        let smallest_kept = kept.iter().map(|k| k.cluster_size).min().unwrap_or(usize::MAX);
        let dropped_max = proposals.iter().filter(|p| !kept.contains(p)).map(|p| p.cluster_size).max().unwrap_or(0);
        prop_assert!(kept.is_empty() || dropped_max <= smallest_kept);
    }

    #[test]
    fn lloyd_inertia_never_increases(seed in any::<u64>(), k in 1usize..6) {
        let pts = points(seed, 60, 2, 3.0);
        let weights: Vec<f64> = (0..60).map(|i| 1.0 + (i % 4) as f64).collect();
        let r = KMeans::new(k).restarts(1).fit(&pts, &weights, &mut Rng::new(seed)).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0)));
    }

    #[test]
    fn entropy_topk_ignores_pool_order(seed in any::<u64>(), budget in 1usize..20) {
        let theta = model(seed, 3, 3, 2.0);
        let pool: Vec<StreamSample> = points(seed, 40, 3, 2.0)
            .into_iter()
            .enumerate()
            .map(|(index, features)| StreamSample { index, features })
            .collect();
        let mut shuffled = pool.clone();
        Rng::new(seed ^ 5).shuffle(&mut shuffled);
        let pick = |p: &[StreamSample]| -> Vec<usize> {
            let mut v: Vec<usize> = select_samples(SelectorKind::EntropyTopk, p, &theta, budget, &mut Rng::new(0))
                .unwrap()
                .into_iter()
                .map(|i| p[i].index)
                .collect();
            v.sort_unstable();
            v
        };
        prop_assert_eq!(pick(&pool), pick(&shuffled));
    }

    #[test]
    fn radical_is_at_least_one(w0 in 0.0f64..=1.0, lambda0 in 0.001f64..0.999, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let r = bound_radical(w0, lambda0).unwrap();
        prop_assert!(r >= 1.0);
        prop_assert!(eval_test_error_bound(w0, lambda0, a, b).unwrap() >= w0 * a + b);
        prop_assert_eq!(eval_test_error_bound(lambda0, lambda0, a, b).unwrap(), lambda0 * a + b);
    }

    #[test]
    fn closed_form_weight_matches_grid(
        lambda0 in 0.02f64..0.98,
        a in 0.05f64..2.0,
        n in 100.0f64..10_000.0,
        d in 1.0f64..200.0,
        c1 in 0.2f64..2.0,
    ) {
        let w = optimal_w0(lambda0, a, n, d, c1).unwrap();
        prop_assert!((0.0..=lambda0).contains(&w.w0()));
        if let OptimalW0::Interior(w0) = w {
            let grid = grid_argmin_w0(lambda0, a, gap_term_approx(d, n, c1), 10_000).unwrap();
            prop_assert!((w0 - grid).abs() <= 1e-4 + 1e-12, "closed {} grid {}", w0, grid);
        }
    }
}
