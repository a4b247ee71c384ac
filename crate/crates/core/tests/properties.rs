use std::collections::BTreeMap;

use fedsim::aggregation::{aggregate, effective_weights};
use fedsim::algorithms::{GenConfig, Preset, StepSchedule};
use fedsim::problems::{Problem, Vector};
use fedsim::rng;
use fedsim::sampling::{expected_contribution, NormalizerRule, SamplingScheme};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<f64>)> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(1usize..9, n),
            prop::collection::vec(1usize..4, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    })
}

fn problem(sizes: &[usize]) -> Problem {
    let anchors = (0..sizes.len()).map(|i| Vector::from_element(2, i as f64)).collect();
    Problem::duplicated_quadratic(anchors, sizes.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_weights_form_a_distribution((sizes, epochs, probs) in instance()) {
        let p = problem(&sizes);
        let n = sizes.len();
        for preset in [Preset::FedShuffle, Preset::FedAvgRr, Preset::FedNovaRr, Preset::FedShuffleSumOne] {
            let scheme = SamplingScheme::independent(probs.clone()).unwrap();
            let c = GenConfig::preset(preset, &p, scheme, epochs.clone(), StepSchedule::Constant { value: 0.1 }, 1, 0).unwrap();
            let eff = c.effective_objective(&p).unwrap();
            prop_assert_eq!(eff.w_hat.len(), n);
            prop_assert!(eff.w_hat.iter().all(|v| *v > 0.0));
            prop_assert!((eff.w_hat.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            if matches!(preset, Preset::FedShuffle | Preset::FedNovaRr) {
                for (a, b) in eff.w_hat.iter().zip(p.weights()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn unbiased_contributions_equal_weights((sizes, _e, probs) in instance(), b in 1usize..7) {
        let p = problem(&sizes);
        let n = sizes.len();
        let mut schemes = vec![SamplingScheme::full(n).unwrap(), SamplingScheme::independent(probs).unwrap()];
        schemes.push(SamplingScheme::uniform(n, b.min(n)).unwrap());
        for s in &schemes {
            let got = expected_contribution(s, &NormalizerRule::Unbiased, p.weights()).unwrap();
            for (a, w) in got.iter().zip(p.weights()) {
                prop_assert!((a - w).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn draws_are_sorted_valid_subsets(n in 2usize..9, b in 1usize..9, seed in any::<u64>()) {
        let b = b.min(n);
        let pi: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let total: f64 = pi.iter().sum();
        let schemes = [
            SamplingScheme::uniform(n, b).unwrap(),
            SamplingScheme::independent(vec![0.3; n]).unwrap(),
            SamplingScheme::one_client(pi.iter().map(|x| x / total).collect()).unwrap(),
        ];
        let mut r = rng::stream(seed, 0, 0, 0);
        for s in &schemes {
            let d = s.draw(&mut r);
            prop_assert!(!d.is_empty());
            prop_assert!(d.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(d.iter().all(|&i| i < n));
        }
        prop_assert_eq!(schemes[0].draw(&mut r).len(), b);
        prop_assert_eq!(schemes[2].draw(&mut r).len(), 1);
    }

    #[test]
    fn aggregation_is_linear_in_updates(
        deltas in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4),
        scale in -3.0f64..3.0,
    ) {
        let w = [0.1, 0.2, 0.3, 0.4];
        let scheme = SamplingScheme::uniform(4, 2).unwrap();
        let sampled = [1, 3];
        let map = |s: f64| -> BTreeMap<usize, Vector> {
            sampled.iter().map(|&i| (i, Vector::from_row_slice(&deltas[i]) * s)).collect()
        };
        for rule in [NormalizerRule::Unbiased, NormalizerRule::sum_one()] {
            let one = aggregate(&w, &rule, &scheme, &w, &sampled, &map(1.0)).unwrap();
            let scaled = aggregate(&w, &rule, &scheme, &w, &sampled, &map(scale)).unwrap();
            prop_assert!((one * scale - scaled).amax() <= 1e-12);
        }
    }

    #[test]
    fn fewer_completed_steps_shrink_effective_weight((sizes, epochs, _p) in instance()) {
        let n = sizes.len();
        let w: Vec<f64> = vec![1.0 / n as f64; n];
        let scheme = SamplingScheme::full(n).unwrap();
        let c: Vec<f64> = (0..n).map(|i| (sizes[i] * epochs[i]) as f64).collect();
        let mut k = c.clone();
        let base = effective_weights(&w, &c, &k, &NormalizerRule::Unbiased, &scheme, &w).unwrap();
        k[0] = (k[0] - 1.0).max(0.5);
        let cut = effective_weights(&w, &c, &k, &NormalizerRule::Unbiased, &scheme, &w).unwrap();
        prop_assert!(cut.w_hat[0] <= base.w_hat[0] + 1e-15);
    }
}
