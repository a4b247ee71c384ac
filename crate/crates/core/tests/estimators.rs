use fedsim::algorithms::{mvr_init, output_weights, practical_global_momentum, select_output};
use fedsim::local::{make_permutations, run_local, LocalWorkSpec};
use fedsim::problems::{Problem, Vector};
use fedsim::sampling::SamplingScheme;

#[test]
fn mvr_init_under_full_participation_is_the_gradient() {
    let p = Problem::logistic(&[3, 4, 5], 3, 0.1, 4).unwrap();
    let x = Vector::from_row_slice(&[0.3, -0.2, 0.5]);
    let m = mvr_init(&p, &SamplingScheme::full(3).unwrap(), &x, 7, 1).unwrap();
    assert!((m - p.full_gradient(&x).unwrap()).amax() <= 1e-12);
}

#[test]
fn mvr_init_is_an_unbiased_average() {
    let p = Problem::quad_obj();
    let x = Vector::from_row_slice(&[0.4, -0.1, 0.2, 0.0, 0.3, -0.5]);
    let g = p.full_gradient(&x).unwrap();
    let scheme = SamplingScheme::one_client(vec![1.0 / 3.0; 3]).unwrap();
    let draws = 20_000;
    // per-draw estimate (w_i/π_i)∇f_i(x): deviation per coordinate bounded by its range
    let spread = (0..3)
        .map(|i| (p.client_gradient(i, &x).unwrap() * (3.0 * p.weights()[i]) - &g).amax())
        .fold(0.0, f64::max);
    let m = mvr_init(&p, &scheme, &x, draws, 8).unwrap();
    assert!((m - &g).amax() <= 5.0 * spread / (draws as f64).sqrt());
}

#[test]
fn output_weights_are_geometric_and_normalized() {
    let (mu, eta) = (0.5, 0.2);
    let w = output_weights(50, mu, eta).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let ratio = 1.0 / (1.0 - mu * eta / 2.0);
    for pair in w.windows(2) {
        assert!((pair[1] / pair[0] - ratio).abs() <= 1e-12);
    }
    let flat = output_weights(4, 0.0, 0.3).unwrap();
    assert!(flat.iter().all(|v| (v - 0.25).abs() <= 1e-15));
    assert!(output_weights(0, 0.1, 0.1).is_err());
    assert!(output_weights(3, 1.0, 4.0).is_err());
    assert!(output_weights(20_000, 1.0, 1.0).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn selected_output_frequencies_follow_the_weights() {
    let iterates: Vec<Vector> = (0..5).map(|k| Vector::from_element(1, k as f64)).collect();
    let (mu, eta) = (1.0, 0.8);
    let w = output_weights(5, mu, eta).unwrap();
    let trials = 20_000;
    let mut counts = [0usize; 5];
    for seed in 0..trials {
        let (idx, x) = select_output(&iterates, mu, eta, seed).unwrap();
        assert_eq!(x[0], idx as f64);
        counts[idx] += 1;
    }
    for k in 0..5 {
        let freq = counts[k] as f64 / trials as f64;
        let sd = (w[k] * (1.0 - w[k]) / trials as f64).sqrt();
        assert!((freq - w[k]).abs() <= 5.0 * sd, "index {k}: {freq} vs {}", w[k]);
    }
    assert_eq!(
        select_output(&iterates, mu, eta, 3).unwrap(),
        select_output(&iterates, mu, eta, 3).unwrap()
    );
}

#[test]
fn practical_estimate_recovers_the_client_gradient_as_steps_shrink() {
    let p = Problem::logistic(&[6], 3, 0.1, 11).unwrap();
    let x = Vector::from_row_slice(&[0.2, 0.1, -0.3]);
    let g = p.client_gradient(0, &x).unwrap();
    let plan = make_permutations(5, 0, 0, 2, 6);
    let err = |eta: f64| {
        let spec = LocalWorkSpec::new(2, 12.0, eta);
        let out = run_local(&p, 0, &x, &spec, &plan).unwrap();
        (practical_global_momentum(&out.delta, out.steps_taken, spec.step_size()).unwrap() - &g).norm()
    };
    let (coarse, fine) = (err(1e-1), err(1e-3));
    assert!(fine < 1e-3 * g.norm().max(1.0));
    // first-order bias: shrinking the step 100x shrinks the error about 100x
    assert!(fine < coarse / 50.0);
}

#[test]
fn practical_estimate_of_one_step_is_the_sample_gradient() {
    let p = Problem::quad_obj();
    let x = Vector::from_row_slice(&[1.0, 0.0, -1.0, 0.5, 0.5, 0.0]);
    let plan = make_permutations(0, 0, 1, 1, p.size(1));
    let spec = LocalWorkSpec::new(1, 1.0, 0.25).with_truncation(p.size(1) - 1);
    let out = run_local(&p, 1, &x, &spec, &plan).unwrap();
    assert_eq!(out.steps_taken, 1);
    let est = practical_global_momentum(&out.delta, 1, 0.25).unwrap();
    let exact = p.gradient(1, plan.epochs[0][0], &x).unwrap();
    assert!((est - exact).amax() <= 1e-15);
    assert!(practical_global_momentum(&out.delta, 0, 0.25).is_err());
    assert!(practical_global_momentum(&out.delta, 1, 0.0).is_err());
}
