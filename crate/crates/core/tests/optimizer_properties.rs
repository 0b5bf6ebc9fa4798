use coopcache::analytic::offloading_closed_form_k1;
use coopcache::model::{
    policy_cpf, policy_uniform, policy_zipf_proportional, validate_policy, ContentLibrary,
    NetworkConfig,
};
use coopcache::optimizer::{grid_search_oracle, marginal_gain, solve_c_given_v, solve_p1};
use proptest::prelude::*;

fn network(sigma: f64, lambda_per_km2: f64) -> NetworkConfig {
    NetworkConfig::reference()
        .with_sigma(sigma)
        .unwrap()
        .with_lambda_p(lambda_per_km2 * 1e-6)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_feasible_monotone_and_beats_grid(
        n_files in 2usize..=5,
        cache in 1usize..=4,
        beta in 0.0f64..1.5,
        sigma in 10.0f64..120.0,
        lambda in 10.0f64..60.0,
    ) {
        prop_assume!(cache < n_files);
        let cfg = network(sigma, lambda);
        let library = ContentLibrary::new(n_files, beta, cache).unwrap();
        let sol = solve_p1(&library, &cfg).unwrap();
        validate_policy(&sol.policy, &library).unwrap();
        prop_assert!(sol.diagnostics.sum_residual < 1e-8);
        prop_assert!(sol.diagnostics.stationarity_residual < 1e-8);
        let c = sol.policy.probs();
        prop_assert!(c.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{:?}", c);
        let oracle = grid_search_oracle(&library, &cfg, 0.05).unwrap();
        prop_assert!(sol.objective >= oracle.objective - 1e-4,
            "solver {} oracle {}", sol.objective, oracle.objective);
    }

    #[test]
    fn threshold_rule_is_scale_invariant(
        q in 1e-4f64..0.5,
        scale in 0.01f64..100.0,
        frac in 0.0f64..1.2,
        n_bar in 0.5f64..12.0,
        z in 1.0f64..80.0,
    ) {
        let v = frac * marginal_gain(0.0, q, n_bar, z);
        let a = solve_c_given_v(v, q, n_bar, z).unwrap();
        let b = solve_c_given_v(v * scale, q * scale, n_bar, z).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn dominates_baselines(
        beta in 0.0f64..1.5,
        sigma in 10.0f64..150.0,
        lambda in 10.0f64..80.0,
    ) {
        let cfg = network(sigma, lambda);
        let library = ContentLibrary::new(100, beta, 5).unwrap();
        let sol = solve_p1(&library, &cfg).unwrap();
        let c = sol.policy.probs();
        prop_assert!(c.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        for base in [policy_cpf(&library), policy_uniform(&library), policy_zipf_proportional(&library)] {
            let o = offloading_closed_form_k1(&base, &library, &cfg).unwrap();
            prop_assert!(sol.objective >= o - 1e-12, "{} < {}", sol.objective, o);
        }
    }
}

#[test]
fn two_file_instance_matches_fine_enumeration() {
    let cfg = NetworkConfig::reference();
    let library = ContentLibrary::new(2, 0.0, 1).unwrap();
    let sol = solve_p1(&library, &cfg).unwrap();
    let z = {
        let g = std::f64::consts::PI / 2.0;
        4.0 * 50.0 * 50.0 * std::f64::consts::PI * 8.0 * 40e-6 * g + 1.0
    };
    let g = |c: f64| c + (1.0 - c) * c * 8.0 * (-8.0 * c).exp() / z;
    let best = (0..=100_000)
        .map(|k| {
            let c = k as f64 / 100_000.0;
            0.5 * (g(c) + g(1.0 - c))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        sol.objective >= best - 1e-10,
        "{} vs {}",
        sol.objective,
        best
    );
    assert!(sol.objective - best < 1e-6);
}

#[test]
fn equal_popularity_with_jump_splits_one_file() {
    // five equally popular files, two slots: the symmetric point 0.4 lies in
    // the convex region and is beaten by an asymmetric split
    let cfg = NetworkConfig::reference();
    let library = ContentLibrary::new(5, 0.0, 2).unwrap();
    let sol = solve_p1(&library, &cfg).unwrap();
    let symmetric = offloading_closed_form_k1(&policy_uniform(&library), &library, &cfg).unwrap();
    assert!(sol.objective > symmetric + 1e-3);
    assert!(sol.diagnostics.split_file.is_some());
    assert!(!sol.diagnostics.concavity_warnings.is_empty());
}
