use lwf::cli::{parse_config, write_config, RunConfig};
use lwf::forward::logistic_flow;
use lwf::measure::LambdaMeasure;
use lwf::rates::{delta_of, lambda_of, psi_of, y_law};
use proptest::prelude::*;

fn arb_measure() -> impl Strategy<Value = LambdaMeasure> {
    prop_oneof![
        (0.01..=1.0f64, 0.01..10.0f64)
            .prop_map(|(x, c)| LambdaMeasure::dirac(x, c).unwrap()),
        (0.2..5.0f64, 0.2..5.0f64).prop_map(|(a, b)| LambdaMeasure::beta(a, b).unwrap()),
        (0.01..0.5f64, 0.5..1.0f64, 0.01..2.0f64, 0.01..2.0f64).prop_map(|(x1, x2, c1, c2)| {
            LambdaMeasure::atoms(&[(x1, c1), (x2, c2)]).unwrap()
        }),
    ]
}

proptest! {
    #[test]
    fn logistic_flow_stays_in_the_unit_interval(
        x in 0.0..=1.0f64,
        alpha in 0.0..20.0f64,
        dt in 0.0..100.0f64,
    ) {
        let y = logistic_flow(x, alpha, dt);
        prop_assert!((0.0..=1.0).contains(&y), "flow left [0,1]: {y}");
        prop_assert!(y <= x + 1e-15, "selection must not raise the frequency");
        if x == 0.0 || x == 1.0 {
            prop_assert_eq!(y, x);
        }
    }

    #[test]
    fn merger_law_is_a_probability_distribution(
        n in 2..200usize,
        x in prop::sample::select(vec![1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999]),
    ) {
        let law = y_law(n, x).unwrap();
        let total: f64 = law.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "mass {total}");
        prop_assert!(law.probs.iter().all(|p| *p >= 0.0));
        let mean: f64 = law
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum();
        prop_assert!((mean - law.mean).abs() < 1e-9 * law.mean.max(1.0));
    }

    #[test]
    fn measure_json_round_trips(m in arb_measure()) {
        let text = m.to_json();
        let back = LambdaMeasure::from_json(&text).unwrap();
        prop_assert_eq!(m, back);
    }

    #[test]
    fn run_config_round_trips(
        alpha in proptest::option::of(0.0..10.0f64),
        x0 in proptest::option::of(0.0..=1.0f64),
        n0 in proptest::option::of(1..10_000usize),
        reps in proptest::option::of(1..1_000_000u64),
        seed: Option<u64>,
    ) {
        let cfg = RunConfig {
            measure: Some(LambdaMeasure::dirac(0.5, 1.0).unwrap()),
            alpha,
            x0,
            n0,
            t_max: None,
            eps: None,
            reps,
            seed,
            threads: None,
            out_path: None,
            format: None,
        };
        prop_assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn decrease_rates_are_ordered(m in arb_measure(), n in 2..80usize) {
        let psi = psi_of(&m, n).unwrap().value;
        let delta = delta_of(&m, n).unwrap().value;
        prop_assert!(delta >= psi - 1e-9 * psi.abs(), "delta({n}) = {delta} < psi = {psi}");
    }

    #[test]
    fn merge_rates_satisfy_the_consistency_recursion(
        m in arb_measure(),
        n in 2..60usize,
        k_off in 0..58usize,
    ) {
        let k = 2 + k_off % (n - 1);
        let lhs = lambda_of(&m, n, k).unwrap();
        let rhs = lambda_of(&m, n + 1, k).unwrap() + lambda_of(&m, n + 1, k + 1).unwrap();
        prop_assert!(
            (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-300),
            "n={n}, k={k}: {lhs} vs {rhs}"
        );
    }
}
