use prinstrat::gibbs::ConstraintSet;
use prinstrat::harness::{run_scenario, Regime, ScenarioSpec, Truth};
use prinstrat::psmodel::JointParams;

/// Under principal ignorability and a fit that imposes it, the credible
/// intervals should cover at close to their nominal rate.
#[test]
fn coverage_is_calibrated_under_ignorability() {
    let mut truth = JointParams::table1_truth();
    truth.beta[1][0] = 0.0;
    assert_eq!(truth.beta01(), 0.0);
    let spec = ScenarioSpec {
        truth: Truth::Continuous(truth),
        regimes: vec![Regime::new("pi", ConstraintSet::from_tokens("pi").unwrap())],
        base_seed: 77,
        ..ScenarioSpec::table1()
    };
    assert_eq!((spec.n, spec.n_replicates), (300, 50));
    let report = run_scenario(&spec).unwrap();
    assert_eq!(report.cells.len(), 3);
    for c in &report.cells {
        assert_eq!(c.n_ok, 50);
        assert!((0.90..=0.99).contains(&c.ecr), "({}, {}): coverage {}", c.s0, c.s1, c.ecr);
    }
}
