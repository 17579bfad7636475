use homsync::config::bundled_20km;
use homsync::fiber_model::drift_segmented;
use homsync::planner::{evaluate_plan, plan_segments, PlanConstraints, PlannerError};
use homsync::scenario::Scenario;
use proptest::prelude::*;

fn constraints() -> PlanConstraints {
    Scenario::build(bundled_20km()).unwrap().plan_constraints().unwrap()
}

#[test]
fn chosen_count_is_the_smallest_feasible_one() {
    let c = constraints();
    let plan = plan_segments(&c).unwrap();
    assert!(plan.feasible);
    let m = plan.lengths.len();
    assert!(plan.drift <= c.drift_limit());
    assert!(plan.loss <= c.loss_budget);
    for row in &plan.table[..m - 1] {
        assert!(!row.feasible, "m={} is feasible but larger m was chosen", row.m);
    }
    // drift of an equal split is B·ΔT·L/√m
    let oracle = c.b * c.delta_t * c.total_length / (m as f64).sqrt();
    assert!((plan.drift - oracle).abs() / oracle < 1e-12);
}

#[test]
fn single_fiber_exceeds_the_drift_limit() {
    let c = constraints();
    let plan = plan_segments(&c).unwrap();
    assert!(!plan.table[0].feasible);
    assert!(plan.table[0].drift > c.drift_limit());
}

#[test]
fn tight_budget_reports_infeasible_single_fiber() {
    let c = PlanConstraints { loss_budget: 1.0, ..constraints() };
    let plan = plan_segments(&c).unwrap();
    assert!(!plan.feasible);
    assert_eq!(plan.lengths.len(), 1);
}

#[test]
fn invalid_constraints_name_the_field() {
    let c = PlanConstraints { coherence_time: -1.0, ..constraints() };
    assert!(matches!(plan_segments(&c), Err(PlannerError::InvalidConstraint { field: "coherence_time", .. })));
    let c = PlanConstraints { max_segments: 0, ..constraints() };
    assert!(matches!(plan_segments(&c), Err(PlannerError::InvalidConstraint { field: "max_segments", .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equal_split_drift_falls_with_m(max in 2usize..20) {
        let c = PlanConstraints { max_segments: max, ..constraints() };
        let plan = plan_segments(&c).unwrap();
        for w in plan.table.windows(2) {
            prop_assert!(w[1].drift < w[0].drift);
            prop_assert!((w[1].loss - w[0].loss - c.connector_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn random_partitions_never_beat_the_equal_split(weights in prop::collection::vec(0.05f64..1.0, 1..8)) {
        let c = constraints();
        let sum: f64 = weights.iter().sum();
        let lengths: Vec<f64> = weights.iter().map(|w| w / sum * c.total_length).collect();
        let e = evaluate_plan(&lengths, &c).unwrap();
        let equal = evaluate_plan(&vec![c.total_length / lengths.len() as f64; lengths.len()], &c).unwrap();
        prop_assert!(equal.drift <= e.drift * (1.0 + 1e-12));
        prop_assert!((e.loss - equal.loss).abs() < 1e-12);
        prop_assert!((e.drift - drift_segmented(c.b, &lengths, c.delta_t).unwrap()).abs() < 1e-24);
    }
}
