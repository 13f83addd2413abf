use freqsec::conic::{
    build_program, solve_by_enumeration, solve_continuous, solve_mi, solve_mi_with, FrequencyProblem,
    MiOptions, NodeOutcome, SolveStatus,
};
use freqsec::model::{FrService, SecuritySpec};
use freqsec::reference;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROUND_TRIP_TOL: f64 = 1e-6;

fn fixed_point(services: Vec<FrService>, h: f64, p_loss: f64) -> FrequencyProblem {
    FrequencyProblem {
        services,
        spec: SecuritySpec::great_britain(),
        chance: None,
        h_demand: 0.0,
        inertia: (h, h),
        p_loss: (p_loss, p_loss),
        inertia_cost: 0.0,
        p_loss_cost: 0.0,
    }
}

#[test]
fn single_service_matches_closed_form() {
    // binding cone with one undelayed ramp: R = P_L²·T·f0 / (4·Δf_max·H)
    let spec = SecuritySpec::great_britain();
    let (p_loss, t, h) = (1000.0, 10.0, 100_000.0);
    let pr = fixed_point(vec![FrService::new("a", 5000.0, t, 0.0).with_cost(1.0)], h, p_loss);
    let (program, block) = build_program(&pr).unwrap();
    let res = solve_continuous(&program).unwrap();
    let expected = p_loss * p_loss * t * spec.f_nominal / (4.0 * spec.delta_f_max * h);
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((res.values[block.r[0]] - expected).abs() <= 1e-5 * expected, "{}", res.values[block.r[0]]);
    assert!((expected - 1562.5).abs() < 1e-9);
}

#[test]
fn insufficient_capacity_is_infeasible() {
    let pr = fixed_point(
        vec![
            FrService::new("a", 600.0, 10.0, 0.0).with_cost(1.0),
            FrService::new("b", 300.0, 2.0, 0.0).with_cost(1.0),
        ],
        200_000.0,
        1000.0,
    );
    let (program, _) = build_program(&pr).unwrap();
    assert_eq!(solve_mi(&program, 0.005).unwrap().status, SolveStatus::Infeasible);
    assert_eq!(solve_by_enumeration(&program).unwrap().status, SolveStatus::Infeasible);
    assert!(!solve_continuous(&program).unwrap().is_feasible());
}

#[test]
fn integral_relaxation_needs_one_node() {
    let pr = fixed_point(vec![FrService::new("a", 5000.0, 10.0, 0.0).with_cost(1.0)], 100_000.0, 1000.0);
    let (program, _) = build_program(&pr).unwrap();
    let mi = solve_mi(&program, 0.005).unwrap();
    let c = solve_continuous(&program).unwrap();
    assert_eq!(mi.node_count, 1);
    assert!((mi.objective - c.objective).abs() <= 1e-9 * c.objective);
}

#[test]
fn picks_the_only_feasible_interval() {
    // (0, 1] cannot hold the nadir: FR(1) ≤ 100 + 5000/10 < P_L
    let pr = fixed_point(
        vec![
            FrService::new("fast", 100.0, 1.0, 0.0).with_cost(1.0),
            FrService::new("slow", 5000.0, 10.0, 0.0).with_cost(1.0),
        ],
        200_000.0,
        1000.0,
    );
    let (program, block) = build_program(&pr).unwrap();
    let res = solve_mi(&program, 0.005).unwrap();
    assert!(res.is_feasible());
    assert_eq!(res.active_interval, Some(1));
    assert!((res.values[block.selectors[1]] - 1.0).abs() < 1e-9);
    let report = block.assess(&res.values, ROUND_TRIP_TOL).unwrap();
    assert!(report.is_secure(), "{:?}", report.violations());
}

#[test]
fn validation_template_agrees_with_enumeration() {
    let services: Vec<FrService> =
        reference::validation_services().into_iter().map(|s| s.with_cost(1.0)).collect();
    let (program, block) = build_program(&fixed_point(services, 180_000.0, 1800.0)).unwrap();
    let mi = solve_mi(&program, 0.005).unwrap();
    let en = solve_by_enumeration(&program).unwrap();
    assert!(mi.is_feasible() && en.is_feasible());
    assert!((mi.objective - en.objective).abs() <= 0.005 * en.objective.abs() + 1e-6);
    // the published allocation is feasible, so the optimum cannot cost more
    let published: f64 = reference::VALIDATION_ALLOCATIONS.iter().sum();
    assert!(en.objective <= published * (1.0 + 1e-6), "{} > {published}", en.objective);
    for res in [&mi, &en] {
        let report = block.assess(&res.values, ROUND_TRIP_TOL).unwrap();
        assert!(report.is_secure(), "{:?}", report.violations());
    }
}

#[test]
fn node_bounds_never_decrease() {
    let services: Vec<FrService> = reference::validation_services()
        .into_iter()
        .zip([3.0, 1.0, 2.5, 1.5])
        .map(|(s, c)| s.with_cost(c))
        .collect();
    let (program, _) = build_program(&fixed_point(services, 180_000.0, 1800.0)).unwrap();
    let (res, log) = solve_mi_with(&program, &MiOptions { gap: 0.0, ..MiOptions::default() }).unwrap();
    assert!(res.is_feasible());
    for rec in &log {
        if let Some(rel) = rec.relaxation {
            assert!(
                rel >= rec.parent_bound - 1e-6 * rel.abs().max(1.0),
                "node {}: {rel} < {}",
                rec.id,
                rec.parent_bound
            );
            if rec.outcome == NodeOutcome::Integral {
                assert!(rel >= log[0].relaxation.unwrap() - 1e-6 * rel.abs());
            }
        }
    }
    assert!(log[0].relaxation.unwrap() <= res.objective * (1.0 + 1e-6));
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> FrequencyProblem {
    let services = (0..n)
        .map(|i| {
            FrService::new(
                format!("s{i}"),
                rng.random_range(300.0..2500.0),
                rng.random_range(1.0..12.0),
                if rng.random_bool(0.5) { rng.random_range(0.0..2.0) } else { 0.0 },
            )
            .with_cost(rng.random_range(1.0..10.0))
        })
        .collect();
    fixed_point(services, rng.random_range(120_000.0..250_000.0), rng.random_range(800.0..1800.0))
}

#[test]
fn random_three_service_instances_agree() {
    let gap = 0.005;
    let mut feasible = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pr = random_instance(&mut rng, 3);
        let (program, block) = build_program(&pr).unwrap();
        let mi = solve_mi(&program, gap).unwrap();
        let en = solve_by_enumeration(&program).unwrap();
        assert_eq!(mi.is_feasible(), en.is_feasible(), "seed {seed}");
        if !en.is_feasible() {
            continue;
        }
        feasible += 1;
        let tol = (gap * en.objective.abs()).max(1e-6 * en.objective.abs().max(1.0));
        assert!(
            (mi.objective - en.objective).abs() <= tol,
            "seed {seed}: {} vs {}",
            mi.objective,
            en.objective
        );
        for res in [&mi, &en] {
            let report = block.assess(&res.values, ROUND_TRIP_TOL).unwrap();
            assert!(report.is_secure(), "seed {seed}: {:?}", report.violations());
        }
    }
    assert!(feasible >= 50, "only {feasible} feasible instances");
}
