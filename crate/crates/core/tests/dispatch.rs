use freqsec::dispatch::{
    solve_dispatch, solve_dispatch_with, sweep, DispatchCase, DispatchOptions, Method, Schedule, SweepAxis,
};
use freqsec::model::{Portfolio, SystemSnapshot};
use freqsec::{reference, security, Error};

fn data_case() -> DispatchCase {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/gb_case.json");
    DispatchCase::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Rebuilds each period's snapshot from the schedule alone and assesses it.
fn reassess(case: &DispatchCase, schedule: &Schedule) {
    for (t, p) in schedule.periods.iter().enumerate() {
        let alloc = case
            .fr_catalog
            .iter()
            .map(|s| p.fr.iter().find(|a| a.id == s.id).map_or(0.0, |a| a.mw))
            .collect();
        let portfolio = Portfolio::new(case.fr_catalog.clone(), alloc).unwrap();
        let h_demand = if case.chance.is_some() { 0.0 } else { p.h_demand };
        let snapshot = SystemSnapshot::new(p.h_gen, h_demand, p.p_loss, portfolio).unwrap();
        let report =
            security::assess_with_tolerance(&snapshot, &case.spec, case.chance_in(t).as_ref(), 1e-6).unwrap();
        assert!(report.is_secure(), "period {t}: {:?}", report.violations());

        let supplied: f64 = p.units.iter().map(|u| u.output).sum::<f64>() + p.wind_used;
        assert!((supplied - p.demand).abs() <= 1e-6 * p.demand);
        let inertia: f64 = p
            .units
            .iter()
            .map(|u| {
                let unit = case.units.iter().find(|g| g.class == u.class).unwrap();
                unit.unit_inertia() * u.committed as f64
            })
            .sum();
        assert!((inertia - p.h_gen).abs() <= 1e-9 * inertia.max(1.0));
    }
}

#[test]
fn data_case_matches_reference() {
    assert_eq!(data_case(), reference::gb_dispatch_case(30_000.0, 12_000.0));
}

#[test]
fn schedule_round_trips_and_reassesses() {
    let case = data_case();
    let schedule = solve_dispatch(&case, 0.005).unwrap();
    reassess(&case, &schedule);
    let back = Schedule::from_json(&schedule.to_json()).unwrap();
    assert_eq!(back, schedule);
    assert!(schedule.gap <= 0.005);
}

#[test]
fn enumeration_method_schedules_are_secure_too() {
    let case = reference::gb_dispatch_case(22_000.0, 5_000.0);
    let opts = DispatchOptions { method: Method::Enum, ..DispatchOptions::default() };
    let schedule = solve_dispatch_with(&case, &opts).unwrap();
    reassess(&case, &schedule);
}

#[test]
fn multi_period_schedule_is_secure_every_period() {
    let mut case = reference::gb_dispatch_case(20_000.0, 8_000.0);
    case.periods = 2;
    case.demand = vec![20_000.0, 28_000.0];
    case.wind_available = vec![8_000.0, 2_000.0];
    case.units[0].part_load = true;
    let schedule = solve_dispatch(&case, 0.01).unwrap();
    assert_eq!(schedule.periods.len(), 2);
    reassess(&case, &schedule);
    let per_period: f64 = schedule.periods.iter().map(|p| p.cost).sum();
    assert!((per_period - schedule.total_cost).abs() <= 1e-6 * schedule.total_cost);
}

#[test]
fn mismatched_horizon_is_rejected() {
    let mut case = data_case();
    case.periods = 2;
    assert!(matches!(case.validate(), Err(Error::InvalidInput { .. })));
}

#[test]
fn wind_sweep_never_gets_dearer_with_more_wind() {
    let case = data_case();
    let r = sweep(&case, &SweepAxis::WindScale, &[0.25, 0.5, 1.0], &DispatchOptions::default()).unwrap();
    assert!(r.monotone);
    assert_eq!(r.points.len(), 3);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}
