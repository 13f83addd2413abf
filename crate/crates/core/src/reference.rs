//! Published reference data: the four-service validation operating point and
//! the GB 2030 thermal fleet.

use crate::dispatch::{DispatchCase, GenUnit};
use crate::model::{FrService, Portfolio, SecuritySpec, SystemSnapshot};

/// Four services: two undelayed (3 s, 10 s) and two delayed (0.5 s + 5 s, 1 s + 8 s).
pub fn validation_services() -> Vec<FrService> {
    vec![
        FrService::new("FR1", 1000.0, 3.0, 0.0),
        FrService::new("FR2", 1000.0, 10.0, 0.0),
        FrService::new("FR3", 1000.0, 5.0, 0.5),
        FrService::new("FR4", 1000.0, 8.0, 1.0),
    ]
}

/// Allocations (MW) of the validation operating point, in [`validation_services`] order.
pub const VALIDATION_ALLOCATIONS: [f64; 4] = [200.0, 980.0, 500.0, 600.0];

/// P_L = 1.8 GW, H = 180 GW·s, no demand inertia.
pub fn validation_snapshot() -> SystemSnapshot {
    let portfolio = Portfolio::new(validation_services(), VALIDATION_ALLOCATIONS.to_vec())
        .expect("reference portfolio is valid");
    SystemSnapshot::new(180_000.0, 0.0, 1800.0, portfolio).expect("reference snapshot is valid")
}

pub fn validation_spec() -> SecuritySpec {
    SecuritySpec::great_britain()
}

/// Load damping used in the time-domain validation (MW/Hz).
pub const VALIDATION_DAMPING: f64 = 150.0;

/// Inertia constant assumed for inertia-providing demand (s).
pub const DEMAND_INERTIA_CONSTANT: f64 = 5.0;

/// Nuclear, CCGT and OCGT classes with their published characteristics.
///
/// None of these classes offers a frequency-response product; callers attach
/// `fr_service_id` (and split CCGTs into capability subsets) per study.
pub fn table_one_units() -> Vec<GenUnit> {
    vec![
        GenUnit {
            class: "nuclear".into(),
            count: 4,
            rated_power: 1800.0,
            min_stable: 1400.0,
            no_load_cost: 0.0,
            marginal_cost: 10.0,
            startup_cost: 0.0,
            inertia_constant: 5.0,
            max_fr_deliverable: 0.0,
            fr_service_id: None,
            part_load: false,
            individual: true,
            min_up_periods: 0,
            min_down_periods: 0,
        },
        GenUnit {
            class: "ccgt".into(),
            count: 100,
            rated_power: 500.0,
            min_stable: 250.0,
            no_load_cost: 4500.0,
            marginal_cost: 47.0,
            startup_cost: 10_000.0,
            inertia_constant: 4.0,
            max_fr_deliverable: 50.0,
            fr_service_id: None,
            part_load: true,
            individual: false,
            min_up_periods: 4,
            min_down_periods: 1,
        },
        GenUnit {
            class: "ocgt".into(),
            count: 30,
            rated_power: 100.0,
            min_stable: 50.0,
            no_load_cost: 3000.0,
            marginal_cost: 200.0,
            startup_cost: 0.0,
            inertia_constant: 4.0,
            max_fr_deliverable: 20.0,
            fr_service_id: None,
            part_load: true,
            individual: false,
            min_up_periods: 0,
            min_down_periods: 0,
        },
    ]
}

/// Single-period GB-style case: the Table I fleet with every CCGT offering
/// PFR (10 s), and a 200 MW battery offering EFR (1 s).
pub fn gb_dispatch_case(demand: f64, wind_available: f64) -> DispatchCase {
    let mut units = table_one_units();
    units[1].fr_service_id = Some("PFR".into());
    DispatchCase {
        units,
        demand: vec![demand],
        wind_available: vec![wind_available],
        spec: SecuritySpec::great_britain(),
        chance: None,
        fr_catalog: vec![FrService::new("EFR", 200.0, 1.0, 0.0), FrService::new("PFR", 10_000.0, 10.0, 0.0)],
        periods: 1,
        h_demand: 0.0,
        demand_inertia_fraction: 0.0,
        external_fr: [("EFR".to_string(), BATTERY_MW)].into_iter().collect(),
    }
}

/// Battery capacity offering EFR (MW).
pub const BATTERY_MW: f64 = 200.0;
