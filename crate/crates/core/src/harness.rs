//! Seeded random instances and self-checks shared by `freqsec verify` and the
//! integration tests.
//!
//! Every generator takes the RNG explicitly, so a seed reproduces the same
//! instances on every platform.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conic::{build_program, solve_by_enumeration, solve_mi, FrequencyProblem};
use crate::dynamics;
use crate::error::Result;
use crate::model::{ChanceSpec, FrService, Portfolio, SecuritySpec, SystemSnapshot};
use crate::security::{nadir_soc_terms, undelayed_soc_terms};
use crate::simulate::{ramp_providers, simulate, SimConfig};

/// Relative tolerance of the solution round-trip check.
pub const ROUND_TRIP_TOL: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` services with distinct ids, durations in [0.5, 15) s and, when
/// `delayed`, a 60% chance of a delay in [0, 3) s.
pub fn random_services(rng: &mut impl Rng, n: usize, delayed: bool) -> Vec<FrService> {
    (0..n)
        .map(|i| {
            let delay = if delayed && rng.random_bool(0.6) { rng.random_range(0.0..3.0) } else { 0.0 };
            FrService::new(
                format!("s{i}"),
                rng.random_range(200.0..2500.0),
                rng.random_range(0.5..15.0),
                delay,
            )
            .with_cost(rng.random_range(0.5..20.0))
        })
        .collect()
}

/// Portfolio with allocations drawn uniformly up to each capacity.
pub fn random_portfolio(rng: &mut impl Rng, n: usize, delayed: bool) -> Result<Portfolio> {
    let services = random_services(rng, n, delayed);
    let allocations = services.iter().map(|s| rng.random_range(0.05..1.0) * s.capacity_max).collect();
    Portfolio::new(services, allocations)
}

/// Snapshot with 1 to 6 services whose total response exceeds the loss, so
/// the deviation turns around and a nadir exists.
pub fn random_feasible_snapshot(rng: &mut impl Rng) -> Result<SystemSnapshot> {
    let n = rng.random_range(1..=6);
    let portfolio = random_portfolio(rng, n, true)?;
    let p_loss = rng.random_range(0.3..0.95) * portfolio.total_allocation();
    let h_gen = rng.random_range(40_000.0..250_000.0);
    SystemSnapshot::new(h_gen, 0.0, p_loss, portfolio)
}

/// Allocation-only problem (fixed H and P_L) or, on every third instance, a
/// joint problem where inertia and loss are free within bounds.
pub fn random_problem(rng: &mut impl Rng, index: u64) -> FrequencyProblem {
    let n = rng.random_range(2..=4);
    let services = random_services(rng, n, true);
    let joint = index % 3 == 0;
    let h = rng.random_range(60_000.0..250_000.0);
    let pl = rng.random_range(500.0..1800.0);
    let chance =
        (index % 5 == 0).then_some(ChanceSpec { h_mu: 30_000.0, sigma: 3_000.0, alpha: 0.99, eta: 0.99 });
    FrequencyProblem {
        services,
        spec: SecuritySpec::great_britain(),
        chance,
        h_demand: 10_000.0,
        inertia: if joint { (20_000.0, 300_000.0) } else { (h, h) },
        p_loss: if joint { (pl, 1800.0) } else { (pl, pl) },
        inertia_cost: if joint { 0.01 } else { 0.0 },
        p_loss_cost: if joint { -0.5 } else { 0.0 },
    }
}

/// Outcome of one randomized check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error in the check's own unit.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckSummary {
    fn new(name: &'static str, tolerance: f64) -> Self {
        CheckSummary { name, cases: 0, failures: 0, worst: 0.0, tolerance }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        self.worst = self.worst.max(error);
        if !(error <= self.tolerance) {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// With every delay zero, the general cone terms coincide with the
/// undelayed ones segment by segment (worst relative difference).
pub fn check_zero_delay(seed: u64, cases: usize) -> Result<CheckSummary> {
    let mut out = CheckSummary::new("zero_delay_reduction", 1e-12);
    let spec = SecuritySpec::great_britain();
    let mut rng = rng(seed);
    for _ in 0..cases {
        let n = rng.random_range(1..=6);
        let portfolio = random_portfolio(&mut rng, n, false)?;
        let p_loss = rng.random_range(0.1..1.2) * portfolio.total_allocation();
        let segments = dynamics::decompose(&portfolio)?.len();
        let mut worst: f64 = 0.0;
        for k in 0..segments {
            let a = nadir_soc_terms(&portfolio, p_loss, &spec, k)?;
            let b = undelayed_soc_terms(&portfolio, p_loss, &spec, k)?;
            worst = worst.max(rel(a.y1, b.y1)).max(rel(a.y2, b.y2)).max(rel(a.y3_sq, b.y3_sq));
        }
        out.record(worst);
    }
    Ok(out)
}

/// Exact ramp injection without damping reproduces the closed-form
/// trajectory (max-norm in Hz) and nadir instant (s).
pub fn check_simulator(seed: u64, cases: usize, dt: f64) -> Result<(CheckSummary, CheckSummary)> {
    let mut traj = CheckSummary::new("simulator_trajectory", 1e-6);
    let mut time = CheckSummary::new("simulator_nadir_time", 2e-3);
    let spec = SecuritySpec::great_britain();
    let mut rng = rng(seed);
    for _ in 0..cases {
        let snapshot = random_feasible_snapshot(&mut rng)?;
        let nadir = dynamics::nadir(&snapshot, &spec)?;
        let horizon =
            snapshot.portfolio.services().iter().map(FrService::completion_time).fold(nadir.time, f64::max)
                + 2.0;
        let config = SimConfig::new(dt, horizon);
        let tr = simulate(&snapshot, &spec, &ramp_providers(&snapshot), &config)?;
        let mut worst: f64 = 0.0;
        for (t, df) in tr.times.iter().zip(&tr.delta_f) {
            worst = worst.max((df - dynamics::delta_f(*t, &snapshot, &spec)?).abs());
        }
        traj.record(worst);
        time.record((tr.nadir.time - nadir.time).abs());
    }
    Ok((traj, time))
}

/// Branch-and-bound against segment enumeration (relative objective
/// difference beyond the gap), plus the round-trip security check of both
/// solutions (count of insecure outputs, reported as the error).
pub fn check_solver(seed: u64, cases: usize, gap: f64) -> Result<(CheckSummary, CheckSummary)> {
    let mut agree = CheckSummary::new("solver_agreement", 0.0);
    let mut secure = CheckSummary::new("solution_security", 0.0);
    let mut rng = rng(seed);
    for index in 0..cases as u64 {
        let problem = random_problem(&mut rng, index);
        let (program, block) = build_program(&problem)?;
        let mi = solve_mi(&program, gap)?;
        let en = solve_by_enumeration(&program)?;
        if mi.is_feasible() != en.is_feasible() {
            agree.record(f64::INFINITY);
            continue;
        }
        if !mi.is_feasible() {
            agree.record(0.0);
            continue;
        }
        let tol = gap.max(1e-6) * en.objective.abs().max(1.0);
        agree.record(((mi.objective - en.objective).abs() - tol).max(0.0));
        for r in [&mi, &en] {
            let report = block.assess(&r.values, ROUND_TRIP_TOL)?;
            secure.record(if report.is_secure() { 0.0 } else { 1.0 });
        }
    }
    Ok((agree, secure))
}

/// All checks with `cases` instances each (the solver check uses a tenth).
pub fn verify(seed: u64, cases: usize) -> Result<Vec<CheckSummary>> {
    let mut out = vec![check_zero_delay(seed, cases)?];
    let (traj, time) = check_simulator(seed.wrapping_add(1), cases, 1e-3)?;
    out.push(traj);
    out.push(time);
    let (agree, secure) = check_solver(seed.wrapping_add(2), cases.div_ceil(10), 0.005)?;
    out.push(agree);
    out.push(secure);
    Ok(out)
}
