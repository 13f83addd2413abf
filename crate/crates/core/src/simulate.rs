//! Fixed-step time-domain simulation of the post-fault swing equation
//!
//! `2(H + H_D)/f0 · dΔf/dt = FR(t) − P_L − D·Δf`
//!
//! with each provider either injecting its delayed ramp exactly or acting as
//! a droop controller behind a first-order lag. Used to check that the
//! closed-form nadir is a conservative estimate of a proportional response.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{FrService, SecuritySpec, SystemSnapshot};

/// Absolute slack (Hz) allowed before a simulated nadir counts as deeper than the analytic one.
pub const CONSERVATIVE_TOL: f64 = 1e-6;

/// Dynamic model of one frequency-response provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderDynamics {
    /// Injects `clamp(R·(t − T_del)/T, 0, R)` exactly.
    DelayedRamp { service: FrService, allocation: f64 },
    /// Output `clamp(x, 0, saturation)` where `τ·dx/dt = gain·max(0, −Δf − deadband) − x`.
    DroopLag {
        id: String,
        /// MW per Hz of deviation beyond the deadband.
        gain: f64,
        /// Lag time constant τ (s).
        tau: f64,
        /// Maximum output (MW).
        saturation: f64,
        /// Deviation (Hz) below which the controller does not respond.
        deadband: f64,
    },
}

impl ProviderDynamics {
    pub fn id(&self) -> &str {
        match self {
            ProviderDynamics::DelayedRamp { service, .. } => &service.id,
            ProviderDynamics::DroopLag { id, .. } => id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProviderDynamics::DelayedRamp { service, allocation } => {
                service.validate()?;
                if !(*allocation >= 0.0 && *allocation <= service.capacity_max) {
                    return Err(Error::AllocationOutOfBounds {
                        id: service.id.clone(),
                        allocation: *allocation,
                        capacity: service.capacity_max,
                    });
                }
            }
            ProviderDynamics::DroopLag { id, gain, tau, saturation, deadband } => {
                let field = |name: &str| format!("provider `{id}` {name}");
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::invalid(field("tau"), format!("must be positive, got {tau}")));
                }
                if !(*saturation >= 0.0 && saturation.is_finite()) {
                    return Err(Error::invalid(
                        field("saturation"),
                        format!("must be non-negative, got {saturation}"),
                    ));
                }
                if !(*gain >= 0.0 && gain.is_finite()) {
                    return Err(Error::invalid(field("gain"), format!("must be non-negative, got {gain}")));
                }
                if !(*deadband >= 0.0 && deadband.is_finite()) {
                    return Err(Error::invalid(
                        field("deadband"),
                        format!("must be non-negative, got {deadband}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Exact delayed-ramp providers for every service of the snapshot's portfolio.
pub fn ramp_providers(snapshot: &SystemSnapshot) -> Vec<ProviderDynamics> {
    snapshot
        .portfolio
        .iter()
        .map(|(s, r)| ProviderDynamics::DelayedRamp { service: s.clone(), allocation: r })
        .collect()
}

/// Droop controllers whose response envelope matches each service's ramp.
///
/// For a service with allocation R, ramp T and delay T_del:
/// * `tau = T/3`, so the lag settles around the delivery time;
/// * `deadband = |Δf(T_del)|` on the closed-form trajectory, so activation
///   happens at the modelled delay;
/// * `gain` is the smallest value for which the lag output reaches R no
///   later than `T_del + T` along the closed-form trajectory.
///
/// Services with zero allocation become idle controllers.
pub fn tune_droop(snapshot: &SystemSnapshot, spec: &SecuritySpec) -> Result<Vec<ProviderDynamics>> {
    let inertia = snapshot.total_inertia();
    let f0 = spec.f_nominal;
    let cf = |t: f64| dynamics::delta_f_with_inertia(t, &snapshot.portfolio, snapshot.p_loss, inertia, f0);
    let mut out = Vec::with_capacity(snapshot.portfolio.len());
    for (s, r) in snapshot.portfolio.iter() {
        let tau = s.ramp_duration / 3.0;
        let deadband = if s.activation_delay > 0.0 { -cf(s.activation_delay)? } else { 0.0 };
        let deadband = deadband.max(0.0);
        let gain = if r > 0.0 {
            // unit-gain lag response along the closed-form deviation; the
            // response is linear in the gain
            let horizon = s.completion_time();
            let steps = 20_000;
            let h = horizon / steps as f64;
            let input = |t: f64| -> Result<f64> { Ok((-cf(t)? - deadband).max(0.0)) };
            let (mut x, mut peak): (f64, f64) = (0.0, 0.0);
            for k in 0..steps {
                let t = k as f64 * h;
                let (e0, e1, e2) = (input(t)?, input(t + 0.5 * h)?, input(t + h)?);
                let k1 = (e0 - x) / tau;
                let k2 = (e1 - (x + 0.5 * h * k1)) / tau;
                let k3 = (e1 - (x + 0.5 * h * k2)) / tau;
                let k4 = (e2 - (x + h * k3)) / tau;
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                peak = peak.max(x);
            }
            if !(peak > 0.0) {
                return Err(Error::invalid(
                    format!("service `{}`", s.id),
                    "closed-form deviation never exceeds the deadband before delivery",
                ));
            }
            r / peak
        } else {
            0.0
        };
        out.push(ProviderDynamics::DroopLag { id: s.id.clone(), gain, tau, saturation: r, deadband });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Fixed step (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_end: f64,
    /// Load damping D (MW/Hz); opposes the deviation.
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SimConfig { dt, t_end, damping: 0.0, integrator: Integrator::Rk4 }
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", format!("must exceed dt, got {}", self.t_end)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::invalid("damping", format!("must be non-negative, got {}", self.damping)));
        }
        Ok(())
    }
}

/// Frequency minimum extracted from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimNadir {
    pub time: f64,
    /// |Δf| at the minimum (Hz).
    pub depth: f64,
    /// False when the deviation was still falling at the end of the horizon.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub provider_ids: Vec<String>,
    pub times: Vec<f64>,
    /// Δf (Hz), negative below nominal.
    pub delta_f: Vec<f64>,
    pub fr_total: Vec<f64>,
    /// One series per provider, in `provider_ids` order.
    pub provider_fr: Vec<Vec<f64>>,
    pub nadir: SimNadir,
    /// First instant each provider starts responding, if it does.
    pub activation: Vec<Option<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,delta_f,fr_total,fr_<id>...` followed by `#` comment
    /// lines holding the nadir and activation instants.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::invalid("csv output", e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::invalid("csv output", e.to_string());
        let mut header = vec!["t".to_string(), "delta_f".into(), "fr_total".into()];
        header.extend(self.provider_ids.iter().map(|id| format!("fr_{id}")));
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.times.len() {
            let mut row =
                vec![self.times[k].to_string(), self.delta_f[k].to_string(), self.fr_total[k].to_string()];
            row.extend(self.provider_fr.iter().map(|s| s[k].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        let mut out = w.into_inner().map_err(|e| io(e.into_error()))?;
        writeln!(
            out,
            "# nadir_time={} nadir_depth={} interior={}",
            self.nadir.time, self.nadir.depth, self.nadir.interior
        )
        .map_err(io)?;
        for (id, a) in self.provider_ids.iter().zip(&self.activation) {
            match a {
                Some(t) => writeln!(out, "# activation {id}={t}"),
                None => writeln!(out, "# activation {id}=none"),
            }
            .map_err(io)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::invalid("csv output", e.to_string()))
    }
}

/// Right-hand side of the swing equation plus lag states.
struct Plant<'a> {
    providers: &'a [ProviderDynamics],
    /// State slot of each droop provider (index into the state vector).
    slot: Vec<Option<usize>>,
    coeff: f64,
    p_loss: f64,
    damping: f64,
}

impl Plant<'_> {
    fn output(&self, k: usize, t: f64, y: &[f64]) -> f64 {
        match &self.providers[k] {
            ProviderDynamics::DelayedRamp { service, allocation } => service.delivered(*allocation, t),
            ProviderDynamics::DroopLag { saturation, .. } => {
                y[self.slot[k].expect("droop providers own a state")].clamp(0.0, *saturation)
            }
        }
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let df = y[0];
        let fr: f64 = (0..self.providers.len()).map(|k| self.output(k, t, y)).sum();
        dy[0] = self.coeff * (fr - self.p_loss - self.damping * df);
        for (p, slot) in self.providers.iter().zip(&self.slot) {
            if let (ProviderDynamics::DroopLag { gain, tau, deadband, .. }, Some(i)) = (p, slot) {
                let e = (-df - deadband).max(0.0);
                dy[*i] = (gain * e - y[*i]) / tau;
            }
        }
    }
}

fn rk4(plant: &Plant, t: f64, h: f64, y: &mut [f64], work: &mut [Vec<f64>; 5]) {
    let n = y.len();
    let [k1, k2, k3, k4, tmp] = work;
    plant.rhs(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    plant.rhs(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    plant.rhs(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    plant.rhs(t + h, tmp, k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn euler(plant: &Plant, t: f64, h: f64, y: &mut [f64], work: &mut [Vec<f64>; 5]) {
    plant.rhs(t, y, &mut work[0]);
    for (yi, di) in y.iter_mut().zip(&work[0]) {
        *yi += h * di;
    }
}

/// Vertex of the parabola through three samples, if it opens upwards.
fn parabola_min(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let denom = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2]);
    if denom == 0.0 {
        return None;
    }
    let a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / denom;
    if !(a > 0.0) {
        return None;
    }
    let b = (x[2] * x[2] * (y[0] - y[1]) + x[1] * x[1] * (y[2] - y[0]) + x[0] * x[0] * (y[1] - y[2])) / denom;
    let c = (x[1] * x[2] * (x[1] - x[2]) * y[0]
        + x[2] * x[0] * (x[2] - x[0]) * y[1]
        + x[0] * x[1] * (x[0] - x[1]) * y[2])
        / denom;
    let xv = (-b / (2.0 * a)).clamp(x[0], x[2]);
    Some((xv, a * xv * xv + b * xv + c))
}

fn extract_nadir(times: &[f64], df: &[f64]) -> SimNadir {
    let (k, &min) = df.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("trajectory has samples");
    let last = df.len() - 1;
    if min >= 0.0 {
        return SimNadir { time: times[k], depth: 0.0, interior: k < last };
    }
    let refined = (k > 0 && k < last)
        .then(|| parabola_min([times[k - 1], times[k], times[k + 1]], [df[k - 1], df[k], df[k + 1]]))
        .flatten();
    let (time, value) = refined.map_or((times[k], min), |(t, v)| (t, v.min(min)));
    SimNadir { time, depth: -value, interior: k < last }
}

/// Integrates the swing equation from the fault at t = 0.
pub fn simulate(
    snapshot: &SystemSnapshot,
    spec: &SecuritySpec,
    providers: &[ProviderDynamics],
    config: &SimConfig,
) -> Result<Trajectory> {
    spec.validate()?;
    config.validate()?;
    for p in providers {
        p.validate()?;
    }
    let inertia = snapshot.total_inertia();
    if !(inertia > 0.0) {
        return Err(Error::ZeroInertia);
    }
    let min_tau = providers
        .iter()
        .filter_map(|p| match p {
            ProviderDynamics::DroopLag { tau, .. } => Some(*tau),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if config.dt > min_tau / 10.0 {
        return Err(Error::StepTooLarge { dt: config.dt, min_tau });
    }

    let mut slot = Vec::with_capacity(providers.len());
    let mut states = 1;
    for p in providers {
        if matches!(p, ProviderDynamics::DroopLag { .. }) {
            slot.push(Some(states));
            states += 1;
        } else {
            slot.push(None);
        }
    }
    let plant = Plant {
        providers,
        slot,
        coeff: spec.f_nominal / (2.0 * inertia),
        p_loss: snapshot.p_loss,
        damping: config.damping,
    };
    // ramp corners: steps are split there so the forcing is smooth on each piece
    let mut kinks: Vec<f64> = providers
        .iter()
        .filter_map(|p| match p {
            ProviderDynamics::DelayedRamp { service, allocation } if *allocation > 0.0 => {
                Some([service.activation_delay, service.completion_time()])
            }
            _ => None,
        })
        .flatten()
        .filter(|&t| t > 0.0 && t < config.t_end)
        .collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    let steps = ((config.t_end / config.dt) - 1e-9).ceil() as usize;
    let n_prov = providers.len();
    let mut times = Vec::with_capacity(steps + 1);
    let mut delta_f = Vec::with_capacity(steps + 1);
    let mut fr_total = Vec::with_capacity(steps + 1);
    let mut provider_fr = vec![Vec::with_capacity(steps + 1); n_prov];
    let mut y = vec![0.0; states];
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; states]);
    let step_fn = match config.integrator {
        Integrator::Rk4 => rk4,
        Integrator::Euler => euler,
    };

    let mut record = |t: f64, y: &[f64]| {
        times.push(t);
        delta_f.push(y[0]);
        let mut total = 0.0;
        for (k, series) in provider_fr.iter_mut().enumerate() {
            let v = plant.output(k, t, y);
            series.push(v);
            total += v;
        }
        fr_total.push(total);
    };
    record(0.0, &y);
    let mut next_kink = 0;
    for k in 0..steps {
        let t0 = k as f64 * config.dt;
        let t1 = ((k + 1) as f64 * config.dt).min(config.t_end);
        let mut t = t0;
        while next_kink < kinks.len() && kinks[next_kink] <= t0 {
            next_kink += 1;
        }
        while next_kink < kinks.len() && kinks[next_kink] < t1 {
            let tk = kinks[next_kink];
            step_fn(&plant, t, tk - t, &mut y, &mut work);
            t = tk;
            next_kink += 1;
        }
        step_fn(&plant, t, t1 - t, &mut y, &mut work);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("simulation", format!("state diverged at t = {t1}")));
        }
        record(t1, &y);
    }

    let activation = providers
        .iter()
        .map(|p| match p {
            ProviderDynamics::DelayedRamp { service, allocation } => (*allocation > 0.0
                && service.activation_delay <= config.t_end)
                .then_some(service.activation_delay),
            ProviderDynamics::DroopLag { deadband, gain, .. } => {
                if *gain <= 0.0 {
                    return None;
                }
                // first crossing of −Δf above the deadband, interpolated
                let excess = |i: usize| -delta_f[i] - deadband;
                (1..times.len()).find(|&i| excess(i) > 0.0).map(|i| {
                    let (e0, e1) = (excess(i - 1), excess(i));
                    if e0 >= 0.0 {
                        times[i - 1]
                    } else {
                        times[i - 1] + (times[i] - times[i - 1]) * (-e0) / (e1 - e0)
                    }
                })
            }
        })
        .collect::<Vec<Option<f64>>>();

    let nadir = extract_nadir(&times, &delta_f);
    Ok(Trajectory {
        provider_ids: providers.iter().map(|p| p.id().to_string()).collect(),
        times,
        delta_f,
        fr_total,
        provider_fr,
        nadir,
        activation,
    })
}

/// Outcome of comparing a simulated nadir against the closed-form one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservativenessReport {
    pub analytic_time: f64,
    pub analytic_depth: f64,
    pub simulated_time: f64,
    pub simulated_depth: f64,
    /// `analytic_depth − simulated_depth` (Hz); non-negative when conservative.
    pub margin: f64,
}

/// Simulates the providers and checks that the closed-form nadir of the
/// snapshot's portfolio is at least as deep as the simulated one.
pub fn validate_conservativeness(
    snapshot: &SystemSnapshot,
    spec: &SecuritySpec,
    providers: &[ProviderDynamics],
    config: &SimConfig,
) -> Result<ConservativenessReport> {
    let analytic = dynamics::nadir(snapshot, spec)?;
    let traj = simulate(snapshot, spec, providers, config)?;
    let report = ConservativenessReport {
        analytic_time: analytic.time,
        analytic_depth: analytic.depth,
        simulated_time: traj.nadir.time,
        simulated_depth: traj.nadir.depth,
        margin: analytic.depth - traj.nadir.depth,
    };
    if traj.nadir.depth > analytic.depth + CONSERVATIVE_TOL {
        return Err(Error::NotConservative {
            provider: lagging_provider(snapshot, &traj),
            simulated: traj.nadir.depth,
            analytic: analytic.depth,
        });
    }
    Ok(report)
}

/// Provider whose simulated output falls furthest below its ramp envelope
/// before the simulated nadir.
fn lagging_provider(snapshot: &SystemSnapshot, traj: &Trajectory) -> String {
    let mut worst: Option<(f64, &str)> = None;
    for (k, id) in traj.provider_ids.iter().enumerate() {
        let Some(pos) = snapshot.portfolio.position(id) else {
            continue;
        };
        let service = &snapshot.portfolio.services()[pos];
        let r = snapshot.portfolio.allocations()[pos];
        let shortfall = traj
            .times
            .iter()
            .zip(&traj.provider_fr[k])
            .take_while(|(t, _)| **t <= traj.nadir.time)
            .map(|(t, fr)| service.delivered(r, *t) - fr)
            .fold(0.0, f64::max);
        if shortfall > 1e-9 * r.max(1.0) && worst.is_none_or(|(w, _)| shortfall > w) {
            worst = Some((shortfall, id));
        }
    }
    worst.map_or_else(|| "aggregate".to_string(), |(_, id)| id.to_string())
}
