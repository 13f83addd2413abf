//! RoCoF, steady-state and nadir requirements as margin evaluators, with the
//! Gaussian chance-constrained variants.

mod normal;

pub use normal::{erf, erfc, normal_cdf, normal_inv_cdf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Interval};
use crate::error::{Error, Result};
use crate::model::{ChanceSpec, Portfolio, SecurityReport, SecuritySpec, SystemSnapshot};

/// Relative tolerance used by [`assess`].
pub const ASSESS_TOL: f64 = 1e-9;

/// Coefficients of the nadir cone `(H/f0 + y1)·y2 ≥ y3²` for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadirSocTerms {
    pub y1: f64,
    pub y2: f64,
    pub y3_sq: f64,
}

impl NadirSocTerms {
    /// `u = H/f0 + y1` for a total (or effective) inertia `inertia`.
    pub fn u(&self, inertia: f64, f0: f64) -> f64 {
        inertia / f0 + self.y1
    }

    pub fn lhs(&self, inertia: f64, f0: f64) -> f64 {
        self.u(inertia, f0) * self.y2
    }

    pub fn slack(&self, inertia: f64, f0: f64) -> f64 {
        self.lhs(inertia, f0) - self.y3_sq
    }

    /// Rotated-cone membership: u ≥ 0, y2 ≥ 0 and u·y2 ≥ y3².
    pub fn is_satisfied(&self, inertia: f64, f0: f64, rel_tol: f64) -> bool {
        self.is_satisfied_with_scale(inertia, f0, rel_tol, 0.0)
    }

    /// As [`is_satisfied`](Self::is_satisfied), additionally granting `w = √y3²`
    /// an absolute error of `rel_tol·w_scale`. The power balance behind `w`
    /// cancels to zero when the nadir sits on a breakpoint, where a purely
    /// relative test would reject round-off.
    pub fn is_satisfied_with_scale(&self, inertia: f64, f0: f64, rel_tol: f64, w_scale: f64) -> bool {
        let u = self.u(inertia, f0);
        let u_scale = (inertia / f0).abs().max(self.y1.abs());
        let lhs = u * self.y2;
        let dw = rel_tol * w_scale;
        let tol = rel_tol * lhs.abs().max(self.y3_sq) + 2.0 * self.y3_sq.sqrt() * dw + dw * dw;
        u >= -rel_tol * u_scale && lhs - self.y3_sq >= -tol
    }
}

/// Inertia margin of the RoCoF requirement for an explicit inertia (MW·s).
pub fn rocof_margin(inertia: f64, p_loss: f64, spec: &SecuritySpec) -> f64 {
    inertia - p_loss * spec.f_nominal / (2.0 * spec.rocof_max)
}

/// `(H + H_D) − P_L·f0 / (2·RoCoF_max)`; satisfied iff non-negative.
pub fn check_rocof(snapshot: &SystemSnapshot, spec: &SecuritySpec) -> f64 {
    rocof_margin(snapshot.total_inertia(), snapshot.p_loss, spec)
}

/// `ΣR − P_L`; satisfied iff non-negative.
pub fn check_steady_state(portfolio: &Portfolio, p_loss: f64) -> f64 {
    portfolio.total_allocation() - p_loss
}

/// Index of the decomposition segment whose entry and exit conditions bracket `p_loss`.
pub fn nadir_interval_conditions(portfolio: &Portfolio, p_loss: f64) -> Result<usize> {
    let decomposition = dynamics::decompose(portfolio)?;
    Ok(dynamics::nadir_instant(&decomposition, p_loss)?.1)
}

/// Cone coefficients for segment `interval` of the portfolio's decomposition.
pub fn nadir_soc_terms(
    portfolio: &Portfolio,
    p_loss: f64,
    spec: &SecuritySpec,
    interval: usize,
) -> Result<NadirSocTerms> {
    let decomposition = dynamics::decompose(portfolio)?;
    let iv = decomposition.intervals.get(interval).ok_or_else(|| {
        Error::invalid("interval", format!("{interval} out of range for {} segments", decomposition.len()))
    })?;
    Ok(interval_soc_terms(iv, portfolio, p_loss, spec.delta_f_max))
}

pub(crate) fn interval_soc_terms(
    iv: &Interval,
    portfolio: &Portfolio,
    p_loss: f64,
    delta_f_max: f64,
) -> NadirSocTerms {
    let s = portfolio.services();
    let r = portfolio.allocations();
    let four_df = 4.0 * delta_f_max;
    let delivered: f64 =
        iv.delivered.iter().map(|&k| r[k] * (s[k].ramp_duration + 2.0 * s[k].activation_delay)).sum();
    let ramping: f64 = iv
        .ramping
        .iter()
        .map(|&l| r[l] * s[l].activation_delay * s[l].activation_delay / s[l].ramp_duration)
        .sum();
    let a = p_loss - iv.delivered_mw + iv.ramp_offset;
    NadirSocTerms { y1: (ramping - delivered) / four_df, y2: iv.slope, y3_sq: a * a / four_df }
}

/// Cone coefficients of the undelayed formulation for the `n`-th distinct
/// completion-time segment; requires every activation delay to be zero.
///
/// Computed directly from the sorted ramp durations, independently of the
/// general interval decomposition.
pub fn undelayed_soc_terms(
    portfolio: &Portfolio,
    p_loss: f64,
    spec: &SecuritySpec,
    n: usize,
) -> Result<NadirSocTerms> {
    if let Some(s) = portfolio.services().iter().find(|s| s.activation_delay != 0.0) {
        return Err(Error::invalid(
            "activation_delay",
            format!("service `{}` is delayed; undelayed terms need zero delays", s.id),
        ));
    }
    let mut durations: Vec<f64> = portfolio.services().iter().map(|s| s.ramp_duration).collect();
    durations.dedup();
    if n >= durations.len() {
        return Err(Error::invalid("interval", format!("{n} out of range")));
    }
    let threshold = if n == 0 { 0.0 } else { durations[n - 1] };
    let (mut x1, mut x2, mut delivered) = (0.0, 0.0, 0.0);
    for (s, r) in portfolio.iter() {
        if s.ramp_duration <= threshold {
            x1 -= r * s.ramp_duration;
            delivered += r;
        } else {
            x2 += r / s.ramp_duration;
        }
    }
    let four_df = 4.0 * spec.delta_f_max;
    Ok(NadirSocTerms { y1: x1 / four_df, y2: x2, y3_sq: (p_loss - delivered).powi(2) / four_df })
}

/// Effective inertia `H + H_μ − Φ⁻¹(p)·σ` of the chance-constrained reformulation.
///
/// May be negative; callers see the constraints fail rather than a clamped value.
pub fn chance_adjusted_inertia(h_gen: f64, chance: &ChanceSpec, p: f64) -> Result<f64> {
    let z = normal_inv_cdf(p)?;
    Ok(h_gen + chance.h_mu - z * chance.sigma)
}

/// Inertia seen by the RoCoF and nadir checks respectively.
pub fn effective_inertia(snapshot: &SystemSnapshot, chance: Option<&ChanceSpec>) -> Result<(f64, f64)> {
    match chance {
        None => Ok((snapshot.total_inertia(), snapshot.total_inertia())),
        Some(c) => Ok((
            chance_adjusted_inertia(snapshot.h_gen, c, c.eta)?,
            chance_adjusted_inertia(snapshot.h_gen, c, c.alpha)?,
        )),
    }
}

/// Evaluates all three requirements at relative tolerance [`ASSESS_TOL`].
pub fn assess(
    snapshot: &SystemSnapshot,
    spec: &SecuritySpec,
    chance: Option<&ChanceSpec>,
) -> Result<SecurityReport> {
    assess_with_tolerance(snapshot, spec, chance, ASSESS_TOL)
}

/// [`assess`] with an explicit relative feasibility tolerance, e.g. to check
/// an interior-point solution at the solver's own accuracy.
pub fn assess_with_tolerance(
    snapshot: &SystemSnapshot,
    spec: &SecuritySpec,
    chance: Option<&ChanceSpec>,
    rel_tol: f64,
) -> Result<SecurityReport> {
    spec.validate()?;
    if let Some(c) = chance {
        c.validate()?;
    }
    let portfolio = &snapshot.portfolio;
    if portfolio.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let p_loss = snapshot.p_loss;
    let f0 = spec.f_nominal;
    let (h_rocof, h_nadir) = effective_inertia(snapshot, chance)?;

    let rocof_value = (h_rocof > 0.0).then(|| p_loss * f0 / (2.0 * h_rocof));
    let required = p_loss * f0 / (2.0 * spec.rocof_max);
    let rocof_margin = h_rocof - required;
    let rocof_ok = rocof_margin >= -rel_tol * h_rocof.abs().max(required);

    let total_fr = portfolio.total_allocation();
    let steady_state_margin = total_fr - p_loss;
    let steady_state_ok = steady_state_margin >= -rel_tol * total_fr.max(p_loss);

    let mut report = SecurityReport {
        rocof_value,
        rocof_margin,
        rocof_ok,
        steady_state_margin,
        steady_state_ok,
        nadir_time: None,
        nadir_depth: None,
        nadir_interval: None,
        nadir_ok: false,
        soc_slack: None,
        soc_slack_ratio: None,
    };
    if !steady_state_ok {
        return Ok(report);
    }

    let decomposition = dynamics::decompose(portfolio)?;
    let (time, interval) =
        dynamics::nadir_instant_with_tolerance(&decomposition, p_loss, rel_tol.max(dynamics::CROSSING_TOL))?;
    let terms = interval_soc_terms(&decomposition.intervals[interval], portfolio, p_loss, spec.delta_f_max);
    let slack = terms.slack(h_nadir, f0);
    report.nadir_time = Some(time);
    report.nadir_interval = Some(interval);
    report.soc_slack = Some(slack);
    report.soc_slack_ratio = (terms.y3_sq > 0.0).then(|| slack / terms.y3_sq);
    let iv = &decomposition.intervals[interval];
    let w_scale = (p_loss + iv.delivered_mw + iv.ramp_offset) / (2.0 * spec.delta_f_max.sqrt());
    report.nadir_ok = terms.is_satisfied_with_scale(h_nadir, f0, rel_tol, w_scale);
    if h_nadir > 0.0 {
        let df = dynamics::delta_f_with_inertia(time, portfolio, p_loss, h_nadir, f0)?;
        report.nadir_depth = Some((-df).max(0.0));
    }
    Ok(report)
}
