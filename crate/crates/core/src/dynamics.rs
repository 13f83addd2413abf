//! Closed-form post-fault frequency under the delayed-ramp response model.
//!
//! Between consecutive breakpoints (activation instants and completion
//! instants) every service is either idle, ramping or fully delivered, so the
//! aggregate response is affine and the deviation is quadratic in time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Portfolio, SecuritySpec, SystemSnapshot};

/// Relative tolerance for "FR(t) ≥ P_L" crossings.
pub const CROSSING_TOL: f64 = 1e-9;

/// One segment `(start, end]` of the piecewise-affine aggregate response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    /// Indices (portfolio order) of services fully delivered throughout the segment.
    pub delivered: Vec<usize>,
    /// Indices of services ramping throughout the segment.
    pub ramping: Vec<usize>,
    /// Σ_L R_l / T_l (MW/s).
    pub slope: f64,
    /// Σ_K R_k (MW).
    pub delivered_mw: f64,
    /// Σ_L R_l·T_del,l / T_l (MW); FR(t) = delivered_mw − ramp_offset + slope·t.
    pub ramp_offset: f64,
}

impl Interval {
    pub fn fr_at(&self, t: f64) -> f64 {
        self.delivered_mw - self.ramp_offset + self.slope * t
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.start && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalDecomposition {
    /// Sorted, deduplicated activation and completion instants (0 excluded).
    pub breakpoints: Vec<f64>,
    pub intervals: Vec<Interval>,
}

impl IntervalDecomposition {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Index of the segment containing `t` (segments are `(start, end]`; t ≤ 0 maps to 0).
    pub fn locate(&self, t: f64) -> usize {
        self.intervals.iter().position(|iv| t <= iv.end).unwrap_or(self.intervals.len().saturating_sub(1))
    }
}

/// Splits the response horizon into segments where FR(t) is affine.
pub fn decompose(portfolio: &Portfolio) -> Result<IntervalDecomposition> {
    if portfolio.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let mut breakpoints: Vec<f64> = portfolio
        .services()
        .iter()
        .flat_map(|s| [s.activation_delay, s.completion_time()])
        .filter(|&t| t > 0.0)
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut intervals = Vec::with_capacity(breakpoints.len());
    let mut start = 0.0;
    for &end in &breakpoints {
        let mut iv = Interval {
            start,
            end,
            delivered: Vec::new(),
            ramping: Vec::new(),
            slope: 0.0,
            delivered_mw: 0.0,
            ramp_offset: 0.0,
        };
        for (i, (s, r)) in portfolio.iter().enumerate() {
            if s.completion_time() <= start {
                iv.delivered.push(i);
                iv.delivered_mw += r;
            } else if s.activation_delay <= start {
                iv.ramping.push(i);
                iv.slope += r / s.ramp_duration;
                iv.ramp_offset += r * s.activation_delay / s.ramp_duration;
            }
        }
        intervals.push(iv);
        start = end;
    }
    Ok(IntervalDecomposition { breakpoints, intervals })
}

/// Aggregate response FR(t) in MW; zero for t ≤ 0.
pub fn fr_total(t: f64, portfolio: &Portfolio) -> f64 {
    portfolio.iter().map(|(s, r)| s.delivered(r, t)).sum()
}

/// ∫₀ᵗ FR(τ) dτ in MW·s.
pub fn fr_energy(t: f64, portfolio: &Portfolio) -> f64 {
    portfolio.iter().map(|(s, r)| s.delivered_energy(r, t)).sum()
}

/// Frequency deviation (Hz, negative below nominal) for an explicit inertia.
pub fn delta_f_with_inertia(
    t: f64,
    portfolio: &Portfolio,
    p_loss: f64,
    inertia: f64,
    f0: f64,
) -> Result<f64> {
    if inertia == 0.0 {
        return Err(Error::ZeroInertia);
    }
    let t = t.max(0.0);
    Ok(f0 / (2.0 * inertia) * (fr_energy(t, portfolio) - p_loss * t))
}

/// Frequency deviation Δf(t) of the undamped swing equation.
pub fn delta_f(t: f64, snapshot: &SystemSnapshot, spec: &SecuritySpec) -> Result<f64> {
    delta_f_with_inertia(t, &snapshot.portfolio, snapshot.p_loss, snapshot.total_inertia(), spec.f_nominal)
}

/// Magnitude of the RoCoF at the fault instant (Hz/s).
pub fn rocof_initial(snapshot: &SystemSnapshot, spec: &SecuritySpec) -> Result<f64> {
    let inertia = snapshot.total_inertia();
    if inertia == 0.0 {
        return Err(Error::ZeroInertia);
    }
    Ok(snapshot.p_loss * spec.f_nominal / (2.0 * inertia))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nadir {
    /// Instant of the frequency minimum (s).
    pub time: f64,
    /// |Δf| at that instant (Hz).
    pub depth: f64,
    /// Decomposition segment holding the nadir.
    pub interval: usize,
}

/// Earliest instant at which FR(t) reaches `p_loss`, with its segment.
///
/// A crossing that lands exactly on an interior breakpoint is assigned to the
/// segment starting there; both affine pieces agree at that instant.
pub fn nadir_instant(decomposition: &IntervalDecomposition, p_loss: f64) -> Result<(f64, usize)> {
    nadir_instant_with_tolerance(decomposition, p_loss, CROSSING_TOL)
}

/// [`nadir_instant`] with an explicit relative crossing tolerance.
pub fn nadir_instant_with_tolerance(
    decomposition: &IntervalDecomposition,
    p_loss: f64,
    rel_tol: f64,
) -> Result<(f64, usize)> {
    if p_loss <= 0.0 {
        return Ok((0.0, 0));
    }
    if decomposition.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    let tol = rel_tol * p_loss;
    let last = decomposition.intervals.len() - 1;
    for (i, iv) in decomposition.intervals.iter().enumerate() {
        if iv.fr_at(iv.start) >= p_loss - tol {
            return Ok((iv.start, i));
        }
        let fr_end = iv.fr_at(iv.end);
        if fr_end > p_loss + tol {
            // fr_end > fr_start, so the slope is strictly positive here
            let t = (p_loss - iv.delivered_mw + iv.ramp_offset) / iv.slope;
            return Ok((t.clamp(iv.start, iv.end), i));
        }
        if i == last && fr_end >= p_loss - tol {
            return Ok((iv.end, i));
        }
    }
    let total_fr = decomposition.intervals.last().map(|iv| iv.fr_at(iv.end)).unwrap_or(0.0);
    Err(Error::SteadyStateInfeasible { total_fr, p_loss })
}

/// Nadir time, depth and segment for an explicit total inertia.
pub fn nadir_with_inertia(portfolio: &Portfolio, p_loss: f64, inertia: f64, f0: f64) -> Result<Nadir> {
    let decomposition = decompose(portfolio)?;
    let (time, interval) = nadir_instant(&decomposition, p_loss)?;
    let depth = -delta_f_with_inertia(time, portfolio, p_loss, inertia, f0)?;
    Ok(Nadir { time, depth: depth.max(0.0), interval })
}

pub fn nadir(snapshot: &SystemSnapshot, spec: &SecuritySpec) -> Result<Nadir> {
    nadir_with_inertia(&snapshot.portfolio, snapshot.p_loss, snapshot.total_inertia(), spec.f_nominal)
}
