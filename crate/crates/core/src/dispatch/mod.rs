//! Frequency-secured unit commitment over a handful of periods.

mod formulation;
mod model;
mod solve;
mod sweep;

pub use formulation::dispatch_program;
pub use model::{
    ChanceLevels, ClassDispatch, DispatchCase, GenUnit, PeriodSchedule, Schedule, ServiceAllocation,
    MAX_PERIODS,
};
pub use solve::{solve_dispatch, solve_dispatch_with, DispatchOptions, Method, SCHEDULE_TOL};
pub use sweep::{sweep, Direction, SweepAxis, SweepPoint, SweepResult};
