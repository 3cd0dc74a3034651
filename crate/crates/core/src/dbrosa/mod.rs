//! The Byzantine-resilient distributed seeking algorithm.

pub mod agent;
pub mod engine;
pub mod schedule;

pub use agent::{round_step, AgentState, RoundContext, SampleScope};
pub use engine::{InitPolicy, InvariantCounts, Simulation, SimulationSpec};
pub use schedule::{make_schedules, DeltaRule, ScheduleMode, ScheduleParams, ScheduleSet};
