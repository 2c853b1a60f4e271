//! Scenario loading, population generation and the simulation loop.

pub mod engine;
pub mod output;
pub mod population;
pub mod profiles;
pub mod scenario;

pub use engine::{run, run_to_dir, RunSummary};
pub use output::{Event, Sink, StateCounts};
pub use scenario::{Scenario, ScenarioConfig};
