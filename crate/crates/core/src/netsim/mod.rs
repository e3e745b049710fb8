//! Discrete-event network harness: delays, partitions, Byzantine
//! strategies and client load.

pub mod delay;
pub mod faults;
pub mod load;
pub mod scenario;
pub mod sim;

pub use delay::sample_delay;
pub use faults::{apply_strategy, Assignment, FaultPlan, Partition, PlanError, Strategy};
pub use load::{Arrival, IntRange, LoadError, LoadProfile};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{run, SimError};
