//! Priority-aware embedding of virtual radio resources on a shared
//! frequency-by-time grid, and the round-based simulator built on it.

pub mod embedder;
pub mod grid;
pub mod hypervisor;
pub mod metrics;
pub mod requests;
pub mod scenario;
pub mod traffic;

pub use embedder::{Algorithm, EmbedDecision, EmbedError, EmbedQueue, Outcome, QueueEntry};
pub use grid::{EdiBorder, GridError, PlacementId, Rect, Substrate};
pub use hypervisor::{run, Event, EventKind, SimError, SimResult, Simulation};
pub use metrics::{Group, PhaseSummary, RoundMetrics};
pub use requests::{Mode, Operator, PriorityPolicy, ServiceKind, ServiceSpec, Shape, Vrr, VrrId};
pub use scenario::{load_scenario, Phase, Scenario, ScenarioError, SimOptions};
pub use traffic::{RateTable, Rates, TrafficGenerator};
