//! Scenario documents, cell placement and batch execution.

pub mod config;
pub mod placement;
pub mod presets;
pub mod run;

pub use config::{AnalysisRequest, ModelChoice, Placement, ScenarioConfig, SystemSource, SCHEMA_VERSION};
pub use placement::{place_shell, place_slab};
pub use run::{execute, Outcome, Overrides, Scenario, ScenarioError, Stage, Task};
