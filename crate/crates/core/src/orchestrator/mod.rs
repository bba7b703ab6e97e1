//! Claim workflow: the state machine, the driver that runs claims through
//! the services, scenario scripts, and the service topology comparison.

mod scenario;
mod state;
mod topology;
mod workflow;

pub use scenario::{
    parse_scenario, render_report, run_scenario, scenario_stamper, Scenario, ScenarioLine,
    ScenarioParseError, ScenarioReport, Step, StepOutcome, TraceEntry,
};
pub use state::{
    advance, allowed_events, internal_step, next_state, ClaimEvent, ClaimState, EventKind,
    IllegalTransition, InternalCommand, Trigger,
};
pub use topology::{compare_topologies, render_table, TopologyError, TopologyMode, TopologyReport, SHARED_SERVICES};
pub use workflow::{call_fault, ClaimWorkflow, SubmitOutcome};
