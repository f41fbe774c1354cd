//! Analysis agent: call planning against the tool registry and deterministic
//! execution with per-quantity provenance.

pub mod args;
pub mod exec;
pub mod intent;
pub mod plan;
pub mod registry;

pub use args::{coerce, parse_ref, ArgValue, STRATEGIES};
pub use exec::{
    execute_sequence, AnalysisResult, Artifact, ExecEnv, ExecFailure, OutputField, ReportedQuantity, ToolOutput,
};
pub use intent::{metric_satisfies, requested_metrics};
pub use plan::{
    parse_proposal, plan_calls, planner_prompt, repair_plan, validate_calls, Diagnostic, Plan, PlanOrigin, PlanRepair, ProposedCall, RepairAction,
    ToolCall,
};
pub use registry::{ArtifactKind, Category, ParamType, ToolRegistry, ToolSpec, MAX_CALLS};

use crate::session::SessionError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("tool registry: {0}")]
    Registry(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("call {call}: {reason}")]
    Schema { call: usize, reason: String },
    #[error("call {call} references itself or a later call")]
    Circular { call: usize },
    #[error("resource missing: {0}")]
    ResourceMissing(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}
