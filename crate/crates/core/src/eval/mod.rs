//! Evaluation harnesses: tool-depth benchmark, paired critic ablation under
//! hint degradation, and knowledge-graph QA scoring.

pub mod critic_suite;
pub mod degrade;
pub mod depth;
pub mod metrics;
pub mod qa;

pub use critic_suite::{run_critic_suite, CriticQuery, CriticSuiteConfig, CriticSuiteReport};
pub use degrade::degrade_routing;
pub use depth::{
    assign_defects, judge, run_depth_benchmark, scripted_planner, BenchQuery, CalledTool, Caller, Defect, DepthConfig,
    DepthReport, Judgement, Level,
};
pub use metrics::{critic_value_metrics, score_tool_selection, Condition, CriticValue, PairedTrial, ToolScore};
pub use qa::{fixture_context, generate_mcq, run_kg_qa, score_qa, KgQaReport, QaFormat, QaItem, QaScore};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unpaired trial: {0}")]
    Unpaired(String),
    #[error("benchmark format: {0}")]
    Format(String),
    #[error("evaluation config: {0}")]
    Config(String),
    #[error("engine: {0}")]
    Engine(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
