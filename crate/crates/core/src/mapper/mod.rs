//! Compiles a normalized database into an initial MTheory and rewrites MFrags from
//! expert causal rules.

mod apply;
mod initial;
mod plan;
mod rules;

use crate::mtheory::ModelError;
use crate::relational::RelationalError;

pub use apply::{apply_rule, apply_rule_staged, cpc_ovs, refine_context, RuleStages};
pub use initial::{build_initial_mtheory, entity_type_name};
pub use plan::{plan_join, JoinCondition, JoinPlan, JoinStep, PlanAttr, StepRole};
pub use rules::{parse_rules, prepare_rule_database, AttrRef, CausalRule, Family, PriorSpec, RuleParent};

#[derive(Debug, thiserror::Error)]
pub enum MapperError {
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error("rules line {line}: {message}")]
    Rule { line: usize, message: String },
    #[error("no relation has an attribute named {0}")]
    UnknownAttribute(String),
    #[error("attribute {attribute} is ambiguous; qualify it with one of {}", .candidates.join(", "))]
    AmbiguousAttribute { attribute: String, candidates: Vec<String> },
    #[error("{0}@prev needs an ordering relation named Predecessor over a single entity type")]
    NoOrdering(String),
    #[error("no join path connects {child} to {parent}")]
    NoPath { child: String, parent: String },
    #[error("join is ambiguous: {0}")]
    AmbiguousHint(String),
    #[error("parent {0} has no home MFrag")]
    UnknownParent(String),
    #[error("resident {0} has no home MFrag")]
    UnknownChild(String),
    #[error("rule for {child} conflicts with the model: {message}")]
    RuleConflict { child: String, message: String },
    #[error("rule would introduce a cycle through {}", .0.join(" -> "))]
    CycleIntroduced(Vec<String>),
    #[error("ordinary variables {left} ({left_type}) and {right} ({right_type}) are equated but have different types")]
    TypeMismatch {
        left: String,
        left_type: String,
        right: String,
        right_type: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl MapperError {
    pub fn code(&self) -> &'static str {
        match self {
            MapperError::Relational(e) => e.code(),
            MapperError::Rule { .. } => "E_RULE",
            MapperError::UnknownAttribute(_) | MapperError::AmbiguousAttribute { .. } => "E_RULE",
            MapperError::NoOrdering(_) => "E_NO_ORDERING",
            MapperError::NoPath { .. } => "E_NO_PATH",
            MapperError::AmbiguousHint(_) => "E_AMBIGUOUS_HINT",
            MapperError::UnknownParent(_) => "E_UNKNOWN_PARENT",
            MapperError::UnknownChild(_) => "E_UNKNOWN_CHILD",
            MapperError::RuleConflict { .. } => "E_RULE",
            MapperError::CycleIntroduced(_) => "E_CYCLE",
            MapperError::TypeMismatch { .. } => "E_TYPE_MISMATCH",
            MapperError::Model(_) => "E_MODEL",
        }
    }
}
