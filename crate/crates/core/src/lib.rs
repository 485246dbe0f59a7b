//! Compiles clinical prescription rules into an adaptive questionnaire.
//!
//! A [`RuleBase`] of 6-tuple rules over a [`Catalog`] is compiled under a
//! priority [`Order`] into display rules that decide which clinical
//! conditions to ask about; [`engine::Session`] keeps the form in sync with
//! the answers.

pub mod cases;
pub mod catalog;
pub mod demo;
pub mod display;
pub mod engine;
pub mod ordering;
pub mod rules;
pub mod synth;

pub use cases::{run_cases, CaseMetrics, CaseReport, ClinicalCase};
pub use catalog::{Catalog, CatalogError, Category, Code, CondIdx, Condition, ConditionKind};
pub use display::{
    compile_display_rules, displayed_conditions, expected_display_rule_count, DisplayRule,
    DisplayRuleSet, Order, OrderError, Variant,
};
pub use engine::{
    create_session, full_questionnaire, simulate_truthful, EngineError, FullQuestionnaire,
    QuestionnaireDiff, QuestionnaireView,
    Recommendation, Session,
};
pub use ordering::{
    brute_force_order, condition_frequency_order, objective, optimize_order, OptimizerConfig,
    OrderingInstance,
};
pub use rules::{parse_rulebase, print_rulebase, ClinicalRule, PatientState, RuleBase, RuleBody};

/// Any error raised while loading or compiling inputs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Dsl(#[from] rules::DslError),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error(transparent)]
    Compile(#[from] display::CompileError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cases(#[from] cases::CaseError),
}
