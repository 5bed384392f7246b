use thiserror::Error;

use crate::codec::Counterexample;
use crate::covers::InvariantCover;
use crate::system::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {} violation(s)", .0.violations.len())]
    InvalidSystem(ValidationReport),
    #[error("unknown state {0}")]
    UnknownState(usize),
    #[error("unknown input {0}")]
    UnknownInput(usize),
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("target set is empty")]
    EmptyTarget,
    #[error("target set is not controlled invariant: state {state} has no safe input")]
    NotControlledInvariant { state: usize },
    #[error("invalid cover: {0}")]
    InvalidCover(String),
    #[error("search budget exceeded after {} cover(s)", .partial.len())]
    SearchBudgetExceeded { partial: Vec<InvariantCover> },
    #[error("policy has no family for element {element} with {steps} steps remaining")]
    IncompletePolicy { element: usize, steps: usize },
    #[error("invalid spanning policy: {0}")]
    InvalidPolicy(String),
    #[error("successors of cover element {element} are not covered by the cover")]
    UncoverableSet { element: usize },
    #[error("branch count exceeds budget {budget}")]
    ExplosionGuard { budget: u64 },
    #[error("coder-controller is not admissible")]
    NotAdmissible(Box<Counterexample>),
    #[error("coder-controller memory {memory} exceeds period {period}")]
    WindowTooShort { memory: usize, period: usize },
    #[error("invalid coder-controller: {0}")]
    InvalidController(String),
    #[error("system is not deterministic")]
    NotDeterministic,
    #[error("state {state} has no input sequence keeping it in the target set")]
    NoSpanningSet { state: usize },
    #[error("invalid relation: {0}")]
    InvalidRelation(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
