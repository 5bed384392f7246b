//! Finite uncertain transition systems `x(t+1) ∈ F(x(t), u(t))` and target sets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::set::StateSet;

/// Unvalidated transition data as read from a model file.
///
/// `succ[x * inputs + u]` lists the successors of `x` under `u`. Identifiers
/// may be out of range; [`validate_system`] reports such problems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionTable {
    pub states: usize,
    pub inputs: usize,
    pub succ: Vec<Vec<usize>>,
}

impl TransitionTable {
    pub fn new(states: usize, inputs: usize) -> Self {
        TransitionTable { states, inputs, succ: vec![Vec::new(); states * inputs] }
    }

    pub fn set(&mut self, x: usize, u: usize, to: impl IntoIterator<Item = usize>) {
        self.succ[x * self.inputs + u] = to.into_iter().collect();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `F(state, input)` is empty.
    EmptySuccessors { state: usize, input: usize },
    /// `F(state, input)` names a state outside the alphabet.
    UnknownSuccessor { state: usize, input: usize, successor: usize },
    /// The table does not have one entry per (state, input) pair.
    WrongShape { expected: usize, found: usize },
    NoStates,
    NoInputs,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every strictness violation and out-of-range identifier.
pub fn validate_system(table: &TransitionTable) -> ValidationReport {
    let mut violations = Vec::new();
    if table.states == 0 {
        violations.push(Violation::NoStates);
    }
    if table.inputs == 0 {
        violations.push(Violation::NoInputs);
    }
    let expected = table.states * table.inputs;
    if table.succ.len() != expected {
        violations.push(Violation::WrongShape { expected, found: table.succ.len() });
        return ValidationReport { violations };
    }
    for x in 0..table.states {
        for u in 0..table.inputs {
            let to = &table.succ[x * table.inputs + u];
            if to.is_empty() {
                violations.push(Violation::EmptySuccessors { state: x, input: u });
            }
            for &y in to {
                if y >= table.states {
                    violations.push(Violation::UnknownSuccessor { state: x, input: u, successor: y });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// A finite system `(X, U, F)` with a total, strict transition map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSystem {
    states: usize,
    inputs: usize,
    trans: Vec<StateSet>,
}

impl FiniteSystem {
    pub fn new(table: &TransitionTable) -> Result<Self> {
        let report = validate_system(table);
        if !report.is_valid() {
            return Err(Error::InvalidSystem(report));
        }
        Ok(FiniteSystem {
            states: table.states,
            inputs: table.inputs,
            trans: table.succ.iter().map(|to| to.iter().copied().collect()).collect(),
        })
    }

    /// Builds a system from a successor function; panics on invalid data.
    pub fn from_fn(states: usize, inputs: usize, f: impl Fn(usize, usize) -> Vec<usize>) -> Self {
        let mut table = TransitionTable::new(states, inputs);
        for x in 0..states {
            for u in 0..inputs {
                table.set(x, u, f(x, u));
            }
        }
        FiniteSystem::new(&table).expect("invalid transition function")
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn all_states(&self) -> StateSet {
        StateSet::full(self.states)
    }

    /// `F(x, u)`.
    pub fn succ(&self, x: usize, u: usize) -> &StateSet {
        &self.trans[x * self.inputs + u]
    }

    pub fn to_table(&self) -> TransitionTable {
        TransitionTable {
            states: self.states,
            inputs: self.inputs,
            succ: self.trans.iter().map(StateSet::to_vec).collect(),
        }
    }

    fn check_input(&self, u: usize) -> Result<()> {
        if u < self.inputs {
            Ok(())
        } else {
            Err(Error::UnknownInput(u))
        }
    }

    /// `F(A, u) = ⋃_{x ∈ A} F(x, u)`.
    pub fn post_set(&self, src: &StateSet, u: usize) -> Result<StateSet> {
        self.check_input(u)?;
        if let Some(x) = src.last().filter(|&x| x >= self.states) {
            return Err(Error::UnknownState(x));
        }
        let mut out = StateSet::new();
        for x in src {
            out.union_with(self.succ(x, u));
        }
        Ok(out)
    }

    /// The smallest input `u` with `F(x, u) ⊆ target`, if any.
    pub fn safe_input(&self, x: usize, target: &StateSet) -> Option<usize> {
        (0..self.inputs).find(|&u| self.succ(x, u).is_subset(target))
    }

    pub fn is_deterministic(&self) -> bool {
        self.trans.iter().all(|s| s.len() == 1)
    }

    /// The successor of a deterministic system; `None` if `F(x,u)` is not a singleton.
    pub fn det_succ(&self, x: usize, u: usize) -> Option<usize> {
        let s = self.succ(x, u);
        if s.len() == 1 {
            s.first()
        } else {
            None
        }
    }
}

/// A nonempty set `Q` of states of one system.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TargetSet(StateSet);

impl TargetSet {
    pub fn new(sys: &FiniteSystem, members: StateSet) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyTarget);
        }
        if let Some(x) = members.last().filter(|&x| x >= sys.num_states()) {
            return Err(Error::UnknownState(x));
        }
        Ok(TargetSet(members))
    }

    pub fn members(&self) -> &StateSet {
        &self.0
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.contains(x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A finite trajectory: `states` has one more entry than `inputs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub inputs: Vec<usize>,
}

impl Trajectory {
    pub fn is_consistent(&self, sys: &FiniteSystem) -> bool {
        self.states.len() == self.inputs.len() + 1
            && self
                .inputs
                .iter()
                .enumerate()
                .all(|(t, &u)| u < sys.num_inputs() && sys.succ(self.states[t], u).contains(self.states[t + 1]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlledInvariance {
    pub invariant: bool,
    /// For every state of `Q` that has one, the smallest safe input.
    pub witness: BTreeMap<usize, usize>,
    /// States of `Q` without any safe input.
    pub stuck: Vec<usize>,
}

/// Decides whether every `x ∈ Q` admits `u` with `F(x,u) ⊆ Q`.
pub fn is_controlled_invariant(sys: &FiniteSystem, q: &TargetSet) -> ControlledInvariance {
    let mut witness = BTreeMap::new();
    let mut stuck = Vec::new();
    for x in q.members() {
        match sys.safe_input(x, q.members()) {
            Some(u) => {
                witness.insert(x, u);
            }
            None => stuck.push(x),
        }
    }
    ControlledInvariance { invariant: stuck.is_empty(), witness, stuck }
}
