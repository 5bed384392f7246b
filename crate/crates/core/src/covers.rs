//! Invariant covers `(A, G)`: validation, canonical constructions and enumeration.
//!
//! Any element `A` paired with input `u` must satisfy `A ⊆ A_u`, where
//! `A_u = {x ∈ Q | F(x,u) ⊆ Q}`. Enumeration therefore ranges over the
//! subsets of the sets `A_u` only, which loses no cover.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::set::StateSet;
use crate::system::{is_controlled_invariant, FiniteSystem, TargetSet};

/// One cover element `A` together with its input `G(A)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoverElement {
    pub set: StateSet,
    pub input: usize,
}

impl CoverElement {
    pub fn new(set: StateSet, input: usize) -> Self {
        CoverElement { set, input }
    }
}

/// A finite family of (set, input) pairs, kept sorted by `(set, input)` and
/// free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InvariantCover {
    elements: Vec<CoverElement>,
}

impl InvariantCover {
    /// Canonicalizes the element list. Validity is checked separately by
    /// [`check_invariant_cover`].
    pub fn new(elements: impl IntoIterator<Item = CoverElement>) -> Self {
        let set: BTreeSet<CoverElement> = elements.into_iter().collect();
        InvariantCover { elements: set.into_iter().collect() }
    }

    pub fn elements(&self) -> &[CoverElement] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &CoverElement {
        &self.elements[i]
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn union(&self) -> StateSet {
        let mut u = StateSet::new();
        for e in &self.elements {
            u.union_with(&e.set);
        }
        u
    }

    /// Index of an element, if present.
    pub fn position(&self, e: &CoverElement) -> Option<usize> {
        self.elements.binary_search(e).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoverViolation {
    EmptyElement { index: usize },
    UnknownInput { index: usize, input: usize },
    OutsideTarget { index: usize, state: usize },
    /// `state ∈ A_index` has a successor outside `Q` under the element's input.
    Escapes { index: usize, state: usize, successor: usize },
    Uncovered { state: usize },
}

/// Checks coverage of `Q` and `F(A, G(A)) ⊆ Q`; returns the first violation.
pub fn check_invariant_cover(
    sys: &FiniteSystem,
    q: &TargetSet,
    cover: &InvariantCover,
) -> std::result::Result<(), CoverViolation> {
    for (index, e) in cover.elements().iter().enumerate() {
        if e.set.is_empty() {
            return Err(CoverViolation::EmptyElement { index });
        }
        if e.input >= sys.num_inputs() {
            return Err(CoverViolation::UnknownInput { index, input: e.input });
        }
        for x in &e.set {
            if !q.contains(x) {
                return Err(CoverViolation::OutsideTarget { index, state: x });
            }
            if let Some(y) = sys.succ(x, e.input).iter().find(|&y| !q.contains(y)) {
                return Err(CoverViolation::Escapes { index, state: x, successor: y });
            }
        }
    }
    let covered = cover.union();
    match q.members().iter().find(|&x| !covered.contains(x)) {
        Some(state) => Err(CoverViolation::Uncovered { state }),
        None => Ok(()),
    }
}

/// `{{x} | x ∈ Q}` with the smallest safe input for each state.
pub fn singleton_cover(sys: &FiniteSystem, q: &TargetSet) -> Result<InvariantCover> {
    let ci = is_controlled_invariant(sys, q);
    if let Some(&state) = ci.stuck.first() {
        return Err(Error::NotControlledInvariant { state });
    }
    Ok(InvariantCover::new(
        ci.witness.into_iter().map(|(x, u)| CoverElement::new(StateSet::singleton(x), u)),
    ))
}

/// The nonempty maximal sets `A_u`, in input order.
pub fn controllable_family(sys: &FiniteSystem, q: &TargetSet) -> Vec<CoverElement> {
    (0..sys.num_inputs())
        .filter_map(|u| {
            let a: StateSet = q.members().iter().filter(|&x| sys.succ(x, u).is_subset(q.members())).collect();
            (!a.is_empty()).then(|| CoverElement::new(a, u))
        })
        .collect()
}

/// Every admissible (set, input) pair: all nonempty subsets of every `A_u`.
///
/// Its minimal expansion numbers are no larger than those of any other cover
/// at every horizon, because every spanning set of a cover is also one of
/// this cover.
pub fn universal_cover(sys: &FiniteSystem, q: &TargetSet, max_elements: usize) -> Result<InvariantCover> {
    let family = controllable_family(sys, q);
    let total: usize = family.iter().map(|e| (1usize << e.set.len().min(40)) - 1).sum();
    if total > max_elements {
        return Err(Error::ExplosionGuard { budget: max_elements as u64 });
    }
    Ok(InvariantCover::new(family.iter().flat_map(|e| {
        e.set.nonempty_subsets().into_iter().map(move |a| CoverElement::new(a, e.input))
    })))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumLimits {
    pub max_elements: usize,
    /// Request exhaustive enumeration; honored only when `#Q <= exact_max_q`.
    pub exact: bool,
    pub exact_max_q: usize,
    /// Upper bound on the number of search nodes visited in exact mode.
    pub node_budget: u64,
}

impl Default for EnumLimits {
    fn default() -> Self {
        EnumLimits { max_elements: 4, exact: true, exact_max_q: 6, node_budget: 2_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct CoverEnumeration {
    pub covers: Vec<InvariantCover>,
    /// True when every cover within the limits was produced.
    pub exhaustive: bool,
}

/// Enumerates invariant covers in a deterministic order.
///
/// Exact mode yields every set of at most `max_elements` admissible pairs
/// covering `Q`, by increasing size and then lexicographically. Heuristic
/// mode yields the maximal-set cover, the singleton cover and their union.
pub fn enumerate_covers(sys: &FiniteSystem, q: &TargetSet, limits: &EnumLimits) -> Result<CoverEnumeration> {
    let singles = singleton_cover(sys, q)?;
    if limits.exact && q.len() <= limits.exact_max_q {
        exact_covers(sys, q, limits).map(|covers| CoverEnumeration { covers, exhaustive: true })
    } else {
        Ok(CoverEnumeration { covers: heuristic_covers(sys, q, singles), exhaustive: false })
    }
}

fn heuristic_covers(sys: &FiniteSystem, q: &TargetSet, singles: InvariantCover) -> Vec<InvariantCover> {
    let maximal = InvariantCover::new(controllable_family(sys, q));
    let both = InvariantCover::new(maximal.elements().iter().chain(singles.elements()).cloned());
    let mut out = Vec::new();
    for c in [maximal, singles, both] {
        if !out.contains(&c) && check_invariant_cover(sys, q, &c).is_ok() {
            out.push(c);
        }
    }
    out
}

fn exact_covers(sys: &FiniteSystem, q: &TargetSet, limits: &EnumLimits) -> Result<Vec<InvariantCover>> {
    let pairs = universal_cover(sys, q, usize::MAX)?.elements().to_vec();
    let mut out = Vec::new();
    let mut nodes = 0u64;
    for size in 1..=limits.max_elements.min(pairs.len()) {
        let mut chosen = Vec::with_capacity(size);
        if !combos(&pairs, q.members(), size, 0, &mut chosen, &mut out, &mut nodes, limits.node_budget) {
            return Err(Error::SearchBudgetExceeded { partial: out });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn combos(
    pairs: &[CoverElement],
    q: &StateSet,
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<InvariantCover>,
    nodes: &mut u64,
    budget: u64,
) -> bool {
    *nodes += 1;
    if *nodes > budget {
        return false;
    }
    if chosen.len() == size {
        let mut u = StateSet::new();
        for &i in chosen.iter() {
            u.union_with(&pairs[i].set);
        }
        if q.is_subset(&u) {
            out.push(InvariantCover::new(chosen.iter().map(|&i| pairs[i].clone())));
        }
        return true;
    }
    for i in start..pairs.len() {
        if pairs.len() - i < size - chosen.len() {
            break;
        }
        chosen.push(i);
        let ok = combos(pairs, q, size, i + 1, chosen, out, nodes, budget);
        chosen.pop();
        if !ok {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::*;
    use crate::random::small_system;
    use proptest::prelude::*;

    fn el(xs: &[usize], u: usize) -> CoverElement {
        CoverElement::new(set(xs), u)
    }

    #[test]
    fn example1_cover_valid() {
        let (sys, q) = example1();
        let c = InvariantCover::new([el(&[0], 0), el(&[2], 1)]);
        assert_eq!(check_invariant_cover(&sys, &q, &c), Ok(()));
        assert_eq!(singleton_cover(&sys, &q).unwrap(), c);
        assert_eq!(controllable_family(&sys, &q), vec![el(&[0], 0), el(&[2], 1)]);
    }

    #[test]
    fn escaping_element_named() {
        let (sys, q) = example1();
        let c = InvariantCover::new([el(&[0], 1), el(&[2], 1)]);
        assert_eq!(
            check_invariant_cover(&sys, &q, &c),
            Err(CoverViolation::Escapes { index: 0, state: 0, successor: 1 })
        );
        let c = InvariantCover::new([el(&[0], 0)]);
        assert_eq!(check_invariant_cover(&sys, &q, &c), Err(CoverViolation::Uncovered { state: 2 }));
    }

    #[test]
    fn example4_covers() {
        let (sys, q) = example4();
        let two = InvariantCover::new([el(&[0, 1], 0), el(&[2], 1)]);
        assert_eq!(check_invariant_cover(&sys, &q, &two), Ok(()));
        let singles = singleton_cover(&sys, &q).unwrap();
        assert_eq!(singles, InvariantCover::new([el(&[0], 0), el(&[1], 0), el(&[2], 1)]));
        assert_eq!(controllable_family(&sys, &q), vec![el(&[0, 1], 0), el(&[2], 1)]);
        let limits = EnumLimits { exact: false, ..EnumLimits::default() };
        let found = enumerate_covers(&sys, &q, &limits).unwrap();
        assert!(!found.exhaustive);
        assert!(found.covers.contains(&two));
        assert!(found.covers.contains(&singles));
    }

    #[test]
    fn example1_exact_enumeration_unique() {
        let (sys, q) = example1();
        let found = enumerate_covers(&sys, &q, &EnumLimits::default()).unwrap();
        assert!(found.exhaustive);
        assert_eq!(found.covers, vec![InvariantCover::new([el(&[0], 0), el(&[2], 1)])]);
    }

    #[test]
    fn not_controlled_invariant() {
        let sys = FiniteSystem::from_fn(2, 1, |_, _| vec![1]);
        let q = TargetSet::new(&sys, set(&[0])).unwrap();
        assert!(matches!(singleton_cover(&sys, &q), Err(Error::NotControlledInvariant { state: 0 })));
        assert!(controllable_family(&sys, &q).is_empty());
    }

    #[test]
    fn self_loop_single_cover() {
        let (sys, q) = self_loop();
        let found = enumerate_covers(&sys, &q, &EnumLimits::default()).unwrap();
        assert_eq!(found.covers, vec![InvariantCover::new([el(&[0], 0)])]);
    }

    #[test]
    fn budget_reports_partial() {
        let (sys, q) = example4();
        let limits = EnumLimits { node_budget: 6, ..EnumLimits::default() };
        match enumerate_covers(&sys, &q, &limits) {
            Err(Error::SearchBudgetExceeded { partial }) => {
                assert!(partial.iter().all(|c| check_invariant_cover(&sys, &q, c).is_ok()));
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn universal_cover_guard() {
        let (sys, q) = example4();
        assert_eq!(universal_cover(&sys, &q, 100).unwrap().len(), 4);
        assert!(matches!(universal_cover(&sys, &q, 3), Err(Error::ExplosionGuard { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn enumerated_covers_are_valid(seed in any::<u64>()) {
            let (sys, q) = small_system(seed, 5, 3, true);
            let limits = EnumLimits { max_elements: 3, ..EnumLimits::default() };
            let found = enumerate_covers(&sys, &q, &limits).unwrap();
            let family = controllable_family(&sys, &q);
            for c in &found.covers {
                prop_assert_eq!(check_invariant_cover(&sys, &q, c), Ok(()));
                for e in c.elements() {
                    prop_assert!(e.set.is_subset(q.members()));
                    prop_assert!(family.iter().any(|f| f.input == e.input && e.set.is_subset(&f.set)));
                }
            }
            let limits = EnumLimits { exact: false, ..limits };
            for c in &enumerate_covers(&sys, &q, &limits).unwrap().covers {
                prop_assert_eq!(check_invariant_cover(&sys, &q, c), Ok(()));
            }
        }

        #[test]
        fn singleton_cover_iff_invariant(seed in any::<u64>()) {
            let (sys, q) = small_system(seed, 5, 2, false);
            let ci = is_controlled_invariant(&sys, &q);
            match singleton_cover(&sys, &q) {
                Ok(c) => {
                    prop_assert!(ci.invariant);
                    prop_assert_eq!(check_invariant_cover(&sys, &q, &c), Ok(()));
                }
                Err(_) => prop_assert!(!ci.invariant),
            }
        }
    }
}
