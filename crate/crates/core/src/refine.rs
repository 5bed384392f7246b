//! Feedback refinement relations and transport of invariant covers from an
//! abstraction to the concrete system.

use std::collections::BTreeSet;

use crate::covers::{check_invariant_cover, CoverElement, InvariantCover};
use crate::error::{Error, Result};
use crate::set::StateSet;
use crate::system::{FiniteSystem, TargetSet};

/// `R ⊆ X1 × X2` together with the input map `r: U2 → U1`, stored as
/// `input_map[u2] = u1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinementRelation {
    pub pairs: BTreeSet<(usize, usize)>,
    pub input_map: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrrViolation {
    UnknownState { x1: usize, x2: usize },
    BadInputMap { u2: usize },
    /// `x1` lies in the domain of no pair.
    NotStrict { x1: usize },
    /// `R(F1(x1, r(u))) ⊄ F2(x2, u)`.
    Inclusion { x1: usize, x2: usize, u: usize, image: StateSet },
}

impl RefinementRelation {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>, input_map: Vec<usize>) -> Self {
        RefinementRelation { pairs: pairs.into_iter().collect(), input_map }
    }

    /// `R(A)`.
    pub fn image(&self, a: &StateSet) -> StateSet {
        self.pairs.iter().filter(|(x1, _)| a.contains(*x1)).map(|&(_, x2)| x2).collect()
    }

    /// `R^{-1}(A)`.
    pub fn preimage(&self, a: &StateSet) -> StateSet {
        self.pairs.iter().filter(|(_, x2)| a.contains(*x2)).map(|&(x1, _)| x1).collect()
    }
}

/// Checks that `rel` is a feedback refinement relation from `sys1` to `sys2`.
/// Pairs are visited in ascending order and inputs of `sys2` ascending; the
/// first failure is reported.
pub fn check_frr(sys1: &FiniteSystem, sys2: &FiniteSystem, rel: &RefinementRelation) -> std::result::Result<(), FrrViolation> {
    if let Some(&(x1, x2)) = rel.pairs.iter().find(|&&(a, b)| a >= sys1.num_states() || b >= sys2.num_states()) {
        return Err(FrrViolation::UnknownState { x1, x2 });
    }
    if rel.input_map.len() != sys2.num_inputs() {
        return Err(FrrViolation::BadInputMap { u2: rel.input_map.len().min(sys2.num_inputs()) });
    }
    if let Some(u2) = rel.input_map.iter().position(|&u1| u1 >= sys1.num_inputs()) {
        return Err(FrrViolation::BadInputMap { u2 });
    }
    let domain: StateSet = rel.pairs.iter().map(|&(x1, _)| x1).collect();
    if let Some(x1) = (0..sys1.num_states()).find(|&x| !domain.contains(x)) {
        return Err(FrrViolation::NotStrict { x1 });
    }
    for &(x1, x2) in &rel.pairs {
        for u in 0..sys2.num_inputs() {
            let image = rel.image(sys1.succ(x1, rel.input_map[u]));
            if !image.is_subset(sys2.succ(x2, u)) {
                return Err(FrrViolation::Inclusion { x1, x2, u, image });
            }
        }
    }
    Ok(())
}

/// `Q1 = R^{-1}(Q2)`.
pub fn check_q_compat(rel: &RefinementRelation, q1: &TargetSet, q2: &TargetSet) -> bool {
    rel.preimage(q2.members()) == *q1.members()
}

/// Maps each element `(A2, G2)` of an invariant cover of the abstraction to
/// `(R^{-1}(A2), r(G2))`, dropping empty sets.
pub fn transport_cover(
    sys1: &FiniteSystem,
    q1: &TargetSet,
    sys2: &FiniteSystem,
    q2: &TargetSet,
    rel: &RefinementRelation,
    cover2: &InvariantCover,
) -> Result<InvariantCover> {
    check_frr(sys1, sys2, rel).map_err(|v| Error::InvalidRelation(format!("{v:?}")))?;
    if !check_q_compat(rel, q1, q2) {
        return Err(Error::InvalidRelation("target sets are not related by the preimage".into()));
    }
    check_invariant_cover(sys2, q2, cover2).map_err(|v| Error::InvalidCover(format!("{v:?}")))?;
    let elements = cover2
        .elements()
        .iter()
        .map(|e| CoverElement { set: rel.preimage(&e.set), input: rel.input_map[e.input] })
        .filter(|e| !e.set.is_empty());
    Ok(InvariantCover::new(elements))
}

/// Existential abstraction over a partition: `block[x]` names the cell of `x`,
/// cells are `0..k` and every cell is nonempty. Returns the quotient and the
/// relation `{(x, block[x])}` with identity input map.
pub fn quotient(sys: &FiniteSystem, block: &[usize]) -> Result<(FiniteSystem, RefinementRelation)> {
    if block.len() != sys.num_states() {
        return Err(Error::InvalidRelation("partition length differs from state count".into()));
    }
    let k = block.iter().max().map_or(0, |b| b + 1);
    if (0..k).any(|c| !block.contains(&c)) {
        return Err(Error::InvalidRelation("empty partition cell".into()));
    }
    let m = sys.num_inputs();
    let mut succ = vec![StateSet::new(); k * m];
    for (x, &c) in block.iter().enumerate() {
        for u in 0..m {
            succ[c * m + u].union_with(&sys.succ(x, u).iter().map(|y| block[y]).collect());
        }
    }
    let abs = FiniteSystem::from_fn(k, m, |c, u| succ[c * m + u].to_vec());
    let rel = RefinementRelation::new(block.iter().copied().enumerate(), (0..m).collect());
    Ok((abs, rel))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Example 1 with state 0 split into `0a = 0` and `0b = 1`; the old states
    /// 1 and 2 become 2 and 3. With `bad`, `0b` under `a` jumps to old state 1.
    pub fn split_example1(bad: bool) -> (FiniteSystem, TargetSet, RefinementRelation) {
        let lift = |old: &[usize]| -> Vec<usize> {
            old.iter().flat_map(|&s| if s == 0 { vec![0, 1] } else { vec![s + 1] }).collect()
        };
        let (ex, _) = crate::system::fixtures::example1();
        let sys = FiniteSystem::from_fn(4, 2, |x, u| {
            if bad && x == 1 && u == 0 {
                return vec![2];
            }
            let old = x.saturating_sub(1);
            lift(&ex.succ(old, u).to_vec())
        });
        let q = TargetSet::new(&sys, [0, 1, 3].into_iter().collect()).unwrap();
        let rel = RefinementRelation::new([(0, 0), (1, 0), (2, 1), (3, 2)], vec![0, 1]);
        (sys, q, rel)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::split_example1;
    use super::*;
    use crate::covers::{enumerate_covers, singleton_cover, EnumLimits};
    use crate::entropy::r_inv;
    use crate::random::small_system;
    use crate::system::fixtures::*;
    use crate::system::is_controlled_invariant;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn split_system_is_refined() {
        let (ex, q2) = example1();
        let (sys, q1, rel) = split_example1(false);
        assert_eq!(check_frr(&sys, &ex, &rel), Ok(()));
        assert!(check_q_compat(&rel, &q1, &q2));
        let c2 = singleton_cover(&ex, &q2).unwrap();
        let c1 = transport_cover(&sys, &q1, &ex, &q2, &rel, &c2).unwrap();
        assert_eq!(check_invariant_cover(&sys, &q1, &c1), Ok(()));
        assert_eq!(c1.len(), c2.len());
        assert_eq!(c1.elements()[0].set, set(&[0, 1]));
    }

    #[test]
    fn bad_split_reports_first_violation() {
        let (ex, _) = example1();
        let (sys, _, rel) = split_example1(true);
        match check_frr(&sys, &ex, &rel) {
            Err(FrrViolation::Inclusion { x1: 1, x2: 0, u: 0, image }) => assert_eq!(image, set(&[1])),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_relations() {
        let (ex, q2) = example1();
        let (sys, q1, mut rel) = split_example1(false);
        rel.pairs.remove(&(3, 2));
        assert_eq!(check_frr(&sys, &ex, &rel), Err(FrrViolation::NotStrict { x1: 3 }));
        assert!(!check_q_compat(&rel, &q1, &q2));
        let bad_map = RefinementRelation::new([(0, 0)], vec![0, 7]);
        assert_eq!(check_frr(&sys, &ex, &bad_map), Err(FrrViolation::BadInputMap { u2: 1 }));
        let err = transport_cover(&sys, &q1, &ex, &q2, &rel, &singleton_cover(&ex, &q2).unwrap());
        assert!(matches!(err, Err(Error::InvalidRelation(_))));
    }

    #[test]
    fn quotient_rejects_bad_partitions() {
        let (ex, _) = example4();
        assert!(quotient(&ex, &[0, 0, 2, 2]).is_err());
        assert!(quotient(&ex, &[0, 1]).is_err());
    }

    /// Random partition with every cell nonempty.
    fn random_partition(seed: u64, n: usize) -> Vec<usize> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=n);
        let mut block: Vec<usize> = (0..n).map(|x| if x < k { x } else { rng.gen_range(0..k) }).collect();
        for i in (1..n).rev() {
            block.swap(i, rng.gen_range(0..=i));
        }
        block
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn quotient_is_frr_and_transport_is_monotone(seed in any::<u64>(), tau in 1usize..=3) {
            let (sys1, _) = small_system(seed, 6, 2, false);
            let block = random_partition(seed ^ 0x5eed, sys1.num_states());
            let (sys2, rel) = quotient(&sys1, &block).unwrap();
            prop_assert_eq!(check_frr(&sys1, &sys2, &rel), Ok(()));
            let cells: StateSet = (0..sys2.num_states()).filter(|c| (seed >> c) & 1 == 1).collect();
            prop_assume!(!cells.is_empty());
            let q2 = TargetSet::new(&sys2, cells).unwrap();
            prop_assume!(is_controlled_invariant(&sys2, &q2).invariant);
            let q1 = TargetSet::new(&sys1, rel.preimage(q2.members())).unwrap();
            let covers = enumerate_covers(&sys2, &q2, &EnumLimits { max_elements: 3, ..EnumLimits::default() }).unwrap();
            for c2 in &covers.covers {
                let c1 = transport_cover(&sys1, &q1, &sys2, &q2, &rel, c2).unwrap();
                prop_assert_eq!(check_invariant_cover(&sys1, &q1, &c1), Ok(()));
                let (r1, _) = r_inv(&sys1, &q1, &c1, tau).unwrap();
                let (r2, _) = r_inv(&sys2, &q2, c2, tau).unwrap();
                prop_assert!(r1 <= r2);
            }
        }
    }
}
