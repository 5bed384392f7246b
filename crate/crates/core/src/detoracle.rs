//! Deterministic invariance entropy through minimal spanning sets of input
//! sequences, solved as exact set cover.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rate::LogRate;
use crate::set::StateSet;
use crate::system::{FiniteSystem, TargetSet};

/// Instances up to these sizes are solved exactly.
pub const EXACT_MAX_Q: usize = 12;
pub const EXACT_MAX_SEQUENCES: usize = 4096;
/// Beyond this many input sequences nothing is attempted.
pub const MAX_SEQUENCES: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetSpan {
    pub tau: usize,
    pub r: usize,
    /// Input sequences forming a spanning set of size `r`.
    pub witnesses: Vec<Vec<usize>>,
    /// False when only the greedy bound was computed.
    pub exact: bool,
}

fn decode(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut v = vec![0; len];
    for slot in v.iter_mut().rev() {
        *slot = code % base;
        code /= base;
    }
    v
}

/// States of `Q` whose orbit under `nu` stays in `Q` up to and including time `τ`.
fn safe_states(sys: &FiniteSystem, q: &TargetSet, nu: &[usize]) -> StateSet {
    q.members()
        .iter()
        .filter(|&x| {
            let mut y = x;
            nu.iter().all(|&u| {
                y = sys.det_succ(y, u).expect("deterministic");
                q.contains(y)
            })
        })
        .collect()
}

fn greedy(target: &StateSet, sets: &[StateSet]) -> Vec<usize> {
    let mut uncovered = target.clone();
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let best = (0..sets.len())
            .max_by_key(|&j| (sets[j].intersection(&uncovered).len(), std::cmp::Reverse(j)))
            .expect("coverable");
        uncovered = uncovered.difference(&sets[best]);
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen
}

/// Branch and bound: branch on the uncovered state with the fewest covering
/// sets, prune on `chosen + ceil(uncovered / widest) >= best`.
fn exact_cover(target: &StateSet, sets: &[StateSet], seed: Vec<usize>) -> Vec<usize> {
    struct Search<'a> {
        sets: &'a [StateSet],
        widest: usize,
        best: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, uncovered: &StateSet, chosen: &mut Vec<usize>) {
            if uncovered.is_empty() {
                if chosen.len() < self.best.len() {
                    self.best = chosen.clone();
                    self.best.sort_unstable();
                }
                return;
            }
            if chosen.len() + uncovered.len().div_ceil(self.widest) >= self.best.len() {
                return;
            }
            let pivot = uncovered
                .iter()
                .min_by_key(|&x| (self.sets.iter().filter(|s| s.contains(x)).count(), x))
                .expect("nonempty");
            for j in 0..self.sets.len() {
                if self.sets[j].contains(pivot) {
                    chosen.push(j);
                    let rest = uncovered.difference(&self.sets[j]);
                    self.go(&rest, chosen);
                    chosen.pop();
                }
            }
        }
    }
    let widest = sets.iter().map(StateSet::len).max().unwrap_or(1).max(1);
    let mut s = Search { sets, widest, best: seed };
    s.go(target, &mut Vec::new());
    s.best
}

/// `r_det(τ,Q)`: the least number of input sequences of length `τ` such that
/// every state of `Q` has one keeping its orbit in `Q`.
pub fn r_det(sys: &FiniteSystem, q: &TargetSet, tau: usize) -> Result<DetSpan> {
    if !sys.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    let count = sys
        .num_inputs()
        .checked_pow(tau as u32)
        .filter(|&c| c <= MAX_SEQUENCES)
        .ok_or(Error::ExplosionGuard { budget: MAX_SEQUENCES as u64 })?;
    let ks: Vec<StateSet> = (0..count)
        .into_par_iter()
        .map(|code| safe_states(sys, q, &decode(code, sys.num_inputs(), tau)))
        .collect();
    let reach = ks.iter().fold(StateSet::new(), |acc, k| acc.union(k));
    if let Some(state) = q.members().iter().find(|&x| !reach.contains(x)) {
        return Err(Error::NoSpanningSet { state });
    }
    // keep the first sequence of each distinct, inclusion-maximal K(ν)
    let mut reps: Vec<usize> = Vec::new();
    for (code, k) in ks.iter().enumerate() {
        if !k.is_empty() && !reps.iter().any(|&r| ks[r] == *k) {
            reps.push(code);
        }
    }
    let reps: Vec<usize> = reps
        .iter()
        .copied()
        .filter(|&a| !reps.iter().any(|&b| b != a && ks[a].is_subset(&ks[b]) && ks[a] != ks[b]))
        .collect();
    let sets: Vec<StateSet> = reps.iter().map(|&c| ks[c].clone()).collect();
    let seed = greedy(q.members(), &sets);
    let exact = q.len() <= EXACT_MAX_Q && count <= EXACT_MAX_SEQUENCES;
    let chosen = if exact { exact_cover(q.members(), &sets, seed) } else { seed };
    let witnesses = chosen.iter().map(|&j| decode(reps[j], sys.num_inputs(), tau)).collect();
    Ok(DetSpan { tau, r: chosen.len(), witnesses, exact })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetSpanReport {
    pub per_tau: Vec<DetSpan>,
    /// `min_τ (1/τ) log2 r_det(τ,Q)`.
    pub h_det_ub: LogRate,
    pub exact: bool,
}

pub fn h_det_bounds(sys: &FiniteSystem, q: &TargetSet, tau_max: usize) -> Result<DetSpanReport> {
    let per_tau = (1..=tau_max.max(1)).map(|tau| r_det(sys, q, tau)).collect::<Result<Vec<_>>>()?;
    let h_det_ub = per_tau
        .iter()
        .map(|d| LogRate::from_u64(d.r as u64, d.tau as u32))
        .min()
        .expect("tau_max >= 1");
    let exact = per_tau.iter().all(|d| d.exact);
    Ok(DetSpanReport { per_tau, h_det_ub, exact })
}
