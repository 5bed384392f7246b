//! Seeded random systems for property tests and benchmarks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::set::StateSet;
use crate::system::{is_controlled_invariant, FiniteSystem, TargetSet};

#[derive(Clone, Debug)]
pub struct RandomSpec {
    pub min_states: usize,
    pub max_states: usize,
    pub min_inputs: usize,
    pub max_inputs: usize,
    /// Largest successor set; 1 gives a deterministic system.
    pub max_succ: usize,
    pub require_invariant: bool,
}

impl RandomSpec {
    pub fn small(max_states: usize, max_inputs: usize) -> Self {
        RandomSpec {
            min_states: 1,
            max_states,
            min_inputs: 1,
            max_inputs,
            max_succ: 2,
            require_invariant: true,
        }
    }
}

/// Draws systems until one meets the spec. `Q` is a random nonempty subset.
pub fn random_system<R: Rng>(rng: &mut R, spec: &RandomSpec) -> (FiniteSystem, TargetSet) {
    loop {
        let n = rng.gen_range(spec.min_states..=spec.max_states);
        let m = rng.gen_range(spec.min_inputs..=spec.max_inputs);
        let succ: Vec<Vec<usize>> = (0..n * m)
            .map(|_| {
                let k = rng.gen_range(1..=spec.max_succ.min(n));
                sample(rng, n, k).into_vec()
            })
            .collect();
        let sys = FiniteSystem::from_fn(n, m, |x, u| succ[x * m + u].clone());
        let mut members = StateSet::new();
        while members.is_empty() {
            members = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        }
        let q = TargetSet::new(&sys, members).expect("nonempty subset");
        if !spec.require_invariant || is_controlled_invariant(&sys, &q).invariant {
            return (sys, q);
        }
    }
}

/// A system with at most `max_states` states and `max_inputs` inputs drawn from `seed`.
pub fn small_system(seed: u64, max_states: usize, max_inputs: usize, require_invariant: bool) -> (FiniteSystem, TargetSet) {
    let spec = RandomSpec { require_invariant, ..RandomSpec::small(max_states, max_inputs) };
    random_system(&mut ChaCha8Rng::seed_from_u64(seed), &spec)
}
