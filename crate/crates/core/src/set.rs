//! Canonical finite sets of state identifiers.

use std::cmp::Ordering;
use std::fmt;

/// A set of dense 0-based state identifiers stored as a bitset.
///
/// The word vector never carries trailing zero words, so structural equality
/// and hashing coincide with set equality. Ordering is lexicographic on the
/// ascending member list, which makes `{0} < {0,1} < {1}`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct StateSet {
    words: Vec<u64>,
}

impl StateSet {
    pub fn new() -> Self {
        StateSet { words: Vec::new() }
    }

    pub fn singleton(x: usize) -> Self {
        let mut s = StateSet::new();
        s.insert(x);
        s
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        (0..n).collect()
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    pub fn insert(&mut self, x: usize) -> bool {
        let (w, b) = (x / 64, x % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }

    pub fn remove(&mut self, x: usize) -> bool {
        let (w, b) = (x / 64, x % 64);
        if w >= self.words.len() {
            return false;
        }
        let had = self.words[w] & (1 << b) != 0;
        self.words[w] &= !(1 << b);
        self.trim();
        had
    }

    pub fn contains(&self, x: usize) -> bool {
        let (w, b) = (x / 64, x % 64);
        w < self.words.len() && self.words[w] & (1 << b) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> Iter<'_> {
        Iter { words: &self.words, word: 0, bits: self.words.first().copied().unwrap_or(0) }
    }

    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    pub fn last(&self) -> Option<usize> {
        let w = self.words.len().checked_sub(1)?;
        Some(w * 64 + 63 - self.words[w].leading_zeros() as usize)
    }

    pub fn union_with(&mut self, other: &StateSet) {
        if self.words.len() < other.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut s = StateSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        };
        s.trim();
        s
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        let mut s = self.clone();
        for (a, b) in s.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        s.trim();
        s
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.words.len() <= other.words.len()
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn intersects(&self, other: &StateSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// All nonempty subsets, in increasing order of their bitmask over the
    /// members of `self`.
    pub fn nonempty_subsets(&self) -> Vec<StateSet> {
        let members = self.to_vec();
        assert!(members.len() < 32, "subset enumeration over {} members", members.len());
        (1u32..(1 << members.len()))
            .map(|mask| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &x)| x)
                    .collect()
            })
            .collect()
    }
}

pub struct Iter<'a> {
    words: &'a [u64],
    word: usize,
    bits: u64,
}

impl Iterator for Iter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.bits != 0 {
                let b = self.bits.trailing_zeros() as usize;
                self.bits &= self.bits - 1;
                return Some(self.word * 64 + b);
            }
            self.word += 1;
            if self.word >= self.words.len() {
                return None;
            }
            self.bits = self.words[self.word];
        }
    }
}

impl<'a> IntoIterator for &'a StateSet {
    type Item = usize;
    type IntoIter = Iter<'a>;

    fn into_iter(self) -> Iter<'a> {
        self.iter()
    }
}

impl FromIterator<usize> for StateSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = StateSet::new();
        for x in iter {
            s.insert(x);
        }
        s
    }
}

impl Ord for StateSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for StateSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
