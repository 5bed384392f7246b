//! Minimal expansion numbers `r_inv(τ,Q)` of invariant covers and entropy bounds.
//!
//! The covering constraint along a branch only involves the last element of
//! the branch prefix, so the minimum over spanning sets collapses to the
//! recursion `c_1(i) = 1`, `c_k(i) = min_P #P · max_{j∈P} c_{k-1}(j)` over
//! families `P` covering `F(A_i, G(A_i))`, and
//! `r_inv(τ) = min_{P_0} #P_0 · max_{j∈P_0} c_τ(j)` over families covering `Q`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num::bigint::BigUint;
use num::One;
use rayon::prelude::*;

use crate::covers::{enumerate_covers, universal_cover, EnumLimits, InvariantCover};
use crate::error::{Error, Result};
use crate::rate::LogRate;
use crate::set::StateSet;
use crate::system::{is_controlled_invariant, FiniteSystem, TargetSet};

/// A spanning set in compact form: branches start in `initial`; an element
/// `i` with `k` steps remaining (including itself) continues in `succ[(i, k)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningPolicy {
    pub cover: InvariantCover,
    pub horizon: usize,
    pub initial: Vec<usize>,
    pub succ: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SpanningPolicy {
    fn family(&self, i: usize, k: usize) -> Result<&[usize]> {
        self.succ
            .get(&(i, k))
            .map(Vec::as_slice)
            .ok_or(Error::IncompletePolicy { element: i, steps: k })
    }

    /// The `(element, steps remaining)` pairs reachable from `initial`.
    pub fn reachable(&self) -> Result<BTreeSet<(usize, usize)>> {
        let mut seen = BTreeSet::new();
        let mut frontier: BTreeSet<usize> = self.initial.iter().copied().collect();
        for k in (1..=self.horizon).rev() {
            let mut next = BTreeSet::new();
            for &i in &frontier {
                seen.insert((i, k));
                if k > 1 {
                    next.extend(self.family(i, k)?.iter().copied());
                }
            }
            frontier = next;
        }
        Ok(seen)
    }
}

fn check_family(cover: &InvariantCover, fam: &[usize], target: &StateSet, what: &str) -> Result<()> {
    let mut u = StateSet::new();
    for &j in fam {
        let e = cover.elements().get(j).ok_or_else(|| Error::InvalidPolicy(format!("{what}: no element {j}")))?;
        u.union_with(&e.set);
    }
    if target.is_subset(&u) {
        Ok(())
    } else {
        Err(Error::InvalidPolicy(format!("{what} does not cover its target")))
    }
}

/// Checks that `policy` describes a `(τ,Q)`-spanning set of its cover.
pub fn validate_policy(sys: &FiniteSystem, q: &TargetSet, policy: &SpanningPolicy) -> Result<()> {
    if policy.horizon == 0 {
        return Err(Error::InvalidPolicy("horizon must be positive".into()));
    }
    check_family(&policy.cover, &policy.initial, q.members(), "initial family")?;
    for (i, k) in policy.reachable()? {
        if k > 1 {
            let e = policy.cover.element(i);
            let post = sys.post_set(&e.set, e.input)?;
            check_family(&policy.cover, policy.family(i, k)?, &post, &format!("family ({i},{k})"))?;
        }
    }
    Ok(())
}

/// `N(S)`: the number of initial elements times the largest product of
/// family sizes along a branch.
pub fn expansion_number(policy: &SpanningPolicy) -> Result<BigUint> {
    let mut memo: HashMap<(usize, usize), BigUint> = HashMap::new();
    fn c(p: &SpanningPolicy, i: usize, k: usize, memo: &mut HashMap<(usize, usize), BigUint>) -> Result<BigUint> {
        if k <= 1 {
            return Ok(BigUint::one());
        }
        if let Some(v) = memo.get(&(i, k)) {
            return Ok(v.clone());
        }
        let fam = p.family(i, k)?;
        let mut best = BigUint::one();
        for &j in fam {
            best = best.max(c(p, j, k - 1, memo)?);
        }
        let v = best * BigUint::from(fam.len());
        memo.insert((i, k), v.clone());
        Ok(v)
    }
    let mut best = BigUint::one();
    for &i in &policy.initial {
        best = best.max(c(policy, i, policy.horizon, &mut memo)?);
    }
    Ok(best * BigUint::from(policy.initial.len()))
}

/// Materializes all branches of a policy, failing once more than `budget` exist.
pub fn expand_policy(policy: &SpanningPolicy, budget: u64) -> Result<BTreeSet<Vec<usize>>> {
    fn walk(
        p: &SpanningPolicy,
        prefix: &mut Vec<usize>,
        out: &mut BTreeSet<Vec<usize>>,
        budget: u64,
    ) -> Result<()> {
        let k = p.horizon - prefix.len() + 1;
        if k == 1 {
            out.insert(prefix.clone());
            if out.len() as u64 > budget {
                return Err(Error::ExplosionGuard { budget });
            }
            return Ok(());
        }
        let last = *prefix.last().expect("nonempty prefix");
        for &j in p.family(last, k)? {
            prefix.push(j);
            walk(p, prefix, out, budget)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    for &i in &policy.initial {
        walk(policy, &mut vec![i], &mut out, budget)?;
    }
    Ok(out)
}

/// Smallest subfamily of `allowed` covering `target`, by iterative deepening.
/// Ties resolve to the first family in index order.
fn min_set_cover(target: &StateSet, allowed: &[usize], sets: &[StateSet]) -> Option<Vec<usize>> {
    fn dfs(uncovered: &StateSet, allowed: &[usize], sets: &[StateSet], depth: usize, widest: usize, chosen: &mut Vec<usize>) -> bool {
        let Some(x) = uncovered.first() else { return true };
        if depth == 0 || depth * widest < uncovered.len() {
            return false;
        }
        for &j in allowed {
            if sets[j].contains(x) {
                chosen.push(j);
                if dfs(&uncovered.difference(&sets[j]), allowed, sets, depth - 1, widest, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    if target.is_empty() {
        return Some(Vec::new());
    }
    let widest = allowed.iter().map(|&j| sets[j].intersection(target).len()).max()?;
    for depth in 1..=target.len() {
        let mut chosen = Vec::new();
        if dfs(target, allowed, sets, depth, widest, &mut chosen) {
            chosen.sort_unstable();
            return Some(chosen);
        }
    }
    None
}

/// Drops candidates whose trace on `target` is contained in another's.
fn maximal_traces(target: &StateSet, cands: &[usize], sets: &[StateSet]) -> Vec<usize> {
    let traces: Vec<StateSet> = cands.iter().map(|&j| sets[j].intersection(target)).collect();
    (0..cands.len())
        .filter(|&a| {
            !(0..cands.len()).any(|b| {
                b != a && traces[a].is_subset(&traces[b]) && (traces[a] != traces[b] || b < a)
            })
        })
        .map(|a| cands[a])
        .collect()
}

/// Minimizes `#P · max_{j∈P} values[j]` over families `P` covering `target`.
///
/// For each threshold `t` the smallest cover using only candidates of value
/// at most `t` is found; the best of these is optimal. Thresholds are tried
/// in increasing order and the search stops once no threshold can improve.
fn min_family(target: &StateSet, sets: &[StateSet], values: &[BigUint]) -> Option<(BigUint, Vec<usize>)> {
    let cands: Vec<usize> = (0..sets.len()).filter(|&j| sets[j].intersects(target)).collect();
    let lower = min_set_cover(target, &maximal_traces(target, &cands, sets), sets)?.len();
    let thresholds: BTreeSet<&BigUint> = cands.iter().map(|&j| &values[j]).collect();
    let mut best: Option<(BigUint, Vec<usize>)> = None;
    for t in thresholds {
        if let Some((b, _)) = &best {
            if &(t * BigUint::from(lower)) >= b {
                break;
            }
        }
        let allowed: Vec<usize> = cands.iter().copied().filter(|&j| &values[j] <= t).collect();
        let Some(fam) = min_set_cover(target, &maximal_traces(target, &allowed, sets), sets) else { continue };
        let top = fam.iter().map(|&j| &values[j]).max().cloned().unwrap_or_else(BigUint::one);
        let obj = top * BigUint::from(fam.len());
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, fam));
        }
    }
    best
}

/// Level-by-level evaluation of the recursion for one cover.
struct CoverDp {
    cover: InvariantCover,
    q: StateSet,
    sets: Vec<StateSet>,
    posts: Vec<StateSet>,
    /// `levels[k-1][i] = c_k(i)`.
    levels: Vec<Vec<BigUint>>,
    /// `choice[k-1][i]` is the minimizing family for `(i, k)`, `k >= 2`.
    choice: Vec<Vec<Vec<usize>>>,
}

impl CoverDp {
    fn new(sys: &FiniteSystem, q: &TargetSet, cover: &InvariantCover) -> Result<Self> {
        let sets: Vec<StateSet> = cover.elements().iter().map(|e| e.set.clone()).collect();
        let posts = cover
            .elements()
            .iter()
            .map(|e| sys.post_set(&e.set, e.input))
            .collect::<Result<Vec<_>>>()?;
        let union = cover.union();
        if let Some(element) = posts.iter().position(|p| !p.is_subset(&union)) {
            return Err(Error::UncoverableSet { element });
        }
        if !q.members().is_subset(&union) {
            return Err(Error::InvalidCover("elements do not cover the target set".into()));
        }
        Ok(CoverDp {
            cover: cover.clone(),
            q: q.members().clone(),
            levels: vec![vec![BigUint::one(); sets.len()]],
            choice: vec![vec![Vec::new(); sets.len()]],
            sets,
            posts,
        })
    }

    fn extend_to(&mut self, k: usize) {
        while self.levels.len() < k {
            let prev = self.levels.last().expect("level 1 present");
            let mut cache: HashMap<&StateSet, (BigUint, Vec<usize>)> = HashMap::new();
            let mut vals = Vec::with_capacity(self.sets.len());
            let mut fams = Vec::with_capacity(self.sets.len());
            for post in &self.posts {
                let (v, f) = cache
                    .entry(post)
                    .or_insert_with(|| min_family(post, &self.sets, prev).expect("coverable by construction"))
                    .clone();
                vals.push(v);
                fams.push(f);
            }
            self.levels.push(vals);
            self.choice.push(fams);
        }
    }

    fn root(&self, tau: usize) -> (BigUint, Vec<usize>) {
        min_family(&self.q, &self.sets, &self.levels[tau - 1]).expect("target covered by construction")
    }

    fn policy(&self, tau: usize) -> SpanningPolicy {
        let (_, initial) = self.root(tau);
        let mut succ = BTreeMap::new();
        let mut frontier: BTreeSet<usize> = initial.iter().copied().collect();
        for k in (2..=tau).rev() {
            let mut next = BTreeSet::new();
            for &i in &frontier {
                let fam = self.choice[k - 1][i].clone();
                next.extend(fam.iter().copied());
                succ.insert((i, k), fam);
            }
            frontier = next;
        }
        SpanningPolicy { cover: self.cover.clone(), horizon: tau, initial, succ }
    }

    /// Smallest number of elements needed to cover `Q` or any successor set;
    /// `r_inv(τ) >= κ^τ` for every horizon.
    fn kappa(&self) -> usize {
        let all: Vec<usize> = (0..self.sets.len()).collect();
        std::iter::once(&self.q)
            .chain(self.posts.iter())
            .map(|t| min_set_cover(t, &maximal_traces(t, &all, &self.sets), &self.sets).map_or(0, |f| f.len()))
            .min()
            .unwrap_or(1)
            .max(1)
    }
}

/// The minimal expansion number over all `(τ,Q)`-spanning sets of `cover`,
/// with a policy attaining it.
pub fn r_inv(sys: &FiniteSystem, q: &TargetSet, cover: &InvariantCover, tau: usize) -> Result<(BigUint, SpanningPolicy)> {
    if tau == 0 {
        return Err(Error::InvalidPolicy("horizon must be positive".into()));
    }
    let mut dp = CoverDp::new(sys, q, cover)?;
    dp.extend_to(tau);
    Ok((dp.root(tau).0, dp.policy(tau)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TauEntry {
    pub tau: usize,
    pub r: BigUint,
    /// `(1/τ) log2 r`.
    pub rate: LogRate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntropyReport {
    pub per_tau: Vec<TauEntry>,
    /// Smallest per-horizon rate; an upper bound on the cover entropy.
    pub ub: LogRate,
    pub ub_tau: usize,
    /// `log2 κ`, a lower bound on the cover entropy.
    pub lower: LogRate,
    pub exact: bool,
    pub certificate: String,
}

/// Per-horizon table for `τ = 1..=tau_max` and bounds on the cover entropy.
pub fn cover_entropy(sys: &FiniteSystem, q: &TargetSet, cover: &InvariantCover, tau_max: usize) -> Result<EntropyReport> {
    let mut dp = CoverDp::new(sys, q, cover)?;
    entropy_from_dp(&mut dp, tau_max).map(|(report, _)| report)
}

fn entropy_from_dp(dp: &mut CoverDp, tau_max: usize) -> Result<(EntropyReport, SpanningPolicy)> {
    if tau_max == 0 {
        return Err(Error::InvalidPolicy("horizon must be positive".into()));
    }
    dp.extend_to(tau_max);
    let per_tau: Vec<TauEntry> = (1..=tau_max)
        .map(|tau| {
            let r = dp.root(tau).0;
            TauEntry { tau, rate: LogRate::new(r.clone(), tau as u32), r }
        })
        .collect();
    let best = per_tau.iter().min_by(|a, b| a.rate.cmp(&b.rate)).expect("tau_max >= 1");
    let (ub, ub_tau) = (best.rate.clone(), best.tau);
    let kappa = dp.kappa();
    let lower = LogRate::log2_of(kappa as u64);
    let exact = ub == lower;
    let certificate = if exact {
        format!("r_inv({ub_tau}) = {kappa}^{ub_tau} meets the lower bound r_inv(t) >= {kappa}^t")
    } else {
        format!("upper bound only; lower bound log2({kappa})")
    };
    let policy = dp.policy(ub_tau);
    Ok((EntropyReport { per_tau, ub, ub_tau, lower, exact, certificate }, policy))
}

#[derive(Clone, Debug)]
pub struct EntropyLimits {
    pub tau_max: usize,
    pub enumeration: EnumLimits,
    /// Largest admissible-pair family evaluated as a single cover.
    pub universal_max_elements: usize,
}

impl Default for EntropyLimits {
    fn default() -> Self {
        EntropyLimits { tau_max: 8, enumeration: EnumLimits::default(), universal_max_elements: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Hinv {
    Finite { ub: LogRate, lower: LogRate },
    Infinite,
}

#[derive(Clone, Debug)]
pub struct HinvReport {
    pub value: Hinv,
    pub exact: bool,
    /// True when the search covered all covers rather than a heuristic sample.
    pub exhaustive: bool,
    /// Elements used by an optimal spanning set at the best horizon.
    pub best_cover: Option<InvariantCover>,
    pub report: Option<EntropyReport>,
    pub covers_examined: usize,
}

impl HinvReport {
    pub fn ub(&self) -> Option<&LogRate> {
        match &self.value {
            Hinv::Finite { ub, .. } => Some(ub),
            Hinv::Infinite => None,
        }
    }
}

fn used_elements(policy: &SpanningPolicy) -> InvariantCover {
    let mut used: BTreeSet<usize> = policy.initial.iter().copied().collect();
    for fam in policy.succ.values() {
        used.extend(fam.iter().copied());
    }
    InvariantCover::new(used.into_iter().map(|i| policy.cover.element(i).clone()))
}

/// Upper bound on `h_inv` and, when certifiable, its exact value.
///
/// For small `Q` the cover of all admissible pairs is evaluated; its minimal
/// expansion numbers equal the minimum over all covers at each horizon, so
/// its lower bound is one for `h_inv` too. Otherwise heuristic covers are
/// compared and the result is only an upper bound.
pub fn invariance_entropy_ub(sys: &FiniteSystem, q: &TargetSet, limits: &EntropyLimits) -> Result<HinvReport> {
    if !is_controlled_invariant(sys, q).invariant {
        return Ok(HinvReport {
            value: Hinv::Infinite,
            exact: true,
            exhaustive: true,
            best_cover: None,
            report: None,
            covers_examined: 0,
        });
    }
    let lim = &limits.enumeration;
    if lim.exact && q.len() <= lim.exact_max_q {
        if let Ok(universal) = universal_cover(sys, q, limits.universal_max_elements) {
            let mut dp = CoverDp::new(sys, q, &universal)?;
            let (report, policy) = entropy_from_dp(&mut dp, limits.tau_max)?;
            return Ok(HinvReport {
                value: Hinv::Finite { ub: report.ub.clone(), lower: report.lower.clone() },
                exact: report.exact,
                exhaustive: true,
                best_cover: Some(used_elements(&policy)),
                report: Some(report),
                covers_examined: 1,
            });
        }
    }
    let heuristic = EnumLimits { exact: false, ..lim.clone() };
    let covers = enumerate_covers(sys, q, &heuristic)?.covers;
    let reports = covers
        .par_iter()
        .map(|c| cover_entropy(sys, q, c, limits.tau_max))
        .collect::<Result<Vec<_>>>()?;
    let (best, report) = covers
        .iter()
        .zip(reports)
        .min_by(|a, b| a.1.ub.cmp(&b.1.ub))
        .ok_or(Error::InvalidCover("no candidate cover".into()))?;
    Ok(HinvReport {
        value: Hinv::Finite { ub: report.ub.clone(), lower: LogRate::zero() },
        exact: false,
        exhaustive: false,
        best_cover: Some(best.clone()),
        report: Some(report),
        covers_examined: covers.len(),
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive references that share no code with the recursion above.

    use super::*;

    /// Minimal expansion number by walking the branch tree: every node picks
    /// its own successor family from all covering subfamilies, redundant ones
    /// included, without sharing results between nodes.
    pub fn tree_min(sys: &FiniteSystem, q: &TargetSet, cover: &InvariantCover, tau: usize) -> Option<u64> {
        let n = cover.len();
        let covering = |target: &StateSet| -> Vec<Vec<usize>> {
            (1u32..(1 << n))
                .filter_map(|mask| {
                    let fam: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                    let mut u = StateSet::new();
                    for &i in &fam {
                        u.union_with(&cover.element(i).set);
                    }
                    target.is_subset(&u).then_some(fam)
                })
                .collect()
        };
        fn node(sys: &FiniteSystem, cover: &InvariantCover, i: usize, k: usize, covering: &dyn Fn(&StateSet) -> Vec<Vec<usize>>) -> Option<u64> {
            if k == 1 {
                return Some(1);
            }
            let e = cover.element(i);
            let post = sys.post_set(&e.set, e.input).unwrap();
            covering(&post)
                .into_iter()
                .filter_map(|fam| {
                    let worst = fam.iter().map(|&j| node(sys, cover, j, k - 1, covering)).collect::<Option<Vec<_>>>()?;
                    Some(fam.len() as u64 * worst.into_iter().max().unwrap())
                })
                .min()
        }
        covering(q.members())
            .into_iter()
            .filter_map(|fam| {
                let worst = fam.iter().map(|&j| node(sys, cover, j, tau, &covering)).collect::<Option<Vec<_>>>()?;
                Some(fam.len() as u64 * worst.into_iter().max().unwrap())
            })
            .min()
    }

    /// Minimal `N(S)` over every set `S` of length-`tau` element sequences,
    /// checked literally against the spanning conditions.
    pub fn literal_min(sys: &FiniteSystem, q: &TargetSet, cover: &InvariantCover, tau: usize) -> Option<u64> {
        let n = cover.len();
        let seqs: Vec<Vec<usize>> = (0..n.pow(tau as u32))
            .map(|mut code| {
                (0..tau)
                    .map(|_| {
                        let d = code % n;
                        code /= n;
                        d
                    })
                    .collect()
            })
            .collect();
        assert!(seqs.len() <= 16, "literal oracle limited to 16 sequences");
        let union_of = |idx: &BTreeSet<usize>| {
            let mut u = StateSet::new();
            for &i in idx {
                u.union_with(&cover.element(i).set);
            }
            u
        };
        let mut best: Option<u64> = None;
        for mask in 1u32..(1 << seqs.len()) {
            let s: Vec<&Vec<usize>> = (0..seqs.len()).filter(|i| mask & (1 << i) != 0).map(|i| &seqs[i]).collect();
            let p = |prefix: &[usize]| -> BTreeSet<usize> {
                s.iter().filter(|a| a.starts_with(prefix)).map(|a| a[prefix.len()]).collect()
            };
            let initial = p(&[]);
            if !q.members().is_subset(&union_of(&initial)) {
                continue;
            }
            let spanning = s.iter().all(|a| {
                (0..tau - 1).all(|t| {
                    let e = cover.element(a[t]);
                    sys.post_set(&e.set, e.input).unwrap().is_subset(&union_of(&p(&a[..=t])))
                })
            });
            if !spanning {
                continue;
            }
            let expansion = s
                .iter()
                .map(|a| (0..tau - 1).map(|t| p(&a[..=t]).len() as u64).product::<u64>() * initial.len() as u64)
                .max()
                .unwrap();
            best = Some(best.map_or(expansion, |b| b.min(expansion)));
        }
        best
    }
}
