//! Coder-controllers over a noiseless digital channel.
//!
//! The coder maps a window of recent states to a symbol and the controller
//! maps the matching window of received symbols to an input. Windows either
//! restart at every multiple of the period (`Periodic`) or keep the last
//! `memory` entries (`Sliding`).
//!
//! Rates are evaluated on the symbol-prefix automaton: a node is a symbol
//! window together with the set of state windows consistent with it, and its
//! successors are grouped by the next symbol. Paths of `τ` nodes from the
//! initial nodes are exactly the feasible symbol sequences of length `τ`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num::bigint::BigUint;
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covers::{CoverElement, InvariantCover};
use crate::entropy::{r_inv, validate_policy, SpanningPolicy};
use crate::error::{Error, Result};
use crate::rate::LogRate;
use crate::set::StateSet;
use crate::system::{FiniteSystem, TargetSet, Trajectory};

/// Largest number of table entries a controller may carry.
pub const MAX_TABLE_ENTRIES: usize = 1 << 22;
/// Largest number of symbol-prefix automaton nodes explored.
pub const MAX_AUTOMATON_NODES: usize = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Windowing {
    Periodic,
    Sliding,
}

/// Window-bounded coder-controller with total tables.
///
/// `coder[l-1]` and `controller[l-1]` hold the entries for windows of length
/// `l`, indexed with the first window entry most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoderController {
    windowing: Windowing,
    memory: usize,
    states: usize,
    symbols: usize,
    inputs: usize,
    coder: Vec<Vec<usize>>,
    controller: Vec<Vec<usize>>,
}

fn index(window: &[usize], base: usize) -> usize {
    window.iter().fold(0, |acc, &x| acc * base + x)
}

/// All windows of length `len` over `0..base`, in index order.
pub fn windows(base: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = base.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut w = vec![0; len];
        for slot in w.iter_mut().rev() {
            *slot = code % base;
            code /= base;
        }
        w
    })
}

impl CoderController {
    /// Builds a controller from explicit tables; see the type docs for layout.
    pub fn new(
        windowing: Windowing,
        memory: usize,
        states: usize,
        symbols: usize,
        inputs: usize,
        coder: Vec<Vec<usize>>,
        controller: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidController(m));
        if memory == 0 || states == 0 || symbols == 0 || inputs == 0 {
            return bad("memory and alphabets must be nonempty".into());
        }
        Self::check_size(memory, states, symbols)?;
        if coder.len() != memory || controller.len() != memory {
            return bad(format!("expected tables for window lengths 1..={memory}"));
        }
        for l in 1..=memory {
            if coder[l - 1].len() != states.pow(l as u32) {
                return bad(format!("coder table for length {l} is not total"));
            }
            if controller[l - 1].len() != symbols.pow(l as u32) {
                return bad(format!("controller table for length {l} is not total"));
            }
            if coder[l - 1].iter().any(|&s| s >= symbols) {
                return bad(format!("coder table for length {l} names an unknown symbol"));
            }
            if controller[l - 1].iter().any(|&u| u >= inputs) {
                return bad(format!("controller table for length {l} names an unknown input"));
            }
        }
        Ok(CoderController { windowing, memory, states, symbols, inputs, coder, controller })
    }

    fn check_size(memory: usize, states: usize, symbols: usize) -> Result<()> {
        let mut total = 0usize;
        for l in 1..=memory as u32 {
            let a = states.checked_pow(l);
            let b = symbols.checked_pow(l);
            match (a, b) {
                (Some(a), Some(b)) => total = total.saturating_add(a).saturating_add(b),
                _ => total = usize::MAX,
            }
        }
        if total > MAX_TABLE_ENTRIES {
            return Err(Error::InvalidController(format!("tables would need {total} entries")));
        }
        Ok(())
    }

    /// Tabulates coder and controller functions on all windows.
    pub fn from_fns(
        windowing: Windowing,
        memory: usize,
        sys: &FiniteSystem,
        symbols: usize,
        gamma: impl Fn(&[usize]) -> usize,
        delta: impl Fn(&[usize]) -> usize,
    ) -> Result<Self> {
        let states = sys.num_states();
        if memory == 0 || symbols == 0 {
            return Err(Error::InvalidController("memory and alphabets must be nonempty".into()));
        }
        Self::check_size(memory, states, symbols)?;
        let coder = (1..=memory).map(|l| windows(states, l).map(|w| gamma(&w)).collect()).collect();
        let controller = (1..=memory).map(|l| windows(symbols, l).map(|z| delta(&z)).collect()).collect();
        CoderController::new(windowing, memory, states, symbols, sys.num_inputs(), coder, controller)
    }

    /// Coder `x(t) ↦ symbol` and controller `symbol ↦ input` acting on the
    /// latest entry only.
    pub fn memoryless(sys: &FiniteSystem, symbols: usize, gamma: impl Fn(usize) -> usize, delta: impl Fn(usize) -> usize, period: usize) -> Result<Self> {
        Self::from_fns(
            Windowing::Periodic,
            period,
            sys,
            symbols,
            |w| gamma(*w.last().unwrap()),
            |z| delta(*z.last().unwrap()),
        )
    }

    pub fn windowing(&self) -> Windowing {
        self.windowing
    }

    /// Period for periodic controllers, window length otherwise.
    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn is_periodic(&self) -> bool {
        self.windowing == Windowing::Periodic
    }

    pub fn coder_table(&self, len: usize) -> &[usize] {
        &self.coder[len - 1]
    }

    pub fn controller_table(&self, len: usize) -> &[usize] {
        &self.controller[len - 1]
    }

    /// Symbol for a state window of length `1..=memory`.
    pub fn gamma(&self, window: &[usize]) -> usize {
        self.coder[window.len() - 1][index(window, self.states)]
    }

    /// Input for a symbol window of length `1..=memory`.
    pub fn delta(&self, window: &[usize]) -> usize {
        self.controller[window.len() - 1][index(window, self.symbols)]
    }

    /// Start of the window seen at time `len - 1` of a history of length `len`.
    fn window_start(&self, len: usize) -> usize {
        let t = len - 1;
        match self.windowing {
            Windowing::Periodic => self.memory * (t / self.memory),
            Windowing::Sliding => len.saturating_sub(self.memory),
        }
    }

    /// The coder applied to a complete state history.
    pub fn gamma_history(&self, history: &[usize]) -> usize {
        self.gamma(&history[self.window_start(history.len())..])
    }

    /// The controller applied to a complete symbol history.
    pub fn delta_history(&self, history: &[usize]) -> usize {
        self.delta(&history[self.window_start(history.len())..])
    }

    /// Shifts a window by one entry, mirroring [`Self::gamma_history`].
    fn advance(&self, window: &[usize], next: usize) -> Vec<usize> {
        let full = window.len() == self.memory;
        match (self.windowing, full) {
            (Windowing::Periodic, true) => vec![next],
            (Windowing::Sliding, true) => window[1..].iter().copied().chain([next]).collect(),
            (_, false) => window.iter().copied().chain([next]).collect(),
        }
    }

    /// Symbol window kept before the next symbol arrives.
    fn carry(&self, z: &[usize]) -> Vec<usize> {
        let full = z.len() == self.memory;
        match (self.windowing, full) {
            (Windowing::Periodic, true) => Vec::new(),
            (Windowing::Sliding, true) => z[1..].to_vec(),
            (_, false) => z.to_vec(),
        }
    }

    fn check_system(&self, sys: &FiniteSystem) -> Result<()> {
        if self.states != sys.num_states() || self.inputs != sys.num_inputs() {
            return Err(Error::InvalidController("alphabets do not match the system".into()));
        }
        Ok(())
    }
}

/// A closed-loop run leaving the target set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    /// States and inputs; the last state lies outside `Q`.
    pub trajectory: Trajectory,
    pub symbols: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Admissibility {
    pub admissible: bool,
    pub counterexample: Option<Counterexample>,
}

/// Breadth-first search over closed-loop configurations from every `x ∈ Q`.
/// A counterexample, if any, is a shortest escaping run.
pub fn check_admissible(sys: &FiniteSystem, q: &TargetSet, h: &CoderController) -> Result<Admissibility> {
    h.check_system(sys)?;
    // configuration: (state window, symbol window before the current symbol)
    type Config = (Vec<usize>, Vec<usize>);
    let mut ids: HashMap<Config, usize> = HashMap::new();
    let mut configs: Vec<Config> = Vec::new();
    let mut parent: Vec<Option<(usize, usize, usize)>> = Vec::new(); // (config, symbol, input)
    let mut queue = VecDeque::new();
    for x in q.members() {
        let c = (vec![x], Vec::new());
        if !ids.contains_key(&c) {
            ids.insert(c.clone(), configs.len());
            configs.push(c);
            parent.push(None);
            queue.push_back(configs.len() - 1);
        }
    }
    while let Some(id) = queue.pop_front() {
        let (sw, zw) = configs[id].clone();
        let s = h.gamma(&sw);
        let z: Vec<usize> = zw.iter().copied().chain([s]).collect();
        let u = h.delta(&z);
        let x = *sw.last().unwrap();
        for y in sys.succ(x, u) {
            if !q.contains(y) {
                let mut states = vec![y];
                let mut inputs = vec![u];
                let mut symbols = vec![s];
                let mut cur = id;
                states.push(x);
                while let Some((p, ps, pu)) = parent[cur] {
                    states.push(*configs[p].0.last().unwrap());
                    inputs.push(pu);
                    symbols.push(ps);
                    cur = p;
                }
                states.reverse();
                inputs.reverse();
                symbols.reverse();
                return Ok(Admissibility {
                    admissible: false,
                    counterexample: Some(Counterexample { trajectory: Trajectory { states, inputs }, symbols }),
                });
            }
            let c = (h.advance(&sw, y), h.carry(&z));
            if !ids.contains_key(&c) {
                ids.insert(c.clone(), configs.len());
                configs.push(c);
                parent.push(Some((id, s, u)));
                queue.push_back(configs.len() - 1);
            }
        }
    }
    Ok(Admissibility { admissible: true, counterexample: None })
}

#[derive(Clone, Debug)]
struct Node {
    /// Symbol window including the latest symbol.
    z: Vec<usize>,
    /// Successor nodes keyed by the next symbol.
    succ: Vec<(usize, usize)>,
}

/// The symbol-prefix automaton of a coder-controller in closed loop.
#[derive(Clone, Debug)]
pub struct SymbolAutomaton {
    nodes: Vec<Node>,
    initial: Vec<(usize, usize)>,
    /// `#γ(X)` at time zero.
    first_symbols: usize,
}

type InnerEdges = HashMap<usize, Vec<usize>>;

impl SymbolAutomaton {
    /// Explores all closed-loop runs of `h` from every state of the system.
    pub fn build(sys: &FiniteSystem, h: &CoderController) -> Result<Self> {
        Self::build_from(sys, h, &sys.all_states())
    }

    fn build_from(sys: &FiniteSystem, h: &CoderController, starts: &StateSet) -> Result<Self> {
        h.check_system(sys)?;
        type Key = (Vec<usize>, BTreeSet<Vec<usize>>);
        let mut ids: HashMap<Key, usize> = HashMap::new();
        let mut nodes: Vec<Node> = Vec::new();
        let mut pending: Vec<BTreeSet<Vec<usize>>> = Vec::new();
        let mut intern = |key: Key, nodes: &mut Vec<Node>, pending: &mut Vec<BTreeSet<Vec<usize>>>| -> Result<usize> {
            if let Some(&id) = ids.get(&key) {
                return Ok(id);
            }
            if nodes.len() >= MAX_AUTOMATON_NODES {
                return Err(Error::ExplosionGuard { budget: MAX_AUTOMATON_NODES as u64 });
            }
            let id = nodes.len();
            nodes.push(Node { z: key.0.clone(), succ: Vec::new() });
            pending.push(key.1.clone());
            ids.insert(key, id);
            Ok(id)
        };
        let mut groups: BTreeMap<usize, BTreeSet<Vec<usize>>> = BTreeMap::new();
        for x in starts {
            groups.entry(h.gamma(&[x])).or_default().insert(vec![x]);
        }
        let first_symbols = groups.len();
        let mut initial = Vec::new();
        for (s, ws) in groups {
            initial.push((s, intern((vec![s], ws), &mut nodes, &mut pending)?));
        }
        let mut next = 0;
        while next < nodes.len() {
            let z = nodes[next].z.clone();
            let ws = std::mem::take(&mut pending[next]);
            let u = h.delta(&z);
            let carry = h.carry(&z);
            let mut groups: BTreeMap<usize, BTreeSet<Vec<usize>>> = BTreeMap::new();
            for w in &ws {
                for y in sys.succ(*w.last().unwrap(), u) {
                    let w2 = h.advance(w, y);
                    groups.entry(h.gamma(&w2)).or_default().insert(w2);
                }
            }
            let mut succ = Vec::with_capacity(groups.len());
            for (s, ws2) in groups {
                let z2: Vec<usize> = carry.iter().copied().chain([s]).collect();
                succ.push((s, intern((z2, ws2), &mut nodes, &mut pending)?));
            }
            nodes[next].succ = succ;
            next += 1;
        }
        Ok(SymbolAutomaton { nodes, initial, first_symbols })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn z_size(&self, n: usize) -> BigUint {
        BigUint::from(self.nodes[n].succ.len())
    }

    /// `#Z_τ`, the number of feasible symbol sequences of length `τ`.
    pub fn count_sequences(&self, tau: usize) -> BigUint {
        let mut counts = vec![BigUint::zero(); self.nodes.len()];
        for &(_, n) in &self.initial {
            counts[n] += 1u32;
        }
        for _ in 1..tau {
            let mut next = vec![BigUint::zero(); self.nodes.len()];
            for (n, c) in counts.iter().enumerate() {
                if !c.is_zero() {
                    for &(_, m) in &self.nodes[n].succ {
                        next[m] += c;
                    }
                }
            }
            counts = next;
        }
        counts.into_iter().sum()
    }

    /// Largest product of `#Z` over the first `len` nodes of a path, or one for `len = 0`.
    fn max_path_product(&self, len: usize) -> BigUint {
        if len == 0 {
            return BigUint::one();
        }
        let mut best: Vec<Option<BigUint>> = vec![None; self.nodes.len()];
        for &(_, n) in &self.initial {
            best[n] = Some(self.z_size(n));
        }
        for _ in 1..len {
            let mut next: Vec<Option<BigUint>> = vec![None; self.nodes.len()];
            for (n, v) in best.iter().enumerate() {
                let Some(v) = v else { continue };
                for &(_, m) in &self.nodes[n].succ {
                    let cand = v * self.z_size(m);
                    if next[m].as_ref().is_none_or(|c| &cand > c) {
                        next[m] = Some(cand);
                    }
                }
            }
            best = next;
        }
        best.into_iter().flatten().max().unwrap_or_else(BigUint::one)
    }

    /// Tarjan's strongly connected components, as node lists.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let (mut index, mut low) = (vec![usize::MAX; n], vec![0; n]);
        let (mut on_stack, mut stack, mut out) = (vec![false; n], Vec::new(), Vec::new());
        let mut counter = 0;
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&(v, pos)) = call.last() {
                if pos < self.nodes[v].succ.len() {
                    let w = self.nodes[v].succ[pos].1;
                    call.last_mut().unwrap().1 += 1;
                    if index[w] == usize::MAX {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(p, _)) = call.last() {
                        low[p] = low[p].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        out.push(comp);
                    }
                }
            }
        }
        out
    }

    /// Components containing a cycle, with each node's successors inside.
    fn cyclic_components(&self) -> Vec<(Vec<usize>, InnerEdges)> {
        self.components()
            .into_iter()
            .filter_map(|comp| {
                let members: BTreeSet<usize> = comp.iter().copied().collect();
                let inner: HashMap<usize, Vec<usize>> = comp
                    .iter()
                    .map(|&v| (v, self.nodes[v].succ.iter().map(|&(_, w)| w).filter(|w| members.contains(w)).collect()))
                    .collect();
                let cyclic = comp.len() > 1 || inner[&comp[0]].contains(&comp[0]);
                cyclic.then_some((comp, inner))
            })
            .collect()
    }

    /// `lim (1/T) max_ζ Σ log2 #Z`: the largest mean of `log2 #Z` over a cycle.
    ///
    /// Every cycle mean is attained by a closed walk of length at most the
    /// component size, so the maximum over such walks is exact.
    pub fn asymptotic_rate(&self) -> LogRate {
        let mut best = LogRate::zero();
        for (comp, inner) in self.cyclic_components() {
            let pos: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            for &v in &comp {
                let mut walk: Vec<Option<BigUint>> = vec![None; comp.len()];
                walk[pos[&v]] = Some(BigUint::one());
                for len in 1..=comp.len() {
                    let mut next: Vec<Option<BigUint>> = vec![None; comp.len()];
                    for (i, val) in walk.iter().enumerate() {
                        let Some(val) = val else { continue };
                        let from = comp[i];
                        let weight = val * self.z_size(from);
                        for &w in &inner[&from] {
                            let slot = &mut next[pos[&w]];
                            if slot.as_ref().is_none_or(|c| &weight > c) {
                                *slot = Some(weight.clone());
                            }
                        }
                    }
                    walk = next;
                    if let Some(closed) = &walk[pos[&v]] {
                        let cand = LogRate::new(closed.clone(), len as u32);
                        if cand > best {
                            best = cand;
                        }
                    }
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct RateReport {
    /// `limsup_T max_ζ (1/T) Σ_{t<T} log2 #Z(ζ|[0;t))`, exact.
    pub rate: LogRate,
    /// `max_{ζ ∈ Z_τ} (1/τ) Σ_{t<τ} log2 #Z(ζ|[0;t])` at the controller's period.
    pub window_rate: LogRate,
    /// `max_{ζ ∈ Z_τ} (1/τ) (log2 #γ(X) + Σ_{t<τ-1} log2 #Z(ζ|[0;t]))`: the
    /// information sent per period when every period restarts from scratch.
    pub block_rate: LogRate,
    pub admissible: bool,
    pub counterexample: Option<Counterexample>,
    /// `Z(ζ)` for symbol prefixes of length `1..=τ`.
    pub z_table: BTreeMap<Vec<usize>, Vec<usize>>,
}

/// Largest number of `z_table` rows kept in a [`RateReport`].
pub const MAX_Z_TABLE: usize = 4096;

/// Data rates of a window-bounded coder-controller.
///
/// With `require_admissible` an inadmissible controller is an error;
/// otherwise its rates are still reported for diagnostics.
pub fn transmission_rate(sys: &FiniteSystem, q: &TargetSet, h: &CoderController, require_admissible: bool) -> Result<RateReport> {
    let adm = check_admissible(sys, q, h)?;
    if require_admissible && !adm.admissible {
        return Err(Error::NotAdmissible(Box::new(adm.counterexample.expect("inadmissible run"))));
    }
    let aut = SymbolAutomaton::build(sys, h)?;
    let tau = h.memory();
    let window_rate = LogRate::new(aut.max_path_product(tau), tau as u32);
    let block_rate = LogRate::new(BigUint::from(aut.first_symbols) * aut.max_path_product(tau - 1), tau as u32);
    let mut z_table = BTreeMap::new();
    let mut stack: Vec<(Vec<usize>, usize)> = aut.initial.iter().rev().map(|&(s, n)| (vec![s], n)).collect();
    while let Some((prefix, n)) = stack.pop() {
        if z_table.len() >= MAX_Z_TABLE {
            break;
        }
        let succ = &aut.nodes[n].succ;
        z_table.insert(prefix.clone(), succ.iter().map(|&(s, _)| s).collect());
        if prefix.len() < tau {
            for &(s, m) in succ.iter().rev() {
                let mut p = prefix.clone();
                p.push(s);
                stack.push((p, m));
            }
        }
    }
    Ok(RateReport {
        rate: aut.asymptotic_rate(),
        window_rate,
        block_rate,
        admissible: adm.admissible,
        counterexample: adm.counterexample,
        z_table,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeVaryingRate {
    /// Average over `t < horizon`.
    pub truncated: LogRate,
    /// The limit inferior, exact for window-bounded coders.
    pub limit: LogRate,
    /// `#S_t` for each window length `1..=memory`.
    pub alphabet_sizes: Vec<usize>,
}

/// `R_tv` with `S_t` the image of the coder over all state windows.
pub fn time_varying_rate(h: &CoderController, horizon: usize) -> TimeVaryingRate {
    let sizes: Vec<usize> = (1..=h.memory())
        .map(|l| h.coder_table(l).iter().collect::<BTreeSet<_>>().len())
        .collect();
    let size_at = |t: usize| match h.windowing() {
        Windowing::Periodic => sizes[t % h.memory()],
        Windowing::Sliding => sizes[t.min(h.memory() - 1)],
    };
    let horizon = horizon.max(1);
    let truncated = LogRate::new((0..horizon).map(|t| BigUint::from(size_at(t))).product(), horizon as u32);
    let limit = match h.windowing() {
        Windowing::Periodic => LogRate::new(sizes.iter().map(|&s| BigUint::from(s)).product(), h.memory() as u32),
        Windowing::Sliding => LogRate::log2_of(*sizes.last().unwrap() as u64),
    };
    TimeVaryingRate { truncated, limit, alphabet_sizes: sizes }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Growth {
    /// Every cycle of the automaton is isolated: `#Z_τ` grows polynomially.
    Polynomial,
    /// Bracket on the exponent; equal ends give the exact value.
    Exponential { lower: LogRate, upper: LogRate },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroErrorReport {
    pub growth: Growth,
    pub exact: bool,
    /// `#Z_τ` for `τ = 1..=probe`.
    pub counts: Vec<BigUint>,
    /// `(1/probe) log2 #Z_probe`.
    pub slope: LogRate,
}

impl ZeroErrorReport {
    /// The exact capacity when certified.
    pub fn value(&self) -> Option<LogRate> {
        match &self.growth {
            Growth::Polynomial => Some(LogRate::zero()),
            Growth::Exponential { lower, upper } if lower == upper => Some(lower.clone()),
            Growth::Exponential { .. } => None,
        }
    }
}

/// Zero-error capacity `lim (1/τ) log2 #Z_τ` of the closed loop.
///
/// Certified zero when every strongly connected part of the automaton is a
/// single cycle. Otherwise each part's growth exponent is bracketed by the
/// smallest and largest row sums of powers of its adjacency matrix.
pub fn zero_error_capacity(sys: &FiniteSystem, h: &CoderController, probe: usize) -> Result<ZeroErrorReport> {
    let aut = SymbolAutomaton::build(sys, h)?;
    let probe = probe.max(1);
    let counts: Vec<BigUint> = (1..=probe).map(|t| aut.count_sequences(t)).collect();
    let slope = LogRate::new(counts.last().unwrap().clone(), probe as u32);
    let comps = aut.cyclic_components();
    if comps.iter().all(|(c, inner)| c.iter().all(|v| inner[v].len() == 1)) {
        return Ok(ZeroErrorReport { growth: Growth::Polynomial, exact: true, counts, slope });
    }
    let (mut lower, mut upper) = (LogRate::zero(), LogRate::zero());
    for (comp, inner) in &comps {
        let pos: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // walks[i][j]: number of walks of the current length from comp[i] to comp[j]
        let mut walks: Vec<Vec<BigUint>> =
            (0..comp.len()).map(|i| (0..comp.len()).map(|j| BigUint::from((i == j) as u32)).collect()).collect();
        let (mut lo, mut hi): (Option<LogRate>, Option<LogRate>) = (None, None);
        for k in 1..=32u32 {
            walks = walks
                .iter()
                .map(|row| {
                    let mut next = vec![BigUint::zero(); comp.len()];
                    for (j, c) in row.iter().enumerate() {
                        if !c.is_zero() {
                            for w in &inner[&comp[j]] {
                                next[pos[w]] += c;
                            }
                        }
                    }
                    next
                })
                .collect();
            let sums: Vec<BigUint> = walks.iter().map(|r| r.iter().sum()).collect();
            let (min, max) = (sums.iter().min().unwrap().clone(), sums.iter().max().unwrap().clone());
            let l = LogRate::new(min, k);
            let u = LogRate::new(max, k);
            if lo.as_ref().is_none_or(|x| &l > x) {
                lo = Some(l);
            }
            if hi.as_ref().is_none_or(|x| &u < x) {
                hi = Some(u);
            }
            if lo == hi {
                break;
            }
        }
        lower = lower.max(lo.unwrap());
        upper = upper.max(hi.unwrap());
    }
    let exact = lower == upper;
    Ok(ZeroErrorReport { growth: Growth::Exponential { lower, upper }, exact, counts, slope })
}

/// Coder-controller built from a spanning policy.
///
/// The coder follows the branch of the spanning set that contains the state
/// history, taking the first matching element of each family, and sends the
/// element's position in its family. The controller decodes the branch and
/// applies the element's input. Off the spanning set the coder sends the
/// first symbol and the controller applies input 0.
pub fn from_spanning(sys: &FiniteSystem, q: &TargetSet, policy: &SpanningPolicy) -> Result<CoderController> {
    validate_policy(sys, q, policy)?;
    let tau = policy.horizon;
    let fam = |prev: Option<usize>, t: usize| -> &[usize] {
        match prev {
            None => &policy.initial,
            Some(i) => &policy.succ[&(i, tau - t + 1)],
        }
    };
    let m = std::iter::once(policy.initial.len())
        .chain(policy.succ.values().map(Vec::len))
        .max()
        .unwrap_or(1)
        .max(1);
    let cover = &policy.cover;
    let gamma = |w: &[usize]| {
        let mut prev = None;
        let mut sym = 0;
        for (t, &x) in w.iter().enumerate() {
            let f = fam(prev, t);
            sym = f.iter().position(|&j| cover.element(j).set.contains(x)).unwrap_or(0);
            prev = Some(f[sym]);
        }
        sym
    };
    let delta = |z: &[usize]| {
        let mut prev = None;
        for (t, &s) in z.iter().enumerate() {
            match fam(prev, t).get(s) {
                Some(&j) => prev = Some(j),
                None => return 0,
            }
        }
        cover.element(prev.expect("nonempty window")).input
    };
    CoderController::from_fns(Windowing::Periodic, tau, sys, m, gamma, delta)
}

/// Invariant cover and spanning policy recovered from an admissible
/// periodic coder-controller.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub cover: InvariantCover,
    /// A policy of minimal expansion number over `cover`.
    pub policy: SpanningPolicy,
    pub expansion: BigUint,
    /// Expansion number of the spanning set read directly off the symbol tree.
    pub tree_bound: BigUint,
}

/// Elements `A(ζ)`: states reachable from `Q` within one period that emit
/// the symbol prefix `ζ`, with input `δ(ζ)`.
pub fn to_cover_and_spanning(sys: &FiniteSystem, q: &TargetSet, h: &CoderController) -> Result<Extraction> {
    if !h.is_periodic() {
        return Err(Error::InvalidController("a periodic coder-controller is required".into()));
    }
    let adm = check_admissible(sys, q, h)?;
    if let Some(cx) = adm.counterexample {
        return Err(Error::NotAdmissible(Box::new(cx)));
    }
    let tau = h.memory();
    // symbol prefix -> state windows consistent with it, level by level
    let mut levels: Vec<BTreeMap<Vec<usize>, BTreeSet<Vec<usize>>>> = Vec::new();
    let mut first: BTreeMap<Vec<usize>, BTreeSet<Vec<usize>>> = BTreeMap::new();
    for x in q.members() {
        first.entry(vec![h.gamma(&[x])]).or_default().insert(vec![x]);
    }
    levels.push(first);
    for _ in 1..tau {
        let mut next: BTreeMap<Vec<usize>, BTreeSet<Vec<usize>>> = BTreeMap::new();
        for (z, ws) in levels.last().unwrap() {
            let u = h.delta(z);
            for w in ws {
                for y in sys.succ(*w.last().unwrap(), u) {
                    let mut w2 = w.clone();
                    w2.push(y);
                    let mut z2 = z.clone();
                    z2.push(h.gamma(&w2));
                    next.entry(z2).or_default().insert(w2);
                }
            }
        }
        levels.push(next);
    }
    let element = |z: &Vec<usize>, ws: &BTreeSet<Vec<usize>>| {
        CoverElement::new(ws.iter().map(|w| *w.last().unwrap()).collect(), h.delta(z))
    };
    let cover = InvariantCover::new(levels.iter().flat_map(|lvl| lvl.iter().map(|(z, ws)| element(z, ws))));

    // expansion number of the symbol tree, counting distinct elements per family
    let mut below: BTreeMap<Vec<usize>, BigUint> = levels[tau - 1].keys().map(|z| (z.clone(), BigUint::one())).collect();
    for t in (0..tau - 1).rev() {
        let mut here = BTreeMap::new();
        for z in levels[t].keys() {
            let children: Vec<(&Vec<usize>, &BTreeSet<Vec<usize>>)> =
                levels[t + 1].range(z.clone()..).take_while(|(k, _)| k.starts_with(z)).collect();
            let distinct: BTreeSet<CoverElement> = children.iter().map(|(k, ws)| element(k, ws)).collect();
            let worst = children.iter().map(|(k, _)| below[*k].clone()).max().unwrap_or_else(BigUint::one);
            here.insert(z.clone(), worst * BigUint::from(distinct.len()));
        }
        below = here;
    }
    let roots: BTreeSet<CoverElement> = levels[0].iter().map(|(z, ws)| element(z, ws)).collect();
    let tree_bound = below.values().max().cloned().unwrap_or_else(BigUint::one) * BigUint::from(roots.len());

    let (expansion, policy) = r_inv(sys, q, &cover, tau)?;
    debug_assert!(expansion <= tree_bound);
    Ok(Extraction { cover, policy, expansion, tree_bound })
}

/// Periodic version of `h` that restarts its histories every `tau` steps.
pub fn periodize(h: &CoderController, sys: &FiniteSystem, tau: usize) -> Result<CoderController> {
    if tau < h.memory() {
        return Err(Error::WindowTooShort { memory: h.memory(), period: tau });
    }
    CoderController::from_fns(Windowing::Periodic, tau, sys, h.num_symbols(), |w| h.gamma_history(w), |z| h.delta_history(z))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Adversary {
    /// Always the smallest successor.
    MinimalId,
    /// Uniform choice from a seeded generator.
    Seeded(u64),
    /// Preferred successors in order; the smallest one when a preference is
    /// not available or the script is exhausted.
    Script(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub trajectory: Trajectory,
    pub symbols: Vec<usize>,
}

/// Runs the closed loop for `steps` steps from `x0`.
pub fn simulate(sys: &FiniteSystem, h: &CoderController, x0: usize, steps: usize, adversary: &Adversary) -> Result<SimTrace> {
    h.check_system(sys)?;
    if x0 >= sys.num_states() {
        return Err(Error::UnknownState(x0));
    }
    let mut rng = match adversary {
        Adversary::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let (mut states, mut inputs, mut symbols) = (vec![x0], Vec::new(), Vec::new());
    for t in 0..steps {
        let s = h.gamma_history(&states);
        symbols.push(s);
        let u = h.delta_history(&symbols);
        inputs.push(u);
        let succ = sys.succ(states[t], u);
        let y = match adversary {
            Adversary::MinimalId => succ.first(),
            Adversary::Seeded(_) => {
                let all = succ.to_vec();
                Some(all[rng.as_mut().unwrap().gen_range(0..all.len())])
            }
            Adversary::Script(pref) => pref.get(t).copied().filter(|&y| succ.contains(y)).or_else(|| succ.first()),
        }
        .expect("strict system");
        states.push(y);
    }
    Ok(SimTrace { trajectory: Trajectory { states, inputs }, symbols })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Symbols are states; `a` on {0,1,3}, `b` on 2.
    pub fn example4_controller(sys: &FiniteSystem, period: usize) -> CoderController {
        CoderController::memoryless(sys, 4, |x| x, |s| if s == 2 { 1 } else { 0 }, period).unwrap()
    }

    /// Symbols are states; `a` on {0,3}, `b` on 1, `c` on 2.
    pub fn example5_controller(sys: &FiniteSystem, period: usize) -> CoderController {
        CoderController::memoryless(sys, 4, |x| x, |s| [0, 1, 2, 0][s], period).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::covers::singleton_cover;
    use crate::entropy::{cover_entropy, expansion_number};
    use crate::random::small_system;
    use crate::system::fixtures::*;
    use proptest::prelude::*;

    fn half() -> LogRate {
        LogRate::from_u64(2, 2)
    }

    fn one() -> LogRate {
        LogRate::from_u64(2, 1)
    }

    /// `Z(ζ)` by enumerating every trajectory of the system that produces `ζ`.
    fn brute_z(sys: &FiniteSystem, h: &CoderController, zeta: &[usize]) -> BTreeSet<usize> {
        let mut histories: Vec<Vec<usize>> = (0..sys.num_states()).map(|x| vec![x]).collect();
        let mut out = BTreeSet::new();
        for t in 0..zeta.len() {
            histories.retain(|xs| h.gamma_history(xs) == zeta[t]);
            let u = h.delta_history(&zeta[..=t]);
            histories = histories
                .iter()
                .flat_map(|xs| sys.succ(xs[t], u).iter().map(move |y| xs.iter().copied().chain([y]).collect()))
                .collect();
        }
        for xs in histories {
            out.insert(h.gamma_history(&xs));
        }
        out
    }

    #[test]
    fn example4_controller_rates() {
        let (sys, q) = example4();
        let h = example4_controller(&sys, 2);
        assert!(check_admissible(&sys, &q, &h).unwrap().admissible);
        let rep = transmission_rate(&sys, &q, &h, true).unwrap();
        assert_eq!(rep.rate, half());
        assert_eq!(rep.window_rate, half());
        assert_eq!(rep.block_rate, LogRate::from_u64(8, 2));
        assert_eq!(rep.z_table[&vec![1]], vec![0, 2]);
        assert_eq!(rep.z_table[&vec![0]], vec![1]);
        assert_eq!(time_varying_rate(&h, 10).limit, LogRate::from_u64(4, 1));
        for (zeta, z) in &rep.z_table {
            assert_eq!(&brute_z(&sys, &h, zeta).into_iter().collect::<Vec<_>>(), z);
        }
    }

    #[test]
    fn example5_controller_rates() {
        let (sys, q) = example5();
        let h = example5_controller(&sys, 1);
        assert!(check_admissible(&sys, &q, &h).unwrap().admissible);
        let rep = transmission_rate(&sys, &q, &h, true).unwrap();
        assert_eq!(rep.rate, one());
        let c0 = zero_error_capacity(&sys, &h, 12).unwrap();
        assert_eq!(c0.growth, Growth::Polynomial);
        assert_eq!(c0.value(), Some(LogRate::zero()));
        for (tau, c) in (1u32..=12).zip(&c0.counts) {
            assert!(*c <= BigUint::from(4 + 2 * (tau - 1)));
        }
    }

    #[test]
    fn constant_input_inadmissible() {
        let (sys, q) = example1();
        let h = CoderController::memoryless(&sys, 1, |_| 0, |_| 0, 1).unwrap();
        let adm = check_admissible(&sys, &q, &h).unwrap();
        assert!(!adm.admissible);
        let cx = adm.counterexample.unwrap();
        assert_eq!(cx.trajectory, Trajectory { states: vec![2, 1], inputs: vec![0] });
        assert!(matches!(transmission_rate(&sys, &q, &h, true), Err(Error::NotAdmissible(_))));
        assert!(!transmission_rate(&sys, &q, &h, false).unwrap().admissible);
        assert!(matches!(to_cover_and_spanning(&sys, &q, &h), Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn example1_from_spanning() {
        let (sys, q) = example1();
        let cover = singleton_cover(&sys, &q).unwrap();
        let (n, policy) = r_inv(&sys, &q, &cover, 2).unwrap();
        let h = from_spanning(&sys, &q, &policy).unwrap();
        assert_eq!(h.num_symbols(), 2);
        let rep = transmission_rate(&sys, &q, &h, true).unwrap();
        assert_eq!(rep.rate, one());
        assert!(rep.block_rate <= LogRate::new(n.clone(), 2));
        assert_eq!(time_varying_rate(&h, 8).limit, one());
        assert_eq!(zero_error_capacity(&sys, &h, 6).unwrap().value(), Some(one()));
        let ex = to_cover_and_spanning(&sys, &q, &h).unwrap();
        assert_eq!(ex.cover, cover);
        assert_eq!(ex.expansion, n);
    }

    #[test]
    fn deterministic_singleton_policy_rate() {
        // two-state swap; spanning set of two singletons
        let sys = FiniteSystem::from_fn(2, 1, |x, _| vec![1 - x]);
        let q = TargetSet::new(&sys, set(&[0, 1])).unwrap();
        let cover = singleton_cover(&sys, &q).unwrap();
        let (n, policy) = r_inv(&sys, &q, &cover, 3).unwrap();
        assert_eq!(n, BigUint::from(2u32));
        let h = from_spanning(&sys, &q, &policy).unwrap();
        let rep = transmission_rate(&sys, &q, &h, true).unwrap();
        assert_eq!(rep.block_rate, LogRate::from_u64(2, 3));
        assert!(rep.rate <= rep.block_rate);
    }

    #[test]
    fn example4_extraction_bound() {
        let (sys, q) = example4();
        let h = example4_controller(&sys, 2);
        let rep = transmission_rate(&sys, &q, &h, true).unwrap();
        let ex = to_cover_and_spanning(&sys, &q, &h).unwrap();
        assert!(ex.expansion <= ex.tree_bound);
        assert!(LogRate::new(ex.expansion.clone(), 2) <= rep.block_rate);
        assert_eq!(expansion_number(&ex.policy).unwrap(), ex.expansion);
        // the spanning set read off this controller needs six branches
        assert_eq!(ex.expansion, BigUint::from(6u32));
    }

    #[test]
    fn periodize_keeps_rates() {
        let (sys, q) = example4();
        let h = example4_controller(&sys, 1);
        let p = periodize(&h, &sys, 2).unwrap();
        assert_eq!(transmission_rate(&sys, &q, &p, true).unwrap().rate, half());
        let (sys5, q5) = example5();
        let h5 = example5_controller(&sys5, 1);
        let p5 = periodize(&h5, &sys5, 3).unwrap();
        assert_eq!(transmission_rate(&sys5, &q5, &p5, true).unwrap().rate, one());
        let h2 = example4_controller(&sys, 2);
        assert_eq!(periodize(&h2, &sys, 2).unwrap(), h2);
        assert!(matches!(periodize(&h2, &sys, 1), Err(Error::WindowTooShort { memory: 2, period: 1 })));
    }

    #[test]
    fn periodize_overhead_bound() {
        // a sliding controller that remembers whether the previous state was 1
        let (sys, q) = example4();
        let h = CoderController::from_fns(
            Windowing::Sliding,
            2,
            &sys,
            4,
            |w| *w.last().unwrap(),
            |z| if *z.last().unwrap() == 2 { 1 } else { 0 },
        )
        .unwrap();
        for tau in 2..=4 {
            let p = periodize(&h, &sys, tau).unwrap();
            let rp = transmission_rate(&sys, &q, &p, true).unwrap();
            let aut = SymbolAutomaton::build(&sys, &h).unwrap();
            let overhead = LogRate::new(BigUint::from(aut.first_symbols), tau as u32);
            let first_period = LogRate::new(aut.max_path_product(tau - 1), tau as u32);
            assert!(rp.rate <= first_period.add(&overhead));
        }
    }

    #[test]
    fn simulate_examples() {
        let (sys, _) = example4();
        let h = example4_controller(&sys, 2);
        let tr = simulate(&sys, &h, 0, 6, &Adversary::MinimalId).unwrap();
        assert_eq!(tr.trajectory.states, vec![0, 1, 0, 1, 0, 1, 0]);
        assert!(tr.trajectory.is_consistent(&sys));
        let tr = simulate(&sys, &h, 0, 0, &Adversary::Seeded(3)).unwrap();
        assert_eq!(tr.trajectory.states, vec![0]);
        let (sys5, _) = example5();
        let h5 = example5_controller(&sys5, 1);
        for adv in [Adversary::MinimalId, Adversary::Seeded(9), Adversary::Script(vec![3, 3, 0])] {
            let tr = simulate(&sys5, &h5, 2, 5, &adv).unwrap();
            assert_eq!(tr.trajectory.states, vec![2; 6]);
            assert_eq!(tr.trajectory.inputs, vec![2; 5]);
        }
    }

    #[test]
    fn constant_coder_zero_rates() {
        let (sys, _) = self_loop();
        let h = CoderController::memoryless(&sys, 1, |_| 0, |_| 0, 1).unwrap();
        assert!(time_varying_rate(&h, 5).limit.is_zero());
        let c0 = zero_error_capacity(&sys, &h, 4).unwrap();
        assert_eq!(c0.growth, Growth::Polynomial);
        assert!(c0.counts.iter().all(|c| c.is_one()));
    }

    #[test]
    fn invalid_tables_rejected() {
        let r = CoderController::new(Windowing::Periodic, 1, 2, 1, 1, vec![vec![0]], vec![vec![0]]);
        assert!(matches!(r, Err(Error::InvalidController(_))));
        let r = CoderController::new(Windowing::Periodic, 1, 1, 1, 1, vec![vec![1]], vec![vec![0]]);
        assert!(matches!(r, Err(Error::InvalidController(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn rate_sandwich(seed in any::<u64>(), tau in 1usize..=3) {
            let (sys, q) = small_system(seed, 4, 2, true);
            let cover = singleton_cover(&sys, &q).unwrap();
            let (n, policy) = r_inv(&sys, &q, &cover, tau).unwrap();
            let h = from_spanning(&sys, &q, &policy).unwrap();
            prop_assert!(check_admissible(&sys, &q, &h).unwrap().admissible);
            let rep = transmission_rate(&sys, &q, &h, true).unwrap();
            let bound = LogRate::new(n, tau as u32);
            prop_assert!(rep.rate <= rep.window_rate);
            prop_assert!(rep.window_rate <= rep.block_rate);
            prop_assert!(rep.block_rate <= bound);
            let ex = to_cover_and_spanning(&sys, &q, &h).unwrap();
            prop_assert!(ex.expansion <= ex.tree_bound);
            prop_assert!(LogRate::new(ex.expansion, tau as u32) <= rep.block_rate);
            let h_cover = cover_entropy(&sys, &q, &ex.cover, tau).unwrap();
            prop_assert!(h_cover.ub <= rep.block_rate);
        }

        #[test]
        fn z_table_matches_trajectories(seed in any::<u64>(), tau in 1usize..=2) {
            let (sys, q) = small_system(seed, 3, 2, true);
            let cover = singleton_cover(&sys, &q).unwrap();
            let (_, policy) = r_inv(&sys, &q, &cover, tau).unwrap();
            let h = from_spanning(&sys, &q, &policy).unwrap();
            let rep = transmission_rate(&sys, &q, &h, true).unwrap();
            for (zeta, z) in &rep.z_table {
                prop_assert_eq!(&brute_z(&sys, &h, zeta).into_iter().collect::<Vec<_>>(), z);
            }
        }
    }
}
