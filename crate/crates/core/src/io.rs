//! JSON model files with named states, inputs and symbols.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{windows, CoderController, Windowing};
use crate::covers::{CoverElement, InvariantCover};
use crate::error::{Error, Result};
use crate::linear::{fmt_rational, IntervalCover, ScalarPlant};
use crate::refine::RefinementRelation;
use crate::set::StateSet;
use crate::system::{validate_system, FiniteSystem, TargetSet, TransitionTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: String,
    pub input: String,
    pub to: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub transitions: Vec<TransitionRecord>,
    #[serde(rename = "Q")]
    pub q: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverRecord {
    pub element: Vec<String>,
    pub input: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoderRecord {
    pub phase: usize,
    pub window: Vec<String>,
    pub symbol: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub phase: usize,
    pub window: Vec<String>,
    pub input: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowingName {
    #[default]
    Periodic,
    Sliding,
}

/// Window of phase `p` has length `p + 1`. For sliding controllers `period`
/// is the memory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub period: usize,
    #[serde(default)]
    pub windowing: WindowingName,
    pub symbols: Vec<String>,
    pub coder: Vec<CoderRecord>,
    pub controller: Vec<ControllerRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    pub pairs: Vec<[String; 2]>,
    pub input_map: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: i64,
    pub lo: String,
    pub hi: String,
    pub input: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarCoverFile {
    pub a: String,
    pub w: [String; 2],
    pub q: [String; 2],
    pub m: u64,
    pub d: String,
    pub cells: Vec<CellRecord>,
}

fn lookup(names: &[String]) -> Result<HashMap<&str, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.as_str(), i).is_some() {
            return Err(Error::Domain(format!("duplicate name {n:?}")));
        }
    }
    Ok(map)
}

fn resolve(map: &HashMap<&str, usize>, name: &str, unknown: impl Fn(String) -> Error) -> Result<usize> {
    map.get(name).copied().ok_or_else(|| unknown(name.to_string()))
}

/// A system with the names it was loaded with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub sys: FiniteSystem,
    pub q: TargetSet,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
}

impl Model {
    pub fn from_file(f: &SystemFile) -> Result<Model> {
        let sm = lookup(&f.states)?;
        let im = lookup(&f.inputs)?;
        let mut table = TransitionTable::new(f.states.len(), f.inputs.len());
        let mut seen = BTreeSet::new();
        for t in &f.transitions {
            let x = resolve(&sm, &t.from, Error::UnknownName)?;
            let u = resolve(&im, &t.input, Error::UnknownName)?;
            if !seen.insert((x, u)) {
                return Err(Error::Domain(format!("duplicate transition ({}, {})", t.from, t.input)));
            }
            let to = t.to.iter().map(|y| resolve(&sm, y, Error::UnknownName)).collect::<Result<Vec<_>>>()?;
            table.set(x, u, to);
        }
        let report = validate_system(&table);
        if !report.is_valid() {
            return Err(Error::InvalidSystem(report));
        }
        let sys = FiniteSystem::new(&table)?;
        let members = f.q.iter().map(|x| resolve(&sm, x, Error::UnknownName)).collect::<Result<StateSet>>()?;
        let q = TargetSet::new(&sys, members)?;
        Ok(Model { sys, q, states: f.states.clone(), inputs: f.inputs.clone() })
    }

    pub fn to_file(&self) -> SystemFile {
        let mut transitions = Vec::new();
        for x in 0..self.sys.num_states() {
            for u in 0..self.sys.num_inputs() {
                transitions.push(TransitionRecord {
                    from: self.states[x].clone(),
                    input: self.inputs[u].clone(),
                    to: self.sys.succ(x, u).iter().map(|y| self.states[y].clone()).collect(),
                });
            }
        }
        SystemFile {
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            transitions,
            q: self.q.members().iter().map(|x| self.states[x].clone()).collect(),
        }
    }

    /// Names states `0..n` and inputs `u0..`.
    pub fn anonymous(sys: FiniteSystem, q: TargetSet) -> Model {
        let states = (0..sys.num_states()).map(|x| x.to_string()).collect();
        let inputs = (0..sys.num_inputs()).map(|u| format!("u{u}")).collect();
        Model { sys, q, states, inputs }
    }

    pub fn cover_from_records(&self, recs: &[CoverRecord]) -> Result<InvariantCover> {
        let sm = lookup(&self.states)?;
        let im = lookup(&self.inputs)?;
        let elements = recs
            .iter()
            .map(|r| {
                let set = r.element.iter().map(|x| resolve(&sm, x, Error::UnknownName)).collect::<Result<StateSet>>()?;
                Ok(CoverElement { set, input: resolve(&im, &r.input, Error::UnknownName)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InvariantCover::new(elements))
    }

    pub fn cover_to_records(&self, cover: &InvariantCover) -> Vec<CoverRecord> {
        cover
            .elements()
            .iter()
            .map(|e| CoverRecord {
                element: e.set.iter().map(|x| self.states[x].clone()).collect(),
                input: self.inputs[e.input].clone(),
            })
            .collect()
    }

    pub fn controller_from_file(&self, f: &ControllerFile) -> Result<CoderController> {
        let bad = |m: String| Error::InvalidController(m);
        if f.period == 0 {
            return Err(bad("period must be positive".into()));
        }
        let sm = lookup(&self.states)?;
        let im = lookup(&self.inputs)?;
        let zm = lookup(&f.symbols)?;
        let (n, k, m) = (self.states.len(), f.symbols.len(), self.inputs.len());
        let fits = |base: usize| base.checked_pow(f.period as u32).is_some_and(|t| t <= crate::codec::MAX_TABLE_ENTRIES);
        if !fits(n) || !fits(k) {
            return Err(bad(format!("period {} is too long for these alphabets", f.period)));
        }
        let pos = |w: &[usize], base: usize| w.iter().fold(0usize, |acc, &x| acc * base + x);
        let mut coder: Vec<Vec<Option<usize>>> = (1..=f.period).map(|l| vec![None; n.pow(l as u32)]).collect();
        let mut ctrl: Vec<Vec<Option<usize>>> = (1..=f.period).map(|l| vec![None; k.pow(l as u32)]).collect();
        for r in &f.coder {
            if r.phase >= f.period || r.window.len() != r.phase + 1 {
                return Err(bad(format!("coder record at phase {} has a window of length {}", r.phase, r.window.len())));
            }
            let w = r.window.iter().map(|x| resolve(&sm, x, Error::UnknownName)).collect::<Result<Vec<_>>>()?;
            let z = resolve(&zm, &r.symbol, |s| bad(format!("unknown symbol {s:?}")))?;
            if coder[r.phase][pos(&w, n)].replace(z).is_some() {
                return Err(bad(format!("duplicate coder record {:?}", r.window)));
            }
        }
        for r in &f.controller {
            if r.phase >= f.period || r.window.len() != r.phase + 1 {
                return Err(bad(format!("controller record at phase {} has a window of length {}", r.phase, r.window.len())));
            }
            let w = r.window.iter().map(|z| resolve(&zm, z, |s| bad(format!("unknown symbol {s:?}")))).collect::<Result<Vec<_>>>()?;
            let u = resolve(&im, &r.input, Error::UnknownName)?;
            if ctrl[r.phase][pos(&w, k)].replace(u).is_some() {
                return Err(bad(format!("duplicate controller record {:?}", r.window)));
            }
        }
        let total = |t: Vec<Vec<Option<usize>>>, what: &str| -> Result<Vec<Vec<usize>>> {
            t.into_iter()
                .enumerate()
                .map(|(p, row)| row.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| bad(format!("{what} table is not total at phase {p}"))))
                .collect()
        };
        let windowing = match f.windowing {
            WindowingName::Periodic => Windowing::Periodic,
            WindowingName::Sliding => Windowing::Sliding,
        };
        CoderController::new(windowing, f.period, n, k, m, total(coder, "coder")?, total(ctrl, "controller")?)
    }

    /// Symbols are named `z0, z1, ...`.
    pub fn controller_to_file(&self, h: &CoderController) -> ControllerFile {
        let symbols: Vec<String> = (0..h.num_symbols()).map(|z| format!("z{z}")).collect();
        let mut coder = Vec::new();
        let mut controller = Vec::new();
        for l in 1..=h.memory() {
            for (w, &z) in windows(h.num_states(), l).zip(h.coder_table(l)) {
                coder.push(CoderRecord {
                    phase: l - 1,
                    window: w.iter().map(|&x| self.states[x].clone()).collect(),
                    symbol: symbols[z].clone(),
                });
            }
            for (w, &u) in windows(h.num_symbols(), l).zip(h.controller_table(l)) {
                controller.push(ControllerRecord {
                    phase: l - 1,
                    window: w.iter().map(|&z| symbols[z].clone()).collect(),
                    input: self.inputs[u].clone(),
                });
            }
        }
        let windowing = if h.is_periodic() { WindowingName::Periodic } else { WindowingName::Sliding };
        ControllerFile { period: h.memory(), windowing, symbols, coder, controller }
    }
}

/// Resolves a relation from the concrete model `m1` to the abstract model `m2`.
pub fn relation_from_file(f: &RelationFile, m1: &Model, m2: &Model) -> Result<RefinementRelation> {
    let s1 = lookup(&m1.states)?;
    let s2 = lookup(&m2.states)?;
    let i1 = lookup(&m1.inputs)?;
    let i2 = lookup(&m2.inputs)?;
    let pairs = f
        .pairs
        .iter()
        .map(|[a, b]| Ok((resolve(&s1, a, Error::UnknownName)?, resolve(&s2, b, Error::UnknownName)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut input_map = vec![None; m2.inputs.len()];
    for [u2, u1] in &f.input_map {
        let (u2, u1) = (resolve(&i2, u2, Error::UnknownName)?, resolve(&i1, u1, Error::UnknownName)?);
        if input_map[u2].replace(u1).is_some() {
            return Err(Error::InvalidRelation(format!("input {} mapped twice", m2.inputs[u2])));
        }
    }
    let input_map = input_map
        .into_iter()
        .enumerate()
        .map(|(u, v)| v.ok_or_else(|| Error::InvalidRelation(format!("input {} is not mapped", m2.inputs[u]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementRelation::new(pairs, input_map))
}

pub fn scalar_cover_file(p: &ScalarPlant, c: &IntervalCover) -> ScalarCoverFile {
    ScalarCoverFile {
        a: fmt_rational(&p.a),
        w: [fmt_rational(&p.w.0), fmt_rational(&p.w.1)],
        q: [fmt_rational(&p.q.0), fmt_rational(&p.q.1)],
        m: c.m,
        d: fmt_rational(&c.d),
        cells: c
            .cells
            .iter()
            .map(|x| CellRecord { index: x.index, lo: fmt_rational(&x.lo), hi: fmt_rational(&x.hi), input: fmt_rational(&x.input) })
            .collect(),
    }
}

/// Names for an abstraction from the linear module: cells `C<i>`, the sink
/// `out`, inputs by their value.
pub fn scalar_abstraction_model(sys: FiniteSystem, q: TargetSet, c: &IntervalCover, inputs: &[num::BigRational]) -> Model {
    let mut states: Vec<String> = c.cells.iter().map(|x| format!("C{}", x.index)).collect();
    states.push("out".into());
    let inputs = inputs.iter().map(|v| format!("u={}", fmt_rational(v))).collect();
    Model { sys, q, states, inputs }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Domain(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::from_file(&read_json(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::fixtures::example4_controller;
    use crate::system::fixtures::*;

    fn named(sys: FiniteSystem, q: TargetSet) -> Model {
        let mut m = Model::anonymous(sys, q);
        m.inputs = vec!["a".into(), "b".into()];
        m
    }

    #[test]
    fn system_round_trip() {
        let (sys, q) = example1();
        let m = named(sys, q);
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back = Model::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn load_errors() {
        let (sys, q) = example1();
        let mut f = named(sys, q).to_file();
        let mut missing = f.clone();
        missing.transitions.pop();
        assert!(matches!(Model::from_file(&missing), Err(Error::InvalidSystem(_))));
        let mut dup = f.clone();
        dup.transitions.push(dup.transitions[0].clone());
        assert!(Model::from_file(&dup).is_err());
        f.transitions[0].to.push("9".into());
        assert!(matches!(Model::from_file(&f), Err(Error::UnknownName(s)) if s == "9"));
        let bad: std::result::Result<SystemFile, _> = serde_json::from_str(r#"{"states":[],"inputs":[],"transitions":[],"Q":[],"x":1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn cover_and_controller_round_trip() {
        let (sys, q) = example4();
        let m = named(sys, q);
        let cover = InvariantCover::new([CoverElement::new(set(&[0, 1]), 0), CoverElement::new(set(&[2]), 1)]);
        assert_eq!(m.cover_from_records(&m.cover_to_records(&cover)).unwrap(), cover);
        let h = example4_controller(&m.sys, 2);
        let f = m.controller_to_file(&h);
        assert_eq!(m.controller_from_file(&f).unwrap(), h);
        let mut partial = f.clone();
        partial.coder.pop();
        assert!(matches!(m.controller_from_file(&partial), Err(Error::InvalidController(_))));
    }

    #[test]
    fn relation_resolution() {
        let (sys, q) = example1();
        let m = named(sys, q);
        let f = RelationFile {
            pairs: (0..3).map(|x| [x.to_string(), x.to_string()]).collect(),
            input_map: vec![["a".into(), "a".into()], ["b".into(), "b".into()]],
        };
        let rel = relation_from_file(&f, &m, &m).unwrap();
        assert_eq!(crate::refine::check_frr(&m.sys, &m.sys, &rel), Ok(()));
        let mut half = f.clone();
        half.input_map.pop();
        assert!(matches!(relation_from_file(&half, &m, &m), Err(Error::InvalidRelation(_))));
    }
}
