//! Rate bounds for uncertain linear systems `ξ(t+1) ∈ Aξ(t) + Bν(t) + W`,
//! static interval quantizers for the scalar case and their finite
//! abstractions.

use std::fmt;

use num::traits::{One, Signed, ToPrimitive, Zero};
use num::{BigInt, BigRational, BigUint};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rate::fmt_decimal;
use crate::set::StateSet;
use crate::system::{FiniteSystem, TargetSet};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn log2_f64(r: &BigRational) -> f64 {
    let bits = |v: &BigInt| -> f64 {
        let m = v.magnitude();
        let shift = m.bits().saturating_sub(64);
        (m >> shift).to_f64().unwrap_or(f64::MAX).log2() + shift as f64
    };
    bits(r.numer()) - bits(r.denom())
}

/// Parses `p/q`, an integer, or a finite decimal such as `-0.75`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Domain(format!("not a rational number: {s:?}"));
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let digits: BigInt = format!("{}{frac}", int.trim_start_matches(['-', '+'])).parse().map_err(|_| bad())?;
        let scale = num::pow(BigInt::from(10), frac.len());
        let v = BigRational::new(digits, scale);
        return Ok(if neg { -v } else { v });
    }
    s.parse::<BigInt>().map(BigRational::from_integer).map_err(|_| bad())
}

/// Rationals as `p/q`, integers without a denominator.
pub fn fmt_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A finite logarithm: `log2(arg)` exactly, or a double when roots were irrational.
#[derive(Clone, Debug, PartialEq)]
pub enum Log2Value {
    Exact(BigRational),
    Approx(f64),
}

impl Log2Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Log2Value::Exact(r) => log2_f64(r),
            Log2Value::Approx(v) => *v,
        }
    }

    /// `k` when the argument is `2^k`.
    fn integer_exponent(&self) -> Option<i64> {
        let Log2Value::Exact(r) = self else { return None };
        let pow2 = |v: &BigInt| -> Option<u64> {
            let m = v.magnitude();
            let k = m.bits().checked_sub(1)?;
            (*m == BigUint::one() << k).then_some(k)
        };
        match (pow2(r.numer()), pow2(r.denom())) {
            (Some(a), Some(0)) => Some(a as i64),
            (Some(0), Some(b)) => Some(-(b as i64)),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Log2Value::Exact(_))
    }
}

impl fmt::Display for Log2Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.integer_exponent(), self) {
            (Some(k), _) => write!(f, "{k}"),
            (None, Log2Value::Exact(r)) => write!(f, "log2({}) ({})", fmt_rational(r), fmt_decimal(self.to_f64())),
            (None, Log2Value::Approx(v)) => write!(f, "~{}", fmt_decimal(*v)),
        }
    }
}

/// Extended real result of a bound.
#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    /// No bound: `|det A| = 0`.
    NegInf,
    Finite(Log2Value),
    PosInf,
}

impl Bound {
    pub fn to_f64(&self) -> f64 {
        match self {
            Bound::NegInf => f64::NEG_INFINITY,
            Bound::Finite(v) => v.to_f64(),
            Bound::PosInf => f64::INFINITY,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::NegInf => f.write_str("-inf"),
            Bound::Finite(v) => v.fmt(f),
            Bound::PosInf => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearBoundInput {
    pub n: u32,
    pub abs_det: BigRational,
    pub mu_q: BigRational,
    pub mu_w: BigRational,
}

impl LinearBoundInput {
    pub fn new(n: u32, abs_det: BigRational, mu_q: BigRational, mu_w: BigRational) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if abs_det.is_negative() {
            return Err(Error::Domain("|det A| must be nonnegative".into()));
        }
        if !mu_q.is_positive() {
            return Err(Error::Domain("mu(Q) must be positive".into()));
        }
        if mu_w.is_negative() || mu_w > mu_q {
            return Err(Error::Domain("need 0 <= mu(W) <= mu(Q)".into()));
        }
        Ok(LinearBoundInput { n, abs_det, mu_q, mu_w })
    }
}

fn exact_root(r: &BigRational, n: u32) -> Option<BigRational> {
    let root = |v: &BigInt| -> Option<BigInt> {
        let s = v.nth_root(n);
        (num::pow(s.clone(), n as usize) == *v).then_some(s)
    };
    Some(BigRational::new(root(r.numer())?, root(r.denom())?))
}

enum Argument {
    Zero,
    Infinite,
    Exact(BigRational),
    Approx(f64),
}

/// `|det A| μ(Q) / (μ(Q)^{1/n} − μ(W)^{1/n})^n`.
fn argument(inp: &LinearBoundInput) -> Argument {
    if inp.abs_det.is_zero() {
        return Argument::Zero;
    }
    if inp.mu_w == inp.mu_q {
        return Argument::Infinite;
    }
    let lead = &inp.abs_det * &inp.mu_q;
    match (exact_root(&inp.mu_q, inp.n), exact_root(&inp.mu_w, inp.n)) {
        (Some(a), Some(b)) => Argument::Exact(lead / num::pow(a - b, inp.n as usize)),
        _ => {
            let n = inp.n as f64;
            let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
            let gap = f(&inp.mu_q).powf(1.0 / n) - f(&inp.mu_w).powf(1.0 / n);
            Argument::Approx(f(&lead) / gap.powf(n))
        }
    }
}

/// Universal lower bound on the invariance entropy.
pub fn entropy_lower_bound(inp: &LinearBoundInput) -> Bound {
    match argument(inp) {
        Argument::Zero => Bound::NegInf,
        Argument::Infinite => Bound::PosInf,
        Argument::Exact(r) => Bound::Finite(Log2Value::Exact(r)),
        Argument::Approx(v) => Bound::Finite(Log2Value::Approx(v.log2())),
    }
}

/// Lower bound on the rate of any static coder-controller: the logarithm of
/// the ceiling of the same argument.
pub fn static_rate_lower_bound(inp: &LinearBoundInput) -> Bound {
    match argument(inp) {
        Argument::Zero => Bound::NegInf,
        Argument::Infinite => Bound::PosInf,
        Argument::Exact(r) => Bound::Finite(Log2Value::Exact(BigRational::from_integer(r.ceil().to_integer()))),
        Argument::Approx(v) => {
            let near = v.round();
            let c = if (v - near).abs() <= 1e-9 * near.max(1.0) { near } else { v.ceil() };
            Bound::Finite(Log2Value::Approx(c.log2()))
        }
    }
}

/// `R ≤ lb + log2(1 + 2^{-lb}) ≤ lb + 1`, with `lb` clamped at 0 since the
/// entropy is nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct LossCheck {
    pub holds: bool,
    /// `static_rate − lb`.
    pub loss: f64,
    /// `lb + 1 − static_rate`.
    pub margin: f64,
}

pub fn loss_bound_check(lb: &Bound, static_rate: &Bound) -> Result<LossCheck> {
    let (Bound::Finite(lb), Bound::Finite(st)) = (lb, static_rate) else {
        return Err(Error::Domain("loss bound needs finite values".into()));
    };
    match (lb, st) {
        (Log2Value::Exact(a), Log2Value::Exact(k)) => {
            let a = a.clone().max(BigRational::one());
            let holds = *k <= &a + BigRational::one();
            let loss = log2_f64(&(k / &a));
            let margin = log2_f64(&(&a * rat(2, 1) / k));
            Ok(LossCheck { holds, loss, margin })
        }
        _ => {
            let l = lb.to_f64().max(0.0);
            let s = st.to_f64();
            let chain = l + (1.0 + (-l).exp2()).log2();
            Ok(LossCheck { holds: s <= chain + 1e-9, loss: s - l, margin: l + 1.0 - s })
        }
    }
}

/// Scalar plant `ξ(t+1) ∈ aξ(t) + ν(t) + [w1,w2]` with target `[q1,q2]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScalarPlant {
    pub a: BigRational,
    pub w: (BigRational, BigRational),
    pub q: (BigRational, BigRational),
}

impl ScalarPlant {
    pub fn new(a: BigRational, w: (BigRational, BigRational), q: (BigRational, BigRational)) -> Result<Self> {
        if a.is_zero() {
            return Err(Error::Domain("a must be nonzero".into()));
        }
        if !(q.0 < w.0 && w.0 <= w.1 && w.1 < q.1) {
            return Err(Error::Domain("need q1 < w1 <= w2 < q2".into()));
        }
        Ok(ScalarPlant { a, w, q })
    }

    pub fn delta_q(&self) -> BigRational {
        &self.q.1 - &self.q.0
    }

    pub fn delta_w(&self) -> BigRational {
        &self.w.1 - &self.w.0
    }

    pub fn bound_input(&self) -> LinearBoundInput {
        LinearBoundInput { n: 1, abs_det: self.a.abs(), mu_q: self.delta_q(), mu_w: self.delta_w() }
    }

    /// `a·[lo,hi] + v + W` as a closed interval.
    pub fn image(&self, lo: &BigRational, hi: &BigRational, v: &BigRational) -> (BigRational, BigRational) {
        let (x, y) = (&self.a * lo, &self.a * hi);
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        (x + v + &self.w.0, y + v + &self.w.1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub index: i64,
    pub lo: BigRational,
    pub hi: BigRational,
    pub input: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalCover {
    pub cells: Vec<Cell>,
    pub m: u64,
    pub d: BigRational,
}

impl IntervalCover {
    /// `log2 m`.
    pub fn rate(&self) -> Log2Value {
        Log2Value::Exact(BigRational::from_integer(self.m.into()))
    }
}

/// Static quantizer with `m = ⌈|a| Δq / (Δq − Δw)⌉` equal cells of width
/// `d = Δq/m`, centred on the midpoint of `Q`.
pub fn synth_scalar_static(p: &ScalarPlant) -> Result<IntervalCover> {
    let (dq, dw) = (p.delta_q(), p.delta_w());
    let m_big = (p.a.abs() * &dq / (&dq - &dw)).ceil().to_integer();
    let m = m_big.to_u64().filter(|&m| m <= 1 << 20).ok_or(Error::ExplosionGuard { budget: 1 << 20 })?;
    let d = &dq / BigRational::from_integer(m_big);
    let half = rat(1, 2);
    let qc = (&p.q.0 + &p.q.1) * &half;
    let wc = (&p.w.0 + &p.w.1) * &half;
    let even = m % 2 == 0;
    let (first, last) = if even { (-(m as i64) / 2, m as i64 / 2 - 1) } else { (-(m as i64 - 1) / 2, (m as i64 - 1) / 2) };
    let cells = (first..=last)
        .map(|i| {
            let i_r = BigRational::from_integer(i.into());
            let (lo, hi, off) = if even {
                (&i_r * &d, (&i_r + BigRational::one()) * &d, &i_r + &half)
            } else {
                ((&i_r - &half) * &d, (&i_r + &half) * &d, i_r.clone())
            };
            let (lo, hi) = ((&qc + lo).max(p.q.0.clone()), (&qc + hi).min(p.q.1.clone()));
            let input = &qc - &p.a * &qc - &wc - &p.a * &d * off;
            Cell { index: i, lo, hi, input }
        })
        .collect();
    Ok(IntervalCover { cells, m, d })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScalarViolation {
    /// A cell with `lo > hi` or outside `Q`.
    BadCell { index: i64 },
    /// A point of `Q` near `at` is not covered.
    Gap { at: BigRational },
    /// The image `[lo, hi]` of a cell leaves `Q`.
    Escapes { index: i64, image: Box<(BigRational, BigRational)> },
}

/// Exact closed-interval check of cover and invariance.
pub fn verify_scalar_cover(p: &ScalarPlant, c: &IntervalCover) -> std::result::Result<(), ScalarViolation> {
    for cell in &c.cells {
        if cell.lo > cell.hi || cell.lo < p.q.0 || cell.hi > p.q.1 {
            return Err(ScalarViolation::BadCell { index: cell.index });
        }
    }
    let mut sorted: Vec<&Cell> = c.cells.iter().collect();
    sorted.sort_by(|x, y| x.lo.cmp(&y.lo));
    let mut reach = p.q.0.clone();
    for cell in &sorted {
        if cell.lo > reach {
            return Err(ScalarViolation::Gap { at: reach });
        }
        reach = reach.max(cell.hi.clone());
    }
    if reach < p.q.1 {
        return Err(ScalarViolation::Gap { at: reach });
    }
    for cell in &c.cells {
        let (lo, hi) = p.image(&cell.lo, &cell.hi, &cell.input);
        if lo < p.q.0 || hi > p.q.1 {
            return Err(ScalarViolation::Escapes { index: cell.index, image: Box::new((lo, hi)) });
        }
    }
    Ok(())
}

/// Finite abstraction of a verified cover: states are the cells followed by a
/// sink, inputs are the distinct cell inputs in ascending order. Cell `i`
/// under input `v` reaches every cell meeting `a·C_i + v + W` (boundaries
/// included) and the sink when that interval leaves `Q`.
pub fn abstract_scalar(p: &ScalarPlant, c: &IntervalCover) -> Result<(FiniteSystem, TargetSet, Vec<BigRational>)> {
    verify_scalar_cover(p, c).map_err(|v| Error::InvalidCover(format!("{v:?}")))?;
    let mut inputs: Vec<BigRational> = c.cells.iter().map(|cell| cell.input.clone()).collect();
    inputs.sort();
    inputs.dedup();
    let k = c.cells.len();
    let sink = k;
    let mut succ = vec![Vec::new(); k * inputs.len()];
    for (i, cell) in c.cells.iter().enumerate() {
        for (u, v) in inputs.iter().enumerate() {
            let (lo, hi) = p.image(&cell.lo, &cell.hi, v);
            let slot = &mut succ[i * inputs.len() + u];
            slot.extend((0..k).filter(|&j| c.cells[j].lo <= hi && lo <= c.cells[j].hi));
            if lo < p.q.0 || hi > p.q.1 {
                slot.push(sink);
            }
        }
    }
    let m = inputs.len();
    let sys = FiniteSystem::from_fn(k + 1, m, |x, u| if x == sink { vec![sink] } else { succ[x * m + u].clone() });
    let q = TargetSet::new(&sys, (0..k).collect::<StateSet>())?;
    Ok((sys, q, inputs))
}

/// A random plant with small rational data; `w1 = w2` about one time in eight.
pub fn random_scalar_plant<R: Rng>(rng: &mut R) -> ScalarPlant {
    let mut r = |lo: i64, hi: i64| rat(rng.gen_range(lo..=hi), rng.gen_range(1..=8));
    loop {
        let a = r(-24, 24);
        let mut pts = [r(-40, 40), r(-40, 40), r(-40, 40), r(-40, 40)];
        pts.sort();
        let [q1, w1, mut w2, q2] = pts;
        if r(0, 7).is_zero() {
            w2 = w1.clone();
        }
        if let Ok(p) = ScalarPlant::new(a, (w1, w2), (q1, q2)) {
            return p;
        }
    }
}
