//! Branch maps, the iterated function system, symbolic coding and cylinders.
//!
//! Symbols are stored 0-based (`0..=s`) and displayed 1-based. A word
//! `ω = (ω_1, …, ω_n)` acts forward as `f_ω = f_{ω_n} ∘ … ∘ f_{ω_1}`, so its
//! cylinder is `f_{ω_1}^{-1} ∘ … ∘ f_{ω_n}^{-1}(Ō)`.

use std::fmt;
use std::sync::Arc;

use num::traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{from_f64_exact, to_f64, Rat};

pub type MapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Evaluator contracts for a non-affine branch.
#[derive(Clone)]
pub struct CustomMap {
    pub eval: MapFn,
    pub deriv: MapFn,
    pub inverse: MapFn,
}

#[derive(Clone)]
pub enum BranchKind {
    Affine(AffineMap),
    Custom(CustomMap),
}

/// `x ↦ slope·x + intercept`, kept both exactly and as floats.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub slope: f64,
    pub intercept: f64,
    pub exact_slope: Rat,
    pub exact_intercept: Rat,
    inv_slope: f64,
    inv_intercept: f64,
}

impl AffineMap {
    fn from_exact(slope: Rat, intercept: Rat) -> Self {
        let inv_slope = to_f64(&(Rat::one() / &slope));
        let inv_intercept = to_f64(&(-&intercept / &slope));
        AffineMap {
            slope: to_f64(&slope),
            intercept: to_f64(&intercept),
            exact_slope: slope,
            exact_intercept: intercept,
            inv_slope,
            inv_intercept,
        }
    }

    pub fn exact_fixed_point(&self) -> Rat {
        &self.exact_intercept / (Rat::one() - &self.exact_slope)
    }

    pub fn exact_inverse(&self, y: &Rat) -> Rat {
        (y - &self.exact_intercept) / &self.exact_slope
    }

    pub fn exact_eval(&self, x: &Rat) -> Rat {
        &self.exact_slope * x + &self.exact_intercept
    }
}

#[derive(Clone)]
pub struct Branch {
    pub kind: BranchKind,
    /// 1-based position in the owning system; assigned on construction.
    pub label: usize,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BranchKind::Affine(m) => write!(f, "f{}(x) = {}x + {}", self.label, m.slope, m.intercept),
            BranchKind::Custom(_) => write!(f, "f{}(custom)", self.label),
        }
    }
}

impl Branch {
    /// Affine branch from float coefficients; the exact value is the binary value of each float.
    pub fn affine(slope: f64, intercept: f64) -> Result<Self> {
        Self::affine_exact(from_f64_exact(slope)?, from_f64_exact(intercept)?)
    }

    pub fn affine_exact(slope: Rat, intercept: Rat) -> Result<Self> {
        if !slope.is_positive() {
            return Err(Error::InvalidSystem(format!("affine slope {} is not positive", to_f64(&slope))));
        }
        Ok(Branch { kind: BranchKind::Affine(AffineMap::from_exact(slope, intercept)), label: 0 })
    }

    pub fn custom(map: CustomMap) -> Self {
        Branch { kind: BranchKind::Custom(map), label: 0 }
    }

    pub fn as_affine(&self) -> Option<&AffineMap> {
        match &self.kind {
            BranchKind::Affine(m) => Some(m),
            BranchKind::Custom(_) => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine(m) => m.slope * x + m.intercept,
            BranchKind::Custom(c) => (c.eval)(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine(m) => m.slope,
            BranchKind::Custom(c) => (c.deriv)(x),
        }
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine(m) => m.inv_slope * y + m.inv_intercept,
            BranchKind::Custom(c) => (c.inverse)(y),
        }
    }
}

/// Probability vector `(p_1, …, p_{s+1})` with `p_{s+1} = 1 − Σ_{i≤s} p_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    p: Vec<f64>,
    exact: Vec<Rat>,
}

impl ProbVector {
    /// From the free coordinates `p_1..p_s`.
    pub fn new(free: &[f64]) -> Result<Self> {
        let exact = free.iter().map(|&x| from_f64_exact(x)).collect::<Result<Vec<_>>>()?;
        let mut p: Vec<f64> = free.to_vec();
        let last = 1.0 - free.iter().sum::<f64>();
        p.push(last);
        Self::finish(p, exact)
    }

    /// Exact construction; floats are the nearest doubles.
    pub fn from_rationals(free: Vec<Rat>) -> Result<Self> {
        let p: Vec<f64> = free.iter().map(to_f64).collect();
        let mut p = p;
        let sum: Rat = free.iter().fold(Rat::zero(), |acc, x| acc + x);
        p.push(to_f64(&(Rat::one() - sum)));
        Self::finish(p, free)
    }

    fn finish(p: Vec<f64>, mut exact: Vec<Rat>) -> Result<Self> {
        if exact.is_empty() {
            return Err(Error::InvalidProbability("need at least one free coordinate (s ≥ 1)".into()));
        }
        let sum: Rat = exact.iter().fold(Rat::zero(), |acc, x| acc + x);
        exact.push(Rat::one() - sum);
        for (i, x) in exact.iter().enumerate() {
            if !x.is_positive() || x >= &Rat::one() {
                return Err(Error::InvalidProbability(format!("p_{} = {} not in (0, 1)", i + 1, to_f64(x))));
            }
        }
        if p.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidProbability(format!("{p:?} not in the open simplex")));
        }
        Ok(ProbVector { p, exact })
    }

    /// All `s + 1` weights.
    pub fn full(&self) -> &[f64] {
        &self.p
    }

    pub fn exact(&self) -> &[Rat] {
        &self.exact
    }

    pub fn free(&self) -> &[f64] {
        &self.p[..self.p.len() - 1]
    }

    /// Number of free coordinates `s`.
    pub fn s(&self) -> usize {
        self.p.len() - 1
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `cum[j] = Σ_{i<j} p_i`, with `len + 1` entries.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.p.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &x in &self.p {
            acc += x;
            cum.push(acc);
        }
        cum
    }

    pub fn exact_cumulative(&self) -> Vec<Rat> {
        let mut cum = vec![Rat::zero()];
        for x in &self.exact {
            let next = cum.last().unwrap() + x;
            cum.push(next);
        }
        cum
    }

    /// `p_ω` as a float product.
    pub fn weight(&self, w: &Word) -> f64 {
        w.symbols().iter().map(|&i| self.p[i]).product()
    }
}

/// Finite word over `{0..=s}` (0-based storage, 1-based display).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Self {
        Word(symbols)
    }

    /// From 1-based labels. Panics on a zero label.
    pub fn from_labels(labels: &[usize]) -> Self {
        assert!(labels.iter().all(|&l| l >= 1), "symbol labels are 1-based");
        Word(labels.iter().map(|&l| l - 1).collect())
    }

    pub fn repeat(symbol: usize, n: usize) -> Self {
        Word(vec![symbol; n])
    }

    pub fn periodic(cycle: &[usize], n: usize) -> Self {
        Word((0..n).map(|k| cycle[k % cycle.len()]).collect())
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn labels(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, symbol: usize) {
        self.0.push(symbol);
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.0.len())].to_vec())
    }

    /// `σ^k ω`.
    pub fn shift(&self, k: usize) -> Word {
        Word(self.0[k.min(self.0.len())..].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", s + 1)?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub osc: bool,
    pub separating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub flags: Flags,
    pub lambda: f64,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const SAMPLES: usize = 65;

#[derive(Clone, Debug)]
pub struct IfSystem {
    branches: Vec<Branch>,
    open_set: (f64, f64),
    lambda: f64,
    flags: Flags,
    hull: (f64, f64),
    exact_hull: Option<(Rat, Rat)>,
    exact_open: Option<(Rat, Rat)>,
    report: ValidationReport,
}

impl IfSystem {
    /// Builds and validates a system; `λ` is the smallest sampled derivative.
    pub fn new(branches: Vec<Branch>, open_set: (f64, f64)) -> Result<Self> {
        Self::build(branches, open_set, None, None)
    }

    /// As [`IfSystem::new`] with a declared expansion bound that every derivative sample must meet.
    pub fn with_lambda(branches: Vec<Branch>, open_set: (f64, f64), lambda: f64) -> Result<Self> {
        Self::build(branches, open_set, None, Some(lambda))
    }

    /// Affine system from `(slope, intercept)` float pairs.
    pub fn affine(maps: &[(f64, f64)], open_set: (f64, f64)) -> Result<Self> {
        let branches = maps.iter().map(|&(a, b)| Branch::affine(a, b)).collect::<Result<Vec<_>>>()?;
        let lo = from_f64_exact(open_set.0)?;
        let hi = from_f64_exact(open_set.1)?;
        Self::build(branches, open_set, Some((lo, hi)), None)
    }

    /// Affine system with exact rational coefficients and open set.
    pub fn affine_exact(maps: &[(Rat, Rat)], open_set: (Rat, Rat)) -> Result<Self> {
        let branches = maps
            .iter()
            .map(|(a, b)| Branch::affine_exact(a.clone(), b.clone()))
            .collect::<Result<Vec<_>>>()?;
        let fo = (to_f64(&open_set.0), to_f64(&open_set.1));
        Self::build(branches, fo, Some(open_set), None)
    }

    fn build(
        mut branches: Vec<Branch>,
        open_set: (f64, f64),
        exact_open: Option<(Rat, Rat)>,
        declared_lambda: Option<f64>,
    ) -> Result<Self> {
        if branches.len() < 2 {
            return Err(Error::InvalidSystem("need at least two branches".into()));
        }
        for (k, b) in branches.iter_mut().enumerate() {
            b.label = k + 1;
        }
        let (lo, hi) = open_set;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSystem(format!("open set ({lo}, {hi}) is empty")));
        }
        let exact_open = match exact_open {
            Some(o) => Some(o),
            None if branches.iter().all(|b| b.as_affine().is_some()) => {
                Some((from_f64_exact(lo)?, from_f64_exact(hi)?))
            }
            None => None,
        };
        let mut sys = IfSystem {
            branches,
            open_set,
            lambda: declared_lambda.unwrap_or(f64::NAN),
            flags: Flags::default(),
            hull: (lo, hi),
            exact_hull: None,
            exact_open,
            report: ValidationReport { checks: vec![], flags: Flags::default(), lambda: f64::NAN },
        };
        let report = sys.run_checks(declared_lambda)?;
        sys.lambda = report.lambda;
        sys.flags = report.flags;
        sys.report = report;
        sys.compute_hull()?;
        Ok(sys)
    }

    fn run_checks(&self, declared_lambda: Option<f64>) -> Result<ValidationReport> {
        let (lo, hi) = self.open_set;
        let mut checks = vec![Check {
            name: "open set nonempty".into(),
            passed: true,
            witness: format!("O = ({lo}, {hi})"),
        }];
        let mut min_deriv = f64::INFINITY;
        for b in &self.branches {
            let i = b.label;
            // Monotonicity on the hull of O.
            let mut prev = f64::NEG_INFINITY;
            for k in 0..SAMPLES {
                let x = lo + (hi - lo) * k as f64 / (SAMPLES - 1) as f64;
                let y = b.eval(x);
                if !(y > prev) || !y.is_finite() {
                    return Err(Error::InvalidSystem(format!("branch {i} is not strictly increasing near x = {x}")));
                }
                prev = y;
            }
            checks.push(Check { name: format!("branch {i} increasing"), passed: true, witness: String::new() });
            // Derivative samples on f_i^{-1}(Ō) and inverse round trip.
            let mut worst_rt: f64 = 0.0;
            for k in 0..SAMPLES {
                let y = lo + (hi - lo) * k as f64 / (SAMPLES - 1) as f64;
                let x = b.inverse(y);
                min_deriv = min_deriv.min(b.deriv(x));
                worst_rt = worst_rt.max((b.eval(x) - y).abs() / (1.0 + y.abs()));
            }
            let rt_ok = worst_rt <= 1e-12;
            checks.push(Check {
                name: format!("branch {i} inverse round trip"),
                passed: rt_ok,
                witness: format!("max relative error {worst_rt:e}"),
            });
            if !rt_ok {
                return Err(Error::InvalidSystem(format!(
                    "branch {i}: inverse composed with evaluator off by {worst_rt:e}"
                )));
            }
        }
        let lambda = match declared_lambda {
            Some(l) => {
                if min_deriv < l {
                    return Err(Error::InvalidSystem(format!(
                        "derivative sample {min_deriv} below declared lambda {l}"
                    )));
                }
                l
            }
            None => min_deriv,
        };
        if !(lambda > 1.0) {
            return Err(Error::InvalidSystem(format!("expansion bound {lambda} is not > 1")));
        }
        checks.push(Check {
            name: "expanding".into(),
            passed: true,
            witness: format!("lambda = {lambda}, min sampled derivative = {min_deriv}"),
        });

        let pre = self.preimage_relations();
        let containment: Vec<usize> = (0..self.branches.len()).filter(|&i| !pre.contained[i]).collect();
        checks.push(Check {
            name: "preimages inside O".into(),
            passed: containment.is_empty(),
            witness: containment.iter().map(|i| format!("f_{}^-1(O) ⊄ O", i + 1)).collect::<Vec<_>>().join("; "),
        });
        checks.push(Check {
            name: "preimages ordered".into(),
            passed: pre.unordered.is_empty(),
            witness: pre.unordered.iter().map(|(i, j)| format!("({}, {})", i + 1, j + 1)).collect::<Vec<_>>().join("; "),
        });
        checks.push(Check {
            name: "preimage interiors disjoint".into(),
            passed: pre.overlapping.is_empty(),
            witness: pre.overlapping.clone().join("; "),
        });
        checks.push(Check {
            name: "preimage closures disjoint".into(),
            passed: pre.touching.is_empty() && pre.overlapping.is_empty(),
            witness: pre.touching.clone().join("; "),
        });
        let osc = containment.is_empty() && pre.unordered.is_empty() && pre.overlapping.is_empty();
        let separating = osc && pre.touching.is_empty();
        Ok(ValidationReport { checks, flags: Flags { osc, separating }, lambda })
    }

    fn preimage_relations(&self) -> PreimageRelations {
        let n = self.branches.len();
        let mut rel = PreimageRelations {
            contained: vec![false; n],
            unordered: vec![],
            overlapping: vec![],
            touching: vec![],
        };
        if let (Some((lo, hi)), Some(maps)) = (&self.exact_open, self.exact_maps()) {
            let iv: Vec<(Rat, Rat)> = maps.iter().map(|m| (m.exact_inverse(lo), m.exact_inverse(hi))).collect();
            for i in 0..n {
                rel.contained[i] = &iv[i].0 >= lo && &iv[i].1 <= hi;
                for j in i + 1..n {
                    if !(iv[i].0 <= iv[j].0 && iv[i].1 <= iv[j].1) {
                        rel.unordered.push((i, j));
                    }
                    let l = if iv[i].0 > iv[j].0 { &iv[i].0 } else { &iv[j].0 };
                    let r = if iv[i].1 < iv[j].1 { &iv[i].1 } else { &iv[j].1 };
                    let w = format!(
                        "[{}, {}] vs [{}, {}]",
                        to_f64(&iv[i].0),
                        to_f64(&iv[i].1),
                        to_f64(&iv[j].0),
                        to_f64(&iv[j].1)
                    );
                    if l < r {
                        rel.overlapping.push(w);
                    } else if l == r {
                        rel.touching.push(w);
                    }
                }
            }
        } else {
            let (lo, hi) = self.open_set;
            let eps = 1e-12 * (hi - lo);
            let iv: Vec<(f64, f64)> = self.branches.iter().map(|b| (b.inverse(lo), b.inverse(hi))).collect();
            for i in 0..n {
                rel.contained[i] = iv[i].0 >= lo - eps && iv[i].1 <= hi + eps;
                for j in i + 1..n {
                    if !(iv[i].0 <= iv[j].0 + eps && iv[i].1 <= iv[j].1 + eps) {
                        rel.unordered.push((i, j));
                    }
                    let l = iv[i].0.max(iv[j].0);
                    let r = iv[i].1.min(iv[j].1);
                    let w = format!("[{}, {}] vs [{}, {}]", iv[i].0, iv[i].1, iv[j].0, iv[j].1);
                    if r - l > eps {
                        rel.overlapping.push(w);
                    } else if r - l >= -eps {
                        rel.touching.push(w);
                    }
                }
            }
        }
        rel
    }

    fn compute_hull(&mut self) -> Result<()> {
        let first = &self.branches[0];
        let last = &self.branches[self.branches.len() - 1];
        let (lo, hi) = self.open_set;
        if let (Some(a), Some(b)) = (first.as_affine(), last.as_affine()) {
            let (xa, xb) = (a.exact_fixed_point(), b.exact_fixed_point());
            if let Some((olo, ohi)) = &self.exact_open {
                if &xa < olo || &xb > ohi || xa >= xb {
                    return Err(Error::InvalidSystem(format!(
                        "fixed points {} and {} do not span a hull inside the closure of O",
                        to_f64(&xa),
                        to_f64(&xb)
                    )));
                }
            }
            self.hull = (to_f64(&xa), to_f64(&xb));
            self.exact_hull = Some((xa, xb));
        } else {
            let fa = fixed_point(first, lo, hi)?;
            let fb = fixed_point(last, lo, hi)?;
            if fa >= fb {
                return Err(Error::InvalidSystem("hull of J is degenerate".into()));
            }
            self.hull = (fa, fb);
        }
        Ok(())
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, i: usize) -> &Branch {
        &self.branches[i]
    }

    /// Number of branches `s + 1`.
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn s(&self) -> usize {
        self.branches.len() - 1
    }

    pub fn open_set(&self) -> (f64, f64) {
        self.open_set
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// `[min J, max J]`.
    pub fn hull(&self) -> (f64, f64) {
        self.hull
    }

    pub fn exact_hull(&self) -> Option<&(Rat, Rat)> {
        self.exact_hull.as_ref()
    }

    pub fn exact_open(&self) -> Option<&(Rat, Rat)> {
        self.exact_open.as_ref()
    }

    pub fn is_affine(&self) -> bool {
        self.branches.iter().all(|b| b.as_affine().is_some())
    }

    pub fn exact_maps(&self) -> Option<Vec<&AffineMap>> {
        self.branches.iter().map(|b| b.as_affine()).collect()
    }

    /// Slopes when every branch is affine.
    pub fn slopes(&self) -> Option<Vec<f64>> {
        self.branches.iter().map(|b| b.as_affine().map(|m| m.slope)).collect()
    }

    pub fn require_osc(&self) -> Result<()> {
        if self.flags.osc {
            Ok(())
        } else {
            Err(Error::InvalidSystem("open set condition does not hold".into()))
        }
    }

    /// Checks that `p` matches the branch count.
    pub fn check_p(&self, p: &ProbVector) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::InvalidProbability(format!(
                "{} weights for {} branches",
                p.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

struct PreimageRelations {
    contained: Vec<bool>,
    unordered: Vec<(usize, usize)>,
    overlapping: Vec<String>,
    touching: Vec<String>,
}

fn fixed_point(b: &Branch, lo: f64, hi: f64) -> Result<f64> {
    let g = |x: f64| b.eval(x) - x;
    let (mut l, mut r) = (lo, hi);
    if g(l) > 0.0 || g(r) < 0.0 {
        return Err(Error::InvalidSystem(format!("branch {} has no fixed point in [{lo}, {hi}]", b.label)));
    }
    while r - l > 1e-14 * (1.0 + l.abs().max(r.abs())) {
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            break;
        }
        if g(m) <= 0.0 {
            l = m;
        } else {
            r = m;
        }
    }
    Ok(if g(l) == 0.0 { l } else { 0.5 * (l + r) })
}

/// Validates `(system, p)` and returns the full report. Structural failures are errors.
pub fn validate(system: &IfSystem, p: &ProbVector) -> Result<ValidationReport> {
    system.check_p(p)?;
    let mut report = system.report.clone();
    let sum: f64 = p.full().iter().sum();
    report.checks.push(Check {
        name: "probabilities sum to one".into(),
        passed: (sum - 1.0).abs() <= 1e-15,
        witness: format!("float sum = {sum}"),
    });
    Ok(report)
}

/// Composition of inverse branches along a word, used for top-down cylinder descent.
#[derive(Clone)]
pub(crate) struct Cursor<'a> {
    sys: &'a IfSystem,
    affine: Option<(f64, f64)>,
    word: Vec<usize>,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(sys: &'a IfSystem) -> Self {
        Cursor { sys, affine: if sys.is_affine() { Some((1.0, 0.0)) } else { None }, word: Vec::new() }
    }

    #[inline]
    pub(crate) fn map(&self, y: f64) -> f64 {
        match self.affine {
            Some((s, o)) => s * y + o,
            None => self.word.iter().rev().fold(y, |z, &i| self.sys.branches[i].inverse(z)),
        }
    }

    #[inline]
    pub(crate) fn map_child(&self, j: usize, y: f64) -> f64 {
        self.map(self.sys.branches[j].inverse(y))
    }

    pub(crate) fn push(&mut self, j: usize) {
        if let Some((s, o)) = self.affine {
            let m = self.sys.branches[j].as_affine().unwrap();
            self.affine = Some((s * m.inv_slope, s * m.inv_intercept + o));
        }
        self.word.push(j);
    }

    pub(crate) fn is_affine(&self) -> bool {
        self.affine.is_some()
    }

    pub(crate) fn word(&self) -> &[usize] {
        &self.word
    }
}

/// One level of the top-down descent toward `x` through hull cylinders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Step {
    /// `x` lies in child `symbol` (smallest index on ties), which spans `[lo, hi]`.
    Child { symbol: usize, lo: f64, hi: f64 },
    /// `x` lies in a gap; children `0..left` lie entirely to its left.
    Gap { left: usize },
}

pub(crate) fn descend(cur: &Cursor<'_>, x: f64) -> Step {
    let (a, b) = cur.sys.hull;
    let mut left = 0;
    for j in 0..cur.sys.len() {
        let lo = cur.map_child(j, a);
        let hi = cur.map_child(j, b);
        if x >= lo && x <= hi {
            return Step::Child { symbol: j, lo, hi };
        }
        if hi < x {
            left = j + 1;
        }
    }
    Step::Gap { left }
}

/// Result of [`encode`].
#[derive(Clone, Debug, PartialEq)]
pub struct Coding {
    pub word: Word,
    /// True when `x` fell into a gap of `J` before the requested depth.
    pub gap: bool,
}

fn hull_check(system: &IfSystem, x: f64) -> Result<()> {
    let (a, b) = system.hull;
    if x.is_nan() || x < a || x > b {
        return Err(Error::NotInHull { x, lo: a, hi: b });
    }
    Ok(())
}

/// Coding of `x` by nested hull cylinders, smaller branch index on shared boundaries.
pub fn encode(system: &IfSystem, x: f64, depth: usize) -> Result<Coding> {
    hull_check(system, x)?;
    let mut cur = Cursor::new(system);
    let mut gap = false;
    for _ in 0..depth {
        match descend(&cur, x) {
            Step::Child { symbol, .. } => cur.push(symbol),
            Step::Gap { .. } => {
                gap = true;
                break;
            }
        }
    }
    Ok(Coding { word: Word::new(cur.word().to_vec()), gap })
}

/// `f_{ω_1}^{-1} ∘ … ∘ f_{ω_n}^{-1}(Ō)`.
pub fn cylinder(system: &IfSystem, w: &Word) -> (f64, f64) {
    image_of(system, w, system.open_set)
}

/// Cylinder of the hull of `J` instead of `Ō`.
pub fn hull_cylinder(system: &IfSystem, w: &Word) -> (f64, f64) {
    image_of(system, w, system.hull)
}

fn image_of(system: &IfSystem, w: &Word, (lo, hi): (f64, f64)) -> (f64, f64) {
    let (mut l, mut r) = (lo, hi);
    for &i in w.symbols().iter().rev() {
        let b = &system.branches[i];
        l = b.inverse(l);
        r = b.inverse(r);
    }
    (l, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PiApprox {
    pub point: f64,
    pub err: f64,
}

/// Midpoint of `cylinder(ω)` with half its diameter as error bound.
pub fn pi_approx(system: &IfSystem, w: &Word) -> PiApprox {
    let (l, r) = cylinder(system, w);
    PiApprox { point: 0.5 * (l + r), err: 0.5 * (r - l) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErgodicSums {
    /// `S_nφ` with `φ = −log f'`.
    pub s_phi: f64,
    /// `S_nψ` with `ψ = log p`.
    pub s_psi: f64,
    /// Bound on the error of `s_phi`; zero for affine branches.
    pub phi_err: f64,
}

impl ErgodicSums {
    /// Dynamical exponent `S_nψ / S_nφ`.
    pub fn ratio(&self) -> f64 {
        self.s_psi / self.s_phi
    }
}

/// The potentials `φ(ω) = −log f'_{ω_1}(π ω)` and `ψ(ω) = log p_{ω_1}`.
#[derive(Clone, Copy)]
pub struct Potentials<'a> {
    pub system: &'a IfSystem,
    pub p: &'a ProbVector,
}

impl<'a> Potentials<'a> {
    pub fn new(system: &'a IfSystem, p: &'a ProbVector) -> Result<Self> {
        system.check_p(p)?;
        Ok(Potentials { system, p })
    }

    pub fn phi(&self, w: &Word) -> f64 {
        let i = w.symbols()[0];
        let b = &self.system.branches[i];
        match b.as_affine() {
            Some(m) => -m.slope.ln(),
            None => -b.deriv(pi_approx(self.system, w).point).ln(),
        }
    }

    pub fn psi(&self, w: &Word) -> f64 {
        self.p.full()[w.symbols()[0]].ln()
    }

    pub fn sums(&self, w: &Word) -> ErgodicSums {
        ergodic_sums(self.system, self.p, w)
    }
}

/// `(S_nφ, S_nψ)` along `ω`; exact for affine branches.
pub fn ergodic_sums(system: &IfSystem, p: &ProbVector, w: &Word) -> ErgodicSums {
    let mut s_phi = 0.0;
    let mut s_psi = 0.0;
    let mut phi_err = 0.0;
    for k in 0..w.len() {
        let i = w.symbols()[k];
        s_psi += p.full()[i].ln();
        let b = &system.branches[i];
        match b.as_affine() {
            Some(m) => s_phi -= m.slope.ln(),
            None => {
                let (l, r) = cylinder(system, &w.shift(k));
                let mid = 0.5 * (l + r);
                s_phi -= b.deriv(mid).ln();
                let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                for j in 0..5 {
                    let v = b.deriv(l + (r - l) * j as f64 / 4.0).ln();
                    mn = mn.min(v);
                    mx = mx.max(v);
                }
                phi_err += mx - mn;
            }
        }
    }
    ErgodicSums { s_phi, s_psi, phi_err }
}

/// `[min J, max J]`, the fixed points of `f_1` and `f_{s+1}`.
pub fn attractor_hull(system: &IfSystem) -> (f64, f64) {
    system.hull
}

/// Sampled bounded-distortion constant over words of length `depth` (shorter words are dominated).
pub fn distortion_constant(system: &IfSystem, depth: usize) -> f64 {
    if depth == 0 || system.is_affine() {
        return 1.0;
    }
    const POINTS: usize = 17;
    let mut d: f64 = 1.0;
    let mut stack = vec![Word::default()];
    while let Some(w) = stack.pop() {
        if w.len() == depth {
            let (l, r) = cylinder(system, &w);
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..POINTS {
                let mut x = l + (r - l) * j as f64 / (POINTS - 1) as f64;
                let mut logd = 0.0;
                for &i in w.symbols() {
                    let b = &system.branches[i];
                    logd += b.deriv(x).ln();
                    x = b.eval(x);
                }
                mn = mn.min(logd);
                mx = mx.max(logd);
            }
            d = d.max((mx - mn).exp());
            continue;
        }
        for i in 0..system.len() {
            let mut next = w.clone();
            next.push(i);
            stack.push(next);
        }
    }
    d
}

/// Compactification chart `h(x) = x / (1 + |x|)`, `h(±∞) = ±1`.
#[inline]
pub fn compactify(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        -1.0
    } else {
        x / (1.0 + x.abs())
    }
}

/// Metric on the extended line: `d(x, y) = |h(x) − h(y)|`.
///
/// For finite arguments of equal sign this is evaluated as
/// `|x − y| / ((1 + |x|)(1 + |y|))`, which avoids cancellation near `±1`.
#[inline]
pub fn metric_d(x: f64, y: f64) -> f64 {
    if x.is_infinite() || y.is_infinite() {
        return (compactify(x) - compactify(y)).abs();
    }
    if (x >= 0.0) == (y >= 0.0) {
        (x - y).abs() / ((1.0 + x.abs()) * (1.0 + y.abs()))
    } else {
        compactify(x).abs() + compactify(y).abs()
    }
}
