//! Generalised Takagi functions `C_n = ∂^n T_p / ∂p^n` and the matrix cocycle
//! governing their increments.
//!
//! Sign convention: with `a = min J`, `b = max J` the base increment vector is
//! `U(a, b) = (C_n(a) − C_n(b))_n = (−1, 0, …, 0)`, and
//! `U(x_ω, y_ω) = A₀(ω) U(a, b)` for the endpoints of the hull cylinder of `ω`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num::traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{descend, Cursor, IfSystem, ProbVector, Step, Word};
use crate::operator::{apply_m, eval_t, t_grid, GridFunction};
use crate::rational::Rat;

/// Scalars the cocycle can be computed over.
pub trait Field: Clone + Send + Sync + PartialEq + fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(n: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_finite(&self) -> bool;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Field for Rat {
    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn from_i64(n: i64) -> Self {
        Rat::from_integer(n.into())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_finite(&self) -> bool {
        true
    }
}

/// `n = (n_1, …, n_s)` with the componentwise order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(s: usize) -> Self {
        MultiIndex(vec![0; s])
    }

    pub fn unit(s: usize, k: usize) -> Self {
        let mut v = vec![0; s];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn uniform(s: usize, value: u32) -> Self {
        MultiIndex(vec![value; s])
    }

    pub fn s(&self) -> usize {
        self.0.len()
    }

    /// `|n| = Σ n_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `n − e_k`, if nonnegative.
    pub fn minus_unit(&self, k: usize) -> Option<MultiIndex> {
        if self.0[k] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[k] -= 1;
        Some(MultiIndex(v))
    }

    pub fn plus_unit(&self, k: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[k] += 1;
        MultiIndex(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All multi-indices `≤ n_max`, ordered by `|m|` then lexicographically.
#[derive(Debug, PartialEq)]
pub struct IndexSet {
    n_max: MultiIndex,
    items: Vec<MultiIndex>,
    pos: HashMap<MultiIndex, usize>,
    /// `up[c][k]` = position of `items[c] + e_k`.
    up: Vec<Vec<Option<usize>>>,
}

impl IndexSet {
    pub fn new(n_max: &MultiIndex) -> Arc<Self> {
        let s = n_max.s();
        let mut items = vec![MultiIndex::zero(s)];
        for k in 0..s {
            let mut next = Vec::new();
            for m in &items {
                for v in 0..=n_max.0[k] {
                    let mut w = m.0.clone();
                    w[k] = v;
                    next.push(MultiIndex(w));
                }
            }
            items = next;
        }
        items.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
        let pos: HashMap<MultiIndex, usize> = items.iter().enumerate().map(|(k, m)| (m.clone(), k)).collect();
        let up = items
            .iter()
            .map(|m| (0..s).map(|k| pos.get(&m.plus_unit(k)).copied()).collect())
            .collect();
        Arc::new(IndexSet { n_max: n_max.clone(), items, pos, up })
    }

    pub fn n_max(&self) -> &MultiIndex {
        &self.n_max
    }

    pub fn items(&self) -> &[MultiIndex] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.pos.get(m).copied()
    }

    pub fn s(&self) -> usize {
        self.n_max.s()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// `A₀(ω, k)`.
    Raw,
    /// `A(ω, k) = A₀(ω, k) / p_ω`.
    Weighted,
}

/// Dense matrix over an [`IndexSet`]; row `n`, column `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleMatrix<T: Field> {
    index: Arc<IndexSet>,
    data: Vec<T>,
    pub normalization: Normalization,
}

impl<T: Field> CocycleMatrix<T> {
    pub fn identity(index: Arc<IndexSet>, normalization: Normalization) -> Self {
        let d = index.len();
        let mut data = vec![T::zero(); d * d];
        for r in 0..d {
            data[r * d + r] = T::one();
        }
        CocycleMatrix { index, data, normalization }
    }

    pub fn index(&self) -> &Arc<IndexSet> {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.dim() + c]
    }

    pub fn get(&self, n: &MultiIndex, m: &MultiIndex) -> Option<&T> {
        Some(self.at(self.index.position(n)?, self.index.position(m)?))
    }

    /// Right-multiplies by the step matrix of `symbol` (sparse product).
    pub fn mul_step(&mut self, symbol: usize, p: &[T]) {
        let d = self.dim();
        let s = self.index.s();
        let normalized = self.normalization == Normalization::Weighted;
        let diag = if normalized { T::one() } else { p[symbol].clone() };
        let mut out = vec![T::zero(); d * d];
        for c in 0..d {
            // Column c of the step matrix: diagonal plus rows c + e_k.
            let mut terms: Vec<(usize, T)> = Vec::with_capacity(s);
            for k in 0..s {
                if let Some(l) = self.index.up[c][k] {
                    let lk = self.index.items[l].0[k] as i64;
                    let coef = if symbol < s {
                        if k != symbol {
                            continue;
                        }
                        T::from_i64(lk)
                    } else {
                        T::from_i64(-lk)
                    };
                    let coef = if normalized { coef.div(&p[symbol]) } else { coef };
                    terms.push((l, coef));
                }
            }
            for r in 0..d {
                let mut acc = self.data[r * d + c].mul(&diag);
                for (l, coef) in &terms {
                    let m = &self.data[r * d + l];
                    if !m.is_zero() {
                        acc = acc.add(&m.mul(coef));
                    }
                }
                out[r * d + c] = acc;
            }
        }
        self.data = out;
    }

    pub fn mul(&self, other: &CocycleMatrix<T>) -> CocycleMatrix<T> {
        let d = self.dim();
        let mut data = vec![T::zero(); d * d];
        for r in 0..d {
            for l in 0..d {
                let a = self.at(r, l);
                if a.is_zero() {
                    continue;
                }
                for c in 0..d {
                    let b = other.at(l, c);
                    if !b.is_zero() {
                        data[r * d + c] = data[r * d + c].add(&a.mul(b));
                    }
                }
            }
        }
        CocycleMatrix { index: self.index.clone(), data, normalization: self.normalization }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `A₀(ω, 1)` for `ω_1 = symbol` (0-based), or its weighted form.
pub fn step_matrix<T: Field>(symbol: usize, p: &[T], index: Arc<IndexSet>, normalization: Normalization) -> CocycleMatrix<T> {
    let mut m = CocycleMatrix::identity(index, normalization);
    m.mul_step(symbol, p);
    m
}

/// Ordered product `A₀(ω,1) A₀(σω,1) ⋯ A₀(σ^{k−1}ω,1)`, optionally divided by `p_ω`.
pub fn cocycle<T: Field>(w: &Word, p: &[T], n_max: &MultiIndex, normalization: Normalization) -> Result<CocycleMatrix<T>> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("cocycle needs a nonempty word".into()));
    }
    if p.len() != n_max.s() + 1 || w.symbols().iter().any(|&i| i >= p.len()) {
        return Err(Error::InvalidArgument("word, weights and multi-index dimensions disagree".into()));
    }
    let mut m = CocycleMatrix::identity(IndexSet::new(n_max), normalization);
    for &i in w.symbols() {
        m.mul_step(i, p);
    }
    if !m.all_finite() {
        return Err(Error::Overflow(format!(
            "cocycle entries overflow for |ω| = {}; use the weighted or rational form",
            w.len()
        )));
    }
    Ok(m)
}

/// Float cocycle from a probability vector.
pub fn cocycle_f64(w: &Word, p: &ProbVector, n_max: &MultiIndex, normalization: Normalization) -> Result<CocycleMatrix<f64>> {
    cocycle(w, p.full(), n_max, normalization)
}

/// Exact cocycle from the rational weights of `p`.
pub fn cocycle_exact(w: &Word, p: &ProbVector, n_max: &MultiIndex, normalization: Normalization) -> Result<CocycleMatrix<Rat>> {
    cocycle(w, p.exact(), n_max, normalization)
}

/// `U(x_ω, y_ω) = (C_n(x_ω) − C_n(y_ω))_n` for the hull cylinder of `ω`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementVector {
    pub indices: Vec<MultiIndex>,
    pub entries: Vec<f64>,
}

impl IncrementVector {
    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.indices.iter().position(|x| x == m).map(|k| self.entries[k])
    }
}

/// `A₀(ω) U(a, b)`, i.e. minus column 0 of `A₀(ω)`; entry 0 is `−p_ω`.
pub fn cylinder_increment(system: &IfSystem, p: &ProbVector, w: &Word, n_max: &MultiIndex) -> Result<IncrementVector> {
    system.check_p(p)?;
    system.require_osc()?;
    let index = IndexSet::new(n_max);
    if w.is_empty() {
        let mut entries = vec![0.0; index.len()];
        entries[0] = -1.0;
        return Ok(IncrementVector { indices: index.items().to_vec(), entries });
    }
    let a = cocycle_f64(w, p, n_max, Normalization::Weighted)?;
    let pw = p.weight(w);
    let entries = (0..a.dim()).map(|r| -pw * a.at(r, 0)).collect();
    Ok(IncrementVector { indices: index.items().to_vec(), entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CValue {
    pub value: f64,
    pub err: f64,
}

/// Pointwise evaluator of `C_n` by cylinder telescoping.
pub struct TakagiEvaluator<'a> {
    system: &'a IfSystem,
    p: &'a ProbVector,
    n: MultiIndex,
    index: Arc<IndexSet>,
    cum: Vec<f64>,
    /// Position of `e_i` in the index set, if `e_i ≤ n`.
    units: Vec<Option<usize>>,
    /// Measured bounds on `sup |C_m|` per index position (`m = 0` gives 1).
    sup_bounds: Vec<f64>,
}

/// Samples used to measure `sup |C_m|`, and the safety factor applied to the sampled maximum.
const SUP_SAMPLES: usize = 257;
const SUP_SAFETY: f64 = 2.0;

struct Raw {
    value: f64,
    row: Vec<f64>,
    mass: f64,
    exact: bool,
}

impl<'a> TakagiEvaluator<'a> {
    pub fn new(system: &'a IfSystem, p: &'a ProbVector, n: &MultiIndex) -> Result<Self> {
        system.check_p(p)?;
        system.require_osc()?;
        if n.s() != system.s() {
            return Err(Error::InvalidArgument(format!("multi-index {n} has {} entries, need {}", n.s(), system.s())));
        }
        let index = IndexSet::new(n);
        let units = (0..n.s()).map(|k| index.position(&MultiIndex::unit(n.s(), k))).collect();
        let mut ev = TakagiEvaluator {
            system,
            p,
            n: n.clone(),
            index: index.clone(),
            cum: p.cumulative(),
            units,
            sup_bounds: vec![1.0; index.len()],
        };
        let (a, b) = system.hull();
        for r in 1..index.len() {
            let sampled = (0..SUP_SAMPLES)
                .into_par_iter()
                .map(|k| {
                    let x = a + (b - a) * k as f64 / (SUP_SAMPLES - 1) as f64;
                    ev.raw(r, x, 60).value.abs()
                })
                .reduce(|| 0.0, f64::max);
            ev.sup_bounds[r] = SUP_SAFETY * sampled + f64::EPSILON;
        }
        Ok(ev)
    }

    pub fn n(&self) -> &MultiIndex {
        &self.n
    }

    pub fn sup_bounds(&self) -> Vec<(MultiIndex, f64)> {
        self.index.items().iter().cloned().zip(self.sup_bounds.iter().cloned()).collect()
    }

    /// `C_n(x)` with the tail after `depth` levels bounded through the measured sup bounds.
    pub fn eval(&self, x: f64, depth: usize) -> CValue {
        let target = self.index.len() - 1;
        let raw = self.raw(target, x, depth);
        if raw.exact {
            return CValue { value: raw.value, err: 0.0 };
        }
        let tail: f64 = raw.row.iter().zip(&self.sup_bounds).map(|(r, m)| r.abs() * m).sum();
        CValue { value: raw.value, err: raw.mass * tail }
    }

    /// Left-sibling telescoping for row `target` of the weighted cocycle.
    fn raw(&self, target: usize, x: f64, depth: usize) -> Raw {
        let d = self.index.len();
        let s = self.index.s();
        let pf = self.p.full();
        let (a, b) = self.system.hull();
        let mut row = vec![0.0; d];
        row[target] = 1.0;
        if x <= a || x >= b {
            let v = if target == 0 && x >= b { 1.0 } else { 0.0 };
            return Raw { value: v, row, mass: 0.0, exact: true };
        }
        let mut cur = Cursor::new(self.system);
        let (mut acc, mut mass) = (0.0, 1.0);
        let (mut lo, mut hi) = (a, b);
        let sibling = |row: &[f64], j: usize| -> f64 {
            let mut v = row[0] * pf[j];
            for (i, u) in self.units.iter().enumerate() {
                if let Some(u) = u {
                    let c = if j < s {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        -1.0
                    };
                    v += row[*u] * c;
                }
            }
            v
        };
        for _ in 0..depth {
            if x == lo {
                return Raw { value: acc, row, mass, exact: true };
            }
            if x == hi {
                let v = acc + mass * row[0];
                return Raw { value: v, row, mass, exact: true };
            }
            match descend(&cur, x) {
                Step::Child { symbol, lo: l, hi: h } => {
                    for j in 0..symbol {
                        acc += mass * sibling(&row, j);
                    }
                    self.row_step(&mut row, symbol);
                    mass *= pf[symbol];
                    cur.push(symbol);
                    lo = l;
                    hi = h;
                }
                Step::Gap { left } => {
                    for j in 0..left {
                        acc += mass * sibling(&row, j);
                    }
                    return Raw { value: acc, row, mass, exact: true };
                }
            }
        }
        if x == lo || x == hi {
            let v = if x == lo { acc } else { acc + mass * row[0] };
            return Raw { value: v, row, mass, exact: true };
        }
        Raw { value: acc, row, mass, exact: false }
    }

    /// `row ← row · A₀(symbol) / p_symbol`.
    fn row_step(&self, row: &mut [f64], symbol: usize) {
        let s = self.index.s();
        let ps = self.p.full()[symbol];
        let old = row.to_vec();
        for c in 0..row.len() {
            let mut acc = old[c];
            for k in 0..s {
                if let Some(l) = self.index.up[c][k] {
                    if old[l] == 0.0 {
                        continue;
                    }
                    let lk = self.index.items[l].0[k] as f64;
                    let coef = if symbol < s {
                        if k != symbol {
                            continue;
                        }
                        lk
                    } else {
                        -lk
                    };
                    acc += old[l] * coef / ps;
                }
            }
            row[c] = acc;
        }
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }
}

/// `C_n(x)`; `n = 0` delegates to `T_p` with tolerance `(max p)^depth`.
pub fn eval_c(system: &IfSystem, p: &ProbVector, n: &MultiIndex, x: f64, depth: usize) -> Result<CValue> {
    if n.is_zero() {
        let pmax = p.full().iter().cloned().fold(0.0, f64::max);
        let tol = pmax.powi(depth as i32).max(f64::MIN_POSITIVE);
        let t = eval_t(system, p, x, tol)?;
        return Ok(CValue { value: t.value, err: t.err });
    }
    Ok(TakagiEvaluator::new(system, p, n)?.eval(x, depth))
}

/// One level of the Neumann-series computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesLevel {
    pub n: MultiIndex,
    pub grid: GridFunction,
    /// Geometric extrapolation of the truncated terms.
    pub tail_estimate: f64,
    /// Set when the terms did not decay.
    pub inconclusive: bool,
    pub terms: usize,
}

/// `g_n = Σ_i n_i (C_{n−e_i}∘f_i − C_{n−e_i}∘f_{s+1})` on the nodes of the lower levels.
pub fn source_term(system: &IfSystem, n: &MultiIndex, lower: &BTreeMap<MultiIndex, GridFunction>) -> Result<GridFunction> {
    let s = system.s();
    let last = system.branch(s);
    let mut parts = Vec::new();
    for i in 0..s {
        if let Some(m) = n.minus_unit(i) {
            let g = lower
                .get(&m)
                .ok_or_else(|| Error::InvalidArgument(format!("level {m} missing below {n}")))?;
            parts.push((i, n.0[i] as f64, g));
        }
    }
    let nodes = parts
        .first()
        .map(|(_, _, g)| g.nodes.clone())
        .ok_or_else(|| Error::InvalidArgument("source term of the zero index".into()))?;
    let values = nodes
        .par_iter()
        .map(|&x| {
            let mut v = 0.0;
            for (i, ni, g) in &parts {
                v += ni * (g.eval(system.branch(*i).eval(x)) - g.eval(last.eval(x)));
            }
            v
        })
        .collect();
    GridFunction::new(nodes, values, 0.0, 0.0)
}

/// `C_n ≈ Σ_{k<K} M_p^k g_n` given all levels `m < n` already on the same nodes.
pub fn series_level(
    system: &IfSystem,
    p: &ProbVector,
    n: &MultiIndex,
    nodes: &[f64],
    k_terms: usize,
    lower: &BTreeMap<MultiIndex, GridFunction>,
) -> Result<SeriesLevel> {
    if n.is_zero() {
        return Ok(SeriesLevel {
            n: n.clone(),
            grid: t_grid(system, p, nodes, 1e-17)?,
            tail_estimate: 0.0,
            inconclusive: false,
            terms: 0,
        });
    }
    if k_terms < 2 {
        return Err(Error::InvalidArgument("need at least two series terms".into()));
    }
    let g = source_term(system, n, lower)?;
    let mut term = g.clone();
    let mut sum = g;
    let mut norms = vec![term.sup_norm()];
    for _ in 1..k_terms {
        term = apply_m(system, p, &term)?;
        norms.push(term.sup_norm());
        for (v, t) in sum.values.iter_mut().zip(&term.values) {
            *v += t;
        }
    }
    let last = norms[norms.len() - 1];
    let prev = norms[norms.len() - 2];
    let (tail_estimate, inconclusive) = if last == 0.0 {
        (0.0, false)
    } else if prev > 0.0 && last < prev {
        let rho = last / prev;
        (last * rho / (1.0 - rho), false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(SeriesLevel { n: n.clone(), grid: sum, tail_estimate, inconclusive, terms: k_terms })
}

/// All levels `m ≤ n` by ascending `|m|`; the last entry is `C_n`.
pub fn eval_c_series(system: &IfSystem, p: &ProbVector, n: &MultiIndex, nodes: &[f64], k_terms: usize) -> Result<Vec<SeriesLevel>> {
    if n.s() != system.s() {
        return Err(Error::InvalidArgument(format!("multi-index {n} has {} entries, need {}", n.s(), system.s())));
    }
    let index = IndexSet::new(n);
    let mut lower: BTreeMap<MultiIndex, GridFunction> = BTreeMap::new();
    let mut out = Vec::with_capacity(index.len());
    for m in index.items() {
        let level = series_level(system, p, m, nodes, k_terms, &lower)?;
        lower.insert(m.clone(), level.grid.clone());
        out.push(level);
    }
    Ok(out)
}

/// `‖C_n − M_p C_n − g_n‖_∞` on the grid.
pub fn functional_residual(
    system: &IfSystem,
    p: &ProbVector,
    n: &MultiIndex,
    levels: &BTreeMap<MultiIndex, GridFunction>,
) -> Result<f64> {
    let c = levels.get(n).ok_or_else(|| Error::InvalidArgument(format!("level {n} missing")))?;
    let mc = apply_m(system, p, c)?;
    let g = source_term(system, n, levels)?;
    Ok(c.values
        .iter()
        .zip(&mc.values)
        .zip(&g.values)
        .fold(0.0, |m, ((c, mc), g)| m.max((c - mc - g).abs())))
}

/// Central finite-difference stencil of `T_p(x)` in the free coordinates, `|n| ≤ 2`.
pub fn fd_oracle(system: &IfSystem, p: &ProbVector, n: &MultiIndex, x: f64, h: f64) -> Result<f64> {
    if n.s() != p.s() {
        return Err(Error::InvalidArgument(format!("multi-index {n} does not match s = {}", p.s())));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    const TOL: f64 = 1e-18;
    let t_at = |shift: &[(usize, f64)]| -> Result<f64> {
        let mut free = p.free().to_vec();
        for &(k, d) in shift {
            free[k] += d;
        }
        let q = ProbVector::new(&free).map_err(|_| Error::StencilOutOfSimplex)?;
        Ok(eval_t(system, &q, x, TOL)?.value)
    };
    let nz: Vec<(usize, u32)> = n.0.iter().cloned().enumerate().filter(|(_, v)| *v > 0).collect();
    match nz.as_slice() {
        [] => t_at(&[]),
        [(k, 1)] => Ok((t_at(&[(*k, h)])? - t_at(&[(*k, -h)])?) / (2.0 * h)),
        [(k, 2)] => Ok((t_at(&[(*k, h)])? - 2.0 * t_at(&[])? + t_at(&[(*k, -h)])?) / (h * h)),
        [(i, 1), (j, 1)] => {
            let (i, j) = (*i, *j);
            Ok((t_at(&[(i, h), (j, h)])? - t_at(&[(i, h), (j, -h)])? - t_at(&[(i, -h), (j, h)])?
                + t_at(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h))
        }
        _ => Err(Error::InvalidArgument(format!("finite differences support |n| ≤ 2, got {n}"))),
    }
}

/// Classical Takagi partial sum `τ_K(x) = Σ_{j<K} 2^{-j} dist(2^j x, ℤ)`.
pub fn classical_takagi(x: f64, k: usize) -> f64 {
    let mut sum = 0.0;
    let mut scale = 1.0;
    let mut y = x;
    for _ in 0..k {
        let frac = y - y.floor();
        sum += scale * frac.min(1.0 - frac);
        y *= 2.0;
        scale *= 0.5;
    }
    sum
}
