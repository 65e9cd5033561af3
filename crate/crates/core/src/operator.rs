//! The transition operator `M_p h = Σ p_i h∘f_i` on grid functions, the limit
//! state `T_p`, Hölder seminorms in the compactified metric and the
//! spectral-gap probe.

use std::collections::HashMap;

use num::traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_tol, Error, Result};
use crate::ifs::{descend, metric_d, hull_cylinder, Cursor, IfSystem, ProbVector, Step, Word};
use crate::rational::{from_f64_exact, to_f64, Rat};
use crate::stats::linear_fit;

/// Values on strictly increasing nodes, with constants standing for `h(−∞)` and `h(+∞)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::InvalidArgument("grid needs at least two nodes and one value per node".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("grid nodes must be strictly increasing".into()));
        }
        if values.iter().chain([&left, &right]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
        Ok(GridFunction { nodes, values, left, right })
    }

    pub fn from_fn(nodes: &[f64], f: impl Fn(f64) -> f64 + Sync, left: f64, right: f64) -> Result<Self> {
        let values = nodes.par_iter().map(|&x| f(x)).collect();
        Self::new(nodes.to_vec(), values, left, right)
    }

    pub fn constant(nodes: &[f64], c: f64) -> Result<Self> {
        Self::new(nodes.to_vec(), vec![c; nodes.len()], c, c)
    }

    /// Piecewise-linear interpolation; boundary constants beyond the node span.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x < self.nodes[0] {
            return self.left;
        }
        if x > self.nodes[n - 1] {
            return self.right;
        }
        let k = self.nodes.partition_point(|&t| t <= x);
        if k >= n {
            return self.values[n - 1];
        }
        let (x0, x1) = (self.nodes[k - 1], self.nodes[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        if x == x0 {
            return v0;
        }
        v0 + (x - x0) / (x1 - x0) * (v1 - v0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().chain([&self.left, &self.right]).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest jump between neighbouring nodes, the interpolation error bound used throughout.
    pub fn interpolation_bound(&self) -> f64 {
        self.values.windows(2).fold(0.0, |m, w| m.max((w[1] - w[0]).abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map_values(&self, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction {
            nodes: self.nodes.clone(),
            values: self.nodes.iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect(),
            left: self.left,
            right: self.right,
        }
    }
}

/// Uniform nodes: `2^level` cells across the hull of `J` plus `round(margin·2^level)` cells on each side.
pub fn grid_nodes(system: &IfSystem, level: u32, margin: f64) -> Vec<f64> {
    let (a, b) = system.hull();
    let n = 1i64 << level;
    let m = (margin * n as f64).round() as i64;
    let h = (b - a) / n as f64;
    (-m..=n + m).map(|k| a + k as f64 * h).collect()
}

/// Default grid: `2^12 + 1` hull nodes, margin a quarter of the hull.
pub fn default_grid(system: &IfSystem) -> Vec<f64> {
    grid_nodes(system, 12, 0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TValue {
    pub value: f64,
    pub err: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    #[default]
    Float,
    Rational,
}

const MAX_DEPTH_AFFINE: usize = 100_000;
const MAX_DEPTH_CUSTOM: usize = 2_000;

/// `T_p(x)` by descending the coding of `x`, stopping once the remaining cylinder mass is `≤ tol`.
pub fn eval_t(system: &IfSystem, p: &ProbVector, x: f64, tol: f64) -> Result<TValue> {
    check_tol(tol)?;
    system.check_p(p)?;
    system.require_osc()?;
    if x.is_nan() {
        return Err(Error::InvalidArgument("x is NaN".into()));
    }
    let (a, b) = system.hull();
    if x <= a {
        return Ok(TValue { value: 0.0, err: 0.0 });
    }
    if x >= b {
        return Ok(TValue { value: 1.0, err: 0.0 });
    }
    let cum = p.cumulative();
    let pf = p.full();
    let mut cur = Cursor::new(system);
    let (mut acc, mut mass) = (0.0, 1.0);
    let (mut lo, mut hi) = (a, b);
    let cap = if system.is_affine() { MAX_DEPTH_AFFINE } else { MAX_DEPTH_CUSTOM };
    for _ in 0..cap {
        if x == lo {
            return Ok(TValue { value: acc, err: 0.0 });
        }
        if x == hi {
            return Ok(TValue { value: acc + mass, err: 0.0 });
        }
        if mass <= tol {
            return Ok(TValue { value: acc + 0.5 * mass, err: 0.5 * mass });
        }
        match descend(&cur, x) {
            Step::Child { symbol, lo: l, hi: h } => {
                acc += mass * cum[symbol];
                mass *= pf[symbol];
                cur.push(symbol);
                lo = l;
                hi = h;
            }
            Step::Gap { left } => return Ok(TValue { value: acc + mass * cum[left], err: 0.0 }),
        }
    }
    Err(Error::NonConvergence(format!("eval_t: remaining mass {mass:e} above tol {tol:e} after {cap} levels")))
}

const MAX_EXACT_STEPS: usize = 20_000;

/// Exact `T_p(x)` for affine systems: follows the forward orbit and closes eventual cycles.
pub fn eval_t_exact(system: &IfSystem, p: &ProbVector, x: &Rat) -> Result<Rat> {
    system.check_p(p)?;
    system.require_osc()?;
    let maps = system.exact_maps().ok_or_else(|| Error::Unsupported("rational mode needs affine branches".into()))?;
    let (a, b) = system.exact_hull().expect("affine systems carry an exact hull");
    if x <= a {
        return Ok(Rat::zero());
    }
    if x >= b {
        return Ok(Rat::one());
    }
    let pe = p.exact();
    let cum = p.exact_cumulative();
    let pre: Vec<(Rat, Rat)> = maps.iter().map(|m| (m.exact_inverse(a), m.exact_inverse(b))).collect();
    let mut y = x.clone();
    let mut acc = Rat::zero();
    let mut mass = Rat::one();
    let mut seen: HashMap<Rat, (Rat, Rat)> = HashMap::new();
    for _ in 0..MAX_EXACT_STEPS {
        if &y == a {
            return Ok(acc);
        }
        if &y == b {
            return Ok(acc + mass);
        }
        if let Some((s0, p0)) = seen.get(&y) {
            // T(x) = s0 + p0·T(y) = acc + mass·T(y).
            let ty = (&acc - s0) / (p0 - &mass);
            return Ok(s0 + p0 * ty);
        }
        seen.insert(y.clone(), (acc.clone(), mass.clone()));
        match pre.iter().position(|(l, r)| l <= &y && &y <= r) {
            Some(c) => {
                acc += &mass * &cum[c];
                mass *= &pe[c];
                y = maps[c].exact_eval(&y);
            }
            None => {
                let left = pre.iter().filter(|(_, r)| r < &y).count();
                return Ok(acc + mass * &cum[left]);
            }
        }
    }
    Err(Error::NonConvergence(format!("exact orbit did not close within {MAX_EXACT_STEPS} steps")))
}

/// `T_p(x)` in the requested mode; rational mode reads `x` as its exact binary value.
pub fn eval_t_mode(system: &IfSystem, p: &ProbVector, x: f64, tol: f64, mode: NumericMode) -> Result<TValue> {
    match mode {
        NumericMode::Float => eval_t(system, p, x, tol),
        NumericMode::Rational => {
            check_tol(tol)?;
            let v = eval_t_exact(system, p, &from_f64_exact(x)?)?;
            Ok(TValue { value: to_f64(&v), err: 0.0 })
        }
    }
}

/// `T_p` sampled on `nodes` with boundary constants 0 and 1.
pub fn t_grid(system: &IfSystem, p: &ProbVector, nodes: &[f64], tol: f64) -> Result<GridFunction> {
    let values = nodes
        .par_iter()
        .map(|&x| eval_t(system, p, x, tol).map(|t| t.value))
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(nodes.to_vec(), values, 0.0, 1.0)
}

/// `M_p h`, written as `h∘f_{s+1} + Σ_{i≤s} p_i (h∘f_i − h∘f_{s+1})` so constants are preserved exactly.
pub fn apply_m(system: &IfSystem, p: &ProbVector, h: &GridFunction) -> Result<GridFunction> {
    system.check_p(p)?;
    let pf = p.full();
    let s = system.s();
    let last = system.branch(s);
    let values = h
        .nodes
        .par_iter()
        .map(|&x| {
            let base = h.eval(last.eval(x));
            let mut acc = 0.0;
            for (i, &pi) in pf.iter().enumerate().take(s) {
                acc += pi * (h.eval(system.branch(i).eval(x)) - base);
            }
            base + acc
        })
        .collect();
    Ok(GridFunction { nodes: h.nodes.clone(), values, left: h.left, right: h.right })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceDiagnostics {
    /// `‖M^n h0 − limit‖_∞` for `n = 0..=n_max`.
    pub residuals: Vec<f64>,
    /// Fitted contraction factor per step.
    pub rate: f64,
    pub r_squared: f64,
    /// Smallest residual observed, the interpolation-limited floor.
    pub floor: f64,
    /// Largest jump of the limit between neighbouring nodes; residuals below it are not fitted.
    pub resolution: f64,
    /// Half-open range of `n` used for the fit.
    pub fit_range: (usize, usize),
    pub diverging: bool,
}

/// Iterates `M_p` from `h0` and compares with the predicted limit `(h(∞) − h(−∞))T_p + h(−∞)`.
pub fn iterate_m(system: &IfSystem, p: &ProbVector, h0: &GridFunction, n_max: usize) -> Result<ConvergenceDiagnostics> {
    let t = t_grid(system, p, &h0.nodes, 1e-16)?;
    let limit = t.map_values(|_, v| (h0.right - h0.left) * v + h0.left);
    let mut h = h0.clone();
    let mut residuals = vec![h.sup_distance(&limit)];
    for _ in 0..n_max {
        h = apply_m(system, p, &h)?;
        residuals.push(h.sup_distance(&limit));
    }
    let floor = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = h0.left.abs().max(h0.right.abs()).max(h0.sup_norm()).max(1.0);
    // Below the grid resolution of the limit the residual is interpolation-limited.
    let resolution = limit.interpolation_bound();
    let cutoff = (8.0 * floor).max(resolution).max(64.0 * f64::EPSILON * scale);
    let end = residuals.iter().position(|&r| r <= cutoff).unwrap_or(residuals.len());
    let (rate, r_squared) = if end >= 3 {
        let xs: Vec<f64> = (0..end).map(|n| n as f64).collect();
        let ys: Vec<f64> = residuals[..end].iter().map(|r| r.ln()).collect();
        let fit = linear_fit(&xs, &ys);
        (fit.slope.exp(), fit.r_squared)
    } else {
        (f64::NAN, f64::NAN)
    };
    let diverging = residuals.len() > 1 && residuals[residuals.len() - 1] > residuals[0] * (1.0 + 1e-9) + cutoff;
    Ok(ConvergenceDiagnostics { residuals, rate, r_squared, floor, resolution, fit_range: (0, end), diverging })
}

/// `V_α(M^n h0)` (dyadic-gap mode) for `n = 0..=n_max`.
pub fn iterate_seminorms(system: &IfSystem, p: &ProbVector, h0: &GridFunction, n_max: usize, alpha: f64) -> Result<Vec<f64>> {
    let mut h = h0.clone();
    let mut out = vec![holder_seminorm(&h, alpha, SeminormMode::Dyadic)?];
    for _ in 0..n_max {
        h = apply_m(system, p, &h)?;
        out.push(holder_seminorm(&h, alpha, SeminormMode::Dyadic)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeminormMode {
    /// All node pairs, `O(N²)`.
    #[default]
    Exact,
    /// Pairs at index gaps `2^k`, a lower bound in `O(N log N)`.
    Dyadic,
}

/// `V_α(h) = sup |h(x) − h(y)| / d(x, y)^α` over node pairs, the points `±∞` included.
pub fn holder_seminorm(h: &GridFunction, alpha: f64, mode: SeminormMode) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1]")));
    }
    let mut xs = Vec::with_capacity(h.nodes.len() + 2);
    let mut vs = Vec::with_capacity(h.nodes.len() + 2);
    xs.push(f64::NEG_INFINITY);
    vs.push(h.left);
    xs.extend_from_slice(&h.nodes);
    vs.extend_from_slice(&h.values);
    xs.push(f64::INFINITY);
    vs.push(h.right);
    Ok(seminorm_on(&xs, &vs, alpha, mode))
}

#[inline]
fn ratio(dv: f64, d: f64, alpha: f64) -> f64 {
    if dv == 0.0 || d <= 0.0 {
        0.0
    } else if alpha == 1.0 {
        dv / d
    } else {
        dv / d.powf(alpha)
    }
}

/// Seminorm over sorted points `xs` (possibly `±∞`) with values `vs`.
fn seminorm_on(xs: &[f64], vs: &[f64], alpha: f64, mode: SeminormMode) -> f64 {
    let n = xs.len();
    let pair = |i: usize, j: usize| ratio((vs[j] - vs[i]).abs(), metric_d(xs[i], xs[j]), alpha);
    match mode {
        SeminormMode::Exact => (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).fold(0.0f64, |m, j| m.max(pair(i, j))))
            .reduce(|| 0.0, f64::max),
        SeminormMode::Dyadic => {
            let mut gaps = vec![];
            let mut g = 1;
            while g < n {
                gaps.push(g);
                g *= 2;
            }
            gaps.par_iter()
                .map(|&g| (0..n - g).fold(0.0f64, |m, i| m.max(pair(i, i + g))))
                .reduce(|| 0.0, f64::max)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapProbeReport {
    pub alpha: f64,
    /// `V_α(M^n φ₀) + ‖M^n φ₀‖_∞` for `n = 1..=n_max`.
    pub norms: Vec<f64>,
    /// Slope of `log norm` against `n` over the second half of the run.
    pub slope: f64,
    pub slope_stderr: f64,
    pub verdict: Verdict,
    pub points: usize,
}

/// Smooth ramp across the hull: 0 at `min J`, 1 at `max J`.
pub fn ramp(system: &IfSystem, y: f64) -> f64 {
    let (a, b) = system.hull();
    if y <= a {
        0.0
    } else if y >= b {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (y - a) / (b - a)).cos())
    }
}

/// `M^n φ₀(x)` for `n = 1..=n_max` in one descent. Because `φ₀` is supported on the
/// hull, only the coding cylinder of `x` contributes beyond the masses to its left.
pub fn iterate_ramp_at(system: &IfSystem, p: &ProbVector, x: f64, n_max: usize) -> Vec<f64> {
    let (a, b) = system.hull();
    if x <= a {
        return vec![0.0; n_max];
    }
    if x >= b {
        return vec![1.0; n_max];
    }
    let cum = p.cumulative();
    let pf = p.full();
    let mut out = Vec::with_capacity(n_max);
    let mut cur = Cursor::new(system);
    let (mut acc, mut mass) = (0.0, 1.0);
    let mut done: Option<f64> = None;
    for _ in 0..n_max {
        if let Some(v) = done {
            out.push(v);
            continue;
        }
        match descend(&cur, x) {
            Step::Child { symbol, lo, hi } => {
                acc += mass * cum[symbol];
                mass *= pf[symbol];
                cur.push(symbol);
                let y = pull_back(&cur, x, lo, hi, (a, b));
                out.push(acc + mass * ramp(system, y));
            }
            Step::Gap { left } => {
                let v = acc + mass * cum[left];
                done = Some(v);
                out.push(v);
            }
        }
    }
    out
}

/// Solves `G(y) = x` for the current cylinder map `G`, i.e. `y = f_ω(x)`, without forward iteration.
fn pull_back(cur: &Cursor<'_>, x: f64, lo: f64, hi: f64, (a, b): (f64, f64)) -> f64 {
    if x <= lo {
        return a;
    }
    if x >= hi {
        return b;
    }
    if cur.is_affine() {
        return a + (x - lo) / (hi - lo) * (b - a);
    }
    let (mut l, mut r) = (a, b);
    for _ in 0..80 {
        let m = 0.5 * (l + r);
        if cur.map(m) <= x {
            l = m;
        } else {
            r = m;
        }
    }
    0.5 * (l + r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapProbeOptions {
    /// Hull grid has `2^grid_level + 1` nodes.
    pub grid_level: u32,
}

impl Default for GapProbeOptions {
    fn default() -> Self {
        GapProbeOptions { grid_level: 13 }
    }
}

/// Tracks `V_α(M^n φ₀) + sup` for `n ≤ n_max` and classifies its growth.
pub fn gap_probe(system: &IfSystem, p: &ProbVector, alpha: f64, n_max: usize, opts: GapProbeOptions) -> Result<GapProbeReport> {
    system.check_p(p)?;
    system.require_osc()?;
    if n_max < 4 {
        return Err(Error::InvalidArgument("gap_probe needs n_max ≥ 4".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1]")));
    }
    let mut pts = grid_nodes(system, opts.grid_level, 0.0);
    for i in 0..system.len() {
        for k in 1..=n_max {
            let (l, r) = hull_cylinder(system, &Word::repeat(i, k));
            pts.push(l);
            pts.push(r);
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let columns: Vec<Vec<f64>> = pts.par_iter().map(|&x| iterate_ramp_at(system, p, x, n_max)).collect();
    let mut xs = vec![f64::NEG_INFINITY];
    xs.extend_from_slice(&pts);
    xs.push(f64::INFINITY);
    let norms: Vec<f64> = (0..n_max)
        .map(|n| {
            let mut vs = vec![0.0];
            vs.extend(columns.iter().map(|c| c[n]));
            vs.push(1.0);
            let sup = vs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            seminorm_on(&xs, &vs, alpha, SeminormMode::Dyadic) + sup
        })
        .collect();
    let start = n_max / 2;
    let xs: Vec<f64> = (start..n_max).map(|n| (n + 1) as f64).collect();
    let ys: Vec<f64> = norms[start..].iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let verdict = if fit.slope > 5e-3 && fit.slope - 2.0 * fit.slope_stderr > 0.0 {
        Verdict::Growing
    } else if fit.slope < 1e-3 {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    Ok(GapProbeReport { alpha, norms, slope: fit.slope, slope_stderr: fit.slope_stderr, verdict, points: pts.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub level: u32,
    pub seminorm: f64,
}

/// `V_α(T_p)` (dyadic-gap mode) on hull grids with `2^level + 1` nodes for each level.
pub fn seminorm_sweep(system: &IfSystem, p: &ProbVector, alpha: f64, levels: &[u32]) -> Result<Vec<SweepPoint>> {
    levels
        .iter()
        .map(|&level| {
            let t = t_grid(system, p, &grid_nodes(system, level, 0.0), 1e-17)?;
            Ok(SweepPoint { level, seminorm: holder_seminorm(&t, alpha, SeminormMode::Dyadic)? })
        })
        .collect()
}
