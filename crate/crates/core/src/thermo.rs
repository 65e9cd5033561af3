//! Pressure, the implicit curve `t(β)` with `P(tφ + βψ) = 0`, Gibbs weights,
//! the exponent endpoints `α_±`, `α₀`, `δ` and the Legendre spectrum.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_tol, Error, Result};
use crate::ifs::{cylinder, IfSystem, ProbVector, Word};

/// Cylinder depth used for non-affine systems.
pub const DEFAULT_LEVEL: usize = 10;
/// Largest depth of the cylinder sandwich.
pub const MAX_LEVEL: usize = 18;
/// Upper limit on the number of cylinders enumerated.
const MAX_WORDS: usize = 1 << 20;

const SURROGATE_BETA: f64 = 50.0;
const SURROGATE_CHECK_BETA: f64 = 100.0;
const SURROGATE_AGREEMENT: f64 = 1e-6;
const LEGENDRE_BRACKET: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PressureBounds {
    pub lower: f64,
    pub upper: f64,
}

impl PressureBounds {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Per-cylinder ergodic sums: `l = S_nψ`, `a = −S_nφ = log |(f_ω)'|`, normalized by `n`.
#[derive(Clone, Debug, PartialEq)]
struct SumTable {
    l: Vec<f64>,
    a: Vec<f64>,
    n: f64,
}

fn effective_level(system: &IfSystem, level: usize) -> usize {
    let per = (MAX_WORDS as f64).ln() / (system.len() as f64).ln();
    level.clamp(1, MAX_LEVEL).min(per.floor() as usize).max(1)
}

/// Sums over all cylinders of length `level`; `samples` points per cylinder, `(min, max)` of `log |(f_ω)'|`.
fn cylinder_sums(system: &IfSystem, p: &ProbVector, level: usize, samples: usize) -> Vec<(f64, f64, f64)> {
    let m = system.len();
    let total = m.pow(level as u32);
    (0..total)
        .into_par_iter()
        .map(|code| {
            let mut sym = vec![0usize; level];
            let mut c = code;
            for k in (0..level).rev() {
                sym[k] = c % m;
                c /= m;
            }
            let w = Word::new(sym);
            let l: f64 = w.symbols().iter().map(|&i| p.full()[i].ln()).sum();
            let (lo, hi) = cylinder(system, &w);
            let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..samples {
                let mut x = if samples == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * j as f64 / (samples - 1) as f64 };
                let mut a = 0.0;
                for &i in w.symbols() {
                    let b = system.branch(i);
                    a += b.deriv(x).ln();
                    x = b.eval(x);
                }
                amin = amin.min(a);
                amax = amax.max(a);
            }
            (l, amin, amax)
        })
        .collect()
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P(tφ + βψ)`. Affine branches give `log Σ p_i^β a_i^{−t}` exactly; otherwise
/// the cylinder sandwich at depth `level`.
pub fn pressure(system: &IfSystem, p: &ProbVector, t: f64, beta: f64, level: usize) -> Result<PressureBounds> {
    system.check_p(p)?;
    if let Some(slopes) = system.slopes() {
        let v = log_sum_exp(p.full().iter().zip(&slopes).map(|(pi, a)| beta * pi.ln() - t * a.ln()));
        return Ok(PressureBounds { lower: v, upper: v });
    }
    let n = effective_level(system, level);
    let sums = cylinder_sums(system, p, n, 5);
    // φ = −log f' enters with weight t: the inf of S_n(tφ+βψ) uses amax when t > 0.
    let lo = log_sum_exp(sums.iter().map(|&(l, amin, amax)| beta * l - t * if t >= 0.0 { amax } else { amin }));
    let hi = log_sum_exp(sums.iter().map(|&(l, amin, amax)| beta * l - t * if t >= 0.0 { amin } else { amax }));
    Ok(PressureBounds { lower: lo / n as f64, upper: hi / n as f64 })
}

/// Point on the curve `t(β)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub t: f64,
    pub t_prime: f64,
    pub t_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gibbs {
    /// Bernoulli weights for affine systems; weights of the length-`level` cylinders otherwise.
    pub weights: Vec<f64>,
    pub t: f64,
    /// `t'(β)`; `−t'(β)` lies in `[α_-, α_+]`.
    pub t_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Endpoints {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub alpha_zero: f64,
    pub delta: f64,
    /// `−t'(50)`, `−t'(100)`.
    pub surrogate_minus: (f64, f64),
    /// `−t'(−50)`, `−t'(−100)`.
    pub surrogate_plus: (f64, f64),
    /// Interval for `α_-` when the surrogate did not settle; equal ends otherwise.
    pub alpha_minus_interval: (f64, f64),
    pub alpha_plus_interval: (f64, f64),
    /// Endpoints taken from the per-symbol ratios.
    pub closed_form: bool,
}

impl Endpoints {
    pub fn is_rigid(&self, tol: f64) -> bool {
        self.alpha_plus - self.alpha_minus <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub g: f64,
    pub beta_argmin: f64,
}

/// Spectrum value at a requested `α`; outside `[α_-, α_+]` the level set is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumEntry {
    Point(SpectrumPoint),
    Empty { alpha: f64 },
}

impl SpectrumEntry {
    pub fn point(&self) -> Option<&SpectrumPoint> {
        match self {
            SpectrumEntry::Point(p) => Some(p),
            SpectrumEntry::Empty { .. } => None,
        }
    }
}

/// The curve `t(β)` for a fixed `(system, p)`.
#[derive(Clone, Debug)]
pub struct PressureCurve {
    table: SumTable,
    /// `log(1/p_i) / log a_i` for affine systems.
    ratios: Option<Vec<f64>>,
    level: usize,
}

impl PressureCurve {
    pub fn new(system: &IfSystem, p: &ProbVector) -> Result<Self> {
        Self::with_level(system, p, DEFAULT_LEVEL)
    }

    /// `level` is the cylinder depth used when some branch is not affine.
    pub fn with_level(system: &IfSystem, p: &ProbVector, level: usize) -> Result<Self> {
        system.check_p(p)?;
        if let Some(slopes) = system.slopes() {
            let l: Vec<f64> = p.full().iter().map(|v| v.ln()).collect();
            let a: Vec<f64> = slopes.iter().map(|v| v.ln()).collect();
            let ratios = l.iter().zip(&a).map(|(l, a)| -l / a).collect();
            return Ok(PressureCurve { table: SumTable { l, a, n: 1.0 }, ratios: Some(ratios), level: 1 });
        }
        let n = effective_level(system, level);
        let sums = cylinder_sums(system, p, n, 1);
        let table = SumTable {
            l: sums.iter().map(|s| s.0).collect(),
            a: sums.iter().map(|s| s.1).collect(),
            n: n as f64,
        };
        Ok(PressureCurve { table, ratios: None, level: n })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn log_sum(&self, t: f64, beta: f64) -> f64 {
        log_sum_exp(self.table.l.iter().zip(&self.table.a).map(|(l, a)| beta * l - t * a))
    }

    /// Normalized weights `q ∝ exp(βl − ta)`.
    fn weights(&self, t: f64, beta: f64) -> Vec<f64> {
        let e: Vec<f64> = self.table.l.iter().zip(&self.table.a).map(|(l, a)| beta * l - t * a).collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Solves `P(tφ + βψ) = 0` to `|P| ≤ tol` by safeguarded Newton on an expanding bracket.
    pub fn solve(&self, beta: f64, tol: f64) -> Result<f64> {
        check_tol(tol)?;
        if !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta = {beta}")));
        }
        let f = |t: f64| self.log_sum(t, beta) / self.table.n;
        let (mut lo, mut hi) = (-10.0, 10.0);
        let mut doublings = 0;
        while !(f(lo) >= 0.0 && f(hi) <= 0.0) {
            if doublings == 60 {
                return Err(Error::BracketFailure(format!("no sign change of the pressure for beta = {beta}")));
            }
            lo *= 2.0;
            hi *= 2.0;
            doublings += 1;
        }
        let mut t = if f(0.0) == 0.0 { 0.0 } else { 0.5 * (lo + hi) };
        for _ in 0..400 {
            let v = f(t);
            if v == 0.0 {
                return Ok(t);
            }
            if v > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let step = self.newton_step(t, beta, v);
            if v.abs() <= tol && step.abs() <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
                return Ok(t);
            }
            let next = t - step;
            let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if next == t || hi - lo <= f64::EPSILON * (1.0 + t.abs()) {
                return if v.abs() <= tol {
                    Ok(t)
                } else {
                    Err(Error::NonConvergence(format!("pressure root for beta = {beta} stalled at P = {v}")))
                };
            }
            t = next;
        }
        Err(Error::NonConvergence(format!("pressure root for beta = {beta}")))
    }

    /// `v / ∂_t P` at `t`.
    fn newton_step(&self, t: f64, beta: f64, v: f64) -> f64 {
        let q = self.weights(t, beta);
        let ea: f64 = q.iter().zip(&self.table.a).map(|(q, a)| q * a).sum::<f64>() / self.table.n;
        -v / ea
    }

    pub fn t(&self, beta: f64) -> Result<f64> {
        self.solve(beta, 1e-13 * (1.0 + beta.abs()))
    }

    /// `t`, `t'` and `t''` at `β`.
    pub fn point(&self, beta: f64) -> Result<CurvePoint> {
        let t = self.t(beta)?;
        let q = self.weights(t, beta);
        let el: f64 = q.iter().zip(&self.table.l).map(|(q, l)| q * l).sum();
        let ea: f64 = q.iter().zip(&self.table.a).map(|(q, a)| q * a).sum();
        let t_prime = el / ea;
        let var: f64 = q
            .iter()
            .zip(self.table.l.iter().zip(&self.table.a))
            .map(|(q, (l, a))| {
                let d = l - t_prime * a - (el - t_prime * ea);
                q * d * d
            })
            .sum();
        Ok(CurvePoint { beta, t, t_prime, t_second: var / ea / self.table.n })
    }

    pub fn gibbs(&self, beta: f64) -> Result<Gibbs> {
        let pt = self.point(beta)?;
        Ok(Gibbs { weights: self.weights(pt.t, beta), t: pt.t, t_prime: pt.t_prime })
    }

    pub fn samples(&self, betas: &[f64]) -> Result<Vec<CurvePoint>> {
        betas.par_iter().map(|&b| self.point(b)).collect()
    }

    pub fn endpoints(&self) -> Result<Endpoints> {
        let alpha_at = |b: f64| -> Result<f64> { Ok(-self.point(b)?.t_prime) };
        let surrogate_minus = (alpha_at(SURROGATE_BETA)?, alpha_at(SURROGATE_CHECK_BETA)?);
        let surrogate_plus = (alpha_at(-SURROGATE_BETA)?, alpha_at(-SURROGATE_CHECK_BETA)?);
        let zero = self.point(0.0)?;
        let interval = |(a, b): (f64, f64)| if (a - b).abs() <= SURROGATE_AGREEMENT { (b, b) } else { (a.min(b), a.max(b)) };
        let (alpha_minus, alpha_plus, closed_form) = match &self.ratios {
            Some(r) => (
                r.iter().cloned().fold(f64::INFINITY, f64::min),
                r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                true,
            ),
            None => (surrogate_minus.1, surrogate_plus.1, false),
        };
        let (alpha_minus_interval, alpha_plus_interval) = if closed_form {
            ((alpha_minus, alpha_minus), (alpha_plus, alpha_plus))
        } else {
            (interval(surrogate_minus), interval(surrogate_plus))
        };
        Ok(Endpoints {
            alpha_minus,
            alpha_plus,
            alpha_zero: -zero.t_prime,
            delta: zero.t,
            surrogate_minus,
            surrogate_plus,
            alpha_minus_interval,
            alpha_plus_interval,
            closed_form,
        })
    }

    /// `g(α) = inf_β t(β) + βα`.
    pub fn spectrum_point(&self, alpha: f64, ends: &Endpoints, tol: f64) -> Result<SpectrumPoint> {
        check_tol(tol)?;
        let (lo, hi) = (ends.alpha_minus, ends.alpha_plus);
        if !(alpha >= lo - tol && alpha <= hi + tol) {
            return Err(Error::AlphaOutOfRange { alpha, lo, hi });
        }
        if ends.is_rigid(tol) {
            return Ok(SpectrumPoint { alpha, g: ends.delta, beta_argmin: 0.0 });
        }
        let objective = |b: f64| -> Result<f64> { Ok(self.t(b)? + b * alpha) };
        // h(β) = t'(β) + α is nondecreasing; its root is the minimizer.
        let h = |b: f64| -> Result<f64> { Ok(self.point(b)?.t_prime + alpha) };
        let (mut blo, mut bhi) = (-LEGENDRE_BRACKET, LEGENDRE_BRACKET);
        let (mut hlo, mut hhi) = (h(blo)?, h(bhi)?);
        for _ in 0..4 {
            if hlo <= 0.0 {
                break;
            }
            blo *= 2.0;
            hlo = h(blo)?;
        }
        for _ in 0..4 {
            if hhi >= 0.0 {
                break;
            }
            bhi *= 2.0;
            hhi = h(bhi)?;
        }
        if hlo > 0.0 {
            return Ok(SpectrumPoint { alpha, g: objective(blo)?, beta_argmin: blo });
        }
        if hhi < 0.0 {
            return Ok(SpectrumPoint { alpha, g: objective(bhi)?, beta_argmin: bhi });
        }
        let mut b = 0.0f64.clamp(blo, bhi);
        for _ in 0..200 {
            let pt = self.point(b)?;
            let v = pt.t_prime + alpha;
            if v == 0.0 {
                break;
            }
            if v < 0.0 {
                blo = b;
            } else {
                bhi = b;
            }
            let newton = if pt.t_second > 0.0 { b - v / pt.t_second } else { f64::NAN };
            let next = if newton > blo && newton < bhi { newton } else { 0.5 * (blo + bhi) };
            if (next - b).abs() <= 1e-14 * (1.0 + b.abs()) || bhi - blo <= 1e-14 * (1.0 + b.abs()) {
                b = next;
                break;
            }
            b = next;
        }
        if !b.is_finite() {
            b = golden_section(|x| objective(x).unwrap_or(f64::INFINITY), blo, bhi, 1e-12);
        }
        Ok(SpectrumPoint { alpha, g: objective(b)?, beta_argmin: b })
    }

    /// Spectrum on a grid; entries outside `[α_-, α_+]` are `Empty`.
    pub fn spectrum(&self, alphas: &[f64], tol: f64) -> Result<Vec<SpectrumEntry>> {
        let ends = self.endpoints()?;
        alphas
            .par_iter()
            .map(|&a| {
                if ends.is_rigid(tol) && (a - ends.alpha_minus).abs() > tol {
                    return Ok(SpectrumEntry::Empty { alpha: a });
                }
                match self.spectrum_point(a, &ends, tol) {
                    Ok(p) => Ok(SpectrumEntry::Point(p)),
                    Err(Error::AlphaOutOfRange { .. }) => Ok(SpectrumEntry::Empty { alpha: a }),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

/// Golden-section minimization on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `t(β)` with `|P| ≤ tol`.
pub fn solve_t(system: &IfSystem, p: &ProbVector, beta: f64, tol: f64) -> Result<f64> {
    PressureCurve::new(system, p)?.solve(beta, tol)
}

pub fn gibbs(system: &IfSystem, p: &ProbVector, beta: f64) -> Result<Gibbs> {
    PressureCurve::new(system, p)?.gibbs(beta)
}

pub fn alpha_endpoints(system: &IfSystem, p: &ProbVector) -> Result<Endpoints> {
    PressureCurve::new(system, p)?.endpoints()
}

pub fn spectrum(system: &IfSystem, p: &ProbVector, alphas: &[f64]) -> Result<Vec<SpectrumEntry>> {
    PressureCurve::new(system, p)?.spectrum(alphas, 1e-12)
}
