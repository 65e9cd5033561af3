//! The piecewise-linear model `g_i(x) = (x − Σ_{j<i} p_j) / p_i` on `[0, 1]`, the
//! conjugacy `Φ_p = T_p|J` computed through it, and the rigidity dichotomy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_tol, Error, Result};
use crate::ifs::{descend, encode, hull_cylinder, pi_approx, Cursor, IfSystem, ProbVector, Step, Word};
use crate::operator::{seminorm_sweep, SweepPoint, TValue};
use crate::rational::{rat_int, to_f64, Rat};
use crate::thermo::alpha_endpoints;

/// Affine system with slopes `1/p_i` and `O = (0, 1)`, built from the exact weights.
pub fn linear_model(p: &ProbVector) -> Result<IfSystem> {
    let cum = p.exact_cumulative();
    let maps: Vec<_> = p
        .exact()
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let slope = rat_int(1) / pi;
            (slope.clone(), -&cum[i] * slope)
        })
        .collect();
    IfSystem::affine_exact(&maps, (rat_int(0), rat_int(1)))
}

/// Depth at which every cylinder has weight at most `tol`.
fn depth_for(p: &ProbVector, tol: f64) -> usize {
    let pmax = p.full().iter().cloned().fold(0.0, f64::max);
    ((tol.ln() / pmax.ln()).ceil().max(1.0) as usize).min(100_000)
}

/// `Φ_p(x)`: the coding of `x` read as a point of the linear model.
pub fn phi(system: &IfSystem, p: &ProbVector, x: f64, tol: f64) -> Result<TValue> {
    check_tol(tol)?;
    system.check_p(p)?;
    let model = linear_model(p)?;
    phi_with(system, &model, p, x, tol)
}

fn phi_with(system: &IfSystem, model: &IfSystem, p: &ProbVector, x: f64, tol: f64) -> Result<TValue> {
    let (a, b) = system.hull();
    if x.is_nan() || x < a || x > b {
        return Err(Error::NotInHull { x, lo: a, hi: b });
    }
    let mut cur = Cursor::new(system);
    let (mut lo, mut hi) = (a, b);
    for _ in 0..depth_for(p, tol) {
        if x == lo {
            return Ok(TValue { value: hull_cylinder(model, &word_of(&cur)).0, err: 0.0 });
        }
        if x == hi {
            return Ok(TValue { value: hull_cylinder(model, &word_of(&cur)).1, err: 0.0 });
        }
        match descend(&cur, x) {
            Step::Child { symbol, lo: l, hi: h } => {
                cur.push(symbol);
                lo = l;
                hi = h;
            }
            Step::Gap { left } => {
                // A "gap" narrower than float resolution is rounding in the descent.
                if hi - lo > 64.0 * f64::EPSILON * x.abs().max(b - a) {
                    let mut w = word_of(&cur);
                    w.push(left);
                    return Ok(TValue { value: hull_cylinder(model, &w).0, err: 0.0 });
                }
                break;
            }
        }
    }
    let (ml, mh) = hull_cylinder(model, &word_of(&cur));
    Ok(TValue { value: 0.5 * (ml + mh), err: 0.5 * (mh - ml) })
}

fn word_of(cur: &Cursor<'_>) -> Word {
    Word::new(cur.word().to_vec())
}

/// `Φ_p(x)` for a rational point of an affine system, with the coding found exactly.
pub fn phi_exact(system: &IfSystem, p: &ProbVector, x: &Rat, tol: f64) -> Result<TValue> {
    check_tol(tol)?;
    system.check_p(p)?;
    let model = linear_model(p)?;
    phi_exact_with(system, &model, p, x, tol)
}

fn phi_exact_with(system: &IfSystem, model: &IfSystem, p: &ProbVector, x: &Rat, tol: f64) -> Result<TValue> {
    let maps = system
        .exact_maps()
        .ok_or_else(|| Error::Unsupported("exact conjugacy needs affine branches".into()))?;
    let (a, b) = system.exact_hull().cloned().expect("affine systems carry an exact hull");
    if x < &a || x > &b {
        return Err(Error::NotInHull { x: to_f64(x), lo: to_f64(&a), hi: to_f64(&b) });
    }
    let children: Vec<(Rat, Rat)> = maps.iter().map(|m| (m.exact_inverse(&a), m.exact_inverse(&b))).collect();
    let mut w = Word::default();
    let mut y = x.clone();
    for _ in 0..depth_for(p, tol) {
        if y == a {
            return Ok(TValue { value: hull_cylinder(model, &w).0, err: 0.0 });
        }
        if y == b {
            return Ok(TValue { value: hull_cylinder(model, &w).1, err: 0.0 });
        }
        match children.iter().position(|(l, h)| &y >= l && &y <= h) {
            Some(i) => {
                y = maps[i].exact_eval(&y);
                w.push(i);
            }
            None => {
                let left = children.iter().filter(|(_, h)| h < &y).count();
                w.push(left);
                return Ok(TValue { value: hull_cylinder(model, &w).0, err: 0.0 });
            }
        }
    }
    let (ml, mh) = hull_cylinder(model, &w);
    Ok(TValue { value: 0.5 * (ml + mh), err: 0.5 * (mh - ml) })
}

/// Midpoint of the hull cylinder of `w`, exactly.
fn exact_point(system: &IfSystem, w: &Word) -> Option<Rat> {
    let maps = system.exact_maps()?;
    let (mut l, mut r) = system.exact_hull().cloned()?;
    for &i in w.symbols().iter().rev() {
        l = maps[i].exact_inverse(&l);
        r = maps[i].exact_inverse(&r);
    }
    Some((l + r) / rat_int(2))
}

/// Branch of the min-index expanding map `g_p` at `y ∈ [0, 1]`.
pub fn model_map(p: &ProbVector, y: f64) -> f64 {
    let cum = p.cumulative();
    let pf = p.full();
    let i = (0..pf.len()).find(|&i| y <= cum[i + 1]).unwrap_or(pf.len() - 1);
    (y - cum[i]) / pf[i]
}

/// `f(x) = f_i(x)` with the least `i` whose hull cylinder contains `x`.
pub fn system_map(system: &IfSystem, x: f64) -> Result<f64> {
    let w = encode(system, x, 1)?;
    let i = w.word.symbols().first().copied().unwrap_or(0);
    Ok(system.branch(i).eval(x))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    pub used: usize,
    /// Samples within `ε` of a cylinder endpoint of depth ≤ 12.
    pub excluded: usize,
    pub seed: u64,
}

const SAMPLE_WORD_LEN: usize = 64;
const EXCLUSION_DEPTH: usize = 12;
const PHI_TOL: f64 = 1e-13;

/// `max |Φ(f(x)) − g_p(Φ(x))|` over sampled points of `J`. Affine systems use exact
/// sample points and codings, since `Φ` is only `α_-`-Hölder and amplifies rounding in `f(x)`.
pub fn conjugacy_residual(system: &IfSystem, p: &ProbVector, sample_count: usize, seed: u64) -> Result<ResidualReport> {
    system.check_p(p)?;
    system.require_osc()?;
    let model = linear_model(p)?;
    let (a, b) = system.hull();
    let eps = 1e-9 * (b - a);
    let m = system.len();
    let results: Vec<Option<f64>> = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let w = Word::new((0..SAMPLE_WORD_LEN).map(|_| rng.gen_range(0..m)).collect());
            let x = pi_approx(system, &w).point.clamp(a, b);
            for d in 1..=EXCLUSION_DEPTH {
                let (l, r) = hull_cylinder(system, &w.prefix(d));
                if (x - l).abs() < eps || (x - r).abs() < eps {
                    return Ok(None);
                }
            }
            let (lhs, phi_x) = match exact_point(system, &w) {
                Some(xr) => {
                    let i = encode(system, x, 1)?.word.symbols()[0];
                    let fx = system.exact_maps().expect("affine")[i].exact_eval(&xr);
                    (phi_exact_with(system, &model, p, &fx, PHI_TOL)?.value, phi_exact_with(system, &model, p, &xr, PHI_TOL)?.value)
                }
                None => {
                    let fx = system_map(system, x)?.clamp(a, b);
                    (phi_with(system, &model, p, fx, PHI_TOL)?.value, phi_with(system, &model, p, x, PHI_TOL)?.value)
                }
            };
            Ok(Some((lhs - model_map(p, phi_x)).abs()))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = results.iter().flatten().cloned().collect();
    Ok(ResidualReport {
        max_residual: used.iter().cloned().fold(0.0, f64::max),
        mean_residual: if used.is_empty() { 0.0 } else { used.iter().sum::<f64>() / used.len() as f64 },
        used: used.len(),
        excluded: sample_count - used.len(),
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RigidityVerdict {
    Rigid,
    NonRigid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidityReport {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub delta: f64,
    pub max_conjugacy_residual: f64,
    pub verdict: RigidityVerdict,
    /// `V_δ(T_p)` on refining hull grids.
    pub seminorm_sweep: Vec<SweepPoint>,
    /// Last over first value of the sweep.
    pub sweep_growth: f64,
    /// Whether the sweep looks bounded (growth ≤ 1.2), which should match a rigid verdict.
    pub sweep_bounded: bool,
}

pub const SWEEP_LEVELS: [u32; 4] = [6, 9, 12, 15];

pub fn rigidity_report(system: &IfSystem, p: &ProbVector, tol: f64) -> Result<RigidityReport> {
    check_tol(tol)?;
    let ends = alpha_endpoints(system, p)?;
    let residual = conjugacy_residual(system, p, 200, 0)?;
    let verdict = if ends.is_rigid(tol) { RigidityVerdict::Rigid } else { RigidityVerdict::NonRigid };
    let delta = ends.delta.clamp(f64::MIN_POSITIVE, 1.0);
    let sweep = seminorm_sweep(system, p, delta, &SWEEP_LEVELS)?;
    let sweep_growth = sweep.last().map(|l| l.seminorm).unwrap_or(f64::NAN) / sweep[0].seminorm;
    Ok(RigidityReport {
        alpha_minus: ends.alpha_minus,
        alpha_plus: ends.alpha_plus,
        delta: ends.delta,
        max_conjugacy_residual: residual.max_residual,
        verdict,
        seminorm_sweep: sweep,
        sweep_growth,
        sweep_bounded: sweep_growth <= 1.2,
    })
}
