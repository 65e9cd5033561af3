//! Pointwise Hölder exponents: the dynamical ratio `S_nψ / S_nφ`, oscillation
//! scaling, Gibbs-typical sampling and the spectrum experiment.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{pi_approx, IfSystem, ProbVector, Word};
use crate::operator::eval_t;
use crate::rational::{ln_abs, Rat};
use crate::stats::{linear_fit, mean_std};
use crate::takagi::{MultiIndex, TakagiEvaluator};
use crate::thermo::PressureCurve;

/// Ratio sequence along a word.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentTrace {
    /// `r_k = S_kψ / S_kφ` for `k = 1..=n`.
    pub ratios: Vec<f64>,
    /// Minimum of `r_k` over `k ∈ [n/2, n]`.
    pub liminf: f64,
    /// `δ_k = d(f_{ω|k}(x), ∂O)` for `k = 0..n`.
    pub boundary_distances: Vec<f64>,
}

impl ExponentTrace {
    pub fn last(&self) -> f64 {
        *self.ratios.last().expect("trace is nonempty")
    }
}

/// Window minimum used as the liminf estimate.
pub fn window_liminf(ratios: &[f64]) -> f64 {
    let n = ratios.len();
    ratios[(n / 2).saturating_sub(1).min(n - 1)..].iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Dynamical exponent trace of `x = π(ω)`.
pub fn dyn_exponent(system: &IfSystem, p: &ProbVector, w: &Word) -> Result<ExponentTrace> {
    system.check_p(p)?;
    let n = w.len();
    if n < 2 {
        return Err(Error::InvalidArgument("dyn_exponent needs |ω| ≥ 2".into()));
    }
    // Backward orbit: x_k ≈ π(σ^k ω), pulled back from the middle of O.
    let (olo, ohi) = system.open_set();
    let mut xs = vec![0.0; n + 1];
    xs[n] = 0.5 * (olo + ohi);
    for k in (0..n).rev() {
        xs[k] = system.branch(w.symbols()[k]).inverse(xs[k + 1]);
    }
    let boundary_distances = xs[..n].iter().map(|&x| (x - olo).min(ohi - x)).collect();
    let mut ratios = Vec::with_capacity(n);
    let (mut s_psi, mut s_phi) = (0.0, 0.0);
    for k in 0..n {
        let i = w.symbols()[k];
        s_psi += p.full()[i].ln();
        let b = system.branch(i);
        s_phi -= match b.as_affine() {
            Some(m) => m.slope.ln(),
            None => b.deriv(xs[k]).ln(),
        };
        ratios.push(s_psi / s_phi);
    }
    Ok(ExponentTrace { liminf: window_liminf(&ratios), ratios, boundary_distances })
}

fn exact_products(system: &IfSystem, p: &ProbVector, w: &Word) -> Result<Vec<(Rat, Rat)>> {
    let maps = system
        .exact_maps()
        .ok_or_else(|| Error::Unsupported("exact ratios need affine branches".into()))?;
    let mut prod_p = Rat::from_integer(1.into());
    let mut prod_a = Rat::from_integer(1.into());
    let mut out = Vec::with_capacity(w.len());
    for &i in w.symbols() {
        prod_p *= &p.exact()[i];
        prod_a *= &maps[i].exact_slope;
        out.push((prod_p.clone(), prod_a.clone()));
    }
    Ok(out)
}

/// `r_k = −log(p_{ω|k}) / log(a_{ω|k})` from exact rational products.
pub fn dyn_exponent_exact(system: &IfSystem, p: &ProbVector, w: &Word) -> Result<Vec<f64>> {
    system.check_p(p)?;
    Ok(exact_products(system, p, w)?.iter().map(|(pp, aa)| -ln_abs(pp) / ln_abs(aa)).collect())
}

/// Exponent of the periodic point with the given cycle.
pub fn cycle_ratio(system: &IfSystem, p: &ProbVector, cycle: &Word) -> Result<f64> {
    if cycle.is_empty() {
        return Err(Error::InvalidArgument("empty cycle".into()));
    }
    Ok(*dyn_exponent_exact(system, p, cycle)?.last().expect("nonempty"))
}

/// Offsets probed inside `B(x, r)`: `±r·0.8^j`, `j = 0..16`, and the centre.
pub fn ball_cloud(r: f64) -> Vec<f64> {
    let mut v = vec![0.0];
    let mut o = r;
    for _ in 0..16 {
        v.push(o);
        v.push(-o);
        o *= 0.8;
    }
    v
}

/// `r0, r0·q, r0·q², …`.
pub fn geometric_scales(r0: f64, q: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 * q.powi(k as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalExponent {
    /// Least-squares slope of `log osc` against `log r`.
    pub slope: f64,
    pub r_squared: f64,
    /// `min_r log osc(r) / log r` over the retained scales below 1.
    pub min_ratio: f64,
    /// Retained `(r, osc(r))`.
    pub used: Vec<(f64, f64)>,
    /// Scales whose oscillation was below the evaluator error floor.
    pub dropped: Vec<f64>,
}

/// Oscillation scaling of `f` at `x`.
pub fn emp_exponent(f: impl Fn(f64) -> f64 + Sync, x: f64, scales: &[f64], err_floor: f64) -> Result<EmpiricalExponent> {
    if scales.len() < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 scales, got {}", scales.len())));
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) || scales.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive and decreasing".into()));
    }
    let centre = f(x);
    let osc: Vec<f64> = scales
        .par_iter()
        .map(|&r| ball_cloud(r).iter().map(|o| (f(x + o) - centre).abs()).fold(0.0, f64::max))
        .collect();
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for (&r, &o) in scales.iter().zip(&osc) {
        if o > 10.0 * err_floor && o > 0.0 {
            used.push((r, o));
        } else {
            dropped.push(r);
        }
    }
    if used.len() < 3 {
        return Err(Error::NonConvergence(format!(
            "only {} scales above the error floor {err_floor:e}",
            used.len()
        )));
    }
    let lx: Vec<f64> = used.iter().map(|(r, _)| r.ln()).collect();
    let ly: Vec<f64> = used.iter().map(|(_, o)| o.ln()).collect();
    let fit = linear_fit(&lx, &ly);
    let min_ratio = used
        .iter()
        .filter(|(r, _)| *r < 1.0)
        .map(|(r, o)| o.ln() / r.ln())
        .fold(f64::INFINITY, f64::min);
    Ok(EmpiricalExponent { slope: fit.slope, r_squared: fit.r_squared, min_ratio, used, dropped })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypicalSample {
    pub x: f64,
    pub predicted_alpha: f64,
    /// `S_nψ / S_nφ` of the sampled word.
    pub ratio: f64,
    /// Window liminf of the sampled word's trace.
    pub liminf: f64,
}

fn sample_words(weights: &[f64], word_len: usize, count: usize, seed: u64) -> Result<Vec<Word>> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(format!("Gibbs weights: {e}")))?;
    Ok((0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            Word::new((0..word_len).map(|_| dist.sample(&mut rng)).collect())
        })
        .collect())
}

/// Points drawn from the Bernoulli Gibbs measure at `β`; deterministic in `seed`.
pub fn sample_typical(
    system: &IfSystem,
    p: &ProbVector,
    beta: f64,
    word_len: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TypicalSample>> {
    if !system.is_affine() {
        return Err(Error::Unsupported("typical sampling needs affine branches".into()));
    }
    if word_len < 2 || count == 0 {
        return Err(Error::InvalidArgument("need word_len ≥ 2 and count ≥ 1".into()));
    }
    let gibbs = PressureCurve::new(system, p)?.gibbs(beta)?;
    let predicted_alpha = -gibbs.t_prime;
    let words = sample_words(&gibbs.weights, word_len, count, seed)?;
    words
        .par_iter()
        .map(|w| {
            let trace = dyn_exponent(system, p, w)?;
            Ok(TypicalSample { x: pi_approx(system, w).point, predicted_alpha, ratio: trace.last(), liminf: trace.liminf })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalConfig {
    /// Which `C_n`; the zero index means `T_p`.
    pub n: MultiIndex,
    pub scales: Vec<f64>,
    pub depth: usize,
    /// How many of the sampled points get an empirical estimate.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub word_len: usize,
    pub count: usize,
    pub seed: u64,
    pub empirical: Option<EmpiricalConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { word_len: 2000, count: 200, seed: 0, empirical: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub beta: f64,
    pub alpha_pred: f64,
    pub g: f64,
    pub dyn_mean: f64,
    pub dyn_sigma: f64,
    pub emp_mean: Option<f64>,
    pub emp_sigma: Option<f64>,
    pub count: usize,
    pub seed: u64,
}

/// One row per `β`: prediction, spectrum value and measured exponents at typical points.
pub fn spectrum_experiment(system: &IfSystem, p: &ProbVector, betas: &[f64], config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let curve = PressureCurve::new(system, p)?;
    let ends = curve.endpoints()?;
    let evaluator = match &config.empirical {
        Some(e) if !e.n.is_zero() => Some(TakagiEvaluator::new(system, p, &e.n)?),
        _ => None,
    };
    betas
        .iter()
        .map(|&beta| {
            let alpha_pred = -curve.point(beta)?.t_prime;
            let g = curve.spectrum_point(alpha_pred.clamp(ends.alpha_minus, ends.alpha_plus), &ends, 1e-12)?.g;
            let samples = sample_typical(system, p, beta, config.word_len, config.count, config.seed)?;
            let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
            let (dyn_mean, dyn_sigma) = mean_std(&ratios);
            let (emp_mean, emp_sigma) = match &config.empirical {
                Some(e) => {
                    let slopes: Vec<f64> = samples
                        .iter()
                        .take(e.points)
                        .filter_map(|s| {
                            let est = match &evaluator {
                                Some(ev) => {
                                    let floor = ev.eval(s.x, e.depth).err;
                                    emp_exponent(|y| ev.eval(y, e.depth).value, s.x, &e.scales, floor)
                                }
                                None => {
                                    let tol = 1e-18;
                                    emp_exponent(|y| eval_t(system, p, y, tol).map(|v| v.value).unwrap_or(f64::NAN), s.x, &e.scales, tol)
                                }
                            };
                            est.ok().map(|r| r.slope)
                        })
                        .collect();
                    if slopes.is_empty() {
                        (None, None)
                    } else {
                        let (m, sd) = mean_std(&slopes);
                        (Some(m), Some(sd))
                    }
                }
                None => (None, None),
            };
            Ok(ExperimentRow { beta, alpha_pred, g, dyn_mean, dyn_sigma, emp_mean, emp_sigma, count: config.count, seed: config.seed })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyadic() -> IfSystem {
        IfSystem::affine(&[(2.0, 0.0), (2.0, -1.0)], (0.0, 1.0)).unwrap()
    }

    #[test]
    fn traces() {
        let d = dyadic();
        let q = ProbVector::new(&[0.25]).unwrap();
        let t = dyn_exponent(&d, &q, &Word::repeat(0, 50)).unwrap();
        assert!(t.ratios.iter().all(|r| (r - 2.0).abs() < 1e-15));
        let alt = dyn_exponent(&d, &q, &Word::periodic(&[0, 1], 400)).unwrap();
        let a0 = (4f64.ln() + (4.0f64 / 3.0).ln()) / (2.0 * 2f64.ln());
        assert!((alt.last() - a0).abs() < 1e-12);
        let half = ProbVector::new(&[0.5]).unwrap();
        let any = dyn_exponent(&d, &half, &Word::from_labels(&[1, 2, 2, 1, 2])).unwrap();
        assert!(any.ratios.iter().all(|r| (r - 1.0).abs() < 1e-15));
        assert!(dyn_exponent(&d, &q, &Word::repeat(0, 1)).is_err());
        let ex = dyn_exponent_exact(&d, &q, &Word::periodic(&[0, 1], 40)).unwrap();
        assert!((ex[39] - a0).abs() < 1e-15);
    }

    #[test]
    fn empirical_identity() {
        let scales = geometric_scales(0.01, 0.5, 12);
        let e = emp_exponent(|y| y, 0.3, &scales, 1e-16).unwrap();
        assert!((e.slope - 1.0).abs() < 1e-9);
        assert!(emp_exponent(|y| y, 0.3, &scales[..5], 1e-16).is_err());
        let flat = emp_exponent(|y| if y > 0.3 { 1e-20 } else { 0.0 } + 1.0, 0.3, &scales, 1e-16);
        assert!(flat.is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let d = dyadic();
        let q = ProbVector::new(&[0.25]).unwrap();
        let a = sample_typical(&d, &q, 0.0, 200, 8, 7).unwrap();
        let b = sample_typical(&d, &q, 0.0, 200, 8, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_typical(&d, &q, 0.0, 200, 8, 8).unwrap());
    }
}
