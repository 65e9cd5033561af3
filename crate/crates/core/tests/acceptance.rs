//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use holderlab::holder::emp_exponent;
use holderlab::operator::{eval_t, eval_t_exact, gap_probe, grid_nodes, holder_seminorm, iterate_m, t_grid, GapProbeOptions, GridFunction, SeminormMode, Verdict};
use holderlab::rational::{rat, rat_int, Rat};
use holderlab::takagi::{cocycle, eval_c_series, fd_oracle, functional_residual, CocycleMatrix, IndexSet, MultiIndex, Normalization, TakagiEvaluator};
use holderlab::thermo::PressureCurve;
use holderlab::{conjugacy_residual, hull_cylinder, pi_approx, IfSystem, ProbVector, Word};
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn two(a: f64, b: f64) -> IfSystem {
    IfSystem::affine(&[(a, 0.0), (b, 1.0 - b)], (0.0, 1.0)).unwrap()
}

fn dyadic() -> IfSystem {
    two(2.0, 2.0)
}

fn cantor() -> IfSystem {
    two(3.0, 3.0)
}

fn p(v: f64) -> ProbVector {
    ProbVector::new(&[v]).unwrap()
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |m, v| m.max(v.abs()))
}

/// `T_p(k/2^m)` for the dyadic system, summed over binary digits in exact arithmetic.
fn dyadic_cdf_oracle(k: u64, m: u32, p1: &Rat) -> Rat {
    let p2 = rat_int(1) - p1;
    let mut acc = Rat::zero();
    let mut mass = Rat::one();
    for j in (0..m).rev() {
        if (k >> j) & 1 == 1 {
            acc += &mass * p1;
            mass *= &p2;
        } else {
            mass *= p1;
        }
    }
    if k == 1 << m {
        return Rat::one();
    }
    acc
}

/// Classical Takagi partial sum, written independently of the library.
fn tau(x: f64, k: u32) -> f64 {
    (0..k)
        .map(|j| {
            let y = x * 2f64.powi(j as i32);
            (y - y.round()).abs() / 2f64.powi(j as i32)
        })
        .sum()
}

fn crit_1() -> Outcome {
    let sys = dyadic();
    let half = p(0.5);
    let tol = 0.5f64.powi(50);
    let mut worst: f64 = 0.0;
    for k in 0..=4096u32 {
        let x = k as f64 / 4096.0;
        worst = worst.max((eval_t(&sys, &half, x, tol).unwrap().value - x).abs());
    }
    outcome(worst <= 1e-12, format!("max |T(x) - x| over 4097 nodes = {worst:e} (tol 1e-12)"))
}

fn crit_2() -> Outcome {
    let sys = dyadic();
    let q = ProbVector::from_rationals(vec![rat(1, 4)]).unwrap();
    let mut worst: f64 = 0.0;
    let mut exact_ok = true;
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=1024u64 {
        let x = k as f64 / 1024.0;
        let oracle = dyadic_cdf_oracle(k, 10, &rat(1, 4));
        let v = eval_t(&sys, &q, x, 1e-18).unwrap().value;
        worst = worst.max((v - holderlab::rational::to_f64(&oracle)).abs());
        exact_ok &= eval_t_exact(&sys, &q, &rat(k as i64, 1024)).unwrap() == oracle;
        monotone &= v >= prev;
        prev = v;
    }
    outcome(
        worst <= 1e-14 && exact_ok && monotone,
        format!("float max dev {worst:e} (tol 1e-14), rational exact: {exact_ok}, monotone: {monotone}"),
    )
}

fn crit_3() -> Outcome {
    let sys = dyadic();
    let q = p(0.3);
    let n = MultiIndex(vec![1]);
    let nodes = grid_nodes(&sys, 12, 0.25);
    let levels = eval_c_series(&sys, &q, &n, &nodes, 120).unwrap();
    let c = &levels.last().unwrap().grid;
    let hull: Vec<(f64, f64)> = c.nodes.iter().zip(&c.values).filter(|(x, _)| (0.0..=1.0).contains(*x)).map(|(x, v)| (*x, *v)).collect();
    let dev = |h: f64| max_abs(hull.iter().map(|&(x, v)| v - fd_oracle(&sys, &q, &n, x, h).unwrap()));
    let (d1, d2) = (dev(1e-4), dev(5e-5));
    let ratio = d1 / d2;
    outcome(
        d1 <= 1e-5 && ratio >= 3.0,
        format!("{} nodes: dev(h=1e-4) = {d1:e} (tol 1e-5), dev(h/2) = {d2:e}, ratio {ratio:.2} (need >= 3)", hull.len()),
    )
}

fn crit_4() -> Outcome {
    let sys = dyadic();
    let q = p(0.3);
    let nodes = grid_nodes(&sys, 12, 0.25);
    let levels = eval_c_series(&sys, &q, &MultiIndex(vec![2]), &nodes, 120).unwrap();
    let map: BTreeMap<MultiIndex, GridFunction> = levels.iter().map(|l| (l.n.clone(), l.grid.clone())).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [MultiIndex(vec![1]), MultiIndex(vec![2])] {
        let res = functional_residual(&sys, &q, &n, &map).unwrap();
        let bound = map[&n].interpolation_bound();
        ok &= res <= 5.0 * bound;
        parts.push(format!("n={n}: residual {res:e} vs 5 x {bound:e}"));
    }
    outcome(ok, parts.join("; "))
}

/// Random affine system with rational cut points in [0, 1], 2 to 4 branches, hull [0, 1].
fn random_system(rng: &mut ChaCha8Rng) -> (IfSystem, ProbVector, Vec<f64>) {
    let m = rng.gen_range(2..=4usize);
    let mut cuts: Vec<i64> = (0..2 * m - 2).map(|_| rng.gen_range(1..1000)).collect();
    cuts.sort();
    cuts.dedup();
    if cuts.len() != 2 * m - 2 || cuts.windows(2).step_by(2).any(|w| w[1] - w[0] < 20) {
        return random_system(rng);
    }
    let mut ends = vec![0];
    ends.extend(cuts);
    ends.push(1000);
    let mut maps = Vec::new();
    let mut slopes = Vec::new();
    for i in 0..m {
        let (l, r) = (ends[2 * i], ends[2 * i + 1]);
        if r - l < 20 {
            return random_system(rng);
        }
        let a = rat(1000, r - l);
        slopes.push(holderlab::rational::to_f64(&a));
        maps.push((a.clone(), -rat(l, 1000) * a));
    }
    let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let z: f64 = w.iter().sum();
    let free: Vec<f64> = w[..m - 1].iter().map(|v| v / z).collect();
    (IfSystem::affine_exact(&maps, (rat_int(0), rat_int(1))).unwrap(), ProbVector::new(&free).unwrap(), slopes)
}

fn crit_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut t1, mut moran) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let (sys, q, slopes) = random_system(&mut rng);
        let curve = PressureCurve::new(&sys, &q).unwrap();
        t1 = t1.max(curve.t(1.0).unwrap().abs());
        let d = curve.t(0.0).unwrap();
        moran = moran.max((slopes.iter().map(|a| a.powf(-d)).sum::<f64>() - 1.0).abs());
    }
    let d3 = PressureCurve::new(&cantor(), &p(0.5)).unwrap().t(0.0).unwrap();
    let dc = (d3 - 2f64.ln() / 3f64.ln()).abs();
    outcome(
        t1 <= 1e-13 && moran <= 1e-12 && dc <= 1e-12,
        format!("max |t(1)| = {t1:e} (1e-13), max Moran residual {moran:e} (1e-12), |t(0) - log2/log3| = {dc:e} (1e-12)"),
    )
}

fn crit_6() -> Outcome {
    let curve = PressureCurve::new(&dyadic(), &p(0.25)).unwrap();
    let e = curve.endpoints().unwrap();
    let am = (e.alpha_minus - (4.0f64 / 3.0).ln() / 2f64.ln()).abs();
    let ap = (e.surrogate_plus.0 - 2.0).abs();
    let top = (curve.spectrum_point(e.alpha_zero, &e, 1e-12).unwrap().g - 1.0).abs();
    let alphas: Vec<f64> = (0..200).map(|k| e.alpha_minus + (e.alpha_plus - e.alpha_minus) * (k as f64 + 0.5) / 200.0).collect();
    let g: Vec<f64> = alphas.iter().map(|&a| curve.spectrum_point(a, &e, 1e-12).unwrap().g).collect();
    let concav = g.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::NEG_INFINITY, f64::max);
    let mut dual: f64 = 0.0;
    for k in 0..200 {
        let beta = -20.0 + 40.0 * k as f64 / 199.0;
        let pt = curve.point(beta).unwrap();
        let alpha = -pt.t_prime;
        let g = curve.spectrum_point(alpha, &e, 1e-12).unwrap().g;
        dual = dual.max((g - (pt.t + beta * alpha)).abs());
    }
    outcome(
        am <= 1e-10 && ap <= 1e-6 && top <= 1e-9 && concav <= 1e-8 && dual <= 1e-9,
        format!(
            "|alpha_- err| {am:e} (1e-10), |surrogate alpha_+ - 2| {ap:e} (1e-6), |g(alpha_0) - 1| {top:e} (1e-9), max 2nd diff {concav:e} (1e-8), duality {dual:e} (1e-9)"
        ),
    )
}

fn crit_7() -> Outcome {
    // A(1^k)_{1,0} = k / p_1 exactly.
    let q = ProbVector::from_rationals(vec![rat(1, 4)]).unwrap();
    let n1 = MultiIndex(vec![1]);
    let mut m = CocycleMatrix::<Rat>::identity(IndexSet::new(&n1), Normalization::Weighted);
    let mut ones_ok = true;
    for k in 1..=1000i64 {
        m.mul_step(0, q.exact());
        ones_ok &= *m.at(1, 0) == rat(4 * k, 1);
    }
    // Diagonal and triangularity, exactly, on random words over three symbols.
    let q3 = ProbVector::from_rationals(vec![rat(1, 5), rat(1, 3)]).unwrap();
    let n22 = MultiIndex(vec![2, 2]);
    let idx = IndexSet::new(&n22);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tri_ok = true;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=30);
        let w = Word::new((0..len).map(|_| rng.gen_range(0..3)).collect());
        let a = cocycle(&w, q3.exact(), &n22, Normalization::Weighted).unwrap();
        for (r, nr) in idx.items().iter().enumerate() {
            for (c, mc) in idx.items().iter().enumerate() {
                let v = a.at(r, c);
                if r == c {
                    tri_ok &= v.is_one();
                } else if !mc.le(nr) {
                    tri_ok &= v.is_zero();
                }
            }
        }
    }
    // Polynomial growth with a single constant K: fitted on lengths <= 100, checked up to 1000.
    let qf = ProbVector::new(&[0.2, 0.3]).unwrap();
    let mut fit_k: f64 = 0.0;
    let mut checks = Vec::new();
    for _ in 0..1000 {
        let len = rng.gen_range(1..=1000);
        let w: Vec<usize> = (0..len).map(|_| rng.gen_range(0..3)).collect();
        let mut a = CocycleMatrix::<f64>::identity(idx.clone(), Normalization::Weighted);
        for (k, &s) in w.iter().enumerate() {
            a.mul_step(s, qf.full());
            let k = (k + 1) as f64;
            let worst = idx
                .items()
                .iter()
                .enumerate()
                .flat_map(|(r, nr)| (0..idx.len()).map(move |c| (r, c, nr.order())))
                .map(|(r, c, o)| a.at(r, c).abs() / k.powi(o as i32))
                .fold(0.0, f64::max);
            if k <= 100.0 {
                fit_k = fit_k.max(worst);
            } else {
                checks.push(worst);
            }
        }
    }
    let worst_late = checks.iter().cloned().fold(0.0, f64::max);
    let growth_ok = worst_late <= fit_k;
    outcome(
        ones_ok && tri_ok && growth_ok,
        format!(
            "A(1^k)_(1,0) = 4k for k <= 1000: {ones_ok}; unit diagonal + triangular on 1000 words: {tri_ok}; K fitted on k <= 100 = {fit_k:.4}, max ratio for 100 < k <= 1000 = {worst_late:.4}"
        ),
    )
}

fn crit_8() -> Outcome {
    let sys = dyadic();
    let nodes = grid_nodes(&sys, 12, 0.25);
    let levels = eval_c_series(&sys, &p(0.5), &MultiIndex(vec![1]), &nodes, 80).unwrap();
    let c = &levels.last().unwrap().grid;
    let ratios: Vec<f64> = c
        .nodes
        .iter()
        .zip(&c.values)
        .filter(|(x, _)| (0.0..=1.0).contains(*x))
        .filter_map(|(&x, &v)| {
            let t = tau(x, 30);
            (t > 0.05).then_some(v / t)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let mid = 0.5 * (lo + hi);
    let spread = (hi - lo) / mid.abs();
    outcome(
        spread <= 1e-3,
        format!("C_1 / tau_30 over {} nodes: measured constant {mid:.9}, relative spread {spread:e} (tol 1e-3)", ratios.len()),
    )
}

fn crit_9() -> Outcome {
    let cases = [("dyadic 1/2", dyadic(), p(0.5)), ("dyadic 1/4", dyadic(), p(0.25)), ("cantor 1/4", cantor(), p(0.25))];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, sys, q) in cases.iter() {
        let r = conjugacy_residual(sys, q, 1000, 9).unwrap();
        ok &= r.max_residual <= 1e-9 && r.used >= 900;
        parts.push(format!("{name}: {:e} over {} points", r.max_residual, r.used));
    }
    outcome(ok, format!("{} (tol 1e-9)", parts.join("; ")))
}

fn crit_10() -> Outcome {
    let sys = dyadic();
    let q = p(0.25);
    let opts = GapProbeOptions { grid_level: 13 };
    let low = gap_probe(&sys, &q, 0.35, 60, opts).unwrap();
    let high = gap_probe(&sys, &q, 0.6, 60, opts).unwrap();
    let nodes = grid_nodes(&sys, 12, 0.25);
    let h0 = GridFunction::from_fn(&nodes, |x| if x < 0.5 { 0.0 } else { 1.0 }, 0.0, 1.0).unwrap();
    let diag = iterate_m(&sys, &q, &h0, 60).unwrap();
    outcome(
        low.verdict == Verdict::Bounded && high.verdict == Verdict::Growing && diag.r_squared >= 0.99,
        format!(
            "alpha 0.35: {:?} (slope {:.2e}); alpha 0.6: {:?} (slope {:.2e}); step iteration rate {:.4}, R^2 {:.5} over n < {} (need >= 0.99)",
            low.verdict, low.slope, high.verdict, high.slope, diag.rate, diag.r_squared, diag.fit_range.1
        ),
    )
}

fn crit_11() -> Outcome {
    let sys = dyadic();
    let q = p(0.25);
    let am = (4.0f64 / 3.0).ln() / 2f64.ln();
    let levels = [6u32, 10, 14, 18, 22];
    let (mut below, mut above) = (Vec::new(), Vec::new());
    for &l in &levels {
        let t = t_grid(&sys, &q, &grid_nodes(&sys, l, 0.0), 1e-17).unwrap();
        below.push(holder_seminorm(&t, am - 0.01, SeminormMode::Dyadic).unwrap());
        above.push(holder_seminorm(&t, am + 0.05, SeminormMode::Dyadic).unwrap());
    }
    let base = below[0];
    let stable = below.iter().all(|v| (v / base - 1.0).abs() <= 0.2);
    let growth: Vec<f64> = (0..levels.len() - 2).map(|k| above[k + 2] / above[k]).collect();
    let grows = growth.iter().all(|&g| g >= 1.2);
    let half = p(0.5);
    let lip: Vec<f64> = [6u32, 8, 10, 12, 14]
        .iter()
        .map(|&l| {
            let nodes = grid_nodes(&sys, l, 0.0);
            let c = eval_c_series(&sys, &half, &MultiIndex(vec![1]), &nodes, 80).unwrap();
            holder_seminorm(&c.last().unwrap().grid, 1.0, SeminormMode::Dyadic).unwrap()
        })
        .collect();
    let lip_grows = lip.windows(2).all(|w| w[1] > w[0]) && lip[lip.len() - 1] / lip[0] >= 1.2;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    outcome(
        stable && grows && lip_grows,
        format!(
            "levels {levels:?}: V at alpha_- - 0.01 = [{}] (within 20%: {stable}); V at alpha_- + 0.05 = [{}], ratios per two refinements [{}] (need >= 1.2); V_1(C_1) at p=1/2, levels 6..14 = [{}] growing: {lip_grows}",
            fmt(&below),
            fmt(&above),
            fmt(&growth),
            fmt(&lip)
        ),
    )
}

/// Periodic points of exact period 1..=4 over two symbols, excluding the hull endpoints.
fn periodic_words() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for len in 1..=4usize {
        for code in 0..(1usize << len) {
            let w: Vec<usize> = (0..len).map(|j| (code >> (len - 1 - j)) & 1).collect();
            let primitive = (1..len).filter(|d| len % d == 0).all(|d| (0..len).any(|j| w[j] != w[j % d]));
            if primitive && len > 1 {
                out.push(w);
            }
        }
    }
    out
}

fn crit_12() -> Outcome {
    let sys = cantor();
    let q = p(0.25);
    let words = periodic_words();
    let scales: Vec<f64> = (1..=20).map(|k| 3f64.powi(-k)).collect();
    let mut worst: f64 = 0.0;
    for w in &words {
        let x = pi_approx(&sys, &Word::periodic(w, 80)).point;
        let expected = -w.iter().map(|&i| q.full()[i].ln()).sum::<f64>() / (w.len() as f64 * 3f64.ln());
        let est = emp_exponent(|y| eval_t(&sys, &q, y, 1e-18).unwrap().value, x, &scales, 1e-18).unwrap();
        worst = worst.max((est.slope - expected).abs() / expected);
    }
    outcome(
        words.len() == 20 && worst <= 0.1,
        format!("{} periodic points, scales 3^-1..3^-20: max relative deviation {worst:.4} (tol 0.10)", words.len()),
    )
}

fn crit_13() -> Outcome {
    let sys = dyadic();
    let half = p(0.5);
    let ev = TakagiEvaluator::new(&sys, &half, &MultiIndex(vec![1])).unwrap();
    let mut gammas = Vec::new();
    let mut direct_dev: f64 = 0.0;
    let mut direct = 0.0;
    for n in 1..=40usize {
        let sym = (n - 1) % 2;
        direct += if sym == 0 { 1.0 / 0.5 } else { -1.0 / 0.5 };
        if n < 20 {
            continue;
        }
        let w = Word::periodic(&[0, 1], n);
        let (x, y) = hull_cylinder(&sys, &w);
        let g = (ev.eval(y, 80).value - ev.eval(x, 80).value) / (y - x);
        direct_dev = direct_dev.max((g - direct).abs());
        gammas.push(g);
    }
    let (lo, hi) = gammas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
    outcome(
        hi - lo >= 0.5 && direct_dev <= 1e-3,
        format!("gamma_n over n in [20, 40]: sup - inf = {:.6} (need >= 0.5); max deviation from direct summation {direct_dev:e}", hi - lo),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Duration)> = vec![
        ("takagi identity T(x) = x at p = 1/2", crit_1, Duration::from_secs(1)),
        ("exact CDF oracle at dyadic points", crit_2, Duration::from_secs(5)),
        ("series vs finite differences for C_1", crit_3, Duration::from_secs(30)),
        ("functional-equation residual", crit_4, Duration::from_secs(10)),
        ("pressure anchors", crit_5, Duration::from_secs(1)),
        ("spectrum shape", crit_6, Duration::from_secs(10)),
        ("cocycle suite", crit_7, Duration::from_secs(30)),
        ("classical Takagi proportionality", crit_8, Duration::from_secs(10)),
        ("conjugacy residual", crit_9, Duration::from_secs(10)),
        ("gap dichotomy", crit_10, Duration::from_secs(60)),
        ("global Holder sharpness", crit_11, Duration::from_secs(60)),
        ("exponent consistency on periodic points", crit_12, Duration::from_secs(120)),
        ("non-differentiability probe", crit_13, Duration::from_secs(5)),
    ];
    let mut failures = 0;
    for (k, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= budget;
        let passed = out.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "{} {:>2}. {name}: {} [{:.2} s, budget {} s{}]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("{failures} criteria failed");
    if failures > 0 {
        std::process::exit(1);
    }
}
