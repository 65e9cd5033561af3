#![allow(dead_code)]

use holderlab::rational::{rat, rat_int, to_f64, Rat};
use holderlab::{IfSystem, ProbVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn two(a: f64, b: f64) -> IfSystem {
    IfSystem::affine(&[(a, 0.0), (b, 1.0 - b)], (0.0, 1.0)).unwrap()
}

pub fn dyadic() -> IfSystem {
    two(2.0, 2.0)
}

pub fn cantor() -> IfSystem {
    two(3.0, 3.0)
}

pub fn p(v: f64) -> ProbVector {
    ProbVector::new(&[v]).unwrap()
}

/// Affine system on `O = (0, 1)` with rational cut points `k/1000`, hull `[0, 1]`.
pub struct RandomSystem {
    pub system: IfSystem,
    pub slopes: Vec<f64>,
    pub cuts: Vec<(Rat, Rat)>,
}

pub fn random_system(seed: u64, branches: usize) -> RandomSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut cuts: Vec<i64> = (0..2 * branches - 2).map(|_| rng.gen_range(1..1000)).collect();
        cuts.sort();
        let mut ends = vec![0];
        ends.extend(cuts);
        ends.push(1000);
        let ok = (0..branches).all(|i| ends[2 * i + 1] - ends[2 * i] >= 30) && ends.windows(2).all(|w| w[1] >= w[0]);
        if !ok {
            continue;
        }
        let mut maps = Vec::new();
        let mut slopes = Vec::new();
        let mut cyl = Vec::new();
        for i in 0..branches {
            let (l, r) = (ends[2 * i], ends[2 * i + 1]);
            let a = rat(1000, r - l);
            slopes.push(to_f64(&a));
            maps.push((a.clone(), -rat(l, 1000) * a));
            cyl.push((rat(l, 1000), rat(r, 1000)));
        }
        let system = IfSystem::affine_exact(&maps, (rat_int(0), rat_int(1))).unwrap();
        return RandomSystem { system, slopes, cuts: cyl };
    }
}

/// Probability vector with every weight at least `0.05`.
pub fn random_p(seed: u64, len: usize) -> ProbVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.1..1.0)).collect();
    let z: f64 = w.iter().sum();
    ProbVector::new(&w[..len - 1].iter().map(|v| v / z).collect::<Vec<_>>()).unwrap()
}

/// Exact probability vector with denominators up to 60.
pub fn random_exact_p(seed: u64, len: usize) -> ProbVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let w: Vec<i64> = (0..len).map(|_| rng.gen_range(1..=20)).collect();
    let z: i64 = w.iter().sum();
    ProbVector::from_rationals(w[..len - 1].iter().map(|&v| rat(v, z)).collect()).unwrap()
}
