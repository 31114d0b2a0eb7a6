#![allow(dead_code)]

use nalgebra::DVector;
use optidesign::linalg::{Matrix, SymMatrix};
use optidesign::{Design, Experiment, ExperimentId, Pool};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn spd(rng: &mut impl Rng, n: usize, floor: f64) -> SymMatrix {
    let b = gaussian(rng, n, n) / (n as f64).sqrt();
    SymMatrix::new(&b * b.transpose() + Matrix::identity(n, n) * floor).unwrap()
}

/// Random pool with full prior, correlated noise and a square target that
/// is the identity unless `random_target`.
pub fn pool(seed: u64, p: usize, size: usize, max_n_e: usize, random_target: bool) -> Pool {
    let mut r = rng(seed);
    let experiments = (0..size)
        .map(|i| {
            let n_e = r.gen_range(1..=max_n_e);
            let a = gaussian(&mut r, n_e, p);
            let noise = spd(&mut r, n_e, 0.2);
            Experiment::new(i as u64 + 1, a, noise).unwrap()
        })
        .collect();
    let prior = spd(&mut r, p, 0.3);
    let target = if random_target { Matrix::identity(p, p) + gaussian(&mut r, p, p) * 0.4 } else { Matrix::identity(p, p) };
    let mean = DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal));
    Pool::new(experiments, mean, prior, target).unwrap()
}

pub fn multiset(seed: u64, pool: &Pool, size: usize) -> Design {
    let mut r = rng(seed);
    let ids: Vec<ExperimentId> = pool.ids().collect();
    let mut d = Design::new();
    for _ in 0..size {
        d.add(ids[r.gen_range(0..ids.len())]);
    }
    d
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn mat_close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    (a - b).amax() <= tol * a.amax().max(b.amax()).max(1.0)
}
