//! Seeded random instances for validation runs.
//!
//! Pools have a full (non-diagonal) prior, a square well-posed target and
//! experiments with correlated noise, so no structure of the identity case
//! is baked in.

use nalgebra::DVector;
use optidesign::linalg::{Matrix, SymMatrix};
use optidesign::{Design, Experiment, ExperimentId, Pool};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `B Bᵀ + floor·I` with `B` Gaussian.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> SymMatrix {
    let b = gaussian(rng, n, n, 1.0 / (n as f64).sqrt());
    SymMatrix::new(&b * b.transpose() + Matrix::identity(n, n) * floor).expect("symmetric by construction")
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub p: usize,
    pub pool_size: usize,
    pub max_n_e: usize,
    /// `H = I` when false, a random square matrix otherwise.
    pub random_target: bool,
}

pub fn random_pool(rng: &mut impl Rng, shape: InstanceShape) -> Pool {
    let p = shape.p;
    let experiments = (0..shape.pool_size)
        .map(|i| {
            let n_e = rng.gen_range(1..=shape.max_n_e);
            let a = gaussian(rng, n_e, p, 1.0);
            let noise_scale = 10f64.powf(rng.gen_range(-1.0..1.0));
            let r = random_spd(rng, n_e, 0.2);
            let r = SymMatrix::new(r.as_matrix() * noise_scale).expect("scaled spd");
            Experiment::new(i as u64 + 1, a, r).expect("valid experiment")
        })
        .collect();
    let prior = random_spd(rng, p, 0.3);
    let target = if shape.random_target {
        Matrix::identity(p, p) + gaussian(rng, p, p, 0.4)
    } else {
        Matrix::identity(p, p)
    };
    let mean = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    Pool::new(experiments, mean, prior, target).expect("valid pool")
}

/// Small instance with `p <= 4`, `|E| <= 5`, `n_e <= 2`.
pub fn small_instance(seed: u64) -> Pool {
    let mut r = rng(seed);
    let shape = InstanceShape {
        p: r.gen_range(1..=4),
        pool_size: r.gen_range(2..=5),
        max_n_e: 2,
        random_target: r.gen_bool(0.5),
    };
    random_pool(&mut r, shape)
}

/// `size` i.i.d. uniform draws from the pool.
pub fn random_multiset(rng: &mut impl Rng, pool: &Pool, size: usize) -> Design {
    let ids: Vec<ExperimentId> = pool.ids().collect();
    let mut d = Design::new();
    for _ in 0..size {
        d.add(ids[rng.gen_range(0..ids.len())]);
    }
    d
}

/// Nested pair `A ⊆ B` with `|A| = a`, `|B| = a + extra`.
pub fn random_nested_pair(rng: &mut impl Rng, pool: &Pool, a: usize, extra: usize) -> (Design, Design) {
    let small = random_multiset(rng, pool, a);
    let mut big = small.clone();
    let ids: Vec<ExperimentId> = pool.ids().collect();
    for _ in 0..extra {
        big.add(ids[rng.gen_range(0..ids.len())]);
    }
    (small, big)
}
