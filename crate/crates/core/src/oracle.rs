//! Brute-force ground truth at small scale.
//!
//! * optimal designs by enumerating every multiset of size at most `k`;
//! * exhaustive α(a, b) and ε(a, b) over all nested pairs `A ⊆ B` and all
//!   experiments `u`;
//! * Monte-Carlo validation of the estimator and its error covariance;
//! * optimality of the affine estimator against random perturbations.
//!
//! Multisets are count vectors over the pool's experiments in id order, and
//! `A ⊆ B` means count-wise domination.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, Matrix, SymMatrix};
use crate::model::{self, Design, DesignState, ExperimentId, Pool};
use crate::par;

/// Default guard on the number of enumerated designs.
pub const DEFAULT_MAX_DESIGNS: u128 = 1_000_000;

/// Denominators `Δ_u(B)` at or below this are skipped in the α ratio.
pub const DEGENERATE_GAIN: f64 = 1e-12;

/// Values within this absolute distance count as tied.
const VALUE_TIE_TOL: f64 = 1e-12;

/// `C(n + k − 1, k)`: multisets of size exactly `k` over `n` elements.
pub fn multiset_count(n: usize, k: usize) -> u128 {
    if n == 0 {
        return u128::from(k == 0);
    }
    binomial((n + k - 1) as u128, k as u128)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All count vectors of length `n` summing to `size`, each entry at most
/// `cap`, in lexicographically increasing order.
pub fn count_vectors(n: usize, size: usize, cap: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let n = cur.len();
        if pos == n - 1 {
            if left <= cap {
                cur[pos] = left;
                out.push(cur.clone());
            }
            return;
        }
        for c in 0..=left.min(cap) {
            cur[pos] = c;
            rec(pos + 1, left - c, cap, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if n == 0 {
        if size == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(0, size, cap, &mut vec![0; n], &mut out);
    out
}

/// Sub-multisets of `b` with total `size`.
fn dominated_vectors(b: &[usize], size: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, b: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == b.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest: usize = b[pos + 1..].iter().sum();
        let lo = left.saturating_sub(rest);
        for c in lo..=left.min(b[pos]) {
            cur[pos] = c;
            rec(pos + 1, left - c, b, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    rec(0, size, b, &mut vec![0; b.len()], &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub a: usize,
    pub b: usize,
    /// `None` when every triple was degenerate.
    pub value: Option<f64>,
    pub triples: u64,
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub criterion: Criterion,
    pub k: usize,
    pub with_replacement: bool,
    pub optimal_design: Design,
    pub optimal_value: f64,
    pub designs_enumerated: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_table: Option<Vec<TableEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_table: Option<Vec<TableEntry>>,
}

/// Exact minimizer over all multisets of size `<= k`. Ties resolve to the
/// lexicographically smallest count vector.
pub fn optimal_design_bruteforce(pool: &Pool, criterion: Criterion, k: usize, with_replacement: bool) -> Result<OracleReport> {
    optimal_design_bruteforce_limited(pool, criterion, k, with_replacement, DEFAULT_MAX_DESIGNS)
}

pub fn optimal_design_bruteforce_limited(
    pool: &Pool,
    criterion: Criterion,
    k: usize,
    with_replacement: bool,
    max_designs: u128,
) -> Result<OracleReport> {
    let n = pool.len();
    let cap = if with_replacement { k } else { 1 };
    if !with_replacement && k > n {
        return Err(Error::PoolExhausted { requested: k, available: n });
    }
    let total: u128 = (0..=k)
        .map(|s| if with_replacement { multiset_count(n, s) } else { binomial(n as u128, s as u128) })
        .fold(0u128, u128::saturating_add);
    if total > max_designs {
        return Err(Error::TooLarge { count: total, limit: max_designs });
    }
    let mut all: Vec<Vec<usize>> = (0..=k).flat_map(|s| count_vectors(n, s, cap)).collect();
    all.sort();
    let values = par::map(&all, |c| criteria::cost(pool, criterion, &Design::from_count_vector(pool, c)));
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        match best {
            Some((_, bv)) if v >= bv - VALUE_TIE_TOL => {}
            _ => best = Some((i, v)),
        }
    }
    let (i, optimal_value) = best.expect("at least the empty design is enumerated");
    Ok(OracleReport {
        criterion,
        k,
        with_replacement,
        optimal_design: Design::from_count_vector(pool, &all[i]),
        optimal_value,
        designs_enumerated: all.len() as u64,
        alpha_table: None,
        epsilon_table: None,
    })
}

/// How marginal gains are computed inside the exhaustive audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainPath {
    /// [`criteria::gain`]: inversion-lemma path (fast trace formula for A).
    #[default]
    Incremental,
    /// Two independent factorizations per gain.
    Recompute,
}

#[derive(Debug, Clone, Copy)]
pub struct AuditOptions {
    pub path: GainPath,
    pub max_designs: u128,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { path: GainPath::Incremental, max_designs: DEFAULT_MAX_DESIGNS }
    }
}

/// Marginal gains `Δ_u(X)` for every multiset `X` with `|X| <= max_size`
/// and every `u` in the pool.
pub struct GainTable {
    criterion: Criterion,
    gains: HashMap<Vec<usize>, Vec<f64>>,
    max_size: usize,
    n: usize,
}

impl GainTable {
    pub fn build(pool: &Pool, criterion: Criterion, max_size: usize, opts: &AuditOptions) -> Result<Self> {
        let n = pool.len();
        let total: u128 = (0..=max_size).map(|s| multiset_count(n, s)).fold(0u128, u128::saturating_add);
        if total > opts.max_designs {
            return Err(Error::TooLarge { count: total, limit: opts.max_designs });
        }
        let sets: Vec<Vec<usize>> = (0..=max_size).flat_map(|s| count_vectors(n, s, s)).collect();
        let ids: Vec<ExperimentId> = pool.ids().collect();
        let rows = par::map(&sets, |c| -> Result<Vec<f64>> {
            let design = Design::from_count_vector(pool, c);
            match opts.path {
                GainPath::Incremental => {
                    let state = DesignState::from_design(pool, &design, criterion)?;
                    Ok(criteria::candidate_gains(criterion, pool, &state, &ids)?
                        .into_iter()
                        .map(|g| g.gain)
                        .collect())
                }
                GainPath::Recompute => ids
                    .iter()
                    .map(|&u| criteria::recomputed_gain(criterion, pool, &design, u))
                    .collect(),
            }
        });
        let mut gains = HashMap::with_capacity(sets.len());
        for (c, row) in sets.into_iter().zip(rows) {
            gains.insert(c, row?);
        }
        Ok(Self { criterion, gains, max_size, n })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn gains(&self, counts: &[usize]) -> Option<&[f64]> {
        self.gains.get(counts).map(Vec::as_slice)
    }

    fn check_range(&self, a: usize, b: usize) -> Result<()> {
        if a > b {
            return Err(Error::InvalidArgument(format!("nested pair needs a <= b, got a={a}, b={b}")));
        }
        if b > self.max_size {
            return Err(Error::InvalidArgument(format!("b={b} exceeds table size {}", self.max_size)));
        }
        Ok(())
    }

    fn for_each_triple(&self, a: usize, b: usize, mut f: impl FnMut(f64, f64)) {
        for big in count_vectors(self.n, b, b) {
            let gb = &self.gains[&big];
            for small in dominated_vectors(&big, a) {
                let ga = &self.gains[&small];
                for u in 0..self.n {
                    f(ga[u], gb[u]);
                }
            }
        }
    }

    /// `min Δ_u(A)/Δ_u(B)` over nested `|A| = a`, `|B| = b`, skipping
    /// denominators at or below [`DEGENERATE_GAIN`].
    pub fn alpha(&self, a: usize, b: usize) -> Result<TableEntry> {
        self.check_range(a, b)?;
        let (mut value, mut triples, mut skipped) = (f64::INFINITY, 0u64, 0u64);
        self.for_each_triple(a, b, |ga, gb| {
            triples += 1;
            if gb <= DEGENERATE_GAIN {
                skipped += 1;
            } else {
                value = value.min(ga / gb);
            }
        });
        let value = (skipped < triples).then_some(value);
        Ok(TableEntry { a, b, value, triples, skipped })
    }

    /// `max Δ_u(B) − Δ_u(A)` over nested `|A| = a`, `|B| = b`.
    pub fn epsilon(&self, a: usize, b: usize) -> Result<TableEntry> {
        self.check_range(a, b)?;
        let (mut value, mut triples) = (f64::NEG_INFINITY, 0u64);
        self.for_each_triple(a, b, |ga, gb| {
            triples += 1;
            value = value.max(gb - ga);
        });
        Ok(TableEntry { a, b, value: Some(value), triples, skipped: 0 })
    }

    /// Entries for every `a < ell`, `a <= b < ell + k`.
    pub fn alpha_table(&self, k: usize, ell: usize) -> Result<Vec<TableEntry>> {
        pairs(k, ell).map(|(a, b)| self.alpha(a, b)).collect()
    }

    pub fn epsilon_table(&self, k: usize, ell: usize) -> Result<Vec<TableEntry>> {
        pairs(k, ell).map(|(a, b)| self.epsilon(a, b)).collect()
    }
}

fn pairs(k: usize, ell: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..ell).flat_map(move |a| (a..ell + k).map(move |b| (a, b)))
}

/// Largest α satisfying the multiplicative diminishing-returns inequality
/// at sizes `(a, b)`.
pub fn exhaustive_alpha(pool: &Pool, criterion: Criterion, a: usize, b: usize, opts: &AuditOptions) -> Result<f64> {
    let table = GainTable::build(pool, criterion, b, opts)?;
    let entry = table.alpha(a, b)?;
    entry.value.ok_or(Error::AllDegenerate { skipped: entry.skipped as usize })
}

/// Smallest ε satisfying the additive diminishing-returns inequality at
/// sizes `(a, b)`.
pub fn exhaustive_epsilon(pool: &Pool, criterion: Criterion, a: usize, b: usize, opts: &AuditOptions) -> Result<f64> {
    let table = GainTable::build(pool, criterion, b, opts)?;
    Ok(table.epsilon(a, b)?.value.expect("epsilon always has a value"))
}

/// Stacked form of a design: `ỹ = Ã θ + ṽ` with `Cov ṽ = R̃` block diagonal.
#[derive(Debug, Clone)]
pub struct StackedDesign {
    pub a: Matrix,
    pub r: SymMatrix,
    /// `(experiment, first row)` per design slot, in id order.
    pub slots: Vec<(ExperimentId, usize)>,
}

impl StackedDesign {
    pub fn new(pool: &Pool, design: &Design) -> Result<Self> {
        let mut slots = Vec::new();
        let mut n = 0;
        for (id, count) in design.counts() {
            let e = pool.experiment(id)?;
            for _ in 0..count {
                slots.push((id, n));
                n += e.n_obs();
            }
        }
        let mut a = Matrix::zeros(n, pool.p());
        let mut r = Matrix::zeros(n, n);
        for &(id, row) in &slots {
            let e = pool.experiment(id)?;
            let ne = e.n_obs();
            a.view_mut((row, 0), (ne, pool.p())).copy_from(e.a());
            r.view_mut((row, row), (ne, ne)).copy_from(e.r().as_matrix());
        }
        let r = if n == 0 { SymMatrix::identity(1) } else { SymMatrix::symmetrize(r) };
        Ok(Self { a, r, slots })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Affine estimator `ẑ = L ỹ + b`.
#[derive(Debug, Clone)]
pub struct AffineEstimator {
    pub l: Matrix,
    pub b: DVector<f64>,
    pub stacked: StackedDesign,
}

impl AffineEstimator {
    /// `L★ = H (R_θ⁻¹ + ÃᵀR̃⁻¹Ã)⁻¹ ÃᵀR̃⁻¹`, `b★ = (H − L★Ã) θ̄`.
    pub fn optimal(pool: &Pool, design: &Design) -> Result<Self> {
        if design.is_empty() {
            return Err(Error::InvalidArgument("affine estimator needs a nonempty design".into()));
        }
        let stacked = StackedDesign::new(pool, design)?;
        let r_chol = cholesky(&stacked.r)?;
        let r_inv_a = linalg::solve_psd(&r_chol, &stacked.a)?;
        let y = SymMatrix::symmetrize(pool.prior_info().as_matrix() + stacked.a.transpose() * &r_inv_a);
        let y_chol = cholesky(&y)?;
        // L★ = H Y⁻¹ Ãᵀ R̃⁻¹ = H Y⁻¹ (R̃⁻¹ Ã)ᵀ
        let l = pool.target() * linalg::solve_psd(&y_chol, &r_inv_a.transpose())?;
        let b = (pool.target() - &l * &stacked.a) * pool.prior_mean();
        Ok(Self { l, b, stacked })
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.l * y + &self.b
    }

    /// Error covariance of `L ỹ + b(L)` with the unbiasing offset
    /// `b(L) = (H − LÃ) θ̄`: `(H − LÃ) R_θ (H − LÃ)ᵀ + L R̃ Lᵀ`.
    pub fn covariance_with(&self, pool: &Pool, l: &Matrix) -> SymMatrix {
        let resid = pool.target() - l * &self.stacked.a;
        SymMatrix::symmetrize(
            &resid * pool.prior_cov().as_matrix() * resid.transpose() + l * self.stacked.r.as_matrix() * l.transpose(),
        )
    }

    /// `trace[Δ (Ã R_θ Ãᵀ + R̃) Δᵀ]`, the excess trace of `L★ + Δ`.
    pub fn excess(&self, pool: &Pool, delta: &Matrix) -> f64 {
        let s = &self.stacked.a * pool.prior_cov().as_matrix() * self.stacked.a.transpose() + self.stacked.r.as_matrix();
        (delta * s * delta.transpose()).trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub mse: f64,
    pub std_error: f64,
    pub n_draws: usize,
}

const MC_CHUNK: usize = 1000;

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Empirical `E‖z − ẑ‖²` under Gaussian `θ ~ N(θ̄, R_θ)` and `v_e ~ N(0, R_e)`,
/// using [`model::estimate`] for every draw. Draws are split into
/// fixed-size chunks with their own ChaCha8 stream, so the result does not
/// depend on the thread count.
pub fn monte_carlo_mse(pool: &Pool, design: &Design, n_draws: usize, seed: u64) -> Result<MonteCarloResult> {
    if n_draws < 1000 {
        return Err(Error::InvalidArgument(format!("monte carlo needs at least 1000 draws, got {n_draws}")));
    }
    pool.check_design(design)?;
    let prior_chol = cholesky(pool.prior_cov())?;
    let noise_chols: HashMap<ExperimentId, linalg::CholFactor> = design
        .ids()
        .map(|id| Ok((id, cholesky(pool.experiment(id)?.r())?)))
        .collect::<Result<_>>()?;
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let partial = par::map_range(chunks, |chunk| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let draws = MC_CHUNK.min(n_draws - chunk * MC_CHUNK);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let theta = pool.prior_mean() + prior_chol.lower() * standard_normal(&mut rng, pool.p());
            let mut obs = model::Observations::new();
            for (id, count) in design.counts() {
                let e = pool.experiment(id)?;
                let l = noise_chols[&id].lower();
                let ys = (0..count)
                    .map(|_| e.a() * &theta + l * standard_normal(&mut rng, e.n_obs()))
                    .collect();
                obs.insert(id, ys);
            }
            let est = model::estimate(pool, design, &obs)?;
            let err = (pool.target() * &theta - est.z_hat).norm_squared();
            sum += err;
            sum_sq += err * err;
        }
        Ok((sum, sum_sq))
    });
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in partial {
        let (s, q) = p?;
        sum += s;
        sum_sq += q;
    }
    let n = n_draws as f64;
    let mse = sum / n;
    let var = (sum_sq / n - mse * mse).max(0.0) * n / (n - 1.0);
    Ok(MonteCarloResult { mse, std_error: (var / n).sqrt(), n_draws })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub trace_k_star: f64,
    /// Closed-form excess `trace[Δ S Δᵀ]` per perturbation.
    pub excess: Vec<f64>,
    /// `trace K(L★ + Δ) − trace K(L★)` evaluated directly.
    pub direct_excess: Vec<f64>,
    pub passed: usize,
    pub total: usize,
}

impl OptimalityReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Perturbs `L★` by random Gaussian `Δ` and checks that the error
/// covariance trace strictly increases.
pub fn estimator_optimality_check(pool: &Pool, design: &Design, n_perturbations: usize, seed: u64) -> Result<OptimalityReport> {
    let est = AffineEstimator::optimal(pool, design)?;
    let k_star = est.covariance_with(pool, &est.l);
    let trace_k_star = k_star.trace();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = est.l.shape();
    let mut excess = Vec::with_capacity(n_perturbations);
    let mut direct_excess = Vec::with_capacity(n_perturbations);
    let mut passed = 0;
    for _ in 0..n_perturbations {
        let scale = 10f64.powf(rng.gen_range(-3.0..0.0));
        let delta = Matrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let closed = est.excess(pool, &delta);
        let direct = est.covariance_with(pool, &(&est.l + &delta)).trace() - trace_k_star;
        if closed > 0.0 && direct > 0.0 {
            passed += 1;
        }
        excess.push(closed);
        direct_excess.push(direct);
    }
    Ok(OptimalityReport { trace_k_star, excess, direct_excess, passed, total: n_perturbations })
}
