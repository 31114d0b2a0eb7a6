//! SNR sweeps on synthetic pools: greedy vs. random cost and the equivalent
//! certificate constants α̂ (A criterion) or ε̂ (E criterion) per point.
//!
//! Seed index `i` uses `base_seed + i` for the pool at every SNR value and
//! `base_seed + i + 2³²` for the random baseline.

use serde::{Deserialize, Serialize};

use crate::certificates;
use crate::criteria::{self, Criterion};
use crate::datagen::{random_design, synth_pool, SynthSpec};
use crate::error::{Error, Result};
use crate::greedy::greedy_design;
use crate::par;

pub const CSV_HEADER: &str = "snr_db,seed,criterion,k,greedy_cost,random_cost,equiv_alpha,equiv_epsilon";

const RANDOM_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub criterion: Criterion,
    pub snr_db: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub p: usize,
    pub n_e: usize,
    pub pool_size: usize,
    pub prior_var: f64,
    pub k: usize,
    pub ell: usize,
    pub tightened: bool,
    /// Also run greedy and a random design and record their costs.
    pub with_costs: bool,
}

impl SweepConfig {
    pub fn default_grid() -> Vec<f64> {
        (0..=15).map(|i| -20.0 + 2.0 * i as f64).collect()
    }

    pub fn new(criterion: Criterion) -> Self {
        Self {
            criterion,
            snr_db: Self::default_grid(),
            seeds: 10,
            base_seed: 0,
            p: 20,
            n_e: 5,
            pool_size: 200,
            prior_var: 1.0,
            k: 40,
            ell: 40,
            tightened: false,
            with_costs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub seed: u64,
    pub criterion: Criterion,
    pub k: usize,
    pub greedy_cost: Option<f64>,
    pub random_cost: Option<f64>,
    pub equiv_alpha: Option<f64>,
    pub equiv_epsilon: Option<f64>,
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.seed,
            self.criterion,
            self.k,
            opt(self.greedy_cost),
            opt(self.random_cost),
            opt(self.equiv_alpha),
            opt(self.equiv_epsilon)
        )
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn run_point(cfg: &SweepConfig, snr_db: f64, seed: u64) -> Result<SweepRow> {
    let spec = SynthSpec::from_snr_db(cfg.p, cfg.n_e, cfg.pool_size, snr_db, cfg.prior_var, seed);
    let pool = synth_pool(&spec)?;
    let (mut equiv_alpha, mut equiv_epsilon) = (None, None);
    match cfg.criterion {
        Criterion::A => {
            let c = certificates::a_certificate(&pool, cfg.k, cfg.ell, cfg.tightened, true)?;
            equiv_alpha = Some(c.equivalent_alpha);
        }
        Criterion::E => {
            let c = certificates::e_certificate(&pool, cfg.k, cfg.ell, None)?;
            equiv_epsilon = Some(c.equivalent_epsilon);
        }
        Criterion::D => {}
    }
    let (mut greedy_cost, mut random_cost) = (None, None);
    if cfg.with_costs {
        greedy_cost = Some(greedy_design(&pool, cfg.criterion, cfg.k, true)?.final_cost());
        let rd = random_design(&pool, cfg.k, seed.wrapping_add(RANDOM_SEED_OFFSET));
        random_cost = Some(criteria::cost(&pool, cfg.criterion, &rd)?);
    }
    Ok(SweepRow { snr_db, seed, criterion: cfg.criterion, k: cfg.k, greedy_cost, random_cost, equiv_alpha, equiv_epsilon })
}

/// One row per (SNR, seed), ordered by SNR then seed.
pub fn run(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.seeds == 0 || cfg.snr_db.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed and one SNR value".into()));
    }
    let points: Vec<(f64, u64)> = cfg
        .snr_db
        .iter()
        .flat_map(|&s| (0..cfg.seeds as u64).map(move |i| (s, cfg.base_seed.wrapping_add(i))))
        .collect();
    par::map(&points, |&(s, seed)| run_point(cfg, s, seed)).into_iter().collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Median of `field` per SNR value, in grid order.
pub fn medians_by_snr(rows: &[SweepRow], field: impl Fn(&SweepRow) -> Option<f64>) -> Vec<(f64, f64)> {
    let mut grid: Vec<f64> = Vec::new();
    for r in rows {
        if !grid.contains(&r.snr_db) {
            grid.push(r.snr_db);
        }
    }
    grid.into_iter()
        .filter_map(|s| {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.snr_db == s).filter_map(&field).collect();
            median(&mut v).map(|m| (s, m))
        })
        .collect()
}
