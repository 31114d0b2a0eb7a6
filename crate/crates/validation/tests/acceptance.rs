//! Acceptance suite. Every test prints one `[PASS]`/`[FAIL]` line and then
//! asserts it. Run with `--nocapture` to see the lines of passing tests.

use std::time::{Duration, Instant};

use optidesign::certificates::{self, PoolSpectra};
use optidesign::criteria::{self, Criterion};
use optidesign::datagen::{self, LowRankSpec, SynthSpec};
use optidesign::linalg::{self, cholesky, SymMatrix};
use optidesign::model::{self, DesignState};
use optidesign::oracle::{self, AuditOptions, GainTable};
use optidesign::sweep::{self, SweepConfig};
use optidesign::{greedy_design, Pool};
use optidesign_validation::{random_multiset, random_nested_pair, random_pool, rng, small_instance, InstanceShape};
use rand::Rng;

const SMALL_INSTANCES: u64 = 50;
const SMALL_SEED: u64 = 10_000;
/// Absolute slack on certified inequalities and bound comparisons.
const BOUND_TOL: f64 = 1e-9;
const SMALL_TIME_LIMIT: Duration = Duration::from_secs(120);
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(300);
const ALPHA_BAND: (f64, f64) = (0.60, 0.90);
const ALPHA_BAND_SNR_DB: f64 = -10.0;
/// Slack on the monotonicity of sweep medians.
const MONOTONE_TOL: f64 = 1e-12;
const LOW_SNR_NOISE_VAR: f64 = 10.0;
const GREEDY_VS_RANDOM_TRIALS: u64 = 20;
const GREEDY_VS_RANDOM_MIN_RATE: f64 = 0.95;
const MC_INSTANCES: u64 = 5;
const MC_DRAWS: usize = 100_000;
const MC_SIGMAS: f64 = 3.0;
const PERTURBATIONS: usize = 50;
const FAST_GAIN_CASES: u64 = 500;
const FAST_GAIN_REL_TOL: f64 = 1e-8;
const MONOTONICITY_CASES: u64 = 200;
const MONOTONICITY_TOL: f64 = 1e-8;
const SANDWICH_CASES: u64 = 200;
const SANDWICH_TOL: f64 = 1e-9;
const RECSYS_TRIALS: u64 = 20;
const RECSYS_MIN_RATE: f64 = 0.80;
const RECSYS_K: usize = 20;
const RANK_ONE_MAE: f64 = 1e-3;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] criterion {id:02} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

struct Small {
    seed: u64,
    pool: Pool,
    k: usize,
}

fn small_instances() -> Vec<Small> {
    (0..SMALL_INSTANCES)
        .map(|i| Small { seed: SMALL_SEED + i, pool: small_instance(SMALL_SEED + i), k: 1 + (i % 3) as usize })
        .collect()
}

fn table(s: &Small, criterion: Criterion) -> GainTable {
    GainTable::build(&s.pool, criterion, 2 * s.k - 1, &AuditOptions::default()).unwrap()
}

fn optimum(s: &Small, criterion: Criterion) -> f64 {
    oracle::optimal_design_bruteforce(&s.pool, criterion, s.k, true).unwrap().optimal_value
}

fn greedy_value(s: &Small, criterion: Criterion) -> f64 {
    greedy_design(&s.pool, criterion, s.k, true).unwrap().final_cost()
}

fn pairs(k: usize, ell: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..ell).flat_map(move |a| (a..ell + k).map(move |b| (a, b)))
}

#[test]
fn criterion_01_multiplicative_guarantee_a() {
    let started = Instant::now();
    let (mut ok_exhaustive, mut ok_closed, mut worst) = (0, 0, f64::NEG_INFINITY);
    let instances = small_instances();
    for s in &instances {
        let t = table(s, Criterion::A);
        let exhaustive = certificates::alpha_guarantee(|a, b| t.alpha(a, b).unwrap().value.unwrap_or(1.0), s.k, s.k)
            .unwrap();
        let closed = certificates::a_certificate(&s.pool, s.k, s.k, false, true).unwrap();
        let (g, f) = (greedy_value(s, Criterion::A), optimum(s, Criterion::A));
        let gap_exhaustive = g - exhaustive.factor_product * f;
        let gap_closed = g - closed.factor_product * f;
        worst = worst.max(gap_exhaustive).max(gap_closed);
        ok_exhaustive += usize::from(gap_exhaustive <= BOUND_TOL);
        ok_closed += usize::from(gap_closed <= BOUND_TOL);
        if gap_exhaustive > BOUND_TOL || gap_closed > BOUND_TOL {
            println!("  instance {}: greedy {g:e}, optimum {f:e}, gaps {gap_exhaustive:e} / {gap_closed:e}", s.seed);
        }
    }
    let elapsed = started.elapsed();
    let n = instances.len();
    report(
        1,
        "A greedy within product-form alpha certificate",
        ok_exhaustive == n && ok_closed == n && elapsed < SMALL_TIME_LIMIT,
        format!(
            "exhaustive alpha {ok_exhaustive}/{n}, closed-form alpha {ok_closed}/{n}, max gap {worst:.3e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_additive_guarantee_e() {
    let (mut ok_exhaustive, mut ok_closed, mut worst) = (0, 0, f64::NEG_INFINITY);
    let instances = small_instances();
    for s in &instances {
        let t = table(s, Criterion::E);
        let exhaustive =
            certificates::epsilon_guarantee(|a, b| t.epsilon(a, b).unwrap().value.unwrap(), s.k, s.k, None).unwrap();
        let closed = certificates::e_certificate(&s.pool, s.k, s.k, None).unwrap();
        let (g, f) = (greedy_value(s, Criterion::E), optimum(s, Criterion::E));
        let gap_exhaustive = g - exhaustive.product_bound(f);
        let gap_closed = g - closed.product_bound(f);
        worst = worst.max(gap_exhaustive).max(gap_closed);
        ok_exhaustive += usize::from(gap_exhaustive <= BOUND_TOL);
        ok_closed += usize::from(gap_closed <= BOUND_TOL);
    }
    let n = instances.len();
    report(
        2,
        "E greedy within additive epsilon certificate",
        ok_exhaustive == n && ok_closed == n,
        format!("exhaustive epsilon {ok_exhaustive}/{n}, closed-form epsilon {ok_closed}/{n}, max gap {worst:.3e}"),
    );
}

#[test]
fn criterion_03_closed_form_bounds_are_valid() {
    let (mut checked, mut failures) = (0, 0);
    let (mut alpha_margin, mut eps_margin) = (f64::INFINITY, f64::INFINITY);
    for s in &small_instances() {
        let spectra = PoolSpectra::new(&s.pool);
        let ta = table(s, Criterion::A);
        let te = table(s, Criterion::E);
        for (a, b) in pairs(s.k, s.k) {
            if let Some(v) = ta.alpha(a, b).unwrap().value {
                let bound = spectra.alpha_bound(a).unwrap();
                alpha_margin = alpha_margin.min(v - bound);
                failures += usize::from(v < bound - BOUND_TOL);
                checked += 1;
            }
            let v = te.epsilon(a, b).unwrap().value.unwrap();
            let bound = spectra.epsilon_bound(a, b).unwrap();
            eps_margin = eps_margin.min(bound - v);
            failures += usize::from(v > bound + BOUND_TOL);
            checked += 1;
        }
    }
    report(
        3,
        "exhaustive alpha/epsilon respect closed-form bounds",
        failures == 0,
        format!("{checked} comparisons, {failures} violations, min alpha margin {alpha_margin:.3e}, min epsilon margin {eps_margin:.3e}"),
    );
}

#[test]
fn criterion_04_d_cost_is_supermodular() {
    let (mut worst_eps, mut worst_alpha, mut checked) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for s in &small_instances() {
        let t = table(s, Criterion::D);
        for (a, b) in pairs(s.k, s.k) {
            worst_eps = worst_eps.max(t.epsilon(a, b).unwrap().value.unwrap());
            if let Some(v) = t.alpha(a, b).unwrap().value {
                worst_alpha = worst_alpha.min(v);
            }
            checked += 1;
        }
    }
    report(
        4,
        "D cost supermodular on small instances",
        worst_eps <= BOUND_TOL && worst_alpha >= 1.0 - BOUND_TOL,
        format!("{checked} (a, b) pairs, max epsilon {worst_eps:.3e}, min alpha {worst_alpha:.12}"),
    );
}

fn is_monotone(medians: &[(f64, f64)], increasing: bool) -> bool {
    medians.windows(2).all(|w| {
        let d = w[1].1 - w[0].1;
        if increasing {
            d >= -MONOTONE_TOL
        } else {
            d <= MONOTONE_TOL
        }
    })
}

fn format_medians(medians: &[(f64, f64)]) -> String {
    medians.iter().map(|(s, m)| format!("{s}:{m:.3}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn criterion_05_equivalent_alpha_sweep() {
    let started = Instant::now();
    let cfg = SweepConfig { with_costs: false, ..SweepConfig::new(Criterion::A) };
    let rows = sweep::run(&cfg).unwrap();
    let medians = sweep::medians_by_snr(&rows, |r| r.equiv_alpha);
    let at_band = medians.iter().find(|(s, _)| *s == ALPHA_BAND_SNR_DB).map(|m| m.1).unwrap();
    let in_band = (ALPHA_BAND.0..=ALPHA_BAND.1).contains(&at_band);
    let monotone = is_monotone(&medians, false);
    let elapsed = started.elapsed();
    report(
        5,
        "equivalent alpha band and monotonicity",
        in_band && monotone && elapsed < SWEEP_TIME_LIMIT,
        format!(
            "median at {ALPHA_BAND_SNR_DB} dB = {at_band:.4} (band {:?}), nonincreasing {monotone}, {:.1}s; medians {}",
            ALPHA_BAND,
            elapsed.as_secs_f64(),
            format_medians(&medians)
        ),
    );
}

#[test]
fn criterion_06_greedy_beats_random_low_snr() {
    let ks = [10, 20, 30, 40];
    let mut wins = [0usize; 4];
    for t in 0..GREEDY_VS_RANDOM_TRIALS {
        let spec = SynthSpec { p: 20, n_e: 5, pool_size: 200, noise_var: LOW_SNR_NOISE_VAR, prior_var: 1.0, seed: 600 + t };
        let pool = datagen::synth_pool(&spec).unwrap();
        let trace = greedy_design(&pool, Criterion::A, 40, true).unwrap();
        for (i, &k) in ks.iter().enumerate() {
            let random = datagen::random_design(&pool, k, 6_000 + 100 * t + k as u64);
            let random_cost = criteria::a_cost(&pool, &random).unwrap();
            wins[i] += usize::from(trace.cost_at(k) <= random_cost);
        }
    }
    let need = (GREEDY_VS_RANDOM_MIN_RATE * GREEDY_VS_RANDOM_TRIALS as f64).ceil() as usize;
    report(
        6,
        "greedy A cost no worse than random at low SNR",
        wins.iter().all(|&w| w >= need),
        format!("wins per k {ks:?} = {wins:?} of {GREEDY_VS_RANDOM_TRIALS} (need {need})"),
    );
}

#[test]
fn criterion_07_equivalent_epsilon_sweep() {
    let cfg = SweepConfig { with_costs: false, ..SweepConfig::new(Criterion::E) };
    let rows = sweep::run(&cfg).unwrap();
    let medians = sweep::medians_by_snr(&rows, |r| r.equiv_epsilon);
    let monotone = is_monotone(&medians, true);
    report(
        7,
        "equivalent epsilon nondecreasing in SNR",
        monotone,
        format!("medians {}", format_medians(&medians)),
    );
}

#[test]
fn criterion_08_estimator_validation() {
    let mut lines = Vec::new();
    let mut pass = true;
    for i in 0..MC_INSTANCES {
        let mut r = rng(800 + i);
        let pool = random_pool(&mut r, InstanceShape { p: 3, pool_size: 4, max_n_e: 2, random_target: true });
        let design = random_multiset(&mut r, &pool, 3);
        let trace_k = model::error_covariance(&pool, &design).unwrap().trace();
        let mc = oracle::monte_carlo_mse(&pool, &design, MC_DRAWS, 8_000 + i).unwrap();
        let z = (mc.mse - trace_k) / mc.std_error;
        let opt = oracle::estimator_optimality_check(&pool, &design, PERTURBATIONS, 9_000 + i).unwrap();
        pass &= z.abs() <= MC_SIGMAS && opt.passed == PERTURBATIONS;
        lines.push(format!("z={z:+.2} perturb {}/{}", opt.passed, opt.total));
    }
    report(8, "Monte-Carlo MSE and estimator optimality", pass, lines.join("; "));
}

#[test]
fn criterion_09_fast_gain_matches_recomputation() {
    let mut r = rng(900);
    let mut worst: f64 = 0.0;
    for _ in 0..FAST_GAIN_CASES {
        let p = r.gen_range(1..=6);
        let random_target = r.gen_bool(0.5);
        let pool = random_pool(&mut r, InstanceShape { p, pool_size: 3, max_n_e: 3, random_target });
        let size = r.gen_range(0..=5);
        let design = random_multiset(&mut r, &pool, size);
        let u = pool.experiments()[r.gen_range(0..pool.len())].id();
        let state = DesignState::from_design(&pool, &design, Criterion::A).unwrap();
        let fast = criteria::a_gain_fast(&pool, &state, u).unwrap().gain;
        let slow = criteria::recomputed_gain(Criterion::A, &pool, &design, u).unwrap();
        worst = worst.max((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE));
    }
    report(
        9,
        "fast A gain equals recomputed gain",
        worst < FAST_GAIN_REL_TOL,
        format!("{FAST_GAIN_CASES} cases, max relative error {worst:.3e}"),
    );
}

#[test]
fn criterion_10_covariance_monotone_in_design() {
    let mut r = rng(1_000);
    let (mut violations, mut worst) = (0, f64::INFINITY);
    for _ in 0..MONOTONICITY_CASES {
        let p = r.gen_range(1..=5);
        let random_target = r.gen_bool(0.5);
        let pool = random_pool(&mut r, InstanceShape { p, pool_size: 4, max_n_e: 3, random_target });
        let (a, extra) = (r.gen_range(0..=4), r.gen_range(0..=4));
        let (small, big) = random_nested_pair(&mut r, &pool, a, extra);
        let ka = model::error_covariance(&pool, &small).unwrap();
        let kb = model::error_covariance(&pool, &big).unwrap();
        let diff = SymMatrix::new(ka.as_matrix() - kb.as_matrix()).unwrap();
        let lmin = linalg::eigenvalues(&diff)[0];
        let floor = -MONOTONICITY_TOL * linalg::lambda_max(&ka).max(1.0);
        worst = worst.min(lmin);
        violations += usize::from(lmin < floor);
    }
    report(
        10,
        "error covariance decreases along nested designs",
        violations == 0,
        format!("{MONOTONICITY_CASES} pairs, {violations} violations, min eigenvalue {worst:.3e}"),
    );
}

#[test]
fn criterion_11_gain_spectral_sandwich() {
    let mut r = rng(1_100);
    let mut violations = 0;
    let (mut lo_margin, mut hi_margin) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..SANDWICH_CASES {
        let p = r.gen_range(1..=5);
        let pool = random_pool(&mut r, InstanceShape { p, pool_size: 4, max_n_e: 3, random_target: true });
        let size = r.gen_range(0..=4);
        let design = random_multiset(&mut r, &pool, size);
        let u = pool.experiments()[r.gen_range(0..pool.len())].id();
        let gain = criteria::recomputed_gain(Criterion::A, &pool, &design, u).unwrap();

        let y = model::information_matrix(&pool, &design).unwrap();
        let m = pool.experiment(u).unwrap().m();
        let y_plus = SymMatrix::new(y.as_matrix() + m.as_matrix()).unwrap();
        let mid = linalg::solve_psd(&cholesky(&y_plus).unwrap(), m.as_matrix()).unwrap().trace();
        let h = pool.target();
        let hht = SymMatrix::new(h * h.transpose()).unwrap();
        let (h_min, h_max) = linalg::extreme_eigs(&hht);
        let (y_min, y_max) = linalg::extreme_eigs(&y);
        let lo = h_min / y_max * mid;
        let hi = h_max / y_min * mid;
        lo_margin = lo_margin.min(gain - lo);
        hi_margin = hi_margin.min(hi - gain);
        violations += usize::from(gain < lo - SANDWICH_TOL || gain > hi + SANDWICH_TOL);
    }
    report(
        11,
        "A gain within spectral sandwich",
        violations == 0,
        format!("{SANDWICH_CASES} cases, {violations} violations, margins lower {lo_margin:.3e} upper {hi_margin:.3e}"),
    );
}

#[test]
fn criterion_12_cold_start_surveys() {
    let mut wins = 0;
    let mut mae_pairs = Vec::new();
    for t in 0..RECSYS_TRIALS {
        let table = datagen::synth_ratings(&LowRankSpec {
            n_users: 140,
            n_movies: 200,
            seed: 1_200 + t,
            ..Default::default()
        })
        .unwrap();
        let train = &table.users[..100];
        let test = &table.users[100..140];
        let pool = datagen::build_recsys_pool(&table, train, 1.0, 100.0, datagen::Impute::Zero).unwrap();
        let greedy = greedy_design(&pool, Criterion::A, RECSYS_K, false).unwrap().final_design;
        let random = datagen::random_subset(&pool, RECSYS_K, 12_000 + t).unwrap();
        let g = datagen::evaluate_recsys(&pool, &table, test, &greedy).unwrap().mae;
        let q = datagen::evaluate_recsys(&pool, &table, test, &random).unwrap().mae;
        wins += usize::from(g < q);
        mae_pairs.push(format!("{g:.3}/{q:.3}"));
    }

    // Noise-free rank-1 table: ratings[u][m] = a_u b_m, users 0 and 1 train.
    let a = [1.5, -0.5, 2.0];
    let b = [2.0, 1.0, 3.0, 0.5];
    let mut csv = String::from("user,movie,rating\n");
    for (u, au) in a.iter().enumerate() {
        for (m, bm) in b.iter().enumerate() {
            csv.push_str(&format!("{u},{m},{}\n", au * bm));
        }
    }
    let table = datagen::parse_ratings(csv.as_bytes()).unwrap();
    let pool = datagen::build_recsys_pool(&table, &[0, 1], 1e-6, 100.0, datagen::Impute::Zero).unwrap();
    let design = greedy_design(&pool, Criterion::A, pool.p(), false).unwrap().final_design;
    let rank_one_mae = datagen::evaluate_recsys(&pool, &table, &[2], &design).unwrap().mae;

    let need = (RECSYS_MIN_RATE * RECSYS_TRIALS as f64).ceil() as usize;
    report(
        12,
        "greedy surveys beat random surveys",
        wins >= need && rank_one_mae < RANK_ONE_MAE,
        format!(
            "greedy better in {wins}/{RECSYS_TRIALS} (need {need}), rank-1 MAE {rank_one_mae:.2e}; greedy/random MAE {}",
            mae_pairs.join(" ")
        ),
    );
}
