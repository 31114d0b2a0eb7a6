use std::fmt;
use std::time::Instant;

use anyhow::{bail, Context};
use optidesign::certificates::{self, CertificateReport, CertifyOptions};
use optidesign::datagen::{self, Impute, LowRankSpec, RecsysEval, SynthSpec};
use optidesign::oracle::{self, AuditOptions, GainPath, GainTable, TableEntry};
use optidesign::sweep::{self, SweepConfig};
use optidesign::{io, Criterion, Design, GreedyTrace, Pool};
use serde::{Deserialize, Serialize};

use crate::output::{emit, emit_json, RunResult, TOOL_VERSION};
use crate::*;

/// Slack for checking a certified inequality against oracle values.
const CHECK_TOL: f64 = 1e-9;

/// Invalid invocation detected after argument parsing (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Sizes the global rayon pool from `OPTIDESIGN_THREADS`.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("OPTIDESIGN_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("OPTIDESIGN_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Design(a) => design(a),
        Command::Certify(a) => certify(a),
        Command::Audit(a) => audit(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Bench(BenchCommand::FigA(a)) => bench(a, Criterion::A),
        Command::Bench(BenchCommand::FigE(a)) => bench(a, Criterion::E),
        Command::Recsys(a) => recsys(a),
    }
}

fn synth_spec(params: &SynthParams, seed: u64) -> SynthSpec {
    match params.noise_var {
        Some(noise_var) => SynthSpec {
            p: params.p,
            n_e: params.n_e,
            pool_size: params.pool_size,
            noise_var,
            prior_var: params.prior_var,
            seed,
        },
        None => SynthSpec::from_snr_db(params.p, params.n_e, params.pool_size, params.snr_db, params.prior_var, seed),
    }
}

fn load_pool(source: &PoolSource) -> anyhow::Result<Pool> {
    match (&source.pool, source.synth_seed) {
        (Some(path), _) => io::read_pool(path).with_context(|| format!("reading pool {}", path.display())),
        (None, Some(seed)) => Ok(datagen::synth_pool(&synth_spec(&source.synth, seed))?),
        (None, None) => Err(usage("one of --pool or --synth-seed is required")),
    }
}

fn envelope<T: Serialize>(
    command: &str,
    config: &impl Serialize,
    pool: Option<&Pool>,
    started: Instant,
    payload: T,
) -> anyhow::Result<RunResult<T>> {
    Ok(RunResult {
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        config: serde_json::to_value(config)?,
        pool_hash: pool.map(io::pool_hash),
        wall_time_s: started.elapsed().as_secs_f64(),
        payload,
    })
}

fn design(args: DesignArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let pool = load_pool(&args.source)?;
    let c = &args.common;
    let trace = optidesign::greedy_design(&pool, c.criterion.into(), c.k, !c.without_replacement)?;
    eprintln!(
        "greedy {}-design, {} steps: cost {:.6e}, {} distinct experiments",
        Criterion::from(c.criterion),
        trace.steps.len(),
        trace.final_cost(),
        trace.final_design.ids().count()
    );
    emit_json(c.out.as_deref(), &envelope("design", &args, Some(&pool), started, trace)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CertifiedCheck {
    pub greedy_value: f64,
    pub optimal_value: f64,
    pub optimal_design: Design,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CertifyPayload {
    pub certificate: CertificateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CertifiedCheck>,
}

fn read_trace(path: &std::path::Path, pool_hash: &str, criterion: Criterion) -> anyhow::Result<GreedyTrace> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
    let result: RunResult<GreedyTrace> =
        serde_json::from_str(&text).with_context(|| format!("{} is not a design result", path.display()))?;
    match result.pool_hash.as_deref() {
        Some(h) if h == pool_hash => {}
        Some(h) => bail!("pool hash mismatch: trace was computed on {h}, pool is {pool_hash}"),
        None => bail!("trace {} carries no pool hash", path.display()),
    }
    if result.payload.criterion != criterion {
        bail!("trace is a {}-design, certificate requested for {criterion}", result.payload.criterion);
    }
    Ok(result.payload)
}

fn certify(args: CertifyArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let pool = load_pool(&args.source)?;
    let c = &args.common;
    let criterion: Criterion = c.criterion.into();
    let with_replacement = !c.without_replacement;
    let hash = io::pool_hash(&pool);
    let trace = args.trace.as_deref().map(|p| read_trace(p, &hash, criterion)).transpose()?;
    if let Some(t) = &trace {
        if t.with_replacement != with_replacement {
            return Err(usage("trace and --without-replacement disagree"));
        }
    }
    let ell = args.ell.or(trace.as_ref().map(|t| t.ell)).unwrap_or(c.k);
    if let Some(t) = &trace {
        if t.ell != ell {
            return Err(usage(format!("trace has {} steps but --ell is {ell}", t.ell)));
        }
    }

    let mut f_star = args.f_star;
    let mut optimum = None;
    if args.with_oracle {
        let report = oracle::optimal_design_bruteforce(&pool, criterion, c.k, with_replacement)?;
        f_star = Some(report.optimal_value);
        optimum = Some(report);
    }
    let opts = CertifyOptions { tightened: args.tightened, with_replacement, f_star };
    let certificate = certificates::certify(&pool, criterion, c.k, ell, &opts)?;

    let check = match optimum {
        None => None,
        Some(opt) => {
            let greedy_value = match &trace {
                Some(t) => t.final_cost(),
                None => optidesign::greedy_design(&pool, criterion, ell, with_replacement)?.final_cost(),
            };
            let f = opt.optimal_value;
            let bound = match criterion {
                Criterion::A => certificate.alpha.as_ref().expect("A certificate").factor_product * f,
                Criterion::E => certificate.epsilon.as_ref().expect("E certificate").product_bound(f),
                Criterion::D => (1.0 - (1.0 - 1.0 / c.k as f64).powi(ell as i32)) * f,
            };
            let holds = greedy_value <= bound + CHECK_TOL;
            Some(CertifiedCheck { greedy_value, optimal_value: f, optimal_design: opt.optimal_design, bound, holds })
        }
    };

    match (&certificate.alpha, &certificate.epsilon, &certificate.d) {
        (Some(a), _, _) => eprintln!(
            "A certificate k={} ell={ell}: factor {:.6}, equivalent alpha {:.6}",
            c.k, a.factor_product, a.equivalent_alpha
        ),
        (_, Some(e), _) => eprintln!(
            "E certificate k={} ell={ell}: multiplicative {:.6}, additive {:.6e}, equivalent epsilon {:.6e}",
            c.k, e.multiplicative, e.additive_product, e.equivalent_epsilon
        ),
        (_, _, Some(d)) => eprintln!("D guarantee k={}: {:.6}", c.k, d.finite),
        _ => {}
    }
    if let Some(ch) = &check {
        eprintln!(
            "greedy {:.6e} vs bound {:.6e} (optimum {:.6e}): {}",
            ch.greedy_value,
            ch.bound,
            ch.optimal_value,
            if ch.holds { "holds" } else { "VIOLATED" }
        );
    }
    let payload = CertifyPayload { certificate, check };
    emit_json(c.out.as_deref(), &envelope("certify", &args, Some(&pool), started, payload)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditPayload {
    pub criterion: Criterion,
    pub k: usize,
    pub ell: usize,
    pub alpha_table: Vec<TableEntry>,
    pub epsilon_table: Vec<TableEntry>,
    /// Minimum over the defined α entries.
    pub alpha_bar: Option<f64>,
    pub epsilon_bar: f64,
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let pool = load_pool(&args.source)?;
    let c = &args.common;
    let criterion: Criterion = c.criterion.into();
    let ell = args.ell.unwrap_or(c.k);
    if c.k == 0 || ell == 0 {
        return Err(usage("audit needs k >= 1 and ell >= 1"));
    }
    let opts = AuditOptions {
        path: if args.recompute { GainPath::Recompute } else { GainPath::Incremental },
        ..Default::default()
    };
    let table = GainTable::build(&pool, criterion, ell + c.k - 1, &opts)?;
    let alpha_table = table.alpha_table(c.k, ell)?;
    let epsilon_table = table.epsilon_table(c.k, ell)?;
    let alpha_bar = alpha_table.iter().filter_map(|e| e.value).reduce(f64::min);
    let epsilon_bar = epsilon_table.iter().filter_map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
    eprintln!(
        "audit {criterion} k={} ell={ell}: alpha_bar {}, epsilon_bar {epsilon_bar:.6e}",
        c.k,
        alpha_bar.map_or("undefined".to_string(), |a| format!("{a:.6}"))
    );
    let payload = AuditPayload { criterion, k: c.k, ell, alpha_table, epsilon_table, alpha_bar, epsilon_bar };
    emit_json(c.out.as_deref(), &envelope("audit", &args, Some(&pool), started, payload)?)
}

fn oracle_cmd(args: OracleArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let pool = load_pool(&args.source)?;
    let c = &args.common;
    let report = oracle::optimal_design_bruteforce(&pool, c.criterion.into(), c.k, !c.without_replacement)?;
    eprintln!(
        "optimum over {} designs: {:.6e} with {} experiments",
        report.designs_enumerated,
        report.optimal_value,
        report.optimal_design.size()
    );
    emit_json(c.out.as_deref(), &envelope("oracle", &args, Some(&pool), started, report)?)
}

fn synth(args: SynthOutArgs) -> anyhow::Result<()> {
    let spec = synth_spec(&args.synth, args.seed);
    let pool = datagen::synth_pool(&spec)?;
    eprintln!(
        "synthetic pool: p={} |E|={} n_e={} noise_var={:.6e} hash {}",
        spec.p,
        spec.pool_size,
        spec.n_e,
        spec.noise_var,
        io::pool_hash(&pool)
    );
    let mut text = io::pool_to_json(&pool);
    text.push('\n');
    emit(args.out.as_deref(), text.as_bytes())
}

fn snr_grid(args: &SweepArgs) -> anyhow::Result<Vec<f64>> {
    if !(args.snr_step > 0.0) || args.snr_max < args.snr_min {
        return Err(usage("SNR grid needs snr_step > 0 and snr_max >= snr_min"));
    }
    let n = ((args.snr_max - args.snr_min) / args.snr_step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| args.snr_min + i as f64 * args.snr_step).collect())
}

fn bench(args: SweepArgs, criterion: Criterion) -> anyhow::Result<()> {
    let cfg = SweepConfig {
        criterion,
        snr_db: snr_grid(&args)?,
        seeds: args.seeds,
        base_seed: args.base_seed,
        p: args.p,
        n_e: args.n_e,
        pool_size: args.pool_size,
        prior_var: args.prior_var,
        k: args.k,
        ell: args.ell.unwrap_or(args.k),
        tightened: args.tightened,
        with_costs: !args.no_costs,
    };
    let rows = sweep::run(&cfg)?;
    let field = |r: &sweep::SweepRow| if criterion == Criterion::A { r.equiv_alpha } else { r.equiv_epsilon };
    for (snr, m) in sweep::medians_by_snr(&rows, field) {
        eprintln!("snr {snr:>6.1} dB  median {} {m:.6e}", if criterion == Criterion::A { "alpha" } else { "epsilon" });
    }
    emit(args.out.as_deref(), sweep::to_csv(&rows).as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecsysRun {
    pub design: Design,
    pub eval: RecsysEval,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecsysPayload {
    pub p: usize,
    pub n_movies: usize,
    pub n_test_users: usize,
    pub greedy: RecsysRun,
    pub random: Vec<RecsysRun>,
    /// Random surveys whose MAE exceeds greedy's.
    pub greedy_wins: usize,
}

fn recsys(args: RecsysArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let table = match (&args.ratings, args.synth_seed) {
        (Some(path), _) => datagen::load_ratings(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(seed)) => datagen::synth_ratings(&LowRankSpec { seed, ..Default::default() })?,
        (None, None) => return Err(usage("one of --ratings or --synth-seed is required")),
    };
    if args.train_users == 0 || args.train_users >= table.users.len() {
        return Err(usage(format!(
            "--train-users must lie in 1..{}, got {}",
            table.users.len(),
            args.train_users
        )));
    }
    let train = &table.users[..args.train_users];
    let mut test = &table.users[args.train_users..];
    if let Some(n) = args.test_users {
        test = &test[..n.min(test.len())];
    }
    let impute = match args.impute {
        ImputeArg::Zero => Impute::Zero,
        ImputeArg::Mean => Impute::Mean,
    };
    let pool = datagen::build_recsys_pool(&table, train, args.noise_var, args.prior_var, impute)?;
    let trace = optidesign::greedy_design(&pool, Criterion::A, args.k, false)?;
    let greedy = RecsysRun { eval: datagen::evaluate_recsys(&pool, &table, test, &trace.final_design)?, design: trace.final_design };
    let random = (0..args.random_trials)
        .map(|i| {
            let design = datagen::random_subset(&pool, args.k, args.seed.wrapping_add(i as u64))?;
            let eval = datagen::evaluate_recsys(&pool, &table, test, &design)?;
            Ok(RecsysRun { design, eval })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let greedy_wins = random.iter().filter(|r| r.eval.mae > greedy.eval.mae).count();
    eprintln!(
        "recsys k={}: greedy MAE {:.4}, random MAE {}, greedy better in {greedy_wins}/{}",
        args.k,
        greedy.eval.mae,
        random.iter().map(|r| format!("{:.4}", r.eval.mae)).collect::<Vec<_>>().join(" "),
        random.len()
    );
    let payload = RecsysPayload {
        p: pool.p(),
        n_movies: pool.len(),
        n_test_users: test.len(),
        greedy,
        random,
        greedy_wins,
    };
    emit_json(args.out.as_deref(), &envelope("recsys", &args, Some(&pool), started, payload)?)
}
