//! Normalized A-, E- and D-optimality costs and their marginal gains.
//!
//! Each cost subtracts its value on the empty design, so every criterion is
//! zero at `D = ∅` and nonpositive (monotone decreasing) elsewhere:
//!
//! ```text
//! A:  trace K(D)   - trace(H R_θ Hᵀ)
//! E:  λmax K(D)    - λmax(H R_θ Hᵀ)
//! D:  logdet K(D)  - logdet(H R_θ Hᵀ)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, SymMatrix, WoodburyTerm};
use crate::model::{self, Design, DesignState, ExperimentId, Pool};
use crate::par;

/// Negative gains down to `-GAIN_CLAMP_TOL * max(1, |cost|)` are clamped to 0.
pub const GAIN_CLAMP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    A,
    E,
    D,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::A, Criterion::E, Criterion::D];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::A => "A",
            Criterion::E => "E",
            Criterion::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Criterion::A),
            "E" | "e" => Ok(Criterion::E),
            "D" | "d" => Ok(Criterion::D),
            other => Err(Error::InvalidArgument(format!("unknown criterion {other:?}, expected A, E or D"))),
        }
    }
}

/// Normalized cost given a cached `Y(D)⁻¹`.
pub fn cost_from_y_inv(pool: &Pool, criterion: Criterion, y_inv: &SymMatrix) -> Result<f64> {
    let k = pool.covariance_from_y_inv(y_inv);
    cost_from_covariance(pool, criterion, &k)
}

pub(crate) fn cost_from_covariance(pool: &Pool, criterion: Criterion, k: &SymMatrix) -> Result<f64> {
    let base = pool.baseline();
    match criterion {
        Criterion::A => Ok(k.trace() - base.trace),
        Criterion::E => Ok(linalg::lambda_max(k) - base.lambda_max),
        Criterion::D => {
            let base_logdet = base
                .logdet
                .ok_or_else(|| Error::not_pd("D criterion needs a full row rank target H"))?;
            let f = cholesky(k).map_err(|_| Error::not_pd("error covariance K(D) for the D criterion"))?;
            Ok(linalg::logdet(&f) - base_logdet)
        }
    }
}

pub fn cost(pool: &Pool, criterion: Criterion, design: &Design) -> Result<f64> {
    if criterion == Criterion::D {
        pool.check_d_criterion()?;
    }
    let k = model::error_covariance(pool, design)?;
    cost_from_covariance(pool, criterion, &k)
}

pub fn a_cost(pool: &Pool, design: &Design) -> Result<f64> {
    cost(pool, Criterion::A, design)
}

pub fn e_cost(pool: &Pool, design: &Design) -> Result<f64> {
    cost(pool, Criterion::E, design)
}

pub fn d_cost(pool: &Pool, design: &Design) -> Result<f64> {
    cost(pool, Criterion::D, design)
}

/// Cost decrease from adding one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub experiment_id: ExperimentId,
    pub gain: f64,
}

fn clamp_gain(raw: f64, reference_cost: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if raw >= 0.0 {
        return Ok(raw);
    }
    let tol = GAIN_CLAMP_TOL * reference_cost.abs().max(1.0);
    if raw >= -tol {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "negative gain {raw:e} ({}) contradicts monotonicity of K",
            what()
        )))
    }
}

/// A-gain by the inversion lemma:
/// `Δ_u(X) = trace[H Y⁻¹ M_u (Y + M_u)⁻¹ Hᵀ] = ‖L_C⁻¹ Aᵤ Y⁻¹ Hᵀ‖²_F`
/// with `C = R_u + A_u Y⁻¹ A_uᵀ`. `Y` is never refactored.
pub fn a_gain_fast(pool: &Pool, state: &DesignState, u: ExperimentId) -> Result<GainRecord> {
    let e = pool.experiment(u)?;
    let term = WoodburyTerm::new(state.y_inv(), e.a(), e.r())?;
    Ok(GainRecord { experiment_id: u, gain: term.trace_reduction(pool.target_map()) })
}

pub(crate) struct Evaluated {
    pub gain: f64,
    pub term: WoodburyTerm,
}

pub(crate) fn evaluate_candidate(
    criterion: Criterion,
    pool: &Pool,
    state: &DesignState,
    current_cost: f64,
    u: ExperimentId,
) -> Result<Evaluated> {
    let e = pool.experiment(u)?;
    let term = WoodburyTerm::new(state.y_inv(), e.a(), e.r())?;
    let gain = match criterion {
        Criterion::A => term.trace_reduction(pool.target_map()),
        Criterion::E | Criterion::D => {
            let next = cost_from_y_inv(pool, criterion, &term.apply(state.y_inv()))?;
            clamp_gain(current_cost - next, current_cost, || format!("{criterion} gain of {u}"))?
        }
    };
    Ok(Evaluated { gain, term })
}

fn current_cost(criterion: Criterion, pool: &Pool, state: &DesignState) -> Result<f64> {
    if state.criterion() == criterion {
        Ok(state.criterion_value())
    } else {
        cost_from_y_inv(pool, criterion, state.y_inv())
    }
}

/// `cost(X) − cost(X ∪ {u})` for any criterion. A uses [`a_gain_fast`]; E and D
/// recompute the cost from the Woodbury-updated inverse.
pub fn gain(criterion: Criterion, pool: &Pool, state: &DesignState, u: ExperimentId) -> Result<GainRecord> {
    if criterion == Criterion::D {
        pool.check_d_criterion()?;
    }
    let base = current_cost(criterion, pool, state)?;
    let ev = evaluate_candidate(criterion, pool, state, base, u)?;
    Ok(GainRecord { experiment_id: u, gain: ev.gain })
}

/// Gains of every listed candidate. Evaluated in parallel when the
/// `parallel` feature is on; the output order follows `candidates`.
pub fn candidate_gains(
    criterion: Criterion,
    pool: &Pool,
    state: &DesignState,
    candidates: &[ExperimentId],
) -> Result<Vec<GainRecord>> {
    if criterion == Criterion::D {
        pool.check_d_criterion()?;
    }
    let base = current_cost(criterion, pool, state)?;
    par::map(candidates, |&u| {
        evaluate_candidate(criterion, pool, state, base, u).map(|ev| GainRecord { experiment_id: u, gain: ev.gain })
    })
    .into_iter()
    .collect()
}

/// Gain by two independent factorizations, `cost(X) − cost(X ∪ {u})`.
/// Slow; used as a reference.
pub fn recomputed_gain(criterion: Criterion, pool: &Pool, design: &Design, u: ExperimentId) -> Result<f64> {
    let before = cost(pool, criterion, design)?;
    let mut next = design.clone();
    next.add(u);
    let after = cost(pool, criterion, &next)?;
    clamp_gain(before - after, before, || format!("{criterion} gain of {u}"))
}
