//! Greedy multiset design: at each step add the experiment whose inclusion
//! gives the largest cost reduction, with or without replacement.
//!
//! Ties (gains within [`TIE_TOL`]) go to the lowest experiment id, so a run
//! is fully determined by its inputs regardless of thread count.

use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::model::{Design, DesignState, ExperimentId, Pool};
use crate::par;

/// Absolute tolerance under which two gains count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub iteration: usize,
    pub chosen: ExperimentId,
    pub gain: f64,
    pub cost_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub criterion: Criterion,
    pub ell: usize,
    pub with_replacement: bool,
    pub steps: Vec<GreedyStep>,
    #[serde(rename = "final")]
    pub final_design: Design,
}

impl GreedyTrace {
    /// Cost of the final design, 0 for an empty run.
    pub fn final_cost(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cost_after)
    }

    /// Cost after the first `h` steps.
    pub fn cost_at(&self, h: usize) -> f64 {
        if h == 0 {
            0.0
        } else {
            self.steps[h - 1].cost_after
        }
    }
}

/// Index of the best gain; ties within [`TIE_TOL`] keep the earliest entry.
/// Candidates must be listed in increasing id order.
pub(crate) fn argmax_gain(gains: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &g) in gains.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if g > gains[b] + TIE_TOL => best = Some(i),
            _ => {}
        }
    }
    best
}

pub fn greedy_design(pool: &Pool, criterion: Criterion, ell: usize, with_replacement: bool) -> Result<GreedyTrace> {
    if !with_replacement && ell > pool.len() {
        return Err(Error::PoolExhausted { requested: ell, available: pool.len() });
    }
    let mut state = DesignState::new(pool, criterion)?;
    let mut steps = Vec::with_capacity(ell);
    let mut available: Vec<ExperimentId> = pool.ids().collect();

    for iteration in 1..=ell {
        let base = state.criterion_value();
        let evaluated = par::map(&available, |&u| criteria::evaluate_candidate(criterion, pool, &state, base, u));
        let evaluated: Vec<_> = evaluated.into_iter().collect::<Result<_>>()?;
        let gains: Vec<f64> = evaluated.iter().map(|ev| ev.gain).collect();
        let best = argmax_gain(&gains).ok_or(Error::EmptyPool)?;
        let chosen = available[best];
        state.add_with_term(pool, chosen, &evaluated[best].term)?;
        steps.push(GreedyStep { iteration, chosen, gain: gains[best], cost_after: state.criterion_value() });
        if !with_replacement {
            available.remove(best);
        }
    }

    Ok(GreedyTrace {
        criterion,
        ell,
        with_replacement,
        steps,
        final_design: state.design().clone(),
    })
}
