//! Measurement model: experiments, pools, designs, the information matrix
//! and the optimal affine estimator with its error covariance.
//!
//! An experiment `e` observes `y_e = A_e θ + v_e` with `v_e ~ (0, R_e)`.
//! The prior on `θ` has mean `θ̄` and covariance `R_θ`, and the quantity of
//! interest is `z = H θ`. For a design `D` (a multiset of experiments)
//!
//! ```text
//! Y(D) = R_θ⁻¹ + Σ_{e ∈ D} M_e,    M_e = A_eᵀ R_e⁻¹ A_e
//! K(D) = H Y(D)⁻¹ Hᵀ
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, Matrix, SymMatrix, WoodburyTerm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExperimentId(pub u64);

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for ExperimentId {
    fn from(v: u64) -> Self {
        ExperimentId(v)
    }
}

/// One measurement channel with its cached information increment.
#[derive(Debug, Clone)]
pub struct Experiment {
    id: ExperimentId,
    a: Matrix,
    r: SymMatrix,
    m: SymMatrix,
    gamma: f64,
    lambda_max: f64,
}

impl Experiment {
    pub fn new(id: impl Into<ExperimentId>, a: Matrix, r: SymMatrix) -> Result<Self> {
        let id = id.into();
        if a.nrows() != r.dim() {
            return Err(Error::dims(format!(
                "experiment {id}: A has {} rows but R is {}x{}",
                a.nrows(),
                r.dim(),
                r.dim()
            )));
        }
        if a.ncols() == 0 {
            return Err(Error::dims(format!("experiment {id}: A has no columns")));
        }
        let chol = cholesky(&r)
            .map_err(|_| Error::not_pd(format!("noise covariance R of experiment {id}")))?;
        // M = (L⁻¹A)ᵀ(L⁻¹A) is PSD by construction.
        let mut b = a.clone();
        chol.forward_solve_mut(&mut b);
        let m = SymMatrix::symmetrize(b.transpose() * &b);
        let gamma = m.trace();
        let lambda_max = linalg::lambda_max(&m).max(0.0);
        Ok(Self { id, a, r, m, gamma, lambda_max })
    }

    pub fn id(&self) -> ExperimentId {
        self.id
    }

    /// Observation matrix `A_e` (`n_e × p`).
    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Noise covariance `R_e`.
    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    /// Information increment `M_e = A_eᵀ R_e⁻¹ A_e`.
    pub fn m(&self) -> &SymMatrix {
        &self.m
    }

    /// SNR `γ_e = trace(M_e)`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `λmax(M_e)`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn n_obs(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }
}

/// Constants of the unnormalized criteria on the empty design.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Baseline {
    pub trace: f64,
    pub lambda_max: f64,
    pub logdet: Option<f64>,
}

/// The ground set of experiments together with the prior and target map.
#[derive(Debug, Clone)]
pub struct Pool {
    experiments: Vec<Experiment>,
    index: HashMap<ExperimentId, usize>,
    prior_mean: DVector<f64>,
    prior_cov: SymMatrix,
    prior_info: SymMatrix,
    target: Matrix,
    target_is_identity: bool,
    baseline: Baseline,
}

impl Pool {
    /// Experiments are stored sorted by id.
    pub fn new(
        mut experiments: Vec<Experiment>,
        prior_mean: DVector<f64>,
        prior_cov: SymMatrix,
        target: Matrix,
    ) -> Result<Self> {
        if experiments.is_empty() {
            return Err(Error::EmptyPool);
        }
        let p = prior_cov.dim();
        if prior_mean.len() != p {
            return Err(Error::dims(format!(
                "prior mean has length {} but prior covariance is {p}x{p}",
                prior_mean.len()
            )));
        }
        if target.ncols() != p || target.nrows() == 0 {
            return Err(Error::dims(format!(
                "target H is {}x{}, expected m x {p} with m >= 1",
                target.nrows(),
                target.ncols()
            )));
        }
        if let Some(e) = experiments.iter().find(|e| e.p() != p) {
            return Err(Error::dims(format!(
                "experiment {} has {} columns, prior dimension is {p}",
                e.id(),
                e.p()
            )));
        }
        experiments.sort_by_key(Experiment::id);
        let mut index = HashMap::with_capacity(experiments.len());
        for (i, e) in experiments.iter().enumerate() {
            if index.insert(e.id(), i).is_some() {
                return Err(Error::DuplicateExperimentId(e.id()));
            }
        }
        let prior_info = cholesky(&prior_cov)
            .map_err(|_| Error::not_pd("prior covariance R_θ"))?
            .inverse();
        let target_is_identity = target.is_square() && target == Matrix::identity(p, p);
        let prior_target_cov = prior_cov.congruence(&target)?;
        let baseline = Baseline {
            trace: prior_target_cov.trace(),
            lambda_max: linalg::lambda_max(&prior_target_cov),
            logdet: cholesky(&prior_target_cov).ok().map(|f| linalg::logdet(&f)),
        };
        Ok(Self {
            experiments,
            index,
            prior_mean,
            prior_cov,
            prior_info,
            target,
            target_is_identity,
            baseline,
        })
    }

    pub fn p(&self) -> usize {
        self.prior_cov.dim()
    }

    /// Number of rows of the target map.
    pub fn m(&self) -> usize {
        self.target.nrows()
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn index_of(&self, id: ExperimentId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownExperimentId(id))
    }

    pub fn experiment(&self, id: ExperimentId) -> Result<&Experiment> {
        Ok(&self.experiments[self.index_of(id)?])
    }

    pub fn ids(&self) -> impl Iterator<Item = ExperimentId> + '_ {
        self.experiments.iter().map(Experiment::id)
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &SymMatrix {
        &self.prior_cov
    }

    /// Cached `R_θ⁻¹`.
    pub fn prior_info(&self) -> &SymMatrix {
        &self.prior_info
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }

    /// `None` when `H` is the identity, letting callers skip the product.
    pub fn target_map(&self) -> Option<&Matrix> {
        (!self.target_is_identity).then_some(&self.target)
    }

    pub(crate) fn baseline(&self) -> Baseline {
        self.baseline
    }

    /// `ℓ_max = max_e λmax(M_e)`.
    pub fn ell_max(&self) -> f64 {
        self.experiments.iter().map(Experiment::lambda_max).fold(0.0, f64::max)
    }

    /// The D criterion needs `K(D)` to be nonsingular: `m <= p` and `H` of
    /// full row rank.
    pub fn check_d_criterion(&self) -> Result<()> {
        if self.m() > self.p() {
            return Err(Error::not_pd(format!(
                "D criterion needs m <= p, target is {}x{}",
                self.m(),
                self.p()
            )));
        }
        if self.baseline.logdet.is_none() {
            return Err(Error::not_pd("D criterion needs a full row rank target H"));
        }
        Ok(())
    }

    pub fn check_design(&self, design: &Design) -> Result<()> {
        for id in design.ids() {
            self.index_of(id)?;
        }
        Ok(())
    }

    /// `K(D) = H Y⁻¹ Hᵀ` for a given `Y⁻¹`.
    pub fn covariance_from_y_inv(&self, y_inv: &SymMatrix) -> SymMatrix {
        match self.target_map() {
            Some(h) => SymMatrix::symmetrize(h * y_inv.as_matrix() * h.transpose()),
            None => y_inv.clone(),
        }
    }
}

/// A multiset of experiments stored as positive multiplicities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Design {
    counts: BTreeMap<ExperimentId, usize>,
}

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero counts are dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = (ExperimentId, usize)>) -> Self {
        let mut d = Design::new();
        for (id, c) in counts {
            d.add_n(id, c);
        }
        d
    }

    pub fn add(&mut self, id: ExperimentId) {
        self.add_n(id, 1);
    }

    pub fn add_n(&mut self, id: ExperimentId, n: usize) {
        if n > 0 {
            *self.counts.entry(id).or_insert(0) += n;
        }
    }

    pub fn count(&self, id: ExperimentId) -> usize {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// Total multiplicity `k = Σ counts`.
    pub fn size(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> impl Iterator<Item = (ExperimentId, usize)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }

    pub fn ids(&self) -> impl Iterator<Item = ExperimentId> + '_ {
        self.counts.keys().copied()
    }

    /// Count-wise domination: `self ⊆ other` as multisets.
    pub fn is_subset_of(&self, other: &Design) -> bool {
        self.counts.iter().all(|(id, &c)| other.count(*id) >= c)
    }

    /// Counts listed in the pool's id order.
    pub fn from_count_vector(pool: &Pool, counts: &[usize]) -> Self {
        Design::from_counts(pool.ids().zip(counts.iter().copied()))
    }
}

pub fn make_experiment(id: impl Into<ExperimentId>, a: Matrix, r: SymMatrix) -> Result<Experiment> {
    Experiment::new(id, a, r)
}

/// `Y(D) = R_θ⁻¹ + Σ_{e ∈ D} M_e`.
pub fn information_matrix(pool: &Pool, design: &Design) -> Result<SymMatrix> {
    let mut y = pool.prior_info().clone();
    for (id, count) in design.counts() {
        y.add_scaled(pool.experiment(id)?.m(), count as f64);
    }
    Ok(SymMatrix::symmetrize(y.into_matrix()))
}

/// `K(D) = H Y(D)⁻¹ Hᵀ`.
pub fn error_covariance(pool: &Pool, design: &Design) -> Result<SymMatrix> {
    let y = information_matrix(pool, design)?;
    let y_inv = cholesky(&y)?.inverse();
    Ok(pool.covariance_from_y_inv(&y_inv))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub z_hat: DVector<f64>,
    pub covariance: SymMatrix,
}

/// Observations keyed by experiment id, one vector per occurrence in the design.
pub type Observations = BTreeMap<ExperimentId, Vec<DVector<f64>>>;

/// Optimal affine estimate
/// `ẑ = H Y⁻¹ [Σ_{e ∈ D} A_eᵀ R_e⁻¹ y_e + R_θ⁻¹ θ̄]` and its error covariance.
pub fn estimate(pool: &Pool, design: &Design, observations: &Observations) -> Result<EstimateResult> {
    let mut rhs = pool.prior_info().as_matrix() * pool.prior_mean();
    for (id, count) in design.counts() {
        let e = pool.experiment(id)?;
        let ys = observations.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        if ys.len() < count {
            return Err(Error::MissingObservation { id, slot: ys.len() });
        }
        if ys.len() > count {
            return Err(Error::dims(format!(
                "experiment {id} has {} observations for {count} design slots",
                ys.len()
            )));
        }
        let r_chol = cholesky(e.r())?;
        for y in ys {
            if y.len() != e.n_obs() {
                return Err(Error::dims(format!(
                    "observation for experiment {id} has length {}, expected {}",
                    y.len(),
                    e.n_obs()
                )));
            }
            let w = linalg::solve_psd(&r_chol, &Matrix::from_column_slice(y.len(), 1, y.as_slice()))?;
            rhs += e.a().transpose() * w.column(0);
        }
    }
    if let Some(id) = observations.keys().find(|id| design.count(**id) == 0) {
        return Err(Error::dims(format!("observations given for experiment {id} outside the design")));
    }
    let y = information_matrix(pool, design)?;
    let chol = cholesky(&y)?;
    let theta = linalg::solve_psd(&chol, &Matrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    let z_hat = DVector::from_column_slice((pool.target() * theta).as_slice());
    let covariance = pool.covariance_from_y_inv(&chol.inverse());
    Ok(EstimateResult { z_hat, covariance })
}

/// Incrementally maintained solver state for one criterion.
#[derive(Debug, Clone)]
pub struct DesignState {
    design: Design,
    y: SymMatrix,
    y_inv: SymMatrix,
    criterion: Criterion,
    criterion_value: f64,
}

impl DesignState {
    /// State for the empty design: `Y = R_θ⁻¹`, value 0.
    pub fn new(pool: &Pool, criterion: Criterion) -> Result<Self> {
        if criterion == Criterion::D {
            pool.check_d_criterion()?;
        }
        Ok(Self {
            design: Design::new(),
            y: pool.prior_info().clone(),
            y_inv: pool.prior_cov().clone(),
            criterion,
            criterion_value: 0.0,
        })
    }

    /// State for an arbitrary design, factored from scratch.
    pub fn from_design(pool: &Pool, design: &Design, criterion: Criterion) -> Result<Self> {
        if criterion == Criterion::D {
            pool.check_d_criterion()?;
        }
        let y = information_matrix(pool, design)?;
        let y_inv = cholesky(&y)?.inverse();
        let criterion_value = criteria::cost_from_y_inv(pool, criterion, &y_inv)?;
        Ok(Self { design: design.clone(), y, y_inv, criterion, criterion_value })
    }

    /// Adds one copy of `id`, updating `Y⁻¹` by the inversion lemma.
    pub fn add(&mut self, pool: &Pool, id: ExperimentId) -> Result<()> {
        let e = pool.experiment(id)?;
        let term = WoodburyTerm::new(&self.y_inv, e.a(), e.r())?;
        self.add_with_term(pool, id, &term)
    }

    pub(crate) fn add_with_term(&mut self, pool: &Pool, id: ExperimentId, term: &WoodburyTerm) -> Result<()> {
        let e = pool.experiment(id)?;
        self.y_inv = term.apply(&self.y_inv);
        self.y.add_scaled(e.m(), 1.0);
        self.design.add(id);
        self.criterion_value = criteria::cost_from_y_inv(pool, self.criterion, &self.y_inv)?;
        Ok(())
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Information matrix `Y(D)`.
    pub fn y(&self) -> &SymMatrix {
        &self.y
    }

    /// Cached `Y(D)⁻¹`.
    pub fn y_inv(&self) -> &SymMatrix {
        &self.y_inv
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn criterion_value(&self) -> f64 {
        self.criterion_value
    }
}
