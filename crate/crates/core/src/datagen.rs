//! Synthetic pools, random baselines and the cold-start recommender pipeline.
//!
//! All generators use [`ChaCha8Rng`] seeded from a `u64`, so outputs are
//! reproducible within this implementation.
//!
//! Noise levels are given in dB as `SNR_dB = 10·log10(n_e / σ_v²)`, which is
//! the expected per-experiment `γ_e` under [`synth_pool`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::model::{self, Design, Experiment, ExperimentId, Observations, Pool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub p: usize,
    pub n_e: usize,
    pub pool_size: usize,
    pub noise_var: f64,
    pub prior_var: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_snr_db(p: usize, n_e: usize, pool_size: usize, snr_db: f64, prior_var: f64, seed: u64) -> Self {
        Self { p, n_e, pool_size, noise_var: snr_db_to_noise_var(snr_db, n_e), prior_var, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_e == 0 || self.pool_size == 0 {
            return Err(Error::InvalidArgument("p, n_e and pool_size must be positive".into()));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite() && self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return Err(Error::InvalidArgument("noise_var and prior_var must be positive and finite".into()));
        }
        Ok(())
    }
}

/// `σ_v² = n_e · 10^(−SNR_dB/10)`.
pub fn snr_db_to_noise_var(snr_db: f64, n_e: usize) -> f64 {
    n_e as f64 * 10f64.powf(-snr_db / 10.0)
}

pub fn noise_var_to_snr_db(noise_var: f64, n_e: usize) -> f64 {
    10.0 * (n_e as f64 / noise_var).log10()
}

/// Pool with `A_e` entries i.i.d. `N(0, 1/p)`, `R_e = σ_v² I`,
/// `R_θ = σ_θ² I`, `θ̄ = 0` and `H = I`. Experiment ids are `0..pool_size`.
pub fn synth_pool(spec: &SynthSpec) -> Result<Pool> {
    synth_pool_with_target(spec, Matrix::identity(spec.p, spec.p))
}

pub fn synth_pool_with_target(spec: &SynthSpec, target: Matrix) -> Result<Pool> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, (1.0 / spec.p as f64).sqrt()).expect("finite std");
    let noise = SymMatrix::scaled_identity(spec.n_e, spec.noise_var);
    let experiments = (0..spec.pool_size)
        .map(|i| {
            let a = Matrix::from_fn(spec.n_e, spec.p, |_, _| rng.sample(normal));
            Experiment::new(i as u64, a, noise.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Pool::new(
        experiments,
        DVector::zeros(spec.p),
        SymMatrix::scaled_identity(spec.p, spec.prior_var),
        target,
    )
}

/// `k` i.i.d. uniform draws over the pool, with replacement.
pub fn random_design(pool: &Pool, k: usize, seed: u64) -> Design {
    let ids: Vec<ExperimentId> = pool.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = Design::new();
    for _ in 0..k {
        design.add(ids[rng.gen_range(0..ids.len())]);
    }
    design
}

/// `k` distinct experiments chosen uniformly, without replacement.
pub fn random_subset(pool: &Pool, k: usize, seed: u64) -> Result<Design> {
    if k > pool.len() {
        return Err(Error::PoolExhausted { requested: k, available: pool.len() });
    }
    let ids: Vec<ExperimentId> = pool.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Design::from_counts(index::sample(&mut rng, ids.len(), k).into_iter().map(|i| (ids[i], 1))))
}

/// Dense user × movie ratings with missing entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    pub users: Vec<u64>,
    pub movies: Vec<u64>,
    /// `ratings[user_index][movie_index]`.
    pub ratings: Vec<Vec<Option<f64>>>,
    pub genres: BTreeMap<u64, String>,
}

impl RatingsTable {
    pub fn user_index(&self, user: u64) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn movie_index(&self, movie: u64) -> Option<usize> {
        self.movies.binary_search(&movie).ok()
    }

    pub fn rating(&self, user: u64, movie: u64) -> Option<f64> {
        self.ratings[self.user_index(user)?][self.movie_index(movie)?]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let with_genre = !self.genres.is_empty();
        let header: &[&str] = if with_genre { &["user", "movie", "rating", "genre"] } else { &["user", "movie", "rating"] };
        w.write_record(header).expect("in-memory write");
        for (ui, &u) in self.users.iter().enumerate() {
            for (mi, &m) in self.movies.iter().enumerate() {
                if let Some(r) = self.ratings[ui][mi] {
                    let mut rec = vec![u.to_string(), m.to_string(), r.to_string()];
                    if with_genre {
                        rec.push(self.genres.get(&m).cloned().unwrap_or_default());
                    }
                    w.write_record(&rec).expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Reads `user,movie,rating[,genre]` records. Line numbers in errors count
/// the header as line 1.
pub fn parse_ratings(reader: impl Read) -> Result<RatingsTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if !(names == ["user", "movie", "rating"] || names == ["user", "movie", "rating", "genre"]) {
        return Err(parse_err(1, format!("expected header user,movie,rating[,genre], got {}", names.join(","))));
    }
    let mut entries: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut genres: BTreeMap<u64, String> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() < 3 || rec.len() > names.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", names.len(), rec.len())));
        }
        let int = |i: usize, what: &str| {
            rec[i].parse::<u64>().map_err(|_| parse_err(line, format!("invalid {what} id {:?}", &rec[i])))
        };
        let (user, movie) = (int(0, "user")?, int(1, "movie")?);
        let rating: f64 = rec[2]
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite())
            .ok_or_else(|| parse_err(line, format!("invalid rating {:?}", &rec[2])))?;
        if entries.insert((user, movie), rating).is_some() {
            return Err(parse_err(line, format!("duplicate rating for user {user}, movie {movie}")));
        }
        if let Some(g) = rec.get(3).filter(|g| !g.is_empty()) {
            if let Some(prev) = genres.insert(movie, g.to_string()) {
                if prev != g {
                    return Err(parse_err(line, format!("movie {movie} has genres {prev:?} and {g:?}")));
                }
            }
        }
    }
    let users: Vec<u64> = entries.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let movies: Vec<u64> = entries.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    let mut ratings = vec![vec![None; movies.len()]; users.len()];
    for ((u, m), r) in entries {
        let ui = users.binary_search(&u).expect("collected");
        let mi = movies.binary_search(&m).expect("collected");
        ratings[ui][mi] = Some(r);
    }
    Ok(RatingsTable { users, movies, ratings, genres })
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsTable> {
    parse_ratings(std::fs::File::open(path)?)
}

/// How missing training ratings enter `A_e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impute {
    #[default]
    Zero,
    /// The movie's mean over observed training ratings.
    Mean,
}

impl std::str::FromStr for Impute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Impute::Zero),
            "mean" => Ok(Impute::Mean),
            _ => Err(Error::InvalidArgument(format!("unknown imputation {s:?}, expected zero or mean"))),
        }
    }
}

/// One scalar experiment per movie: `A_e` is the `1 × p` row of that
/// movie's ratings by the `p` training users, `R_e = noise_var`,
/// `R_θ = prior_var · I`, `θ̄ = 0`, `H = I`. Experiment ids are movie ids.
pub fn build_recsys_pool(
    table: &RatingsTable,
    training_users: &[u64],
    noise_var: f64,
    prior_var: f64,
    impute: Impute,
) -> Result<Pool> {
    if training_users.is_empty() {
        return Err(Error::EmptyTraining("no training users".into()));
    }
    let rows: Vec<usize> = training_users
        .iter()
        .map(|&u| table.user_index(u).ok_or_else(|| Error::InvalidArgument(format!("unknown training user {u}"))))
        .collect::<Result<_>>()?;
    let p = rows.len();
    let experiments = table
        .movies
        .iter()
        .enumerate()
        .map(|(mi, &movie)| {
            let observed: Vec<f64> = rows.iter().filter_map(|&ui| table.ratings[ui][mi]).collect();
            if observed.is_empty() {
                return Err(Error::EmptyTraining(format!("movie {movie} has no training ratings")));
            }
            let fill = match impute {
                Impute::Zero => 0.0,
                Impute::Mean => observed.iter().sum::<f64>() / observed.len() as f64,
            };
            let a = Matrix::from_iterator(1, p, rows.iter().map(|&ui| table.ratings[ui][mi].unwrap_or(fill)));
            Experiment::new(movie, a, SymMatrix::scaled_identity(1, noise_var))
        })
        .collect::<Result<Vec<_>>>()?;
    Pool::new(experiments, DVector::zeros(p), SymMatrix::scaled_identity(p, prior_var), Matrix::identity(p, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecsysEval {
    pub mae: f64,
    /// `None` when the table carries no genres.
    pub genre_error_rate: Option<f64>,
    pub n_predictions: usize,
    pub n_users: usize,
}

/// For each test user, estimates `θ̂` from their ratings of the designed
/// movies, predicts `ŷ_f = A_f θ̂` for every other movie they rated, and
/// scores the predictions. Designed movies the user did not rate are left
/// out of their estimate. Genre predictions take the genre with the highest
/// mean predicted rating and are compared with the genre of highest mean
/// true rating over the same movies; ties go to the lexicographically
/// smallest genre.
pub fn evaluate_recsys(pool: &Pool, table: &RatingsTable, test_users: &[u64], design: &Design) -> Result<RecsysEval> {
    let (mut abs_err, mut n_predictions, mut genre_errors, mut genre_users, mut n_users) = (0.0, 0, 0, 0, 0);
    for &user in test_users {
        let ui = table.user_index(user).ok_or_else(|| Error::InvalidArgument(format!("unknown test user {user}")))?;
        let mut sub = Design::new();
        let mut obs = Observations::new();
        for id in design.ids() {
            if let Some(r) = table.rating(user, id.0) {
                sub.add(id);
                obs.insert(id, vec![DVector::from_element(1, r)]);
            }
        }
        let theta = model::estimate(pool, &sub, &obs)?.z_hat;
        let mut true_by_genre: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut pred_by_genre: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut any = false;
        for (mi, &movie) in table.movies.iter().enumerate() {
            let id = ExperimentId(movie);
            if design.count(id) > 0 {
                continue;
            }
            let Some(truth) = table.ratings[ui][mi] else { continue };
            let pred = (pool.experiment(id)?.a() * &theta)[0];
            abs_err += (pred - truth).abs();
            n_predictions += 1;
            any = true;
            if let Some(g) = table.genres.get(&movie) {
                let t = true_by_genre.entry(g).or_default();
                t.0 += truth;
                t.1 += 1;
                let q = pred_by_genre.entry(g).or_default();
                q.0 += pred;
                q.1 += 1;
            }
        }
        if any {
            n_users += 1;
        }
        if let (Some(t), Some(q)) = (top_genre(&true_by_genre), top_genre(&pred_by_genre)) {
            genre_users += 1;
            if t != q {
                genre_errors += 1;
            }
        }
    }
    if n_predictions == 0 {
        return Err(Error::InvalidArgument("no held-out ratings to evaluate".into()));
    }
    Ok(RecsysEval {
        mae: abs_err / n_predictions as f64,
        genre_error_rate: (genre_users > 0).then(|| genre_errors as f64 / genre_users as f64),
        n_predictions,
        n_users,
    })
}

/// Genre with the highest mean; the map iterates in name order and only a
/// strictly larger mean replaces the incumbent.
fn top_genre<'a>(sums: &BTreeMap<&'a str, (f64, usize)>) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for (&g, &(s, n)) in sums {
        let mean = s / n as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((g, mean));
        }
    }
    best.map(|(g, _)| g)
}

/// Low-rank-plus-noise ratings: `offset + U Vᵀ + noise`, with `U` and `V`
/// standard normal (V scaled by `1/√rank`). Each movie's genre is the index
/// of its largest latent factor among the first `n_genres`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankSpec {
    pub n_users: usize,
    pub n_movies: usize,
    pub rank: usize,
    pub offset: f64,
    pub noise_std: f64,
    /// Probability that a rating is observed.
    pub density: f64,
    pub n_genres: usize,
    pub seed: u64,
}

impl Default for LowRankSpec {
    fn default() -> Self {
        Self { n_users: 140, n_movies: 200, rank: 5, offset: 3.0, noise_std: 0.5, density: 1.0, n_genres: 3, seed: 0 }
    }
}

pub fn synth_ratings(spec: &LowRankSpec) -> Result<RatingsTable> {
    if spec.n_users == 0 || spec.n_movies == 0 || spec.rank == 0 {
        return Err(Error::InvalidArgument("n_users, n_movies and rank must be positive".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) || !(spec.noise_std >= 0.0) {
        return Err(Error::InvalidArgument("density must lie in (0, 1] and noise_std be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = Matrix::from_fn(spec.n_users, spec.rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale = (spec.rank as f64).sqrt().recip();
    let v = Matrix::from_fn(spec.n_movies, spec.rank, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let clean = &u * v.transpose();
    let ratings = (0..spec.n_users)
        .map(|i| {
            (0..spec.n_movies)
                .map(|j| {
                    let noise = spec.noise_std * rng.sample::<f64, _>(StandardNormal);
                    let seen = spec.density >= 1.0 || rng.gen_bool(spec.density);
                    seen.then(|| spec.offset + clean[(i, j)] + noise)
                })
                .collect()
        })
        .collect();
    let n_genres = spec.n_genres.min(spec.rank);
    let genres = if n_genres == 0 {
        BTreeMap::new()
    } else {
        (0..spec.n_movies)
            .map(|j| {
                let g = (0..n_genres).fold(0, |b, r| if v[(j, r)] > v[(j, b)] { r } else { b });
                (j as u64, format!("g{g}"))
            })
            .collect()
    };
    Ok(RatingsTable {
        users: (0..spec.n_users as u64).collect(),
        movies: (0..spec.n_movies as u64).collect(),
        ratings,
        genres,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec { p: 20, n_e: 5, pool_size: 200, noise_var: 10.0, prior_var: 1.0, seed }
    }

    #[test]
    fn synth_pool_snr_matches_expectation() {
        for seed in 0..10 {
            let pool = synth_pool(&spec(seed)).unwrap();
            let mean = pool.experiments().iter().map(|e| e.gamma()).sum::<f64>() / pool.len() as f64;
            assert!((mean - 0.5).abs() < 0.1, "seed {seed}: mean gamma {mean}");
        }
    }

    #[test]
    fn synth_pool_is_deterministic() {
        let a = synth_pool(&spec(3)).unwrap();
        let b = synth_pool(&spec(3)).unwrap();
        assert_eq!(crate::io::pool_hash(&a), crate::io::pool_hash(&b));
        assert_ne!(crate::io::pool_hash(&a), crate::io::pool_hash(&synth_pool(&spec(4)).unwrap()));
    }

    #[test]
    fn vanishing_snr() {
        let pool = synth_pool(&SynthSpec { noise_var: 1e12, ..spec(0) }).unwrap();
        assert!(pool.experiments().iter().all(|e| e.gamma() < 1e-10));
    }

    #[test]
    fn snr_mapping() {
        assert!((snr_db_to_noise_var(-10.0, 5) - 50.0).abs() < 1e-12);
        assert!((snr_db_to_noise_var(0.0, 1) - 1.0).abs() < 1e-15);
        assert!((noise_var_to_snr_db(50.0, 5) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn random_design_examples() {
        let pool = synth_pool(&SynthSpec { pool_size: 2, ..spec(0) }).unwrap();
        assert!(random_design(&pool, 0, 1).is_empty());
        let d = random_design(&pool, 10_000, 7);
        let bound = 3.0 * (10_000.0f64 * 0.25).sqrt();
        for id in pool.ids() {
            assert!((d.count(id) as f64 - 5000.0).abs() <= bound);
        }
        assert_eq!(d, random_design(&pool, 10_000, 7));

        let single = synth_pool(&SynthSpec { pool_size: 1, ..spec(0) }).unwrap();
        assert_eq!(random_design(&single, 5, 2).count(ExperimentId(0)), 5);
    }

    #[test]
    fn random_subset_is_distinct() {
        let pool = synth_pool(&spec(0)).unwrap();
        let d = random_subset(&pool, 20, 5).unwrap();
        assert_eq!(d.size(), 20);
        assert_eq!(d.ids().count(), 20);
        assert!(random_subset(&pool, 201, 5).is_err());
    }

    #[test]
    fn parse_and_build_two_users() {
        let t = parse_ratings("user,movie,rating\n1,10,3\n2,10,4\n".as_bytes()).unwrap();
        let pool = build_recsys_pool(&t, &[1, 2], 2.0, 100.0, Impute::Zero).unwrap();
        let e = pool.experiment(ExperimentId(10)).unwrap();
        assert_eq!(e.a(), &Matrix::from_row_slice(1, 2, &[3.0, 4.0]));
        let expected = Matrix::from_row_slice(2, 2, &[9.0, 12.0, 12.0, 16.0]) / 2.0;
        assert!((e.m().as_matrix() - expected).amax() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_ratings("user,movie,rating\n1,10,3\n2,x,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse_ratings("user,item,rating\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_ratings("user,movie,rating\n1,10,nan\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn imputation() {
        let t = parse_ratings("user,movie,rating\n1,10,3\n2,10,5\n1,11,2\n".as_bytes()).unwrap();
        let zero = build_recsys_pool(&t, &[1, 2], 1.0, 100.0, Impute::Zero).unwrap();
        assert_eq!(zero.experiment(ExperimentId(11)).unwrap().a()[(0, 1)], 0.0);
        let mean = build_recsys_pool(&t, &[1, 2], 1.0, 100.0, Impute::Mean).unwrap();
        assert_eq!(mean.experiment(ExperimentId(11)).unwrap().a()[(0, 1)], 2.0);
        assert_eq!("mean".parse::<Impute>().unwrap(), Impute::Mean);
    }

    #[test]
    fn movie_without_training_ratings_is_rejected() {
        let t = parse_ratings("user,movie,rating\n1,10,3\n3,11,4\n".as_bytes()).unwrap();
        assert!(matches!(build_recsys_pool(&t, &[1], 1.0, 100.0, Impute::Zero), Err(Error::EmptyTraining(_))));
    }

    /// Rank-1 table `r[u][m] = a_u b_m`: two training users, one test user.
    fn rank_one() -> RatingsTable {
        let a = [1.0, 2.0, 1.5];
        let b = [3.0, 1.0, 2.0, 4.0];
        let mut csv = String::from("user,movie,rating,genre\n");
        for (u, au) in a.iter().enumerate() {
            for (m, bm) in b.iter().enumerate() {
                let g = if m % 2 == 0 { "drama" } else { "comedy" };
                csv.push_str(&format!("{u},{m},{},{g}\n", au * bm));
            }
        }
        parse_ratings(csv.as_bytes()).unwrap()
    }

    #[test]
    fn rank_one_interpolation() {
        let t = rank_one();
        let pool = build_recsys_pool(&t, &[0, 1], 1e-6, 100.0, Impute::Zero).unwrap();
        let trace = crate::greedy_design(&pool, crate::Criterion::A, 2, false).unwrap();
        let eval = evaluate_recsys(&pool, &t, &[2], &trace.final_design).unwrap();
        assert!(eval.mae < 1e-3, "{eval:?}");
        assert_eq!(eval.n_predictions, 2);
        assert_eq!(eval.genre_error_rate, Some(0.0));
    }

    #[test]
    fn offset_predictor_scores_one() {
        // Test user rates every movie exactly 1 above what θ̂ = 0 predicts.
        let t = parse_ratings("user,movie,rating\n0,0,1\n0,1,1\n1,0,1\n1,1,1\n".as_bytes()).unwrap();
        let pool = build_recsys_pool(&t, &[0], 1.0, 100.0, Impute::Zero).unwrap();
        let eval = evaluate_recsys(&pool, &t, &[1], &Design::new()).unwrap();
        let theta_zero_mae = 1.0;
        assert!((eval.mae - theta_zero_mae).abs() < 1e-12);
    }

    #[test]
    fn genre_ties_break_by_name() {
        let mut m = BTreeMap::new();
        m.insert("b", (2.0, 1));
        m.insert("a", (4.0, 2));
        assert_eq!(top_genre(&m), Some("a"));
        m.insert("c", (2.5, 1));
        assert_eq!(top_genre(&m), Some("c"));
    }

    #[test]
    fn csv_round_trip() {
        let t = synth_ratings(&LowRankSpec { n_users: 4, n_movies: 6, density: 0.7, seed: 3, ..Default::default() }).unwrap();
        let back = parse_ratings(t.to_csv().as_bytes()).unwrap();
        assert_eq!(back.genres.len(), t.genres.len());
        for &u in &back.users {
            for &m in &back.movies {
                let (x, y) = (t.rating(u, m), back.rating(u, m));
                assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
