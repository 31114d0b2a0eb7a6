//! Pool JSON format, content hashing and atomic file output.
//!
//! ```json
//! { "p": 2,
//!   "prior_mean": [0, 0],
//!   "prior_cov": [[1, 0], [0, 1]],
//!   "target": [[1, 0], [0, 1]],
//!   "experiments": [ { "id": 1, "A": [[1, 0]], "R": [[1]] } ] }
//! ```
//!
//! Matrices are row-major arrays of arrays. `target` defaults to the identity.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows, Matrix, SymMatrix};
use crate::model::{Experiment, ExperimentId, Pool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub id: ExperimentId,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolFile {
    pub p: usize,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Vec<f64>>>,
    pub experiments: Vec<ExperimentFile>,
}

impl PoolFile {
    pub fn from_pool(pool: &Pool) -> Self {
        PoolFile {
            p: pool.p(),
            prior_mean: pool.prior_mean().iter().copied().collect(),
            prior_cov: matrix_to_rows(pool.prior_cov().as_matrix()),
            target: Some(matrix_to_rows(pool.target())),
            experiments: pool
                .experiments()
                .iter()
                .map(|e| ExperimentFile {
                    id: e.id(),
                    a: matrix_to_rows(e.a()),
                    r: matrix_to_rows(e.r().as_matrix()),
                })
                .collect(),
        }
    }

    pub fn into_pool(self) -> Result<Pool> {
        let p = self.p;
        if self.prior_mean.len() != p {
            return Err(Error::dims(format!("prior_mean has length {}, p = {p}", self.prior_mean.len())));
        }
        let prior_cov = SymMatrix::from_rows(&self.prior_cov)?;
        if prior_cov.dim() != p {
            return Err(Error::dims(format!("prior_cov is {0}x{0}, p = {p}", prior_cov.dim())));
        }
        let target = match &self.target {
            Some(rows) => matrix_from_rows(rows)?,
            None => Matrix::identity(p, p),
        };
        let experiments = self
            .experiments
            .into_iter()
            .map(|e| {
                let a = matrix_from_rows(&e.a)?;
                Experiment::new(e.id, a, SymMatrix::from_rows(&e.r)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Pool::new(experiments, DVector::from_vec(self.prior_mean), prior_cov, target)
    }
}

pub fn pool_from_json(s: &str) -> Result<Pool> {
    serde_json::from_str::<PoolFile>(s)?.into_pool()
}

pub fn pool_to_json(pool: &Pool) -> String {
    serde_json::to_string_pretty(&PoolFile::from_pool(pool)).expect("pool serializes")
}

pub fn read_pool(path: impl AsRef<Path>) -> Result<Pool> {
    pool_from_json(&fs::read_to_string(path)?)
}

pub fn write_pool(path: impl AsRef<Path>, pool: &Pool) -> Result<()> {
    write_atomic(path, pool_to_json(pool).as_bytes())
}

/// Hex SHA-256 of the compact canonical JSON of the pool.
pub fn pool_hash(pool: &Pool) -> String {
    let bytes = serde_json::to_vec(&PoolFile::from_pool(pool)).expect("pool serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
