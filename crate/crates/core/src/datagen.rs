//! Seeded generators for the linear and logistic simulation designs.
//!
//! Covariates, noise and mixture coins are drawn from separate streams of
//! the design seed, so switching the noise law leaves the covariates alone.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_names, logistic, Dataset, ModelKind};
use crate::rng::{self, tag, StreamRng};

/// Number of covariates in every design.
pub const DIM: usize = 7;

/// Common value of every true coefficient.
pub const BETA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Linear,
    Logistic,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Linear => "linear",
            Example::Logistic => "logistic",
        }
    }

    pub fn cases(self) -> u8 {
        match self {
            Example::Linear => 3,
            Example::Logistic => 6,
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Example::Linear => ModelKind::Linear,
            Example::Logistic => ModelKind::Logistic,
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Example::Linear),
            "logistic" => Ok(Example::Logistic),
            other => Err(Error::InvalidInput(format!("unknown example `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub example: Example,
    pub case_id: u8,
    pub n: usize,
    pub beta: Vec<f64>,
    pub seed: u64,
}

impl DesignSpec {
    /// Design with every coefficient equal to [`BETA`].
    pub fn new(example: Example, case_id: u8, n: usize, seed: u64) -> Result<Self> {
        if case_id == 0 || case_id > example.cases() {
            return Err(Error::InvalidInput(format!(
                "{example} example has cases 1..={}, got {case_id}",
                example.cases()
            )));
        }
        if n == 0 {
            return Err(Error::EmptyData);
        }
        Ok(Self {
            example,
            case_id,
            n,
            beta: vec![BETA; DIM],
            seed,
        })
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != DIM || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "beta must hold {DIM} finite values"
            )));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Covariate correlation matrix of an example: `0.2^|i-j|` for the linear
/// designs, 1 on the diagonal and 0.5 elsewhere for the logistic ones.
pub fn covariance(example: Example) -> DMatrix<f64> {
    DMatrix::from_fn(DIM, DIM, |i, j| match example {
        Example::Linear => 0.2f64.powi((i as i32 - j as i32).abs()),
        Example::Logistic => {
            if i == j {
                1.0
            } else {
                0.5
            }
        }
    })
}

fn cholesky_factor(example: Example) -> DMatrix<f64> {
    covariance(example)
        .cholesky()
        .expect("design covariance is positive definite")
        .unpack()
}

/// Correlated normal row `L z` written into `out`.
fn correlated_normal(l: &DMatrix<f64>, rng: &mut StreamRng, out: &mut [f64]) {
    let z: [f64; DIM] = std::array::from_fn(|_| rng.sample(StandardNormal));
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
    }
}

/// Draws the `n x 7` covariate matrix of the design.
pub fn sample_covariates(spec: &DesignSpec) -> DMatrix<f64> {
    let mut rng = rng::stream(spec.seed, &[tag::COVARIATES]);
    let mut coins = rng::stream(spec.seed, &[tag::COINS]);
    let l = cholesky_factor(spec.example);
    let mut data = vec![0.0; spec.n * DIM];

    for row in data.chunks_exact_mut(DIM) {
        match (spec.example, spec.case_id) {
            (Example::Linear, _) | (Example::Logistic, 1) => correlated_normal(&l, &mut rng, row),
            (Example::Logistic, 2) => {
                correlated_normal(&l, &mut rng, row);
                row.iter_mut().for_each(|v| *v += 1.5);
            }
            (Example::Logistic, 3) | (Example::Logistic, 6) => {
                let (a, b) = if spec.case_id == 3 {
                    (1.0, -1.0)
                } else {
                    (-2.14, -2.9)
                };
                let shift = if coins.random_bool(0.5) { a } else { b };
                correlated_normal(&l, &mut rng, row);
                row.iter_mut().for_each(|v| *v += shift);
            }
            (Example::Logistic, 4) => {
                correlated_normal(&l, &mut rng, row);
                let w: f64 = rng.sample(ChiSquared::new(3.0).unwrap());
                let scale = 10.0 * (w / 3.0).sqrt();
                row.iter_mut().for_each(|v| *v /= scale);
            }
            (Example::Logistic, 5) => {
                let exp = Exp::new(2.0).unwrap();
                row.iter_mut().for_each(|v| *v = exp.sample(&mut rng));
            }
            (Example::Logistic, c) => unreachable!("case {c} rejected by DesignSpec::new"),
        }
    }
    DMatrix::from_row_slice(spec.n, DIM, &data)
}

fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    x * DVector::from_column_slice(beta)
}

/// `y = X beta + e` with standard normal, `t(10)` or `0.5 N(1,1) + 0.5 N(-1,1)`
/// noise for cases 1, 2 and 3.
pub fn gen_linear(spec: &DesignSpec) -> Result<Dataset> {
    if spec.example != Example::Linear {
        return Err(Error::InvalidInput(
            "gen_linear needs a linear design".into(),
        ));
    }
    let x = sample_covariates(spec);
    let mut noise = rng::stream(spec.seed, &[tag::NOISE]);
    let mut coins = rng::stream(spec.seed, &[tag::NOISE, tag::COINS]);
    let t10 = StudentT::new(10.0).unwrap();
    let mut y = linear_predictor(&x, &spec.beta);
    for yi in y.iter_mut() {
        *yi += match spec.case_id {
            1 => noise.sample::<f64, _>(StandardNormal),
            2 => t10.sample(&mut noise),
            _ => {
                let shift = if coins.random_bool(0.5) { 1.0 } else { -1.0 };
                shift + noise.sample::<f64, _>(StandardNormal)
            }
        };
    }
    Dataset::new(x, Some(y), ModelKind::Linear, default_names(DIM))
}

/// Bernoulli responses with success probability `logistic(x' beta)`.
pub fn gen_logistic(spec: &DesignSpec) -> Result<Dataset> {
    if spec.example != Example::Logistic {
        return Err(Error::InvalidInput(
            "gen_logistic needs a logistic design".into(),
        ));
    }
    let x = sample_covariates(spec);
    let mut noise = rng::stream(spec.seed, &[tag::NOISE]);
    let y = linear_predictor(&x, &spec.beta).map(|eta| {
        let u: f64 = noise.random();
        if u < logistic(eta) {
            1.0
        } else {
            0.0
        }
    });
    Dataset::new(x, Some(y), ModelKind::Logistic, default_names(DIM))
}

/// Dispatches on the design's example.
pub fn generate(spec: &DesignSpec) -> Result<Dataset> {
    match spec.example {
        Example::Linear => gen_linear(spec),
        Example::Logistic => gen_logistic(spec),
    }
}

/// Writes covariates and response as CSV with one header row. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = data.column_names().iter().map(String::as_str).collect();
    if data.y().is_some() {
        header.push("y");
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..data.nrows() {
        record.clear();
        record.extend(data.x().row(i).iter().map(|v| v.to_string()));
        if let Some(y) = data.y() {
            record.push(y[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(data: &Dataset, path: &Path) -> Result<()> {
    write_csv(data, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_entries() {
        let s = covariance(Example::Linear);
        assert!((s[(0, 2)] - 0.04).abs() < 1e-15);
        assert_eq!(s[(3, 3)], 1.0);
        let s = covariance(Example::Logistic);
        assert_eq!((s[(0, 0)], s[(0, 6)], s[(5, 2)]), (1.0, 0.5, 0.5));
    }

    #[test]
    fn case_range_checked() {
        assert!(DesignSpec::new(Example::Linear, 4, 10, 0).is_err());
        assert!(DesignSpec::new(Example::Logistic, 0, 10, 0).is_err());
        assert!(DesignSpec::new(Example::Logistic, 6, 10, 0).is_ok());
    }

    #[test]
    fn reproducible() {
        let spec = DesignSpec::new(Example::Logistic, 3, 50, 9).unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&spec.clone().with_seed(10)).unwrap();
        assert_ne!(generate(&spec).unwrap(), other);
    }

    #[test]
    fn noise_law_does_not_move_covariates() {
        let a = DesignSpec::new(Example::Linear, 1, 40, 3).unwrap();
        let b = DesignSpec::new(Example::Linear, 3, 40, 3).unwrap();
        let (da, db) = (gen_linear(&a).unwrap(), gen_linear(&b).unwrap());
        assert_eq!(da.x(), db.x());
        assert_ne!(da.y(), db.y());
    }

    #[test]
    fn exponential_case_is_positive() {
        let spec = DesignSpec::new(Example::Logistic, 5, 100, 1).unwrap();
        assert!(sample_covariates(&spec).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn csv_header() {
        let spec = DesignSpec::new(Example::Linear, 1, 2, 0).unwrap();
        let mut buf = Vec::new();
        write_csv(&gen_linear(&spec).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,x3,x4,x5,x6,x7,y\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
