//! Parametric estimators used per block and per resample.
//!
//! Every estimator accepts optional observation weights so the same code
//! serves divide-and-conquer blocks (unweighted) and multinomial bootstrap
//! resamples (integer weights). Weights are rescaled by their maximum before
//! use; the estimators are invariant to a common weight scale, and with
//! constant weights the weighted path is bit-identical to the unweighted one.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mean,
    Linear,
    Logistic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mean => "mean",
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(ModelKind::Mean),
            "linear" => Ok(ModelKind::Linear),
            "logistic" => Ok(ModelKind::Logistic),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Covariates, optional response and model tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Option<DVector<f64>>,
    kind: ModelKind,
    column_names: Vec<String>,
    intercept: Option<usize>,
}

impl Dataset {
    /// Validates and builds a dataset. `y` is required unless `kind` is
    /// [`ModelKind::Mean`]; logistic responses must be 0 or 1.
    pub fn new(
        x: DMatrix<f64>,
        y: Option<DVector<f64>>,
        kind: ModelKind,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (n, q) = x.shape();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if q == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one column".into(),
            ));
        }
        if column_names.len() != q {
            return Err(Error::InvalidInput(format!(
                "{} column names for {} columns",
                column_names.len(),
                q
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "covariates contain non-finite values".into(),
            ));
        }
        match (&y, kind) {
            (None, ModelKind::Mean) => {}
            (None, _) => {
                return Err(Error::InvalidInput(format!(
                    "{kind} model requires a response"
                )))
            }
            (Some(y), _) => {
                if y.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "response has length {} but there are {} rows",
                        y.len(),
                        n
                    )));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(
                        "response contains non-finite values".into(),
                    ));
                }
                if kind == ModelKind::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidInput(
                        "logistic responses must be 0 or 1".into(),
                    ));
                }
            }
        }
        Ok(Self {
            x,
            y,
            kind,
            column_names,
            intercept: None,
        })
    }

    /// Covariate-only dataset for the mean estimator, columns named `x1..xq`.
    pub fn mean_only(x: DMatrix<f64>) -> Result<Self> {
        let names = default_names(x.ncols());
        Self::new(x, None, ModelKind::Mean, names)
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], y: Option<&[f64]>, kind: ModelKind) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let q = rows[0].len();
        if rows.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        let x = DMatrix::from_fn(n, q, |i, j| rows[i][j]);
        let y = y.map(DVector::from_column_slice);
        Self::new(x, y, kind, default_names(q))
    }

    /// Prepends a column of ones named `intercept` and marks it.
    pub fn with_intercept(mut self) -> Self {
        self.x = self.x.insert_column(0, 1.0);
        self.column_names.insert(0, "intercept".to_string());
        self.intercept = Some(0);
        self
    }

    /// Marks an existing column as the intercept (left untouched by [`standardize`]).
    pub fn set_intercept_column(&mut self, column: Option<usize>) {
        self.intercept = column.filter(|&c| c < self.ncols());
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> Option<&DVector<f64>> {
        self.y.as_ref()
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn intercept_column(&self) -> Option<usize> {
        self.intercept
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Dataset restricted to the given row indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows);
        let y = self
            .y
            .as_ref()
            .map(|y| DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])));
        Dataset {
            x,
            y,
            kind: self.kind,
            column_names: self.column_names.clone(),
            intercept: self.intercept,
        }
    }

    /// Row-wise concatenation; both datasets must share kind and columns.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.kind != other.kind || self.column_names != other.column_names {
            return Err(Error::InvalidInput("datasets do not share a schema".into()));
        }
        let (n1, n2, q) = (self.nrows(), other.nrows(), self.ncols());
        let x = DMatrix::from_fn(n1 + n2, q, |i, j| {
            if i < n1 {
                self.x[(i, j)]
            } else {
                other.x[(i - n1, j)]
            }
        });
        let y = match (&self.y, &other.y) {
            (Some(a), Some(b)) => Some(DVector::from_iterator(
                n1 + n2,
                a.iter().chain(b.iter()).copied(),
            )),
            _ => None,
        };
        Ok(Dataset {
            x,
            y,
            kind: self.kind,
            column_names: self.column_names.clone(),
            intercept: self.intercept,
        })
    }
}

pub(crate) fn default_names(q: usize) -> Vec<String> {
    (1..=q).map(|j| format!("x{j}")).collect()
}

/// Parameter estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "estimate has non-finite entries".into(),
            ));
        }
        Ok(Self(theta))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonnegative observation weights with positive total.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput(
                "weights must have a positive sum".into(),
            ));
        }
        Ok(Self(w))
    }

    /// Weights from multinomial resample counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Rows with positive weight and their weights rescaled so the largest is 1.
fn active_rows(n: usize, weights: Option<&WeightVector>) -> Result<(Vec<usize>, Vec<f64>)> {
    match weights {
        None => Ok(((0..n).collect(), vec![1.0; n])),
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} weights for {} observations",
                    w.len(),
                    n
                )));
            }
            let max = w.iter().copied().fold(0.0_f64, f64::max);
            let mut rows = Vec::with_capacity(n);
            let mut scaled = Vec::with_capacity(n);
            for (i, &wi) in w.iter().enumerate() {
                if wi > 0.0 {
                    rows.push(i);
                    scaled.push(wi / max);
                }
            }
            Ok((rows, scaled))
        }
    }
}

fn expect_kind(data: &Dataset, kind: ModelKind) -> Result<()> {
    if data.kind() != kind {
        return Err(Error::ModelMismatch {
            expected: kind.name(),
            found: data.kind().name(),
        });
    }
    Ok(())
}

/// Weighted column mean of the covariates.
pub fn fit_mean(data: &Dataset, weights: Option<&WeightVector>) -> Result<ParamVector> {
    expect_kind(data, ModelKind::Mean)?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let (rows, w) = active_rows(n, weights)?;
    let total: f64 = w.iter().sum();
    let x = data.x();
    // Accumulate deviations from the first active row so constant columns
    // reproduce their value exactly.
    let theta = (0..x.ncols())
        .map(|j| {
            let origin = x[(rows[0], j)];
            origin
                + rows
                    .iter()
                    .zip(&w)
                    .map(|(&i, &wi)| wi * (x[(i, j)] - origin))
                    .sum::<f64>()
                    / total
        })
        .collect();
    ParamVector::new(theta)
}

/// Least-squares solution of `sqrt(w) X beta = sqrt(w) y` on the given rows
/// through a Householder QR of the scaled design.
fn weighted_least_squares(
    x: &DMatrix<f64>,
    rows: &[usize],
    row_scale: &[f64],
    rhs: &[f64],
) -> Result<DVector<f64>> {
    let p = x.ncols();
    let m = rows.len();
    if m < p {
        return Err(Error::SingularDesign {
            condition: f64::INFINITY,
        });
    }
    let a = DMatrix::from_fn(m, p, |r, j| row_scale[r] * x[(rows[r], j)]);
    let mut b = DVector::from_column_slice(rhs);
    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    let dmax = diag.max();
    let dmin = diag.min();
    let condition = if dmin > 0.0 {
        dmax / dmin
    } else {
        f64::INFINITY
    };
    if !(condition.is_finite()) || condition * (m.max(p) as f64) * f64::EPSILON > 1.0 {
        return Err(Error::SingularDesign { condition });
    }
    let top = b.rows(0, p).into_owned();
    r.solve_upper_triangular(&top)
        .ok_or(Error::SingularDesign { condition })
}

/// Weighted ordinary least squares, `argmin sum_i w_i (y_i - x_i' beta)^2`.
pub fn fit_ols(data: &Dataset, weights: Option<&WeightVector>) -> Result<ParamVector> {
    expect_kind(data, ModelKind::Linear)?;
    let y = data
        .y()
        .ok_or(Error::InvalidInput("missing response".into()))?;
    let (rows, w) = active_rows(data.nrows(), weights)?;
    let scale: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let rhs: Vec<f64> = rows.iter().zip(&scale).map(|(&i, &s)| s * y[i]).collect();
    let beta = weighted_least_squares(data.x(), &rows, &scale, &rhs)?;
    ParamVector::new(beta.iter().copied().collect())
}

const IRLS_MAX_ITER: usize = 25;
const IRLS_TOL: f64 = 1e-8;
const SEPARATION_BOUND: f64 = 1e3;
const MIN_WORKING_VARIANCE: f64 = 1e-12;

/// Inverse logit, evaluated without overflow.
#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: &[usize],
    w: &[f64],
    beta: &DVector<f64>,
) -> f64 {
    rows.iter()
        .zip(w)
        .map(|(&i, &wi)| {
            let eta = x.row(i).dot(&beta.transpose());
            wi * (y[i] * eta - softplus(eta))
        })
        .sum()
}

/// Weighted logistic-regression MLE by iteratively reweighted least squares,
/// started at zero. A Newton step that lowers the log-likelihood is halved
/// until it does not.
pub fn fit_logistic(data: &Dataset, weights: Option<&WeightVector>) -> Result<ParamVector> {
    expect_kind(data, ModelKind::Logistic)?;
    let y = data
        .y()
        .ok_or(Error::InvalidInput("missing response".into()))?;
    let x = data.x();
    let (rows, w) = active_rows(data.nrows(), weights)?;
    let first = y[rows[0]];
    if rows.iter().all(|&i| y[i] == first) {
        return Err(Error::OneClassOnly);
    }

    let p = x.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut loglik = log_likelihood(x, y, &rows, &w, &beta);
    let mut scale = vec![0.0; rows.len()];
    let mut rhs = vec![0.0; rows.len()];

    for iter in 1..=IRLS_MAX_ITER {
        for (r, (&i, &wi)) in rows.iter().zip(&w).enumerate() {
            let eta = x.row(i).dot(&beta.transpose());
            let pi = logistic(eta);
            let v = (pi * (1.0 - pi)).max(MIN_WORKING_VARIANCE);
            let s = (wi * v).sqrt();
            scale[r] = s;
            // Working response so that the LS solution is (X'WX)^{-1} X' w (y - pi).
            rhs[r] = wi * (y[i] - pi) / s;
        }
        let delta = weighted_least_squares(x, &rows, &scale, &rhs)?;

        let mut step = 1.0;
        let mut candidate = &beta + &delta;
        let mut cand_ll = log_likelihood(x, y, &rows, &w, &candidate);
        let mut halvings = 0;
        while !(cand_ll >= loglik - 1e-12 * loglik.abs()) && halvings < 30 {
            step *= 0.5;
            halvings += 1;
            candidate = &beta + &delta * step;
            cand_ll = log_likelihood(x, y, &rows, &w, &candidate);
        }
        let max_change = (&delta * step).amax();
        beta = candidate;
        loglik = cand_ll;

        let max_abs = beta.amax();
        if !max_abs.is_finite() || max_abs > SEPARATION_BOUND {
            return Err(Error::Separation {
                iterations: iter,
                max_abs_beta: max_abs,
            });
        }
        if max_change < IRLS_TOL {
            return ParamVector::new(beta.iter().copied().collect());
        }
    }
    Err(Error::Separation {
        iterations: IRLS_MAX_ITER,
        max_abs_beta: beta.amax(),
    })
}

/// Centers and scales every non-intercept column to mean 0 and sample
/// variance 1 (divisor `n - 1`).
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(
            "standardization needs at least two rows".into(),
        ));
    }
    let mut out = data.clone();
    for j in 0..data.ncols() {
        if Some(j) == data.intercept_column() {
            continue;
        }
        let col = data.x().column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
            return Err(Error::ConstantColumn(data.column_names()[j].clone()));
        }
        out.x
            .column_mut(j)
            .iter_mut()
            .for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

/// Estimator selector shared by blocks and resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mean,
    Ols,
    Logistic,
}

impl Estimator {
    /// The estimator that matches a dataset's model tag.
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mean => Estimator::Mean,
            ModelKind::Linear => Estimator::Ols,
            ModelKind::Logistic => Estimator::Logistic,
        }
    }

    pub fn fit(self, data: &Dataset, weights: Option<&WeightVector>) -> Result<ParamVector> {
        match self {
            Estimator::Mean => fit_mean(data, weights),
            Estimator::Ols => fit_ols(data, weights),
            Estimator::Logistic => fit_logistic(data, weights),
        }
    }

    /// Smallest number of observations that can identify the estimate.
    pub fn min_observations(self, q: usize) -> usize {
        match self {
            Estimator::Mean => 1,
            Estimator::Ols | Estimator::Logistic => q + 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn mean_data(rows: &[Vec<f64>]) -> Dataset {
        Dataset::from_rows(rows, None, ModelKind::Mean).unwrap()
    }

    #[test]
    fn mean_of_two_points() {
        let d = mean_data(&[vec![1.0], vec![3.0]]);
        assert_eq!(&*fit_mean(&d, None).unwrap(), &[2.0]);
        let w = WeightVector::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(&*fit_mean(&d, Some(&w)).unwrap(), &[1.5]);
    }

    #[test]
    fn mean_matches_direct_summation() {
        let rows = vec![
            vec![0.3, -1.2],
            vec![2.5, 0.7],
            vec![-0.4, 3.3],
            vec![1.1, 1.9],
            vec![0.0, -0.6],
        ];
        let d = mean_data(&rows);
        let est = fit_mean(&d, None).unwrap();
        for j in 0..2 {
            let mut s = 0.0;
            for r in &rows {
                s += r[j];
            }
            assert!(close(est[j], s / 5.0, 1e-15));
        }
    }

    #[test]
    fn ols_identity_design() {
        let d = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(&[2.0, 3.0]),
            ModelKind::Linear,
        )
        .unwrap();
        let b = fit_ols(&d, None).unwrap();
        assert!(close(b[0], 2.0, 1e-14) && close(b[1], 3.0, 1e-14));
    }

    #[test]
    fn ols_rank_deficient_is_singular() {
        let d = Dataset::from_rows(
            &[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]],
            Some(&[1.0, 2.0, 3.0]),
            ModelKind::Linear,
        )
        .unwrap();
        assert!(matches!(
            fit_ols(&d, None),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn ols_zero_weights_drop_rows() {
        let d = Dataset::from_rows(
            &[vec![1.0], vec![1.0], vec![1.0]],
            Some(&[1.0, 5.0, 100.0]),
            ModelKind::Linear,
        )
        .unwrap();
        let w = WeightVector::new(vec![1.0, 1.0, 0.0]).unwrap();
        assert!(close(fit_ols(&d, Some(&w)).unwrap()[0], 3.0, 1e-14));
    }

    fn intercept_only(ones: usize, zeros: usize) -> Dataset {
        let n = ones + zeros;
        let rows = vec![vec![1.0]; n];
        let y: Vec<f64> = (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect();
        Dataset::from_rows(&rows, Some(&y), ModelKind::Logistic).unwrap()
    }

    #[test]
    fn logistic_intercept_only() {
        let b = fit_logistic(&intercept_only(10, 10), None).unwrap();
        assert!(b[0].abs() < 1e-12);
        let b = fit_logistic(&intercept_only(30, 10), None).unwrap();
        assert!(close(b[0], 3f64.ln(), 1e-8));
    }

    #[test]
    fn logistic_one_class() {
        assert_eq!(
            fit_logistic(&intercept_only(5, 0), None),
            Err(Error::OneClassOnly)
        );
        // Only the zero-weighted rows carry the other class.
        let d = intercept_only(3, 2);
        let w = WeightVector::new(vec![1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(fit_logistic(&d, Some(&w)), Err(Error::OneClassOnly));
    }

    #[test]
    fn logistic_separated_data() {
        let d = Dataset::from_rows(
            &[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            Some(&[0.0, 0.0, 1.0, 1.0]),
            ModelKind::Logistic,
        )
        .unwrap();
        assert!(matches!(
            fit_logistic(&d, None),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn kind_mismatch() {
        let d = mean_data(&[vec![1.0]]);
        assert!(matches!(
            fit_ols(&d, None),
            Err(Error::ModelMismatch { .. })
        ));
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::from_rows(&[vec![f64::NAN]], None, ModelKind::Mean).is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], Some(&[0.5]), ModelKind::Logistic).is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], None, ModelKind::Linear).is_err());
        assert_eq!(
            Dataset::from_rows(&[], None, ModelKind::Mean),
            Err(Error::EmptyData)
        );
        assert!(WeightVector::new(vec![0.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn standardize_basic_and_idempotent() {
        let d = mean_data(&[vec![1.0], vec![2.0], vec![3.0]]);
        let s = standardize(&d).unwrap();
        let col: Vec<f64> = s.x().column(0).iter().copied().collect();
        assert!(close(col.iter().sum::<f64>(), 0.0, 1e-15));
        let var = col.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!(close(var, 1.0, 1e-15));
        let again = standardize(&s).unwrap();
        for (a, b) in again.x().iter().zip(s.x().iter()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn standardize_keeps_intercept_and_rejects_constants() {
        let d = mean_data(&[vec![1.0, 5.0], vec![4.0, 5.0]]);
        assert_eq!(standardize(&d), Err(Error::ConstantColumn("x2".into())));
        let d = mean_data(&[vec![1.0], vec![4.0], vec![2.0]]).with_intercept();
        let s = standardize(&d).unwrap();
        assert!(s.x().column(0).iter().all(|&v| v == 1.0));
    }
}
