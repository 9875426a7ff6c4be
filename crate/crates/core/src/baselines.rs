//! Resampling baselines: traditional bootstrap (TB), bag of little
//! bootstraps (BLB) and subsampled double bootstrap (SDB).
//!
//! All three produce per-coordinate percentile intervals from weighted fits
//! of the estimators in [`crate::model`]. Each resample draws from its own
//! stream addressed by (seed, method, subset, resample, attempt), so results
//! are independent of thread scheduling.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Estimator, ParamVector, WeightVector};
use crate::rng::{self, tag};

/// Failed resamples are redrawn this many times before giving up.
const MAX_REDRAWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tb,
    Blb,
    Sdb,
}

/// Total multinomial count of each BLB resample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlbResampleSize {
    /// Counts sum to the subset size `b`; interval widths then scale like
    /// `1/sqrt(b)`, which is what the reference BLB tables show.
    #[default]
    Subset,
    /// Counts sum to the full sample size `n` (each subset mimics a size-`n`
    /// bootstrap).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplePlan {
    pub method: Method,
    /// Subset size `b = round(n^gamma)`.
    pub b: usize,
    pub gamma: f64,
    /// Number of subsets.
    pub subsets: usize,
    /// Resamples per subset (BLB).
    pub resamples: usize,
    /// Bootstrap replicates (TB).
    pub replicates: usize,
    pub level: f64,
    pub blb_resample_size: BlbResampleSize,
}

pub fn subset_size(n: usize, gamma: f64) -> usize {
    ((n as f64).powf(gamma).round() as usize).clamp(1, n)
}

impl ResamplePlan {
    /// BLB with 20 subsets of 100 resamples each.
    pub fn blb(n: usize, gamma: f64, level: f64) -> Self {
        Self {
            method: Method::Blb,
            b: subset_size(n, gamma),
            gamma,
            subsets: 20,
            resamples: 100,
            replicates: 0,
            level,
            blb_resample_size: BlbResampleSize::Subset,
        }
    }

    /// SDB with 500 subsets.
    pub fn sdb(n: usize, gamma: f64, level: f64) -> Self {
        Self {
            method: Method::Sdb,
            b: subset_size(n, gamma),
            gamma,
            subsets: 500,
            resamples: 1,
            replicates: 0,
            level,
            blb_resample_size: BlbResampleSize::Subset,
        }
    }

    /// TB with 100 replicates.
    pub fn tb(n: usize, level: f64) -> Self {
        Self {
            method: Method::Tb,
            b: n,
            gamma: 1.0,
            subsets: 1,
            resamples: 1,
            replicates: 100,
            level,
            blb_resample_size: BlbResampleSize::Full,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.b < 1 || self.b > n {
            return Err(Error::InvalidInput(format!(
                "subset size {} not in [1, {n}]",
                self.b
            )));
        }
        if self.subsets < 1 {
            return Err(Error::InvalidInput(
                "at least one subset is required".into(),
            ));
        }
        if self.method == Method::Blb && self.resamples < 1 {
            return Err(Error::InvalidInput(
                "BLB needs at least one resample per subset".into(),
            ));
        }
        if self.method == Method::Tb && self.replicates < 1 {
            return Err(Error::InvalidInput(
                "TB needs at least one replicate".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "level {} must lie in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Per-coordinate intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub intervals: Vec<(f64, f64)>,
    /// Median of the resample estimates per coordinate (averaged over
    /// subsets for BLB).
    pub medians: Vec<f64>,
    pub method: Method,
    pub level: f64,
}

impl IntervalSet {
    pub fn lengths(&self) -> Vec<f64> {
        self.intervals.iter().map(|(lo, hi)| hi - lo).collect()
    }

    pub fn covers(&self, j: usize, value: f64) -> bool {
        let (lo, hi) = self.intervals[j];
        lo <= value && value <= hi
    }
}

/// Multinomial(`total`; uniform over `cells`) counts, drawn as a chain of
/// conditional binomials. The counts always sum to `total` exactly.
pub fn multinomial_counts<R: Rng + ?Sized>(cells: usize, total: u64, rng: &mut R) -> Vec<u64> {
    assert!(cells >= 1, "need at least one cell");
    let mut counts = Vec::with_capacity(cells);
    let mut remaining = total;
    for i in 0..cells - 1 {
        if remaining == 0 {
            counts.push(0);
            continue;
        }
        let p = 1.0 / (cells - i) as f64;
        let c = Binomial::new(remaining, p)
            .expect("valid binomial")
            .sample(rng);
        counts.push(c);
        remaining -= c;
    }
    counts.push(remaining);
    counts
}

/// Resample weights for `b` points whose counts sum to `n`.
pub fn multinomial_weights(b: usize, n: usize, seed: u64) -> Result<WeightVector> {
    if b < 1 || n < 1 {
        return Err(Error::InvalidInput(
            "multinomial weights need b >= 1 and n >= 1".into(),
        ));
    }
    let counts = multinomial_counts(b, n as u64, &mut rng::stream(seed, &[tag::MULTINOMIAL]));
    WeightVector::from_counts(&counts)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval and median for each column of the replicate matrix.
fn percentile_columns(reps: &DMatrix<f64>, level: f64) -> (Vec<(f64, f64)>, Vec<f64>) {
    reps.column_iter()
        .map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            (
                (
                    quantile_sorted(&v, level / 2.0),
                    quantile_sorted(&v, 1.0 - level / 2.0),
                ),
                quantile_sorted(&v, 0.5),
            )
        })
        .unzip()
}

/// One weighted fit with up to [`MAX_REDRAWS`] redraws of the weights.
fn weighted_fit(
    data: &Dataset,
    estimator: Estimator,
    total: usize,
    seed: u64,
    path: &[u64],
) -> Result<ParamVector> {
    let mut last = None;
    for attempt in 0..=MAX_REDRAWS {
        let mut full_path = path.to_vec();
        full_path.push(attempt as u64);
        let mut rng = rng::stream(seed, &full_path);
        let counts = multinomial_counts(data.nrows(), total as u64, &mut rng);
        let w = WeightVector::from_counts(&counts)?;
        match estimator.fit(data, Some(&w)) {
            Ok(theta) => return Ok(theta),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::ResampleFailed {
        attempts: MAX_REDRAWS + 1,
        source: Box::new(last.expect("at least one attempt")),
    })
}

fn stack(rows: Vec<ParamVector>) -> DMatrix<f64> {
    let p = rows[0].dim();
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

/// Random subset of size `b` drawn without replacement.
fn draw_subset(data: &Dataset, b: usize, seed: u64, path: &[u64]) -> Dataset {
    let mut rng = rng::stream(seed, path);
    let mut idx = index::sample(&mut rng, data.nrows(), b).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}

/// Traditional bootstrap: `replicates` full-size multinomial resamples.
pub fn tb(
    data: &Dataset,
    estimator: Estimator,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<IntervalSet> {
    let plan = ResamplePlan {
        replicates,
        ..ResamplePlan::tb(data.nrows(), level)
    };
    plan.validate(data.nrows())?;
    let n = data.nrows();
    let fits = (0..replicates)
        .into_par_iter()
        .map(|r| weighted_fit(data, estimator, n, seed, &[tag::TB, r as u64]))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (intervals, medians) = percentile_columns(&stack(fits), level);
    Ok(IntervalSet {
        intervals,
        medians,
        method: Method::Tb,
        level,
    })
}

/// Bag of little bootstraps: per-subset percentile intervals from
/// `plan.resamples` weighted fits, averaged endpoint-wise over subsets.
pub fn blb(
    data: &Dataset,
    estimator: Estimator,
    plan: &ResamplePlan,
    seed: u64,
) -> Result<IntervalSet> {
    if plan.method != Method::Blb {
        return Err(Error::InvalidInput("plan is not a BLB plan".into()));
    }
    let n = data.nrows();
    plan.validate(n)?;
    let total = match plan.blb_resample_size {
        BlbResampleSize::Subset => plan.b,
        BlbResampleSize::Full => n,
    };
    let per_subset = (0..plan.subsets)
        .into_par_iter()
        .map(|s| {
            let subset = draw_subset(data, plan.b, seed, &[tag::BLB, s as u64]);
            let fits = (0..plan.resamples)
                .map(|r| {
                    weighted_fit(
                        &subset,
                        estimator,
                        total,
                        seed,
                        &[tag::BLB, s as u64, r as u64],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(percentile_columns(&stack(fits), plan.level))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let p = per_subset[0].0.len();
    let s = per_subset.len() as f64;
    let mut intervals = vec![(0.0, 0.0); p];
    let mut medians = vec![0.0; p];
    for (iv, med) in &per_subset {
        for j in 0..p {
            intervals[j].0 += iv[j].0;
            intervals[j].1 += iv[j].1;
            medians[j] += med[j];
        }
    }
    for j in 0..p {
        intervals[j].0 /= s;
        intervals[j].1 /= s;
        medians[j] /= s;
    }
    Ok(IntervalSet {
        intervals,
        medians,
        method: Method::Blb,
        level: plan.level,
    })
}

/// Subsampled double bootstrap: one size-`n` weighted fit per random subset;
/// the interval is the pooled percentile interval of those fits.
pub fn sdb(
    data: &Dataset,
    estimator: Estimator,
    plan: &ResamplePlan,
    seed: u64,
) -> Result<IntervalSet> {
    if plan.method != Method::Sdb {
        return Err(Error::InvalidInput("plan is not an SDB plan".into()));
    }
    let n = data.nrows();
    plan.validate(n)?;
    let fits = (0..plan.subsets)
        .into_par_iter()
        .map(|s| {
            // A failed SDB resample redraws the subset as well as the weights.
            let mut last = None;
            for attempt in 0..=MAX_REDRAWS {
                let path = [tag::SDB, s as u64, attempt as u64];
                let subset = draw_subset(data, plan.b, seed, &path);
                let mut rng = rng::stream(
                    seed,
                    &[tag::SDB, s as u64, attempt as u64, tag::MULTINOMIAL],
                );
                let w = WeightVector::from_counts(&multinomial_counts(plan.b, n as u64, &mut rng))?;
                match estimator.fit(&subset, Some(&w)) {
                    Ok(theta) => return Ok(theta),
                    Err(e) => last = Some(e),
                }
            }
            Err(Error::ResampleFailed {
                attempts: MAX_REDRAWS + 1,
                source: Box::new(last.expect("at least one attempt")),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (intervals, medians) = percentile_columns(&stack(fits), plan.level);
    Ok(IntervalSet {
        intervals,
        medians,
        method: Method::Sdb,
        level: plan.level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn single_cell_takes_everything() {
        assert_eq!(&*multinomial_weights(1, 7, 3).unwrap(), &[7.0]);
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert!((quantile_sorted(&v, 0.025) - 1.075).abs() < 1e-15);
    }

    #[test]
    fn subset_sizes() {
        assert_eq!(subset_size(100_000, 0.6), 1000);
        assert_eq!(subset_size(100_000, 0.8), 10_000);
        assert_eq!(subset_size(10_000, 0.6), 251);
    }

    fn constant_mean_data(n: usize) -> Dataset {
        Dataset::from_rows(&vec![vec![4.25]; n], None, ModelKind::Mean).unwrap()
    }

    #[test]
    fn constant_data_gives_zero_width() {
        let d = constant_mean_data(50);
        let iv = tb(&d, Estimator::Mean, 20, 0.05, 1).unwrap();
        assert_eq!(iv.intervals, vec![(4.25, 4.25)]);
        let iv = sdb(&d, Estimator::Mean, &ResamplePlan::sdb(50, 0.6, 0.05), 1).unwrap();
        assert_eq!(iv.intervals, vec![(4.25, 4.25)]);
        let iv = blb(&d, Estimator::Mean, &ResamplePlan::blb(50, 0.6, 0.05), 1).unwrap();
        assert_eq!(iv.lengths(), vec![0.0]);
    }

    #[test]
    fn plan_method_is_checked() {
        let d = constant_mean_data(50);
        assert!(blb(&d, Estimator::Mean, &ResamplePlan::sdb(50, 0.6, 0.05), 1).is_err());
        assert!(sdb(&d, Estimator::Mean, &ResamplePlan::blb(50, 0.6, 0.05), 1).is_err());
        assert!(tb(&d, Estimator::Mean, 0, 0.05, 1).is_err());
    }

    #[test]
    fn failing_resamples_abort() {
        // Intercept-only logistic data with a single positive: most
        // resamples miss it and collapse to one class.
        let n = 200;
        let mut y = vec![0.0; n];
        y[0] = 1.0;
        let d = Dataset::from_rows(&vec![vec![1.0]; n], Some(&y), ModelKind::Logistic).unwrap();
        let plan = ResamplePlan::sdb(n, 0.6, 0.05);
        assert!(matches!(
            sdb(&d, Estimator::Logistic, &plan, 9),
            Err(Error::ResampleFailed { attempts: 6, .. })
        ));
    }
}
