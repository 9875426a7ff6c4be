//! Divide-and-conquer estimation followed by empirical likelihood on the
//! block estimates.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::el::{self, ElPoints, TestResult};
use crate::error::{Error, Result};
use crate::model::{Dataset, Estimator, ParamVector};
use crate::rng::{self, tag};

/// Random split of `n` indices into `k` disjoint blocks of common size `m`.
/// The `n - k*m` indices left over after the cut are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    order: Vec<usize>,
    k: usize,
    m: usize,
    n: usize,
}

impl Partition {
    /// Shuffles `0..n` with the partition stream of `seed` and cuts it into
    /// `k` consecutive chunks of `n / k`.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[tag::PARTITION]));
        Self::from_order(order, k)
    }

    /// Blocks made of consecutive indices (identity permutation).
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        Self::from_order((0..n).collect(), k)
    }

    /// Cuts an explicit permutation of `0..n` into `k` blocks.
    pub fn from_order(order: Vec<usize>, k: usize) -> Result<Self> {
        let n = order.len();
        if k < 2 {
            return Err(Error::InvalidInput(
                "at least two blocks are required".into(),
            ));
        }
        if n < 2 * k {
            return Err(Error::TooManyBlocks { n, k, min_block: 2 });
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput("order is not a permutation".into()));
            }
        }
        Ok(Self {
            order,
            k,
            m: n / k,
            n,
        })
    }

    /// Errors with [`Error::TooManyBlocks`] unless every block holds at least
    /// `min_block` observations.
    pub fn require_block_size(&self, min_block: usize) -> Result<()> {
        if self.m < min_block {
            return Err(Error::TooManyBlocks {
                n: self.n,
                k: self.k,
                min_block,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dropped(&self) -> usize {
        self.n - self.k * self.m
    }

    /// Indices of block `b` (zero-based).
    pub fn block(&self, b: usize) -> &[usize] {
        &self.order[b * self.m..(b + 1) * self.m]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> {
        self.order[..self.k * self.m].chunks(self.m)
    }

    /// Block id of every original index; `None` for dropped indices.
    pub fn assignment(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n];
        for (b, block) in self.blocks().enumerate() {
            for &i in block {
                out[i] = Some(b);
            }
        }
        out
    }
}

/// Per-block estimates, row `k` from block `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimates {
    pub theta_hat: DMatrix<f64>,
    pub m: usize,
    pub estimator: Estimator,
}

impl BlockEstimates {
    pub fn k(&self) -> usize {
        self.theta_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.theta_hat.ncols()
    }

    /// The block estimates as an EL sample. Working with raw estimates
    /// instead of `sqrt(m)`-scaled ones leaves `-2 log R` unchanged.
    pub fn el_points(&self) -> Result<ElPoints> {
        ElPoints::new(self.theta_hat.clone())
    }
}

/// Wall-clock cost of the block-estimation stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockTiming {
    /// Slowest block, a proxy for parallel cost `t(m)`.
    pub max: Duration,
    /// Sum over blocks, the sequential cost `K t(m)`.
    pub sum: Duration,
}

/// Applies `estimator` to every block. Blocks run in parallel; results are
/// gathered by position, so the output does not depend on scheduling.
pub fn block_estimates(
    data: &Dataset,
    part: &Partition,
    estimator: Estimator,
) -> Result<BlockEstimates> {
    block_estimates_timed(data, part, estimator).map(|(est, _)| est)
}

pub fn block_estimates_timed(
    data: &Dataset,
    part: &Partition,
    estimator: Estimator,
) -> Result<(BlockEstimates, BlockTiming)> {
    if part.n() != data.nrows() {
        return Err(Error::InvalidInput(format!(
            "partition covers {} observations but the dataset has {}",
            part.n(),
            data.nrows()
        )));
    }
    part.require_block_size(estimator.min_observations(data.ncols()))?;

    let fits: Vec<(Result<ParamVector>, Duration)> = (0..part.k())
        .into_par_iter()
        .map(|b| {
            let start = Instant::now();
            let block = data.select_rows(part.block(b));
            let fit = estimator.fit(&block, None);
            (fit, start.elapsed())
        })
        .collect();

    let mut timing = BlockTiming::default();
    let mut rows = Vec::with_capacity(part.k());
    for (b, (fit, elapsed)) in fits.into_iter().enumerate() {
        timing.max = timing.max.max(elapsed);
        timing.sum += elapsed;
        let theta = fit.map_err(|e| Error::BlockEstimationFailed {
            block: b,
            source: Box::new(e),
        })?;
        rows.push(theta);
    }
    let p = rows[0].dim();
    let theta_hat = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok((
        BlockEstimates {
            theta_hat,
            m: part.m(),
            estimator,
        },
        timing,
    ))
}

/// Column-wise mean of the block estimates.
pub fn dac_estimate(est: &BlockEstimates) -> ParamVector {
    let k = est.k() as f64;
    let theta = est.theta_hat.column_iter().map(|c| c.sum() / k).collect();
    ParamVector::new(theta).expect("block estimates are finite")
}

/// A hypothesis or interval request evaluated on the block estimates.
/// Coordinates are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    /// `H0: theta = mu0`.
    Full { mu0: Vec<f64> },
    /// `H0: theta_j = value`.
    Coordinate { j: usize, value: f64 },
    /// EL confidence interval for `theta_j`.
    Interval { j: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Test(TestResult),
    Interval { j: usize, lo: f64, hi: f64 },
}

/// Timing decomposition `K t(m) + c(K)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DacTiming {
    pub blocks: BlockTiming,
    /// EL stage `c(K)`.
    pub el: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub estimate: ParamVector,
    pub k: usize,
    pub m: usize,
    pub dropped: usize,
    pub blocks: BlockEstimates,
    pub outcomes: Vec<Outcome>,
    pub timing: DacTiming,
}

/// Runs partition, block estimation and the requested EL tests/intervals.
/// A failed block aborts the run with [`Error::BlockEstimationFailed`].
pub fn dac_el_infer(
    data: &Dataset,
    k: usize,
    estimator: Estimator,
    tests: &[Hypothesis],
    level: f64,
    seed: u64,
) -> Result<InferenceReport> {
    let start = Instant::now();
    let part = Partition::new(data.nrows(), k, seed)?;
    let (blocks, block_timing) = block_estimates_timed(data, &part, estimator)?;

    let el_start = Instant::now();
    let points = blocks.el_points()?;
    let outcomes = tests
        .iter()
        .map(|h| match h {
            Hypothesis::Full { mu0 } => el::el_test_full(&points, mu0, level).map(Outcome::Test),
            Hypothesis::Coordinate { j, value } => {
                el::el_test_coordinate(&points, *j, *value, level).map(Outcome::Test)
            }
            Hypothesis::Interval { j } => el::el_confidence_interval(&points, *j, level)
                .map(|(lo, hi)| Outcome::Interval { j: *j, lo, hi }),
        })
        .collect::<Result<Vec<_>>>()?;
    let el_time = el_start.elapsed();

    Ok(InferenceReport {
        estimate: dac_estimate(&blocks),
        k: part.k(),
        m: part.m(),
        dropped: part.dropped(),
        blocks,
        outcomes,
        timing: DacTiming {
            blocks: block_timing,
            el: el_time,
            total: start.elapsed(),
        },
    })
}
