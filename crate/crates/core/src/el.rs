//! Empirical likelihood for the mean of a small sample of points.
//!
//! The points are the per-block estimates produced by the divide-and-conquer
//! step. For a hypothesized mean `mu` the profile weights are
//! `w_k = 1 / (K (1 + lambda'(y_k - mu)))`, where the multiplier `lambda`
//! solves `sum_k (y_k - mu) / (1 + lambda'(y_k - mu)) = 0`. The multiplier is
//! found by damped Newton on the convex dual
//! `-sum_k log*(1 + lambda'(y_k - mu))`, where `log*` is the logarithm
//! continued quadratically below `1/K`. At an interior solution every
//! argument is at least `1/K`, so `log*` coincides with `log` there; the
//! final feasibility check rejects the extended solution otherwise.
//!
//! The dual is solved in coordinates whitened by the centered second-moment
//! matrix `S_K`; `-2 log R` is affine invariant, so this only improves
//! conditioning and makes the stopping rule scale free.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::chisq;
use crate::error::{Error, Result};

const MAX_NEWTON_ITER: usize = 50;
const MAX_HALVINGS: usize = 40;
const MAX_SCALAR_ITER: usize = 500;
const GRADIENT_TOL: f64 = 1e-10;
// Newton keeps polishing below the acceptance tolerance while it can.
const POLISH_TOL: f64 = 1e-14;
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Sample on which EL operates: `K` rows in dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElPoints {
    y: DMatrix<f64>,
}

impl ElPoints {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() < 2 {
            return Err(Error::InvalidInput("EL needs at least two points".into()));
        }
        if y.ncols() == 0 {
            return Err(Error::InvalidInput(
                "EL points need at least one coordinate".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "EL points contain non-finite values".into(),
            ));
        }
        Ok(Self { y })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    /// One-dimensional sample.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn row_mean(&self) -> Vec<f64> {
        let k = self.k() as f64;
        self.y.column_iter().map(|c| c.sum() / k).collect()
    }

    /// Projection on coordinate `j` (zero-based).
    pub fn coordinate(&self, j: usize) -> Result<ElPoints> {
        if j >= self.p() {
            return Err(Error::InvalidInput(format!(
                "coordinate {j} out of range for dimension {}",
                self.p()
            )));
        }
        Ok(Self {
            y: self.y.columns(j, 1).into_owned(),
        })
    }
}

/// Solution of the EL problem at one hypothesized mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ElResult {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub neg2_log_r: f64,
    /// `(1/K) sum_k (y_k - mu)(y_k - mu)'`.
    pub s_k: DMatrix<f64>,
    /// `max_k ||y_k - mu||`.
    pub z_k: f64,
    /// Sup-norm of `(1/K) sum_k (y_k - mu) / (1 + lambda'(y_k - mu))` at the solution.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn log_star(t: f64, eps: f64) -> f64 {
    if t >= eps {
        t.ln()
    } else {
        let r = t / eps;
        eps.ln() - 1.5 + 2.0 * r - 0.5 * r * r
    }
}

#[inline]
fn log_star_d1(t: f64, eps: f64) -> f64 {
    if t >= eps {
        1.0 / t
    } else {
        (2.0 - t / eps) / eps
    }
}

#[inline]
fn log_star_d2(t: f64, eps: f64) -> f64 {
    if t >= eps {
        -1.0 / (t * t)
    } else {
        -1.0 / (eps * eps)
    }
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalFailure(format!("non-finite {what}")))
    }
}

/// One-dimensional dual: the root of `g(l) = sum z / (1 + l z)` on the open
/// interval `(-1/max z, -1/min z)` where every weight is positive. `g`
/// decreases from `+inf` to `-inf` there, so a Newton iteration kept inside a
/// shrinking bracket always converges, however close `mu` is to the hull
/// boundary.
fn solve_scalar(z: &[f64], z_min: f64, z_max: f64) -> ElResult {
    let k = z.len();
    let kf = k as f64;
    let g = |l: f64| -> (f64, f64) {
        z.iter().fold((0.0, 0.0), |(g, d), &zi| {
            let r = zi / (1.0 + l * zi);
            (g + r, d - r * r)
        })
    };
    let (mut a, mut b) = (-1.0 / z_max, -1.0 / z_min);
    let mut lam = 0.0;
    let mut iterations = 0;
    while iterations < MAX_SCALAR_ITER {
        let (gv, dv) = g(lam);
        if gv == 0.0 {
            break;
        }
        if gv > 0.0 {
            a = lam;
        } else {
            b = lam;
        }
        let newton = lam - gv / dv;
        let next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if next == lam || !(a < b) {
            break;
        }
        lam = next;
        iterations += 1;
    }
    let t: Vec<f64> = z.iter().map(|&zi| 1.0 + lam * zi).collect();
    let omega: Vec<f64> = t.iter().map(|&ti| 1.0 / (kf * ti)).collect();
    let s = z.iter().map(|v| v * v).sum::<f64>() / kf;
    let neg2 = 2.0 * t.iter().map(|ti| ti.ln()).sum::<f64>();
    ElResult {
        lambda: vec![lam],
        omega,
        neg2_log_r: neg2.max(0.0),
        s_k: DMatrix::from_element(1, 1, s),
        z_k: z.iter().fold(0.0, |m, v| m.max(v.abs())),
        gradient_norm: (g(lam).0 / kf).abs(),
        iterations,
        converged: true,
    }
}

/// Solves the EL problem for the mean `mu`.
pub fn solve_el(points: &ElPoints, mu: &[f64]) -> Result<ElResult> {
    let (k, p) = (points.k(), points.p());
    if mu.len() != p {
        return Err(Error::InvalidInput(format!(
            "mu has length {} but points have dimension {p}",
            mu.len()
        )));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("mu must be finite".into()));
    }
    let kf = k as f64;
    let z = DMatrix::from_fn(k, p, |i, j| points.y[(i, j)] - mu[j]);

    if p == 1 {
        let (lo, hi) = z
            .column(0)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if lo >= 0.0 || hi <= 0.0 {
            return Err(Error::NotInConvexHull);
        }
        return Ok(solve_scalar(z.column(0).as_slice(), lo, hi));
    }

    let s_k = (z.transpose() * &z) / kf;
    let z_k = z.row_iter().map(|r| r.norm()).fold(0.0, f64::max);

    // Whitening: u_k = L^{-1} z_k with S_K = L L'. A singular S_K means the
    // centered points lie in a proper subspace, so mu is on the hull boundary.
    let chol = Cholesky::new(s_k.clone()).ok_or(Error::NotInConvexHull)?;
    let l = chol.l();
    let diag = l.diagonal();
    if diag.min() <= 1e-12 * diag.max() {
        return Err(Error::NotInConvexHull);
    }
    let u = l
        .solve_lower_triangular(&z.transpose())
        .ok_or_else(|| Error::NumericalFailure("whitening failed".into()))?
        .transpose();

    let eps = 1.0 / kf;
    let objective = |lam: &DVector<f64>| -> f64 {
        (0..k)
            .map(|i| -log_star(1.0 + u.row(i).dot(&lam.transpose()), eps))
            .sum()
    };

    let mut lam = DVector::<f64>::zeros(p);
    let mut obj = objective(&lam);
    let mut iterations = 0;
    let mut t = vec![1.0; k];
    let mut grad = DVector::<f64>::zeros(p);
    let mut hess = DMatrix::<f64>::zeros(p, p);

    loop {
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = 1.0 + u.row(i).dot(&lam.transpose());
        }
        grad.fill(0.0);
        hess.fill(0.0);
        for (i, &ti) in t.iter().enumerate() {
            let ui = u.row(i).transpose();
            grad.axpy(-log_star_d1(ti, eps), &ui, 1.0);
            hess.ger(-log_star_d2(ti, eps), &ui, &ui, 1.0);
        }
        if grad.amax() / kf < POLISH_TOL || iterations >= MAX_NEWTON_ITER {
            break;
        }
        iterations += 1;

        let step = match Cholesky::new(hess.clone()) {
            Some(c) => c.solve(&grad),
            None => {
                let ridge = 1e-10 * hess.diagonal().amax().max(1.0);
                let shifted = &hess + DMatrix::identity(p, p) * ridge;
                Cholesky::new(shifted)
                    .ok_or_else(|| {
                        Error::NumericalFailure("dual Hessian is not positive definite".into())
                    })?
                    .solve(&grad)
            }
        };
        // Near the optimum the decrease drops below the rounding error of the
        // objective, so steps within that error are accepted too.
        let slack = 8.0 * f64::EPSILON * (kf + obj.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &lam - &step * scale;
            if cand == lam {
                break;
            }
            let cand_obj = objective(&cand);
            check_finite(cand_obj, "dual objective")?;
            if cand_obj <= obj + slack {
                lam = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Feasibility: every weight positive, the original (unextended) dual
    // equation satisfied, and the weights summing to one. Outside the hull the
    // dual is unbounded along a separating direction; there every argument
    // grows without bound and the gradient vanishes while the weights do not
    // sum to one.
    let feasible = t.iter().all(|&ti| ti > 0.0);
    let dual_grad_white = (0..k).fold(DVector::<f64>::zeros(p), |acc, i| {
        acc + u.row(i).transpose() / t[i]
    }) / kf;
    let weight_sum: f64 = t.iter().map(|&ti| 1.0 / (kf * ti)).sum();
    if !feasible
        || !(dual_grad_white.amax() < GRADIENT_TOL)
        || !((weight_sum - 1.0).abs() <= WEIGHT_SUM_TOL)
    {
        return Err(Error::NotInConvexHull);
    }

    let lambda = l
        .transpose()
        .solve_upper_triangular(&lam)
        .ok_or_else(|| Error::NumericalFailure("back-transforming lambda failed".into()))?;
    let omega: Vec<f64> = t.iter().map(|&ti| 1.0 / (kf * ti)).collect();
    let dual_grad = (0..k).fold(DVector::<f64>::zeros(p), |acc, i| {
        acc + z.row(i).transpose() / t[i]
    }) / kf;
    let neg2 = 2.0 * t.iter().map(|ti| ti.ln()).sum::<f64>();
    check_finite(neg2, "-2 log R")?;

    Ok(ElResult {
        lambda: lambda.iter().copied().collect(),
        omega,
        neg2_log_r: neg2.max(0.0),
        s_k,
        z_k,
        gradient_norm: dual_grad.amax(),
        iterations,
        converged: true,
    })
}

/// What a [`TestResult`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    FullVector,
    /// Zero-based coordinate index.
    Coordinate(usize),
}

/// Wilks test outcome. A hypothesized value outside the convex hull yields
/// `statistic = +inf`, `p_value = 0` and rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub kind: TestKind,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "level {level} must lie in (0, 1)"
        )))
    }
}

fn statistic_or_inf(points: &ElPoints, mu: &[f64]) -> Result<f64> {
    match solve_el(points, mu) {
        Ok(r) => Ok(r.neg2_log_r),
        Err(Error::NotInConvexHull) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn wilks(statistic: f64, df: usize, level: f64, kind: TestKind) -> TestResult {
    let critical_value = chisq::critical_value(level, df);
    TestResult {
        statistic,
        df,
        critical_value,
        p_value: chisq::upper_tail(statistic, df),
        reject: statistic > critical_value,
        kind,
    }
}

/// Test of `H0: E[y] = mu0` for the whole vector, calibrated by `chi2(p)`.
pub fn el_test_full(points: &ElPoints, mu0: &[f64], level: f64) -> Result<TestResult> {
    check_level(level)?;
    if points.k() < points.p() + 1 {
        return Err(Error::InvalidInput(format!(
            "full-vector EL needs at least {} points, got {}",
            points.p() + 1,
            points.k()
        )));
    }
    let stat = statistic_or_inf(points, mu0)?;
    Ok(wilks(stat, points.p(), level, TestKind::FullVector))
}

/// Marginal test of `H0: E[y_j] = c0` using one-dimensional EL on coordinate `j`.
pub fn el_test_coordinate(points: &ElPoints, j: usize, c0: f64, level: f64) -> Result<TestResult> {
    check_level(level)?;
    let col = points.coordinate(j)?;
    let stat = statistic_or_inf(&col, &[c0])?;
    Ok(wilks(stat, 1, level, TestKind::Coordinate(j)))
}

/// `{c : -2 log R_j(c) <= chi2_{1, 1-level}}` for coordinate `j`, found by
/// bisection between the coordinate mean and each extreme point.
pub fn el_confidence_interval(points: &ElPoints, j: usize, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let col = points.coordinate(j)?;
    let values = col.y.column(0);
    let (min, max) = (values.min(), values.max());
    if !(max > min) {
        return Err(Error::DegenerateColumn(j));
    }
    let mean = values.sum() / col.k() as f64;
    let crit = chisq::critical_value(level, 1);
    let tol = 1e-10 * (1.0 + mean.abs());

    // `inside` satisfies stat <= crit, `outside` does not.
    let endpoint = |outside_start: f64| -> Result<f64> {
        let (mut inside, mut outside) = (mean, outside_start);
        while (outside - inside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if statistic_or_inf(&col, &[mid])? <= crit {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(inside)
    };
    let lo = endpoint(min)?;
    let hi = endpoint(max)?;
    Ok((lo, hi))
}

/// Marginal statistic on a grid of values for coordinate `j`; points outside
/// the hull carry `+inf`.
pub fn neg2_log_r_profile(points: &ElPoints, j: usize, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let col = points.coordinate(j)?;
    grid.iter()
        .map(|&c| {
            if !c.is_finite() {
                return Err(Error::InvalidInput("grid values must be finite".into()));
            }
            Ok((c, statistic_or_inf(&col, &[c])?))
        })
        .collect()
}
