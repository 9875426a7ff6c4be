use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::dacel::baselines::{self, ResamplePlan};
use ::dacel::dac::{self, Hypothesis, Outcome};
use ::dacel::datagen::{self, DesignSpec, Example};
use ::dacel::el::{self, ElPoints, TestKind};
use ::dacel::harness::{self, ExperimentConfig};
use ::dacel::ingest::{self, CsvSchema};
use ::dacel::model::{self, Estimator, ModelKind};

fn err(e: ::dacel::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = ::dacel::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Solution of the empirical likelihood problem at one mean.
#[pyclass(frozen, get_all)]
struct ElSolution {
    lambda: Vec<f64>,
    omega: Vec<f64>,
    neg2_log_r: f64,
    iterations: usize,
    converged: bool,
}

#[pymethods]
impl ElSolution {
    fn __repr__(&self) -> String {
        format!(
            "ElSolution(neg2_log_r={}, iterations={})",
            self.neg2_log_r, self.iterations
        )
    }
}

/// Chi-square calibrated test. `coordinate` is None for a full-vector test.
#[pyclass(frozen, get_all)]
struct Test {
    statistic: f64,
    df: usize,
    critical_value: f64,
    p_value: f64,
    reject: bool,
    coordinate: Option<usize>,
}

impl From<el::TestResult> for Test {
    fn from(t: el::TestResult) -> Self {
        Test {
            statistic: t.statistic,
            df: t.df,
            critical_value: t.critical_value,
            p_value: t.p_value,
            reject: t.reject,
            coordinate: match t.kind {
                TestKind::FullVector => None,
                TestKind::Coordinate(j) => Some(j),
            },
        }
    }
}

#[pymethods]
impl Test {
    fn __repr__(&self) -> String {
        format!(
            "Test(statistic={}, p_value={}, reject={})",
            self.statistic, self.p_value, self.reject
        )
    }
}

/// An in-memory regression dataset.
#[pyclass(frozen)]
struct Dataset {
    inner: model::Dataset,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from covariate rows and an optional response.
    #[new]
    #[pyo3(signature = (rows, y=None, model="linear"))]
    fn new(rows: Vec<Vec<f64>>, y: Option<Vec<f64>>, model: &str) -> PyResult<Self> {
        let kind: ModelKind = parse(model)?;
        let inner = model::Dataset::from_rows(&rows, y.as_deref(), kind).map_err(err)?;
        Ok(Dataset { inner })
    }

    /// Simulated design, e.g. `Dataset.simulate("logistic", 3, 10000, seed=7)`.
    #[staticmethod]
    #[pyo3(signature = (example, case, n, seed=1))]
    fn simulate(example: &str, case: u8, n: usize, seed: u64) -> PyResult<Self> {
        let example: Example = parse(example)?;
        let spec = DesignSpec::new(example, case, n, seed).map_err(err)?;
        Ok(Dataset {
            inner: datagen::generate(&spec).map_err(err)?,
        })
    }

    /// Loads one or more CSV files described by a TOML schema file.
    #[staticmethod]
    fn load_csv(paths: Vec<PathBuf>, schema: PathBuf) -> PyResult<Self> {
        let schema = CsvSchema::from_file(&schema).map_err(err)?;
        let report = ingest::load_csv_files(&paths, &schema).map_err(err)?;
        Ok(Dataset {
            inner: report.dataset,
        })
    }

    #[getter]
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    #[getter]
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.column_names().to_vec()
    }

    /// Covariates as a list of rows.
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner
            .x()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    fn y(&self) -> Option<Vec<f64>> {
        self.inner.y().map(|y| y.as_slice().to_vec())
    }

    /// Full-data estimate for the dataset's model.
    fn fit(&self) -> PyResult<Vec<f64>> {
        let est = Estimator::for_kind(self.inner.kind());
        Ok(est.fit(&self.inner, None).map_err(err)?.into_inner())
    }

    fn __len__(&self) -> usize {
        self.inner.nrows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(model={}, nrows={}, ncols={})",
            self.model(),
            self.nrows(),
            self.ncols()
        )
    }
}

/// Result of a divide-and-conquer EL run on one random partition.
#[pyclass(frozen, get_all)]
struct Inference {
    estimate: Vec<f64>,
    k: usize,
    m: usize,
    dropped: usize,
    /// One row per block.
    block_estimates: Vec<Vec<f64>>,
    tests: Vec<Py<Test>>,
    intervals: Vec<(f64, f64)>,
    seconds: f64,
}

fn points(rows: Vec<Vec<f64>>) -> PyResult<ElPoints> {
    ElPoints::from_rows(&rows).map_err(err)
}

/// Solves the EL problem for block estimates `points` (K rows) at `mu`.
#[pyfunction]
fn solve_el(rows: Vec<Vec<f64>>, mu: Vec<f64>) -> PyResult<ElSolution> {
    let r = el::solve_el(&points(rows)?, &mu).map_err(err)?;
    Ok(ElSolution {
        lambda: r.lambda,
        omega: r.omega,
        neg2_log_r: r.neg2_log_r,
        iterations: r.iterations,
        converged: r.converged,
    })
}

/// Tests the whole mean vector, or coordinate `j` when given.
#[pyfunction]
#[pyo3(signature = (rows, value, j=None, level=0.05))]
fn el_test(rows: Vec<Vec<f64>>, value: Vec<f64>, j: Option<usize>, level: f64) -> PyResult<Test> {
    let pts = points(rows)?;
    let t = match j {
        None => el::el_test_full(&pts, &value, level),
        Some(j) => match value.as_slice() {
            [c] => el::el_test_coordinate(&pts, j, *c, level),
            _ => return Err(PyValueError::new_err("a coordinate test takes one value")),
        },
    };
    Ok(t.map_err(err)?.into())
}

#[pyfunction]
#[pyo3(signature = (rows, j, level=0.05))]
fn el_interval(rows: Vec<Vec<f64>>, j: usize, level: f64) -> PyResult<(f64, f64)> {
    el::el_confidence_interval(&points(rows)?, j, level).map_err(err)
}

/// `(c, -2 log R(c))` pairs for coordinate `j`; `inf` outside the hull.
#[pyfunction]
fn profile(rows: Vec<Vec<f64>>, j: usize, grid: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    el::neg2_log_r_profile(&points(rows)?, j, &grid).map_err(err)
}

/// Splits `data` into `k` blocks, fits each, and tests every coordinate
/// against `null` (zero by default) and builds per-coordinate intervals.
#[pyfunction]
#[pyo3(signature = (data, k, null=None, level=0.05, seed=1))]
fn dac_el(
    py: Python<'_>,
    data: &Dataset,
    k: usize,
    null: Option<Vec<f64>>,
    level: f64,
    seed: u64,
) -> PyResult<Inference> {
    let d = &data.inner;
    let p = d.ncols();
    let null = null.unwrap_or_else(|| vec![0.0; p]);
    if null.len() != p {
        return Err(PyValueError::new_err(format!("null needs {p} values")));
    }
    let mut hyps: Vec<Hypothesis> = (0..p)
        .map(|j| Hypothesis::Coordinate { j, value: null[j] })
        .collect();
    hyps.extend((0..p).map(|j| Hypothesis::Interval { j }));
    let est = Estimator::for_kind(d.kind());
    let report = py
        .detach(|| dac::dac_el_infer(d, k, est, &hyps, level, seed))
        .map_err(err)?;

    let mut tests = Vec::new();
    let mut intervals = Vec::new();
    for o in report.outcomes {
        match o {
            Outcome::Test(t) => tests.push(Py::new(py, Test::from(t))?),
            Outcome::Interval { lo, hi, .. } => intervals.push((lo, hi)),
        }
    }
    Ok(Inference {
        estimate: report.estimate.into_inner(),
        k: report.k,
        m: report.m,
        dropped: report.dropped,
        block_estimates: report
            .blocks
            .el_points()
            .map_err(err)?
            .matrix()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        tests,
        intervals,
        seconds: report.timing.total.as_secs_f64(),
    })
}

/// Percentile intervals from a baseline resampler: "tb", "blb" or "sdb".
#[pyfunction]
#[pyo3(signature = (data, method, gamma=0.6, level=0.05, seed=1, replicates=100))]
fn bootstrap(
    py: Python<'_>,
    data: &Dataset,
    method: &str,
    gamma: f64,
    level: f64,
    seed: u64,
    replicates: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let d = &data.inner;
    let est = Estimator::for_kind(d.kind());
    let n = d.nrows();
    let set = py.detach(|| match method {
        "tb" => baselines::tb(d, est, replicates, level, seed),
        "blb" => baselines::blb(d, est, &ResamplePlan::blb(n, gamma, level), seed),
        "sdb" => baselines::sdb(d, est, &ResamplePlan::sdb(n, gamma, level), seed),
        other => Err(::dacel::Error::InvalidInput(format!(
            "unknown method `{other}`"
        ))),
    });
    Ok(set.map_err(err)?.intervals)
}

/// Runs a Monte Carlo study from a TOML config and returns `(csv, markdown)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<(String, String)> {
    let config = ExperimentConfig::from_toml(config).map_err(err)?;
    let report = py.detach(|| harness::run_all(&config)).map_err(err)?;
    let r = harness::summarize(std::slice::from_ref(&report)).map_err(err)?;
    Ok((r.csv, r.markdown))
}

#[pymodule(name = "dacel")]
fn dacel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<ElSolution>()?;
    m.add_class::<Test>()?;
    m.add_class::<Inference>()?;
    m.add_function(wrap_pyfunction!(solve_el, m)?)?;
    m.add_function(wrap_pyfunction!(el_test, m)?)?;
    m.add_function(wrap_pyfunction!(el_interval, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(dac_el, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
