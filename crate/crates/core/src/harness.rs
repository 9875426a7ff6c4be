//! Monte Carlo driver for size, power, interval-length and timing studies.
//!
//! Replicate `r` draws its data and all of its randomness from
//! `derive_seed(master, [REPLICATE, r])`, and per-replicate results are
//! reduced in replicate order, so reports do not depend on the thread count.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BlbResampleSize, IntervalSet, ResamplePlan};
use crate::dac::{self, Hypothesis, Outcome};
use crate::datagen::{self, DesignSpec, Example};
use crate::error::{Error, Result};
use crate::model::{Dataset, Estimator};
use crate::rng::{self, tag};

/// Environment variable consulted when a config leaves `threads` unset.
pub const THREADS_ENV: &str = "DACEL_THREADS";

/// Method families named in a config; expanded over `k_list`/`gamma_list`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Dacel,
    Blb,
    Sdb,
    Tb,
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dacel" | "dac-el" | "dac" => Ok(MethodName::Dacel),
            "blb" => Ok(MethodName::Blb),
            "sdb" => Ok(MethodName::Sdb),
            "tb" => Ok(MethodName::Tb),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// A fully specified method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    DacEl { k: usize },
    Blb { gamma: f64 },
    Sdb { gamma: f64 },
    Tb,
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::DacEl { k } => write!(f, "K={k}"),
            MethodSpec::Blb { gamma } => write!(f, "BLB(n^{gamma})"),
            MethodSpec::Sdb { gamma } => write!(f, "SDB(n^{gamma})"),
            MethodSpec::Tb => f.write_str("TB"),
        }
    }
}

fn default_k_list() -> Vec<usize> {
    vec![20]
}
fn default_gamma_list() -> Vec<f64> {
    vec![0.6]
}
fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Dacel]
}
fn default_replications() -> usize {
    500
}
fn default_level() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_tb_replicates() -> usize {
    100
}
fn default_blb_subsets() -> usize {
    20
}
fn default_blb_resamples() -> usize {
    100
}
fn default_sdb_subsets() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: Example,
    pub case: u8,
    pub n: usize,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_gamma_list")]
    pub gamma_list: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Null values for the size study; defaults to the true coefficients.
    /// The power study always tests zero.
    #[serde(default)]
    pub null: Option<Vec<f64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_tb_replicates")]
    pub tb_replicates: usize,
    #[serde(default = "default_blb_subsets")]
    pub blb_subsets: usize,
    #[serde(default = "default_blb_resamples")]
    pub blb_resamples: usize,
    #[serde(default = "default_sdb_subsets")]
    pub sdb_subsets: usize,
    #[serde(default)]
    pub blb_resample_size: BlbResampleSize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `n = 10^4`, `K = 20`, 500 replications.
    pub fn new(example: Example, case: u8) -> Self {
        Self {
            example,
            case,
            n: 10_000,
            k_list: default_k_list(),
            gamma_list: default_gamma_list(),
            methods: default_methods(),
            replications: default_replications(),
            level: default_level(),
            null: None,
            seed: default_seed(),
            threads: None,
            tb_replicates: default_tb_replicates(),
            blb_subsets: default_blb_subsets(),
            blb_resamples: default_blb_resamples(),
            sdb_subsets: default_sdb_subsets(),
            blb_resample_size: BlbResampleSize::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.design(0)?;
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level {} must lie in (0, 1)",
                self.level
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if let Some(null) = &self.null {
            if null.len() != spec.beta.len() {
                return Err(Error::Config(format!(
                    "null needs {} values",
                    spec.beta.len()
                )));
            }
        }
        let min_block = self.estimator().min_observations(datagen::DIM);
        if self.methods.contains(&MethodName::Dacel) {
            if self.k_list.is_empty() {
                return Err(Error::Config("dacel needs a nonempty k_list".into()));
            }
            for &k in &self.k_list {
                if k < 2 || self.n / k < min_block.max(2) {
                    return Err(Error::Config(format!(
                        "K = {k} leaves blocks of {} rows for n = {}",
                        self.n / k.max(1),
                        self.n
                    )));
                }
            }
        }
        let subset_methods = self
            .methods
            .iter()
            .any(|m| matches!(m, MethodName::Blb | MethodName::Sdb));
        if subset_methods {
            if self.gamma_list.is_empty() {
                return Err(Error::Config("blb/sdb need a nonempty gamma_list".into()));
            }
            if let Some(g) = self.gamma_list.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
                return Err(Error::Config(format!("gamma {g} must lie in (0, 1]")));
            }
        }
        if self.tb_replicates < 1
            || self.blb_subsets < 1
            || self.blb_resamples < 1
            || self.sdb_subsets < 1
        {
            return Err(Error::Config("resampling counts must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn estimator(&self) -> Estimator {
        match self.example {
            Example::Linear => Estimator::Ols,
            Example::Logistic => Estimator::Logistic,
        }
    }

    /// Design of replicate `r`.
    pub fn design(&self, r: usize) -> Result<DesignSpec> {
        DesignSpec::new(
            self.example,
            self.case,
            self.n,
            replicate_seed(self.seed, r),
        )
    }

    /// Methods in config order, each family expanded over its list.
    pub fn method_specs(&self) -> Vec<MethodSpec> {
        let mut out = Vec::new();
        for m in &self.methods {
            match m {
                MethodName::Dacel => {
                    out.extend(self.k_list.iter().map(|&k| MethodSpec::DacEl { k }))
                }
                MethodName::Blb => out.extend(
                    self.gamma_list
                        .iter()
                        .map(|&gamma| MethodSpec::Blb { gamma }),
                ),
                MethodName::Sdb => out.extend(
                    self.gamma_list
                        .iter()
                        .map(|&gamma| MethodSpec::Sdb { gamma }),
                ),
                MethodName::Tb => out.push(MethodSpec::Tb),
            }
        }
        out
    }

    fn size_null(&self) -> Vec<f64> {
        self.null
            .clone()
            .unwrap_or_else(|| vec![datagen::BETA; datagen::DIM])
    }

    fn thread_count(&self) -> Option<usize> {
        self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
                .filter(|&t| t > 0)
        })
    }
}

/// Seed of replicate `r` under master seed `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    rng::derive_seed(seed, &[tag::REPLICATE, r as u64])
}

/// Which quantities a run collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Study {
    tests: bool,
    lengths: bool,
}

/// One method's result on one replicate.
#[derive(Debug, Clone, PartialEq)]
struct MethodOutcome {
    reject_size: Vec<bool>,
    reject_power: Vec<bool>,
    lengths: Vec<f64>,
}

fn run_method(
    data: &Dataset,
    config: &ExperimentConfig,
    method: MethodSpec,
    seed: u64,
    study: Study,
) -> Result<MethodOutcome> {
    let estimator = config.estimator();
    let p = data.ncols();
    let null = config.size_null();
    if let MethodSpec::DacEl { k } = method {
        let mut hyps = Vec::new();
        if study.tests {
            hyps.extend((0..p).map(|j| Hypothesis::Coordinate { j, value: null[j] }));
            hyps.extend((0..p).map(|j| Hypothesis::Coordinate { j, value: 0.0 }));
        }
        if study.lengths {
            hyps.extend((0..p).map(|j| Hypothesis::Interval { j }));
        }
        let report = dac::dac_el_infer(data, k, estimator, &hyps, config.level, seed)?;
        let mut out = MethodOutcome {
            reject_size: Vec::new(),
            reject_power: Vec::new(),
            lengths: Vec::new(),
        };
        for (i, o) in report.outcomes.into_iter().enumerate() {
            match o {
                Outcome::Test(t) if study.tests && i < p => out.reject_size.push(t.reject),
                Outcome::Test(t) => out.reject_power.push(t.reject),
                Outcome::Interval { lo, hi, .. } => out.lengths.push(hi - lo),
            }
        }
        return Ok(out);
    }

    let n = data.nrows();
    let set: IntervalSet = match method {
        MethodSpec::Tb => baselines::tb(data, estimator, config.tb_replicates, config.level, seed)?,
        MethodSpec::Blb { gamma } => {
            let plan = ResamplePlan {
                subsets: config.blb_subsets,
                resamples: config.blb_resamples,
                blb_resample_size: config.blb_resample_size,
                ..ResamplePlan::blb(n, gamma, config.level)
            };
            baselines::blb(data, estimator, &plan, seed)?
        }
        MethodSpec::Sdb { gamma } => {
            let plan = ResamplePlan {
                subsets: config.sdb_subsets,
                ..ResamplePlan::sdb(n, gamma, config.level)
            };
            baselines::sdb(data, estimator, &plan, seed)?
        }
        MethodSpec::DacEl { .. } => unreachable!(),
    };
    let (reject_size, reject_power) = if study.tests {
        (
            (0..p).map(|j| !set.covers(j, null[j])).collect(),
            (0..p).map(|j| !set.covers(j, 0.0)).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(MethodOutcome {
        reject_size,
        reject_power,
        lengths: if study.lengths {
            set.lengths()
        } else {
            Vec::new()
        },
    })
}

/// One row of an experiment report: a method and a coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub example: Example,
    pub case: u8,
    pub n: usize,
    pub method: String,
    /// One-based coefficient index.
    pub coordinate: usize,
    pub size: Option<f64>,
    pub power: Option<f64>,
    pub mean_length: Option<f64>,
    pub counted: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub total_secs: f64,
    /// Slowest block fit, DAC-EL only.
    pub block_max_secs: Option<f64>,
    /// Sum of block fits, DAC-EL only.
    pub block_sum_secs: Option<f64>,
    /// EL stage, DAC-EL only.
    pub el_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub timing: Vec<TimingRow>,
    /// Free-form description of where the run happened.
    pub machine: String,
}

fn machine_note(threads: usize) -> String {
    format!(
        "{}-{}, {threads} threads",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn with_pool<T: Send>(
    config: &ExperimentConfig,
    f: impl FnOnce() -> T + Send,
) -> Result<(T, usize)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.thread_count() {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let threads = pool.current_num_threads();
    Ok((pool.install(f), threads))
}

fn run_study(config: &ExperimentConfig, study: Study) -> Result<ExperimentReport> {
    config.validate()?;
    let methods = config.method_specs();
    let (per_rep, threads) = with_pool(config, || {
        (0..config.replications)
            .into_par_iter()
            .map(|r| -> Result<Vec<Result<MethodOutcome>>> {
                let spec = config.design(r)?;
                let data = datagen::generate(&spec)?;
                Ok(methods
                    .iter()
                    .map(|&m| run_method(&data, config, m, spec.seed, study))
                    .collect())
            })
            .collect::<Vec<_>>()
    })?;

    let p = datagen::DIM;
    let mut rows = Vec::with_capacity(methods.len() * p);
    let mut all_aborted = true;
    for (mi, method) in methods.iter().enumerate() {
        let mut size = vec![0usize; p];
        let mut power = vec![0usize; p];
        let mut length = vec![0.0; p];
        let (mut counted, mut aborted) = (0, 0);
        for rep in &per_rep {
            let outcome = match rep {
                Ok(outcomes) => outcomes[mi].as_ref().ok(),
                Err(_) => None,
            };
            let Some(o) = outcome else {
                aborted += 1;
                continue;
            };
            counted += 1;
            for j in 0..p {
                if study.tests {
                    size[j] += o.reject_size[j] as usize;
                    power[j] += o.reject_power[j] as usize;
                }
                if study.lengths {
                    length[j] += o.lengths[j];
                }
            }
        }
        all_aborted &= counted == 0;
        let rate = |c: usize| (counted > 0).then(|| c as f64 / counted as f64);
        for j in 0..p {
            rows.push(ReportRow {
                example: config.example,
                case: config.case,
                n: config.n,
                method: method.to_string(),
                coordinate: j + 1,
                size: if study.tests { rate(size[j]) } else { None },
                power: if study.tests { rate(power[j]) } else { None },
                mean_length: if study.lengths && counted > 0 {
                    Some(length[j] / counted as f64)
                } else {
                    None
                },
                counted,
                aborted,
            });
        }
    }
    if all_aborted {
        return Err(Error::AllReplicatesAborted(config.replications));
    }
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        timing: Vec::new(),
        machine: machine_note(threads),
    })
}

/// Empirical size (null = true coefficients, or `config.null`) and power
/// (null = 0 with data generated under the true coefficients).
pub fn run_size_power(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_study(
        config,
        Study {
            tests: true,
            lengths: false,
        },
    )
}

/// Mean per-coordinate interval length.
pub fn run_ci_length(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_study(
        config,
        Study {
            tests: false,
            lengths: true,
        },
    )
}

/// Size, power and length in one pass over the replicates.
pub fn run_all(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_study(
        config,
        Study {
            tests: true,
            lengths: true,
        },
    )
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Wall-clock time of every method on the replicate-0 dataset. Each method
/// runs once as a discarded warm-up and is then timed. DAC-EL runs the seven
/// coordinate tests and reports the block and EL stages separately.
pub fn run_timing(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let spec = config.design(0)?;
    let data = datagen::generate(&spec)?;
    let methods = config.method_specs();
    let study = Study {
        tests: true,
        lengths: false,
    };
    let null = config.size_null();
    let hyps: Vec<Hypothesis> = (0..data.ncols())
        .map(|j| Hypothesis::Coordinate { j, value: null[j] })
        .collect();

    let (timing, threads) = with_pool(config, || -> Result<Vec<TimingRow>> {
        let mut rows = Vec::new();
        for &method in &methods {
            let row = if let MethodSpec::DacEl { k } = method {
                dac::dac_el_infer(&data, k, config.estimator(), &hyps, config.level, spec.seed)?;
                let start = Instant::now();
                let report = dac::dac_el_infer(
                    &data,
                    k,
                    config.estimator(),
                    &hyps,
                    config.level,
                    spec.seed,
                )?;
                let total = start.elapsed();
                TimingRow {
                    method: method.to_string(),
                    total_secs: secs(total),
                    block_max_secs: Some(secs(report.timing.blocks.max)),
                    block_sum_secs: Some(secs(report.timing.blocks.sum)),
                    el_secs: Some(secs(report.timing.el)),
                }
            } else {
                run_method(&data, config, method, spec.seed, study)?;
                let start = Instant::now();
                run_method(&data, config, method, spec.seed, study)?;
                TimingRow {
                    method: method.to_string(),
                    total_secs: secs(start.elapsed()),
                    block_max_secs: None,
                    block_sum_secs: None,
                    el_secs: None,
                }
            };
            rows.push(row);
        }
        Ok(rows)
    })?;
    Ok(ExperimentReport {
        config: config.clone(),
        rows: Vec::new(),
        timing: timing?,
        machine: machine_note(threads),
    })
}

/// Rendered forms of one or more reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub csv: String,
    pub markdown: String,
}

/// Reports can be tabulated together when they share the example, sample
/// size, replication count and level.
fn check_schema(reports: &[ExperimentReport]) -> Result<()> {
    let Some(first) = reports.first() else {
        return Err(Error::SchemaMismatch("no reports to summarize".into()));
    };
    let key = |r: &ExperimentReport| {
        (
            r.config.example,
            r.config.n,
            r.config.replications,
            r.config.level.to_bits(),
        )
    };
    if let Some(other) = reports.iter().find(|r| key(r) != key(first)) {
        return Err(Error::SchemaMismatch(format!(
            "cannot tabulate {} n={} with {} n={}",
            first.config.example, first.config.n, other.config.example, other.config.n
        )));
    }
    Ok(())
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn timing_to_csv(rows: &[TimingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn measure_table(
    out: &mut String,
    title: &str,
    rows: &[&ReportRow],
    value: impl Fn(&ReportRow) -> Option<f64>,
) {
    let mut keys: Vec<(u8, &str)> = Vec::new();
    for r in rows {
        if value(r).is_some() && !keys.contains(&(r.case, r.method.as_str())) {
            keys.push((r.case, r.method.as_str()));
        }
    }
    if keys.is_empty() {
        return;
    }
    let p = rows.iter().map(|r| r.coordinate).max().unwrap_or(0);
    let _ = writeln!(out, "### {title}\n");
    out.push_str("| Case | Method |");
    for j in 1..=p {
        let _ = write!(out, " beta_{j} |");
    }
    out.push_str(" Aborted |\n|---:|:---|");
    out.push_str(&"---:|".repeat(p + 1));
    out.push('\n');
    for (case, method) in keys {
        let _ = write!(out, "| {case} | {method} |");
        let mut aborted = 0;
        for j in 1..=p {
            let cell = rows
                .iter()
                .find(|r| r.case == case && r.method == method && r.coordinate == j);
            match cell.and_then(|r| value(r)) {
                Some(v) => {
                    let _ = write!(out, " {v:.3} |");
                }
                None => out.push_str(" - |"),
            }
            aborted = aborted.max(cell.map_or(0, |r| r.aborted));
        }
        let _ = writeln!(out, " {aborted} |");
    }
    out.push('\n');
}

/// CSV of all rows plus markdown tables laid out as Case x Method rows
/// against coefficient columns, one table per measure.
pub fn summarize(reports: &[ExperimentReport]) -> Result<Rendered> {
    check_schema(reports)?;
    let rows: Vec<ReportRow> = reports
        .iter()
        .flat_map(|r| r.rows.iter().cloned())
        .collect();
    let csv = rows_to_csv(&rows)?;

    let c = &reports[0].config;
    let mut md = String::new();
    let _ = writeln!(
        md,
        "## {} example, n = {}, {} replications, level {}\n",
        c.example, c.n, c.replications, c.level
    );
    let mut seeds: Vec<String> = Vec::new();
    for r in reports {
        let s = r.config.seed.to_string();
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let _ = writeln!(md, "Master seed: {}\n", seeds.join(", "));
    let refs: Vec<&ReportRow> = rows.iter().collect();
    measure_table(&mut md, "Empirical size", &refs, |r| r.size);
    measure_table(&mut md, "Empirical power (H0: beta_j = 0)", &refs, |r| {
        r.power
    });
    measure_table(&mut md, "Mean interval length", &refs, |r| r.mean_length);

    let timing: Vec<&TimingRow> = reports.iter().flat_map(|r| &r.timing).collect();
    if !timing.is_empty() {
        md.push_str(&render_timing(&timing));
    }
    Ok(Rendered { csv, markdown: md })
}

fn opt_secs(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"))
}

fn render_timing(rows: &[&TimingRow]) -> String {
    let mut out = String::from("### Wall-clock time (seconds)\n\n");
    out.push_str("| Method | Total | Slowest block | Sum over blocks | EL stage |\n|:---|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {} | {} | {} |",
            r.method,
            r.total_secs,
            opt_secs(r.block_max_secs),
            opt_secs(r.block_sum_secs),
            opt_secs(r.el_secs)
        );
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(example: Example) -> ExperimentConfig {
        ExperimentConfig {
            n: 400,
            k_list: vec![5],
            replications: 3,
            ..ExperimentConfig::new(example, 1)
        }
    }

    #[test]
    fn labels() {
        assert_eq!(MethodSpec::DacEl { k: 20 }.to_string(), "K=20");
        assert_eq!(MethodSpec::Blb { gamma: 0.6 }.to_string(), "BLB(n^0.6)");
        assert_eq!(MethodSpec::Sdb { gamma: 0.8 }.to_string(), "SDB(n^0.8)");
        assert_eq!(MethodSpec::Tb.to_string(), "TB");
    }

    #[test]
    fn config_validation() {
        let mut c = small(Example::Linear);
        assert!(c.validate().is_ok());
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = small(Example::Linear);
        c.case = 4;
        assert!(c.validate().is_err());
        let mut c = small(Example::Linear);
        c.k_list = vec![100];
        assert!(c.validate().is_err());
        let mut c = small(Example::Linear);
        c.methods.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig {
            methods: vec![MethodName::Dacel, MethodName::Sdb],
            threads: Some(2),
            ..small(Example::Logistic)
        };
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let parsed =
            ExperimentConfig::from_toml("example = \"linear\"\ncase = 2\nn = 1000\n").unwrap();
        assert_eq!(
            (parsed.replications, parsed.k_list.clone()),
            (500, vec![20])
        );
    }

    #[test]
    fn single_replicate_is_zero_one() {
        let c = ExperimentConfig {
            replications: 1,
            ..small(Example::Linear)
        };
        let r = run_size_power(&c).unwrap();
        assert_eq!(r.rows.len(), 7);
        for row in &r.rows {
            assert!(matches!(row.size, Some(v) if v == 0.0 || v == 1.0));
            assert_eq!((row.counted, row.aborted), (1, 0));
        }
        assert_eq!(run_size_power(&c).unwrap().rows, r.rows);
    }

    #[test]
    fn lengths_and_csv_round_trip() {
        let c = ExperimentConfig {
            methods: vec![MethodName::Dacel, MethodName::Tb],
            tb_replicates: 20,
            ..small(Example::Linear)
        };
        let r = run_all(&c).unwrap();
        assert_eq!(r.rows.len(), 14);
        assert!(r.rows.iter().all(|row| row.mean_length.unwrap() > 0.0));
        let text = summarize(std::slice::from_ref(&r)).unwrap();
        assert_eq!(rows_from_csv(&text.csv).unwrap(), r.rows);
        assert!(text.markdown.contains("| 1 | K=5 |"));
    }

    #[test]
    fn mismatched_reports() {
        let a = run_size_power(&small(Example::Linear)).unwrap();
        let mut b = a.clone();
        b.config.n = 800;
        assert!(matches!(summarize(&[a, b]), Err(Error::SchemaMismatch(_))));
        assert!(matches!(summarize(&[]), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn timing_accounting() {
        let c = ExperimentConfig {
            methods: vec![MethodName::Dacel],
            ..small(Example::Logistic)
        };
        let r = run_timing(&c).unwrap();
        let t = &r.timing[0];
        assert!(t.total_secs >= t.block_max_secs.unwrap());
        assert!(t.total_secs >= t.el_secs.unwrap());
    }
}
