//! Random instance generation and the benchmark runner: per-dimension mean
//! approximation ratios of every solver against the exact optimum, with a
//! `ln d + 1` reference column and deterministic CSV output.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::core::{validate_packing, CoreError, Instance, ItemVector};
use crate::exact::solve_exact;
use crate::heuristics::{first_fit, first_fit_decreasing};
use crate::qp::{extract_packing, solve_nlp_prime, QpError};
use crate::relaxation::{solve_relaxation, RelaxError};
use crate::rounding::packing_vectors;

/// Env var capping the worker thread count for [`run_experiment`].
pub const THREADS_ENV: &str = "VECPACK_THREADS";

/// Bit-exact header of the summary CSV.
pub const CSV_HEADER: &str =
    "d,trials,mean_ratio_pv,mean_ratio_ff,mean_ratio_ffd,mean_ratio_qp,ln_d_plus_1,unproven";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("algorithm {algorithm} produced an invalid packing on d={d} trial={trial}")]
    InvalidPacking {
        algorithm: &'static str,
        d: usize,
        trial: usize,
    },
    #[error("structural failure while validating: {0}")]
    Core(#[from] CoreError),
    #[error("relaxation failed on d={d} trial={trial}: {source}")]
    Relaxation {
        d: usize,
        trial: usize,
        #[source]
        source: RelaxError,
    },
    #[error("quadratic solve failed on d={d} trial={trial}: {source}")]
    Qp {
        d: usize,
        trial: usize,
        #[source]
        source: QpError,
    },
    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },
}

/// Coordinate distribution for generated items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Distribution {
    /// Each coordinate i.i.d. uniform on [0, 1].
    Uniform01,
    /// Each coordinate i.i.d. uniform on [lo, hi], 0 < lo <= hi <= 1.
    UniformScaled { lo: f64, hi: f64 },
}

impl Distribution {
    pub fn label(&self) -> String {
        match self {
            Distribution::Uniform01 => "uniform01".to_string(),
            Distribution::UniformScaled { lo, hi } => format!("uniform[{lo},{hi}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub d: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(
        n: usize,
        d: usize,
        distribution: Distribution,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        if n == 0 || d == 0 {
            return Err(HarnessError::InvalidConfig(format!(
                "n and d must be positive, got n={n} d={d}"
            )));
        }
        if let Distribution::UniformScaled { lo, hi } = distribution {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(HarnessError::InvalidConfig(format!(
                    "scaled interval must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            n,
            d,
            distribution,
            seed,
        })
    }
}

/// Deterministic instance generation: same config, same bytes.
pub fn generate_instance(cfg: &GenConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let items = (0..cfg.n)
        .map(|_| {
            let coords = (0..cfg.d)
                .map(|_| match cfg.distribution {
                    Distribution::Uniform01 => rng.gen::<f64>(),
                    Distribution::UniformScaled { lo, hi } => {
                        if lo == hi {
                            lo
                        } else {
                            rng.gen_range(lo..=hi)
                        }
                    }
                })
                .collect();
            ItemVector::new(coords).expect("generated coordinates lie in [0, 1]")
        })
        .collect();
    Instance::new(cfg.d, items).expect("generated items share the configured dimension")
}

/// One solved trial. Ratios are present only when the exact result is
/// proven.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub d: usize,
    pub n: usize,
    pub trial: usize,
    pub bins_pv: usize,
    pub bins_ff: usize,
    pub bins_ffd: usize,
    pub bins_qp: usize,
    pub opt: usize,
    pub proven: bool,
    pub ratio_pv: Option<f64>,
    pub ratio_ff: Option<f64>,
    pub ratio_ffd: Option<f64>,
    pub ratio_qp: Option<f64>,
    pub secs_pv: f64,
    pub secs_ff: f64,
    pub secs_ffd: f64,
    pub secs_qp: f64,
    pub secs_exact: f64,
}

/// Per-dimension aggregate over proven trials only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub d: usize,
    /// Count of proven trials included in the means.
    pub trials: usize,
    pub mean_ratio_pv: f64,
    pub mean_ratio_ff: f64,
    pub mean_ratio_ffd: f64,
    pub mean_ratio_qp: f64,
    pub ln_d_plus_1: f64,
    pub unproven: usize,
    /// Set when unproven trials exceed 5% of the dimension's total.
    #[serde(skip)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Inclusive dimension range.
    pub dims: (usize, usize),
    pub trials: usize,
    pub n: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub node_budget: u64,
    pub qp_restarts: usize,
}

impl ExperimentConfig {
    pub fn dims_iter(&self) -> impl Iterator<Item = usize> {
        self.dims.0..=self.dims.1
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-trial seed: decorrelates (d, trial) pairs from the base seed.
pub fn trial_seed(base: u64, d: usize, trial: usize) -> u64 {
    splitmix64(base ^ ((d as u64) << 40) ^ trial as u64)
}

fn run_trial(cfg: &ExperimentConfig, d: usize, trial: usize) -> Result<TrialRecord, HarnessError> {
    let gen = GenConfig::new(cfg.n, d, cfg.distribution, trial_seed(cfg.seed, d, trial))?;
    let inst = generate_instance(&gen);

    let t = Instant::now();
    let (pk_pv, _trace) = packing_vectors(&inst);
    let secs_pv = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let pk_ff = first_fit(&inst);
    let secs_ff = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let pk_ffd = first_fit_decreasing(&inst);
    let secs_ffd = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let relax = solve_relaxation(&inst).map_err(|source| HarnessError::Relaxation {
        d,
        trial,
        source,
    })?;
    let q = solve_nlp_prime(&inst, relax.m_prime.max(1), cfg.qp_restarts, gen.seed)
        .map_err(|source| HarnessError::Qp { d, trial, source })?;
    let pk_qp = extract_packing(&q, &inst);
    let secs_qp = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let exact = solve_exact(&inst, cfg.node_budget);
    let secs_exact = t.elapsed().as_secs_f64();

    for (name, pk) in [
        ("packing_vectors", &pk_pv),
        ("first_fit", &pk_ff),
        ("ffd", &pk_ffd),
        ("qp", &pk_qp),
        ("exact", &exact.packing),
    ] {
        if !validate_packing(&inst, pk)?.is_empty() {
            return Err(HarnessError::InvalidPacking {
                algorithm: name,
                d,
                trial,
            });
        }
    }

    let ratio = |bins: usize| -> Option<f64> {
        exact.proven.then(|| bins as f64 / exact.opt as f64)
    };
    Ok(TrialRecord {
        d,
        n: cfg.n,
        trial,
        bins_pv: pk_pv.bin_count,
        bins_ff: pk_ff.bin_count,
        bins_ffd: pk_ffd.bin_count,
        bins_qp: pk_qp.bin_count,
        opt: exact.opt,
        proven: exact.proven,
        ratio_pv: ratio(pk_pv.bin_count),
        ratio_ff: ratio(pk_ff.bin_count),
        ratio_ffd: ratio(pk_ffd.bin_count),
        ratio_qp: ratio(pk_qp.bin_count),
        secs_pv,
        secs_ff,
        secs_ffd,
        secs_qp,
        secs_exact,
    })
}

fn worker_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(threads) = v.trim().parse::<usize>() {
            if threads >= 1 {
                builder = builder.num_threads(threads);
            }
        }
    }
    builder.build().expect("worker pool construction")
}

/// Runs every (dimension, trial) cell, validates every packing, and
/// aggregates proven trials into per-dimension summaries. Trials run in
/// parallel but results are collected in (d, trial) order, so output is
/// deterministic regardless of scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
) -> Result<(Vec<TrialRecord>, Vec<SummaryRow>), HarnessError> {
    if cfg.trials == 0 {
        return Err(HarnessError::InvalidConfig("trials must be >= 1".into()));
    }
    let cells: Vec<(usize, usize)> = cfg
        .dims_iter()
        .flat_map(|d| (0..cfg.trials).map(move |t| (d, t)))
        .collect();
    let pool = worker_pool();
    let records: Vec<TrialRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, t)| run_trial(cfg, d, t))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut summaries = Vec::new();
    for d in cfg.dims_iter() {
        let in_dim: Vec<&TrialRecord> = records.iter().filter(|r| r.d == d).collect();
        let proven: Vec<&&TrialRecord> = in_dim.iter().filter(|r| r.proven).collect();
        let unproven = in_dim.len() - proven.len();
        let mean = |f: fn(&TrialRecord) -> Option<f64>| -> f64 {
            if proven.is_empty() {
                f64::NAN
            } else {
                proven.iter().map(|r| f(r).unwrap_or(f64::NAN)).sum::<f64>() / proven.len() as f64
            }
        };
        summaries.push(SummaryRow {
            d,
            trials: proven.len(),
            mean_ratio_pv: mean(|r| r.ratio_pv),
            mean_ratio_ff: mean(|r| r.ratio_ff),
            mean_ratio_ffd: mean(|r| r.ratio_ffd),
            mean_ratio_qp: mean(|r| r.ratio_qp),
            ln_d_plus_1: (d as f64).ln() + 1.0,
            unproven,
            flagged: unproven * 20 > in_dim.len(),
        });
    }
    Ok((records, summaries))
}

/// Serializes summaries with a config comment line followed by the bit-exact
/// [`CSV_HEADER`]. Floats use the shortest round-trip representation.
pub fn summaries_to_csv(rows: &[SummaryRow], cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# vecpack bench distribution={} seed={} n={} trials={}\n",
        cfg.distribution.label(),
        cfg.seed,
        cfg.n,
        cfg.trials
    ));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.d,
            r.trials,
            r.mean_ratio_pv,
            r.mean_ratio_ff,
            r.mean_ratio_ffd,
            r.mean_ratio_qp,
            r.ln_d_plus_1,
            r.unproven
        ));
    }
    out
}

/// Parses CSV produced by [`summaries_to_csv`]; `#` comment lines are
/// skipped and `flagged` is not round-tripped.
pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                return Err(HarnessError::CsvParse {
                    line: lineno + 1,
                    message: format!("unexpected header {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(HarnessError::CsvParse {
                line: lineno + 1,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str| {
            s.parse::<f64>().map_err(|e| HarnessError::CsvParse {
                line: lineno + 1,
                message: format!("bad float {s:?}: {e}"),
            })
        };
        let parse_u = |s: &str| {
            s.parse::<usize>().map_err(|e| HarnessError::CsvParse {
                line: lineno + 1,
                message: format!("bad integer {s:?}: {e}"),
            })
        };
        rows.push(SummaryRow {
            d: parse_u(fields[0])?,
            trials: parse_u(fields[1])?,
            mean_ratio_pv: parse_f(fields[2])?,
            mean_ratio_ff: parse_f(fields[3])?,
            mean_ratio_ffd: parse_f(fields[4])?,
            mean_ratio_qp: parse_f(fields[5])?,
            ln_d_plus_1: parse_f(fields[6])?,
            unproven: parse_u(fields[7])?,
            flagged: false,
        });
    }
    if !saw_header {
        return Err(HarnessError::CsvParse {
            line: 0,
            message: "missing header".into(),
        });
    }
    Ok(rows)
}
