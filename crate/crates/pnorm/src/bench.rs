//! Experiment runner: random instances with a known nuclear p-norm, every
//! requested method, and per-cell ratio statistics.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{build_h1, build_h2, default_alpha, h3_tau, HittingSet, H3Constants, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::matrix_norms::{NormEstimate, DELTA_G};
use crate::tensor::{conjugate, RationalExponent};
use crate::tensor_norms::{
    alg3_unfold_nuclear, alg4_partition_nuclear, alg6_cover_nuclear, alg7_randomized, gen_known_nuclear_instance,
    vector_bounds, DEFAULT_PROGRAM_BUDGET,
};

/// Environment variable holding the worker count for instance-level
/// parallelism.
pub const THREADS_ENV: &str = "PNORM_THREADS";

pub const CSV_HEADER: [&str; 8] =
    ["method", "n", "r", "min_ratio", "avg_ratio", "max_ratio", "avg_time_s", "theoretical_bound"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Entrywise ℓp norm.
    Vector,
    Unfold,
    Partition,
    CoverH1,
    CoverH2,
    Randomized,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vector => "vector",
            Method::Unfold => "unfold",
            Method::Partition => "partition",
            Method::CoverH1 => "cover-h1",
            Method::CoverH2 => "cover-h2",
            Method::Randomized => "randomized",
        }
    }

    pub fn is_deterministic(self) -> bool {
        self != Method::Randomized
    }
}

fn default_instances() -> usize {
    20
}
fn default_eps() -> f64 {
    0.05
}
fn default_tol() -> f64 {
    1e-8
}
fn default_budget() -> usize {
    DEFAULT_PROGRAM_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: String,
    pub d: usize,
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub h3: H3Constants,
    #[serde(default = "default_budget")]
    pub program_budget: usize,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn exponent(&self) -> Result<RationalExponent> {
        RationalExponent::parse(&self.p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(default_alpha)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha() + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.exponent()?;
        p.require_above_two()?;
        if self.d < 3 {
            return Err(Error::invalid(format!("experiments need tensors of order ≥ 3, got d = {}", self.d)));
        }
        if (p.value() - self.d as f64).abs() > 0.0 {
            return Err(Error::invalid(format!(
                "known-value instances need p = d, got p = {} and d = {}",
                self.p, self.d
            )));
        }
        if self.n.is_empty() || self.r.is_empty() || self.methods.is_empty() || self.instances == 0 {
            return Err(Error::invalid("n, r, methods and instances must be nonempty"));
        }
        if self.n.iter().any(|&n| n < 2) || self.r.contains(&0) {
            return Err(Error::invalid("need n ≥ 2 and r ≥ 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!("ε must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub instance: usize,
    pub seed: u64,
    pub true_nuclear: f64,
    pub value: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    /// Raw covering-program optimum u and ‖T‖_{p*}/u, for covering methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_optimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_over_optimum: Option<f64>,
    pub solves: usize,
    pub iterations: u64,
    pub wall_time_s: f64,
    pub solver_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub min_ratio: f64,
    pub avg_ratio: f64,
    pub max_ratio: f64,
    pub avg_time_s: f64,
    pub theoretical_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_truth_over_optimum: Option<f64>,
    /// Certified hitting ratio of each covered mode's set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub instances: Vec<InstanceResult>,
}

/// SplitMix64 finalizer, used to derive independent per-instance seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `idx` in cell (n, r); independent of the method list.
pub fn instance_seed(seed: u64, n: usize, r: usize, idx: usize) -> u64 {
    mix(mix(mix(mix(seed) ^ n as u64) ^ r as u64) ^ idx as u64)
}

/// Approximation bound of each method at the sets' hitting ratios, for
/// n₁ = … = n_d = n.
pub fn theoretical_bound(method: Method, n: usize, d: usize, p: f64, taus: &[f64]) -> f64 {
    let q = conjugate(p);
    let nf = n as f64;
    match method {
        Method::Vector => nf.powf(-((d - 1) as f64) / q),
        Method::Unfold | Method::Partition => nf.powf(-((d - 2) as f64) / q) / DELTA_G,
        _ => taus.iter().product::<f64>() / DELTA_G,
    }
}

/// Hitting sets of one (method, n) cell, shared by all its instances.
fn cover_sets(cfg: &ExperimentConfig, method: Method, n: usize) -> Result<Vec<HittingSet>> {
    let p = cfg.exponent()?.value();
    let h = match method {
        Method::CoverH1 => build_h1(n, p, cfg.alpha(), cfg.beta(), DEFAULT_CAP)?,
        Method::CoverH2 => build_h2(n, p, cfg.alpha(), cfg.beta(), DEFAULT_CAP)?,
        _ => return Ok(Vec::new()),
    };
    Ok(vec![h; cfg.d - 2])
}

struct Job {
    method: Method,
    n: usize,
    r: usize,
    instance: usize,
    cell: usize,
}

fn run_one(cfg: &ExperimentConfig, job: &Job, sets: &[HittingSet]) -> Result<InstanceResult> {
    let p = cfg.exponent()?;
    let seed = instance_seed(cfg.seed, job.n, job.r, job.instance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, truth) = gen_known_nuclear_instance(job.n, cfg.d, job.r, &mut rng)?;
    let start = Instant::now();
    let est: NormEstimate = match job.method {
        Method::Vector => {
            let (lo, hi) = vector_bounds(&t, p.value());
            NormEstimate { lower: lo, upper: hi, ..NormEstimate::exact("vector", lo) }
        }
        Method::Unfold => alg3_unfold_nuclear(&t, p, None, cfg.tol)?,
        Method::Partition => alg4_partition_nuclear(&t, p, cfg.tol)?,
        Method::CoverH1 | Method::CoverH2 => alg6_cover_nuclear(&t, p, sets, cfg.tol, cfg.program_budget)?,
        Method::Randomized => alg7_randomized(&t, p, cfg.eps, cfg.h3, mix(seed), cfg.tol, cfg.program_budget)?,
    };
    let wall = start.elapsed().as_secs_f64();
    Ok(InstanceResult {
        method: job.method,
        n: job.n,
        r: job.r,
        instance: job.instance,
        seed,
        true_nuclear: truth,
        value: est.value,
        ratio: est.value / truth,
        lower: est.lower,
        upper: est.upper,
        program_optimum: est.program_optimum,
        truth_over_optimum: est.program_optimum.map(|u| truth / u),
        solves: est.solves,
        iterations: est.iterations,
        wall_time_s: wall,
        solver_time_s: est.solve_time_s,
    })
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).filter(|&n| n > 0)
}

/// Runs every (method, n, r, instance) job; rows are ordered by
/// (method, n, r) as listed in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.exponent()?.value();
    let mut cells = Vec::new();
    let mut set_cache = Vec::new();
    for &method in &cfg.methods {
        for &n in &cfg.n {
            let sets = cover_sets(cfg, method, n)?;
            let taus = match method {
                Method::Randomized => vec![h3_tau(n, &cfg.h3); cfg.d - 2],
                _ => sets.iter().map(|h| h.tau).collect(),
            };
            set_cache.push(sets);
            let set_idx = set_cache.len() - 1;
            for &r in &cfg.r {
                cells.push((method, n, r, set_idx, taus.clone()));
            }
        }
    }
    let jobs: Vec<Job> = cells
        .iter()
        .enumerate()
        .flat_map(|(cell, &(method, n, r, _, _))| {
            (0..cfg.instances).map(move |instance| Job { method, n, r, instance, cell })
        })
        .collect();
    let work = || -> Vec<Result<InstanceResult>> {
        jobs.par_iter().map(|job| run_one(cfg, job, &set_cache[cells[job.cell].3])).collect()
    };
    let results = match thread_count() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {k} worker threads: {e}")))?
            .install(work),
        None => work(),
    };
    let instances = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(cell, (method, n, r, _, taus))| {
            let inst = &instances[cell * cfg.instances..(cell + 1) * cfg.instances];
            let ratios: Vec<f64> = inst.iter().map(|x| x.ratio).collect();
            let k = ratios.len() as f64;
            let inv: Vec<f64> = inst.iter().filter_map(|x| x.truth_over_optimum).collect();
            ResultRow {
                method: *method,
                n: *n,
                r: *r,
                min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                avg_ratio: ratios.iter().sum::<f64>() / k,
                max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                avg_time_s: inst.iter().map(|x| x.wall_time_s).sum::<f64>() / k,
                theoretical_bound: theoretical_bound(*method, *n, cfg.d, p, taus),
                avg_truth_over_optimum: (!inv.is_empty()).then(|| inv.iter().sum::<f64>() / inv.len() as f64),
                taus: taus.clone(),
            }
        })
        .collect();
    Ok(ExperimentReport { config: cfg.clone(), rows, instances })
}

/// Writes the summary CSV.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        out.write_record([
            row.method.name().to_string(),
            row.n.to_string(),
            row.r.to_string(),
            format!("{:.6}", row.min_ratio),
            format!("{:.6}", row.avg_ratio),
            format!("{:.6}", row.max_ratio),
            format!("{:.6}", row.avg_time_s),
            format!("{:.6}", row.theoretical_bound),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `<csv_path>` and the full report next to it with extension `.json`.
pub fn write_report(report: &ExperimentReport, csv_path: &Path) -> Result<()> {
    write_csv(&report.rows, std::fs::File::create(csv_path)?)?;
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(csv_path.with_extension("json"), json)?;
    Ok(())
}

/// Removes every object key ending in `_time_s`, recursively.
pub fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_time_s"));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
