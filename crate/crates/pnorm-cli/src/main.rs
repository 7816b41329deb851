use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pnorm::bench::{run_experiment, write_report, ExperimentConfig};
use pnorm::covering::{
    build_h1, build_h2, build_h3, build_hb, build_hg, build_hh, default_alpha, mu, nu, probe_hitting_ratio,
    H3Constants, HittingSet, ProbeMode, DEFAULT_CAP,
};
use pnorm::matrix_norms::{matrix_pu, matrix_pv, spectral_pnorm_oracle, NormEstimate};
use pnorm::tensor::{DenseTensor, RationalExponent};
use pnorm::tensor_norms::{
    alg3_unfold_nuclear, alg4_partition_nuclear, alg6_cover_nuclear, alg7_randomized, gen_identity_tensor,
    gen_known_nuclear_instance, vector_bounds, DEFAULT_PROGRAM_BUDGET,
};
use pnorm::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pnorm", version, about = "Spectral and nuclear p-norm estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, probe or tabulate hitting sets of the ℓp sphere.
    Hitset {
        #[command(subcommand)]
        command: HitsetCommand,
    },
    /// Estimate a matrix or tensor norm.
    Norm {
        #[command(subcommand)]
        command: NormCommand,
    },
    /// Generate a test tensor.
    Gen(GenArgs),
    /// Run an experiment grid.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SetKind {
    Hh,
    Hb,
    H1,
    H2,
    Hg,
    H3,
}

#[derive(Subcommand)]
enum HitsetCommand {
    Build(BuildArgs),
    Probe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
        #[arg(long, value_enum, default_value_t = Mode::Adversarial)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-coordinate cardinality bounds of the integer-ball and
    /// level-partition sets at equal hitting ratio, as CSV.
    Bounds {
        #[arg(long, default_value = "6")]
        p: String,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Adversarial,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_enum)]
    kind: SetKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    delta3: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixOp {
    Pv,
    Pu,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum TensorMethod {
    Vector,
    Unfold,
    Partition,
    Cover,
}

#[derive(Subcommand)]
enum NormCommand {
    Matrix {
        #[arg(long, value_enum)]
        op: MatrixOp,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        p: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes the dual certificate here.
        #[arg(long)]
        certificate_out: Option<PathBuf>,
    },
    Tensor {
        #[arg(long, value_enum)]
        method: TensorMethod,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        p: String,
        /// Hitting-set files, one per covered mode in nondecreasing
        /// dimension order.
        #[arg(long, num_args = 1..)]
        hitset: Vec<PathBuf>,
        /// Sample random hitting sets with this failure probability instead.
        #[arg(long)]
        rand_eps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_PROGRAM_BUDGET)]
        budget: usize,
        #[arg(long)]
        certificate_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Identity,
    KnownNuclear,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Summary CSV; the full report goes to the same path with a .json
        /// extension.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_p(s: &str) -> Result<f64> {
    match RationalExponent::parse(s) {
        Ok(p) => Ok(p.value()),
        Err(e) => s.trim().parse::<f64>().map_err(|_| e),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn read_tensor(path: &Path) -> Result<DenseTensor> {
    DenseTensor::from_json(&std::fs::read_to_string(path)?)
}

fn estimate_json(est: &NormEstimate, cert_out: Option<&Path>) -> Result<String> {
    if let (Some(path), Some(z)) = (cert_out, &est.certificate) {
        std::fs::write(path, z.to_json())?;
    }
    let mut v = serde_json::to_value(est)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("certificate");
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

fn build(a: &BuildArgs) -> Result<HittingSet> {
    let p = parse_p(&a.p)?;
    let alpha = a.alpha.unwrap_or_else(default_alpha);
    let beta = a.beta.unwrap_or(alpha + 1.0);
    match a.kind {
        SetKind::Hh => build_hh(a.n, p, alpha, beta, a.cap),
        SetKind::Hb => build_hb(a.n, p, a.gamma, a.cap),
        SetKind::H1 => build_h1(a.n, p, alpha, beta, a.cap),
        SetKind::H2 => build_h2(a.n, p, alpha, beta, a.cap),
        SetKind::Hg => build_hg(a.n, p, a.m, a.cap),
        SetKind::H3 => {
            let d = H3Constants::default();
            let c = H3Constants {
                delta0: a.delta0.unwrap_or(d.delta0),
                delta2: a.delta2.unwrap_or(d.delta2),
                delta3: a.delta3.unwrap_or(d.delta3),
            };
            build_h3(a.n, p, a.eps, c, a.seed, a.cap)
        }
    }
}

/// Rows (α, hitting ratio, integer-ball bound, level-partition bound) with
/// γ chosen so both sets certify the same ratio and β = α + 1.
fn bounds_csv(p: f64, points: usize) -> Result<String> {
    if points < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    let mut out = String::from("alpha,hitting_ratio,hb_bound,hh_bound\n");
    for i in 0..points {
        let alpha = 1.05 * (100.0f64 / 1.05).powf(i as f64 / (points - 1) as f64);
        let ratio = mu(alpha, alpha + 1.0, p);
        let gamma = 1.0 / (1.0 - ratio);
        let hb = (p / 12.0).exp() * (2.0 * gamma + 1.0) * (2.0 * std::f64::consts::PI / p).sqrt().max(1.0);
        let hh = nu(alpha, alpha + 1.0);
        out.push_str(&format!("{alpha:.6},{ratio:.6},{hb:.6},{hh:.6}\n"));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Hitset { command } => match command {
            HitsetCommand::Build(a) => {
                let h = build(&a)?;
                for note in &h.notes {
                    eprintln!("warning: {note}");
                }
                emit(a.out.as_deref(), &h.to_json())
            }
            HitsetCommand::Probe { input, probes, mode, seed } => {
                let h = HittingSet::from_json(&std::fs::read_to_string(&input)?)?;
                let mode = match mode {
                    Mode::Random => ProbeMode::Random,
                    Mode::Adversarial => ProbeMode::Adversarial,
                };
                let value = probe_hitting_ratio(&h, probes, seed, mode)?;
                let v = json!({
                    "probe_min": value,
                    "certified_tau": h.tau,
                    "cardinality": h.len(),
                    "probes": probes,
                    "seed": seed,
                    "mode": mode,
                });
                emit(None, &serde_json::to_string_pretty(&v)?)
            }
            HitsetCommand::Bounds { p, points, out } => emit(out.as_deref(), bounds_csv(parse_p(&p)?, points)?.trim_end()),
        },
        Command::Norm { command } => match command {
            NormCommand::Matrix { op, input, p, tol, restarts, seed, certificate_out } => {
                let a = read_tensor(&input)?;
                let pr = RationalExponent::parse(&p)?;
                let est = match op {
                    MatrixOp::Pv => matrix_pv(&a, pr, tol)?,
                    MatrixOp::Pu => matrix_pu(&a, pr, tol)?,
                    MatrixOp::Oracle => {
                        let v = spectral_pnorm_oracle(&a, pr.value(), restarts, seed)?;
                        // Hölder: the bilinear form is at most ‖A‖_q entrywise.
                        let q = pnorm::tensor::conjugate(pr.value());
                        let upper = pnorm::tensor::lp_norm_unchecked(a.data(), q);
                        NormEstimate { upper, ..NormEstimate::exact("oracle", v) }
                    }
                };
                emit(None, &estimate_json(&est, certificate_out.as_deref())?)
            }
            NormCommand::Tensor { method, input, p, hitset, rand_eps, seed, tol, budget, certificate_out } => {
                let t = read_tensor(&input)?;
                let pr = RationalExponent::parse(&p)?;
                let est = match method {
                    TensorMethod::Vector => {
                        let (lo, hi) = vector_bounds(&t, parse_p(&p)?);
                        NormEstimate { upper: hi, ..NormEstimate::exact("vector", lo) }
                    }
                    TensorMethod::Unfold => alg3_unfold_nuclear(&t, pr, None, tol)?,
                    TensorMethod::Partition => alg4_partition_nuclear(&t, pr, tol)?,
                    TensorMethod::Cover => match rand_eps {
                        Some(eps) => alg7_randomized(&t, pr, eps, H3Constants::default(), seed, tol, budget)?,
                        None => {
                            let sets = hitset
                                .iter()
                                .map(|f| HittingSet::from_json(&std::fs::read_to_string(f)?))
                                .collect::<Result<Vec<_>>>()?;
                            alg6_cover_nuclear(&t, pr, &sets, tol, budget)?
                        }
                    },
                };
                emit(None, &estimate_json(&est, certificate_out.as_deref())?)
            }
        },
        Command::Gen(g) => {
            let mut v = match g.kind {
                GenKind::Identity => serde_json::to_value(gen_identity_tensor(g.n, g.d)?)?,
                GenKind::KnownNuclear => {
                    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                    let (t, truth) = gen_known_nuclear_instance(g.n, g.d, g.r, &mut rng)?;
                    let mut v = serde_json::to_value(t)?;
                    v["nuclear_norm"] = json!(truth);
                    v["seed"] = json!(g.seed);
                    v
                }
            };
            if let Some(map) = v.as_object_mut() {
                map.insert("kind".into(), json!(match g.kind {
                    GenKind::Identity => "identity",
                    GenKind::KnownNuclear => "known-nuclear",
                }));
            }
            emit(g.out.as_deref(), &serde_json::to_string(&v)?)
        }
        Command::Bench { command: BenchCommand::Run { config, out } } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            write_report(&report, &out)?;
            for row in &report.rows {
                eprintln!(
                    "{:<11} n={:<3} r={:<3} avg ratio {:.4} (min {:.4}, max {:.4})",
                    row.method.name(),
                    row.n,
                    row.r,
                    row.avg_ratio,
                    row.min_ratio,
                    row.max_ratio
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Solver { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
