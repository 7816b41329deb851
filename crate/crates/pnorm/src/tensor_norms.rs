//! Approximations of tensor spectral and nuclear p-norms.
//!
//! Every routine permutes the input so dimensions are nondecreasing (ties
//! broken by original mode index); the d − 2 leading modes are the covered
//! ones and hitting sets are supplied in that order. Certificates are
//! reported in the caller's mode order.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::conic::{ConicProgram, LinExpr, Relation, Sense};
use crate::covering::{build_h3, HittingSet, H3Constants};
use crate::error::{Error, Result};
use crate::matrix_norms::{add_dual_block, matrix_pu, matrix_pv, NormEstimate, DELTA_G};
use crate::power_cone::{k3p_block, theta};
use crate::tensor::{
    conjugate, contract_modes, lp_norm_unchecked, normalize_lp, slice_partition, unfold, DenseTensor,
    ModePartition, RationalExponent,
};

/// Default limit on PSD blocks × block size for the covering programs.
pub const DEFAULT_PROGRAM_BUDGET: usize = 200_000;

/// Permutation sorting modes by (dimension, index).
pub fn mode_order(shape: &[usize]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..shape.len()).collect();
    perm.sort_by_key(|&k| (shape[k], k));
    perm
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &m) in perm.iter().enumerate() {
        inv[m] = k;
    }
    inv
}

struct Sorted {
    t: DenseTensor,
    perm: Vec<usize>,
}

impl Sorted {
    fn new(t: &DenseTensor, min_order: usize) -> Result<Self> {
        if t.order() < min_order {
            return Err(Error::shape(format!(
                "expected a tensor of order ≥ {min_order}, got shape {:?}",
                t.shape()
            )));
        }
        let perm = mode_order(t.shape());
        Ok(Sorted { t: t.permute(&perm)?, perm })
    }

    fn dims(&self) -> &[usize] {
        self.t.shape()
    }

    fn restore(&self, z: &DenseTensor) -> Result<DenseTensor> {
        z.permute(&inverse(&self.perm))
    }
}

/// (‖T‖_p entrywise, Σ over mode-d fibers of the fiber ℓp norms): a bracket
/// on the nuclear p-norm.
pub fn vector_bounds(t: &DenseTensor, p: f64) -> (f64, f64) {
    let lower = lp_norm_unchecked(t.data(), p);
    let last = *t.shape().last().unwrap_or(&1);
    let upper = if last == 0 {
        0.0
    } else {
        t.data().chunks(last).map(|f| lp_norm_unchecked(f, p)).sum()
    };
    (lower, upper)
}

fn check_sets(sets: &[HittingSet], dims: &[usize], p: f64) -> Result<()> {
    let d = dims.len();
    if sets.len() != d - 2 {
        return Err(Error::invalid(format!(
            "order-{d} tensor needs {} hitting sets, got {}",
            d - 2,
            sets.len()
        )));
    }
    for (k, h) in sets.iter().enumerate() {
        if h.is_empty() {
            return Err(Error::invalid(format!("hitting set {k} is empty")));
        }
        if h.n != dims[k] {
            return Err(Error::shape(format!(
                "hitting set {k} lives in ℝ^{} but covered mode {k} has dimension {}",
                h.n, dims[k]
            )));
        }
        if (h.p - p).abs() > 1e-12 * p {
            return Err(Error::invalid(format!("hitting set {k} is for p = {}, not {p}", h.p)));
        }
    }
    Ok(())
}

/// Members of `vs` up to sign: of every pair {v, −v} only the first is kept.
fn sign_representatives(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let key = |v: &[f64]| v.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in vs {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        if seen.contains(&key(&neg)) {
            continue;
        }
        seen.insert(key(v));
        out.push(v.clone());
    }
    out
}

/// Covering tuples with every set reduced modulo sign: flipping one x_k
/// flips M, and the relaxed programs are invariant under M → −M.
fn tuple_sets(sets: &[HittingSet]) -> Vec<Vec<Vec<f64>>> {
    sets.iter().map(|h| sign_representatives(&h.vectors)).collect()
}

fn tuple_count(sets: &[Vec<Vec<f64>>]) -> Option<usize> {
    sets.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
}

fn decode(sets: &[Vec<Vec<f64>>], mut idx: usize) -> Vec<&[f64]> {
    let mut out = vec![&[][..]; sets.len()];
    for k in (0..sets.len()).rev() {
        let len = sets[k].len();
        out[k] = &sets[k][idx % len];
        idx /= len;
    }
    out
}

/// Weights ∏ x_k[s_k] over the covered multi-index s, row-major.
fn kron_weights(xs: &[&[f64]]) -> Vec<f64> {
    xs.iter().fold(vec![1.0], |acc, x| {
        acc.iter().flat_map(|a| x.iter().map(move |b| a * b)).collect()
    })
}

fn contract_leading(t: &DenseTensor, xs: &[&[f64]]) -> Result<DenseTensor> {
    if xs.is_empty() {
        return Ok(t.clone());
    }
    let modes: Vec<usize> = (0..xs.len()).collect();
    contract_modes(t, &modes, xs)
}

/// Spectral p-norm by covering the d − 2 smallest modes: u is the largest
/// relaxed matrix value over all covering tuples and the estimate is u/δ_G.
pub fn alg2_spectral(
    t: &DenseTensor,
    p: RationalExponent,
    sets: &[HittingSet],
    tol: f64,
    max_tuples: usize,
) -> Result<NormEstimate> {
    let s = Sorted::new(t, 2)?;
    let pf = p.value();
    check_sets(sets, s.dims(), pf)?;
    let tuples = tuple_sets(sets);
    let count = tuple_count(&tuples).filter(|&c| c <= max_tuples).ok_or_else(|| {
        Error::Budget(format!("covering tuples exceed the limit of {max_tuples} matrix solves"))
    })?;
    let results: Vec<Result<NormEstimate>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let xs = decode(&tuples, i);
            matrix_pv(&contract_leading(&s.t, &xs)?, p, tol)
        })
        .collect();
    let mut est = NormEstimate::exact("alg2", 0.0);
    let mut u = 0.0f64;
    for r in results {
        let r = r?;
        u = u.max(r.value);
        est.absorb(&r);
    }
    let taus: Vec<f64> = sets.iter().map(|h| h.tau).collect();
    let prod: f64 = taus.iter().product();
    // ⟨T, x₁ ⊗ … ⊗ x_d⟩ ≤ ‖T‖_q entrywise.
    let holder = lp_norm_unchecked(t.data(), conjugate(pf));
    est.value = u / DELTA_G;
    est.lower = est.value;
    est.upper = if prod > 0.0 { (u / prod).min(holder) } else { holder };
    est.taus = taus;
    Ok(est)
}

/// Bound factor c with ‖T‖_{p*} ≤ c‖M‖_{p*} for the unfolding M: each side
/// loses n_k^{1/q} for every mode except its largest.
fn unfolding_factor(dims: &[usize], part: &ModePartition, q: f64) -> f64 {
    let side = |modes: &[usize]| {
        let mut ds: Vec<usize> = modes.iter().map(|&k| dims[k]).collect();
        ds.sort_unstable();
        ds.pop();
        ds.iter().map(|&n| (n as f64).powf(1.0 / q)).product::<f64>()
    };
    side(&part.row_modes) * side(&part.col_modes)
}

/// Nuclear p-norm through one matrix unfolding. Without a partition the
/// rows take every mode but the largest.
pub fn alg3_unfold_nuclear(
    t: &DenseTensor,
    p: RationalExponent,
    partition: Option<&ModePartition>,
    tol: f64,
) -> Result<NormEstimate> {
    let d = t.order();
    if d < 2 {
        return Err(Error::shape("unfolding needs a tensor of order ≥ 2"));
    }
    let part = match partition {
        Some(part) => part.clone(),
        None => {
            let perm = mode_order(t.shape());
            let mut rows = perm[..d - 1].to_vec();
            rows.sort_unstable();
            ModePartition::new(rows, vec![perm[d - 1]])
        }
    };
    part.validate(d)?;
    let m = unfold(t, &part)?;
    let inner = matrix_pu(&m, p, tol)?;
    let pf = p.value();
    let factor = DELTA_G * unfolding_factor(t.shape(), &part, conjugate(pf));
    let (_, vec_upper) = vector_bounds(t, pf);
    let certificate = match &inner.certificate {
        Some(z) => {
            let mut order = part.row_modes.clone();
            order.extend(&part.col_modes);
            let shape: Vec<usize> = order.iter().map(|&k| t.shape()[k]).collect();
            let folded = DenseTensor::new(shape, z.data().to_vec())?;
            Some(folded.permute(&inverse(&order))?)
        }
        None => None,
    };
    Ok(NormEstimate {
        lower: inner.value,
        upper: (factor * inner.value).min(vec_upper),
        certificate,
        method: "alg3".into(),
        ..inner
    })
}

/// Nuclear p-norm as the ℓp norm of the per-slice matrix values over the two
/// largest modes.
pub fn alg4_partition_nuclear(t: &DenseTensor, p: RationalExponent, tol: f64) -> Result<NormEstimate> {
    let s = Sorted::new(t, 2)?;
    let d = s.dims().len();
    let pf = p.value();
    let q = conjugate(pf);
    let slices = slice_partition(&s.t, d - 2, d - 1)?;
    let results: Vec<Result<NormEstimate>> = slices.par_iter().map(|m| matrix_pu(m, p, tol)).collect();
    let mut est = NormEstimate::exact("alg4", 0.0);
    let mut values = Vec::with_capacity(results.len());
    let mut certs = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        values.push(r.value);
        certs.push(r.certificate.clone());
        est.absorb(&r);
    }
    let value = lp_norm_unchecked(&values, pf);
    // Z = Σ_s w_s e_s ⊗ Z_s with w the Hölder partner of the slice values.
    let weights: Vec<f64> = if value > 0.0 {
        values.iter().map(|v| (v / value).powf(pf - 1.0)).collect()
    } else {
        vec![0.0; values.len()]
    };
    let block = s.dims()[d - 2] * s.dims()[d - 1];
    let mut zdata = Vec::with_capacity(s.t.len());
    for (w, c) in weights.iter().zip(&certs) {
        match c {
            Some(z) => zdata.extend(z.data().iter().map(|x| w * x)),
            None => zdata.extend(std::iter::repeat_n(0.0, block)),
        }
    }
    let z = DenseTensor::new(s.dims().to_vec(), zdata)?;
    let factor: f64 = DELTA_G * s.dims()[..d - 2].iter().map(|&n| (n as f64).powf(1.0 / q)).product::<f64>();
    let (_, vec_upper) = vector_bounds(t, pf);
    est.value = value;
    est.lower = value;
    est.upper = (factor * value).min(vec_upper);
    est.certificate = Some(s.restore(&z)?);
    Ok(est)
}

/// Nuclear p-norm of an order-3 tensor with one covering set.
pub fn alg5_cover_nuclear_order3(
    t: &DenseTensor,
    p: RationalExponent,
    h: &HittingSet,
    tol: f64,
    budget: usize,
) -> Result<NormEstimate> {
    if t.order() != 3 {
        return Err(Error::shape(format!("expected an order-3 tensor, got shape {:?}", t.shape())));
    }
    let mut est = alg6_cover_nuclear(t, p, std::slice::from_ref(h), tol, budget)?;
    est.method = "alg5".into();
    Ok(est)
}

/// Nuclear p-norm through one conic program: maximize ⟨T, Z⟩ subject to the
/// relaxed matrix norm of Z ×₁ x₁ ⋯ ×_{d−2} x_{d−2} being at most one for
/// every covering tuple. Returns (∏τ_k)·optimum.
pub fn alg6_cover_nuclear(
    t: &DenseTensor,
    p: RationalExponent,
    sets: &[HittingSet],
    tol: f64,
    budget: usize,
) -> Result<NormEstimate> {
    let s = Sorted::new(t, 2)?;
    let pf = p.value();
    p.require_above_two()?;
    let dims = s.dims().to_vec();
    let d = dims.len();
    check_sets(sets, &dims, pf)?;
    let taus: Vec<f64> = sets.iter().map(|h| h.tau).collect();
    let prod: f64 = taus.iter().product();
    let (_, vec_upper) = vector_bounds(t, pf);
    let scale = t.frobenius_norm();
    if scale == 0.0 {
        let mut est = NormEstimate::exact("alg6", 0.0);
        est.certificate = Some(DenseTensor::zeros(t.shape().to_vec())?);
        est.taus = taus;
        return Ok(est);
    }
    let (m, n) = (dims[d - 2], dims[d - 1]);
    let tuples = tuple_sets(sets);
    let count = tuple_count(&tuples)
        .filter(|&c| c.saturating_mul(m + n) <= budget)
        .ok_or_else(|| {
            Error::Budget(format!(
                "covering program needs more than {budget} PSD rows ({} × {} tuples)",
                m + n,
                tuple_count(&tuples).map_or("overflowing".into(), |c| c.to_string())
            ))
        })?;
    let cone = k3p_block(p)?;
    let theta_p = theta(pf);
    let mut prog = ConicProgram::new(Sense::Maximize);
    let z = prog.add_vars(s.t.len());
    let block = m * n;
    for idx in 0..count {
        let xs = decode(&tuples, idx);
        let w = kron_weights(&xs);
        let blk = add_dual_block(&mut prog, &cone, m, n, |i, j| {
            let mut e = LinExpr::zero();
            for (sidx, &ws) in w.iter().enumerate() {
                if ws != 0.0 {
                    e.add_term(z[sidx * block + i * n + j], ws);
                }
            }
            e
        })?;
        prog.add_linear(blk.cost(theta_p).plus_const(-1.0), Relation::Le);
    }
    let mut obj = LinExpr::zero();
    for (k, &zk) in z.iter().enumerate() {
        let c = s.t.data()[k] / scale;
        if c != 0.0 {
            obj.add_term(zk, c);
        }
    }
    prog.set_objective(obj);
    let res = prog.solve(tol)?;
    let opt = res.optimal_value()? * scale;
    let zdata: Vec<f64> = z.iter().map(|&v| res.value(v) * prod).collect();
    let zt = DenseTensor::new(dims.clone(), zdata)?;
    let mut est = NormEstimate::exact("alg6", prod * opt);
    est.upper = (DELTA_G * opt).min(vec_upper);
    est.program_optimum = Some(opt);
    est.certificate = Some(s.restore(&zt)?);
    est.taus = taus;
    est.record(&res.stats);
    Ok(est)
}

/// Covering program with independently sampled random sets, each built to
/// succeed with probability 1 − ε/(d − 2). Set k uses seed `seed + k`.
pub fn alg7_randomized(
    t: &DenseTensor,
    p: RationalExponent,
    eps: f64,
    consts: H3Constants,
    seed: u64,
    tol: f64,
    budget: usize,
) -> Result<NormEstimate> {
    let s = Sorted::new(t, 2)?;
    let d = s.dims().len();
    let per = if d > 2 { eps / (d - 2) as f64 } else { eps };
    let sets = s.dims()[..d - 2]
        .iter()
        .enumerate()
        .map(|(k, &nk)| build_h3(nk, p.value(), per, consts, seed.wrapping_add(k as u64), usize::MAX))
        .collect::<Result<Vec<_>>>()?;
    let mut est = alg6_cover_nuclear(t, p, &sets, tol, budget)?;
    est.method = "alg7".into();
    Ok(est)
}

/// Σ_i e_i^{⊗d} with n_1 = … = n_d = n.
pub fn gen_identity_tensor(n: usize, d: usize) -> Result<DenseTensor> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("identity tensor needs n ≥ 1 and d ≥ 1"));
    }
    DenseTensor::from_fn(vec![n; d], |idx| if idx.iter().all(|&i| i == idx[0]) { 1.0 } else { 0.0 })
}

/// Spectral p-norm of the identity tensor: 1 for p ≤ d, n^{1−d/p} otherwise.
pub fn identity_spectral_value(n: usize, d: usize, p: f64) -> f64 {
    if p <= d as f64 {
        1.0
    } else {
        (n as f64).powf(1.0 - d as f64 / p)
    }
}

/// Σ_{i≤r} λ_i x_i^{⊗d} with λ_i ~ U[0, 1] and x_i uniform on [0, 1]ⁿ
/// normalized in ℓ_d. With p = d its nuclear p-norm is Σλ_i.
pub fn gen_known_nuclear_instance<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    r: usize,
    rng: &mut R,
) -> Result<(DenseTensor, f64)> {
    if n == 0 || d < 2 || r == 0 {
        return Err(Error::invalid("known-value instance needs n ≥ 1, d ≥ 2, r ≥ 1"));
    }
    let mut comps = Vec::with_capacity(r);
    for _ in 0..r {
        let lambda: f64 = rng.gen();
        let x = loop {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            if let Some(x) = normalize_lp(&raw, d as f64) {
                break x;
            }
        };
        comps.push((lambda, x));
    }
    let t = rank_one_sum(n, d, &comps)?;
    Ok((t, comps.iter().map(|c| c.0).sum()))
}

/// Σ λ_i x_i^{⊗d}.
pub fn rank_one_sum(n: usize, d: usize, comps: &[(f64, Vec<f64>)]) -> Result<DenseTensor> {
    DenseTensor::from_fn(vec![n; d], |idx| {
        comps
            .iter()
            .map(|(l, x)| l * idx.iter().map(|&i| x[i]).product::<f64>())
            .sum()
    })
}
