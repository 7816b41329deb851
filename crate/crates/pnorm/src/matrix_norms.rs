//! SDP bounds on matrix spectral and nuclear p-norms.
//!
//! `matrix_pv` is the Grothendieck-type relaxation of the spectral p-norm,
//! solved through its dual with power-cone blocks; `matrix_pu` is the norm
//! dual to it and brackets the nuclear p-norm within a factor δ_G.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conic::{
    ConicProgram, LinExpr, PsdConstraint, Relation, Sense, SolveStats, VarId,
};
use crate::error::{Error, Result};
use crate::power_cone::{geo_mean_block_for, k3p_block, theta, ConeBlock};
use crate::tensor::{conjugate, lp_norm_unchecked, partial_contraction, DenseTensor, RationalExponent};

/// Upper bound π / (2 ln(1 + √2)) on the real Grothendieck constant.
pub const DELTA_G: f64 = 1.782_213_978_191_369_3;

/// A computed norm value with a guaranteed bracket on the true norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Dual certificate: a Z with relaxed spectral norm at most one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<DenseTensor>,
    pub method: String,
    pub delta_g_used: f64,
    /// Optimal value of the covering program before scaling by the hitting
    /// ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_optimum: Option<f64>,
    /// Certified hitting ratios of the covering sets, in covered-mode order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub solves: usize,
    #[serde(default)]
    pub solve_time_s: f64,
    #[serde(default)]
    pub iterations: u64,
}

impl NormEstimate {
    /// An estimate whose bracket collapses to `value`.
    pub fn exact(method: &str, value: f64) -> Self {
        NormEstimate {
            value,
            lower: value,
            upper: value,
            certificate: None,
            method: method.into(),
            delta_g_used: DELTA_G,
            program_optimum: None,
            taus: Vec::new(),
            solves: 0,
            solve_time_s: 0.0,
            iterations: 0,
        }
    }

    pub(crate) fn record(&mut self, stats: &SolveStats) {
        self.solves += 1;
        self.solve_time_s += stats.solve_time_s;
        self.iterations += stats.iterations as u64;
    }

    pub(crate) fn absorb(&mut self, other: &NormEstimate) {
        self.solves += other.solves;
        self.solve_time_s += other.solve_time_s;
        self.iterations += other.iterations;
    }
}

pub(crate) fn check_matrix(a: &DenseTensor) -> Result<(usize, usize)> {
    if a.order() != 2 {
        return Err(Error::shape(format!("expected a matrix, got shape {:?}", a.shape())));
    }
    Ok((a.shape()[0], a.shape()[1]))
}

/// Variables of one dual block D(v) ⪰ ½[[0, M], [Mᵀ, 0]].
pub(crate) struct DualBlock {
    pub u1: VarId,
    pub u2: VarId,
    pub t: Vec<VarId>,
}

impl DualBlock {
    /// u₁ + u₂ + θ_p Σ t_i.
    pub fn cost(&self, theta_p: f64) -> LinExpr {
        let mut e = LinExpr::var(self.u1).term(self.u2, 1.0);
        for &t in &self.t {
            e.add_term(t, theta_p);
        }
        e
    }
}

/// Adds the power-cone blocks and the PSD constraint of the dual program for
/// an m × n matrix whose entries are the affine expressions `entry(i, j)`.
pub(crate) fn add_dual_block(
    prog: &mut ConicProgram,
    cone: &ConeBlock,
    m: usize,
    n: usize,
    mut entry: impl FnMut(usize, usize) -> LinExpr,
) -> Result<DualBlock> {
    let u1 = prog.add_var();
    let u2 = prog.add_var();
    let t = prog.add_vars(m + n);
    let v = prog.add_vars(m + n);
    for i in 0..m + n {
        let u = if i < m { u1 } else { u2 };
        prog.add_block(cone, &[u, v[i], t[i]])?;
    }
    let mut psd = PsdConstraint::new(m + n);
    for (i, &vi) in v.iter().enumerate() {
        psd.add(i, i, vi, 1.0);
    }
    for i in 0..m {
        for j in 0..n {
            let e = entry(i, j);
            if e.terms.is_empty() && e.constant == 0.0 {
                continue;
            }
            psd.entries.push(crate::conic::PsdEntry {
                row: i,
                col: m + j,
                expr: LinExpr::combine(&e, -0.5, &LinExpr::zero(), 0.0),
            });
        }
    }
    prog.psd_embed(psd);
    Ok(DualBlock { u1, u2, t })
}

/// Relaxed spectral p-norm ‖A‖_{p_v} from the dual minimization.
/// Bracket [value/δ_G, value] on the spectral p-norm.
pub fn matrix_pv(a: &DenseTensor, p: RationalExponent, tol: f64) -> Result<NormEstimate> {
    let (m, n) = check_matrix(a)?;
    p.require_above_two()?;
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(NormEstimate::exact("pv", 0.0));
    }
    let cone = k3p_block(p)?;
    let mut prog = ConicProgram::new(Sense::Minimize);
    let blk = add_dual_block(&mut prog, &cone, m, n, |i, j| LinExpr::constant(a.at(i, j) / scale))?;
    prog.set_objective(blk.cost(theta(p.value())));
    let res = prog.solve(tol)?;
    let value = res.optimal_value()? * scale;
    let mut est = NormEstimate {
        lower: value / DELTA_G,
        upper: value,
        ..NormEstimate::exact("pv", value)
    };
    est.record(&res.stats);
    Ok(est)
}

/// The primal maximization defining ‖A‖_{p_v}:
/// max ⟨[[0, A/2], [Aᵀ/2, 0]], X⟩ over X ⪰ 0 with Σ x_ii^{p/2} ≤ 1 on each
/// diagonal block. Independent of the dual route; used to cross-check it.
pub fn matrix_pv_primal(a: &DenseTensor, p: RationalExponent, tol: f64) -> Result<f64> {
    let (m, n) = check_matrix(a)?;
    p.require_above_two()?;
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    // x ≤ s^{2a/b} as a geometric mean of 2^k leaves: s (2a times), the
    // constant one (b − 2a times) and x itself for the remaining leaves.
    let (ea, eb) = (p.a as usize, p.b as usize);
    let leaves = eb.next_power_of_two();
    let gm = geo_mean_block_for(leaves.max(2))?;
    let dim = m + n;
    let mut prog = ConicProgram::new(Sense::Maximize);
    let one = prog.add_var();
    prog.add_eq(LinExpr::var(one), LinExpr::constant(1.0));
    let mut x = vec![vec![VarId(0); dim]; dim];
    let mut psd = PsdConstraint::new(dim);
    for j in 0..dim {
        for i in 0..=j {
            let v = prog.add_var();
            x[i][j] = v;
            x[j][i] = v;
            psd.add(i, j, v, 1.0);
        }
    }
    prog.psd_embed(psd);
    let s = prog.add_vars(dim);
    for i in 0..dim {
        prog.set_nonneg(x[i][i]);
        prog.set_nonneg(s[i]);
        let mut inputs = Vec::with_capacity(leaves + 1);
        inputs.extend(std::iter::repeat_n(s[i], 2 * ea));
        inputs.extend(std::iter::repeat_n(one, eb - 2 * ea));
        inputs.extend(std::iter::repeat_n(x[i][i], leaves - eb));
        inputs.push(x[i][i]);
        prog.add_block(&gm, &inputs)?;
    }
    let budget = |range: std::ops::Range<usize>| {
        let mut e = LinExpr::constant(-1.0);
        for i in range {
            e.add_term(s[i], 1.0);
        }
        e
    };
    prog.add_linear(budget(0..m), Relation::Le);
    prog.add_linear(budget(m..dim), Relation::Le);
    let mut obj = LinExpr::zero();
    for i in 0..m {
        for j in 0..n {
            obj.add_term(x[i][m + j], a.at(i, j) / scale);
        }
    }
    prog.set_objective(obj);
    Ok(prog.solve(tol)?.optimal_value()? * scale)
}

/// Relaxed nuclear p-norm ‖A‖_{p_u} = max{⟨A, Z⟩ : ‖Z‖_{p_v} ≤ 1}.
/// Bracket [value, δ_G·value] on the nuclear p-norm; the certificate Z is
/// rescaled so that its re-solved ‖Z‖_{p_v} is at most one.
pub fn matrix_pu(a: &DenseTensor, p: RationalExponent, tol: f64) -> Result<NormEstimate> {
    let (m, n) = check_matrix(a)?;
    p.require_above_two()?;
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        let mut est = NormEstimate::exact("pu", 0.0);
        est.certificate = Some(DenseTensor::zeros(vec![m, n])?);
        return Ok(est);
    }
    let cone = k3p_block(p)?;
    let mut prog = ConicProgram::new(Sense::Maximize);
    let z = prog.add_vars(m * n);
    let blk = add_dual_block(&mut prog, &cone, m, n, |i, j| LinExpr::var(z[i * n + j]))?;
    prog.add_linear(blk.cost(theta(p.value())).plus_const(-1.0), Relation::Le);
    let mut obj = LinExpr::zero();
    for i in 0..m {
        for j in 0..n {
            obj.add_term(z[i * n + j], a.at(i, j) / scale);
        }
    }
    prog.set_objective(obj);
    let res = prog.solve(tol)?;
    res.optimal_value()?;
    let zdata: Vec<f64> = z.iter().map(|&v| res.value(v)).collect();
    let zmat = DenseTensor::from_matrix(m, n, zdata)?;
    let check = matrix_pv(&zmat, p, tol)?;
    let zmat = zmat.scale(1.0 / check.value.max(1.0));
    let value = zmat.inner(a)?;
    let mut est = NormEstimate {
        lower: value,
        upper: DELTA_G * value,
        certificate: Some(zmat),
        ..NormEstimate::exact("pu", value)
    };
    est.record(&res.stats);
    est.absorb(&check);
    Ok(est)
}

/// Hölder-optimal response: the unit-ℓp vector maximizing ⟨g, x⟩, and ‖g‖_q.
pub fn holder_response(g: &[f64], p: f64) -> (Vec<f64>, f64) {
    let q = conjugate(p);
    let gq = lp_norm_unchecked(g, q);
    if gq == 0.0 {
        let mut x = vec![0.0; g.len()];
        x[0] = 1.0;
        return (x, 0.0);
    }
    let mut x: Vec<f64> = g.iter().map(|&v| v.signum() * (v.abs() / gq).powf(q - 1.0)).collect();
    for v in x.iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    let nx = lp_norm_unchecked(&x, p);
    if nx > 0.0 {
        for v in x.iter_mut() {
            *v /= nx;
        }
    }
    (x, gq)
}

fn ascend(t: &DenseTensor, p: f64, mut xs: Vec<Vec<f64>>) -> f64 {
    let d = t.order();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let mut val = 0.0;
        for k in 0..d {
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            let g = partial_contraction(t, &refs, k).expect("shapes agree");
            let (x, gq) = holder_response(&g, p);
            xs[k] = x;
            val = gq;
        }
        if val - prev <= 1e-15 * val.abs() {
            return val.max(prev);
        }
        prev = val;
    }
    prev
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Lower bound on the spectral p-norm max ⟨T, x₁ ⊗ … ⊗ x_d⟩ over unit ℓp
/// vectors, by multistart alternating maximization. Deterministic in `seed`.
pub fn spectral_pnorm_oracle(t: &DenseTensor, p: f64, restarts: usize, seed: u64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    let d = t.order();
    let shape = t.shape().to_vec();
    if d == 1 {
        return Ok(lp_norm_unchecked(t.data(), conjugate(p)));
    }
    let ones = |n: usize| vec![(n as f64).powf(-1.0 / p); n];
    let mut starts: Vec<Vec<Vec<f64>>> = vec![shape.iter().map(|&n| ones(n)).collect()];
    // Largest entries as basis-vector starts.
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&i, &j| t.data()[j].abs().total_cmp(&t.data()[i].abs()).then(i.cmp(&j)));
    for &flat in order.iter().take(restarts.clamp(1, 8)) {
        let mut rem = flat;
        let mut xs = vec![Vec::new(); d];
        for k in (0..d).rev() {
            xs[k] = unit(shape[k], rem % shape[k]);
            rem /= shape[k];
        }
        starts.push(xs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < restarts.max(1) {
        let xs = shape
            .iter()
            .map(|&n| {
                let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                crate::tensor::normalize_lp(&g, p).unwrap_or_else(|| unit(n, 0))
            })
            .collect();
        starts.push(xs);
    }
    Ok(starts.into_iter().map(|xs| ascend(t, p, xs)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> RationalExponent {
        RationalExponent::integer(3).unwrap()
    }

    #[test]
    fn delta_g_constant() {
        let v = std::f64::consts::PI / (2.0 * (1.0 + 2f64.sqrt()).ln());
        assert!((DELTA_G - v).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let z = DenseTensor::zeros(vec![2, 3]).unwrap();
        assert_eq!(matrix_pv(&z, p3(), 1e-8).unwrap().value, 0.0);
        assert_eq!(matrix_pu(&z, p3(), 1e-8).unwrap().value, 0.0);
    }

    #[test]
    fn basis_matrix() {
        let a = DenseTensor::from_matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let pv = matrix_pv(&a, p3(), 1e-8).unwrap();
        assert!(pv.value >= 1.0 - 1e-7 && pv.value <= DELTA_G + 1e-7, "{}", pv.value);
        assert_eq!(spectral_pnorm_oracle(&a, 3.0, 10, 1).unwrap(), 1.0);
        let pu = matrix_pu(&a, p3(), 1e-8).unwrap();
        assert!(pu.value <= 1.0 + 1e-6 && pu.value >= 1.0 / DELTA_G);
    }

    #[test]
    fn primal_matches_dual_small() {
        let a = DenseTensor::from_matrix(2, 3, vec![1.0, -2.0, 0.5, 0.3, 1.1, -0.7]).unwrap();
        let d = matrix_pv(&a, p3(), 1e-9).unwrap().value;
        let pr = matrix_pv_primal(&a, p3(), 1e-9).unwrap();
        assert!((d - pr).abs() <= 1e-6 * d, "{d} vs {pr}");
    }

    #[test]
    fn holder_response_is_tight() {
        let g = [0.3, -1.2, 2.0];
        let (x, v) = holder_response(&g, 3.0);
        assert!((lp_norm_unchecked(&x, 3.0) - 1.0).abs() < 1e-12);
        assert!((crate::tensor::dot(&g, &x) - v).abs() < 1e-12);
    }
}
