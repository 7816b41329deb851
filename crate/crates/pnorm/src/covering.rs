//! Hitting sets of the ℓp unit sphere.
//!
//! A finite set H ⊂ 𝕊_pⁿ has hitting ratio τ if every x on the ℓq unit sphere
//! (1/p + 1/q = 1) satisfies max_{v ∈ H} ⟨v, x⟩ ≥ τ. The constructions here
//! carry the certified τ of their closed-form analysis; [`probe_hitting_ratio`]
//! checks them empirically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conjugate, dedup_exact, dot, lp_norm_unchecked, normalize_lp};

/// Default limit on the number of vectors a construction may enumerate.
pub const DEFAULT_CAP: usize = 1_000_000;

/// α = (5 + √33)/2, the block-size parameter maximizing μ_{α,α+1} at p = 3.
pub fn default_alpha() -> f64 {
    (5.0 + 33f64.sqrt()) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Certificate {
    Deterministic,
    Probabilistic { confidence: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Construction {
    Hh { alpha: f64, beta: f64 },
    Hb { gamma: f64 },
    H1 { alpha: f64, beta: f64 },
    H2 { alpha: f64, beta: f64 },
    Hg { m: usize },
    H3 { eps: f64, seed: u64, delta0: f64, delta2: f64, delta3: f64 },
    Kron { n2: usize },
    Append,
    Hadamard { k: u32 },
    Cut { n: usize },
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingSet {
    pub p: f64,
    pub n: usize,
    pub tau: f64,
    pub certificate: Certificate,
    pub construction: Construction,
    /// Closed-form cardinality bound of the construction, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl HittingSet {
    /// Wraps explicit unit vectors without a certified ratio.
    pub fn explicit(p: f64, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let n = vectors.first().map(|v| v.len()).ok_or_else(|| Error::invalid("empty hitting set"))?;
        let h = HittingSet {
            p,
            n,
            tau: 0.0,
            certificate: Certificate::None,
            construction: Construction::Explicit,
            cardinality_bound: None,
            notes: Vec::new(),
            vectors,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    /// Checks dimensions, unit norms to 1e−12 and τ ∈ [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() {
            return Err(Error::invalid("empty hitting set"));
        }
        if !(self.p >= 1.0) {
            return Err(Error::invalid(format!("hitting set exponent must be ≥ 1, got {}", self.p)));
        }
        for v in &self.vectors {
            if v.len() != self.n {
                return Err(Error::shape(format!("vector of length {} in a set over ℝ^{}", v.len(), self.n)));
            }
            let nv = lp_norm_unchecked(v, self.p);
            if (nv - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("hitting-set vector has ℓp norm {nv}")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("hitting ratio {} outside [0, 1]", self.tau)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hitting set serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: HittingSet = serde_json::from_str(s)?;
        h.validate()?;
        Ok(h)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must lie in (1, ∞), got {p}")));
    }
    Ok(())
}

fn check_alpha_beta(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 1.0) || !(beta >= alpha + 1.0) || !beta.is_finite() {
        return Err(Error::invalid(format!(
            "need α ≥ 1 and β ≥ α + 1, got α = {alpha}, β = {beta}"
        )));
    }
    Ok(())
}

/// μ_{α,β} = (α/(β(α+1)))^{1/p}(1 − 1/α).
pub fn mu(alpha: f64, beta: f64, p: f64) -> f64 {
    (alpha / (beta * (alpha + 1.0))).powf(1.0 / p) * (1.0 - 1.0 / alpha)
}

/// Leading term of ν_{α,β}; the factor ((β−1)/(β−α−1))^{(β−α−1)/(β−1)}
/// tends to one as β → α + 1.
pub fn nu(alpha: f64, beta: f64) -> f64 {
    let gap = beta - alpha - 1.0;
    let last = if gap <= 0.0 {
        1.0
    } else {
        ((beta - 1.0) / gap).powf(gap / (beta - 1.0))
    };
    2f64.powf((beta + alpha - 1.0) / (beta - 1.0))
        * alpha.powf(-alpha / (beta - 1.0))
        * beta.powf(alpha * beta / ((beta - 1.0) * (beta - 1.0)))
        * last
}

/// Block sizes |I_1|, …, |I_m| of the level partition for dimension n.
pub fn hh_block_sizes(n: usize, alpha: f64, beta: f64) -> Vec<usize> {
    let target = alpha * n as f64;
    let mut m = 0usize;
    let mut pow = 1.0f64;
    while pow < target {
        pow *= beta;
        m += 1;
    }
    let m = m.max(1);
    let mut sizes = vec![0usize; m];
    let mut scale = 1.0;
    for size in sizes.iter_mut().skip(1) {
        scale *= beta;
        *size = (target / scale).floor() as usize;
    }
    let rest: usize = sizes.iter().sum();
    sizes[0] = n.saturating_sub(rest);
    sizes
}

fn multinomial(n: usize, parts: &[usize]) -> f64 {
    let lf = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    (lf(n) - parts.iter().map(|&k| lf(k)).sum::<f64>()).exp()
}

/// Assigns indices to levels with the prescribed counts, calling `f` on each
/// complete assignment.
fn for_each_assignment(level: &mut Vec<usize>, counts: &mut [usize], n: usize, f: &mut impl FnMut(&[usize])) {
    if level.len() == n {
        f(level);
        return;
    }
    for j in 0..counts.len() {
        if counts[j] > 0 {
            counts[j] -= 1;
            level.push(j);
            for_each_assignment(level, counts, n, f);
            level.pop();
            counts[j] += 1;
        }
    }
}

/// Level-partition hitting set: for every partition of the coordinates into
/// blocks of the prescribed sizes, coordinates in block j take values
/// ±1 or ±β^{(j−1)/p}; all vectors are normalized. τ = μ_{α,β}.
pub fn build_hh(n: usize, p: f64, alpha: f64, beta: f64, cap: usize) -> Result<HittingSet> {
    check_p(p)?;
    check_alpha_beta(alpha, beta)?;
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let sizes = hh_block_sizes(n, alpha, beta);
    let projected = multinomial(n, &sizes) * 2f64.powi(sizes[0] as i32) * 4f64.powi((n - sizes[0]) as i32);
    if projected > cap as f64 {
        return Err(Error::Budget(format!(
            "level-partition set for n = {n} would enumerate ~{projected:.3e} vectors (cap {cap})"
        )));
    }
    let levels: Vec<f64> = (0..sizes.len()).map(|j| beta.powf(j as f64 / p)).collect();
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut counts = sizes.clone();
    for_each_assignment(&mut Vec::with_capacity(n), &mut counts, n, &mut |lv| {
        // Each coordinate has 2 choices at level 0 and 4 otherwise.
        let choices: Vec<usize> = lv.iter().map(|&j| if j == 0 { 2 } else { 4 }).collect();
        let total: usize = choices.iter().product();
        for mut code in 0..total {
            let mut z = Vec::with_capacity(n);
            for (i, &c) in choices.iter().enumerate() {
                let pick = code % c;
                code /= c;
                let mag = if pick < 2 { 1.0 } else { levels[lv[i]] };
                z.push(if pick % 2 == 0 { mag } else { -mag });
            }
            raw.push(z);
        }
    });
    let vectors = dedup_exact(raw)
        .into_iter()
        .map(|z| normalize_lp(&z, p).expect("nonzero"))
        .collect();
    let mut notes = Vec::new();
    if alpha == 1.0 {
        notes.push("α = 1 gives μ = 0: the set is valid but certifies nothing".into());
    }
    Ok(HittingSet {
        p,
        n,
        tau: mu(alpha, beta, p),
        certificate: Certificate::Deterministic,
        construction: Construction::Hh { alpha, beta },
        cardinality_bound: Some(nu(alpha, beta).powi(n as i32)),
        notes,
        vectors,
    })
}

fn gcd_abs(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| {
        let (mut a, mut b) = (g, x.abs());
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    })
}

/// Visits every integer vector in [−r, r]ⁿ.
fn for_each_box_point(n: usize, r: i64, mut f: impl FnMut(&[i64])) {
    let mut z = vec![-r; n];
    loop {
        f(&z);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if z[k] < r {
                z[k] += 1;
                break;
            }
            z[k] = -r;
        }
    }
}

/// Normalized integer points of the ℓp ball of radius γ n^{1/p}.
/// Directions are deduplicated exactly by reducing to primitive vectors.
pub fn build_hb(n: usize, p: f64, gamma: f64, cap: usize) -> Result<HittingSet> {
    check_p(p)?;
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("need γ > 1, got {gamma}")));
    }
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let radius = gamma * (n as f64).powf(1.0 / p);
    let r = radius.floor() as i64;
    let projected = (2.0 * r as f64 + 1.0).powi(n as i32);
    if projected > cap as f64 {
        return Err(Error::Budget(format!(
            "integer-ball set for n = {n} scans ~{projected:.3e} points (cap {cap})"
        )));
    }
    let limit = radius.powf(p) * (1.0 + 1e-12);
    let mut vectors = Vec::new();
    for_each_box_point(n, r, |z| {
        let s: f64 = z.iter().map(|&c| (c.abs() as f64).powf(p)).sum();
        if s > 0.0 && s <= limit && gcd_abs(z) == 1 {
            let zf: Vec<f64> = z.iter().map(|&c| c as f64).collect();
            vectors.push(normalize_lp(&zf, p).expect("nonzero"));
        }
    });
    let bound = ((p / 12.0).exp() * (2.0 * gamma + 1.0) * (2.0 * std::f64::consts::PI / p).sqrt().max(1.0))
        .powi(n as i32);
    Ok(HittingSet {
        p,
        n,
        tau: 1.0 - 1.0 / gamma,
        certificate: Certificate::Deterministic,
        construction: Construction::Hb { gamma },
        cardinality_bound: Some(bound),
        notes: Vec::new(),
        vectors,
    })
}

/// Grid vectors with coordinates in {0, ±1/m, …, ±1}, normalized. Uncertified.
pub fn build_hg(n: usize, p: f64, m: usize, cap: usize) -> Result<HittingSet> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::invalid("grid needs m ≥ 1 and n ≥ 1"));
    }
    let projected = (2.0 * m as f64 + 1.0).powi(n as i32);
    if projected > cap as f64 {
        return Err(Error::Budget(format!("grid set scans ~{projected:.3e} points (cap {cap})")));
    }
    let mut vectors = Vec::new();
    for_each_box_point(n, m as i64, |z| {
        if gcd_abs(z) == 1 {
            let zf: Vec<f64> = z.iter().map(|&c| c as f64 / m as f64).collect();
            vectors.push(normalize_lp(&zf, p).expect("nonzero"));
        }
    });
    Ok(HittingSet {
        p,
        n,
        tau: 0.0,
        certificate: Certificate::None,
        construction: Construction::Hg { m },
        cardinality_bound: Some(projected),
        notes: Vec::new(),
        vectors,
    })
}

/// Grid rounding: w_i = ⌈m x_i⌉/m for x_i ≥ 0 and ⌊m x_i⌋/m otherwise.
pub fn grid_round(x: &[f64], m: usize) -> Vec<f64> {
    let mf = m as f64;
    x.iter()
        .map(|&v| if v >= 0.0 { (mf * v).ceil() / mf } else { (mf * v).floor() / mf })
        .collect()
}

/// 𝔼^{n₂} ⊠ H: the vectors e_j ⊠ h. τ' = τ / n₂^{1/q}.
pub fn lift_kron(h: &HittingSet, n2: usize) -> Result<HittingSet> {
    if n2 == 0 {
        return Err(Error::invalid("Kronecker lift needs n₂ ≥ 1"));
    }
    let n = h.n * n2;
    let mut vectors = Vec::with_capacity(h.len() * n2);
    for j in 0..n2 {
        for v in &h.vectors {
            let mut x = vec![0.0; n];
            x[j * h.n..(j + 1) * h.n].copy_from_slice(v);
            vectors.push(x);
        }
    }
    Ok(HittingSet {
        p: h.p,
        n,
        tau: h.tau / (n2 as f64).powf(1.0 / h.q()),
        certificate: h.certificate,
        construction: Construction::Kron { n2 },
        cardinality_bound: h.cardinality_bound.map(|b| b * n2 as f64),
        notes: Vec::new(),
        vectors,
    })
}

fn append_unchecked(h1: &HittingSet, h2: &HittingSet) -> Vec<Vec<f64>> {
    let n = h1.n + h2.n;
    let mut vectors = Vec::with_capacity(h1.len() + h2.len());
    for v in &h1.vectors {
        let mut x = v.clone();
        x.resize(n, 0.0);
        vectors.push(x);
    }
    for v in &h2.vectors {
        let mut x = vec![0.0; h1.n];
        x.extend_from_slice(v);
        vectors.push(x);
    }
    vectors
}

fn weaker(a: Certificate, b: Certificate) -> Certificate {
    match (a, b) {
        (Certificate::None, _) | (_, Certificate::None) => Certificate::None,
        (Certificate::Probabilistic { confidence: x }, Certificate::Probabilistic { confidence: y }) => {
            Certificate::Probabilistic { confidence: (x + y - 1.0).max(0.0) }
        }
        (c @ Certificate::Probabilistic { .. }, _) | (_, c @ Certificate::Probabilistic { .. }) => c,
        _ => Certificate::Deterministic,
    }
}

/// (H₁ ∨ 0) ∪ (0 ∨ H₂); τ' = τ₁τ₂ / (τ₁^q + τ₂^q)^{1/q}.
pub fn combine_append(h1: &HittingSet, h2: &HittingSet) -> Result<HittingSet> {
    if h1.p != h2.p {
        return Err(Error::invalid("appended sets must share p"));
    }
    if !(h1.tau > 0.0 && h2.tau > 0.0) {
        return Err(Error::invalid("appending needs positive hitting ratios"));
    }
    let q = h1.q();
    let tau = h1.tau * h2.tau / (h1.tau.powf(q) + h2.tau.powf(q)).powf(1.0 / q);
    Ok(HittingSet {
        p: h1.p,
        n: h1.n + h2.n,
        tau,
        certificate: weaker(h1.certificate, h2.certificate),
        construction: Construction::Append,
        cardinality_bound: h1.cardinality_bound.zip(h2.cardinality_bound).map(|(a, b)| a + b),
        notes: Vec::new(),
        vectors: append_unchecked(h1, h2),
    })
}

/// Composite level-partition set over blocks of size ⌈ln n⌉.
/// τ = μ_{α,β}(ln n/(n + ln n))^{1/q}.
pub fn build_h1(n: usize, p: f64, alpha: f64, beta: f64, cap: usize) -> Result<HittingSet> {
    check_p(p)?;
    check_alpha_beta(alpha, beta)?;
    if n < 2 {
        return Err(Error::invalid("composite construction needs n ≥ 2"));
    }
    let ln = (n as f64).ln();
    let n1 = ln.ceil() as usize;
    let n2 = n / n1;
    let n3 = n - n1 * n2;
    let base = build_hh(n1, p, alpha, beta, cap)?;
    let lifted = lift_kron(&base, n2)?;
    let vectors = if n3 > 0 {
        let tail = build_hh(n3, p, alpha, beta, cap)?;
        append_unchecked(&lifted, &tail)
    } else {
        lifted.vectors
    };
    let q = conjugate(p);
    let nu = nu(alpha, beta);
    Ok(HittingSet {
        p,
        n,
        tau: mu(alpha, beta, p) * (ln / (n as f64 + ln)).powf(1.0 / q),
        certificate: Certificate::Deterministic,
        construction: Construction::H1 { alpha, beta },
        cardinality_bound: Some((n as f64).powf(nu.ln()) * (nu * n as f64 / ln + 1.0)),
        notes: base.notes,
        vectors,
    })
}

/// The block Walsh–Hadamard matrix I_{m,k} = H_{2^k} ⊗ I_m, applied as a
/// fast transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedHadamard {
    pub m: usize,
    pub k: u32,
}

impl ExtendedHadamard {
    pub fn new(m: usize, k: u32) -> Result<Self> {
        if m == 0 || k > 30 {
            return Err(Error::invalid("extended Hadamard needs m ≥ 1 and k ≤ 30"));
        }
        Ok(ExtendedHadamard { m, k })
    }

    pub fn size(&self) -> usize {
        (1usize << self.k) * self.m
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.size() {
            return Err(Error::shape(format!(
                "extended Hadamard of size {} applied to length {}",
                self.size(),
                x.len()
            )));
        }
        let mut y = x.to_vec();
        let len = y.len();
        let mut h = self.m;
        while h < len {
            for start in (0..len).step_by(2 * h) {
                for i in start..start + h {
                    let (a, b) = (y[i], y[i + h]);
                    y[i] = a + b;
                    y[i + h] = a - b;
                }
            }
            h *= 2;
        }
        Ok(y)
    }

    /// Dense matrix from the block recursion, for small sizes.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut mat: Vec<Vec<f64>> = (0..self.m)
            .map(|i| (0..self.m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..self.k {
            let s = mat.len();
            let mut next = vec![vec![0.0; 2 * s]; 2 * s];
            for i in 0..s {
                for j in 0..s {
                    next[i][j] = mat[i][j];
                    next[i][j + s] = mat[i][j];
                    next[i + s][j] = mat[i][j];
                    next[i + s][j + s] = -mat[i][j];
                }
            }
            mat = next;
        }
        mat
    }
}

/// 2^{−k/p} I_{m,k}(𝔼^{2^k} ⊠ H); τ' = 2^{−k/2} m^{1/2 − 1/q} τ.
pub fn lift_hadamard(h: &HittingSet, k: u32) -> Result<HittingSet> {
    if !(h.p >= 2.0) {
        return Err(Error::invalid("Hadamard lifting needs p ≥ 2"));
    }
    let had = ExtendedHadamard::new(h.n, k)?;
    let blocks = 1usize << k;
    let scale = 2f64.powf(-(k as f64) / h.p);
    let mut vectors = Vec::with_capacity(blocks * h.len());
    for j in 0..blocks {
        for v in &h.vectors {
            let mut x = vec![0.0; had.size()];
            x[j * h.n..(j + 1) * h.n].copy_from_slice(v);
            vectors.push(had.apply(&x)?.into_iter().map(|c| c * scale).collect());
        }
    }
    let q = h.q();
    Ok(HittingSet {
        p: h.p,
        n: had.size(),
        tau: 2f64.powf(-(k as f64) / 2.0) * (h.n as f64).powf(0.5 - 1.0 / q) * h.tau,
        certificate: h.certificate,
        construction: Construction::Hadamard { k },
        cardinality_bound: h.cardinality_bound.map(|b| b * blocks as f64),
        notes: Vec::new(),
        vectors,
    })
}

/// Truncates every vector to its first n₁ coordinates, drops zero prefixes,
/// renormalizes and removes exact duplicates. τ is unchanged.
pub fn cut(h: &HittingSet, n1: usize) -> Result<HittingSet> {
    if n1 == 0 || n1 > h.n {
        return Err(Error::invalid(format!("cannot cut a set over ℝ^{} to ℝ^{n1}", h.n)));
    }
    if !(h.tau > 0.0) {
        return Err(Error::invalid("cutting needs a positive hitting ratio"));
    }
    let vectors = dedup_exact(h.vectors.iter().filter_map(|v| normalize_lp(&v[..n1], h.p)).collect());
    if vectors.is_empty() {
        return Err(Error::invalid("every truncated vector is zero"));
    }
    Ok(HittingSet {
        p: h.p,
        n: n1,
        tau: h.tau,
        certificate: h.certificate,
        construction: Construction::Cut { n: n1 },
        cardinality_bound: h.cardinality_bound,
        notes: Vec::new(),
        vectors,
    })
}

/// (k, m) = (⌊log₂(n/ln n)⌋, ⌈n/2^k⌉) for the Hadamard-lifted construction.
pub fn h2_parameters(n: usize) -> (u32, usize) {
    let r = n as f64 / (n as f64).ln();
    let mut k = 0u32;
    while 2f64.powi(k as i32 + 1) <= r {
        k += 1;
    }
    let m = n.div_ceil(1 << k);
    (k, m)
}

/// Hadamard-lifted level-partition set cut back to ℝⁿ.
/// τ = μ_{α,β}(ln n)^{1/p}/√(2n).
pub fn build_h2(n: usize, p: f64, alpha: f64, beta: f64, cap: usize) -> Result<HittingSet> {
    check_p(p)?;
    check_alpha_beta(alpha, beta)?;
    if !(p >= 2.0) {
        return Err(Error::invalid("Hadamard-lifted construction needs p ≥ 2"));
    }
    if n < 2 {
        return Err(Error::invalid("Hadamard-lifted construction needs n ≥ 2"));
    }
    let (k, m) = h2_parameters(n);
    let mut base = build_hh(m, p, alpha, beta, cap)?;
    if base.tau == 0.0 {
        // Cutting needs τ > 0 only to be meaningful; keep the vectors anyway.
        base.tau = f64::MIN_POSITIVE;
    }
    let lifted = lift_hadamard(&base, k)?;
    let cutted = cut(&lifted, n)?;
    let ln = (n as f64).ln();
    let nu = nu(alpha, beta);
    Ok(HittingSet {
        p,
        n,
        tau: mu(alpha, beta, p) * ln.powf(1.0 / p) / (2.0 * n as f64).sqrt(),
        certificate: Certificate::Deterministic,
        construction: Construction::H2 { alpha, beta },
        cardinality_bound: Some(nu * (n as f64).powf(2.0 * nu.ln() + 1.0) / ln),
        notes: base.notes,
        vectors: cutted.vectors,
    })
}

/// Coordinates with density ∝ e^{−|x|^p} before normalization:
/// |x_i|^p ~ Gamma(1/p, 1) with an independent fair sign. p = ∞ gives
/// uniform coordinates on [−1, 1].
pub fn sample_even_raw<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p.is_infinite() {
        return (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    }
    let gamma = Gamma::new(1.0 / p, 1.0).expect("valid shape");
    (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mag = g.powf(1.0 / p);
            if rng.gen::<bool>() { mag } else { -mag }
        })
        .collect()
}

/// A draw from the even distribution on the ℓp unit sphere.
pub fn sample_even_lp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    loop {
        if let Some(x) = normalize_lp(&sample_even_raw(n, p, rng), p) {
            return x;
        }
    }
}

/// Universal constants of the randomized construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct H3Constants {
    pub delta0: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl Default for H3Constants {
    fn default() -> Self {
        H3Constants { delta0: 1.0, delta2: 0.5, delta3: 20.0 }
    }
}

/// ⌈δ₃ n^{δ₂}((1/2 + 1/q) n ln n + ln(1/ε))⌉.
pub fn h3_size(n: usize, p: f64, eps: f64, c: &H3Constants) -> usize {
    let nf = n as f64;
    let q = conjugate(p);
    (c.delta3 * nf.powf(c.delta2) * ((0.5 + 1.0 / q) * nf * nf.ln() + (1.0 / eps).ln())).ceil() as usize
}

/// √(δ₀ ln n/(2n)), capped at one.
pub fn h3_tau(n: usize, c: &H3Constants) -> f64 {
    let nf = n as f64;
    (c.delta0 * nf.ln() / (2.0 * nf)).sqrt().min(1.0)
}

/// Random hitting set: i.i.d. even samples on the ℓp sphere. With
/// probability at least 1 − ε its ratio is √(δ₀ ln n/(2n)).
pub fn build_h3(n: usize, p: f64, eps: f64, consts: H3Constants, seed: u64, cap: usize) -> Result<HittingSet> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::invalid(format!("randomized construction needs p ∈ [2, ∞), got {p}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("ε must lie in (0, 1), got {eps}")));
    }
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let size = h3_size(n, p, eps, &consts).max(1);
    if size > cap {
        return Err(Error::Budget(format!("randomized set of {size} vectors exceeds cap {cap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..size).map(|_| sample_even_lp(n, p, &mut rng)).collect();
    Ok(HittingSet {
        p,
        n,
        tau: h3_tau(n, &consts),
        certificate: Certificate::Probabilistic { confidence: 1.0 - eps },
        construction: Construction::H3 {
            eps,
            seed,
            delta0: consts.delta0,
            delta2: consts.delta2,
            delta3: consts.delta3,
        },
        cardinality_bound: Some(size as f64),
        notes: Vec::new(),
        vectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Random,
    Adversarial,
}

fn best_hit(h: &HittingSet, x: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in h.vectors.iter().enumerate() {
        let s = dot(v, x);
        if s > best.0 {
            best = (s, i);
        }
    }
    best
}

fn to_q_sphere(x: &[f64], q: f64) -> Option<Vec<f64>> {
    normalize_lp(x, q)
}

/// Subgradient descent of max_v ⟨v, x⟩ over the ℓq sphere from `x`.
fn descend(h: &HittingSet, q: f64, mut x: Vec<f64>) -> f64 {
    let (mut best, _) = best_hit(h, &x);
    let mut step = 0.5;
    for _ in 0..200 {
        let (_, i) = best_hit(h, &x);
        let trial: Vec<f64> = x.iter().zip(&h.vectors[i]).map(|(a, b)| a - step * b).collect();
        match to_q_sphere(&trial, q) {
            Some(y) => {
                let (val, _) = best_hit(h, &y);
                if val < best {
                    best = val;
                    x = y;
                } else {
                    step *= 0.7;
                }
            }
            None => step *= 0.5,
        }
        if step < 1e-9 {
            break;
        }
    }
    best
}

/// min over probes x ∈ 𝕊_qⁿ of max_{v ∈ H} ⟨v, x⟩: an empirical upper bound
/// on the hitting ratio. Adversarial mode adds ±e_i, ±normalized ones, sign
/// patterns and Hölder antipodes of members, and refines the worst probes by
/// subgradient descent.
pub fn probe_hitting_ratio(h: &HittingSet, num_probes: usize, seed: u64, mode: ProbeMode) -> Result<f64> {
    h.validate()?;
    let n = h.n;
    let q = h.q();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<Vec<f64>> = (0..num_probes).map(|_| sample_even_lp(n, q, &mut rng)).collect();
    if mode == ProbeMode::Adversarial {
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = s;
                probes.push(e);
            }
        }
        let ones = vec![1.0; n];
        probes.push(to_q_sphere(&ones, q).unwrap());
        probes.push(to_q_sphere(&ones, q).unwrap().into_iter().map(|c| -c).collect());
        for v in &h.vectors {
            let sign: Vec<f64> = v.iter().map(|&c| if c == 0.0 { 0.0 } else { c.signum() }).collect();
            let anti: Vec<f64> = v.iter().map(|&c| -c.signum() * c.abs().powf(h.p - 1.0)).collect();
            for cand in [sign.clone(), sign.iter().map(|c| -c).collect(), anti] {
                if let Some(x) = to_q_sphere(&cand, q) {
                    probes.push(x);
                }
            }
        }
    }
    let mut scored: Vec<(f64, usize)> = probes
        .par_iter()
        .enumerate()
        .map(|(i, x)| (best_hit(h, x).0, i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut result = scored[0].0;
    if mode == ProbeMode::Adversarial {
        let refined = scored
            .par_iter()
            .take(32)
            .map(|&(_, i)| descend(h, q, probes[i].clone()))
            .reduce(|| f64::INFINITY, f64::min);
        result = result.min(refined);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hh_small_cases() {
        let h = build_hh(2, 3.0, 1.0, 2.0, DEFAULT_CAP).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h.tau, 0.0);
        let c = 2f64.powf(-1.0 / 3.0);
        for v in &h.vectors {
            assert!(v.iter().all(|x| (x.abs() - c).abs() < 1e-15));
        }
        assert!(!h.notes.is_empty());
        let h = build_hh(2, 3.0, 2.0, 3.0, DEFAULT_CAP).unwrap();
        assert!((h.tau - (2.0f64 / 9.0).cbrt() * 0.5).abs() < 1e-15);
        assert!(build_hh(2, 3.0, 0.5, 2.0, DEFAULT_CAP).is_err());
        assert!(build_hh(2, 3.0, 2.0, 2.5, DEFAULT_CAP).is_err());
        assert!(build_hh(30, 3.0, 2.0, 3.0, 1000).is_err());
    }

    #[test]
    fn block_sizes() {
        let a = default_alpha();
        assert_eq!(hh_block_sizes(3, a, a + 1.0), vec![1, 2]);
        assert_eq!(hh_block_sizes(2, 1.0, 2.0), vec![2]);
        assert_eq!(hh_block_sizes(9, 1.0, 3.0), vec![6, 3]);
    }

    #[test]
    fn hb_and_hg_enumeration() {
        let h = build_hb(1, 3.0, 2.0, DEFAULT_CAP).unwrap();
        assert_eq!(h.vectors, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(h.tau, 0.5);
        let g = build_hg(1, 3.0, 2, DEFAULT_CAP).unwrap();
        assert_eq!(g.vectors, vec![vec![-1.0], vec![1.0]]);
        let g = build_hg(2, 3.0, 2, DEFAULT_CAP).unwrap();
        assert!(g.len() as f64 <= 25.0);
    }

    #[test]
    fn h1_h2_parameters() {
        assert_eq!(h2_parameters(8), (1, 4));
        assert_eq!(h2_parameters(3), (1, 2));
        assert_eq!(h2_parameters(5), (1, 3));
        let n = 8usize;
        let n1 = (n as f64).ln().ceil() as usize;
        assert_eq!((n1, n / n1, n - n1 * (n / n1)), (3, 2, 2));
    }

    #[test]
    fn hadamard_basics() {
        let h = ExtendedHadamard::new(1, 1).unwrap();
        assert_eq!(h.apply(&[1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        let h = ExtendedHadamard::new(3, 2).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i * i % 7) as f64 - 3.0).collect();
        let twice = h.apply(&h.apply(&x).unwrap()).unwrap();
        for (a, b) in twice.iter().zip(&x) {
            assert_eq!(*a, 4.0 * b);
        }
        assert!(h.apply(&[1.0]).is_err());
    }

    #[test]
    fn cut_errors() {
        let h = HittingSet { tau: 0.5, ..HittingSet::explicit(3.0, vec![vec![0.0, 0.0, 1.0]]).unwrap() };
        assert!(cut(&h, 2).is_err());
        assert_eq!(cut(&h, 3).unwrap().vectors, h.vectors);
    }

    #[test]
    fn h3_is_reproducible() {
        let a = build_h3(3, 3.0, 0.05, H3Constants::default(), 7, DEFAULT_CAP).unwrap();
        let b = build_h3(3, 3.0, 0.05, H3Constants::default(), 7, DEFAULT_CAP).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), h3_size(3, 3.0, 0.05, &H3Constants::default()));
    }
}
