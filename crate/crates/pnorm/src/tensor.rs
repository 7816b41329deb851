//! Dense real tensors and the multilinear algebra used by the norm algorithms.
//!
//! Storage is row-major: the last index varies fastest. Modes are zero-based
//! throughout the library API.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order-d real tensor with row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;
    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.shape, raw.data)
    }
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::shape("tensor order must be at least 1"));
        }
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero dimension in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        DenseTensor::new(shape, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = DenseTensor::zeros(shape)?;
        let mut idx = vec![0usize; t.order()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            advance(&mut idx, &t.shape);
        }
        Ok(t)
    }

    pub fn from_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        DenseTensor::new(vec![rows, cols], data)
    }

    pub fn from_vector(v: Vec<f64>) -> Result<Self> {
        DenseTensor::new(vec![v.len()], v)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        for (k, &i) in idx.iter().enumerate() {
            off = off * self.shape[k] + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "inner product of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn scale(&self, c: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// Adds `c * other` in place.
    pub fn axpy(&mut self, c: f64, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("axpy shape mismatch"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// Entry (i, j) of an order-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.order(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Reorders modes: mode k of the result is mode `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<DenseTensor> {
        check_permutation(perm, self.order())?;
        let shape: Vec<usize> = perm.iter().map(|&k| self.shape[k]).collect();
        let mut src = vec![0usize; self.order()];
        DenseTensor::from_fn(shape, |idx| {
            for (k, &m) in perm.iter().enumerate() {
                src[m] = idx[k];
            }
            self.get(&src)
        })
    }

    /// Serializes as little-endian: u64 order, u64 dims, then f64 entries.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.order() as u64).to_le_bytes())?;
        for &n in &self.shape {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<DenseTensor> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let order = u64::from_le_bytes(buf) as usize;
        if order == 0 || order > 64 {
            return Err(Error::invalid(format!("implausible tensor order {order}")));
        }
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            r.read_exact(&mut buf)?;
            shape.push(u64::from_le_bytes(buf) as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::invalid("tensor size overflows"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        DenseTensor::new(shape, data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<DenseTensor> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Increments a row-major multi-index; wraps to zero after the last entry.
pub(crate) fn advance(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_permutation(perm: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if perm.len() != d {
        return Err(Error::invalid(format!("permutation {perm:?} of {d} modes")));
    }
    for &k in perm {
        if k >= d || seen[k] {
            return Err(Error::invalid(format!("not a permutation: {perm:?}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Hölder exponent p given as a reduced fraction b/a, so that 1/p = a/b.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalExponent {
    pub a: u64,
    pub b: u64,
}

impl RationalExponent {
    /// p = num/den, reduced.
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::invalid("exponent must be a positive fraction"));
        }
        let g = gcd(num, den);
        Ok(RationalExponent { a: den / g, b: num / g })
    }

    pub fn integer(p: u64) -> Result<Self> {
        RationalExponent::new(p, 1)
    }

    /// Parses "b/a", an integer, or a decimal whose exact fraction has a
    /// denominator of at most 64 (or is within 1e-9 of such a fraction).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: u64 = num
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad numerator in exponent {s:?}")))?;
            let den: u64 = den
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad denominator in exponent {s:?}")))?;
            return RationalExponent::new(num, den);
        }
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        let digits_ok = |t: &str| t.chars().all(|c| c.is_ascii_digit());
        if int_part.is_empty() && frac_part.is_empty()
            || !digits_ok(int_part)
            || !digits_ok(frac_part)
        {
            return Err(Error::invalid(format!("cannot parse exponent {s:?}")));
        }
        if frac_part.len() > 18 || int_part.len() > 18 {
            return Err(Error::invalid(format!("exponent {s:?} has too many digits")));
        }
        let den = 10u128.pow(frac_part.len() as u32);
        let whole: u128 = if int_part.is_empty() { 0 } else { int_part.parse().unwrap() };
        let frac: u128 = if frac_part.is_empty() { 0 } else { frac_part.parse().unwrap() };
        let num = whole * den + frac;
        if num == 0 {
            return Err(Error::invalid("exponent must be positive"));
        }
        let g = gcd128(num, den);
        let (num, den) = (num / g, den / g);
        if den <= 64 {
            return RationalExponent::new(num as u64, den as u64);
        }
        let value = num as f64 / den as f64;
        for d in 2..=64u64 {
            let n = (value * d as f64).round();
            if n >= 1.0 && (n / d as f64 - value).abs() < 1e-9 {
                return RationalExponent::new(n as u64, d);
            }
        }
        Err(Error::invalid(format!(
            "exponent {s:?} is not recognizably rational; write it as b/a"
        )))
    }

    pub fn value(&self) -> f64 {
        self.b as f64 / self.a as f64
    }

    /// Hölder conjugate q with 1/p + 1/q = 1.
    pub fn conjugate(&self) -> f64 {
        conjugate(self.value())
    }

    /// Enforces p > 2, the range of the conic machinery.
    pub fn require_above_two(&self) -> Result<()> {
        if self.b > 2 * self.a {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "p must exceed 2 and be rational (got {self})"
            )))
        }
    }
}

impl std::fmt::Display for RationalExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.a == 1 {
            write!(f, "{}", self.b)
        } else {
            write!(f, "{}/{}", self.b, self.a)
        }
    }
}

impl std::str::FromStr for RationalExponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RationalExponent::parse(s)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn gcd128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Hölder conjugate of p; 1 ↔ ∞.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Split of the modes into row and column groups (zero-based, ordered).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePartition {
    pub row_modes: Vec<usize>,
    pub col_modes: Vec<usize>,
}

impl ModePartition {
    pub fn new(row_modes: Vec<usize>, col_modes: Vec<usize>) -> Self {
        ModePartition { row_modes, col_modes }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.row_modes.is_empty() || self.col_modes.is_empty() {
            return Err(Error::invalid("both sides of a mode partition must be nonempty"));
        }
        let mut seen = vec![false; d];
        for &k in self.row_modes.iter().chain(&self.col_modes) {
            if k >= d {
                return Err(Error::invalid(format!("mode {k} out of range for order {d}")));
            }
            if seen[k] {
                return Err(Error::invalid(format!("mode {k} appears twice in partition")));
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("mode partition does not cover every mode"));
        }
        Ok(())
    }
}

/// ℓp norm; p = ∞ gives the max-abs entry.
pub fn lp_norm(x: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("norm of an empty vector"));
    }
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("ℓp norm needs p ≥ 1, got {p}")));
    }
    Ok(lp_norm_unchecked(x, p))
}

/// ℓp norm (p = ∞ allowed) without argument checks.
pub fn lp_norm_unchecked(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    // Scale by the max entry to avoid overflow in |x|^p.
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Returns x / ‖x‖_p, or None for the zero vector.
pub fn normalize_lp(x: &[f64], p: f64) -> Option<Vec<f64>> {
    let n = lp_norm_unchecked(x, p);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(x.iter().map(|v| v / n).collect())
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Contracts mode k with x; the result has order d − 1 (a scalar is returned
/// as an order-1 tensor of length 1 when d = 1).
pub fn mode_product(t: &DenseTensor, k: usize, x: &[f64]) -> Result<DenseTensor> {
    let d = t.order();
    if k >= d {
        return Err(Error::shape(format!("mode {k} out of range for order {d}")));
    }
    if x.len() != t.shape[k] {
        return Err(Error::shape(format!(
            "mode {k} has dimension {}, vector has length {}",
            t.shape[k],
            x.len()
        )));
    }
    let outer: usize = t.shape[..k].iter().product();
    let inner: usize = t.shape[k + 1..].iter().product();
    let nk = t.shape[k];
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let src = &t.data[(o * nk + i) * inner..(o * nk + i + 1) * inner];
            for (a, b) in dst.iter_mut().zip(src) {
                *a += xi * b;
            }
        }
    }
    let mut shape: Vec<usize> = t.shape.clone();
    shape.remove(k);
    if shape.is_empty() {
        shape.push(1);
    }
    DenseTensor::new(shape, out)
}

/// Contracts every mode listed in `modes` (each with its vector) at once.
/// Remaining modes keep their relative order.
pub fn contract_modes(t: &DenseTensor, modes: &[usize], xs: &[&[f64]]) -> Result<DenseTensor> {
    if modes.len() != xs.len() {
        return Err(Error::invalid("one vector per contracted mode"));
    }
    let mut order: Vec<(usize, &[f64])> = modes.iter().copied().zip(xs.iter().copied()).collect();
    order.sort_by_key(|e| std::cmp::Reverse(e.0));
    for w in order.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::invalid(format!("mode {} contracted twice", w[0].0)));
        }
    }
    if order.len() >= t.order() {
        return Err(Error::invalid("contract_modes must leave at least one mode"));
    }
    let mut cur = t.clone();
    // Highest mode first so lower mode numbers stay valid.
    for (k, x) in order {
        cur = mode_product(&cur, k, x)?;
    }
    Ok(cur)
}

/// ⟨T, x₁ ⊗ … ⊗ x_d⟩.
pub fn multilinear_form(t: &DenseTensor, xs: &[&[f64]]) -> Result<f64> {
    if xs.len() != t.order() {
        return Err(Error::shape(format!(
            "order-{} tensor needs {} vectors, got {}",
            t.order(),
            t.order(),
            xs.len()
        )));
    }
    let mut cur = t.clone();
    for k in (0..xs.len()).rev() {
        cur = mode_product(&cur, k, xs[k])?;
    }
    Ok(cur.data[0])
}

/// Gradient of the multilinear form with respect to mode k:
/// T contracted with every xs[j], j ≠ k.
pub fn partial_contraction(t: &DenseTensor, xs: &[&[f64]], k: usize) -> Result<Vec<f64>> {
    let mut cur = t.clone();
    for j in (0..xs.len()).rev() {
        if j != k {
            cur = mode_product(&cur, j, xs[j])?;
        }
    }
    Ok(cur.data)
}

/// Matricization: row index enumerates `row_modes` row-major, column index
/// enumerates `col_modes` row-major. Returned as an order-2 tensor.
pub fn unfold(t: &DenseTensor, part: &ModePartition) -> Result<DenseTensor> {
    part.validate(t.order())?;
    let mut perm = part.row_modes.clone();
    perm.extend(&part.col_modes);
    let p = t.permute(&perm)?;
    let rows: usize = part.row_modes.iter().map(|&k| t.shape[k]).product();
    let cols: usize = part.col_modes.iter().map(|&k| t.shape[k]).product();
    DenseTensor::from_matrix(rows, cols, p.data)
}

/// All n_i × n_j matrices obtained by fixing every index except modes i and j,
/// ordered row-major over the fixed indices.
pub fn slice_partition(t: &DenseTensor, i: usize, j: usize) -> Result<Vec<DenseTensor>> {
    let d = t.order();
    if i == j {
        return Err(Error::invalid("slice modes must differ"));
    }
    if i >= d || j >= d {
        return Err(Error::shape("slice mode out of range"));
    }
    let fixed: Vec<usize> = (0..d).filter(|&k| k != i && k != j).collect();
    let mut perm = fixed.clone();
    perm.push(i);
    perm.push(j);
    let p = t.permute(&perm)?;
    let block = t.shape[i] * t.shape[j];
    Ok(p
        .data
        .chunks(block)
        .map(|c| DenseTensor::from_matrix(t.shape[i], t.shape[j], c.to_vec()).unwrap())
        .collect())
}

/// x ⊗ y as an order-2 tensor.
pub fn outer(x: &[f64], y: &[f64]) -> DenseTensor {
    let data = x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect();
    DenseTensor::from_matrix(x.len(), y.len(), data).expect("nonempty factors")
}

/// x₁ ⊗ x₂ ⊗ … ⊗ x_d.
pub fn outer_many(xs: &[&[f64]]) -> Result<DenseTensor> {
    let shape: Vec<usize> = xs.iter().map(|x| x.len()).collect();
    DenseTensor::from_fn(shape, |idx| idx.iter().zip(xs).map(|(&i, x)| x[i]).product())
}

/// Kronecker product: (x₁y, x₂y, …).
pub fn kron(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
}

/// Concatenation x ∨ y.
pub fn append(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.extend_from_slice(y);
    v
}

/// Elementwise Kronecker over the Cartesian product of two vector sets.
pub fn kron_sets(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    dedup_exact(xs.iter().flat_map(|x| ys.iter().map(move |y| kron(x, y))).collect())
}

/// Elementwise append over the Cartesian product of two vector sets.
pub fn append_sets(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    dedup_exact(xs.iter().flat_map(|x| ys.iter().map(move |y| append(x, y))).collect())
}

/// Removes bitwise-identical vectors, keeping first occurrences in order.
pub fn dedup_exact(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = std::collections::HashSet::new();
    vs.into_iter()
        .filter(|v| {
            let key: Vec<u64> = v.iter().map(|x| (x + 0.0).to_bits()).collect();
            seen.insert(key)
        })
        .collect()
}
