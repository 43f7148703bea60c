//! Banded symmetric linear algebra.
//!
//! ISI matrices are symmetric with a half-bandwidth `k` much smaller than the
//! block length, so everything here stores only the lower band and runs in
//! `O(n k^2)` (factorization) or `O(n k)` (solves, products).

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FtnError, Result};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
    static SOLVES: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread operation counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub factorizations: u64,
    pub solves: u64,
}

pub fn op_counts() -> OpCounts {
    OpCounts {
        factorizations: FACTORIZATIONS.with(Cell::get),
        solves: SOLVES.with(Cell::get),
    }
}

/// A symmetric linear operator on `R^n`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;

    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Symmetric matrix with half-bandwidth `k`, lower band stored row-major:
/// entry `(i, i - d)` for `d in 0..=k` lives at `band[i * (k + 1) + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetricMatrix {
    n: usize,
    k: usize,
    band: Vec<f64>,
}

impl BandedSymmetricMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        let k = k.min(n.saturating_sub(1));
        Self {
            n,
            k,
            band: vec![0.0; n * (k + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        m.add_to_diagonal(1.0);
        m
    }

    /// Symmetric Toeplitz matrix with first row `taps` (truncated to `n`).
    pub fn from_toeplitz(taps: &[f64], n: usize) -> Self {
        assert!(!taps.is_empty(), "Toeplitz taps must be nonempty");
        let mut m = Self::zeros(n, taps.len() - 1);
        for i in 0..n {
            for d in 0..=m.k.min(i) {
                m.band[i * (m.k + 1) + d] = taps[d];
            }
        }
        m
    }

    /// Builds from a dense symmetric matrix, keeping entries within `k` of the
    /// diagonal. The lower triangle is read.
    pub fn from_dense(a: &[Vec<f64>], k: usize) -> Self {
        let n = a.len();
        let mut m = Self::zeros(n, k);
        for i in 0..n {
            for d in 0..=m.k.min(i) {
                m.band[i * (m.k + 1) + d] = a[i][i - d];
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.k {
            0.0
        } else {
            self.band[hi * (self.k + 1) + d]
        }
    }

    /// Sets `(i, j)` and `(j, i)`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d <= self.k, "entry ({i}, {j}) outside band {}", self.k);
        self.band[hi * (self.k + 1) + d] = v;
    }

    pub fn add_to_diagonal(&mut self, v: f64) {
        let w = self.k + 1;
        for i in 0..self.n {
            self.band[i * w] += v;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            k: self.k,
            band: self.band.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.band.iter().all(|v| v.is_finite())
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.k);
                let hi = (i + self.k).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `x^T A x` using only the stored lower band.
    #[inline]
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let w = self.k + 1;
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            let xi = x[i];
            diag += row[0] * xi * xi;
            let reach = self.k.min(i);
            let mut acc = 0.0;
            for d in 1..=reach {
                acc += row[d] * x[i - d];
            }
            off += acc * xi;
        }
        diag + 2.0 * off
    }

    /// `(x^T A x, y^T A y)` in one pass over the band.
    #[inline]
    pub fn quadratic_form_pair(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        let w = self.k + 1;
        let (mut fx, mut fy) = (0.0, 0.0);
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            let reach = self.k.min(i);
            let (ox, oy) = dot2_rev(&row[1..=reach], &x[i - reach..i], &y[i - reach..i]);
            fx += x[i] * (row[0] * x[i] + 2.0 * ox);
            fy += y[i] * (row[0] * y[i] + 2.0 * oy);
        }
        (fx, fy)
    }

    /// `y += s * A[:, j]`
    #[inline]
    pub fn axpy_column(&self, j: usize, s: f64, y: &mut [f64]) {
        let w = self.k + 1;
        let lo = j.saturating_sub(self.k);
        // rows above j: A[j][r] from row j of the band
        let row = &self.band[j * w..(j + 1) * w];
        for r in lo..j {
            y[r] += s * row[j - r];
        }
        // rows j.. : A[r][j] = band[r * w + (r - j)]
        let hi = (j + self.k).min(self.n - 1);
        for r in j..=hi {
            y[r] += s * self.band[r * w + (r - j)];
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        y
    }
}

impl SymmetricOperator for BandedSymmetricMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        let w = self.k + 1;
        y.fill(0.0);
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = row[0] * x[i];
            for d in 1..=self.k.min(i) {
                acc += row[d] * x[i - d];
                y[i - d] += row[d] * x[i];
            }
            y[i] += acc;
        }
    }
}

/// `A = L D L^T` with `L` unit lower triangular of half-bandwidth `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactor {
    n: usize,
    k: usize,
    /// `lower[i * k + (d - 1)] = L[i][i - d]`, `d in 1..=k`.
    lower: Vec<f64>,
    /// `upper[i * k + (d - 1)] = L[i + d][i]` (columns of `L`, for the backward sweep).
    upper: Vec<f64>,
    /// `forward[i * k + (k - d)] = L[i][i - d]`: rows in increasing column
    /// order, zero padded in front, so the forward sweep is a plain dot product.
    forward: Vec<f64>,
    diag: Vec<f64>,
    inv_diag: Vec<f64>,
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `(sum_j a[j] b[r - 1 - j], sum_j a[j] c[r - 1 - j])` for `r = a.len()`.
#[inline]
fn dot2_rev(a: &[f64], b: &[f64], c: &[f64]) -> (f64, f64) {
    debug_assert!(a.len() == b.len() && a.len() == c.len());
    let mut p = [0.0f64; 4];
    let mut q = [0.0f64; 4];
    let (ca, cb, cc) = (a.chunks_exact(4), b.rchunks_exact(4), c.rchunks_exact(4));
    let (ra, rb, rc) = (ca.remainder(), cb.remainder(), cc.remainder());
    for ((x, y), z) in ca.zip(cb).zip(cc) {
        for l in 0..4 {
            p[l] += x[l] * y[3 - l];
            q[l] += x[l] * z[3 - l];
        }
    }
    let (mut tp, mut tq) = (0.0, 0.0);
    for ((x, y), z) in ra.iter().zip(rb.iter().rev()).zip(rc.iter().rev()) {
        tp += x * y;
        tq += x * z;
    }
    ((p[0] + p[1]) + (p[2] + p[3]) + tp, (q[0] + q[1]) + (q[2] + q[3]) + tq)
}

/// `(a . b, a . c)` with the same summation order as [`dot`].
#[inline]
fn dot2(a: &[f64], b: &[f64], c: &[f64]) -> (f64, f64) {
    let mut p = [0.0f64; 4];
    let mut q = [0.0f64; 4];
    let (ca, cb, cc) = (a.chunks_exact(4), b.chunks_exact(4), c.chunks_exact(4));
    let (ra, rb, rc) = (ca.remainder(), cb.remainder(), cc.remainder());
    for ((x, y), z) in ca.zip(cb).zip(cc) {
        for l in 0..4 {
            p[l] += x[l] * y[l];
            q[l] += x[l] * z[l];
        }
    }
    let (mut tp, mut tq) = (0.0, 0.0);
    for ((x, y), z) in ra.iter().zip(rb).zip(rc) {
        tp += x * y;
        tq += x * z;
    }
    ((p[0] + p[1]) + (p[2] + p[3]) + tp, (q[0] + q[1]) + (q[2] + q[3]) + tq)
}

/// Band-aware `LDL^T` factorization. Fails on the first nonpositive pivot.
pub fn ldl_factorize(a: &BandedSymmetricMatrix) -> Result<LdlFactor> {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    let n = a.n;
    let k = a.k;
    let mut lower = vec![0.0; n * k];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(k);
        for j in lo..i {
            // L[i][j] = (A[i][j] - sum_p L[i][p] L[j][p] D[p]) / D[j]
            let mut s = a.get(i, j);
            let plo = lo.max(j.saturating_sub(k));
            for p in plo..j {
                s -= lower[i * k + (i - p - 1)] * lower[j * k + (j - p - 1)] * diag[p];
            }
            lower[i * k + (i - j - 1)] = s / diag[j];
        }
        let mut d = a.get(i, i);
        for p in lo..i {
            let l = lower[i * k + (i - p - 1)];
            d -= l * l * diag[p];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(FtnError::NotPositiveDefinite { pivot: i, value: d });
        }
        diag[i] = d;
    }
    let mut upper = vec![0.0; n * k];
    let mut forward = vec![0.0; n * k];
    for i in 0..n {
        for d in 1..=k.min(i) {
            upper[(i - d) * k + (d - 1)] = lower[i * k + (d - 1)];
            forward[i * k + (k - d)] = lower[i * k + (d - 1)];
        }
    }
    let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
    Ok(LdlFactor {
        n,
        k,
        lower,
        upper,
        forward,
        diag,
        inv_diag,
    })
}

impl LdlFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `L[i][j]` for `i >= j`.
    pub fn l(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Greater if i - j > self.k => 0.0,
            std::cmp::Ordering::Greater => self.lower[i * self.k + (i - j - 1)],
        }
    }

    /// Solves `A x = c`.
    pub fn solve(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n {
            return Err(FtnError::DimensionMismatch {
                expected: self.n,
                got: c.len(),
            });
        }
        let mut x = c.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// Overwrites `x` (holding the right-hand side) with the solution: one
    /// forward sweep, a diagonal scaling and one backward sweep.
    #[inline]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        SOLVES.with(|c| c.set(c.get() + 1));
        let k = self.k;
        let n = self.n;
        if k == 0 {
            for (xi, d) in x.iter_mut().zip(&self.inv_diag) {
                *xi *= d;
            }
            return;
        }
        for i in 1..n {
            let reach = k.min(i);
            let row = &self.forward[(i + 1) * k - reach..(i + 1) * k];
            x[i] -= dot(row, &x[i - reach..i]);
        }
        for (xi, d) in x.iter_mut().zip(&self.inv_diag) {
            *xi *= d;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let reach = k.min(n - 1 - i);
            let col = &self.upper[i * k..i * k + reach];
            x[i] -= dot(col, &x[i + 1..i + 1 + reach]);
        }
    }

    /// Solves two right-hand sides at once. Same result as two calls to
    /// [`solve_in_place`](Self::solve_in_place); interleaving the sweeps keeps
    /// two independent dependency chains in flight.
    #[inline]
    pub fn solve_pair_in_place(&self, x: &mut [f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        SOLVES.with(|c| c.set(c.get() + 2));
        let k = self.k;
        let n = self.n;
        if k > 0 {
            for i in 1..n {
                let reach = k.min(i);
                let row = &self.forward[(i + 1) * k - reach..(i + 1) * k];
                let (dx, dy) = dot2(row, &x[i - reach..i], &y[i - reach..i]);
                x[i] -= dx;
                y[i] -= dy;
            }
        }
        for ((xi, yi), d) in x.iter_mut().zip(y.iter_mut()).zip(&self.inv_diag) {
            *xi *= d;
            *yi *= d;
        }
        if k > 0 {
            for i in (0..n.saturating_sub(1)).rev() {
                let reach = k.min(n - 1 - i);
                let col = &self.upper[i * k..i * k + reach];
                let (dx, dy) = dot2(col, &x[i + 1..i + 1 + reach], &y[i + 1..i + 1 + reach]);
                x[i] -= dx;
                y[i] -= dy;
            }
        }
    }

    /// Dense `L D L^T`, for verification.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let lo = i.saturating_sub(self.k);
                let s: f64 = (lo..=j).map(|p| self.l(i, p) * self.diag[p] * self.l(j, p)).sum();
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}

/// Lower-triangular banded Cholesky factor, `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLower {
    n: usize,
    k: usize,
    /// `band[i * (k + 1) + d] = L[i][i - d]`
    band: Vec<f64>,
}

/// Banded Cholesky factorization.
pub fn cholesky_lower(a: &BandedSymmetricMatrix) -> Result<BandedLower> {
    let n = a.n;
    let k = a.k;
    let w = k + 1;
    let mut band = vec![0.0; n * w];
    for i in 0..n {
        let lo = i.saturating_sub(k);
        for j in lo..=i {
            let mut s = a.get(i, j);
            let plo = lo.max(j.saturating_sub(k));
            for p in plo..j {
                s -= band[i * w + (i - p)] * band[j * w + (j - p)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(FtnError::NotPositiveDefinite { pivot: i, value: s });
                }
                band[i * w] = s.sqrt();
            } else {
                band[i * w + (i - j)] = s / band[j * w];
            }
        }
    }
    Ok(BandedLower { n, k, band })
}

impl BandedLower {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.k {
            0.0
        } else {
            self.band[i * (self.k + 1) + (i - j)]
        }
    }

    /// `y = L x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let w = self.k + 1;
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = 0.0;
            for d in 0..=self.k.min(i) {
                s += row[d] * x[i - d];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Default iteration cap for [`max_singular_value`].
pub const POWER_MAX_ITERS: usize = 1_000_000;

/// Largest eigenvalue of a symmetric positive semi-definite operator (its
/// largest singular value) by power iteration from a seeded random start.
///
/// Stops once the eigen-residual `||A x - rq x||` falls below `tol * rq`,
/// which puts the Rayleigh quotient within that distance of an eigenvalue.
/// The per-step change of the quotient is useless as a stop rule here: the
/// top of a Toeplitz ISI spectrum is clustered, the quotient creeps, and its
/// increments understate the remaining error by orders of magnitude.
pub fn max_singular_value<A: SymmetricOperator + ?Sized>(a: &A, tol: f64, seed: u64) -> Result<f64> {
    max_singular_value_capped(a, tol, seed, POWER_MAX_ITERS)
}

pub fn max_singular_value_capped<A: SymmetricOperator + ?Sized>(
    a: &A,
    tol: f64,
    seed: u64,
    max_iters: usize,
) -> Result<f64> {
    let n = a.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut y = vec![0.0; n];
    normalize(&mut x);
    let stop = tol.max(1e-14);
    for _ in 0..max_iters {
        a.apply(&x, &mut y);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let residual = x
            .iter()
            .zip(&y)
            .map(|(x, y)| (y - rq * x).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = normalize(&mut y);
        if norm == 0.0 {
            return Ok(0.0);
        }
        std::mem::swap(&mut x, &mut y);
        if residual <= stop * rq.abs() {
            return Ok(rq);
        }
    }
    Err(FtnError::NoConvergence(max_iters))
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

/// Condition-number estimate of a symmetric positive definite banded matrix:
/// power iteration for the largest eigenvalue and inverse iteration (through
/// an `LDL^T` factor) for the smallest. Returns infinity when the matrix is
/// not numerically positive definite.
pub fn condition_estimate(a: &BandedSymmetricMatrix) -> f64 {
    let factor = match ldl_factorize(a) {
        Ok(f) => f,
        Err(_) => return f64::INFINITY,
    };
    let lmax = match max_singular_value_capped(a, 1e-3, 7, 20_000) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    struct Inverse<'a>(&'a LdlFactor);
    impl SymmetricOperator for Inverse<'_> {
        fn dim(&self) -> usize {
            self.0.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            y.copy_from_slice(x);
            self.0.solve_in_place(y);
        }
    }
    match max_singular_value_capped(&Inverse(&factor), 1e-3, 11, 20_000) {
        Ok(inv) if inv > 0.0 && inv.is_finite() => lmax * inv,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_spd_band(n: usize, k: usize, seed: u64) -> BandedSymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedSymmetricMatrix::zeros(n, k);
        for i in 0..n {
            for j in i.saturating_sub(k)..i {
                a.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        // Strict diagonal dominance.
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            a.set(i, i, off + rng.random_range(0.5..2.0));
        }
        a
    }

    fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn ldl_identity() {
        let f = ldl_factorize(&BandedSymmetricMatrix::identity(5)).unwrap();
        assert!(f.diag().iter().all(|&d| d == 1.0));
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(f.l(i, j), 0.0);
            }
        }
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn ldl_two_by_two_by_hand() {
        let a = BandedSymmetricMatrix::from_toeplitz(&[2.0, 1.0], 2);
        let f = ldl_factorize(&a).unwrap();
        assert!((f.diag()[0] - 2.0).abs() < 1e-15);
        assert!((f.diag()[1] - 1.5).abs() < 1e-15);
        assert!((f.l(1, 0) - 0.5).abs() < 1e-15);
        let x = f.solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ldl_reports_pivot() {
        let a = BandedSymmetricMatrix::from_toeplitz(&[1.0, 2.0], 3);
        match ldl_factorize(&a) {
            Err(FtnError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = ldl_factorize(&BandedSymmetricMatrix::identity(3)).unwrap();
        assert_eq!(
            f.solve(&[1.0]),
            Err(FtnError::DimensionMismatch { expected: 3, got: 1 })
        );
    }

    #[test]
    fn ldl_random_reconstruction_and_residual() {
        for (n, k, seed) in [(1, 0, 1), (7, 2, 2), (40, 5, 3), (150, 22, 4), (60, 59, 5)] {
            let a = random_spd_band(n, k, seed);
            let f = ldl_factorize(&a).unwrap();
            let dense = a.to_dense();
            let err = max_abs_diff(&f.reconstruct(), &dense);
            assert!(err <= 1e-9 * a.norm_inf(), "n={n} k={k} err={err}");
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = f.solve(&c).unwrap();
            let ax = a.matvec(&x);
            let res = ax.iter().zip(&c).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let cn = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(res <= 1e-8 * (a.norm_inf() * xn + cn));
        }
    }

    #[test]
    fn paired_quadratic_form_matches_single() {
        for (n, k, seed) in [(1, 0, 9), (5, 4, 10), (150, 22, 11), (40, 7, 12)] {
            let a = random_spd_band(n, k, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (fx, fy) = a.quadratic_form_pair(&x, &y);
            for (f, v) in [(fx, &x), (fy, &y)] {
                let direct: f64 = v.iter().zip(a.matvec(v)).map(|(p, q)| p * q).sum();
                assert!((f - direct).abs() <= 1e-12 * direct.abs().max(1.0));
                assert!((f - a.quadratic_form(v)).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn paired_solve_is_bitwise_two_solves() {
        for (n, k, seed) in [(1, 0, 6), (9, 3, 7), (150, 22, 8)] {
            let f = ldl_factorize(&random_spd_band(n, k, seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (ex, ey) = (f.solve(&x).unwrap(), f.solve(&y).unwrap());
            f.solve_pair_in_place(&mut x, &mut y);
            assert_eq!((x, y), (ex, ey));
        }
    }

    #[test]
    fn cholesky_trivial_cases() {
        let l = cholesky_lower(&BandedSymmetricMatrix::identity(4)).unwrap();
        assert_eq!(l.to_dense(), BandedSymmetricMatrix::identity(4).to_dense());
        let l = cholesky_lower(&BandedSymmetricMatrix::from_toeplitz(&[4.0], 1)).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
    }

    #[test]
    fn cholesky_random_multiply_back() {
        let a = random_spd_band(80, 9, 17);
        let l = cholesky_lower(&a).unwrap();
        let ld = DMatrix::from_fn(80, 80, |i, j| l.get(i, j));
        let rec = &ld * ld.transpose();
        let dense = a.to_dense();
        let mut err = 0.0f64;
        for i in 0..80 {
            for j in 0..80 {
                err = err.max((rec[(i, j)] - dense[i][j]).abs());
            }
        }
        assert!(err <= 1e-9 * a.norm_inf());
    }

    #[test]
    fn power_iteration_trivial() {
        let v = max_singular_value(&BandedSymmetricMatrix::identity(6), 1e-6, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let mut d = BandedSymmetricMatrix::zeros(3, 0);
        d.set(0, 0, 1.0);
        d.set(1, 1, 2.0);
        d.set(2, 2, 5.0);
        let v = max_singular_value(&d, 1e-6, 1).unwrap();
        assert!((v - 5.0).abs() < 5e-6);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        for (n, k, seed) in [(10, 3, 8), (30, 4, 9), (64, 12, 10)] {
            let a = random_spd_band(n, k, seed);
            let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let eig = dense.symmetric_eigen();
            let truth = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            let est = max_singular_value(&a, 1e-6, seed).unwrap();
            assert!(((est - truth) / truth).abs() <= 1e-6, "n={n}: {est} vs {truth}");
        }
    }

    #[test]
    fn power_iteration_clustered_toeplitz() {
        // Raised-cosine taps at 0.8T spacing: the Toeplitz spectrum clusters at the top.
        let taps = [1.0, 0.6, -0.05, -0.15, 0.04, 0.03, -0.01];
        let a = BandedSymmetricMatrix::from_toeplitz(&taps, 150);
        let dense = DMatrix::from_fn(150, 150, |i, j| a.get(i, j));
        let truth = dense
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        let est = max_singular_value(&a, 1e-6, 3).unwrap();
        assert!(((est - truth) / truth).abs() <= 1e-6, "{est} vs {truth}");
    }

    #[test]
    fn power_iteration_cap() {
        let a = random_spd_band(30, 4, 1);
        assert_eq!(
            max_singular_value_capped(&a, 1e-6, 1, 2),
            Err(FtnError::NoConvergence(2))
        );
    }

    #[test]
    fn counters_track_work() {
        let before = op_counts();
        let f = ldl_factorize(&BandedSymmetricMatrix::identity(3)).unwrap();
        for _ in 0..4 {
            f.solve(&[1.0, 1.0, 1.0]).unwrap();
        }
        let after = op_counts();
        assert_eq!(after.factorizations - before.factorizations, 1);
        assert_eq!(after.solves - before.solves, 4);
    }

    #[test]
    fn condition_estimates() {
        let c = condition_estimate(&BandedSymmetricMatrix::identity(10));
        assert!((c - 1.0).abs() < 1e-6);
        let bad = BandedSymmetricMatrix::from_toeplitz(&[1.0, 2.0], 3);
        assert!(condition_estimate(&bad).is_infinite());
    }

    proptest! {
        #[test]
        fn solve_recovers_x(n in 1usize..60, k in 0usize..8, seed in 0u64..1000) {
            let a = random_spd_band(n, k, seed);
            let f = ldl_factorize(&a).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = a.matvec(&x);
            let got = f.solve(&b).unwrap();
            let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            for (g, t) in got.iter().zip(&x) {
                prop_assert!((g - t).abs() <= 1e-7 * xn.max(1.0));
            }
        }

        #[test]
        fn quadratic_form_matches_matvec(n in 1usize..40, k in 0usize..6, seed in 0u64..500) {
            let a = random_spd_band(n, k, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax = a.matvec(&x);
            let direct: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
            prop_assert!((a.quadratic_form(&x) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        }
    }
}
