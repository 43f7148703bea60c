//! Root-raised-cosine pulses and the ISI they produce at FTN sampling rates.
//!
//! The receiver samples the matched-filter output every `tau * T`, so symbol
//! `n` leaks into sample `k` with weight `g((k - n) tau T)` where `g` is the
//! pulse autocorrelation. [`IsiModel`] stores the one-sided taps of `g`
//! truncated to a half-bandwidth `K`, and optionally the causal
//! minimum-phase factor `v` with `v * rev(v) = g` used by the whitened model.

use std::f64::consts::PI;

use crate::error::{FtnError, Result};
use crate::numerics::BandedSymmetricMatrix;

/// Unit-energy root-raised-cosine pulse with roll-off `alpha` and symbol
/// period `period`, evaluated at `t`.
pub fn rrc_value(alpha: f64, period: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FtnError::InvalidParameter(format!(
            "roll-off {alpha} outside [0, 1]"
        )));
    }
    if !(period > 0.0) {
        return Err(FtnError::InvalidParameter(format!(
            "symbol period {period} must be positive"
        )));
    }
    Ok(rrc_unchecked(alpha, period, t))
}

fn rrc_unchecked(alpha: f64, period: f64, t: f64) -> f64 {
    let amp = 1.0 / period.sqrt();
    let x = t / period;
    if x.abs() < 1e-12 {
        return amp * (1.0 - alpha + 4.0 * alpha / PI);
    }
    if alpha == 0.0 {
        return amp * (PI * x).sin() / (PI * x);
    }
    let edge = 4.0 * alpha * x;
    if (edge.abs() - 1.0).abs() < 1e-9 {
        let arg = PI / (4.0 * alpha);
        return amp * alpha / 2f64.sqrt()
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * x * (1.0 - alpha)).sin() + edge * (PI * x * (1.0 + alpha)).cos();
    let den = PI * x * (1.0 - edge * edge);
    amp * num / den
}

/// Settings for computing and truncating the autocorrelation taps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapConfig {
    /// Taps beyond the half-bandwidth are all below this magnitude.
    pub epsilon: f64,
    /// Hard cap on the half-bandwidth.
    pub max_half_bandwidth: usize,
    /// Trapezoidal samples per `tau * T`.
    pub oversampling: usize,
    /// Integration half-span, in symbol periods.
    pub span_periods: f64,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_half_bandwidth: 30,
            oversampling: 64,
            span_periods: 512.0,
        }
    }
}

/// Below this roll-off the time-domain integral converges too slowly (the
/// pulse tail decays like `1/t`), so taps come from the band-limited
/// frequency-domain integral instead.
const SMALL_ROLLOFF: f64 = 0.05;

/// Samples of the pulse autocorrelation `g(k tau T)` for `k = 0..=count-1`,
/// by trapezoidal integration of `p(u) p(u - k tau T)` (with `T = 1`),
/// normalized by the integrated energy so that `g(0) = 1` despite the finite
/// integration span.
pub fn autocorr_samples(alpha: f64, tau: f64, count: usize, cfg: &TapConfig) -> Result<Vec<f64>> {
    validate_alpha_tau(alpha, tau)?;
    if alpha < SMALL_ROLLOFF {
        return Ok((0..count)
            .map(|k| autocorr_frequency_domain(alpha, k as f64 * tau))
            .collect());
    }
    let os = cfg.oversampling.max(1);
    let h = tau / os as f64;
    let half = (cfg.span_periods / h).ceil() as i64;
    let samples: Vec<f64> = (-half..=half)
        .map(|j| rrc_unchecked(alpha, 1.0, j as f64 * h))
        .collect();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let shift = k * os;
        if shift >= samples.len() {
            out.push(0.0);
            continue;
        }
        // The integrand vanishes at the span edges to within the truncation
        // error, so the trapezoidal end corrections are dropped.
        let s: f64 = samples[shift..]
            .iter()
            .zip(&samples[..samples.len() - shift])
            .map(|(a, b)| a * b)
            .sum();
        out.push(s * h);
    }
    let energy = out.first().copied().unwrap_or(1.0);
    if count > 0 {
        for g in out.iter_mut() {
            *g /= energy;
        }
        out[0] = 1.0;
    }
    Ok(out)
}

/// `g(s) = integral of |P(f)|^2 cos(2 pi f s) df` over the occupied band,
/// with the raised-cosine energy spectrum and `T = 1`. Composite
/// Gauss-Legendre on the flat and roll-off segments.
fn autocorr_frequency_domain(alpha: f64, s: f64) -> f64 {
    let f1 = (1.0 - alpha) / 2.0;
    let f2 = (1.0 + alpha) / 2.0;
    let flat = gauss_legendre(0.0, f1, 64, |f| (2.0 * PI * f * s).cos());
    let roll = if alpha > 0.0 {
        gauss_legendre(f1, f2, 64, |f| {
            0.5 * (1.0 + (PI / alpha * (f - f1)).cos()) * (2.0 * PI * f * s).cos()
        })
    } else {
        0.0
    };
    2.0 * (flat + roll)
}

fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    // 8-point rule
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    if b <= a {
        return 0.0;
    }
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in X.iter().zip(&W) {
            total += w * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total * width * 0.5
}

fn validate_alpha_tau(alpha: f64, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FtnError::InvalidParameter(format!(
            "roll-off {alpha} outside [0, 1]"
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(FtnError::InvalidParameter(format!(
            "acceleration {tau} outside (0, 1]"
        )));
    }
    Ok(())
}

/// ISI description for one `(alpha, tau)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IsiModel {
    alpha: f64,
    tau: f64,
    /// One-sided taps `g(0), ..., g(K)`.
    taps: Vec<f64>,
    truncation_epsilon: f64,
    /// True when a tap beyond the capped half-bandwidth still exceeds epsilon.
    truncation_warning: bool,
    /// Diagonal loading added to `g(0)` before factorization (0 if none).
    loading: f64,
    factor: Option<Vec<f64>>,
}

/// Computes the truncated autocorrelation taps for `(alpha, tau)`.
pub fn autocorr_taps(alpha: f64, tau: f64, cfg: &TapConfig) -> Result<IsiModel> {
    let cap = cfg.max_half_bandwidth.max(1);
    let search = 2 * cap + 2;
    let raw = autocorr_samples(alpha, tau, search, cfg)?;
    let last_significant = raw
        .iter()
        .rposition(|g| g.abs() >= cfg.epsilon)
        .unwrap_or(0);
    // Keep one tap past the last significant one so that |g(K)| < epsilon.
    let k = (last_significant + 1).min(cap);
    let truncation_warning = raw[k + 1..].iter().any(|g| g.abs() >= cfg.epsilon);
    Ok(IsiModel {
        alpha,
        tau,
        taps: raw[..=k].to_vec(),
        truncation_epsilon: cfg.epsilon,
        truncation_warning,
        loading: 0.0,
        factor: None,
    })
}

impl IsiModel {
    /// Model with explicitly given one-sided taps.
    pub fn from_taps(alpha: f64, tau: f64, taps: Vec<f64>) -> Result<Self> {
        validate_alpha_tau(alpha, tau)?;
        if taps.is_empty() || taps.iter().any(|g| !g.is_finite()) {
            return Err(FtnError::InvalidParameter(
                "taps must be nonempty and finite".into(),
            ));
        }
        let eps = taps.last().map(|g| g.abs() * 2.0).unwrap_or(0.0).max(f64::MIN_POSITIVE);
        Ok(Self {
            alpha,
            tau,
            taps,
            truncation_epsilon: eps,
            truncation_warning: false,
            loading: 0.0,
            factor: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn half_bandwidth(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn truncation_epsilon(&self) -> f64 {
        self.truncation_epsilon
    }

    pub fn truncation_warning(&self) -> bool {
        self.truncation_warning
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }

    /// Two-sided tap `g(k)`; zero beyond the half-bandwidth.
    pub fn tap(&self, k: isize) -> f64 {
        self.taps.get(k.unsigned_abs()).copied().unwrap_or(0.0)
    }

    pub fn factor(&self) -> Option<&[f64]> {
        self.factor.as_deref()
    }

    /// Folded spectrum `g(0) + 2 sum g(d) cos(d w)` at `w`.
    pub fn folded_spectrum(&self, w: f64) -> f64 {
        folded_spectrum(&self.taps, w)
    }

    /// Minimum of the folded spectrum over a dense grid on `[0, pi]`.
    pub fn min_folded_spectrum(&self) -> f64 {
        min_folded_spectrum(&self.taps)
    }

    /// The `N x N` symmetric Toeplitz ISI matrix `G[i][j] = g(i - j)`.
    pub fn isi_matrix(&self, n: usize) -> Result<BandedSymmetricMatrix> {
        build_isi_matrix(self, n)
    }

    /// Runs spectral factorization and stores the causal factor.
    pub fn factorized(mut self, tol: f64, floor: f64) -> Result<Self> {
        let v = spectral_factorize(&self.taps, tol, floor)?;
        self.factor = Some(v);
        Ok(self)
    }

    /// Adds the smallest diagonal loading that lifts the folded spectrum to
    /// `target_floor`, then factorizes. The loaded taps replace `g`, so the
    /// whitened channel and detector stay consistent with each other.
    pub fn regularized(mut self, target_floor: f64, tol: f64) -> Result<Self> {
        let min = self.min_folded_spectrum();
        let load = (target_floor - min).max(0.0);
        self.taps[0] += load;
        self.loading += load;
        self.factorized(tol, 0.5 * target_floor)
    }
}

pub fn folded_spectrum(taps: &[f64], w: f64) -> f64 {
    taps[0]
        + 2.0
            * taps
                .iter()
                .enumerate()
                .skip(1)
                .map(|(d, g)| g * (d as f64 * w).cos())
                .sum::<f64>()
}

const SPECTRUM_GRID: usize = 4096;

pub fn min_folded_spectrum(taps: &[f64]) -> f64 {
    (0..=SPECTRUM_GRID)
        .map(|i| folded_spectrum(taps, PI * i as f64 / SPECTRUM_GRID as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Builds `G` with `G[i][j] = g(i - j)`, banded with the model's half-bandwidth.
pub fn build_isi_matrix(model: &IsiModel, n: usize) -> Result<BandedSymmetricMatrix> {
    if n == 0 {
        return Err(FtnError::InvalidParameter("block length must be >= 1".into()));
    }
    Ok(BandedSymmetricMatrix::from_toeplitz(&model.taps, n))
}

/// Row cap for the Bauer recursion.
pub const BAUER_MAX_ROWS: usize = 400_000;

/// Minimum-phase causal factor `v` (length `K + 1`) with `v * rev(v) = g`.
///
/// Bauer's method: the rows of the Cholesky factor of ever larger sections
/// of the banded Toeplitz matrix converge to the reversed factor. Rows are
/// produced in streaming fashion, keeping only the last `K` of them.
pub fn spectral_factorize(taps: &[f64], tol: f64, floor: f64) -> Result<Vec<f64>> {
    if taps.is_empty() {
        return Err(FtnError::InvalidParameter("no taps to factorize".into()));
    }
    let min = min_folded_spectrum(taps);
    if min < floor {
        return Err(FtnError::SpectralZeros { min, floor });
    }
    let k = taps.len() - 1;
    if k == 0 {
        return Ok(vec![taps[0].sqrt()]);
    }
    let w = k + 1;
    // ring[r % w] holds row r as L[r][r - d] for d = 0..=k
    let mut ring = vec![0.0; w * w];
    let mut prev = vec![0.0; w];
    let change_tol = tol * 1e-3;
    for n in 0..BAUER_MAX_ROWS {
        let lo = n.saturating_sub(k);
        let mut row = vec![0.0; w];
        for c in lo..n {
            // L[n][c] = (g(n - c) - sum_p L[n][p] L[c][p]) / L[c][c]
            let mut s = taps[n - c];
            let crow = &ring[(c % w) * w..(c % w) * w + w];
            for p in lo.max(c.saturating_sub(k))..c {
                s -= row[n - p] * crow[c - p];
            }
            row[n - c] = s / crow[0];
        }
        let mut d = taps[0];
        for p in lo..n {
            d -= row[n - p] * row[n - p];
        }
        if !(d > 0.0) {
            return Err(FtnError::SpectralZeros { min, floor });
        }
        row[0] = d.sqrt();
        ring[(n % w) * w..(n % w) * w + w].copy_from_slice(&row);
        if n >= 2 * k {
            let change = row
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change < change_tol {
                let err = reconstruction_error(&row, taps);
                if err <= tol {
                    return Ok(row);
                }
                return Err(FtnError::FactorizationDiverged(err));
            }
        }
        prev = row;
    }
    Err(FtnError::FactorizationDiverged(reconstruction_error(&prev, taps)))
}

/// Autocorrelation `sum_j v[j] v[j + d]` of a causal factor, `d = 0..len`.
pub fn factor_autocorr(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|d| v.iter().zip(&v[d..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// `max_d |(v * rev v)(d) - g(d)|` over the taps of `g`.
pub fn reconstruction_error(v: &[f64], taps: &[f64]) -> f64 {
    let ac = factor_autocorr(v);
    (0..taps.len().max(ac.len()))
        .map(|d| (ac.get(d).copied().unwrap_or(0.0) - taps.get(d).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cholesky_lower;

    /// Closed-form raised-cosine pulse (the autocorrelation of the rRC pulse).
    fn raised_cosine(alpha: f64, t: f64) -> f64 {
        let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
        if alpha > 0.0 && ((2.0 * alpha * t).abs() - 1.0).abs() < 1e-12 {
            return PI / 4.0 * {
                let x = 1.0 / (2.0 * alpha);
                (PI * x).sin() / (PI * x)
            };
        }
        sinc * (PI * alpha * t).cos() / (1.0 - (2.0 * alpha * t).powi(2))
    }

    /// Simpson's rule oracle for the pulse energy.
    fn energy(alpha: f64, span: f64, steps: usize) -> f64 {
        let h = 2.0 * span / steps as f64;
        let f = |t: f64| rrc_unchecked(alpha, 1.0, t).powi(2);
        let mut s = f(-span) + f(span);
        for i in 1..steps {
            let t = -span + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0
    }

    #[test]
    fn rrc_unit_energy() {
        let e = energy(0.3, 400.0, 400_000);
        assert!((e - 1.0).abs() < 1e-6, "energy {e}");
        let e = energy(0.5, 400.0, 400_000);
        assert!((e - 1.0).abs() < 1e-6, "energy {e}");
    }

    #[test]
    fn rrc_removable_singularities() {
        let alpha = 0.3;
        let edge = 1.0 / (4.0 * alpha);
        let at = rrc_value(alpha, 1.0, edge).unwrap();
        assert!(at.is_finite());
        for d in [1e-6, 1e-5] {
            let near = rrc_value(alpha, 1.0, edge + d).unwrap();
            assert!((near - at).abs() < 1e-4, "{near} vs {at}");
        }
        let zero = rrc_value(alpha, 1.0, 0.0).unwrap();
        assert!((zero - rrc_value(alpha, 1.0, 1e-7).unwrap()).abs() < 1e-6);
        assert!((zero - (1.0 - alpha + 4.0 * alpha / PI)).abs() < 1e-15);
    }

    #[test]
    fn rrc_alpha_zero_is_sinc() {
        for t in [0.3, 1.7, -2.25] {
            let sinc = (PI * t).sin() / (PI * t);
            assert!((rrc_value(0.0, 1.0, t).unwrap() - sinc).abs() < 1e-15);
        }
        let period = 4.0;
        let v = rrc_value(0.0, period, 2.0).unwrap();
        assert!((v - (PI * 0.5).sin() / (PI * 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rrc_rejects_bad_rolloff() {
        assert!(rrc_value(1.5, 1.0, 0.0).is_err());
        assert!(rrc_value(-0.1, 1.0, 0.0).is_err());
        assert!(rrc_value(0.3, 0.0, 0.0).is_err());
    }

    #[test]
    fn nyquist_rate_taps_are_orthogonal() {
        for alpha in [0.0, 0.1, 0.3, 0.5, 1.0] {
            let g = autocorr_samples(alpha, 1.0, 12, &TapConfig::default()).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-9, "alpha={alpha} g0={}", g[0]);
            for (k, v) in g.iter().enumerate().skip(1) {
                assert!(v.abs() < 1e-6, "alpha={alpha} g({k})={v}");
            }
        }
    }

    #[test]
    fn taps_match_raised_cosine_oracle() {
        for (alpha, tau) in [(0.3, 0.8), (0.5, 0.7), (0.3, 0.85), (1.0, 0.6), (0.0, 0.8), (0.02, 0.9)] {
            let g = autocorr_samples(alpha, tau, 31, &TapConfig::default()).unwrap();
            for (k, v) in g.iter().enumerate() {
                let rc = raised_cosine(alpha, k as f64 * tau);
                assert!((v - rc).abs() < 1e-7, "alpha={alpha} tau={tau} k={k}: {v} vs {rc}");
            }
        }
    }

    #[test]
    fn truncation_rule() {
        let m = autocorr_taps(0.3, 0.8, &TapConfig::default()).unwrap();
        let k = m.half_bandwidth();
        assert!(k <= 30);
        assert!((m.taps()[0] - 1.0).abs() < 1e-9);
        assert!(m.taps()[k].abs() < 1e-4);
        let beyond = autocorr_samples(0.3, 0.8, 90, &TapConfig::default()).unwrap();
        assert!(beyond[k..].iter().all(|g| g.abs() < 1e-4));
        assert!(!m.truncation_warning());
        // alpha = 0 decays like 1/k and hits the cap.
        let sinc = autocorr_taps(0.0, 0.8, &TapConfig::default()).unwrap();
        assert_eq!(sinc.half_bandwidth(), 30);
        assert!(sinc.truncation_warning());
    }

    #[test]
    fn symmetric_two_sided_taps() {
        let m = autocorr_taps(0.5, 0.8, &TapConfig::default()).unwrap();
        for k in 0..40isize {
            assert_eq!(m.tap(k), m.tap(-k));
        }
    }

    #[test]
    fn isi_matrix_examples() {
        let m = IsiModel::from_taps(0.3, 0.8, vec![1.0, 0.4, 0.05]).unwrap();
        let g = m.isi_matrix(3).unwrap();
        assert_eq!(g.to_dense()[0], vec![1.0, 0.4, 0.05]);
        assert_eq!(g.to_dense(), {
            let d = g.to_dense();
            (0..3).map(|i| (0..3).map(|j| d[j][i]).collect()).collect::<Vec<Vec<f64>>>()
        });
        let nyq = autocorr_taps(0.3, 1.0, &TapConfig::default()).unwrap();
        let g = nyq.isi_matrix(20).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - e).abs() < 1e-6);
            }
        }
        assert!(m.isi_matrix(0).is_err());
    }

    #[test]
    fn positive_definite_where_spectrum_is_open() {
        for alpha in [0.3, 0.5] {
            for tau in [0.8, 0.9, 1.0] {
                let m = autocorr_taps(alpha, tau, &TapConfig::default()).unwrap();
                for n in [1, 50, 150, 300] {
                    assert!(cholesky_lower(&m.isi_matrix(n).unwrap()).is_ok(), "{alpha} {tau} {n}");
                }
            }
        }
        let m = autocorr_taps(0.5, 0.7, &TapConfig::default()).unwrap();
        assert!(cholesky_lower(&m.isi_matrix(300).unwrap()).is_ok());
    }

    #[test]
    fn factorize_impulse() {
        let v = spectral_factorize(&[1.0, 0.0], 1e-9, 1e-6).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        let m = autocorr_taps(0.3, 1.0, &TapConfig::default())
            .unwrap()
            .factorized(1e-6, 1e-4)
            .unwrap();
        let v = m.factor().unwrap();
        assert!((v[0] - 1.0).abs() < 1e-6);
        assert!(v[1..].iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn factorize_two_taps_by_hand() {
        let v = spectral_factorize(&[1.25, 0.5], 1e-10, 1e-6).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 0.5).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn factorize_rrc_models() {
        for (alpha, tau) in [(0.3, 0.8), (0.5, 0.7), (0.3, 0.85), (0.5, 0.8)] {
            let m = autocorr_taps(alpha, tau, &TapConfig::default())
                .unwrap()
                .factorized(1e-6, 1e-4)
                .unwrap();
            let err = reconstruction_error(m.factor().unwrap(), m.taps());
            assert!(err <= 1e-6, "{alpha} {tau}: {err}");
        }
    }

    #[test]
    fn spectral_zeros_reported_and_regularized() {
        // Folded spectrum of the truncated taps dips below zero here.
        let m = autocorr_taps(0.3, 0.7, &TapConfig::default()).unwrap();
        assert!(m.min_folded_spectrum() < 0.0);
        assert!(matches!(
            m.clone().factorized(1e-6, 1e-4),
            Err(FtnError::SpectralZeros { .. })
        ));
        let r = m.clone().regularized(1e-3, 1e-6).unwrap();
        assert!(r.loading() > 0.0 && r.loading() < 2e-3);
        let err = reconstruction_error(r.factor().unwrap(), r.taps());
        assert!(err <= 1e-6, "{err}");
        assert!(reconstruction_error(r.factor().unwrap(), m.taps()) <= r.loading() + 1e-6);
    }
}
