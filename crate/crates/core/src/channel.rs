//! Discrete-equivalent FTN channel at the symbol-rate sampler.
//!
//! Two observation models are produced:
//!
//! * correlated: `y = sqrt(tau Es) G a + w` with `w ~ CN(0, sigma2 G)`, reduced
//!   to `z = G~^-1 y~` by banded solves;
//! * whitened: `y = sqrt(tau Es) V a + w` with `V` the lower-triangular
//!   Toeplitz matrix of the causal factor and `w` white with variance `sigma2`.
//!
//! Noise is drawn directly from these statistics; nothing is simulated in
//! continuous time. Blocks are independent (no inter-block ISI).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FtnError, Result};
use crate::numerics::{
    cholesky_lower, condition_estimate, ldl_factorize, BandedLower, BandedSymmetricMatrix,
    LdlFactor,
};
use crate::pulse::IsiModel;

/// Condition numbers above this refuse the correlated path.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Correlated,
    Whitened,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Correlated => "correlated",
            ModelKind::Whitened => "whitened",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = FtnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated" => Ok(ModelKind::Correlated),
            "whitened" => Ok(ModelKind::Whitened),
            other => Err(FtnError::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub tau: f64,
    pub alpha: f64,
    /// Symbol energy.
    pub es: f64,
    /// Complex noise variance per sample.
    pub sigma2: f64,
    /// Block length in symbols.
    pub n: usize,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(FtnError::InvalidParameter(format!("tau {} outside (0, 1]", self.tau)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(FtnError::InvalidParameter(format!("sigma2 {} must be positive", self.sigma2)));
        }
        if !(self.es > 0.0) {
            return Err(FtnError::InvalidParameter(format!("Es {} must be positive", self.es)));
        }
        if self.n == 0 {
            return Err(FtnError::InvalidParameter("block length must be >= 1".into()));
        }
        Ok(())
    }

    /// Received amplitude `sqrt(tau Es)`.
    pub fn amplitude(&self) -> f64 {
        (self.tau * self.es).sqrt()
    }
}

/// One received block in the real stacked form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    pub kind: ModelKind,
    /// `z` (correlated) or `y~_uncorr` (whitened), length `2N`.
    pub observation: Vec<f64>,
    /// Transmitted symbols; used only by the harness for error counting.
    pub truth_symbols: Vec<Complex64>,
    /// `sqrt(tau Es)` the symbols were scaled by.
    pub amplitude: f64,
    /// Complex noise variance.
    pub sigma2: f64,
}

/// `[Re(x); Im(x)]`
pub fn stack_real(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|c| c.re).chain(x.iter().map(|c| c.im)).collect()
}

/// Inverse of [`stack_real`].
pub fn unstack_real(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.len() % 2 != 0 {
        return Err(FtnError::DimensionMismatch {
            expected: x.len() + 1,
            got: x.len(),
        });
    }
    let n = x.len() / 2;
    Ok((0..n).map(|i| Complex64::new(x[i], x[n + i])).collect())
}

/// Noise variance `N0` for a given `Eb/N0` in dB, with `Eb = tau Es / log2 M`.
pub fn ebn0_to_sigma2(ebn0_db: f64, tau: f64, es: f64, order: usize) -> f64 {
    let bits = (order as f64).log2();
    let eb = tau * es / bits;
    eb / 10f64.powf(ebn0_db / 10.0)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * std;
    }
}

/// Cached matrices for the correlated model at one `(N, tau, alpha)`.
#[derive(Debug, Clone)]
pub struct CorrelatedChannel {
    g: BandedSymmetricMatrix,
    chol: BandedLower,
    ldl: LdlFactor,
    condition: f64,
}

impl CorrelatedChannel {
    /// Refuses ISI matrices whose condition estimate exceeds [`MAX_CONDITION`].
    pub fn new(model: &IsiModel, n: usize) -> Result<Self> {
        let g = model.isi_matrix(n)?;
        let condition = condition_estimate(&g);
        if !(condition <= MAX_CONDITION) {
            return Err(FtnError::IllConditioned(condition));
        }
        let chol = cholesky_lower(&g).map_err(|_| FtnError::IllConditioned(f64::INFINITY))?;
        let ldl = ldl_factorize(&g).map_err(|_| FtnError::IllConditioned(f64::INFINITY))?;
        Ok(Self {
            g,
            chol,
            ldl,
            condition,
        })
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn isi_matrix(&self) -> &BandedSymmetricMatrix {
        &self.g
    }

    pub fn ldl(&self) -> &LdlFactor {
        &self.ldl
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Matched-filter noise `w ~ CN(0, sigma2 G)` in stacked form.
    pub fn sample_noise<R: Rng + ?Sized>(&self, sigma2: f64, rng: &mut R) -> Vec<f64> {
        let n = self.n();
        let mut white = vec![0.0; 2 * n];
        complex_normal(rng, (0.5 * sigma2).sqrt(), &mut white);
        let mut out = vec![0.0; 2 * n];
        let (wr, wi) = white.split_at(n);
        let (or, oi) = out.split_at_mut(n);
        self.chol.mul_vec(wr, or);
        self.chol.mul_vec(wi, oi);
        out
    }

    /// Matched-filter samples `y~ = sqrt(tau Es) G~ a~ + w~` (before reduction).
    pub fn matched_filter_output<R: Rng + ?Sized>(
        &self,
        symbols: &[Complex64],
        amplitude: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let n = self.n();
        if symbols.len() != n {
            return Err(FtnError::DimensionMismatch {
                expected: n,
                got: symbols.len(),
            });
        }
        let a = stack_real(symbols);
        let mut y = vec![0.0; 2 * n];
        {
            let (yr, yi) = y.split_at_mut(n);
            crate::numerics::SymmetricOperator::apply(&self.g, &a[..n], yr);
            crate::numerics::SymmetricOperator::apply(&self.g, &a[n..], yi);
        }
        let noise = if sigma2 > 0.0 {
            self.sample_noise(sigma2, rng)
        } else {
            vec![0.0; 2 * n]
        };
        for (v, w) in y.iter_mut().zip(&noise) {
            *v = amplitude * *v + w;
        }
        Ok(y)
    }

    /// Transmits one block and reduces it to `z = G~^-1 y~`.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        symbols: &[Complex64],
        amplitude: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<ReceivedBlock> {
        let n = self.n();
        let mut z = self.matched_filter_output(symbols, amplitude, sigma2, rng)?;
        let (zr, zi) = z.split_at_mut(n);
        self.ldl.solve_in_place(zr);
        self.ldl.solve_in_place(zi);
        Ok(ReceivedBlock {
            kind: ModelKind::Correlated,
            observation: z,
            truth_symbols: symbols.to_vec(),
            amplitude,
            sigma2,
        })
    }
}

/// Correlated-model transmission seeded from the config.
pub fn transmit_correlated(
    symbols: &[Complex64],
    cfg: &ChannelConfig,
    channel: &CorrelatedChannel,
) -> Result<ReceivedBlock> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    channel.transmit(symbols, cfg.amplitude(), cfg.sigma2, &mut rng)
}

/// Lower-triangular Toeplitz convolution by the causal factor `v`.
#[derive(Debug, Clone)]
pub struct WhitenedChannel {
    n: usize,
    v: Vec<f64>,
}

impl WhitenedChannel {
    pub fn new(model: &IsiModel, n: usize) -> Result<Self> {
        let v = model.factor().ok_or(FtnError::MissingFactor)?;
        if n == 0 {
            return Err(FtnError::InvalidParameter("block length must be >= 1".into()));
        }
        Ok(Self { n, v: v.to_vec() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.v
    }

    /// `y = V x` (causal convolution truncated to the block).
    pub fn convolve(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let reach = (self.v.len() - 1).min(i);
            let mut s = 0.0;
            for j in 0..=reach {
                s += self.v[j] * x[i - j];
            }
            y[i] = s;
        }
    }

    /// `y = V^T x`
    pub fn convolve_transpose(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let reach = (self.v.len() - 1).min(self.n - 1 - i);
            let mut s = 0.0;
            for j in 0..=reach {
                s += self.v[j] * x[i + j];
            }
            y[i] = s;
        }
    }

    /// Dense `V`, for verification.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| if i >= j { self.v.get(i - j).copied().unwrap_or(0.0) } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// `H = V^T V`, banded with half-bandwidth `len(v) - 1`.
    pub fn gram(&self) -> BandedSymmetricMatrix {
        let k = self.v.len() - 1;
        let mut h = BandedSymmetricMatrix::zeros(self.n, k);
        let k = h.bandwidth();
        for i in 0..self.n {
            for j in i.saturating_sub(k)..=i {
                // sum over rows r >= i of V[r][i] V[r][j]
                let mut s = 0.0;
                for r in i..self.n {
                    let (a, b) = (r - i, r - j);
                    if b >= self.v.len() {
                        break;
                    }
                    s += self.v[a] * self.v[b];
                }
                h.set(i, j, s);
            }
        }
        h
    }

    pub fn transmit<R: Rng + ?Sized>(
        &self,
        symbols: &[Complex64],
        amplitude: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<ReceivedBlock> {
        let n = self.n;
        if symbols.len() != n {
            return Err(FtnError::DimensionMismatch {
                expected: n,
                got: symbols.len(),
            });
        }
        let a = stack_real(symbols);
        let mut y = vec![0.0; 2 * n];
        {
            let (yr, yi) = y.split_at_mut(n);
            self.convolve(&a[..n], yr);
            self.convolve(&a[n..], yi);
        }
        let mut noise = vec![0.0; 2 * n];
        if sigma2 > 0.0 {
            complex_normal(rng, (0.5 * sigma2).sqrt(), &mut noise);
        }
        for (v, w) in y.iter_mut().zip(&noise) {
            *v = amplitude * *v + w;
        }
        Ok(ReceivedBlock {
            kind: ModelKind::Whitened,
            observation: y,
            truth_symbols: symbols.to_vec(),
            amplitude,
            sigma2,
        })
    }
}

/// Whitened-model transmission seeded from the config.
pub fn transmit_whitened(
    symbols: &[Complex64],
    cfg: &ChannelConfig,
    model: &IsiModel,
) -> Result<ReceivedBlock> {
    cfg.validate()?;
    let channel = WhitenedChannel::new(model, cfg.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    channel.transmit(symbols, cfg.amplitude(), cfg.sigma2, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Constellation;
    use crate::pulse::{autocorr_taps, TapConfig};

    fn random_symbols(c: &Constellation, n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| c.point(rng.random_range(0..c.order() as u32)))
            .collect()
    }

    #[test]
    fn stacking_round_trip() {
        let x = vec![Complex64::new(1.0, -2.0), Complex64::new(3.5, 0.25)];
        let s = stack_real(&x);
        assert_eq!(s, vec![1.0, 3.5, -2.0, 0.25]);
        assert_eq!(unstack_real(&s).unwrap(), x);
        let real = vec![Complex64::new(1.0, 0.0), Complex64::new(-4.0, 0.0)];
        assert!(stack_real(&real)[2..].iter().all(|v| *v == 0.0));
        assert!(unstack_real(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ebn0_convention() {
        assert!((ebn0_to_sigma2(0.0, 1.0, 1.0, 4) - 0.5).abs() < 1e-15);
        let a = ebn0_to_sigma2(6.0, 0.8, 1.0, 16);
        let b = ebn0_to_sigma2(6.0, 0.8, 0.5, 16);
        assert!((a - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn noiseless_nyquist_identity() {
        let model = autocorr_taps(0.3, 1.0, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, 32).unwrap();
        let c = Constellation::new(16).unwrap();
        let a = random_symbols(&c, 32, 5);
        let cfg = ChannelConfig {
            tau: 1.0,
            alpha: 0.3,
            es: 2.0,
            sigma2: 1e-300,
            n: 32,
            seed: 1,
        };
        let block = transmit_correlated(&a, &cfg, &ch).unwrap();
        let expect = stack_real(&a);
        for (z, e) in block.observation.iter().zip(&expect) {
            assert!((z - 2f64.sqrt() * e).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_ftn_reduction_recovers_symbols() {
        let model = autocorr_taps(0.3, 0.9, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, 150).unwrap();
        let c = Constellation::new(64).unwrap();
        let a = random_symbols(&c, 150, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = ch.transmit(&a, 1.0, 0.0, &mut rng).unwrap();
        let decided = c.project(&block.observation).unwrap();
        assert_eq!(decided, stack_real(&a));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, 20).unwrap();
        let c = Constellation::new(4).unwrap();
        let a = random_symbols(&c, 20, 1);
        let cfg = ChannelConfig {
            tau: 0.8,
            alpha: 0.3,
            es: 1.0,
            sigma2: 0.3,
            n: 20,
            seed: 42,
        };
        let b1 = transmit_correlated(&a, &cfg, &ch).unwrap();
        let b2 = transmit_correlated(&a, &cfg, &ch).unwrap();
        assert_eq!(b1, b2);
        let b3 = transmit_correlated(&a, &ChannelConfig { seed: 43, ..cfg }, &ch).unwrap();
        assert_ne!(b1.observation, b3.observation);
    }

    #[test]
    fn ill_conditioned_refused() {
        let model = autocorr_taps(0.3, 0.7, &TapConfig::default()).unwrap();
        assert!(matches!(
            CorrelatedChannel::new(&model, 150),
            Err(FtnError::IllConditioned(_))
        ));
    }

    #[test]
    fn dimension_checked() {
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ch.transmit(&[Complex64::new(1.0, 0.0)], 1.0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn matched_filter_noise_covariance() {
        let n = 8;
        let sigma2 = 0.7;
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, n).unwrap();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut cov = vec![vec![0.0; n]; n];
        for _ in 0..draws {
            let w = ch.sample_noise(sigma2, &mut rng);
            // complex covariance E[w w^H] = E[re re^T] + E[im im^T]
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += w[i] * w[j] + w[n + i] * w[n + j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let est = cov[i][j] / draws as f64;
                let truth = sigma2 * model.tap(i as isize - j as isize);
                if truth.abs() >= 0.1 * sigma2 {
                    assert!(((est - truth) / truth).abs() < 0.05, "({i},{j}) {est} vs {truth}");
                } else {
                    assert!((est - truth).abs() < 0.02 * sigma2, "({i},{j}) {est} vs {truth}");
                }
            }
        }
    }

    #[test]
    fn reduced_noise_covariance_is_half_sigma2_ginv() {
        let n = 6;
        let sigma2 = 0.4;
        let model = autocorr_taps(0.5, 0.8, &TapConfig::default()).unwrap();
        let ch = CorrelatedChannel::new(&model, n).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 100_000;
        let mut cov = vec![vec![0.0; n]; n];
        for _ in 0..draws {
            let z = ch.transmit(&zero, 1.0, sigma2, &mut rng).unwrap().observation;
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += z[i] * z[j];
                }
            }
        }
        let g = nalgebra::DMatrix::from_fn(n, n, |i, j| ch.isi_matrix().get(i, j));
        let ginv = g.try_inverse().unwrap();
        for i in 0..n {
            let est = cov[i][i] / draws as f64;
            let truth = 0.5 * sigma2 * ginv[(i, i)];
            assert!(((est - truth) / truth).abs() < 0.05, "{i}: {est} vs {truth}");
        }
    }

    #[test]
    fn whitened_impulse_noiseless() {
        let model = IsiModel::from_taps(0.3, 1.0, vec![1.0]).unwrap().factorized(1e-9, 1e-6).unwrap();
        let c = Constellation::new(4).unwrap();
        let a = random_symbols(&c, 10, 3);
        let cfg = ChannelConfig {
            tau: 1.0,
            alpha: 0.3,
            es: 4.0,
            sigma2: 1e-300,
            n: 10,
            seed: 0,
        };
        let block = transmit_whitened(&a, &cfg, &model).unwrap();
        for (y, s) in block.observation.iter().zip(stack_real(&a)) {
            assert!((y - 2.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn whitened_requires_factor() {
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default()).unwrap();
        assert_eq!(WhitenedChannel::new(&model, 10).unwrap_err(), FtnError::MissingFactor);
    }

    #[test]
    fn whitened_noise_is_white() {
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default())
            .unwrap()
            .factorized(1e-6, 1e-4)
            .unwrap();
        let n = 1000;
        let ch = WhitenedChannel::new(&model, n).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut samples = Vec::new();
        for _ in 0..50 {
            let y = ch.transmit(&zero, 1.0, 2.0, &mut rng).unwrap().observation;
            samples.extend_from_slice(&y[..n]);
        }
        let var: f64 = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
        for lag in 1..=5 {
            let r: f64 = samples.windows(lag + 1).map(|w| w[0] * w[lag]).sum::<f64>()
                / (samples.len() - lag) as f64;
            assert!((r / var).abs() < 0.02, "lag {lag}: {}", r / var);
        }
    }

    #[test]
    fn gram_of_causal_factor_matches_isi_interior() {
        let model = autocorr_taps(0.3, 0.8, &TapConfig::default())
            .unwrap()
            .factorized(1e-6, 1e-4)
            .unwrap();
        let n = 80;
        let ch = WhitenedChannel::new(&model, n).unwrap();
        let h = ch.gram();
        let v = ch.matrix();
        // V^T V by dense multiplication
        for i in 0..n {
            for j in 0..n {
                let dense: f64 = (0..n).map(|r| v[r][i] * v[r][j]).sum();
                assert!((dense - h.get(i, j)).abs() < 1e-12);
            }
        }
        // Edge rows lose the tail of the convolution; the interior reproduces G.
        let interior = n - model.taps().len();
        for i in 0..interior {
            for j in 0..interior {
                let g = model.tap(i as isize - j as isize);
                assert!((h.get(i, j) - g).abs() < 1e-6, "({i},{j})");
            }
        }
    }
}
