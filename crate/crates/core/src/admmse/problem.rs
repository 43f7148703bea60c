use std::sync::Arc;

use crate::channel::{ModelKind, ReceivedBlock, WhitenedChannel};
use crate::constellation::Constellation;
use crate::error::{FtnError, Result};
use crate::numerics::{max_singular_value, BandedSymmetricMatrix, SymmetricOperator};
use crate::pulse::IsiModel;

/// Smallest preconditioning divisor accepted.
const MIN_SCALE: f64 = 1e-12;
const POWER_TOL: f64 = 1e-6;

/// `min a^T Q a + q^T a + r` over the lattice, in the real stacked form.
///
/// `Q` is block diagonal with the same `N x N` banded block on the in-phase
/// and quadrature halves, so only that block is stored.
#[derive(Debug, Clone)]
pub struct DetectionProblem {
    block: Arc<BandedSymmetricMatrix>,
    q: Vec<f64>,
    r: f64,
    lattice: Arc<Constellation>,
    scale_applied: f64,
    noise_variance: f64,
}

impl DetectionProblem {
    /// Builds a problem directly. `block` is one half of `Q`; `q` has length `2N`.
    pub fn new(
        block: Arc<BandedSymmetricMatrix>,
        q: Vec<f64>,
        r: f64,
        lattice: Arc<Constellation>,
        noise_variance: f64,
    ) -> Result<Self> {
        if q.len() != 2 * block.n() {
            return Err(FtnError::DimensionMismatch {
                expected: 2 * block.n(),
                got: q.len(),
            });
        }
        if let Some(i) = q.iter().position(|v| !v.is_finite()) {
            return Err(FtnError::NonFinite(i));
        }
        if !r.is_finite() {
            return Err(FtnError::NonFinite(q.len()));
        }
        Ok(Self {
            block,
            q,
            r,
            lattice,
            scale_applied: 1.0,
            noise_variance,
        })
    }

    pub fn symbols(&self) -> usize {
        self.block.n()
    }

    /// Length of the stacked vector, `2N`.
    pub fn dim(&self) -> usize {
        2 * self.block.n()
    }

    pub fn block(&self) -> &BandedSymmetricMatrix {
        &self.block
    }

    pub fn shared_block(&self) -> &Arc<BandedSymmetricMatrix> {
        &self.block
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn lattice(&self) -> &Constellation {
        &self.lattice
    }

    pub fn shared_lattice(&self) -> &Arc<Constellation> {
        &self.lattice
    }

    /// Divisor applied by preconditioning (1 before).
    pub fn scale_applied(&self) -> f64 {
        self.scale_applied
    }

    /// Complex noise variance relative to the unit-energy lattice. The raw
    /// objective divided by this is the negative log-likelihood up to a constant.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Dense `2N x 2N` matrix `Q`, for verification.
    pub fn q_matrix_dense(&self) -> Vec<Vec<f64>> {
        let n = self.symbols();
        let b = self.block.to_dense();
        let mut out = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = b[i][j];
                out[n + i][n + j] = b[i][j];
            }
        }
        out
    }

    /// `f(x)` at the current scale.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.symbols();
        let (re, im) = self.block.quadratic_form_pair(&x[..n], &x[n..]);
        let quad = re + im;
        let lin: f64 = self.q.iter().zip(x).map(|(q, x)| q * x).sum();
        quad + lin + self.r
    }

    /// `f(x)` before preconditioning.
    pub fn raw_objective(&self, x: &[f64]) -> f64 {
        self.objective(x) * self.scale_applied
    }

    /// Unconstrained minimizer `-Q^-1 q / 2`.
    pub fn unconstrained_minimizer(&self) -> Result<Vec<f64>> {
        let factor = crate::numerics::ldl_factorize(&self.block)?;
        let n = self.symbols();
        let mut a: Vec<f64> = self.q.iter().map(|v| -0.5 * v).collect();
        factor.solve_in_place(&mut a[..n]);
        factor.solve_in_place(&mut a[n..]);
        Ok(a)
    }

    pub(crate) fn with_scale(&self, block: Arc<BandedSymmetricMatrix>, s: f64) -> Result<Self> {
        if !(s >= MIN_SCALE) {
            return Err(FtnError::DegenerateScale(s));
        }
        Ok(Self {
            block,
            q: self.q.iter().map(|v| v / s).collect(),
            r: self.r / s,
            lattice: self.lattice.clone(),
            scale_applied: self.scale_applied * s,
            noise_variance: self.noise_variance,
        })
    }
}

/// Divides `Q`, `q` and `r` by the largest singular value of `Q`.
pub fn precondition(p: &DetectionProblem) -> Result<DetectionProblem> {
    let s = max_singular_value(p.block(), POWER_TOL, 0)?;
    if !(s >= MIN_SCALE) {
        return Err(FtnError::DegenerateScale(s));
    }
    let block = Arc::new(p.block().scaled(1.0 / s));
    p.with_scale(block, s)
}

/// Everything about a detection problem that does not depend on the
/// observation, computed once per `(N, tau, alpha, model)`.
#[derive(Debug, Clone)]
pub struct ProblemTemplate {
    kind: ModelKind,
    raw_block: BandedSymmetricMatrix,
    block: Arc<BandedSymmetricMatrix>,
    scale: f64,
    whitened: Option<WhitenedChannel>,
    lattice: Arc<Constellation>,
    preconditioned: bool,
}

impl ProblemTemplate {
    pub fn new(
        kind: ModelKind,
        isi: &IsiModel,
        n: usize,
        lattice: Arc<Constellation>,
        preconditioned: bool,
    ) -> Result<Self> {
        let (raw_block, whitened) = match kind {
            ModelKind::Correlated => (isi.isi_matrix(n)?, None),
            ModelKind::Whitened => {
                let ch = WhitenedChannel::new(isi, n)?;
                (ch.gram(), Some(ch))
            }
        };
        let (block, scale) = if preconditioned {
            let s = max_singular_value(&raw_block, POWER_TOL, 0)?;
            if !(s >= MIN_SCALE) {
                return Err(FtnError::DegenerateScale(s));
            }
            (Arc::new(raw_block.scaled(1.0 / s)), s)
        } else {
            (Arc::new(raw_block.clone()), 1.0)
        };
        Ok(Self {
            kind,
            raw_block,
            block,
            scale,
            whitened,
            lattice,
            preconditioned,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn symbols(&self) -> usize {
        self.raw_block.n()
    }

    pub fn lattice(&self) -> &Arc<Constellation> {
        &self.lattice
    }

    /// The (possibly preconditioned) `Q` block every assembled problem shares.
    pub fn shared_block(&self) -> &Arc<BandedSymmetricMatrix> {
        &self.block
    }

    /// Preconditioning divisor (1 when disabled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Builds the problem for one received block.
    pub fn assemble(&self, rx: &ReceivedBlock) -> Result<DetectionProblem> {
        if rx.kind != self.kind {
            return Err(FtnError::ModelMismatch);
        }
        let n = self.symbols();
        if rx.observation.len() != 2 * n {
            return Err(FtnError::DimensionMismatch {
                expected: 2 * n,
                got: rx.observation.len(),
            });
        }
        if !(rx.amplitude > 0.0) {
            return Err(FtnError::InvalidParameter(format!(
                "received amplitude {} must be positive",
                rx.amplitude
            )));
        }
        let obs: Vec<f64> = rx.observation.iter().map(|v| v / rx.amplitude).collect();
        let mut q = vec![0.0; 2 * n];
        let r: f64;
        match &self.whitened {
            None => {
                // q = -2 G z, r = z^T G z
                let (qr, qi) = q.split_at_mut(n);
                self.raw_block.apply(&obs[..n], qr);
                self.raw_block.apply(&obs[n..], qi);
                r = q.iter().zip(&obs).map(|(a, b)| a * b).sum();
            }
            Some(ch) => {
                // q = -2 V^T y, r = y^T y
                let (qr, qi) = q.split_at_mut(n);
                ch.convolve_transpose(&obs[..n], qr);
                ch.convolve_transpose(&obs[n..], qi);
                r = obs.iter().map(|v| v * v).sum();
            }
        }
        for v in q.iter_mut() {
            *v *= -2.0 / self.scale;
        }
        let noise_variance = rx.sigma2 / (rx.amplitude * rx.amplitude);
        let mut p = DetectionProblem::new(
            self.block.clone(),
            q,
            r / self.scale,
            self.lattice.clone(),
            noise_variance,
        )?;
        p.scale_applied = self.scale;
        Ok(p)
    }

    pub fn is_preconditioned(&self) -> bool {
        self.preconditioned
    }
}

/// Assembles the (unpreconditioned) quadratic problem for one block.
pub fn assemble_problem(
    rx: &ReceivedBlock,
    isi: &IsiModel,
    lattice: &Constellation,
) -> Result<DetectionProblem> {
    let n = rx.observation.len() / 2;
    if n == 0 {
        return Err(FtnError::InvalidParameter("empty block".into()));
    }
    let template = ProblemTemplate::new(rx.kind, isi, n, Arc::new(lattice.clone()), false)?;
    template.assemble(rx)
}
