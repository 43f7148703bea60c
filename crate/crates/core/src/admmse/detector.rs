use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AdmmParams, DetectionProblem};
use crate::channel::unstack_real;
use crate::error::{FtnError, Result};
use crate::numerics::{ldl_factorize, BandedSymmetricMatrix, LdlFactor};

/// Iterates of one ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    /// Continuous iterate.
    pub a: Vec<f64>,
    /// Feasible iterate.
    pub x: Vec<f64>,
    /// Scaled duals.
    pub mu: Vec<f64>,
    pub best_x: Vec<f64>,
    pub best_objective: f64,
}

impl AdmmState {
    /// Start at `x0` with zero duals and no best point yet.
    pub fn start(x0: Vec<f64>) -> Self {
        let n = x0.len();
        Self {
            a: vec![0.0; n],
            best_x: x0.clone(),
            x: x0,
            mu: vec![0.0; n],
            best_objective: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Best objective at the problem's (possibly preconditioned) scale.
    pub best_objective: f64,
    /// Best objective before preconditioning.
    pub raw_objective: f64,
    /// ADMM steps executed over all restarts.
    pub iterations: usize,
    pub restarts: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub symbols: Vec<Complex64>,
    /// Stacked decisions `[Re; Im]`.
    pub stacked: Vec<f64>,
    pub report: DetectionReport,
}

/// A candidate returned by one restart.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Candidate {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Holds the cached `LDL^T` factor of the step-1 matrix `[cQ + rho I]`.
///
/// A detector is bound to one `Q` block: building it costs one factorization
/// and every later [`detect`](Self::detect) only runs solves.
#[derive(Debug, Clone)]
pub struct AdmmDetector {
    params: AdmmParams,
    block: Arc<BandedSymmetricMatrix>,
    factor: LdlFactor,
}

impl AdmmDetector {
    pub fn new(problem: &DetectionProblem, params: AdmmParams) -> Result<Self> {
        Self::for_block(problem.shared_block().clone(), params)
    }

    pub fn for_block(block: Arc<BandedSymmetricMatrix>, params: AdmmParams) -> Result<Self> {
        params.validate()?;
        let mut m = block.scaled(params.q_coefficient());
        m.add_to_diagonal(params.rho);
        let factor = ldl_factorize(&m)?;
        Ok(Self {
            params,
            block,
            factor,
        })
    }

    pub fn params(&self) -> &AdmmParams {
        &self.params
    }

    pub fn factor(&self) -> &LdlFactor {
        &self.factor
    }

    fn check(&self, p: &DetectionProblem) -> Result<()> {
        let same = Arc::ptr_eq(&self.block, p.shared_block()) || *self.block == *p.block();
        if !same {
            if self.block.n() != p.symbols() {
                return Err(FtnError::DimensionMismatch {
                    expected: 2 * self.block.n(),
                    got: p.dim(),
                });
            }
            return Err(FtnError::InvalidParameter(
                "problem matrix differs from the one the detector was factorized for".into(),
            ));
        }
        Ok(())
    }

    /// Hard decisions from `kappa` seeded restarts of `L` steps each.
    pub fn detect(&self, p: &DetectionProblem, seed: u64) -> Result<Detection> {
        self.run(p, seed, false).map(|(d, _)| d)
    }

    /// Like [`detect`](Self::detect) but also returns each restart's best point.
    pub(crate) fn run(
        &self,
        p: &DetectionProblem,
        seed: u64,
        keep_candidates: bool,
    ) -> Result<(Detection, Vec<Candidate>)> {
        self.check(p)?;
        let start = Instant::now();
        let dim = p.dim();
        let (lo, hi) = p.lattice().hull();
        let mut best = AdmmState::start(vec![0.0; dim]);
        let mut candidates = Vec::new();
        let mut next_x = vec![0.0; dim];
        let mut steps = 0;
        let mut restarts = 0;
        'restarts: for k in 0..self.params.restarts {
            let mut rng = restart_rng(seed, k);
            let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
            let mut state = AdmmState::start(x0);
            restarts += 1;
            for _ in 0..self.params.iterations {
                step(p, &self.params, &self.factor, &mut state, &mut next_x);
                steps += 1;
                if let Some(floor) = self.params.early_exit_floor {
                    if state.best_objective <= floor {
                        absorb(&mut best, &state);
                        if keep_candidates {
                            candidates.push(Candidate {
                                x: state.best_x.clone(),
                                objective: state.best_objective,
                            });
                        }
                        break 'restarts;
                    }
                }
            }
            absorb(&mut best, &state);
            if keep_candidates {
                candidates.push(Candidate {
                    x: state.best_x,
                    objective: state.best_objective,
                });
            }
        }
        let symbols = unstack_real(&best.best_x)?;
        let detection = Detection {
            symbols,
            report: DetectionReport {
                best_objective: best.best_objective,
                raw_objective: best.best_objective * p.scale_applied(),
                iterations: steps,
                restarts,
                elapsed: start.elapsed(),
            },
            stacked: best.best_x,
        };
        Ok((detection, candidates))
    }
}

/// Restart `k` draws from its own ChaCha stream so changing `kappa` leaves
/// earlier restarts untouched. Stream 0 is left to the channel.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64 + 1);
    rng
}

fn absorb(best: &mut AdmmState, run: &AdmmState) {
    if run.best_objective < best.best_objective {
        best.best_objective = run.best_objective;
        best.best_x.clone_from(&run.best_x);
    }
}

/// One ADMM step using a factor of the step-1 matrix.
pub fn admm_step(
    p: &DetectionProblem,
    params: &AdmmParams,
    factor: &LdlFactor,
    state: &mut AdmmState,
) -> Result<()> {
    let dim = p.dim();
    if factor.n() != p.symbols() {
        return Err(FtnError::DimensionMismatch {
            expected: 2 * factor.n(),
            got: dim,
        });
    }
    for v in [&state.a, &state.x, &state.mu, &state.best_x] {
        if v.len() != dim {
            return Err(FtnError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let mut next_x = vec![0.0; dim];
    step(p, params, factor, state, &mut next_x);
    Ok(())
}

#[inline]
fn step(p: &DetectionProblem, params: &AdmmParams, factor: &LdlFactor, state: &mut AdmmState, next_x: &mut [f64]) {
    let n = p.symbols();
    let rho = params.rho;
    // (i) [cQ + rho I] a = -q + rho (x - mu)
    for (((a, q), x), mu) in state.a.iter_mut().zip(p.q()).zip(&state.x).zip(&state.mu) {
        *a = -q + rho * (x - mu);
    }
    let (re, im) = state.a.split_at_mut(n);
    factor.solve_pair_in_place(re, im);
    // (ii) x = proj(a + mu)
    for ((nx, a), mu) in next_x.iter_mut().zip(&state.a).zip(&state.mu) {
        *nx = a + mu;
    }
    p.lattice().project_in_place(next_x);
    state.x.copy_from_slice(next_x);
    // (iii) mu += a - x
    for ((mu, a), x) in state.mu.iter_mut().zip(&state.a).zip(&state.x) {
        *mu += a - x;
    }
    // (iv) keep the best feasible point. Evaluated every step, even when x
    // did not move, so the cost of a step does not depend on the data.
    let f = p.objective(&state.x);
    if f < state.best_objective {
        state.best_objective = f;
        state.best_x.copy_from_slice(&state.x);
    }
}

/// One-shot detection: factorizes, then runs [`AdmmDetector::detect`].
pub fn detect(p: &DetectionProblem, params: &AdmmParams) -> Result<Detection> {
    AdmmDetector::new(p, *params)?.detect(p, params.seed)
}
