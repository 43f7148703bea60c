//! Fixtures shared by the benchmarks.

use ftn_core::admmse::DetectionProblem;
use ftn_core::channel::{ModelKind, ReceivedBlock};
use ftn_core::error::Result;
use ftn_core::harness::Link;
use ftn_core::pulse::TapConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A link and one received, assembled block at a moderate SNR.
pub struct Fixture {
    pub link: Link,
    pub received: ReceivedBlock,
    pub problem: DetectionProblem,
}

impl Fixture {
    pub fn new(order: usize, alpha: f64, tau: f64, n: usize, sigma2: f64, seed: u64) -> Result<Self> {
        let link = Link::new(order, alpha, tau, n, ModelKind::Correlated, &TapConfig::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<u32> = (0..n).map(|_| rng.random_range(0..order as u32)).collect();
        let rx = link.transmit(&words, tau.sqrt(), sigma2, &mut rng)?;
        let problem = link.template().assemble(&rx)?;
        Ok(Self {
            link,
            received: rx,
            problem,
        })
    }
}
