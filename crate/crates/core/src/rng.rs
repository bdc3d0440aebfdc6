//! The randomness contract shared by the jump process and the cluster.
//!
//! Every arrival consumes exactly one [`EventDraw`] from the stream, in this
//! order: an `Exp(1)` variate (scaled to the waiting time), then one uniform
//! `f64` that becomes `theta' = Z(1) - theta` in `[0, 2)`. Both simulators
//! call [`draw_event`] and nothing else, so equal seeds give equal events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

pub type SimRng = ChaCha8Rng;

/// A generator for `(seed, stream)`. Ensembles keep one seed and vary the stream.
pub fn seeded(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventDraw {
    pub wait: f64,
    /// Attachment angle measured backwards from the red/blue interface at `Z(1)`.
    pub theta_prime: f64,
}

#[inline]
pub fn draw_event<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> EventDraw {
    let e: f64 = Exp1.sample(rng);
    let u: f64 = rng.random();
    EventDraw {
        wait: e / rate,
        theta_prime: 2.0 * u,
    }
}
