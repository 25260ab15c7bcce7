//! Per-particle Gaussian streams.
//!
//! Each particle owns two ChaCha8 streams keyed by the master seed with the
//! particle index as stream id: one for the primary increments `ξ_n`, one
//! for the auxiliary Fourier–Legendre vectors. Streams are consumed in step
//! order, so any particle can be replayed alone and results do not depend on
//! how particles are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::schemes::GaussianDraw;

const AUX_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct ParticleStreams {
    primary: ChaCha8Rng,
    aux: ChaCha8Rng,
}

impl ParticleStreams {
    pub fn new(seed: u64, particle: u64) -> Self {
        let mut primary = ChaCha8Rng::seed_from_u64(seed);
        primary.set_stream(particle);
        let mut aux = ChaCha8Rng::seed_from_u64(seed ^ AUX_KEY);
        aux.set_stream(particle);
        Self { primary, aux }
    }

    /// Draws the next step. With `substeps = k > 1` the primary vector is the
    /// normalized sum of `k` consecutive base draws, so runs at `h` and `h/k`
    /// see the same Brownian path.
    pub fn fill(&mut self, draw: &mut GaussianDraw, substeps: usize, with_aux: bool) {
        if substeps <= 1 {
            for z in draw.xi.iter_mut() {
                *z = StandardNormal.sample(&mut self.primary);
            }
        } else {
            draw.xi.fill(0.0);
            for _ in 0..substeps {
                for z in draw.xi.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut self.primary);
                    *z += g;
                }
            }
            let scale = 1.0 / (substeps as f64).sqrt();
            for z in draw.xi.iter_mut() {
                *z *= scale;
            }
        }
        if with_aux {
            for z in draw.xi_aux.iter_mut() {
                *z = StandardNormal.sample(&mut self.aux);
            }
        }
    }
}
