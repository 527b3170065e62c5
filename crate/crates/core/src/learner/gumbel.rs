//! Gumbel-Sigmoid relaxation of binary gates.

use hbf_autodiff::{Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;

use crate::error::{CoreError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const PROB_FLOOR: f64 = 1e-12;

/// One Gumbel(0, 1) draw, optionally shifted and scaled to zero mean and
/// unit variance.
pub fn gumbel_draw(rng: &mut ChaCha8Rng, standardize: bool) -> f64 {
    let u: f64 = rng.sample(Open01);
    let g = -(-u.ln()).ln();
    if standardize {
        (g - EULER_GAMMA) * 6f64.sqrt() / std::f64::consts::PI
    } else {
        g
    }
}

/// Noise source for the stochastic gate.
pub struct GumbelNoise<'r> {
    pub rng: &'r mut ChaCha8Rng,
    pub standardize: bool,
}

/// `σ((log Π + g − g′)/τ)` elementwise, with fresh `g, g′` per element when
/// `noise` is given and `g = g′ = 0` otherwise.
pub fn gumbel_sigmoid<'t>(
    log_pi: Var<'t>,
    tau: f64,
    noise: Option<GumbelNoise<'_>>,
) -> Result<Var<'t>> {
    if !(tau > 0.0) {
        return Err(CoreError::Domain(format!("temperature must be positive, got {tau}")));
    }
    let x = match noise {
        None => log_pi,
        Some(GumbelNoise { rng, standardize }) => {
            let shape = log_pi.shape();
            let n = shape.iter().product();
            let diff = (0..n)
                .map(|_| gumbel_draw(rng, standardize) - gumbel_draw(rng, standardize))
                .collect();
            log_pi.add(log_pi.tape().constant(Tensor::new(shape, diff)?))?
        }
    };
    Ok(x.scale(1.0 / tau).sigmoid())
}

/// Same gate with the probability `Π` given directly (clamped to `≥ 1e-12`
/// before the logarithm).
pub fn gumbel_sigmoid_prob<'t>(
    pi: Var<'t>,
    tau: f64,
    noise: Option<GumbelNoise<'_>>,
) -> Result<Var<'t>> {
    gumbel_sigmoid(pi.clamp_min(PROB_FLOOR).ln(), tau, noise)
}
