//! Weight and mask distributions for stochastic Q-networks.
//!
//! Mean-field Gaussian weights use the reparameterisation
//! `w = mu + softplus(rho) * eps` with `eps ~ N(0, 1)`, so gradients with
//! respect to `mu` and `rho` flow through a fixed draw of `eps`. Dropout
//! masks use inverted scaling: kept units are multiplied by `1 / (1 - d)`,
//! which makes the noise-free pass the expectation of the noisy one.
//!
//! Concrete dropout replaces the Bernoulli drop indicator with the relaxed
//! variable
//!
//! ```text
//! z = sigmoid((logit(d) + log u - log(1 - u)) / t),   u ~ U(0, 1)
//! ```
//!
//! which tends to a hard `Bernoulli(d)` draw as the temperature `t` shrinks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Dense;
use crate::params::{ParamId, ParamStore};
use crate::tape::{sigmoid_scalar, softplus_scalar, NodeId, Tape};
use crate::tensor::Tensor;

/// Smallest and largest admissible uniform draw for the concrete relaxation.
pub const UNIFORM_CLAMP: f64 = 1e-7;

pub fn softplus(rho: &Tensor) -> Tensor {
    rho.map(softplus_scalar)
}

/// `rho` such that `softplus(rho) = sigma`.
pub fn inverse_softplus(sigma: f64) -> f64 {
    assert!(sigma > 0.0, "softplus range is (0, inf)");
    if sigma > 30.0 {
        sigma + (-(-sigma).exp_m1()).ln()
    } else {
        sigma.exp_m1().ln()
    }
}

/// Mean and pre-scale of a diagonal Gaussian over a weight tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalParams {
    pub mu: Tensor,
    pub rho: Tensor,
}

impl VariationalParams {
    pub fn new(mu: Tensor, rho: Tensor) -> Result<Self> {
        rho.ensure_shape("VariationalParams", mu.shape())?;
        mu.ensure_finite("variational mean")?;
        rho.ensure_finite("variational rho")?;
        Ok(Self { mu, rho })
    }

    /// Parameters whose standard deviation is exactly `sigma` everywhere.
    pub fn from_mean_std(mu: Tensor, sigma: f64) -> Result<Self> {
        let rho = Tensor::filled(mu.shape(), inverse_softplus(sigma));
        Self::new(mu, rho)
    }

    pub fn sigma(&self) -> Tensor {
        softplus(&self.rho)
    }

    pub fn from_store(store: &ParamStore, mu: ParamId, rho: ParamId) -> Result<Self> {
        Self::new(store.get(mu).clone(), store.get(rho).clone())
    }
}

/// Isotropic Gaussian prior over weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPrior {
    pub mean: f64,
    pub stddev: f64,
}

impl Default for GaussianPrior {
    fn default() -> Self {
        Self {
            mean: 0.0,
            stddev: 1.0,
        }
    }
}

impl GaussianPrior {
    pub fn new(mean: f64, stddev: f64) -> Result<Self> {
        if !(stddev > 0.0) || !mean.is_finite() || !stddev.is_finite() {
            return Err(Error::InvalidArgument(format!("prior stddev must be positive, got {stddev}")));
        }
        Ok(Self { mean, stddev })
    }
}

/// `w = mu + softplus(rho) * eps`.
pub fn sample_weights(vp: &VariationalParams, eps: &Tensor) -> Result<Tensor> {
    eps.ensure_shape("sample_weights", vp.mu.shape())?;
    let sigma = vp.sigma();
    let data = vp
        .mu
        .data()
        .iter()
        .zip(sigma.data())
        .zip(eps.data())
        .map(|((m, s), e)| m + s * e)
        .collect();
    Tensor::new(vp.mu.shape().to_vec(), data)
}

/// Records the reparameterised sample on the tape.
pub fn sample_weights_node(tape: &mut Tape, store: &ParamStore, mu: ParamId, rho: ParamId, eps: &Tensor) -> Result<NodeId> {
    eps.ensure_shape("sample_weights", store.get(mu).shape())?;
    let mu = tape.param(store, mu);
    let rho = tape.param(store, rho);
    let sigma = tape.softplus(rho)?;
    let e = tape.constant(eps.clone());
    let scaled = tape.mul(sigma, e)?;
    tape.add(mu, scaled)
}

/// `KL[N(mu, sigma^2) || N(m, s^2)]` summed over entries:
/// `ln(s / sigma) + (sigma^2 + (mu - m)^2) / (2 s^2) - 1/2`.
pub fn kl_diag_gaussian(vp: &VariationalParams, prior: &GaussianPrior) -> f64 {
    kl_diag_gaussian_parts(&vp.mu, &vp.rho, prior)
}

pub(crate) fn kl_diag_gaussian_parts(mu: &Tensor, rho: &Tensor, prior: &GaussianPrior) -> f64 {
    let var_p = prior.stddev * prior.stddev;
    mu.data()
        .iter()
        .zip(rho.data())
        .map(|(&m, &r)| {
            let s = softplus_scalar(r);
            let d = m - prior.mean;
            (prior.stddev / s).ln() + (s * s + d * d) / (2.0 * var_p) - 0.5
        })
        .sum()
}

/// Tape version of [`kl_diag_gaussian`] for one `(mu, rho)` pair.
pub fn kl_node(tape: &mut Tape, store: &ParamStore, mu: ParamId, rho: ParamId, prior: &GaussianPrior) -> Result<NodeId> {
    let n = store.get(mu).len() as f64;
    let var_p = prior.stddev * prior.stddev;
    let mu = tape.param(store, mu);
    let rho = tape.param(store, rho);
    let sigma = tape.softplus(rho)?;
    let log_sigma = tape.log(sigma)?;
    let sigma2 = tape.square(sigma)?;
    let centred = tape.add_const(mu, -prior.mean)?;
    let centred2 = tape.square(centred)?;
    let quad = tape.add(sigma2, centred2)?;
    let quad = tape.scale(quad, 1.0 / (2.0 * var_p))?;
    let per_entry = tape.sub(quad, log_sigma)?;
    let total = tape.sum(per_entry)?;
    tape.add_const(total, n * (prior.stddev.ln() - 0.5))
}

/// Dropout rate, plus the relaxation temperature for the concrete variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub temperature: f64,
}

impl DropoutSpec {
    pub fn new(rate: f64) -> Result<Self> {
        Self::concrete(rate, 0.1)
    }

    pub fn concrete(rate: f64, temperature: f64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::InvalidArgument(format!("dropout rate must lie in (0, 1), got {rate}")));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { rate, temperature })
    }

    pub fn logit(&self) -> f64 {
        (self.rate / (1.0 - self.rate)).ln()
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `d`, else `1 / (1 - d)`.
pub fn dropout_mask<R: Rng + ?Sized>(spec: &DropoutSpec, shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let keep = 1.0 / (1.0 - spec.rate);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < spec.rate { 0.0 } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

fn clamp_uniform(u: f64) -> f64 {
    u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
}

/// Logistic noise `log u - log(1 - u)` with `u ~ U(0, 1)`.
pub fn logistic_noise<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let u = clamp_uniform(rng.random::<f64>());
            u.ln() - (1.0 - u).ln()
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Relaxed drop indicator `z` for fixed uniforms `u`; values of `u` at or
/// beyond the ends of `(0, 1)` are clamped to `[1e-7, 1 - 1e-7]`.
pub fn concrete_relaxation(spec: &DropoutSpec, u: &Tensor) -> Tensor {
    let d = spec.logit();
    u.map(|u| {
        let u = clamp_uniform(u);
        sigmoid_scalar((d + u.ln() - (1.0 - u).ln()) / spec.temperature)
    })
}

/// Records the keep-mask `(1 - z) / (1 - d)` of a concrete dropout layer.
/// `logit` is the one-element rate logit; `noise` holds `log u - log(1 - u)`.
pub fn concrete_keep_node(tape: &mut Tape, logit: NodeId, noise: &Tensor, temperature: f64) -> Result<NodeId> {
    let c = tape.constant(noise.clone());
    let pre = tape.add_scalar(c, logit)?;
    let pre = tape.scale(pre, 1.0 / temperature)?;
    let z = tape.sigmoid(pre)?;
    let neg_z = tape.scale(z, -1.0)?;
    let keep = tape.add_const(neg_z, 1.0)?;
    let d = tape.sigmoid(logit)?;
    let neg_d = tape.scale(d, -1.0)?;
    let one_minus_d = tape.add_const(neg_d, 1.0)?;
    let inv = tape.recip(one_minus_d)?;
    tape.mul_scalar(keep, inv)
}

/// `K >= 1` output layers sharing one trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadBlock {
    heads: Vec<Dense>,
}

impl HeadBlock {
    pub fn new(heads: Vec<Dense>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::InvalidArgument("head block needs at least one head".into()))?;
        let (fi, fo) = (first.fan_in(), first.fan_out());
        for h in &heads {
            if h.fan_in() != fi || h.fan_out() != fo {
                return Err(Error::shape("HeadBlock::new", &[fi, fo], &[h.fan_in(), h.fan_out()]));
            }
        }
        Ok(Self { heads })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn trunk_dim(&self) -> usize {
        self.heads[0].fan_in()
    }

    pub fn outputs(&self) -> usize {
        self.heads[0].fan_out()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Dense> {
        self.heads.iter()
    }

    pub fn head(&self, k: usize) -> Result<&Dense> {
        self.heads.get(k).ok_or(Error::IndexOutOfRange {
            what: "head block",
            index: k,
            len: self.heads.len(),
        })
    }

    /// Q-values of head `k` on top of a recorded trunk output.
    pub fn build(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        trunk: NodeId,
        k: usize,
        eps: Option<&(Tensor, Tensor)>,
    ) -> Result<NodeId> {
        self.head(k)?.build(tape, store, trunk, eps)
    }
}

/// Q-values of head `k` for a recorded trunk output, using mean weights.
pub fn head_forward(tape: &mut Tape, store: &ParamStore, trunk: NodeId, heads: &HeadBlock, k: usize) -> Result<NodeId> {
    heads.build(tape, store, trunk, k, None)
}
