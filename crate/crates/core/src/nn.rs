//! Q-networks: fully connected trunks with ReLU hidden units, optional
//! stochastic hidden noise, and one or more output heads.
//!
//! All randomness enters through a [`Noise`] value sampled up front, so a
//! forward pass is a pure function of `(params, input, noise)`. Freezing the
//! noise is what makes finite-difference checks of stochastic layers possible.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bayes::{self, DropoutSpec, GaussianPrior, HeadBlock};
use crate::error::{Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Deterministic affine layer `y = x W + b`, `W` stored as `[fan_in, fan_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Mean-field Gaussian affine layer; each weight and bias has a mean and a
/// pre-scale `rho` with `sigma = softplus(rho)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalLinear {
    pub weight_mu: ParamId,
    pub weight_rho: ParamId,
    pub bias_mu: ParamId,
    pub bias_rho: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dense {
    Plain(Linear),
    Variational(VariationalLinear),
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        match self {
            Dense::Plain(l) => l.fan_in,
            Dense::Variational(l) => l.fan_in,
        }
    }

    pub fn fan_out(&self) -> usize {
        match self {
            Dense::Plain(l) => l.fan_out,
            Dense::Variational(l) => l.fan_out,
        }
    }

    /// Parameter holding the (mean) weight matrix.
    pub fn weight_param(&self) -> ParamId {
        match self {
            Dense::Plain(l) => l.weight,
            Dense::Variational(l) => l.weight_mu,
        }
    }

    pub fn is_variational(&self) -> bool {
        matches!(self, Dense::Variational(_))
    }

    /// Appends `x W + b` to the tape. `eps` supplies standard-normal draws
    /// for variational layers; `None` evaluates at the posterior mean.
    pub fn build(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        eps: Option<&(Tensor, Tensor)>,
    ) -> Result<NodeId> {
        let (w, b) = match (self, eps) {
            (Dense::Plain(l), _) => (tape.param(store, l.weight), tape.param(store, l.bias)),
            (Dense::Variational(l), None) => {
                (tape.param(store, l.weight_mu), tape.param(store, l.bias_mu))
            }
            (Dense::Variational(l), Some((ew, eb))) => (
                bayes::sample_weights_node(tape, store, l.weight_mu, l.weight_rho, ew)?,
                bayes::sample_weights_node(tape, store, l.bias_mu, l.bias_rho, eb)?,
            ),
        };
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }
}

/// Stochastic treatment of hidden activations.
#[derive(Clone, Debug, PartialEq)]
pub enum HiddenNoise {
    None,
    /// Bernoulli dropout with a fixed rate and inverted scaling.
    Dropout(DropoutSpec),
    /// Concrete relaxation with one learned rate logit per hidden layer.
    Concrete { logits: Vec<ParamId>, temperature: f64 },
}

/// Layer widths and stochastic structure of a Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub heads: usize,
    pub variational: bool,
    pub hidden_noise: HiddenNoiseSpec,
    /// Initial `rho` for variational layers.
    pub init_rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HiddenNoiseSpec {
    None,
    Dropout { rate: f64 },
    Concrete { init_rate: f64, temperature: f64 },
}

impl Architecture {
    pub fn mlp(input_dim: usize, hidden: &[usize], outputs: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            outputs,
            heads: 1,
            variational: false,
            hidden_noise: HiddenNoiseSpec::None,
            init_rho: -3.0,
        }
    }
}

/// Per-pass random draws for every stochastic element of a [`Network`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Noise {
    /// Standard-normal draws `(eps_weight, eps_bias)` per dense layer,
    /// hidden layers first, then heads.
    pub weight_eps: Vec<Option<(Tensor, Tensor)>>,
    /// Per hidden layer: a dropout mask, or for concrete dropout the
    /// logistic noise `log u - log(1 - u)`, shaped `[batch, width]`.
    pub hidden: Vec<Option<Tensor>>,
}

impl Noise {
    /// No noise: posterior-mean weights, no dropout.
    pub fn none() -> Self {
        Self::default()
    }

    fn eps(&self, layer: usize) -> Option<&(Tensor, Tensor)> {
        self.weight_eps.get(layer).and_then(Option::as_ref)
    }

    fn hidden(&self, layer: usize) -> Option<&Tensor> {
        self.hidden.get(layer).and_then(Option::as_ref)
    }
}

/// How a forward pass treats stochastic elements.
pub enum ForwardMode<'a> {
    Deterministic,
    Stochastic(&'a mut dyn rand::RngCore),
}

/// A recorded forward pass: the tape plus the node holding the Q-values.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub tape: Tape,
    pub output: NodeId,
}

impl ForwardPass {
    pub fn q_values(&self) -> &Tensor {
        self.tape.value(self.output)
    }

    /// Backward pass seeded with `output_grad` (same shape as the Q-values).
    pub fn backward(&self, store: &ParamStore, output_grad: &Tensor) -> Result<Gradients> {
        self.tape.backward(store, self.output, output_grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    pub hidden: Vec<Dense>,
    pub heads: HeadBlock,
    pub hidden_noise: HiddenNoise,
}

/// Fan-in scaled uniform initialisation, bound `sqrt(6 / fan_in)`.
pub fn he_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches")
}

fn new_dense<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    variational: bool,
    init_rho: f64,
) -> Dense {
    let w = he_uniform(rng, fan_in, fan_out);
    if variational {
        Dense::Variational(VariationalLinear {
            weight_mu: store.add(format!("{name}.weight_mu"), w),
            weight_rho: store.add(
                format!("{name}.weight_rho"),
                Tensor::filled(&[fan_in, fan_out], init_rho),
            ),
            bias_mu: store.add(format!("{name}.bias_mu"), Tensor::zeros(&[fan_out])),
            bias_rho: store.add(format!("{name}.bias_rho"), Tensor::filled(&[fan_out], init_rho)),
            fan_in,
            fan_out,
        })
    } else {
        Dense::Plain(Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
            fan_in,
            fan_out,
        })
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Network {
    /// Allocates parameters for `arch` in `store` and returns the network.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        if arch.input_dim == 0 || arch.outputs == 0 || arch.hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if arch.heads == 0 {
            return Err(Error::InvalidArgument("a network needs at least one head".into()));
        }
        let mut hidden = Vec::new();
        let mut fan_in = arch.input_dim;
        for (i, &width) in arch.hidden.iter().enumerate() {
            hidden.push(new_dense(
                store,
                rng,
                &format!("hidden{i}"),
                fan_in,
                width,
                arch.variational,
                arch.init_rho,
            ));
            fan_in = width;
        }
        let heads = (0..arch.heads)
            .map(|k| {
                let name = if arch.heads == 1 { "out".to_string() } else { format!("head{k}") };
                new_dense(store, rng, &name, fan_in, arch.outputs, arch.variational, arch.init_rho)
            })
            .collect();
        let hidden_noise = match arch.hidden_noise {
            HiddenNoiseSpec::None => HiddenNoise::None,
            HiddenNoiseSpec::Dropout { rate } => HiddenNoise::Dropout(DropoutSpec::new(rate)?),
            HiddenNoiseSpec::Concrete {
                init_rate,
                temperature,
            } => {
                DropoutSpec::concrete(init_rate, temperature)?;
                let logits = (0..arch.hidden.len())
                    .map(|i| store.add(format!("hidden{i}.drop_logit"), Tensor::scalar(logit(init_rate))))
                    .collect();
                HiddenNoise::Concrete { logits, temperature }
            }
        };
        Ok(Self {
            input_dim: arch.input_dim,
            hidden,
            heads: HeadBlock::new(heads)?,
            hidden_noise,
        })
    }

    /// Assembles a network from existing layers.
    pub fn from_layers(input_dim: usize, hidden: Vec<Dense>, heads: Vec<Dense>, hidden_noise: HiddenNoise) -> Result<Self> {
        let mut fan_in = input_dim;
        for layer in &hidden {
            if layer.fan_in() != fan_in {
                return Err(Error::shape("Network::from_layers", &[fan_in], &[layer.fan_in()]));
            }
            fan_in = layer.fan_out();
        }
        let heads = HeadBlock::new(heads)?;
        if heads.trunk_dim() != fan_in {
            return Err(Error::shape("Network::from_layers", &[fan_in], &[heads.trunk_dim()]));
        }
        Ok(Self {
            input_dim,
            hidden,
            heads,
            hidden_noise,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.heads.outputs()
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// Layers in noise order: hidden first, then heads.
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(self.heads.iter())
    }

    pub fn is_variational(&self) -> bool {
        self.layers().any(Dense::is_variational)
    }

    pub fn is_stochastic(&self) -> bool {
        self.is_variational() || !matches!(self.hidden_noise, HiddenNoise::None)
    }

    /// Draws noise for a batch of `batch` inputs. Variational weights are
    /// sampled once per pass; hidden masks once per example and unit.
    pub fn sample_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Noise> {
        let mut weight_eps = Vec::new();
        for layer in self.layers() {
            weight_eps.push(match layer {
                Dense::Plain(_) => None,
                Dense::Variational(l) => Some((
                    standard_normal(rng, &[l.fan_in, l.fan_out]),
                    standard_normal(rng, &[l.fan_out]),
                )),
            });
        }
        let mut hidden = Vec::new();
        for layer in &self.hidden {
            let shape = [batch, layer.fan_out()];
            hidden.push(match &self.hidden_noise {
                HiddenNoise::None => None,
                HiddenNoise::Dropout(spec) => Some(bayes::dropout_mask(spec, &shape, rng)?),
                HiddenNoise::Concrete { .. } => Some(bayes::logistic_noise(&shape, rng)),
            });
        }
        Ok(Noise { weight_eps, hidden })
    }

    /// Records the shared trunk (all hidden layers) and returns its output.
    pub fn build_trunk(&self, tape: &mut Tape, store: &ParamStore, input: NodeId, noise: &Noise) -> Result<NodeId> {
        let width = tape.value(input).cols();
        if tape.value(input).shape().len() != 2 || width != self.input_dim {
            return Err(Error::shape("network input", &[self.input_dim], &[width]));
        }
        let mut h = input;
        for (i, layer) in self.hidden.iter().enumerate() {
            h = layer.build(tape, store, h, noise.eps(i))?;
            h = tape.relu(h)?;
            h = self.apply_hidden_noise(tape, store, h, i, noise)?;
        }
        Ok(h)
    }

    fn apply_hidden_noise(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: NodeId,
        layer: usize,
        noise: &Noise,
    ) -> Result<NodeId> {
        let Some(n) = noise.hidden(layer) else {
            return Ok(h);
        };
        n.ensure_shape("hidden noise", tape.value(h).shape())?;
        match &self.hidden_noise {
            HiddenNoise::None => Ok(h),
            HiddenNoise::Dropout(_) => {
                let mask = tape.constant(n.clone());
                tape.mul(h, mask)
            }
            HiddenNoise::Concrete { logits, temperature } => {
                let logit = tape.param(store, logits[layer]);
                let keep = bayes::concrete_keep_node(tape, logit, n, *temperature)?;
                tape.mul(h, keep)
            }
        }
    }

    /// Records a full pass through head `head`.
    pub fn build(&self, tape: &mut Tape, store: &ParamStore, input: NodeId, noise: &Noise, head: usize) -> Result<NodeId> {
        let trunk = self.build_trunk(tape, store, input, noise)?;
        self.heads
            .build(tape, store, trunk, head, noise.eps(self.hidden.len() + head))
    }

    /// Records the trunk once and every head on top of it.
    pub fn build_all_heads(&self, tape: &mut Tape, store: &ParamStore, input: NodeId, noise: &Noise) -> Result<Vec<NodeId>> {
        let trunk = self.build_trunk(tape, store, input, noise)?;
        (0..self.num_heads())
            .map(|k| {
                self.heads
                    .build(tape, store, trunk, k, noise.eps(self.hidden.len() + k))
            })
            .collect()
    }

    /// Forward pass through head 0 on a `[batch, input_dim]` matrix or a
    /// single `[input_dim]` vector (treated as one row).
    pub fn forward(&self, store: &ParamStore, input: &Tensor, mode: ForwardMode<'_>) -> Result<ForwardPass> {
        let input = as_batch(input)?;
        let noise = match mode {
            ForwardMode::Deterministic => Noise::none(),
            ForwardMode::Stochastic(rng) => self.sample_noise(input.rows(), rng)?,
        };
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let output = self.build(&mut tape, store, x, &noise, 0)?;
        Ok(ForwardPass { tape, output })
    }

    /// Q-values for a batch under explicit noise, through one head.
    pub fn q_values(&self, store: &ParamStore, input: &Tensor, noise: &Noise, head: usize) -> Result<Tensor> {
        let input = as_batch(input)?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let out = self.build(&mut tape, store, x, noise, head)?;
        Ok(tape.value(out).clone())
    }

    /// Q-values from every head, sharing one trunk evaluation.
    pub fn q_values_all_heads(&self, store: &ParamStore, input: &Tensor, noise: &Noise) -> Result<Vec<Tensor>> {
        let input = as_batch(input)?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let outs = self.build_all_heads(&mut tape, store, x, noise)?;
        Ok(outs.into_iter().map(|o| tape.value(o).clone()).collect())
    }

    /// Variational parameter pairs `(mu, rho)` of every variational tensor.
    pub fn variational_pairs(&self) -> Vec<(ParamId, ParamId)> {
        self.layers()
            .filter_map(|l| match l {
                Dense::Variational(v) => Some([(v.weight_mu, v.weight_rho), (v.bias_mu, v.bias_rho)]),
                Dense::Plain(_) => None,
            })
            .flatten()
            .collect()
    }

    /// Closed-form KL of the whole variational posterior to the prior.
    pub fn kl(&self, store: &ParamStore, prior: &GaussianPrior) -> f64 {
        self.variational_pairs()
            .into_iter()
            .map(|(mu, rho)| bayes::kl_diag_gaussian_parts(store.get(mu), store.get(rho), prior))
            .sum()
    }

    /// KL term recorded on the tape; `None` for non-variational networks.
    pub fn kl_node(&self, tape: &mut Tape, store: &ParamStore, prior: &GaussianPrior) -> Result<Option<NodeId>> {
        let mut total: Option<NodeId> = None;
        for (mu, rho) in self.variational_pairs() {
            let term = bayes::kl_node(tape, store, mu, rho, prior)?;
            total = Some(match total {
                None => term,
                Some(t) => tape.add(t, term)?,
            });
        }
        Ok(total)
    }

    /// Concrete-dropout regulariser: for each hidden layer `l` with rate `d`
    /// feeding weights `W`, `weight_reg * |W|^2 / (1 - d)` plus
    /// `dropout_reg * width * (d ln d + (1 - d) ln(1 - d))`.
    pub fn concrete_regularizer_node(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        weight_reg: f64,
        dropout_reg: f64,
    ) -> Result<Option<NodeId>> {
        let HiddenNoise::Concrete { logits, .. } = &self.hidden_noise else {
            return Ok(None);
        };
        let mut total: Option<NodeId> = None;
        for (l, &logit_id) in logits.iter().enumerate() {
            let next: Vec<&Dense> = if l + 1 < self.hidden.len() {
                vec![&self.hidden[l + 1]]
            } else {
                self.heads.iter().collect()
            };
            let logit = tape.param(store, logit_id);
            let d = tape.sigmoid(logit)?;
            let neg_d = tape.scale(d, -1.0)?;
            let keep = tape.add_const(neg_d, 1.0)?;
            let inv_keep = tape.recip(keep)?;
            let mut term: Option<NodeId> = None;
            for layer in next {
                let w = tape.param(store, layer.weight_param());
                let sq = tape.square(w)?;
                let s = tape.sum(sq)?;
                let t = tape.mul(s, inv_keep)?;
                let t = tape.scale(t, weight_reg)?;
                term = Some(match term {
                    None => t,
                    Some(acc) => tape.add(acc, t)?,
                });
            }
            let width = self.hidden[l].fan_out() as f64;
            let log_d = tape.log(d)?;
            let log_keep = tape.log(keep)?;
            let a = tape.mul(d, log_d)?;
            let b = tape.mul(keep, log_keep)?;
            let neg_entropy = tape.add(a, b)?;
            let reg = tape.scale(neg_entropy, dropout_reg * width)?;
            let layer_total = match term {
                Some(t) => tape.add(t, reg)?,
                None => reg,
            };
            total = Some(match total {
                None => layer_total,
                Some(acc) => tape.add(acc, layer_total)?,
            });
        }
        Ok(total)
    }

    /// Current dropout rates of concrete layers.
    pub fn concrete_rates(&self, store: &ParamStore) -> Vec<f64> {
        match &self.hidden_noise {
            HiddenNoise::Concrete { logits, .. } => logits
                .iter()
                .map(|&id| crate::tape::sigmoid_scalar(store.get(id).item()))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Promotes a vector to a one-row matrix; matrices pass through.
pub fn as_batch(input: &Tensor) -> Result<Tensor> {
    match input.shape().len() {
        1 => Tensor::matrix(1, input.len(), input.data().to_vec()),
        2 => Ok(input.clone()),
        _ => Err(Error::shape("network input", &[0, 0], input.shape())),
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}
