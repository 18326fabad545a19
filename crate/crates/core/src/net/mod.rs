//! Minimal dense-network kernel.
//!
//! Supports exactly what the actor and critic networks need: linear layers,
//! optional batch normalization, relu/tanh/linear activations, a scaled
//! output, single-input or dual state/action-branch topologies, exact
//! backpropagation and an Adam optimizer. Parameters expose a flat-vector
//! view which is the unit of federated exchange, and a named-tensor binary
//! format used for checkpoints.

mod adam;
mod backward;
mod forward;
pub mod tensor_io;

pub use adam::{Adam, AdamConfig};
pub use backward::{backward, InputGrads};
pub use forward::{forward, forward_eval, Cache, Mode, NetInput};

use ndarray::{Array1, Array2};
use rand::distr::Uniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Activation applied after the (optionally normalized) linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

/// One dense layer: `activation(batch_norm(x W + b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, batch_norm: bool) -> Self {
        Self { fan_in, fan_out, activation, batch_norm }
    }
}

/// Split of the linearized layer list into state branch, action branch and
/// trunk for dual-input networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSplit {
    pub state_layers: usize,
    pub action_layers: usize,
}

/// Architecture of one network.
///
/// `layers` is linearized: state-branch layers first, then action-branch
/// layers, then the trunk. Single-input networks have `split == None` and the
/// whole list is the trunk. The last layer's activation output is multiplied
/// by `output_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub split: Option<BranchSplit>,
    pub output_scale: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPSILON: f64 = 1e-3;

impl NetworkSpec {
    /// Single-input network.
    pub fn single(layers: Vec<LayerSpec>, output_scale: f64) -> Result<Self> {
        let spec = Self {
            layers,
            split: None,
            output_scale,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Dual-input network: separate state and action branches concatenated
    /// into a trunk.
    pub fn dual(
        state_branch: Vec<LayerSpec>,
        action_branch: Vec<LayerSpec>,
        trunk: Vec<LayerSpec>,
        output_scale: f64,
    ) -> Result<Self> {
        let split =
            BranchSplit { state_layers: state_branch.len(), action_layers: action_branch.len() };
        let mut layers = state_branch;
        layers.extend(action_branch);
        layers.extend(trunk);
        let spec = Self {
            layers,
            split: Some(split),
            output_scale,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_bn(mut self, momentum: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) || !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "batch-norm momentum must be in [0,1) and epsilon > 0, got {momentum}/{epsilon}"
            )));
        }
        self.bn_momentum = momentum;
        self.bn_epsilon = epsilon;
        Ok(self)
    }

    pub(crate) fn segments(&self) -> (&[LayerSpec], &[LayerSpec], &[LayerSpec]) {
        match self.split {
            None => (&[], &[], &self.layers[..]),
            Some(BranchSplit { state_layers, action_layers }) => {
                let (state, rest) = self.layers.split_at(state_layers);
                let (action, trunk) = rest.split_at(action_layers);
                (state, action, trunk)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (state, action, trunk) = self.segments();
        if trunk.is_empty() {
            return Err(Error::Shape("network needs an output layer".into()));
        }
        let chain_ok = |seg: &[LayerSpec]| seg.windows(2).all(|w| w[0].fan_out == w[1].fan_in);
        if !chain_ok(state) || !chain_ok(action) || !chain_ok(trunk) {
            return Err(Error::Shape("adjacent layer arities do not match".into()));
        }
        if self.split.is_some() {
            if state.is_empty() || action.is_empty() {
                return Err(Error::Shape("dual network needs both branches".into()));
            }
            let concat = state.last().unwrap().fan_out + action.last().unwrap().fan_out;
            if trunk[0].fan_in != concat {
                return Err(Error::Shape(format!(
                    "trunk expects {} inputs but branches concatenate to {concat}",
                    trunk[0].fan_in
                )));
            }
        }
        if !self.output_scale.is_finite() {
            return Err(Error::InvalidParameter("output_scale must be finite".into()));
        }
        Ok(())
    }

    /// Arity of the (state) input.
    pub fn state_arity(&self) -> usize {
        let (state, _, trunk) = self.segments();
        state.first().or_else(|| trunk.first()).map(|l| l.fan_in).unwrap_or(0)
    }

    /// Arity of the action input, for dual networks.
    pub fn action_arity(&self) -> Option<usize> {
        let (_, action, _) = self.segments();
        action.first().map(|l| l.fan_in)
    }

    pub fn output_arity(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }
}

/// Batch-norm state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gain: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// Parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Weight matrix, `fan_in x fan_out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub bn: Option<BnParams>,
}

/// All parameters of one network, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

/// Gradients for the trainable tensors (weights, biases, gains, shifts).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    /// `(d_gain, d_shift)` when the layer has batch norm.
    pub dbn: Option<(Array1<f64>, Array1<f64>)>,
}

/// Final-layer initialization bound.
pub const FINAL_LAYER_INIT_BOUND: f64 = 3e-3;

/// Draw fresh parameters: the final layer uniform in a small fixed bound,
/// every other layer uniform in `±1/sqrt(fan_in)`; batch-norm gain 1, shift 0,
/// running mean 0, running variance 1.
pub fn init_network(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<NetworkParams> {
    spec.validate()?;
    let last = spec.layers.len() - 1;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let bound =
            if i == last { FINAL_LAYER_INIT_BOUND } else { 1.0 / (l.fan_in as f64).sqrt() };
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| Error::InvalidParameter(format!("init bound: {e}")))?;
        let w = Array2::from_shape_fn((l.fan_in, l.fan_out), |_| rng.sample(dist));
        let b = Array1::from_shape_fn(l.fan_out, |_| rng.sample(dist));
        let bn = l.batch_norm.then(|| BnParams {
            gain: Array1::ones(l.fan_out),
            shift: Array1::zeros(l.fan_out),
            running_mean: Array1::zeros(l.fan_out),
            running_var: Array1::ones(l.fan_out),
        });
        layers.push(LayerParams { w, b, bn });
    }
    Ok(NetworkParams { layers })
}

impl NetworkParams {
    /// Flat view of every tensor, including batch-norm running statistics.
    /// Order per layer: weights (row-major), bias, then gain, shift,
    /// running mean, running variance.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
            if let Some(bn) = &l.bn {
                out.extend(bn.gain.iter());
                out.extend(bn.shift.iter());
                out.extend(bn.running_mean.iter());
                out.extend(bn.running_var.iter());
            }
        }
        out
    }

    /// Rebuild parameters from a flat view produced by [`Self::to_flat`].
    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut pos = 0usize;
        let mut take = |n: usize, flat: &[f64]| -> Result<Vec<f64>> {
            if pos + n > flat.len() {
                return Err(Error::Shape("flat vector too short for spec".into()));
            }
            let v = flat[pos..pos + n].to_vec();
            pos += n;
            Ok(v)
        };
        for l in &spec.layers {
            let w = Array2::from_shape_vec((l.fan_in, l.fan_out), take(l.fan_in * l.fan_out, flat)?)
                .map_err(|e| Error::Shape(e.to_string()))?;
            let b = Array1::from_vec(take(l.fan_out, flat)?);
            let bn = if l.batch_norm {
                Some(BnParams {
                    gain: Array1::from_vec(take(l.fan_out, flat)?),
                    shift: Array1::from_vec(take(l.fan_out, flat)?),
                    running_mean: Array1::from_vec(take(l.fan_out, flat)?),
                    running_var: Array1::from_vec(take(l.fan_out, flat)?),
                })
            } else {
                None
            };
            layers.push(LayerParams { w, b, bn });
        }
        if pos != flat.len() {
            return Err(Error::Shape(format!(
                "flat vector has {} leftover entries",
                flat.len() - pos
            )));
        }
        Ok(Self { layers })
    }

    pub fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.w.len() + l.b.len() + l.bn.as_ref().map(|bn| 4 * bn.gain.len()).unwrap_or(0)
            })
            .sum()
    }

    fn congruent_with(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.w.dim() == b.w.dim() && a.b.len() == b.b.len() && a.bn.is_some() == b.bn.is_some()
            })
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.w.iter().all(|v| v.is_finite())
                && l.b.iter().all(|v| v.is_finite())
                && l.bn.as_ref().map_or(true, |bn| {
                    bn.gain.iter().all(|v| v.is_finite())
                        && bn.shift.iter().all(|v| v.is_finite())
                        && bn.running_mean.iter().all(|v| v.is_finite())
                        && bn.running_var.iter().all(|v| v.is_finite())
                })
        })
    }
}

impl Gradients {
    /// Shape-congruent zero gradients for the given parameters.
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrads {
                dw: Array2::zeros(l.w.dim()),
                db: Array1::zeros(l.b.len()),
                dbn: l
                    .bn
                    .as_ref()
                    .map(|bn| (Array1::zeros(bn.gain.len()), Array1::zeros(bn.shift.len()))),
            })
            .collect();
        Self { layers }
    }

    /// Flat view over the trainable tensors, layer order matching
    /// [`NetworkParams::to_flat`] minus the running statistics.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.dw.iter());
            out.extend(l.db.iter());
            if let Some((dg, ds)) = &l.dbn {
                out.extend(dg.iter());
                out.extend(ds.iter());
            }
        }
        out
    }

    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut pos = 0usize;
        for l in &spec.layers {
            let wn = l.fan_in * l.fan_out;
            let need = wn + l.fan_out + if l.batch_norm { 2 * l.fan_out } else { 0 };
            if pos + need > flat.len() {
                return Err(Error::Shape("flat gradient vector too short".into()));
            }
            let dw = Array2::from_shape_vec((l.fan_in, l.fan_out), flat[pos..pos + wn].to_vec())
                .map_err(|e| Error::Shape(e.to_string()))?;
            pos += wn;
            let db = Array1::from_vec(flat[pos..pos + l.fan_out].to_vec());
            pos += l.fan_out;
            let dbn = if l.batch_norm {
                let dg = Array1::from_vec(flat[pos..pos + l.fan_out].to_vec());
                pos += l.fan_out;
                let ds = Array1::from_vec(flat[pos..pos + l.fan_out].to_vec());
                pos += l.fan_out;
                Some((dg, ds))
            } else {
                None
            };
            layers.push(LayerGrads { dw, db, dbn });
        }
        if pos != flat.len() {
            return Err(Error::Shape("flat gradient vector too long".into()));
        }
        Ok(Self { layers })
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Blend `source` into `target`: `target' = mix*source + (1-mix)*target`,
/// elementwise over every tensor including batch-norm running statistics.
pub fn soft_update(target: &mut NetworkParams, source: &NetworkParams, mix: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidParameter(format!("mix must be in [0,1], got {mix}")));
    }
    if !target.congruent_with(source) {
        return Err(Error::Shape("soft update between incongruent networks".into()));
    }
    let blend_into = |t: &mut f64, s: &f64| *t = mix * s + (1.0 - mix) * *t;
    for (tl, sl) in target.layers.iter_mut().zip(&source.layers) {
        tl.w.iter_mut().zip(sl.w.iter()).for_each(|(t, s)| blend_into(t, s));
        tl.b.iter_mut().zip(sl.b.iter()).for_each(|(t, s)| blend_into(t, s));
        if let (Some(tb), Some(sb)) = (&mut tl.bn, &sl.bn) {
            tb.gain.iter_mut().zip(sb.gain.iter()).for_each(|(t, s)| blend_into(t, s));
            tb.shift.iter_mut().zip(sb.shift.iter()).for_each(|(t, s)| blend_into(t, s));
            tb.running_mean
                .iter_mut()
                .zip(sb.running_mean.iter())
                .for_each(|(t, s)| blend_into(t, s));
            tb.running_var
                .iter_mut()
                .zip(sb.running_var.iter())
                .for_each(|(t, s)| blend_into(t, s));
        }
    }
    Ok(())
}
