use ndarray::{Array2, ArrayView2, Axis};

use super::forward::{Cache, LayerCache, Mode};
use super::{Activation, Gradients, LayerGrads, LayerParams, LayerSpec, NetworkParams, NetworkSpec};
use crate::{Error, Result};

/// Gradient of the loss with respect to the network inputs.
#[derive(Debug, Clone)]
pub enum InputGrads {
    Single(Array2<f64>),
    Dual { state: Array2<f64>, action: Array2<f64> },
}

impl InputGrads {
    /// The action-input gradient of a dual network.
    pub fn action(&self) -> Option<&Array2<f64>> {
        match self {
            InputGrads::Dual { action, .. } => Some(action),
            InputGrads::Single(_) => None,
        }
    }
}

/// Exact backpropagation from `output_gradient` (the loss gradient with
/// respect to the scaled network output) through a train-mode cache.
///
/// Returns gradients for every trainable tensor plus the gradient with
/// respect to the inputs, which the actor update needs for the critic's
/// action input.
pub fn backward(
    params: &NetworkParams,
    spec: &NetworkSpec,
    cache: &Cache,
    output_gradient: ArrayView2<'_, f64>,
) -> Result<(Gradients, InputGrads)> {
    if cache.mode != Mode::Train {
        return Err(Error::Contract("backward needs a cache from a train-mode forward".into()));
    }
    if cache.layers.len() != spec.layers.len() || params.layers.len() != spec.layers.len() {
        return Err(Error::Contract("cache does not match the network spec".into()));
    }
    let out_arity = spec.output_arity();
    if output_gradient.dim() != (cache.batch, out_arity) {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, expected ({}, {out_arity})",
            output_gradient.dim(),
            cache.batch
        )));
    }

    let (state_seg, action_seg, _) = spec.segments();
    let state_n = state_seg.len();
    let action_n = action_seg.len();
    let first_trunk = state_n + action_n;

    let mut grads: Vec<Option<LayerGrads>> = vec![None; spec.layers.len()];

    // The scale multiplies the last activation, so it multiplies the incoming
    // gradient as well.
    let mut g = output_gradient.to_owned() * spec.output_scale;
    for i in (first_trunk..spec.layers.len()).rev() {
        let (layer_grads, dx) =
            layer_backward(&params.layers[i], &spec.layers[i], &cache.layers[i], g)?;
        grads[i] = Some(layer_grads);
        g = dx;
    }

    let input_grads = if spec.split.is_none() {
        InputGrads::Single(g)
    } else {
        let state_w = state_seg.last().expect("validated").fan_out;
        let g_state_in = g.slice(ndarray::s![.., ..state_w]).to_owned();
        let g_action_in = g.slice(ndarray::s![.., state_w..]).to_owned();

        let mut gs = g_state_in;
        for i in (0..state_n).rev() {
            let (layer_grads, dx) =
                layer_backward(&params.layers[i], &spec.layers[i], &cache.layers[i], gs)?;
            grads[i] = Some(layer_grads);
            gs = dx;
        }
        let mut ga = g_action_in;
        for i in (state_n..first_trunk).rev() {
            let (layer_grads, dx) =
                layer_backward(&params.layers[i], &spec.layers[i], &cache.layers[i], ga)?;
            grads[i] = Some(layer_grads);
            ga = dx;
        }
        InputGrads::Dual { state: gs, action: ga }
    };

    let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok((Gradients { layers }, input_grads))
}

fn layer_backward(
    params: &LayerParams,
    layer: &LayerSpec,
    cache: &LayerCache,
    g: Array2<f64>,
) -> Result<(LayerGrads, Array2<f64>)> {
    // Through the activation, using the stored post-activation output.
    let g_act = match layer.activation {
        Activation::Relu => {
            let mut g = g;
            g.zip_mut_with(&cache.y, |gv, &y| {
                if y <= 0.0 {
                    *gv = 0.0;
                }
            });
            g
        }
        Activation::Tanh => {
            let mut g = g;
            g.zip_mut_with(&cache.y, |gv, &y| *gv *= 1.0 - y * y);
            g
        }
        Activation::Linear => g,
    };

    // Through batch normalization, differentiating the batch statistics too.
    let (dz, dbn) = match (&params.bn, &cache.bn) {
        (Some(bn), Some(bc)) => {
            let n = g_act.nrows() as f64;
            let dgain = (&g_act * &bc.x_hat).sum_axis(Axis(0));
            let dshift = g_act.sum_axis(Axis(0));
            let dxhat = &g_act * &bn.gain;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &bc.x_hat).sum_axis(Axis(0));
            let dz = (dxhat * n - &sum_dxhat - &bc.x_hat * &sum_dxhat_xhat)
                * &bc.inv_std.mapv(|v| v / n);
            (dz, Some((dgain, dshift)))
        }
        (None, None) => (g_act, None),
        _ => return Err(Error::Contract("cache and parameters disagree on batch norm".into())),
    };

    // Through the linear map.
    let dw = cache.input.t().dot(&dz);
    let db = dz.sum_axis(Axis(0));
    let dx = dz.dot(&params.w.t());
    Ok((LayerGrads { dw, db, dbn }, dx))
}
