use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use super::{Activation, LayerParams, LayerSpec, NetworkParams, NetworkSpec};
use crate::{Error, Result};

/// Forward mode: train uses batch statistics and refreshes the running
/// statistics; eval uses the stored running statistics and mutates nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Input of a forward pass, one row per batch element.
#[derive(Debug, Clone, Copy)]
pub enum NetInput<'a> {
    Single(ArrayView2<'a, f64>),
    Dual { state: ArrayView2<'a, f64>, action: ArrayView2<'a, f64> },
}

pub(crate) struct BnCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) struct LayerCache {
    /// Input of the linear map.
    pub input: Array2<f64>,
    /// Batch-norm intermediates; only recorded in train mode.
    pub bn: Option<BnCache>,
    /// Post-activation output, before any output scaling.
    pub y: Array2<f64>,
}

/// Intermediates of one forward pass, consumed by backpropagation.
pub struct Cache {
    pub(crate) mode: Mode,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) batch: usize,
}

struct BnUpdate {
    mean: Array1<f64>,
    var: Array1<f64>,
}

/// Run a forward pass. Train mode updates the batch-norm running statistics
/// in place; nothing else is mutated.
pub fn forward(
    params: &mut NetworkParams,
    spec: &NetworkSpec,
    input: NetInput<'_>,
    mode: Mode,
) -> Result<(Array2<f64>, Cache)> {
    let (out, cache, updates) = run(params, spec, input, mode)?;
    for (layer, update) in params.layers.iter_mut().zip(updates) {
        if let (Some(bn), Some(u)) = (&mut layer.bn, update) {
            let m = spec.bn_momentum;
            bn.running_mean.zip_mut_with(&u.mean, |r, &b| *r = m * *r + (1.0 - m) * b);
            bn.running_var.zip_mut_with(&u.var, |r, &b| *r = m * *r + (1.0 - m) * b);
        }
    }
    Ok((out, cache))
}

/// Eval-mode forward: a pure function of parameters and input.
pub fn forward_eval(
    params: &NetworkParams,
    spec: &NetworkSpec,
    input: NetInput<'_>,
) -> Result<(Array2<f64>, Cache)> {
    let (out, cache, _) = run(params, spec, input, Mode::Eval)?;
    Ok((out, cache))
}

fn run(
    params: &NetworkParams,
    spec: &NetworkSpec,
    input: NetInput<'_>,
    mode: Mode,
) -> Result<(Array2<f64>, Cache, Vec<Option<BnUpdate>>)> {
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Shape("parameters do not match the network spec".into()));
    }
    let (state_seg, action_seg, trunk_seg) = spec.segments();
    let state_n = state_seg.len();
    let action_n = action_seg.len();

    let mut caches: Vec<LayerCache> = Vec::with_capacity(spec.layers.len());
    let mut updates: Vec<Option<BnUpdate>> = Vec::with_capacity(spec.layers.len());

    let trunk_input = match (input, spec.split.is_some()) {
        (NetInput::Single(x), false) => {
            check_arity(&x, spec.layers[0].fan_in)?;
            x.to_owned()
        }
        (NetInput::Dual { state, action }, true) => {
            if state.nrows() != action.nrows() {
                return Err(Error::Shape(format!(
                    "state batch {} != action batch {}",
                    state.nrows(),
                    action.nrows()
                )));
            }
            check_arity(&state, state_seg[0].fan_in)?;
            check_arity(&action, action_seg[0].fan_in)?;
            let mut s = state.to_owned();
            for i in 0..state_n {
                let (cache, update, out) =
                    layer_forward(&params.layers[i], &spec.layers[i], s, mode, spec)?;
                caches.push(cache);
                updates.push(update);
                s = out;
            }
            let mut a = action.to_owned();
            for i in state_n..state_n + action_n {
                let (cache, update, out) =
                    layer_forward(&params.layers[i], &spec.layers[i], a, mode, spec)?;
                caches.push(cache);
                updates.push(update);
                a = out;
            }
            concatenate(Axis(1), &[s.view(), a.view()])
                .map_err(|e| Error::Shape(e.to_string()))?
        }
        (NetInput::Single(_), true) => {
            return Err(Error::Shape("dual network requires state and action inputs".into()))
        }
        (NetInput::Dual { .. }, false) => {
            return Err(Error::Shape("single-input network got dual inputs".into()))
        }
    };
    let batch = trunk_input.nrows();

    let mut x = trunk_input;
    let first_trunk = state_n + action_n;
    debug_assert_eq!(trunk_seg.len(), spec.layers.len() - first_trunk);
    for i in first_trunk..spec.layers.len() {
        let (cache, update, out) = layer_forward(&params.layers[i], &spec.layers[i], x, mode, spec)?;
        caches.push(cache);
        updates.push(update);
        x = out;
    }

    let out = x * spec.output_scale;
    Ok((out, Cache { mode, layers: caches, batch }, updates))
}

fn check_arity(x: &ArrayView2<'_, f64>, expect: usize) -> Result<()> {
    if x.ncols() != expect {
        return Err(Error::Shape(format!("input arity {} but network expects {expect}", x.ncols())));
    }
    Ok(())
}

fn layer_forward(
    params: &LayerParams,
    layer: &LayerSpec,
    input: Array2<f64>,
    mode: Mode,
    spec: &NetworkSpec,
) -> Result<(LayerCache, Option<BnUpdate>, Array2<f64>)> {
    let z = input.dot(&params.w) + &params.b;

    let (bn_out, bn_cache, update) = match (&params.bn, mode) {
        (None, _) => (z, None, None),
        (Some(bn), Mode::Train) => {
            let n = z.nrows();
            if n < 2 {
                return Err(Error::InvalidBatch(format!(
                    "train-mode batch norm needs a batch of at least 2, got {n}"
                )));
            }
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = z - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            let inv_std = var.mapv(|v| 1.0 / (v + spec.bn_epsilon).sqrt());
            let x_hat = centered * &inv_std;
            let out = &x_hat * &bn.gain + &bn.shift;
            (out, Some(BnCache { x_hat, inv_std }), Some(BnUpdate { mean, var }))
        }
        (Some(bn), Mode::Eval) => {
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + spec.bn_epsilon).sqrt());
            let out = (z - &bn.running_mean) * &inv_std * &bn.gain + &bn.shift;
            (out, None, None)
        }
    };

    let y = match layer.activation {
        Activation::Relu => bn_out.mapv(|v| v.max(0.0)),
        Activation::Tanh => bn_out.mapv(f64::tanh),
        Activation::Linear => bn_out,
    };
    let out = y.clone();
    Ok((LayerCache { input, bn: bn_cache, y }, update, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, LayerSpec, NetworkSpec};
    use crate::rng::{stream, Purpose};
    use ndarray::array;

    fn actor_like() -> NetworkSpec {
        NetworkSpec::single(
            vec![
                LayerSpec::new(4, 16, Activation::Relu, true),
                LayerSpec::new(16, 8, Activation::Relu, true),
                LayerSpec::new(8, 1, Activation::Tanh, false),
            ],
            2.5,
        )
        .unwrap()
    }

    fn critic_like() -> NetworkSpec {
        NetworkSpec::dual(
            vec![LayerSpec::new(4, 6, Activation::Relu, true)],
            vec![LayerSpec::new(1, 5, Activation::Relu, true)],
            vec![
                LayerSpec::new(11, 8, Activation::Relu, true),
                LayerSpec::new(8, 1, Activation::Linear, false),
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let spec = actor_like();
        let mut params = init_network(&spec, &mut stream(1, 0, 0, Purpose::Init)).unwrap();
        for l in params.layers.iter_mut() {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let x = array![[1.0, -2.0, 3.0, 0.5]];
        let (out, _) = forward_eval(&params, &spec, NetInput::Single(x.view())).unwrap();
        assert_eq!(out, array![[0.0]]);
    }

    #[test]
    fn output_respects_scale_bound() {
        let spec = actor_like();
        let mut params = init_network(&spec, &mut stream(2, 0, 0, Purpose::Init)).unwrap();
        // Exaggerate weights so tanh saturates.
        for l in params.layers.iter_mut() {
            l.w.mapv_inplace(|v| v * 1e4);
        }
        let mut rng = stream(3, 0, 0, Purpose::Init);
        for _ in 0..50 {
            let x = Array2::from_shape_fn((4, 4), |_| {
                rand::Rng::random_range(&mut rng, -100.0..100.0)
            });
            let (out, _) = forward(&mut params, &spec, NetInput::Single(x.view()), Mode::Train)
                .unwrap();
            assert!(out.iter().all(|v| v.abs() <= 2.5));
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let spec = actor_like();
        let mut params = init_network(&spec, &mut stream(4, 0, 0, Purpose::Init)).unwrap();
        let x = array![[0.3, -0.1, 0.7, 0.2]];
        let before = params.clone();
        let (a, _) = forward_eval(&params, &spec, NetInput::Single(x.view())).unwrap();
        let (b, _) = forward_eval(&params, &spec, NetInput::Single(x.view())).unwrap();
        assert_eq!(a, b);
        assert_eq!(params, before);

        // Train mode touches only the running statistics.
        let batch = array![[0.3, -0.1, 0.7, 0.2], [1.0, 0.4, -0.6, 0.0]];
        forward(&mut params, &spec, NetInput::Single(batch.view()), Mode::Train).unwrap();
        assert_ne!(params, before);
        for (l, o) in params.layers.iter().zip(before.layers.iter()) {
            assert_eq!(l.w, o.w);
            assert_eq!(l.b, o.b);
            if let (Some(bn), Some(obn)) = (&l.bn, &o.bn) {
                assert_eq!(bn.gain, obn.gain);
                assert_eq!(bn.shift, obn.shift);
            }
        }
    }

    #[test]
    fn train_mode_batch_of_one_rejected_with_bn() {
        let spec = actor_like();
        let mut params = init_network(&spec, &mut stream(5, 0, 0, Purpose::Init)).unwrap();
        let x = array![[0.3, -0.1, 0.7, 0.2]];
        let err = forward(&mut params, &spec, NetInput::Single(x.view()), Mode::Train);
        assert!(matches!(err, Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn train_mode_normalizes_batch() {
        // One bn layer with identity weights: train-mode output has zero mean
        // and roughly unit variance per feature.
        let spec = NetworkSpec::single(vec![LayerSpec::new(2, 2, Activation::Linear, true)], 1.0)
            .unwrap();
        let mut params = init_network(&spec, &mut stream(6, 0, 0, Purpose::Init)).unwrap();
        params.layers[0].w.assign(&array![[1.0, 0.0], [0.0, 1.0]]);
        params.layers[0].b.fill(0.0);
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0], [6.0, 7.0]];
        let (out, _) = forward(&mut params, &spec, NetInput::Single(x.view()), Mode::Train)
            .unwrap();
        let mean = out.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-12));
        let var = out.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
        // Epsilon shrinks the variance slightly below one.
        assert!(var.iter().all(|&v| v > 0.9 && v <= 1.0));

        // Running statistics moved toward the batch statistics.
        let bn = params.layers[0].bn.as_ref().unwrap();
        assert!((bn.running_mean[0] - 0.01 * 3.0).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.99 + 0.01 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn dual_input_shapes_enforced() {
        let spec = critic_like();
        let mut params = init_network(&spec, &mut stream(7, 0, 0, Purpose::Init)).unwrap();
        let s = Array2::zeros((3, 4));
        let a = Array2::zeros((3, 1));
        assert!(forward(&mut params, &spec, NetInput::Dual { state: s.view(), action: a.view() },
            Mode::Train)
        .is_ok());
        assert!(forward(&mut params, &spec, NetInput::Single(s.view()), Mode::Train).is_err());
        let bad = Array2::zeros((2, 1));
        assert!(forward(
            &mut params,
            &spec,
            NetInput::Dual { state: s.view(), action: bad.view() },
            Mode::Train
        )
        .is_err());
    }
}
