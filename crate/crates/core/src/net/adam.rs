use ndarray::{Array1, Array2};

use super::tensor_io::NamedTensor;
use super::{Gradients, NetworkParams, NetworkSpec};
use crate::{Error, Result};

/// Adaptive-moment optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::InvalidParameter(format!("bad adam config: {self:?}")));
        }
        Ok(())
    }
}

/// Adam state: first/second moments per trainable tensor plus a step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &NetworkParams) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, t: 0, m: Gradients::zeros_like(params), v: Gradients::zeros_like(params) })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// Apply one bias-corrected update in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != params.layers.len() || self.m.layers.len() != params.layers.len()
        {
            return Err(Error::Shape("gradients do not match the parameters".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);

        for ((p, g), (m, v)) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            if p.w.dim() != g.dw.dim() || p.b.len() != g.db.len() {
                return Err(Error::Shape("gradient tensor shape mismatch".into()));
            }
            update_2d(&mut p.w, &g.dw, &mut m.dw, &mut v.dw, &self.cfg, bc1, bc2);
            update_1d(&mut p.b, &g.db, &mut m.db, &mut v.db, &self.cfg, bc1, bc2);
            match (&mut p.bn, &g.dbn, &mut m.dbn, &mut v.dbn) {
                (Some(bn), Some((dg, ds)), Some((mg, ms)), Some((vg, vs))) => {
                    update_1d(&mut bn.gain, dg, mg, vg, &self.cfg, bc1, bc2);
                    update_1d(&mut bn.shift, ds, ms, vs, &self.cfg, bc1, bc2);
                }
                (None, None, None, None) => {}
                _ => return Err(Error::Shape("batch-norm gradient mismatch".into())),
            }
        }
        Ok(())
    }

    /// Dump the optimizer state as named tensors (`prefix.step`,
    /// `prefix.m.*`, `prefix.v.*`).
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor {
            name: format!("{prefix}.step"),
            dims: vec![1],
            data: vec![self.t as f64],
        }];
        for (kind, moments) in [("m", &self.m), ("v", &self.v)] {
            for (i, l) in moments.layers.iter().enumerate() {
                out.push(NamedTensor::from_array2(format!("{prefix}.{kind}.layer{i}.w"), &l.dw));
                out.push(NamedTensor::from_array1(format!("{prefix}.{kind}.layer{i}.b"), &l.db));
                if let Some((dg, ds)) = &l.dbn {
                    out.push(NamedTensor::from_array1(
                        format!("{prefix}.{kind}.layer{i}.bn.gain"),
                        dg,
                    ));
                    out.push(NamedTensor::from_array1(
                        format!("{prefix}.{kind}.layer{i}.bn.shift"),
                        ds,
                    ));
                }
            }
        }
        out
    }

    /// Rebuild optimizer state from tensors produced by [`Self::to_tensors`].
    pub fn from_tensors(
        cfg: AdamConfig,
        spec: &NetworkSpec,
        prefix: &str,
        tensors: &[NamedTensor],
    ) -> Result<Self> {
        cfg.validate()?;
        let find = |name: String| -> Result<&NamedTensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let step = find(format!("{prefix}.step"))?;
        if step.data.len() != 1 {
            return Err(Error::Checkpoint("step tensor must hold one value".into()));
        }
        let t = step.data[0] as u64;

        let load = |kind: &str| -> Result<Gradients> {
            let mut layers = Vec::with_capacity(spec.layers.len());
            for (i, l) in spec.layers.iter().enumerate() {
                let dw = find(format!("{prefix}.{kind}.layer{i}.w"))?
                    .to_array2((l.fan_in, l.fan_out))?;
                let db = find(format!("{prefix}.{kind}.layer{i}.b"))?.to_array1(l.fan_out)?;
                let dbn = if l.batch_norm {
                    Some((
                        find(format!("{prefix}.{kind}.layer{i}.bn.gain"))?.to_array1(l.fan_out)?,
                        find(format!("{prefix}.{kind}.layer{i}.bn.shift"))?.to_array1(l.fan_out)?,
                    ))
                } else {
                    None
                };
                layers.push(super::LayerGrads { dw, db, dbn });
            }
            Ok(Gradients { layers })
        };
        let m = load("m")?;
        let v = load("v")?;
        Ok(Self { cfg, t, m, v })
    }
}

fn update_2d(
    p: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
    }
}

fn update_1d(
    p: &mut Array1<f64>,
    g: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, Activation, LayerSpec, NetworkSpec};
    use crate::rng::{stream, Purpose};

    fn scalar_net() -> (NetworkSpec, NetworkParams) {
        let spec = NetworkSpec::single(vec![LayerSpec::new(1, 1, Activation::Linear, false)], 1.0)
            .unwrap();
        let params = init_network(&spec, &mut stream(1, 0, 0, Purpose::Init)).unwrap();
        (spec, params)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (_, mut params) = scalar_net();
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::new(0.001), &params).unwrap();
        let grads = Gradients::zeros_like(&params);
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias-corrected first step with g = 1: update = lr / (1 + eps).
        let (_, mut params) = scalar_net();
        let w0 = params.layers[0].w[(0, 0)];
        let mut adam = Adam::new(AdamConfig::new(0.001), &params).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        grads.layers[0].dw[(0, 0)] = 1.0;
        adam.step(&mut params, &grads).unwrap();
        let delta = w0 - params.layers[0].w[(0, 0)];
        assert!((delta - 0.001).abs() < 1e-9, "delta = {delta}");
    }

    #[test]
    fn deterministic_trajectories() {
        let (_, mut p1) = scalar_net();
        let mut p2 = p1.clone();
        let mut a1 = Adam::new(AdamConfig::new(0.01), &p1).unwrap();
        let mut a2 = Adam::new(AdamConfig::new(0.01), &p2).unwrap();
        let mut grads = Gradients::zeros_like(&p1);
        for k in 0..50 {
            grads.layers[0].dw[(0, 0)] = (k as f64 * 0.37).sin();
            grads.layers[0].db[0] = (k as f64 * 0.11).cos();
            a1.step(&mut p1, &grads).unwrap();
            a2.step(&mut p2, &grads).unwrap();
        }
        assert_eq!(p1, p2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn state_round_trips_through_tensors() {
        let spec = NetworkSpec::single(
            vec![
                LayerSpec::new(3, 4, Activation::Relu, true),
                LayerSpec::new(4, 1, Activation::Tanh, false),
            ],
            1.0,
        )
        .unwrap();
        let mut params = init_network(&spec, &mut stream(2, 0, 0, Purpose::Init)).unwrap();
        let mut adam = Adam::new(AdamConfig::new(0.005), &params).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        for l in grads.layers.iter_mut() {
            l.dw.fill(0.25);
            l.db.fill(-0.5);
            if let Some((dg, ds)) = &mut l.dbn {
                dg.fill(0.1);
                ds.fill(0.2);
            }
        }
        for _ in 0..3 {
            adam.step(&mut params, &grads).unwrap();
        }
        let tensors = adam.to_tensors("adam");
        let back = Adam::from_tensors(adam.config(), &spec, "adam", &tensors).unwrap();
        assert_eq!(adam, back);
    }
}
