//! Named-tensor binary format.
//!
//! Checkpoints and the aggregation boundary exchange parameters as an ordered
//! list of named tensors: a magic header, a tensor count, then per tensor the
//! UTF-8 name, the shape, and the values as little-endian 64-bit floats.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{NetworkParams, NetworkSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NTv1";

/// One tensor with its name and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from_array2(name: String, a: &Array2<f64>) -> Self {
        Self {
            name,
            dims: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn from_array1(name: String, a: &Array1<f64>) -> Self {
        Self { name, dims: vec![a.len()], data: a.to_vec() }
    }

    pub fn to_array2(&self, dim: (usize, usize)) -> Result<Array2<f64>> {
        if self.dims != [dim.0, dim.1] {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, expected {:?}",
                self.name,
                self.dims,
                [dim.0, dim.1]
            )));
        }
        Array2::from_shape_vec(dim, self.data.clone()).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn to_array1(&self, len: usize) -> Result<Array1<f64>> {
        if self.dims != [len] {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, expected [{len}]",
                self.name, self.dims
            )));
        }
        Ok(Array1::from_vec(self.data.clone()))
    }
}

/// Serialize tensors in order.
pub fn write_tensors(w: &mut impl Write, tensors: &[NamedTensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        let name = t.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor name too long: {}", t.name)));
        }
        let expect: usize = t.dims.iter().product();
        if expect != t.data.len() {
            return Err(Error::Shape(format!(
                "tensor {} has {} values for shape {:?}",
                t.name,
                t.data.len(),
                t.dims
            )));
        }
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[t.dims.len() as u8])?;
        for &d in &t.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read back an ordered tensor list.
pub fn read_tensors(r: &mut impl Read) -> Result<Vec<NamedTensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a tensor file".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let count = u32::from_le_bytes(buf4) as usize;

    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut buf2 = [0u8; 2];
        r.read_exact(&mut buf2)?;
        let name_len = u16::from_le_bytes(buf2) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;

        let mut buf1 = [0u8; 1];
        r.read_exact(&mut buf1)?;
        let ndim = buf1[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut buf8 = [0u8; 8];
        for _ in 0..ndim {
            r.read_exact(&mut buf8)?;
            dims.push(u64::from_le_bytes(buf8) as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut buf8)?;
            data.push(f64::from_le_bytes(buf8));
        }
        tensors.push(NamedTensor { name, dims, data });
    }
    Ok(tensors)
}

/// Network parameters as named tensors (`layer{i}.w`, `layer{i}.b`,
/// `layer{i}.bn.*`), in layer order.
pub fn params_to_tensors(params: &NetworkParams) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for (i, l) in params.layers.iter().enumerate() {
        out.push(NamedTensor::from_array2(format!("layer{i}.w"), &l.w));
        out.push(NamedTensor::from_array1(format!("layer{i}.b"), &l.b));
        if let Some(bn) = &l.bn {
            out.push(NamedTensor::from_array1(format!("layer{i}.bn.gain"), &bn.gain));
            out.push(NamedTensor::from_array1(format!("layer{i}.bn.shift"), &bn.shift));
            out.push(NamedTensor::from_array1(
                format!("layer{i}.bn.running_mean"),
                &bn.running_mean,
            ));
            out.push(NamedTensor::from_array1(
                format!("layer{i}.bn.running_var"),
                &bn.running_var,
            ));
        }
    }
    out
}

/// Rebuild network parameters from named tensors.
pub fn params_from_tensors(spec: &NetworkSpec, tensors: &[NamedTensor]) -> Result<NetworkParams> {
    let find = |name: String| -> Result<&NamedTensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let w = find(format!("layer{i}.w"))?.to_array2((l.fan_in, l.fan_out))?;
        let b = find(format!("layer{i}.b"))?.to_array1(l.fan_out)?;
        let bn = if l.batch_norm {
            Some(super::BnParams {
                gain: find(format!("layer{i}.bn.gain"))?.to_array1(l.fan_out)?,
                shift: find(format!("layer{i}.bn.shift"))?.to_array1(l.fan_out)?,
                running_mean: find(format!("layer{i}.bn.running_mean"))?.to_array1(l.fan_out)?,
                running_var: find(format!("layer{i}.bn.running_var"))?.to_array1(l.fan_out)?,
            })
        } else {
            None
        };
        layers.push(super::LayerParams { w, b, bn });
    }
    Ok(NetworkParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, Activation, LayerSpec};
    use crate::rng::{stream, Purpose};

    #[test]
    fn tensor_stream_round_trips() {
        let tensors = vec![
            NamedTensor { name: "a".into(), dims: vec![2, 3], data: vec![1.0; 6] },
            NamedTensor { name: "b.bias".into(), dims: vec![4], data: vec![-0.5, 0.0, 0.5, 2.0] },
        ];
        let mut buf = Vec::new();
        write_tensors(&mut buf, &tensors).unwrap();
        let back = read_tensors(&mut buf.as_slice()).unwrap();
        assert_eq!(tensors, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = b"XXXX\x00\x00\x00\x00";
        assert!(read_tensors(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn params_round_trip_through_tensors() {
        let spec = NetworkSpec::dual(
            vec![LayerSpec::new(4, 6, Activation::Relu, true)],
            vec![LayerSpec::new(1, 5, Activation::Relu, true)],
            vec![
                LayerSpec::new(11, 8, Activation::Relu, true),
                LayerSpec::new(8, 1, Activation::Linear, false),
            ],
            1.0,
        )
        .unwrap();
        let params = init_network(&spec, &mut stream(11, 0, 0, Purpose::Init)).unwrap();
        let mut buf = Vec::new();
        write_tensors(&mut buf, &params_to_tensors(&params)).unwrap();
        let tensors = read_tensors(&mut buf.as_slice()).unwrap();
        let back = params_from_tensors(&spec, &tensors).unwrap();
        assert_eq!(params, back);
    }
}
