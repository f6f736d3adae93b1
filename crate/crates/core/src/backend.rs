//! The operation set the network is written against.
//!
//! Every block is generic over [`Backend`] so the same code runs eagerly
//! (inference, values freed as soon as they go out of scope) or on a
//! [`Graph`](crate::graph::Graph) tape (training and gradient checks).

use std::sync::Arc;

use crate::kernels::{self, NormAxis, TokenGroups};
use crate::resample::AxisMap;
use crate::tensor::Tensor;

pub trait Backend {
    type Var: Clone;

    fn leaf(&mut self, t: Tensor) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor;

    fn conv2d(&mut self, x: &Self::Var, w: &Self::Var, b: Option<&Self::Var>) -> Self::Var;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn div(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn scale(&mut self, x: &Self::Var, s: f64) -> Self::Var;
    fn offset(&mut self, x: &Self::Var, s: f64) -> Self::Var;
    fn sigmoid(&mut self, x: &Self::Var) -> Self::Var;
    fn relu(&mut self, x: &Self::Var) -> Self::Var;
    fn clamp(&mut self, x: &Self::Var, lo: f64, hi: f64) -> Self::Var;

    /// `x[c, ...] * s[c]`.
    fn mul_channels(&mut self, x: &Self::Var, s: &Self::Var) -> Self::Var;
    /// `x[c, ...] + b[c]`.
    fn add_channels(&mut self, x: &Self::Var, b: &Self::Var) -> Self::Var;
    /// Repeat each leading-axis slice `times` times: output slice `c` is
    /// input slice `c / times`.
    fn repeat_channels(&mut self, x: &Self::Var, times: usize) -> Self::Var;
    fn concat_channels(&mut self, parts: &[Self::Var]) -> Self::Var;
    fn slice_channels(&mut self, x: &Self::Var, start: usize, len: usize) -> Self::Var;

    fn reshape(&mut self, x: &Self::Var, shape: &[usize]) -> Self::Var;
    fn transpose(&mut self, x: &Self::Var) -> Self::Var;
    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn attention(
        &mut self,
        q: &Self::Var,
        k: &Self::Var,
        v: &Self::Var,
        groups: Arc<TokenGroups>,
        heads: usize,
    ) -> Self::Var;
    fn normalize(&mut self, x: &Self::Var, axis: NormAxis, eps: f64) -> Self::Var;
    fn resample(&mut self, x: &Self::Var, rows: Arc<AxisMap>, cols: Arc<AxisMap>) -> Self::Var;

    fn sum(&mut self, x: &Self::Var) -> Self::Var;
    fn mean(&mut self, x: &Self::Var) -> Self::Var;
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) mod fwd {
    use super::*;

    pub fn channel_broadcast(x: &Tensor, s: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let c = x.shape()[0];
        assert_eq!(s.len(), c, "channel vector has {} entries for {c} channels", s.len());
        let per = x.len() / c;
        let mut out = x.clone();
        for (ch, chunk) in out.data_mut().chunks_mut(per).enumerate() {
            let sv = s.data()[ch];
            chunk.iter_mut().for_each(|v| *v = f(*v, sv));
        }
        out
    }

    pub fn repeat_channels(x: &Tensor, times: usize) -> Tensor {
        let c = x.shape()[0];
        let per = x.len() / c;
        let mut data = Vec::with_capacity(x.len() * times);
        for ch in 0..c {
            for _ in 0..times {
                data.extend_from_slice(&x.data()[ch * per..(ch + 1) * per]);
            }
        }
        let mut shape = x.shape().to_vec();
        shape[0] *= times;
        Tensor::new(shape, data).expect("repeat shape")
    }

    pub fn concat(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat of nothing");
        let rest = &parts[0].shape()[1..];
        let mut c = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(&p.shape()[1..], rest, "concat trailing dims differ");
            c += p.shape()[0];
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![c];
        shape.extend_from_slice(rest);
        Tensor::new(shape, data).expect("concat shape")
    }

    pub fn slice(x: &Tensor, start: usize, len: usize) -> Tensor {
        let c = x.shape()[0];
        assert!(start + len <= c, "slice {start}+{len} beyond {c} channels");
        let per = x.len() / c;
        let mut shape = x.shape().to_vec();
        shape[0] = len;
        Tensor::new(shape, x.data()[start * per..(start + len) * per].to_vec()).expect("slice shape")
    }
}

/// Eager evaluation without a tape.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Var = Arc<Tensor>;

    fn leaf(&mut self, t: Tensor) -> Self::Var {
        Arc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor {
        v
    }

    fn conv2d(&mut self, x: &Self::Var, w: &Self::Var, b: Option<&Self::Var>) -> Self::Var {
        Arc::new(kernels::conv2d(x, w, b.map(|b| &**b)))
    }

    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(a.zip_map(b, |x, y| x + y))
    }

    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(a.zip_map(b, |x, y| x - y))
    }

    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(a.zip_map(b, |x, y| x * y))
    }

    fn div(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(a.zip_map(b, |x, y| x / y))
    }

    fn scale(&mut self, x: &Self::Var, s: f64) -> Self::Var {
        Arc::new(x.map(|v| v * s))
    }

    fn offset(&mut self, x: &Self::Var, s: f64) -> Self::Var {
        Arc::new(x.map(|v| v + s))
    }

    fn sigmoid(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(x.map(sigmoid))
    }

    fn relu(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(x.map(|v| v.max(0.0)))
    }

    fn clamp(&mut self, x: &Self::Var, lo: f64, hi: f64) -> Self::Var {
        Arc::new(x.map(|v| v.clamp(lo, hi)))
    }

    fn mul_channels(&mut self, x: &Self::Var, s: &Self::Var) -> Self::Var {
        Arc::new(fwd::channel_broadcast(x, s, |a, b| a * b))
    }

    fn add_channels(&mut self, x: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(fwd::channel_broadcast(x, b, |a, b| a + b))
    }

    fn repeat_channels(&mut self, x: &Self::Var, times: usize) -> Self::Var {
        Arc::new(fwd::repeat_channels(x, times))
    }

    fn concat_channels(&mut self, parts: &[Self::Var]) -> Self::Var {
        let refs: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        Arc::new(fwd::concat(&refs))
    }

    fn slice_channels(&mut self, x: &Self::Var, start: usize, len: usize) -> Self::Var {
        Arc::new(fwd::slice(x, start, len))
    }

    fn reshape(&mut self, x: &Self::Var, shape: &[usize]) -> Self::Var {
        Arc::new((**x).clone().reshape(shape.to_vec()))
    }

    fn transpose(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(kernels::transpose2(x))
    }

    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var {
        Arc::new(kernels::matmul(a, b))
    }

    fn attention(
        &mut self,
        q: &Self::Var,
        k: &Self::Var,
        v: &Self::Var,
        groups: Arc<TokenGroups>,
        heads: usize,
    ) -> Self::Var {
        Arc::new(kernels::attention(q, k, v, &groups, heads))
    }

    fn normalize(&mut self, x: &Self::Var, axis: NormAxis, eps: f64) -> Self::Var {
        Arc::new(kernels::normalize(x, axis, eps).0)
    }

    fn resample(&mut self, x: &Self::Var, rows: Arc<AxisMap>, cols: Arc<AxisMap>) -> Self::Var {
        Arc::new(kernels::resample(x, &rows, &cols))
    }

    fn sum(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(Tensor::scalar(x.sum()))
    }

    fn mean(&mut self, x: &Self::Var) -> Self::Var {
        Arc::new(Tensor::scalar(x.sum() / x.len() as f64))
    }
}
