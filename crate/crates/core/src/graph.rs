//! Reverse-mode differentiation on a linear tape.

use std::sync::Arc;

use crate::backend::{fwd, sigmoid, Backend};
use crate::kernels::{self, NormAxis, TokenGroups};
use crate::resample::AxisMap;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    MulChannels(Var, Var),
    AddChannels(Var, Var),
    RepeatChannels(Var, usize),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    Transpose(Var),
    MatMul(Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        groups: Arc<TokenGroups>,
        heads: usize,
    },
    Normalize {
        x: Var,
        axis: NormAxis,
        inv_std: Vec<f64>,
    },
    Resample {
        x: Var,
        rows: Arc<AxisMap>,
        cols: Arc<AxisMap>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A tape of operations. Nodes are appended in evaluation order, so the
/// reverse of insertion order is a valid backward schedule.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a [`Graph`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` does not
    /// influence the output.
    pub fn wrt(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape().to_vec()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Back-propagate from a single-element node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.val(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.val(root).shape().to_vec(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, w, b } => {
                    let (gx, gw, gb) = kernels::conv2d_backward(self.val(*x), self.val(*w), &g);
                    acc(*x, gx);
                    acc(*w, gw);
                    if let Some(b) = b {
                        acc(*b, gb);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v));
                    acc(*a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(self.val(*b), |g, y| g * y));
                    acc(*b, g.zip_map(self.val(*a), |g, x| g * x));
                }
                Op::Div(a, b) => {
                    let y = self.val(*b);
                    acc(*a, g.zip_map(y, |g, y| g / y));
                    let gb = g.zip_map(&node.value, |g, q| g * q).zip_map(y, |gq, y| -gq / y);
                    acc(*b, gb);
                }
                Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
                Op::Offset(a) => acc(*a, g.clone()),
                Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |g, s| g * s * (1.0 - s))),
                Op::Relu(a) => acc(*a, g.zip_map(self.val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
                Op::Clamp(a, lo, hi) => acc(
                    *a,
                    g.zip_map(self.val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 }),
                ),
                Op::MulChannels(x, s) => {
                    let xv = self.val(*x);
                    let sv = self.val(*s);
                    acc(*x, fwd::channel_broadcast(&g, sv, |g, s| g * s));
                    acc(*s, channel_sums(&g.zip_map(xv, |g, x| g * x)));
                }
                Op::AddChannels(x, b) => {
                    acc(*b, channel_sums(&g));
                    acc(*x, g.clone());
                }
                Op::RepeatChannels(x, times) => {
                    let xv = self.val(*x);
                    let c = xv.shape()[0];
                    let per = xv.len() / c;
                    let mut out = Tensor::zeros(xv.shape().to_vec());
                    for (oc, chunk) in g.data().chunks(per).enumerate() {
                        let dst = &mut out.data_mut()[(oc / times) * per..(oc / times + 1) * per];
                        dst.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                    }
                    acc(*x, out);
                }
                Op::Concat(parts) => {
                    let per = g.len() / g.shape()[0];
                    let mut start = 0;
                    for p in parts {
                        let pv = self.val(*p);
                        let n = pv.len();
                        let piece = Tensor::new(pv.shape().to_vec(), g.data()[start..start + n].to_vec())
                            .expect("concat grad");
                        start += n;
                        acc(*p, piece);
                    }
                    debug_assert_eq!(start % per, 0);
                }
                Op::Slice(x, start) => {
                    let xv = self.val(*x);
                    let per = xv.len() / xv.shape()[0];
                    let mut out = Tensor::zeros(xv.shape().to_vec());
                    out.data_mut()[start * per..start * per + g.len()].copy_from_slice(g.data());
                    acc(*x, out);
                }
                Op::Reshape(x) => acc(*x, g.clone().reshape(self.val(*x).shape().to_vec())),
                Op::Transpose(x) => acc(*x, kernels::transpose2(&g)),
                Op::MatMul(a, b) => {
                    let (ga, gb) = kernels::matmul_backward(self.val(*a), self.val(*b), &g);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Attention { q, k, v, groups, heads } => {
                    let (gq, gk, gv) = kernels::attention_backward(
                        self.val(*q),
                        self.val(*k),
                        self.val(*v),
                        groups,
                        *heads,
                        &g,
                    );
                    acc(*q, gq);
                    acc(*k, gk);
                    acc(*v, gv);
                }
                Op::Normalize { x, axis, inv_std } => {
                    acc(*x, kernels::normalize_backward(&node.value, inv_std, *axis, &g));
                }
                Op::Resample { x, rows, cols } => {
                    acc(*x, kernels::resample(&g, &rows.transpose(), &cols.transpose()));
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    acc(*x, Tensor::full(self.val(*x).shape().to_vec(), gv));
                }
                Op::Mean(x) => {
                    let xv = self.val(*x);
                    let gv = g.item() / xv.len() as f64;
                    acc(*x, Tensor::full(xv.shape().to_vec(), gv));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn channel_sums(t: &Tensor) -> Tensor {
    let c = t.shape()[0];
    let per = t.len() / c;
    let data = t.data().chunks(per).map(|ch| ch.iter().sum()).collect();
    Tensor::new(vec![c], data).expect("channel sums")
}

impl Backend for Graph {
    type Var = Var;

    fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Var {
        let out = kernels::conv2d(self.val(*x), self.val(*w), b.map(|b| self.val(*b)));
        self.push(out, Op::Conv { x: *x, w: *w, b: b.copied() })
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let out = self.val(*a).zip_map(self.val(*b), |x, y| x + y);
        self.push(out, Op::Add(*a, *b))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let out = self.val(*a).zip_map(self.val(*b), |x, y| x - y);
        self.push(out, Op::Sub(*a, *b))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let out = self.val(*a).zip_map(self.val(*b), |x, y| x * y);
        self.push(out, Op::Mul(*a, *b))
    }

    fn div(&mut self, a: &Var, b: &Var) -> Var {
        let out = self.val(*a).zip_map(self.val(*b), |x, y| x / y);
        self.push(out, Op::Div(*a, *b))
    }

    fn scale(&mut self, x: &Var, s: f64) -> Var {
        let out = self.val(*x).map(|v| v * s);
        self.push(out, Op::Scale(*x, s))
    }

    fn offset(&mut self, x: &Var, s: f64) -> Var {
        let out = self.val(*x).map(|v| v + s);
        self.push(out, Op::Offset(*x))
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(sigmoid);
        self.push(out, Op::Sigmoid(*x))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(*x))
    }

    fn clamp(&mut self, x: &Var, lo: f64, hi: f64) -> Var {
        let out = self.val(*x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(*x, lo, hi))
    }

    fn mul_channels(&mut self, x: &Var, s: &Var) -> Var {
        let out = fwd::channel_broadcast(self.val(*x), self.val(*s), |a, b| a * b);
        self.push(out, Op::MulChannels(*x, *s))
    }

    fn add_channels(&mut self, x: &Var, b: &Var) -> Var {
        let out = fwd::channel_broadcast(self.val(*x), self.val(*b), |a, b| a + b);
        self.push(out, Op::AddChannels(*x, *b))
    }

    fn repeat_channels(&mut self, x: &Var, times: usize) -> Var {
        let out = fwd::repeat_channels(self.val(*x), times);
        self.push(out, Op::RepeatChannels(*x, times))
    }

    fn concat_channels(&mut self, parts: &[Var]) -> Var {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.val(*p)).collect();
        let out = fwd::concat(&refs);
        self.push(out, Op::Concat(parts.to_vec()))
    }

    fn slice_channels(&mut self, x: &Var, start: usize, len: usize) -> Var {
        let out = fwd::slice(self.val(*x), start, len);
        self.push(out, Op::Slice(*x, start))
    }

    fn reshape(&mut self, x: &Var, shape: &[usize]) -> Var {
        let out = self.val(*x).clone().reshape(shape.to_vec());
        self.push(out, Op::Reshape(*x))
    }

    fn transpose(&mut self, x: &Var) -> Var {
        let out = kernels::transpose2(self.val(*x));
        self.push(out, Op::Transpose(*x))
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let out = kernels::matmul(self.val(*a), self.val(*b));
        self.push(out, Op::MatMul(*a, *b))
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, groups: Arc<TokenGroups>, heads: usize) -> Var {
        let out = kernels::attention(self.val(*q), self.val(*k), self.val(*v), &groups, heads);
        self.push(
            out,
            Op::Attention {
                q: *q,
                k: *k,
                v: *v,
                groups,
                heads,
            },
        )
    }

    fn normalize(&mut self, x: &Var, axis: NormAxis, eps: f64) -> Var {
        let (out, inv_std) = kernels::normalize(self.val(*x), axis, eps);
        self.push(out, Op::Normalize { x: *x, axis, inv_std })
    }

    fn resample(&mut self, x: &Var, rows: Arc<AxisMap>, cols: Arc<AxisMap>) -> Var {
        let out = kernels::resample(self.val(*x), &rows, &cols);
        self.push(out, Op::Resample { x: *x, rows, cols })
    }

    fn sum(&mut self, x: &Var) -> Var {
        let out = Tensor::scalar(self.val(*x).sum());
        self.push(out, Op::Sum(*x))
    }

    fn mean(&mut self, x: &Var) -> Var {
        let xv = self.val(*x);
        let out = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(out, Op::Mean(*x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_fan_out() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![3.0, -2.0]).unwrap());
        let y = g.mul(&x, &x);
        let z = g.add(&y, &x);
        let s = g.sum(&z);
        let grads = g.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[7.0, -3.0]);
    }

    #[test]
    fn quotient_rule() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(3.0));
        let b = g.leaf(Tensor::scalar(4.0));
        let q = g.div(&a, &b);
        let grads = g.backward(q);
        assert!((grads.get(a).unwrap().item() - 0.25).abs() < 1e-15);
        assert!((grads.get(b).unwrap().item() + 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(1.0));
        let b = g.leaf(Tensor::scalar(2.0));
        let s = g.scale(&a, 5.0);
        let grads = g.backward(s);
        assert!(grads.get(b).is_none());
        assert_eq!(grads.wrt(b, &Tensor::scalar(0.0)).item(), 0.0);
    }
}
