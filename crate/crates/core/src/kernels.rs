//! Forward and adjoint kernels shared by the eager and taped backends.

use crate::resample::{apply_separable, AxisMap};
use crate::tensor::Tensor;

/// Token index sets; attention is computed independently inside each set.
pub type TokenGroups = Vec<Vec<usize>>;

/// Axis over which [`normalize`] computes its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormAxis {
    /// Per channel, over all spatial positions (instance statistics).
    Spatial,
    /// Per spatial position, over all channels (layer statistics).
    Channel,
}

fn conv_dims(x: &Tensor, w: &Tensor) -> (usize, usize, usize, usize, usize) {
    let (ci, h, wd) = x.dims3();
    let ws = w.shape();
    assert_eq!(ws.len(), 4, "conv weight must be Co x Ci x k x k");
    assert_eq!(ws[1], ci, "conv weight expects {} input channels, got {ci}", ws[1]);
    assert_eq!(ws[2], ws[3], "square kernels only");
    assert_eq!(ws[2] % 2, 1, "odd kernels only");
    (ws[0], ci, h, wd, ws[2])
}

/// Valid `(start, end)` output range along an axis of length `n` for tap
/// offset `d`, i.e. positions `p` with `0 <= p + d < n`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let start = (-d).max(0) as usize;
    let end = (n as isize - d.max(0)).max(0) as usize;
    (start.min(end), end)
}

/// Stride-1 convolution (cross-correlation) with zero "same" padding.
pub fn conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let (co, ci, h, wd, k) = conv_dims(x, w);
    let pad = (k / 2) as isize;
    let wdat = w.data();
    let xdat = x.data();
    let hw = h * wd;
    let mut out = vec![0.0; co * hw];
    for o in 0..co {
        let dst = &mut out[o * hw..(o + 1) * hw];
        if let Some(b) = bias {
            dst.fill(b.data()[o]);
        }
        for i in 0..ci {
            let src = &xdat[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, dx);
                    let wv = wdat[((o * ci + i) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = (x0 as isize + dx) as usize;
                        let srow = &src[sy * wd + s0..sy * wd + s0 + (x1 - x0)];
                        let drow = &mut dst[y * wd + x0..y * wd + x1];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![co, h, wd], out).expect("conv output shape")
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, gout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (co, ci, h, wd, k) = conv_dims(x, w);
    let pad = (k / 2) as isize;
    let hw = h * wd;
    let xdat = x.data();
    let wdat = w.data();
    let gdat = gout.data();
    let mut gx = vec![0.0; ci * hw];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; co];
    for o in 0..co {
        let g = &gdat[o * hw..(o + 1) * hw];
        gb[o] = g.iter().sum();
        for i in 0..ci {
            let src = &xdat[i * hw..(i + 1) * hw];
            let gxi = &mut gx[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, dx);
                    let widx = ((o * ci + i) * k + ky) * k + kx;
                    let wv = wdat[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = sy * wd + (x0 as isize + dx) as usize;
                        let grow = &g[y * wd + x0..y * wd + x1];
                        let srow = &src[s0..s0 + (x1 - x0)];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                        let xrow = &mut gxi[s0..s0 + (x1 - x0)];
                        for (d, gv) in xrow.iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("gx"),
        Tensor::new(w.shape().to_vec(), gw).expect("gw"),
        Tensor::new(vec![co], gb).expect("gb"),
    )
}

/// `a (m x k) * b (k x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            for (c, bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *c += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

pub fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = a.dims2();
    let (_, n) = b.dims2();
    let ad = a.data();
    let bd = b.data();
    let gd = g.data();
    let mut ga = vec![0.0; m * k];
    let mut gb = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
            let av = ad[i * k + p];
            for (d, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *d += av * gv;
            }
        }
    }
    (
        Tensor::new(vec![m, k], ga).expect("ga"),
        Tensor::new(vec![k, n], gb).expect("gb"),
    )
}

pub fn transpose2(x: &Tensor) -> Tensor {
    let (r, c) = x.dims2();
    let d = x.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("transpose shape")
}

fn head_block(x: &[f64], d: usize, rows: &[usize], col0: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * dh);
    for &r in rows {
        out.extend_from_slice(&x[r * d + col0..r * d + col0 + dh]);
    }
    out
}

/// Row-softmax of `q k^T * scale` for one group and head (`n x n`).
fn group_probs(qb: &[f64], kb: &[f64], n: usize, dh: usize, scale: f64) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let qi = &qb[i * dh..(i + 1) * dh];
        let row = &mut p[i * n..(i + 1) * n];
        for (j, s) in row.iter_mut().enumerate() {
            let kj = &kb[j * dh..(j + 1) * dh];
            *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        row.iter_mut().for_each(|s| *s /= total);
    }
    p
}

fn check_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> (usize, usize, usize) {
    let (n, d) = q.dims2();
    assert_eq!(k.shape(), q.shape(), "key shape must match query shape");
    assert_eq!(v.shape(), q.shape(), "value shape must match query shape");
    assert!(heads >= 1 && d % heads == 0, "width {d} not divisible by {heads} heads");
    (n, d, d / heads)
}

/// Attention probabilities for every `(group, head)` pair, in group-major order.
pub fn attention_probs(q: &Tensor, k: &Tensor, groups: &TokenGroups, heads: usize) -> Vec<Vec<f64>> {
    let (_, d, dh) = check_attention(q, k, k, heads);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut all = Vec::new();
    for rows in groups {
        for h in 0..heads {
            let qb = head_block(q.data(), d, rows, h * dh, dh);
            let kb = head_block(k.data(), d, rows, h * dh, dh);
            all.push(group_probs(&qb, &kb, rows.len(), dh, scale));
        }
    }
    all
}

/// Multi-head scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`
/// computed inside every token group. Heads split the width `D` evenly.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, groups: &TokenGroups, heads: usize) -> Tensor {
    let (n, d, dh) = check_attention(q, k, v, heads);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; n * d];
    for rows in groups {
        let m = rows.len();
        for h in 0..heads {
            let c0 = h * dh;
            let qb = head_block(q.data(), d, rows, c0, dh);
            let kb = head_block(k.data(), d, rows, c0, dh);
            let vb = head_block(v.data(), d, rows, c0, dh);
            let p = group_probs(&qb, &kb, m, dh, scale);
            for (i, &r) in rows.iter().enumerate() {
                let dst = &mut out[r * d + c0..r * d + c0 + dh];
                for j in 0..m {
                    let pij = p[i * m + j];
                    for (o, vv) in dst.iter_mut().zip(&vb[j * dh..(j + 1) * dh]) {
                        *o += pij * vv;
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, d], out).expect("attention shape")
}

pub fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    groups: &TokenGroups,
    heads: usize,
    gout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, d, dh) = check_attention(q, k, v, heads);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut gq = vec![0.0; n * d];
    let mut gk = vec![0.0; n * d];
    let mut gv = vec![0.0; n * d];
    for rows in groups {
        let m = rows.len();
        for h in 0..heads {
            let c0 = h * dh;
            let qb = head_block(q.data(), d, rows, c0, dh);
            let kb = head_block(k.data(), d, rows, c0, dh);
            let vb = head_block(v.data(), d, rows, c0, dh);
            let gb = head_block(gout.data(), d, rows, c0, dh);
            let p = group_probs(&qb, &kb, m, dh, scale);
            // dP = dO V^T, dS = P * (dP - rowsum(dP * P))
            let mut ds = vec![0.0; m * m];
            for i in 0..m {
                let gi = &gb[i * dh..(i + 1) * dh];
                let mut dot = 0.0;
                for j in 0..m {
                    let vj = &vb[j * dh..(j + 1) * dh];
                    let dp: f64 = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    ds[i * m + j] = dp;
                    dot += dp * p[i * m + j];
                }
                for j in 0..m {
                    ds[i * m + j] = p[i * m + j] * (ds[i * m + j] - dot);
                }
            }
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &rj) in rows.iter().enumerate() {
                    let pij = p[i * m + j];
                    let sij = ds[i * m + j] * scale;
                    for t in 0..dh {
                        gv[rj * d + c0 + t] += pij * gb[i * dh + t];
                        gq[ri * d + c0 + t] += sij * kb[j * dh + t];
                        gk[rj * d + c0 + t] += sij * qb[i * dh + t];
                    }
                }
            }
        }
    }
    let shape = vec![n, d];
    (
        Tensor::new(shape.clone(), gq).expect("gq"),
        Tensor::new(shape.clone(), gk).expect("gk"),
        Tensor::new(shape, gv).expect("gv"),
    )
}

/// `(groups, members per group, layout code)` for [`normalize`].
fn norm_layout(shape: &[usize], axis: NormAxis) -> (usize, usize, usize) {
    let c = shape[0];
    let p: usize = shape[1..].iter().product();
    match axis {
        NormAxis::Spatial => (c, p, 0),
        NormAxis::Channel => (p, c, 1),
    }
}

#[inline]
fn norm_index(axis_code: usize, group: usize, member: usize, p: usize) -> usize {
    if axis_code == 0 {
        group * p + member
    } else {
        // group = spatial position, member = channel
        member * p + group
    }
}

/// Zero-mean unit-variance normalisation `(x - mu) / sqrt(var + eps)` with
/// biased variance. Returns the output and the per-group inverse std.
pub fn normalize(x: &Tensor, axis: NormAxis, eps: f64) -> (Tensor, Vec<f64>) {
    let (groups, members, code) = norm_layout(x.shape(), axis);
    let p = x.len() / x.shape()[0];
    let xd = x.data();
    let mut out = vec![0.0; x.len()];
    let mut inv = Vec::with_capacity(groups);
    for g in 0..groups {
        let mean = (0..members).map(|m| xd[norm_index(code, g, m, p)]).sum::<f64>() / members as f64;
        let var = (0..members)
            .map(|m| {
                let d = xd[norm_index(code, g, m, p)] - mean;
                d * d
            })
            .sum::<f64>()
            / members as f64;
        let is = 1.0 / (var + eps).sqrt();
        for m in 0..members {
            let idx = norm_index(code, g, m, p);
            out[idx] = (xd[idx] - mean) * is;
        }
        inv.push(is);
    }
    (Tensor::new(x.shape().to_vec(), out).expect("norm shape"), inv)
}

pub fn normalize_backward(y: &Tensor, inv_std: &[f64], axis: NormAxis, gout: &Tensor) -> Tensor {
    let (groups, members, code) = norm_layout(y.shape(), axis);
    let p = y.len() / y.shape()[0];
    let yd = y.data();
    let gd = gout.data();
    let mut gx = vec![0.0; y.len()];
    let nm = members as f64;
    for g in 0..groups {
        let (mut sg, mut sgy) = (0.0, 0.0);
        for m in 0..members {
            let idx = norm_index(code, g, m, p);
            sg += gd[idx];
            sgy += gd[idx] * yd[idx];
        }
        let (mg, mgy) = (sg / nm, sgy / nm);
        for m in 0..members {
            let idx = norm_index(code, g, m, p);
            gx[idx] = inv_std[g] * (gd[idx] - mg - yd[idx] * mgy);
        }
    }
    Tensor::new(y.shape().to_vec(), gx).expect("norm grad shape")
}

/// Apply separable axis maps to every channel plane of a `C x H x W` tensor.
pub fn resample(x: &Tensor, rows: &AxisMap, cols: &AxisMap) -> Tensor {
    let (c, h, w) = x.dims3();
    let (oh, ow) = (rows.out_len(), cols.out_len());
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        out.extend(apply_separable(x.plane(ch), h, w, rows, cols));
    }
    Tensor::new(vec![c, oh, ow], out).expect("resample shape")
}
