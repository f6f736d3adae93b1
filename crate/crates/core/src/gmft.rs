//! Gated multi-scale fusion transformer for the high-frequency bands.
//!
//! Each band is embedded into `F` channels and passed through
//!
//! ```text
//! ResBlock -> GIA x n -> 1x1 expand -> SimpleGate -> channel attention
//!          -> BMT (spatial tokens, then channel tokens) -> DGFN -> head
//! ```
//!
//! and the zero-initialised head's output is added back to the band. Every
//! pyramid level owns its own parameter set.

use std::sync::Arc;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::kernels::TokenGroups;
use crate::nn::{check_channels, Conv, Init, LayerNorm, ParamSpec, Scope};
use crate::resample::AxisMap;

/// Architecture of one per-level transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct GmftDims {
    pub channels: usize,
    pub features: usize,
    pub gia_blocks: usize,
    pub heads: usize,
    pub ffn_expansion: usize,
}

impl GmftDims {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.heads == 0 || !self.features.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} features cannot be split into {} attention heads",
                self.features, self.heads
            )));
        }
        if self.ffn_expansion < 1 {
            return Err(Error::Config("feed-forward expansion must be at least 1".into()));
        }
        Ok(())
    }

    pub fn specs(&self, prefix: &str) -> Vec<ParamSpec> {
        let (c, f, e) = (self.channels, self.features, self.ffn_expansion);
        let mut specs = Conv::<()>::specs(&format!("{prefix}.embed"), c, f, 3, false);
        specs.extend(Conv::<()>::specs(&format!("{prefix}.res.conv1"), f, f, 3, false));
        specs.extend(Conv::<()>::specs(&format!("{prefix}.res.conv2"), f, f, 3, false));
        for i in 0..self.gia_blocks {
            specs.push(ParamSpec::new(format!("{prefix}.gia.{i}.w_g"), vec![f, f, 1, 1], Init::FanIn(f)));
            specs.push(ParamSpec::new(format!("{prefix}.gia.{i}.b_g"), vec![f], Init::Zeros));
        }
        specs.extend(Conv::<()>::specs(&format!("{prefix}.expand"), f, 2 * f, 1, false));
        specs.extend(Conv::<()>::specs(&format!("{prefix}.ca"), f, f, 1, false));
        specs.extend(LayerNorm::<()>::specs(&format!("{prefix}.bmt.spatial.norm"), f));
        for proj in ["q", "k", "v", "out"] {
            specs.push(ParamSpec::new(
                format!("{prefix}.bmt.spatial.{proj}"),
                vec![f, f],
                Init::FanIn(f),
            ));
        }
        specs.extend(LayerNorm::<()>::specs(&format!("{prefix}.bmt.channel.norm"), f));
        for proj in ["q", "k", "v", "out"] {
            specs.extend(Conv::<()>::specs(&format!("{prefix}.bmt.channel.{proj}"), f, f, 1, false));
        }
        specs.extend(Conv::<()>::specs(&format!("{prefix}.dgfn.w1"), f, e * f, 1, false));
        specs.extend(Conv::<()>::specs(&format!("{prefix}.dgfn.wg"), f, e * f, 1, false));
        specs.extend(Conv::<()>::specs(&format!("{prefix}.dgfn.w2"), e * f, f, 1, false));
        specs.extend(Conv::<()>::specs(&format!("{prefix}.head"), f, c, 3, true));
        specs
    }
}

#[derive(Debug, Clone)]
pub struct ResBlockParams<V> {
    pub conv1: Conv<V>,
    pub conv2: Conv<V>,
}

/// `GIA(x) = x * sigmoid(W_g x) + b_g`, `W_g` a 1x1 channel map.
#[derive(Debug, Clone)]
pub struct GiaParams<V> {
    pub w_g: V,
    pub b_g: V,
}

/// Linear maps for token-matrix attention (`N x D` tokens, `D x D` maps).
#[derive(Debug, Clone)]
pub struct AttentionParams<V> {
    pub q: V,
    pub k: V,
    pub v: V,
    pub out: V,
    pub heads: usize,
}

/// Channel-token attention: projections are 1x1 channel maps.
#[derive(Debug, Clone)]
pub struct ChannelTokenParams<V> {
    pub q: Conv<V>,
    pub k: Conv<V>,
    pub v: Conv<V>,
    pub out: Conv<V>,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct BmtParams<V> {
    pub spatial_norm: LayerNorm<V>,
    pub spatial: AttentionParams<V>,
    pub channel_norm: LayerNorm<V>,
    pub channel: ChannelTokenParams<V>,
}

/// `W_2(ReLU(W_1 x + b_1) * sigmoid(W_g x + b_g)) + b_2`.
#[derive(Debug, Clone)]
pub struct DgfnParams<V> {
    pub w1: Conv<V>,
    pub wg: Conv<V>,
    pub w2: Conv<V>,
}

#[derive(Debug, Clone)]
pub struct GmftParams<V> {
    pub embed: Conv<V>,
    pub res: ResBlockParams<V>,
    pub gia: Vec<GiaParams<V>>,
    pub expand: Conv<V>,
    pub ca: Conv<V>,
    pub bmt: BmtParams<V>,
    pub dgfn: DgfnParams<V>,
    pub head: Conv<V>,
}

impl<V: Clone> GmftParams<V> {
    pub fn bind(scope: &Scope<V>, prefix: &str, dims: &GmftDims) -> Result<Self> {
        let conv = |name: &str| Conv::bind(scope, &format!("{prefix}.{name}"));
        let gia = (0..dims.gia_blocks)
            .map(|i| {
                Ok(GiaParams {
                    w_g: scope.get(&format!("{prefix}.gia.{i}.w_g"))?,
                    b_g: scope.get(&format!("{prefix}.gia.{i}.b_g"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sp = |p: &str| scope.get(&format!("{prefix}.bmt.spatial.{p}"));
        Ok(GmftParams {
            embed: conv("embed")?,
            res: ResBlockParams {
                conv1: conv("res.conv1")?,
                conv2: conv("res.conv2")?,
            },
            gia,
            expand: conv("expand")?,
            ca: conv("ca")?,
            bmt: BmtParams {
                spatial_norm: LayerNorm::bind(scope, &format!("{prefix}.bmt.spatial.norm"))?,
                spatial: AttentionParams {
                    q: sp("q")?,
                    k: sp("k")?,
                    v: sp("v")?,
                    out: sp("out")?,
                    heads: dims.heads,
                },
                channel_norm: LayerNorm::bind(scope, &format!("{prefix}.bmt.channel.norm"))?,
                channel: ChannelTokenParams {
                    q: conv("bmt.channel.q")?,
                    k: conv("bmt.channel.k")?,
                    v: conv("bmt.channel.v")?,
                    out: conv("bmt.channel.out")?,
                    heads: dims.heads,
                },
            },
            dgfn: DgfnParams {
                w1: conv("dgfn.w1")?,
                wg: conv("dgfn.wg")?,
                w2: conv("dgfn.w2")?,
            },
            head: conv("head")?,
        })
    }
}

/// How spatial tokens are grouped for attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialAttention {
    /// Every pixel attends to every pixel of the band.
    Global,
    /// Non-overlapping `n x n` windows; edge windows may be smaller.
    Window(usize),
}

impl SpatialAttention {
    pub fn groups(self, h: usize, w: usize) -> TokenGroups {
        match self {
            SpatialAttention::Global => vec![(0..h * w).collect()],
            SpatialAttention::Window(n) => {
                let n = n.max(1);
                let mut groups = Vec::new();
                for wy in (0..h).step_by(n) {
                    for wx in (0..w).step_by(n) {
                        let mut g = Vec::with_capacity(n * n);
                        for y in wy..(wy + n).min(h) {
                            for x in wx..(wx + n).min(w) {
                                g.push(y * w + x);
                            }
                        }
                        groups.push(g);
                    }
                }
                groups
            }
        }
    }
}

/// `x + conv2(ReLU(conv1(x)))`.
pub fn res_block<B: Backend>(b: &mut B, x: &B::Var, p: &ResBlockParams<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.conv2.bias).len();
    check_channels(b, x, c, "ResBlock")?;
    let h = p.conv1.forward(b, x);
    let h = b.relu(&h);
    let h = p.conv2.forward(b, &h);
    Ok(b.add(x, &h))
}

pub fn gia_block<B: Backend>(b: &mut B, x: &B::Var, p: &GiaParams<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.b_g).len();
    check_channels(b, x, c, "GIA")?;
    let ws = b.value(&p.w_g).shape();
    if ws != [c, c, 1, 1] {
        return Err(Error::shape(format!("GIA gate must be {c} x {c} x 1 x 1, got {ws:?}")));
    }
    let logits = b.conv2d(x, &p.w_g, None);
    let gate = b.sigmoid(&logits);
    let gated = b.mul(x, &gate);
    Ok(b.add_channels(&gated, &p.b_g))
}

/// Split channels into halves `(a, b)` and return `a * b`.
pub fn simple_gate<B: Backend>(b: &mut B, x: &B::Var) -> Result<B::Var> {
    let c = b.value(x).shape()[0];
    if c % 2 != 0 {
        return Err(Error::shape(format!("SimpleGate needs an even channel count, got {c}")));
    }
    let first = b.slice_channels(x, 0, c / 2);
    let second = b.slice_channels(x, c / 2, c / 2);
    Ok(b.mul(&first, &second))
}

/// Scale each channel by a 1x1 linear map of the globally pooled channel
/// vector.
pub fn channel_attention<B: Backend>(b: &mut B, x: &B::Var, p: &Conv<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.bias).len();
    check_channels(b, x, c, "channel attention")?;
    let (_, h, w) = b.value(x).dims3();
    let pooled = b.resample(
        x,
        Arc::new(AxisMap::adaptive_avg(h, 1)),
        Arc::new(AxisMap::adaptive_avg(w, 1)),
    );
    let scale = p.forward(b, &pooled);
    let scale = b.reshape(&scale, &[c]);
    Ok(b.mul_channels(x, &scale))
}

/// Token-matrix self-attention: `out_proj(attention(x W_q, x W_k, x W_v))`
/// computed within each token group.
pub fn self_attention<B: Backend>(
    b: &mut B,
    x: &B::Var,
    p: &AttentionParams<B::Var>,
    groups: Arc<TokenGroups>,
) -> Result<B::Var> {
    let shape = b.value(x).shape().to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::shape(format!("tokens must be N x D with N >= 1, got {shape:?}")));
    }
    let d = shape[1];
    if p.heads == 0 || d % p.heads != 0 {
        return Err(Error::shape(format!("width {d} not divisible by {} heads", p.heads)));
    }
    for m in [&p.q, &p.k, &p.v, &p.out] {
        if b.value(m).shape() != [d, d] {
            return Err(Error::shape(format!("projection must be {d} x {d}")));
        }
    }
    let q = b.matmul(x, &p.q);
    let k = b.matmul(x, &p.k);
    let v = b.matmul(x, &p.v);
    let a = b.attention(&q, &k, &v, groups, p.heads);
    Ok(b.matmul(&a, &p.out))
}

/// Spatial-token pass then channel-token pass, each pre-normalised and
/// residual.
pub fn bmt_block<B: Backend>(
    b: &mut B,
    x: &B::Var,
    p: &BmtParams<B::Var>,
    spatial: SpatialAttention,
) -> Result<B::Var> {
    let (c, h, w) = b.value(x).dims3();
    check_channels(b, x, b.value(&p.spatial_norm.gamma).len(), "BMT")?;
    let n = h * w;

    // pixels as tokens
    let normed = p.spatial_norm.forward(b, x);
    let flat = b.reshape(&normed, &[c, n]);
    let tokens = b.transpose(&flat);
    let attended = self_attention(b, &tokens, &p.spatial, Arc::new(spatial.groups(h, w)))?;
    let back = b.transpose(&attended);
    let back = b.reshape(&back, &[c, h, w]);
    let x = b.add(x, &back);

    // channels as tokens, heads partition the channels
    let cp = &p.channel;
    if cp.heads == 0 || c % cp.heads != 0 {
        return Err(Error::shape(format!("{c} channels not divisible by {} heads", cp.heads)));
    }
    let normed = p.channel_norm.forward(b, &x);
    let q = cp.q.forward(b, &normed);
    let k = cp.k.forward(b, &normed);
    let v = cp.v.forward(b, &normed);
    let (q, k, v) = (b.reshape(&q, &[c, n]), b.reshape(&k, &[c, n]), b.reshape(&v, &[c, n]));
    let per = c / cp.heads;
    let groups: TokenGroups = (0..cp.heads).map(|hd| (hd * per..(hd + 1) * per).collect()).collect();
    let a = b.attention(&q, &k, &v, Arc::new(groups), 1);
    let a = b.reshape(&a, &[c, h, w]);
    let a = cp.out.forward(b, &a);
    Ok(b.add(&x, &a))
}

/// Gated feed-forward network with a residual connection.
pub fn dgfn<B: Backend>(b: &mut B, x: &B::Var, p: &DgfnParams<B::Var>) -> Result<B::Var> {
    let branch = dgfn_branch(b, x, p)?;
    Ok(b.add(x, &branch))
}

/// The gated feed-forward expression without the residual.
pub fn dgfn_branch<B: Backend>(b: &mut B, x: &B::Var, p: &DgfnParams<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.w2.bias).len();
    check_channels(b, x, c, "DGFN")?;
    let value = p.w1.forward(b, x);
    let value = b.relu(&value);
    let gate = p.wg.forward(b, x);
    let gate = b.sigmoid(&gate);
    let gated = b.mul(&value, &gate);
    Ok(p.w2.forward(b, &gated))
}

/// `band + head(DGFN(BMT(CA(SimpleGate(expand(GIA^n(ResBlock(embed(band)))))))))`.
pub fn gmft_forward<B: Backend>(
    b: &mut B,
    band: &B::Var,
    p: &GmftParams<B::Var>,
    spatial: SpatialAttention,
) -> Result<B::Var> {
    let c = b.value(&p.head.bias).len();
    check_channels(b, band, c, "GMFT")?;
    let mut x = p.embed.forward(b, band);
    x = res_block(b, &x, &p.res)?;
    for g in &p.gia {
        x = gia_block(b, &x, g)?;
    }
    let expanded = p.expand.forward(b, &x);
    x = simple_gate(b, &expanded)?;
    x = channel_attention(b, &x, &p.ca)?;
    x = bmt_block(b, &x, &p.bmt, spatial)?;
    x = dgfn(b, &x, &p.dgfn)?;
    let correction = p.head.forward(b, &x);
    Ok(b.add(band, &correction))
}
