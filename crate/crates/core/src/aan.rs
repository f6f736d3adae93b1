//! Attention-aggregation network for the low-frequency residual.
//!
//! The residual is embedded into `F` feature channels and processed by two
//! parallel branches:
//!
//! * the channel-wise normalised residual (CNR) branch, a per-channel
//!   instance normalisation with learnable affine,
//!   `(x - mu_c) / sqrt(var_c + eps) * gamma + beta`;
//! * the multi-stage attentive aggregation (MAA) branch, a cascade of
//!   `conv -> ReLU -> aggregation` stages where each aggregation node
//!   computes `Concat(MLP(x), SPP(x)) * Attention(x)` and projects back to
//!   `F` channels.
//!
//! The branch outputs are concatenated and a zero-initialised 3x3 head maps
//! them to a correction that is added to the input, so a freshly built
//! network is the identity.

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::kernels::NormAxis;
use crate::nn::{check_channels, check_finite, Conv, Init, ParamSpec, Scope};
use crate::resample::AxisMap;

use std::sync::Arc;

pub const DEFAULT_CNR_EPS: f64 = 1e-5;

/// Architecture of one attention-aggregation network.
#[derive(Debug, Clone, PartialEq)]
pub struct AanDims {
    pub channels: usize,
    pub features: usize,
    pub stages: usize,
    pub spp_pools: Vec<usize>,
    pub eps: f64,
}

impl AanDims {
    pub fn validate(&self) -> Result<()> {
        if self.stages < 2 {
            return Err(Error::Config("the MAA branch needs at least 2 cascaded stages".into()));
        }
        if self.spp_pools.is_empty() || self.spp_pools.windows(2).any(|w| w[0] >= w[1]) || self.spp_pools[0] == 0 {
            return Err(Error::Config(format!(
                "SPP pool sizes must be positive and strictly increasing, got {:?}",
                self.spp_pools
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("CNR epsilon must be positive".into()));
        }
        if self.features == 0 || self.channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Feature groups multiplied by the attention map: MLP plus one per pool.
    pub fn groups(&self) -> usize {
        1 + self.spp_pools.len()
    }

    pub fn specs(&self, prefix: &str) -> Vec<ParamSpec> {
        let (c, f, g) = (self.channels, self.features, self.groups());
        let mut specs = Conv::<()>::specs(&format!("{prefix}.embed"), c, f, 3, false);
        specs.push(ParamSpec::new(format!("{prefix}.cnr.gamma"), vec![f], Init::Ones));
        specs.push(ParamSpec::new(format!("{prefix}.cnr.beta"), vec![f], Init::Zeros));
        for s in 0..self.stages {
            let p = format!("{prefix}.maa.{s}");
            specs.extend(Conv::<()>::specs(&format!("{p}.conv"), f, f, 3, false));
            specs.extend(Conv::<()>::specs(&format!("{p}.mlp1"), f, f, 1, false));
            specs.extend(Conv::<()>::specs(&format!("{p}.mlp2"), f, f, 1, false));
            specs.extend(Conv::<()>::specs(&format!("{p}.attn"), f, g, 1, false));
            specs.extend(Conv::<()>::specs(&format!("{p}.proj"), g * f, f, 1, false));
        }
        specs.extend(Conv::<()>::specs(&format!("{prefix}.head"), 2 * f, c, 3, true));
        specs
    }
}

#[derive(Debug, Clone)]
pub struct CnrParams<V> {
    pub gamma: V,
    pub beta: V,
    pub eps: f64,
}

/// One cascaded stage of the MAA branch.
#[derive(Debug, Clone)]
pub struct MaaStage<V> {
    pub conv: Conv<V>,
    pub mlp1: Conv<V>,
    pub mlp2: Conv<V>,
    pub attn: Conv<V>,
    pub proj: Conv<V>,
}

#[derive(Debug, Clone)]
pub struct MaaParams<V> {
    pub stages: Vec<MaaStage<V>>,
    pub spp_pools: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AanParams<V> {
    pub embed: Conv<V>,
    pub cnr: CnrParams<V>,
    pub maa: MaaParams<V>,
    pub head: Conv<V>,
}

impl<V: Clone> AanParams<V> {
    pub fn bind(scope: &Scope<V>, prefix: &str, dims: &AanDims) -> Result<Self> {
        let stages = (0..dims.stages)
            .map(|s| {
                let p = format!("{prefix}.maa.{s}");
                Ok(MaaStage {
                    conv: Conv::bind(scope, &format!("{p}.conv"))?,
                    mlp1: Conv::bind(scope, &format!("{p}.mlp1"))?,
                    mlp2: Conv::bind(scope, &format!("{p}.mlp2"))?,
                    attn: Conv::bind(scope, &format!("{p}.attn"))?,
                    proj: Conv::bind(scope, &format!("{p}.proj"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AanParams {
            embed: Conv::bind(scope, &format!("{prefix}.embed"))?,
            cnr: CnrParams {
                gamma: scope.get(&format!("{prefix}.cnr.gamma"))?,
                beta: scope.get(&format!("{prefix}.cnr.beta"))?,
                eps: dims.eps,
            },
            maa: MaaParams {
                stages,
                spp_pools: dims.spp_pools.clone(),
            },
            head: Conv::bind(scope, &format!("{prefix}.head"))?,
        })
    }
}

/// Channel-wise normalised residual block.
pub fn cnr_block<B: Backend>(b: &mut B, x: &B::Var, p: &CnrParams<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.gamma).len();
    check_channels(b, x, c, "CNR")?;
    if b.value(&p.beta).len() != c {
        return Err(Error::shape("CNR gamma and beta lengths differ"));
    }
    check_finite(b, x, "CNR input")?;
    let n = b.normalize(x, NormAxis::Spatial, p.eps);
    let s = b.mul_channels(&n, &p.gamma);
    Ok(b.add_channels(&s, &p.beta))
}

/// Spatial pyramid pooling: average-pool to `s x s` for every pool size and
/// restore to `H x W` bilinearly. Output has `F * pools` channels.
pub fn spp<B: Backend>(b: &mut B, x: &B::Var, pools: &[usize]) -> B::Var {
    let (_, h, w) = b.value(x).dims3();
    let parts: Vec<B::Var> = pools
        .iter()
        .map(|&s| {
            let pooled = b.resample(
                x,
                Arc::new(AxisMap::adaptive_avg(h, s)),
                Arc::new(AxisMap::adaptive_avg(w, s)),
            );
            b.resample(
                &pooled,
                Arc::new(AxisMap::bilinear(s, h)),
                Arc::new(AxisMap::bilinear(s, w)),
            )
        })
        .collect();
    b.concat_channels(&parts)
}

/// `Concat(MLP(x), SPP(x))`, `(1 + pools) * F` channels.
pub fn maa_features<B: Backend>(b: &mut B, x: &B::Var, stage: &MaaStage<B::Var>, pools: &[usize]) -> B::Var {
    let hidden = stage.mlp1.forward(b, x);
    let hidden = b.relu(&hidden);
    let mlp = stage.mlp2.forward(b, &hidden);
    let pooled = spp(b, x, pools);
    b.concat_channels(&[mlp, pooled])
}

/// Per-pixel attention weights in `[0, 1]`, one map per feature group.
pub fn maa_attention<B: Backend>(b: &mut B, x: &B::Var, stage: &MaaStage<B::Var>) -> B::Var {
    let logits = stage.attn.forward(b, x);
    b.sigmoid(&logits)
}

/// Broadcast multiply of grouped features by their attention maps.
pub fn fuse<B: Backend>(b: &mut B, features: &B::Var, weights: &B::Var) -> Result<B::Var> {
    let fc = b.value(features).shape()[0];
    let g = b.value(weights).shape()[0];
    if g == 0 || fc % g != 0 {
        return Err(Error::shape(format!("{fc} feature channels cannot be split into {g} groups")));
    }
    let w = b.repeat_channels(weights, fc / g);
    Ok(b.mul(features, &w))
}

/// One attentive-aggregation node: `proj(Concat(MLP(x), SPP(x)) * Attention(x))`.
pub fn attentive_aggregation<B: Backend>(
    b: &mut B,
    x: &B::Var,
    stage: &MaaStage<B::Var>,
    pools: &[usize],
) -> Result<B::Var> {
    let feats = maa_features(b, x, stage, pools);
    let weights = maa_attention(b, x, stage);
    let fused = fuse(b, &feats, &weights)?;
    Ok(stage.proj.forward(b, &fused))
}

/// Cascade of `prev + aggregation(ReLU(conv(prev)))` stages.
pub fn maa_block<B: Backend>(b: &mut B, x: &B::Var, p: &MaaParams<B::Var>) -> Result<B::Var> {
    let f = b.value(&p.stages.first().ok_or_else(|| Error::Config("MAA without stages".into()))?.conv.bias).len();
    check_channels(b, x, f, "MAA")?;
    let mut prev = x.clone();
    for stage in &p.stages {
        let h = stage.conv.forward(b, &prev);
        let h = b.relu(&h);
        let agg = attentive_aggregation(b, &h, stage, &p.spp_pools)?;
        prev = b.add(&prev, &agg);
    }
    Ok(prev)
}

/// `low + head(Concat(CNR(embed(low)), MAA(embed(low))))` on a `C x H x W`
/// low band.
pub fn aan_forward<B: Backend>(b: &mut B, low: &B::Var, p: &AanParams<B::Var>) -> Result<B::Var> {
    let c = b.value(&p.head.bias).len();
    check_channels(b, low, c, "AAN")?;
    let feat = p.embed.forward(b, low);
    let cnr = cnr_block(b, &feat, &p.cnr)?;
    let maa = maa_block(b, &feat, &p.maa)?;
    let merged = b.concat_channels(&[cnr, maa]);
    let correction = p.head.forward(b, &merged);
    Ok(b.add(low, &correction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Eager;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type V = <Eager as Backend>::Var;

    fn leaf(b: &mut Eager, shape: &[usize], data: Vec<f64>) -> V {
        b.leaf(Tensor::new(shape.to_vec(), data).unwrap())
    }

    fn cnr(b: &mut Eager, gamma: Vec<f64>, beta: Vec<f64>, eps: f64) -> CnrParams<V> {
        let n = gamma.len();
        CnrParams {
            gamma: leaf(b, &[n], gamma),
            beta: leaf(b, &[n], beta),
            eps,
        }
    }

    fn dims(features: usize) -> AanDims {
        AanDims {
            channels: 3,
            features,
            stages: 3,
            spp_pools: vec![1, 2, 4],
            eps: DEFAULT_CNR_EPS,
        }
    }

    fn random_params(b: &mut Eager, d: &AanDims, seed: u64) -> AanParams<V> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = d.specs("aan");
        let tensors: Vec<(String, Tensor)> = specs.iter().map(|s| (s.name.clone(), s.initialise(&mut rng))).collect();
        let scope = Scope::bind(b, tensors.iter().map(|(n, t)| (n.as_str(), t.clone())));
        AanParams::bind(&scope, "aan", d).unwrap()
    }

    #[test]
    fn cnr_zero_variance_channel_vanishes() {
        let mut b = Eager;
        let x = leaf(&mut b, &[2, 2, 2], vec![0.3, 0.3, 0.3, 0.3, 1.0, 2.0, 3.0, 4.0]);
        let p = cnr(&mut b, vec![1.0, 1.0], vec![0.0, 0.0], 1e-5);
        let y = cnr_block(&mut b, &x, &p).unwrap();
        assert!(y.data()[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cnr_fixed_point_on_standardised_input() {
        let mut b = Eager;
        let data = vec![-1.0, 1.0, 1.0, -1.0];
        let x = leaf(&mut b, &[1, 2, 2], data.clone());
        let eps = 1e-5;
        let p = cnr(&mut b, vec![1.0], vec![0.0], eps);
        let y = cnr_block(&mut b, &x, &p).unwrap();
        let s = 1.0 / (1.0 + eps).sqrt();
        for (got, want) in y.data().iter().zip(&data) {
            assert!((got - want * s).abs() < 1e-15);
        }
    }

    #[test]
    fn cnr_hand_evaluated() {
        let mut b = Eager;
        let x = leaf(&mut b, &[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let p = cnr(&mut b, vec![2.0], vec![1.0], 0.0);
        let y = cnr_block(&mut b, &x, &p).unwrap();
        // mean 2.5, variance 1.25
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            let want = 2.0 * (v - 2.5) / 1.25f64.sqrt() + 1.0;
            assert!((y.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cnr_rejects_bad_input() {
        let mut b = Eager;
        let x = leaf(&mut b, &[2, 1, 2], vec![0.0, 1.0, 2.0, f64::NAN]);
        let p = cnr(&mut b, vec![1.0, 1.0], vec![0.0, 0.0], 1e-5);
        assert!(matches!(cnr_block(&mut b, &x, &p), Err(Error::NonFinite(_))));
        let p3 = cnr(&mut b, vec![1.0; 3], vec![0.0; 3], 1e-5);
        let x = leaf(&mut b, &[2, 1, 2], vec![0.0; 4]);
        assert!(matches!(cnr_block(&mut b, &x, &p3), Err(Error::Shape(_))));
    }

    #[test]
    fn cnr_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = Eager;
        let x = b.leaf(Tensor::uniform(vec![4, 6, 5], -2.0, 3.0, &mut rng));
        let gamma = vec![0.5, -2.0, 1.5, 3.0];
        let beta = vec![0.1, -0.4, 2.0, 0.0];
        let eps = 1e-2;
        let p = cnr(&mut b, gamma.clone(), beta.clone(), eps);
        let y = cnr_block(&mut b, &x, &p).unwrap();
        for c in 0..4 {
            let xs = x.plane(c);
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
            let ys = y.plane(c);
            let my = ys.iter().sum::<f64>() / n;
            let sy = (ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n).sqrt();
            assert!((my - beta[c]).abs() < 1e-4);
            assert!((sy - gamma[c].abs() * (vx / (vx + eps)).sqrt()).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_weights_annihilate_fusion() {
        let mut b = Eager;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats = b.leaf(Tensor::uniform(vec![8, 3, 3], -1.0, 1.0, &mut rng));
        let weights = b.leaf(Tensor::zeros(vec![4, 3, 3]));
        let fused = fuse(&mut b, &feats, &weights).unwrap();
        assert!(fused.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_weights_in_unit_interval() {
        let mut b = Eager;
        let d = dims(4);
        let p = random_params(&mut b, &d, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = b.leaf(Tensor::uniform(vec![4, 5, 7], -20.0, 20.0, &mut rng));
        let w = maa_attention(&mut b, &x, &p.maa.stages[0]);
        assert_eq!(w.shape(), &[4, 5, 7]);
        assert!(w.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Straight-line evaluation of one aggregation node on a 1-channel 4x4
    /// map with unit 1x1 weights and zero biases.
    #[test]
    fn aggregation_matches_step_by_step_oracle() {
        let mut b = Eager;
        let xs: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = leaf(&mut b, &[1, 4, 4], xs.clone());
        let unit = |b: &mut Eager, cin: usize, cout: usize| Conv {
            weight: leaf(b, &[cout, cin, 1, 1], vec![1.0; cout * cin]),
            bias: leaf(b, &[cout], vec![0.0; cout]),
        };
        let stage = MaaStage {
            conv: unit(&mut b, 1, 1),
            mlp1: unit(&mut b, 1, 1),
            mlp2: unit(&mut b, 1, 1),
            attn: unit(&mut b, 1, 4),
            proj: unit(&mut b, 4, 1),
        };
        let got = attentive_aggregation(&mut b, &x, &stage, &[1, 2, 4]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mean = |vals: &[f64]| vals.iter().sum::<f64>() / vals.len() as f64;
        // pool 1: global mean broadcast
        let p1 = mean(&xs);
        // pool 2: 2x2 block means; bilinear restore 2 -> 4 uses taps
        // (0.75, 0.25) / (0.25, 0.75) for interior samples and clamps at the edges.
        let blocks: Vec<f64> = (0..4)
            .map(|bi| {
                let (by, bx) = (bi / 2, bi % 2);
                mean(&[
                    xs[(2 * by) * 4 + 2 * bx],
                    xs[(2 * by) * 4 + 2 * bx + 1],
                    xs[(2 * by + 1) * 4 + 2 * bx],
                    xs[(2 * by + 1) * 4 + 2 * bx + 1],
                ])
            })
            .collect();
        let lerp_axis = |i: usize| -> Vec<(usize, f64)> {
            match i {
                0 => vec![(0, 1.0)],
                1 => vec![(0, 0.75), (1, 0.25)],
                2 => vec![(0, 0.25), (1, 0.75)],
                _ => vec![(1, 1.0)],
            }
        };
        for y in 0..4 {
            for xx in 0..4 {
                let v = xs[y * 4 + xx];
                let mlp = v.max(0.0);
                let mut p2 = 0.0;
                for &(ry, wy) in &lerp_axis(y) {
                    for &(rx, wx) in &lerp_axis(xx) {
                        p2 += wy * wx * blocks[ry * 2 + rx];
                    }
                }
                let p4 = v;
                let a = sig(v);
                let want = a * (mlp + p1 + p2 + p4);
                assert!((got.data()[y * 4 + xx] - want).abs() < 1e-12, "({y},{xx})");
            }
        }
    }

    #[test]
    fn forward_is_identity_with_zero_head() {
        let mut b = Eager;
        let d = dims(6);
        let p = random_params(&mut b, &d, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let low = b.leaf(Tensor::uniform(vec![3, 9, 7], 0.0, 1.0, &mut rng));
        let out = aan_forward(&mut b, &low, &p).unwrap();
        assert_eq!(out.shape(), low.shape());
        assert_eq!(out.data(), low.data());
    }

    #[test]
    fn forward_is_finite_and_shape_preserving() {
        let mut b = Eager;
        let d = dims(5);
        let mut p = random_params(&mut b, &d, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        p.head.weight = b.leaf(Tensor::uniform(vec![3, 10, 3, 3], -0.3, 0.3, &mut rng));
        for (h, w) in [(4, 4), (5, 9), (16, 16)] {
            let low = b.leaf(Tensor::uniform(vec![3, h, w], 0.0, 1.0, &mut rng));
            let out = aan_forward(&mut b, &low, &p).unwrap();
            assert_eq!(out.shape(), &[3, h, w]);
            assert!(out.is_finite());
            assert!(out.max_abs_diff(&low) > 0.0);
        }
    }

    #[test]
    fn dims_validation() {
        let mut d = dims(4);
        assert!(d.validate().is_ok());
        d.stages = 1;
        assert!(d.validate().is_err());
        d.stages = 2;
        d.spp_pools = vec![1, 4, 2];
        assert!(d.validate().is_err());
    }
}
