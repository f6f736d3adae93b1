//! Training losses and the PSNR / SSIM / RMSE evaluation metrics.
//!
//! Metrics work on the 0-255 scale because the SSIM stabilisers are defined
//! there. Images are stored in `[0, 1]` and rescaled on the fly.
//!
//! ```
//! use deshadow::image::Image;
//! use deshadow::metrics::{psnr, rmse, ssim, LossConfig};
//!
//! let a = Image::constant(16, 16, 3, 0.5).unwrap();
//! let b = a.map(|v| v + 1.0 / 255.0).unwrap();
//! assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
//! assert!((rmse(&a, &b).unwrap() - 1.0).abs() < 1e-4);
//! assert_eq!(ssim(&a, &a, &LossConfig::default()).unwrap(), 1.0);
//! assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::AxisMap;

pub const DEFAULT_C1: f64 = 6.5025;
pub const DEFAULT_C2: f64 = 58.5225;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimMode {
    /// One evaluation with whole-image statistics.
    Global,
    /// Mean over 11x11 Gaussian windows (sigma 1.5), valid positions only.
    Windowed,
}

impl fmt::Display for SsimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SsimMode::Global => "global",
            SsimMode::Windowed => "windowed",
        })
    }
}

impl FromStr for SsimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(SsimMode::Global),
            "windowed" => Ok(SsimMode::Windowed),
            other => Err(Error::Config(format!("unknown SSIM mode `{other}`"))),
        }
    }
}

/// How squared errors are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

/// How the SSIM value enters the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimTerm {
    /// `lambda * (1 - SSIM)`.
    OneMinus,
    /// `lambda * SSIM`, taken literally.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_ssim: f64,
    pub c1: f64,
    pub c2: f64,
    pub ssim_mode: SsimMode,
    pub metric_range: f64,
    pub mse_reduction: Reduction,
    pub ssim_term: SsimTerm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_ssim: 0.2,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            ssim_mode: SsimMode::Windowed,
            metric_range: 255.0,
            mse_reduction: Reduction::Mean,
            ssim_term: SsimTerm::OneMinus,
        }
    }
}

impl LossConfig {
    /// Configuration used for reported metrics: global SSIM.
    pub fn metric() -> Self {
        LossConfig {
            ssim_mode: SsimMode::Global,
            ..LossConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ssim >= 0.0) {
            return Err(Error::Config("lambda_ssim must be non-negative".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Config("SSIM constants must be positive".into()));
        }
        if !(self.metric_range > 0.0) {
            return Err(Error::Config("metric range must be positive".into()));
        }
        Ok(())
    }
}

/// Side of the SSIM window for an `h x w` image: 11, or the largest odd
/// size that fits.
pub fn ssim_window(h: usize, w: usize) -> usize {
    let m = SSIM_WINDOW.min(h).min(w).max(1);
    if m.is_multiple_of(2) {
        m - 1
    } else {
        m
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.data().shape() != b.data().shape() {
        return Err(Error::shape(format!(
            "image shapes differ: {:?} vs {:?}",
            a.data().shape(),
            b.data().shape()
        )));
    }
    Ok(())
}

fn pairs<'a>(a: &'a Image, b: &'a Image) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.data().iter().zip(b.data().iter()).map(|(&x, &y)| (x as f64, y as f64))
}

/// Mean squared difference on the `[0, 1]` scale.
pub fn mse_loss(pred: &Image, target: &Image) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.data().len() as f64;
    Ok(pairs(pred, target).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Sum of squared differences on the `[0, 1]` scale.
pub fn sse_loss(pred: &Image, target: &Image) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pairs(pred, target).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn mse_255(pred: &Image, target: &Image) -> Result<f64> {
    Ok(mse_loss(pred, target)? * 255.0 * 255.0)
}

/// Peak signal-to-noise ratio in dB against a peak of 255. Identical images
/// give `f64::INFINITY`.
pub fn psnr(pred: &Image, target: &Image) -> Result<f64> {
    let mse = mse_255(pred, target)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Root mean squared error in 0-255 units.
pub fn rmse(pred: &Image, target: &Image) -> Result<f64> {
    Ok(mse_255(pred, target)?.sqrt())
}

/// SSIM from first and second moments.
fn ssim_formula(mx: f64, my: f64, sxx: f64, syy: f64, sxy: f64, c1: f64, c2: f64) -> f64 {
    let num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
    let den = (mx * mx + my * my + c1) * (sxx + syy + c2);
    num / den
}

/// Structural similarity on the 0-255 scale.
pub fn ssim(x: &Image, y: &Image, cfg: &LossConfig) -> Result<f64> {
    check_pair(x, y)?;
    let s = cfg.metric_range;
    match cfg.ssim_mode {
        SsimMode::Global => {
            let n = x.data().len() as f64;
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (a, b) in pairs(x, y) {
                let (a, b) = (a * s, b * s);
                sx += a;
                sy += b;
                sxx += a * a;
                syy += b * b;
                sxy += a * b;
            }
            let (mx, my) = (sx / n, sy / n);
            Ok(ssim_formula(
                mx,
                my,
                sxx / n - mx * mx,
                syy / n - my * my,
                sxy / n - mx * my,
                cfg.c1,
                cfg.c2,
            ))
        }
        SsimMode::Windowed => windowed_ssim(x, y, cfg),
    }
}

/// Direct 2-D Gaussian windowing, one channel at a time.
fn windowed_ssim(x: &Image, y: &Image, cfg: &LossConfig) -> Result<f64> {
    let (h, w) = x.dims();
    let win = ssim_window(h, w);
    let half = (win as f64 - 1.0) / 2.0;
    let g1: Vec<f64> = (0..win)
        .map(|t| (-((t as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g1.iter().sum();
    let g1: Vec<f64> = g1.iter().map(|v| v / total).collect();

    let s = cfg.metric_range;
    let (xd, yd) = (x.data(), y.data());
    let mut acc = 0.0;
    let mut count = 0usize;
    for c in 0..x.channels() {
        for oy in 0..=h - win {
            for ox in 0..=w - win {
                let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..win {
                    for dx in 0..win {
                        let k = g1[dy] * g1[dx];
                        let a = xd[[oy + dy, ox + dx, c]] as f64 * s;
                        let b = yd[[oy + dy, ox + dx, c]] as f64 * s;
                        mx += k * a;
                        my += k * b;
                        exx += k * a * a;
                        eyy += k * b * b;
                        exy += k * a * b;
                    }
                }
                acc += ssim_formula(mx, my, exx - mx * mx, eyy - my * my, exy - mx * my, cfg.c1, cfg.c2);
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

/// Loss components of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    /// The SSIM term before weighting: `1 - SSIM`, or SSIM in raw mode.
    pub ssim: f64,
}

/// `mse + lambda * (1 - ssim)` evaluated directly on images.
pub fn total_loss(pred: &Image, target: &Image, cfg: &LossConfig) -> Result<LossParts> {
    cfg.validate()?;
    let mse = match cfg.mse_reduction {
        Reduction::Mean => mse_loss(pred, target)?,
        Reduction::Sum => sse_loss(pred, target)?,
    };
    let s = ssim(pred, target, cfg)?;
    let term = match cfg.ssim_term {
        SsimTerm::OneMinus => 1.0 - s,
        SsimTerm::Raw => s,
    };
    Ok(LossParts {
        total: mse + cfg.lambda_ssim * term,
        mse,
        ssim: term,
    })
}

/// Differentiable loss terms as backend scalars.
#[derive(Debug, Clone)]
pub struct LossVars<V> {
    pub total: V,
    pub mse: V,
    pub ssim_term: V,
}

fn check_vars<B: Backend>(b: &B, pred: &B::Var, target: &B::Var) -> Result<()> {
    let (p, t) = (b.value(pred).shape(), b.value(target).shape());
    if p != t || p.len() != 3 {
        return Err(Error::shape(format!("loss needs equal C x H x W shapes, got {p:?} and {t:?}")));
    }
    Ok(())
}

pub fn mse_var<B: Backend>(b: &mut B, pred: &B::Var, target: &B::Var, reduction: Reduction) -> Result<B::Var> {
    check_vars(b, pred, target)?;
    let d = b.sub(pred, target);
    let sq = b.mul(&d, &d);
    Ok(match reduction {
        Reduction::Mean => b.mean(&sq),
        Reduction::Sum => b.sum(&sq),
    })
}

/// SSIM of two `C x H x W` tensors in `[0, 1]`, differentiable in both.
pub fn ssim_var<B: Backend>(b: &mut B, x: &B::Var, y: &B::Var, cfg: &LossConfig) -> Result<B::Var> {
    check_vars(b, x, y)?;
    let (_, h, w) = b.value(x).dims3();
    let x = b.scale(x, cfg.metric_range);
    let y = b.scale(y, cfg.metric_range);
    let xx = b.mul(&x, &x);
    let yy = b.mul(&y, &y);
    let xy = b.mul(&x, &y);

    let moments: Vec<B::Var> = match cfg.ssim_mode {
        SsimMode::Global => [&x, &y, &xx, &yy, &xy].iter().map(|v| b.mean(v)).collect(),
        SsimMode::Windowed => {
            let win = ssim_window(h, w);
            let rows = Arc::new(AxisMap::gaussian_valid(h, win, SSIM_SIGMA));
            let cols = Arc::new(AxisMap::gaussian_valid(w, win, SSIM_SIGMA));
            [&x, &y, &xx, &yy, &xy]
                .iter()
                .map(|v| b.resample(v, rows.clone(), cols.clone()))
                .collect()
        }
    };
    let [mx, my, exx, eyy, exy] = <[B::Var; 5]>::try_from(moments)
        .ok()
        .expect("five moments");

    let mxx = b.mul(&mx, &mx);
    let myy = b.mul(&my, &my);
    let mxy = b.mul(&mx, &my);
    let sxx = b.sub(&exx, &mxx);
    let syy = b.sub(&eyy, &myy);
    let sxy = b.sub(&exy, &mxy);

    let l_num = b.scale(&mxy, 2.0);
    let l_num = b.offset(&l_num, cfg.c1);
    let s_num = b.scale(&sxy, 2.0);
    let s_num = b.offset(&s_num, cfg.c2);
    let num = b.mul(&l_num, &s_num);

    let l_den = b.add(&mxx, &myy);
    let l_den = b.offset(&l_den, cfg.c1);
    let s_den = b.add(&sxx, &syy);
    let s_den = b.offset(&s_den, cfg.c2);
    let den = b.mul(&l_den, &s_den);

    let map = b.div(&num, &den);
    Ok(b.mean(&map))
}

/// `mse + lambda * (1 - ssim)` (or `+ lambda * ssim` in raw mode).
pub fn total_loss_var<B: Backend>(
    b: &mut B,
    pred: &B::Var,
    target: &B::Var,
    cfg: &LossConfig,
) -> Result<LossVars<B::Var>> {
    cfg.validate()?;
    let mse = mse_var(b, pred, target, cfg.mse_reduction)?;
    let s = ssim_var(b, pred, target, cfg)?;
    let ssim_term = match cfg.ssim_term {
        SsimTerm::OneMinus => {
            let neg = b.scale(&s, -1.0);
            b.offset(&neg, 1.0)
        }
        SsimTerm::Raw => s,
    };
    let weighted = b.scale(&ssim_term, cfg.lambda_ssim);
    let total = b.add(&mse, &weighted);
    Ok(LossVars { total, mse, ssim_term })
}

/// Serialise `f64` so that infinities and NaN survive JSON as strings.
pub mod real_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Eager;
    use crate::graph::Graph;
    use crate::tensor::Tensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, c, |_| rng.random::<f32>()).unwrap()
    }

    fn windowed() -> LossConfig {
        LossConfig::default()
    }

    #[test]
    fn mse_examples() {
        let a = noise(6, 5, 3, 1);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let z = Image::constant(4, 4, 3, 0.3).unwrap();
        let o = Image::constant(4, 4, 3, 0.4).unwrap();
        assert!((mse_loss(&z, &o).unwrap() - 0.01).abs() < 1e-7);

        let b = noise(6, 5, 3, 2);
        let mut want = 0.0;
        for y in 0..6 {
            for x in 0..5 {
                for c in 0..3 {
                    let d = a.data()[[y, x, c]] as f64 - b.data()[[y, x, c]] as f64;
                    want += d * d;
                }
            }
        }
        assert!((mse_loss(&a, &b).unwrap() - want / 90.0).abs() < 1e-7);
        assert!((sse_loss(&a, &b).unwrap() - want).abs() < 1e-7);
        assert!(mse_loss(&a, &noise(5, 6, 3, 1)).is_err());
    }

    #[test]
    fn psnr_and_rmse_closed_forms() {
        let a = noise(8, 8, 3, 3).map(|v| v * 0.9).unwrap();
        let b = a.map(|v| v + 1.0 / 255.0).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-3);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);

        let k = 0.25f32;
        let z = Image::constant(5, 7, 1, 0.0).unwrap();
        let o = Image::constant(5, 7, 1, k).unwrap();
        assert!((rmse(&z, &o).unwrap() - 255.0 * k as f64).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let base = Image::constant(16, 16, 3, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let unit: Vec<f32> = (0..16 * 16 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amp in [0.01f32, 0.05, 0.2] {
            let mut it = unit.iter();
            let noisy = Image::from_fn(16, 16, 3, |_| 0.5 + amp * it.next().unwrap()).unwrap();
            let p = psnr(&noisy, &base).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn global_ssim_of_black_versus_white() {
        let x = Image::constant(8, 8, 3, 0.0).unwrap();
        let y = Image::constant(8, 8, 3, 1.0).unwrap();
        let got = ssim(&x, &y, &LossConfig::metric()).unwrap();
        let want = 6.5025 / (255.0 * 255.0 + 6.5025);
        assert!((got - want).abs() < 1e-9);
        assert!((got - 9.9990e-5).abs() < 1e-8);
    }

    #[test]
    fn window_sizes() {
        assert_eq!(ssim_window(512, 512), 11);
        assert_eq!(ssim_window(8, 8), 7);
        assert_eq!(ssim_window(9, 20), 9);
        assert_eq!(ssim_window(1, 5), 1);
    }

    #[test]
    fn backend_ssim_matches_direct_loops() {
        for (h, w, c) in [(8, 8, 3), (16, 13, 1), (23, 30, 3)] {
            let x = noise(h, w, c, 5);
            let y = noise(h, w, c, 6);
            for cfg in [LossConfig::metric(), windowed()] {
                let mut b = Eager;
                let xv = b.leaf(x.to_tensor());
                let yv = b.leaf(y.to_tensor());
                let got = ssim_var(&mut b, &xv, &yv, &cfg).unwrap().item();
                let want = ssim(&x, &y, &cfg).unwrap();
                assert!((got - want).abs() < 1e-10, "{:?}: {got} vs {want}", cfg.ssim_mode);
            }
        }
    }

    #[test]
    fn total_loss_examples() {
        let a = noise(12, 12, 3, 7);
        let b = noise(12, 12, 3, 8);
        for cfg in [LossConfig::metric(), windowed()] {
            let same = total_loss(&a, &a, &cfg).unwrap();
            assert_eq!(same.total, 0.0);
            let l = total_loss(&a, &b, &cfg).unwrap();
            assert!(l.total > 0.0);
            let zero = LossConfig { lambda_ssim: 0.0, ..cfg.clone() };
            assert_eq!(total_loss(&a, &b, &zero).unwrap().total, mse_loss(&a, &b).unwrap());
        }
        let raw = LossConfig { ssim_term: SsimTerm::Raw, ..windowed() };
        let l = total_loss(&a, &a, &raw).unwrap();
        assert_eq!(l.total, 0.2);
        assert!(LossConfig { lambda_ssim: -1.0, ..windowed() }.validate().is_err());
    }

    #[test]
    fn backend_loss_matches_direct_loss() {
        let a = noise(10, 12, 3, 9);
        let t = noise(10, 12, 3, 10);
        for cfg in [
            windowed(),
            LossConfig::metric(),
            LossConfig { mse_reduction: Reduction::Sum, ssim_term: SsimTerm::Raw, ..windowed() },
        ] {
            let mut b = Eager;
            let p = b.leaf(a.to_tensor());
            let q = b.leaf(t.to_tensor());
            let vars = total_loss_var(&mut b, &p, &q, &cfg).unwrap();
            let direct = total_loss(&a, &t, &cfg).unwrap();
            assert!((vars.total.item() - direct.total).abs() < 1e-9);
            assert!((vars.mse.item() - direct.mse).abs() < 1e-9);
            assert!((vars.ssim_term.item() - direct.ssim).abs() < 1e-10);
        }
    }

    /// Central differences on every input coordinate of an 8x8 pair.
    #[test]
    fn loss_gradient_matches_finite_differences() {
        let pred = noise(8, 8, 3, 11).to_tensor();
        let target = noise(8, 8, 3, 12).to_tensor();
        for cfg in [windowed(), LossConfig::metric()] {
            let loss_at = |p: &Tensor| {
                let mut b = Eager;
                let pv = b.leaf(p.clone());
                let tv = b.leaf(target.clone());
                total_loss_var(&mut b, &pv, &tv, &cfg).unwrap().total.item()
            };
            let mut g = Graph::new();
            let pv = g.leaf(pred.clone());
            let tv = g.leaf(target.clone());
            let total = total_loss_var(&mut g, &pv, &tv, &cfg).unwrap().total;
            let grads = g.backward(total);
            let analytic = grads.wrt(pv, &pred);

            let h = 1e-3;
            let mut numeric = Tensor::zeros(pred.shape().to_vec());
            for i in 0..pred.len() {
                let mut up = pred.clone();
                up.data_mut()[i] += h;
                let mut down = pred.clone();
                down.data_mut()[i] -= h;
                numeric.data_mut()[i] = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
            }
            let diff = analytic.zip_map(&numeric, |a, b| a - b).norm();
            let rel = diff / analytic.norm().max(numeric.norm()).max(1e-12);
            assert!(rel < 1e-3, "{:?}: relative error {rel}", cfg.ssim_mode);
        }
    }

    #[test]
    fn real_serde_handles_infinity() {
        #[derive(Serialize, Deserialize)]
        struct W {
            #[serde(with = "real_serde")]
            v: f64,
        }
        let text = serde_json::to_string(&W { v: f64::INFINITY }).unwrap();
        assert_eq!(text, r#"{"v":"inf"}"#);
        let back: W = serde_json::from_str(&text).unwrap();
        assert_eq!(back.v, f64::INFINITY);
        let back: W = serde_json::from_str(r#"{"v":1.5}"#).unwrap();
        assert_eq!(back.v, 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ssim_is_reflexive_and_symmetric(
            seed in any::<u64>(),
            h in 1usize..20,
            w in 1usize..20,
            gray in any::<bool>(),
        ) {
            let c = if gray { 1 } else { 3 };
            let x = noise(h, w, c, seed);
            let y = noise(h, w, c, seed ^ 0x9e37);
            for cfg in [LossConfig::metric(), windowed()] {
                prop_assert_eq!(ssim(&x, &x, &cfg).unwrap(), 1.0);
                let xy = ssim(&x, &y, &cfg).unwrap();
                let yx = ssim(&y, &x, &cfg).unwrap();
                prop_assert!((xy - yx).abs() < 1e-9);
                prop_assert!(xy <= 1.0);
            }
        }

        #[test]
        fn total_loss_is_non_negative(seed in any::<u64>(), h in 4usize..16, w in 4usize..16) {
            let x = noise(h, w, 3, seed);
            let y = noise(h, w, 3, seed.wrapping_add(1));
            for cfg in [LossConfig::metric(), windowed()] {
                let l = total_loss(&x, &y, &cfg).unwrap();
                prop_assert!(l.total > 0.0);
                prop_assert!(l.mse >= 0.0);
            }
        }
    }
}
