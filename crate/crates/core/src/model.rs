//! The end-to-end network: pyramid split, AAN on the low band, one GMFT per
//! high band, and reconstruction.
//!
//! ```
//! use deshadow::image::Image;
//! use deshadow::model::{infer, ModelConfig, ParamStore};
//!
//! let cfg = ModelConfig { levels: 2, feature_channels: 8, attention_heads: 2, ..ModelConfig::default() };
//! let params = ParamStore::init(&cfg).unwrap();
//! let img = Image::from_fn(32, 32, 3, |(y, x, c)| ((y + 2 * x + c) % 9) as f32 / 8.0).unwrap();
//! // heads start at zero, so a fresh model returns its input
//! let out = infer(&img, &params, &cfg).unwrap();
//! assert!(out.max_abs_diff(&img) < 1e-5);
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aan::{aan_forward, AanDims, AanParams, DEFAULT_CNR_EPS};
use crate::backend::{Backend, Eager};
use crate::error::{Error, Result};
use crate::gmft::{gmft_forward, GmftDims, GmftParams, SpatialAttention};
use crate::image::Image;
use crate::kernels;
use crate::nn::{ParamSpec, Scope};
use crate::pyramid::{check_depth, MAX_LEVELS};
use crate::resample::AxisMap;
use crate::tensor::Tensor;

pub const PARAM_SCHEMA_VERSION: &str = "deshadow-params/1";

/// Architecture hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub levels: usize,
    pub aan_enabled: bool,
    pub gmft_enabled: bool,
    /// Image channels: 3 for RGB, 1 for grayscale.
    pub channels: usize,
    pub feature_channels: usize,
    pub gia_blocks: usize,
    pub attention_heads: usize,
    pub attention_window: usize,
    /// Coarser bands with more pixels than this fall back to windows.
    pub max_global_tokens: usize,
    pub spp_pools: Vec<usize>,
    pub maa_stages: usize,
    pub ffn_expansion: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            levels: 3,
            aan_enabled: true,
            gmft_enabled: true,
            channels: 3,
            feature_channels: 32,
            gia_blocks: 2,
            attention_heads: 4,
            attention_window: 8,
            max_global_tokens: 4096,
            spp_pools: vec![1, 2, 4],
            maa_stages: 3,
            ffn_expansion: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels > MAX_LEVELS {
            return Err(Error::Config(format!(
                "levels must be at most {MAX_LEVELS}, got {}",
                self.levels
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.attention_window == 0 {
            return Err(Error::Config("attention window must be positive".into()));
        }
        self.aan_dims().validate()?;
        self.gmft_dims().validate()
    }

    /// True when both branches are off and the model is the identity.
    pub fn is_identity(&self) -> bool {
        !self.aan_enabled && !self.gmft_enabled
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.aan_enabled = ablation != Ablation::NoAan;
        self.gmft_enabled = ablation != Ablation::NoGmft;
        self
    }

    pub fn ablation(&self) -> Option<Ablation> {
        match (self.aan_enabled, self.gmft_enabled) {
            (true, true) => Some(Ablation::Full),
            (false, true) => Some(Ablation::NoAan),
            (true, false) => Some(Ablation::NoGmft),
            (false, false) => None,
        }
    }

    pub fn aan_dims(&self) -> AanDims {
        AanDims {
            channels: self.channels,
            features: self.feature_channels,
            stages: self.maa_stages,
            spp_pools: self.spp_pools.clone(),
            eps: DEFAULT_CNR_EPS,
        }
    }

    pub fn gmft_dims(&self) -> GmftDims {
        GmftDims {
            channels: self.channels,
            features: self.feature_channels,
            gia_blocks: self.gia_blocks,
            heads: self.attention_heads,
            ffn_expansion: self.ffn_expansion,
        }
    }

    /// Token grouping for the spatial attention of pyramid level `level`.
    pub fn spatial_attention(&self, level: usize, h: usize, w: usize) -> SpatialAttention {
        if level == 0 || h * w > self.max_global_tokens {
            SpatialAttention::Window(self.attention_window)
        } else {
            SpatialAttention::Global
        }
    }

    /// Every parameter the configuration needs, in a fixed order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        if self.aan_enabled {
            specs.extend(self.aan_dims().specs("aan"));
        }
        if self.gmft_enabled {
            let dims = self.gmft_dims();
            for level in 0..self.levels {
                specs.extend(dims.specs(&format!("gmft.{level}")));
            }
        }
        specs
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scalar parameter count of a configuration, from layer arithmetic alone.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let (c, f) = (cfg.channels, cfg.feature_channels);
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
    let mut total = 0;
    if cfg.aan_enabled {
        let g = 1 + cfg.spp_pools.len();
        let stage = conv(f, f, 3) + 2 * conv(f, f, 1) + conv(f, g, 1) + conv(g * f, f, 1);
        total += conv(c, f, 3) + 2 * f + cfg.maa_stages * stage + conv(2 * f, c, 3);
    }
    if cfg.gmft_enabled {
        let e = cfg.ffn_expansion;
        let per_level = conv(c, f, 3)
            + 2 * conv(f, f, 3)
            + cfg.gia_blocks * (f * f + f)
            + conv(f, 2 * f, 1)
            + conv(f, f, 1)
            + (2 * f + 4 * f * f)
            + (2 * f + 4 * conv(f, f, 1))
            + 2 * conv(f, e * f, 1)
            + conv(e * f, f, 1)
            + conv(f, c, 3);
        total += cfg.levels * per_level;
    }
    total
}

/// `full`, `no_aan` or `no_gmft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoAan,
    NoGmft,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoAan => "no_aan",
            Ablation::NoGmft => "no_gmft",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_aan" => Ok(Ablation::NoAan),
            "no_gmft" => Ok(Ablation::NoGmft),
            other => Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

/// One stored parameter: shape plus 32-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamTensor {
    pub fn from_tensor(t: &Tensor) -> Self {
        ParamTensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| v as f64).collect())
            .expect("stored shape matches data")
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named model parameters in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamTensor>,
    version: String,
}

impl ParamStore {
    /// Initialise every parameter of `cfg`. Each tensor draws from its own
    /// stream keyed by name, so ablated configurations share the values of
    /// the parameters they keep.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let entries = cfg
            .param_specs()
            .into_iter()
            .map(|spec| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(name_stream(&spec.name));
                let t = spec.initialise(&mut rng);
                (spec.name, ParamTensor::from_tensor(&t))
            })
            .collect();
        Ok(ParamStore {
            entries,
            version: PARAM_SCHEMA_VERSION.to_owned(),
        })
    }

    pub fn from_entries(entries: IndexMap<String, ParamTensor>) -> Result<Self> {
        for (name, t) in &entries {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::shape(format!("parameter `{name}` data does not match its shape")));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
        }
        Ok(ParamStore {
            entries,
            version: PARAM_SCHEMA_VERSION.to_owned(),
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalars.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(ParamTensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Check names and shapes against what `cfg` declares.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = cfg.param_specs();
        if specs.len() != self.entries.len() {
            return Err(Error::shape(format!(
                "configuration declares {} tensors, store holds {}",
                specs.len(),
                self.entries.len()
            )));
        }
        for spec in specs {
            let t = self
                .entries
                .get(&spec.name)
                .ok_or_else(|| Error::MissingParam(spec.name.clone()))?;
            if t.shape != spec.shape {
                return Err(Error::shape(format!(
                    "parameter `{}` has shape {:?}, configuration expects {:?}",
                    spec.name, t.shape, spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Put every parameter on `backend` as a leaf.
    pub fn bind<B: Backend>(&self, backend: &mut B) -> Scope<B::Var> {
        Scope::bind(
            backend,
            self.entries.iter().map(|(n, t)| (n.as_str(), t.to_tensor())),
        )
    }
}

fn name_stream(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Parameters bound to a backend and grouped per block.
#[derive(Debug, Clone)]
pub struct Network<V> {
    pub aan: Option<AanParams<V>>,
    pub gmft: Vec<GmftParams<V>>,
    pub config: ModelConfig,
}

impl<V: Clone> Network<V> {
    pub fn bind(scope: &Scope<V>, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let aan = if cfg.aan_enabled {
            Some(AanParams::bind(scope, "aan", &cfg.aan_dims())?)
        } else {
            None
        };
        let gmft = if cfg.gmft_enabled {
            let dims = cfg.gmft_dims();
            (0..cfg.levels)
                .map(|l| GmftParams::bind(scope, &format!("gmft.{l}"), &dims))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Network {
            aan,
            gmft,
            config: cfg.clone(),
        })
    }
}

/// Laplacian split of a `C x H x W` tensor in 64-bit arithmetic.
pub fn decompose_tensor(x: &Tensor, levels: usize) -> Result<(Vec<Tensor>, Tensor)> {
    let (_, h, w) = x.dims3();
    check_depth(h, w, levels)?;
    let mut gauss = vec![x.clone()];
    for _ in 0..levels {
        let g = gauss.last().expect("non-empty");
        let (_, gh, gw) = g.dims3();
        let next = kernels::resample(g, &AxisMap::pyr_down(gh), &AxisMap::pyr_down(gw));
        gauss.push(next);
    }
    let mut highs = Vec::with_capacity(levels);
    for pair in gauss.windows(2) {
        let (_, h, w) = pair[0].dims3();
        let (_, ch, cw) = pair[1].dims3();
        let up = kernels::resample(&pair[1], &up_map(ch, h)?, &up_map(cw, w)?);
        highs.push(pair[0].zip_map(&up, |a, b| a - b));
    }
    let low = gauss.pop().expect("residual");
    Ok((highs, low))
}

fn up_map(child: usize, target: usize) -> Result<AxisMap> {
    AxisMap::pyr_up(child, target)
        .ok_or_else(|| Error::shape(format!("{child} is not the half-size child of {target}")))
}

/// The corrected pyramid before reconstruction, finest band first.
#[derive(Debug, Clone)]
pub struct Bands<V> {
    pub highs: Vec<V>,
    pub low: V,
}

/// Route each band through its branch. Disabled branches pass their bands
/// through untouched.
pub fn forward_bands<B: Backend>(b: &mut B, net: &Network<B::Var>, input: &Tensor) -> Result<Bands<B::Var>> {
    let cfg = &net.config;
    let shape = input.shape();
    if shape.len() != 3 || shape[0] != cfg.channels {
        return Err(Error::shape(format!(
            "model expects {} x H x W input, got {shape:?}",
            cfg.channels
        )));
    }
    let (highs, low) = decompose_tensor(input, cfg.levels)?;
    let low = b.leaf(low);
    let low = match &net.aan {
        Some(p) => aan_forward(b, &low, p)?,
        None => low,
    };
    let mut out = Vec::with_capacity(highs.len());
    for (level, band) in highs.into_iter().enumerate() {
        let (_, h, w) = band.dims3();
        let v = b.leaf(band);
        out.push(match net.gmft.get(level) {
            Some(p) => gmft_forward(b, &v, p, cfg.spatial_attention(level, h, w))?,
            None => v,
        });
    }
    Ok(Bands { highs: out, low })
}

/// Collapse corrected bands: from the coarsest level, `up(low) + high`.
pub fn reconstruct_bands<B: Backend>(b: &mut B, bands: &Bands<B::Var>) -> Result<B::Var> {
    let mut cur = bands.low.clone();
    for band in bands.highs.iter().rev() {
        let (_, h, w) = b.value(band).dims3();
        let (_, ch, cw) = b.value(&cur).dims3();
        let up = b.resample(&cur, Arc::new(up_map(ch, h)?), Arc::new(up_map(cw, w)?));
        cur = b.add(&up, band);
    }
    Ok(cur)
}

/// Unclamped network output for a `C x H x W` input in `[0, 1]`.
pub fn forward<B: Backend>(b: &mut B, net: &Network<B::Var>, input: &Tensor) -> Result<B::Var> {
    let bands = forward_bands(b, net, input)?;
    reconstruct_bands(b, &bands)
}

/// Remove shadows from one image; the result is clamped to `[0, 1]`.
pub fn infer(img: &Image, params: &ParamStore, cfg: &ModelConfig) -> Result<Image> {
    let out = infer_unclamped(img, params, cfg)?;
    Image::from_tensor(&out.map(|v| v.clamp(0.0, 1.0)))
}

/// Network output before clamping, as a `C x H x W` tensor.
pub fn infer_unclamped(img: &Image, params: &ParamStore, cfg: &ModelConfig) -> Result<Tensor> {
    if img.channels() != cfg.channels {
        return Err(Error::shape(format!(
            "model expects {} channels, image has {}",
            cfg.channels,
            img.channels()
        )));
    }
    let mut b = Eager;
    let scope = params.bind(&mut b);
    let net = Network::bind(&scope, cfg)?;
    let out = forward(&mut b, &net, &img.to_tensor())?;
    let out = (*out).clone();
    if !out.is_finite() {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::decompose;
    use rand::Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            levels: 2,
            feature_channels: 8,
            attention_heads: 2,
            attention_window: 4,
            ..ModelConfig::default()
        }
    }

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 3, |_| rng.random::<f32>()).unwrap()
    }

    /// Give every zero-initialised tensor small random values so the
    /// network is no longer the identity.
    fn perturb(store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = store.names().map(str::to_owned).collect();
        for n in names {
            for v in &mut store.get_mut(&n).unwrap().data {
                if *v == 0.0 {
                    *v = rng.random_range(-0.05..0.05);
                }
            }
        }
    }

    #[test]
    fn param_count_matches_specs() {
        for cfg in [
            ModelConfig::default(),
            small(),
            small().with_ablation(Ablation::NoAan),
            small().with_ablation(Ablation::NoGmft),
            ModelConfig { gia_blocks: 0, spp_pools: vec![2, 3], levels: 4, ..small() },
        ] {
            let store = ParamStore::init(&cfg).unwrap();
            assert_eq!(store.param_count(), param_count(&cfg));
            assert_eq!(cfg.param_specs().iter().map(ParamSpec::numel).sum::<usize>(), param_count(&cfg));
        }
    }

    #[test]
    fn ablations_remove_exactly_one_branch() {
        let cfg = small();
        let full = ParamStore::init(&cfg).unwrap();
        let no_aan = ParamStore::init(&cfg.clone().with_ablation(Ablation::NoAan)).unwrap();
        let no_gmft = ParamStore::init(&cfg.clone().with_ablation(Ablation::NoGmft)).unwrap();
        assert!(no_aan.names().all(|n| n.starts_with("gmft.")));
        assert!(no_gmft.names().all(|n| n.starts_with("aan.")));
        assert_eq!(no_aan.param_count() + no_gmft.param_count(), full.param_count());
        for (name, t) in no_aan.iter().chain(no_gmft.iter()) {
            assert_eq!(full.get(name).unwrap(), t);
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let a = ParamStore::init(&small()).unwrap();
        let b = ParamStore::init(&small()).unwrap();
        assert_eq!(a, b);
        let c = ParamStore::init(&ModelConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a, c);
        let head = a.get("gmft.0.head.weight").unwrap();
        assert!(head.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn f64_split_matches_image_pyramid() {
        let img = noise(24, 20, 1);
        let (highs, low) = decompose_tensor(&img.to_tensor(), 2).unwrap();
        let pyr = decompose(&img, 2).unwrap();
        for (a, b) in highs.iter().zip(pyr.highs()) {
            assert!(a.max_abs_diff(&b.to_tensor()) < 1e-6);
        }
        assert!(low.max_abs_diff(&pyr.low().to_tensor()) < 1e-6);
    }

    #[test]
    fn identity_when_both_branches_disabled() {
        let cfg = ModelConfig { aan_enabled: false, gmft_enabled: false, ..small() };
        let store = ParamStore::init(&cfg).unwrap();
        assert!(store.is_empty());
        let img = noise(20, 28, 2);
        let out = infer_unclamped(&img, &store, &cfg).unwrap();
        assert!(out.max_abs_diff(&img.to_tensor()) < 1e-12);
    }

    #[test]
    fn identity_at_init() {
        let cfg = small();
        let store = ParamStore::init(&cfg).unwrap();
        let img = noise(24, 24, 3);
        let out = infer_unclamped(&img, &store, &cfg).unwrap();
        assert!(out.max_abs_diff(&img.to_tensor()) < 1e-12);
    }

    #[test]
    fn output_is_clamped_and_deterministic() {
        let cfg = small();
        let mut store = ParamStore::init(&cfg).unwrap();
        perturb(&mut store, 4);
        let img = noise(16, 20, 5);
        let a = infer(&img, &store, &cfg).unwrap();
        let b = infer(&img, &store, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.dims(), img.dims());
        assert!(a.max_abs_diff(&img) > 0.0);
    }

    #[test]
    fn disabled_branch_leaves_its_bands_untouched() {
        let cfg = small();
        let mut store = ParamStore::init(&cfg).unwrap();
        perturb(&mut store, 6);
        let img = noise(16, 16, 7).to_tensor();
        let (highs, low) = decompose_tensor(&img, cfg.levels).unwrap();

        let run = |c: &ModelConfig| {
            let mut b = Eager;
            let scope = store.bind(&mut b);
            let net = Network::bind(&scope, c).unwrap();
            forward_bands(&mut b, &net, &img).unwrap()
        };
        let full = run(&cfg);
        let no_aan = run(&cfg.clone().with_ablation(Ablation::NoAan));
        let no_gmft = run(&cfg.clone().with_ablation(Ablation::NoGmft));

        assert_eq!(no_aan.low.data(), low.data());
        assert_ne!(full.low.data(), low.data());
        for ((a, f), h) in no_aan.highs.iter().zip(&full.highs).zip(&highs) {
            assert_eq!(a.data(), f.data());
            assert_ne!(a.data(), h.data());
        }
        assert_eq!(no_gmft.low.data(), full.low.data());
        for (g, h) in no_gmft.highs.iter().zip(&highs) {
            assert_eq!(g.data(), h.data());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = small();
        let store = ParamStore::init(&cfg).unwrap();
        let tiny = noise(8, 8, 8);
        assert!(matches!(infer(&tiny, &store, &cfg), Err(Error::PyramidTooDeep { .. })));
        let gray = Image::constant(32, 32, 1, 0.5).unwrap();
        assert!(infer(&gray, &store, &cfg).is_err());
        assert!(ModelConfig { levels: 6, ..small() }.validate().is_err());
        assert!(ModelConfig { attention_heads: 3, ..small() }.validate().is_err());
        let other = ModelConfig { feature_channels: 4, ..small() };
        assert!(store.check_against(&other).is_err());
        store.check_against(&cfg).unwrap();
    }

    #[test]
    fn config_toml_roundtrip() {
        let cfg = ModelConfig { seed: 42, spp_pools: vec![1, 3], ..small() };
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("levels = 2"));
        assert_eq!(ModelConfig::from_toml(&text).unwrap(), cfg);
        assert!(ModelConfig::from_toml("levels = 2\nbogus = 1\n").is_err());
        let partial = ModelConfig::from_toml("levels = 1\n").unwrap();
        assert_eq!(partial.feature_channels, ModelConfig::default().feature_channels);
    }

    #[test]
    fn ablation_names() {
        for a in [Ablation::Full, Ablation::NoAan, Ablation::NoGmft] {
            assert_eq!(a.to_string().parse::<Ablation>().unwrap(), a);
            assert_eq!(ModelConfig::default().with_ablation(a).ablation(), Some(a));
        }
        assert!("none".parse::<Ablation>().is_err());
    }
}
