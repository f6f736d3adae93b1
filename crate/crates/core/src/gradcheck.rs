//! Central finite-difference checks of the analytic gradients.
//!
//! Each check projects a block's output onto a fixed random tensor `r` and
//! compares `d(sum(r * f(x))) / d(input)` from the tape against
//! `(L(x + h e_i) - L(x - h e_i)) / 2h` on a sample of coordinates of every
//! input tensor. The error of one tensor is `|a - n| / max(|a|, |n|, floor)`
//! with Euclidean norms over its sampled coordinates; a block reports the
//! worst tensor.
//!
//! ReLU kinks make `L` non-smooth. A coordinate whose forward and backward
//! one-sided differences disagree has a kink inside `[x - h, x + h]`; it is
//! retried with a step ten times smaller, up to [`KINK_RETRIES`] times. It
//! is skipped (and counted) if it never becomes smooth, or if the smaller
//! step drowns the difference in rounding error.
//!
//! ```
//! use deshadow::gradcheck::{run_blocks, GradcheckConfig};
//! use deshadow::model::ModelConfig;
//!
//! let cfg = ModelConfig { feature_channels: 4, attention_heads: 2, ..ModelConfig::default() };
//! let report = run_blocks(&cfg, &GradcheckConfig::default(), &["GIA", "SimpleGate"]).unwrap();
//! assert!(report.passed());
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aan::{aan_forward, cnr_block, maa_block, AanParams};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::gmft::{
    bmt_block, channel_attention, dgfn, gia_block, gmft_forward, res_block, self_attention, simple_gate,
    GmftParams, SpatialAttention,
};
use crate::graph::{Graph, Var};
use crate::metrics::{total_loss_var, LossConfig, SsimMode};
use crate::model::{forward, ModelConfig, Network};
use crate::nn::{ParamSpec, Scope};
use crate::pyramid::max_levels;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Gradient norms below this count as zero when forming relative errors.
pub const NORM_FLOOR: f64 = 1e-6;
pub const KINK_RETRIES: usize = 2;
/// One-sided differences further apart than this, relative to their size,
/// mark a kink.
pub const KINK_TOLERANCE: f64 = 1e-4;

/// Every block the full run covers, in report order.
pub const BLOCKS: [&str; 14] = [
    "CNR",
    "MAA",
    "AAN",
    "ResBlock",
    "GIA",
    "SimpleGate",
    "ChannelAttention",
    "SelfAttention",
    "BMT",
    "DGFN",
    "GMFT",
    "Loss/global",
    "Loss/windowed",
    "EndToEnd",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub threshold: f64,
    /// Coordinates sampled per input tensor; smaller tensors are checked
    /// in full.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Scale the analytic gradients of the named block by 1.05. A test
    /// hook that must make that block fail.
    pub corrupt: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: DEFAULT_STEP,
            threshold: DEFAULT_THRESHOLD,
            samples_per_tensor: 6,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub name: String,
    pub worst: f64,
    pub worst_tensor: String,
    pub tensors: usize,
    pub coords: usize,
    /// Coordinates left out because `L` stayed non-smooth around them.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockResult>,
    pub threshold: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.worst < self.threshold)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.worst).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| !(b.worst < self.threshold))
            .map(|b| b.name.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let verdict = if b.worst < self.threshold { "pass" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{:<17} worst rel err {:.3e} in {:<28} ({} tensors, {} coords, {} skipped) {verdict}",
                b.name, b.worst, b.worst_tensor, b.tensors, b.coords, b.skipped
            );
        }
        let _ = writeln!(
            out,
            "overall worst {:.3e}, threshold {:.0e}: {}",
            self.worst(),
            self.threshold,
            if self.passed() { "pass" } else { "FAIL" }
        );
        out
    }
}

/// Rounding error of a one-sided difference of `loss` at `step`.
fn roundoff(loss: f64, step: f64) -> f64 {
    8.0 * f64::EPSILON * loss.abs().max(1.0) / step
}

type Probe<'a> = dyn Fn(&mut Graph, &Scope<Var>) -> Result<Var> + 'a;

fn projected_loss(inputs: &IndexMap<String, Tensor>, proj: Option<&Tensor>, f: &Probe) -> Result<(Graph, Scope<Var>, Var, Tensor)> {
    let mut g = Graph::new();
    let scope = Scope::bind(&mut g, inputs.iter().map(|(n, t)| (n.as_str(), t.clone())));
    let out = f(&mut g, &scope)?;
    let r = match proj {
        Some(r) => r.clone(),
        None => Tensor::zeros(g.value(&out).shape().to_vec()),
    };
    if r.shape() != g.value(&out).shape() {
        return Err(Error::shape("probe output changed shape under perturbation"));
    }
    let rv = g.leaf(r.clone());
    let prod = g.mul(&out, &rv);
    let loss = g.sum(&prod);
    Ok((g, scope, loss, r))
}

/// Check the gradients of `f` with respect to the inputs selected by
/// `checked`.
pub fn check_fn(
    name: &str,
    inputs: &IndexMap<String, Tensor>,
    checked: impl Fn(&str) -> bool,
    f: &Probe,
    cfg: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BlockResult> {
    // output shape first, then a fixed projection
    let (g0, _, _, zeros) = projected_loss(inputs, None, f)?;
    drop(g0);
    let r = Tensor::uniform(zeros.shape().to_vec(), -1.0, 1.0, rng);
    let (g, scope, loss, _) = projected_loss(inputs, Some(&r), f)?;
    let grads = g.backward(loss);
    let corrupt = if cfg.corrupt.as_deref() == Some(name) { 1.05 } else { 1.0 };

    let eval = |inputs: &IndexMap<String, Tensor>| -> Result<f64> {
        let (g, _, loss, _) = projected_loss(inputs, Some(&r), f)?;
        Ok(g.value(&loss).item())
    };

    let mut result = BlockResult {
        name: name.to_owned(),
        worst: 0.0,
        worst_tensor: String::new(),
        tensors: 0,
        coords: 0,
        skipped: 0,
    };
    let centre = eval(inputs)?;
    let mut work = inputs.clone();
    for (tname, t) in inputs {
        if !checked(tname) {
            continue;
        }
        let var = scope.get(tname)?;
        let analytic = grads.wrt(var, t);
        let n = t.len();
        let idx: Vec<usize> = if n <= cfg.samples_per_tensor {
            (0..n).collect()
        } else {
            sample(rng, n, cfg.samples_per_tensor).into_vec()
        };
        let (mut diff, mut an, mut nu) = (0.0, 0.0, 0.0);
        let mut used = 0;
        for &i in &idx {
            let base = t.data()[i];
            let mut step = cfg.step;
            let mut numeric = None;
            for attempt in 0..=KINK_RETRIES {
                work[tname].data_mut()[i] = base + step;
                let plus = eval(&work)?;
                work[tname].data_mut()[i] = base - step;
                let minus = eval(&work)?;
                work[tname].data_mut()[i] = base;
                let (fwd, bwd) = ((plus - centre) / step, (centre - minus) / step);
                let central = (plus - minus) / (2.0 * step);
                let noise = roundoff(centre, step);
                let smooth = (fwd - bwd).abs() <= KINK_TOLERANCE * fwd.abs().max(bwd.abs()) + 2.0 * noise;
                if !smooth {
                    step /= 10.0;
                    continue;
                }
                let resolved = attempt == 0 || noise <= 0.1 * cfg.threshold * central.abs().max(NORM_FLOOR);
                if resolved {
                    numeric = Some(central);
                }
                break;
            }
            let Some(numeric) = numeric else {
                result.skipped += 1;
                continue;
            };
            used += 1;
            let a = analytic.data()[i] * corrupt;
            diff += (a - numeric).powi(2);
            an += a * a;
            nu += numeric * numeric;
        }
        let rel = diff.sqrt() / an.sqrt().max(nu.sqrt()).max(NORM_FLOOR);
        let rel = if rel.is_finite() { rel } else { f64::INFINITY };
        result.tensors += 1;
        result.coords += used;
        if rel > result.worst || result.worst_tensor.is_empty() {
            result.worst = result.worst.max(rel);
            result.worst_tensor = tname.clone();
        }
    }
    if result.tensors == 0 {
        return Err(Error::Config(format!("gradient check `{name}` selects no inputs")));
    }
    Ok(result)
}

/// Initial values for `specs`, each offset by `U(-0.1, 0.1)` so that
/// zero-initialised heads and biases pass gradient on.
pub fn randomised(specs: &[ParamSpec], rng: &mut ChaCha8Rng) -> IndexMap<String, Tensor> {
    specs
        .iter()
        .map(|s| {
            let t = s.initialise(rng);
            let noise = Tensor::uniform(t.shape().to_vec(), -0.1, 0.1, rng);
            (s.name.clone(), t.zip_map(&noise, |a, b| a + b))
        })
        .collect()
}

fn with_input(mut params: IndexMap<String, Tensor>, name: &str, t: Tensor) -> IndexMap<String, Tensor> {
    params.insert(name.to_owned(), t);
    params
}

fn prefixed(prefixes: &'static [&'static str]) -> impl Fn(&str) -> bool {
    move |n| prefixes.iter().any(|p| n == *p || n.starts_with(&format!("{p}.")))
}

const X: &str = "x";

fn check_block(name: &str, model: &ModelConfig, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<BlockResult> {
    let f = model.feature_channels;
    let c = model.channels;
    let side = 8;
    let feat = |rng: &mut ChaCha8Rng| Tensor::uniform(vec![f, side, side], -1.0, 1.0, rng);
    let aan_dims = model.aan_dims();
    let gmft_dims = model.gmft_dims();
    let aan = |rng: &mut ChaCha8Rng| randomised(&aan_dims.specs("aan"), rng);
    let gmft = |rng: &mut ChaCha8Rng| randomised(&gmft_dims.specs("gmft.0"), rng);
    let window = SpatialAttention::Window(side / 2);

    match name {
        "CNR" => {
            let inputs = with_input(aan(rng), X, feat(rng));
            let probe = |g: &mut Graph, s: &Scope<Var>| {
                let p = AanParams::bind(s, "aan", &aan_dims)?;
                cnr_block(g, &s.get(X)?, &p.cnr)
            };
            check_fn(name, &inputs, prefixed(&["x", "aan.cnr"]), &probe, cfg, rng)
        }
        "MAA" => {
            let inputs = with_input(aan(rng), X, feat(rng));
            let probe = |g: &mut Graph, s: &Scope<Var>| {
                let p = AanParams::bind(s, "aan", &aan_dims)?;
                maa_block(g, &s.get(X)?, &p.maa)
            };
            check_fn(name, &inputs, prefixed(&["x", "aan.maa"]), &probe, cfg, rng)
        }
        "AAN" => {
            let low = Tensor::uniform(vec![c, side, side], 0.0, 1.0, rng);
            let inputs = with_input(aan(rng), X, low);
            let probe = |g: &mut Graph, s: &Scope<Var>| {
                let p = AanParams::bind(s, "aan", &aan_dims)?;
                aan_forward(g, &s.get(X)?, &p)
            };
            check_fn(name, &inputs, |_| true, &probe, cfg, rng)
        }
        "ResBlock" | "GIA" | "ChannelAttention" | "BMT" | "DGFN" => {
            let inputs = with_input(gmft(rng), X, feat(rng));
            let which = name.to_owned();
            let probe = move |g: &mut Graph, s: &Scope<Var>| {
                let p = GmftParams::bind(s, "gmft.0", &gmft_dims)?;
                let x = s.get(X)?;
                match which.as_str() {
                    "ResBlock" => res_block(g, &x, &p.res),
                    "GIA" => gia_block(g, &x, &p.gia[0]),
                    "ChannelAttention" => channel_attention(g, &x, &p.ca),
                    "BMT" => bmt_block(g, &x, &p.bmt, window),
                    _ => dgfn(g, &x, &p.dgfn),
                }
            };
            let checked: &'static [&'static str] = match name {
                "ResBlock" => &["x", "gmft.0.res"],
                "GIA" => &["x", "gmft.0.gia.0"],
                "ChannelAttention" => &["x", "gmft.0.ca"],
                "BMT" => &["x", "gmft.0.bmt"],
                _ => &["x", "gmft.0.dgfn"],
            };
            if name == "GIA" && model.gia_blocks == 0 {
                return Err(Error::Config("GIA check needs at least one GIA block".into()));
            }
            check_fn(name, &inputs, prefixed(checked), &probe, cfg, rng)
        }
        "SimpleGate" => {
            let inputs = IndexMap::from([(X.to_owned(), Tensor::uniform(vec![2 * f, side, side], -1.0, 1.0, rng))]);
            let probe = |g: &mut Graph, s: &Scope<Var>| simple_gate(g, &s.get(X)?);
            check_fn(name, &inputs, |_| true, &probe, cfg, rng)
        }
        "SelfAttention" => {
            let tokens = Tensor::uniform(vec![side * side, f], -1.0, 1.0, rng);
            let inputs = with_input(gmft(rng), X, tokens);
            let groups = Arc::new(window.groups(side, side));
            let probe = move |g: &mut Graph, s: &Scope<Var>| {
                let p = GmftParams::bind(s, "gmft.0", &gmft_dims)?;
                self_attention(g, &s.get(X)?, &p.bmt.spatial, groups.clone())
            };
            let checked = |n: &str| {
                n == X || ["q", "k", "v", "out"].iter().any(|m| n == format!("gmft.0.bmt.spatial.{m}"))
            };
            check_fn(name, &inputs, checked, &probe, cfg, rng)
        }
        "GMFT" => {
            let band = Tensor::uniform(vec![c, side, side], -0.5, 0.5, rng);
            let inputs = with_input(gmft(rng), X, band);
            let probe = |g: &mut Graph, s: &Scope<Var>| {
                let p = GmftParams::bind(s, "gmft.0", &gmft_dims)?;
                gmft_forward(g, &s.get(X)?, &p, window)
            };
            check_fn(name, &inputs, |_| true, &probe, cfg, rng)
        }
        "Loss/global" | "Loss/windowed" => {
            let mode = if name == "Loss/global" { SsimMode::Global } else { SsimMode::Windowed };
            let loss_cfg = LossConfig {
                ssim_mode: mode,
                ..LossConfig::default()
            };
            let pred = Tensor::uniform(vec![c, 16, 16], 0.0, 1.0, rng);
            let target = Tensor::uniform(vec![c, 16, 16], 0.0, 1.0, rng);
            let inputs = IndexMap::from([(X.to_owned(), pred), ("target".to_owned(), target)]);
            let probe = move |g: &mut Graph, s: &Scope<Var>| {
                let l = total_loss_var(g, &s.get(X)?, &s.get("target")?, &loss_cfg)?;
                Ok(l.total)
            };
            check_fn(name, &inputs, |n| n == X, &probe, cfg, rng)
        }
        "EndToEnd" => {
            let side = 16;
            let e2e = end_to_end_config(model, side);
            let inputs = randomised(&e2e.param_specs(), rng);
            let img = Tensor::uniform(vec![c, side, side], 0.0, 1.0, rng);
            let probe = move |g: &mut Graph, s: &Scope<Var>| {
                let net = Network::bind(s, &e2e)?;
                forward(g, &net, &img)
            };
            check_fn(name, &inputs, |_| true, &probe, cfg, rng)
        }
        other => Err(Error::Config(format!("unknown gradient-check block `{other}`"))),
    }
}

/// The model checked end to end at `side x side`: levels capped at the
/// deepest pyramid that size allows.
pub fn end_to_end_config(model: &ModelConfig, side: usize) -> ModelConfig {
    ModelConfig {
        levels: model.levels.min(max_levels(side, side)).max(1),
        ..model.clone()
    }
}

/// Run the named checks. Each block draws from its own seeded stream.
pub fn run_blocks(model: &ModelConfig, cfg: &GradcheckConfig, blocks: &[&str]) -> Result<GradcheckReport> {
    model.validate()?;
    let results = blocks
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let _: u32 = rng.random();
            check_block(name, model, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        blocks: results,
        threshold: cfg.threshold,
    })
}

/// Every block of [`BLOCKS`].
pub fn run(model: &ModelConfig, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    run_blocks(model, cfg, &BLOCKS)
}
