//! Adam optimisation of the full model on paired samples.
//!
//! A worker thread augments samples ahead of the optimiser through a bounded
//! queue. Every random draw comes from a stream keyed by `(seed, step)`, so
//! the sequence of training samples does not depend on thread timing and
//! two runs with one seed produce identical logs and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::checkpoint::{save_checkpoint, CheckpointMeta, MetricSnapshot};
use crate::data::{augment, stream_rng, AugmentConfig, PairedSample};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::image::Image;
use crate::metrics::{psnr, total_loss, total_loss_var, LossConfig, SsimMode};
use crate::model::{forward, infer, infer_unclamped, Ablation, ModelConfig, Network, ParamStore};
use crate::report::{evaluate, Aggregate, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_steps: usize,
    /// Evaluate on the test split every this many steps; 0 disables.
    pub eval_every: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub ablation: Ablation,
    /// Rescale the global gradient norm to at most this value.
    pub grad_clip: Option<f64>,
    pub augment: AugmentConfig,
    pub queue_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_steps: 1000,
            eval_every: 0,
            seed: 0,
            loss: LossConfig::default(),
            ablation: Ablation::Full,
            grad_clip: None,
            augment: AugmentConfig::default(),
            queue_depth: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("gradient clip must be positive".into()));
        }
        self.loss.validate()?;
        self.augment.validate()
    }
}

/// Adam moments for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Number of optimiser updates applied so far.
    pub step: usize,
    pub params: ParamStore,
    pub moments: IndexMap<String, Moments>,
    pub best: Option<MetricSnapshot>,
}

impl TrainState {
    pub fn new(params: ParamStore) -> Self {
        let moments = params
            .iter()
            .map(|(n, t)| {
                (
                    n.to_owned(),
                    Moments {
                        m: vec![0.0; t.numel()],
                        v: vec![0.0; t.numel()],
                    },
                )
            })
            .collect();
        TrainState {
            step: 0,
            params,
            moments,
            best: None,
        }
    }
}

/// One bias-corrected Adam update at time `t` (1-based). Updates the
/// moments in place and returns the values to subtract from the parameter.
pub fn adam_delta(mom: &mut Moments, grad: &[f64], t: usize, cfg: &TrainConfig) -> Vec<f64> {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    mom.m
        .iter_mut()
        .zip(mom.v.iter_mut())
        .zip(grad)
        .map(|((m, v), &g)| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)
        })
        .collect()
}

/// Apply one Adam update to every parameter.
pub fn adam_step(state: &mut TrainState, grads: &IndexMap<String, Vec<f64>>, cfg: &TrainConfig) -> Result<()> {
    let t = state.step + 1;
    for (name, grad) in grads {
        let p = state
            .params
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.clone()))?;
        if p.numel() != grad.len() {
            return Err(Error::shape(format!(
                "gradient of `{name}` has {} values, parameter has {}",
                grad.len(),
                p.numel()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        let mom = state
            .moments
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.clone()))?;
        let delta = adam_delta(mom, grad, t, cfg);
        for (v, d) in p.data.iter_mut().zip(delta) {
            *v = (*v as f64 - d) as f32;
        }
    }
    state.step = t;
    Ok(())
}

/// Loss terms at one step, before that step's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub l_total: f64,
    pub l_mse: f64,
    pub l_ssim: f64,
}

impl LogRow {
    pub const HEADER: &'static str = "step,l_total,l_mse,l_ssim";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.step, self.l_total, self.l_mse, self.l_ssim)
    }
}

/// Loss and per-parameter gradients of one training pair.
pub struct StepResult {
    pub row: LogRow,
    pub grads: IndexMap<String, Vec<f64>>,
}

/// Forward and backward pass for one pair with the current parameters.
pub fn loss_and_grads(
    params: &ParamStore,
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    sample: &PairedSample,
    step: usize,
) -> Result<StepResult> {
    let mut g = Graph::new();
    let scope = params.bind(&mut g);
    let net = Network::bind(&scope, model_cfg)?;
    let pred = forward(&mut g, &net, &sample.shadow.to_tensor())?;
    let target = g.leaf(sample.target.to_tensor());
    let loss = total_loss_var(&mut g, &pred, &target, loss_cfg)?;
    let row = LogRow {
        step,
        l_total: g.value(&loss.total).item(),
        l_mse: g.value(&loss.mse).item(),
        l_ssim: g.value(&loss.ssim_term).item(),
    };
    let back = g.backward(loss.total);
    let grads = params
        .names()
        .map(|name| {
            let var = scope.get(name)?;
            let grad = back.wrt(var, g.value(&var)).into_data();
            Ok((name.to_owned(), grad))
        })
        .collect::<Result<IndexMap<_, _>>>()?;
    Ok(StepResult { row, grads })
}

fn grad_norms(grads: &IndexMap<String, Vec<f64>>) -> Vec<(String, f64)> {
    grads
        .iter()
        .map(|(n, g)| (n.clone(), g.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect()
}

fn diverged(row: &LogRow, grads: &IndexMap<String, Vec<f64>>) -> Error {
    let mut norms = grad_norms(grads);
    norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Less));
    let listed: Vec<String> = norms.iter().take(8).map(|(n, v)| format!("{n}={v:.3e}")).collect();
    Error::Diverged {
        step: row.step,
        detail: format!(
            "loss total={} mse={} ssim={}; largest gradient norms: {}",
            row.l_total,
            row.l_mse,
            row.l_ssim,
            listed.join(", ")
        ),
    }
}

/// Where training artefacts go.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputPaths { dir: dir.into() }
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }

    pub fn timing(&self) -> PathBuf {
        self.dir.join("timing.csv")
    }

    pub fn eval_log(&self) -> PathBuf {
        self.dir.join("eval_log.csv")
    }

    pub fn best(&self) -> PathBuf {
        self.dir.join("best.json")
    }

    pub fn last(&self) -> PathBuf {
        self.dir.join("last.json")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub model: ModelConfig,
    pub log: Vec<LogRow>,
    pub evals: Vec<(usize, Aggregate)>,
}

/// Training order: a fresh permutation of the training set per epoch.
fn sample_index(n: usize, seed: u64, step: usize) -> usize {
    let epoch = step / n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed ^ 0x5eed_0fda_7a5e_7e11, epoch as u64));
    order[step % n]
}

/// The augmented sample for `step`.
pub fn training_sample(data: &[PairedSample], cfg: &TrainConfig, step: usize) -> Result<PairedSample> {
    let n = data.len();
    let idx = sample_index(n, cfg.seed, step);
    let mut rng = stream_rng(cfg.seed, step as u64);
    let partner = if n > 1 {
        let mut j = rng.random_range(0..n - 1);
        if j >= idx {
            j += 1;
        }
        Some(&data[j])
    } else {
        None
    };
    augment(&data[idx], partner, &cfg.augment, &mut rng)
}

struct Logs {
    loss: BufWriter<File>,
    timing: BufWriter<File>,
    eval: BufWriter<File>,
}

impl Logs {
    fn create(paths: &OutputPaths) -> Result<Self> {
        fs::create_dir_all(&paths.dir)?;
        let mut loss = BufWriter::new(File::create(paths.log())?);
        writeln!(loss, "{}", LogRow::HEADER)?;
        let mut timing = BufWriter::new(File::create(paths.timing())?);
        writeln!(timing, "step,wall_ms")?;
        let mut eval = BufWriter::new(File::create(paths.eval_log())?);
        writeln!(eval, "step,psnr,ssim,rmse")?;
        Ok(Logs { loss, timing, eval })
    }
}

fn snapshot(a: &Aggregate) -> MetricSnapshot {
    MetricSnapshot {
        psnr: a.psnr,
        ssim: a.ssim,
        rmse: a.rmse,
    }
}

/// Train from a fresh initialisation of `model_cfg` (with the ablation of
/// `cfg` applied). With `out` set, writes the loss log, a timing log, an
/// evaluation log and the `best` / `last` checkpoints there.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &[PairedSample],
    test_set: &[PairedSample],
    out: Option<&OutputPaths>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.batch_size != 1 {
        return Err(Error::Config("only batch size 1 is supported".into()));
    }
    if train_set.is_empty() {
        return Err(Error::DatasetEmpty("training split".into()));
    }
    let model = model_cfg.clone().with_ablation(cfg.ablation);
    let state = TrainState::new(ParamStore::init(&model)?);
    train_from(cfg, &model, state, train_set, test_set, out)
}

/// Continue training `state` until `cfg.max_steps` updates have been made.
pub fn train_from(
    cfg: &TrainConfig,
    model: &ModelConfig,
    mut state: TrainState,
    train_set: &[PairedSample],
    test_set: &[PairedSample],
    out: Option<&OutputPaths>,
) -> Result<TrainOutcome> {
    state.params.check_against(model)?;
    let mut logs = out.map(Logs::create).transpose()?;
    let mut log = Vec::new();
    let mut evals = Vec::new();
    let start = state.step;
    let end = cfg.max_steps.max(start);
    let clock = Instant::now();

    let result: Result<()> = thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<PairedSample>)>(cfg.queue_depth.max(1));
        scope.spawn(move || {
            for step in start..end {
                if tx.send((step, training_sample(train_set, cfg, step))).is_err() {
                    break;
                }
            }
        });

        for (step, sample) in rx.iter() {
            let sample = sample?;
            let StepResult { row, mut grads } = loss_and_grads(&state.params, model, &cfg.loss, &sample, step)?;
            if !row.l_total.is_finite() || grads.values().flatten().any(|g| !g.is_finite()) {
                return Err(diverged(&row, &grads));
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grad_norms(&grads).iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                if norm > clip {
                    let s = clip / norm;
                    grads.values_mut().flatten().for_each(|g| *g *= s);
                }
            }
            adam_step(&mut state, &grads, cfg)?;
            if !state.params.is_finite() {
                return Err(diverged(&row, &grads));
            }
            log.push(row);
            if let Some(l) = logs.as_mut() {
                writeln!(l.loss, "{}", row.to_csv())?;
                writeln!(l.timing, "{},{}", step, clock.elapsed().as_millis())?;
            }

            let done = step + 1;
            if cfg.eval_every > 0 && done % cfg.eval_every == 0 && !test_set.is_empty() {
                let rows = evaluate(test_set, Some((&state.params, model)), SsimMode::Global)?;
                let report = MetricsReport::new("", "test", "model", SsimMode::Global, rows);
                let agg = report.aggregate;
                evals.push((done, agg));
                if let Some(l) = logs.as_mut() {
                    writeln!(l.eval, "{done},{},{},{}", agg.psnr, agg.ssim, agg.rmse)?;
                }
                let better = state.best.is_none_or(|b| agg.psnr > b.psnr);
                if better {
                    state.best = Some(snapshot(&agg));
                    if let Some(paths) = out {
                        let meta = CheckpointMeta {
                            step: done,
                            metrics: state.best,
                        };
                        save_checkpoint(&state.params, model, &meta, paths.best())?;
                    }
                }
            }
        }
        Ok(())
    });
    if let Some(l) = logs.as_mut() {
        l.loss.flush()?;
        l.timing.flush()?;
        l.eval.flush()?;
    }
    result?;

    if let Some(paths) = out {
        let meta = CheckpointMeta {
            step: state.step,
            metrics: evals.last().map(|(_, a)| snapshot(a)),
        };
        save_checkpoint(&state.params, model, &meta, paths.last())?;
        if !paths.best().exists() {
            save_checkpoint(&state.params, model, &meta, paths.best())?;
        }
    }
    Ok(TrainOutcome {
        state,
        model: model.clone(),
        log,
        evals,
    })
}

/// Outcome of fitting a single pair.
#[derive(Debug, Clone)]
pub struct OverfitReport {
    pub steps: usize,
    /// Loss at step 0, which is the identity model's loss.
    pub initial_loss: f64,
    /// Loss of the trained model on the pair.
    pub final_loss: f64,
    pub identity_psnr: f64,
    pub final_psnr: f64,
    /// Every parameter finite after every update.
    pub finite: bool,
    pub log: Vec<LogRow>,
}

impl OverfitReport {
    pub fn loss_ratio(&self) -> f64 {
        self.final_loss / self.initial_loss
    }

    pub fn psnr_gain(&self) -> f64 {
        self.final_psnr - self.identity_psnr
    }
}

/// Train on one pair without augmentation for `cfg.max_steps` steps.
pub fn overfit(pair: &PairedSample, model: &ModelConfig, cfg: &TrainConfig) -> Result<OverfitReport> {
    let (h, w) = pair.dims();
    let cfg = TrainConfig {
        augment: AugmentConfig {
            rng_seed: cfg.seed,
            ..AugmentConfig::identity(h.min(w))
        },
        eval_every: 0,
        ..cfg.clone()
    };
    if h != w {
        return Err(Error::Config("overfit expects a square pair".into()));
    }
    let out = train(&cfg, model, std::slice::from_ref(pair), &[], None)?;
    let initial_loss = out.log.first().map(|r| r.l_total).ok_or_else(|| Error::Config("overfit needs at least one step".into()))?;
    let pred = infer_unclamped(&pair.shadow, &out.state.params, &out.model)?;
    let final_loss = total_loss(&Image::from_tensor(&pred)?, &pair.target, &cfg.loss)?.total;
    Ok(OverfitReport {
        steps: out.log.len(),
        initial_loss,
        final_loss,
        identity_psnr: psnr(&pair.shadow, &pair.target)?,
        final_psnr: psnr(&infer(&pair.shadow, &out.state.params, &out.model)?, &pair.target)?,
        finite: out.state.params.is_finite(),
        log: out.log,
    })
}

/// Write `rows` as the loss log format.
pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LogRow::HEADER);
    out.push('\n');
    for r in rows {
        out += &r.to_csv();
        out.push('\n');
    }
    out
}

/// Read back a loss log.
pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::unreadable(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::unreadable(path, format!("bad log line `{l}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LogRow {
                step: f[0].parse().map_err(|_| bad())?,
                l_total: f[1].parse().map_err(|_| bad())?,
                l_mse: f[2].parse().map_err(|_| bad())?,
                l_ssim: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> IndexMap<String, Vec<f64>> {
        IndexMap::from([("w".to_owned(), vec![v])])
    }

    fn scalar_state(value: f32) -> TrainState {
        let entries = IndexMap::from([(
            "w".to_owned(),
            crate::model::ParamTensor {
                shape: vec![1],
                data: vec![value],
            },
        )]);
        TrainState::new(ParamStore::from_entries(entries).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_state(0.37);
        for _ in 0..5 {
            adam_step(&mut s, &one(0.0), &TrainConfig::default()).unwrap();
        }
        assert_eq!(s.params.get("w").unwrap().data[0], 0.37);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut mom = Moments { m: vec![0.0], v: vec![0.0] };
        let d = adam_delta(&mut mom, &[1.0], 1, &cfg);
        assert!((d[0] - 1e-4).abs() < 1e-11);
        let d = adam_delta(&mut Moments { m: vec![0.0], v: vec![0.0] }, &[-250.0], 1, &cfg);
        assert!((d[0] + 1e-4).abs() < 1e-11);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let cfg = TrainConfig::default();
        let mut mom = Moments { m: vec![0.0, 0.0], v: vec![0.0, 0.0] };
        let g = [3.0, -0.5];
        let mut last = vec![];
        for t in 1..=2000 {
            last = adam_delta(&mut mom, &g, t, &cfg);
        }
        assert!((last[0] - cfg.lr).abs() < 1e-9);
        assert!((last[1] + cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn adam_rejects_bad_gradients() {
        let mut s = scalar_state(1.0);
        let cfg = TrainConfig::default();
        let two = IndexMap::from([("w".to_owned(), vec![1.0, 2.0])]);
        assert!(matches!(adam_step(&mut s, &two, &cfg), Err(Error::Shape(_))));
        assert!(adam_step(&mut s, &one(f64::NAN), &cfg).is_err());
        let other = IndexMap::from([("q".to_owned(), vec![1.0])]);
        assert!(matches!(adam_step(&mut s, &other, &cfg), Err(Error::MissingParam(_))));
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            levels: 1,
            feature_channels: 4,
            attention_heads: 2,
            attention_window: 4,
            maa_stages: 2,
            spp_pools: vec![1, 2],
            ..ModelConfig::default()
        }
    }

    fn pair(seed: u64) -> PairedSample {
        let shadow = Image::from_fn(16, 16, 3, |(y, x, c)| {
            let v = ((y * 7 + x * 3 + c + seed as usize) % 11) as f32 / 10.0;
            if x < 8 { v * 0.5 } else { v }
        })
        .unwrap();
        let target = Image::from_fn(16, 16, 3, |(y, x, c)| ((y * 7 + x * 3 + c + seed as usize) % 11) as f32 / 10.0).unwrap();
        PairedSample::new(format!("p{seed}"), shadow, target).unwrap()
    }

    fn quick(steps: usize) -> TrainConfig {
        TrainConfig {
            max_steps: steps,
            lr: 1e-3,
            augment: AugmentConfig { crop_size: 12, ..AugmentConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_identity_model() {
        let dir = tempfile::tempdir().unwrap();
        let paths = OutputPaths::new(dir.path());
        let out = train(&quick(0), &tiny_model(), &[pair(0)], &[], Some(&paths)).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.state.params, ParamStore::init(&tiny_model()).unwrap());
        let (params, cfg, meta) = crate::checkpoint::load_checkpoint(paths.last()).unwrap();
        assert_eq!(meta.step, 0);
        let img = pair(1).shadow;
        let y = infer_unclamped(&img, &params, &cfg).unwrap();
        assert!(y.max_abs_diff(&img.to_tensor()) < 1e-12);
    }

    #[test]
    fn step_zero_loss_is_identity_loss() {
        let cfg = TrainConfig {
            augment: AugmentConfig::identity(16),
            ..quick(1)
        };
        let p = pair(2);
        let out = train(&cfg, &tiny_model(), std::slice::from_ref(&p), &[], None).unwrap();
        let fresh = ParamStore::init(&tiny_model()).unwrap();
        let identity = Image::from_tensor(&infer_unclamped(&p.shadow, &fresh, &tiny_model()).unwrap()).unwrap();
        let want = total_loss(&identity, &p.target, &cfg.loss).unwrap();
        assert!((out.log[0].l_total - want.total).abs() < 1e-6);
        let direct = total_loss(&p.shadow, &p.target, &cfg.loss).unwrap();
        assert!((out.log[0].l_total - direct.total).abs() < 1e-6);
        // same loss in f64 on the untouched input: differs only by pyramid
        // rounding
        let mut g = Graph::new();
        let x = g.leaf(p.shadow.to_tensor());
        let t = g.leaf(p.target.to_tensor());
        let l = total_loss_var(&mut g, &x, &t, &cfg.loss).unwrap();
        assert!((out.log[0].l_total - g.value(&l.total).item()).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible_and_logged() {
        let data = [pair(0), pair(3), pair(5)];
        let cfg = TrainConfig { eval_every: 2, ..quick(4) };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = train(&cfg, &tiny_model(), &data, &data[..1], Some(&OutputPaths::new(d1.path()))).unwrap();
        let b = train(&cfg, &tiny_model(), &data, &data[..1], Some(&OutputPaths::new(d2.path()))).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.state, b.state);
        for f in ["train_log.csv", "last.json", "last.bin", "best.json", "best.bin", "eval_log.csv"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
        assert_eq!(read_log(&d1.path().join("train_log.csv")).unwrap(), a.log);
        assert_eq!(a.evals.len(), 2);
        assert!(d1.path().join("timing.csv").exists());
        assert_eq!(log_csv(&a.log), fs::read_to_string(d1.path().join("train_log.csv")).unwrap());
    }

    #[test]
    fn training_order_visits_every_sample_each_epoch() {
        let mut seen: Vec<usize> = (0..5).map(|s| sample_index(5, 9, s)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ablation_changes_trained_parameters() {
        let cfg = TrainConfig { ablation: Ablation::NoAan, ..quick(1) };
        let out = train(&cfg, &tiny_model(), &[pair(0)], &[], None).unwrap();
        assert!(out.state.params.names().all(|n| n.starts_with("gmft.")));
        assert!(!out.model.aan_enabled);
    }

    #[test]
    fn divergence_names_step_and_gradients() {
        let cfg = TrainConfig { lr: 1e30, augment: AugmentConfig::identity(16), ..quick(6) };
        match train(&cfg, &tiny_model(), &[pair(0)], &[], None) {
            Err(Error::Diverged { step, detail }) => {
                assert!(step >= 1);
                assert!(detail.contains("gradient norms"));
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
        }
    }

    #[test]
    fn overfit_reduces_loss_on_tiny_model() {
        let pair = crate::synth::synthetic_pair("o", 16, 16, 4).unwrap();
        let r = overfit(&pair, &tiny_model(), &TrainConfig { lr: 3e-3, ..quick(30) }).unwrap();
        assert_eq!(r.steps, 30);
        assert!(r.finite);
        assert!(r.loss_ratio() < 0.8, "{r:?}");
        assert!(r.psnr_gain() > 0.0);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(train(&quick(1), &tiny_model(), &[], &[], None).is_err());
    }
}
