use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deshadow::checkpoint::load_checkpoint;
use deshadow::data::{load_dataset_sized, load_split, AugmentConfig, DatasetName, Split};
use deshadow::gradcheck::{run_blocks, GradcheckConfig, BLOCKS};
use deshadow::image::Image;
use deshadow::metrics::{LossConfig, SsimMode};
use deshadow::model::{infer, ModelConfig, ParamStore};
use deshadow::pyramid::{check_depth, decompose, reconstruct, Pyramid};
use deshadow::report::{evaluate_with, table_csv, table_markdown, MetricsReport, TableRow};
use deshadow::train::{train, OutputPaths, TrainConfig};
use serde_json::json;

use crate::{
    Cli, Command, DataArgs, DecomposeArgs, EvalArgs, GradcheckArgs, InferArgs, ReconstructArgs, ReportArgs,
    ResizePolicy, SplitArg, TrainArgs,
};

/// A bad combination of flags.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// 1 usage, 2 data, 3 numeric.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use deshadow::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => 1,
                E::NonFinite(_) | E::Diverged { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

pub fn run(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    match cli.command {
        Command::Decompose(a) => decompose_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a, seed),
        Command::Report(a) => report_cmd(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_image(img: &Image, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => img.save_png(path)?,
        Some("pfm") => img.save_pfm(path)?,
        _ => bail!(Usage(format!("{}: output must end in .png or .pfm", path.display()))),
    }
    Ok(())
}

fn load_model(path: &Path, levels: Option<usize>) -> Result<(ParamStore, ModelConfig)> {
    let (params, cfg, _) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if let Some(l) = levels {
        if l != cfg.levels {
            bail!(Usage(format!(
                "--levels {l} does not match the checkpoint, which was trained with {} levels",
                cfg.levels
            )));
        }
    }
    Ok((params, cfg))
}

const PYRAMID_MANIFEST: &str = "pyramid.json";

fn decompose_cmd(a: DecomposeArgs) -> Result<u8> {
    let img = Image::load(&a.input)?;
    let pyr = decompose(&img, a.levels)?;
    create_dir(&a.out)?;
    let mut highs = Vec::new();
    for (k, band) in pyr.highs().iter().enumerate() {
        let name = format!("high_{k}.pfm");
        band.save_pfm(a.out.join(&name))?;
        highs.push(name);
    }
    pyr.low().save_pfm(a.out.join("low.pfm"))?;
    let (h, w) = img.dims();
    let manifest = json!({
        "levels": a.levels,
        "height": h,
        "width": w,
        "channels": img.channels(),
        "highs": highs,
        "low": "low.pfm",
    });
    write(&a.out.join(PYRAMID_MANIFEST), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    println!("{} levels written to {}", a.levels, a.out.display());
    Ok(0)
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<u8> {
    let manifest_path = if a.input.is_dir() { a.input.join(PYRAMID_MANIFEST) } else { a.input.clone() };
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let m: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let file = |v: &serde_json::Value| -> Result<PathBuf> {
        let name = v.as_str().ok_or_else(|| deshadow::Error::Unreadable {
            path: manifest_path.clone(),
            message: "band entries must be file names".into(),
        })?;
        Ok(dir.join(name))
    };
    let highs = m["highs"]
        .as_array()
        .ok_or_else(|| deshadow::Error::Unreadable {
            path: manifest_path.clone(),
            message: "missing `highs` list".into(),
        })?
        .iter()
        .map(|v| Ok(Image::load_pfm(file(v)?)?))
        .collect::<Result<Vec<_>>>()?;
    let low = Image::load_pfm(file(&m["low"])?)?;
    let img = reconstruct(&Pyramid::new(highs, low)?)?;
    let img = if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) { img.clamp01() } else { img };
    save_image(&img, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn size_arg(data: &DataArgs) -> Option<usize> {
    (data.size > 0).then_some(data.size)
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<u8> {
    let mut model = match &a.config {
        Some(p) => ModelConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ModelConfig::default(),
    };
    if let Some(l) = a.levels {
        model.levels = l;
    }
    if let Some(f) = a.features {
        model.feature_channels = f;
    }
    model.seed = seed;
    let augment = if a.no_augment {
        AugmentConfig {
            rng_seed: seed,
            ..AugmentConfig::identity(a.crop)
        }
    } else {
        AugmentConfig {
            crop_size: a.crop,
            rng_seed: seed,
            ..AugmentConfig::default()
        }
    };
    let cfg = TrainConfig {
        lr: a.lr,
        max_steps: a.steps,
        eval_every: a.eval_every,
        seed,
        loss: LossConfig {
            ssim_mode: a.ssim_mode.into(),
            ..LossConfig::default()
        },
        ablation: a.ablation.into(),
        grad_clip: a.grad_clip,
        augment,
        ..TrainConfig::default()
    };
    let data = load_dataset_sized(&a.data.dataset_root, a.data.dataset.into(), size_arg(&a.data))?;
    create_dir(&a.out)?;
    write(&a.out.join("train_config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
    let paths = OutputPaths::new(&a.out);
    let out = train(&cfg, &model, &data.train, &data.test, Some(&paths))?;
    if let (Some(first), Some(last)) = (out.log.first(), out.log.last()) {
        println!(
            "{} steps: loss {:.6} -> {:.6}; checkpoints in {}",
            out.log.len(),
            first.l_total,
            last.l_total,
            a.out.display()
        );
    } else {
        println!("0 steps; initial checkpoint in {}", a.out.display());
    }
    if let Some(best) = out.state.best {
        println!("best test PSNR {:.2} dB, SSIM {:.4}, RMSE {:.2}", best.psnr, best.ssim, best.rmse);
    }
    Ok(0)
}

fn eval_cmd(a: EvalArgs) -> Result<u8> {
    let name: DatasetName = a.data.dataset.into();
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let model = a.checkpoint.as_deref().map(|p| load_model(p, a.levels)).transpose()?;
    if model.is_none() && a.levels.is_some() {
        bail!(Usage("--levels only applies together with --checkpoint".into()));
    }
    let samples = load_split(&a.data.dataset_root.join(name.dir_name()), split, size_arg(&a.data))?;
    let mode: SsimMode = a.ssim_mode.into();
    let compare_dir = a.out.as_ref().filter(|_| a.compare_images).map(|o| o.join("compare"));
    if let Some(d) = &compare_dir {
        create_dir(d)?;
    }
    let mut index = 0;
    let rows = evaluate_with(&samples, mode, |shadow| {
        let pred = match &model {
            Some((params, cfg)) => infer(shadow, params, cfg)?,
            None => shadow.clone(),
        };
        if let Some(d) = &compare_dir {
            let s = &samples[index];
            Image::hstack(&[&s.shadow, &pred, &s.target])?.save_png(d.join(format!("{}.png", s.id)))?;
        }
        index += 1;
        Ok(pred)
    })?;
    let method = a
        .method
        .unwrap_or_else(|| if model.is_some() { "Model".into() } else { "Input".into() });
    let report = MetricsReport::new(name.dir_name(), split.as_str(), method, mode, rows);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(&out.join("metrics.csv"), &report.to_csv())?;
        write(&out.join("metrics.json"), &report.to_json()?)?;
    }
    let g = report.aggregate;
    println!(
        "{} {} {} ({} images, {} SSIM): PSNR {:.2} dB, SSIM {:.4}, RMSE {:.2}",
        report.method,
        report.dataset,
        report.split,
        report.per_image.len(),
        mode,
        g.psnr,
        g.ssim,
        g.rmse
    );
    Ok(0)
}

fn infer_cmd(a: InferArgs) -> Result<u8> {
    let (params, cfg) = load_model(&a.checkpoint, a.levels)?;
    let img = Image::load(&a.input)?;
    let (h, w) = img.dims();
    let out = match check_depth(h, w, cfg.levels) {
        Ok(()) => infer(&img, &params, &cfg)?,
        Err(e) => match a.resize_policy {
            ResizePolicy::Fail => return Err(anyhow::Error::new(e).context("use --resize-policy resize to upscale")),
            ResizePolicy::Resize => {
                let need = deshadow::pyramid::MIN_LOW_SIDE << cfg.levels;
                let scale = need as f64 / h.min(w) as f64;
                let (sh, sw) = ((h as f64 * scale).ceil() as usize, (w as f64 * scale).ceil() as usize);
                let big = infer(&img.resize_bilinear(sh.max(need), sw.max(need))?, &params, &cfg)?;
                big.resize_bilinear(h, w)?.clamp01()
            }
        },
    };
    save_image(&out, &a.out)?;
    if let Some(t) = &a.triptych {
        let mut panels = vec![img.clone(), out.clone()];
        if let Some(target) = &a.target {
            let target = Image::load(target)?;
            panels.push(if target.dims() == (h, w) { target } else { target.resize_bilinear(h, w)? });
        }
        let refs: Vec<&Image> = panels.iter().collect();
        save_image(&Image::hstack(&refs)?, t)?;
    }
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn gradcheck_cmd(a: GradcheckArgs, seed: u64) -> Result<u8> {
    let mut model = match &a.config {
        Some(p) => ModelConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ModelConfig::default(),
    };
    if let Some(l) = a.levels {
        model.levels = l;
    }
    if let Some(f) = a.features {
        model.feature_channels = f;
    }
    if let Some(h) = a.heads {
        model.attention_heads = h;
    }
    let cfg = GradcheckConfig {
        step: a.step,
        threshold: a.threshold,
        samples_per_tensor: a.samples,
        seed,
        corrupt: a.corrupt,
    };
    let blocks: Vec<&str> = if a.blocks.is_empty() {
        BLOCKS.to_vec()
    } else {
        a.blocks.iter().map(String::as_str).collect()
    };
    let report = run_blocks(&model, &cfg, &blocks)?;
    print!("{}", report.to_text());
    Ok(if report.passed() { 0 } else { 3 })
}

fn report_cmd(a: ReportArgs) -> Result<u8> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            MetricsReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut methods: Vec<&str> = Vec::new();
    for r in &reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let rows: Vec<TableRow> = methods.iter().map(|m| TableRow::from_reports(m, &reports)).collect();
    let md = table_markdown(&rows);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(&out.join("table.csv"), &table_csv(&rows))?;
        write(&out.join("table.md"), &md)?;
    }
    print!("{md}");
    Ok(0)
}
