//! Paired shadow / shadow-free datasets and training augmentation.
//!
//! A dataset lives under `<root>/<name>/` in one of two layouts:
//!
//! ```text
//! <root>/jung/train/shadow/<stem>.png     <root>/jung/train.txt
//! <root>/jung/train/target/<stem>.png     <root>/jung/test.txt
//! <root>/jung/test/shadow/<stem>.png
//! <root>/jung/test/target/<stem>.png
//! ```
//!
//! Stems pair files across the `shadow` and `target` folders (`.png`,
//! `.jpg` or `.jpeg`). When `<split>.txt` exists it takes precedence: each
//! non-empty line not starting with `#` is `shadow_path<TAB>target_path`,
//! relative to the dataset folder.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{s, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Side length every loaded image is resized to.
pub const CANONICAL_SIZE: usize = 512;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Jung,
    Kligler,
}

impl DatasetName {
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetName::Jung => "jung",
            DatasetName::Kligler => "kligler",
        }
    }

    /// Published `(train, test)` pair counts.
    pub fn expected_sizes(self) -> (usize, usize) {
        match self {
            DatasetName::Jung => (60, 27),
            DatasetName::Kligler => (272, 28),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jung" => Ok(DatasetName::Jung),
            "kligler" => Ok(DatasetName::Kligler),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// File locations of one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPaths {
    pub id: String,
    pub shadow: PathBuf,
    pub target: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub shadow: Image,
    pub target: Image,
}

impl PairedSample {
    pub fn new(id: impl Into<String>, shadow: Image, target: Image) -> Result<Self> {
        if shadow.data().dim() != target.data().dim() {
            return Err(Error::shape(format!(
                "shadow {:?} and target {:?} differ in shape",
                shadow.data().dim(),
                target.data().dim()
            )));
        }
        Ok(PairedSample {
            id: id.into(),
            shadow,
            target,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.shadow.dims()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: DatasetName,
    pub train: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[PairedSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn image_stem(path: &Path) -> Option<String> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    path.file_stem()?.to_str().map(str::to_owned)
}

fn stems_in(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::unreadable(dir, e))? {
        let path = entry?.path();
        if let Some(stem) = image_stem(&path) {
            if let Some(prev) = out.insert(stem.clone(), path.clone()) {
                return Err(Error::unreadable(
                    &path,
                    format!("stem `{stem}` also used by {}", prev.display()),
                ));
            }
        }
    }
    Ok(out)
}

fn read_index(index: &Path, base: &Path) -> Result<Vec<PairPaths>> {
    let text = fs::read_to_string(index).map_err(|e| Error::unreadable(index, e))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (shadow, target) = line
            .split_once('\t')
            .ok_or_else(|| Error::unreadable(index, format!("line {} has no tab separator", n + 1)))?;
        let shadow = base.join(shadow.trim());
        let target = base.join(target.trim());
        let id = shadow
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::unreadable(index, format!("line {} has no file name", n + 1)))?
            .to_owned();
        pairs.push(PairPaths { id, shadow, target });
    }
    Ok(pairs)
}

/// Pair up the files of one split, from `<split>.txt` when present and from
/// the stem-matched folders otherwise.
pub fn list_pairs(dataset_dir: &Path, split: Split) -> Result<Vec<PairPaths>> {
    let index = dataset_dir.join(format!("{split}.txt"));
    if index.is_file() {
        return read_index(&index, dataset_dir);
    }
    let base = dataset_dir.join(split.as_str());
    let shadows = stems_in(&base.join("shadow"))?;
    let targets = stems_in(&base.join("target"))?;
    let orphans: Vec<String> = shadows
        .keys()
        .filter(|k| !targets.contains_key(*k))
        .chain(targets.keys().filter(|k| !shadows.contains_key(*k)))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        let mut stems = orphans;
        stems.sort();
        return Err(Error::OrphanFiles {
            split: split.to_string(),
            stems,
        });
    }
    Ok(shadows
        .into_iter()
        .map(|(id, shadow)| {
            let target = targets[&id].clone();
            PairPaths { id, shadow, target }
        })
        .collect())
}

/// Decode one pair, resizing both images to `size x size` when given.
pub fn load_pair(paths: &PairPaths, size: Option<usize>) -> Result<PairedSample> {
    let mut shadow = Image::load(&paths.shadow)?;
    let mut target = Image::load(&paths.target)?;
    if shadow.channels() != target.channels() {
        // mixed gray / colour pairs are promoted to RGB
        shadow = to_rgb(&shadow)?;
        target = to_rgb(&target)?;
    }
    if let Some(n) = size {
        shadow = shadow.resize_bilinear(n, n)?;
        target = target.resize_bilinear(n, n)?;
    } else if shadow.dims() != target.dims() {
        let (h, w) = shadow.dims();
        target = target.resize_bilinear(h, w)?;
    }
    PairedSample::new(paths.id.clone(), shadow, target)
}

fn to_rgb(img: &Image) -> Result<Image> {
    if img.channels() == 3 {
        return Ok(img.clone());
    }
    let d = img.data();
    Image::from_fn(img.height(), img.width(), 3, |(y, x, _)| d[[y, x, 0]])
}

/// Load both splits of a named dataset, canonicalised to 512 x 512.
pub fn load_dataset(root: impl AsRef<Path>, name: DatasetName) -> Result<Dataset> {
    load_dataset_sized(root, name, Some(CANONICAL_SIZE))
}

pub fn load_dataset_sized(root: impl AsRef<Path>, name: DatasetName, size: Option<usize>) -> Result<Dataset> {
    let dir = root.as_ref().join(name.dir_name());
    Ok(Dataset {
        name,
        train: load_split(&dir, Split::Train, size)?,
        test: load_split(&dir, Split::Test, size)?,
    })
}

pub fn load_split(dataset_dir: &Path, split: Split, size: Option<usize>) -> Result<Vec<PairedSample>> {
    let pairs = list_pairs(dataset_dir, split)?;
    if pairs.is_empty() {
        return Err(Error::DatasetEmpty(format!("{}/{split}", dataset_dir.display())));
    }
    pairs.iter().map(|p| load_pair(p, size)).collect()
}

/// Augmentation parameters. Ranges are inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub crop_size: usize,
    /// Probability of each of the horizontal and vertical flips.
    pub flip_prob: f64,
    pub mixup_prob: f64,
    pub mixup_alpha: f64,
    /// Multiplicative brightness factor range.
    pub brightness_jitter: (f64, f64),
    /// Saturation factor range (1 keeps colours, 0 gives gray).
    pub saturation_jitter: (f64, f64),
    pub resize_scales: (f64, f64),
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_size: 256,
            flip_prob: 0.5,
            mixup_prob: 0.5,
            mixup_alpha: 0.2,
            brightness_jitter: (0.8, 1.2),
            saturation_jitter: (0.8, 1.2),
            resize_scales: (0.75, 1.25),
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A configuration that leaves `crop_size x crop_size` samples alone.
    pub fn identity(crop_size: usize) -> Self {
        AugmentConfig {
            crop_size,
            flip_prob: 0.0,
            mixup_prob: 0.0,
            mixup_alpha: 0.2,
            brightness_jitter: (1.0, 1.0),
            saturation_jitter: (1.0, 1.0),
            resize_scales: (1.0, 1.0),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flip_prob", self.flip_prob), ("mixup_prob", self.mixup_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.mixup_prob > 0.0 && !(self.mixup_alpha > 0.0) {
            return Err(Error::Config("mixup_alpha must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("brightness_jitter", self.brightness_jitter),
            ("saturation_jitter", self.saturation_jitter),
            ("resize_scales", self.resize_scales),
        ] {
            if !(lo <= hi && lo >= 0.0 && hi.is_finite()) {
                return Err(Error::Config(format!("{name} must be a range [lo, hi] with 0 <= lo <= hi")));
            }
        }
        if self.resize_scales.0 <= 0.0 || self.crop_size == 0 {
            return Err(Error::Config("resize scales and crop size must be positive".into()));
        }
        Ok(())
    }
}

/// Independent stream for `(seed, stream)`; the trainer uses the step as
/// the stream so results do not depend on which worker produced a sample.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn flip_horizontal(img: &Image) -> Image {
    Image::new(img.data().slice(s![.., ..;-1, ..]).to_owned()).expect("flip keeps a valid image")
}

pub fn flip_vertical(img: &Image) -> Image {
    Image::new(img.data().slice(s![..;-1, .., ..]).to_owned()).expect("flip keeps a valid image")
}

pub fn crop(img: &Image, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
    let (ih, iw) = img.dims();
    if top + h > ih || left + w > iw || h == 0 || w == 0 {
        return Err(Error::shape(format!(
            "crop {h}x{w} at ({top}, {left}) does not fit a {ih}x{iw} image"
        )));
    }
    Image::new(img.data().slice(s![top..top + h, left..left + w, ..]).to_owned())
}

/// Scale intensities by `brightness`, then move colours towards or away from
/// their luma by `saturation`.
pub fn jitter(img: &Image, brightness: f64, saturation: f64) -> Result<Image> {
    let mut data: Array3<f32> = img.data().clone();
    if brightness != 1.0 {
        data.mapv_inplace(|v| (v as f64 * brightness) as f32);
    }
    if saturation != 1.0 && img.channels() == 3 {
        for mut px in data.lanes_mut(ndarray::Axis(2)) {
            let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            for v in px.iter_mut() {
                *v = (luma + saturation * (*v as f64 - luma)) as f32;
            }
        }
    }
    Image::new(data)
}

/// Convex blend `lambda * a + (1 - lambda) * b` of both images of a pair.
pub fn mixup(a: &PairedSample, b: &PairedSample, lambda: f64) -> Result<PairedSample> {
    let blend = |x: &Image, y: &Image| {
        x.zip_map(y, |p, q| (lambda * p as f64 + (1.0 - lambda) * q as f64) as f32)
    };
    PairedSample::new(a.id.clone(), blend(&a.shadow, &b.shadow)?, blend(&a.target, &b.target)?)
}

/// Resize, crop and flip both images with the same draws; jitter the shadow
/// image only.
fn augment_single(sample: &PairedSample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<PairedSample> {
    let (h, w) = sample.dims();
    let crop_size = cfg.crop_size;
    if crop_size > h.min(w) {
        return Err(Error::shape(format!(
            "crop size {crop_size} exceeds the {h}x{w} sample `{}`",
            sample.id
        )));
    }
    let scale = draw(rng, cfg.resize_scales);
    let (mut shadow, mut target) = (sample.shadow.clone(), sample.target.clone());
    if scale != 1.0 {
        let nh = ((h as f64 * scale).round() as usize).max(crop_size);
        let nw = ((w as f64 * scale).round() as usize).max(crop_size);
        shadow = shadow.resize_bilinear(nh, nw)?;
        target = target.resize_bilinear(nh, nw)?;
    }
    let (h, w) = shadow.dims();
    let top = rng.random_range(0..=h - crop_size);
    let left = rng.random_range(0..=w - crop_size);
    if (top, left, crop_size, crop_size) != (0, 0, h, w) {
        shadow = crop(&shadow, top, left, crop_size, crop_size)?;
        target = crop(&target, top, left, crop_size, crop_size)?;
    }
    if rng.random_bool(cfg.flip_prob) {
        shadow = flip_horizontal(&shadow);
        target = flip_horizontal(&target);
    }
    if rng.random_bool(cfg.flip_prob) {
        shadow = flip_vertical(&shadow);
        target = flip_vertical(&target);
    }
    let brightness = draw(rng, cfg.brightness_jitter);
    let saturation = draw(rng, cfg.saturation_jitter);
    let shadow = jitter(&shadow, brightness, saturation)?;
    PairedSample::new(sample.id.clone(), shadow, target)
}

/// Full augmentation of one training sample. With probability
/// `mixup_prob` the augmented `partner` is blended in with a coefficient
/// drawn from `Beta(alpha, alpha)`. Results are clamped to `[0, 1]`.
pub fn augment(
    sample: &PairedSample,
    partner: Option<&PairedSample>,
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PairedSample> {
    cfg.validate()?;
    let mut out = augment_single(sample, cfg, rng)?;
    if let Some(partner) = partner {
        if rng.random_bool(cfg.mixup_prob) {
            let other = augment_single(partner, cfg, rng)?;
            let beta = Beta::new(cfg.mixup_alpha, cfg.mixup_alpha)
                .map_err(|e| Error::Config(format!("mixup Beta distribution: {e}")))?;
            let lambda: f64 = beta.sample(rng);
            out = mixup(&out, &other, lambda)?;
        }
    }
    Ok(PairedSample {
        id: out.id,
        shadow: out.shadow.clamp01(),
        target: out.target.clamp01(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_pair(h: usize, w: usize) -> PairedSample {
        // each pixel encodes its own coordinates
        let img = Image::from_fn(h, w, 3, |(y, x, c)| match c {
            0 => y as f32 / h as f32,
            1 => x as f32 / w as f32,
            _ => ((y * w + x) % 7) as f32 / 7.0,
        })
        .unwrap();
        PairedSample::new("grid", img.clone(), img).unwrap()
    }

    fn write_png(path: &Path, h: usize, w: usize, v: f32) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        Image::constant(h, w, 3, v).unwrap().save_png(path).unwrap();
    }

    #[test]
    fn identity_config_is_identity() {
        let s = grid_pair(32, 32);
        let mut rng = stream_rng(1, 0);
        let out = augment(&s, Some(&grid_pair(32, 32)), &AugmentConfig::identity(32), &mut rng).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn flips_are_involutions() {
        let s = grid_pair(5, 7);
        assert_eq!(flip_horizontal(&flip_horizontal(&s.shadow)), s.shadow);
        assert_eq!(flip_vertical(&flip_vertical(&s.shadow)), s.shadow);
        assert_ne!(flip_horizontal(&s.shadow), s.shadow);
        assert_eq!(flip_horizontal(&s.shadow).data()[[2, 0, 1]], s.shadow.data()[[2, 6, 1]]);
    }

    #[test]
    fn mixup_of_black_and_white() {
        let a = PairedSample::new(
            "a",
            Image::constant(4, 4, 3, 0.0).unwrap(),
            Image::constant(4, 4, 3, 0.0).unwrap(),
        )
        .unwrap();
        let b = PairedSample::new(
            "b",
            Image::constant(4, 4, 3, 1.0).unwrap(),
            Image::constant(4, 4, 3, 1.0).unwrap(),
        )
        .unwrap();
        let m = mixup(&a, &b, 0.5).unwrap();
        assert!(m.shadow.data().iter().chain(m.target.data().iter()).all(|&v| v == 0.5));
    }

    #[test]
    fn jitter_touches_shadow_only() {
        let s = grid_pair(40, 40);
        let cfg = AugmentConfig {
            crop_size: 40,
            flip_prob: 0.0,
            mixup_prob: 0.0,
            resize_scales: (1.0, 1.0),
            ..AugmentConfig::default()
        };
        let out = augment(&s, None, &cfg, &mut stream_rng(2, 0)).unwrap();
        assert_eq!(out.target, s.target);
        assert_ne!(out.shadow, s.shadow);
    }

    #[test]
    fn same_seed_same_stream() {
        let s = grid_pair(48, 40);
        let p = grid_pair(48, 40).shadow.map(|v| 1.0 - v).unwrap();
        let partner = PairedSample::new("p", p.clone(), p).unwrap();
        let cfg = AugmentConfig { crop_size: 24, mixup_prob: 1.0, ..AugmentConfig::default() };
        let a = augment(&s, Some(&partner), &cfg, &mut stream_rng(9, 4)).unwrap();
        let b = augment(&s, Some(&partner), &cfg, &mut stream_rng(9, 4)).unwrap();
        assert_eq!(a, b);
        let c = augment(&s, Some(&partner), &cfg, &mut stream_rng(9, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn crop_larger_than_image_is_an_error() {
        let s = grid_pair(16, 16);
        let cfg = AugmentConfig { crop_size: 17, ..AugmentConfig::default() };
        assert!(augment(&s, None, &cfg, &mut stream_rng(0, 0)).is_err());
        assert!(AugmentConfig { flip_prob: 1.5, ..AugmentConfig::default() }.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Without photometric jitter shadow and target must stay pixel
        /// aligned whatever geometric draws are made.
        #[test]
        fn geometry_keeps_pairs_aligned(seed in any::<u64>(), crop in 8usize..32, lo in 0.5f64..1.0, hi in 1.0f64..1.5) {
            let s = grid_pair(32, 36);
            let cfg = AugmentConfig {
                crop_size: crop,
                flip_prob: 0.5,
                mixup_prob: 0.0,
                brightness_jitter: (1.0, 1.0),
                saturation_jitter: (1.0, 1.0),
                resize_scales: (lo, hi),
                rng_seed: seed,
                ..AugmentConfig::default()
            };
            let out = augment(&s, None, &cfg, &mut stream_rng(seed, 0)).unwrap();
            prop_assert_eq!(out.shadow.dims(), (crop, crop));
            prop_assert_eq!(&out.shadow, &out.target);
        }

        #[test]
        fn augmented_values_stay_in_unit_range(seed in any::<u64>()) {
            let s = grid_pair(24, 24);
            let p = PairedSample::new("p", Image::constant(24, 24, 3, 0.9).unwrap(), Image::constant(24, 24, 3, 1.0).unwrap()).unwrap();
            let cfg = AugmentConfig { crop_size: 16, brightness_jitter: (0.5, 2.0), saturation_jitter: (0.0, 3.0), mixup_prob: 0.5, ..AugmentConfig::default() };
            let out = augment(&s, Some(&p), &cfg, &mut stream_rng(seed, 1)).unwrap();
            prop_assert!(out.shadow.data().iter().chain(out.target.data().iter()).all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn folder_layout_pairs_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("jung");
        for split in ["train", "test"] {
            for stem in ["b", "a"] {
                write_png(&ds.join(split).join("shadow").join(format!("{stem}.png")), 6, 8, 0.2);
                write_png(&ds.join(split).join("target").join(format!("{stem}.png")), 6, 8, 0.8);
            }
        }
        let pairs = list_pairs(&ds, Split::Train).unwrap();
        assert_eq!(pairs.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let data = load_dataset_sized(dir.path(), DatasetName::Jung, Some(16)).unwrap();
        assert_eq!(data.train.len(), 2);
        assert_eq!(data.test[0].dims(), (16, 16));
        assert!((data.train[0].target.data()[[0, 0, 0]] - 0.8).abs() < 1.0 / 255.0);
        let native = load_dataset_sized(dir.path(), DatasetName::Jung, None).unwrap();
        assert_eq!(native.train[0].dims(), (6, 8));
    }

    #[test]
    fn orphans_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("kligler");
        write_png(&ds.join("train/shadow/x.png"), 4, 4, 0.1);
        write_png(&ds.join("train/target/x.png"), 4, 4, 0.1);
        write_png(&ds.join("train/shadow/lonely.png"), 4, 4, 0.1);
        write_png(&ds.join("train/target/solo.jpg"), 4, 4, 0.1);
        match list_pairs(&ds, Split::Train) {
            Err(Error::OrphanFiles { split, stems }) => {
                assert_eq!(split, "train");
                assert_eq!(stems, ["lonely", "solo"]);
            }
            other => panic!("expected orphan error, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("jung")).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetName::Jung),
            Err(Error::DatasetEmpty(_))
        ));
    }

    #[test]
    fn index_file_overrides_folders() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("jung");
        write_png(&ds.join("imgs/in1.png"), 8, 8, 0.3);
        write_png(&ds.join("imgs/gt1.png"), 8, 8, 0.6);
        fs::write(ds.join("train.txt"), "# shadow\ttarget\nimgs/in1.png\timgs/gt1.png\n\n").unwrap();
        let pairs = list_pairs(&ds, Split::Train).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].id, "in1");
        let s = load_pair(&pairs[0], None).unwrap();
        assert!((s.target.data()[[0, 0, 0]] - 0.6).abs() < 1.0 / 255.0);

        fs::write(ds.join("test.txt"), "imgs/in1.png imgs/gt1.png\n").unwrap();
        assert!(matches!(list_pairs(&ds, Split::Test), Err(Error::Unreadable { .. })));
        fs::write(ds.join("test.txt"), "imgs/in1.png\timgs/missing.png\n").unwrap();
        let pairs = list_pairs(&ds, Split::Test).unwrap();
        assert!(matches!(load_pair(&pairs[0], None), Err(Error::Unreadable { .. })));
    }
}
