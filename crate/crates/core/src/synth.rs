//! Seeded synthetic document pairs: text strokes on tinted paper, with a
//! soft coloured shadow over part of the page.
//!
//! ```
//! use deshadow::synth::synthetic_pair;
//!
//! let p = synthetic_pair("doc", 48, 40, 7).unwrap();
//! assert_eq!(p.dims(), (48, 40));
//! assert_eq!(p, synthetic_pair("doc", 48, 40, 7).unwrap());
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::data::{stream_rng, DatasetName, PairedSample, Split};
use crate::error::Result;
use crate::image::Image;

/// One pair of `h x w` RGB images; equal arguments give equal pairs.
pub fn synthetic_pair(id: &str, h: usize, w: usize, seed: u64) -> Result<PairedSample> {
    let mut rng = stream_rng(seed, 0x5157_0000);
    let paper: [f32; 3] = [rng.random_range(0.85..0.95), rng.random_range(0.83..0.93), rng.random_range(0.78..0.9)];
    let ink: f32 = rng.random_range(0.05..0.2);
    let line_pitch = rng.random_range(6..10usize);
    let margin = w / 10 + 1;

    // words: (row, start, len) runs of ink
    let mut words = Vec::new();
    let mut y = line_pitch / 2 + 1;
    while y + 2 < h {
        let mut x = margin;
        while x + 3 < w.saturating_sub(margin) {
            let len = rng.random_range(3..12usize);
            words.push((y, x, len.min(w - margin - x)));
            x += len + rng.random_range(2..5usize);
        }
        y += line_pitch;
    }
    let mut ink_mask = vec![false; h * w];
    for &(row, start, len) in &words {
        for x in start..start + len {
            // two-pixel stroke with gaps between letters
            if (x - start) % 4 != 3 {
                ink_mask[row * w + x] = true;
                if row + 1 < h {
                    ink_mask[(row + 1) * w + x] = true;
                }
            }
        }
    }
    let noise: Vec<f32> = (0..h * w * 3).map(|_| rng.random_range(-0.015..0.015)).collect();
    let target = Image::from_fn(h, w, 3, |(y, x, c)| {
        let base = if ink_mask[y * w + x] { ink } else { paper[c] };
        (base + noise[(y * w + x) * 3 + c]).clamp(0.0, 1.0)
    })?;

    // shadow: half plane at a random angle with a soft edge
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let offset: f32 = rng.random_range(-0.25..0.25);
    let softness: f32 = rng.random_range(0.03..0.12);
    let depth: f32 = rng.random_range(0.35..0.6);
    let tint: [f32; 3] = [rng.random_range(0.9..1.0), rng.random_range(0.95..1.02), rng.random_range(1.0..1.12)];
    let shadow = Image::from_fn(h, w, 3, |(y, x, c)| {
        let u = (x as f32 + 0.5) / w as f32 - 0.5;
        let v = (y as f32 + 0.5) / h as f32 - 0.5;
        let d = (u * dx + v * dy - offset) / softness;
        let inside = 1.0 / (1.0 + d.exp());
        let gain = 1.0 - inside * (1.0 - depth * tint[c]);
        (target.data()[[y, x, c]] * gain).clamp(0.0, 1.0)
    })?;
    PairedSample::new(id, shadow, target)
}

/// Write `train` and `test` splits of synthetic pairs in the folder layout
/// [`crate::data::list_pairs`] reads, under `<root>/<name>/`.
pub fn write_synthetic_dataset(
    root: &Path,
    name: DatasetName,
    counts: (usize, usize),
    size: usize,
    seed: u64,
) -> Result<()> {
    for (split, n, offset) in [(Split::Train, counts.0, 0u64), (Split::Test, counts.1, 1 << 32)] {
        let base = root.join(name.dir_name()).join(split.as_str());
        fs::create_dir_all(base.join("shadow"))?;
        fs::create_dir_all(base.join("target"))?;
        for i in 0..n {
            let id = format!("{:03}", i);
            let pair = synthetic_pair(&id, size, size, seed.wrapping_add(offset + i as u64))?;
            pair.shadow.save_png(base.join("shadow").join(format!("{id}.png")))?;
            pair.target.save_png(base.join("target").join(format!("{id}.png")))?;
        }
    }
    Ok(())
}
