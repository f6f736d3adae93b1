//! Gaussian/Laplacian pyramid decomposition with exact reconstruction.
//!
//! A pyramid of depth `L` holds `L` band-pass images (finest first) and one
//! low-pass residual at `ceil(H / 2^L) x ceil(W / 2^L)`. Odd sizes are
//! handled by ceil-halving on the way down and by passing the explicit
//! parent size on the way up. Both directions blur with the binomial
//! (1, 4, 6, 4, 1) / 16 kernel and reflect at the borders without repeating
//! the edge sample.
//!
//! ```
//! use deshadow::image::Image;
//! use deshadow::pyramid::{decompose, reconstruct};
//!
//! let img = Image::from_fn(40, 33, 3, |(y, x, c)| ((y * 3 + x * 5 + c) % 17) as f32 / 16.0).unwrap();
//! let pyr = decompose(&img, 3).unwrap();
//! assert_eq!(pyr.low().dims(), (5, 5));
//! let back = reconstruct(&pyr).unwrap();
//! assert!(back.max_abs_diff(&img) < 1e-5);
//! ```

use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::AxisMap;

/// Smallest side length the coarsest level may have.
pub const MIN_LOW_SIDE: usize = 4;

/// Deepest level count accepted by the model configuration.
pub const MAX_LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    highs: Vec<Image>,
    low: Image,
}

impl Pyramid {
    /// Assemble a pyramid, checking the ceil-halving shape chain.
    pub fn new(highs: Vec<Image>, low: Image) -> Result<Self> {
        let pyr = Pyramid { highs, low };
        pyr.check_chain()?;
        Ok(pyr)
    }

    pub fn levels(&self) -> usize {
        self.highs.len()
    }

    pub fn highs(&self) -> &[Image] {
        &self.highs
    }

    pub fn low(&self) -> &Image {
        &self.low
    }

    pub fn into_parts(self) -> (Vec<Image>, Image) {
        (self.highs, self.low)
    }

    /// Full-resolution dimensions.
    pub fn dims(&self) -> (usize, usize) {
        self.highs.first().unwrap_or(&self.low).dims()
    }

    fn check_chain(&self) -> Result<()> {
        let c = self.low.channels();
        let mut sizes: Vec<(usize, usize)> = self.highs.iter().map(Image::dims).collect();
        sizes.push(self.low.dims());
        for (k, pair) in sizes.windows(2).enumerate() {
            let ((h, w), (ch, cw)) = (pair[0], pair[1]);
            if h.div_ceil(2) != ch || w.div_ceil(2) != cw {
                return Err(Error::shape(format!(
                    "level {k} is {h}x{w} but level {} is {ch}x{cw}",
                    k + 1
                )));
            }
        }
        if self.highs.iter().any(|b| b.channels() != c) {
            return Err(Error::shape("pyramid bands disagree on channel count"));
        }
        Ok(())
    }
}

/// Blur with the binomial kernel and keep every other sample; output is
/// `ceil(H / 2) x ceil(W / 2)`.
pub fn pyr_down(img: &Image) -> Result<Image> {
    let (h, w) = img.dims();
    if h < 2 || w < 2 {
        return Err(Error::InvalidImage(format!("cannot downsample a {h}x{w} image")));
    }
    img.resample(&AxisMap::pyr_down(h), &AxisMap::pyr_down(w))
}

/// Zero-interleave onto a `target_h x target_w` grid and blur with the
/// binomial kernel scaled by two per axis.
pub fn pyr_up(img: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    let (h, w) = img.dims();
    let rows = AxisMap::pyr_up(h, target_h);
    let cols = AxisMap::pyr_up(w, target_w);
    match (rows, cols) {
        (Some(r), Some(c)) => img.resample(&r, &c),
        _ => Err(Error::shape(format!(
            "{h}x{w} is not the half-size child of {target_h}x{target_w}"
        ))),
    }
}

/// Largest level count `decompose` accepts for an `h x w` image.
pub fn max_levels(h: usize, w: usize) -> usize {
    let mut levels = 0;
    while h.min(w) >= MIN_LOW_SIDE << (levels + 1) {
        levels += 1;
    }
    levels
}

pub fn check_depth(h: usize, w: usize, levels: usize) -> Result<()> {
    let needed = MIN_LOW_SIDE << levels;
    if h.min(w) < needed {
        return Err(Error::PyramidTooDeep {
            levels,
            needed,
            height: h,
            width: w,
        });
    }
    Ok(())
}

/// Gaussian stack `g[0] = img, g[k + 1] = pyr_down(g[k])`.
pub fn gaussian_levels(img: &Image, levels: usize) -> Result<Vec<Image>> {
    let (h, w) = img.dims();
    check_depth(h, w, levels)?;
    let mut gauss = vec![img.clone()];
    for _ in 0..levels {
        let next = pyr_down(gauss.last().expect("non-empty"))?;
        gauss.push(next);
    }
    Ok(gauss)
}

/// Split into band-pass images `g[k] - pyr_up(g[k + 1])` and the residual
/// `g[levels]`.
pub fn decompose(img: &Image, levels: usize) -> Result<Pyramid> {
    let mut gauss = gaussian_levels(img, levels)?;
    let highs = gauss
        .windows(2)
        .map(|pair| {
            let (h, w) = pair[0].dims();
            let up = pyr_up(&pair[1], h, w)?;
            pair[0].zip_map(&up, |a, b| a - b)
        })
        .collect::<Result<Vec<_>>>()?;
    let low = gauss.pop().expect("residual level");
    Ok(Pyramid { highs, low })
}

/// Invert [`decompose`]: from the coarsest level, `low = pyr_up(low) + high`.
pub fn reconstruct(pyr: &Pyramid) -> Result<Image> {
    pyr.check_chain()?;
    let mut cur = pyr.low.clone();
    for band in pyr.highs.iter().rev() {
        let (h, w) = band.dims();
        cur = pyr_up(&cur, h, w)?.zip_map(band, |a, b| a + b)?;
    }
    Ok(cur)
}
