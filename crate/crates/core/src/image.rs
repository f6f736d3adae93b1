//! The floating-point raster every other module consumes and produces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::{apply_separable, AxisMap};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb => 3,
            ColorSpace::Gray => 1,
        }
    }

    pub fn from_channels(c: usize) -> Result<Self> {
        match c {
            3 => Ok(ColorSpace::Rgb),
            1 => Ok(ColorSpace::Gray),
            _ => Err(Error::InvalidImage(format!("unsupported channel count {c}"))),
        }
    }
}

/// An `H x W x C` raster of finite `f32` samples, canonically in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f32>,
    color: ColorSpace,
}

impl Image {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidImage(format!("empty raster {h}x{w}")));
        }
        let color = ColorSpace::from_channels(c)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image samples".into()));
        }
        Ok(Image { data, color })
    }

    pub fn from_fn(h: usize, w: usize, c: usize, f: impl FnMut((usize, usize, usize)) -> f32) -> Result<Self> {
        Self::new(Array3::from_shape_fn((h, w, c), f))
    }

    pub fn constant(h: usize, w: usize, c: usize, value: f32) -> Result<Self> {
        Self::new(Array3::from_elem((h, w, c), value))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!(self.data.dim(), other.data.dim());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn clamp01(&self) -> Image {
        Image {
            data: self.data.mapv(|v| v.clamp(0.0, 1.0)),
            color: self.color,
        }
    }

    /// Row-major channel planes.
    pub fn planes(&self) -> Vec<Vec<f32>> {
        self.data
            .axis_iter(Axis(2))
            .map(|p| p.iter().copied().collect())
            .collect()
    }

    pub fn from_planes(h: usize, w: usize, planes: &[Vec<f32>]) -> Result<Self> {
        if planes.iter().any(|p| p.len() != h * w) {
            return Err(Error::shape("plane length does not match H x W"));
        }
        Self::from_fn(h, w, planes.len(), |(y, x, c)| planes[c][y * w + x])
    }

    /// Apply separable axis maps to every channel.
    pub fn resample(&self, rows: &AxisMap, cols: &AxisMap) -> Result<Image> {
        let (h, w) = self.dims();
        let planes: Vec<Vec<f32>> = self
            .planes()
            .iter()
            .map(|p| apply_separable(p, h, w, rows, cols))
            .collect();
        Image::from_planes(rows.out_len(), cols.out_len(), &planes)
    }

    pub fn resize_bilinear(&self, h: usize, w: usize) -> Result<Image> {
        if (h, w) == self.dims() {
            return Ok(self.clone());
        }
        self.resample(&AxisMap::bilinear(self.height(), h), &AxisMap::bilinear(self.width(), w))
    }

    /// `C x H x W` tensor in `f64`.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = self.dims();
        let data = self.planes().into_iter().flatten().map(f64::from).collect();
        Tensor::new(vec![self.channels(), h, w], data).expect("image tensor shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let (c, h, w) = t.dims3();
        let planes: Vec<Vec<f32>> = (0..c).map(|ch| t.plane(ch).iter().map(|&v| v as f32).collect()).collect();
        Image::from_planes(h, w, &planes)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Image> {
        Image::new(self.data.mapv(f))
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f32, f32) -> f32) -> Result<Image> {
        if self.data.dim() != other.data.dim() {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.data.dim(),
                other.data.dim()
            )));
        }
        let mut out = self.data.clone();
        out.zip_mut_with(&other.data, |a, &b| *a = f(*a, b));
        Image::new(out)
    }

    /// Concatenate images of equal height and channel count left to right.
    pub fn hstack(images: &[&Image]) -> Result<Image> {
        if images.is_empty() {
            return Err(Error::shape("nothing to stack"));
        }
        let views: Vec<_> = images.iter().map(|i| i.data.view()).collect();
        let data = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::shape(format!("hstack: {e}")))?;
        Image::new(data)
    }

    /// Decode an 8-bit (or 16-bit) PNG/JPEG into `[0, 1]`. Grayscale files
    /// stay single-channel; everything else becomes RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynimg = image::open(path).map_err(|e| Error::unreadable(path, e))?;
        let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
        if dynimg.color().has_color() {
            let rgb = dynimg.to_rgb32f();
            let raw = rgb.into_raw();
            Image::new(Array3::from_shape_vec((h, w, 3), raw).map_err(|e| Error::shape(e.to_string()))?)
        } else {
            let luma = dynimg.to_luma32f();
            let raw = luma.into_raw();
            Image::new(Array3::from_shape_vec((h, w, 1), raw).map_err(|e| Error::shape(e.to_string()))?)
        }
    }

    /// Quantise to 8 bits (round to nearest after clamping to `[0, 1]`).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w) = self.dims();
        let color = match self.color {
            ColorSpace::Rgb => image::ExtendedColorType::Rgb8,
            ColorSpace::Gray => image::ExtendedColorType::L8,
        };
        image::save_buffer_with_format(path, &self.to_u8(), w as u32, h as u32, color, image::ImageFormat::Png)
            .map_err(|e| Error::unreadable(path, e))
    }

    /// Write a little-endian Portable Float Map (`PF` for RGB, `Pf` for
    /// grayscale). Samples are stored bit-exactly, bottom row first.
    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w) = self.dims();
        let mut out = BufWriter::new(File::create(path)?);
        let magic = match self.color {
            ColorSpace::Rgb => "PF",
            ColorSpace::Gray => "Pf",
        };
        write!(out, "{magic}\n{w} {h}\n-1.0\n")?;
        for y in (0..h).rev() {
            for x in 0..w {
                for c in 0..self.channels() {
                    out.write_all(&self.data[(y, x, c)].to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bad = |m: &str| Error::unreadable(path, m);
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::unreadable(path, e))?);
        let mut header = Vec::new();
        while header.len() < 3 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated PFM header"));
            }
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        let c = match header[0].as_str() {
            "PF" => 3,
            "Pf" => 1,
            _ => return Err(bad("not a PFM file")),
        };
        let w: usize = header[1].parse().map_err(|_| bad("bad PFM width"))?;
        let h: usize = header
            .get(2)
            .ok_or_else(|| bad("missing PFM height"))?
            .parse()
            .map_err(|_| bad("bad PFM height"))?;
        let mut scale_line = header.get(3).cloned();
        if scale_line.is_none() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            scale_line = Some(line.trim().to_owned());
        }
        let scale: f32 = scale_line.unwrap().parse().map_err(|_| bad("bad PFM scale"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != h * w * c * 4 {
            return Err(bad("PFM payload length does not match header"));
        }
        let mut data = Array3::zeros((h, w, c));
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if scale < 0.0 {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let ch = i % c;
            let x = (i / c) % w;
            let y = h - 1 - i / (c * w);
            data[(y, x, ch)] = v;
        }
        Image::new(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_channels() {
        assert!(Image::constant(2, 2, 3, f32::NAN).is_err());
        assert!(Image::constant(2, 2, 2, 0.5).is_err());
        assert!(Image::new(Array3::zeros((0, 3, 1))).is_err());
    }

    #[test]
    fn pfm_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(3, 5, 3, |(y, x, c)| (y as f32 - 1.3) * 0.37 + x as f32 * 1e-7 - c as f32).unwrap();
        let path = dir.path().join("a.pfm");
        img.save_pfm(&path).unwrap();
        let back = Image::load_pfm(&path).unwrap();
        assert_eq!(back, img);

        let gray = Image::from_fn(4, 2, 1, |(y, x, _)| -(y as f32) / 3.0 + x as f32).unwrap();
        gray.save_pfm(&path).unwrap();
        assert_eq!(Image::load_pfm(&path).unwrap(), gray);
    }

    #[test]
    fn png_roundtrip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 6, 3, |(y, x, c)| ((y * 7 + x * 3 + c) % 11) as f32 / 10.3).unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-6);
    }

    #[test]
    fn tensor_roundtrip() {
        let img = Image::from_fn(3, 4, 3, |(y, x, c)| (y * 100 + x * 10 + c) as f32).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[3, 3, 4]);
        assert_eq!(t.data()[12 + 2 * 4 + 3], 231.0);
        assert_eq!(Image::from_tensor(&t).unwrap(), img);
    }
}
