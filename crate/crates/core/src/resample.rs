//! One-dimensional sparse linear maps and their separable application to
//! image planes.
//!
//! Every spatial resampling step in the crate (pyramid blur/decimate,
//! zero-interleave upsampling, bilinear resize, adaptive average pooling and
//! the Gaussian SSIM window) is a separable linear operator. Each axis is
//! described by an [`AxisMap`]; a plane is transformed by applying the column
//! map along x and the row map along y. The transpose of an [`AxisMap`] is the
//! adjoint used by reverse-mode differentiation.

use num_traits::Float;

/// Burt-Adelson binomial kernel (1, 4, 6, 4, 1) / 16.
pub const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// A sparse `out_len x in_len` matrix stored as per-output tap lists.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMap {
    in_len: usize,
    out_len: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

/// Reflect an index into `0..n` without repeating the border sample
/// (`-1 -> 1`, `n -> n - 2`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

impl AxisMap {
    pub fn new(in_len: usize, out_len: usize, taps: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(taps.len(), out_len, "one tap list per output sample");
        debug_assert!(taps.iter().flatten().all(|&(i, _)| i < in_len));
        AxisMap {
            in_len,
            out_len,
            taps,
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn taps(&self) -> &[Vec<(usize, f64)>] {
        &self.taps
    }

    /// Identity map on `n` samples.
    pub fn identity(n: usize) -> Self {
        AxisMap::new(n, n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    /// Blur with the binomial kernel (reflective border) and keep even
    /// samples. Output length is `ceil(n / 2)`.
    pub fn pyr_down(n: usize) -> Self {
        let out = n.div_ceil(2);
        let taps = (0..out)
            .map(|i| {
                BINOMIAL5
                    .iter()
                    .enumerate()
                    .map(|(t, &k)| (reflect(2 * i as isize + t as isize - 2, n), k))
                    .collect()
            })
            .collect();
        AxisMap::new(n, out, taps)
    }

    /// Zero-interleave `child` samples onto a grid of `target` samples and
    /// blur with twice the binomial kernel (reflective border on the
    /// upsampled grid). Requires `ceil(target / 2) == child`.
    pub fn pyr_up(child: usize, target: usize) -> Option<Self> {
        if target == 0 || target.div_ceil(2) != child {
            return None;
        }
        let taps = (0..target)
            .map(|j| {
                BINOMIAL5
                    .iter()
                    .enumerate()
                    .filter_map(|(t, &k)| {
                        let m = reflect(j as isize + t as isize - 2, target);
                        m.is_multiple_of(2).then_some((m / 2, 2.0 * k))
                    })
                    .collect()
            })
            .collect();
        Some(AxisMap::new(child, target, taps))
    }

    /// Bilinear interpolation with half-pixel centres (`align_corners = false`).
    pub fn bilinear(in_len: usize, out_len: usize) -> Self {
        let scale = in_len as f64 / out_len as f64;
        let taps = (0..out_len)
            .map(|j| {
                let src = ((j as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(in_len - 1);
                let i1 = (i0 + 1).min(in_len - 1);
                let frac = src - i0 as f64;
                if i0 == i1 || frac == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i1, frac)]
                }
            })
            .collect();
        AxisMap::new(in_len, out_len, taps)
    }

    /// Adaptive average pooling: bin `i` covers
    /// `floor(i * n / out) .. ceil((i + 1) * n / out)`.
    pub fn adaptive_avg(in_len: usize, out_len: usize) -> Self {
        let taps = (0..out_len)
            .map(|i| {
                let start = i * in_len / out_len;
                let end = ((i + 1) * in_len).div_ceil(out_len);
                let w = 1.0 / (end - start) as f64;
                (start..end).map(|k| (k, w)).collect()
            })
            .collect();
        AxisMap::new(in_len, out_len, taps)
    }

    /// Normalised Gaussian window of `win` samples evaluated at every fully
    /// contained position (`n - win + 1` outputs).
    pub fn gaussian_valid(n: usize, win: usize, sigma: f64) -> Self {
        assert!(win >= 1 && win <= n);
        let half = (win as f64 - 1.0) / 2.0;
        let mut kernel: Vec<f64> = (0..win)
            .map(|t| {
                let d = t as f64 - half;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let out = n - win + 1;
        let taps = (0..out)
            .map(|i| kernel.iter().enumerate().map(|(t, &k)| (i + t, k)).collect())
            .collect();
        AxisMap::new(n, out, taps)
    }

    /// The adjoint map (`in_len` and `out_len` swapped).
    pub fn transpose(&self) -> Self {
        let mut taps = vec![Vec::new(); self.in_len];
        for (o, row) in self.taps.iter().enumerate() {
            for &(i, w) in row {
                taps[i].push((o, w));
            }
        }
        AxisMap::new(self.out_len, self.in_len, taps)
    }

    /// Apply to a 1-D signal.
    pub fn apply<T: Float>(&self, src: &[T]) -> Vec<T> {
        assert_eq!(src.len(), self.in_len);
        self.taps
            .iter()
            .map(|row| {
                row.iter()
                    .fold(T::zero(), |acc, &(i, w)| acc + src[i] * cast::<T>(w))
            })
            .collect()
    }
}

#[inline]
fn cast<T: Float>(w: f64) -> T {
    T::from(w).expect("weight representable")
}

/// Apply `rows` along y and `cols` along x to a row-major `h x w` plane.
pub fn apply_separable<T: Float>(
    plane: &[T],
    h: usize,
    w: usize,
    rows: &AxisMap,
    cols: &AxisMap,
) -> Vec<T> {
    assert_eq!(plane.len(), h * w);
    assert_eq!(rows.in_len, h);
    assert_eq!(cols.in_len, w);
    let ow = cols.out_len;
    let oh = rows.out_len;

    let col_taps: Vec<Vec<(usize, T)>> = cols
        .taps
        .iter()
        .map(|r| r.iter().map(|&(i, wt)| (i, cast(wt))).collect())
        .collect();
    let mut tmp = vec![T::zero(); h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let dst = &mut tmp[y * ow..(y + 1) * ow];
        for (d, taps) in dst.iter_mut().zip(&col_taps) {
            *d = taps.iter().fold(T::zero(), |acc, &(i, wt)| acc + src[i] * wt);
        }
    }

    let mut out = vec![T::zero(); oh * ow];
    for (oy, taps) in rows.taps.iter().enumerate() {
        let dst = &mut out[oy * ow..(oy + 1) * ow];
        for &(iy, wt) in taps {
            let wt: T = cast(wt);
            let src = &tmp[iy * ow..(iy + 1) * ow];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s * wt;
            }
        }
    }
    out
}
