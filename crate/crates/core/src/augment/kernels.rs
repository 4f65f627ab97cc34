//! Individual augmentation transforms. Geometric kernels resample in place
//! (dims preserved) with trilinear interpolation and zero fill at the border.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{BlurKind, FlipAxis};
use crate::error::{contract_err, Result};
use crate::volume::{sample_trilinear, Volume};

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(contract_err!("{}", what()))
    }
}

pub fn value_shift(v: &Volume, fraction: f64) -> Result<Volume> {
    check(fraction > -1.0 && fraction.is_finite(), || {
        format!("value shift fraction {fraction} must be > -1")
    })?;
    let k = (1.0 + fraction) as f32;
    v.with_values(v.values().iter().map(|&x| x * k).collect())
}

pub fn contrast(v: &Volume, factor: f64) -> Result<Volume> {
    check(factor >= 0.0 && factor.is_finite(), || {
        format!("contrast factor {factor} must be non-negative")
    })?;
    let mean = v.values().iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64;
    v.with_values(
        v.values()
            .iter()
            .map(|&x| (mean + factor * (f64::from(x) - mean)) as f32)
            .collect(),
    )
}

/// Exact index reversal along x (horizontal) or y (vertical).
pub fn flip(v: &Volume, axis: FlipAxis) -> Volume {
    let [nz, ny, nx] = v.dims();
    let mut out = Vec::with_capacity(v.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (sy, sx) = match axis {
                    FlipAxis::Horizontal => (y, nx - 1 - x),
                    FlipAxis::Vertical => (ny - 1 - y, x),
                };
                out.push(v.get(z, sy, sx));
            }
        }
    }
    v.with_values(out).expect("same geometry")
}

/// Resamples `v` through an output-to-source coordinate map.
fn warp<F>(v: &Volume, map: F) -> Result<Volume>
where
    F: Fn(f64, f64, f64) -> (f64, f64, f64) + Sync,
{
    let [_, ny, nx] = v.dims();
    let mut out = vec![0.0f32; v.len()];
    out.par_chunks_mut(ny * nx)
        .enumerate()
        .for_each(|(z, slice)| {
            for y in 0..ny {
                for x in 0..nx {
                    let (sz, sy, sx) = map(z as f64, y as f64, x as f64);
                    slice[y * nx + x] = sample_trilinear(v, sz, sy, sx, Some(0.0));
                }
            }
        });
    v.with_values(out)
}

fn centre(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Per-axis `[z, y, x]` centered zoom: a factor below 1 keeps the central
/// fraction of the extent and stretches it back; above 1 pads with zeros and
/// shrinks back.
pub fn crop_or_pad(v: &Volume, factors: [f64; 3]) -> Result<Volume> {
    check(factors.iter().all(|&f| f > 0.0 && f < 2.0), || {
        format!("crop/pad factors {factors:?} must lie in (0, 2)")
    })?;
    let [nz, ny, nx] = v.dims();
    let (cz, cy, cx) = (centre(nz), centre(ny), centre(nx));
    warp(v, |z, y, x| {
        (
            cz + (z - cz) * factors[0],
            cy + (y - cy) * factors[1],
            cx + (x - cx) * factors[2],
        )
    })
}

/// Independent in-plane magnification of the x and y axes.
pub fn scale_xy(v: &Volume, fx: f64, fy: f64) -> Result<Volume> {
    check(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite(), || {
        format!("scale factors ({fx}, {fy}) must be positive")
    })?;
    let [_, ny, nx] = v.dims();
    let (cy, cx) = (centre(ny), centre(nx));
    warp(v, |z, y, x| (z, cy + (y - cy) / fy, cx + (x - cx) / fx))
}

/// Shift by `dx`, `dy` fractions of the x and y extents.
pub fn translate(v: &Volume, dx: f64, dy: f64) -> Result<Volume> {
    check(dx.abs() < 1.0 && dy.abs() < 1.0, || {
        format!("translation ({dx}, {dy}) must be within one extent")
    })?;
    let [_, ny, nx] = v.dims();
    let (tx, ty) = (dx * nx as f64, dy * ny as f64);
    warp(v, |z, y, x| (z, y - ty, x - tx))
}

/// Rotation about the axial (z) axis through the slice centre.
pub fn rotate_inplane(v: &Volume, degrees: f64) -> Result<Volume> {
    check(degrees.abs() <= 180.0, || format!("rotation {degrees} outside [-180, 180]"))?;
    let [_, ny, nx] = v.dims();
    let (cy, cx) = (centre(ny), centre(nx));
    let (s, c) = degrees.to_radians().sin_cos();
    warp(v, |z, y, x| {
        let (ry, rx) = (y - cy, x - cx);
        // inverse rotation
        (z, cy - s * rx + c * ry, cx + c * rx + s * ry)
    })
}

/// In-plane shear `x' = x + tan(angle) * (y - cy)`.
pub fn shear_inplane(v: &Volume, degrees: f64) -> Result<Volume> {
    check(degrees.abs() < 90.0, || format!("shear {degrees} outside (-90, 90)"))?;
    let [_, ny, _] = v.dims();
    let cy = centre(ny);
    let k = degrees.to_radians().tan();
    warp(v, |z, y, x| (z, y, x - k * (y - cy)))
}

/// Windowed blur over a `size³` neighbourhood with zero padding.
pub fn blur(v: &Volume, kind: BlurKind, size: usize, sigma: f64) -> Result<Volume> {
    check(size % 2 == 1, || format!("blur window {size} must be odd"))?;
    check(sigma > 0.0, || format!("gaussian sigma {sigma} must be positive"))?;
    if size == 1 {
        return Ok(v.clone());
    }
    match kind {
        BlurKind::Average => {
            let w = vec![1.0 / size as f64; size];
            Ok(separable(v, &w))
        }
        BlurKind::Gaussian => {
            let r = (size / 2) as f64;
            let mut w: Vec<f64> = (0..size)
                .map(|i| {
                    let d = i as f64 - r;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            Ok(separable(v, &w))
        }
        BlurKind::Median => Ok(median(v, size)),
    }
}

fn separable(v: &Volume, w: &[f64]) -> Volume {
    let dims = v.dims();
    let mut cur: Vec<f64> = v.values().iter().map(|&x| f64::from(x)).collect();
    let r = (w.len() / 2) as isize;
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let stride = strides[axis];
        let src = cur.clone();
        cur.par_iter_mut().enumerate().for_each(|(i, out)| {
            let pos = ((i / stride) % dims[axis]) as isize;
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let p = pos + k as isize - r;
                if p >= 0 && p < n {
                    let j = (i as isize + (p - pos) * stride as isize) as usize;
                    acc += wk * src[j];
                }
            }
            *out = acc;
        });
    }
    v.with_values(cur.into_iter().map(|x| x as f32).collect())
        .expect("same geometry")
}

fn median(v: &Volume, size: usize) -> Volume {
    let [nz, ny, nx] = v.dims();
    let r = (size / 2) as isize;
    let mut out = vec![0.0f32; v.len()];
    out.par_chunks_mut(ny * nx)
        .enumerate()
        .for_each(|(z, slice)| {
            let mut window = Vec::with_capacity(size * size * size);
            for y in 0..ny {
                for x in 0..nx {
                    window.clear();
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (zz, yy, xx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                                let inside = zz >= 0
                                    && yy >= 0
                                    && xx >= 0
                                    && zz < nz as isize
                                    && yy < ny as isize
                                    && xx < nx as isize;
                                window.push(if inside {
                                    v.get(zz as usize, yy as usize, xx as usize)
                                } else {
                                    0.0
                                });
                            }
                        }
                    }
                    let mid = window.len() / 2;
                    let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
                    slice[y * nx + x] = *m;
                }
            }
        });
    v.with_values(out).expect("same geometry")
}

/// Additive Gaussian noise with standard deviation `std` (0–255 scale).
pub fn gaussian_noise(v: &Volume, std: f64, seed: u64) -> Result<Volume> {
    check(std >= 0.0 && std.is_finite(), || format!("noise std {std} must be non-negative"))?;
    if std == 0.0 {
        return Ok(v.clone());
    }
    let normal = Normal::new(0.0, std).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    v.with_values(
        v.values()
            .iter()
            .map(|&x| (f64::from(x) + normal.sample(&mut rng)) as f32)
            .collect(),
    )
}
