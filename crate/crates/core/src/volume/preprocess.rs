use super::{Intensity, Volume};
use crate::error::{contract_err, Result};

/// Target isotropic voxel size.
pub const ISOTROPIC_MM: f64 = 1.5;
/// Pad value before normalization: air.
pub const HU_AIR: f32 = -1024.0;
pub const HU_CLAMP_LOW: f32 = -1024.0;
pub const HU_CLAMP_HIGH: f32 = 600.0;

/// Trilinear sample at continuous voxel coordinates `(z, y, x)`.
///
/// With `fill = None` coordinates are clamped to the grid (edge replication);
/// otherwise neighbours outside the grid contribute `fill`.
pub fn sample_trilinear(v: &Volume, z: f64, y: f64, x: f64, fill: Option<f32>) -> f32 {
    let [nz, ny, nx] = v.dims();
    let (z, y, x) = match fill {
        None => (
            z.clamp(0.0, (nz - 1) as f64),
            y.clamp(0.0, (ny - 1) as f64),
            x.clamp(0.0, (nx - 1) as f64),
        ),
        Some(f) => {
            if z <= -1.0 || y <= -1.0 || x <= -1.0 || z >= nz as f64 || y >= ny as f64 || x >= nx as f64 {
                return f;
            }
            (z, y, x)
        }
    };
    let (z0, y0, x0) = (z.floor(), y.floor(), x.floor());
    let (fz, fy, fx) = (z - z0, y - y0, x - x0);
    let (z0, y0, x0) = (z0 as isize, y0 as isize, x0 as isize);
    let at = |zi: isize, yi: isize, xi: isize| -> f64 {
        if zi < 0 || yi < 0 || xi < 0 || zi >= nz as isize || yi >= ny as isize || xi >= nx as isize {
            f64::from(fill.unwrap_or(0.0))
        } else {
            f64::from(v.get(zi as usize, yi as usize, xi as usize))
        }
    };
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
        if wz == 0.0 {
            continue;
        }
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * at(z0 + dz, y0 + dy, x0 + dx);
            }
        }
    }
    acc as f32
}

fn round_half_up(x: f64) -> usize {
    ((x + 0.5).floor() as usize).max(1)
}

/// Trilinear resampling onto an isotropic grid covering the same physical
/// extent. New extents are `round(dim * spacing / target_mm)`, at least 1.
pub fn resample_isotropic(v: &Volume, target_mm: f64) -> Result<Volume> {
    if !(target_mm > 0.0) {
        return Err(contract_err!("target spacing must be positive, got {target_mm}"));
    }
    let dims = v.dims();
    let sp = v.spacing_mm();
    let new_dims = [
        round_half_up(dims[0] as f64 * sp[0] / target_mm),
        round_half_up(dims[1] as f64 * sp[1] / target_mm),
        round_half_up(dims[2] as f64 * sp[2] / target_mm),
    ];
    let ratio = [target_mm / sp[0], target_mm / sp[1], target_mm / sp[2]];
    // voxel-centre correspondence: (i + 0.5) * new = (j + 0.5) * old
    let src = |i: usize, a: usize| (i as f64 + 0.5) * ratio[a] - 0.5;
    let xs: Vec<f64> = (0..new_dims[2]).map(|i| src(i, 2)).collect();
    let mut out = Vec::with_capacity(new_dims.iter().product());
    for k in 0..new_dims[0] {
        let z = src(k, 0);
        for j in 0..new_dims[1] {
            let y = src(j, 1);
            out.extend(xs.iter().map(|&x| sample_trilinear(v, z, y, x, None)));
        }
    }
    Volume::new(new_dims, [target_mm; 3], out, v.intensity())
}

/// Centered placement into an `n³` grid: short axes are padded with `fill`,
/// long axes are center-cropped.
pub fn pad_crop_to_cube(v: &Volume, n: usize, fill: f32) -> Result<Volume> {
    if n == 0 {
        return Err(contract_err!("cube extent must be >= 1"));
    }
    let dims = v.dims();
    if dims == [n, n, n] {
        return Ok(v.clone());
    }
    // For each axis: output index o maps to source o + shift (may be negative).
    let shift: Vec<isize> = dims
        .iter()
        .map(|&d| {
            if d >= n {
                ((d - n) / 2) as isize
            } else {
                -(((n - d) / 2) as isize)
            }
        })
        .collect();
    let mut out = vec![fill; n * n * n];
    for z in 0..n {
        let sz = z as isize + shift[0];
        if sz < 0 || sz >= dims[0] as isize {
            continue;
        }
        for y in 0..n {
            let sy = y as isize + shift[1];
            if sy < 0 || sy >= dims[1] as isize {
                continue;
            }
            let row = &mut out[(z * n + y) * n..(z * n + y + 1) * n];
            for (x, o) in row.iter_mut().enumerate() {
                let sx = x as isize + shift[2];
                if sx >= 0 && sx < dims[2] as isize {
                    *o = v.get(sz as usize, sy as usize, sx as usize);
                }
            }
        }
    }
    Volume::new([n, n, n], v.spacing_mm(), out, v.intensity())
}

/// Clamps HU to `[-1024, 600]` and maps that interval affinely onto `[0, 255]`.
pub fn normalize_intensity(v: &Volume) -> Result<Volume> {
    if v.intensity() != Intensity::Hu {
        return Err(contract_err!("normalize_intensity expects a HU volume; it is already normalized"));
    }
    let span = HU_CLAMP_HIGH - HU_CLAMP_LOW;
    let values = v
        .values()
        .iter()
        .map(|&h| (h.clamp(HU_CLAMP_LOW, HU_CLAMP_HIGH) - HU_CLAMP_LOW) * 255.0 / span)
        .collect();
    Volume::new(v.dims(), v.spacing_mm(), values, Intensity::Norm255)
}

/// Full chain for a HU scan: isotropic 1.5 mm, air-padded `n³` cube, 0–255.
pub fn preprocess(v: &Volume, n: usize) -> Result<Volume> {
    let iso = resample_isotropic(v, ISOTROPIC_MM)?;
    let cube = pad_crop_to_cube(&iso, n, HU_AIR)?;
    normalize_intensity(&cube)
}
