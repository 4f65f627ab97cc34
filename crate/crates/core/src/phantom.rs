//! Synthetic cohort: box torsos holding two ellipsoidal air-filled lungs, with
//! a known linear law from air volume and height to FVC.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::sample_seed;
use crate::cohort::{write_manifest, CohortSample, DemographicsRecord, PftRecord};
use crate::error::{contract_err, Error, Result};
use crate::volume::{save_volume, Intensity, Volume};

/// Voxels darker than this count as air inside the body.
pub const AIR_THRESHOLD_HU: f32 = -400.0;

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    /// Grid extent in voxels per axis.
    pub cube: usize,
    pub spacing_mm: f64,
    /// Per-side lung semi-axis ranges in mm, as `[x, y, z]` each `[lo, hi]`.
    pub semi_axes_mm: [[f64; 2]; 3],
    pub lung_hu: f64,
    pub body_hu: f64,
    pub background_hu: f64,
    /// Gaussian texture added inside the body.
    pub texture_std_hu: f64,
    /// Air gap between the torso block and the grid edge.
    pub body_margin_mm: f64,
    /// Tissue between the two lungs.
    pub lung_gap_mm: f64,
    pub age_range: [f64; 2],
    pub height_in_range: [f64; 2],
    pub weight_lb_range: [f64; 2],
    pub cigs_per_day_range: [f64; 2],
    pub smoke_years_range: [f64; 2],
    /// FVC litres per litre of lung air.
    pub alpha: f64,
    /// FVC litres per inch of height.
    pub beta: f64,
    /// Mean FEV1/FVC ratio.
    pub gamma: f64,
    pub gamma_std: f64,
    /// FVC noise standard deviation in litres.
    pub sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            cube: 64,
            spacing_mm: 1.5,
            semi_axes_mm: [[10.0, 14.0], [16.0, 22.0], [22.0, 32.0]],
            lung_hu: -850.0,
            body_hu: 40.0,
            background_hu: -1000.0,
            texture_std_hu: 10.0,
            body_margin_mm: 6.0,
            lung_gap_mm: 2.0,
            age_range: [45.0, 80.0],
            height_in_range: [60.0, 76.0],
            weight_lb_range: [110.0, 250.0],
            cigs_per_day_range: [5.0, 40.0],
            smoke_years_range: [10.0, 50.0],
            alpha: 40.0,
            beta: 0.0,
            gamma: 0.72,
            gamma_std: 0.05,
            sigma: 0.05,
        }
    }
}

impl PhantomSpec {
    pub fn cube_mm(&self) -> f64 {
        self.cube as f64 * self.spacing_mm
    }

    fn half_body_mm(&self) -> f64 {
        self.cube_mm() / 2.0 - self.body_margin_mm
    }

    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.cube == 0 || !(self.spacing_mm > 0.0) {
            bad.push("phantom grid must be non-empty with positive spacing".to_string());
        }
        let ranges = [
            ("semi_axes_mm.x", self.semi_axes_mm[0]),
            ("semi_axes_mm.y", self.semi_axes_mm[1]),
            ("semi_axes_mm.z", self.semi_axes_mm[2]),
            ("age_range", self.age_range),
            ("height_in_range", self.height_in_range),
            ("weight_lb_range", self.weight_lb_range),
            ("cigs_per_day_range", self.cigs_per_day_range),
            ("smoke_years_range", self.smoke_years_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                bad.push(format!("phantom.{name} [{lo}, {hi}] must be positive and ordered"));
            }
        }
        let half = self.half_body_mm();
        let [ax, ay, az] = self.semi_axes_mm.map(|r| r[1]);
        if self.lung_gap_mm / 2.0 + 2.0 * ax > half || ay > half || az > half {
            bad.push(format!(
                "lungs with semi-axes up to ({ax}, {ay}, {az}) mm do not fit a {half} mm half-width torso"
            ));
        }
        if !(self.lung_hu < f64::from(AIR_THRESHOLD_HU) && self.body_hu > f64::from(AIR_THRESHOLD_HU)) {
            bad.push("phantom lung HU must be below and body HU above the air threshold".into());
        }
        if !(self.alpha > 0.0) {
            bad.push(format!("phantom.alpha {} must be positive", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bad.push(format!("phantom.gamma {} must lie in (0, 1]", self.gamma));
        }
        if !(self.sigma >= 0.0 && self.gamma_std >= 0.0 && self.texture_std_hu >= 0.0 && self.beta >= 0.0) {
            bad.push("phantom noise levels and beta must be non-negative".into());
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// The sampled parameters of one phantom, before rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomDraw {
    /// Semi-axes `[x, y, z]` in mm for the left and right lung.
    pub lungs_mm: [[f64; 3]; 2],
    pub air_volume_l: f64,
    pub demographics: DemographicsRecord,
    pub pft: PftRecord,
    pub texture_seed: u64,
}

pub fn ellipsoid_volume_l(semi_axes_mm: [f64; 3]) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * semi_axes_mm.iter().product::<f64>() / 1e6
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn draw_phantom(spec: &PhantomSpec, seed: u64) -> Result<PhantomDraw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lung = || std::array::from_fn(|k| uniform(&mut rng, spec.semi_axes_mm[k]));
    let lungs_mm: [[f64; 3]; 2] = [lung(), lung()];
    let air_volume_l = lungs_mm.iter().map(|&l| ellipsoid_volume_l(l)).sum::<f64>();
    let demographics = DemographicsRecord {
        age: uniform(&mut rng, spec.age_range).round(),
        sex: rng.gen_range(0..=1),
        height_in: uniform(&mut rng, spec.height_in_range),
        weight_lb: uniform(&mut rng, spec.weight_lb_range),
        smoking_status: rng.gen_range(0..=1),
        cigs_per_day: uniform(&mut rng, spec.cigs_per_day_range).round(),
        smoke_years: uniform(&mut rng, spec.smoke_years_range).round(),
    };
    let noise: f64 = if spec.sigma > 0.0 {
        Normal::new(0.0, spec.sigma).expect("valid sigma").sample(&mut rng)
    } else {
        0.0
    };
    let fvc_l = (spec.alpha * air_volume_l + spec.beta * demographics.height_in + noise).max(0.1);
    let ratio = if spec.gamma_std > 0.0 {
        Normal::new(spec.gamma, spec.gamma_std)
            .expect("valid gamma std")
            .sample(&mut rng)
            .clamp(0.3, 1.0)
    } else {
        spec.gamma
    };
    Ok(PhantomDraw {
        lungs_mm,
        air_volume_l,
        demographics,
        pft: PftRecord {
            fvc_l,
            fev1_l: ratio * fvc_l,
        },
        texture_seed: rng.gen(),
    })
}

/// Fraction of the voxel centred at `c` (mm, half-width `h`) inside the
/// ellipsoid at `centre` with semi-axes `r`.
fn occupancy(c: [f64; 3], h: f64, centre: [f64; 3], r: [f64; 3]) -> f64 {
    let inside = |p: [f64; 3]| {
        (0..3)
            .map(|k| ((p[k] - centre[k]) / r[k]).powi(2))
            .sum::<f64>()
            <= 1.0
    };
    let corners = (0..8).filter(|&m| {
        inside(std::array::from_fn(|k| {
            c[k] + if m >> k & 1 == 1 { h } else { -h }
        }))
    });
    match corners.count() {
        8 => 1.0,
        0 if !inside(c) => 0.0,
        _ => {
            let n = SUPERSAMPLE;
            let step = 2.0 * h / n as f64;
            let mut hits = 0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let p = [
                            c[0] - h + (i as f64 + 0.5) * step,
                            c[1] - h + (j as f64 + 0.5) * step,
                            c[2] - h + (k as f64 + 0.5) * step,
                        ];
                        hits += usize::from(inside(p));
                    }
                }
            }
            hits as f64 / (n * n * n) as f64
        }
    }
}

/// Renders a drawn phantom in HU. Coordinates are mm from the grid centre;
/// partial-volume voxels at lung borders mix body and lung HU by occupancy.
pub fn render_phantom(spec: &PhantomSpec, draw: &PhantomDraw) -> Result<Volume> {
    spec.validate()?;
    let n = spec.cube;
    let s = spec.spacing_mm;
    let half = spec.half_body_mm();
    let coord = |i: usize| (i as f64 + 0.5) * s - spec.cube_mm() / 2.0;
    // lung centres as [x, y, z]
    let lungs: Vec<([f64; 3], [f64; 3])> = draw
        .lungs_mm
        .iter()
        .enumerate()
        .map(|(side, &r)| {
            let off = spec.lung_gap_mm / 2.0 + r[0];
            let x = if side == 0 { -off } else { off };
            ([x, 0.0, 0.0], r)
        })
        .collect();
    let texture = Normal::new(0.0, spec.texture_std_hu.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut values = vec![0.0f32; n * n * n];
    values
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(z, slice)| {
            let mut rng = ChaCha8Rng::seed_from_u64(draw.texture_seed ^ (z as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let cz = coord(z);
            for y in 0..n {
                let cy = coord(y);
                for x in 0..n {
                    let cx = coord(x);
                    let in_body = cx.abs() <= half && cy.abs() <= half && cz.abs() <= half;
                    let hu = if in_body {
                        let f: f64 = lungs
                            .iter()
                            .map(|&(c, r)| occupancy([cx, cy, cz], s / 2.0, c, r))
                            .sum::<f64>()
                            .min(1.0);
                        let base = spec.body_hu * (1.0 - f) + spec.lung_hu * f;
                        if spec.texture_std_hu > 0.0 {
                            base + texture.sample(&mut rng)
                        } else {
                            base
                        }
                    } else {
                        spec.background_hu
                    };
                    slice[y * n + x] = hu as f32;
                }
            }
        });
    Volume::new([n, n, n], [s; 3], values, Intensity::Hu)
}

/// Air volume in litres: voxels below `threshold_hu` inside the bounding box
/// of the body (voxels at or above the threshold).
pub fn air_volume(v: &Volume, threshold_hu: f32) -> Result<f64> {
    if v.intensity() != Intensity::Hu {
        return Err(contract_err!("air volume needs an HU volume"));
    }
    let [nz, ny, nx] = v.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if v.get(z, y, x) >= threshold_hu {
                    any = true;
                    for (k, p) in [z, y, x].into_iter().enumerate() {
                        lo[k] = lo[k].min(p);
                        hi[k] = hi[k].max(p);
                    }
                }
            }
        }
    }
    if !any {
        return Ok(0.0);
    }
    let mut count = 0usize;
    for z in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for x in lo[2]..=hi[2] {
                count += usize::from(v.get(z, y, x) < threshold_hu);
            }
        }
    }
    Ok(count as f64 * v.voxel_ml() / 1000.0)
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub sample: CohortSample,
    pub draw: PhantomDraw,
    pub volume: Volume,
}

/// Draws and renders one phantom. The sample's volume path is left empty.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64, subject_id: &str) -> Result<Phantom> {
    let draw = draw_phantom(spec, seed)?;
    let volume = render_phantom(spec, &draw)?;
    let sample = CohortSample {
        subject_id: subject_id.to_string(),
        scan_id: "scan1".into(),
        volume_path: PathBuf::new(),
        demographics: draw.demographics,
        pft: draw.pft,
        emphysema: None,
    };
    Ok(Phantom {
        sample,
        draw,
        volume,
    })
}

pub fn phantom_subject_id(index: usize) -> String {
    format!("P{index:05}")
}

/// Per-phantom seed derived from the cohort seed and index.
pub fn phantom_seed(cohort_seed: u64, index: usize) -> u64 {
    sample_seed(cohort_seed, &phantom_subject_id(index), "phantom", 0)
}

pub fn generate_cohort(spec: &PhantomSpec, n: usize, seed: u64) -> Result<Vec<Phantom>> {
    spec.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| generate_phantom(spec, phantom_seed(seed, i), &phantom_subject_id(i)))
        .collect()
}

/// Writes `volumes/<id>` files and a manifest with relative paths; returns
/// the manifest path.
pub fn write_cohort(dir: &Path, phantoms: &[Phantom]) -> Result<PathBuf> {
    let vol_dir = dir.join("volumes");
    std::fs::create_dir_all(&vol_dir).map_err(|e| Error::io(&vol_dir, e))?;
    let mut rows = Vec::with_capacity(phantoms.len());
    for p in phantoms {
        let rel = PathBuf::from("volumes").join(&p.sample.subject_id);
        save_volume(&dir.join(&rel), &p.volume)?;
        let mut s = p.sample.clone();
        s.volume_path = rel;
        rows.push(s);
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid_and_fits() {
        assert!(PhantomSpec::default().validate().is_ok());
        let big = PhantomSpec {
            semi_axes_mm: [[30.0, 30.0], [20.0, 20.0], [20.0, 20.0]],
            ..Default::default()
        };
        assert!(matches!(big.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn occupancy_is_exact_for_full_and_empty_voxels() {
        let r = [5.0, 5.0, 5.0];
        assert_eq!(occupancy([0.0; 3], 0.5, [0.0; 3], r), 1.0);
        assert_eq!(occupancy([20.0, 0.0, 0.0], 0.5, [0.0; 3], r), 0.0);
        let f = occupancy([5.0, 0.0, 0.0], 0.5, [0.0; 3], r);
        assert!(f > 0.3 && f < 0.7, "{f}");
    }
}
