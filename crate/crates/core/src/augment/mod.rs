//! On-the-fly stochastic augmentation of normalized volumes.
//!
//! A plan is sampled from an [`AugmentConfig`] and a seed, then applied by
//! [`apply_plan`]. Plans are plain data, so a (seed, config, volume) triple
//! always reproduces the same output regardless of scheduling.

mod kernels;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};
use crate::volume::{Intensity, Volume};

pub use kernels::{
    blur, contrast, crop_or_pad, flip, gaussian_noise, rotate_inplane, scale_xy, shear_inplane,
    translate, value_shift,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurKind {
    Gaussian,
    Average,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipAxis {
    /// Left-right (x).
    Horizontal,
    /// Anterior-posterior (y).
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub value_shift_range: [f64; 2],
    pub contrast_range: [f64; 2],
    pub crop_pad_frac: f64,
    pub flip_prob: f64,
    pub scale_xy_range: [f64; 2],
    pub translate_frac: f64,
    pub rotate_deg_range: [f64; 2],
    pub shear_deg_range: [f64; 2],
    pub blur_kinds: Vec<BlurKind>,
    pub blur_size: usize,
    pub gaussian_sigma: f64,
    pub noise_std_range: [f64; 2],
    pub include_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            value_shift_range: [-0.25, 0.25],
            contrast_range: [0.8, 1.2],
            crop_pad_frac: 0.10,
            flip_prob: 0.5,
            scale_xy_range: [0.8, 1.2],
            translate_frac: 0.15,
            rotate_deg_range: [-90.0, 90.0],
            shear_deg_range: [-15.0, 15.0],
            blur_kinds: vec![BlurKind::Gaussian, BlurKind::Average, BlurKind::Median],
            blur_size: 3,
            gaussian_sigma: 1.0,
            noise_std_range: [0.0, 51.0],
            include_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Config that never selects any transform.
    pub fn disabled() -> Self {
        Self {
            include_prob: 0.0,
            flip_prob: 0.0,
            ..Self::default()
        }
    }

    /// Every violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut range = |name: &str, r: [f64; 2], lo: f64, hi: f64| {
            if !(r[0] <= r[1]) {
                out.push(format!("augment.{name}: range {r:?} is not ordered"));
            } else if !(r[0] >= lo && r[1] <= hi) {
                out.push(format!("augment.{name}: range {r:?} outside [{lo}, {hi}]"));
            }
        };
        range("value_shift_range", self.value_shift_range, -0.99, 10.0);
        range("contrast_range", self.contrast_range, 0.0, 10.0);
        range("scale_xy_range", self.scale_xy_range, 0.05, 20.0);
        range("rotate_deg_range", self.rotate_deg_range, -180.0, 180.0);
        range("shear_deg_range", self.shear_deg_range, -60.0, 60.0);
        range("noise_std_range", self.noise_std_range, 0.0, 255.0);
        if !(0.0..0.9).contains(&self.crop_pad_frac) {
            out.push(format!("augment.crop_pad_frac {} outside [0, 0.9)", self.crop_pad_frac));
        }
        if !(0.0..0.9).contains(&self.translate_frac) {
            out.push(format!("augment.translate_frac {} outside [0, 0.9)", self.translate_frac));
        }
        for (name, p) in [("flip_prob", self.flip_prob), ("include_prob", self.include_prob)] {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("augment.{name} {p} outside [0, 1]"));
            }
        }
        if self.blur_size % 2 == 0 {
            out.push(format!("augment.blur_size {} must be odd", self.blur_size));
        }
        if !(self.gaussian_sigma > 0.0) {
            out.push(format!("augment.gaussian_sigma {} must be positive", self.gaussian_sigma));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// One sampled transform with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `v * (1 + fraction)`
    ValueShift { fraction: f64 },
    /// `mean + factor * (v - mean)`
    Contrast { factor: f64 },
    /// Per-axis `[z, y, x]` zoom; `< 1` crops, `> 1` pads, then resized back.
    CropOrPad { factors: [f64; 3] },
    Flip { axis: FlipAxis },
    ScaleXy { fx: f64, fy: f64 },
    /// Shift as a fraction of the x and y extents.
    Translate { dx: f64, dy: f64 },
    Rotate { degrees: f64 },
    Shear { degrees: f64 },
    Blur { blur: BlurKind, size: usize, sigma: f64 },
    Noise { std: f64, seed: u64 },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::ValueShift { .. } => "value_shift",
            Transform::Contrast { .. } => "contrast",
            Transform::CropOrPad { .. } => "crop_or_pad",
            Transform::Flip { .. } => "flip",
            Transform::ScaleXy { .. } => "scale_xy",
            Transform::Translate { .. } => "translate",
            Transform::Rotate { .. } => "rotate",
            Transform::Shear { .. } => "shear",
            Transform::Blur { .. } => "blur",
            Transform::Noise { .. } => "noise",
        }
    }

    /// Does every parameter lie inside the configured sampling ranges?
    pub fn within(&self, cfg: &AugmentConfig) -> bool {
        let inr = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
        match *self {
            Transform::ValueShift { fraction } => inr(fraction, cfg.value_shift_range),
            Transform::Contrast { factor } => inr(factor, cfg.contrast_range),
            Transform::CropOrPad { factors } => factors
                .iter()
                .all(|&f| inr(f, [1.0 - cfg.crop_pad_frac, 1.0 + cfg.crop_pad_frac])),
            Transform::Flip { .. } => true,
            Transform::ScaleXy { fx, fy } => inr(fx, cfg.scale_xy_range) && inr(fy, cfg.scale_xy_range),
            Transform::Translate { dx, dy } => {
                let r = [-cfg.translate_frac, cfg.translate_frac];
                inr(dx, r) && inr(dy, r)
            }
            Transform::Rotate { degrees } => inr(degrees, cfg.rotate_deg_range),
            Transform::Shear { degrees } => inr(degrees, cfg.shear_deg_range),
            Transform::Blur { blur, size, sigma } => {
                cfg.blur_kinds.contains(&blur) && size == cfg.blur_size && sigma == cfg.gaussian_sigma
            }
            Transform::Noise { std, .. } => inr(std, cfg.noise_std_range),
        }
    }

    pub fn apply(&self, v: &Volume) -> Result<Volume> {
        match *self {
            Transform::ValueShift { fraction } => value_shift(v, fraction),
            Transform::Contrast { factor } => contrast(v, factor),
            Transform::CropOrPad { factors } => crop_or_pad(v, factors),
            Transform::Flip { axis } => Ok(flip(v, axis)),
            Transform::ScaleXy { fx, fy } => scale_xy(v, fx, fy),
            Transform::Translate { dx, dy } => translate(v, dx, dy),
            Transform::Rotate { degrees } => rotate_inplane(v, degrees),
            Transform::Shear { degrees } => shear_inplane(v, degrees),
            Transform::Blur { blur: kind, size, sigma } => blur(v, kind, size, sigma),
            Transform::Noise { std, seed } => gaussian_noise(v, std, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub seed: u64,
    pub steps: Vec<Transform>,
}

impl AugmentPlan {
    pub fn identity(seed: u64) -> Self {
        Self {
            seed,
            steps: Vec::new(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Draws a random subset of transforms in canonical order
/// (intensity, geometric, blur, noise). Each kind enters independently with
/// `include_prob`; the flip enters with `flip_prob` and picks its axis evenly.
pub fn sample_plan(cfg: &AugmentConfig, seed: u64) -> Result<AugmentPlan> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    let p = cfg.include_prob;
    let take = |rng: &mut ChaCha8Rng, p: f64| rng.gen_bool(p);

    if take(&mut rng, p) {
        steps.push(Transform::ValueShift {
            fraction: uniform(&mut rng, cfg.value_shift_range),
        });
    }
    if take(&mut rng, p) {
        steps.push(Transform::Contrast {
            factor: uniform(&mut rng, cfg.contrast_range),
        });
    }
    if take(&mut rng, p) {
        let r = [1.0 - cfg.crop_pad_frac, 1.0 + cfg.crop_pad_frac];
        steps.push(Transform::CropOrPad {
            factors: [uniform(&mut rng, r), uniform(&mut rng, r), uniform(&mut rng, r)],
        });
    }
    if take(&mut rng, cfg.flip_prob) {
        let axis = if rng.gen_bool(0.5) {
            FlipAxis::Horizontal
        } else {
            FlipAxis::Vertical
        };
        steps.push(Transform::Flip { axis });
    }
    if take(&mut rng, p) {
        steps.push(Transform::ScaleXy {
            fx: uniform(&mut rng, cfg.scale_xy_range),
            fy: uniform(&mut rng, cfg.scale_xy_range),
        });
    }
    if take(&mut rng, p) {
        let r = [-cfg.translate_frac, cfg.translate_frac];
        steps.push(Transform::Translate {
            dx: uniform(&mut rng, r),
            dy: uniform(&mut rng, r),
        });
    }
    if take(&mut rng, p) {
        steps.push(Transform::Rotate {
            degrees: uniform(&mut rng, cfg.rotate_deg_range),
        });
    }
    if take(&mut rng, p) {
        steps.push(Transform::Shear {
            degrees: uniform(&mut rng, cfg.shear_deg_range),
        });
    }
    if take(&mut rng, p) && !cfg.blur_kinds.is_empty() {
        let kind = cfg.blur_kinds[rng.gen_range(0..cfg.blur_kinds.len())];
        steps.push(Transform::Blur {
            blur: kind,
            size: cfg.blur_size,
            sigma: cfg.gaussian_sigma,
        });
    }
    if take(&mut rng, p) {
        steps.push(Transform::Noise {
            std: uniform(&mut rng, cfg.noise_std_range),
            seed: rng.gen(),
        });
    }
    Ok(AugmentPlan { seed, steps })
}

/// Applies `plan` step by step and clamps the result to `[0, 255]`.
pub fn apply_plan(v: &Volume, plan: &AugmentPlan) -> Result<Volume> {
    if v.intensity() != Intensity::Norm255 {
        return Err(contract_err!("augmentation expects a normalized (0-255) volume"));
    }
    if plan.steps.is_empty() {
        return Ok(v.clone());
    }
    let mut cur = plan.steps[0].apply(v)?;
    for step in &plan.steps[1..] {
        cur = step.apply(&cur)?;
    }
    cur.values_mut().iter_mut().for_each(|x| *x = x.clamp(0.0, 255.0));
    Ok(cur)
}

/// Schedule-independent per-sample seed from the run seed and sample identity.
pub fn sample_seed(global_seed: u64, subject_id: &str, scan_id: &str, epoch: u64) -> u64 {
    // FNV-1a over the identity, then a splitmix64 finalizer per mixed word.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(subject_id.as_bytes());
    eat(scan_id.as_bytes());
    let mut x = splitmix(global_seed ^ splitmix(h));
    x = splitmix(x ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(AugmentConfig::default().violations().is_empty());
    }

    #[test]
    fn violations_are_all_listed() {
        let cfg = AugmentConfig {
            contrast_range: [1.2, 0.8],
            include_prob: 1.5,
            blur_size: 4,
            ..AugmentConfig::default()
        };
        assert_eq!(cfg.violations().len(), 3);
    }

    #[test]
    fn seeds_differ_by_identity_and_epoch() {
        let a = sample_seed(1, "s1", "c1", 0);
        assert_eq!(a, sample_seed(1, "s1", "c1", 0));
        assert_ne!(a, sample_seed(1, "s1", "c1", 1));
        assert_ne!(a, sample_seed(1, "s1c", "1", 0));
        assert_ne!(a, sample_seed(2, "s1", "c1", 0));
    }

    #[test]
    fn plan_round_trips_through_json() {
        let plan = sample_plan(
            &AugmentConfig {
                include_prob: 1.0,
                flip_prob: 1.0,
                ..AugmentConfig::default()
            },
            5,
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 10);
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<AugmentPlan>(&text).unwrap(), plan);
    }
}
