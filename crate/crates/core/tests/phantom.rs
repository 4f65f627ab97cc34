use approx::assert_relative_eq;
use beyondct::cohort::read_manifest;
use beyondct::phantom::*;
use beyondct::train::{DiskSource, VolumeSource};
use beyondct::volume::{preprocess, Intensity, Volume};
use beyondct::Error;

fn fixed(cube: usize, spacing: f64, axes: [f64; 3]) -> PhantomSpec {
    PhantomSpec {
        cube,
        spacing_mm: spacing,
        semi_axes_mm: axes.map(|a| [a, a]),
        texture_std_hu: 0.0,
        sigma: 0.0,
        ..Default::default()
    }
}

#[test]
fn large_ellipsoid_pair_voxel_count_matches_analytic_volume() {
    let spec = fixed(192, 1.5, [40.0, 30.0, 60.0]);
    let draw = draw_phantom(&spec, 1).unwrap();
    let analytic = 2.0 * 4.0 / 3.0 * std::f64::consts::PI * 40.0 * 30.0 * 60.0 / 1e6;
    assert_relative_eq!(draw.air_volume_l, analytic, max_relative = 1e-12);
    assert!((analytic - 0.603).abs() < 5e-4);
    let v = render_phantom(&spec, &draw).unwrap();
    let counted = air_volume(&v, AIR_THRESHOLD_HU).unwrap();
    assert!((counted - analytic).abs() / analytic <= 0.02, "{counted} vs {analytic}");
}

#[test]
fn noiseless_law_without_height_term_is_exact() {
    let spec = PhantomSpec {
        sigma: 0.0,
        beta: 0.0,
        ..Default::default()
    };
    for seed in 0..20 {
        let d = draw_phantom(&spec, seed).unwrap();
        assert_eq!(d.pft.fvc_l, spec.alpha * d.air_volume_l);
        assert!(d.pft.fev1_l <= d.pft.fvc_l && d.pft.fev1_l > 0.0);
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let spec = PhantomSpec::default();
    let a = generate_phantom(&spec, 42, "P1").unwrap();
    let b = generate_phantom(&spec, 42, "P1").unwrap();
    let c = generate_phantom(&spec, 43, "P1").unwrap();
    let bits = |v: &Volume| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.volume), bits(&b.volume));
    assert_eq!(a.sample, b.sample);
    assert_ne!(bits(&a.volume), bits(&c.volume));
}

#[test]
fn draws_respect_ranges() {
    let spec = PhantomSpec::default();
    for seed in 0..200 {
        let d = draw_phantom(&spec, seed).unwrap();
        let g = &d.demographics;
        assert!(g.validate().is_ok());
        assert!((45.0..=80.0).contains(&g.age));
        assert!((60.0..=76.0).contains(&g.height_in));
        for lung in d.lungs_mm {
            for k in 0..3 {
                let [lo, hi] = spec.semi_axes_mm[k];
                assert!(lung[k] >= lo && lung[k] <= hi);
            }
        }
    }
}

#[test]
fn all_body_volume_has_no_air() {
    let v = Volume::filled([8, 8, 8], [1.5; 3], 40.0, Intensity::Hu).unwrap();
    assert_eq!(air_volume(&v, AIR_THRESHOLD_HU).unwrap(), 0.0);
    let n = Volume::filled([8, 8, 8], [1.5; 3], 40.0, Intensity::Norm255).unwrap();
    assert!(matches!(air_volume(&n, AIR_THRESHOLD_HU), Err(Error::Contract(_))));
}

#[test]
fn coarser_grid_measures_the_same_litres() {
    let axes = [30.0, 25.0, 45.0];
    let fine = fixed(128, 1.5, axes);
    let coarse = fixed(64, 3.0, axes);
    let df = draw_phantom(&fine, 0).unwrap();
    let dc = draw_phantom(&coarse, 0).unwrap();
    let vf = render_phantom(&fine, &df).unwrap();
    let vc = render_phantom(&coarse, &dc).unwrap();
    assert_relative_eq!(vc.voxel_ml(), 8.0 * vf.voxel_ml(), max_relative = 1e-12);
    let (lf, lc) = (air_volume(&vf, AIR_THRESHOLD_HU).unwrap(), air_volume(&vc, AIR_THRESHOLD_HU).unwrap());
    assert!((lf - lc).abs() / lf < 0.03, "{lf} vs {lc}");
}

#[test]
fn invalid_geometry_is_rejected() {
    let spec = fixed(32, 1.5, [20.0, 10.0, 10.0]);
    assert!(matches!(draw_phantom(&spec, 0), Err(Error::Config(_))));
    let spec = PhantomSpec {
        gamma: 1.2,
        ..Default::default()
    };
    assert!(spec.validate().is_err());
}

/// Solves the 3x3 system `a x = b` by Cramer's rule.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    std::array::from_fn(|k| {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        det(m) / d
    })
}

#[test]
fn oracle_regressor_reaches_noise_limited_r_squared() {
    let spec = PhantomSpec {
        beta: 0.05,
        sigma: 0.15,
        ..Default::default()
    };
    let draws: Vec<PhantomDraw> = (0..500).map(|s| draw_phantom(&spec, s).unwrap()).collect();
    let rows: Vec<[f64; 3]> = draws
        .iter()
        .map(|d| [1.0, d.air_volume_l, d.demographics.height_in])
        .collect();
    let y: Vec<f64> = draws.iter().map(|d| d.pft.fvc_l).collect();
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for (r, &t) in rows.iter().zip(&y) {
        for i in 0..3 {
            xty[i] += r[i] * t;
            for j in 0..3 {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    let b = solve3(xtx, xty);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|t| (t - mean).powi(2)).sum();
    let sse: f64 = rows
        .iter()
        .zip(&y)
        .map(|(r, t)| (t - (b[0] + b[1] * r[1] + b[2] * r[2])).powi(2))
        .sum();
    let r2 = 1.0 - sse / sst;
    let expected = 1.0 - spec.sigma.powi(2) / (sst / (y.len() - 1) as f64);
    assert!((r2 - expected).abs() <= 0.05, "R² {r2} vs {expected}");
    assert_relative_eq!(b[1], spec.alpha, max_relative = 0.1);
}

#[test]
fn written_cohort_reloads_through_disk_source() {
    let dir = tempfile::tempdir().unwrap();
    let ph = generate_cohort(&PhantomSpec::default(), 3, 9).unwrap();
    let manifest = write_cohort(dir.path(), &ph).unwrap();
    let samples = read_manifest(&manifest, None).unwrap();
    assert_eq!(samples.len(), 3);
    let src = DiskSource { cube: 64 };
    for (s, p) in samples.iter().zip(&ph) {
        assert_eq!(s.subject_id, p.sample.subject_id);
        let v = src.load(s).unwrap();
        assert_eq!(v, preprocess(&p.volume, 64).unwrap());
    }
}
