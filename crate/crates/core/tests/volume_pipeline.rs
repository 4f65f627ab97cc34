use approx::assert_abs_diff_eq;
use beyondct::volume::{
    import_nifti, load_volume, normalize_intensity, pad_crop_to_cube, preprocess,
    resample_isotropic, save_volume, volume_paths, Intensity, Volume, HU_AIR,
};
use beyondct::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(dims: [usize; 3], spacing: [f64; 3], seed: u64) -> Volume {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let vals = (0..n).map(|_| r.gen_range(-1000.0..1000.0)).collect();
    Volume::new(dims, spacing, vals, Intensity::Hu).unwrap()
}

#[test]
fn zeros_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume::filled([2, 2, 2], [1.5; 3], 0.0, Intensity::Hu).unwrap();
    let p = dir.path().join("zeros");
    save_volume(&p, &v).unwrap();
    assert_eq!(load_volume(&p).unwrap(), v);
}

#[test]
fn random_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume([8, 8, 8], [1.0, 0.7, 2.5], 11);
    let p = dir.path().join("sub/rand.vol.json");
    save_volume(&p, &v).unwrap();
    let back = load_volume(&p).unwrap();
    assert_eq!(back.dims(), v.dims());
    assert_eq!(back.spacing_mm(), v.spacing_mm());
    assert!(back
        .values()
        .iter()
        .zip(v.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn short_payload_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad");
    let v = Volume::filled([4, 4, 4], [1.0; 3], 1.0, Intensity::Hu).unwrap();
    save_volume(&p, &v).unwrap();
    let (_, raw) = volume_paths(&p);
    std::fs::write(&raw, vec![0u8; 63 * 4]).unwrap();
    assert!(matches!(load_volume(&p), Err(Error::Format(_))));
}

#[test]
fn unknown_dtype_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("dt");
    let v = Volume::filled([1, 1, 2], [1.0; 3], 1.0, Intensity::Hu).unwrap();
    save_volume(&p, &v).unwrap();
    let (json, _) = volume_paths(&p);
    let text = std::fs::read_to_string(&json).unwrap().replace("f32le", "f64be");
    std::fs::write(&json, text).unwrap();
    assert!(matches!(load_volume(&p), Err(Error::Format(_))));
}

/// Hand-assembled little-endian NIfTI-1 single file.
fn nifti_bytes(dims: [i16; 3], pixdim: [f32; 3], datatype: i16, slope: f32, inter: f32, payload: &[u8]) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dim = [3i16, dims[0], dims[1], dims[2], 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&datatype.to_le_bytes());
    let bitpix: i16 = if datatype == 4 { 16 } else { 32 };
    h[72..74].copy_from_slice(&bitpix.to_le_bytes());
    let pd = [1.0f32, pixdim[0], pixdim[1], pixdim[2], 0., 0., 0., 0.];
    for (i, p) in pd.iter().enumerate() {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&352f32.to_le_bytes());
    h[112..116].copy_from_slice(&slope.to_le_bytes());
    h[116..120].copy_from_slice(&inter.to_le_bytes());
    h[344..348].copy_from_slice(b"n+1\0");
    h.extend_from_slice(payload);
    h
}

#[test]
fn nifti_int16_identity_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let vals: Vec<i16> = (0..8).map(|i| i * 100 - 300).collect();
    let payload: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
    let p = dir.path().join("a.nii");
    std::fs::write(&p, nifti_bytes([2, 2, 2], [0.8, 0.9, 2.0], 4, 1.0, 0.0, &payload)).unwrap();
    let v = import_nifti(&p).unwrap();
    assert_eq!(v.dims(), [2, 2, 2]);
    assert_eq!(v.spacing_mm(), [2.0, f64::from(0.9f32), f64::from(0.8f32)]);
    assert_eq!(v.intensity(), Intensity::Hu);
    let expect: Vec<f32> = vals.iter().map(|&v| f32::from(v)).collect();
    assert_eq!(v.values(), expect.as_slice());
}

#[test]
fn nifti_slope_and_intercept_applied() {
    let dir = tempfile::tempdir().unwrap();
    let payload: Vec<u8> = (0..8).flat_map(|_| 512i16.to_le_bytes()).collect();
    let p = dir.path().join("s.nii");
    std::fs::write(&p, nifti_bytes([2, 2, 2], [1.0; 3], 4, 2.0, -1024.0, &payload)).unwrap();
    let v = import_nifti(&p).unwrap();
    assert!(v.values().iter().all(|&x| x == 0.0));
}

#[test]
fn nifti_unsupported_datatype_and_rank() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u8.nii");
    std::fs::write(&p, nifti_bytes([2, 2, 2], [1.0; 3], 2, 1.0, 0.0, &[0u8; 8])).unwrap();
    assert!(matches!(import_nifti(&p), Err(Error::UnsupportedFormat(_))));

    let mut bytes = nifti_bytes([2, 2, 2], [1.0; 3], 16, 1.0, 0.0, &[0u8; 32]);
    bytes[40..42].copy_from_slice(&4i16.to_le_bytes());
    bytes[48..50].copy_from_slice(&3i16.to_le_bytes()); // dim[4] = 3 time points
    let p = dir.path().join("4d.nii");
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(import_nifti(&p), Err(Error::UnsupportedFormat(_))));
}

#[test]
fn nifti_matches_third_party_writer() {
    use nifti::writer::WriterOptions;
    use nifti::NiftiHeader;
    let dir = tempfile::tempdir().unwrap();
    let (nx, ny, nz) = (5usize, 4usize, 3usize);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    // ndarray indexed [x, y, z]: the writer emits x fastest
    let arr = ndarray::Array3::<f32>::from_shape_fn((nx, ny, nz), |_| r.gen_range(-1000.0..500.0));
    let header = NiftiHeader {
        pixdim: [1.0, 0.7, 0.8, 2.5, 0.0, 0.0, 0.0, 0.0],
        ..NiftiHeader::default()
    };
    let p = dir.path().join("oracle.nii");
    WriterOptions::new(&p)
        .reference_header(&header)
        .write_nifti(&arr)
        .unwrap();
    let v = import_nifti(&p).unwrap();
    assert_eq!(v.dims(), [nz, ny, nx]);
    assert_abs_diff_eq!(v.spacing_mm()[0], 2.5, epsilon = 1e-6);
    assert_abs_diff_eq!(v.spacing_mm()[2], 0.7, epsilon = 1e-6);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                assert_abs_diff_eq!(v.get(z, y, x), arr[[x, y, z]], epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn resample_dims_arithmetic() {
    let v = Volume::filled([100, 256, 256], [3.0, 1.5, 1.5], -500.0, Intensity::Hu).unwrap();
    let r = resample_isotropic(&v, 1.5).unwrap();
    assert_eq!(r.dims(), [200, 256, 256]);
    assert_eq!(r.spacing_mm(), [1.5; 3]);
}

#[test]
fn resample_identity_on_isotropic_grid() {
    let v = random_volume([6, 7, 8], [1.5; 3], 5);
    let r = resample_isotropic(&v, 1.5).unwrap();
    assert_eq!(r.values(), v.values());
}

/// Independent pointwise trilinear evaluation with edge clamping.
fn trilinear_oracle(v: &Volume, p: [f64; 3]) -> f64 {
    let d = v.dims();
    let mut c = [0.0; 3];
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        c[a] = p[a].max(0.0).min((d[a] - 1) as f64);
        lo[a] = c[a].floor() as usize;
        hi[a] = (lo[a] + 1).min(d[a] - 1);
        t[a] = c[a] - lo[a] as f64;
    }
    let f = |z, y, x| f64::from(v.get(z, y, x));
    let c00 = f(lo[0], lo[1], lo[2]) * (1.0 - t[2]) + f(lo[0], lo[1], hi[2]) * t[2];
    let c01 = f(lo[0], hi[1], lo[2]) * (1.0 - t[2]) + f(lo[0], hi[1], hi[2]) * t[2];
    let c10 = f(hi[0], lo[1], lo[2]) * (1.0 - t[2]) + f(hi[0], lo[1], hi[2]) * t[2];
    let c11 = f(hi[0], hi[1], lo[2]) * (1.0 - t[2]) + f(hi[0], hi[1], hi[2]) * t[2];
    let c0 = c00 * (1.0 - t[1]) + c01 * t[1];
    let c1 = c10 * (1.0 - t[1]) + c11 * t[1];
    c0 * (1.0 - t[0]) + c1 * t[0]
}

#[test]
fn resample_matches_trilinear_oracle() {
    let v = random_volume([7, 9, 6], [2.1, 1.2, 3.3], 9);
    let r = resample_isotropic(&v, 1.5).unwrap();
    let sp = v.spacing_mm();
    for k in 0..r.dims()[0] {
        for j in 0..r.dims()[1] {
            for i in 0..r.dims()[2] {
                let src = [
                    (k as f64 + 0.5) * 1.5 / sp[0] - 0.5,
                    (j as f64 + 0.5) * 1.5 / sp[1] - 0.5,
                    (i as f64 + 0.5) * 1.5 / sp[2] - 0.5,
                ];
                let e = trilinear_oracle(&v, src);
                assert!((f64::from(r.get(k, j, i)) - e).abs() <= 1e-5 * e.abs().max(1.0));
            }
        }
    }
}

#[test]
fn resample_reproduces_linear_ramp() {
    let dims = [10, 12, 14];
    let mut vals = Vec::new();
    for _z in 0..dims[0] {
        for _y in 0..dims[1] {
            for x in 0..dims[2] {
                vals.push(x as f32);
            }
        }
    }
    let v = Volume::new(dims, [3.0, 2.0, 1.0], vals, Intensity::Hu).unwrap();
    let r = resample_isotropic(&v, 1.5).unwrap();
    assert_eq!(r.dims(), [20, 16, 9]);
    for k in 0..20 {
        for j in 0..16 {
            for i in 1..8 {
                let x_src = (i as f64 + 0.5) * 1.5 - 0.5;
                assert_abs_diff_eq!(f64::from(r.get(k, j, i)), x_src, epsilon = 1e-5);
            }
        }
    }
}

#[test]
fn resample_preserves_extent_within_a_voxel() {
    let v = Volume::filled([33, 47, 51], [2.7, 0.63, 1.1], 0.0, Intensity::Hu).unwrap();
    let r = resample_isotropic(&v, 1.5).unwrap();
    for a in 0..3 {
        let before = v.dims()[a] as f64 * v.spacing_mm()[a];
        let after = r.dims()[a] as f64 * 1.5;
        assert!((before - after).abs() <= 1.5);
    }
}

#[test]
fn pad_adds_centered_air() {
    let v = Volume::filled([200, 256, 256], [1.5; 3], 50.0, Intensity::Hu).unwrap();
    let p = pad_crop_to_cube(&v, 256, HU_AIR).unwrap();
    assert_eq!(p.dims(), [256; 3]);
    for z in 0..256 {
        let expect = if (28..228).contains(&z) { 50.0 } else { HU_AIR };
        assert_eq!(p.get(z, 100, 100), expect, "z = {z}");
    }
}

#[test]
fn pad_crop_identity_on_cube() {
    let v = random_volume([16, 16, 16], [1.5; 3], 12);
    assert_eq!(pad_crop_to_cube(&v, 16, HU_AIR).unwrap(), v);
}

#[test]
fn crop_takes_central_block() {
    let n = 300;
    let vals: Vec<f32> = (0..n * n * n).map(|i| (i % 100_003) as f32).collect();
    let v = Volume::new([n; 3], [1.5; 3], vals, Intensity::Hu).unwrap();
    let c = pad_crop_to_cube(&v, 256, HU_AIR).unwrap();
    let off = (300 - 256) / 2;
    assert_eq!(off, 22);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5000 {
        let (z, y, x) = (r.gen_range(0..256), r.gen_range(0..256), r.gen_range(0..256));
        assert_eq!(c.get(z, y, x), v.get(z + off, y + off, x + off));
    }
}

#[test]
fn normalize_endpoints_and_water() {
    let v = Volume::new([1, 1, 5], [1.0; 3], vec![-2000.0, -1024.0, 0.0, 600.0, 3000.0], Intensity::Hu).unwrap();
    let n = normalize_intensity(&v).unwrap();
    let out = n.values();
    assert_eq!(out[0], 0.0);
    assert_eq!(out[1], 0.0);
    assert_abs_diff_eq!(out[2], 255.0 * 1024.0 / 1624.0, epsilon = 1e-3);
    assert_abs_diff_eq!(out[2], 160.788, epsilon = 1e-3);
    assert_eq!(out[3], 255.0);
    assert_eq!(out[4], 255.0);
    assert_eq!(n.intensity(), Intensity::Norm255);
    assert!(matches!(normalize_intensity(&n), Err(Error::Contract(_))));
}

#[test]
fn preprocess_chain_yields_normalized_cube() {
    let v = random_volume([10, 30, 20], [3.0, 1.0, 1.2], 4);
    let p = preprocess(&v, 16).unwrap();
    assert!(p.is_cube(16));
    assert_eq!(p.intensity(), Intensity::Norm255);
    assert!(p.values().iter().all(|&x| (0.0..=255.0).contains(&x)));
}

proptest! {
    #[test]
    fn pad_then_crop_restores_centre(d in 1usize..9, n in 9usize..14) {
        let v = random_volume([d, d + 1, d], [1.5; 3], d as u64);
        let padded = pad_crop_to_cube(&v, n, HU_AIR).unwrap();
        prop_assert!(padded.is_cube(n));
        let back = pad_crop_to_cube(&padded, d, HU_AIR).unwrap();
        // the z and x axes are restored exactly; y is cropped to d from d+1
        let y_off = (n - (d + 1)) / 2;
        let y_back = (n - d) / 2;
        for z in 0..d {
            for x in 0..d {
                for y in 0..d {
                    let src_y = y + y_back;
                    if src_y >= y_off && src_y - y_off < d + 1 {
                        prop_assert_eq!(back.get(z, y, x), v.get(z, src_y - y_off, x));
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_is_monotone(a in -3000.0f32..3000.0, b in -3000.0f32..3000.0) {
        let v = Volume::new([1, 1, 2], [1.0; 3], vec![a, b], Intensity::Hu).unwrap();
        let n = normalize_intensity(&v).unwrap();
        let (na, nb) = (n.values()[0], n.values()[1]);
        prop_assert!((0.0..=255.0).contains(&na));
        if a <= b { prop_assert!(na <= nb); } else { prop_assert!(na >= nb); }
    }
}
