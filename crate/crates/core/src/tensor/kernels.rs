//! Slice-level numeric kernels shared by the tape's forward and backward rules.

use super::Real;

/// `c[m,n] = a[m,k] · b[k,n]`, row-major.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// `da[m,k] += dc[m,n] · bᵀ`
pub fn matmul_grad_a<T: Real>(dc: &[T], b: &[T], da: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let dcrow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&g, &bv) in dcrow.iter().zip(brow) {
                acc = acc + g * bv;
            }
            da[i * k + p] = da[i * k + p] + acc;
        }
    }
}

/// `db[k,n] += aᵀ · dc[m,n]`
pub fn matmul_grad_b<T: Real>(dc: &[T], a: &[T], db: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let dcrow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let dbrow = &mut db[p * n..(p + 1) * n];
            for (dv, &g) in dbrow.iter_mut().zip(dcrow) {
                *dv = *dv + av * g;
            }
        }
    }
}

/// Geometry of a strided, unpadded 3-D cross-correlation.
#[derive(Debug, Clone, Copy)]
pub struct Conv3dGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub in_dims: [usize; 3],
    pub out_dims: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
}

impl Conv3dGeom {
    fn in_index(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        let [d, h, w] = self.in_dims;
        ((c * d + z) * h + y) * w + x
    }

    fn w_index(&self, co: usize, ci: usize, kz: usize, ky: usize, kx: usize) -> usize {
        let k = self.kernel;
        (((co * self.c_in + ci) * k + kz) * k + ky) * k + kx
    }
}

pub fn conv3d<T: Real>(input: &[T], weight: &[T], bias: &[T], g: &Conv3dGeom) -> Vec<T> {
    let [od, oh, ow] = g.out_dims;
    let k = g.kernel;
    let s = g.stride;
    let mut out = vec![T::zero(); g.c_out * od * oh * ow];
    for co in 0..g.c_out {
        let plane = &mut out[co * od * oh * ow..(co + 1) * od * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..g.c_in {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[g.w_index(co, ci, kz, ky, kx)];
                        for z in 0..od {
                            for y in 0..oh {
                                let base = g.in_index(ci, z * s + kz, y * s + ky, kx);
                                let orow = &mut plane[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                                for (x, ov) in orow.iter_mut().enumerate() {
                                    *ov = *ov + wv * input[base + x * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, weight and bias gradients of [`conv3d`].
pub fn conv3d_backward<T: Real>(
    dout: &[T],
    input: &[T],
    weight: &[T],
    g: &Conv3dGeom,
    dinput: Option<&mut [T]>,
    dweight: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let [od, oh, ow] = g.out_dims;
    let plane_len = od * oh * ow;
    let k = g.kernel;
    let s = g.stride;
    if let Some(db) = dbias {
        for co in 0..g.c_out {
            let sum: T = dout[co * plane_len..(co + 1) * plane_len].iter().copied().sum();
            db[co] = db[co] + sum;
        }
    }
    if let Some(dw) = dweight {
        for co in 0..g.c_out {
            let plane = &dout[co * plane_len..(co + 1) * plane_len];
            for ci in 0..g.c_in {
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = T::zero();
                            for z in 0..od {
                                for y in 0..oh {
                                    let base = g.in_index(ci, z * s + kz, y * s + ky, kx);
                                    let grow = &plane[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                                    for (x, &gv) in grow.iter().enumerate() {
                                        acc = acc + gv * input[base + x * s];
                                    }
                                }
                            }
                            let wi = g.w_index(co, ci, kz, ky, kx);
                            dw[wi] = dw[wi] + acc;
                        }
                    }
                }
            }
        }
    }
    if let Some(di) = dinput {
        for co in 0..g.c_out {
            let plane = &dout[co * plane_len..(co + 1) * plane_len];
            for ci in 0..g.c_in {
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = weight[g.w_index(co, ci, kz, ky, kx)];
                            for z in 0..od {
                                for y in 0..oh {
                                    let base = g.in_index(ci, z * s + kz, y * s + ky, kx);
                                    let grow = &plane[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                                    for (x, &gv) in grow.iter().enumerate() {
                                        let idx = base + x * s;
                                        di[idx] = di[idx] + wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-wise softmax over trailing extent `n`, max-subtracted.
pub fn softmax_rows<T: Real>(x: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, orow) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum = sum + *o;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::lit(3.0) * a * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * du
}
