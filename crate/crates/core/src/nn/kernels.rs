//! Dense row-major kernels. Inner loops run over contiguous slices so they
//! vectorize.

use crate::scalar::Scalar;

/// out (r×c) = a (r×k) · b (k×c)
pub fn matmul<T: Scalar>(a: &[T], b: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[kk * c..(kk + 1) * c]) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// out (r×k) = dy (r×c) · wᵀ, with w stored k×c
pub fn matmul_bt<T: Scalar>(dy: &[T], w: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * k];
    for i in 0..r {
        let d = &dy[i * c..(i + 1) * c];
        for kk in 0..k {
            let wrow = &w[kk * c..(kk + 1) * c];
            let mut acc = T::zero();
            for (&x, &y) in d.iter().zip(wrow) {
                acc += x * y;
            }
            out[i * k + kk] = acc;
        }
    }
    out
}

/// acc (k×c) += xᵀ (k×r) · dy (r×c)
pub fn matmul_at_acc<T: Scalar>(acc: &mut [T], x: &[T], dy: &[T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let d = &dy[i * c..(i + 1) * c];
        for (kk, &xik) in x[i * k..(i + 1) * k].iter().enumerate() {
            if xik == T::zero() {
                continue;
            }
            for (o, &dv) in acc[kk * c..(kk + 1) * c].iter_mut().zip(d) {
                *o += xik * dv;
            }
        }
    }
}
