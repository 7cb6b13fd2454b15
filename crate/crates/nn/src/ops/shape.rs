//! Structural ops: channel concat, flatten, global average pooling,
//! channel-wise gating, dropout, and elementwise arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn concat_channels<T: Scalar>(node: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[..3] != sb[..3] {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("concat: {:?} vs {:?}", sa, sb),
        });
    }
    let (n, h, w) = (sa[0], sa[1], sa[2]);
    let (ca, cb) = (sa[3], sb[3]);
    let mut out = Tensor::zeros(&[n, h, w, ca + cb]);
    let od = out.data_mut();
    for (i, (ra, rb)) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)).enumerate() {
        let orow = &mut od[i * (ca + cb)..][..ca + cb];
        orow[..ca].copy_from_slice(ra);
        orow[ca..].copy_from_slice(rb);
    }
    Ok(out)
}

pub fn concat_channels_backward<T: Scalar>(ca: usize, cb: usize, dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = dy.shape();
    let (n, h, w) = (s[0], s[1], s[2]);
    let mut da = Tensor::zeros(&[n, h, w, ca]);
    let mut db = Tensor::zeros(&[n, h, w, cb]);
    let (dad, dbd) = (da.data_mut(), db.data_mut());
    for (i, row) in dy.data().chunks_exact(ca + cb).enumerate() {
        dad[i * ca..][..ca].copy_from_slice(&row[..ca]);
        dbd[i * cb..][..cb].copy_from_slice(&row[ca..]);
    }
    (da, db)
}

pub fn flatten<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.shape()[0];
    let f = x.len() / n;
    x.clone().reshaped(&[n, f])
}

/// `[n, h, w, c] -> [n, c]` mean over the spatial plane.
pub fn global_avg_pool<T: Scalar>(node: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("global_avg_pool expects [n,h,w,c], got {:?}", s),
        });
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let od = out.data_mut();
    for nn in 0..n {
        let acc = &mut od[nn * c..][..c];
        for row in x.data()[nn * h * w * c..][..h * w * c].chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    Ok(out)
}

pub fn global_avg_pool_backward<T: Scalar>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    for nn in 0..n {
        let g = &dy.data()[nn * c..][..c];
        for row in dxd[nn * h * w * c..][..h * w * c].chunks_exact_mut(c) {
            for (o, &gv) in row.iter_mut().zip(g) {
                *o = gv * inv;
            }
        }
    }
    dx
}

/// Multiply each channel of `x [n,h,w,c]` by `gate [n,c]`.
pub fn scale_channels<T: Scalar>(node: &str, x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 || gate.shape() != [s[0], s[3]] {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("scale_channels: x {:?} gate {:?}", s, gate.shape()),
        });
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(s);
    let od = out.data_mut();
    for nn in 0..n {
        let g = &gate.data()[nn * c..][..c];
        let base = nn * h * w * c;
        for (row, orow) in x.data()[base..][..h * w * c]
            .chunks_exact(c)
            .zip(od[base..][..h * w * c].chunks_exact_mut(c))
        {
            for ((o, &v), &gv) in orow.iter_mut().zip(row).zip(g) {
                *o = v * gv;
            }
        }
    }
    Ok(out)
}

/// Returns (dx, dgate).
pub fn scale_channels_backward<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut dx = Tensor::zeros(s);
    let mut dg = Tensor::zeros(&[n, c]);
    let dxd = dx.data_mut();
    let dgd = dg.data_mut();
    for nn in 0..n {
        let g = &gate.data()[nn * c..][..c];
        let dgrow = &mut dgd[nn * c..][..c];
        let base = nn * h * w * c;
        for i in 0..h * w {
            let xrow = &x.data()[base + i * c..][..c];
            let gyrow = &dy.data()[base + i * c..][..c];
            let dxrow = &mut dxd[base + i * c..][..c];
            for ch in 0..c {
                dxrow[ch] = gyrow[ch] * g[ch];
                dgrow[ch] += gyrow[ch] * xrow[ch];
            }
        }
    }
    (dx, dg)
}

/// Inverted dropout. Training: zero with probability `rate`, scale survivors
/// by `1/(1-rate)`. The mask is derived from `(seed, node_salt)` only, so a
/// fixed seed reproduces the mask exactly.
pub fn dropout_mask<T: Scalar>(len: usize, rate: f64, seed: u64, node_salt: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ node_salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { T::ZERO } else { keep_scale })
        .collect()
}

pub fn mul<T: Scalar>(node: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("mul: {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_vec(a.shape(), data))
}

pub fn add<T: Scalar>(node: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("add: {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_vec(a.shape(), data))
}

pub fn sum_all<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut acc = T::ZERO;
    for &v in x.data() {
        acc += v;
    }
    Tensor::scalar(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_split_roundtrip() {
        let a = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(&[1, 1, 2, 1], vec![9.0f32, 8.0]);
        let cat = concat_channels("c", &a, &b).unwrap();
        assert_eq!(cat.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let (da, db) = concat_channels_backward(2, 1, &cat);
        assert_eq!(da.data(), a.data());
        assert_eq!(db.data(), b.data());
    }

    #[test]
    fn gap_means_over_plane() {
        let x = Tensor::from_vec(&[1, 2, 2, 2], vec![1.0f32, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        let out = global_avg_pool("g", &x).unwrap();
        assert_eq!(out.data(), &[2.5, 25.0]);
    }

    #[test]
    fn dropout_mask_is_reproducible_and_calibrated() {
        let m1 = dropout_mask::<f32>(1_000_000, 0.5, 42, 3);
        let m2 = dropout_mask::<f32>(1_000_000, 0.5, 42, 3);
        assert_eq!(m1, m2);
        let survivors = m1.iter().filter(|&&v| v != 0.0).count() as f64 / 1e6;
        assert!((survivors - 0.5).abs() < 0.005, "{survivors}");
        // Inverted scaling preserves the mean within 1%.
        let mean: f64 = m1.iter().map(|&v| v as f64).sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        // Different node salt decorrelates masks.
        let m3 = dropout_mask::<f32>(1_000_000, 0.5, 42, 4);
        assert_ne!(m1, m3);
    }
}
