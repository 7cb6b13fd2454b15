//! Bilinear 2x upsampling, align-corners-false convention.
//!
//! Output pixel `i` samples the source at `(i + 0.5)/2 - 0.5`; neighbor
//! indices clamp at the borders while the interpolation weight is computed
//! from the unclamped coordinate.

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Source taps for one output index: (lo, hi, weight of hi).
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|i| {
            let src = (i as f64 + 0.5) / 2.0 - 0.5;
            let lo = src.floor();
            let w = src - lo;
            let lo_c = (lo.max(0.0) as usize).min(in_len - 1);
            let hi_c = ((lo + 1.0).max(0.0) as usize).min(in_len - 1);
            (lo_c, hi_c, w)
        })
        .collect()
}

pub fn forward<T: Scalar>(node: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("bilinear_upsample2 expects [n,h,w,c], got {:?}", s),
        });
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h * 2, w * 2);
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let xd = x.data();
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let od = out.data_mut();
    for nn in 0..n {
        for oy in 0..oh {
            let (y0, y1, wy) = ty[oy];
            let wy = T::from_f64(wy);
            let r0 = &xd[(nn * h + y0) * w * c..][..w * c];
            let r1 = &xd[(nn * h + y1) * w * c..][..w * c];
            let orow = &mut od[(nn * oh + oy) * ow * c..][..ow * c];
            for ox in 0..ow {
                let (x0, x1, wx) = tx[ox];
                let wx = T::from_f64(wx);
                for ch in 0..c {
                    let a = r0[x0 * c + ch];
                    let b = r0[x1 * c + ch];
                    let d = r1[x0 * c + ch];
                    let e = r1[x1 * c + ch];
                    let top = a + (b - a) * wx;
                    let bot = d + (e - d) * wx;
                    orow[ox * c + ch] = top + (bot - top) * wy;
                }
            }
        }
    }
    Ok(out)
}

/// Transpose of the interpolation: scatter-add the four tap weights.
pub fn backward<T: Scalar>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (oh, ow) = (h * 2, w * 2);
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    let dyd = dy.data();
    for nn in 0..n {
        for oy in 0..oh {
            let (y0, y1, wy) = ty[oy];
            for ox in 0..ow {
                let (x0, x1, wx) = tx[ox];
                let g = &dyd[((nn * oh + oy) * ow + ox) * c..][..c];
                let w00 = T::from_f64((1.0 - wy) * (1.0 - wx));
                let w01 = T::from_f64((1.0 - wy) * wx);
                let w10 = T::from_f64(wy * (1.0 - wx));
                let w11 = T::from_f64(wy * wx);
                for ch in 0..c {
                    dxd[((nn * h + y0) * w + x0) * c + ch] += g[ch] * w00;
                    dxd[((nn * h + y0) * w + x1) * c + ch] += g[ch] * w01;
                    dxd[((nn * h + y1) * w + x0) * c + ch] += g[ch] * w10;
                    dxd[((nn * h + y1) * w + x1) * c + ch] += g[ch] * w11;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(&[1, 3, 5, 2], 0.42f32);
        let out = forward("u", &x).unwrap();
        assert_eq!(out.shape(), &[1, 6, 10, 2]);
        assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-7));
    }

    #[test]
    fn one_dimensional_slice_interpolates() {
        // [0, 2] -> [0, 0.5, 1.5, 2] under the (i+0.5)/2-0.5 convention.
        let x = Tensor::from_vec(&[1, 1, 2, 1], vec![0.0f32, 2.0]);
        let out = forward("u", &x).unwrap();
        let got: Vec<f32> = out.data().to_vec();
        // Rows are duplicated (h=1 upsamples to two identical rows).
        assert_eq!(got.len(), 8);
        for row in got.chunks(4) {
            assert!((row[0] - 0.0).abs() < 1e-7);
            assert!((row[1] - 0.5).abs() < 1e-7);
            assert!((row[2] - 1.5).abs() < 1e-7);
            assert!((row[3] - 2.0).abs() < 1e-7);
        }
    }

    #[test]
    fn downsample_of_upsampled_ramp_recovers_ramp() {
        // 2x average pooling undoes the upsample on a linear ramp.
        let w = 8;
        let ramp: Vec<f32> = (0..w).map(|i| i as f32).collect();
        let x = Tensor::from_vec(&[1, 1, w, 1], ramp.clone());
        let up = forward("u", &x).unwrap();
        for i in 0..w {
            let avg = (up.data()[2 * i] + up.data()[2 * i + 1]) / 2.0;
            // Borders clamp, interior is exact.
            if i > 0 && i < w - 1 {
                assert!((avg - ramp[i]).abs() < 1e-6, "at {i}: {avg} vs {}", ramp[i]);
            }
        }
    }

    #[test]
    fn preserves_global_mean_of_constant_and_ramp() {
        // Border clamping loses 0.25*step at one end and gains it at the
        // other, so ramp means survive exactly.
        for data in [vec![1.5f32; 12], (0..12).map(|i| i as f32).collect::<Vec<_>>()] {
            let x = Tensor::from_vec(&[1, 3, 4, 1], data);
            let out = forward("u", &x).unwrap();
            let m_in: f32 = x.data().iter().sum::<f32>() / x.len() as f32;
            let m_out: f32 = out.data().iter().sum::<f32>() / out.len() as f32;
            assert!((m_in - m_out).abs() < 1e-6, "{m_in} vs {m_out}");
        }
    }
}
