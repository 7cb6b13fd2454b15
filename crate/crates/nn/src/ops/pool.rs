//! 2x2 max pooling with stride 2.
//!
//! Gradient routes to the argmax of each window; ties break to the first
//! maximal element in row-major window order so training is deterministic.

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn forward<T: Scalar>(node: &str, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("max_pool2 expects [n,h,w,c], got {:?}", s),
        });
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::InvalidOp {
            node: node.into(),
            detail: format!("max_pool2 requires even spatial dims, got {}x{}", h, w),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let mut argmax = vec![0u32; n * oh * ow * c];
    let xd = x.data();
    let od = out.data_mut();
    for nn in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = ((nn * oh + oy) * ow + ox) * c;
                for ch in 0..c {
                    let mut best = T::from_f64(f64::NEG_INFINITY);
                    let mut best_idx = 0u32;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = ((nn * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                            let v = xd[idx];
                            if v > best {
                                best = v;
                                best_idx = idx as u32;
                            }
                        }
                    }
                    od[obase + ch] = best;
                    argmax[obase + ch] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn backward<T: Scalar>(x_shape: &[usize], argmax: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    for (g, &idx) in dy.data().iter().zip(argmax) {
        dxd[idx as usize] += *g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_max() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]);
        let (out, _) = forward("p", &x).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let x = Tensor::full(&[1, 4, 6, 3], 0.7f32);
        let (out, _) = forward("p", &x).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn halves_spatial_dims() {
        let x = Tensor::<f32>::zeros(&[1, 160, 160, 2]);
        let (out, _) = forward("p", &x).unwrap();
        assert_eq!(out.shape(), &[1, 80, 80, 2]);
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 1]);
        assert!(forward("p", &x).is_err());
    }

    #[test]
    fn tie_routes_to_first_in_row_major_order() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![5.0f32, 5.0, 5.0, 5.0]);
        let (_, argmax) = forward("p", &x).unwrap();
        assert_eq!(argmax, vec![0]);
        let dy = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0f32]);
        let dx = backward(&[1, 2, 2, 1], &argmax, &dy);
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
