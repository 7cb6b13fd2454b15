//! Elementwise activations and row softmax.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::ZERO)).collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::from_vec(x.shape(), data)
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // Split by sign to avoid overflow in exp.
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

/// dy * y * (1 - y), taking the forward output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&yv, &g)| g * yv * (T::ONE - yv))
        .collect();
    Tensor::from_vec(y.shape(), data)
}

/// Softmax over the last axis, computed with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = *x.shape().last().unwrap();
    let mut out = Tensor::zeros(x.shape());
    for (row, orow) in x.data().chunks_exact(c).zip(out.data_mut().chunks_exact_mut(c)) {
        let m = row.iter().fold(T::from_f64(f64::NEG_INFINITY), |a, &b| a.max(b));
        let mut sum = T::ZERO;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    out
}

/// Row-wise Jacobian-vector product: dx_i = y_i * (g_i - sum_j g_j y_j).
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let c = *y.shape().last().unwrap();
    let mut out = Tensor::zeros(y.shape());
    for ((yrow, grow), orow) in y
        .data()
        .chunks_exact(c)
        .zip(dy.data().chunks_exact(c))
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        let mut dot = T::ZERO;
        for (yv, gv) in yrow.iter().zip(grow) {
            dot += *yv * *gv;
        }
        for ((o, &yv), &gv) in orow.iter_mut().zip(yrow).zip(grow) {
            *o = yv * (gv - dot);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[2], vec![-1.0f32, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::from_vec(&[1], vec![0.0f32]);
        assert_eq!(sigmoid(&x).data(), &[0.5]);
    }

    #[test]
    fn sigmoid_extremes_stay_finite_and_bounded() {
        let x = Tensor::from_vec(&[2], vec![-200.0f32, 200.0]);
        let y = sigmoid(&x);
        assert!(y.data()[0] >= 0.0 && y.data()[0] < 1e-6);
        assert!(y.data()[1] > 1.0 - 1e-6 && y.data()[1] <= 1.0);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let x = Tensor::from_vec(&[1, 2], vec![1000.0f32, 1000.0]);
        let y = softmax(&x);
        assert!((y.data()[0] - 0.5).abs() < 1e-7);
        assert!((y.data()[1] - 0.5).abs() < 1e-7);
        let x = Tensor::from_vec(&[1, 4], vec![0.1f32, -3.0, 2.0, 0.7]);
        let s: f32 = softmax(&x).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
