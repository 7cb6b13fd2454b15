//! Training objectives: class-weighted BCE, focal, soft Jaccard, binary
//! Lovász hinge, and categorical cross-entropy.
//!
//! All losses reduce to a scalar mean (Lovász reduces over the sorted error
//! vector as defined below). Probabilities are clamped to
//! `[CLAMP_EPS, 1 - CLAMP_EPS]` before any log; the clamp's flat regions
//! propagate a zero gradient, which is consistent with what a central
//! difference of the clamped function reports.

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CLAMP_EPS: f64 = 1e-7;

fn check_same_shape<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        });
    }
    Ok(())
}

#[inline]
fn clamp01<T: Scalar>(p: T) -> T {
    let lo = T::from_f64(CLAMP_EPS);
    let hi = T::ONE - lo;
    p.max(lo).min(hi)
}

#[inline]
fn in_clamp_interior<T: Scalar>(p: T) -> bool {
    let lo = T::from_f64(CLAMP_EPS);
    p > lo && p < T::ONE - lo
}

// ---------------------------------------------------------------- weighted BCE

/// Mean of `-w * [t ln p + (1-t) ln(1-p)]` with `w = class_weight` on
/// positive pixels and `1` elsewhere.
pub fn weighted_bce<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>, class_weight: f64) -> Result<T> {
    check_same_shape(node, pred, target)?;
    let cw = T::from_f64(class_weight);
    let mut acc = T::ZERO;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let pc = clamp01(p);
        let w = if t > T::from_f64(0.5) { cw } else { T::ONE };
        acc += -w * (t * pc.ln() + (T::ONE - t) * (T::ONE - pc).ln());
    }
    Ok(acc * T::from_f64(1.0 / pred.len() as f64))
}

pub fn weighted_bce_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, class_weight: f64, dscale: T) -> Tensor<T> {
    let cw = T::from_f64(class_weight);
    let inv_n = T::from_f64(1.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if !in_clamp_interior(p) {
                return T::ZERO;
            }
            let w = if t > T::from_f64(0.5) { cw } else { T::ONE };
            dscale * w * inv_n * (-t / p + (T::ONE - t) / (T::ONE - p))
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

// ---------------------------------------------------------------------- focal

/// Mean of `-alpha (1 - p_t)^gamma ln(p_t)` with `p_t = p` on positives and
/// `1 - p` on negatives. `gamma = 0, alpha = 1` reduces to plain BCE.
pub fn focal<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>, alpha: f64, gamma: f64) -> Result<T> {
    check_same_shape(node, pred, target)?;
    let a = T::from_f64(alpha);
    let g = T::from_f64(gamma);
    let mut acc = T::ZERO;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let pc = clamp01(p);
        let pt = if t > T::from_f64(0.5) { pc } else { T::ONE - pc };
        let mod_factor = if gamma == 0.0 { T::ONE } else { (T::ONE - pt).powf(g) };
        acc += -a * mod_factor * pt.ln();
    }
    Ok(acc * T::from_f64(1.0 / pred.len() as f64))
}

pub fn focal_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, alpha: f64, gamma: f64, dscale: T) -> Tensor<T> {
    let a = T::from_f64(alpha);
    let g = T::from_f64(gamma);
    let inv_n = T::from_f64(1.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if !in_clamp_interior(p) {
                return T::ZERO;
            }
            let positive = t > T::from_f64(0.5);
            let pt = if positive { p } else { T::ONE - p };
            // d/dpt of -a (1-pt)^g ln(pt)
            let dl_dpt = if gamma == 0.0 {
                -a / pt
            } else {
                a * g * (T::ONE - pt).powf(g - T::ONE) * pt.ln() - a * (T::ONE - pt).powf(g) / pt
            };
            let dpt_dp = if positive { T::ONE } else { -T::ONE };
            dscale * inv_n * dl_dpt * dpt_dp
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

// -------------------------------------------------------------------- Jaccard

/// Soft Jaccard dissimilarity: `1 - sum(x*y) / (sum x + sum y - sum(x*y))`,
/// denominator stabilized with 1e-7.
pub fn jaccard<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, JaccardAux<T>)> {
    check_same_shape(node, pred, target)?;
    let mut inter = T::ZERO;
    let mut sx = T::ZERO;
    let mut sy = T::ZERO;
    for (&x, &y) in pred.data().iter().zip(target.data()) {
        inter += x * y;
        sx += x;
        sy += y;
    }
    let union = sx + sy - inter + T::from_f64(1e-7);
    Ok((T::ONE - inter / union, JaccardAux { inter, union }))
}

#[derive(Debug, Clone)]
pub struct JaccardAux<T> {
    pub inter: T,
    pub union: T,
}

pub fn jaccard_backward<T: Scalar>(target: &Tensor<T>, aux: &JaccardAux<T>, dscale: T) -> Tensor<T> {
    // d(1 - I/U)/dx_i = -(y_i U - I (1 - y_i)) / U^2
    let u2 = aux.union * aux.union;
    let data = target
        .data()
        .iter()
        .map(|&y| dscale * -((y * aux.union - aux.inter * (T::ONE - y)) / u2))
        .collect();
    Tensor::from_vec(target.shape(), data)
}

// -------------------------------------------------------------- Lovász hinge

/// Binary Lovász hinge on real-valued margins (pre-sigmoid scores).
///
/// Labels map `{0,1} -> {-1,+1}`; hinge errors `m_i = max(0, 1 - sign_i s_i)`
/// are sorted descending (ties broken by original index) and weighted by the
/// discrete gradient of the Jaccard extension over the sorted ground truth.
pub fn lovasz_hinge<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, LovaszAux<T>)> {
    check_same_shape(node, pred, target)?;
    let n = pred.len();
    let signs: Vec<T> = target
        .data()
        .iter()
        .map(|&t| if t > T::from_f64(0.5) { T::ONE } else { -T::ONE })
        .collect();
    let errors: Vec<T> = pred
        .data()
        .iter()
        .zip(&signs)
        .map(|(&s, &sg)| (T::ONE - sg * s).max(T::ZERO))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap().then(a.cmp(&b)));

    let coeffs = jaccard_extension_grad(target.data(), &order);
    let mut loss = T::ZERO;
    for (rank, &i) in order.iter().enumerate() {
        loss += errors[i] * coeffs[rank];
    }

    // Per-element gradient coefficient: the extension weight where the hinge
    // is active, zero where the margin is already satisfied.
    let mut dpred = vec![T::ZERO; n];
    for (rank, &i) in order.iter().enumerate() {
        if errors[i] > T::ZERO {
            dpred[i] = -signs[i] * coeffs[rank];
        }
    }
    Ok((loss, LovaszAux { dpred }))
}

#[derive(Debug, Clone)]
pub struct LovaszAux<T> {
    dpred: Vec<T>,
}

pub fn lovasz_backward<T: Scalar>(shape: &[usize], aux: &LovaszAux<T>, dscale: T) -> Tensor<T> {
    Tensor::from_vec(shape, aux.dpred.iter().map(|&d| d * dscale).collect())
}

/// Discrete gradient of the Jaccard-loss extension along a sorted order:
/// `g_k = delta(S_k) - delta(S_{k-1})` with `S_k` the first k sorted pixels.
fn jaccard_extension_grad<T: Scalar>(target: &[T], order: &[usize]) -> Vec<T> {
    let p = order.len();
    let total_gt: f64 = target.iter().map(|&t| t.to_f64()).sum();
    let mut out = Vec::with_capacity(p);
    let mut cum_gt = 0.0;
    let mut prev = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cum_gt += target[i].to_f64();
        let intersection = total_gt - cum_gt;
        let union = total_gt + (k as f64 + 1.0 - cum_gt);
        let jac = if union > 0.0 { 1.0 - intersection / union } else { 0.0 };
        out.push(T::from_f64(jac - prev));
        prev = jac;
    }
    out
}

// ------------------------------------------------------- categorical CE

/// Mean over rows of `-sum_k t_k ln p_k`; `pred` rows are probability
/// simplices, `target` rows are strict one-hot vectors.
pub fn categorical_ce<T: Scalar>(node: &str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    check_same_shape(node, pred, target)?;
    let k = *pred.shape().last().unwrap();
    let rows = pred.len() / k;
    for (r, trow) in target.data().chunks_exact(k).enumerate() {
        let ones = trow.iter().filter(|&&t| t == T::ONE).count();
        let zeros = trow.iter().filter(|&&t| t == T::ZERO).count();
        if ones != 1 || zeros != k - 1 {
            return Err(NnError::InvalidOp {
                node: node.into(),
                detail: format!("target row {} is not one-hot", r),
            });
        }
    }
    let mut acc = T::ZERO;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        if t == T::ONE {
            acc += -clamp01(p).ln();
        }
    }
    Ok(acc * T::from_f64(1.0 / rows as f64))
}

pub fn categorical_ce_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, dscale: T) -> Tensor<T> {
    let k = *pred.shape().last().unwrap();
    let rows = pred.len() / k;
    let inv_r = T::from_f64(1.0 / rows as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if t == T::ONE && in_clamp_interior(p) {
                dscale * inv_r * (-T::ONE / p)
            } else {
                T::ZERO
            }
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn t1(v: Vec<f32>) -> Tensor<f32> {
        let n = v.len();
        Tensor::from_vec(&[n], v)
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let loss = weighted_bce("l", &t1(vec![1.0, 0.0]), &t1(vec![1.0, 0.0]), 3.0).unwrap();
        assert!(loss < 1e-5, "{loss}");
    }

    #[test]
    fn bce_cw1_single_pixel_half() {
        let loss = weighted_bce("l", &t1(vec![0.5]), &t1(vec![1.0]), 1.0).unwrap();
        assert!((loss as f64 - LN2).abs() < 1e-6);
    }

    #[test]
    fn bce_weighted_two_pixel_case() {
        // (2 ln2 + ln2) / 2 = 1.5 ln2
        let loss = weighted_bce("l", &t1(vec![0.5, 0.5]), &t1(vec![1.0, 0.0]), 2.0).unwrap();
        assert!((loss as f64 - 1.5 * LN2).abs() < 1e-6);
    }

    #[test]
    fn bce_monotone_in_class_weight_when_positive_misclassified() {
        let pred = t1(vec![0.3, 0.2]);
        let target = t1(vec![1.0, 0.0]);
        let mut prev = 0.0f32;
        for cw in [1.0, 2.0, 3.0, 5.0] {
            let l = weighted_bce("l", &pred, &target, cw).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn focal_well_classified_goes_to_zero() {
        let loss = focal("l", &t1(vec![0.9999]), &t1(vec![1.0]), 0.25, 2.0).unwrap();
        assert!(loss < 1e-8, "{loss}");
    }

    #[test]
    fn focal_gamma0_alpha1_is_bce() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pred = t1((0..64).map(|_| rng.gen_range(0.01..0.99)).collect());
        let target = t1((0..64).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect());
        let f = focal("l", &pred, &target, 1.0, 0.0).unwrap();
        let b = weighted_bce("l", &pred, &target, 1.0).unwrap();
        assert!((f - b).abs() < 1e-6, "{f} vs {b}");
    }

    #[test]
    fn focal_hand_value() {
        // t=1, p=0.5, alpha=0.25, gamma=2 -> 0.25 * 0.25 * ln 2
        let loss = focal("l", &t1(vec![0.5]), &t1(vec![1.0]), 0.25, 2.0).unwrap();
        assert!((loss as f64 - 0.25 * 0.25 * LN2).abs() < 1e-6, "{loss}");
    }

    #[test]
    fn jaccard_identity_and_disjoint() {
        let (l, _) = jaccard("l", &t1(vec![1.0, 0.0, 1.0]), &t1(vec![1.0, 0.0, 1.0])).unwrap();
        assert!(l.abs() < 1e-5);
        let (l, _) = jaccard("l", &t1(vec![1.0, 0.0]), &t1(vec![0.0, 1.0])).unwrap();
        assert!((l - 1.0).abs() < 1e-5);
    }

    #[test]
    fn jaccard_hand_value() {
        // X=[1,1,0,0], Y=[1,0,1,0]: I=1, U=3 -> loss 2/3
        let (l, _) = jaccard("l", &t1(vec![1.0, 1.0, 0.0, 0.0]), &t1(vec![1.0, 0.0, 1.0, 0.0])).unwrap();
        assert!((l as f64 - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn lovasz_zero_when_margins_satisfied() {
        let (l, _) = lovasz_hinge("l", &t1(vec![1.5, -2.0, 1.0]), &t1(vec![1.0, 0.0, 1.0])).unwrap();
        assert!(l.abs() < 1e-7);
    }

    #[test]
    fn lovasz_single_pixel_closed_form() {
        // t=1, s=0: hinge = 1, extension weight = 1 -> loss 1
        let (l, _) = lovasz_hinge("l", &t1(vec![0.0]), &t1(vec![1.0])).unwrap();
        assert!((l - 1.0).abs() < 1e-7, "{l}");
    }

    #[test]
    fn categorical_hand_values() {
        let p = Tensor::from_vec(&[1, 3], vec![0.7f32, 0.2, 0.1]);
        let t = Tensor::from_vec(&[1, 3], vec![1.0f32, 0.0, 0.0]);
        let l = categorical_ce("l", &p, &t).unwrap();
        assert!((l as f64 + (0.7f64).ln()).abs() < 1e-6);

        let p = Tensor::from_vec(&[1, 4], vec![0.25f32; 4]);
        let t = Tensor::from_vec(&[1, 4], vec![0.0f32, 1.0, 0.0, 0.0]);
        let l = categorical_ce("l", &p, &t).unwrap();
        assert!((l as f64 - (4.0f64).ln()).abs() < 1e-6);

        let exact = categorical_ce("l", &t, &t).unwrap();
        assert!(exact < 1e-6);
    }

    #[test]
    fn categorical_rejects_non_one_hot() {
        let p = Tensor::from_vec(&[1, 3], vec![0.5f32, 0.3, 0.2]);
        let t = Tensor::from_vec(&[1, 3], vec![0.5f32, 0.5, 0.0]);
        assert!(categorical_ce("l", &p, &t).is_err());
    }
}
