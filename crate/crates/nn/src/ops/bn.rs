//! Batch normalization over the channel (last) axis.
//!
//! Works on `[n, h, w, c]` feature maps and `[n, f]` dense activations alike:
//! statistics reduce over everything except the last axis. Variance is the
//! biased (1/N) estimate, both for normalization and for the running stats.

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct BnAux<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
    /// Set only in training mode; batch variance before epsilon.
    pub var: Option<Vec<T>>,
}

pub struct BnForward<T> {
    pub out: Tensor<T>,
    pub aux: BnAux<T>,
    /// (new running mean, new running var), training mode only.
    pub stat_update: Option<(Vec<T>, Vec<T>)>,
}

fn channel_count<T: Scalar>(node: &str, x: &Tensor<T>, scale: &Tensor<T>) -> Result<usize> {
    let c = *x.shape().last().unwrap();
    if scale.len() != c {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("{} channels but {} scale parameters", c, scale.len()),
        });
    }
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
pub fn forward<T: Scalar>(
    node: &str,
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    momentum: f64,
    epsilon: f64,
    training: bool,
) -> Result<BnForward<T>> {
    let c = channel_count(node, x, scale)?;
    let rows = x.len() / c;
    let eps = T::from_f64(epsilon);
    let xd = x.data();
    let (sc, sh) = (scale.data(), shift.data());

    let (mean, var, stat_update) = if training {
        if rows < 2 {
            return Err(NnError::InvalidOp {
                node: node.into(),
                detail: format!("batch statistics need at least 2 values per channel, got {}", rows),
            });
        }
        let mut mean = vec![T::ZERO; c];
        let mut var = vec![T::ZERO; c];
        for r in 0..rows {
            let row = &xd[r * c..][..c];
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let inv_n = T::from_f64(1.0 / rows as f64);
        mean.iter_mut().for_each(|m| *m *= inv_n);
        for r in 0..rows {
            let row = &xd[r * c..][..c];
            for ch in 0..c {
                let d = row[ch] - mean[ch];
                var[ch] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_n);

        let mom = T::from_f64(momentum);
        let one_m = T::ONE - mom;
        let new_rm: Vec<T> = running_mean
            .data()
            .iter()
            .zip(&mean)
            .map(|(&r, &b)| r * mom + b * one_m)
            .collect();
        let new_rv: Vec<T> = running_var
            .data()
            .iter()
            .zip(&var)
            .map(|(&r, &b)| r * mom + b * one_m)
            .collect();
        (mean, var.clone(), Some((new_rm, new_rv)))
    } else {
        (running_mean.data().to_vec(), running_var.data().to_vec(), None)
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    for r in 0..rows {
        let row = &xd[r * c..][..c];
        let orow = &mut od[r * c..][..c];
        for ch in 0..c {
            orow[ch] = (row[ch] - mean[ch]) * inv_std[ch] * sc[ch] + sh[ch];
        }
    }

    Ok(BnForward {
        out,
        aux: BnAux { mean, inv_std, var: if training { Some(var) } else { None } },
        stat_update,
    })
}

/// Returns (dx, dscale, dshift).
pub fn backward<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    aux: &BnAux<T>,
    dy: &Tensor<T>,
    training: bool,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = scale.len();
    let rows = x.len() / c;
    let xd = x.data();
    let dyd = dy.data();
    let sc = scale.data();

    let mut dshift = vec![T::ZERO; c];
    let mut dscale = vec![T::ZERO; c];
    for r in 0..rows {
        let xrow = &xd[r * c..][..c];
        let grow = &dyd[r * c..][..c];
        for ch in 0..c {
            let xhat = (xrow[ch] - aux.mean[ch]) * aux.inv_std[ch];
            dshift[ch] += grow[ch];
            dscale[ch] += grow[ch] * xhat;
        }
    }

    let mut dx = Tensor::zeros(x.shape());
    let dxd = dx.data_mut();
    if training {
        // Full batch-statistics gradient:
        // dx = scale*inv_std * (dy - mean(dy) - xhat*mean(dy*xhat))
        let inv_n = T::from_f64(1.0 / rows as f64);
        for r in 0..rows {
            let xrow = &xd[r * c..][..c];
            let grow = &dyd[r * c..][..c];
            let orow = &mut dxd[r * c..][..c];
            for ch in 0..c {
                let xhat = (xrow[ch] - aux.mean[ch]) * aux.inv_std[ch];
                orow[ch] = sc[ch]
                    * aux.inv_std[ch]
                    * (grow[ch] - dshift[ch] * inv_n - xhat * (dscale[ch] * inv_n));
            }
        }
    } else {
        for r in 0..rows {
            let grow = &dyd[r * c..][..c];
            let orow = &mut dxd[r * c..][..c];
            for ch in 0..c {
                orow[ch] = grow[ch] * sc[ch] * aux.inv_std[ch];
            }
        }
    }
    (dx, Tensor::from_vec(&[c], dscale), Tensor::from_vec(&[c], dshift))
}
