//! Fully connected layer: `y = x @ w + b` with `x [n, f]`, `w [f, g]`, `b [g]`.

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn forward<T: Scalar>(node: &str, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || b.len() != ws[1] {
        return Err(NnError::ShapeMismatch {
            node: node.into(),
            detail: format!("dense: x {:?} w {:?} b {:?}", xs, ws, b.shape()),
        });
    }
    let (n, f, g) = (xs[0], xs[1], ws[1]);
    let mut out = Tensor::zeros(&[n, g]);
    let od = out.data_mut();
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    for row in 0..n {
        let orow = &mut od[row * g..][..g];
        orow.copy_from_slice(bd);
        let xrow = &xd[row * f..][..f];
        for (i, &xv) in xrow.iter().enumerate() {
            let wrow = &wd[i * g..][..g];
            for (o, wv) in orow.iter_mut().zip(wrow) {
                *o += xv * *wv;
            }
        }
    }
    Ok(out)
}

/// Returns (dx, dw, db).
pub fn backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let g = w.shape()[1];
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());

    let mut dx = Tensor::zeros(&[n, f]);
    let mut dw = Tensor::zeros(&[f, g]);
    let mut db = Tensor::zeros(&[g]);
    let dxd = dx.data_mut();
    for row in 0..n {
        let grow = &dyd[row * g..][..g];
        let xrow = &xd[row * f..][..f];
        let dxrow = &mut dxd[row * f..][..f];
        for i in 0..f {
            let wrow = &wd[i * g..][..g];
            let mut acc = T::ZERO;
            for (gv, wv) in grow.iter().zip(wrow) {
                acc += *gv * *wv;
            }
            dxrow[i] = acc;
        }
        let dwd = dw.data_mut();
        for (i, &xv) in xrow.iter().enumerate() {
            let dwrow = &mut dwd[i * g..][..g];
            for (d, gv) in dwrow.iter_mut().zip(grow) {
                *d += xv * *gv;
            }
        }
        for (d, gv) in db.data_mut().iter_mut().zip(grow) {
            *d += *gv;
        }
    }
    (dx, dw, db)
}
