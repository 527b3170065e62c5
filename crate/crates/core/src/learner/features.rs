//! Network inputs: per-sample unit-norm channels, flattened and
//! standardized with statistics frozen from the training split.

use hbf_autodiff::{ComplexTensor, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hardware::{CMat, C64};

/// `Ĥ/‖Ĥ‖_F`, so that `‖H̄‖²_F = 1`.
pub fn normalize_input(h: &CMat) -> Result<CMat> {
    let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(CoreError::Degenerate(format!("channel norm {norm} cannot be normalized")));
    }
    Ok(h * C64::new(1.0 / norm, 0.0))
}

/// Rows `[re(H̄) | im(H̄)]` for every sample of a `[S, U, T]` batch.
pub fn features(h: &ComplexTensor) -> Result<Tensor> {
    let shape = h.shape();
    if shape.len() != 3 {
        return Err(CoreError::Dimension(format!("channel batch has shape {shape:?}")));
    }
    let (s, per) = (shape[0], shape[1] * shape[2]);
    let mut out = Vec::with_capacity(2 * s * per);
    for i in 0..s {
        let re = &h.re.data()[i * per..(i + 1) * per];
        let im = &h.im.data()[i * per..(i + 1) * per];
        let norm = re.iter().chain(im).map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(CoreError::Degenerate(format!("sample {i} has channel norm {norm}")));
        }
        // rotate each user row so its first element is real and nonnegative;
        // SINRs are blind to a per-user phase, so this loses nothing
        let (n_u, n_t) = (shape[1], shape[2]);
        let mut rot = Vec::with_capacity(n_u);
        for u in 0..n_u {
            let (a, b) = (re[u * n_t], im[u * n_t]);
            let m = a.hypot(b);
            rot.push(if m > 0.0 { (a / m, -b / m) } else { (1.0, 0.0) });
        }
        let at = |k: usize| {
            let (c, d) = rot[k / n_t];
            (re[k] * c - im[k] * d, re[k] * d + im[k] * c)
        };
        out.extend((0..per).map(|k| at(k).0 / norm));
        out.extend((0..per).map(|k| at(k).1 / norm));
    }
    Ok(Tensor::new(vec![s, 2 * per], out)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Reciprocal standard deviation (1 for constant features).
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        if n == 0 {
            return Err(CoreError::Contract("cannot fit statistics on zero samples".into()));
        }
        let mut mean = vec![0.0; d];
        for row in x.data().chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.data().chunks(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if x.shape().len() != 2 || x.shape()[1] != d {
            return Err(CoreError::Dimension(format!(
                "features {:?} for a {d}-wide standardizer",
                x.shape()
            )));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        Ok(out)
    }
}

/// Rows `idx` of a `[S, D]` tensor.
pub fn gather_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let d: usize = x.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&x.data()[i * d..(i + 1) * d]);
    }
    let mut shape = x.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data).unwrap()
}

pub fn gather_complex(x: &ComplexTensor, idx: &[usize]) -> ComplexTensor {
    ComplexTensor {
        re: gather_rows(&x.re, idx),
        im: gather_rows(&x.im, idx),
    }
}
