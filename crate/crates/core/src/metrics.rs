//! SINR and spectral efficiency for plain (non-tape) evaluation.
//!
//! Row `u` of a channel matrix `H` holds `h_uᴴ`, so the received amplitude
//! of stream `j` at user `u` is `[H·U]_{u,j}`.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::hardware::CMat;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub per_user_sinr: Vec<f64>,
    pub per_user_se: Vec<f64>,
    pub sum_se: f64,
    pub noise_power: f64,
}

impl LinkReport {
    pub fn new(per_user_sinr: Vec<f64>, noise_power: f64) -> Self {
        let per_user_se: Vec<f64> = per_user_sinr.iter().map(|s| (1.0 + s).log2()).collect();
        let sum_se = per_user_se.iter().sum();
        LinkReport {
            per_user_sinr,
            per_user_se,
            sum_se,
            noise_power,
        }
    }
}

/// Per-user SINR of a digital precoder `U` (`N_T × N_U`).
pub fn sinr_fdp(h: &CMat, u: &CMat, sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(CoreError::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    if h.ncols() != u.nrows() || h.nrows() != u.ncols() {
        return Err(CoreError::Dimension(format!(
            "channel {:?} and precoder {:?}",
            h.shape(),
            u.shape()
        )));
    }
    let g = h * u;
    Ok((0..g.nrows())
        .map(|k| {
            let row = g.row(k);
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            row[k].norm_sqr() / (interference + sigma2)
        })
        .collect())
}

/// Per-user SINR of the hybrid precoder `A·W`.
pub fn sinr_hbf(h: &CMat, a: &CMat, w: &CMat, sigma2: f64) -> Result<Vec<f64>> {
    if a.ncols() != w.nrows() {
        return Err(CoreError::Dimension(format!(
            "analog precoder {:?} and digital precoder {:?}",
            a.shape(),
            w.shape()
        )));
    }
    sinr_fdp(h, &(a * w), sigma2)
}

pub fn sum_se(sinr: &[f64]) -> f64 {
    sinr.iter().map(|s| (1.0 + s).log2()).sum()
}

pub fn link_report(h: &CMat, precoder: &CMat, sigma2: f64) -> Result<LinkReport> {
    Ok(LinkReport::new(sinr_fdp(h, precoder, sigma2)?, sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::C64;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMat {
        CMat::from_row_iterator(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)))
    }

    #[test]
    fn orthogonal_users() {
        let i2 = CMat::identity(2, 2);
        let s = sinr_fdp(&i2, &i2, 1.0).unwrap();
        assert_eq!(s, vec![1.0, 1.0]);
        assert_eq!(sum_se(&s), 2.0);
    }

    #[test]
    fn single_user() {
        let h = real(1, 2, &[1.0, 0.0]);
        let u = real(2, 1, &[3f64.sqrt(), 0.0]);
        let s = sinr_fdp(&h, &u, 1.0).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-12);
        assert!((sum_se(&s) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sum_se_examples() {
        assert_eq!(sum_se(&[0.0, 0.0]), 0.0);
        assert_eq!(sum_se(&[1.0, 3.0]), 3.0);
        assert_eq!(sum_se(&[15.0]), 4.0);
    }

    #[test]
    fn hbf_reductions() {
        let h = real(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 0.7]);
        let w = real(3, 2, &[0.2, 0.1, -0.4, 0.9, 0.3, 0.3]);
        let eye = CMat::identity(3, 3);
        assert_eq!(sinr_hbf(&h, &eye, &w, 0.1).unwrap(), sinr_fdp(&h, &w, 0.1).unwrap());
        let zero = CMat::zeros(3, 3);
        let s = sinr_hbf(&h, &zero, &w, 0.1).unwrap();
        assert!(s.iter().all(|&x| x == 0.0));
        assert_eq!(sum_se(&s), 0.0);
    }

    #[test]
    fn errors() {
        let i2 = CMat::identity(2, 2);
        assert!(sinr_fdp(&i2, &i2, 0.0).is_err());
        assert!(sinr_fdp(&i2, &CMat::identity(3, 2), 1.0).is_err());
    }
}
