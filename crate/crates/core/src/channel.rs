//! Synthetic geometric mm-wave channels on a uniform planar array, the
//! imperfect-CSI corruption model and a binary channel file format.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, TAU};
use std::fs;
use std::path::Path;

use hbf_autodiff::{ComplexTensor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hardware::{CMat, C64};

/// Corruption draws use streams above this offset so they never overlap
/// the generation streams of the same seed.
const CORRUPT_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_y: usize,
    pub n_z: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub n_paths: usize,
    /// Mean power of each complex path gain, dB.
    pub path_power_db: f64,
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n_y: 8,
            n_z: 8,
            spacing: 0.5,
            n_paths: 2,
            path_power_db: -160.0,
            azimuth: (-FRAC_PI_2, FRAC_PI_2),
            elevation: (FRAC_PI_3, 2.0 * FRAC_PI_3),
        }
    }
}

impl GeometryConfig {
    pub fn n_antennas(&self) -> usize {
        self.n_y * self.n_z
    }

    pub fn path_power(&self) -> f64 {
        10f64.powf(self.path_power_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_y == 0 || self.n_z == 0 {
            return Err(CoreError::Domain("array dimensions must be positive".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(CoreError::Domain(format!("spacing must be > 0, got {}", self.spacing)));
        }
        if self.n_paths == 0 {
            return Err(CoreError::Domain("need at least one path".into()));
        }
        if !self.path_power_db.is_finite() {
            return Err(CoreError::Domain("path power must be finite".into()));
        }
        for (name, (lo, hi)) in [("azimuth", self.azimuth), ("elevation", self.elevation)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(CoreError::Domain(format!("bad {name} range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// UPA response with unit-modulus entries; element `(p, q)` sits at
/// linear index `p·n_z + q`.
pub fn steering_vector(azimuth: f64, elevation: f64, geometry: &GeometryConfig) -> Vec<C64> {
    let u = azimuth.sin() * elevation.sin();
    let v = elevation.cos();
    let mut out = Vec::with_capacity(geometry.n_antennas());
    for p in 0..geometry.n_y {
        for q in 0..geometry.n_z {
            let phase = TAU * geometry.spacing * (p as f64 * u + q as f64 * v);
            out.push(C64::from_polar(1.0, phase));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBatch {
    pub n_samples: usize,
    pub n_users: usize,
    pub n_antennas: usize,
    /// `[n_samples, n_users, n_antennas]`; row `u` of a sample holds `h_uᴴ`.
    pub h_true: ComplexTensor,
    pub h_est: ComplexTensor,
    pub beta: f64,
    pub seed: u64,
}

fn sample_matrix(t: &ComplexTensor, s: usize, users: usize, ants: usize) -> CMat {
    let off = s * users * ants;
    let (re, im) = (&t.re.data()[off..], &t.im.data()[off..]);
    CMat::from_fn(users, ants, |u, n| C64::new(re[u * ants + n], im[u * ants + n]))
}

impl ChannelBatch {
    fn from_parts(
        n_samples: usize,
        n_users: usize,
        n_antennas: usize,
        true_parts: (Vec<f64>, Vec<f64>),
        est_parts: (Vec<f64>, Vec<f64>),
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        let shape = vec![n_samples, n_users, n_antennas];
        let tensor = |(re, im): (Vec<f64>, Vec<f64>)| -> Result<ComplexTensor> {
            Ok(ComplexTensor::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape.clone(), im)?)?)
        };
        Ok(ChannelBatch {
            n_samples,
            n_users,
            n_antennas,
            h_true: tensor(true_parts)?,
            h_est: tensor(est_parts)?,
            beta,
            seed,
        })
    }

    pub fn true_matrix(&self, s: usize) -> CMat {
        sample_matrix(&self.h_true, s, self.n_users, self.n_antennas)
    }

    pub fn est_matrix(&self, s: usize) -> CMat {
        sample_matrix(&self.h_est, s, self.n_users, self.n_antennas)
    }

    /// Samples `range` as a new batch (same beta and seed).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<ChannelBatch> {
        if range.start > range.end || range.end > self.n_samples {
            return Err(CoreError::Domain(format!(
                "sample range {range:?} outside 0..{}",
                self.n_samples
            )));
        }
        let per = self.n_users * self.n_antennas;
        let cut = |t: &ComplexTensor| {
            (
                t.re.data()[range.start * per..range.end * per].to_vec(),
                t.im.data()[range.start * per..range.end * per].to_vec(),
            )
        };
        ChannelBatch::from_parts(
            range.len(),
            self.n_users,
            self.n_antennas,
            cut(&self.h_true),
            cut(&self.h_est),
            self.beta,
            self.seed,
        )
    }

    /// Mean of `|h|²` over every element of `h_true`.
    pub fn mean_element_power(&self) -> f64 {
        let n = self.h_true.re.len() as f64;
        let s: f64 = self
            .h_true
            .re
            .data()
            .iter()
            .zip(self.h_true.im.data())
            .map(|(a, b)| a * a + b * b)
            .sum();
        s / n
    }
}

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Cluster-sum channels: `h = √(N_T/L) Σ_l g_l a_l/‖a_l‖` with
/// `g_l ~ CN(0, path power)`. Sample `s` draws from its own stream, so
/// batches are reproducible and prefix-stable.
pub fn generate(
    config: &GeometryConfig,
    n_samples: usize,
    n_users: usize,
    seed: u64,
) -> Result<ChannelBatch> {
    config.validate()?;
    if n_samples == 0 || n_users == 0 {
        return Err(CoreError::Domain("need at least one sample and one user".into()));
    }
    let n_t = config.n_antennas();
    let power = config.path_power();
    let scale = (n_t as f64 / config.n_paths as f64).sqrt() / (n_t as f64).sqrt();
    let total = n_samples * n_users * n_t;
    let (mut re, mut im) = (Vec::with_capacity(total), Vec::with_capacity(total));
    let mut h = vec![C64::new(0.0, 0.0); n_t];
    for s in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        for _ in 0..n_users {
            h.fill(C64::new(0.0, 0.0));
            for _ in 0..config.n_paths {
                let az = rng.random_range(config.azimuth.0..=config.azimuth.1);
                let el = rng.random_range(config.elevation.0..=config.elevation.1);
                let g = complex_normal(&mut rng, power) * scale;
                for (hn, a) in h.iter_mut().zip(steering_vector(az, el, config)) {
                    *hn += g * a;
                }
            }
            re.extend(h.iter().map(|z| z.re));
            im.extend(h.iter().map(|z| z.im));
        }
    }
    ChannelBatch::from_parts(n_samples, n_users, n_t, (re.clone(), im.clone()), (re, im), 0.0, seed)
}

/// `h_est = √(1−β²)·h_true + β·ε`, `ε ~ CN(0, σ_e²)` i.i.d. When
/// `noise_var` is `None`, σ_e² is the batch's mean element power.
pub fn corrupt(
    batch: &ChannelBatch,
    beta: f64,
    noise_var: Option<f64>,
    seed: u64,
) -> Result<ChannelBatch> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::Domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    let var = noise_var.unwrap_or_else(|| batch.mean_element_power());
    if !(var >= 0.0 && var.is_finite()) {
        return Err(CoreError::Domain(format!("noise variance must be >= 0, got {var}")));
    }
    let mut out = batch.clone();
    out.beta = beta;
    if beta == 0.0 {
        out.h_est = batch.h_true.clone();
        return Ok(out);
    }
    let keep = (1.0 - beta * beta).sqrt();
    let per = batch.n_users * batch.n_antennas;
    let (src_re, src_im) = (batch.h_true.re.data(), batch.h_true.im.data());
    let (dst_re, dst_im) = (out.h_est.re.data_mut(), out.h_est.im.data_mut());
    for s in 0..batch.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CORRUPT_STREAM_BASE + s as u64);
        for i in s * per..(s + 1) * per {
            let e = complex_normal(&mut rng, var);
            dst_re[i] = keep * src_re[i] + beta * e.re;
            dst_im[i] = keep * src_im[i] + beta * e.im;
        }
    }
    Ok(out)
}

const MAGIC: &[u8; 4] = b"BMCH";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

pub fn to_bytes(batch: &ChannelBatch) -> Vec<u8> {
    let n = batch.h_true.re.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 32 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [batch.n_samples, batch.n_users, batch.n_antennas] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&batch.beta.to_le_bytes());
    out.extend_from_slice(&batch.seed.to_le_bytes());
    for t in [&batch.h_true, &batch.h_est] {
        for (a, b) in t.re.data().iter().zip(t.im.data()) {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CoreError::Format {
                offset: self.bytes.len() as u64,
                message: format!(
                    "file truncated while reading {what} ({n} bytes needed at byte {})",
                    self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ChannelBatch> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CoreError::Format {
            offset: 0,
            message: format!("expected magic \"BMCH\", found {magic:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CoreError::Format {
            offset: 4,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let n_samples = r.u32("n_samples")? as usize;
    let n_users = r.u32("n_users")? as usize;
    let n_antennas = r.u32("n_antennas")? as usize;
    let beta_at = r.pos as u64;
    let beta = r.f64("beta")?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::Format {
            offset: beta_at,
            message: format!("beta {beta} outside [0, 1]"),
        });
    }
    let seed = r.u64("seed")?;
    let n = n_samples
        .checked_mul(n_users)
        .and_then(|x| x.checked_mul(n_antennas))
        .ok_or_else(|| CoreError::Format {
            offset: 12,
            message: "dimension product overflows".into(),
        })?;
    let expected = n.checked_mul(32).and_then(|x| x.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        let message = match expected {
            Some(e) if e > bytes.len() => {
                format!("file truncated: expected {e} bytes, found {}", bytes.len())
            }
            Some(e) => format!("{} trailing bytes after expected end {e}", bytes.len() - e),
            None => "dimension product overflows".into(),
        };
        return Err(CoreError::Format {
            offset: bytes.len().min(expected.unwrap_or(0)) as u64,
            message,
        });
    }
    let mut read = |what: &str| -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut re, mut im) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            re.push(r.f64(what)?);
            im.push(r.f64(what)?);
        }
        Ok((re, im))
    };
    let t = read("h_true")?;
    let e = read("h_est")?;
    ChannelBatch::from_parts(n_samples, n_users, n_antennas, t, e, beta, seed)
}

pub fn save(batch: &ChannelBatch, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(batch))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ChannelBatch> {
    from_bytes(&fs::read(path)?)
}
