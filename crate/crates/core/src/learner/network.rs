//! Feed-forward network producing precoder and connection heads.

use hbf_autodiff::{concat, Result as AdResult, Tape, Tensor, Var, LEAKY_SLOPE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hardware::{HardwareTemplate, TemplateKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hidden {
    Mlp { widths: Vec<usize> },
    /// Same-padded convolutions over the `2 × N_U × N_T` input, then dense layers.
    Conv {
        channels: Vec<usize>,
        kernel: usize,
        widths: Vec<usize>,
    },
}

impl Default for Hidden {
    fn default() -> Self {
        Hidden::Mlp {
            widths: vec![1024, 1024],
        }
    }
}

impl Hidden {
    pub fn conv_default() -> Self {
        Hidden::Conv {
            channels: vec![16, 16, 8],
            kernel: 3,
            widths: vec![1024, 1024],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: TemplateKind,
    pub n_t: usize,
    pub n_u: usize,
    pub n_rf: usize,
    pub hidden: Hidden,
}

/// Sizes of the output heads, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDims {
    pub digital: usize,
    pub angles: usize,
    pub logits: usize,
}

impl NetworkSpec {
    pub fn new(template: &HardwareTemplate, n_u: usize, hidden: Hidden) -> Result<Self> {
        if n_u == 0 {
            return Err(CoreError::Domain("need at least one user".into()));
        }
        let spec = NetworkSpec {
            kind: template.kind,
            n_t: template.n_t,
            n_u,
            n_rf: template.n_rf,
            hidden,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match &self.hidden {
            Hidden::Mlp { widths } => widths.iter().any(|&w| w == 0),
            Hidden::Conv {
                channels,
                kernel,
                widths,
            } => {
                channels.is_empty()
                    || channels.iter().any(|&c| c == 0)
                    || kernel % 2 == 0
                    || widths.iter().any(|&w| w == 0)
            }
        };
        if bad {
            return Err(CoreError::Domain(format!("invalid hidden layout {:?}", self.hidden)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.n_u * self.n_t
    }

    pub fn heads(&self) -> HeadDims {
        if self.kind.is_hybrid() {
            HeadDims {
                digital: self.n_rf * self.n_u,
                angles: self.n_t * self.n_rf,
                logits: self.n_t * self.n_rf,
            }
        } else {
            HeadDims {
                digital: self.n_t * self.n_u,
                angles: 0,
                logits: self.n_t,
            }
        }
    }

    /// Total width of the output layer: real and imaginary digital parts,
    /// then angles, then connection logits.
    pub fn output_dim(&self) -> usize {
        let h = self.heads();
        2 * h.digital + h.angles + h.logits
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut width = self.input_dim();
        let dense = match &self.hidden {
            Hidden::Mlp { widths } => widths,
            Hidden::Conv {
                channels,
                kernel,
                widths,
            } => {
                let mut c_in = 2;
                for (i, &c) in channels.iter().enumerate() {
                    out.push((format!("conv{i}.w"), vec![c, c_in, *kernel, *kernel]));
                    out.push((format!("conv{i}.b"), vec![1, c, 1, 1]));
                    c_in = c;
                }
                width = c_in * self.n_u * self.n_t;
                widths
            }
        };
        for (i, &w) in dense.iter().enumerate() {
            out.push((format!("fc{i}.w"), vec![width, w]));
            out.push((format!("fc{i}.b"), vec![1, w]));
            width = w;
        }
        out.push(("head.w".into(), vec![width, self.output_dim()]));
        out.push(("head.b".into(), vec![1, self.output_dim()]));
        out
    }
}

/// Named parameter tensors in [`NetworkSpec::layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    /// Uniform `±1/√fan_in` initialization. The connection-logit biases
    /// start at `logit_bias` so that training begins with most hardware on.
    pub fn init(spec: &NetworkSpec, seed: u64, logit_bias: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut names, mut tensors) = (Vec::new(), Vec::new());
        let layout = spec.layout();
        for (name, shape) in &layout {
            let fan_in = if name.starts_with("conv") && name.ends_with(".w") {
                shape[1] * shape[2] * shape[3]
            } else if name.ends_with(".w") {
                shape[0]
            } else {
                // bias shares the fan-in of its weight
                let w = &layout.iter().find(|(n, _)| *n == name.replace(".b", ".w")).unwrap().1;
                if name.starts_with("conv") {
                    w[1] * w[2] * w[3]
                } else {
                    w[0]
                }
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            names.push(name.clone());
            tensors.push(Tensor::new(shape.clone(), data).unwrap());
        }
        let head_b = tensors.last_mut().unwrap();
        let h = spec.heads();
        let start = 2 * h.digital + h.angles;
        for v in &mut head_b.data_mut()[start..] {
            *v = logit_bias;
        }
        ParamSet { names, tensors }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let layout = spec.layout();
        if layout.len() != self.tensors.len() {
            return Err(CoreError::Contract(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (n, t)) in layout.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(CoreError::Contract(format!(
                    "parameter {n} {:?} does not match layout {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// Raw network outputs, batched.
#[derive(Debug, Clone, Copy)]
pub struct Heads<'t> {
    /// `[B, N_RF·N_U]` (hybrid) or `[B, N_T·N_U]` (FDP), row-major matrices.
    pub digital_re: Var<'t>,
    pub digital_im: Var<'t>,
    /// `[B, N_T·N_RF]`; absent for FDP.
    pub angles: Option<Var<'t>>,
    /// `[B, N_T·N_RF]` or `[B, N_T]`.
    pub logits: Var<'t>,
}

fn dense<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> AdResult<Var<'t>> {
    x.matmul(w)?.add(b)
}

/// Forward pass. `input` is `[B, 2·N_U·N_T]` (real parts, then imaginary).
pub fn forward<'t>(spec: &NetworkSpec, params: &[Var<'t>], input: Var<'t>) -> Result<Heads<'t>> {
    let shape = input.shape();
    if shape.len() != 2 || shape[1] != spec.input_dim() {
        return Err(CoreError::Contract(format!(
            "network input {shape:?}, expected [B, {}]",
            spec.input_dim()
        )));
    }
    let b = shape[0];
    let mut p = params.iter().copied();
    let mut next = || {
        p.next()
            .ok_or_else(|| CoreError::Contract("too few parameter tensors".into()))
    };
    let mut x = input;
    let dense_layers = match &spec.hidden {
        Hidden::Mlp { widths } => widths.len(),
        Hidden::Conv {
            channels, widths, ..
        } => {
            x = x.reshape(&[b, 2, spec.n_u, spec.n_t])?;
            for _ in channels {
                let (w, bias) = (next()?, next()?);
                x = x.conv2d(w)?.add(bias)?.leaky_relu(LEAKY_SLOPE);
            }
            let flat = x.shape()[1..].iter().product();
            x = x.reshape(&[b, flat])?;
            widths.len()
        }
    };
    for _ in 0..dense_layers {
        let (w, bias) = (next()?, next()?);
        x = dense(x, w, bias)?.leaky_relu(LEAKY_SLOPE);
    }
    let (w, bias) = (next()?, next()?);
    let out = dense(x, w, bias)?;
    let h = spec.heads();
    let digital_re = out.narrow(1, 0, h.digital)?;
    let digital_im = out.narrow(1, h.digital, h.digital)?;
    let angles = if h.angles > 0 {
        Some(out.narrow(1, 2 * h.digital, h.angles)?)
    } else {
        None
    };
    let logits = out.narrow(1, 2 * h.digital + h.angles, h.logits)?;
    Ok(Heads {
        digital_re,
        digital_im,
        angles,
        logits,
    })
}

/// Concatenates heads back into one `[B, output_dim]` tensor (useful for
/// scalar checks over every output).
pub fn stack_heads<'t>(heads: &Heads<'t>) -> Result<Var<'t>> {
    let mut parts = vec![heads.digital_re, heads.digital_im];
    if let Some(a) = heads.angles {
        parts.push(a);
    }
    parts.push(heads.logits);
    Ok(concat(&parts, 1)?)
}
