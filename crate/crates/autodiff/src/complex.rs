//! Complex values as pairs of real tensors. Every loss in this project is a
//! real function of the real and imaginary parts, so ordinary real-valued
//! reverse mode over the pair is sufficient.

use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Plain complex tensor (not attached to a tape).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "complex",
                left: re.shape().to_vec(),
                right: im.shape().to_vec(),
            });
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn real(re: Tensor) -> Self {
        let im = Tensor::zeros(re.shape());
        ComplexTensor { re, im }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }
}

/// Complex node pair on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ComplexVar<'t> {
    pub re: Var<'t>,
    pub im: Var<'t>,
}

impl<'t> ComplexVar<'t> {
    pub fn new(re: Var<'t>, im: Var<'t>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "complex",
                left: re.shape(),
                right: im.shape(),
            });
        }
        Ok(ComplexVar { re, im })
    }

    pub fn constant(tape: &'t Tape, value: &ComplexTensor) -> Self {
        ComplexVar {
            re: tape.constant(value.re.clone()),
            im: tape.constant(value.im.clone()),
        }
    }

    pub fn param(tape: &'t Tape, value: &ComplexTensor) -> Self {
        ComplexVar {
            re: tape.param(value.re.clone()),
            im: tape.param(value.im.clone()),
        }
    }

    /// `exp(j·phase)`.
    pub fn from_phase(phase: Var<'t>) -> Self {
        ComplexVar {
            re: phase.cos(),
            im: phase.sin(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.re.shape()
    }

    pub fn value(&self) -> ComplexTensor {
        ComplexTensor {
            re: (*self.re.value()).clone(),
            im: (*self.im.value()).clone(),
        }
    }

    pub fn add(&self, other: ComplexVar<'t>) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.add(other.re)?,
            im: self.im.add(other.im)?,
        })
    }

    pub fn sub(&self, other: ComplexVar<'t>) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.sub(other.re)?,
            im: self.im.sub(other.im)?,
        })
    }

    /// Element-wise complex product (with broadcasting).
    pub fn mul(&self, other: ComplexVar<'t>) -> Result<Self> {
        let re = self.re.mul(other.re)?.sub(self.im.mul(other.im)?)?;
        let im = self.re.mul(other.im)?.add(self.im.mul(other.re)?)?;
        Ok(ComplexVar { re, im })
    }

    /// Multiply by a real tensor (with broadcasting).
    pub fn mul_real(&self, factor: Var<'t>) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.mul(factor)?,
            im: self.im.mul(factor)?,
        })
    }

    pub fn conj(&self) -> Self {
        ComplexVar {
            re: self.re,
            im: self.im.neg(),
        }
    }

    /// Complex matrix product over the last two axes (see [`Var::matmul`]).
    pub fn matmul(&self, other: ComplexVar<'t>) -> Result<Self> {
        let re = self.re.matmul(other.re)?.sub(self.im.matmul(other.im)?)?;
        let im = self.re.matmul(other.im)?.add(self.im.matmul(other.re)?)?;
        Ok(ComplexVar { re, im })
    }

    /// Swap the last two axes (plain transpose, no conjugation).
    pub fn transpose(&self) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.transpose()?,
            im: self.im.transpose()?,
        })
    }

    /// Element-wise squared modulus `re² + im²`.
    pub fn abs2(&self) -> Result<Var<'t>> {
        self.re.square().add(self.im.square())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.reshape(shape)?,
            im: self.im.reshape(shape)?,
        })
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        Ok(ComplexVar {
            re: self.re.narrow(axis, start, len)?,
            im: self.im.narrow(axis, start, len)?,
        })
    }
}
