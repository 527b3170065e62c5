use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Zero precoder, zero channel and similar inputs with no defined result.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("antenna {antenna}: transmit power {p_tx:e} W is below PA input power {p_in:e} W")]
    Infeasible { antenna: usize, p_tx: f64, p_in: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] hbf_autodiff::AutodiffError),
}

pub type Result<T> = std::result::Result<T, CoreError>;
