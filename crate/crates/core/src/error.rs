use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid time step dt = {dt}: must be positive and finite")]
    InvalidStep { dt: f64 },
    #[error("width parameter collapsed: Re(a) = {re_a} is not positive")]
    CollapsedWidth { re_a: f64 },
    #[error("step dt = {dt} too large for the width dynamics; use dt <= {suggested}")]
    StepSize { dt: f64, suggested: f64 },
    #[error("wave packet left the tracked domain: <x> = {xbar} is {margin} sigma from the nearest edge (need 5)")]
    DomainEscape { xbar: f64, margin: f64 },
    #[error("grid step unstable: norm residual {residual:e} beyond the Gaussian expectation exceeds 1e-3")]
    Instability { residual: f64 },
    #[error("degenerate kernel: nodes {first} and {second} coincide")]
    DegenerateKernel { first: usize, second: usize },
    #[error("regularized kernel is not positive semi-definite: most negative eigenvalue {min_eigenvalue:e}")]
    KernelRegularization { min_eigenvalue: f64 },
    #[error("lattice does not cover the ball: {detail}; need spacing <= {required_spacing}")]
    Coverage {
        detail: String,
        required_spacing: f64,
    },
    #[error("state width {sigma} is below the grid resolution {dx}")]
    Resolution { sigma: f64, dx: f64 },
    #[error("lattice resolution too coarse: {cells_per_diameter:.1} cells per diameter, need {required}")]
    Precision {
        cells_per_diameter: f64,
        required: usize,
    },
    #[error("requested work {requested:e} step-trajectories exceeds the cap {cap:e}")]
    Capacity { requested: f64, cap: f64 },
    #[error("probes overlap at t = {t}: separation {d} < 2R")]
    Overlap { d: f64, t: f64 },
    #[error("too few samples for {what}: have {have}, need {need}")]
    LowStatistics {
        what: &'static str,
        have: usize,
        need: usize,
    },
    #[error("ill-conditioned fit: relative standard error {relative_stderr:.3} exceeds 0.5")]
    IllConditionedFit { relative_stderr: f64 },
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

impl Error {
    /// True for failures caused by the numerical regime rather than bad input.
    pub fn is_numerical_regime(&self) -> bool {
        matches!(
            self,
            Error::CollapsedWidth { .. }
                | Error::StepSize { .. }
                | Error::DomainEscape { .. }
                | Error::Instability { .. }
                | Error::KernelRegularization { .. }
                | Error::Resolution { .. }
                | Error::Overlap { .. }
        )
    }
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            field,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn step(dt: f64) -> Result<f64> {
    if dt.is_finite() && dt > 0.0 {
        Ok(dt)
    } else {
        Err(Error::InvalidStep { dt })
    }
}
