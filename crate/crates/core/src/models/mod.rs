//! Regression backends for one node's structural equation.
//!
//! Every backend returns a [`FittedNodeModel`] holding the residual series
//! that the independence tests consume, together with the residual sum of
//! squares and an effective number of parameters for AIC and F-tests.

mod additive;
mod aic;
mod gp;
mod linear;
mod spline;

use nalgebra::DVector;
use rand::Rng;

pub use additive::{fit_additive, AdditiveFit};
pub use aic::{aic, select_order_aic, OrderSelection};
pub use gp::{fit_gp, gp_log_marginal_likelihood, GPHyperparams, GpFit};
pub use linear::{fit_linear, LinearFit};
pub use spline::{PenalizedSpline, SmootherFit};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regression family used to fit a structural equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Ordinary least squares (vector autoregression).
    Linear,
    /// Additive model of univariate penalized cubic splines.
    Additive,
    /// Gaussian-process regression with a squared-exponential kernel.
    Gp,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Linear => "linear",
            Backend::Additive => "gam",
            Backend::Gp => "gp",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" | "var" => Ok(Backend::Linear),
            "gam" | "additive" => Ok(Backend::Additive),
            "gp" => Ok(Backend::Gp),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

/// Numerical constants of the fitting routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTolerances {
    /// Relative singular-value threshold below which a design is rank deficient.
    pub rank: f64,
    /// Backfitting stops once fitted values move less than this (relative to
    /// the response scale).
    pub backfit: f64,
    pub backfit_max_iter: usize,
    /// Largest diagonal jitter (relative to the kernel scale) tried before a
    /// Cholesky failure is reported.
    pub max_jitter: f64,
    /// Designs with more rows are subsampled for GP hyperparameter fitting.
    pub gp_max_rows: usize,
    /// Designs with more rows are subsampled for the GP posterior.
    pub gp_posterior_max_rows: usize,
    pub gp_restarts: usize,
    pub gp_max_iter: usize,
}

impl Default for FitTolerances {
    fn default() -> Self {
        Self {
            rank: 1e-10,
            backfit: 1e-6,
            backfit_max_iter: 50,
            max_jitter: 1e-4,
            gp_max_rows: 500,
            gp_posterior_max_rows: 2000,
            gp_restarts: 3,
            gp_max_iter: 60,
        }
    }
}

/// Backend-specific payload of a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParameters<T: Scalar> {
    Linear(LinearFit<T>),
    Additive(AdditiveFit<T>),
    Gp(GpFit<T>),
}

/// Result of regressing one series on its lagged design.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedNodeModel<T: Scalar> {
    pub backend: Backend,
    pub residuals: DVector<T>,
    pub rss: T,
    pub effective_dof: T,
    pub parameters: ModelParameters<T>,
}

impl<T: Scalar> FittedNodeModel<T> {
    pub(crate) fn from_residuals(
        backend: Backend,
        residuals: DVector<T>,
        effective_dof: T,
        parameters: ModelParameters<T>,
    ) -> Self {
        let rss = residuals.norm_squared();
        Self { backend, residuals, rss, effective_dof, parameters }
    }
}

/// Fits `design` with the chosen backend. Only the GP backend consumes
/// randomness (restarts and row subsampling).
pub fn fit<T: Scalar, R: Rng + ?Sized>(
    backend: Backend,
    design: &DesignMatrix<T>,
    tol: &FitTolerances,
    rng: &mut R,
) -> Result<FittedNodeModel<T>> {
    match backend {
        Backend::Linear => fit_linear(design, tol),
        Backend::Additive => fit_additive(design, tol),
        Backend::Gp => fit_gp(design, tol, rng),
    }
}
