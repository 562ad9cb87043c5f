//! Scalar exponential-family losses `ℓ(y, f) = A(f) − y·f`.
//!
//! Each family is parameterized by its natural parameter `f`. The mean
//! mapping `h = A'` and its derivative `h'` drive every gradient and
//! curvature computation in the crate.

use crate::error::{Error, Result};

/// Exponential family with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpFamily {
    /// Binary outcomes, `A(f) = log(1 + e^f)`, `h = σ`.
    Bernoulli,
    /// Unit-variance Gaussian, `A(f) = f²/2`, `h(f) = f`.
    Gaussian,
    /// Counts, `A(f) = e^f`.
    Poisson,
}

/// `(A(f), h(f), h'(f))` evaluated at one natural parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyEval {
    pub log_partition: f64,
    pub mean: f64,
    pub mean_deriv: f64,
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

impl ExpFamily {
    pub fn name(self) -> &'static str {
        match self {
            ExpFamily::Bernoulli => "bernoulli",
            ExpFamily::Gaussian => "gaussian",
            ExpFamily::Poisson => "poisson",
        }
    }

    /// Log-partition `A(f)`.
    pub fn log_partition(self, f: f64) -> f64 {
        match self {
            ExpFamily::Bernoulli => f.max(0.0) + (-f.abs()).exp().ln_1p(),
            ExpFamily::Gaussian => 0.5 * f * f,
            ExpFamily::Poisson => f.exp(),
        }
    }

    /// Mean mapping `h(f) = A'(f)`.
    pub fn mean(self, f: f64) -> f64 {
        match self {
            ExpFamily::Bernoulli => sigmoid(f),
            ExpFamily::Gaussian => f,
            ExpFamily::Poisson => f.exp(),
        }
    }

    /// Derivative of the mean mapping `h'(f) = A''(f)`.
    pub fn mean_deriv(self, f: f64) -> f64 {
        match self {
            ExpFamily::Bernoulli => {
                // e^{-|f|} / (1 + e^{-|f|})², exact in both tails
                let e = (-f.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ExpFamily::Gaussian => 1.0,
            ExpFamily::Poisson => f.exp(),
        }
    }

    /// Checked evaluation of `(A, h, h')`.
    pub fn eval(self, f: f64) -> Result<FamilyEval> {
        if !f.is_finite() {
            return Err(Error::Domain("family_eval"));
        }
        Ok(FamilyEval {
            log_partition: self.log_partition(f),
            mean: self.mean(f),
            mean_deriv: self.mean_deriv(f),
        })
    }

    /// Negative log-likelihood `A(f) − y·f` (up to the base-measure term).
    ///
    /// `y` may be any value in the mean space, which is how soft labels
    /// enter the functional term of a K-prior.
    pub fn loss(self, y: f64, f: f64) -> f64 {
        self.log_partition(f) - y * f
    }

    /// Bregman divergence of the log-partition, `A(f1) − A(f2) − h(f2)(f1 − f2)`.
    pub fn bregman(self, f1: f64, f2: f64) -> Result<f64> {
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::Domain("bregman_log_partition"));
        }
        Ok(self.bregman_unchecked(f1, f2))
    }

    pub(crate) fn bregman_unchecked(self, f1: f64, f2: f64) -> f64 {
        let d = match self {
            ExpFamily::Gaussian => 0.5 * (f1 - f2) * (f1 - f2),
            _ => self.log_partition(f1) - self.log_partition(f2) - self.mean(f2) * (f1 - f2),
        };
        // rounding can push an exact zero slightly negative
        d.max(0.0)
    }

    /// Checks that `y` is a valid observation for this family.
    pub fn check_label(self, row: usize, y: f64) -> Result<()> {
        let ok = match self {
            ExpFamily::Bernoulli => y == 0.0 || y == 1.0,
            ExpFamily::Gaussian => y.is_finite(),
            ExpFamily::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                row,
                label: y,
                family: self.name(),
            })
        }
    }

    /// Hard prediction from a natural parameter. Bernoulli thresholds at
    /// `h = 0.5` with ties going to class 0.
    pub fn hard_label(self, f: f64) -> f64 {
        match self {
            ExpFamily::Bernoulli => {
                if self.mean(f) > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            ExpFamily::Gaussian => f,
            ExpFamily::Poisson => self.mean(f).round(),
        }
    }
}

impl std::str::FromStr for ExpFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bernoulli" | "logistic" => Ok(ExpFamily::Bernoulli),
            "gaussian" | "linear" => Ok(ExpFamily::Gaussian),
            "poisson" => Ok(ExpFamily::Poisson),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}
