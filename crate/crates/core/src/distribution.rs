//! Confidence distributions attached to certainty phrases.

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{beta_reg, ln_beta};

/// Variance at or below which a moment fit collapses to a point mass.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// A law on `[0, 1]`: either `Beta(alpha, beta)` or a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound = "T: Scalar")]
pub enum ConfidenceDistribution<T> {
    Beta { alpha: T, beta: T },
    Delta { point: T },
}

/// Mode and spread of the input-dependent kernel induced by a beta law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelParams<T> {
    pub mode: T,
    pub spread: T,
}

impl<T: Scalar> ConfidenceDistribution<T> {
    pub fn beta(alpha: T, beta: T) -> Result<Self> {
        let d = Self::Beta { alpha, beta };
        d.validate()?;
        Ok(d)
    }

    pub fn delta(point: T) -> Result<Self> {
        let d = Self::Delta { point };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Beta { alpha, beta } => {
                if !(alpha > T::zero() && beta > T::zero() && alpha.is_finite() && beta.is_finite())
                {
                    return Err(Error::InvalidDistribution(format!(
                        "beta shapes must be positive and finite, got ({alpha}, {beta})"
                    )));
                }
            }
            Self::Delta { point } => {
                if !(point >= T::zero() && point <= T::one()) {
                    return Err(Error::InvalidDistribution(format!(
                        "delta location must lie in [0, 1], got {point}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, Self::Delta { .. })
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Beta { alpha, beta } => alpha / (alpha + beta),
            Self::Delta { point } => point,
        }
    }

    pub fn variance(&self) -> T {
        match *self {
            Self::Beta { alpha, beta } => {
                let total = alpha + beta;
                alpha * beta / (total * total * (total + T::one()))
            }
            Self::Delta { .. } => T::zero(),
        }
    }

    /// Density at `s`. Endpoints follow the analytic limit, which is
    /// infinite when the corresponding shape is below one.
    pub fn pdf(&self, s: T) -> Result<T> {
        let Self::Beta { alpha, beta } = *self else {
            return Err(Error::DeltaHasNoDensity);
        };
        let zero = T::zero();
        let one = T::one();
        if s < zero || s > one {
            return Ok(zero);
        }
        let norm = (-ln_beta(alpha, beta)).exp();
        let edge = |shape: T| {
            if shape < one {
                T::infinity()
            } else if shape == one {
                norm
            } else {
                zero
            }
        };
        if s == zero {
            return Ok(edge(alpha));
        }
        if s == one {
            return Ok(edge(beta));
        }
        let log_density = (alpha - one) * s.ln() + (beta - one) * (one - s).ln() - ln_beta(alpha, beta);
        Ok(log_density.exp())
    }

    /// `P(S <= s)`. For a point mass the step is right-continuous.
    pub fn cdf(&self, s: T) -> T {
        match *self {
            Self::Beta { alpha, beta } => beta_reg(alpha, beta, s),
            Self::Delta { point } => {
                if s >= point {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `P(S >= x)`; a point mass sitting exactly on `x` counts.
    pub fn prob_at_least(&self, x: T) -> T {
        match *self {
            Self::Beta { .. } => T::one() - self.cdf(x),
            Self::Delta { point } => {
                if point >= x {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Probability of `[lo, hi)`, or of `[lo, 1]` when `hi` reaches 1.
    pub fn interval_mass(&self, lo: T, hi: T) -> T {
        match *self {
            Self::Beta { .. } => {
                if hi <= lo {
                    return T::zero();
                }
                (self.cdf(hi) - self.cdf(lo)).max(T::zero())
            }
            Self::Delta { point } => {
                if contains(lo, hi, point) {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `E[S · 1{S in interval}]` under the same interval convention as
    /// [`interval_mass`](Self::interval_mass).
    pub fn partial_expectation(&self, lo: T, hi: T) -> T {
        match *self {
            Self::Beta { alpha, beta } => {
                // s · Beta(α, β) density = α/(α+β) · Beta(α+1, β) density
                let shifted = Self::Beta {
                    alpha: alpha + T::one(),
                    beta,
                };
                self.mean() * shifted.interval_mass(lo, hi)
            }
            Self::Delta { point } => point * self.interval_mass(lo, hi),
        }
    }

    pub fn kernel_params(&self) -> Result<KernelParams<T>> {
        let Self::Beta { alpha, beta } = *self else {
            return Err(Error::UndefinedKernel);
        };
        let one = T::one();
        let denom = alpha + beta - one - one;
        if !(denom > T::zero()) || alpha < one || beta < one {
            return Err(Error::UndefinedKernel);
        }
        Ok(KernelParams {
            mode: (alpha - one) / denom,
            spread: one / denom,
        })
    }

    /// Draws one score. Sampling runs in `f64` regardless of `T`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Beta { alpha, beta } => BetaSampler::new(alpha.as_f64(), beta.as_f64())
                .expect("validated beta parameters")
                .sample(rng),
            Self::Delta { point } => point.as_f64(),
        }
    }
}

fn contains<T: Scalar>(lo: T, hi: T, x: T) -> bool {
    if hi >= T::one() {
        x >= lo && x <= T::one()
    } else {
        x >= lo && x < hi
    }
}

/// Aggregate survey answers for one phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SurveyStats<T> {
    pub phrase: String,
    pub mean: T,
    pub variance: T,
}

/// Outcome of a method-of-moments fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentFit<T> {
    pub distribution: ConfidenceDistribution<T>,
    /// Set when the variance was too small for a beta and a point mass at the
    /// mean was returned instead.
    pub degenerate: bool,
}

/// Matches a beta law to a survey mean and variance.
pub fn fit_method_of_moments<T: Scalar>(stats: &SurveyStats<T>) -> Result<MomentFit<T>> {
    let m = stats.mean;
    let v = stats.variance;
    let zero = T::zero();
    let one = T::one();
    let infeasible = || Error::MomentInfeasible {
        mean: m.as_f64(),
        variance: v.as_f64(),
    };
    if !m.is_finite() || !v.is_finite() || v < zero {
        return Err(infeasible());
    }
    if v <= T::lit(DEGENERATE_VARIANCE) {
        if m < zero || m > one {
            return Err(infeasible());
        }
        return Ok(MomentFit {
            distribution: ConfidenceDistribution::Delta { point: m },
            degenerate: true,
        });
    }
    if !(m > zero && m < one) || v >= m * (one - m) {
        return Err(infeasible());
    }
    let factor = m * (one - m) / v - one;
    Ok(MomentFit {
        distribution: ConfidenceDistribution::Beta {
            alpha: m * factor,
            beta: (one - m) * factor,
        },
        degenerate: false,
    })
}
