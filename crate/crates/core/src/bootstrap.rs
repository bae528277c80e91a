use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Two-sided interval `[lower, upper]`, serialized as a tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(from = "(T, T)", into = "(T, T)")]
pub struct Interval<T: Scalar> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> From<(T, T)> for Interval<T> {
    fn from((lower, upper): (T, T)) -> Self {
        Self { lower, upper }
    }
}

impl<T: Scalar> From<Interval<T>> for (T, T) {
    fn from(i: Interval<T>) -> Self {
        (i.lower, i.upper)
    }
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, x: T) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

/// Point estimate with its bootstrap mean and 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Estimate<T: Scalar> {
    pub point: T,
    pub mean: T,
    pub ci: Interval<T>,
}

pub const CI_LOWER: f64 = 0.025;
pub const CI_UPPER: f64 = 0.975;

/// Linear-interpolation percentile of an already sorted slice, `q` in `[0, 1]`.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// 2.5/97.5 percentile interval of `samples`, widened if needed so it
/// contains `point`.
pub fn percentile_interval<T: Scalar>(samples: &[T], point: T) -> Interval<T> {
    let mut sorted: Vec<T> = samples.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Interval {
            lower: point,
            upper: point,
        };
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    let lower = percentile_sorted(&sorted, CI_LOWER);
    let upper = percentile_sorted(&sorted, CI_UPPER);
    Interval {
        lower: lower.min(point),
        upper: upper.max(point),
    }
}

pub fn summarize<T: Scalar>(samples: &[T], point: T) -> Estimate<T> {
    let finite: Vec<T> = samples.iter().copied().filter(|v| !v.is_nan()).collect();
    let mean = if finite.is_empty() {
        point
    } else {
        finite.iter().copied().sum::<T>() / T::from_usize_lossy(finite.len())
    };
    Estimate {
        point,
        mean,
        ci: percentile_interval(&finite, point),
    }
}
