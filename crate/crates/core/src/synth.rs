//! Synthetic phrase-verbalizing agents with known ground truth.
//!
//! A record is drawn as: phrase `k ~ usage`, latent score `s ~ u_k`,
//! outcome `y ~ Bernoulli(r(s))`. With a label lexicon the outcome is instead
//! the label phrase whose mean is closest to `r(s)`.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::ConfidenceDistribution;
use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::lexicon::CertaintyLexicon;
use crate::measure::BinStats;
use crate::ot::check_simplex;
use crate::records::PredictionRecord;
use crate::rng::{substream, Stream};
use crate::scalar::{compensated_sum, Scalar};

/// Records generated per random substream.
const CHUNK: usize = 4096;

/// Canonical calibration function `r(s) = P(Y = 1 | S = s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Scalar")]
pub enum OutcomeRule<T: Scalar> {
    /// `r(s) = s`.
    Calibrated,
    /// `r(s) = clamp(s + shift, 0, 1)`. Negative shifts are overconfident.
    Biased { shift: T },
    /// Linear interpolation through `(s, r)` points spanning `[0, 1]`.
    Custom { points: Vec<(T, T)> },
}

impl<T: Scalar> OutcomeRule<T> {
    /// Piecewise-linear knots of `r`, first at 0 and last at 1.
    pub fn knots(&self) -> Result<Vec<(T, T)>> {
        let (zero, one) = (T::zero(), T::one());
        match self {
            Self::Calibrated => Ok(vec![(zero, zero), (one, one)]),
            Self::Biased { shift } => {
                let d = *shift;
                if !(d.abs() < one) {
                    return Err(Error::InvalidConfig(format!("shift must lie in (-1, 1), got {d}")));
                }
                Ok(if d < zero {
                    vec![(zero, zero), (-d, zero), (one, one + d)]
                } else if d > zero {
                    vec![(zero, d), (one - d, one), (one, one)]
                } else {
                    vec![(zero, zero), (one, one)]
                })
            }
            Self::Custom { points } => {
                let ok = points.len() >= 2
                    && points[0].0 == zero
                    && points[points.len() - 1].0 == one
                    && points.windows(2).all(|w| w[0].0 < w[1].0)
                    && points.iter().all(|p| p.1 >= zero && p.1 <= one);
                if !ok {
                    return Err(Error::InvalidConfig(
                        "custom outcome points need increasing s from 0 to 1 and r in [0, 1]".into(),
                    ));
                }
                Ok(points.clone())
            }
        }
    }
}

fn interpolate<T: Scalar>(knots: &[(T, T)], s: T) -> T {
    let i = knots.partition_point(|p| p.0 <= s).clamp(1, knots.len() - 1);
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    let t = ((s - x0) / (x1 - x0)).max(T::zero()).min(T::one());
    (y0 + t * (y1 - y0)).max(T::zero()).min(T::one())
}

/// Everything needed to simulate an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgentSpec<T: Scalar> {
    pub lexicon: CertaintyLexicon<T>,
    pub usage: Vec<T>,
    pub outcome_rule: OutcomeRule<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_lexicon: Option<CertaintyLexicon<T>>,
}

impl<T: Scalar> AgentSpec<T> {
    pub fn new(lexicon: CertaintyLexicon<T>, usage: Vec<T>, outcome_rule: OutcomeRule<T>) -> Result<Self> {
        let spec = Self {
            lexicon,
            usage,
            outcome_rule,
            label_lexicon: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same lexicon used with equal frequency.
    pub fn uniform(lexicon: CertaintyLexicon<T>, outcome_rule: OutcomeRule<T>) -> Result<Self> {
        let k = lexicon.len();
        Self::new(lexicon, vec![T::one() / T::from_usize_lossy(k); k], outcome_rule)
    }

    pub fn with_label_lexicon(mut self, labels: CertaintyLexicon<T>) -> Self {
        self.label_lexicon = Some(labels);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.usage, self.lexicon.len(), "usage")?;
        self.outcome_rule.knots()?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| Error::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Label phrase whose mean is nearest to `r`; lowest index on ties.
fn nearest_label(means: &[f64], r: f64) -> usize {
    let mut best = 0;
    for (j, m) in means.iter().enumerate() {
        if (m - r).abs() < (means[best] - r).abs() {
            best = j;
        }
    }
    best
}

/// Draws `n` records. Deterministic in `seed`; record `i` depends only on
/// `seed` and `i`.
pub fn generate<T: Scalar>(spec: &AgentSpec<T>, n: usize, seed: u64) -> Result<Vec<PredictionRecord>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let knots: Vec<(f64, f64)> = spec
        .outcome_rule
        .knots()?
        .into_iter()
        .map(|(x, y)| (x.as_f64(), y.as_f64()))
        .collect();
    let usage = WeightedIndex::new(spec.usage.iter().map(|w| w.as_f64()))
        .map_err(|e| Error::InvalidConfig(format!("usage: {e}")))?;
    let label_means: Option<Vec<f64>> = spec
        .label_lexicon
        .as_ref()
        .map(|l| l.means().into_iter().map(Scalar::as_f64).collect());

    let mut out = Vec::with_capacity(n);
    for chunk in 0..n.div_ceil(CHUNK) {
        let mut rng = substream(seed, Stream::Synth, chunk as u64);
        for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
            let k = usage.sample(&mut rng);
            let s = spec.lexicon.distribution(k).sample(&mut rng);
            let r = interpolate(&knots, s);
            let id = i.to_string();
            out.push(match &label_means {
                None => PredictionRecord::hard(id, k, rng.random::<f64>() < r),
                Some(means) => PredictionRecord::uncertain(id, k, nearest_label(means, r)),
            });
        }
    }
    Ok(out)
}

/// `E[q(S) 1{S in [lo, hi)}]` for `S ~ dist` and `q` linear on the interval.
fn linear_moment<T: Scalar>(dist: &ConfidenceDistribution<T>, lo: T, hi: T, intercept: T, slope: T) -> T {
    intercept * dist.interval_mass(lo, hi) + slope * dist.partial_expectation(lo, hi)
}

/// Expected positive-outcome weight of a record using `dist`, integrated
/// exactly piece by piece.
fn expected_target<T: Scalar>(
    dist: &ConfidenceDistribution<T>,
    knots: &[(T, T)],
    labels: Option<&CertaintyLexicon<T>>,
) -> T {
    let mut parts = Vec::new();
    for w in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let slope = (y1 - y0) / (x1 - x0);
        let intercept = y0 - slope * x0;
        match labels {
            None => parts.push(linear_moment(dist, x0, x1, intercept, slope)),
            Some(labels) => {
                // q is constant between the points where r crosses a midpoint
                // of adjacent label means.
                let means: Vec<f64> = labels.means().into_iter().map(Scalar::as_f64).collect();
                let mut sorted = means.clone();
                sorted.sort_by(f64::total_cmp);
                let mut cuts = vec![x0, x1];
                if slope != T::zero() {
                    for pair in sorted.windows(2) {
                        let level = T::lit(0.5 * (pair[0] + pair[1]));
                        let x = (level - intercept) / slope;
                        if x > x0 && x < x1 {
                            cuts.push(x);
                        }
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                for c in cuts.windows(2) {
                    if c[1] <= c[0] {
                        continue;
                    }
                    let mid = T::half() * (c[0] + c[1]);
                    let j = nearest_label(&means, (intercept + slope * mid).as_f64());
                    let q = labels.distribution(j).prob_at_least(T::half());
                    parts.push(q * dist.interval_mass(c[0], c[1]));
                }
            }
        }
    }
    compensated_sum(parts)
}

/// Population values of the generalized per-bin estimators for an agent.
///
/// `p_hat` is the mixture mass of each bin and `g_hat` its mean score.
/// `r_hat` is the limit of the generalized estimator: phrase-level outcome
/// rates weighted by each phrase's bin mass. Outcomes depend on the latent
/// score only through the phrase, so this differs from `E[Y | S in bin]`
/// unless every phrase is a point mass.
pub fn true_bin_stats<T: Scalar>(spec: &AgentSpec<T>, grid: &BinGrid<T>) -> Result<Vec<BinStats<T>>> {
    spec.validate()?;
    let knots = spec.outcome_rule.knots()?;
    let rho: Vec<T> = spec
        .lexicon
        .distributions()
        .map(|d| expected_target(d, &knots, spec.label_lexicon.as_ref()))
        .collect();
    let mut bins = Vec::with_capacity(grid.count());
    for m in 0..grid.count() {
        let (lo, hi) = grid.bounds(m);
        let mut mass = Vec::new();
        let mut score = Vec::new();
        let mut outcome = Vec::new();
        for (k, d) in spec.lexicon.distributions().enumerate() {
            let w = spec.usage[k] * d.interval_mass(lo, hi);
            mass.push(w);
            score.push(spec.usage[k] * d.partial_expectation(lo, hi));
            outcome.push(w * rho[k]);
        }
        let p = compensated_sum(mass);
        let (r_hat, g_hat) = if p > T::zero() {
            (Some(compensated_sum(outcome) / p), Some(compensated_sum(score) / p))
        } else {
            (None, None)
        };
        bins.push(BinStats { r_hat, g_hat, p_hat: p });
    }
    Ok(bins)
}

/// Phrases `Beta(k + 1, n - k + 1)` for `k = 0..=n`, i.e. the Bernstein
/// basis of degree `n`. Used uniformly with calibrated outcomes, the binned
/// estimator's population ECE is `1 / (2 (n + 2))`.
pub fn bernstein_lexicon<T: Scalar>(n: usize) -> Result<CertaintyLexicon<T>> {
    let entries = (0..=n).map(|k| {
        (
            format!("b{k}"),
            ConfidenceDistribution::Beta {
                alpha: T::from_usize_lossy(k + 1),
                beta: T::from_usize_lossy(n - k + 1),
            },
        )
    });
    CertaintyLexicon::from_pairs(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{ece_from_bins, per_bin_estimates};

    fn three_phrase() -> CertaintyLexicon<f64> {
        CertaintyLexicon::from_pairs([
            ("Unlikely", ConfidenceDistribution::Beta { alpha: 2.0, beta: 6.0 }),
            ("Maybe", ConfidenceDistribution::Beta { alpha: 4.0, beta: 4.0 }),
            ("Likely", ConfidenceDistribution::Beta { alpha: 6.0, beta: 2.0 }),
        ])
        .unwrap()
    }

    #[test]
    fn knots_and_interpolation() {
        let k = OutcomeRule::<f64>::Biased { shift: -0.2 }.knots().unwrap();
        assert_eq!(interpolate(&k, 0.1), 0.0);
        assert!((interpolate(&k, 0.7) - 0.5).abs() < 1e-15);
        assert!((interpolate(&k, 1.0) - 0.8).abs() < 1e-15);
        let k = OutcomeRule::<f64>::Biased { shift: 0.3 }.knots().unwrap();
        assert!((interpolate(&k, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(interpolate(&k, 0.9), 1.0);
        assert!(OutcomeRule::Biased { shift: 1.5 }.knots().is_err());
        assert!(OutcomeRule::Custom { points: vec![(0.0, 0.2), (0.5, 0.9)] }.knots().is_err());
        let c = OutcomeRule::<f64>::Calibrated.knots().unwrap();
        assert_eq!(interpolate(&c, 0.37), 0.37);
    }

    #[test]
    fn generation_is_deterministic_and_respects_usage() {
        let spec = AgentSpec::new(three_phrase(), vec![1.0, 0.0, 0.0], OutcomeRule::Calibrated).unwrap();
        let a = generate(&spec, 5000, 3).unwrap();
        assert!(a.iter().all(|r| r.phrase == 0));
        assert_eq!(a, generate(&spec, 5000, 3).unwrap());
        assert_ne!(a, generate(&spec, 5000, 4).unwrap());
        // prefix stability across n
        assert_eq!(&a[..100], &generate(&spec, 100, 3).unwrap()[..]);
    }

    #[test]
    fn measured_ece_approaches_population_value() {
        let spec = AgentSpec::uniform(three_phrase(), OutcomeRule::Calibrated).unwrap();
        let recs = generate(&spec, 20_000, 11).unwrap();
        let grid = BinGrid::equal_width(100).unwrap();
        let bins = per_bin_estimates(&recs, &spec.lexicon, None, &grid).unwrap();
        let truth = ece_from_bins(&true_bin_stats(&spec, &grid).unwrap());
        assert!((ece_from_bins(&bins) - truth).abs() < 0.02);
    }

    #[test]
    fn overconfident_curve_sits_below_identity() {
        let spec = AgentSpec::uniform(three_phrase(), OutcomeRule::Biased { shift: -0.2 }).unwrap();
        let grid = BinGrid::equal_width(10).unwrap();
        let truth = true_bin_stats(&spec, &grid).unwrap();
        for b in &truth[3..7] {
            assert!(b.r_hat.unwrap() < b.g_hat.unwrap());
        }
    }

    #[test]
    fn delta_truth_is_exact() {
        let lex = CertaintyLexicon::<f64>::from_pairs([("Sure", ConfidenceDistribution::Delta { point: 0.85 })]).unwrap();
        let spec = AgentSpec::uniform(lex, OutcomeRule::Calibrated).unwrap();
        let truth = true_bin_stats(&spec, &BinGrid::equal_width(10).unwrap()).unwrap();
        assert_eq!(truth.iter().filter(|b| b.p_hat > 0.0).count(), 1);
        assert_eq!(truth[8].p_hat, 1.0);
        assert!((truth[8].r_hat.unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(truth[8].g_hat, Some(0.85));
    }

    #[test]
    fn truth_mass_and_mean_add_up() {
        let spec = AgentSpec::new(three_phrase(), vec![0.2, 0.5, 0.3], OutcomeRule::Biased { shift: 0.1 }).unwrap();
        let truth = true_bin_stats(&spec, &BinGrid::equal_width(17).unwrap()).unwrap();
        let mass: f64 = truth.iter().map(|b| b.p_hat).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let mean: f64 = truth.iter().map(|b| b.p_hat * b.g_hat.unwrap()).sum();
        let expect = 0.2 * 0.25 + 0.5 * 0.5 + 0.3 * 0.75;
        assert!((mean - expect).abs() < 1e-12);
    }

    #[test]
    fn bernstein_population_ece() {
        for n in [4usize, 20, 60] {
            let spec = AgentSpec::uniform(bernstein_lexicon::<f64>(n).unwrap(), OutcomeRule::Calibrated).unwrap();
            let truth = true_bin_stats(&spec, &BinGrid::equal_width(100).unwrap()).unwrap();
            let ece = ece_from_bins(&truth);
            assert!((ece - 0.5 / (n as f64 + 2.0)).abs() < 1e-9, "n={n}: {ece}");
        }
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = AgentSpec::uniform(three_phrase(), OutcomeRule::Custom { points: vec![(0.0, 0.1), (1.0, 0.9)] })
            .unwrap()
            .with_label_lexicon(three_phrase());
        let back = AgentSpec::<f64>::from_json_str(&spec.to_json_string().unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"lexicon":[{"phrase":"a","kind":"delta","point":0.5}],"usage":[0.4],"outcome_rule":{"kind":"calibrated"}}"#;
        assert!(AgentSpec::<f64>::from_json_str(bad).is_err());
    }
}
