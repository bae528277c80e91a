//! Scalar post-hoc calibration baselines: Platt scaling and histogram
//! binning, applied to the mean of each predicted phrase's distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::lexicon::CertaintyLexicon;
use crate::measure::{record_targets, scalar_ece};
use crate::records::PredictionRecord;
use crate::scalar::{compensated_sum, Scalar};

/// Scores are clamped to `[CLAMP, 1 - CLAMP]` before the logit.
pub const CLAMP: f64 = 1e-6;
/// Platt parameters beyond this magnitude count as diverged.
pub const PARAM_LIMIT: f64 = 100.0;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalarizedRecord<T: Scalar> {
    pub id: String,
    pub score: T,
    /// Hard label as 0/1, or `P(c >= 1/2)` of an uncertain label.
    pub target: T,
}

/// Replaces each phrase by its distribution mean.
pub fn scalarize<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
) -> Result<Vec<ScalarizedRecord<T>>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let targets = record_targets(records, label_lexicon)?;
    let means = lexicon.means();
    records
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (r, target))| {
            let score = *means.get(r.phrase).ok_or(Error::PhraseOutOfRange {
                index: i,
                phrase: r.phrase,
                size: lexicon.len(),
            })?;
            Ok(ScalarizedRecord {
                id: r.id.clone(),
                score,
                target,
            })
        })
        .collect()
}

/// Binned ECE of scalarized records.
pub fn ece_of<T: Scalar>(records: &[ScalarizedRecord<T>], grid: &BinGrid<T>) -> T {
    let scores: Vec<T> = records.iter().map(|r| r.score).collect();
    let targets: Vec<T> = records.iter().map(|r| r.target).collect();
    scalar_ece(&scores, &targets, grid)
}

fn logit<T: Scalar>(s: T) -> T {
    let c = T::lit(CLAMP);
    let s = s.max(c).min(T::one() - c);
    (s / (T::one() - s)).ln()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `sigmoid(slope * logit(s) + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PlattModel<T: Scalar> {
    pub slope: T,
    pub intercept: T,
    /// Set when the targets are separable and the fit ran off to the
    /// parameter limit.
    pub separable: bool,
}

impl<T: Scalar> PlattModel<T> {
    pub fn identity() -> Self {
        Self {
            slope: T::one(),
            intercept: T::zero(),
            separable: false,
        }
    }

    pub fn predict(&self, s: T) -> T {
        sigmoid(self.slope * logit(s) + self.intercept)
    }
}

fn log_loss<T: Scalar>(x: &[T], t: &[T], w: T, b: T) -> T {
    let n = T::from_usize_lossy(x.len());
    // log(1 + e^z) - t z, written to avoid overflow
    let terms = x.iter().zip(t).map(|(&x, &t)| {
        let z = w * x + b;
        let softplus = if z > T::zero() {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        softplus - t * z
    });
    compensated_sum(terms) / n
}

/// Hard labels that a threshold on the score splits perfectly (including
/// the single-class case) have no finite log-loss minimizer.
fn is_separable<T: Scalar>(x: &[T], t: &[T]) -> bool {
    if t.iter().any(|&v| v != T::zero() && v != T::one()) {
        return false;
    }
    let range = |label: T| {
        x.iter()
            .zip(t)
            .filter(|(_, &v)| v == label)
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (&x, _)| (lo.min(x), hi.max(x)))
    };
    let (neg_lo, neg_hi) = range(T::zero());
    let (pos_lo, pos_hi) = range(T::one());
    neg_lo == T::infinity() || pos_lo == T::infinity() || neg_hi < pos_lo || pos_hi < neg_lo
}

/// Fits Platt scaling by damped Newton iterations on the mean log-loss,
/// starting from the identity map.
pub fn fit_platt<T: Scalar>(records: &[ScalarizedRecord<T>]) -> Result<PlattModel<T>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x: Vec<T> = records.iter().map(|r| logit(r.score)).collect();
    let t: Vec<T> = records.iter().map(|r| r.target).collect();
    let n = T::from_usize_lossy(x.len());
    let limit = T::lit(PARAM_LIMIT);
    let (mut w, mut b) = (T::one(), T::zero());
    let mut loss = log_loss(&x, &t, w, b);
    let mut separable = is_separable(&x, &t);

    for _ in 0..MAX_NEWTON {
        let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for (&x, &t) in x.iter().zip(&t) {
            let p = sigmoid(w * x + b);
            let r = p - t;
            let v = p * (T::one() - p);
            gw += r * x;
            gb += r;
            hww += v * x * x;
            hwb += v * x;
            hbb += v;
        }
        let (gw, gb) = (gw / n, gb / n);
        if gw.abs().max(gb.abs()) < T::lit(1e-12).max(T::epsilon()) {
            break;
        }
        // small ridge keeps the system solvable when all scores coincide
        let ridge = T::lit(1e-10) + T::epsilon();
        let (hww, hwb, hbb) = (hww / n + ridge, hwb / n, hbb / n + ridge);
        let det = hww * hbb - hwb * hwb;
        let (mut dw, mut db) = if det > T::zero() && det.is_finite() {
            ((hbb * gw - hwb * gb) / det, (hww * gb - hwb * gw) / det)
        } else {
            (gw, gb)
        };

        let mut improved = false;
        for _ in 0..60 {
            let (nw, nb) = (w - dw, b - db);
            let next = log_loss(&x, &t, nw, nb);
            if next <= loss {
                w = nw;
                b = nb;
                improved = next < loss;
                loss = next;
                break;
            }
            dw *= T::half();
            db *= T::half();
        }
        if w.abs() > limit || b.abs() > limit {
            separable = true;
            break;
        }
        if !improved {
            break;
        }
    }
    Ok(PlattModel {
        slope: w.max(-limit).min(limit),
        intercept: b.max(-limit).min(limit),
        separable,
    })
}

/// Histogram binning: each bin's empirical positive rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinningModel<T: Scalar> {
    pub grid: BinGrid<T>,
    /// `None` for bins that saw no training score.
    pub per_bin_rate: Vec<Option<T>>,
}

impl<T: Scalar> BinningModel<T> {
    /// Empty bins pass the score through.
    pub fn predict(&self, s: T) -> T {
        self.per_bin_rate[self.grid.locate(s)].unwrap_or(s)
    }
}

pub fn fit_binning<T: Scalar>(records: &[ScalarizedRecord<T>], grid: &BinGrid<T>) -> Result<BinningModel<T>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = grid.count();
    let mut count = vec![0usize; m];
    let mut pos = vec![T::zero(); m];
    for r in records {
        let i = grid.locate(r.score);
        count[i] += 1;
        pos[i] += r.target;
    }
    let per_bin_rate = count
        .iter()
        .zip(pos)
        .map(|(&c, p)| (c > 0).then(|| p / T::from_usize_lossy(c)))
        .collect();
    Ok(BinningModel {
        grid: grid.clone(),
        per_bin_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", bound = "T: Scalar")]
pub enum BaselineModel<T: Scalar> {
    Platt(PlattModel<T>),
    Binning(BinningModel<T>),
}

impl<T: Scalar> BaselineModel<T> {
    pub fn predict(&self, s: T) -> T {
        match self {
            Self::Platt(m) => m.predict(s),
            Self::Binning(m) => m.predict(s),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("schema".into(), 1.into());
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(s)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("schema");
        }
        Ok(serde_json::from_value(v)?)
    }
}

/// Replaces scores by model output; ids and targets are kept.
pub fn apply_baseline<T: Scalar>(model: &BaselineModel<T>, records: &[ScalarizedRecord<T>]) -> Vec<ScalarizedRecord<T>> {
    records
        .iter()
        .map(|r| ScalarizedRecord {
            id: r.id.clone(),
            score: model.predict(r.score),
            target: r.target,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ConfidenceDistribution;

    fn rec(score: f64, target: f64) -> ScalarizedRecord<f64> {
        ScalarizedRecord {
            id: String::new(),
            score,
            target,
        }
    }

    #[test]
    fn scalarize_uses_means() {
        let lex = CertaintyLexicon::from_pairs([
            ("a", ConfidenceDistribution::Beta { alpha: 2.0, beta: 6.0 }),
            ("b", ConfidenceDistribution::Delta { point: 0.9 }),
        ])
        .unwrap();
        let recs = vec![PredictionRecord::hard("x", 0, true), PredictionRecord::hard("y", 1, false)];
        let s = scalarize(&recs, &lex, None).unwrap();
        assert_eq!(s[0].score, 0.25);
        assert_eq!(s[1].score, 0.9);
        assert_eq!((s[0].target, s[1].target), (1.0, 0.0));
    }

    #[test]
    fn identity_platt_is_identity_inside_clamp() {
        let m = PlattModel::<f64>::identity();
        for s in [0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((m.predict(s) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn all_positive_is_separable() {
        let recs: Vec<_> = (0..50).map(|i| rec(0.2 + 0.01 * i as f64, 1.0)).collect();
        let m = fit_platt(&recs).unwrap();
        assert!(m.separable);
        assert!(m.slope.is_finite() && m.intercept.is_finite());
    }

    #[test]
    fn perfectly_separated_scores_are_flagged() {
        let recs: Vec<_> = (0..40)
            .map(|i| {
                let s = 0.05 + 0.9 * i as f64 / 39.0;
                rec(s, if s > 0.5 { 1.0 } else { 0.0 })
            })
            .collect();
        assert!(fit_platt(&recs).unwrap().separable);
    }

    #[test]
    fn recovers_known_logistic_targets() {
        // soft targets generated by a known map are fitted exactly
        let recs: Vec<_> = (1..40)
            .map(|i| {
                let s = i as f64 / 40.0;
                let z = 0.6 * (s / (1.0 - s)).ln() - 0.3;
                rec(s, 1.0 / (1.0 + (-z).exp()))
            })
            .collect();
        let m = fit_platt(&recs).unwrap();
        assert!(!m.separable);
        assert!((m.slope - 0.6).abs() < 1e-8, "{m:?}");
        assert!((m.intercept + 0.3).abs() < 1e-8);
    }

    #[test]
    fn binning_rates_and_passthrough() {
        let grid = BinGrid::equal_width(4).unwrap();
        let recs = vec![rec(0.1, 1.0), rec(0.6, 0.0), rec(0.65, 1.0)];
        let m = fit_binning(&recs, &grid).unwrap();
        assert_eq!(m.per_bin_rate, vec![Some(1.0), None, Some(0.5), None]);
        assert_eq!(m.predict(0.3), 0.3);
        assert_eq!(m.predict(0.55), 0.5);
        assert!(fit_binning::<f64>(&[], &grid).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let grid = BinGrid::equal_width(3).unwrap();
        let m = BaselineModel::Binning(fit_binning(&[rec(0.1, 1.0)], &grid).unwrap());
        let s = m.to_json_string().unwrap();
        assert!(s.contains("\"schema\": 1"));
        assert_eq!(BaselineModel::from_json_str(&s).unwrap(), m);
        let p = BaselineModel::Platt(PlattModel { slope: 0.123456789, intercept: -1e-17, separable: false });
        assert_eq!(BaselineModel::<f64>::from_json_str(&p.to_json_string().unwrap()).unwrap(), p);
    }
}
