use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use serde::{Deserialize, Serialize};

use super::cost::CostMatrix;
use super::sinkhorn::TransportPlan;
use crate::error::{Error, Result};
use crate::lexicon::CertaintyLexicon;
use crate::records::PredictionRecord;
use crate::rng::{substream, Stream};
use crate::scalar::{compensated_sum, Scalar};

/// Relative slack under which two plan entries count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    #[default]
    Stochastic,
    Argmax,
}

/// Row-normalized transport plan: for each source phrase, a categorical
/// distribution over target phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationPolicy<T: Scalar> {
    pub source_phrases: Vec<String>,
    pub target_phrases: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub mode: PolicyMode,
    /// Source phrases absent from the calibration data. Their rows send
    /// everything to the target with the nearest mean.
    pub extrapolated: Vec<usize>,
    source_means: Vec<T>,
    target_means: Vec<T>,
}

impl<T: Scalar> CalibrationPolicy<T> {
    pub fn identity(lexicon: &CertaintyLexicon<T>, mode: PolicyMode) -> Self {
        let k = lexicon.len();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        Self {
            source_phrases: lexicon.phrases(),
            target_phrases: lexicon.phrases(),
            rows,
            mode,
            extrapolated: Vec::new(),
            source_means: lexicon.means(),
            target_means: lexicon.means(),
        }
    }

    /// Target chosen for source phrase `k` in argmax mode. Ties go to the
    /// target whose mean is closest to the source mean, then the lowest index.
    pub fn argmax_target(&self, k: usize) -> usize {
        let row = &self.rows[k];
        let best = row.iter().copied().fold(T::neg_infinity(), T::max);
        let slack = best * T::lit(TIE_TOLERANCE);
        let src = self.source_means[k];
        let mut choice: Option<(usize, T)> = None;
        for (l, &p) in row.iter().enumerate() {
            if best - p > slack {
                continue;
            }
            let dist = (self.target_means[l] - src).abs();
            match choice {
                Some((_, d)) if dist >= d - d.abs() * T::lit(TIE_TOLERANCE) => {}
                _ => choice = Some((l, dist)),
            }
        }
        choice.map_or(0, |(l, _)| l)
    }

    /// One line per nonnegligible row entry, e.g.
    /// `30% of "Likely" mapped to "Maybe"`.
    pub fn summary(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            let src = &self.source_phrases[k];
            if self.extrapolated.contains(&k) {
                let l = self.argmax_target(k);
                lines.push(format!(
                    "\"{src}\" unused in calibration data; extrapolated to nearest mean \"{}\"",
                    self.target_phrases[l]
                ));
                continue;
            }
            let shown: Vec<usize> = match self.mode {
                PolicyMode::Argmax => vec![self.argmax_target(k)],
                PolicyMode::Stochastic => (0..row.len()).filter(|&l| row[l].as_f64() >= 0.005).collect(),
            };
            for l in shown {
                let pct = match self.mode {
                    PolicyMode::Argmax => "100".to_string(),
                    PolicyMode::Stochastic => percent(row[l].as_f64()),
                };
                let dst = &self.target_phrases[l];
                if dst == src {
                    lines.push(format!("{pct}% of \"{src}\" kept"));
                } else {
                    lines.push(format!("{pct}% of \"{src}\" mapped to \"{dst}\""));
                }
            }
        }
        lines
    }
}

fn percent(share: f64) -> String {
    let s = format!("{:.1}", share * 100.0);
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// Row-normalizes a plan into a policy.
pub fn policy_from_plan<T: Scalar>(
    plan: &TransportPlan<T>,
    cost: &CostMatrix<T>,
    source: &CertaintyLexicon<T>,
    target: &CertaintyLexicon<T>,
    mode: PolicyMode,
) -> Result<CalibrationPolicy<T>> {
    let (k_n, l_n) = (source.len(), target.len());
    if plan.values.len() != k_n || plan.values.iter().any(|r| r.len() != l_n) {
        return Err(Error::InvalidConfig(format!(
            "plan shape does not match lexicons ({k_n} x {l_n})"
        )));
    }
    let source_means = source.means();
    let target_means = target.means();
    let mut rows = Vec::with_capacity(k_n);
    let mut extrapolated = Vec::new();
    for k in 0..k_n {
        if !cost.is_active(k) {
            let nearest = (0..l_n)
                .min_by(|&x, &y| {
                    let dx = (target_means[x] - source_means[k]).abs();
                    let dy = (target_means[y] - source_means[k]).abs();
                    dx.partial_cmp(&dy).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            rows.push((0..l_n).map(|l| if l == nearest { T::one() } else { T::zero() }).collect());
            extrapolated.push(k);
            continue;
        }
        let row = &plan.values[k];
        let total = compensated_sum(row.iter().copied());
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::EmptyRow(source.phrase(k).to_string()));
        }
        rows.push(row.iter().map(|&x| x / total).collect());
    }
    Ok(CalibrationPolicy {
        source_phrases: source.phrases(),
        target_phrases: target.phrases(),
        rows,
        mode,
        extrapolated,
        source_means,
        target_means,
    })
}

/// Rewrites each record's phrase through the policy. Stochastic rows are
/// sampled independently per record from a seeded stream.
pub fn apply_policy<T: Scalar>(
    records: &[PredictionRecord],
    policy: &CalibrationPolicy<T>,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    for (index, r) in records.iter().enumerate() {
        if r.phrase >= policy.rows.len() {
            return Err(Error::UncoveredPhrase { index, phrase: r.phrase });
        }
    }
    let mut out = records.to_vec();
    match policy.mode {
        PolicyMode::Argmax => {
            let targets: Vec<usize> = (0..policy.rows.len()).map(|k| policy.argmax_target(k)).collect();
            for r in &mut out {
                r.phrase = targets[r.phrase];
            }
        }
        PolicyMode::Stochastic => {
            let samplers = policy
                .rows
                .iter()
                .map(|row| WeightedIndex::new(row.iter().map(|p| p.as_f64().max(0.0))))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidConfig(format!("policy row is not a distribution: {e}")))?;
            let mut rng = substream(seed, Stream::Policy, 0);
            for r in &mut out {
                r.phrase = samplers[r.phrase].sample(&mut rng);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ConfidenceDistribution;
    use crate::ot::{OtConfig, TransportPlan};

    fn lex(means: &[(&str, f64, f64)]) -> CertaintyLexicon<f64> {
        CertaintyLexicon::from_pairs(
            means
                .iter()
                .map(|&(p, a, b)| (p, ConfidenceDistribution::Beta { alpha: a, beta: b })),
        )
        .unwrap()
    }

    fn plan(values: Vec<Vec<f64>>) -> TransportPlan<f64> {
        TransportPlan {
            values,
            converged: true,
            iterations: 1,
            objective: 0.0,
            trace: vec![],
        }
    }

    #[test]
    fn split_row_summary() {
        let l = lex(&[("Likely", 8.0, 2.0), ("Maybe", 5.0, 5.0)]);
        let cost = CostMatrix::new(vec![vec![0.0; 2]; 2], vec![0.6, 0.4]).unwrap();
        let p = plan(vec![vec![0.6 * 0.7, 0.6 * 0.3], vec![0.0, 0.4]]);
        let pol = policy_from_plan(&p, &cost, &l, &l, PolicyMode::Stochastic).unwrap();
        assert!((pol.rows[0][0] - 0.7).abs() < 1e-12);
        assert!((pol.rows[0][1] - 0.3).abs() < 1e-12);
        let s = pol.summary();
        assert!(s.contains(&"30% of \"Likely\" mapped to \"Maybe\"".to_string()), "{s:?}");
        assert!(s.contains(&"70% of \"Likely\" kept".to_string()));
    }

    #[test]
    fn argmax_tie_prefers_nearest_mean_then_index() {
        let l = lex(&[("A", 3.0, 7.0), ("B", 7.0, 3.0), ("C", 5.0, 5.0)]);
        let cost = CostMatrix::new(vec![vec![0.0; 3]; 3], vec![1.0 / 3.0; 3]).unwrap();
        let p = plan(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.5, 0.0],
        ]);
        let pol = policy_from_plan(&p, &cost, &l, &l, PolicyMode::Argmax).unwrap();
        assert_eq!(pol.argmax_target(0), 0);
        assert_eq!(pol.argmax_target(1), 1);
        // C has mean 0.5, A and B are equidistant
        assert_eq!(pol.argmax_target(2), 0);
    }

    #[test]
    fn empty_row_is_an_error() {
        let l = lex(&[("A", 3.0, 7.0), ("B", 7.0, 3.0)]);
        let cost = CostMatrix::new(vec![vec![0.0; 2]; 2], vec![0.5, 0.5]).unwrap();
        let p = plan(vec![vec![0.5, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            policy_from_plan(&p, &cost, &l, &l, PolicyMode::Stochastic),
            Err(Error::EmptyRow(s)) if s == "B"
        ));
    }

    #[test]
    fn unused_rows_are_extrapolated() {
        let l = lex(&[("A", 3.0, 7.0), ("B", 7.0, 3.0)]);
        let t = lex(&[("X", 2.0, 8.0), ("Y", 8.0, 2.0)]);
        let cost = CostMatrix::new(vec![vec![0.0; 2]; 2], vec![1.0, 0.0]).unwrap();
        let p = crate::ot::solve_balanced(&cost, &[0.5, 0.5], &OtConfig::default()).unwrap();
        let pol = policy_from_plan(&p, &cost, &l, &t, PolicyMode::Stochastic).unwrap();
        assert_eq!(pol.extrapolated, vec![1]);
        assert_eq!(pol.rows[1], vec![0.0, 1.0]);
        for row in &pol.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_and_deterministic_application() {
        let l = lex(&[("A", 3.0, 7.0), ("B", 7.0, 3.0)]);
        let recs: Vec<_> = (0..20).map(|i| PredictionRecord::hard(i.to_string(), i % 2, i % 3 == 0)).collect();
        let id = CalibrationPolicy::identity(&l, PolicyMode::Stochastic);
        assert_eq!(apply_policy(&recs, &id, 9).unwrap(), recs);

        let mut swap = id.clone();
        swap.rows = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let out = apply_policy(&recs, &swap, 9).unwrap();
        assert!(out.iter().all(|r| r.phrase == 1));
        assert!(out.iter().zip(&recs).all(|(a, b)| a.target == b.target && a.id == b.id));
    }

    #[test]
    fn stochastic_split_matches_row() {
        let l = lex(&[("A", 3.0, 7.0), ("B", 7.0, 3.0)]);
        let mut pol = CalibrationPolicy::identity(&l, PolicyMode::Stochastic);
        pol.rows[0] = vec![0.3, 0.7];
        let recs: Vec<_> = (0..10_000).map(|i| PredictionRecord::hard(i.to_string(), 0, true)).collect();
        let out = apply_policy(&recs, &pol, 42).unwrap();
        let share = out.iter().filter(|r| r.phrase == 0).count() as f64 / 10_000.0;
        assert!((share - 0.3).abs() < 0.02, "{share}");
        assert_eq!(out, apply_policy(&recs, &pol, 42).unwrap());
    }

    #[test]
    fn uncovered_phrase() {
        let l = lex(&[("A", 3.0, 7.0)]);
        let pol = CalibrationPolicy::identity(&l, PolicyMode::Argmax);
        let recs = vec![PredictionRecord::hard("x", 0, true), PredictionRecord::hard("y", 3, true)];
        assert!(matches!(
            apply_policy(&recs, &pol, 0),
            Err(Error::UncoveredPhrase { index: 1, phrase: 3 })
        ));
    }
}
