use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::lexicon::CertaintyLexicon;
use crate::measure::{bins_from_rows, ece_from_bins, BinnedEstimator, MassMode, PhraseMasses};
use crate::records::PredictionRecord;
use crate::scalar::Scalar;

/// Transport cost between a source and a target phrase set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostMatrix<T: Scalar> {
    /// `K x L`, may be negative. Rows of unused source phrases are zero.
    pub values: Vec<Vec<T>>,
    /// Empirical source phrase frequencies `a`.
    pub source_weights: Vec<T>,
    /// Desired target usage `b`, when known.
    pub target_weights: Option<Vec<T>>,
    /// Source phrases with `a_k = 0`, left out of every solve.
    pub excluded: Vec<usize>,
    /// ECE of the unmodified calibration records.
    pub baseline_ece: T,
}

impl<T: Scalar> CostMatrix<T> {
    /// Wraps a raw matrix, e.g. for solving a transport problem directly.
    pub fn new(values: Vec<Vec<T>>, source_weights: Vec<T>) -> Result<Self> {
        let k = values.len();
        if k == 0 || values[0].is_empty() {
            return Err(Error::InvalidConfig("cost matrix is empty".into()));
        }
        let l = values[0].len();
        if values.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidConfig("cost matrix rows differ in length".into()));
        }
        if values.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("cost matrix has non-finite entries".into()));
        }
        check_simplex(&source_weights, k, "source weights")?;
        let excluded = (0..k).filter(|&i| source_weights[i] == T::zero()).collect();
        Ok(Self {
            values,
            source_weights,
            target_weights: None,
            excluded,
            baseline_ece: T::zero(),
        })
    }

    pub fn with_target_weights(mut self, b: Vec<T>) -> Result<Self> {
        check_simplex(&b, self.cols(), "target weights")?;
        self.target_weights = Some(b);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.source_weights[k] > T::zero()
    }
}

pub(crate) fn check_simplex<T: Scalar>(w: &[T], len: usize, what: &str) -> Result<()> {
    if w.len() != len {
        return Err(Error::InvalidConfig(format!("{what} have length {}, expected {len}", w.len())));
    }
    if w.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what} must be nonnegative")));
    }
    let total: T = w.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
        return Err(Error::InvalidConfig(format!("{what} sum to {total}, expected 1")));
    }
    Ok(())
}

/// Frequency of each phrase among the records.
pub fn source_weights<T: Scalar>(records: &[PredictionRecord], lexicon: &CertaintyLexicon<T>) -> Result<Vec<T>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0usize; lexicon.len()];
    for (i, r) in records.iter().enumerate() {
        if r.phrase >= lexicon.len() {
            return Err(Error::PhraseOutOfRange {
                index: i,
                phrase: r.phrase,
                size: lexicon.len(),
            });
        }
        counts[r.phrase] += 1;
    }
    let n = T::from_usize_lossy(records.len());
    Ok(counts.into_iter().map(|c| T::from_usize_lossy(c) / n).collect())
}

/// ECE-change cost matrix computed on the given (calibration) records.
pub fn cost_matrix<T: Scalar>(
    records: &[PredictionRecord],
    source: &CertaintyLexicon<T>,
    target: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
) -> Result<CostMatrix<T>> {
    cost_matrix_with(records, source, target, label_lexicon, grid, MassMode::Exact)
}

pub fn cost_matrix_with<T: Scalar>(
    records: &[PredictionRecord],
    source: &CertaintyLexicon<T>,
    target: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
    mode: MassMode,
) -> Result<CostMatrix<T>> {
    let est = BinnedEstimator::new(records, source, label_lexicon, grid, mode)?;
    let a = source_weights(records, source)?;
    let tally = est.tally_all();
    let m = grid.count();

    // Baseline and replaced ECE go through the same routine so that swapping
    // a phrase for an identical distribution reproduces the baseline bit for bit.
    let mut rows: Vec<&PhraseMasses<T>> = est.rows().iter().collect();
    let baseline = ece_from_bins(&bins_from_rows(&tally, &rows, m));
    let target_rows: Vec<PhraseMasses<T>> = target
        .distributions()
        .map(|d| PhraseMasses::new(d, grid, mode))
        .collect();

    let k_count = source.len();
    let mut values = vec![vec![T::zero(); target.len()]; k_count];
    for k in 0..k_count {
        if a[k] == T::zero() {
            continue;
        }
        let original = rows[k];
        for (l, row) in target_rows.iter().enumerate() {
            rows[k] = row;
            let replaced = ece_from_bins(&bins_from_rows(&tally, &rows, m));
            values[k][l] = (replaced - baseline) / a[k];
        }
        rows[k] = original;
    }
    let excluded = (0..k_count).filter(|&k| a[k] == T::zero()).collect();
    Ok(CostMatrix {
        values,
        source_weights: a,
        target_weights: None,
        excluded,
        baseline_ece: baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ConfidenceDistribution;

    fn lexicon() -> CertaintyLexicon<f64> {
        CertaintyLexicon::from_pairs([
            ("Unlikely", ConfidenceDistribution::Beta { alpha: 2.0, beta: 8.0 }),
            ("Maybe", ConfidenceDistribution::Beta { alpha: 5.0, beta: 5.0 }),
            ("Likely", ConfidenceDistribution::Beta { alpha: 8.0, beta: 2.0 }),
        ])
        .unwrap()
    }

    #[test]
    fn weights_are_frequencies() {
        let lex = lexicon();
        let recs: Vec<_> = (0..4).map(|i| PredictionRecord::hard(i.to_string(), 0, true)).collect();
        assert_eq!(source_weights(&recs, &lex).unwrap(), vec![1.0, 0.0, 0.0]);
        let recs: Vec<_> = (0..3).map(|i| PredictionRecord::hard(i.to_string(), i, true)).collect();
        let w = source_weights(&recs, &lex).unwrap();
        assert!(w.iter().all(|x| (*x - 1.0 / 3.0).abs() < 1e-15));
        assert!(matches!(source_weights::<f64>(&[], &lex), Err(Error::EmptyDataset)));
    }

    #[test]
    fn identical_lexicons_have_zero_diagonal() {
        let lex = lexicon();
        let recs: Vec<_> = (0..30)
            .map(|i| PredictionRecord::hard(i.to_string(), i % 3, i % 4 == 0))
            .collect();
        let grid = BinGrid::equal_width(20).unwrap();
        let c = cost_matrix(&recs, &lex, &lex, None, &grid).unwrap();
        for k in 0..3 {
            assert_eq!(c.values[k][k], 0.0);
        }
        assert!(c.excluded.is_empty());
    }

    #[test]
    fn single_phrase_cost_is_zero() {
        let lex = CertaintyLexicon::from_pairs([("Maybe", ConfidenceDistribution::Beta { alpha: 2.0, beta: 2.0 })]).unwrap();
        let recs = vec![PredictionRecord::hard("a", 0, true), PredictionRecord::hard("b", 0, false)];
        let c = cost_matrix(&recs, &lex, &lex, None, &BinGrid::equal_width(10).unwrap()).unwrap();
        assert_eq!(c.values, vec![vec![0.0]]);
    }

    #[test]
    fn unused_rows_are_excluded() {
        let lex = lexicon();
        let recs: Vec<_> = (0..10).map(|i| PredictionRecord::hard(i.to_string(), 2, i < 5)).collect();
        let c = cost_matrix(&recs, &lex, &lex, None, &BinGrid::equal_width(10).unwrap()).unwrap();
        assert_eq!(c.excluded, vec![0, 1]);
        assert!(c.values[0].iter().all(|v| *v == 0.0));
        // Likely used with a 50% hit rate: Maybe fits better, Unlikely worse than Maybe
        assert!(c.values[2][1] < 0.0);
        assert!(c.values[2][1] < c.values[2][0]);
    }

    #[test]
    fn raw_constructor_validates() {
        assert!(CostMatrix::new(vec![vec![0.0, 1.0]], vec![1.0]).is_ok());
        assert!(CostMatrix::new(vec![vec![0.0, 1.0]], vec![0.5]).is_err());
        assert!(CostMatrix::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
        assert!(CostMatrix::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).is_err());
        let c = CostMatrix::new(vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        assert!(c.clone().with_target_weights(vec![0.5, 0.5]).is_ok());
        assert!(c.with_target_weights(vec![0.5]).is_err());
    }
}
