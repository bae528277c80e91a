//! Binned and continuous calibration estimators for phrase-valued
//! predictions, bootstrap reporting, and sampled Brier score / accuracy.
//!
//! Each record contributes to every bin with weight `P(S in I_m | phrase)`.
//! Records sharing a phrase share those weights, so the estimators reduce to
//! per-phrase tallies (record count and summed target) combined with a
//! `K x M` table of interval masses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{percentile_interval, summarize, Estimate, Interval};
use crate::distribution::ConfidenceDistribution;
use crate::error::{Error, Result};
use crate::grid::BinGrid;
use crate::lexicon::CertaintyLexicon;
use crate::records::{PredictionRecord, Target};
use crate::rng::{substream, Stream};
use crate::scalar::{compensated_sum, Scalar};

/// Number of equal-width bins in the default evaluation protocol.
pub const DEFAULT_BINS: usize = 100;
/// Number of bootstrap resamples in the default evaluation protocol.
pub const DEFAULT_RESAMPLES: usize = 100;

/// How per-bin masses of beta phrases are evaluated. Point masses are always
/// placed exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    /// Incomplete-beta differences.
    #[default]
    Exact,
    /// `width * pdf(midpoint)` in every bin.
    Midpoint,
    /// Midpoint rule, exact in the first and last bins.
    MidpointExactExtremes,
}

/// Per-bin estimates. `r_hat` and `g_hat` are `None` for bins without mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinStats<T: Scalar> {
    pub r_hat: Option<T>,
    pub g_hat: Option<T>,
    pub p_hat: T,
}

/// `P(S in I_m)` and `E[S 1{S in I_m}]` of one distribution over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseMasses<T> {
    pub mass: Vec<T>,
    pub partial: Vec<T>,
}

impl<T: Scalar> PhraseMasses<T> {
    pub fn new(dist: &ConfidenceDistribution<T>, grid: &BinGrid<T>, mode: MassMode) -> Self {
        let m_count = grid.count();
        let mut mass = Vec::with_capacity(m_count);
        let mut partial = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let (lo, hi) = grid.bounds(m);
            let exact = match mode {
                MassMode::Exact => true,
                MassMode::Midpoint => false,
                MassMode::MidpointExactExtremes => m == 0 || m + 1 == m_count,
            };
            if exact || dist.is_delta() {
                mass.push(dist.interval_mass(lo, hi));
                partial.push(dist.partial_expectation(lo, hi));
            } else {
                let mid = grid.midpoint(m);
                let w = grid.width(m) * dist.pdf(mid).expect("beta density");
                mass.push(w);
                partial.push(mid * w);
            }
        }
        Self { mass, partial }
    }
}

/// Per-phrase sufficient statistics of a (re)sampled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTally<T> {
    pub count: Vec<T>,
    pub target_sum: Vec<T>,
    pub n: usize,
}

/// Positive-outcome weight of a record: the hard label, or `P(c >= 1/2)` of
/// its label phrase.
pub fn record_targets<T: Scalar>(
    records: &[PredictionRecord],
    label_lexicon: Option<&CertaintyLexicon<T>>,
) -> Result<Vec<T>> {
    let any_hard = records.iter().any(|r| matches!(r.target, Target::Hard(_)));
    let any_soft = records.iter().any(|r| matches!(r.target, Target::Phrase(_)));
    if any_soft && label_lexicon.is_none() {
        return Err(if any_hard {
            Error::MixedLabelModes
        } else {
            Error::MissingLabelLexicon
        });
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match r.target {
            Target::Hard(y) => Ok(if y { T::one() } else { T::zero() }),
            Target::Phrase(j) => {
                let labels = label_lexicon.expect("checked above");
                if j >= labels.len() {
                    return Err(Error::PhraseOutOfRange {
                        index: i,
                        phrase: j,
                        size: labels.len(),
                    });
                }
                Ok(labels.distribution(j).prob_at_least(T::half()))
            }
        })
        .collect()
}

fn check_phrases<T: Scalar>(records: &[PredictionRecord], lexicon: &CertaintyLexicon<T>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, r) in records.iter().enumerate() {
        if r.phrase >= lexicon.len() {
            return Err(Error::PhraseOutOfRange {
                index: i,
                phrase: r.phrase,
                size: lexicon.len(),
            });
        }
    }
    Ok(())
}

/// Dataset bound to a lexicon and grid, ready for repeated estimation.
#[derive(Debug, Clone)]
pub struct BinnedEstimator<T: Scalar> {
    grid: BinGrid<T>,
    mode: MassMode,
    rows: Vec<PhraseMasses<T>>,
    phrases: Vec<usize>,
    targets: Vec<T>,
}

impl<T: Scalar> BinnedEstimator<T> {
    pub fn new(
        records: &[PredictionRecord],
        lexicon: &CertaintyLexicon<T>,
        label_lexicon: Option<&CertaintyLexicon<T>>,
        grid: &BinGrid<T>,
        mode: MassMode,
    ) -> Result<Self> {
        check_phrases(records, lexicon)?;
        let targets = record_targets(records, label_lexicon)?;
        let rows = lexicon
            .distributions()
            .map(|d| PhraseMasses::new(d, grid, mode))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            mode,
            rows,
            phrases: records.iter().map(|r| r.phrase).collect(),
            targets,
        })
    }

    pub fn grid(&self) -> &BinGrid<T> {
        &self.grid
    }

    pub fn mode(&self) -> MassMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn rows(&self) -> &[PhraseMasses<T>] {
        &self.rows
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn phrases(&self) -> &[usize] {
        &self.phrases
    }

    pub fn tally_all(&self) -> PhraseTally<T> {
        self.tally(0..self.len())
    }

    /// Tallies the records at `indices` (repeats allowed).
    pub fn tally(&self, indices: impl IntoIterator<Item = usize>) -> PhraseTally<T> {
        let k = self.rows.len();
        let mut count = vec![0usize; k];
        let mut target_sum = vec![T::zero(); k];
        let mut n = 0;
        for i in indices {
            let p = self.phrases[i];
            count[p] += 1;
            target_sum[p] += self.targets[i];
            n += 1;
        }
        PhraseTally {
            count: count.into_iter().map(T::from_usize_lossy).collect(),
            target_sum,
            n,
        }
    }

    pub fn bins(&self, tally: &PhraseTally<T>) -> Vec<BinStats<T>> {
        let rows: Vec<&PhraseMasses<T>> = self.rows.iter().collect();
        bins_from_rows(tally, &rows, self.grid.count())
    }
}

/// Combines phrase tallies with one mass row per phrase. `rows[k]` may be a
/// different distribution than the lexicon's phrase `k`, which is how phrase
/// replacement is evaluated.
pub fn bins_from_rows<T: Scalar>(
    tally: &PhraseTally<T>,
    rows: &[&PhraseMasses<T>],
    bin_count: usize,
) -> Vec<BinStats<T>> {
    let n = T::from_usize_lossy(tally.n);
    (0..bin_count)
        .map(|m| {
            let mut weight = T::zero();
            let mut positive = T::zero();
            let mut score = T::zero();
            for (k, row) in rows.iter().enumerate() {
                let c = tally.count[k];
                if c == T::zero() {
                    continue;
                }
                let w = row.mass[m];
                weight += c * w;
                positive += tally.target_sum[k] * w;
                score += c * row.partial[m];
            }
            if weight > T::zero() {
                BinStats {
                    r_hat: Some(positive / weight),
                    g_hat: Some(score / weight),
                    p_hat: weight / n,
                }
            } else {
                BinStats {
                    r_hat: None,
                    g_hat: None,
                    p_hat: T::zero(),
                }
            }
        })
        .collect()
}

/// Generalized per-bin estimates `(r_hat, g_hat, p_hat)` with exact masses.
pub fn per_bin_estimates<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
) -> Result<Vec<BinStats<T>>> {
    per_bin_estimates_with(records, lexicon, label_lexicon, grid, MassMode::Exact)
}

pub fn per_bin_estimates_with<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
    mode: MassMode,
) -> Result<Vec<BinStats<T>>> {
    let est = BinnedEstimator::new(records, lexicon, label_lexicon, grid, mode)?;
    Ok(est.bins(&est.tally_all()))
}

/// `sum_m p_hat |r_hat - g_hat|` over bins with mass.
pub fn ece_from_bins<T: Scalar>(bins: &[BinStats<T>]) -> T {
    compensated_sum(bins.iter().filter_map(bin_error))
}

fn bin_error<T: Scalar>(b: &BinStats<T>) -> Option<T> {
    match (b.r_hat, b.g_hat) {
        (Some(r), Some(g)) if b.p_hat > T::zero() => Some(b.p_hat * (r - g).abs()),
        _ => None,
    }
}

/// ECE over the interior bins, renormalized by their mass. The first and
/// last bins hold fully confident predictions and are left out.
pub fn ece_star_from_bins<T: Scalar>(bins: &[BinStats<T>], grid: &BinGrid<T>) -> Result<T> {
    let m = grid.count();
    if m < 3 || bins.len() != m {
        return Err(Error::GridTooCoarse(m));
    }
    let interior = &bins[1..m - 1];
    let retained = compensated_sum(interior.iter().map(|b| b.p_hat));
    if retained <= T::zero() {
        return Ok(T::zero());
    }
    Ok(ece_from_bins(interior) / retained)
}

/// One point of the continuous reliability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CurvePoint<T: Scalar> {
    pub s: T,
    pub r_hat: Option<T>,
    pub f_hat: T,
}

/// Nadaraya–Watson curve `r_hat(s)` and score density `f_hat(s)`, each record
/// acting as a kernel given by its phrase density.
pub fn continuous_curve<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    eval_points: &[T],
) -> Result<Vec<CurvePoint<T>>> {
    check_phrases(records, lexicon)?;
    let targets = record_targets(records, label_lexicon)?;
    let k = lexicon.len();
    let mut count = vec![T::zero(); k];
    let mut positive = vec![T::zero(); k];
    for (r, t) in records.iter().zip(&targets) {
        count[r.phrase] += T::one();
        positive[r.phrase] += *t;
    }
    for (i, c) in count.iter().enumerate() {
        if *c > T::zero() && lexicon.distribution(i).is_delta() {
            return Err(Error::DeltaInContinuousPath(lexicon.phrase(i).to_string()));
        }
    }
    let n = T::from_usize_lossy(records.len());
    let used: Vec<usize> = (0..k).filter(|&i| count[i] > T::zero()).collect();
    Ok(eval_points
        .iter()
        .map(|&s| {
            let dens: Vec<T> = used
                .iter()
                .map(|&i| lexicon.distribution(i).pdf(s).expect("beta density"))
                .collect();
            // Where some densities blow up, the ratio is their limit.
            let any_inf = dens.iter().any(|d| d.is_infinite());
            let mut weight = T::zero();
            let mut pos = T::zero();
            for (&i, &d) in used.iter().zip(&dens) {
                let d = if any_inf {
                    if d.is_infinite() {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    d
                };
                weight += count[i] * d;
                pos += positive[i] * d;
            }
            let f_hat = if any_inf { T::infinity() } else { weight / n };
            CurvePoint {
                s,
                r_hat: (weight > T::zero()).then(|| pos / weight),
                f_hat,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

/// Measurement of one dataset: point estimates plus bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReliabilityReport<T: Scalar> {
    pub grid: BinGrid<T>,
    pub bins: Vec<BinStats<T>>,
    /// Bootstrap interval of `r_hat` per bin; `None` where the bin is empty.
    pub r_hat_ci: Vec<Option<Interval<T>>>,
    pub ece: Estimate<T>,
    pub ece_star: Estimate<T>,
    pub n_records: usize,
    pub resamples: usize,
    pub seed: u64,
    pub mass_mode: MassMode,
}

impl<T: Scalar> ReliabilityReport<T> {
    /// Score density `p_hat / width` per bin.
    pub fn density(&self) -> Vec<T> {
        self.bins
            .iter()
            .enumerate()
            .map(|(m, b)| b.p_hat / self.grid.width(m))
            .collect()
    }
}

pub fn measure<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
    bootstrap: BootstrapConfig,
) -> Result<ReliabilityReport<T>> {
    measure_with(records, lexicon, label_lexicon, grid, bootstrap, MassMode::Exact)
}

pub fn measure_with<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    grid: &BinGrid<T>,
    bootstrap: BootstrapConfig,
    mode: MassMode,
) -> Result<ReliabilityReport<T>> {
    if bootstrap.resamples == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one resample".into()));
    }
    if grid.count() < 3 {
        return Err(Error::GridTooCoarse(grid.count()));
    }
    let est = BinnedEstimator::new(records, lexicon, label_lexicon, grid, mode)?;
    let bins = est.bins(&est.tally_all());
    let ece = ece_from_bins(&bins);
    let ece_star = ece_star_from_bins(&bins, grid)?;

    let n = est.len();
    let m_count = grid.count();
    let mut ece_samples = Vec::with_capacity(bootstrap.resamples);
    let mut star_samples = Vec::with_capacity(bootstrap.resamples);
    let mut r_samples: Vec<Vec<T>> = vec![Vec::with_capacity(bootstrap.resamples); m_count];
    for b in 0..bootstrap.resamples {
        let mut rng = substream(bootstrap.seed, Stream::Bootstrap, b as u64);
        let tally = est.tally((0..n).map(|_| rng.random_range(0..n)));
        let rb = est.bins(&tally);
        ece_samples.push(ece_from_bins(&rb));
        star_samples.push(ece_star_from_bins(&rb, grid)?);
        for (m, stats) in rb.iter().enumerate() {
            if let Some(r) = stats.r_hat {
                r_samples[m].push(r);
            }
        }
    }
    let r_hat_ci = bins
        .iter()
        .zip(&r_samples)
        .map(|(b, samples)| b.r_hat.map(|r| percentile_interval(samples, r)))
        .collect();

    Ok(ReliabilityReport {
        grid: grid.clone(),
        bins,
        r_hat_ci,
        ece: summarize(&ece_samples, ece),
        ece_star: summarize(&star_samples, ece_star),
        n_records: n,
        resamples: bootstrap.resamples,
        seed: bootstrap.seed,
        mass_mode: mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub resamples: usize,
    pub draws_per_record: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            draws_per_record: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoreSummary<T: Scalar> {
    pub brier: Estimate<T>,
    pub accuracy: Estimate<T>,
}

/// Brier score and accuracy from scores drawn from the predicted phrase
/// distributions and labels drawn from label phrases (hard labels are used
/// as is). Point values are means over resamples.
pub fn brier_and_accuracy<T: Scalar>(
    records: &[PredictionRecord],
    lexicon: &CertaintyLexicon<T>,
    label_lexicon: Option<&CertaintyLexicon<T>>,
    sampling: SamplingConfig,
) -> Result<ScoreSummary<T>> {
    check_phrases(records, lexicon)?;
    record_targets(records, label_lexicon)?;
    if sampling.resamples == 0 || sampling.draws_per_record == 0 {
        return Err(Error::InvalidConfig(
            "sampling needs at least one resample and one draw per record".into(),
        ));
    }
    let n = records.len();
    let mut briers = Vec::with_capacity(sampling.resamples);
    let mut accs = Vec::with_capacity(sampling.resamples);
    for b in 0..sampling.resamples {
        let mut rng = substream(sampling.seed, Stream::ScoreSampling, b as u64);
        let mut sq = 0.0f64;
        let mut hits = 0usize;
        let mut total = 0usize;
        for _ in 0..n {
            let r = &records[rng.random_range(0..n)];
            let pred = lexicon.distribution(r.phrase);
            for _ in 0..sampling.draws_per_record {
                let s = pred.sample(&mut rng);
                let y = match r.target {
                    Target::Hard(y) => y,
                    Target::Phrase(j) => {
                        let labels = label_lexicon.expect("validated");
                        labels.distribution(j).sample(&mut rng) >= 0.5
                    }
                };
                let yf = if y { 1.0 } else { 0.0 };
                sq += (s - yf) * (s - yf);
                hits += usize::from((s >= 0.5) == y);
                total += 1;
            }
        }
        briers.push(T::lit(sq / total as f64));
        accs.push(T::lit(hits as f64 / total as f64));
    }
    let mean = |xs: &[T]| xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len());
    Ok(ScoreSummary {
        brier: summarize(&briers, mean(&briers)),
        accuracy: summarize(&accs, mean(&accs)),
    })
}

/// Classic histogram estimates for scalar scores: each score belongs to
/// exactly one bin.
pub fn classic_bin_estimates<T: Scalar>(scores: &[T], targets: &[T], grid: &BinGrid<T>) -> Vec<BinStats<T>> {
    assert_eq!(scores.len(), targets.len(), "scores and targets differ in length");
    let m_count = grid.count();
    let mut count = vec![0usize; m_count];
    let mut pos = vec![T::zero(); m_count];
    let mut score = vec![T::zero(); m_count];
    for (&s, &t) in scores.iter().zip(targets) {
        let m = grid.locate(s);
        count[m] += 1;
        pos[m] += t;
        score[m] += s;
    }
    let n = T::from_usize_lossy(scores.len());
    (0..m_count)
        .map(|m| {
            if count[m] == 0 {
                BinStats {
                    r_hat: None,
                    g_hat: None,
                    p_hat: T::zero(),
                }
            } else {
                let c = T::from_usize_lossy(count[m]);
                BinStats {
                    r_hat: Some(pos[m] / c),
                    g_hat: Some(score[m] / c),
                    p_hat: c / n,
                }
            }
        })
        .collect()
}

/// Binned ECE of scalar scores.
pub fn scalar_ece<T: Scalar>(scores: &[T], targets: &[T], grid: &BinGrid<T>) -> T {
    ece_from_bins(&classic_bin_estimates(scores, targets, grid))
}
