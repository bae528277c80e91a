//! Ordered phrase sets and their file formats.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distribution::{fit_method_of_moments, ConfidenceDistribution, SurveyStats};
use crate::error::{Error, Result, RowErrors};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LexiconEntry<T> {
    pub phrase: String,
    #[serde(flatten)]
    pub distribution: ConfidenceDistribution<T>,
}

/// Certainty phrases in a fixed order; the position is the phrase index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LexiconEntry<T>>", into = "Vec<LexiconEntry<T>>")]
#[serde(bound = "T: Scalar")]
pub struct CertaintyLexicon<T: Scalar> {
    entries: Vec<LexiconEntry<T>>,
}

impl<T: Scalar> CertaintyLexicon<T> {
    pub fn new(entries: Vec<LexiconEntry<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLexicon("lexicon has no phrases".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            e.distribution
                .validate()
                .map_err(|err| Error::InvalidLexicon(format!("phrase {:?}: {err}", e.phrase)))?;
            if entries[..i].iter().any(|prev| prev.phrase == e.phrase) {
                return Err(Error::InvalidLexicon(format!("duplicate phrase {:?}", e.phrase)));
            }
        }
        Ok(Self { entries })
    }

    /// Builds a lexicon from `(phrase, distribution)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, ConfidenceDistribution<T>)>,
    ) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(phrase, distribution)| LexiconEntry {
                    phrase: phrase.into(),
                    distribution,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexiconEntry<T>] {
        &self.entries
    }

    pub fn index_of(&self, phrase: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.phrase == phrase)
    }

    pub fn phrase(&self, index: usize) -> &str {
        &self.entries[index].phrase
    }

    pub fn distribution(&self, index: usize) -> &ConfidenceDistribution<T> {
        &self.entries[index].distribution
    }

    pub fn distributions(&self) -> impl Iterator<Item = &ConfidenceDistribution<T>> + '_ {
        self.entries.iter().map(|e| &e.distribution)
    }

    pub fn phrases(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.phrase.clone()).collect()
    }

    pub fn means(&self) -> Vec<T> {
        self.distributions().map(|d| d.mean()).collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
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

impl<T: Scalar> TryFrom<Vec<LexiconEntry<T>>> for CertaintyLexicon<T> {
    type Error = Error;

    fn try_from(entries: Vec<LexiconEntry<T>>) -> Result<Self> {
        Self::new(entries)
    }
}

impl<T: Scalar> From<CertaintyLexicon<T>> for Vec<LexiconEntry<T>> {
    fn from(lex: CertaintyLexicon<T>) -> Self {
        lex.entries
    }
}

#[derive(Debug, Deserialize)]
struct SurveyRow {
    phrase: String,
    mean: f64,
    variance: f64,
}

/// Reads a `phrase,mean,variance` CSV. Line numbers in diagnostics count the
/// header as line 1.
pub fn read_survey<T: Scalar, R: Read>(reader: R) -> Result<Vec<SurveyStats<T>>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let expected = ["phrase", "mean", "variance"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidLexicon(format!(
            "survey header must be `phrase,mean,variance`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut errors = RowErrors::default();
    for (i, rec) in csv.deserialize::<SurveyRow>().enumerate() {
        let line = i + 2;
        match rec {
            Ok(r) => rows.push(SurveyStats {
                phrase: r.phrase,
                mean: T::lit(r.mean),
                variance: T::lit(r.variance),
            }),
            Err(e) => errors.push(line, e.to_string()),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

/// Lexicon fitted from survey moments, with the phrases that collapsed to
/// point masses.
#[derive(Debug, Clone)]
pub struct FittedLexicon<T: Scalar> {
    pub lexicon: CertaintyLexicon<T>,
    pub degenerate: Vec<String>,
}

/// Fits every survey row; all infeasible rows are reported together.
pub fn fit_lexicon<T: Scalar>(stats: &[SurveyStats<T>]) -> Result<FittedLexicon<T>> {
    let mut entries = Vec::with_capacity(stats.len());
    let mut degenerate = Vec::new();
    let mut errors = RowErrors::default();
    for (i, row) in stats.iter().enumerate() {
        match fit_method_of_moments(row) {
            Ok(fit) => {
                if fit.degenerate {
                    degenerate.push(row.phrase.clone());
                }
                entries.push(LexiconEntry {
                    phrase: row.phrase.clone(),
                    distribution: fit.distribution,
                });
            }
            Err(e) => errors.push(i + 2, format!("{:?}: {e}", row.phrase)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Ok(FittedLexicon {
        lexicon: CertaintyLexicon::new(entries)?,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEXICON: &str = r#"[
        {"phrase": "Unlikely", "kind": "beta", "alpha": 1, "beta": 3, "point": 0},
        {"phrase": "Maybe", "kind": "beta", "alpha": 2, "beta": 2, "point": 0},
        {"phrase": "Certain", "kind": "delta", "alpha": 0, "beta": 0, "point": 1}
    ]"#;

    #[test]
    fn parses_file_format_in_order() {
        let lex = CertaintyLexicon::<f64>::from_json_str(LEXICON).unwrap();
        assert_eq!(lex.len(), 3);
        for i in 0..lex.len() {
            assert_eq!(lex.index_of(lex.phrase(i)), Some(i));
        }
        assert_eq!(lex.distribution(2), &ConfidenceDistribution::Delta { point: 1.0 });
        let again = CertaintyLexicon::<f64>::from_json_str(&lex.to_json_string().unwrap()).unwrap();
        assert_eq!(again, lex);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let dup = r#"[{"phrase":"A","kind":"delta","point":0.5},{"phrase":"A","kind":"delta","point":0.2}]"#;
        assert!(CertaintyLexicon::<f64>::from_json_str(dup).is_err());
        assert!(CertaintyLexicon::<f64>::from_json_str("[]").is_err());
        let bad = r#"[{"phrase":"A","kind":"beta","alpha":-1,"beta":1}]"#;
        assert!(CertaintyLexicon::<f64>::from_json_str(bad).is_err());
    }

    #[test]
    fn survey_fit_reports_rows() {
        let csv = "phrase,mean,variance\nMaybe,0.5,0.05\nBad,0.5,0.4\nAbsent,0.0,0.0\nWorse,1.2,0.01\n";
        let stats = read_survey::<f64, _>(csv.as_bytes()).unwrap();
        let err = fit_lexicon(&stats).unwrap_err();
        match err {
            Error::Rows(rows) => {
                let lines: Vec<usize> = rows.entries.iter().map(|(l, _)| *l).collect();
                assert_eq!(lines, vec![3, 5]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let fitted = fit_lexicon(&stats[..1]).unwrap();
        assert_eq!(
            fitted.lexicon.distribution(0),
            &ConfidenceDistribution::Beta { alpha: 2.0, beta: 2.0 }
        );
        let fitted = fit_lexicon(&[stats[0].clone(), stats[2].clone()]).unwrap();
        assert_eq!(fitted.degenerate, vec!["Absent".to_string()]);
    }

    #[test]
    fn survey_requires_header_and_rows() {
        assert!(read_survey::<f64, _>("phrase,mean\nA,0.5\n".as_bytes()).is_err());
        assert!(matches!(
            read_survey::<f64, _>("phrase,mean,variance\n".as_bytes()),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            read_survey::<f64, _>("phrase,mean,variance\nA,x,0.1\n".as_bytes()),
            Err(Error::Rows(_))
        ));
    }
}
