// SPDX-License-Identifier: MIT OR Apache-2.0

//! Aggregation of externally judged examples into detection and fuzzing
//! scores. Both are balanced accuracy: the mean of the true-positive rate
//! over truly activating examples and the true-negative rate over the rest.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a judged-example file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgedExample {
    pub id: String,
    pub ground_truth: bool,
    pub judged: bool,
}

fn class_rates(judged: &[JudgedExample]) -> (Option<f64>, Option<f64>) {
    let rate = |truth: bool| {
        let class: Vec<_> = judged.iter().filter(|j| j.ground_truth == truth).collect();
        (!class.is_empty())
            .then(|| class.iter().filter(|j| j.judged == truth).count() as f64 / class.len() as f64)
    };
    (rate(true), rate(false))
}

/// Mean of the per-class accuracies that are defined.
pub fn balanced_accuracy(judged: &[JudgedExample]) -> Result<f64> {
    match class_rates(judged) {
        (Some(tpr), Some(tnr)) => Ok((tpr + tnr) / 2.0),
        (Some(r), None) | (None, Some(r)) => Ok(r),
        (None, None) => Err(Error::EmptyBatch),
    }
}

/// Requires both activating and non-activating examples.
pub fn detection_score(judged: &[JudgedExample]) -> Result<f64> {
    match class_rates(judged) {
        (Some(tpr), Some(tnr)) => Ok((tpr + tnr) / 2.0),
        (None, None) => Err(Error::EmptyBatch),
        _ => Err(Error::NeedsBothClasses),
    }
}

/// Like detection, but a single-class list is scored on that class alone.
pub fn fuzzing_score(judged: &[JudgedExample]) -> Result<f64> {
    balanced_accuracy(judged)
}

/// Parses line-delimited JSON records, skipping blank lines.
pub fn parse_judged(reader: impl BufRead) -> Result<Vec<JudgedExample>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn read_judged(path: impl AsRef<Path>) -> Result<Vec<JudgedExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(Error::io_at(path))?;
    parse_judged(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub detection: Option<f64>,
    pub n_detection: usize,
    pub fuzzing: Option<f64>,
    pub n_fuzzing: usize,
    /// Mean of the available scores.
    pub interpretability: Option<f64>,
}

impl ScoreReport {
    pub fn new(detection: Option<&[JudgedExample]>, fuzzing: Option<&[JudgedExample]>) -> Result<Self> {
        let det = detection.map(detection_score).transpose()?;
        let fuz = fuzzing.map(fuzzing_score).transpose()?;
        let present: Vec<f64> = det.iter().chain(fuz.iter()).copied().collect();
        Ok(Self {
            detection: det,
            n_detection: detection.map_or(0, <[_]>::len),
            fuzzing: fuz,
            n_fuzzing: fuzzing.map_or(0, <[_]>::len),
            interpretability: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pos_correct: usize, pos: usize, neg_correct: usize, neg: usize) -> Vec<JudgedExample> {
        let mut v = Vec::new();
        for i in 0..pos {
            v.push(JudgedExample { id: format!("p{i}"), ground_truth: true, judged: i < pos_correct });
        }
        for i in 0..neg {
            v.push(JudgedExample { id: format!("n{i}"), ground_truth: false, judged: i >= neg_correct });
        }
        v
    }

    #[test]
    fn perfect_and_constant_judges() {
        assert_eq!(detection_score(&set(50, 50, 50, 50)).unwrap(), 1.0);
        assert_eq!(detection_score(&set(50, 50, 0, 50)).unwrap(), 0.5);
    }

    #[test]
    fn mixed_rates() {
        assert!((detection_score(&set(40, 50, 45, 50)).unwrap() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn single_class() {
        let err = detection_score(&set(3, 5, 0, 0)).unwrap_err();
        assert_eq!(err.to_string(), "needs both classes");
        assert_eq!(fuzzing_score(&set(3, 5, 0, 0)).unwrap(), 0.6);
    }

    #[test]
    fn parse_lines() {
        let text = "{\"id\":\"a\",\"ground_truth\":true,\"judged\":false}\n\n{\"id\":\"b\",\"ground_truth\":false,\"judged\":false}\n";
        let v = parse_judged(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(detection_score(&v).unwrap(), 0.5);
        assert!(parse_judged("{\"id\":\"a\",\"ground_truth\":true}".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn swapping_classes_is_symmetric(labels in prop::collection::vec((any::<bool>(), any::<bool>()), 2..60)) {
            let judged: Vec<_> = labels.iter().enumerate()
                .map(|(i, &(t, j))| JudgedExample { id: i.to_string(), ground_truth: t, judged: j })
                .collect();
            let flipped: Vec<_> = judged.iter()
                .map(|e| JudgedExample { ground_truth: !e.ground_truth, judged: !e.judged, ..e.clone() })
                .collect();
            match (detection_score(&judged), detection_score(&flipped)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-15),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "asymmetric result {:?}", other),
            }
        }
    }
}
