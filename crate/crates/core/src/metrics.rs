//! Performance measures: correct classification rate, mean within-class error,
//! angle to a reference direction and intercept deviation, plus summaries
//! across replications.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, NEGATIVE, POSITIVE};

fn check_pair(predictions: &[Label], truth: &[Label]) -> Result<()> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Fraction of exact label matches.
pub fn ccr(predictions: &[Label], truth: &[Label]) -> Result<f64> {
    check_pair(predictions, truth)?;
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Error rate within each true class; `None` for a class absent from `truth`.
pub fn per_class_errors(predictions: &[Label], truth: &[Label]) -> Result<(Option<f64>, Option<f64>)> {
    check_pair(predictions, truth)?;
    let rate = |class: Label| {
        let (mut wrong, mut total) = (0usize, 0usize);
        for (p, t) in predictions.iter().zip(truth) {
            if *t == class {
                total += 1;
                if p != t {
                    wrong += 1;
                }
            }
        }
        (total > 0).then(|| wrong as f64 / total as f64)
    };
    Ok((rate(POSITIVE), rate(NEGATIVE)))
}

/// Mean within-class error: the average of the two per-class error rates.
pub fn mwe(predictions: &[Label], truth: &[Label]) -> Result<f64> {
    match per_class_errors(predictions, truth)? {
        (Some(ep), Some(em)) => Ok(0.5 * (ep + em)),
        (None, _) => Err(Error::MissingClass(POSITIVE)),
        (_, None) => Err(Error::MissingClass(NEGATIVE)),
    }
}

/// Angle in degrees between two directions, in `[0, 180]`.
pub fn direction_angle(w: ArrayView1<'_, f64>, w_ref: ArrayView1<'_, f64>) -> Result<f64> {
    if w.len() != w_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: w_ref.len(),
            found: w.len(),
        });
    }
    let nw = w.dot(&w).sqrt();
    let nr = w_ref.dot(&w_ref).sqrt();
    if nw == 0.0 || nr == 0.0 {
        return Err(Error::ZeroVector);
    }
    // 2·atan2(|u - v|, |u + v|) on unit vectors: exact 0 for parallel inputs
    // and no loss of precision near 0° or 180°, unlike acos of the cosine.
    let u = &w / nw;
    let v = &w_ref / nr;
    let diff = &u - &v;
    let sum = &u + &v;
    Ok((2.0 * diff.dot(&diff).sqrt().atan2(sum.dot(&sum).sqrt())).to_degrees())
}

pub fn intercept_deviation(b: f64, b_ref: f64) -> f64 {
    (b - b_ref).abs()
}

/// Evaluation of one classifier on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ccr: f64,
    /// Mean of the per-class error rates that are defined on this test set.
    pub mwe: f64,
    pub angle_deg: Option<f64>,
    pub intercept_dev: Option<f64>,
    pub n_test: usize,
    /// `(e_plus, e_minus)`; a class absent from the test set has no error rate.
    pub per_class_errors: (Option<f64>, Option<f64>),
}

impl EvalReport {
    /// CCR and MWE from predicted labels. A test fold holding a single class
    /// (leave-one-out, tiny folds) gets the error rate of the class present.
    pub fn from_predictions(predictions: &[Label], truth: &[Label]) -> Result<Self> {
        let ccr = ccr(predictions, truth)?;
        let errors = per_class_errors(predictions, truth)?;
        let mwe = match errors {
            (Some(ep), Some(em)) => 0.5 * (ep + em),
            (Some(e), None) | (None, Some(e)) => e,
            (None, None) => unreachable!("non-empty truth has a class"),
        };
        Ok(EvalReport {
            ccr,
            mwe,
            angle_deg: None,
            intercept_dev: None,
            n_test: truth.len(),
            per_class_errors: errors,
        })
    }

    pub fn with_reference(mut self, angle_deg: f64, intercept_dev: f64) -> Self {
        self.angle_deg = Some(angle_deg);
        self.intercept_dev = Some(intercept_dev);
        self
    }
}

/// Quantile with linear interpolation between order statistics (R type 7).
/// `sorted` must be non-empty and ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); zero for one value.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl MeasureSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(MeasureSummary {
            count: n,
            mean,
            sd,
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ccr: MeasureSummary,
    pub mwe: MeasureSummary,
    pub angle_deg: Option<MeasureSummary>,
    pub intercept_dev: Option<MeasureSummary>,
}

/// Per-measure summaries across reports. Angle and deviation are summarised
/// over the reports that carry them.
pub fn aggregate(reports: &[EvalReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pick = |f: fn(&EvalReport) -> Option<f64>| -> Result<Option<MeasureSummary>> {
        let values: Vec<f64> = reports.iter().filter_map(f).collect();
        if values.is_empty() {
            Ok(None)
        } else {
            MeasureSummary::from_values(&values).map(Some)
        }
    };
    Ok(Summary {
        ccr: MeasureSummary::from_values(&reports.iter().map(|r| r.ccr).collect::<Vec<_>>())?,
        mwe: MeasureSummary::from_values(&reports.iter().map(|r| r.mwe).collect::<Vec<_>>())?,
        angle_deg: pick(|r| r.angle_deg)?,
        intercept_dev: pick(|r| r.intercept_dev)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ccr_examples() {
        let truth = [1, 1, 1, 1, 1, -1, -1, -1, -1, -1];
        let pred = [1, 1, 1, 1, -1, -1, -1, -1, -1, 1];
        assert_eq!(ccr(&pred, &truth).unwrap(), 0.8);
        assert_eq!(ccr(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn ccr_hides_minority_failure() {
        // m = 9: the whole minority class is misclassified.
        let mut truth = vec![1; 90];
        truth.extend(vec![-1; 10]);
        let pred = vec![1; 100];
        assert!((ccr(&pred, &truth).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(mwe(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn mwe_examples() {
        let truth = [1, 1, -1, -1];
        assert_eq!(mwe(&[1, -1, -1, -1], &truth).unwrap(), 0.25);
        assert_eq!(mwe(&truth, &truth).unwrap(), 0.0);
        assert!(matches!(mwe(&[1, 1], &[1, 1]), Err(Error::MissingClass(-1))));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(ccr(&[1], &[1, -1]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(ccr(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn angles() {
        let w = array![0.3, -1.2, 2.0];
        let neg = -&w;
        assert_eq!(direction_angle(w.view(), w.view()).unwrap(), 0.0);
        let scaled = &w * 3.5;
        assert!(direction_angle(w.view(), scaled.view()).unwrap() < 1e-12);
        assert!((direction_angle(w.view(), neg.view()).unwrap() - 180.0).abs() < 1e-6);
        let a = direction_angle(array![1.0, 0.0].view(), array![1.0, 1.0].view()).unwrap();
        assert!((a - 45.0).abs() < 1e-10);
        assert!(matches!(
            direction_angle(array![0.0, 0.0].view(), array![1.0, 1.0].view()),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn deviations() {
        assert_eq!(intercept_deviation(0.7, 0.7), 0.0);
        assert_eq!(intercept_deviation(0.3, 0.0), 0.3);
        assert!((intercept_deviation(0.3 + 5.0, 5.0) - 0.3).abs() < 1e-12);
    }

    fn report(ccr: f64) -> EvalReport {
        EvalReport {
            ccr,
            mwe: 1.0 - ccr,
            angle_deg: None,
            intercept_dev: None,
            n_test: 10,
            per_class_errors: (Some(1.0 - ccr), Some(1.0 - ccr)),
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[report(0.9)]).unwrap();
        assert_eq!(s.ccr.mean, 0.9);
        assert_eq!(s.ccr.sd, 0.0);
        assert!(s.angle_deg.is_none());
        let s = aggregate(&[report(0.9), report(1.0)]).unwrap();
        assert!((s.ccr.mean - 0.95).abs() < 1e-15);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn single_class_fold_report() {
        let r = EvalReport::from_predictions(&[1, -1], &[1, 1]).unwrap();
        assert_eq!(r.ccr, 0.5);
        assert_eq!(r.mwe, 0.5);
        assert_eq!(r.per_class_errors, (Some(0.5), None));
    }
}
