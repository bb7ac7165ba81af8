//! Shared domain types: labelled datasets, trained linear models and predictions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::error::{Error, Result};

/// Binary class label, always `+1` or `-1`.
pub type Label = i8;

pub const POSITIVE: Label = 1;
pub const NEGATIVE: Label = -1;

/// Maps a decision score to a label. A zero score goes to the positive class.
#[inline]
pub fn label_of(score: f64) -> Label {
    if score >= 0.0 {
        POSITIVE
    } else {
        NEGATIVE
    }
}

/// Dense feature matrix (one row per sample) with `±1` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Validates shape, labels and finiteness. A dataset may hold a single class
    /// (or no rows at all); training entry points check for both classes.
    pub fn new(features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.nrows(),
                right: labels.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&y| y != POSITIVE && y != NEGATIVE) {
            return Err(Error::InvalidLabel {
                row,
                value: labels[row] as i64,
            });
        }
        for ((row, column), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, column });
            }
        }
        Ok(Dataset {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_plus(&self) -> usize {
        self.labels.iter().filter(|&&y| y == POSITIVE).count()
    }

    pub fn n_minus(&self) -> usize {
        self.labels.iter().filter(|&&y| y == NEGATIVE).count()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.n_plus() == 0 {
            return Err(Error::MissingClass(POSITIVE));
        }
        if self.n_minus() == 0 {
            return Err(Error::MissingClass(NEGATIVE));
        }
        Ok(())
    }

    /// Row subset in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same rows with every label negated.
    pub fn with_swapped_labels(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&y| -y).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Replaces the feature matrix, keeping labels and names. Used by preprocessing.
    pub fn map_features(&self, features: Array2<f64>) -> Result<Dataset> {
        let mut out = Dataset::new(features, self.labels.clone())?;
        if self.n_features() == out.n_features() {
            out.feature_names = self.feature_names.clone();
        }
        Ok(out)
    }

    pub fn imbalance_factor(&self) -> Result<f64> {
        imbalance_factor(self)
    }
}

/// Arithmetic means of the positive and negative class rows.
pub fn class_means(data: &Dataset) -> Result<(Array1<f64>, Array1<f64>)> {
    data.require_both_classes()?;
    let d = data.n_features();
    let mut m_plus = Array1::zeros(d);
    let mut m_minus = Array1::zeros(d);
    for (row, &y) in data.features.outer_iter().zip(&data.labels) {
        if y == POSITIVE {
            m_plus += &row;
        } else {
            m_minus += &row;
        }
    }
    m_plus /= data.n_plus() as f64;
    m_minus /= data.n_minus() as f64;
    Ok((m_plus, m_minus))
}

/// Majority-to-minority sample size ratio, always `>= 1`.
pub fn imbalance_factor(data: &Dataset) -> Result<f64> {
    data.require_both_classes()?;
    let (p, m) = (data.n_plus() as f64, data.n_minus() as f64);
    Ok(p.max(m) / p.min(m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pglmc,
    Svm,
    Bayes,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pglmc => "pglmc",
            Method::Svm => "svm",
            Method::Bayes => "bayes",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pglmc" => Ok(Method::Pglmc),
            "svm" => Ok(Method::Svm),
            "bayes" => Ok(Method::Bayes),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Conditions worth surfacing about a trained model that are not errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFlag {
    /// No free support vector was found; the intercept came from the midpoint rule.
    EmptySupportSet,
}

/// A trained linear decision function `f(x) = w·x + b` with its dual certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub method: Method,
    pub w: Array1<f64>,
    pub b: f64,
    pub alpha: Array1<f64>,
    /// Multiplier of the population-margin constraint; zero for the SVM baseline.
    pub lambda: f64,
    /// Training rows with `0 < alpha_i < c0` that defined the intercept.
    pub support: Vec<usize>,
    pub config: TrainConfig,
    pub flags: Vec<ModelFlag>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.w.len()
    }

    pub fn c0(&self) -> f64 {
        self.config.c0
    }

    pub fn c_const(&self) -> f64 {
        self.config.c_const
    }

    pub fn score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(self.w.dot(&x) + self.b)
    }

    pub fn has_flag(&self, flag: ModelFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Score and label for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassPrediction {
    pub label: Label,
    pub score: f64,
}

impl ClassPrediction {
    pub fn from_score(score: f64) -> Self {
        ClassPrediction {
            label: label_of(score),
            score,
        }
    }
}
