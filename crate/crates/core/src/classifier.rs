//! Training of the population-guided classifier and the SVM baseline, and
//! evaluation of trained linear models.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{self, DualSolution, QpProblem, SolverOptions};
use crate::types::{class_means, ClassPrediction, Dataset, LinearModel, Method, ModelFlag};

/// Default population-margin constant: the mean-gap requirement `D'w >= 2`.
pub const DEFAULT_C_CONST: f64 = 2.0;
/// Default slack penalty.
pub const DEFAULT_C0: f64 = 1.0;
/// Default C₀ grid for inner cross-validation.
pub const DEFAULT_C0_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
/// A training score counts as piled when `|y f(x) - 1|` is at most this.
pub const PILING_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Slack penalty.
    pub c0: f64,
    /// Population-margin constant (ignored by the SVM baseline).
    pub c_const: f64,
    /// Absolute KKT tolerance.
    pub tol: f64,
    /// Iteration budget; `None` means `100_000 * n`.
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// `alpha_i > support_threshold_rel * c0` counts as positive.
    pub support_threshold_rel: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c0: DEFAULT_C0,
            c_const: DEFAULT_C_CONST,
            tol: qp::DEFAULT_TOL,
            max_iter: None,
            support_threshold_rel: qp::DEFAULT_SUPPORT_THRESHOLD_REL,
        }
    }
}

impl TrainConfig {
    pub fn new(c0: f64, c_const: f64) -> Self {
        TrainConfig {
            c0,
            c_const,
            ..TrainConfig::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("c0", self.c0)?;
        positive("c_const", self.c_const)?;
        positive("tol", self.tol)?;
        positive("support_threshold_rel", self.support_threshold_rel)?;
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(())
    }

    fn solver_options(&self, n: usize) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self
                .max_iter
                .unwrap_or(qp::DEFAULT_ITER_PER_SAMPLE.saturating_mul(n.max(1))),
            support_threshold_rel: self.support_threshold_rel,
            record_trace: false,
        }
    }
}

/// Trains the population-guided large margin classifier.
pub fn train_pglmc(data: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    let (m_plus, m_minus) = class_means(data)?;
    let problem = qp::assemble_dual(data, m_plus.view(), m_minus.view(), config.c0, config.c_const)?;
    let solution = qp::solve_dual_with(&problem, &config.solver_options(data.n_samples()))?;
    let delta = &m_plus - &m_minus;
    Ok(extract_model(Method::Pglmc, data, Some(delta.view()), &solution, config))
}

/// Trains the soft-margin linear SVM baseline (the same dual without `lambda`).
pub fn train_svm(data: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    data.require_both_classes()?;
    let problem = qp::assemble_svm_dual(data, config.c0)?;
    let solution = qp::solve_dual_with(&problem, &config.solver_options(data.n_samples()))?;
    Ok(extract_model(Method::Svm, data, None, &solution, config))
}

pub fn train(method: Method, data: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    match method {
        Method::Pglmc => train_pglmc(data, config),
        Method::Svm => train_svm(data, config),
        Method::Bayes => Err(Error::InvalidConfig(
            "the Bayes rule is not trained from data".into(),
        )),
    }
}

/// Solves an already assembled problem and builds the model. Lets callers
/// train on a modified dual, e.g. [`QpProblem::without_population`].
pub fn train_from_problem(
    data: &Dataset,
    problem: &QpProblem,
    config: &TrainConfig,
) -> Result<LinearModel> {
    config.validate()?;
    if problem.n() != data.n_samples() {
        return Err(Error::LengthMismatch {
            left: problem.n(),
            right: data.n_samples(),
        });
    }
    let solution = qp::solve_dual_with(problem, &config.solver_options(data.n_samples()))?;
    if problem.has_population_term() {
        let (m_plus, m_minus) = class_means(data)?;
        let delta = &m_plus - &m_minus;
        Ok(extract_model(Method::Pglmc, data, Some(delta.view()), &solution, config))
    } else {
        Ok(extract_model(Method::Svm, data, None, &solution, config))
    }
}

/// `w = lambda D + X'Y alpha`, intercept from the dual.
fn extract_model(
    method: Method,
    data: &Dataset,
    delta: Option<ArrayView1<'_, f64>>,
    solution: &DualSolution,
    config: &TrainConfig,
) -> LinearModel {
    let alpha = solution.alpha().to_owned();
    let signed_alpha: Array1<f64> = alpha
        .iter()
        .zip(data.labels())
        .map(|(&a, &y)| a * y as f64)
        .collect();
    let mut w = data.features().t().dot(&signed_alpha);
    let lambda = solution.lambda();
    if let Some(delta) = delta {
        w.scaled_add(lambda, &delta);
    }
    let mut flags = Vec::new();
    if solution.intercept.fallback {
        flags.push(ModelFlag::EmptySupportSet);
    }
    LinearModel {
        method,
        w,
        b: solution.intercept.b,
        alpha,
        lambda,
        support: solution.intercept.support.clone(),
        config: config.clone(),
        flags,
    }
}

pub fn predict(model: &LinearModel, x: ArrayView1<'_, f64>) -> Result<ClassPrediction> {
    model.score(x).map(ClassPrediction::from_score)
}

fn check_width(model: &LinearModel, d: usize) -> Result<()> {
    if d != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: d,
        });
    }
    Ok(())
}

/// Scores `w'x + b` for every row of a feature matrix.
pub fn score_matrix(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    check_width(model, features.ncols())?;
    Ok(features.dot(&model.w) + model.b)
}

pub fn decision_scores(model: &LinearModel, data: &Dataset) -> Result<Array1<f64>> {
    score_matrix(model, data.features())
}

pub fn predict_batch(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Vec<ClassPrediction>> {
    Ok(score_matrix(model, features)?
        .iter()
        .map(|&s| ClassPrediction::from_score(s))
        .collect())
}

/// Fraction of rows whose functional margin `y f(x)` lies within `threshold` of one.
pub fn piling_fraction(model: &LinearModel, data: &Dataset, threshold: f64) -> Result<f64> {
    if data.n_samples() == 0 {
        return Err(Error::EmptyInput);
    }
    let scores = decision_scores(model, data)?;
    let piled = scores
        .iter()
        .zip(data.labels())
        .filter(|(&s, &y)| (y as f64 * s - 1.0).abs() <= threshold)
        .count();
    Ok(piled as f64 / data.n_samples() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn data(rows: Array2<f64>, labels: Vec<i8>) -> Dataset {
        Dataset::new(rows, labels).unwrap()
    }

    #[test]
    fn two_point_pglmc() {
        let d = data(array![[2.0], [-2.0]], vec![1, -1]);
        let m = train_pglmc(&d, &TrainConfig::new(10.0, 2.0).with_tol(1e-10)).unwrap();
        assert!((m.w[0] - 0.5).abs() < 1e-9);
        assert!(m.b.abs() < 1e-9);
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let rows = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.2], [-1.0, -2.0], [-0.5, 1.0], [-3.0, -0.2]];
        let d = data(rows, vec![1, 1, 1, -1, -1, -1]);
        let m = train_pglmc(&d, &TrainConfig::new(1.0, 2.0).with_tol(1e-10)).unwrap();
        assert!(m.b.abs() < 1e-8, "b = {}", m.b);
    }

    #[test]
    fn svm_textbook_margin() {
        let d = data(array![[0.0, 1.0], [0.0, -1.0]], vec![1, -1]);
        let m = train_svm(&d, &TrainConfig::new(100.0, 2.0).with_tol(1e-12)).unwrap();
        assert!((m.w[0]).abs() < 1e-10);
        assert!((m.w[1] - 1.0).abs() < 1e-10);
        assert!(m.b.abs() < 1e-10);
        assert_eq!(m.lambda, 0.0);
    }

    #[test]
    fn predict_examples() {
        let model = LinearModel {
            method: Method::Svm,
            w: array![1.0, 0.0],
            b: 0.0,
            alpha: array![],
            lambda: 0.0,
            support: vec![],
            config: TrainConfig::default(),
            flags: vec![],
        };
        let p = predict(&model, array![-3.0, 7.0].view()).unwrap();
        assert_eq!(p.score, -3.0);
        assert_eq!(p.label, -1);
        assert_eq!(predict(&model, array![0.0, 5.0].view()).unwrap().label, 1);
        assert!(matches!(
            predict(&model, array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));

        let shifted = LinearModel { w: array![1.0, 0.0, 0.0], b: 1.0, ..model };
        let rows = data(array![[0.0, 5.0, 5.0], [1.0, -2.0, 0.0]], vec![1, -1]);
        assert_eq!(decision_scores(&shifted, &rows).unwrap(), array![1.0, 2.0]);
    }

    #[test]
    fn degenerate_means_and_missing_class() {
        let zeros = data(Array2::zeros((2, 3)), vec![1, -1]);
        assert!(matches!(
            train_pglmc(&zeros, &TrainConfig::default()),
            Err(Error::DegenerateMeans)
        ));
        let one_class = data(array![[1.0], [2.0]], vec![1, 1]);
        assert!(matches!(
            train_svm(&one_class, &TrainConfig::default()),
            Err(Error::MissingClass(-1))
        ));
        assert!(matches!(
            train_pglmc(&one_class, &TrainConfig::default()),
            Err(Error::MissingClass(-1))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let d = data(array![[1.0], [-1.0]], vec![1, -1]);
        assert!(matches!(
            train_pglmc(&d, &TrainConfig::new(-1.0, 2.0)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            train_pglmc(&d, &TrainConfig::new(1.0, 0.0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn bayes_cannot_be_trained() {
        let d = data(array![[1.0], [-1.0]], vec![1, -1]);
        assert!(train(Method::Bayes, &d, &TrainConfig::default()).is_err());
    }
}
