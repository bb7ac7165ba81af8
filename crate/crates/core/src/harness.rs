//! Cross-validation with inner-loop tuning, simulation replications and
//! one-vs-rest runs over multiclass tables.
//!
//! Every random choice draws from a seed derived from the plan's base seed and
//! the (replication, fold, role) coordinates, so results do not depend on
//! scheduling. Replications run in parallel and are reassembled in index order.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, TrainConfig, DEFAULT_C0_GRID, DEFAULT_C_CONST};
use crate::error::{Error, Result};
use crate::io::{binarize_class, standardize_fit_apply, RawTable};
use crate::metrics::{self, EvalReport, Summary};
use crate::rng::{derive_seed, rng_from_seed, StreamRole};
use crate::synth::{self, SimSpec};
use crate::types::{label_of, Dataset, Label, LinearModel, Method, POSITIVE};

/// Population constants searched by default: only the default constant.
/// On separable training data this makes the population-guided solution
/// coincide with the SVM; pass a wider grid to [`grid_from`] to tune C.
pub const DEFAULT_C_GRID: [f64; 1] = [DEFAULT_C_CONST];

/// Default tuning grid for a method: the C₀ decade grid, crossed with
/// [`DEFAULT_C_GRID`] for the population-guided method.
pub fn default_grid(method: Method) -> Vec<TrainConfig> {
    grid_from(method, &DEFAULT_C0_GRID, &DEFAULT_C_GRID)
}

pub fn grid_from(method: Method, c0s: &[f64], cs: &[f64]) -> Vec<TrainConfig> {
    match method {
        Method::Pglmc => c0s
            .iter()
            .flat_map(|&c0| cs.iter().map(move |&c| TrainConfig::new(c0, c)))
            .collect(),
        _ => c0s
            .iter()
            .map(|&c0| TrainConfig::new(c0, DEFAULT_C_CONST))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub tuning_grid: Vec<TrainConfig>,
    /// Z-score features with statistics of each outer training portion.
    #[serde(default)]
    pub standardize: bool,
}

impl CvPlan {
    pub fn new(replications: usize, base_seed: u64, tuning_grid: Vec<TrainConfig>) -> Self {
        CvPlan {
            outer_folds: 5,
            inner_folds: 5,
            replications,
            base_seed,
            tuning_grid,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::InvalidConfig("fold counts must be at least 2".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.tuning_grid.is_empty() {
            return Err(Error::InvalidConfig("tuning grid is empty".into()));
        }
        self.tuning_grid.iter().try_for_each(TrainConfig::validate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled and dealt round-robin, with
/// the deal continuing across classes, so per-class counts and fold sizes each
/// differ by at most one between folds. The class holding sample 0 is dealt
/// first, which makes the folds invariant under swapping the labels.
pub fn kfold_split(n: usize, k: usize, labels: &[Label], seed: u64) -> Result<Vec<Fold>> {
    let fail = |reason: &str| Error::TooFewSamples {
        n,
        k,
        reason: reason.into(),
    };
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if k < 2 {
        return Err(fail("need at least 2 folds"));
    }
    if n < k {
        return Err(fail("fewer samples than folds"));
    }
    let plus: Vec<usize> = (0..n).filter(|&i| labels[i] == POSITIVE).collect();
    let minus: Vec<usize> = (0..n).filter(|&i| labels[i] != POSITIVE).collect();
    if plus.is_empty() || minus.is_empty() {
        return Err(fail("both classes must be present"));
    }
    let (mut first, mut second) = if labels[0] == POSITIVE {
        (plus, minus)
    } else {
        (minus, plus)
    };
    let mut rng = rng_from_seed(seed);
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);

    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, idx) in first.into_iter().chain(second).enumerate() {
        tests[pos % k].push(idx);
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

/// Tuning result: the winning configuration and the mean validation CCR of
/// every candidate (`None` when the candidate failed on some inner fold).
#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub config: TrainConfig,
    pub mean_ccr: Vec<Option<f64>>,
}

/// Inner-CV tuning with a seed derived from the plan's base seed.
pub fn tune(data: &Dataset, plan: &CvPlan, method: Method) -> Result<TrainConfig> {
    plan.validate()?;
    let seed = derive_seed(plan.base_seed, 0, 0, StreamRole::InnerSplit);
    tune_with_seed(data, &plan.tuning_grid, plan.inner_folds, method, seed).map(|o| o.config)
}

/// Picks the grid entry with the highest mean inner-validation CCR; ties go to
/// the lower C₀, then the lower C. A single-entry grid is returned untrained.
pub fn tune_with_seed(
    data: &Dataset,
    grid: &[TrainConfig],
    inner_folds: usize,
    method: Method,
    seed: u64,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("tuning grid is empty".into()));
    }
    if grid.len() == 1 {
        return Ok(TuneOutcome {
            config: grid[0].clone(),
            mean_ccr: vec![None],
        });
    }
    let k = inner_folds.min(data.n_samples());
    let folds = kfold_split(data.n_samples(), k, data.labels(), seed)?;
    let subsets: Vec<(Dataset, Dataset)> = folds
        .iter()
        .map(|f| (data.select(&f.train), data.select(&f.test)))
        .collect();

    let mean_ccr: Vec<Option<f64>> = grid
        .par_iter()
        .map(|config| {
            let mut total = 0.0;
            for (train, valid) in &subsets {
                let model = classifier::train(method, train, config).ok()?;
                let pred = predict_labels(&model, valid).ok()?;
                total += metrics::ccr(&pred, valid.labels()).ok()?;
            }
            Some(total / subsets.len() as f64)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, score) in mean_ccr.iter().enumerate() {
        let Some(score) = *score else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let incumbent = mean_ccr[b].unwrap();
                let (ci, cb) = (&grid[i], &grid[b]);
                score > incumbent
                    || (score == incumbent
                        && (ci.c0 < cb.c0 || (ci.c0 == cb.c0 && ci.c_const < cb.c_const)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(TuneOutcome {
        config: grid[best].clone(),
        mean_ccr,
    })
}

fn predict_labels(model: &LinearModel, data: &Dataset) -> Result<Vec<Label>> {
    Ok(classifier::decision_scores(model, data)?
        .iter()
        .map(|&s| label_of(s))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub replication: usize,
    pub fold: usize,
    pub report: EvalReport,
    /// Chosen hyperparameters; `None` for the Bayes rule.
    pub config: Option<TrainConfig>,
    pub n_train_plus: usize,
    pub n_train_minus: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub fold: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub source: String,
    pub records: Vec<FoldRecord>,
    pub failures: Vec<FailureRecord>,
}

impl ExperimentResult {
    pub fn reports(&self) -> Vec<EvalReport> {
        self.records.iter().map(|r| r.report.clone()).collect()
    }

    pub fn chosen_configs(&self) -> Vec<TrainConfig> {
        self.records.iter().filter_map(|r| r.config.clone()).collect()
    }

    pub fn summary(&self) -> Result<Summary> {
        metrics::aggregate(&self.reports())
    }

    pub fn mean_ccr(&self) -> f64 {
        mean(self.records.iter().map(|r| r.report.ccr))
    }

    pub fn mean_mwe(&self) -> f64 {
        mean(self.records.iter().map(|r| r.report.mwe))
    }

    pub fn mean_angle(&self) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter_map(|r| r.report.angle_deg).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    }

    pub fn mean_intercept_dev(&self) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter_map(|r| r.report.intercept_dev).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Index sets handed to each stage of an outer fold; lets tests audit that
/// tuning never sees held-out rows.
#[derive(Clone, Debug)]
pub enum FoldEvent<'a> {
    Tune {
        replication: usize,
        fold: usize,
        rows: &'a [usize],
    },
    Evaluate {
        replication: usize,
        fold: usize,
        rows: &'a [usize],
    },
}

pub type Observer<'o> = &'o (dyn Fn(&FoldEvent<'_>) + Sync);

pub fn run_cv_experiment(data: &Dataset, plan: &CvPlan, method: Method) -> Result<ExperimentResult> {
    run_cv_experiment_observed(data, plan, method, None)
}

/// Outer k-fold CV repeated `plan.replications` times. Each outer training
/// portion is (optionally) standardised, tuned by inner CV, trained on and
/// evaluated on its held-out fold. A failing fold aborts its replication and
/// is recorded in `failures`.
pub fn run_cv_experiment_observed(
    data: &Dataset,
    plan: &CvPlan,
    method: Method,
    observer: Option<Observer<'_>>,
) -> Result<ExperimentResult> {
    plan.validate()?;
    if method == Method::Bayes {
        return Err(Error::InvalidConfig(
            "the Bayes rule needs a known generating distribution".into(),
        ));
    }
    data.require_both_classes()?;
    // Surface split problems once instead of per replication.
    kfold_split(data.n_samples(), plan.outer_folds, data.labels(), plan.base_seed)?;

    let per_rep: Vec<std::result::Result<Vec<FoldRecord>, FailureRecord>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(plan.base_seed, rep as u64, 0, StreamRole::OuterSplit);
            let folds = kfold_split(data.n_samples(), plan.outer_folds, data.labels(), seed)
                .map_err(|e| FailureRecord {
                    replication: rep,
                    fold: 0,
                    reason: e.to_string(),
                })?;
            folds
                .iter()
                .enumerate()
                .map(|(f, fold)| {
                    run_outer_fold(data, plan, method, rep, f, fold, observer).map_err(|e| {
                        FailureRecord {
                            replication: rep,
                            fold: f,
                            reason: e.to_string(),
                        }
                    })
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in per_rep {
        match r {
            Ok(recs) => records.extend(recs),
            Err(f) => failures.push(f),
        }
    }
    Ok(ExperimentResult {
        method,
        source: format!("dataset n={} d={}", data.n_samples(), data.n_features()),
        records,
        failures,
    })
}

fn run_outer_fold(
    data: &Dataset,
    plan: &CvPlan,
    method: Method,
    rep: usize,
    f: usize,
    fold: &Fold,
    observer: Option<Observer<'_>>,
) -> Result<FoldRecord> {
    let mut train = data.select(&fold.train);
    let mut test = data.select(&fold.test);
    if plan.standardize {
        let (tr, mut others, _) = standardize_fit_apply(&train, std::slice::from_ref(&test))?;
        train = tr;
        test = others.pop().expect("one transformed set");
    }
    if let Some(obs) = observer {
        obs(&FoldEvent::Tune {
            replication: rep,
            fold: f,
            rows: &fold.train,
        });
    }
    let seed = derive_seed(plan.base_seed, rep as u64, f as u64, StreamRole::InnerSplit);
    let config = tune_with_seed(&train, &plan.tuning_grid, plan.inner_folds, method, seed)?.config;
    let model = classifier::train(method, &train, &config)?;
    if let Some(obs) = observer {
        obs(&FoldEvent::Evaluate {
            replication: rep,
            fold: f,
            rows: &fold.test,
        });
    }
    let pred = predict_labels(&model, &test)?;
    Ok(FoldRecord {
        replication: rep,
        fold: f,
        report: EvalReport::from_predictions(&pred, test.labels())?,
        config: Some(config),
        n_train_plus: train.n_plus(),
        n_train_minus: train.n_minus(),
    })
}

/// Intercept of the unit-norm version of `(w, b)`.
fn unit_intercept(w: &ndarray::Array1<f64>, b: f64) -> f64 {
    b / w.dot(w).sqrt()
}

/// Simulation protocol: every replication draws a fresh training set and a
/// fresh balanced test set, tunes each trained method by inner CV on the
/// training draw and records all four measures. Angles and intercept
/// deviations compare unit-norm directions.
pub fn run_sim_experiment(
    spec: &SimSpec,
    plan: &CvPlan,
    methods: &[Method],
    test_per_class: usize,
) -> Result<Vec<ExperimentResult>> {
    plan.validate()?;
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let bayes = synth::bayes_reference(spec)?;
    let w_bayes = bayes.direction();
    let b_bayes_unit = unit_intercept(&w_bayes, bayes.b_bayes);

    let per_rep: Vec<Vec<std::result::Result<FoldRecord, FailureRecord>>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_spec = SimSpec {
                seed: derive_seed(spec.seed, rep as u64, 0, StreamRole::TrainDraw),
                ..spec.clone()
            };
            let draws = synth::generate(&rep_spec)
                .and_then(|(train, _)| Ok((train, synth::generate_test(&rep_spec, test_per_class)?)));
            methods
                .iter()
                .map(|&method| {
                    let (train, test) = draws.as_ref().map_err(|e| FailureRecord {
                        replication: rep,
                        fold: 0,
                        reason: e.to_string(),
                    })?;
                    sim_replication(plan, method, rep, train, test, &w_bayes, bayes.b_bayes, b_bayes_unit)
                        .map_err(|e| FailureRecord {
                            replication: rep,
                            fold: 0,
                            reason: e.to_string(),
                        })
                })
                .collect()
        })
        .collect();

    let source = format!(
        "simulation {:?} d={} n_plus={} n_minus={} seed={}",
        spec.setting, spec.d, spec.n_plus, spec.n_minus, spec.seed
    );
    let mut results: Vec<ExperimentResult> = methods
        .iter()
        .map(|&method| ExperimentResult {
            method,
            source: source.clone(),
            records: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for rep_results in per_rep {
        for (slot, r) in results.iter_mut().zip(rep_results) {
            match r {
                Ok(rec) => slot.records.push(rec),
                Err(f) => slot.failures.push(f),
            }
        }
    }
    Ok(results)
}

#[allow(clippy::too_many_arguments)]
fn sim_replication(
    plan: &CvPlan,
    method: Method,
    rep: usize,
    train: &Dataset,
    test: &Dataset,
    w_bayes: &ndarray::Array1<f64>,
    b_bayes: f64,
    b_bayes_unit: f64,
) -> Result<FoldRecord> {
    let (w, b, config) = match method {
        Method::Bayes => (w_bayes.clone(), b_bayes, None),
        _ => {
            let seed = derive_seed(plan.base_seed, rep as u64, 0, StreamRole::InnerSplit);
            let config = tune_with_seed(train, &plan.tuning_grid, plan.inner_folds, method, seed)?.config;
            let model = classifier::train(method, train, &config)?;
            (model.w, model.b, Some(config))
        }
    };
    let scores = test.features().dot(&w) + b;
    let pred: Vec<Label> = scores.iter().map(|&s| label_of(s)).collect();
    let angle = metrics::direction_angle(w.view(), w_bayes.view())?;
    let dev = metrics::intercept_deviation(unit_intercept(&w, b), b_bayes_unit);
    Ok(FoldRecord {
        replication: rep,
        fold: 0,
        report: EvalReport::from_predictions(&pred, test.labels())?.with_reference(angle, dev),
        config,
        n_train_plus: train.n_plus(),
        n_train_minus: train.n_minus(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRun {
    pub positive_class: String,
    pub imbalance_factor: f64,
    pub result: ExperimentResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestResult {
    pub method: Method,
    pub runs: Vec<ClassRun>,
    /// Means over classes of each run's mean CCR / MWE.
    pub mean_ccr: f64,
    pub mean_mwe: f64,
}

/// One binary CV experiment per raw class (that class positive, the rest
/// negative), averaged over classes.
pub fn one_vs_rest_runs(table: &RawTable, plan: &CvPlan, method: Method) -> Result<OneVsRestResult> {
    let classes = table.classes();
    if classes.len() < 2 {
        return Err(Error::MissingClass(crate::types::NEGATIVE));
    }
    let runs = classes
        .iter()
        .map(|class| {
            let data = binarize_class(table, class)?;
            let mut result = run_cv_experiment(&data, plan, method)?;
            result.source = format!("{} vs rest", class);
            Ok(ClassRun {
                positive_class: class.clone(),
                imbalance_factor: data.imbalance_factor()?,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_ccr = mean(runs.iter().map(|r| r.result.mean_ccr()));
    let mean_mwe = mean(runs.iter().map(|r| r.result.mean_mwe()));
    Ok(OneVsRestResult {
        method,
        runs,
        mean_ccr,
        mean_mwe,
    })
}
