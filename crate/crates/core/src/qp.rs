//! Dual quadratic program of the population-guided classifier.
//!
//! The dual variable is `beta = (lambda, alpha_1..alpha_n)` and the problem is
//!
//! ```text
//! maximize   L(beta) = -1/2 beta' A beta + beta' tau
//! subject to lambda >= 0,  0 <= alpha_i <= c0,  sum_i y_i alpha_i = 0
//! ```
//!
//! with `A = [[D'D, D'X'Y], [YXD, YXX'Y]]`, `D = m_plus - m_minus` and
//! `tau = (C, 1, .., 1)`. The SVM dual is the same problem with `lambda`
//! pinned at zero.
//!
//! Since `(A beta)_i = y_i w'x_i` for `i >= 1` and `(A beta)_0 = D'w`, every
//! primal quantity the KKT check needs is available from `A beta` and the
//! labels, without going back to the feature matrix.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::types::{Dataset, Label, POSITIVE};

/// Default absolute KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration budget per training sample.
pub const DEFAULT_ITER_PER_SAMPLE: usize = 100_000;
/// Default relative threshold (times `c0`) separating zero from positive `alpha`.
pub const DEFAULT_SUPPORT_THRESHOLD_REL: f64 = 1e-6;
/// `lambda` above `LAMBDA_CAP_FACTOR * c0` is treated as numerical breakdown.
pub const LAMBDA_CAP_FACTOR: f64 = 1e6;

/// Curvature floor for pair steps between coincident points.
const MIN_CURVATURE: f64 = 1e-12;
/// Internal stopping threshold is never tightened below this.
const MIN_INNER_EPS: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct QpProblem {
    a: Array2<f64>,
    tau: Array1<f64>,
    labels: Vec<Label>,
    c0: f64,
    lambda_free: bool,
}

impl QpProblem {
    /// Builds a problem from an explicit matrix. `a` must be symmetric of order
    /// `labels.len() + 1`. When `lambda_free` is false the first row and column
    /// of `a` and `tau[0]` are ignored.
    pub fn from_parts(
        a: Array2<f64>,
        c_const: f64,
        labels: Vec<Label>,
        c0: f64,
        lambda_free: bool,
    ) -> Result<Self> {
        let n = labels.len();
        if a.nrows() != n + 1 || a.ncols() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: a.nrows(),
            });
        }
        check_positive("c0", c0)?;
        if lambda_free {
            check_positive("c_const", c_const)?;
        }
        let mut tau = Array1::ones(n + 1);
        tau[0] = if lambda_free { c_const } else { 0.0 };
        let mut a = a;
        if !lambda_free {
            a.row_mut(0).fill(0.0);
            a.column_mut(0).fill(0.0);
        }
        Ok(QpProblem {
            a,
            tau,
            labels,
            c0,
            lambda_free,
        })
    }

    /// Number of training samples (the problem has `n + 1` variables).
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn a_matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn tau(&self) -> &Array1<f64> {
        &self.tau
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c_const(&self) -> f64 {
        self.tau[0]
    }

    pub fn has_population_term(&self) -> bool {
        self.lambda_free
    }

    /// `(0, y_1, .., y_n)`: the equality constraint reads `coeffs · beta = 0`.
    pub fn equality_coeffs(&self) -> Array1<f64> {
        std::iter::once(0.0)
            .chain(self.labels.iter().map(|&y| y as f64))
            .collect()
    }

    pub fn box_lower(&self) -> Array1<f64> {
        Array1::zeros(self.n() + 1)
    }

    pub fn box_upper(&self) -> Array1<f64> {
        let mut upper = Array1::from_elem(self.n() + 1, self.c0);
        upper[0] = if self.lambda_free { f64::INFINITY } else { 0.0 };
        upper
    }

    /// The same problem with `lambda` pinned at zero: the soft-margin SVM dual.
    pub fn without_population(&self) -> QpProblem {
        let mut a = self.a.clone();
        a.row_mut(0).fill(0.0);
        a.column_mut(0).fill(0.0);
        let mut tau = self.tau.clone();
        tau[0] = 0.0;
        QpProblem {
            a,
            tau,
            labels: self.labels.clone(),
            c0: self.c0,
            lambda_free: false,
        }
    }

    /// Dual objective `L(beta)`.
    pub fn objective(&self, beta: ArrayView1<'_, f64>) -> f64 {
        let a_beta = self.a.dot(&beta);
        -0.5 * beta.dot(&a_beta) + beta.dot(&self.tau)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Rows of `X` multiplied by their labels.
fn signed_rows(data: &Dataset) -> Array2<f64> {
    let mut z = data.features().to_owned();
    for (mut row, &y) in z.axis_iter_mut(Axis(0)).zip(data.labels()) {
        if y != POSITIVE {
            row.mapv_inplace(|v| -v);
        }
    }
    z
}

/// Fills the `n x n` block `YXX'Y` into `a[1.., 1..]`, mirroring the upper
/// triangle so the block is exactly symmetric.
fn fill_gram(a: &mut Array2<f64>, z: &Array2<f64>) {
    let n = z.nrows();
    let gram = z.dot(&z.t());
    for i in 0..n {
        for j in i..n {
            a[[i + 1, j + 1]] = gram[[i, j]];
            a[[j + 1, i + 1]] = gram[[i, j]];
        }
    }
}

/// Assembles the population-guided dual from data and its class means.
pub fn assemble_dual(
    data: &Dataset,
    m_plus: ArrayView1<'_, f64>,
    m_minus: ArrayView1<'_, f64>,
    c0: f64,
    c_const: f64,
) -> Result<QpProblem> {
    let d = data.n_features();
    for m in [&m_plus, &m_minus] {
        if m.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.len(),
            });
        }
    }
    check_positive("c0", c0)?;
    check_positive("c_const", c_const)?;
    let delta = &m_plus - &m_minus;
    let delta_sq = delta.dot(&delta);
    if delta_sq == 0.0 {
        return Err(Error::DegenerateMeans);
    }

    let n = data.n_samples();
    let z = signed_rows(data);
    let mut a = Array2::zeros((n + 1, n + 1));
    fill_gram(&mut a, &z);
    let cross = z.dot(&delta);
    a[[0, 0]] = delta_sq;
    for i in 0..n {
        a[[0, i + 1]] = cross[i];
        a[[i + 1, 0]] = cross[i];
    }
    let mut tau = Array1::ones(n + 1);
    tau[0] = c_const;
    Ok(QpProblem {
        a,
        tau,
        labels: data.labels().to_vec(),
        c0,
        lambda_free: true,
    })
}

/// Assembles the soft-margin SVM dual (no population row).
pub fn assemble_svm_dual(data: &Dataset, c0: f64) -> Result<QpProblem> {
    check_positive("c0", c0)?;
    let n = data.n_samples();
    let z = signed_rows(data);
    let mut a = Array2::zeros((n + 1, n + 1));
    fill_gram(&mut a, &z);
    let mut tau = Array1::ones(n + 1);
    tau[0] = 0.0;
    Ok(QpProblem {
        a,
        tau,
        labels: data.labels().to_vec(),
        c0,
        lambda_free: false,
    })
}

/// Magnitudes of the four KKT residual groups.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    /// Projected-gradient violation of the dual: the `lambda` component and the
    /// maximal-violating-pair gap of the `alpha` block.
    pub stationarity: f64,
    /// `|sum_i y_i alpha_i|`.
    pub equality: f64,
    /// Largest distance of any variable outside its bounds.
    pub box_violation: f64,
    /// Primal complementary slackness with the extracted intercept:
    /// `alpha_i (y_i f_i - 1 + xi_i)`, `(c0 - alpha_i) xi_i` and `lambda (D'w - C)`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality)
            .max(self.box_violation)
            .max(self.complementarity)
    }
}

/// Intercept recovered from a dual point.
#[derive(Clone, Debug, PartialEq)]
pub struct Intercept {
    pub b: f64,
    /// Indices (0-based sample indices) with `thr < alpha_i < c0 - thr`.
    pub support: Vec<usize>,
    /// True when the support set was empty and the midpoint rule was used.
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct DualSolution {
    pub beta: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residuals: KktResiduals,
    pub intercept: Intercept,
    /// Dual objective after every iteration, when requested.
    pub trace: Vec<f64>,
}

impl DualSolution {
    pub fn lambda(&self) -> f64 {
        self.beta[0]
    }

    pub fn alpha(&self) -> ArrayView1<'_, f64> {
        self.beta.slice(ndarray::s![1..])
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub support_threshold_rel: f64,
    pub record_trace: bool,
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        SolverOptions {
            tol,
            max_iter,
            support_threshold_rel: DEFAULT_SUPPORT_THRESHOLD_REL,
            record_trace: false,
        }
    }

    pub fn for_problem(problem: &QpProblem) -> Self {
        Self::new(DEFAULT_TOL, DEFAULT_ITER_PER_SAMPLE * problem.n().max(1))
    }
}

/// Solves the dual with the given tolerance and iteration budget.
pub fn solve_dual(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<DualSolution> {
    solve_dual_with(problem, &SolverOptions::new(tol, max_iter))
}

/// Maximal KKT-violating pair of the alpha block.
struct PairChoice {
    up: Option<usize>,
    low: Option<usize>,
    /// `max_{I_up} v - min_{I_low} v`, clamped at zero.
    gap: f64,
}

/// `v_t = y_t (1 - (A beta)_t)`, i.e. `y_t - w'x_t`.
#[inline]
fn violation_value(y: Label, a_beta_t: f64) -> f64 {
    let y = y as f64;
    y * (1.0 - a_beta_t)
}

#[inline]
fn in_up(y: Label, alpha: f64, c0: f64) -> bool {
    if y == POSITIVE {
        alpha < c0
    } else {
        alpha > 0.0
    }
}

#[inline]
fn in_low(y: Label, alpha: f64, c0: f64) -> bool {
    if y == POSITIVE {
        alpha > 0.0
    } else {
        alpha < c0
    }
}

fn select_pair(labels: &[Label], beta: &Array1<f64>, a_beta: &Array1<f64>, c0: f64) -> PairChoice {
    let mut up = None;
    let mut low = None;
    let mut up_value = f64::NEG_INFINITY;
    let mut low_value = f64::INFINITY;
    for (t, &y) in labels.iter().enumerate() {
        let alpha = beta[t + 1];
        let v = violation_value(y, a_beta[t + 1]);
        // Strict comparisons keep the lowest index on ties.
        if in_up(y, alpha, c0) && v > up_value {
            up_value = v;
            up = Some(t);
        }
        if in_low(y, alpha, c0) && v < low_value {
            low_value = v;
            low = Some(t);
        }
    }
    let gap = if up.is_some() && low.is_some() {
        (up_value - low_value).max(0.0)
    } else {
        0.0
    };
    PairChoice {
        up,
        low,
        gap,
    }
}

/// Projected-gradient violation of `lambda` (zero when `lambda` is pinned).
#[inline]
fn lambda_violation(problem: &QpProblem, lambda: f64, a_beta_0: f64) -> f64 {
    if !problem.lambda_free {
        return 0.0;
    }
    // Gradient of L along lambda.
    let g = problem.tau[0] - a_beta_0;
    if lambda > 0.0 {
        g.abs()
    } else {
        g.max(0.0)
    }
}

#[inline]
fn dual_objective(beta: &Array1<f64>, a_beta: &Array1<f64>, tau: &Array1<f64>) -> f64 {
    -0.5 * beta.dot(a_beta) + beta.dot(tau)
}

/// Recovers the intercept from a dual point: the mean of `y_i - w'x_i` over
/// free support vectors, or, when there are none, the class-mean midpoint
/// `-w'(m_plus + m_minus)/2` clamped into the interval of intercepts that are
/// consistent with the dual point.
pub fn estimate_intercept(
    problem: &QpProblem,
    beta: ArrayView1<'_, f64>,
    a_beta: ArrayView1<'_, f64>,
    threshold_rel: f64,
) -> Intercept {
    let c0 = problem.c0;
    let thr = threshold_rel * c0;
    let mut support = Vec::new();
    let mut sum = 0.0;
    for (t, &y) in problem.labels.iter().enumerate() {
        let alpha = beta[t + 1];
        if alpha > thr && alpha < c0 - thr {
            support.push(t);
            sum += violation_value(y, a_beta[t + 1]);
        }
    }
    if !support.is_empty() {
        return Intercept {
            b: sum / support.len() as f64,
            support,
            fallback: false,
        };
    }

    // w'x_t = y_t (A beta)_t.
    let (mut sum_plus, mut n_plus, mut sum_minus, mut n_minus) = (0.0, 0usize, 0.0, 0usize);
    for (t, &y) in problem.labels.iter().enumerate() {
        let wx = y as f64 * a_beta[t + 1];
        if y == POSITIVE {
            sum_plus += wx;
            n_plus += 1;
        } else {
            sum_minus += wx;
            n_minus += 1;
        }
    }
    let mut b = 0.0;
    if n_plus > 0 && n_minus > 0 {
        b = -0.5 * (sum_plus / n_plus as f64 + sum_minus / n_minus as f64);
    }
    // Intercepts compatible with the KKT conditions: [max_{I_up} v, min_{I_low} v].
    // No alpha is free here, so each is snapped to its bound; round-off
    // like 1e-17 must not make a sample count as free.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (t, &y) in problem.labels.iter().enumerate() {
        let alpha = if beta[t + 1] > thr { c0 } else { 0.0 };
        let v = violation_value(y, a_beta[t + 1]);
        if in_up(y, alpha, c0) {
            lo = lo.max(v);
        }
        if in_low(y, alpha, c0) {
            hi = hi.min(v);
        }
    }
    if lo.is_finite() && hi.is_finite() && lo > hi {
        b = 0.5 * (lo + hi);
    } else {
        if lo.is_finite() {
            b = b.max(lo);
        }
        if hi.is_finite() {
            b = b.min(hi);
        }
    }
    Intercept {
        b,
        support,
        fallback: true,
    }
}

fn residuals_at(
    problem: &QpProblem,
    beta: &Array1<f64>,
    a_beta: &Array1<f64>,
    intercept: &Intercept,
) -> KktResiduals {
    let c0 = problem.c0;
    let pair = select_pair(&problem.labels, beta, a_beta, c0);
    let stationarity = pair.gap.max(lambda_violation(problem, beta[0], a_beta[0]));

    let equality = problem
        .labels
        .iter()
        .enumerate()
        .map(|(t, &y)| y as f64 * beta[t + 1])
        .sum::<f64>()
        .abs();

    let mut box_violation = (-beta[0]).max(0.0);
    if !problem.lambda_free {
        box_violation = box_violation.max(beta[0].abs());
    }
    for t in 0..problem.n() {
        let alpha = beta[t + 1];
        box_violation = box_violation.max(-alpha).max(alpha - c0);
    }

    let mut complementarity: f64 = 0.0;
    for (t, &y) in problem.labels.iter().enumerate() {
        let alpha = beta[t + 1];
        let margin = a_beta[t + 1] + y as f64 * intercept.b;
        let xi = (1.0 - margin).max(0.0);
        complementarity = complementarity
            .max((alpha * (margin - 1.0 + xi)).abs())
            .max(((c0 - alpha) * xi).abs());
    }
    if problem.lambda_free {
        complementarity = complementarity.max((beta[0] * (a_beta[0] - problem.tau[0])).abs());
    }

    KktResiduals {
        stationarity,
        equality,
        box_violation,
        complementarity,
    }
}

/// Diagnostic KKT residuals of an arbitrary point, with the intercept
/// recovered by [`estimate_intercept`] at the default threshold.
pub fn kkt_check(problem: &QpProblem, beta: ArrayView1<'_, f64>) -> KktResiduals {
    let beta = beta.to_owned();
    let a_beta = problem.a.dot(&beta);
    let intercept = estimate_intercept(
        problem,
        beta.view(),
        a_beta.view(),
        DEFAULT_SUPPORT_THRESHOLD_REL,
    );
    residuals_at(problem, &beta, &a_beta, &intercept)
}

/// Two-level coordinate ascent: exact `lambda` steps interleaved with SMO pair
/// steps on the maximal violating pair, whichever violates KKT more.
pub fn solve_dual_with(problem: &QpProblem, opts: &SolverOptions) -> Result<DualSolution> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {}", opts.tol)));
    }
    let n = problem.n();
    let n_plus = problem.labels.iter().filter(|&&y| y == POSITIVE).count();
    if n_plus == 0 || n_plus == n {
        return Err(Error::InfeasibleProblem);
    }
    if problem.lambda_free && (problem.a[[0, 0]].is_nan() || problem.a[[0, 0]] <= 0.0) {
        return Err(Error::DegenerateMeans);
    }

    let c0 = problem.c0;
    let a = &problem.a;
    let labels = &problem.labels;
    let lambda_cap = LAMBDA_CAP_FACTOR * c0;

    let mut beta: Array1<f64> = Array1::zeros(n + 1);
    let mut a_beta: Array1<f64> = Array1::zeros(n + 1);
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut eps = opts.tol;

    let finish = |beta: &Array1<f64>, a_beta: &Array1<f64>, iterations, trace: Vec<f64>| {
        let intercept = estimate_intercept(
            problem,
            beta.view(),
            a_beta.view(),
            opts.support_threshold_rel,
        );
        let kkt_residuals = residuals_at(problem, beta, a_beta, &intercept);
        DualSolution {
            beta: beta.clone(),
            objective: dual_objective(beta, a_beta, &problem.tau),
            iterations,
            kkt_residuals,
            intercept,
            trace,
        }
    };

    loop {
        let pair = select_pair(labels, &beta, &a_beta, c0);
        let lam_viol = lambda_violation(problem, beta[0], a_beta[0]);

        if pair.gap <= eps && lam_viol <= eps {
            // Refresh the incrementally maintained product before judging.
            a_beta = a.dot(&beta);
            let pair = select_pair(labels, &beta, &a_beta, c0);
            let lam_viol = lambda_violation(problem, beta[0], a_beta[0]);
            if pair.gap <= eps && lam_viol <= eps {
                let solution = finish(&beta, &a_beta, iterations, std::mem::take(&mut trace));
                if solution.kkt_residuals.max() <= opts.tol {
                    return Ok(solution);
                }
                if eps <= MIN_INNER_EPS {
                    let residual = solution.kkt_residuals.max();
                    return Err(Error::MaxIterationsExceeded {
                        iterations,
                        residual,
                        best: Box::new(solution),
                    });
                }
                trace = solution.trace;
                eps = (eps * 0.1).max(MIN_INNER_EPS);
            }
            continue;
        }

        if iterations >= opts.max_iter || beta[0] > lambda_cap {
            a_beta = a.dot(&beta);
            let solution = finish(&beta, &a_beta, iterations, trace);
            let residual = solution.kkt_residuals.max();
            return Err(Error::MaxIterationsExceeded {
                iterations,
                residual,
                best: Box::new(solution),
            });
        }
        iterations += 1;

        if problem.lambda_free && lam_viol > eps && lam_viol >= pair.gap {
            // Exact maximisation over lambda >= 0 with alpha fixed.
            let rest = a_beta[0] - a[[0, 0]] * beta[0];
            let target = ((problem.tau[0] - rest) / a[[0, 0]]).max(0.0);
            let step = target - beta[0];
            beta[0] = target;
            a_beta.scaled_add(step, &a.row(0));
        } else {
            let (Some(i), Some(j)) = (pair.up, pair.low) else {
                unreachable!("positive gap implies both index sets are non-empty")
            };
            let (yi, yj) = (labels[i] as f64, labels[j] as f64);
            let (ii, jj) = (i + 1, j + 1);
            // Move alpha_i += y_i t, alpha_j -= y_j t; dL/dt = gap.
            let curvature = (a[[ii, ii]] + a[[jj, jj]] - 2.0 * yi * yj * a[[ii, jj]]).max(MIN_CURVATURE);
            let mut t = pair.gap / curvature;
            let room_i = if yi > 0.0 { c0 - beta[ii] } else { beta[ii] };
            let room_j = if yj > 0.0 { beta[jj] } else { c0 - beta[jj] };
            let mut clip_i = false;
            let mut clip_j = false;
            if t >= room_i {
                t = room_i;
                clip_i = true;
            }
            if t >= room_j {
                t = room_j;
                clip_j = true;
                clip_i = room_i <= t;
            }
            let old_i = beta[ii];
            let old_j = beta[jj];
            beta[ii] = if clip_i {
                if yi > 0.0 { c0 } else { 0.0 }
            } else {
                (old_i + yi * t).clamp(0.0, c0)
            };
            beta[jj] = if clip_j {
                if yj > 0.0 { 0.0 } else { c0 }
            } else {
                (old_j - yj * t).clamp(0.0, c0)
            };
            let di = beta[ii] - old_i;
            let dj = beta[jj] - old_j;
            a_beta.scaled_add(di, &a.row(ii));
            a_beta.scaled_add(dj, &a.row(jj));
        }

        if opts.record_trace {
            trace.push(dual_objective(&beta, &a_beta, &problem.tau));
        }
    }
}
