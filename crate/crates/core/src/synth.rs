//! Synthetic two-class Gaussian benchmarks `N_d(±mu, Sigma)` with closed-form
//! Bayes references, plus distance-concentration diagnostics.
//!
//! Two settings are supported:
//!
//! * `Independent`: `mu = c 1_d`, `Sigma = I_d`.
//! * `BlockInterchangeable`: `mu = c v_d` with `v_d = (√50, √49, .., √1, 0, ..)`
//!   and `Sigma` block diagonal with interchangeable blocks (unit diagonal,
//!   constant correlation `rho`).
//!
//! In both, `c` is chosen so the Mahalanobis distance between `+mu` and `-mu`
//! equals `mahalanobis_target`.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng, StreamRole};
use crate::types::{Dataset, Label, NEGATIVE, POSITIVE};

pub const DEFAULT_MAHALANOBIS: f64 = 2.7;
pub const DEFAULT_BLOCK_SIZE: usize = 50;
pub const DEFAULT_BLOCK_RHO: f64 = 0.8;
/// Number of leading coordinates carrying the decreasing mean gap.
pub const DECREASING_MEAN_LEN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Independent,
    BlockInterchangeable,
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "independent" | "1" => Ok(Setting::Independent),
            "block" | "block_interchangeable" | "2" => Ok(Setting::BlockInterchangeable),
            other => Err(Error::InvalidSpec(format!("unknown setting '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub setting: Setting,
    pub d: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    #[serde(default = "default_target")]
    pub mahalanobis_target: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_rho")]
    pub block_rho: f64,
    pub seed: u64,
}

fn default_target() -> f64 {
    DEFAULT_MAHALANOBIS
}
fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}
fn default_rho() -> f64 {
    DEFAULT_BLOCK_RHO
}

impl SimSpec {
    pub fn new(setting: Setting, d: usize, n_plus: usize, n_minus: usize, seed: u64) -> Self {
        SimSpec {
            setting,
            d,
            n_plus,
            n_minus,
            mahalanobis_target: DEFAULT_MAHALANOBIS,
            block_size: DEFAULT_BLOCK_SIZE,
            block_rho: DEFAULT_BLOCK_RHO,
            seed,
        }
    }

    pub fn independent(d: usize, n_plus: usize, n_minus: usize, seed: u64) -> Self {
        Self::new(Setting::Independent, d, n_plus, n_minus, seed)
    }

    pub fn block(d: usize, n_plus: usize, n_minus: usize, seed: u64) -> Self {
        Self::new(Setting::BlockInterchangeable, d, n_plus, n_minus, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if !(self.mahalanobis_target.is_finite() && self.mahalanobis_target > 0.0) {
            return Err(Error::InvalidSpec("mahalanobis_target must be positive".into()));
        }
        if self.setting == Setting::BlockInterchangeable {
            if self.block_size == 0 || !self.d.is_multiple_of(self.block_size) {
                return Err(Error::InvalidSpec(format!(
                    "d = {} is not a multiple of block_size = {}",
                    self.d, self.block_size
                )));
            }
            if self.d < DECREASING_MEAN_LEN {
                return Err(Error::InvalidSpec(format!(
                    "block setting needs d >= {DECREASING_MEAN_LEN}, got {}",
                    self.d
                )));
            }
            if !(self.block_rho > 0.0 && self.block_rho < 1.0) {
                return Err(Error::InvalidSpec("block_rho must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Unscaled mean direction (`1_d` or `v_d`).
    fn direction(&self) -> Array1<f64> {
        match self.setting {
            Setting::Independent => Array1::ones(self.d),
            Setting::BlockInterchangeable => Array1::from_shape_fn(self.d, |k| {
                if k < DECREASING_MEAN_LEN {
                    ((DECREASING_MEAN_LEN - k) as f64).sqrt()
                } else {
                    0.0
                }
            }),
        }
    }

    /// `Sigma^{-1} v` using the closed-form inverse of each block:
    /// `(I - rho/(1 + (p-1) rho) J) / (1 - rho)`.
    pub fn apply_precision(&self, v: &Array1<f64>) -> Array1<f64> {
        match self.setting {
            Setting::Independent => v.clone(),
            Setting::BlockInterchangeable => {
                let p = self.block_size;
                let rho = self.block_rho;
                let shrink = rho / (1.0 + (p as f64 - 1.0) * rho);
                let mut out = v.clone();
                for mut block in out.exact_chunks_mut(p) {
                    let sum = block.sum();
                    block.mapv_inplace(|x| (x - shrink * sum) / (1.0 - rho));
                }
                out
            }
        }
    }

    /// Explicit covariance matrix, for checks on small `d`.
    pub fn covariance(&self) -> Array2<f64> {
        match self.setting {
            Setting::Independent => Array2::eye(self.d),
            Setting::BlockInterchangeable => Array2::from_shape_fn((self.d, self.d), |(i, j)| {
                if i == j {
                    1.0
                } else if i / self.block_size == j / self.block_size {
                    self.block_rho
                } else {
                    0.0
                }
            }),
        }
    }
}

/// Closed-form Bayes rule `sign(w'x + b)` for the generating distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesReference {
    pub w_bayes: Vec<f64>,
    pub b_bayes: f64,
    /// Realised Mahalanobis distance between the class means.
    pub mahalanobis: f64,
}

impl BayesReference {
    pub fn direction(&self) -> Array1<f64> {
        Array1::from(self.w_bayes.clone())
    }
}

/// Scaling factor `c` such that the Mahalanobis distance of `2 c v` is the target.
pub fn scale_factor(spec: &SimSpec) -> Result<f64> {
    spec.validate()?;
    let v = spec.direction();
    let quad = v.dot(&spec.apply_precision(&v));
    Ok(spec.mahalanobis_target / (2.0 * quad.sqrt()))
}

/// Positive-class mean `mu`.
pub fn class_mean(spec: &SimSpec) -> Result<Array1<f64>> {
    let c = scale_factor(spec)?;
    Ok(spec.direction() * c)
}

pub fn bayes_reference(spec: &SimSpec) -> Result<BayesReference> {
    let two_mu = class_mean(spec)? * 2.0;
    let w = spec.apply_precision(&two_mu);
    let mahalanobis = two_mu.dot(&w).sqrt();
    Ok(BayesReference {
        w_bayes: w.to_vec(),
        // -w'(mu + (-mu))/2 vanishes identically.
        b_bayes: 0.0,
        mahalanobis,
    })
}

fn sample_noise(spec: &SimSpec, rng: &mut Rng, out: &mut [f64]) {
    match spec.setting {
        Setting::Independent => {
            for x in out.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        Setting::BlockInterchangeable => {
            let shared_scale = spec.block_rho.sqrt();
            let own_scale = (1.0 - spec.block_rho).sqrt();
            for block in out.chunks_mut(spec.block_size) {
                let u: f64 = rng.sample(StandardNormal);
                for x in block.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = own_scale * z + shared_scale * u;
                }
            }
        }
    }
}

fn draw(spec: &SimSpec, mu: &Array1<f64>, n_plus: usize, n_minus: usize, seed: u64) -> Result<Dataset> {
    let n = n_plus + n_minus;
    let d = spec.d;
    let mut rng = rng_from_seed(seed);
    let mut features = Array2::zeros((n, d));
    let mut labels: Vec<Label> = Vec::with_capacity(n);
    let mut noise = vec![0.0; d];
    for i in 0..n {
        let y = if i < n_plus { POSITIVE } else { NEGATIVE };
        sample_noise(spec, &mut rng, &mut noise);
        let sign = y as f64;
        for (k, x) in features.row_mut(i).iter_mut().enumerate() {
            *x = sign * mu[k] + noise[k];
        }
        labels.push(y);
    }
    Dataset::new(features, labels)
}

/// Training draw: `n_plus` rows from `N(mu, Sigma)` then `n_minus` rows from `N(-mu, Sigma)`.
pub fn generate(spec: &SimSpec) -> Result<(Dataset, BayesReference)> {
    let mu = class_mean(spec)?;
    let seed = derive_seed(spec.seed, 0, 0, StreamRole::TrainDraw);
    let data = draw(spec, &mu, spec.n_plus, spec.n_minus, seed)?;
    Ok((data, bayes_reference(spec)?))
}

/// Balanced test draw from a stream independent of the training draw.
pub fn generate_test(spec: &SimSpec, n_per_class: usize) -> Result<Dataset> {
    let mu = class_mean(spec)?;
    let seed = derive_seed(spec.seed, 0, 0, StreamRole::TestDraw);
    draw(spec, &mu, n_per_class, n_per_class, seed)
}

/// Mean and coefficient of variation of a set of normalised distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub count: usize,
    pub mean: f64,
    /// Standard deviation over mean; zero when the mean is zero.
    pub cv: f64,
}

impl DistanceSummary {
    fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return DistanceSummary::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        DistanceSummary { count, mean, cv }
    }
}

/// Pairwise distances divided by `sqrt(d)`, within each class and across classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceConcentration {
    pub within_plus: DistanceSummary,
    pub within_minus: DistanceSummary,
    pub between: DistanceSummary,
}

pub fn distance_concentration(data: &Dataset) -> DistanceConcentration {
    let x = data.features();
    let y = data.labels();
    let scale = (data.n_features().max(1) as f64).sqrt();
    let (mut wp, mut wm, mut bt) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..data.n_samples() {
        for j in (i + 1)..data.n_samples() {
            let diff = &x.row(i) - &x.row(j);
            let dist = diff.dot(&diff).sqrt() / scale;
            match (y[i], y[j]) {
                (POSITIVE, POSITIVE) => wp.push(dist),
                (NEGATIVE, NEGATIVE) => wm.push(dist),
                _ => bt.push(dist),
            }
        }
    }
    DistanceConcentration {
        within_plus: DistanceSummary::from_values(&wp),
        within_minus: DistanceSummary::from_values(&wm),
        between: DistanceSummary::from_values(&bt),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEntry {
    pub d: usize,
    #[serde(flatten)]
    pub observed: DistanceConcentration,
    /// Average per-coordinate variance of each class.
    pub sigma2: f64,
    pub tau2: f64,
    /// Average per-coordinate squared mean gap.
    pub mu2: f64,
    /// Large-`d` limits: `sqrt(2 sigma2)`, `sqrt(2 tau2)`, `sqrt(sigma2 + tau2 + mu2)`.
    pub limit_within_plus: f64,
    pub limit_within_minus: f64,
    pub limit_between: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub setting: Setting,
    pub n_plus: usize,
    pub n_minus: usize,
    pub seed: u64,
    pub entries: Vec<ConcentrationEntry>,
}

/// Draws `spec.n_plus + spec.n_minus` samples at each dimension in `dims` and
/// reports how pairwise distances concentrate.
pub fn hdlss_diagnostics(spec: &SimSpec, dims: &[usize]) -> Result<ConcentrationReport> {
    if dims.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut entries = Vec::with_capacity(dims.len());
    for &d in dims {
        let at_d = SimSpec {
            d,
            seed: derive_seed(spec.seed, d as u64, 0, StreamRole::Diagnostics),
            ..spec.clone()
        };
        let (data, _) = generate(&at_d)?;
        let two_mu = class_mean(&at_d)? * 2.0;
        // Both settings have unit marginal variances.
        let (sigma2, tau2) = (1.0, 1.0);
        let mu2 = two_mu.dot(&two_mu) / d as f64;
        entries.push(ConcentrationEntry {
            d,
            observed: distance_concentration(&data),
            sigma2,
            tau2,
            mu2,
            limit_within_plus: (2.0 * sigma2).sqrt(),
            limit_within_minus: (2.0 * tau2).sqrt(),
            limit_between: (sigma2 + tau2 + mu2).sqrt(),
        });
    }
    Ok(ConcentrationReport {
        setting: spec.setting,
        n_plus: spec.n_plus,
        n_minus: spec.n_minus,
        seed: spec.seed,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_scale_factor() {
        let c = scale_factor(&SimSpec::independent(100, 1, 1, 0)).unwrap();
        assert!((c - 0.135).abs() < 1e-15);
        let c = scale_factor(&SimSpec::independent(1, 1, 1, 0)).unwrap();
        assert!((c - 1.35).abs() < 1e-15);
    }

    #[test]
    fn block_spec_validation() {
        assert!(SimSpec::block(120, 1, 1, 0).validate().is_err());
        assert!(SimSpec::block(0, 1, 1, 0).validate().is_err());
        let mut s = SimSpec::block(100, 1, 1, 0);
        s.block_rho = 1.0;
        assert!(s.validate().is_err());
        assert!(SimSpec::block(100, 1, 1, 0).validate().is_ok());
        let mut s = SimSpec::independent(10, 1, 1, 0);
        s.mahalanobis_target = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn independent_bayes_direction() {
        let (_, bayes) = generate(&SimSpec::independent(500, 3, 3, 1)).unwrap();
        let w = bayes.direction();
        assert!((w.dot(&w).sqrt() - 2.7).abs() < 1e-12);
        let first = w[0];
        assert!(w.iter().all(|&v| (v - first).abs() < 1e-15));
        assert_eq!(bayes.b_bayes, 0.0);
    }

    #[test]
    fn one_sample_per_class() {
        let (data, _) = generate(&SimSpec::independent(5, 1, 1, 3)).unwrap();
        assert_eq!(data.n_samples(), 2);
        assert_eq!(data.labels(), &[1, -1]);
    }

    #[test]
    fn empty_test_set_is_allowed() {
        let t = generate_test(&SimSpec::independent(5, 1, 1, 3), 0).unwrap();
        assert_eq!(t.n_samples(), 0);
        assert_eq!(t.n_features(), 5);
    }

    #[test]
    fn duplicate_rows_have_zero_distance() {
        let data = Dataset::new(
            ndarray::array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0], [0.0, 0.0]],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let c = distance_concentration(&data);
        assert_eq!(c.within_plus.mean, 0.0);
        assert_eq!(c.within_plus.cv, 0.0);
        assert_eq!(c.within_minus.count, 1);
        assert!(c.between.mean > 0.0);
    }

    #[test]
    fn diagnostics_need_dimensions() {
        assert!(matches!(
            hdlss_diagnostics(&SimSpec::independent(10, 2, 2, 0), &[]),
            Err(Error::EmptyInput)
        ));
    }
}
