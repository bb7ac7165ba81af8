//! Population-guided large margin classification (PGLMC) for high-dimension,
//! low-sample-size and imbalanced binary problems.
//!
//! The classifier augments the soft-margin SVM with a constraint pushing the
//! projected class means apart, `w'(m+ - m-) >= C`. Its dual is a box- and
//! equality-constrained QP solved by [`qp::solve_dual`]; pinning the extra
//! multiplier at zero recovers the SVM, which serves as the baseline.
//!
//! ```
//! use ndarray::array;
//! use pglmc::{train_pglmc, predict, Dataset, TrainConfig};
//!
//! let x = array![[2.0, 0.0], [1.5, 1.0], [-2.0, 0.0], [-1.0, -1.0]];
//! let data = Dataset::new(x, vec![1, 1, -1, -1]).unwrap();
//! let model = train_pglmc(&data, &TrainConfig::default()).unwrap();
//! assert_eq!(predict(&model, array![3.0, 0.5].view()).unwrap().label, 1);
//! ```

pub mod classifier;
pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod qp;
pub mod rng;
pub mod synth;
pub mod types;

pub use classifier::{predict, train, train_pglmc, train_svm, TrainConfig};
pub use error::{Error, ErrorKind, Result};
pub use harness::{CvPlan, ExperimentResult};
pub use qp::{solve_dual, DualSolution, KktResiduals, QpProblem};
pub use synth::{BayesReference, Setting, SimSpec};
pub use types::{Dataset, Label, LinearModel, Method};
