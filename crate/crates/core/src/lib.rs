pub mod error;
pub mod harness;
pub mod models;
pub mod quadrature;
pub mod quantizer;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
pub use models::{EulerModel, ModelKind};
pub use quantizer::{AtomCloud, GaussianMixture, Grid};
pub use solver::{price, romberg_extrapolate, solve_bdpp, Driver, Payoff, PriceReport, RbsdeProblem, SolverSolution};
pub use tree::{build_tree, BuildConfig, QuantizationTree, TransitionMode, TreeMethod};
