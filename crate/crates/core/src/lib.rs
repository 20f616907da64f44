//! Bermudan option pricing by dynamic look-ahead least-squares Monte Carlo.
//!
//! Continuation values are estimated backwards in time by truncated
//! tensor-product B-spline regression. Spline parameters and look-ahead
//! windows are chosen by sample splitting. The crate also ships the
//! single-sample polynomial baselines, a finite-chain dynamic programming
//! oracle and a binomial lattice for the put.

pub mod error;
pub mod lookahead;
pub mod model;
pub mod oracle;
pub mod payoff;
pub mod policy;
pub mod regress;
pub mod rng;
pub mod spline;

pub use error::{Error, Result};
pub use lookahead::{build_labels, tau_stopping, theta, EstimateSequence, Estimates};
pub use model::{
    simulate_fresh_subpaths, simulate_paths, GbmParams, MarkovModel, PathSet, PathView,
};
pub use oracle::{binomial_bermudan_put, DpTables, FiniteChain, LatticePut, LatticeReport};
pub use payoff::{PayoffKind, PayoffSpec, Reward};
pub use policy::{
    fit_baseline_ls, fit_baseline_tr, fit_policy, lower_bound_price, monte_carlo_price,
    point_price, EktConfig, PriceEstimate, SplitPlan, StepSelection, StoppingPolicy, WindowGrid,
    WindowSpec,
};
pub use regress::{Continuation, ContinuationEstimate, Evaluate};
pub use rng::{Purpose, SeedPlan};
pub use spline::{ParameterGrid, SplineParams, SplineSpace};
