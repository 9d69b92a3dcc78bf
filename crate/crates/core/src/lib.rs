//! Learning control for quantum ensemble discrimination and classification.
//!
//! Members of an inhomogeneous ensemble share one piecewise-constant control
//! field but differ in the scaling of their free and control Hamiltonians.
//! The library learns a single field that steers every class to its own
//! target state by gradient ascent on the class-averaged transfer
//! probability, and scores the learned field by Monte Carlo.
//!
//! Module map:
//!
//! - [`dynamics`]: states, operators, exact time-sliced propagation.
//! - [`ensemble`]: parameter laws, deterministic training grids, test draws.
//! - [`gradient`]: analytic control gradients and a finite-difference oracle.
//! - [`learning`]: the gradient-flow learning loops.
//! - [`evaluation`]: fidelity, accuracy, Bloch trajectories, Pareto sweeps.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod gradient;
pub mod learning;
mod linalg;

pub use dynamics::{
    bloch_vector, build_hamiltonian, propagate, slice_propagator, ControlStrategy, HamiltonianModel,
    HermitianOperator, Propagation, PropagatorCache, QuantumState, Scaling, TimeGrid, UnitaryOperator,
};
pub use ensemble::{
    build_training_set, draw_test_samples, grid_samples, truncated_normal_quantile, ClassLabel,
    DistributionSpec, MemberParams, SampleGridSpec, TrainingSet, Truncation,
};
pub use error::{QecError, Result};
pub use evaluation::{
    bloch_trajectories, classification_accuracy, fidelity, pareto_sweep, BlochTrajectory, EvaluationReport,
    ParetoBase, ParetoPoint,
};
pub use gradient::{ensemble_gradient, fidelity_gradient, finite_difference_gradient, GradientField};
pub use learning::{
    discriminate, stopping_check, train_classifier, LearnConfig, LearnResult, RateSchedule, StoppingRule,
};

pub use num_complex::Complex64;
