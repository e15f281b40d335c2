//! Numerical checks of the weighting scheme's mathematics.
//!
//! * [`expansion`]: the recursion unrolled into explicit loss and
//!   loss-difference sums, with the exact initialization term.
//! * [`frequency`]: continuous and discrete transfer-function gains, plus an
//!   empirical gain measured by driving the recursion with a sinusoid.
//! * [`dro`]: the reference-loss form of the weight increment.
//! * [`convergence`]: loss-weighted gradient descent on consistent
//!   least-squares problems and the slack term of its convergence bound.

pub mod convergence;
pub mod dro;
pub mod expansion;
pub mod frequency;

pub use convergence::{delta_slack, lw_gd_run, LeastSquaresProblem, LwGdPoint, LwGdReport, Weighting};
pub use dro::{dro_identity_residual, dro_reference_loss};
pub use expansion::{
    expansion_weight, expansion_weight_truncated, initialization_term, oracle_rows, recursion_expansion_gap,
    recursion_weights, LossTrace, OracleRow,
};
pub use frequency::{continuous_gain, discrete_gain, empirical_gain, frequency_rows, FrequencyRow, TransferPoint};
