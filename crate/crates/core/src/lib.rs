//! Exact decision-boundary points for small feedforward classifiers.
//!
//! A *flip point* is an input where the two top softmax outputs of a trained
//! network are equal and no other class exceeds them. The closest flip point to
//! a query measures how far the query sits from the decision boundary, and the
//! direction to it shows which change in the input flips the decision.
//!
//! The crate is organised by stage:
//!
//! - [`net`]: feedforward networks with `erf(y / sigma)` activations, exact
//!   forward and reverse-mode evaluation, Lipschitz bounds, checkpoints.
//! - [`features`]: 3D Haar wavelet transform of 32x32 RGB images, column-pivoted
//!   QR coefficient selection, CIFAR-10 binary ingestion.
//! - [`train`]: cross-entropy, Adam and inverted dropout with trainable `sigma`.
//! - [`flip`]: closest flip points (augmented Lagrangian), flip points along a
//!   ray (bracketing + bisection), the first-order Taylor baseline and the
//!   metrics comparing the two.
//! - [`path`]: softmax profiles along lines, boundary crossings.
//! - [`region`]: within-class adjacency graphs and their connectivity.
//! - [`adversarial`]: the loss-minimising attack inside an l2 ball and its
//!   comparison against flip points.
//! - [`pipeline`]: the experiment driver behind the `flippoint` binary.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod error;
pub mod features;
pub mod flip;
pub mod net;
pub mod path;
pub mod pipeline;
pub mod region;
pub mod train;
mod util;

pub use error::{Error, Result};
pub use features::{CoefficientSelector, Dataset, ImageTensor, WaveletCoeffs};
pub use flip::{Comparison, ComparisonMetrics, FlipOptions, FlipResult, FlipStatus, TaylorEstimate};
pub use net::{Evaluation, Layer, Network};
pub use path::{LineSegment, PathOptions, PathProfile};

