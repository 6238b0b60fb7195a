//! Minimal dense-network engine: matrices, ReLU/identity layers, exact
//! reverse-mode gradients, Adam, and distribution helpers.

pub mod adam;
pub mod dist;
pub mod gradcheck;
pub mod matrix;
pub mod net;
pub mod params;

pub use adam::AdamState;
pub use dist::{categorical_log_pmf, gaussian_log_pdf, kl_to_standard_normal, log_sum_exp, sigmoid, softmax, softplus};
pub use matrix::Matrix;
pub use net::{Activation, DenseNet, ForwardCache, Layer};
pub use params::{ParamLayout, Parameterized};
