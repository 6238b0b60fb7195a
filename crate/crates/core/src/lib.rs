//! Personalized action recommendation from logged bandit data whose features
//! have missing attributes.
//!
//! The crate is organized bottom-up:
//!
//! * [`nn`]: Dense networks with exact reverse-mode gradients and Adam.
//! * [`pvae`]: Partial VAE: set encoder, heterogeneous decoder, imputation,
//!   posterior densities and feature sampling.
//! * [`propensity`]: Logging-policy estimate by multiple imputation and
//!   multinomial logistic regression.
//! * [`estimators`]: Similarity-weighted IPS reward estimation.
//! * [`cpvae`]: Conditional partial VAE trained with an IPS-weighted ELBO.
//! * [`strategies`]: Imputation, maximum-expected-reward, and conservative
//!   max-min recommendation, plus the Gaussian risk proxy.
//! * [`limits`]: Exact entropy decomposition of the best action on small
//!   discrete environments.
//! * [`harness`]: Synthetic environments, missingness injection, policy
//!   evaluation and ATE estimation.

pub mod cpvae;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod limits;
pub mod nn;
pub mod propensity;
pub mod pvae;
pub mod strategies;

pub use error::{Error, Result};
pub use pvae::{AttributeKind, FeatureSchema, PartialFeature, PvaeModel};
