//! Synthetic bandit environments, missingness injection and evaluation.

mod dataset;
mod envs;
mod eval;
mod missing;

pub use dataset::{GroundTruth, LoggedDataset, LoggedRow};
pub use envs::{
    gen_digit_bandit, gen_glucose_bandit, gen_ihdp_b, glucose_reward, simulate, BanditEnv, Context, DigitConfig,
    DigitEnv, EnvConfig, GlucoseConfig, GlucoseEnv, IhdpConfig, IhdpEnv, LinearEnv, TableEnv,
};
pub use eval::{
    estimate_ate, evaluate_policy, evaluate_policy_par, summarize, AteResult, EvalConfig, EvalResult, Summary,
};
pub use missing::{inject_missingness, mask_feature, Missingness};
