//! Exact entropy decomposition of the best action `a(X)` on small discrete
//! environments, by full enumeration of the joint law of `(X, X̃, a(X))`.
//!
//! All entropies are in bits with `0 · log 0 = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of enumerated `(x, x̃)` pairs (or output symbols) accepted.
pub const MAX_JOINT_STATES: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Channel {
    /// Each attribute is erased independently with probability `rho`.
    Erasure { rho: f64 },
    /// Explicit `p(x̃ | x)`: one row per feature state over `outputs` symbols.
    Table { outputs: usize, probs: Vec<Vec<f64>> },
}

/// A finite feature space with prior, observation channel and reward table.
///
/// Feature states are indexed in mixed radix with attribute 0 as the least
/// significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEnv {
    pub cardinalities: Vec<usize>,
    /// `μ(x)` per state; uniform when omitted in JSON.
    #[serde(default)]
    pub prior: Vec<f64>,
    pub channel: Channel,
    /// `θ(x, a)` per state and action.
    pub theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub h_a: f64,
    pub i_xxt: f64,
    pub i_cond: f64,
    pub h_cond_direct: f64,
    pub h_cond_prop1: f64,
}

impl Decomposition {
    /// `2^{−H(a(X)|X̃)}`.
    pub fn heuristic_accuracy(&self) -> f64 {
        (-self.h_cond_direct).exp2()
    }
}

impl DiscreteEnv {
    pub fn new(cardinalities: Vec<usize>, prior: Vec<f64>, channel: Channel, theta: Vec<Vec<f64>>) -> Result<Self> {
        let mut env = DiscreteEnv {
            cardinalities,
            prior,
            channel,
            theta,
        };
        env.normalize_defaults()?;
        env.validate()?;
        Ok(env)
    }

    /// Reads the JSON form, filling in a uniform prior when absent.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut env: DiscreteEnv = serde_json::from_str(text)?;
        env.normalize_defaults()?;
        env.validate()?;
        Ok(env)
    }

    fn normalize_defaults(&mut self) -> Result<()> {
        if self.prior.is_empty() {
            let n = self.num_states()?;
            self.prior = vec![1.0 / n as f64; n];
        }
        Ok(())
    }

    /// Worked example: four uniform bits, each erased with
    /// probability 1/2, Bernoulli rewards `(x₁+x₂)/3` and `(x₃+x₄)/3 + 0.1`.
    pub fn example1() -> Self {
        Self::example1_with_rho(0.5)
    }

    pub fn example1_with_rho(rho: f64) -> Self {
        let theta = (0..16)
            .map(|s| {
                let b = |k: usize| ((s >> k) & 1) as f64;
                vec![(b(0) + b(1)) / 3.0, (b(2) + b(3)) / 3.0 + 0.1]
            })
            .collect();
        DiscreteEnv {
            cardinalities: vec![2; 4],
            prior: vec![1.0 / 16.0; 16],
            channel: Channel::Erasure { rho },
            theta,
        }
    }

    /// Random environment with Dirichlet-ish prior and uniform rewards.
    pub fn random<R: Rng + ?Sized>(cardinalities: Vec<usize>, num_actions: usize, channel: Channel, rng: &mut R) -> Result<Self> {
        let n: usize = cardinalities.iter().product();
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let total: f64 = raw.iter().sum();
        let prior = raw.iter().map(|v| v / total).collect();
        let theta = (0..n)
            .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self::new(cardinalities, prior, channel, theta)
    }

    pub fn num_states(&self) -> Result<usize> {
        if self.cardinalities.is_empty() || self.cardinalities.contains(&0) {
            return Err(Error::Config("every attribute needs cardinality >= 1".into()));
        }
        let n = self
            .cardinalities
            .iter()
            .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
            .unwrap_or(u128::MAX);
        if n > MAX_JOINT_STATES {
            return Err(Error::Capacity {
                states: n,
                limit: MAX_JOINT_STATES,
            });
        }
        Ok(n as usize)
    }

    pub fn num_actions(&self) -> usize {
        self.theta.first().map_or(0, |r| r.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_states()?;
        if self.prior.len() != n {
            return Err(Error::Config(format!("prior has {} entries for {n} states", self.prior.len())));
        }
        if self.prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("prior entries must be finite and non-negative".into()));
        }
        let total = pairwise_sum(&self.prior);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior sums to {total}, not 1")));
        }
        let k = self.num_actions();
        if k == 0 || self.theta.len() != n || self.theta.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("theta must be {n} rows of equal positive width")));
        }
        if self.theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("theta entries must be finite".into()));
        }
        match &self.channel {
            Channel::Erasure { rho } => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(Error::Config(format!("erasure probability {rho} outside [0, 1]")));
                }
                let pairs = (n as u128) << self.cardinalities.len().min(100);
                if self.cardinalities.len() >= 100 || pairs > MAX_JOINT_STATES {
                    return Err(Error::Capacity {
                        states: pairs,
                        limit: MAX_JOINT_STATES,
                    });
                }
            }
            Channel::Table { outputs, probs } => {
                if probs.len() != n || probs.iter().any(|r| r.len() != *outputs) {
                    return Err(Error::Config(format!("channel table must be {n} x {outputs}")));
                }
                let pairs = n as u128 * *outputs as u128;
                if pairs > MAX_JOINT_STATES {
                    return Err(Error::Capacity {
                        states: pairs,
                        limit: MAX_JOINT_STATES,
                    });
                }
                for (i, r) in probs.iter().enumerate() {
                    if r.iter().any(|p| !p.is_finite() || *p < 0.0) || (pairwise_sum(r) - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!("channel row {i} is not a distribution")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Attribute values of state `idx`.
    pub fn state_values(&self, mut idx: usize) -> Vec<usize> {
        self.cardinalities
            .iter()
            .map(|&c| {
                let v = idx % c;
                idx /= c;
                v
            })
            .collect()
    }

    /// Visits every `(x, x̃, p(x̃|x))` with positive channel probability.
    fn for_each_pair(&self, mut visit: impl FnMut(usize, usize, f64)) -> Result<usize> {
        let n = self.num_states()?;
        match &self.channel {
            Channel::Table { outputs, probs } => {
                for (x, row) in probs.iter().enumerate() {
                    for (y, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            visit(x, y, p);
                        }
                    }
                }
                Ok(*outputs)
            }
            Channel::Erasure { rho } => {
                let d = self.cardinalities.len();
                // output symbol: per attribute, value or `card` for erased
                let radix: Vec<usize> = self.cardinalities.iter().map(|c| c + 1).collect();
                let outputs = radix.iter().product();
                for x in 0..n {
                    let vals = self.state_values(x);
                    for mask in 0u64..(1u64 << d) {
                        let erased = mask.count_ones() as i32;
                        let p = rho.powi(erased) * (1.0 - rho).powi(d as i32 - erased);
                        if p == 0.0 {
                            continue;
                        }
                        let mut y = 0usize;
                        for j in (0..d).rev() {
                            let digit = if mask >> j & 1 == 1 { self.cardinalities[j] } else { vals[j] };
                            y = y * radix[j] + digit;
                        }
                        visit(x, y, p);
                    }
                }
                Ok(outputs)
            }
        }
    }
}

/// `a(x) = argmax_a θ(x, a)` with the lowest index winning ties.
pub fn best_action_map(env: &DiscreteEnv) -> Vec<usize> {
    env.theta
        .iter()
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Sums in a fixed pairwise tree so results do not depend on accumulation order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1..=8 => v.iter().sum(),
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// `−Σ p log₂ p` over the given masses.
pub fn entropy_bits(p: &[f64]) -> f64 {
    let terms: Vec<f64> = p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).collect();
    pairwise_sum(&terms)
}

struct Joint {
    p_a: Vec<f64>,
    p_y: Vec<f64>,
    p_ya: Vec<f64>,
    /// `H(X̃ | X)`, which equals `H(X̃ | X, a(X))`.
    h_y_given_x: f64,
    num_actions: usize,
}

fn joint(env: &DiscreteEnv) -> Result<Joint> {
    env.validate()?;
    let best = best_action_map(env);
    let k = env.num_actions();
    let n = env.num_states()?;
    let mut p_a = vec![0.0; k];
    for x in 0..n {
        p_a[best[x]] += env.prior[x];
    }
    let outputs = match &env.channel {
        Channel::Table { outputs, .. } => *outputs,
        Channel::Erasure { .. } => env.cardinalities.iter().map(|c| c + 1).product(),
    };
    let mut p_y = vec![0.0; outputs];
    let mut p_ya = vec![0.0; outputs * k];
    let mut row_h = vec![0.0; n];
    env.for_each_pair(|x, y, p| {
        let m = env.prior[x] * p;
        p_y[y] += m;
        p_ya[y * k + best[x]] += m;
        row_h[x] -= p * p.log2();
    })?;
    let weighted: Vec<f64> = row_h.iter().zip(&env.prior).map(|(h, m)| h * m).collect();
    Ok(Joint {
        p_a,
        p_y,
        p_ya,
        h_y_given_x: pairwise_sum(&weighted),
        num_actions: k,
    })
}

/// The five quantities of the best-action uncertainty decomposition.
pub fn decomposition(env: &DiscreteEnv) -> Result<Decomposition> {
    let j = joint(env)?;
    let h_a = entropy_bits(&j.p_a);
    let h_y = entropy_bits(&j.p_y);
    let h_ya = entropy_bits(&j.p_ya);
    let i_xxt = h_y - j.h_y_given_x;
    // H(X̃ | a) = H(X̃, a) − H(a)
    let i_cond = (h_ya - h_a) - j.h_y_given_x;
    let h_cond_direct = h_ya - h_y;
    let h_cond_prop1 = h_a - (i_xxt - i_cond);
    Ok(Decomposition {
        h_a,
        i_xxt,
        i_cond,
        h_cond_direct,
        h_cond_prop1,
    })
}

pub fn heuristic_accuracy(env: &DiscreteEnv) -> Result<f64> {
    Ok(decomposition(env)?.heuristic_accuracy())
}

/// Probability that the MAP guess of `a(X)` from `X̃` is correct.
pub fn bayes_accuracy(env: &DiscreteEnv) -> Result<f64> {
    let j = joint(env)?;
    let best: Vec<f64> = j
        .p_ya
        .chunks(j.num_actions)
        .map(|c| c.iter().cloned().fold(0.0, f64::max))
        .collect();
    Ok(pairwise_sum(&best))
}

/// `I(a(X); X̃) = H(a) − H(a | X̃)`.
pub fn action_information(env: &DiscreteEnv) -> Result<f64> {
    let d = decomposition(env)?;
    Ok(d.h_a - d.h_cond_direct)
}

/// Distribution of `a(X)` under the prior.
pub fn action_prior(env: &DiscreteEnv) -> Result<Vec<f64>> {
    Ok(joint(env)?.p_a)
}
