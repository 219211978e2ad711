//! Latent factor models regularized by a user-pair closeness matrix `L`.
//!
//! All five methods share one objective,
//!
//! ```text
//! J = sum_obs (R_ij - U_i.V_j)^2 + gamma * sum_i sum_{k in T_i} L_ik |U_i - U_k|^2
//!     + lambda * (|U|_F^2 + |V|_F^2)
//! ```
//!
//! and differ only in how `L` is built (see [`build_closeness`]).

mod closeness;
mod objective;
mod persist;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, UserId, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};

pub use closeness::{build_closeness, ClosenessInputs};
pub use objective::{closeness_penalty, gradient, objective};
pub use persist::{config_hash, load_model, save_model, ModelHeader};
pub use train::{train, write_trace, StopReason, TraceEntry, TrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain matrix factorization, no closeness term.
    Mf,
    /// Closeness from cosine rating similarity.
    Smf,
    /// Rating similarity restricted to friend pairs.
    SoReg,
    /// Closeness from raw congruity.
    Cr,
    /// Blend of friendship and rescaled congruity.
    Csrr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mf, Method::Smf, Method::SoReg, Method::Cr, Method::Csrr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::Smf => "smf",
            Method::SoReg => "soreg",
            Method::Cr => "cr",
            Method::Csrr => "csrr",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Method::ALL.iter().position(|&m| m == self).unwrap() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Method> {
        Method::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}`; valid methods: {}",
                    Method::ALL.map(Method::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Exact derivative of the objective, including the terms where `U_i`
    /// appears in other users' neighbor sums.
    #[default]
    Full,
    /// Only the `k in T_i` neighbor sum for `U_i`.
    PaperFaithful,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(GradientMode::Full),
            "paper-faithful" => Ok(GradientMode::PaperFaithful),
            other => Err(Error::Config(format!(
                "unknown gradient mode `{other}` (expected full or paper-faithful)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// CSRR blend weight on friendship.
    pub delta: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub gradient_mode: GradientMode,
    pub clamp_predictions: bool,
    /// Drop negative closeness weights (only affects CR).
    pub clamp_closeness_nonnegative: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 15,
            lambda: 0.01,
            gamma: 100.0,
            delta: 0.3,
            learning_rate: 1e-4,
            max_iters: 500,
            tol: 1e-5,
            seed: 0,
            init_scale: 0.1,
            gradient_mode: GradientMode::Full,
            clamp_predictions: false,
            clamp_closeness_nonnegative: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_owned()));
        if self.d < 1 {
            return bad("d must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return bad("tol must be >= 0");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and >= 0");
        }
        Ok(())
    }

    /// Stable textual form, hashed into model file headers.
    pub fn canonical(&self) -> String {
        format!(
            "d={};lambda={:?};gamma={:?};delta={:?};learning_rate={:?};max_iters={};tol={:?};seed={};init_scale={:?};gradient_mode={:?};clamp_predictions={};clamp_closeness_nonnegative={}",
            self.d,
            self.lambda,
            self.gamma,
            self.delta,
            self.learning_rate,
            self.max_iters,
            self.tol,
            self.seed,
            self.init_scale,
            self.gradient_mode,
            self.clamp_predictions,
            self.clamp_closeness_nonnegative
        )
    }
}

/// User factors `U` (n x d) and item factors `V` (m x d).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl FactorModel {
    pub fn zeros(n_users: usize, n_items: usize, d: usize) -> Self {
        FactorModel {
            users: Array2::zeros((n_users, d)),
            items: Array2::zeros((n_items, d)),
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.items.nrows()
    }

    pub fn dim(&self) -> usize {
        self.users.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(self.items.iter()).all(|x| x.is_finite())
    }

    /// `U_i . V_j` without bounds checks beyond slicing.
    pub(crate) fn score(&self, user: UserId, item: ItemId) -> f64 {
        let d = self.dim();
        let u = &self.users.as_slice().expect("standard layout")[user * d..(user + 1) * d];
        let v = &self.items.as_slice().expect("standard layout")[item * d..(item + 1) * d];
        dot(u, v)
    }

    pub fn predict(&self, user: UserId, item: ItemId, clamp: bool) -> Result<f64> {
        if user >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                size: self.n_users(),
            });
        }
        if item >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: self.n_items(),
            });
        }
        let raw = self.score(user, item);
        Ok(if clamp {
            raw.clamp(MIN_RATING, MAX_RATING)
        } else {
            raw
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
