use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// The pair `(γ, θ)` selecting the process `SSS(γ, θ)`.
///
/// `gamma` is a pure time scale; `theta` is the self-similarity factor:
/// the level-`k` jump rate is `q_k = γ θ^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    gamma: f64,
    theta: f64,
}

impl Params {
    pub fn new(gamma: f64, theta: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(usage(format!("gamma must be finite and nonnegative, got {gamma}")));
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(usage(format!("theta must be finite and nonnegative, got {theta}")));
        }
        Ok(Params { gamma, theta })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `γθ`, the level-1 rate; also the rate in the proven mixing bound.
    #[inline]
    pub fn base_rate(&self) -> f64 {
        self.gamma * self.theta
    }

    /// True when every jump rate vanishes and the process is constant.
    pub fn is_degenerate(&self) -> bool {
        self.base_rate() == 0.0
    }

    /// `q_k = γθ^k` for `k ≥ 1`, without validation.
    #[inline]
    pub(crate) fn level_rate(&self, k: u32) -> f64 {
        self.gamma * self.theta.powi(k as i32)
    }

    /// `γ Σ_{k=lo}^{hi} θ^k`: total rate of the clocks at levels `lo..=hi`.
    pub fn rate_sum(&self, lo: u32, hi: u32) -> f64 {
        (lo.max(1)..=hi).map(|k| self.level_rate(k)).sum()
    }
}

/// `q_k = γθ^k`, the rate of jumping from `x` into the sibling cylinder `[v_k(x)]`.
pub fn jump_rate_level(k: u32, params: &Params) -> Result<f64> {
    if k < 1 {
        return Err(usage("jump levels start at 1"));
    }
    Ok(params.level_rate(k))
}
