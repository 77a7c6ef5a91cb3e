//! Haar spectral decomposition of the generator and the transition kernels built from it.
//!
//! For `v` of level `m - 1`, the Haar function
//! `ψ_v = 2^{(m-1)/2} (χ_{v0} − χ_{v1})` is an eigenfunction with eigenvalue
//!
//! ```text
//! λ_m = −γ (θ + θ² + … + θ^{m−1} + 2θ^m),      λ_0 = 0 (constants),
//! ```
//!
//! and the `2^{m-1}` Haar functions of level `m - 1` span that eigenspace.
//! Together with the constant function they form an orthonormal basis of
//! `L²` of the Bernoulli measure, so
//!
//! ```text
//! P_n(t)[u][v] = 2^{-n} Σ_m e^{λ_m t} Σ_{w ∈ L_{m−1}} ψ_w(u) ψ_w(v)   (+ 2^{-n} for m = 0).
//! ```
//!
//! Only `w = π_{m−1} u` contributes to the inner sum, so each entry depends
//! on `u, v` only through `c(u, v)`. Entries are evaluated in a regrouped
//! form where every summand is nonnegative (`λ_m` is decreasing in `m`),
//! which keeps small-time probabilities accurate to full relative precision.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{usage, Result};
use crate::generator::check_dense_level;
use crate::params::Params;
use crate::word::{separation_unchecked, Separation, Word};

/// `λ_0, …, λ_n`, summation form.
pub fn eigenvalues(n: u32, params: &Params) -> Vec<f64> {
    let theta = params.theta();
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(0.0);
    let mut partial = 0.0; // θ + … + θ^{m−1}
    for m in 1..=n {
        let power = theta.powi(m as i32);
        out.push(-params.gamma() * (partial + 2.0 * power) + 0.0);
        partial += power;
    }
    out
}

/// `−γ (2θ^{m+1} − θ^m − θ)/(θ − 1)`, the ratio form of `λ_m`. Undefined
/// (returns `None`) within `1e-9` of the removable singularity `θ = 1`.
pub fn eigenvalue_closed_form(m: u32, params: &Params) -> Option<f64> {
    let theta = params.theta();
    if (theta - 1.0).abs() <= 1e-9 {
        return None;
    }
    if m == 0 {
        return Some(0.0);
    }
    let tm = theta.powi(m as i32);
    Some(-params.gamma() * (2.0 * tm * theta - tm - theta) / (theta - 1.0))
}

/// `ψ_v(x)`: `2^{n/2}` on `[v0]`, `−2^{n/2}` on `[v1]`, `0` off `[v]`.
pub fn haar_eval(v: &Word, x: &Word) -> Result<f64> {
    let n = v.level();
    if x.level() < n + 1 {
        return Err(usage(format!(
            "Haar function of level {n} needs a point of level at least {}, got {}",
            n + 1,
            x.level()
        )));
    }
    if !v.is_prefix_of(x) {
        return Ok(0.0);
    }
    let scale = 2f64.powf(n as f64 / 2.0);
    Ok(if x.digit(n + 1) == 0 { scale } else { -scale })
}

/// `e^{λ_m t}` for `m = 0..=n` together with the nonnegative combinations
/// the kernel entries are built from.
struct ModeExponentials {
    lambdas: Vec<f64>,
    exps: Vec<f64>,
    t: f64,
}

impl ModeExponentials {
    fn new(lambdas: Vec<f64>, t: f64) -> Self {
        let exps = lambdas.iter().map(|&l| if t == 0.0 { 1.0 } else { (l * t).exp() }).collect();
        ModeExponentials { lambdas, exps, t }
    }

    /// `1 − e^{λ_c t}`.
    fn decay(&self, c: usize) -> f64 {
        if self.t == 0.0 {
            0.0
        } else {
            -(self.lambdas[c] * self.t).exp_m1()
        }
    }

    /// `e^{λ_m t} − e^{λ_c t}` for `m < c`.
    fn gap(&self, m: usize, c: usize) -> f64 {
        if self.t == 0.0 {
            return 0.0;
        }
        if self.exps[c] == 0.0 {
            return self.exps[m];
        }
        -self.exps[m] * ((self.lambdas[c] - self.lambdas[m]) * self.t).exp_m1()
    }

    /// `P(c(x, X_t) = k) = 2^{-k} [(1 − e^{λ_k t}) + Σ_{m<k} 2^{m−1}(e^{λ_m t} − e^{λ_k t})]`.
    fn ball(&self, k: usize) -> f64 {
        let mut acc = self.decay(k);
        for m in 1..k {
            acc += 2f64.powi(m as i32 - 1) * self.gap(m, k);
        }
        acc * 0.5f64.powi(k as i32)
    }

    /// `P_n(t)[u][u] = 2^{-n} (1 + Σ_{m=1}^n 2^{m−1} e^{λ_m t})`.
    fn stay(&self, n: usize) -> f64 {
        let mut acc = 1.0;
        for m in 1..=n {
            acc += 2f64.powi(m as i32 - 1) * self.exps[m];
        }
        acc * 0.5f64.powi(n as i32)
    }
}

/// Eigenvalues of `Q_n` with the Haar eigenbasis left implicit.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomposition {
    level: u32,
    params: Params,
    eigenvalues: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn new(n: u32, params: &Params) -> Self {
        SpectralDecomposition {
            level: n,
            params: *params,
            eigenvalues: eigenvalues(n, params),
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Dimension of the `λ_m` eigenspace of `Q_n`.
    pub fn multiplicity(m: u32) -> usize {
        if m == 0 {
            1
        } else {
            1 << (m - 1)
        }
    }

    /// The eigenvalues of `Q_n` listed with multiplicity, sorted ascending.
    pub fn spectrum_with_multiplicity(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .flat_map(|(m, &l)| std::iter::repeat_n(l, Self::multiplicity(m as u32)))
            .collect();
        all.sort_by(f64::total_cmp);
        all
    }

    fn modes(&self, t: f64) -> ModeExponentials {
        ModeExponentials::new(self.eigenvalues.clone(), t)
    }

    /// Single entry `P_n(t)[u][v]`.
    pub fn kernel_entry(&self, u: &Word, v: &Word, t: f64) -> Result<f64> {
        self.check_pair(u, v, t)?;
        let modes = self.modes(t);
        Ok(self.entry_with(&modes, *u, *v))
    }

    fn entry_with(&self, modes: &ModeExponentials, u: Word, v: Word) -> f64 {
        let n = self.level as usize;
        match separation_unchecked(u, v) {
            Separation::Infinite => modes.stay(n),
            Separation::At(c) => modes.ball(c as usize) * 0.5f64.powi((n - c as usize) as i32),
        }
    }

    fn check_pair(&self, u: &Word, v: &Word, t: f64) -> Result<()> {
        check_time(t)?;
        if u.level() != self.level || v.level() != self.level {
            return Err(usage(format!("kernel of level {} queried with other levels", self.level)));
        }
        Ok(())
    }

    /// Row `P_n(t)[u][·]` without materializing the matrix.
    pub fn kernel_row(&self, u: &Word, t: f64) -> Result<Vec<f64>> {
        self.check_pair(u, u, t)?;
        let n = self.level;
        if n >= usize::BITS - 1 {
            return Err(usage(format!("cannot enumerate a row of level {n}")));
        }
        let modes = self.modes(t);
        let by_level: Vec<f64> = (0..=n)
            .map(|c| {
                if c == 0 {
                    modes.stay(n as usize)
                } else {
                    modes.ball(c as usize) * 0.5f64.powi((n - c) as i32)
                }
            })
            .collect();
        Ok(Word::all(n)
            .map(|v| match separation_unchecked(*u, v) {
                Separation::Infinite => by_level[0],
                Separation::At(c) => by_level[c as usize],
            })
            .collect())
    }

    /// Dense `P_n(t)`.
    pub fn kernel(&self, t: f64) -> Result<TransitionKernel> {
        check_time(t)?;
        check_dense_level(self.level)?;
        let n = self.level;
        let modes = self.modes(t);
        let size = 1usize << n;
        let entries = Array2::from_shape_fn((size, size), |(i, j)| {
            self.entry_with(&modes, Word::from_index(i, n), Word::from_index(j, n))
        });
        Ok(TransitionKernel::from_parts(n, t, self.params, entries))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(usage(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// A stochastic matrix `P_n(t) = exp(t Q_n)` indexed by level-`n` words.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionKernel {
    level: u32,
    #[serde(rename = "t")]
    time: f64,
    gamma: f64,
    theta: f64,
    #[serde(serialize_with = "crate::io::serialize_matrix_rows")]
    entries: Array2<f64>,
}

impl TransitionKernel {
    pub(crate) fn from_parts(level: u32, time: f64, params: Params, entries: Array2<f64>) -> Self {
        TransitionKernel {
            level,
            time,
            gamma: params.gamma(),
            theta: params.theta(),
            entries,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn params(&self) -> Params {
        Params::new(self.gamma, self.theta).expect("validated at construction")
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, from: &Word, to: &Word) -> f64 {
        self.entries[[from.index(), to.index()]]
    }

    pub fn row(&self, from: &Word) -> Vec<f64> {
        self.entries.row(from.index()).to_vec()
    }

    /// Largest absolute entrywise difference to another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Array2<f64>) -> f64 {
        assert_eq!(self.entries.dim(), other.dim());
        self.entries
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Entries in `[0, 1]` and rows summing to one within `tol`.
    pub fn is_stochastic(&self, tol: f64) -> bool {
        self.entries.iter().all(|&p| (-tol..=1.0 + tol).contains(&p))
            && self.entries.rows().into_iter().all(|row| (row.sum() - 1.0).abs() <= tol)
    }
}

/// `P_n(t)` assembled from the Haar eigenbasis.
pub fn transition_kernel_spectral(n: u32, t: f64, params: &Params) -> Result<TransitionKernel> {
    if n < 1 {
        return Err(usage("kernel level must be at least 1"));
    }
    SpectralDecomposition::new(n, params).kernel(t)
}

/// `P(x, t, [v_k(x)])`, the probability that `X_t` first differs from `x` at digit `k`:
///
/// ```text
/// 2^{-k} + Σ_{i=0}^{k−2} 2^{i−k} e^{λ_{i+1} t} − ½ e^{λ_k t}.
/// ```
///
/// The constant `2^{-k}` is the projection of `χ_{[v_k(x)]}` onto constants;
/// it makes the value vanish at `t = 0` and tend to `2^{-k}` as `t → ∞`.
pub fn ball_transition_probability(k: u32, t: f64, params: &Params) -> Result<f64> {
    if k < 1 {
        return Err(usage("ball level must be at least 1"));
    }
    check_time(t)?;
    Ok(ModeExponentials::new(eigenvalues(k, params), t).ball(k as usize))
}

/// `P_n(t)[u][u]`, the probability that the first `n` digits are unchanged at time `t`.
pub fn stay_probability(n: u32, t: f64, params: &Params) -> Result<f64> {
    check_time(t)?;
    Ok(ModeExponentials::new(eigenvalues(n, params), t).stay(n as usize))
}

/// `P(c(x, X_t) = k)` for `k = 1..=k_max`, sharing one eigenvalue table.
pub(crate) fn ball_probabilities(k_max: u32, t: f64, params: &Params) -> Vec<f64> {
    let modes = ModeExponentials::new(eigenvalues(k_max, params), t);
    (1..=k_max as usize).map(|k| modes.ball(k)).collect()
}
