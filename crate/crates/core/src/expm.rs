//! Matrix exponential of rate matrices by uniformization.
//!
//! For a rate matrix `G` (nonnegative off-diagonal, rows summing to at most
//! zero) and `Λ ≥ max_i |G_ii|`, the matrix `I + G/Λ` is substochastic and
//!
//! ```text
//! exp(t G) = Σ_k e^{−τ} τ^k / k! · (I + G/Λ)^k,    τ = Λ t.
//! ```
//!
//! The series is only evaluated for `τ ≤ 1` after halving `t` `s` times, then
//! the result is squared `s` times. Every step multiplies nonnegative
//! matrices, so the output is entrywise nonnegative. This is deliberately a
//! different route from the Haar expansion in [`crate::spectral`].
//!
//! Squaring doubles any error along the invariant direction, so after `s`
//! squarings row sums drift by about `2^s ε ≈ Λt ε`. When `G` has zero row
//! and column sums, `Π = 11ᵀ/N` is fixed on both sides of every `exp(hG)`, so
//! `(P − Π)^2 = P^2 − Π` and only the remainder `P − Π` is squared.

use ndarray::Array2;

use crate::error::{usage, Error, Result};
use crate::generator::build_generator;
use crate::params::Params;
use crate::spectral::{check_time, TransitionKernel};

/// Largest level accepted by [`transition_kernel_oracle`].
pub const MAX_ORACLE_LEVEL: u32 = 8;

/// Total Poisson tail mass dropped across the whole computation.
const TAIL_TOLERANCE: f64 = 1e-13;

const MAX_SERIES_TERMS: usize = 200;

/// `exp(t G)` for a rate matrix `G`.
pub fn uniformized_exponential(generator: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
    check_time(t)?;
    let (rows, cols) = generator.dim();
    if rows != cols {
        return Err(usage(format!("rate matrix must be square, got {rows}×{cols}")));
    }
    for ((i, j), &g) in generator.indexed_iter() {
        if i != j && g < 0.0 {
            return Err(usage(format!("negative off-diagonal rate {g} at ({i}, {j})")));
        }
    }
    let uniformization = (0..rows).map(|i| -generator[[i, i]]).fold(0.0f64, f64::max);
    let identity = Array2::<f64>::eye(rows);
    if uniformization == 0.0 || t == 0.0 {
        return Ok(identity);
    }

    let total = uniformization * t;
    let squarings = if total <= 1.0 { 0 } else { total.log2().ceil() as u32 };
    let tau = total / 2f64.powi(squarings as i32);
    let jump_chain = &identity + &(generator / uniformization);

    // Squaring at most doubles an entrywise error each time.
    let step_tolerance = TAIL_TOLERANCE * 0.5f64.powi(squarings as i32);
    let mut weight = (-tau).exp();
    let mut power = identity;
    let mut acc = power.clone() * weight;
    for k in 1..=MAX_SERIES_TERMS {
        weight *= tau / k as f64;
        power = power.dot(&jump_chain);
        acc.scaled_add(weight, &power);
        // Remaining mass Σ_{j>k} w_j ≤ w_{k+1} / (1 − τ/(k+2)).
        let next = weight * tau / (k + 1) as f64;
        let tail = next / (1.0 - tau / (k + 2) as f64);
        if tail <= step_tolerance {
            break;
        }
    }

    if squarings == 0 {
        return Ok(acc);
    }
    if !is_doubly_conservative(generator, uniformization) {
        for _ in 0..squarings {
            acc = acc.dot(&acc);
        }
        return Ok(acc);
    }
    let uniform = 1.0 / rows as f64;
    let mut remainder = acc - uniform;
    for _ in 0..squarings {
        remainder = remainder.dot(&remainder);
    }
    // Undo the split; rounding residue below zero is clipped.
    Ok(remainder.mapv(|r| (r + uniform).max(0.0)))
}

/// Row and column sums of `G` vanish up to rounding.
fn is_doubly_conservative(generator: &Array2<f64>, scale: f64) -> bool {
    let tol = 1e-12 * scale;
    generator.rows().into_iter().all(|r| r.sum().abs() <= tol)
        && generator.columns().into_iter().all(|c| c.sum().abs() <= tol)
}

/// Conditioning floor `4 ε ‖tQ_n‖_∞` of the oracle at level `n`, in row-sum norm.
///
/// A rounding-level perturbation of the rate matrix moves `exp(tG)` by about
/// `ε ‖tG‖`, so no unstructured method does better on stiff generators.
pub fn oracle_error_floor(n: u32, t: f64, params: &Params) -> f64 {
    4.0 * f64::EPSILON * 2.0 * params.rate_sum(1, n) * t
}

/// `exp(t Q_n)` by uniformization; an independent check on the Haar kernel.
pub fn transition_kernel_oracle(n: u32, t: f64, params: &Params) -> Result<TransitionKernel> {
    if n > MAX_ORACLE_LEVEL {
        return Err(Error::Resource {
            what: "oracle kernel level",
            requested: n as u64,
            limit: MAX_ORACLE_LEVEL as u64,
        });
    }
    let q = build_generator(n, params)?;
    let entries = uniformized_exponential(q.entries(), t)?;
    Ok(TransitionKernel::from_parts(n, t, *params, entries))
}
