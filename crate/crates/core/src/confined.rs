//! The process conditioned to stay inside a cylinder `[v]`.
//!
//! Conditioning on never leaving `[v]` gives a Markov chain on the
//! sub-cylinders of `[v]` with kernel `e^{q(v,v) s} exp(s Q^v)`, where `Q^v`
//! is `Q_m` restricted to rows and columns inside `[v]` and
//! `q(v,v) = −γ Σ_{k ≤ level(v)} θ^k` is the (negated) exit rate.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::expm::{uniformized_exponential, MAX_ORACLE_LEVEL};
use crate::generator::pair_rate;
use crate::params::Params;
use crate::spectral::TransitionKernel;
use crate::word::{separation_unchecked, Separation, Word, MAX_WORD_LEVEL};

/// Kernel of the confined chain at resolution `m`. Rows and columns are
/// indexed by the suffix after the cylinder word.
#[derive(Debug, Clone, Serialize)]
pub struct ConfinedKernel {
    cylinder: Word,
    resolution: u32,
    kernel: TransitionKernel,
}

impl ConfinedKernel {
    pub fn cylinder(&self) -> &Word {
        &self.cylinder
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// The suffix-indexed stochastic matrix.
    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    /// The level-`m` words inside the cylinder, in row order.
    pub fn states(&self) -> Vec<Word> {
        Word::all(self.resolution - self.cylinder.level())
            .map(|tail| self.cylinder.concat(&tail).expect("resolution within word cap"))
            .collect()
    }

    /// `P^v(s, from, ·)` as a distribution over [`Self::states`].
    pub fn row(&self, from: &Word) -> Result<Vec<f64>> {
        if from.level() != self.resolution || !self.cylinder.is_prefix_of(from) {
            return Err(usage(format!("{from} is not a level-{} word inside [{}]", self.resolution, self.cylinder)));
        }
        Ok(self.kernel.row(&from.suffix_after(self.cylinder.level())))
    }
}

/// `q(v, v)`: minus the total rate of leaving `[v]`.
pub fn exit_rate_diagonal(v: &Word, params: &Params) -> f64 {
    -params.rate_sum(1, v.level())
}

/// `Q^v`: the block of `Q_m` on level-`m` words inside `[v]`, unmodified
/// (rows sum to `q(v, v)`).
pub fn restricted_generator(v: &Word, m: u32, params: &Params) -> Result<Array2<f64>> {
    check_resolution(v, m)?;
    let depth = m - v.level();
    let size = 1usize << depth;
    let diagonal = -params.rate_sum(1, m);
    Ok(Array2::from_shape_fn((size, size), |(i, j)| {
        if i == j {
            return diagonal;
        }
        // Words inside [v] share its prefix, so their suffix separation is
        // offset by level(v).
        let a = Word::from_index(i, depth);
        let b = Word::from_index(j, depth);
        match separation_unchecked(a, b) {
            Separation::At(c) => pair_rate(m, c + v.level(), params),
            Separation::Infinite => unreachable!(),
        }
    }))
}

fn check_resolution(v: &Word, m: u32) -> Result<()> {
    if m <= v.level() {
        return Err(usage(format!(
            "resolution {m} must exceed the cylinder level {}",
            v.level()
        )));
    }
    if m > MAX_WORD_LEVEL {
        return Err(Error::Resource {
            what: "confined resolution",
            requested: m as u64,
            limit: MAX_WORD_LEVEL as u64,
        });
    }
    if m - v.level() > MAX_ORACLE_LEVEL {
        return Err(Error::Resource {
            what: "confined kernel depth below the cylinder",
            requested: (m - v.level()) as u64,
            limit: MAX_ORACLE_LEVEL as u64,
        });
    }
    Ok(())
}

/// `P^v(s, ·, ·) = e^{q(v,v) s} exp(s Q^v)` on the level-`m` words inside `[v]`.
///
/// Evaluated as `exp(s (Q^v − q(v,v) I))`, which is the same matrix: the
/// shift commutes with `Q^v` and turns it into a conservative rate matrix.
pub fn confined_kernel(v: &Word, s: f64, params: &Params, m: u32) -> Result<ConfinedKernel> {
    let mut generator = restricted_generator(v, m, params)?;
    // Diagonal of the conditioned chain: −γ Σ_{k=level(v)+1}^{m} θ^k, summed
    // directly rather than by cancelling the exit rate.
    let conditioned_diagonal = -params.rate_sum(v.level() + 1, m);
    generator.diag_mut().fill(conditioned_diagonal);
    let entries = uniformized_exponential(&generator, s)?;
    Ok(ConfinedKernel {
        cylinder: *v,
        resolution: m,
        kernel: TransitionKernel::from_parts(m - v.level(), s, *params, entries),
    })
}
