//! Jump rates and the finite-level generator `Q_n` of the projected chain `π_n X`.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::params::Params;
use crate::word::{separation_unchecked, Separation, Word};

/// Largest level for which dense `2^n × 2^n` matrices are materialized.
pub const MAX_DENSE_LEVEL: u32 = 12;

/// Largest level for which cylindric functions are evaluated by enumeration.
pub const MAX_CYLINDRIC_LEVEL: u32 = 24;

pub(crate) fn check_dense_level(n: u32) -> Result<()> {
    if n > MAX_DENSE_LEVEL {
        return Err(Error::Resource {
            what: "dense matrix level",
            requested: n as u64,
            limit: MAX_DENSE_LEVEL as u64,
        });
    }
    Ok(())
}

/// Rate between two distinct level-`n` words separated at digit `c`:
/// `2^{-(n-c)} γθ^c`.
#[inline]
pub(crate) fn pair_rate(n: u32, c: u32, params: &Params) -> f64 {
    params.level_rate(c) * 0.5f64.powi((n - c) as i32)
}

/// `q(x, v)`: the rate of jumping from `x` into the cylinder `[v]`, `x ∉ [v]`.
pub fn jump_rate(x: &Word, v: &Word, params: &Params) -> Result<f64> {
    let n = v.level();
    if n < 1 {
        return Err(usage("target cylinder must have level at least 1"));
    }
    if x.level() < n {
        return Err(usage(format!(
            "word of level {} is shorter than target cylinder level {n}",
            x.level()
        )));
    }
    match separation_unchecked(x.prefix(n), *v) {
        Separation::At(c) => Ok(pair_rate(n, c, params)),
        Separation::Infinite => Err(domain(format!("{x} already lies in [{v}]"))),
    }
}

/// The rate matrix `Q_n` indexed by level-`n` words.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorMatrix {
    level: u32,
    params: Params,
    #[serde(serialize_with = "crate::io::serialize_matrix_rows")]
    entries: Array2<f64>,
}

impl GeneratorMatrix {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn rate(&self, from: &Word, to: &Word) -> f64 {
        self.entries[[from.index(), to.index()]]
    }

    /// `(Q h)` for a function given by its values on level-`n` words.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.entries.nrows());
        self.entries
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(h).map(|(q, x)| q * x).sum())
            .collect()
    }
}

/// Assembles `Q_n`: off-diagonal rates from the separation level, diagonal
/// fixed by zero row sums.
///
/// The diagonal is `-γ Σ_{k=1}^n θ^k`, summed level by level. Every row
/// holds `2^{n-k}` targets at separation `k`, each with rate `2^{-(n-k)} γθ^k`,
/// so this is exactly minus the off-diagonal row sum, and it is bit-identical
/// across rows (needed for exact isometry invariance).
pub fn build_generator(n: u32, params: &Params) -> Result<GeneratorMatrix> {
    if n < 1 {
        return Err(usage("generator level must be at least 1"));
    }
    check_dense_level(n)?;
    let size = 1usize << n;
    let rates: Vec<f64> = (0..=n).map(|c| if c == 0 { 0.0 } else { pair_rate(n, c, params) }).collect();
    let diagonal = -params.rate_sum(1, n);
    let entries = Array2::from_shape_fn((size, size), |(i, j)| {
        if i == j {
            diagonal
        } else {
            let c = n - (63 - ((i ^ j) as u64).leading_zeros());
            rates[c as usize]
        }
    });
    Ok(GeneratorMatrix {
        level: n,
        params: *params,
        entries,
    })
}

/// `A f(x)` for the cylindric function `f = h ∘ π_n`:
/// `γ Σ_{k=1}^n θ^k (⟨h⟩_{n,k,x} − h(π_n x))`, where `⟨h⟩_{n,k,x}` averages
/// `h` over the `2^{n-k}` words that first differ from `π_n x` at digit `k`.
pub fn apply_generator_cylindric<F>(h: F, n: u32, x: &Word, params: &Params) -> Result<f64>
where
    F: Fn(&Word) -> f64,
{
    if x.level() < n {
        return Err(usage(format!(
            "point of level {} cannot evaluate a level-{n} cylindric function",
            x.level()
        )));
    }
    if n > MAX_CYLINDRIC_LEVEL {
        return Err(Error::Resource {
            what: "cylindric function level",
            requested: n as u64,
            limit: MAX_CYLINDRIC_LEVEL as u64,
        });
    }
    let here = x.prefix(n);
    let h_here = h(&here);
    let mut total = 0.0;
    for k in 1..=n {
        let head = here.sibling_at(k);
        let tail_level = n - k;
        let sum: f64 = Word::all(tail_level)
            .map(|tail| h(&head.concat(&tail).expect("level within cap")))
            .sum();
        let average = sum * 0.5f64.powi(tail_level as i32);
        total += params.theta().powi(k as i32) * (average - h_here);
    }
    Ok(params.gamma() * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn p(gamma: f64, theta: f64) -> Params {
        Params::new(gamma, theta).unwrap()
    }

    #[test]
    fn jump_rate_examples() {
        assert_eq!(jump_rate(&w("000"), &w("100"), &p(1.0, 1.0)).unwrap(), 0.25);
        assert_eq!(jump_rate(&w("00"), &w("01"), &p(1.0, 2.0)).unwrap(), 4.0);
        assert!(matches!(jump_rate(&w("010"), &w("01"), &p(1.0, 2.0)), Err(Error::Domain(_))));
        assert!(jump_rate(&w("0"), &w("01"), &p(1.0, 2.0)).is_err());
        assert!(jump_rate(&w("0"), &Word::EMPTY, &p(1.0, 2.0)).is_err());
    }

    #[test]
    fn rate_splitting_over_subcylinders() {
        let params = p(1.0, 3.0);
        let x = w("000");
        let coarse = jump_rate(&x, &w("1"), &params).unwrap();
        let fine: f64 = Word::all(2)
            .map(|tail| jump_rate(&x, &w("1").concat(&tail).unwrap(), &params).unwrap())
            .sum();
        assert_eq!(coarse, 3.0);
        assert!((fine - coarse).abs() < 1e-15);
    }

    #[test]
    fn small_generators() {
        let q1 = build_generator(1, &p(1.0, 2.0)).unwrap();
        assert_eq!(q1.entries(), &ndarray::arr2(&[[-2.0, 2.0], [2.0, -2.0]]));

        let q2 = build_generator(2, &p(1.0, 1.0)).unwrap();
        assert_eq!(q2.rate(&w("00"), &w("01")), 1.0);
        assert_eq!(q2.rate(&w("00"), &w("10")), 0.5);
        assert_eq!(q2.rate(&w("00"), &w("11")), 0.5);
        assert_eq!(q2.rate(&w("00"), &w("00")), -2.0);
        for row in q2.entries().rows() {
            assert_eq!(row.sum(), 0.0);
        }

        let zero = build_generator(5, &p(0.0, 3.0)).unwrap();
        assert!(zero.entries().iter().all(|&q| q == 0.0));

        assert!(matches!(build_generator(13, &p(1.0, 1.0)), Err(Error::Resource { .. })));
        assert!(build_generator(0, &p(1.0, 1.0)).is_err());
    }

    #[test]
    fn generator_rows_and_symmetry() {
        for &(g, t) in &[(1.0, 0.5), (1.0, 2.0), (2.0, 3.5)] {
            for n in 1..=8 {
                let q = build_generator(n, &p(g, t)).unwrap();
                let e = q.entries();
                for i in 0..e.nrows() {
                    let row_sum: f64 = e.row(i).sum();
                    assert!(row_sum.abs() <= 1e-12 * e[[i, i]].abs(), "row sum {row_sum}");
                    for j in 0..e.ncols() {
                        assert_eq!(e[[i, j]], e[[j, i]]);
                        if i != j {
                            assert!(e[[i, j]] >= 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cylindric_generator_matches_matrix() {
        let params = p(1.0, 0.7);
        assert_eq!(apply_generator_cylindric(|_| 3.5, 4, &w("0110"), &params).unwrap(), 0.0);
        let indicator = |v: &Word| if *v == w("1") { 1.0 } else { 0.0 };
        assert_eq!(apply_generator_cylindric(indicator, 1, &w("0"), &p(1.0, 2.0)).unwrap(), 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let matrix = build_generator(4, &params).unwrap().apply(&h);
        for x in Word::all(6) {
            let value = apply_generator_cylindric(|v| h[v.index()], 4, &x, &params).unwrap();
            assert!((value - matrix[x.prefix(4).index()]).abs() < 1e-12);
        }
        assert!(apply_generator_cylindric(|_| 0.0, 4, &w("01"), &params).is_err());
    }
}
