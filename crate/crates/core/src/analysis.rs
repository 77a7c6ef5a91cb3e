//! Mixing curves, displacement moments and their small-time scaling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::params::Params;
use crate::rng::StreamKey;
use crate::simulator::{merge_counts, sample_terminal_state};
use crate::spectral::{ball_probabilities, check_time, SpectralDecomposition};
use crate::word::{separation_unchecked, Separation, Word, MAX_WORD_LEVEL};

/// Prefactor of the proven bound `|P(t, x, ·) − b|_TV ≤ K e^{−γθ t}`.
pub const MIXING_PREFACTOR: f64 = 1.5;

/// Largest level accepted by [`mixing_report`].
pub const MAX_MIXING_LEVEL: u32 = 10;

/// Default absolute accuracy of the moment series.
pub const DEFAULT_MOMENT_TOLERANCE: f64 = 1e-12;

/// Cap on the number of series terms in [`moment_series`].
pub const MAX_MOMENT_TERMS: u32 = 2000;

pub fn mixing_bound(t: f64, params: &Params) -> f64 {
    MIXING_PREFACTOR * (-params.base_rate() * t).exp()
}

/// `½ Σ |p_i − q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn tv_row_to_uniform(row: &[f64]) -> f64 {
    let uniform = 1.0 / row.len() as f64;
    0.5 * row.iter().map(|p| (p - uniform).abs()).sum::<f64>()
}

/// Distance in total variation between `P_n(t)[u][·]` and the uniform law
/// on level-`n` words, for the start `u = 0̄`. The value does not depend
/// on `u` (every start is the image of `0̄` under an isometry).
pub fn tv_to_uniform(n: u32, t: f64, params: &Params) -> Result<f64> {
    tv_to_uniform_from(&Word::zeros(n), t, params)
}

pub fn tv_to_uniform_from(u: &Word, t: f64, params: &Params) -> Result<f64> {
    if u.level() < 1 {
        return Err(usage("mixing level must be at least 1"));
    }
    if u.level() > 24 {
        return Err(Error::Resource {
            what: "mixing level",
            requested: u.level() as u64,
            limit: 24,
        });
    }
    let row = SpectralDecomposition::new(u.level(), params).kernel_row(u, t)?;
    Ok(tv_row_to_uniform(&row))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingPoint {
    pub t: f64,
    pub tv: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingCurve {
    pub level: u32,
    pub start: Word,
    pub points: Vec<MixingPoint>,
    /// `−d ln(tv)/dt` fitted by least squares over the points with resolvable `tv`.
    pub observed_rate: Option<f64>,
}

/// The level-1 split of `P(t, 0̄, ·)` on the event "the first clock never rang":
///
/// ```text
/// P(t, x, B) = b(B) − ½ (δ_{1−x₁}×b)(B) e^{−2γθt} + ½ (δ_{x₁}×b)(B)(e^{−2γθt} − 2e^{−γθt}) + β(t, B)
/// ```
///
/// with `0 ≤ β(t, B) ≤ e^{−γθt}`. `β` is evaluated exactly for every
/// level-`n` cylinder `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `β(t, C)`; equals `e^{−γθt}`.
    pub beta_total: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub gamma: f64,
    pub theta: f64,
    pub curves: Vec<MixingCurve>,
    pub violations: Vec<(u32, f64)>,
    pub residuals: Vec<ResidualPoint>,
    pub passed: bool,
}

const RESIDUAL_SLACK: f64 = 1e-12;

fn fitted_decay_rate(points: &[MixingPoint]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.t > 0.0 && p.tv > 1e-13)
        .map(|p| (p.t, p.tv.ln()))
        .collect();
    least_squares_slope(&data).map(|s| -s)
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(data: &[(f64, f64)]) -> Option<f64> {
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn level_one_residual(n: u32, t: f64, params: &Params) -> Result<ResidualPoint> {
    let start = Word::zeros(n);
    let row = SpectralDecomposition::new(n, params).kernel_row(&start, t)?;
    let fast = (-2.0 * params.base_rate() * t).exp();
    let slow = (-params.base_rate() * t).exp();
    let cell = 0.5f64.powi(n as i32);
    let half_mass = 0.5f64.powi(n as i32 - 1);
    let mut beta_min = f64::INFINITY;
    let mut beta_max = f64::NEG_INFINITY;
    let mut beta_total = 0.0;
    for (target, p) in Word::all(n).zip(&row) {
        let same_first = target.digit(1) == start.digit(1);
        let main = if same_first {
            cell + 0.5 * half_mass * (fast - 2.0 * slow)
        } else {
            cell - 0.5 * half_mass * fast
        };
        let beta = p - main;
        beta_min = beta_min.min(beta);
        beta_max = beta_max.max(beta);
        beta_total += beta;
    }
    let pass = beta_min >= -RESIDUAL_SLACK && beta_max <= slow + RESIDUAL_SLACK;
    Ok(ResidualPoint {
        t,
        beta_min,
        beta_max,
        beta_total,
        bound: slow,
        pass,
    })
}

/// TV curves for levels `1..=n_max` on `t_grid`, checked against
/// `1.5 e^{−γθt}`, plus the exact level-1 residual at resolution `n_max`.
pub fn mixing_report(params: &Params, n_max: u32, t_grid: &[f64]) -> Result<MixingReport> {
    if n_max < 1 {
        return Err(usage("mixing report needs at least level 1"));
    }
    if n_max > MAX_MIXING_LEVEL {
        return Err(Error::Resource {
            what: "mixing level",
            requested: n_max as u64,
            limit: MAX_MIXING_LEVEL as u64,
        });
    }
    for &t in t_grid {
        check_time(t)?;
    }
    let curves: Vec<MixingCurve> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let points = t_grid
                .iter()
                .map(|&t| {
                    let tv = tv_to_uniform(n, t, params)?;
                    let bound = mixing_bound(t, params);
                    Ok(MixingPoint {
                        t,
                        tv,
                        bound,
                        pass: tv <= bound,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MixingCurve {
                level: n,
                start: Word::zeros(n),
                observed_rate: fitted_decay_rate(&points),
                points,
            })
        })
        .collect::<Result<_>>()?;
    let violations: Vec<(u32, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter().filter(|p| !p.pass).map(move |p| (c.level, p.t)))
        .collect();
    let residuals = t_grid
        .iter()
        .map(|&t| level_one_residual(n_max, t, params))
        .collect::<Result<Vec<_>>>()?;
    let passed = violations.is_empty() && residuals.iter().all(|r| r.pass);
    Ok(MixingReport {
        gamma: params.gamma(),
        theta: params.theta(),
        curves,
        violations,
        residuals,
        passed,
    })
}

/// One evaluation of `M_r(t) = E d^r(x, X_t)` with its certified truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub value: f64,
    pub truncation: u32,
    /// Bound on the dropped terms: `Σ_{k>K} 3^{−rk}`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurve {
    pub r: f64,
    pub points: Vec<MomentPoint>,
}

/// `Σ_{k≥1} 3^{−rk} 2^{−k}`, the moment under the invariant measure.
pub fn moment_at_equilibrium(r: f64) -> f64 {
    let q = 3f64.powf(-r) / 2.0;
    q / (1.0 - q)
}

/// Smallest `K` with `Σ_{k>K} 3^{−rk} = 3^{−r(K+1)}/(1 − 3^{−r}) < tol`.
pub fn series_truncation(r: f64, tol: f64) -> Result<(u32, f64)> {
    if !(r.is_finite() && r > 0.0) {
        return Err(usage(format!("moment exponent must be positive, got {r}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(usage(format!("tolerance must be positive, got {tol}")));
    }
    let q = 3f64.powf(-r);
    let tail = |k: u32| q.powi(k as i32 + 1) / (1.0 - q);
    let mut k = 1u32;
    while tail(k) >= tol {
        k += 1;
        if k > MAX_MOMENT_TERMS {
            return Err(Error::Resource {
                what: "moment series terms",
                requested: k as u64,
                limit: MAX_MOMENT_TERMS as u64,
            });
        }
    }
    Ok((k, tail(k)))
}

/// `M_r(t) = Σ_k 3^{−rk} P(c(x, X_t) = k)` truncated so the tail is `< tol`.
pub fn moment_series(r: f64, t: f64, params: &Params, tol: f64) -> Result<MomentPoint> {
    let (truncation, tail_bound) = series_truncation(r, tol)?;
    check_time(t)?;
    let value = if t == 0.0 {
        0.0
    } else {
        let q = 3f64.powf(-r);
        ball_probabilities(truncation, t, params)
            .iter()
            .enumerate()
            .map(|(i, p)| q.powi(i as i32 + 1) * p)
            .sum()
    };
    Ok(MomentPoint {
        t,
        value,
        truncation,
        tail_bound,
    })
}

pub fn moment_analytic(r: f64, t: f64, params: &Params, tol: f64) -> Result<f64> {
    moment_series(r, t, params, tol).map(|p| p.value)
}

pub fn moment_curve(r: f64, t_grid: &[f64], params: &Params, tol: f64) -> Result<MomentCurve> {
    let points = t_grid
        .iter()
        .map(|&t| moment_series(r, t, params, tol))
        .collect::<Result<_>>()?;
    Ok(MomentCurve { r, points })
}

/// Monte Carlo estimate of `M_r(t)` from `0̄` at truncation depth `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    /// `3^{−r·depth}/(1 − 3^{−r})`, bounding the effect of the truncation.
    pub truncation_bias: f64,
}

/// Monte Carlo `E d^r(0̄, X_t)` with `X_t` drawn exactly at depth `depth`.
///
/// Sample `i` uses the auxiliary stream of `StreamKey::new(seed).path(i)`.
/// The separation index of each draw is histogrammed, so the estimate is
/// independent of thread scheduling.
pub fn moment_empirical(
    r: f64,
    t: f64,
    depth: u32,
    samples: u64,
    params: &Params,
    seed: u64,
) -> Result<MomentEstimate> {
    if !(r.is_finite() && r > 0.0) {
        return Err(usage(format!("moment exponent must be positive, got {r}")));
    }
    check_time(t)?;
    if !(1..=MAX_WORD_LEVEL).contains(&depth) {
        return Err(usage(format!("depth must lie in 1..={MAX_WORD_LEVEL}, got {depth}")));
    }
    if samples < 2 {
        return Err(usage("at least two samples are needed for a standard error"));
    }
    let start = Word::zeros(depth);
    let master = StreamKey::new(seed);
    // Slot 0 counts draws equal to the start (distance 0).
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; depth as usize + 1],
            |mut acc, i| {
                let mut rng = master.path(i).auxiliary_stream();
                let end = sample_terminal_state(&start, t, params, &mut rng);
                match separation_unchecked(start, end) {
                    Separation::At(c) => acc[c as usize] += 1,
                    Separation::Infinite => acc[0] += 1,
                }
                acc
            },
        )
        .reduce(|| vec![0u64; depth as usize + 1], merge_counts);
    let q = 3f64.powf(-r);
    let value = |c: usize| if c == 0 { 0.0 } else { q.powi(c as i32) };
    let n = samples as f64;
    let mean = counts.iter().enumerate().map(|(c, &k)| k as f64 * value(c)).sum::<f64>() / n;
    let var = counts
        .iter()
        .enumerate()
        .map(|(c, &k)| k as f64 * (value(c) - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(MomentEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
        truncation_bias: q.powi(depth as i32) / (1.0 - q),
    })
}

/// Which small-time law governs `M_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `3^r > θ`: `M_r(t) ~ t Σ 3^{−rk} γθ^k`.
    Linear,
    /// `3^r < θ`: `M_r(t) ≍ t^{r ln 3 / ln θ}`.
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub r: f64,
    pub gamma: f64,
    pub theta: f64,
    pub slope: f64,
    pub expected: f64,
    pub regime: Regime,
}

/// Predicted exponent of `M_r(t)` as `t ↓ 0`, or an error at the critical point `3^r = θ`.
pub fn scaling_regime(r: f64, params: &Params) -> Result<(Regime, f64)> {
    let scale = 3f64.powf(r);
    let theta = params.theta();
    if (scale - theta).abs() <= 1e-9 {
        return Err(domain(format!(
            "3^r = θ = {theta} is the critical case; the small-time law there is not a power law"
        )));
    }
    Ok(if scale > theta {
        (Regime::Linear, 1.0)
    } else {
        (Regime::Anomalous, r * 3f64.ln() / theta.ln())
    })
}

/// Least-squares slope of `ln M_r(t)` against `ln t` on a log-spaced grid.
pub fn scaling_exponent(r: f64, params: &Params, t_lo: f64, t_hi: f64, points: usize) -> Result<ScalingFit> {
    if !(t_lo > 0.0 && t_lo < t_hi && t_hi.is_finite()) {
        return Err(usage(format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    if points < 2 {
        return Err(usage("a slope needs at least two grid points"));
    }
    if params.is_degenerate() {
        return Err(domain("the moment vanishes identically when γθ = 0"));
    }
    let (regime, expected) = scaling_regime(r, params)?;
    let data = log_grid(t_lo, t_hi, points)?
        .into_iter()
        .map(|t| Ok((t.ln(), moment_analytic(r, t, params, DEFAULT_MOMENT_TOLERANCE)?.ln())))
        .collect::<Result<Vec<_>>>()?;
    let slope = least_squares_slope(&data).ok_or_else(|| usage("degenerate grid"))?;
    Ok(ScalingFit {
        r,
        gamma: params.gamma(),
        theta: params.theta(),
        slope,
        expected,
        regime,
    })
}

/// `points` times spaced geometrically from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) || points < 2 {
        return Err(usage(format!("invalid log grid {lo}:{hi}:{points}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// `lo, lo + step, …` up to `hi` (inclusive within rounding).
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi && step > 0.0) {
        return Err(usage(format!("invalid linear grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(Error::Resource {
            what: "grid points",
            requested: count as u64,
            limit: 1_000_000,
        });
    }
    Ok((0..=count).map(|i| lo + step * i as f64).collect())
}

/// `points` equally spaced times from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(gamma: f64, theta: f64) -> Params {
        Params::new(gamma, theta).unwrap()
    }

    #[test]
    fn level_one_tv_closed_form() {
        for &(g, th) in &[(1.0, 1.0), (0.5, 3.0), (2.0, 0.25)] {
            let params = p(g, th);
            for &t in &[0.0, 0.1, 1.0, 4.0] {
                let tv = tv_to_uniform(1, t, &params).unwrap();
                assert!((tv - 0.5 * (-2.0 * g * th * t).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tv_at_time_zero() {
        for n in 1..=8 {
            let tv = tv_to_uniform(n, 0.0, &p(1.0, 2.0)).unwrap();
            assert!((tv - (1.0 - 0.5f64.powi(n as i32))).abs() < 1e-15);
        }
        assert!(tv_to_uniform(0, 1.0, &p(1.0, 1.0)).is_err());
    }

    #[test]
    fn tv_is_start_independent() {
        let params = p(1.0, 1.7);
        for start in Word::all(5) {
            let a = tv_to_uniform_from(&start, 0.3, &params).unwrap();
            let b = tv_to_uniform(5, 0.3, &params).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mixing_report_critical_theta() {
        let params = p(1.0, 1.0);
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
        let report = mixing_report(&params, 8, &grid).unwrap();
        assert!(report.violations.is_empty());
        assert!(report.passed);
        for r in &report.residuals {
            assert!((r.beta_total - r.bound).abs() < 1e-12);
        }
        for pair in report.curves.windows(2) {
            for (a, b) in pair[0].points.iter().zip(&pair[1].points) {
                // entrywise rounding near 2^{-n}, summed over 2^n cells
                assert!(a.tv <= b.tv + 1e-13, "{} {} t={}", a.tv, b.tv, a.t);
            }
        }
        for c in &report.curves {
            assert!(c.points.windows(2).all(|w| w[1].tv <= w[0].tv + 1e-15));
        }
        // level 1 decays like e^{-2γθt}
        let rate = report.curves[0].observed_rate.unwrap();
        assert!((rate - 2.0).abs() < 1e-9);
        assert!(matches!(mixing_report(&params, 11, &grid), Err(Error::Resource { .. })));
    }

    #[test]
    fn moment_limits() {
        let params = p(1.0, 2.0);
        assert_eq!(moment_analytic(1.0, 0.0, &params, 1e-12).unwrap(), 0.0);
        let late = moment_analytic(1.0, 200.0, &params, 1e-12).unwrap();
        assert!((late - 0.2).abs() < 1e-12);
        assert!((moment_at_equilibrium(1.0) - 0.2).abs() < 1e-16);
        assert!(moment_analytic(1.0, 1.0, &params, 0.0).is_err());
        assert!(moment_analytic(-1.0, 1.0, &params, 1e-12).is_err());
    }

    #[test]
    fn truncation_is_minimal() {
        let (k, tail) = series_truncation(1.0, 1e-12).unwrap();
        assert!(tail < 1e-12);
        let q: f64 = 1.0 / 3.0;
        assert!(q.powi(k as i32) / (1.0 - q) >= 1e-12);
        assert!(matches!(series_truncation(1e-4, 1e-12), Err(Error::Resource { .. })));
    }

    #[test]
    fn moment_is_monotone_and_bounded() {
        for &theta in &[0.5, 1.0, 2.0, 4.0, 9.0] {
            let params = p(1.0, theta);
            for &r in &[0.5, 1.0, 2.0] {
                let grid = log_grid(1e-6, 1e2, 80).unwrap();
                let curve = moment_curve(r, &grid, &params, 1e-13).unwrap();
                let limit = moment_at_equilibrium(r);
                for pair in curve.points.windows(2) {
                    assert!(pair[1].value >= pair[0].value - 1e-15);
                }
                for pt in &curve.points {
                    assert!(pt.value >= 0.0 && pt.value <= limit + 1e-12);
                }
            }
        }
    }

    #[test]
    fn derivative_at_zero_small_theta() {
        // 3^r ≥ θ² here, so the forward difference converges linearly in h.
        for &(theta, r) in &[(0.5, 1.0), (1.0, 1.0), (2.0, 2.0)] {
            let params = p(1.0, theta);
            let h = 1e-6;
            let fd = moment_analytic(r, h, &params, 1e-15).unwrap() / h;
            let exact: f64 = (1..200).map(|k| 3f64.powf(-r * k as f64) * theta.powi(k)).sum();
            assert!((fd - exact).abs() <= 1e-3 * exact, "θ={theta}: {fd} vs {exact}");
        }
    }

    #[test]
    fn grids() {
        let g = log_grid(1e-5, 1e-3, 3).unwrap();
        assert!((g[1] - 1e-4).abs() < 1e-18);
        assert_eq!(g[2], 1e-3);
        let l = linear_grid(0.0, 1.0, 0.25).unwrap();
        assert_eq!(l, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(log_grid(1.0, 1.0, 3).is_err());
        assert!(linear_grid(0.0, 1.0, 0.0).is_err());
        assert_eq!(uniform_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn scaling_rejects_critical_and_degenerate() {
        assert!(matches!(scaling_exponent(1.0, &p(1.0, 3.0), 1e-5, 1e-3, 20), Err(Error::Domain(_))));
        assert!(matches!(scaling_exponent(1.0, &p(0.0, 2.0), 1e-5, 1e-3, 20), Err(Error::Domain(_))));
        assert!(scaling_exponent(1.0, &p(1.0, 2.0), 1e-3, 1e-5, 20).is_err());
    }

    #[test]
    fn scaling_linear_regime() {
        let fit = scaling_exponent(1.0, &p(1.0, 2.0), 1e-5, 1e-3, 101).unwrap();
        assert_eq!(fit.regime, Regime::Linear);
        assert!((fit.slope - 1.0).abs() < 0.05);
    }

    #[test]
    fn empirical_moment_trivial_cases() {
        let zero = moment_empirical(1.0, 0.0, 10, 100, &p(1.0, 2.0), 0).unwrap();
        assert_eq!(zero.mean, 0.0);
        let frozen = moment_empirical(1.0, 3.0, 10, 100, &p(0.0, 2.0), 0).unwrap();
        assert_eq!(frozen.mean, 0.0);
        assert_eq!(frozen.std_error, 0.0);
    }
}
