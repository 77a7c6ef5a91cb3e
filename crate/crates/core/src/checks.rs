//! The self-check suite: closed forms compared against independent numerics.

use serde::Serialize;

use crate::analysis::{mixing_report, moment_analytic, moment_empirical, total_variation, uniform_grid};
use crate::confined::confined_kernel;
use crate::error::{usage, Error, Result};
use crate::expm::{oracle_error_floor, transition_kernel_oracle, MAX_ORACLE_LEVEL};
use crate::generator::build_generator;
use crate::isometry::random_isometry;
use crate::params::Params;
use crate::simulator::empirical_kernel;
use crate::spectral::{ball_transition_probability, eigenvalues, haar_eval, transition_kernel_spectral};
use crate::word::{separation_unchecked, Separation, Word};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// The worst observed discrepancy.
    pub error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, error: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name,
            passed: error <= tolerance,
            error,
            tolerance,
            detail,
        }
    }
}

const KERNEL_TIMES: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

const ORACLE_TOLERANCE: f64 = 1e-10;

/// Tracks the comparison with the largest error-to-tolerance ratio.
#[derive(Default)]
struct Worst {
    error: f64,
    tolerance: f64,
}

impl Worst {
    fn record(&mut self, error: f64, tolerance: f64) {
        if self.tolerance == 0.0 || error * self.tolerance > self.error * tolerance {
            *self = Worst { error, tolerance };
        }
    }
}

fn spectral_vs_oracle(params: &Params, max_level: u32) -> Result<CheckResult> {
    let mut worst = Worst::default();
    for n in 1..=max_level {
        for &t in &KERNEL_TIMES {
            let spectral = transition_kernel_spectral(n, t, params)?;
            let oracle = transition_kernel_oracle(n, t, params)?;
            worst.record(
                spectral.max_abs_diff(oracle.entries()),
                ORACLE_TOLERANCE + oracle_error_floor(n, t, params),
            );
        }
    }
    Ok(CheckResult::new(
        "spectral_vs_oracle",
        worst.error,
        worst.tolerance,
        format!("levels 1..={max_level}, t in {KERNEL_TIMES:?}, tolerance 1e-10 + 4ε‖tQ‖"),
    ))
}

fn induction_identity(params: &Params) -> CheckResult {
    const K: u32 = 30;
    let lambda = eigenvalues(K, params);
    let mut worst = 0.0f64;
    for k in 1..=K {
        let terms: Vec<f64> = (0..k - 1)
            .map(|i| lambda[i as usize + 1] * 2f64.powi(i as i32 - k as i32))
            .chain(std::iter::once(-0.5 * lambda[k as usize]))
            .collect();
        let lhs: f64 = terms.iter().sum();
        let rhs = params.gamma() * params.theta().powi(k as i32);
        // For θ < 1 the terms are of size γθ while the sum is γθ^k, so the
        // attainable accuracy is relative to the largest term.
        let magnitude = terms.iter().fold(rhs.abs(), |a, x| a.max(x.abs()));
        let err = if magnitude == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / magnitude };
        worst = worst.max(err);
    }
    CheckResult::new(
        "induction_identity",
        worst,
        1e-12,
        format!("k = 1..={K}, relative to the largest summand"),
    )
}

fn eigen_equation(params: &Params, max_level: u32) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for n in 1..=max_level {
        let q = build_generator(n, params)?;
        let lambda = eigenvalues(n, params);
        let scale = lambda.iter().fold(1.0f64, |a, l| a.max(l.abs()));
        for node_level in 0..n {
            for v in Word::all(node_level) {
                let psi: Vec<f64> = Word::all(n).map(|x| haar_eval(&v, &x)).collect::<Result<_>>()?;
                let image = q.apply(&psi);
                let l = lambda[node_level as usize + 1];
                for (a, b) in image.iter().zip(&psi) {
                    worst = worst.max((a - l * b).abs() / scale);
                }
            }
        }
    }
    Ok(CheckResult::new(
        "eigen_equation",
        worst,
        1e-12,
        format!("Q_n ψ_v = λ ψ_v for every Haar function, levels 1..={max_level}, relative to the spectral radius"),
    ))
}

fn isometry_invariance(params: &Params, max_level: u32, seed: u64) -> Result<CheckResult> {
    const PER_LEVEL: u64 = 20;
    let mut mismatches = 0u64;
    for n in 1..=max_level {
        let q = build_generator(n, params)?;
        let q = q.entries();
        for i in 0..PER_LEVEL {
            let g = random_isometry(n, seed.wrapping_add(1000 * n as u64 + i))?;
            let perm = g.level_map(n)?;
            for a in 0..perm.len() {
                for b in 0..perm.len() {
                    if q[[perm[a], perm[b]]] != q[[a, b]] {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    Ok(CheckResult::new(
        "isometry_invariance",
        mismatches as f64,
        0.0,
        format!("{PER_LEVEL} random isometries per level, exact entry equality"),
    ))
}

fn ball_vs_oracle(params: &Params, max_level: u32) -> Result<CheckResult> {
    let start = Word::zeros(max_level);
    let mut worst = Worst::default();
    for &t in &KERNEL_TIMES {
        let tolerance = ORACLE_TOLERANCE + oracle_error_floor(max_level, t, params);
        let oracle = transition_kernel_oracle(max_level, t, params)?;
        let row = oracle.row(&start);
        for k in 1..=max_level {
            let mass: f64 = Word::all(max_level)
                .zip(&row)
                .filter(|(y, _)| separation_unchecked(start, *y) == Separation::At(k))
                .map(|(_, p)| p)
                .sum();
            worst.record((ball_transition_probability(k, t, params)? - mass).abs(), tolerance);
        }
    }
    Ok(CheckResult::new(
        "ball_vs_oracle",
        worst.error,
        worst.tolerance,
        format!("k = 1..={max_level} against oracle row mass, tolerance 1e-10 + 4ε‖tQ‖"),
    ))
}

fn mixing_bound_check(params: &Params, max_level: u32) -> Result<CheckResult> {
    let horizon = if params.is_degenerate() { 10.0 } else { 10.0 / params.base_rate() };
    let grid = uniform_grid(0.0, horizon, 50);
    let report = mixing_report(params, max_level.min(10), &grid)?;
    let worst_ratio = report
        .curves
        .iter()
        .flat_map(|c| c.points.iter())
        .map(|p| p.tv / p.bound)
        .fold(0.0, f64::max);
    let residual_ok = report.residuals.iter().all(|r| r.pass);
    let mut result = CheckResult::new(
        "mixing_bound",
        worst_ratio,
        1.0,
        format!(
            "max tv / (1.5 e^(-γθt)) over 50 times in [0, {horizon}]; {} violations; level-1 residual {}",
            report.violations.len(),
            if residual_ok { "within bounds" } else { "out of bounds" }
        ),
    );
    result.passed &= residual_ok;
    Ok(result)
}

fn invariant_uniform(params: &Params, max_level: u32) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for n in 1..=max_level {
        let size = 1usize << n;
        let uniform = 1.0 / size as f64;
        for &t in &KERNEL_TIMES {
            let k = transition_kernel_spectral(n, t, params)?;
            for col in k.entries().columns() {
                worst = worst.max((col.sum() * uniform - uniform).abs());
            }
        }
    }
    Ok(CheckResult::new(
        "invariant_uniform",
        worst,
        1e-12,
        "b P_n(t) = b at every computed level".to_string(),
    ))
}

fn empirical_vs_analytic(params: &Params, max_level: u32, seed: u64) -> Result<Vec<CheckResult>> {
    const SAMPLES: u64 = 20_000;
    let n = max_level.min(4);
    // About ten level-n rings per path at most, so large θ stays cheap.
    let t = if params.is_degenerate() { 0.3 } else { 0.3f64.min(10.0 / params.rate_sum(1, n)) };
    let start = Word::zeros(n);
    let exact = transition_kernel_spectral(n, t, params)?.row(&start);
    let empirical = empirical_kernel(&start, t, n, SAMPLES, params, seed)?;
    let tv = total_variation(&exact, &empirical);
    let kernel = CheckResult::new(
        "empirical_kernel",
        tv,
        0.03,
        format!("TV of {SAMPLES} simulated paths at level {n}, t = {t}"),
    );

    let (r, depth) = (1.0, 20);
    let estimate = moment_empirical(r, t, depth, SAMPLES, params, seed)?;
    let analytic = moment_analytic(r, t, params, 1e-12)?;
    let moment = CheckResult::new(
        "empirical_moment",
        (estimate.mean - analytic).abs(),
        3.0 * estimate.std_error + estimate.truncation_bias,
        format!("M_1({t}) at depth {depth}: {} vs {analytic}", estimate.mean),
    );
    Ok(vec![kernel, moment])
}

fn self_similarity(params: &Params, max_level: u32) -> Result<CheckResult> {
    let v = Word::zeros(1);
    let mut worst = 0.0f64;
    for m in 2..=max_level.max(2) {
        for &s in &[0.1, 1.0] {
            let confined = confined_kernel(&v, s, params, m)?;
            let scaled = transition_kernel_spectral(m - 1, params.theta() * s, params)?;
            worst = worst.max(confined.kernel().max_abs_diff(scaled.entries()));
        }
    }
    Ok(CheckResult::new(
        "self_similarity",
        worst,
        1e-10,
        format!("confined kernel in [0] against P_(m-1)(θs), m = 2..={}", max_level.max(2)),
    ))
}

/// Runs every check at levels up to `max_level` (at most the oracle cap).
pub fn run_selfcheck(params: &Params, max_level: u32, seed: u64) -> Result<Vec<CheckResult>> {
    if max_level < 1 {
        return Err(usage("selfcheck needs max level at least 1"));
    }
    if max_level > MAX_ORACLE_LEVEL {
        return Err(Error::Resource {
            what: "selfcheck level",
            requested: max_level as u64,
            limit: MAX_ORACLE_LEVEL as u64,
        });
    }
    let mut results = vec![
        spectral_vs_oracle(params, max_level)?,
        induction_identity(params),
        eigen_equation(params, max_level)?,
        isometry_invariance(params, max_level, seed)?,
        ball_vs_oracle(params, max_level)?,
        mixing_bound_check(params, max_level)?,
        invariant_uniform(params, max_level)?,
    ];
    results.extend(empirical_vs_analytic(params, max_level, seed)?);
    results.push(self_similarity(params, max_level)?);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_at_small_level() {
        let results = run_selfcheck(&Params::new(1.0, 2.0).unwrap(), 4, 42).unwrap();
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn degenerate_params_pass() {
        let results = run_selfcheck(&Params::new(0.0, 2.0).unwrap(), 3, 1).unwrap();
        assert!(results.iter().all(|r| r.passed), "{results:?}");
    }

    #[test]
    fn caps() {
        let p = Params::new(1.0, 1.0).unwrap();
        assert!(matches!(run_selfcheck(&p, 9, 0), Err(Error::Resource { .. })));
        assert!(matches!(run_selfcheck(&p, 0, 0), Err(Error::Usage(_))));
    }
}
