//! Exact event-driven simulation of the truncated process `π_N X`.
//!
//! Level `k` carries a Poisson clock of rate `γθ^k`. When it rings, digits
//! `1..k-1` are kept, digit `k` flips, and digits `k+1..N` are redrawn from
//! the ½-Bernoulli measure. A level-`k` ring never touches digits `< k`, so
//! simulating `N` levels reproduces the first `N` digits of the full process
//! exactly.
//!
//! Clocks are merged through a binary heap. Every level draws from its own
//! counter-based stream (see [`StreamKey`]), consuming one `u64` for the
//! resampled suffix and one exponential per ring, independent of `N`; the
//! depth-`n` projection of a depth-`N` path is therefore the depth-`n` path.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::params::Params;
use crate::rng::StreamKey;
use crate::word::{sample_bernoulli_word, Word};

/// Refuse paths whose expected number of events exceeds this.
pub const MAX_EXPECTED_EVENTS: f64 = 5e7;

/// Refuse Monte Carlo runs whose expected total number of events exceeds this.
pub const MAX_TOTAL_EVENTS: f64 = 2e9;

fn check_total_events(expected: f64) -> Result<()> {
    if expected <= MAX_TOTAL_EVENTS {
        Ok(())
    } else {
        Err(Error::Resource {
            what: "expected events over all samples",
            requested: if expected.is_finite() { expected as u64 } else { u64::MAX },
            limit: MAX_TOTAL_EVENTS as u64,
        })
    }
}

/// One clock ring: at `time`, digit `level` flipped and `resample` became
/// the digits after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEvent {
    pub time: f64,
    pub level: u32,
    pub resample: Word,
}

impl PathEvent {
    /// The state right after this event, given the state right before it.
    #[inline]
    pub fn apply(&self, before: Word) -> Word {
        let head = before.prefix(self.level).flip(self.level);
        head.concat(&self.resample).expect("levels add up to the path depth")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    start: Word,
    horizon: f64,
    events: Vec<PathEvent>,
    params: Params,
    seed: u64,
}

impl PathSample {
    pub fn start(&self) -> Word {
        self.start
    }

    pub fn depth(&self) -> u32 {
        self.start.level()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[PathEvent] {
        &self.events
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Right-continuous state at time `t`: every event with `time ≤ t` applied.
    pub fn state_at(&self, t: f64) -> Result<Word> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(usage(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let applied = self.events.partition_point(|e| e.time <= t);
        Ok(self.events[..applied].iter().fold(self.start, |x, e| e.apply(x)))
    }

    pub fn final_state(&self) -> Word {
        self.events.iter().fold(self.start, |x, e| e.apply(x))
    }

    /// `(event, state after event)` in time order.
    pub fn trajectory(&self) -> impl Iterator<Item = (&PathEvent, Word)> + '_ {
        self.events.iter().scan(self.start, |x, e| {
            *x = e.apply(*x);
            Some((e, *x))
        })
    }

    /// Exact number of rings per level, with every level `1..=depth` present.
    pub fn jump_count_by_level(&self) -> BTreeMap<u32, u64> {
        let mut counts: BTreeMap<u32, u64> = (1..=self.depth()).map(|k| (k, 0)).collect();
        for e in &self.events {
            *counts.get_mut(&e.level).expect("event level within depth") += 1;
        }
        counts
    }

    /// The induced path of `π_n X`: events at levels `≤ n`, suffixes cut to `n` digits.
    pub fn project(&self, n: u32) -> Result<PathSample> {
        if n > self.depth() || n == 0 {
            return Err(usage(format!("cannot project a depth-{} path to level {n}", self.depth())));
        }
        Ok(PathSample {
            start: self.start.prefix(n),
            events: self
                .events
                .iter()
                .filter(|e| e.level <= n)
                .map(|e| PathEvent {
                    resample: e.resample.prefix(n - e.level),
                    ..*e
                })
                .collect(),
            ..*self
        })
    }
}

pub fn state_at(path: &PathSample, t: f64) -> Result<Word> {
    path.state_at(t)
}

pub fn jump_count_by_level(path: &PathSample) -> BTreeMap<u32, u64> {
    path.jump_count_by_level()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ring {
    time: f64,
    level: u32,
}

impl Eq for Ring {}

impl Ord for Ring {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.level.cmp(&other.level))
    }
}

impl PartialOrd for Ring {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn validate_path_inputs(x0: &Word, horizon: f64, params: &Params) -> Result<()> {
    if x0.level() == 0 {
        return Err(usage("simulation depth must be at least 1"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(usage(format!("horizon must be positive and finite, got {horizon}")));
    }
    let expected = horizon * params.rate_sum(1, x0.level());
    if expected.is_nan() || expected > MAX_EXPECTED_EVENTS {
        return Err(Error::Resource {
            what: "expected events per path",
            requested: if expected.is_finite() { expected as u64 } else { u64::MAX },
            limit: MAX_EXPECTED_EVENTS as u64,
        });
    }
    Ok(())
}

/// Runs the clocks until `horizon`, or returns `None` as soon as a ring at
/// a level `≤ abort_at_or_below` occurs.
fn run_clocks(
    x0: &Word,
    horizon: f64,
    params: &Params,
    key: StreamKey,
    abort_at_or_below: u32,
) -> Option<Vec<PathEvent>> {
    let depth = x0.level();
    let mut streams: Vec<Option<ChaCha8Rng>> = Vec::with_capacity(depth as usize);
    let mut heap = BinaryHeap::new();
    for k in 1..=depth {
        let rate = params.level_rate(k);
        if rate > 0.0 {
            let mut stream = key.level_stream(k);
            let first = stream.sample::<f64, _>(Exp1) / rate;
            heap.push(Reverse(Ring { time: first, level: k }));
            streams.push(Some(stream));
        } else {
            streams.push(None);
        }
    }

    let mut events = Vec::new();
    let mut last_time = 0.0f64;
    while let Some(Reverse(Ring { mut time, level })) = heap.pop() {
        if time <= last_time {
            // Floating-point collision; ties have probability zero in the model.
            time = last_time.next_up();
        }
        if time > horizon {
            break;
        }
        if level <= abort_at_or_below {
            return None;
        }
        let stream = streams[level as usize - 1].as_mut().expect("ringing clocks have streams");
        let raw = stream.next_u64();
        let tail_level = depth - level;
        let resample = if tail_level == 0 {
            Word::EMPTY
        } else {
            Word::new(raw >> (64 - tail_level), tail_level).expect("fits")
        };
        events.push(PathEvent { time, level, resample });
        last_time = time;
        let next = time + stream.sample::<f64, _>(Exp1) / params.level_rate(level);
        heap.push(Reverse(Ring { time: next, level }));
    }
    Some(events)
}

/// One trajectory of `π_N X` on `[0, horizon]`, `N = level(x0)`.
pub fn simulate_path(x0: &Word, horizon: f64, params: &Params, key: StreamKey) -> Result<PathSample> {
    validate_path_inputs(x0, horizon, params)?;
    let events = run_clocks(x0, horizon, params, key, 0).expect("no abort level");
    Ok(PathSample {
        start: *x0,
        horizon,
        events,
        params: *params,
        seed: key.seed(),
    })
}

/// Draws `X_t` from `x0` without recording the path.
///
/// Uses the same clock construction: let `L` be the lowest level that rings
/// in `[0, t]`. Digits before `L` are unchanged, digit `L` is flipped iff the
/// level-`L` clock rang an odd number of times, and the digits after `L` are
/// Bernoulli because each level-`L` ring resamples them and deeper rings
/// preserve that law.
pub fn sample_terminal_state<R: Rng + ?Sized>(x0: &Word, t: f64, params: &Params, rng: &mut R) -> Word {
    let depth = x0.level();
    for k in 1..=depth {
        let mean = params.level_rate(k) * t;
        if mean == 0.0 {
            continue;
        }
        let silent = (-mean).exp();
        if rng.random::<f64>() < silent {
            continue;
        }
        // P(odd | at least one ring) = (1 + e^{-μ}) / 2.
        let odd = rng.random::<f64>() < 0.5 * (1.0 + silent);
        let head = if odd { x0.prefix(k).flip(k) } else { x0.prefix(k) };
        let tail = sample_bernoulli_word(depth - k, rng);
        return head.concat(&tail).expect("fits");
    }
    *x0
}

/// Monte Carlo estimate of the row `P_n(t)[π_n x0][·]` from independent paths.
///
/// Only the first `n` digits matter, so paths are simulated at depth `n`.
pub fn empirical_kernel(
    x0: &Word,
    t: f64,
    n: u32,
    samples: u64,
    params: &Params,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(normalize(&empirical_counts(x0, t, n, samples, params, seed)?, samples))
}

/// Histogram behind [`empirical_kernel`]; counts sum to `samples` exactly.
pub fn empirical_counts(
    x0: &Word,
    t: f64,
    n: u32,
    samples: u64,
    params: &Params,
    seed: u64,
) -> Result<Vec<u64>> {
    if n > x0.level() {
        return Err(usage(format!("resolution {n} exceeds the start word level {}", x0.level())));
    }
    if n == 0 || n > 24 {
        return Err(usage(format!("empirical kernel resolution must be in 1..=24, got {n}")));
    }
    if samples == 0 {
        return Err(usage("at least one sample is required"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(usage(format!("time must be finite and nonnegative, got {t}")));
    }
    let start = x0.prefix(n);
    let size = 1usize << n;
    if t == 0.0 {
        let mut counts = vec![0; size];
        counts[start.index()] = samples;
        return Ok(counts);
    }
    validate_path_inputs(&start, t, params)?;
    check_total_events(samples as f64 * t * params.rate_sum(1, n))?;
    let master = StreamKey::new(seed);
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; size],
            |mut acc, i| {
                let events = run_clocks(&start, t, params, master.path(i), 0).expect("no abort level");
                let end = events.iter().fold(start, |x, e| e.apply(x));
                acc[end.index()] += 1;
                acc
            },
        )
        .reduce(|| vec![0u64; size], merge_counts);
    Ok(counts)
}

pub(crate) fn merge_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

pub(crate) fn normalize(counts: &[u64], total: u64) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// A path that stayed inside the conditioning cylinder, and the number of
/// attempts the rejection sampler needed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinedPath {
    pub path: PathSample,
    pub attempts: u64,
}

/// Probability that no clock at a level `≤ level(v)` rings in `[0, horizon]`:
/// `exp(−T γ Σ_{k ≤ level(v)} θ^k) = exp(q(v, v) T)`.
pub fn confinement_probability(v: &Word, horizon: f64, params: &Params) -> f64 {
    (-horizon * params.rate_sum(1, v.level())).exp()
}

/// Default attempt budget `⌈100 / acceptance⌉`, saturating.
pub fn default_rejection_budget(v: &Word, horizon: f64, params: &Params) -> u64 {
    let budget = (100.0 * (horizon * params.rate_sum(1, v.level())).exp()).ceil();
    if budget.is_finite() && budget < u64::MAX as f64 {
        budget as u64
    } else {
        u64::MAX
    }
}

/// Rejection sampler for the process conditioned to stay in `[v]` up to `horizon`.
///
/// Attempt `j` uses the key `key.attempt(j)`; an attempt is rejected at the
/// first ring of a clock at level `≤ level(v)`.
pub fn simulate_confined(
    x0: &Word,
    v: &Word,
    horizon: f64,
    params: &Params,
    key: StreamKey,
    max_attempts: Option<u64>,
) -> Result<ConfinedPath> {
    if !v.is_prefix_of(x0) {
        return Err(domain(format!("start {x0} is not inside [{v}]")));
    }
    validate_path_inputs(x0, horizon, params)?;
    let budget = max_attempts.unwrap_or_else(|| default_rejection_budget(v, horizon, params));
    for attempt in 0..budget {
        if let Some(events) = run_clocks(x0, horizon, params, key.attempt(attempt), v.level()) {
            return Ok(ConfinedPath {
                path: PathSample {
                    start: *x0,
                    horizon,
                    events,
                    params: *params,
                    seed: key.seed(),
                },
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::RejectionBudget {
        attempts: budget,
        acceptance_probability: confinement_probability(v, horizon, params),
    })
}

/// Empirical law of `π_m X_T` under confinement to `[v]`, over `samples`
/// accepted paths, together with the total number of attempts spent.
pub fn empirical_confined(
    x0: &Word,
    v: &Word,
    horizon: f64,
    m: u32,
    samples: u64,
    params: &Params,
    seed: u64,
) -> Result<(Vec<f64>, u64)> {
    if m <= v.level() || m > x0.level() {
        return Err(usage(format!(
            "resolution {m} must lie in {}..={}",
            v.level() + 1,
            x0.level()
        )));
    }
    if samples == 0 {
        return Err(usage("at least one sample is required"));
    }
    let start = x0.prefix(m);
    let size = 1usize << (m - v.level());
    // Expected attempts per sample times an upper bound on events per attempt.
    let attempts = 1.0 / confinement_probability(v, horizon, params);
    check_total_events(samples as f64 * attempts * (1.0 + horizon * params.rate_sum(1, m)))?;
    let master = StreamKey::new(seed);
    let (counts, attempts) = (0..samples)
        .into_par_iter()
        .map(|i| {
            simulate_confined(&start, v, horizon, params, master.path(i), None)
                .map(|c| (c.path.final_state().suffix_after(v.level()).index(), c.attempts))
        })
        .try_fold(
            || (vec![0u64; size], 0u64),
            |(mut acc, total), r| {
                r.map(|(cell, used)| {
                    acc[cell] += 1;
                    (acc, total + used)
                })
            },
        )
        .try_reduce(|| (vec![0u64; size], 0), |a, b| Ok((merge_counts(a.0, b.0), a.1 + b.1)))?;
    Ok((normalize(&counts, samples), attempts))
}
