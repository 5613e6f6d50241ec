//! Simulation of ordered default times for every model variant.
//!
//! Path `i` draws from its own ChaCha8 stream (`seed`, stream `i`), paths are
//! simulated in contiguous chunks on the rayon pool and every reduction runs
//! in path order, so results depend only on `(seed, paths)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::DECAY_FLOOR;
use crate::error::{invalid, CdsError, Result};
use crate::hetero::TwoGroupSpec;
use crate::mixture::HomogeneousSpec;
use crate::model::{GeneralIntensitySpec, ModelSpec};
use crate::pricing::SwapContract;
use crate::regime::TwoStateSpec;

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub paths: usize,
    pub seed: u64,
    /// Reserved; must be off.
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default = "default_chunks")]
    pub parallel_chunks: usize,
}

fn default_chunks() -> usize {
    64
}

impl SimulationPlan {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            antithetic: false,
            parallel_chunks: default_chunks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 1 {
            return Err(invalid("paths", "at least one path is required"));
        }
        if self.parallel_chunks < 1 {
            return Err(invalid("parallel_chunks", "must be at least 1"));
        }
        if self.antithetic {
            return Err(CdsError::Unsupported(
                "antithetic sampling is reserved and not implemented".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub paths_used: usize,
}

/// Ordered default times of every path, `depth` per path (`f64::INFINITY`
/// when fewer defaults occur), plus group labels (1 or 2) for two-group models.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultSamples {
    pub depth: usize,
    pub times: Vec<f64>,
    pub groups: Option<Vec<u8>>,
}

impl DefaultSamples {
    pub fn paths(&self) -> usize {
        if self.depth == 0 {
            0
        } else {
            self.times.len() / self.depth
        }
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.times[i * self.depth..(i + 1) * self.depth]
    }

    /// `tau^k` on path `i`.
    pub fn kth(&self, i: usize, k: usize) -> f64 {
        self.times[i * self.depth + k - 1]
    }

    /// Group-1 defaults among the first `k` on path `i`.
    pub fn group_one_count(&self, i: usize, k: usize) -> Option<usize> {
        let g = self.groups.as_ref()?;
        Some(
            g[i * self.depth..i * self.depth + k]
                .iter()
                .filter(|&&x| x == 1)
                .count(),
        )
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// One path: fills `times` (and `groups`) with the first `times.len()` defaults.
fn simulate_path(model: &ModelSpec, rng: &mut ChaCha8Rng, times: &mut [f64], groups: &mut [u8]) -> Result<()> {
    times.fill(f64::INFINITY);
    match model {
        ModelSpec::Homogeneous(s) => homogeneous_path(s, rng, times),
        ModelSpec::TwoGroup(s) => two_group_path(s, rng, times, groups),
        ModelSpec::RegimeSwitching(s) => regime_path(s, rng, times),
        ModelSpec::Decay(s) => general_path(&GeneralIntensitySpec::from_decay(s), rng, times)?,
        ModelSpec::General(s) => general_path(s, rng, times)?,
    }
    Ok(())
}

fn homogeneous_path(s: &HomogeneousSpec, rng: &mut ChaCha8Rng, times: &mut [f64]) {
    let mut now = 0.0;
    for (i, slot) in times.iter_mut().enumerate() {
        let rate = s.a * (s.n - i) as f64 * (1.0 + i as f64 * s.c);
        now += exp1(rng) / rate;
        *slot = now;
    }
}

fn two_group_path(s: &TwoGroupSpec, rng: &mut ChaCha8Rng, times: &mut [f64], groups: &mut [u8]) {
    let (mut now, mut m) = (0.0, 0usize);
    for i in 0..times.len() {
        let g2 = i - m;
        let z = s.a * (s.n1 - m) as f64 * (1.0 + s.b * m as f64 + s.c * g2 as f64);
        let zt = s.a_tilde * (s.n2 - g2) as f64 * (1.0 + s.b_tilde * m as f64 + s.c_tilde * g2 as f64);
        now += exp1(rng) / (z + zt);
        times[i] = now;
        if rng.random::<f64>() * (z + zt) < z {
            groups[i] = 1;
            m += 1;
        } else {
            groups[i] = 2;
        }
    }
}

/// Walks the piecewise-linear integrated hazard across regime switches.
fn regime_path(s: &TwoStateSpec, rng: &mut ChaCha8Rng, times: &mut [f64]) {
    let mut now = 0.0;
    let mut state = s.initial_state;
    let mut next_switch = now + exp1(rng) / s.exit_rate(state);
    for (i, slot) in times.iter_mut().enumerate() {
        let beta = (s.n - i) as f64 * (1.0 + i as f64 * s.c);
        let mut target = exp1(rng);
        loop {
            let rate = s.level(state) * beta;
            let reach = rate * (next_switch - now);
            if target <= reach {
                now += target / rate;
                break;
            }
            target -= reach;
            now = next_switch;
            state = 3 - state;
            next_switch = now + exp1(rng) / s.exit_rate(state);
        }
        *slot = now;
    }
}

/// Integrated hazard of the survivors over `[now, now + s]` and the total intensity at `now + s`.
fn general_hazard(spec: &GeneralIntensitySpec, alive: &[bool], past: &[(usize, f64)], now: f64, s: f64) -> (f64, f64) {
    let (mut h, mut rate) = (0.0, 0.0);
    for i in (0..spec.n()).filter(|&i| alive[i]) {
        h += spec.a[i] * s;
        rate += spec.a[i];
        for &(j, tj) in past {
            let (b, d) = (spec.b[i][j], spec.d[i][j]);
            if b == 0.0 {
                continue;
            }
            let age = now - tj;
            if d < DECAY_FLOOR {
                h += b * s;
                rate += b;
            } else {
                let w = (-d * age).exp();
                h += b * w * (-(-d * s).exp_m1()) / d;
                rate += b * w * (-d * s).exp();
            }
        }
    }
    (h, rate)
}

/// Solves `H(s) = target` by Newton steps kept inside a shrinking bracket.
pub fn invert_integrated_hazard(h: impl Fn(f64) -> (f64, f64), target: f64, upper: f64) -> Result<f64> {
    let tol = ROOT_TOL * target.max(1.0);
    let (mut lo, mut hi) = (0.0, upper);
    let mut s = upper * 0.5;
    let mut last = f64::INFINITY;
    for _ in 0..ROOT_MAX_ITER {
        let (value, slope) = h(s);
        let residual = value - target;
        last = residual;
        if residual.abs() <= tol {
            return Ok(s);
        }
        if residual > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - residual / slope;
        s = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            let (value, _) = h(s);
            if (value - target).abs() <= tol {
                return Ok(s);
            }
            break;
        }
    }
    Err(CdsError::RootFinding {
        target,
        lower: lo,
        upper: hi,
        residual: last,
    })
}

fn general_path(spec: &GeneralIntensitySpec, rng: &mut ChaCha8Rng, times: &mut [f64]) -> Result<()> {
    let n = spec.n();
    let mut alive = vec![true; n];
    let mut past: Vec<(usize, f64)> = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for slot in times.iter_mut() {
        let target = exp1(rng);
        let base: f64 = (0..n).filter(|&i| alive[i]).map(|i| spec.a[i]).sum();
        // H(s) >= base * s, so the root lies below target / base.
        let s = invert_integrated_hazard(|s| general_hazard(spec, &alive, &past, now, s), target, target / base)?;
        now += s;
        *slot = now;
        // Pick the defaulter in proportion to its intensity at the default time.
        let intensities: Vec<(usize, f64)> = (0..n)
            .filter(|&i| alive[i])
            .map(|i| {
                let extra: f64 = past
                    .iter()
                    .map(|&(j, tj)| spec.b[i][j] * (-spec.d[i][j] * (now - tj)).exp())
                    .sum();
                (i, spec.a[i] + extra)
            })
            .collect();
        let total: f64 = intensities.iter().map(|x| x.1).sum();
        let mut u = rng.random::<f64>() * total;
        let mut who = intensities[intensities.len() - 1].0;
        for &(i, l) in &intensities {
            if u < l {
                who = i;
                break;
            }
            u -= l;
        }
        alive[who] = false;
        past.push((who, now));
    }
    Ok(())
}

/// Simulates the first `depth` ordered defaults on every path.
pub fn sample_ordered_defaults(model: &ModelSpec, depth: usize, plan: &SimulationPlan) -> Result<DefaultSamples> {
    model.validate()?;
    plan.validate()?;
    if depth < 1 || depth > model.names() {
        return Err(CdsError::OutOfRange(format!(
            "depth = {depth} must lie in [1, {}]",
            model.names()
        )));
    }
    let chunks = plan.parallel_chunks.min(plan.paths);
    let per_chunk = plan.paths.div_ceil(chunks);
    let grouped = matches!(model, ModelSpec::TwoGroup(_));
    let parts: Vec<Result<(Vec<f64>, Vec<u8>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * per_chunk;
            let end = ((c + 1) * per_chunk).min(plan.paths);
            let count = end.saturating_sub(start);
            let mut times = vec![0.0; count * depth];
            let mut groups = vec![0u8; if grouped { count * depth } else { depth }];
            for (p, path) in (start..end).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                rng.set_stream(path as u64);
                let slot = &mut times[p * depth..(p + 1) * depth];
                let gslot = if grouped {
                    &mut groups[p * depth..(p + 1) * depth]
                } else {
                    &mut groups[..]
                };
                simulate_path(model, &mut rng, slot, gslot)?;
            }
            if !grouped {
                groups.clear();
            }
            Ok((times, groups))
        })
        .collect();
    let mut times = Vec::with_capacity(plan.paths * depth);
    let mut groups = Vec::new();
    for part in parts {
        let (t, g) = part?;
        times.extend(t);
        groups.extend(g);
    }
    Ok(DefaultSamples {
        depth,
        times,
        groups: grouped.then_some(groups),
    })
}

/// Discounted protection payoff (before the loss factor) and unit premium leg of one path.
fn path_legs(tau: f64, contract: &SwapContract) -> (f64, f64) {
    let r = contract.rate;
    let protection = if tau <= contract.maturity {
        (-r * tau).exp()
    } else {
        0.0
    };
    let mut premium = 0.0;
    for (lo, hi) in contract.periods() {
        if tau > hi {
            premium += (hi - lo) * (-r * hi).exp();
        } else if tau > lo {
            premium += (tau - lo) * (-r * tau).exp();
        }
    }
    (protection, premium)
}

/// Ratio estimate of mean protection over mean premium with a delta-method error.
fn ratio_estimate(pairs: &[(f64, f64)]) -> Result<EstimateWithError> {
    let n = pairs.len() as f64;
    let (sp, sq) = pairs.iter().fold((0.0, 0.0), |(a, b), (p, q)| (a + p, b + q));
    let (mp, mq) = (sp / n, sq / n);
    if !(mq > 0.0) {
        return Err(CdsError::ZeroPremiumLeg(mq));
    }
    let ratio = mp / mq;
    let (mut vp, mut vq, mut cpq) = (0.0, 0.0, 0.0);
    for (p, q) in pairs {
        let (dp, dq) = (p - mp, q - mq);
        vp += dp * dp;
        vq += dq * dq;
        cpq += dp * dq;
    }
    let denom = (n - 1.0).max(1.0);
    let (vp, vq, cpq) = (vp / denom, vq / denom, cpq / denom);
    let var = ((vp - 2.0 * ratio * cpq + ratio * ratio * vq) / (n * mq * mq)).max(0.0);
    Ok(EstimateWithError {
        value: ratio,
        std_error: var.sqrt(),
        paths_used: pairs.len(),
    })
}

/// Swap-rate estimates for several seniorities from one set of paths.
pub fn mc_swap_rates(
    model: &ModelSpec,
    contract: &SwapContract,
    ks: &[usize],
    plan: &SimulationPlan,
) -> Result<Vec<EstimateWithError>> {
    contract.validate()?;
    let Some(&depth) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    if ks.contains(&0) {
        return Err(CdsError::OutOfRange("k must be at least 1".into()));
    }
    let samples = sample_ordered_defaults(model, depth, plan)?;
    let loss = 1.0 - contract.recovery;
    ks.iter()
        .map(|&k| {
            let pairs: Vec<(f64, f64)> = (0..samples.paths())
                .map(|i| {
                    let (p, q) = path_legs(samples.kth(i, k), contract);
                    (loss * p, q)
                })
                .collect();
            ratio_estimate(&pairs)
        })
        .collect()
}

pub fn mc_swap_rate(
    model: &ModelSpec,
    contract: &SwapContract,
    k: usize,
    plan: &SimulationPlan,
) -> Result<EstimateWithError> {
    Ok(mc_swap_rates(model, contract, &[k], plan)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    /// `P(edges[i] < tau^k <= edges[i + 1])`
    pub bins: Vec<EstimateWithError>,
    /// `P(tau^k <= edges[0])`
    pub below: EstimateWithError,
    /// `P(tau^k > last edge)`
    pub tail: EstimateWithError,
}

fn frequency(count: usize, paths: usize) -> EstimateWithError {
    let p = count as f64 / paths as f64;
    EstimateWithError {
        value: p,
        std_error: (p * (1.0 - p) / paths as f64).sqrt(),
        paths_used: paths,
    }
}

/// Bin probabilities of `tau^k` with binomial standard errors.
pub fn mc_density_histogram(
    model: &ModelSpec,
    k: usize,
    edges: &[f64],
    plan: &SimulationPlan,
) -> Result<DensityHistogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || !(edges[0] >= 0.0) {
        return Err(invalid(
            "edges",
            "need at least two strictly increasing, non-negative bin edges",
        ));
    }
    let samples = sample_ordered_defaults(model, k, plan)?;
    let paths = samples.paths();
    let mut counts = vec![0usize; edges.len() + 1];
    for i in 0..paths {
        let t = samples.kth(i, k);
        // Index of the first edge >= t: 0 is "below", len is "tail".
        counts[edges.partition_point(|&e| e < t)] += 1;
    }
    Ok(DensityHistogram {
        edges: edges.to_vec(),
        bins: counts[1..edges.len()].iter().map(|&c| frequency(c, paths)).collect(),
        below: frequency(counts[0], paths),
        tail: frequency(counts[edges.len()], paths),
    })
}

/// Estimate of `P(N^k = m)` for a two-group model.
pub fn mc_group_probability(
    spec: &TwoGroupSpec,
    k: usize,
    m: usize,
    plan: &SimulationPlan,
) -> Result<EstimateWithError> {
    let samples = sample_ordered_defaults(&ModelSpec::TwoGroup(*spec), k, plan)?;
    let paths = samples.paths();
    let hits = (0..paths).filter(|&i| samples.group_one_count(i, k) == Some(m)).count();
    Ok(frequency(hits, paths))
}
