//! Ordered default times when contagion decays exponentially.
//!
//! After defaults at `tau^1 < ... < tau^k` every surviving name carries
//! intensity `a (1 + c sum_i exp(-d (t - tau^i)))`, so the next default has
//! conditional density
//!
//! ```text
//! f(t | tau^1..tau^k) = lambda(t) exp(-int_{tau^k}^t lambda(s) ds),
//! lambda(t) = a (n - k) (1 + c sum_i exp(-d (t - tau^i)))
//! ```
//!
//! The integrated hazard is evaluated in closed form. Only the outer
//! integrals over earlier default times are numerical, which limits the
//! analytic path to at most [`NESTING_CAP`] nested dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CdsError, Result};
use crate::mixture::HomogeneousSpec;
use crate::quadrature::{integrate_pieces, QuadratureConfig};

/// Largest number of nested default-time integrals evaluated analytically.
pub const NESTING_CAP: usize = 3;

/// Below this decay rate `(1 - e^{-d s}) / d` is replaced by its limit `s`.
pub(crate) const DECAY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub n: usize,
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

impl DecaySpec {
    pub fn new(n: usize, a: f64, c: f64, d: f64) -> Result<Self> {
        let spec = Self { n, a, c, d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.without_decay().validate()?;
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(invalid(
                "d",
                format!("decay must be non-negative and finite, got {}", self.d),
            ));
        }
        Ok(())
    }

    /// The same basket with `d = 0`.
    pub fn without_decay(&self) -> HomogeneousSpec {
        HomogeneousSpec {
            n: self.n,
            a: self.a,
            c: self.c,
        }
    }

    /// The same basket with no contagion at all. Its k-th default survival
    /// bounds this model's from above.
    pub fn independent(&self) -> HomogeneousSpec {
        HomogeneousSpec {
            n: self.n,
            a: self.a,
            c: 0.0,
        }
    }
}

/// `(1 - e^{-d s}) / d`, continuous at `d = 0`.
fn decay_kernel(d: f64, s: f64) -> f64 {
    if d < DECAY_FLOOR {
        s
    } else {
        -(-d * s).exp_m1() / d
    }
}

fn check_past(past: &[f64], t: f64) -> Result<()> {
    if past.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("past_defaults", "default times must be strictly increasing"));
    }
    if let Some(&last) = past.last() {
        if t < last {
            return Err(invalid("t", format!("t = {t} precedes the last default at {last}")));
        }
    }
    if past.first().is_some_and(|&t0| t0 < 0.0) {
        return Err(invalid("past_defaults", "default times must be non-negative"));
    }
    Ok(())
}

/// Aggregate intensity of the survivors at `t` and the integrated intensity
/// from the last default (or 0) up to `t`.
fn stage_hazard(spec: &DecaySpec, past: &[f64], t: f64) -> (f64, f64) {
    let k = past.len();
    let survivors = (spec.n - k) as f64;
    let start = past.last().copied().unwrap_or(0.0);
    let elapsed = t - start;
    // Sum of exp(-d (start - tau_i)) over earlier defaults: contagion level at `start`.
    let level_at_start: f64 = past.iter().map(|&ti| (-spec.d * (start - ti)).exp()).sum();
    let level_now: f64 = past.iter().map(|&ti| (-spec.d * (t - ti)).exp()).sum();
    let intensity = spec.a * survivors * (1.0 + spec.c * level_now);
    let integrated = spec.a * survivors * (elapsed + spec.c * level_at_start * decay_kernel(spec.d, elapsed));
    (intensity, integrated)
}

/// Density of the next default at `t` given the earlier default times.
pub fn conditional_density(spec: &DecaySpec, past_defaults: &[f64], t: f64) -> Result<f64> {
    spec.validate()?;
    check_past(past_defaults, t)?;
    if past_defaults.len() >= spec.n {
        return Err(CdsError::OutOfRange(format!(
            "{} defaults already observed in a basket of {}",
            past_defaults.len(),
            spec.n
        )));
    }
    if t < 0.0 {
        return Err(invalid("t", "time must be non-negative"));
    }
    Ok(conditional_density_unchecked(spec, past_defaults, t))
}

fn conditional_density_unchecked(spec: &DecaySpec, past: &[f64], t: f64) -> f64 {
    let (intensity, integrated) = stage_hazard(spec, past, t);
    intensity * (-integrated).exp()
}

/// Joint density of `(tau^1, ..., tau^k)`; zero off the ordered simplex.
pub fn joint_density(spec: &DecaySpec, times: &[f64]) -> Result<f64> {
    spec.validate()?;
    if times.len() > spec.n {
        return Err(CdsError::OutOfRange(format!(
            "{} times for {} names",
            times.len(),
            spec.n
        )));
    }
    if times.windows(2).any(|w| w[0] > w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return Ok(0.0);
    }
    Ok((0..times.len())
        .map(|i| conditional_density_unchecked(spec, &times[..i], times[i]))
        .product())
}

/// Integrates `leaf(t_1..t_depth)` times the joint density of those times over
/// `prefix_last < t_1 < ... < t_depth < upper`.
fn integrate_simplex<F>(
    spec: &DecaySpec,
    prefix: &mut Vec<f64>,
    depth: usize,
    upper: f64,
    quad: &QuadratureConfig,
    leaf: &F,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if depth == 0 {
        return Ok(leaf(prefix));
    }
    let lower = prefix.last().copied().unwrap_or(0.0);
    if upper <= lower {
        return Ok(0.0);
    }
    integrate_pieces(
        |s| {
            let weight = conditional_density_unchecked(spec, prefix, s);
            if weight == 0.0 {
                return Ok(0.0);
            }
            prefix.push(s);
            let inner = integrate_simplex(spec, prefix, depth - 1, upper, quad, leaf);
            prefix.pop();
            Ok(weight * inner?)
        },
        &kernel_breaks(spec.d, lower, upper),
        quad,
    )
}

/// Panel boundaries for `[lower, upper]`. With fast decay the integrand has
/// boundary layers of width `1/d` at both ends (just after the last default,
/// and just before the evaluation time); a single wide panel steps over them.
fn kernel_breaks(d: f64, lower: f64, upper: f64) -> Vec<f64> {
    let mut breaks = vec![lower, upper];
    if d < DECAY_FLOOR {
        return breaks;
    }
    for m in [1.0, 4.0, 16.0, 64.0] {
        let w = m / d;
        if 2.0 * w < upper - lower {
            breaks.push(lower + w);
            breaks.push(upper - w);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks
}

pub(crate) fn check_nesting(spec: &DecaySpec, k: usize) -> Result<()> {
    if k < 1 || k > spec.n {
        return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {}]", spec.n)));
    }
    if k - 1 > NESTING_CAP {
        return Err(CdsError::NestingCap {
            k,
            dims: k - 1,
            cap: NESTING_CAP,
        });
    }
    Ok(())
}

/// Marginal density of `tau^k` at `t`.
pub fn kth_density_decay(spec: &DecaySpec, k: usize, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    quad.validate()?;
    check_nesting(spec, k)?;
    if t < 0.0 {
        return Ok(0.0);
    }
    let mut prefix = Vec::with_capacity(k);
    integrate_simplex(spec, &mut prefix, k - 1, t, quad, &|past: &[f64]| {
        conditional_density_unchecked(spec, past, t)
    })
}

/// `P(tau^k > t)`, as the probability that fewer than `k` defaults occurred by `t`.
pub fn kth_survival_decay(spec: &DecaySpec, k: usize, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    quad.validate()?;
    check_nesting(spec, k)?;
    if t <= 0.0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    let mut prefix = Vec::with_capacity(k);
    for observed in 0..k {
        total += integrate_simplex(spec, &mut prefix, observed, t, quad, &|past: &[f64]| {
            (-stage_hazard(spec, past, t).1).exp()
        })?;
    }
    Ok(total)
}
