//! Exact law of the k-th default time in the homogeneous constant-contagion model.
//!
//! With `n` names, base rate `a` and contagion multiplier `c`, the gap between
//! the i-th and (i+1)-th default is exponential with rate `a (1 + i c) (n - i)`,
//! so `tau^k` is hypoexponential. Its density is the signed mixture
//!
//! ```text
//! f(t) = sum_j alpha[k][j] * a * exp(-beta[j] * a * t),   beta[j] = (n - j)(1 + j c)
//! ```
//!
//! whose weights come from a one-step recursion in `k`. The same weights also
//! have a product/factorial closed form, used here as a cross-check.

use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{invalid, CdsError, Result};

/// Relative gap below which two stage rates are treated as colliding.
pub const COLLISION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousSpec {
    pub n: usize,
    pub a: f64,
    pub c: f64,
}

impl HomogeneousSpec {
    pub fn new(n: usize, a: f64, c: f64) -> Result<Self> {
        let spec = Self { n, a, c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(invalid("n", "at least one name is required"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid(
                "a",
                format!("base rate must be positive and finite, got {}", self.a),
            ));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(invalid(
                "c",
                format!("contagion must be non-negative and finite, got {}", self.c),
            ));
        }
        Ok(())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k < 1 || k > self.n {
            return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {}]", self.n)));
        }
        Ok(())
    }
}

/// Stage-rate multiplier after `j` defaults: `(n - j)(1 + j c)`.
pub fn beta(n: usize, c: f64, j: usize) -> Result<f64> {
    if j >= n {
        return Err(CdsError::OutOfRange(format!(
            "j = {j} must lie in [0, {}]",
            n.saturating_sub(1)
        )));
    }
    Ok(((n - j) as f64) * (1.0 + j as f64 * c))
}

/// Fails with the first colliding pair if any two rates sit closer than
/// `COLLISION_TOL * max rate`.
pub(crate) fn check_distinct(rates: &[f64], label: impl Fn(usize) -> String) -> Result<()> {
    let max = rates.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let tol = COLLISION_TOL * max;
    for i in 0..rates.len() {
        for j in (i + 1)..rates.len() {
            if (rates[i] - rates[j]).abs() < tol {
                return Err(CdsError::DegenerateRates {
                    first: label(i),
                    first_value: rates[i],
                    second: label(j),
                    second_value: rates[j],
                });
            }
        }
    }
    Ok(())
}

/// All `n` stage multipliers, checked pairwise distinct.
pub(crate) fn distinct_betas(n: usize, c: f64) -> Result<Vec<f64>> {
    let betas: Vec<f64> = (0..n).map(|j| ((n - j) as f64) * (1.0 + j as f64 * c)).collect();
    check_distinct(&betas, |j| format!("beta_{j}"))?;
    Ok(betas)
}

/// Recursion weights `alpha[k][0..k]` together with `beta[0..k]`, both in
/// double-double.
///
/// The last weight of each stage is minus a sum that cancels by up to six
/// orders of magnitude at n = 10, which plain f64 cannot absorb.
pub(crate) fn mixture_weights_dd(n: usize, c: f64, k: usize) -> Result<(Vec<Dd>, Vec<Dd>)> {
    distinct_betas(n, c)?;
    let wide: Vec<Dd> = (0..k)
        .map(|j| Dd::from((n - j) as f64) * (Dd::from(j as f64) * Dd::from(c) + Dd::from(1.0)))
        .collect();
    let mut alpha = vec![Dd::from(n as f64)];
    for stage in 1..k {
        let bk = wide[stage];
        let mut next: Vec<Dd> = alpha.iter().zip(&wide).map(|(&w, &bj)| w * (bk / (bk - bj))).collect();
        let tail = -next.iter().fold(Dd::ZERO, |acc, &x| acc + x);
        next.push(tail);
        alpha = next;
    }
    Ok((alpha, wide))
}

pub(crate) fn mixture_weights(n: usize, c: f64, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (alpha, betas) = mixture_weights_dd(n, c, k)?;
    Ok((
        alpha.into_iter().map(Dd::to_f64).collect(),
        betas.into_iter().map(Dd::to_f64).collect(),
    ))
}

/// One term of a mixture. `weight_lo` and `beta_lo` hold the rounding
/// residuals of weights computed in extended precision (zero otherwise); only
/// the moment sums use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub weight: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub weight_lo: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub beta_lo: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl MixtureTerm {
    pub fn new(weight: f64, beta: f64) -> Self {
        Self {
            weight,
            beta,
            weight_lo: 0.0,
            beta_lo: 0.0,
        }
    }

    fn from_dd(weight: Dd, beta: Dd) -> Self {
        let (weight, weight_lo) = weight.split();
        let (beta, beta_lo) = beta.split();
        Self {
            weight,
            beta,
            weight_lo,
            beta_lo,
        }
    }

    fn weight_dd(&self) -> Dd {
        Dd::new(self.weight, self.weight_lo)
    }

    fn beta_dd(&self) -> Dd {
        Dd::new(self.beta, self.beta_lo)
    }
}

/// Signed exponential mixture with density `sum_j w_j * s * exp(-beta_j * s * t)`.
///
/// `scale` is the base rate `a` for the homogeneous family and 1 for laws
/// whose weights already absorb their rates (the two-group model). The
/// absolute rate of term `j` is `rho_j = beta_j * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialMixture {
    pub scale: f64,
    pub terms: Vec<MixtureTerm>,
}

impl ExponentialMixture {
    pub fn new(scale: f64, terms: Vec<MixtureTerm>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", "must be positive and finite"));
        }
        if let Some(t) = terms.iter().find(|t| !(t.beta > 0.0) || !t.weight.is_finite()) {
            return Err(invalid("terms", format!("every rate must be positive, got {t:?}")));
        }
        Ok(Self { scale, terms })
    }

    /// Builds a mixture from `(amplitude, rate)` pairs with density
    /// `sum amplitude * exp(-rate * t)`.
    pub fn from_absolute(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            1.0,
            pairs
                .iter()
                .map(|&(amplitude, rate)| MixtureTerm::new(amplitude, rate))
                .collect(),
        )
    }

    /// `(amplitude, rate)` pairs: density is `sum amplitude * exp(-rate * t)`.
    pub fn absolute_terms(&self) -> Vec<(f64, f64)> {
        self.terms
            .iter()
            .map(|t| (t.weight * self.scale, t.beta * self.scale))
            .collect()
    }

    /// Same law expressed with another time scale: `w s` and `beta s` are kept.
    pub fn rescaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", "must be positive and finite"));
        }
        let f = self.scale / scale;
        Ok(Self {
            scale,
            terms: self
                .terms
                .iter()
                .map(|t| MixtureTerm {
                    weight: t.weight * f,
                    beta: t.beta * f,
                    weight_lo: t.weight_lo * f,
                    beta_lo: t.beta_lo * f,
                })
                .collect(),
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.beta).collect()
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let s = self.scale;
        self.terms.iter().map(|m| m.weight * s * (-m.beta * s * t).exp()).sum()
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let s = self.scale;
        self.terms
            .iter()
            .map(|m| m.weight / m.beta * (-m.beta * s * t).exp())
            .sum()
    }

    /// `sum_j w_j / beta_j`; equals one for a proper density.
    pub fn total_mass(&self) -> f64 {
        self.terms.iter().map(|m| m.weight / m.beta).sum()
    }

    /// Density at the origin divided by `scale`.
    // Both sums cancel heavily for many-stage laws; accumulate them wide.
    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().fold(Dd::ZERO, |acc, m| acc + m.weight_dd()).to_f64()
    }

    pub fn mean(&self) -> f64 {
        let scale = Dd::from(self.scale);
        self.terms
            .iter()
            .fold(Dd::ZERO, |acc, m| {
                let b = m.beta_dd();
                acc + m.weight_dd() / (scale * b * b)
            })
            .to_f64()
    }

    /// `max |w| / min beta`: how much cancellation the signed sum carries.
    pub fn condition_number(&self) -> f64 {
        let max_w = self.terms.iter().fold(0.0f64, |m, t| m.max(t.weight.abs()));
        let min_b = self.terms.iter().fold(f64::INFINITY, |m, t| m.min(t.beta));
        max_w / min_b
    }
}

/// Law of `tau^k` for `1 <= k <= n`.
pub fn kth_default_mixture(spec: &HomogeneousSpec, k: usize) -> Result<ExponentialMixture> {
    spec.validate()?;
    spec.check_k(k)?;
    let (alpha, betas) = mixture_weights_dd(spec.n, spec.c, k)?;
    ExponentialMixture::new(
        spec.a,
        alpha
            .into_iter()
            .zip(betas)
            .map(|(weight, beta)| MixtureTerm::from_dd(weight, beta))
            .collect(),
    )
}

/// Product/factorial form of `alpha[k][j]`.
pub fn closed_form_alpha(n: usize, c: f64, k: usize, j: usize) -> Result<f64> {
    if k < 1 || k > n {
        return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {n}]")));
    }
    if j >= k {
        return Err(CdsError::OutOfRange(format!("j = {j} must lie in [0, {}]", k - 1)));
    }
    let mut value = 1.0;
    // n! / (n - k)!
    for m in (n - k + 1)..=n {
        value *= m as f64;
    }
    for m in 1..k {
        value *= 1.0 + m as f64 * c;
    }
    for m in 1..=j {
        value /= m as f64;
    }
    for m in 1..=(k - 1 - j) {
        value /= m as f64;
    }
    for m in (0..k).filter(|&m| m != j) {
        let factor = 1.0 + (m as f64 + j as f64 - n as f64) * c;
        if factor.abs() < COLLISION_TOL * (1.0 + n as f64 * c) {
            return Err(CdsError::DegenerateRates {
                first: format!("beta_{j}"),
                first_value: ((n - j) as f64) * (1.0 + j as f64 * c),
                second: format!("beta_{m}"),
                second_value: ((n - m) as f64) * (1.0 + m as f64 * c),
            });
        }
        value /= factor;
    }
    if (k - 1 - j) % 2 == 1 {
        value = -value;
    }
    Ok(value)
}

/// `E[tau^k] = sum_{i<k} 1 / (a (1 + i c)(n - i))`, from the stage decomposition.
pub fn kth_default_mean(spec: &HomogeneousSpec, k: usize) -> Result<f64> {
    spec.validate()?;
    spec.check_k(k)?;
    Ok((0..k)
        .map(|i| 1.0 / (spec.a * (1.0 + i as f64 * spec.c) * (spec.n - i) as f64))
        .sum())
}

/// c-derivatives of the mixture weights, for analytic swap-rate sensitivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSensitivity {
    pub base: ExponentialMixture,
    /// `d alpha[k][j] / dc`
    pub dalpha_dc: Vec<f64>,
    /// `d beta[j] / dc = (n - j) j`
    pub dbeta_dc: Vec<f64>,
}

impl MixtureSensitivity {
    /// `d f / d a = sum_j alpha_j (1 - beta_j a t) exp(-beta_j a t)`.
    pub fn density_da(&self, t: f64) -> f64 {
        let a = self.base.scale;
        self.base
            .terms
            .iter()
            .map(|m| {
                let x = m.beta * a * t;
                m.weight * (1.0 - x) * (-x).exp()
            })
            .sum()
    }

    /// `d f / d c = sum_j (alpha'_j - alpha_j beta'_j a t) a exp(-beta_j a t)`.
    pub fn density_dc(&self, t: f64) -> f64 {
        let a = self.base.scale;
        self.base
            .terms
            .iter()
            .zip(self.dalpha_dc.iter().zip(&self.dbeta_dc))
            .map(|(m, (&da, &db))| (da - m.weight * db * a * t) * a * (-m.beta * a * t).exp())
            .sum()
    }
}

/// Weights and their c-derivatives via the product rule on
/// `gamma[k][j] = beta_k / (beta_k - beta_j)`.
pub fn sensitivity_coeffs(spec: &HomogeneousSpec, k: usize) -> Result<MixtureSensitivity> {
    spec.validate()?;
    spec.check_k(k)?;
    let n = spec.n;
    let betas = distinct_betas(n, spec.c)?;
    let dbetas: Vec<f64> = (0..n).map(|j| ((n - j) * j) as f64).collect();

    let mut alpha = vec![n as f64];
    let mut dalpha = vec![0.0];
    for stage in 1..k {
        let (bk, dbk) = (betas[stage], dbetas[stage]);
        let mut next = Vec::with_capacity(stage + 1);
        let mut dnext = Vec::with_capacity(stage + 1);
        for j in 0..stage {
            let (bj, dbj) = (betas[j], dbetas[j]);
            let gap = bk - bj;
            let gamma = bk / gap;
            let dgamma = (bk * dbj - bj * dbk) / (gap * gap);
            next.push(alpha[j] * gamma);
            dnext.push(alpha[j] * dgamma + dalpha[j] * gamma);
        }
        let tail = -next.iter().sum::<f64>();
        let dtail = -dnext.iter().sum::<f64>();
        next.push(tail);
        dnext.push(dtail);
        alpha = next;
        dalpha = dnext;
    }
    let base = kth_default_mixture(spec, k)?;
    Ok(MixtureSensitivity {
        base,
        dalpha_dc: dalpha,
        dbeta_dc: dbetas[..k].to_vec(),
    })
}
