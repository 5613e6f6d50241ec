//! k-th-to-default swap pricing.
//!
//! ```text
//! S_k = (1 - R) E[exp(-r tau) 1{tau <= T}]
//!       / sum_i ( D_i exp(-r t_i) P(tau > t_i) + E[(tau - t_{i-1}) exp(-r tau) 1{t_{i-1} < tau <= t_i}] )
//! ```
//!
//! Exponential-mixture laws are priced in closed form, absorbing-chain laws
//! by uniformization (exact, and free of the cancellation that the signed
//! mixture sums suffer when many stages have small rates); other laws by
//! adaptive quadrature on each payment interval.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CdsError, Result};
use crate::mixture::{sensitivity_coeffs, ExponentialMixture, HomogeneousSpec};
use crate::phase::PhaseTypeLaw;
use crate::quadrature::{integrate, QuadratureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapContract {
    pub maturity: f64,
    /// `t_1 < ... < t_N = maturity`; `t_0 = 0` is implicit.
    pub payment_times: Vec<f64>,
    pub recovery: f64,
    /// Continuously compounded riskless rate.
    pub rate: f64,
}

impl SwapContract {
    pub fn new(maturity: f64, payment_times: Vec<f64>, recovery: f64, rate: f64) -> Result<Self> {
        let c = Self {
            maturity,
            payment_times,
            recovery,
            rate,
        };
        c.validate()?;
        Ok(c)
    }

    /// Equally spaced payments every `period` years up to `maturity`.
    pub fn regular(maturity: f64, period: f64, recovery: f64, rate: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("period", format!("must be positive, got {period}")));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be positive, got {maturity}")));
        }
        let count = (maturity / period - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (1..count).map(|i| i as f64 * period).collect();
        times.push(maturity);
        Self::new(maturity, times, recovery, rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be positive, got {}", self.maturity)));
        }
        if !(0.0..=1.0).contains(&self.recovery) {
            return Err(invalid(
                "recovery",
                format!("must lie in [0, 1], got {}", self.recovery),
            ));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", format!("must be non-negative, got {}", self.rate)));
        }
        let Some(&last) = self.payment_times.last() else {
            return Err(invalid("payment_times", "at least one payment date is required"));
        };
        let mut prev = 0.0;
        for &t in &self.payment_times {
            if !(t > prev) {
                return Err(invalid(
                    "payment_times",
                    format!("dates must increase strictly from 0, got {t} after {prev}"),
                ));
            }
            prev = t;
        }
        if (last - self.maturity).abs() > 1e-12 * self.maturity.max(1.0) {
            return Err(invalid(
                "payment_times",
                format!("last date {last} must equal the maturity {}", self.maturity),
            ));
        }
        Ok(())
    }

    /// `(t_{i-1}, t_i)` for every payment period.
    pub fn periods(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        std::iter::once(0.0)
            .chain(self.payment_times.iter().copied())
            .zip(self.payment_times.iter().copied())
    }
}

pub type Evaluator = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Law of the default time `tau^k` as seen by the pricer.
#[derive(Clone)]
pub enum DefaultLaw {
    Mixture(ExponentialMixture),
    Chain(PhaseTypeLaw),
    Numeric {
        density: Evaluator,
        survival: Evaluator,
        /// Interior points where the density is not smooth.
        breaks: Vec<f64>,
        quad: QuadratureConfig,
    },
}

impl fmt::Debug for DefaultLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mixture(m) => f.debug_tuple("Mixture").field(m).finish(),
            Self::Chain(c) => f.debug_tuple("Chain").field(c).finish(),
            Self::Numeric { breaks, quad, .. } => f
                .debug_struct("Numeric")
                .field("breaks", breaks)
                .field("quad", quad)
                .finish_non_exhaustive(),
        }
    }
}

impl DefaultLaw {
    pub fn numeric(
        density: impl Fn(f64) -> Result<f64> + Send + Sync + 'static,
        survival: impl Fn(f64) -> Result<f64> + Send + Sync + 'static,
        quad: QuadratureConfig,
    ) -> Self {
        Self::Numeric {
            density: Arc::new(density),
            survival: Arc::new(survival),
            breaks: Vec::new(),
            quad,
        }
    }

    /// The closed-form law re-expressed through evaluators, forcing the quadrature path.
    pub fn as_numeric(mixture: &ExponentialMixture, quad: QuadratureConfig) -> Self {
        let (d, s) = (mixture.clone(), mixture.clone());
        Self::numeric(move |t| Ok(d.density(t)), move |t| Ok(s.survival(t)), quad)
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        match self {
            Self::Mixture(m) => Ok(m.density(t)),
            Self::Chain(c) => Ok(c.density(t)),
            Self::Numeric { density, .. } => density(t),
        }
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        match self {
            Self::Mixture(m) => Ok(m.survival(t)),
            Self::Chain(c) => Ok(c.survival(t)),
            Self::Numeric { survival, .. } => survival(t),
        }
    }
}

/// `J_m(q, h) = int_0^h s^m exp(-q s) ds` for `m <= 2`.
pub(crate) fn j_moment(m: u32, q: f64, h: f64) -> f64 {
    let x = q * h;
    if x.abs() < 0.5 {
        // h^{m+1} sum_p (-x)^p / (p! (m + p + 1))
        let mut term = 1.0;
        let mut sum = 0.0;
        for p in 0..40 {
            let add = term / (m + p + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -x / (p + 1) as f64;
        }
        return h.powi(m as i32 + 1) * sum;
    }
    let e = (-x).exp();
    match m {
        0 => (1.0 - e) / q,
        1 => (1.0 - e * (1.0 + x)) / (q * q),
        2 => 2.0 * (1.0 - e * (1.0 + x + 0.5 * x * x)) / (q * q * q),
        _ => unreachable!("only moments up to 2 are needed"),
    }
}

/// Density or density derivative of the form `sum_j (p_j + q_j t) exp(-rho_j t)`.
#[derive(Debug, Clone, Copy)]
struct LinearExpTerm {
    p: f64,
    q: f64,
    rho: f64,
}

/// Protection and premium legs of a `LinearExpTerm` sum, both linear in the terms.
/// The survival contribution uses `-int_0^t` of the term, which is right both
/// for a density (`1 - F` up to the constant, handled by the caller) and for
/// a parameter derivative where `S(0)` is fixed.
fn legs_of_terms(terms: &[LinearExpTerm], contract: &SwapContract) -> (f64, f64, f64) {
    let r = contract.rate;
    let mut protection = 0.0;
    let mut survival_part = 0.0;
    let mut accrual = 0.0;
    for term in terms {
        let q = r + term.rho;
        protection += term.p * j_moment(0, q, contract.maturity) + term.q * j_moment(1, q, contract.maturity);
        for (lo, hi) in contract.periods() {
            let h = hi - lo;
            let cdf = term.p * j_moment(0, term.rho, hi) + term.q * j_moment(1, term.rho, hi);
            survival_part -= h * (-r * hi).exp() * cdf;
            accrual += (-q * lo).exp() * ((term.p + term.q * lo) * j_moment(1, q, h) + term.q * j_moment(2, q, h));
        }
    }
    ((1.0 - contract.recovery) * protection, survival_part, accrual)
}

fn annuity(contract: &SwapContract) -> f64 {
    contract
        .periods()
        .map(|(lo, hi)| (hi - lo) * (-contract.rate * hi).exp())
        .sum()
}

fn mixture_terms(m: &ExponentialMixture) -> Vec<LinearExpTerm> {
    m.absolute_terms()
        .into_iter()
        .map(|(p, rho)| LinearExpTerm { p, q: 0.0, rho })
        .collect()
}

/// `(1 - R) E[exp(-r tau) 1{tau <= T}]`.
pub fn protection_leg(law: &DefaultLaw, contract: &SwapContract) -> Result<f64> {
    contract.validate()?;
    match law {
        DefaultLaw::Mixture(m) => Ok(legs_of_terms(&mixture_terms(m), contract).0),
        DefaultLaw::Chain(c) => Ok((1.0 - contract.recovery) * c.legs(contract, &[])?.protection),
        DefaultLaw::Numeric {
            density, breaks, quad, ..
        } => {
            let r = contract.rate;
            let mut total = 0.0;
            for (lo, hi) in split_periods(contract, breaks) {
                total += integrate(|t| Ok((-r * t).exp() * density(t)?), lo, hi, quad)?.value;
            }
            Ok((1.0 - contract.recovery) * total)
        }
    }
}

/// Present value of the premium leg per unit of swap rate, accrual included.
pub fn premium_leg_unit(law: &DefaultLaw, contract: &SwapContract) -> Result<f64> {
    contract.validate()?;
    match law {
        DefaultLaw::Mixture(m) => {
            let (_, survival_part, accrual) = legs_of_terms(&mixture_terms(m), contract);
            Ok(annuity(contract) + survival_part + accrual)
        }
        DefaultLaw::Chain(c) => Ok(c.legs(contract, &[])?.premium),
        DefaultLaw::Numeric {
            density,
            survival,
            breaks,
            quad,
        } => {
            let r = contract.rate;
            let mut total = 0.0;
            for (lo, hi) in contract.periods() {
                total += (hi - lo) * (-r * hi).exp() * survival(hi)?;
            }
            for (lo, hi) in split_periods(contract, breaks) {
                let start = period_start(contract, lo);
                total += integrate(|t| Ok((t - start) * (-r * t).exp() * density(t)?), lo, hi, quad)?.value;
            }
            Ok(total)
        }
    }
}

fn period_start(contract: &SwapContract, t: f64) -> f64 {
    contract
        .payment_times
        .iter()
        .copied()
        .filter(|&p| p <= t)
        .fold(0.0, f64::max)
}

/// Payment periods further cut at the law's own break points.
fn split_periods(contract: &SwapContract, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = std::iter::once(0.0)
        .chain(contract.payment_times.iter().copied())
        .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < contract.maturity))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn swap_rate(law: &DefaultLaw, contract: &SwapContract) -> Result<f64> {
    let premium = premium_leg_unit(law, contract)?;
    if !(premium > 0.0) {
        return Err(CdsError::ZeroPremiumLeg(premium));
    }
    Ok(protection_leg(law, contract)? / premium)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapRateSensitivities {
    pub swap_rate: f64,
    /// `dS/da`
    pub theta_a: f64,
    /// `dS/dc`
    pub theta_c: f64,
}

/// Analytic `(dS_k/da, dS_k/dc)` for the homogeneous constant-intensity model.
///
/// Legs and their derivatives are propagated exactly along the birth chain,
/// which stays accurate for small base rates and senior tranches.
pub fn swap_rate_sensitivities(
    spec: &HomogeneousSpec,
    contract: &SwapContract,
    k: usize,
) -> Result<SwapRateSensitivities> {
    // Same validation (and degeneracy policy) as the mixture engine.
    sensitivity_coeffs(spec, k)?;
    let chain = PhaseTypeLaw::homogeneous(spec, k)?;
    let tangents = PhaseTypeLaw::homogeneous_tangents(spec, k);
    let legs = chain.legs(contract, &tangents)?;
    let loss = 1.0 - contract.recovery;
    let (num, den) = (loss * legs.protection, legs.premium);
    if !(den > 0.0) {
        return Err(CdsError::ZeroPremiumLeg(den));
    }
    let quotient = |p: usize| (loss * legs.d_protection[p] * den - num * legs.d_premium[p]) / (den * den);
    Ok(SwapRateSensitivities {
        swap_rate: num / den,
        theta_a: quotient(0),
        theta_c: quotient(1),
    })
}

/// The same sensitivities from the exponential-mixture expansion, with every
/// term integral in closed form. Loses relative accuracy when the mixture
/// weights are large (many stages, small rates).
pub fn swap_rate_sensitivities_mixture(
    spec: &HomogeneousSpec,
    contract: &SwapContract,
    k: usize,
) -> Result<SwapRateSensitivities> {
    contract.validate()?;
    let sens = sensitivity_coeffs(spec, k)?;
    let a = spec.a;
    let base = DefaultLaw::Mixture(sens.base.clone());
    let num = protection_leg(&base, contract)?;
    let den = premium_leg_unit(&base, contract)?;
    if !(den > 0.0) {
        return Err(CdsError::ZeroPremiumLeg(den));
    }

    let mut da = Vec::with_capacity(k);
    let mut dc = Vec::with_capacity(k);
    for (j, term) in sens.base.terms.iter().enumerate() {
        let (alpha, beta) = (term.weight, term.beta);
        let rho = beta * a;
        // df/da = sum alpha (1 - beta a t) exp(-beta a t)
        da.push(LinearExpTerm {
            p: alpha,
            q: -alpha * beta * a,
            rho,
        });
        // df/dc = sum (alpha' - alpha beta' a t) a exp(-beta a t)
        dc.push(LinearExpTerm {
            p: sens.dalpha_dc[j] * a,
            q: -alpha * sens.dbeta_dc[j] * a * a,
            rho,
        });
    }
    let quotient = |terms: &[LinearExpTerm]| {
        let (dn, ds, dacc) = legs_of_terms(terms, contract);
        (dn * den - num * (ds + dacc)) / (den * den)
    };
    Ok(SwapRateSensitivities {
        swap_rate: num / den,
        theta_a: quotient(&da),
        theta_c: quotient(&dc),
    })
}
