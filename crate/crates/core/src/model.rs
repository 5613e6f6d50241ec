//! One tagged type over every model variant, with the analytic law of `tau^k`
//! each variant supports.

use serde::{Deserialize, Serialize};

use crate::decay::{kth_density_decay, kth_survival_decay, DecaySpec};
use crate::error::{invalid, CdsError, Result};
use crate::hetero::{kth_mixture_hetero, TwoGroupSpec};
use crate::mixture::{kth_default_mixture, HomogeneousSpec};
use crate::phase::PhaseTypeLaw;
use crate::pricing::DefaultLaw;
use crate::quadrature::QuadratureConfig;
use crate::regime::{RegimeSwitchLaw, TwoStateSpec};

/// General constant-parameter interacting intensities:
/// `lambda_i(t) = a_i + sum_{j != i} b_ij exp(-d_ij (t - tau_j)) 1{tau_j <= t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralIntensitySpec {
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl GeneralIntensitySpec {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(invalid("a", "at least one name is required"));
        }
        if let Some(x) = self.a.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(invalid("a", format!("base rates must be positive, got {x}")));
        }
        for (name, m) in [("b", &self.b), ("d", &self.d)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(invalid(name, format!("must be a {n} x {n} matrix")));
            }
            if m.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(invalid(name, "entries must be non-negative and finite"));
            }
        }
        if let Some(i) = (0..n).find(|&i| self.b[i][i] != 0.0) {
            return Err(invalid("b", format!("diagonal entry b[{i}][{i}] must be zero")));
        }
        Ok(())
    }

    /// Exchangeable names with decaying contagion.
    pub fn from_decay(spec: &DecaySpec) -> Self {
        let n = spec.n;
        let b = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { spec.a * spec.c }).collect())
            .collect();
        Self {
            a: vec![spec.a; n],
            b,
            d: vec![vec![spec.d; n]; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Homogeneous(HomogeneousSpec),
    Decay(DecaySpec),
    RegimeSwitching(TwoStateSpec),
    TwoGroup(TwoGroupSpec),
    #[serde(rename = "general_mc")]
    General(GeneralIntensitySpec),
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Homogeneous(_) => "homogeneous",
            Self::Decay(_) => "decay",
            Self::RegimeSwitching(_) => "regime_switching",
            Self::TwoGroup(_) => "two_group",
            Self::General(_) => "general_mc",
        }
    }

    /// Number of names in the basket.
    pub fn names(&self) -> usize {
        match self {
            Self::Homogeneous(s) => s.n,
            Self::Decay(s) => s.n,
            Self::RegimeSwitching(s) => s.n,
            Self::TwoGroup(s) => s.total(),
            Self::General(s) => s.n(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Homogeneous(s) => s.validate(),
            Self::Decay(s) => s.validate(),
            Self::RegimeSwitching(s) => s.validate(),
            Self::TwoGroup(s) => s.validate(),
            Self::General(s) => s.validate(),
        }
    }

    pub fn has_analytic_law(&self) -> bool {
        !matches!(self, Self::General(_))
    }

    /// Analytic law of `tau^k` for pricing.
    ///
    /// Constant-rate lattices are checked for rate collisions by their mixture
    /// engines, then priced on the absorbing chain, which keeps full precision
    /// where the signed mixture sums cancel.
    pub fn law(&self, k: usize, quad: QuadratureConfig) -> Result<DefaultLaw> {
        self.validate()?;
        if k < 1 || k > self.names() {
            return Err(CdsError::OutOfRange(format!(
                "k = {k} must lie in [1, {}]",
                self.names()
            )));
        }
        match self {
            Self::Homogeneous(s) => {
                kth_default_mixture(s, k)?;
                Ok(DefaultLaw::Chain(PhaseTypeLaw::homogeneous(s, k)?))
            }
            Self::TwoGroup(s) => {
                kth_mixture_hetero(s, k)?;
                Ok(DefaultLaw::Chain(PhaseTypeLaw::two_group(s, k)?))
            }
            Self::RegimeSwitching(s) => {
                RegimeSwitchLaw::new(s, k)?;
                Ok(DefaultLaw::Chain(PhaseTypeLaw::regime_switching(s, k)?))
            }
            Self::Decay(s) => {
                crate::decay::check_nesting(s, k)?;
                let (sd, ss) = (*s, *s);
                Ok(DefaultLaw::numeric(
                    move |t| kth_density_decay(&sd, k, t, &quad),
                    move |t| kth_survival_decay(&ss, k, t, &quad),
                    quad,
                ))
            }
            Self::General(_) => Err(CdsError::Unsupported(
                "the general intensity model has no analytic engine; use the Monte Carlo method".into(),
            )),
        }
    }
}
