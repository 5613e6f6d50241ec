//! Contagion driven by a two-state Markov-modulated base intensity.
//!
//! The base intensity `X(t)` alternates between `x1` and `x2`, leaving state
//! `i` at rate `eta_i`. Conditional on the path of `X`, the k-th default time
//! is the homogeneous mixture evaluated on the clock `int_0^t X(s) ds`, so
//!
//! ```text
//! P(tau^k > t) = sum_j (alpha_j / beta_j) E[exp(-beta_j int_0^t X)]
//!              = sum_j (alpha_j / beta_j) exp(-beta_j x2 t) psi_i(beta_j (x1 - x2), t)
//! ```
//!
//! where `psi_i(l, t) = E[exp(-l T_i(t))]` and `T_i(t)` is the time spent in
//! state 1 up to `t` when starting from state `i`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::{mixture_weights, HomogeneousSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStateSpec {
    pub n: usize,
    pub c: f64,
    pub x1: f64,
    pub x2: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// 1 or 2.
    pub initial_state: u8,
}

impl TwoStateSpec {
    pub fn validate(&self) -> Result<()> {
        HomogeneousSpec {
            n: self.n,
            a: 1.0,
            c: self.c,
        }
        .validate()?;
        for (name, x) in [("x1", self.x1), ("x2", self.x2)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(invalid(name, format!("intensity level must be positive, got {x}")));
            }
        }
        for (name, e) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(invalid(name, format!("exit rate must be non-negative, got {e}")));
            }
        }
        if !matches!(self.initial_state, 1 | 2) {
            return Err(invalid(
                "initial_state",
                format!("must be 1 or 2, got {}", self.initial_state),
            ));
        }
        Ok(())
    }

    /// Intensity level of state `s` (1 or 2).
    pub fn level(&self, s: u8) -> f64 {
        if s == 1 {
            self.x1
        } else {
            self.x2
        }
    }

    pub fn exit_rate(&self, s: u8) -> f64 {
        if s == 1 {
            self.eta1
        } else {
            self.eta2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Trigonometric,
    Polynomial,
    Hyperbolic,
}

/// Closed-form Laplace functional of the occupation time of state 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationTransform {
    pub l: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub branch: Branch,
}

impl OccupationTransform {
    pub fn new(l: f64, eta1: f64, eta2: f64) -> Self {
        let alpha = 0.5 * (eta1 + eta2 + l);
        let beta = 0.5 * (eta1 + eta2 - l);
        let omega = l * eta2 - alpha * alpha;
        let branch = if omega.abs() < 1e-10 * (alpha * alpha).max(1.0) {
            Branch::Polynomial
        } else if omega > 0.0 {
            Branch::Trigonometric
        } else {
            Branch::Hyperbolic
        };
        Self {
            l,
            eta1,
            eta2,
            alpha,
            beta,
            omega,
            branch,
        }
    }

    /// `psi_i(l, t) = E[exp(-l T_i(t))]`.
    pub fn psi(&self, state: u8, t: f64) -> f64 {
        self.discounted(state, t, 0.0).0
    }

    /// `g(t) = exp(-shift t) psi_i(l, t)` and `g'(t)`, evaluated without forming
    /// the separate exponentials so large opposite exponents do not overflow.
    pub fn discounted(&self, state: u8, t: f64, shift: f64) -> (f64, f64) {
        let b = if state == 1 { self.beta } else { self.alpha };
        branch_value(self.branch, self.alpha + shift, b, self.omega, t)
    }
}

/// `exp(-r t) * kernel(t)` and its derivative, where the kernel is
/// `cos(w t) + b/w sin(w t)`, `1 + b t` or `cosh(s t) + b/s sinh(s t)`.
fn branch_value(branch: Branch, r: f64, b: f64, omega: f64, t: f64) -> (f64, f64) {
    match branch {
        Branch::Polynomial => {
            let e = (-r * t).exp();
            (e * (1.0 + b * t), e * (b - r * (1.0 + b * t)))
        }
        Branch::Trigonometric => {
            let w = omega.sqrt();
            let e = (-r * t).exp();
            let (sin, cos) = (w * t).sin_cos();
            (e * (cos + b / w * sin), e * ((b - r) * cos - (r * b / w + w) * sin))
        }
        Branch::Hyperbolic => {
            let s = (-omega).sqrt();
            let up = 0.5 * (1.0 + b / s);
            let down = 0.5 * (1.0 - b / s);
            let e_up = ((s - r) * t).exp();
            let e_down = (-(s + r) * t).exp();
            (up * e_up + down * e_down, up * (s - r) * e_up - down * (s + r) * e_down)
        }
    }
}

/// Law of `tau^k` under the two-state intensity, precomputed for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSwitchLaw {
    spec: TwoStateSpec,
    /// `(alpha_j / beta_j, beta_j, transform for l = beta_j (x1 - x2))`
    terms: Vec<(f64, f64, OccupationTransform)>,
}

impl RegimeSwitchLaw {
    pub fn new(spec: &TwoStateSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k < 1 || k > spec.n {
            return Err(crate::CdsError::OutOfRange(format!(
                "k = {k} must lie in [1, {}]",
                spec.n
            )));
        }
        let (alpha, betas) = mixture_weights(spec.n, spec.c, k)?;
        let terms = alpha
            .iter()
            .zip(&betas)
            .map(|(&w, &b)| {
                (
                    w / b,
                    b,
                    OccupationTransform::new(b * (spec.x1 - spec.x2), spec.eta1, spec.eta2),
                )
            })
            .collect();
        Ok(Self { spec: *spec, terms })
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        self.terms
            .iter()
            .map(|(w, b, tr)| w * tr.discounted(self.spec.initial_state, t, b * self.spec.x2).0)
            .sum()
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        -self
            .terms
            .iter()
            .map(|(w, b, tr)| w * tr.discounted(self.spec.initial_state, t, b * self.spec.x2).1)
            .sum::<f64>()
    }
}

pub fn psi(transform: &OccupationTransform, state: u8, t: f64) -> Result<f64> {
    if !matches!(state, 1 | 2) {
        return Err(invalid("state", format!("must be 1 or 2, got {state}")));
    }
    if t < 0.0 {
        return Err(invalid("t", "time must be non-negative"));
    }
    Ok(transform.psi(state, t))
}

pub fn kth_survival_rs(spec: &TwoStateSpec, k: usize, t: f64) -> Result<f64> {
    Ok(RegimeSwitchLaw::new(spec, k)?.survival(t))
}

pub fn kth_density_rs(spec: &TwoStateSpec, k: usize, t: f64) -> Result<f64> {
    Ok(RegimeSwitchLaw::new(spec, k)?.density(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::kth_default_mixture;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table2(x1: f64, x2: f64, eta1: f64, eta2: f64) -> TwoStateSpec {
        TwoStateSpec {
            n: 10,
            c: 3.0,
            x1,
            x2,
            eta1,
            eta2,
            initial_state: 1,
        }
    }

    #[test]
    fn trivial_values() {
        for (e1, e2) in [(1.0, 1.0), (0.0, 2.0), (3.0, 0.5)] {
            let zero = OccupationTransform::new(0.0, e1, e2);
            for t in [0.0, 0.5, 7.0] {
                assert!((zero.psi(1, t) - 1.0).abs() < 1e-14);
                assert!((zero.psi(2, t) - 1.0).abs() < 1e-14);
            }
            for l in [-3.0, 0.7, 12.0] {
                let tr = OccupationTransform::new(l, e1, e2);
                assert!((tr.psi(1, 0.0) - 1.0).abs() < 1e-15);
                assert!((tr.psi(2, 0.0) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn frozen_chain() {
        // No switching: T_1(t) = t and T_2(t) = 0.
        let tr = OccupationTransform::new(1.7, 0.0, 0.0);
        assert!((tr.psi(1, 2.0) - (-3.4f64).exp()).abs() < 1e-14);
        assert!((tr.psi(2, 2.0) - 1.0).abs() < 1e-14);
    }

    /// Monte Carlo of E[exp(-l T_i(t))] by simulating the chain.
    fn simulate_psi(l: f64, eta: [f64; 2], state: u8, t: f64, paths: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..paths {
            let (mut now, mut s, mut occ) = (0.0, state, 0.0);
            loop {
                let rate = eta[(s - 1) as usize];
                let hold = -(1.0 - rng.random::<f64>()).ln() / rate;
                let end = (now + hold).min(t);
                if s == 1 {
                    occ += end - now;
                }
                if now + hold >= t {
                    break;
                }
                now += hold;
                s = 3 - s;
            }
            let v = (-l * occ).exp();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / paths as f64;
        let var = (sum2 / paths as f64 - mean * mean).max(0.0);
        (mean, (var / paths as f64).sqrt())
    }

    #[test]
    fn hyperbolic_example_matches_simulation() {
        let tr = OccupationTransform::new(1.0, 1.0, 1.0);
        assert_eq!(tr.branch, Branch::Hyperbolic);
        assert!((tr.omega + 1.25).abs() < 1e-15);
        let v = tr.psi(1, 1.0);
        assert!((v - 0.514).abs() < 5e-4, "{v}");
        let (mc, se) = simulate_psi(1.0, [1.0, 1.0], 1, 1.0, 1_000_000, 7);
        assert!((v - mc).abs() < 3.0 * se, "{v} vs {mc} ± {se}");
        let (mc2, se2) = simulate_psi(1.0, [1.0, 1.0], 2, 1.0, 1_000_000, 8);
        assert!((tr.psi(2, 1.0) - mc2).abs() < 3.0 * se2);
    }

    #[test]
    fn negative_argument_matches_simulation() {
        // x1 < x2 gives l < 0.
        let tr = OccupationTransform::new(-2.0, 1.5, 0.5);
        let (mc, se) = simulate_psi(-2.0, [1.5, 0.5], 1, 1.2, 400_000, 9);
        assert!(
            (tr.psi(1, 1.2) - mc).abs() < 3.0 * se,
            "{} vs {mc} ± {se}",
            tr.psi(1, 1.2)
        );
    }

    #[test]
    fn branch_continuity_near_zero_omega() {
        let (r, b) = (2.0, 0.5);
        for i in 0..=200 {
            let t = 0.05 * i as f64;
            let (p0, d0) = branch_value(Branch::Polynomial, r, b, 0.0, t);
            let (pt, dt) = branch_value(Branch::Trigonometric, r, b, 1e-8, t);
            let (ph, dh) = branch_value(Branch::Hyperbolic, r, b, -1e-8, t);
            assert!((pt - p0).abs() < 1e-9 && (ph - p0).abs() < 1e-9, "t={t}");
            assert!((dt - d0).abs() < 1e-8 && (dh - d0).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn polynomial_branch_is_exact_on_the_boundary() {
        // eta1 = 0 and l = eta2 puts omega exactly at zero.
        let tr = OccupationTransform::new(1.0, 0.0, 1.0);
        assert_eq!(tr.branch, Branch::Polynomial);
        // State 1 is absorbing, so T_1(t) = t.
        assert!((tr.psi(1, 3.0) - (-3.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn trigonometric_branch_derivative() {
        // Only reachable with negative exit rates; checks the algebra.
        let (r, b, omega) = (0.8, 0.3, 2.0);
        let h = 1e-6;
        for t in [0.1, 1.0, 2.5] {
            let (_, d) = branch_value(Branch::Trigonometric, r, b, omega, t);
            let fd = (branch_value(Branch::Trigonometric, r, b, omega, t + h).0
                - branch_value(Branch::Trigonometric, r, b, omega, t - h).0)
                / (2.0 * h);
            assert!((d - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_intensity_reduces_to_homogeneous() {
        for x in [0.5, 1.0, 2.0] {
            let spec = TwoStateSpec {
                n: 6,
                c: 0.8,
                x1: x,
                x2: x,
                eta1: 1.3,
                eta2: 0.4,
                initial_state: 2,
            };
            for k in 1..=6 {
                let law = RegimeSwitchLaw::new(&spec, k).unwrap();
                let hom = kth_default_mixture(&HomogeneousSpec::new(6, x, 0.8).unwrap(), k).unwrap();
                for t in [0.0, 0.2, 1.0, 3.0] {
                    assert!((law.survival(t) - hom.survival(t)).abs() < 1e-12);
                    assert!((law.density(t) - hom.density(t)).abs() < 1e-10 * hom.density(t).abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn density_is_minus_survival_slope() {
        let spec = table2(1.0, 2.0, 1.0, 2.0);
        for k in [1, 3, 10] {
            let law = RegimeSwitchLaw::new(&spec, k).unwrap();
            let h = 1e-6;
            for t in [0.3, 1.0, 2.7] {
                let fd = -(law.survival(t + h) - law.survival(t - h)) / (2.0 * h);
                let an = law.density(t);
                assert!(
                    (an - fd).abs() <= 1e-5 * an.abs().max(1e-3),
                    "k={k} t={t}: {an} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn absorbing_second_state() {
        let spec = TwoStateSpec {
            n: 5,
            c: 1.5,
            x1: 1.0,
            x2: 0.4,
            eta1: 2.0,
            eta2: 0.0,
            initial_state: 2,
        };
        let hom = HomogeneousSpec::new(5, 0.4, 1.5).unwrap();
        for k in 1..=5 {
            let law = RegimeSwitchLaw::new(&spec, k).unwrap();
            let m = kth_default_mixture(&hom, k).unwrap();
            for t in [0.5, 2.0, 6.0] {
                assert!((law.density(t) - m.density(t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn survival_density_consistency() {
        let spec = table2(1.0, 2.0, 2.0, 1.0);
        let q = crate::quadrature::QuadratureConfig::with_tol(1e-10);
        for k in [1, 2, 5, 10] {
            let law = RegimeSwitchLaw::new(&spec, k).unwrap();
            for t in [0.5, 1.5, 3.0] {
                let mass = crate::quadrature::integrate(|u| Ok(law.density(u)), 0.0, t, &q)
                    .unwrap()
                    .value;
                assert!((1.0 - mass - law.survival(t)).abs() < 1e-8, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn no_overflow_for_large_negative_arguments() {
        let spec = table2(0.1, 5.0, 0.2, 3.0);
        let law = RegimeSwitchLaw::new(&spec, 10).unwrap();
        for t in [1.0, 10.0, 50.0, 200.0] {
            let s = law.survival(t);
            assert!(s.is_finite() && (-1e-9..=1.0 + 1e-9).contains(&s), "t={t}: {s}");
            assert!(law.density(t).is_finite());
        }
    }

    #[test]
    fn invalid_inputs() {
        let mut spec = table2(1.0, 2.0, 1.0, 1.0);
        spec.initial_state = 3;
        assert!(spec.validate().is_err());
        let tr = OccupationTransform::new(1.0, 1.0, 1.0);
        assert!(psi(&tr, 0, 1.0).is_err());
        assert!(psi(&tr, 1, -1.0).is_err());
        let mut degenerate = table2(1.0, 2.0, 1.0, 1.0);
        degenerate.c = 0.5;
        assert!(matches!(
            kth_survival_rs(&degenerate, 3, 1.0),
            Err(crate::CdsError::DegenerateRates { .. })
        ));
    }

    proptest! {
        #[test]
        fn transform_is_a_laplace_functional(l in 0.01f64..20.0, dl in 0.0f64..5.0, e1 in 0.0f64..5.0, e2 in 0.0f64..5.0,
                                             t in 0.0f64..10.0, dt in 0.0f64..3.0, state in 1u8..=2) {
            let tr = OccupationTransform::new(l, e1, e2);
            let v = tr.psi(state, t);
            prop_assert!(v > 0.0 && v <= 1.0 + 1e-12, "psi = {}", v);
            prop_assert!(tr.psi(state, t + dt) <= v + 1e-12);
            prop_assert!(OccupationTransform::new(l + dl, e1, e2).psi(state, t) <= v + 1e-12);
        }
    }
}
