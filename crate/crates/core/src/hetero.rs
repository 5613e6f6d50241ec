//! Two-group heterogeneous contagion.
//!
//! Names in group 1 (size `n1`) default at base rate `a`, names in group 2
//! (size `n2`) at `a_tilde`. After `k` defaults of which `m` came from group 1
//! the surviving hazards are
//!
//! ```text
//! zeta_{k,m}   = a       (n1 - m)       [1 + b m       + c (k - m)]
//! zeta~_{k,m}  = a_tilde (n2 - (k - m)) [1 + b_tilde m + c_tilde (k - m)]
//! ```
//!
//! The joint density of `(tau^k, N^k)` is a sum of exponentials
//! `sum_{i<k, j<=m} alpha[k][m][i][j] exp(-beta[i][j] t)` with
//! `beta[i][j] = zeta_{i,j} + zeta~_{i,j}`. Amplitudes here already carry
//! their rates (no separate time scale).

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CdsError, Result};
use crate::mixture::{kth_default_mixture, ExponentialMixture, HomogeneousSpec, MixtureTerm, COLLISION_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoGroupSpec {
    pub n1: usize,
    pub n2: usize,
    pub a: f64,
    pub a_tilde: f64,
    /// Within group 1.
    pub b: f64,
    /// Group 2 defaults acting on group 1.
    pub c: f64,
    /// Group 1 defaults acting on group 2.
    pub b_tilde: f64,
    /// Within group 2.
    pub c_tilde: f64,
}

impl TwoGroupSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 + self.n2 == 0 {
            return Err(invalid("n1", "the basket needs at least one name"));
        }
        for (name, r) in [("a", self.a), ("a_tilde", self.a_tilde)] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(name, format!("base rate must be positive, got {r}")));
            }
        }
        for (name, x) in [
            ("b", self.b),
            ("c", self.c),
            ("b_tilde", self.b_tilde),
            ("c_tilde", self.c_tilde),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(invalid(
                    name,
                    format!("contagion multiplier must be non-negative, got {x}"),
                ));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    /// Feasible group-1 counts after `k` defaults.
    pub fn m_range(&self, k: usize) -> RangeInclusive<usize> {
        k.saturating_sub(self.n2)..=k.min(self.n1)
    }

    /// The homogeneous equivalent when both groups are interchangeable.
    pub fn homogeneous_collapse(&self) -> Option<HomogeneousSpec> {
        let same = |x: f64, y: f64| (x - y).abs() <= 1e-14 * x.abs().max(y.abs()).max(1.0);
        let collapses = same(self.a, self.a_tilde)
            && same(self.b, self.b_tilde)
            && same(self.b, self.c)
            && same(self.b, self.c_tilde);
        collapses.then(|| HomogeneousSpec {
            n: self.total(),
            a: self.a,
            c: self.b,
        })
    }

    fn zeta_unchecked(&self, k: usize, m: usize) -> (f64, f64) {
        let g2 = k - m;
        let z = self.a * (self.n1 - m) as f64 * (1.0 + self.b * m as f64 + self.c * g2 as f64);
        let zt = self.a_tilde * (self.n2 - g2) as f64 * (1.0 + self.b_tilde * m as f64 + self.c_tilde * g2 as f64);
        (z, zt)
    }
}

/// `(zeta_{k,m}, zeta~_{k,m})`: aggregate hazards of the surviving members of
/// each group after `k` defaults with `m` of them in group 1.
pub fn zeta(spec: &TwoGroupSpec, k: usize, m: usize) -> Result<(f64, f64)> {
    spec.validate()?;
    if m > k || m > spec.n1 || k - m > spec.n2 {
        return Err(CdsError::OutOfRange(format!(
            "lattice point (k = {k}, m = {m}) is infeasible for n1 = {}, n2 = {}",
            spec.n1, spec.n2
        )));
    }
    Ok(spec.zeta_unchecked(k, m))
}

/// Coefficients of the joint law of `(tau^k, N^k)` for `1 <= k <= k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCoefficientTable {
    spec: TwoGroupSpec,
    k_max: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl JointCoefficientTable {
    fn width(&self) -> usize {
        self.spec.n1 + 1
    }

    fn alpha_index(&self, k: usize, m: usize, i: usize, j: usize) -> usize {
        let w = self.width();
        ((k * w + m) * self.k_max + i) * w + j
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn spec(&self) -> &TwoGroupSpec {
        &self.spec
    }

    /// `alpha[k][m][i][j]`; zero off the reachable lattice.
    pub fn alpha(&self, k: usize, m: usize, i: usize, j: usize) -> f64 {
        if k == 0 || k > self.k_max || m > self.spec.n1 || i >= self.k_max || j > self.spec.n1 {
            return 0.0;
        }
        self.alpha[self.alpha_index(k, m, i, j)]
    }

    /// `beta[i][j]` for `i < k_max`; zero off the lattice.
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        if i >= self.k_max || j > self.spec.n1 {
            return 0.0;
        }
        self.beta[i * self.width() + j]
    }

    /// Non-zero `(amplitude, rate)` terms of `f_{tau^k, N^k}(., m)`.
    pub fn joint_terms(&self, k: usize, m: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if k == 0 || k > self.k_max || !self.spec.m_range(k).contains(&m) {
            return out;
        }
        for i in 0..k {
            for j in self.spec.m_range(i) {
                let c = self.alpha(k, m, i, j);
                if c != 0.0 {
                    out.push((c, self.beta(i, j)));
                }
            }
        }
        out
    }

    pub fn joint_density(&self, k: usize, m: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.joint_terms(k, m).iter().map(|(c, r)| c * (-r * t).exp()).sum()
    }

    /// `P(N^k = m)`.
    pub fn group_probability(&self, k: usize, m: usize) -> f64 {
        self.joint_terms(k, m).iter().map(|(c, r)| c / r).sum()
    }

    pub fn marginal_density(&self, k: usize, t: f64) -> f64 {
        self.spec.m_range(k).map(|m| self.joint_density(k, m, t)).sum()
    }

    /// Marginal law of `tau^k`, with terms sharing a rate merged.
    pub fn marginal_mixture(&self, k: usize) -> Result<ExponentialMixture> {
        if k == 0 || k > self.k_max {
            return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {}]", self.k_max)));
        }
        let max_rate = self.beta.iter().fold(0.0f64, |m, b| m.max(*b));
        let mut merged: Vec<MixtureTerm> = Vec::new();
        for m in self.spec.m_range(k) {
            for (c, r) in self.joint_terms(k, m) {
                match merged
                    .iter_mut()
                    .find(|t| (t.beta - r).abs() <= COLLISION_TOL * max_rate)
                {
                    Some(t) => t.weight += c,
                    None => merged.push(MixtureTerm::new(c, r)),
                }
            }
        }
        merged.retain(|t| t.weight != 0.0);
        ExponentialMixture::new(1.0, merged)
    }
}

/// Builds the coefficient table by convolving each joint density with the
/// holding time of the next lattice state.
pub fn joint_coefficients(spec: &TwoGroupSpec, k_max: usize) -> Result<JointCoefficientTable> {
    spec.validate()?;
    if k_max < 1 || k_max > spec.total() {
        return Err(CdsError::OutOfRange(format!(
            "k_max = {k_max} must lie in [1, {}]",
            spec.total()
        )));
    }
    let w = spec.n1 + 1;
    let mut table = JointCoefficientTable {
        spec: *spec,
        k_max,
        alpha: vec![0.0; (k_max + 1) * w * k_max * w],
        beta: vec![0.0; k_max * w],
    };
    for i in 0..k_max {
        for j in spec.m_range(i) {
            let (z, zt) = spec.zeta_unchecked(i, j);
            table.beta[i * w + j] = z + zt;
        }
    }
    let tol = COLLISION_TOL * table.beta.iter().fold(0.0f64, |m, b| m.max(*b));

    let (z0, zt0) = spec.zeta_unchecked(0, 0);
    if spec.n1 > 0 {
        let idx = table.alpha_index(1, 1, 0, 0);
        table.alpha[idx] = z0;
    }
    if spec.n2 > 0 {
        let idx = table.alpha_index(1, 0, 0, 0);
        table.alpha[idx] = zt0;
    }

    for k in 1..k_max {
        for m in spec.m_range(k) {
            let (z, zt) = spec.zeta_unchecked(k, m);
            let q = z + zt;
            // Next default from group 2 keeps m; from group 1 moves to m + 1.
            for (target, rate) in [(m, zt), (m + 1, z)] {
                if rate == 0.0 {
                    continue;
                }
                let mut sum = 0.0;
                for i in 0..k {
                    for j in spec.m_range(i) {
                        let c = table.alpha[table.alpha_index(k, m, i, j)];
                        if c == 0.0 {
                            continue;
                        }
                        let rho = table.beta[i * w + j];
                        let gap = q - rho;
                        if gap.abs() < tol {
                            return Err(CdsError::DegenerateRates {
                                first: format!("beta_{{{k},{m}}}"),
                                first_value: q,
                                second: format!("beta_{{{i},{j}}}"),
                                second_value: rho,
                            });
                        }
                        let v = rate * c / gap;
                        let idx = table.alpha_index(k + 1, target, i, j);
                        table.alpha[idx] += v;
                        sum += v;
                    }
                }
                let idx = table.alpha_index(k + 1, target, k, m);
                table.alpha[idx] -= sum;
            }
        }
    }
    Ok(table)
}

/// Marginal law of `tau^k` as an exponential mixture. Interchangeable groups
/// whose lattice collides are routed to the homogeneous engine.
pub fn kth_mixture_hetero(spec: &TwoGroupSpec, k: usize) -> Result<ExponentialMixture> {
    spec.validate()?;
    if k < 1 || k > spec.total() {
        return Err(CdsError::OutOfRange(format!(
            "k = {k} must lie in [1, {}]",
            spec.total()
        )));
    }
    match joint_coefficients(spec, k) {
        Ok(table) => table.marginal_mixture(k),
        Err(err @ CdsError::DegenerateRates { .. }) => match spec.homogeneous_collapse() {
            Some(hom) => kth_default_mixture(&hom, k),
            None => Err(err),
        },
        Err(err) => Err(err),
    }
}

pub fn kth_density_hetero(spec: &TwoGroupSpec, k: usize, t: f64) -> Result<f64> {
    Ok(kth_mixture_hetero(spec, k)?.density(t))
}

/// `P(N^k = m)`: probability that exactly `m` of the first `k` defaults are in group 1.
pub fn group_loss_distribution(spec: &TwoGroupSpec, k: usize, m: usize) -> Result<f64> {
    zeta(spec, k, m)?;
    if k == 0 {
        return Ok(1.0);
    }
    Ok(joint_coefficients(spec, k)?.group_probability(k, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n1: usize, n2: usize, a: f64, at: f64, b: f64, c: f64, bt: f64, ct: f64) -> TwoGroupSpec {
        TwoGroupSpec {
            n1,
            n2,
            a,
            a_tilde: at,
            b,
            c,
            b_tilde: bt,
            c_tilde: ct,
        }
    }

    fn generic() -> TwoGroupSpec {
        spec(3, 4, 0.7, 1.3, 0.4, 1.1, 0.25, 0.9)
    }

    #[test]
    fn zeta_examples() {
        let s = generic();
        let (z, zt) = zeta(&s, 0, 0).unwrap();
        assert!((z - 3.0 * 0.7).abs() < 1e-15 && (zt - 4.0 * 1.3).abs() < 1e-15);
        let sym = spec(5, 5, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0);
        assert_eq!(zeta(&sym, 2, 1).unwrap(), (28.0, 28.0));
        assert_eq!(zeta(&s, 3, 3).unwrap().0, 0.0);
        assert!(zeta(&s, 2, 3).is_err());
        assert!(zeta(&s, 5, 0).is_err());
    }

    #[test]
    fn base_row() {
        let s = generic();
        let t = joint_coefficients(&s, 1).unwrap();
        assert_eq!(t.alpha(1, 1, 0, 0), 3.0 * 0.7);
        assert_eq!(t.alpha(1, 0, 0, 0), 4.0 * 1.3);
        assert_eq!(t.alpha(1, 1, 0, 1), 0.0);
        let pair = joint_coefficients(&spec(1, 1, 0.6, 1.4, 0.3, 0.2, 0.5, 0.1), 1).unwrap();
        for x in [0.0, 0.4, 2.0] {
            assert!((pair.joint_density(1, 1, x) - 0.6 * (-2.0 * x).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn first_default_is_exponential() {
        let s = generic();
        let total = 3.0 * 0.7 + 4.0 * 1.3;
        for x in [0.0, 0.3, 1.7] {
            let f = kth_density_hetero(&s, 1, x).unwrap();
            assert!((f - total * (-total * x).exp()).abs() < 1e-13);
        }
        let p = group_loss_distribution(&s, 1, 1).unwrap();
        assert!((p - 2.1 / total).abs() < 1e-15);
    }

    #[test]
    fn symmetric_groups_collapse_to_homogeneous() {
        let s = spec(5, 5, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0);
        let hom = HomogeneousSpec::new(10, 1.0, 3.0).unwrap();
        for k in 1..=10 {
            // The table itself, not the fallback.
            let table = joint_coefficients(&s, k).unwrap();
            let m = kth_default_mixture(&hom, k).unwrap();
            for x in [0.0, 0.05, 0.2, 0.5, 1.0, 3.0] {
                let h = m.density(x);
                assert!(
                    (table.marginal_density(k, x) - h).abs() < 1e-8 * h.abs().max(1.0),
                    "k={k} t={x}"
                );
            }
            let merged = table.marginal_mixture(k).unwrap().rescaled(1.0).unwrap();
            assert_eq!(merged.terms.len(), k);
        }
    }

    #[test]
    fn rescaled_terms_match_homogeneous_convention() {
        let s = spec(2, 3, 0.4, 0.4, 0.7, 0.7, 0.7, 0.7);
        let mut hom = kth_default_mixture(&HomogeneousSpec::new(5, 0.4, 0.7).unwrap(), 4).unwrap();
        hom.terms.sort_by(|x, y| y.beta.total_cmp(&x.beta));
        let mut mix = kth_mixture_hetero(&s, 4).unwrap().rescaled(0.4).unwrap();
        mix.terms.sort_by(|x, y| y.beta.total_cmp(&x.beta));
        for (a, b) in mix.terms.iter().zip(&hom.terms) {
            assert!((a.beta - b.beta).abs() < 1e-12 && (a.weight - b.weight).abs() < 1e-12 * b.weight.abs().max(1.0));
        }
    }

    #[test]
    fn empty_second_group_is_homogeneous_in_group_one() {
        let s = spec(6, 0, 0.3, 2.0, 0.8, 5.0, 7.0, 9.0);
        let hom = HomogeneousSpec::new(6, 0.3, 0.8).unwrap();
        let table = joint_coefficients(&s, 6).unwrap();
        for k in 1..=6 {
            assert_eq!(s.m_range(k), k..=k);
            let m = kth_default_mixture(&hom, k).unwrap();
            for x in [0.1, 1.0, 4.0] {
                assert!((table.marginal_density(k, x) - m.density(x)).abs() < 1e-10);
            }
        }
        let only2 = spec(0, 4, 2.0, 0.5, 9.0, 9.0, 9.0, 0.6);
        let hom2 = HomogeneousSpec::new(4, 0.5, 0.6).unwrap();
        for k in 1..=4 {
            let m = kth_default_mixture(&hom2, k).unwrap();
            assert!((kth_density_hetero(&only2, k, 0.8).unwrap() - m.density(0.8)).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_symmetry() {
        let s = spec(4, 4, 0.9, 0.9, 0.3, 1.2, 1.2, 0.3);
        let table = joint_coefficients(&s, 8).unwrap();
        for k in 1..=8 {
            for m in s.m_range(k) {
                let p = table.group_probability(k, m);
                let q = table.group_probability(k, k - m);
                assert!((p - q).abs() < 1e-9, "k={k} m={m}");
            }
        }
    }

    /// Trapezoid evaluation of the convolution recursion on a uniform grid.
    fn grid_joint(s: &TwoGroupSpec, k_max: usize, horizon: f64, steps: usize) -> Vec<Vec<Vec<f64>>> {
        let h = horizon / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        let mut levels = vec![vec![vec![0.0; steps + 1]; s.n1 + 1]];
        let (z0, zt0) = s.zeta_unchecked(0, 0);
        let mut first = vec![vec![0.0; steps + 1]; s.n1 + 1];
        for (i, &x) in times.iter().enumerate() {
            let e = (-(z0 + zt0) * x).exp();
            if s.n1 > 0 {
                first[1][i] = z0 * e;
            }
            if s.n2 > 0 {
                first[0][i] = zt0 * e;
            }
        }
        levels.push(first);
        for k in 1..k_max {
            let mut next = vec![vec![0.0; steps + 1]; s.n1 + 1];
            for m in s.m_range(k) {
                let (z, zt) = s.zeta_unchecked(k, m);
                let q = z + zt;
                let f = &levels[k][m];
                let mut conv = vec![0.0; steps + 1];
                for i in 1..=steps {
                    let mut acc = 0.5 * (f[0] * (-q * times[i]).exp() + f[i]);
                    for j in 1..i {
                        acc += f[j] * (-q * (times[i] - times[j])).exp();
                    }
                    conv[i] = acc * h;
                }
                for i in 0..=steps {
                    if zt > 0.0 {
                        next[m][i] += zt * conv[i];
                    }
                    if z > 0.0 {
                        next[m + 1][i] += z * conv[i];
                    }
                }
            }
            levels.push(next);
        }
        levels
    }

    #[test]
    fn coefficients_match_numerical_convolution() {
        let s = spec(2, 3, 0.5, 0.8, 0.6, 0.3, 0.4, 1.0);
        let k_max = 4;
        let horizon = 2.0;
        let coarse = grid_joint(&s, k_max, horizon, 800);
        let fine = grid_joint(&s, k_max, horizon, 1600);
        let table = joint_coefficients(&s, k_max).unwrap();
        for k in 1..=k_max {
            for m in s.m_range(k) {
                for step in [100, 400, 800] {
                    let x = step as f64 * horizon / 800.0;
                    // Richardson extrapolation of the O(h^2) trapezoid error.
                    let oracle = (4.0 * fine[k][m][2 * step] - coarse[k][m][step]) / 3.0;
                    let exact = table.joint_density(k, m, x);
                    assert!((exact - oracle).abs() < 1e-7, "k={k} m={m} t={x}: {exact} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn collision_is_reported_with_lattice_labels() {
        // beta_{0,0} = 3 and beta_{1,1} = 2 + b meet at b = 1.
        let s = spec(2, 1, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
        match joint_coefficients(&s, 3) {
            Err(CdsError::DegenerateRates { first, second, .. }) => {
                assert!(
                    first.starts_with("beta_{") && second.starts_with("beta_{"),
                    "{first} {second}"
                );
            }
            other => panic!("expected a collision, got {other:?}"),
        }
    }

    #[test]
    fn collapsed_collision_falls_back() {
        // Interchangeable groups at a homogeneous collision point still error,
        // but through the homogeneous engine's own check.
        let s = spec(2, 2, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5);
        let err = kth_mixture_hetero(&s, 4).unwrap_err();
        assert!(matches!(err, CdsError::DegenerateRates { .. }));
        assert!(s.homogeneous_collapse().is_some());
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(0, 0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0).validate().is_err());
        assert!(spec(1, 1, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0).validate().is_err());
        assert!(spec(1, 1, 1.0, 1.0, -0.1, 0.0, 0.0, 0.0).validate().is_err());
        assert!(joint_coefficients(&generic(), 8).is_err());
        assert!(kth_density_hetero(&generic(), 0, 1.0).is_err());
    }

    fn min_gap(s: &TwoGroupSpec) -> f64 {
        let mut rates = Vec::new();
        for i in 0..s.total() {
            for j in s.m_range(i) {
                let (z, zt) = s.zeta_unchecked(i, j);
                rates.push((i, z + zt));
            }
        }
        let mut gap = f64::INFINITY;
        for (x, (i, r)) in rates.iter().enumerate() {
            for (l, q) in &rates[x + 1..] {
                if i != l {
                    gap = gap.min((r - q).abs() / r.max(*q));
                }
            }
        }
        gap
    }

    proptest! {
        #[test]
        fn laws_are_normalized_and_non_negative(n1 in 0usize..=4, n2 in 0usize..=4, a in 0.2f64..2.0, at in 0.2f64..2.0,
                                                 b in 0.0f64..2.0, c in 0.0f64..2.0, bt in 0.0f64..2.0, ct in 0.0f64..2.0) {
            let s = spec(n1, n2, a, at, b, c, bt, ct);
            prop_assume!(s.total() >= 1 && min_gap(&s) > 1e-2);
            let table = joint_coefficients(&s, s.total()).unwrap();
            for k in 1..=s.total() {
                let total: f64 = s.m_range(k).map(|m| table.group_probability(k, m)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "k={} total={}", k, total);
                let mix = table.marginal_mixture(k).unwrap();
                prop_assert!((mix.total_mass() - 1.0).abs() < 1e-9);
                for m in s.m_range(k) {
                    let scale = table.joint_terms(k, m).iter().fold(1.0f64, |x, (c, _)| x.max(c.abs()));
                    for step in 0..40 {
                        let x = 0.1 * step as f64;
                        prop_assert!(table.joint_density(k, m, x) >= -1e-12 * scale);
                    }
                }
            }
        }
    }
}
