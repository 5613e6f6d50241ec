//! Default times as absorption times of finite Markov chains.
//!
//! Every constant-rate contagion model is a pure-birth chain on its default
//! lattice, and the regime-switching model adds the hidden state to the
//! lattice. Evaluating the law through uniformization only ever adds
//! non-negative numbers, so it keeps full relative precision in the regimes
//! where the signed exponential-mixture sums cancel catastrophically (many
//! stages, small base rates). Parameter derivatives are propagated exactly
//! alongside the state vector.

use crate::error::{invalid, CdsError, Result};
use crate::hetero::TwoGroupSpec;
use crate::mixture::HomogeneousSpec;
use crate::pricing::SwapContract;
use crate::regime::TwoStateSpec;

/// Largest uniformized jump count `Lambda * h` per sub-step.
const MAX_POISSON_MEAN: f64 = 30.0;

/// Absorption time of a chain with sub-generator `generator` (transient
/// states only) started from `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTypeLaw {
    dim: usize,
    initial: Vec<f64>,
    /// Row-major `dim x dim`.
    generator: Vec<f64>,
    exit: Vec<f64>,
}

/// Legs of a swap together with their derivatives along generator tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLegs {
    /// `E[exp(-r tau) 1{tau <= T}]`, before the loss factor.
    pub protection: f64,
    /// Premium leg per unit rate, accrual included.
    pub premium: f64,
    pub d_protection: Vec<f64>,
    pub d_premium: Vec<f64>,
}

impl PhaseTypeLaw {
    pub fn new(initial: Vec<f64>, generator: Vec<f64>) -> Result<Self> {
        let dim = initial.len();
        if dim == 0 || generator.len() != dim * dim {
            return Err(invalid("generator", format!("expected a {dim} x {dim} matrix")));
        }
        if initial.iter().any(|p| !(*p >= 0.0)) || (initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("initial", "must be a probability vector"));
        }
        let mut exit = vec![0.0; dim];
        for i in 0..dim {
            let row = &generator[i * dim..(i + 1) * dim];
            for (j, &g) in row.iter().enumerate() {
                if !g.is_finite() || (i != j && g < 0.0) {
                    return Err(invalid(
                        "generator",
                        format!("entry ({i}, {j}) = {g} is not a valid rate"),
                    ));
                }
            }
            let out = -row.iter().sum::<f64>();
            if out < -1e-12 * row[i].abs() {
                return Err(invalid("generator", format!("row {i} has positive sum")));
            }
            exit[i] = out.max(0.0);
        }
        Ok(Self {
            dim,
            initial,
            generator,
            exit,
        })
    }

    /// Stages `0..k` of the homogeneous birth chain, absorbing at the k-th default.
    pub fn homogeneous(spec: &HomogeneousSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k < 1 || k > spec.n {
            return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {}]", spec.n)));
        }
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            let rate = spec.a * ((spec.n - i) as f64) * (1.0 + i as f64 * spec.c);
            g[i * k + i] = -rate;
            if i + 1 < k {
                g[i * k + i + 1] = rate;
            }
        }
        let mut init = vec![0.0; k];
        init[0] = 1.0;
        Self::new(init, g)
    }

    /// Generator tangents `dG/da` and `dG/dc` of [`PhaseTypeLaw::homogeneous`].
    pub fn homogeneous_tangents(spec: &HomogeneousSpec, k: usize) -> [Vec<f64>; 2] {
        let mut da = vec![0.0; k * k];
        let mut dc = vec![0.0; k * k];
        for i in 0..k {
            let left = (spec.n - i) as f64;
            let ra = left * (1.0 + i as f64 * spec.c);
            let rc = spec.a * left * i as f64;
            da[i * k + i] = -ra;
            dc[i * k + i] = -rc;
            if i + 1 < k {
                da[i * k + i + 1] = ra;
                dc[i * k + i + 1] = rc;
            }
        }
        [da, dc]
    }

    /// Lattice `(defaults, group-1 defaults)` below level `k`.
    pub fn two_group(spec: &TwoGroupSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k < 1 || k > spec.total() {
            return Err(CdsError::OutOfRange(format!(
                "k = {k} must lie in [1, {}]",
                spec.total()
            )));
        }
        let states: Vec<(usize, usize)> = (0..k).flat_map(|i| spec.m_range(i).map(move |j| (i, j))).collect();
        let index = |i: usize, j: usize| states.iter().position(|&s| s == (i, j));
        let dim = states.len();
        let mut g = vec![0.0; dim * dim];
        for (s, &(i, j)) in states.iter().enumerate() {
            let (z, zt) = crate::hetero::zeta(spec, i, j)?;
            g[s * dim + s] = -(z + zt);
            if let Some(t) = index(i + 1, j) {
                g[s * dim + t] += zt;
            }
            if let Some(t) = index(i + 1, j + 1) {
                g[s * dim + t] += z;
            }
        }
        let mut init = vec![0.0; dim];
        init[0] = 1.0;
        Self::new(init, g)
    }

    /// Stages `0..k` crossed with the hidden intensity state.
    pub fn regime_switching(spec: &TwoStateSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k < 1 || k > spec.n {
            return Err(CdsError::OutOfRange(format!("k = {k} must lie in [1, {}]", spec.n)));
        }
        let dim = 2 * k;
        let idx = |i: usize, s: u8| 2 * i + (s as usize - 1);
        let mut g = vec![0.0; dim * dim];
        for i in 0..k {
            let beta = ((spec.n - i) as f64) * (1.0 + i as f64 * spec.c);
            for s in [1u8, 2] {
                let from = idx(i, s);
                let birth = spec.level(s) * beta;
                let switch = spec.exit_rate(s);
                g[from * dim + from] = -(birth + switch);
                g[from * dim + idx(i, 3 - s)] = switch;
                if i + 1 < k {
                    g[from * dim + idx(i + 1, s)] = birth;
                }
            }
        }
        let mut init = vec![0.0; dim];
        init[idx(0, spec.initial_state)] = 1.0;
        Self::new(init, g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let mut run = Uniformized::new(self, 0.0, &[]);
        run.advance(t, |_, _| {});
        run.state.iter().sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let mut run = Uniformized::new(self, 0.0, &[]);
        run.advance(t, |_, _| {});
        dot(&run.state, &self.exit).max(0.0)
    }

    /// Swap legs under continuous discounting; `tangents` are derivatives of
    /// the generator with respect to model parameters.
    pub fn legs(&self, contract: &SwapContract, tangents: &[Vec<f64>]) -> Result<ChainLegs> {
        contract.validate()?;
        if tangents.iter().any(|t| t.len() != self.dim * self.dim) {
            return Err(invalid("tangents", "each tangent must match the generator shape"));
        }
        let np = tangents.len();
        let d_exit: Vec<Vec<f64>> = tangents
            .iter()
            .map(|t| {
                (0..self.dim)
                    .map(|i| -t[i * self.dim..(i + 1) * self.dim].iter().sum::<f64>())
                    .collect()
            })
            .collect();
        let mut run = Uniformized::new(self, contract.rate, tangents);
        let mut out = ChainLegs {
            protection: 0.0,
            premium: 0.0,
            d_protection: vec![0.0; np],
            d_premium: vec![0.0; np],
        };
        for (lo, hi) in contract.periods() {
            let exit = &self.exit;
            let out_ref = &mut out;
            run.advance_with_integrals(hi - lo, |offset, ints| {
                out_ref.protection += dot(&ints.i0, exit);
                out_ref.premium += dot(&ints.i1, exit) + offset * dot(&ints.i0, exit);
                for p in 0..np {
                    let d0 = dot(&ints.di0[p], exit) + dot(&ints.i0, &d_exit[p]);
                    let d1 = dot(&ints.di1[p], exit) + dot(&ints.i1, &d_exit[p]);
                    out_ref.d_protection[p] += d0;
                    out_ref.d_premium[p] += d1 + offset * d0;
                }
            });
            let h = hi - lo;
            out.premium += h * run.state.iter().sum::<f64>();
            for p in 0..np {
                out.d_premium[p] += h * run.tangent[p].iter().sum::<f64>();
            }
        }
        Ok(out)
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Row vector times row-major square matrix.
fn vec_mat(v: &[f64], m: &[f64], out: &mut [f64]) {
    let n = v.len();
    out.iter_mut().for_each(|x| *x = 0.0);
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &m[i * n..(i + 1) * n];
        for (o, &r) in out.iter_mut().zip(row) {
            *o += vi * r;
        }
    }
}

/// Integrals of the discounted state over one sub-step.
struct StepIntegrals {
    /// `int_0^h u(s) ds`
    i0: Vec<f64>,
    /// `int_0^h s u(s) ds`
    i1: Vec<f64>,
    di0: Vec<Vec<f64>>,
    di1: Vec<Vec<f64>>,
}

/// Discounted state `u(t) = p0 exp((G - r) t)` and its parameter tangents,
/// advanced by uniformization with rate `lambda`.
struct Uniformized<'a> {
    dim: usize,
    lambda: f64,
    /// `I + (G - r) / lambda`, non-negative.
    jump: Vec<f64>,
    tangent_jumps: Vec<Vec<f64>>,
    state: Vec<f64>,
    tangent: Vec<Vec<f64>>,
    _law: &'a PhaseTypeLaw,
}

impl<'a> Uniformized<'a> {
    fn new(law: &'a PhaseTypeLaw, rate: f64, tangents: &[Vec<f64>]) -> Self {
        let dim = law.dim;
        let max_out = (0..dim).map(|i| -law.generator[i * dim + i]).fold(0.0f64, f64::max);
        let lambda = (max_out + rate).max(1e-300);
        let mut jump: Vec<f64> = law.generator.iter().map(|g| g / lambda).collect();
        for i in 0..dim {
            jump[i * dim + i] += 1.0 - rate / lambda;
        }
        Self {
            dim,
            lambda,
            jump,
            tangent_jumps: tangents
                .iter()
                .map(|t| t.iter().map(|x| x / lambda).collect())
                .collect(),
            state: law.initial.clone(),
            tangent: vec![vec![0.0; dim]; tangents.len()],
            _law: law,
        }
    }

    fn advance(&mut self, h: f64, on_step: impl FnMut(f64, &StepIntegrals)) {
        self.run(h, false, on_step);
    }

    fn advance_with_integrals(&mut self, h: f64, on_step: impl FnMut(f64, &StepIntegrals)) {
        self.run(h, true, on_step);
    }

    /// Advances by `h` in sub-steps; `on_step(offset, integrals)` receives the
    /// offset of each sub-step from the start of `h`.
    fn run(&mut self, h: f64, integrals: bool, mut on_step: impl FnMut(f64, &StepIntegrals)) {
        let steps = ((self.lambda * h) / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
        let dt = h / steps as f64;
        let weights = PoissonWeights::new(self.lambda * dt);
        for s in 0..steps {
            let ints = self.step(&weights, dt, integrals);
            if integrals {
                on_step(s as f64 * dt, &ints);
            }
        }
    }

    fn step(&mut self, w: &PoissonWeights, dt: f64, integrals: bool) -> StepIntegrals {
        let (dim, np) = (self.dim, self.tangent.len());
        let mut a = self.state.clone();
        let mut b = self.tangent.clone();
        let mut next_a = vec![0.0; dim];
        let mut next_b = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];

        let mut end_a = vec![0.0; dim];
        let mut end_b = vec![vec![0.0; dim]; np];
        let mut i0 = vec![0.0; if integrals { dim } else { 0 }];
        let mut i1 = i0.clone();
        let mut di0 = vec![vec![0.0; if integrals { dim } else { 0 }]; np];
        let mut di1 = di0.clone();
        let inv = 1.0 / self.lambda;
        let c0 = inv;
        let c1 = inv * inv;
        let _ = dt;

        for m in 0..w.pmf.len() {
            let (pm, t1, t2) = (w.pmf[m], w.tail(m + 1), w.tail(m + 2));
            axpy(pm, &a, &mut end_a);
            if integrals {
                axpy(c0 * t1, &a, &mut i0);
                axpy(c1 * (m + 1) as f64 * t2, &a, &mut i1);
            }
            for p in 0..np {
                axpy(pm, &b[p], &mut end_b[p]);
                if integrals {
                    axpy(c0 * t1, &b[p], &mut di0[p]);
                    axpy(c1 * (m + 1) as f64 * t2, &b[p], &mut di1[p]);
                }
            }
            if m + 1 == w.pmf.len() {
                break;
            }
            // b_{m+1} = b_m J + a_m T / lambda, then a_{m+1} = a_m J.
            for p in 0..np {
                vec_mat(&b[p], &self.jump, &mut next_b);
                vec_mat(&a, &self.tangent_jumps[p], &mut scratch);
                for (x, y) in next_b.iter_mut().zip(&scratch) {
                    *x += y;
                }
                std::mem::swap(&mut b[p], &mut next_b);
            }
            vec_mat(&a, &self.jump, &mut next_a);
            std::mem::swap(&mut a, &mut next_a);
        }
        self.state = end_a;
        self.tangent = end_b;
        StepIntegrals { i0, i1, di0, di1 }
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Poisson(`mean`) probabilities with upper tails summed from the top.
struct PoissonWeights {
    pmf: Vec<f64>,
    /// `tails[j] = P(N >= j)`, one entry longer than `pmf`.
    tails: Vec<f64>,
}

impl PoissonWeights {
    fn new(mean: f64) -> Self {
        let cut = (mean + 12.0 * mean.sqrt() + 40.0).ceil() as usize;
        let mut pmf = Vec::with_capacity(cut + 1);
        let mut p = (-mean).exp();
        for m in 0..=cut {
            if m > 0 {
                p *= mean / m as f64;
            }
            pmf.push(p);
        }
        let mut tails = vec![0.0; pmf.len() + 2];
        for j in (0..pmf.len()).rev() {
            tails[j] = tails[j + 1] + pmf[j];
        }
        Self { pmf, tails }
    }

    fn tail(&self, j: usize) -> f64 {
        self.tails.get(j).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetero::kth_mixture_hetero;
    use crate::mixture::kth_default_mixture;
    use crate::regime::RegimeSwitchLaw;

    #[test]
    fn matches_mixture_on_well_conditioned_laws() {
        for (n, a, c) in [(10, 1.0, 3.0), (5, 0.3, 0.7), (3, 2.0, 0.0)] {
            let spec = HomogeneousSpec::new(n, a, c).unwrap();
            for k in 1..=n {
                let chain = PhaseTypeLaw::homogeneous(&spec, k).unwrap();
                let mix = kth_default_mixture(&spec, k).unwrap();
                for t in [0.0, 0.1, 0.5, 1.3, 4.0] {
                    assert!((chain.survival(t) - mix.survival(t)).abs() < 1e-12, "n={n} k={k} t={t}");
                    // The mixture density at small t is a cancelling sum; allow for its rounding floor.
                    let floor: f64 = mix.terms.iter().map(|m| (m.weight * m.beta).abs()).sum::<f64>() * a * 1e-15;
                    let tol = 1e-11 * mix.density(t).abs().max(1.0) + floor;
                    assert!((chain.density(t) - mix.density(t)).abs() < tol, "n={n} k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn two_group_chain_matches_coefficient_table() {
        let spec = TwoGroupSpec {
            n1: 3,
            n2: 4,
            a: 0.7,
            a_tilde: 1.3,
            b: 0.4,
            c: 1.1,
            b_tilde: 0.25,
            c_tilde: 0.9,
        };
        for k in 1..=7 {
            let chain = PhaseTypeLaw::two_group(&spec, k).unwrap();
            let mix = kth_mixture_hetero(&spec, k).unwrap();
            for t in [0.2, 1.0, 2.5] {
                assert!((chain.survival(t) - mix.survival(t)).abs() < 1e-11, "k={k} t={t}");
                assert!((chain.density(t) - mix.density(t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn regime_chain_matches_occupation_transform() {
        let spec = TwoStateSpec {
            n: 10,
            c: 3.0,
            x1: 1.0,
            x2: 2.0,
            eta1: 2.0,
            eta2: 1.0,
            initial_state: 2,
        };
        for k in [1, 4, 10] {
            let chain = PhaseTypeLaw::regime_switching(&spec, k).unwrap();
            let law = RegimeSwitchLaw::new(&spec, k).unwrap();
            for t in [0.1, 0.7, 2.0] {
                assert!((chain.survival(t) - law.survival(t)).abs() < 1e-11, "k={k} t={t}");
                assert!((chain.density(t) - law.density(t)).abs() < 1e-10 * law.density(t).max(1.0));
            }
        }
    }

    #[test]
    fn long_horizons_use_many_substeps() {
        let spec = HomogeneousSpec::new(10, 3.0, 4.0).unwrap();
        let chain = PhaseTypeLaw::homogeneous(&spec, 10).unwrap();
        let mix = kth_default_mixture(&spec, 10).unwrap();
        // Lambda t is in the thousands here.
        for t in [0.01, 0.05, 0.2] {
            assert!((chain.survival(t) - mix.survival(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(PhaseTypeLaw::new(vec![1.0], vec![0.5]).is_err());
        assert!(PhaseTypeLaw::new(vec![0.5, 0.4], vec![-1.0, 1.0, 0.0, -1.0]).is_err());
        assert!(PhaseTypeLaw::new(vec![1.0, 0.0], vec![-1.0, -0.5, 0.0, -1.0]).is_err());
        assert!(PhaseTypeLaw::new(vec![1.0], vec![-1.0, 0.0]).is_err());
    }

    #[test]
    fn poisson_tails_are_consistent() {
        for mean in [0.0, 1e-3, 0.7, 12.0, 30.0] {
            let w = PoissonWeights::new(mean);
            assert!((w.tail(0) - 1.0).abs() < 1e-14);
            assert!((w.tail(1) - (1.0 - (-mean).exp())).abs() < 1e-14);
        }
    }
}
