//! Swap-rate sensitivity curves over a parameter grid.

use basket_cds::mixture::HomogeneousSpec;
use basket_cds::model::ModelSpec;
use basket_cds::pricing::{swap_rate, swap_rate_sensitivities, SwapContract};
use basket_cds::quadrature::QuadratureConfig;
use basket_cds::CdsError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::rows::{fmt_opt, round_sig, table_to_csv};

/// Central differences use `h = FD_REL_STEP * x`; at `x = 0` a one-sided
/// three-point stencil with `h = FD_REL_STEP` is used instead.
pub const FD_REL_STEP: f64 = 1e-5;

/// Shift applied to `c` at degenerate grid points with `perturb_degenerate`.
pub const DEGENERACY_SHIFT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    A,
    C,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::C => "c",
        }
    }
}

fn arange(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| round_sig(start + i as f64 * step)).collect()
}

/// Preset grids: `a` in [0.02, 0.5] by 0.02, `c` in [0, 3] by 0.1.
pub fn default_grid(p: SweepParameter) -> Vec<f64> {
    match p {
        SweepParameter::A => arange(0.02, 0.5, 0.02),
        SweepParameter::C => arange(0.0, 3.0, 0.1),
    }
}

/// Preset basket: `n = 10, c = 0.3` for `a` sweeps and `n = 10, a = 0.1` for
/// `c` sweeps. The swept field is overwritten point by point.
pub fn preset_model() -> ModelSpec {
    ModelSpec::Homogeneous(HomogeneousSpec { n: 10, a: 0.1, c: 0.3 })
}

/// Parses `start:stop:step` or a comma-separated list.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = |reason: &str| CliError::config("grid", reason.to_string());
    let grid = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected start:stop:step"))?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        arange(start, stop, step)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected a comma-separated list of numbers"))?
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(bad("grid must contain finite values"));
    }
    Ok(grid)
}

fn with_parameter(model: &ModelSpec, p: SweepParameter, x: f64) -> CliResult<ModelSpec> {
    let mut m = model.clone();
    match (&mut m, p) {
        (ModelSpec::Homogeneous(s), SweepParameter::A) => s.a = x,
        (ModelSpec::Homogeneous(s), SweepParameter::C) => s.c = x,
        (ModelSpec::Decay(s), SweepParameter::A) => s.a = x,
        (ModelSpec::Decay(s), SweepParameter::C) => s.c = x,
        (ModelSpec::RegimeSwitching(s), SweepParameter::C) => s.c = x,
        _ => {
            return Err(CliError::config(
                "sweep",
                format!(
                    "model `{}` has no single parameter `{}` to sweep",
                    model.label(),
                    p.name()
                ),
            ))
        }
    }
    Ok(m)
}

fn shift_c(model: &ModelSpec) -> ModelSpec {
    let mut m = model.clone();
    match &mut m {
        ModelSpec::Homogeneous(s) => s.c += DEGENERACY_SHIFT,
        ModelSpec::Decay(s) => s.c += DEGENERACY_SHIFT,
        ModelSpec::RegimeSwitching(s) => s.c += DEGENERACY_SHIFT,
        _ => {}
    }
    m
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepOptions {
    pub perturb_degenerate: bool,
    pub quad: QuadratureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: f64,
    pub k: usize,
    /// Homogeneous model only.
    pub theta_analytic: Option<f64>,
    pub theta_fd: Option<f64>,
    /// `ok`, `perturbed` or `degenerate`.
    pub flag: &'static str,
}

fn rate_at(
    model: &ModelSpec,
    p: SweepParameter,
    x: f64,
    k: usize,
    contract: &SwapContract,
    quad: QuadratureConfig,
) -> CliResult<std::result::Result<f64, CdsError>> {
    let m = with_parameter(model, p, x)?;
    Ok(m.law(k, quad).and_then(|law| swap_rate(&law, contract)))
}

/// Finite-difference slope of `S_k` in the swept parameter.
pub fn fd_theta(
    model: &ModelSpec,
    p: SweepParameter,
    x: f64,
    k: usize,
    contract: &SwapContract,
    quad: QuadratureConfig,
) -> CliResult<std::result::Result<f64, CdsError>> {
    let s = |y: f64| rate_at(model, p, y, k, contract, quad);
    Ok(if x > 0.0 {
        let h = FD_REL_STEP * x;
        match (s(x + h)?, s(x - h)?) {
            (Ok(up), Ok(down)) => Ok((up - down) / (2.0 * h)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    } else {
        let h = FD_REL_STEP;
        match (s(x)?, s(x + h)?, s(x + 2.0 * h)?) {
            (Ok(f0), Ok(f1), Ok(f2)) => Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e),
        }
    })
}

fn analytic_theta(
    model: &ModelSpec,
    p: SweepParameter,
    contract: &SwapContract,
    k: usize,
) -> Option<std::result::Result<f64, CdsError>> {
    let ModelSpec::Homogeneous(spec) = model else {
        return None;
    };
    Some(swap_rate_sensitivities(spec, contract, k).map(|s| match p {
        SweepParameter::A => s.theta_a,
        SweepParameter::C => s.theta_c,
    }))
}

fn point(
    model: &ModelSpec,
    p: SweepParameter,
    x: f64,
    k: usize,
    contract: &SwapContract,
    opts: &SweepOptions,
) -> CliResult<SweepPoint> {
    let evaluate = |m: &ModelSpec, x: f64| -> CliResult<std::result::Result<(Option<f64>, f64), CdsError>> {
        let at = with_parameter(m, p, x)?;
        let analytic = match analytic_theta(&at, p, contract, k) {
            Some(Err(e)) => return Ok(Err(e)),
            Some(Ok(t)) => Some(t),
            None => None,
        };
        Ok(fd_theta(m, p, x, k, contract, opts.quad)?.map(|fd| (analytic, fd)))
    };
    let mut flag = "ok";
    let mut outcome = evaluate(model, x)?;
    if matches!(outcome, Err(CdsError::DegenerateRates { .. })) && opts.perturb_degenerate {
        flag = "perturbed";
        outcome = match p {
            SweepParameter::C => evaluate(model, x + DEGENERACY_SHIFT)?,
            SweepParameter::A => evaluate(&shift_c(model), x)?,
        };
    }
    let (theta_analytic, theta_fd) = match outcome {
        Ok((a, fd)) => (a, Some(fd)),
        Err(CdsError::DegenerateRates { .. }) => {
            flag = "degenerate";
            (None, None)
        }
        Err(e) => {
            return Err(CliError::engine(format!("sweep {} = {x}, k = {k}", p.name()), e));
        }
    };
    Ok(SweepPoint {
        parameter: p,
        value: x,
        k,
        theta_analytic,
        theta_fd,
        flag,
    })
}

/// `theta_k` for every grid value and seniority, in (value, k) order.
/// Degenerate grid points are flagged rather than failing the sweep.
pub fn sensitivity_sweep(
    model: &ModelSpec,
    contract: &SwapContract,
    ks: &[usize],
    parameter: SweepParameter,
    grid: &[f64],
    opts: &SweepOptions,
) -> CliResult<Vec<SweepPoint>> {
    with_parameter(model, parameter, grid.first().copied().unwrap_or(0.0))?;
    let n = model.names();
    if let Some(k) = ks.iter().find(|&&k| k < 1 || k > n) {
        return Err(CliError::config("ks", format!("seniority {k} is outside [1, {n}]")));
    }
    let jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&x| ks.iter().map(move |&k| (x, k))).collect();
    jobs.par_iter()
        .map(|&(x, k)| point(model, parameter, x, k, contract, opts))
        .collect()
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> CliResult<String> {
    let step = format!("{FD_REL_STEP:e}");
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            vec![
                pt.parameter.name().to_string(),
                format!("{}", pt.value),
                pt.k.to_string(),
                fmt_opt(pt.theta_analytic.map(round_sig)),
                fmt_opt(pt.theta_fd.map(round_sig)),
                step.clone(),
                pt.flag.to_string(),
            ]
        })
        .collect();
    table_to_csv(
        &[
            "parameter",
            "value",
            "k",
            "theta_analytic",
            "theta_fd",
            "fd_rel_step",
            "flag",
        ],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contract() -> SwapContract {
        SwapContract::regular(3.0, 0.5, 0.5, 0.05).unwrap()
    }

    #[test]
    fn grids() {
        let a = default_grid(SweepParameter::A);
        assert_eq!((a.len(), a[0], a[24]), (25, 0.02, 0.5));
        let c = default_grid(SweepParameter::C);
        assert_eq!((c.len(), c[0], c[30]), (31, 0.0, 3.0));
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_grid("1:2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn first_default_ignores_contagion() {
        let pts = sensitivity_sweep(
            &preset_model(),
            &contract(),
            &[1],
            SweepParameter::C,
            &[0.0, 0.7, 2.0],
            &SweepOptions::default(),
        )
        .unwrap();
        for p in pts {
            assert_eq!(p.theta_analytic, Some(0.0));
            assert_eq!(p.theta_fd, Some(0.0));
        }
    }

    #[test]
    fn degenerate_points_are_flagged() {
        let model = preset_model();
        let opts = SweepOptions::default();
        let pts = sensitivity_sweep(&model, &contract(), &[10], SweepParameter::C, &[0.5, 0.55], &opts).unwrap();
        assert_eq!((pts[0].flag, pts[0].theta_fd), ("degenerate", None));
        assert_eq!(pts[1].flag, "ok");
        let opts = SweepOptions {
            perturb_degenerate: true,
            ..opts
        };
        let pts = sensitivity_sweep(&model, &contract(), &[10], SweepParameter::C, &[0.5], &opts).unwrap();
        assert_eq!(pts[0].flag, "perturbed");
        assert!(pts[0].theta_analytic.unwrap().is_finite());
    }

    #[test]
    fn unsupported_parameter_is_a_config_error() {
        let model = ModelSpec::RegimeSwitching(basket_cds::regime::TwoStateSpec {
            n: 3,
            c: 0.2,
            x1: 1.0,
            x2: 2.0,
            eta1: 1.0,
            eta2: 1.0,
            initial_state: 1,
        });
        let err = sensitivity_sweep(
            &model,
            &contract(),
            &[1],
            SweepParameter::A,
            &[0.1],
            &SweepOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
