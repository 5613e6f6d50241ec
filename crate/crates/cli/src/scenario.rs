use std::time::Instant;

use basket_cds::montecarlo::mc_swap_rates;
use basket_cds::pricing::swap_rate;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::rows::{ResultRow, RowMethod};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Fill `wall_clock_ms`; off by default so repeated runs give identical files.
    pub timings: bool,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// One row per `(k, method)`, ordered by the position of `k` in `ks`, analytic first.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<Vec<ResultRow>> {
    cfg.validate()?;
    let contract = cfg.contract.build()?;
    let label = cfg.model.label();

    let analytic: Vec<Option<ResultRow>> = if cfg.method.analytic() {
        let quad = cfg.quad();
        cfg.ks
            .par_iter()
            .map(|&k| {
                let start = Instant::now();
                let rate = cfg
                    .model
                    .law(k, quad)
                    .and_then(|law| swap_rate(&law, &contract))
                    .map_err(|e| CliError::engine(format!("{label} model, k = {k}, analytic"), e))?;
                let ms = opts.timings.then(|| elapsed_ms(start));
                Ok(Some(ResultRow::new(k, RowMethod::Analytic, rate, None, ms)))
            })
            .collect::<CliResult<_>>()?
    } else {
        vec![None; cfg.ks.len()]
    };

    let mc: Vec<Option<ResultRow>> = if cfg.method.mc() {
        let start = Instant::now();
        let estimates = mc_swap_rates(&cfg.model, &contract, &cfg.ks, &cfg.plan())
            .map_err(|e| CliError::engine(format!("{label} model, Monte Carlo"), e))?;
        // All seniorities share one simulation; each row reports its wall time.
        let ms = opts.timings.then(|| elapsed_ms(start));
        cfg.ks
            .iter()
            .zip(estimates)
            .map(|(&k, e)| Some(ResultRow::new(k, RowMethod::Mc, e.value, Some(e.std_error), ms)))
            .collect()
    } else {
        vec![None; cfg.ks.len()]
    };

    Ok(analytic
        .into_iter()
        .zip(mc)
        .flat_map(|(a, m)| a.into_iter().chain(m))
        .collect())
}
