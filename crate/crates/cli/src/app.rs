//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use basket_cds::montecarlo::SimulationPlan;
use clap::{ArgGroup, Parser};

use crate::config::{Method, ScenarioConfig, DEFAULT_PATHS, DEFAULT_SEED};
use crate::error::{CliError, CliResult};
use crate::rows::rows_to_csv;
use crate::scenario::{run_scenario, RunOptions};
use crate::sweep::{
    default_grid, parse_grid, preset_model, sensitivity_sweep, sweep_to_csv, SweepOptions, SweepParameter,
};
use crate::tables::{reproduce_table, table_contract};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "basket-cds",
    version,
    about = "Price k-th-to-default basket CDS under default contagion"
)]
#[command(group(ArgGroup::new("task").required(true).multiple(true).args(["config", "table", "sweep"])))]
pub struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Reproduce a built-in rate table.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), conflicts_with_all = ["config", "sweep"])]
    pub table: Option<u8>,

    /// Sensitivity sweep in `a` or `c`; uses the preset basket unless --config is given.
    #[arg(long, value_enum)]
    pub sweep: Option<SweepParameter>,

    /// Sweep grid as `start:stop:step` or `x1,x2,...`.
    #[arg(long, requires = "sweep")]
    pub grid: Option<String>,

    #[arg(long, value_enum)]
    pub method: Option<Method>,

    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,

    /// Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Work chunks for the simulation (does not change results).
    #[arg(long)]
    pub chunks: Option<usize>,

    /// Worker threads (does not change results).
    #[arg(long)]
    pub threads: Option<usize>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Record wall-clock times in scenario output.
    #[arg(long)]
    pub timings: bool,

    /// Shift `c` by 1e-7 at degenerate sweep points instead of skipping them.
    #[arg(long)]
    pub perturb_degenerate: bool,
}

impl Args {
    fn plan(&self, base: Option<SimulationPlan>) -> CliResult<SimulationPlan> {
        let mut plan = base.unwrap_or_else(|| SimulationPlan::new(DEFAULT_PATHS, DEFAULT_SEED));
        if let Some(p) = self.paths {
            plan.paths = p;
        }
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if let Some(c) = self.chunks {
            plan.parallel_chunks = c;
        }
        plan.validate().map_err(|e| crate::config::scoped("mc_plan", e))?;
        Ok(plan)
    }
}

/// Runs the requested task and returns the CSV text plus its destination.
pub fn render(args: &Args) -> CliResult<(String, Option<PathBuf>)> {
    if let Some(which) = args.table {
        let plan = args.plan(None)?;
        let text = reproduce_table(which, args.method.unwrap_or_default(), &plan)?;
        return Ok((text, args.out.clone()));
    }
    let cfg = args.config.as_deref().map(ScenarioConfig::load).transpose()?;
    if let Some(parameter) = args.sweep {
        if args.method.is_some_and(|m| m != Method::Analytic) {
            return Err(CliError::config(
                "method",
                "sweeps differentiate the analytic swap rate",
            ));
        }
        let (model, contract, ks, quad) = match &cfg {
            Some(c) => (c.model.clone(), c.contract.build()?, c.ks.clone(), c.quad()),
            None => (preset_model(), table_contract(), (1..=10).collect(), Default::default()),
        };
        let grid = match &args.grid {
            Some(g) => parse_grid(g)?,
            None => default_grid(parameter),
        };
        let opts = SweepOptions {
            perturb_degenerate: args.perturb_degenerate,
            quad,
        };
        let points = sensitivity_sweep(&model, &contract, &ks, parameter, &grid, &opts)?;
        if args.perturb_degenerate && points.iter().any(|p| p.flag == "perturbed") {
            eprintln!("warning: some degenerate grid points were evaluated at c + 1e-7");
        }
        let out = args
            .out
            .clone()
            .or_else(|| cfg.as_ref().and_then(|c| c.output.as_ref()?.path.clone()));
        return Ok((sweep_to_csv(&points)?, out));
    }
    let mut cfg = cfg.expect("clap requires one of --config, --table, --sweep");
    if let Some(m) = args.method {
        cfg.method = m;
    }
    cfg.mc_plan = Some(args.plan(cfg.mc_plan)?);
    let rows = run_scenario(&cfg, &RunOptions { timings: args.timings })?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.path.clone()));
    Ok((rows_to_csv(&rows)?, out))
}

pub fn execute(args: &Args) -> CliResult<()> {
    let (text, out) = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::config("threads", e.to_string()))?
            .install(|| render(args))?,
        None => render(args)?,
    };
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}
