//! Built-in parameter sets for the three reference rate tables.

use basket_cds::decay::DecaySpec;
use basket_cds::hetero::TwoGroupSpec;
use basket_cds::model::ModelSpec;
use basket_cds::montecarlo::{mc_swap_rates, SimulationPlan};
use basket_cds::pricing::{swap_rate, SwapContract};
use basket_cds::quadrature::QuadratureConfig;
use basket_cds::regime::TwoStateSpec;
use rayon::prelude::*;

use crate::config::Method;
use crate::error::{CliError, CliResult};
use crate::rows::{fmt_opt, fmt_value, round_sig, table_to_csv, RowMethod};

/// T = 3, semiannual premiums, R = 0.5, r = 0.05.
pub fn table_contract() -> SwapContract {
    SwapContract::regular(3.0, 0.5, 0.5, 0.05).expect("preset contract is valid")
}

pub const TABLE1_A: [f64; 2] = [0.1, 1.0];
pub const TABLE1_C: [f64; 3] = [0.2, 1.0, 5.0];
pub const TABLE1_D: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Cell {
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub rate: f64,
}

/// Second-to-default on two names with decaying contagion, 36 cells.
pub fn table1(quad: QuadratureConfig) -> CliResult<Vec<Table1Cell>> {
    let contract = table_contract();
    let grid: Vec<(f64, f64, f64)> = TABLE1_A
        .iter()
        .flat_map(|&a| {
            TABLE1_D
                .iter()
                .flat_map(move |&d| TABLE1_C.iter().map(move |&c| (a, c, d)))
        })
        .collect();
    grid.par_iter()
        .map(|&(a, c, d)| {
            let rate = DecaySpec::new(2, a, c, d)
                .and_then(|s| ModelSpec::Decay(s).law(2, quad))
                .and_then(|law| swap_rate(&law, &contract))
                .map_err(|e| CliError::engine(format!("table 1 cell a = {a}, c = {c}, d = {d}"), e))?;
            Ok(Table1Cell { a, c, d, rate })
        })
        .collect()
}

/// Regime-switching conditions 1 to 4 (n = 10, c = 3, chain starts in state 1).
pub fn table2_conditions() -> [TwoStateSpec; 4] {
    let cond = |x2: f64, eta1: f64, eta2: f64| TwoStateSpec {
        n: 10,
        c: 3.0,
        x1: 1.0,
        x2,
        eta1,
        eta2,
        initial_state: 1,
    };
    [
        cond(1.0, 1.0, 1.0),
        cond(2.0, 1.0, 1.0),
        cond(2.0, 1.0, 2.0),
        cond(2.0, 2.0, 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table2Cell {
    /// 1-based.
    pub condition: usize,
    pub k: usize,
    pub rate: f64,
}

pub fn table2(quad: QuadratureConfig) -> CliResult<Vec<Table2Cell>> {
    let contract = table_contract();
    let conditions = table2_conditions();
    let grid: Vec<(usize, usize)> = (1..=4).flat_map(|c| (1..=10).map(move |k| (c, k))).collect();
    grid.par_iter()
        .map(|&(condition, k)| {
            let model = ModelSpec::RegimeSwitching(conditions[condition - 1]);
            let rate = model
                .law(k, quad)
                .and_then(|law| swap_rate(&law, &contract))
                .map_err(|e| CliError::engine(format!("table 2 condition {condition}, k = {k}"), e))?;
            Ok(Table2Cell { condition, k, rate })
        })
        .collect()
}

/// Two groups of five names, conditions 1 to 4.
pub fn table3_conditions() -> [TwoGroupSpec; 4] {
    let cond = |b: f64, c: f64, b_tilde: f64, c_tilde: f64| TwoGroupSpec {
        n1: 5,
        n2: 5,
        a: 1.0,
        a_tilde: 1.0,
        b,
        c,
        b_tilde,
        c_tilde,
    };
    [
        cond(3.0, 3.0, 3.0, 3.0),
        cond(3.0, 0.3, 0.3, 3.0),
        cond(0.3, 0.3, 0.3, 0.3),
        cond(3.0, 0.3, 3.0, 0.3),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table3Cell {
    pub condition: usize,
    pub k: usize,
    pub method: RowMethod,
    pub rate: f64,
    pub std_error: Option<f64>,
}

/// Analytic and/or simulated rates; simulated cells use one path set per condition.
pub fn table3(method: Method, plan: &SimulationPlan) -> CliResult<Vec<Table3Cell>> {
    let contract = table_contract();
    let conditions = table3_conditions();
    let ks: Vec<usize> = (1..=10).collect();
    let mut cells = Vec::new();
    for (i, spec) in conditions.iter().enumerate() {
        let condition = i + 1;
        let model = ModelSpec::TwoGroup(*spec);
        let analytic: Vec<f64> = if method.analytic() {
            ks.par_iter()
                .map(|&k| {
                    model
                        .law(k, QuadratureConfig::default())
                        .and_then(|law| swap_rate(&law, &contract))
                        .map_err(|e| CliError::engine(format!("table 3 condition {condition}, k = {k}"), e))
                })
                .collect::<CliResult<_>>()?
        } else {
            Vec::new()
        };
        let mc = if method.mc() {
            mc_swap_rates(&model, &contract, &ks, plan)
                .map_err(|e| CliError::engine(format!("table 3 condition {condition}, Monte Carlo"), e))?
        } else {
            Vec::new()
        };
        for (j, &k) in ks.iter().enumerate() {
            if let Some(&rate) = analytic.get(j) {
                cells.push(Table3Cell {
                    condition,
                    k,
                    method: RowMethod::Analytic,
                    rate,
                    std_error: None,
                });
            }
            if let Some(e) = mc.get(j) {
                cells.push(Table3Cell {
                    condition,
                    k,
                    method: RowMethod::Mc,
                    rate: e.value,
                    std_error: Some(e.std_error),
                });
            }
        }
    }
    Ok(cells)
}

fn v(x: f64) -> String {
    fmt_value(round_sig(x))
}

/// CSV of table `which`; `method` and `plan` only matter for table 3.
pub fn reproduce_table(which: u8, method: Method, plan: &SimulationPlan) -> CliResult<String> {
    let quad = QuadratureConfig::default();
    match which {
        1 => {
            let rows: Vec<Vec<String>> = table1(quad)?
                .iter()
                .map(|c| vec!["2".into(), "2".into(), v(c.a), v(c.c), v(c.d), v(c.rate)])
                .collect();
            table_to_csv(&["n", "k", "a", "c", "d", "rate"], &rows)
        }
        2 => {
            let conditions = table2_conditions();
            let rows: Vec<Vec<String>> = table2(quad)?
                .iter()
                .map(|cell| {
                    let s = &conditions[cell.condition - 1];
                    vec![
                        cell.condition.to_string(),
                        s.n.to_string(),
                        v(s.c),
                        v(s.x1),
                        v(s.x2),
                        v(s.eta1),
                        v(s.eta2),
                        s.initial_state.to_string(),
                        cell.k.to_string(),
                        v(cell.rate),
                    ]
                })
                .collect();
            table_to_csv(
                &[
                    "condition",
                    "n",
                    "c",
                    "x1",
                    "x2",
                    "eta1",
                    "eta2",
                    "initial_state",
                    "k",
                    "rate",
                ],
                &rows,
            )
        }
        3 => {
            let conditions = table3_conditions();
            let rows: Vec<Vec<String>> = table3(method, plan)?
                .iter()
                .map(|cell| {
                    let s = &conditions[cell.condition - 1];
                    let m = match cell.method {
                        RowMethod::Analytic => "analytic",
                        RowMethod::Mc => "mc",
                    };
                    vec![
                        cell.condition.to_string(),
                        s.n1.to_string(),
                        s.n2.to_string(),
                        v(s.a),
                        v(s.a_tilde),
                        v(s.b),
                        v(s.c),
                        v(s.b_tilde),
                        v(s.c_tilde),
                        cell.k.to_string(),
                        m.to_string(),
                        v(cell.rate),
                        fmt_opt(cell.std_error.map(round_sig)),
                    ]
                })
                .collect();
            table_to_csv(
                &[
                    "condition",
                    "n1",
                    "n2",
                    "a",
                    "a_tilde",
                    "b",
                    "c",
                    "b_tilde",
                    "c_tilde",
                    "k",
                    "method",
                    "rate",
                    "std_error",
                ],
                &rows,
            )
        }
        other => Err(CliError::config("table", format!("no table {other}; choose 1, 2 or 3"))),
    }
}
