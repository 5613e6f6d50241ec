//! Globally adaptive Gauss-Kronrod quadrature.
//!
//! Panels are bisected worst-first until the summed error estimate falls
//! below the absolute tolerance. A panel that has already been bisected
//! `max_depth` times is never split again; if such a panel is the worst one
//! and the tolerance is still unmet, integration fails rather than returning
//! an unconverged value. The same happens once `max_evaluations` is spent,
//! which guards against tolerances below the integrand's rounding noise.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{CdsError, Result};

/// Fixed-order rule applied on each panel. Both are Kronrod extensions, so
/// the embedded Gauss rule gives the error estimate for free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PanelRule {
    #[default]
    GaussKronrod15,
    GaussKronrod21,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_depth: u32,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
    pub panel_rule: PanelRule,
}

fn default_max_evaluations() -> usize {
    2_000_000
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            max_depth: 40,
            max_evaluations: default_max_evaluations(),
            panel_rule: PanelRule::GaussKronrod15,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return Err(crate::error::invalid("abs_tol", "must be positive"));
        }
        if self.max_depth < 1 {
            return Err(crate::error::invalid("max_depth", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK15: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG7: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const XGK21: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_87,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_61,
    0.109_387_158_802_297_6,
    0.123_491_976_262_065_9,
    0.134_709_217_311_473_3,
    0.142_775_938_577_060_1,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG10: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982,
    0.269_266_719_309_996_4,
    0.295_524_224_714_752_9,
];

struct Panel {
    lower: f64,
    upper: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn apply_rule<F>(rule: PanelRule, f: &mut F, lower: f64, upper: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (xgk, wgk, wg): (&[f64], &[f64], &[f64]) = match rule {
        PanelRule::GaussKronrod15 => (&XGK15, &WGK15, &WG7),
        PanelRule::GaussKronrod21 => (&XGK21, &WGK21, &WG10),
    };
    let center = 0.5 * (lower + upper);
    let half = 0.5 * (upper - lower);
    let last = xgk.len() - 1;
    // The 15-point rule has a Gauss node at the centre, the 21-point rule does not.
    let gauss_has_center = xgk.len() % 2 == 0;

    let fc = f(center)?;
    let mut kronrod = fc * wgk[last];
    let mut gauss = if gauss_has_center { fc * wg[wg.len() - 1] } else { 0.0 };
    let mut abs_sum = fc.abs() * wgk[last];
    let mut values = Vec::with_capacity(2 * last);
    for j in 0..last {
        let dx = half * xgk[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        kronrod += wgk[j] * (f1 + f2);
        abs_sum += wgk[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += wg[j / 2] * (f1 + f2);
        }
        values.push((j, f1, f2));
    }
    let mean = 0.5 * kronrod;
    let mut asc = wgk[last] * (fc - mean).abs();
    for &(j, f1, f2) in &values {
        asc += wgk[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    let abs_value = abs_sum * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_value > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_value);
    }
    if !value.is_finite() {
        return Err(CdsError::QuadratureNonConvergence {
            lower,
            upper,
            estimate: value,
            error: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    Ok((value, error))
}

/// Integrates `f` over `[lower, upper]` to `config.abs_tol`.
pub fn integrate<F>(mut f: F, lower: f64, upper: f64, config: &QuadratureConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if upper == lower {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if upper < lower {
        let r = integrate(f, upper, lower, config)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let per_panel = match config.panel_rule {
        PanelRule::GaussKronrod15 => 15,
        PanelRule::GaussKronrod21 => 21,
    };
    let (value, error) = apply_rule(config.panel_rule, &mut f, lower, upper)?;
    let mut evaluations = per_panel;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        lower,
        upper,
        value,
        error,
        depth: 0,
    });
    let mut total_value = value;
    let mut total_error = error;

    while total_error > config.abs_tol {
        let worst = heap.pop().expect("heap is never empty");
        if worst.depth >= config.max_depth || evaluations >= config.max_evaluations {
            return Err(CdsError::QuadratureNonConvergence {
                lower,
                upper,
                estimate: total_value,
                error: total_error,
                tolerance: config.abs_tol,
            });
        }
        let mid = 0.5 * (worst.lower + worst.upper);
        let (v1, e1) = apply_rule(config.panel_rule, &mut f, worst.lower, mid)?;
        let (v2, e2) = apply_rule(config.panel_rule, &mut f, mid, worst.upper)?;
        evaluations += 2 * per_panel;
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        for (lo, hi, v, e) in [(worst.lower, mid, v1, e1), (mid, worst.upper, v2, e2)] {
            heap.push(Panel {
                lower: lo,
                upper: hi,
                value: v,
                error: e,
                depth: worst.depth + 1,
            });
        }
        // Re-sum periodically so the running totals do not drift.
        if heap.len() % 64 == 0 {
            total_value = heap.iter().map(|p| p.value).sum();
            total_error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Integrates piece by piece over consecutive `breaks`, splitting the
/// tolerance evenly. Useful when the integrand has kinks at known points.
pub fn integrate_pieces<F>(mut f: F, breaks: &[f64], config: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let pieces = (breaks.len() - 1) as f64;
    let piece_config = QuadratureConfig {
        abs_tol: config.abs_tol / pieces,
        ..*config
    };
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += integrate(&mut f, w[0], w[1], &piece_config)?.value;
    }
    Ok(total)
}
