//! Perceptual fidelity metrics, the Wilcoxon signed-rank test and paired
//! method comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyModel;
use crate::constraints::{self, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::forward::{self, Raster, TargetImage};
use crate::layout::ElectrodeLayout;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
/// Largest sample evaluated with the exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

fn check_shapes(p: &Raster, t: &Raster) -> Result<()> {
    if p.width != t.width || p.height != t.height {
        return Err(Error::invalid(format!("shape mismatch: {}×{} vs {}×{}", p.height, p.width, t.height, t.width)));
    }
    Ok(())
}

/// Unweighted mean squared pixel difference.
pub fn mse(p: &Raster, t: &Raster) -> Result<f64> {
    check_shapes(p, t)?;
    let s: f64 = p.values.iter().zip(&t.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / p.values.len() as f64)
}

/// Normalized 11×11 Gaussian window, σ = 1.5.
pub fn ssim_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let total: f64 = g.iter().sum();
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            w[i][j] = g[i] * g[j] / (total * total);
        }
    }
    w
}

/// Mean local SSIM over every fully contained 11×11 window, dynamic
/// range 1.
pub fn ssim(p: &Raster, t: &Raster) -> Result<f64> {
    check_shapes(p, t)?;
    if p.width < SSIM_WINDOW || p.height < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {}×{}",
            p.height, p.width
        )));
    }
    let w = ssim_window();
    let (rows, cols) = (p.height - SSIM_WINDOW + 1, p.width - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for i0 in 0..rows {
        for j0 in 0..cols {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (di, wrow) in w.iter().enumerate() {
                for (dj, &wk) in wrow.iter().enumerate() {
                    let x = p.get(i0 + di, j0 + dj);
                    let y = t.get(i0 + di, j0 + dj);
                    mx += wk * x;
                    my += wk * y;
                    xx += wk * (x * x);
                    yy += wk * (y * y);
                    xy += wk * (x * y);
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cov = xy - mx * my;
            let num = (2.0 * (mx * my) + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
        }
    }
    Ok(total / (rows * cols) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub degenerate: bool,
}

/// Ranks of `values` (1-based) with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Two-sided exact p-value of `W = min(W+, W−)` given the (possibly tied)
/// ranks, from the distribution of `W+` over all sign assignments.
pub fn wilcoxon_exact_p(ranks: &[f64], statistic: f64) -> f64 {
    // Average ranks are multiples of 1/2, so doubled ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * statistic).round() as usize;
    let tail: f64 = counts[..=limit.min(total)].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * tail / all).min(1.0)
}

/// Paired two-sided Wilcoxon signed-rank test of `x − y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("unpaired samples: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::invalid("wilcoxon needs at least one pair"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("wilcoxon differences must be finite"));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult { statistic: 0.0, p_value: 1.0, n: 0, exact: true, degenerate: true });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v < 0.0).map(|(_, r)| r).sum();
    let statistic = w_plus.min(w_minus);
    if n <= WILCOXON_EXACT_MAX_N {
        return Ok(WilcoxonResult {
            statistic,
            p_value: wilcoxon_exact_p(&ranks, statistic),
            n,
            exact: true,
            degenerate: false,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((mean - statistic).abs() - 0.5).max(0.0) / var.sqrt();
        statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(WilcoxonResult { statistic, p_value, n, exact: false, degenerate: false })
}

/// Linear-interpolated quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median with interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self { median: quantile_sorted(&s, 0.5), q25: quantile_sorted(&s, 0.25), q75: quantile_sorted(&s, 0.75) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub seed: u64,
    pub electrodes: usize,
    /// Identifier of the evaluation set, used to reject unmatched
    /// comparisons.
    pub dataset_id: Option<String>,
    pub mse: Vec<f64>,
    pub ssim: Vec<f64>,
    pub mse_summary: Summary,
    pub ssim_summary: Summary,
    pub violations: usize,
    /// `None` when the anatomy has no vessels.
    pub min_vessel_distance: Option<f64>,
    pub max_sdf: f64,
    pub config: ObjectiveConfig,
}

/// Render every target and score it against its percept.
pub fn evaluate_layout(
    anatomy: &AnatomyModel,
    layout: &ElectrodeLayout,
    dataset: &[TargetImage],
    config: &ObjectiveConfig,
) -> Result<EvaluationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset".into()));
    }
    let positions = layout.positions()?;
    let maps = forward::map_electrodes(&positions, anatomy, config)?;
    let metrics: Vec<(f64, f64)> = dataset
        .par_iter()
        .map(|t| {
            let amps: Vec<f64> = maps.iter().map(|m| forward::sample_amplitude(t, m.mapping.s).0).collect();
            let p = forward::render_mapped(&maps, &amps, t.raster());
            Ok((mse(&p, t.raster())?, ssim(&p, t.raster())?))
        })
        .collect::<Result<_>>()?;
    let (mse_v, ssim_v): (Vec<f64>, Vec<f64>) = metrics.into_iter().unzip();
    let (violations, min_d) = constraints::violations_at(&positions, anatomy, config.tau);
    Ok(EvaluationReport {
        method: String::new(),
        seed: config.seed,
        electrodes: positions.len(),
        dataset_id: None,
        mse_summary: Summary::of(&mse_v),
        ssim_summary: Summary::of(&ssim_v),
        mse: mse_v,
        ssim: ssim_v,
        violations,
        min_vessel_distance: min_d.is_finite().then_some(min_d),
        max_sdf: positions.iter().map(|&p| anatomy.sdf(p).0).fold(f64::NEG_INFINITY, f64::max),
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    /// Per-image `100·(a − b)/b`, summarized.
    pub percent: Summary,
    /// Images skipped because the baseline value was 0 and `a` differed.
    pub excluded: usize,
    /// `100·(median(a) − median(b))/median(b)`.
    pub median_percent: f64,
    pub wilcoxon: WilcoxonResult,
    pub significant: bool,
}

/// Paired comparison of method `a` against baseline `b`. Negative ΔMSE
/// and positive ΔSSIM mean `a` is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub method: String,
    pub baseline: String,
    pub images: usize,
    pub mse: MetricComparison,
    pub ssim: MetricComparison,
}

fn percent_diff(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(0.0)
    } else if b == 0.0 {
        None
    } else {
        Some(100.0 * (a - b) / b)
    }
}

pub fn compare_metric(a: &[f64], b: &[f64]) -> Result<MetricComparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!("unmatched evaluation sets: {} vs {} images", a.len(), b.len())));
    }
    let pct: Vec<f64> = a.iter().zip(b).filter_map(|(&x, &y)| percent_diff(x, y)).collect();
    let wilcoxon = wilcoxon_signed_rank(a, b)?;
    let (ma, mb) = (Summary::of(a).median, Summary::of(b).median);
    Ok(MetricComparison {
        percent: Summary::of(&pct),
        excluded: a.len() - pct.len(),
        median_percent: percent_diff(ma, mb).unwrap_or(f64::NAN),
        significant: !wilcoxon.degenerate && wilcoxon.p_value <= SIGNIFICANCE_LEVEL,
        wilcoxon,
    })
}

pub fn compare_methods(a: &EvaluationReport, b: &EvaluationReport) -> Result<ComparisonResult> {
    if let (Some(x), Some(y)) = (&a.dataset_id, &b.dataset_id) {
        if x != y {
            return Err(Error::invalid(format!("reports were evaluated on different sets ({x} vs {y})")));
        }
    }
    if a.mse.len() != b.mse.len() || a.ssim.len() != b.ssim.len() {
        return Err(Error::invalid(format!("unmatched evaluation sets: {} vs {} images", a.mse.len(), b.mse.len())));
    }
    Ok(ComparisonResult {
        method: a.method.clone(),
        baseline: b.method.clone(),
        images: a.mse.len(),
        mse: compare_metric(&a.mse, &b.mse)?,
        ssim: compare_metric(&a.ssim, &b.ssim)?,
    })
}

fn cell(m: &MetricComparison) -> String {
    format!(
        "{:.1}{} [{:.1}, {:.1}]",
        m.percent.median,
        if m.significant { "*" } else { "" },
        m.percent.q25,
        m.percent.q75
    )
}

/// Aligned plain-text table with one row per `(dataset, comparison)`.
pub fn format_table(rows: &[(String, ComparisonResult)]) -> String {
    let header = ["Baseline", "Dataset", "ΔMSE (%)", "ΔSSIM (%)"].map(String::from);
    let body: Vec<[String; 4]> =
        rows.iter().map(|(ds, c)| [c.baseline.clone(), ds.clone(), cell(&c.mse), cell(&c.ssim)]).collect();
    let mut widths = header.clone().map(|h| h.chars().count());
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |r: &[String; 4]| {
        r.iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&widths.map(|w| "-".repeat(w)).join("  "));
    out.push('\n');
    for r in &body {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str("* p <= 0.01, two-sided Wilcoxon signed-rank test\n");
    out
}
