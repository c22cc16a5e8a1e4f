//! Proper scoring rules for count predictive distributions, bootstrap
//! confidence intervals for mean scores, and coverage assessment.
//!
//! logScore(g, y) = -log g(y); CRPS(G, y) = sum_k (G(k) - 1{k >= y})^2,
//! the exact integer-support form of the usual CRPS integral. Smaller is
//! better for both. CRPS is computed from the materialized pmf (never from
//! samples) except for empirical variants, which plug their empirical CDF
//! into the same sum.

use std::io::Write;

use rand::prelude::*;

use crate::error::Result;
use crate::gmrf::stream_rng;
use crate::prediction::CountDistribution;

/// Floor on predictive mass before taking logs; hits are flagged instead of
/// letting single impossible observations blow up fold means.
pub const LOG_CLAMP: f64 = 1e-300;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const DEFAULT_CI_LEVEL: f64 = 0.90;

/// -log g(y), clamped below at -log(1e-300); the flag reports a clamp.
pub fn log_score_flagged(dist: &CountDistribution, y: u64) -> (f64, bool) {
    let lp = dist.log_pmf(y);
    let floor = LOG_CLAMP.ln();
    if lp < floor || !lp.is_finite() {
        (-floor, true)
    } else {
        (-lp, false)
    }
}

pub fn log_score(dist: &CountDistribution, y: u64) -> f64 {
    log_score_flagged(dist, y).0
}

pub fn crps(dist: &CountDistribution, y: u64) -> f64 {
    crps_with_eps(dist, y, crate::prediction::PMF_TRUNC_EPS)
}

/// CRPS with an explicit pmf truncation threshold (the value is insensitive
/// to thresholds in the 1e-9..1e-12 range).
pub fn crps_with_eps(dist: &CountDistribution, y: u64, trunc_eps: f64) -> f64 {
    let table = dist.pmf_table_with_eps(trunc_eps);
    let end = table.support_end().max(y);
    let mut total = 0.0;
    for k in 0..=end {
        let g = table.cdf_at(k);
        let ind = if k >= y { 1.0 } else { 0.0 };
        total += (g - ind) * (g - ind);
    }
    total
}

/// Percentile bootstrap interval for the mean of `scores`: `b` resampled
/// means, interval between the (1-level)/2 and (1+level)/2 empirical
/// quantiles (linear interpolation).
pub fn bootstrap_ci(scores: &[f64], b: usize, level: f64, seed: u64) -> (f64, f64) {
    assert!(!scores.is_empty() && b >= 1 && level > 0.0 && level < 1.0);
    let n = scores.len();
    let mut means = Vec::with_capacity(b);
    let mut rng = stream_rng(seed, 0);
    for _ in 0..b {
        let mut s = 0.0;
        for _ in 0..n {
            s += scores[rng.gen_range(0..n)];
        }
        means.push(s / n as f64);
    }
    means.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let quant = |p: f64| -> f64 {
        let pos = p * (b as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        means[lo] * (1.0 - frac) + means[hi.min(b - 1)] * frac
    };
    (quant((1.0 - level) / 2.0), quant((1.0 + level) / 2.0))
}

/// Empirical coverage of central credibility intervals: for each level L,
/// the fraction of units whose observation lies in [q_{(1-L)/2}, q_{(1+L)/2}].
pub fn coverage(
    dists: &[CountDistribution],
    ys: &[u64],
    levels: &[f64],
) -> Result<Vec<(f64, f64)>> {
    assert_eq!(dists.len(), ys.len());
    let tables: Vec<_> = dists.iter().map(|d| d.pmf_table()).collect();
    Ok(levels
        .iter()
        .map(|&level| {
            let hits = tables
                .iter()
                .zip(ys)
                .filter(|(t, &y)| {
                    let lo = t.quantile((1.0 - level) / 2.0);
                    let hi = t.quantile((1.0 + level) / 2.0);
                    lo <= y && y <= hi
                })
                .count();
            (level, hits as f64 / dists.len().max(1) as f64)
        })
        .collect())
}

/// Mean, per-unit scores, per-fold means, and a bootstrap CI over the fold
/// means (the resampling unit is the fold).
#[derive(Debug, Clone)]
pub struct ScoreSummary {
    pub per_unit: Vec<f64>,
    pub fold_means: Vec<f64>,
    pub mean: f64,
    pub ci: (f64, f64),
}

impl ScoreSummary {
    pub fn from_folds(per_fold: &[Vec<f64>], b: usize, level: f64, seed: u64) -> ScoreSummary {
        let per_unit: Vec<f64> = per_fold.iter().flatten().copied().collect();
        let fold_means: Vec<f64> = per_fold
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
            .collect();
        let mean = per_unit.iter().sum::<f64>() / per_unit.len().max(1) as f64;
        let ci = bootstrap_ci(&fold_means, b, level, seed);
        ScoreSummary {
            per_unit,
            fold_means,
            mean,
            ci,
        }
    }
}

/// Scores and coverage for one prediction level (per-photo or aggregate).
#[derive(Debug, Clone)]
pub struct LevelScores {
    pub crps: ScoreSummary,
    pub log_score: ScoreSummary,
    pub coverage: Vec<(f64, f64)>,
    pub n_units: usize,
    pub n_clamped: usize,
}

/// Cross-validation score report for one model.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub photo: LevelScores,
    pub aggregate: LevelScores,
    pub n_folds: usize,
    /// Folds whose model fit failed; their units carry no scores.
    pub incomplete_folds: Vec<usize>,
}

impl ScoreReport {
    pub fn is_complete(&self) -> bool {
        self.incomplete_folds.is_empty()
    }
}

/// One table block: rows = models, columns = CRPS (CI) and logScore (CI).
pub fn write_level_table(
    title: &str,
    rows: &[(String, &LevelScores)],
    mut w: impl Write,
) -> Result<()> {
    writeln!(w, "== {title} ==")?;
    writeln!(w, "{:<10} {:>28} {:>28}", "model", "CRPS (90% CI)", "logScore (90% CI)")?;
    for (name, level) in rows {
        writeln!(
            w,
            "{:<10} {:>9.4} ({:.4}, {:.4}) {:>9.4} ({:.4}, {:.4})",
            name,
            level.crps.mean,
            level.crps.ci.0,
            level.crps.ci.1,
            level.log_score.mean,
            level.log_score.ci.0,
            level.log_score.ci.1,
        )?;
        if level.n_clamped > 0 {
            writeln!(w, "#   {name}: {} clamped log-scores", level.n_clamped)?;
        }
    }
    for (name, level) in rows {
        let cov: Vec<String> = level
            .coverage
            .iter()
            .map(|(l, c)| format!("{:.0}%->{:.3}", l * 100.0, c))
            .collect();
        writeln!(w, "# coverage {name}: {}", cov.join(" "))?;
    }
    writeln!(w)?;
    Ok(())
}
