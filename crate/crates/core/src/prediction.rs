//! Prediction grids, intensity integration, and posterior predictive count
//! distributions with their summaries.
//!
//! A predictive law for a count is one of: an equal-weight Poisson mixture
//! (one component per posterior draw), a negative binomial (closed-form
//! conjugate case), an equal-weight negative-binomial mixture, an empirical
//! distribution of sampled totals, a point mass, or a raw pmf table read
//! from a file. All variants materialize to a truncated pmf (mass beyond the
//! 1 - 1e-9 quantile folded into the last bin) for quantiles and scoring.

use std::io::Write;

use rand::prelude::*;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::gmrf::stream_rng;
use crate::mesh::Projector;
use crate::survey::Region;

/// Default pmf truncation: support is cut at the 1 - 1e-9 quantile.
pub const PMF_TRUNC_EPS: f64 = 1e-9;

/// Regular lattice of prediction cells over the region bounding box; only
/// cells whose centers fall inside the region are kept.
#[derive(Debug, Clone)]
pub struct PredictionGrid {
    pub centers: Vec<Point>,
    pub cell_w: f64,
    pub cell_h: f64,
}

impl PredictionGrid {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_w * self.cell_h
    }

    pub fn cell(&self, j: usize) -> Rect {
        Rect::from_center(self.centers[j], self.cell_w, self.cell_h)
    }

    pub fn areas(&self) -> Vec<f64> {
        vec![self.cell_area(); self.centers.len()]
    }
}

/// Build the prediction grid over a region.
pub fn build_grid(region: &Region, cell_w: f64, cell_h: f64) -> Result<PredictionGrid> {
    if !(cell_w > 0.0) || !(cell_h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cell dimensions must be positive, got {cell_w} x {cell_h}"
        )));
    }
    let bbox = region.bounding_box();
    let nx = (bbox.width() / cell_w).ceil() as usize;
    let ny = (bbox.height() / cell_h).ceil() as usize;
    let mut centers = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let c = Point::new(
                bbox.xmin + (i as f64 + 0.5) * cell_w,
                bbox.ymin + (j as f64 + 0.5) * cell_h,
            );
            if region.contains(c) {
                centers.push(c);
            }
        }
    }
    if centers.is_empty() {
        return Err(Error::Degenerate(
            "prediction grid selected zero cells".into(),
        ));
    }
    Ok(PredictionGrid {
        centers,
        cell_w,
        cell_h,
    })
}

/// Linear predictor at query points: eta_j = (P field)_j + x_j . gamma.
/// `fixed_rows`, when given, holds one covariate row per query point.
pub fn eta_values(
    field: &[f64],
    projector: &Projector,
    fixed_rows: Option<&[Vec<f64>]>,
    gamma: &[f64],
) -> Vec<f64> {
    (0..projector.len())
        .map(|j| {
            let mut eta = projector.interpolate(j, field);
            if let Some(rows) = fixed_rows {
                eta += rows[j].iter().zip(gamma).map(|(x, g)| x * g).sum::<f64>();
            }
            eta
        })
        .collect()
}

/// Riemann midpoint rule: mu = sum_j exp(eta_j) |B_j|.
pub fn integrate_intensity(eta: &[f64], areas: &[f64]) -> f64 {
    eta.iter()
        .zip(areas)
        .map(|(e, a)| e.exp() * a)
        .sum()
}

/// Predictive law for a nonnegative count.
#[derive(Debug, Clone)]
pub enum CountDistribution {
    /// Equal-weight mixture of Poissons, one mean per posterior draw.
    PoissonMixture { mus: Vec<f64> },
    /// NegBin(mu, tau): p(y) proportional to Gamma(y+tau)/y! (mu/(mu+tau))^y.
    NegBin { mu: f64, tau: f64 },
    /// Equal-weight mixture of negative binomials with a common shape.
    NegBinMixture { mus: Vec<f64>, tau: f64 },
    /// Empirical distribution of sampled counts.
    Empirical { samples: Vec<u64> },
    PointMass { value: u64 },
    /// Raw pmf over 0..probs.len() (e.g. read back from a dump).
    Table { probs: Vec<f64> },
}

/// Materialized pmf over 0..=last with CDF; tail mass folded into the last
/// bin so the CDF ends at exactly 1.
#[derive(Debug, Clone)]
pub struct PmfTable {
    pub probs: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl PmfTable {
    fn from_probs(mut probs: Vec<f64>, trunc_eps: f64) -> PmfTable {
        // locate the 1 - eps quantile and fold the remainder into it
        let mut cum = 0.0;
        let mut cut = probs.len().saturating_sub(1);
        for (k, p) in probs.iter().enumerate() {
            cum += p;
            if cum >= 1.0 - trunc_eps {
                cut = k;
                break;
            }
        }
        probs.truncate(cut + 1);
        let total: f64 = probs.iter().sum();
        let last = probs.len() - 1;
        if total <= 1.0 {
            probs[last] += 1.0 - total;
        } else {
            for p in &mut probs {
                *p /= total;
            }
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut c = 0.0;
        for &p in &probs {
            c += p;
            cdf.push(c.min(1.0));
        }
        *cdf.last_mut().unwrap() = 1.0;
        PmfTable { probs, cdf }
    }

    pub fn support_end(&self) -> u64 {
        (self.probs.len() - 1) as u64
    }

    pub fn cdf_at(&self, k: u64) -> f64 {
        if (k as usize) < self.cdf.len() {
            self.cdf[k as usize]
        } else {
            1.0
        }
    }

    /// Smallest k with CDF(k) >= p.
    pub fn quantile(&self, p: f64) -> u64 {
        let pos = self.cdf.partition_point(|&c| c < p);
        pos.min(self.cdf.len() - 1) as u64
    }

    /// Argmax of the pmf, smallest index on ties.
    pub fn mode(&self) -> u64 {
        let mut best = 0usize;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best as u64
    }
}

/// Location/scale summary mirroring a predictive-distribution table row.
#[derive(Debug, Clone, Copy)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: u64,
    pub mode: u64,
    pub iqr: u64,
    pub q025: u64,
    pub q975: u64,
}

impl SummaryStats {
    pub fn write_line(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "# summary mean={} median={} mode={} iqr={} q025={} q975={}",
            self.mean, self.median, self.mode, self.iqr, self.q025, self.q975
        )?;
        Ok(())
    }
}

fn log_poisson_pmf(mu: f64, y: u64) -> f64 {
    if mu == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if y == 0 {
        return -mu; // keep -log p(0) exact (ln_gamma(1) is only ~0)
    }
    let yf = y as f64;
    yf * mu.ln() - mu - ln_gamma(yf + 1.0)
}

fn log_negbin_pmf(mu: f64, tau: f64, y: u64) -> f64 {
    if mu == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let yf = y as f64;
    // tau ln(tau/(tau+mu)) written as -tau ln1p(mu/tau) for huge tau
    ln_gamma(yf + tau) - ln_gamma(tau) - ln_gamma(yf + 1.0) - tau * (mu / tau).ln_1p()
        + yf * (mu.ln() - (tau + mu).ln())
}

fn log_mean_exp(terms: impl Iterator<Item = f64>, n: usize) -> f64 {
    let vals: Vec<f64> = terms.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + (s / n as f64).ln()
}

/// Accumulate `weight * pmf(k)` of a Poisson or NegBin component into `acc`,
/// visiting only the numerically relevant part of the support.
fn accumulate_component(acc: &mut Vec<f64>, weight: f64, mu: f64, tau: Option<f64>) {
    if mu == 0.0 {
        if acc.is_empty() {
            acc.push(0.0);
        }
        acc[0] += weight;
        return;
    }
    let sd = match tau {
        Some(t) => (mu * (1.0 + mu / t)).sqrt(),
        None => mu.sqrt(),
    };
    let lo = ((mu - 12.0 * sd - 40.0).floor().max(0.0)) as u64;
    let hi = ((mu + 12.0 * sd + 40.0).ceil()) as u64;
    if acc.len() <= hi as usize {
        acc.resize(hi as usize + 1, 0.0);
    }
    let anchor = (mu.floor() as u64).clamp(lo, hi);
    let log_p_anchor = match tau {
        Some(t) => log_negbin_pmf(mu, t, anchor),
        None => log_poisson_pmf(mu, anchor),
    };
    let p_anchor = log_p_anchor.exp();
    // recurrence ratios: Poisson p(k+1)/p(k) = mu/(k+1);
    // NegBin p(k+1)/p(k) = (k+tau)/(k+1) * mu/(mu+tau)
    let ratio_up = |k: u64| match tau {
        Some(t) => (k as f64 + t) / (k as f64 + 1.0) * (mu / (mu + t)),
        None => mu / (k as f64 + 1.0),
    };
    let mut p = p_anchor;
    acc[anchor as usize] += weight * p;
    for k in anchor..hi {
        p *= ratio_up(k);
        acc[(k + 1) as usize] += weight * p;
    }
    let mut p = p_anchor;
    for k in (lo..anchor).rev() {
        p /= ratio_up(k);
        acc[k as usize] += weight * p;
    }
}

impl CountDistribution {
    /// Exact mean from the parameterization (no truncation involved).
    pub fn mean(&self) -> f64 {
        match self {
            CountDistribution::PoissonMixture { mus } => {
                mus.iter().sum::<f64>() / mus.len() as f64
            }
            CountDistribution::NegBin { mu, .. } => *mu,
            CountDistribution::NegBinMixture { mus, .. } => {
                mus.iter().sum::<f64>() / mus.len() as f64
            }
            CountDistribution::Empirical { samples } => {
                samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64
            }
            CountDistribution::PointMass { value } => *value as f64,
            CountDistribution::Table { probs } => probs
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum(),
        }
    }

    /// Exact log pmf at y (log-mean-exp over mixture components).
    pub fn log_pmf(&self, y: u64) -> f64 {
        match self {
            CountDistribution::PoissonMixture { mus } => {
                log_mean_exp(mus.iter().map(|&m| log_poisson_pmf(m, y)), mus.len())
            }
            CountDistribution::NegBin { mu, tau } => log_negbin_pmf(*mu, *tau, y),
            CountDistribution::NegBinMixture { mus, tau } => {
                log_mean_exp(mus.iter().map(|&m| log_negbin_pmf(m, *tau, y)), mus.len())
            }
            CountDistribution::Empirical { samples } => {
                let count = samples.iter().filter(|&&s| s == y).count();
                if count == 0 {
                    f64::NEG_INFINITY
                } else {
                    (count as f64 / samples.len() as f64).ln()
                }
            }
            CountDistribution::PointMass { value } => {
                if *value == y {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            CountDistribution::Table { probs } => {
                let p = probs.get(y as usize).copied().unwrap_or(0.0);
                p.ln()
            }
        }
    }

    pub fn pmf_table(&self) -> PmfTable {
        self.pmf_table_with_eps(PMF_TRUNC_EPS)
    }

    pub fn pmf_table_with_eps(&self, trunc_eps: f64) -> PmfTable {
        let probs = match self {
            CountDistribution::PoissonMixture { mus } => {
                let w = 1.0 / mus.len() as f64;
                let mut acc = Vec::new();
                for &mu in mus {
                    accumulate_component(&mut acc, w, mu, None);
                }
                acc
            }
            CountDistribution::NegBin { mu, tau } => {
                let mut acc = Vec::new();
                accumulate_component(&mut acc, 1.0, *mu, Some(*tau));
                acc
            }
            CountDistribution::NegBinMixture { mus, tau } => {
                let w = 1.0 / mus.len() as f64;
                let mut acc = Vec::new();
                for &mu in mus {
                    accumulate_component(&mut acc, w, mu, Some(*tau));
                }
                acc
            }
            CountDistribution::Empirical { samples } => {
                let max = samples.iter().max().copied().unwrap_or(0);
                let mut acc = vec![0.0; max as usize + 1];
                let w = 1.0 / samples.len() as f64;
                for &s in samples {
                    acc[s as usize] += w;
                }
                acc
            }
            CountDistribution::PointMass { value } => {
                let mut acc = vec![0.0; *value as usize + 1];
                acc[*value as usize] = 1.0;
                acc
            }
            CountDistribution::Table { probs } => probs.clone(),
        };
        PmfTable::from_probs(probs, trunc_eps)
    }

    /// Mean, median, mode, inter-quartile range, and outer 95% quantiles.
    pub fn summarize(&self) -> SummaryStats {
        let table = self.pmf_table();
        let q25 = table.quantile(0.25);
        let q75 = table.quantile(0.75);
        SummaryStats {
            mean: self.mean(),
            median: table.quantile(0.5),
            mode: table.mode(),
            iqr: q75 - q25,
            q025: table.quantile(0.025),
            q975: table.quantile(0.975),
        }
    }

    /// Central credibility interval [q_{(1-level)/2}, q_{(1+level)/2}].
    pub fn central_interval(&self, level: f64) -> (u64, u64) {
        let table = self.pmf_table();
        (
            table.quantile((1.0 - level) / 2.0),
            table.quantile((1.0 + level) / 2.0),
        )
    }

    /// Two-column `count probability` dump up to the truncation point,
    /// followed by the summary line.
    pub fn write_pmf(&self, mut w: impl Write) -> Result<()> {
        let table = self.pmf_table();
        writeln!(w, "# count probability")?;
        for (k, p) in table.probs.iter().enumerate() {
            writeln!(w, "{k} {p}")?;
        }
        self.summarize().write_line(&mut w)?;
        Ok(())
    }
}

/// Equal-weight Poisson mixture from posterior draws of the mean.
pub fn predictive_mixture(mu_samples: Vec<f64>) -> Result<CountDistribution> {
    if mu_samples.is_empty() {
        return Err(Error::InvalidInput("empty mean sample list".into()));
    }
    if let Some(bad) = mu_samples.iter().find(|m| !m.is_finite() || **m < 0.0) {
        return Err(Error::Diverged(format!(
            "invalid Poisson mixture mean {bad}"
        )));
    }
    Ok(CountDistribution::PoissonMixture { mus: mu_samples })
}

/// Sample NegBin(mu, tau) via its gamma-Poisson mixture representation.
pub fn sample_negbin(rng: &mut impl Rng, mu: f64, tau: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let lambda = Gamma::new(tau, mu / tau)
        .expect("valid gamma parameters")
        .sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive mean").sample(rng) as u64
}

/// Empirical predictive for a sum of conditionally independent NegBin cells:
/// for each draw k, the provided per-cell means are sampled independently
/// with common shape `tau` and summed.
pub fn predictive_negbin_sum<F>(
    n_draws: usize,
    mu_of_draw: F,
    tau: f64,
    seed: u64,
) -> Result<CountDistribution>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive: {tau}")));
    }
    let mut samples: Vec<u64> = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let mus = mu_of_draw(k);
            mus.iter().map(|&mu| sample_negbin(&mut rng, mu, tau)).sum()
        })
        .collect();
    samples.sort_unstable();
    Ok(CountDistribution::Empirical { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{build_region, Survey};

    fn toy_region(width: f64, height: f64, cell: f64) -> Region {
        // single transect whose band is width x height
        use crate::survey::Photo;
        use std::collections::BTreeMap;
        let n = (width / cell).round() as usize;
        let photos: Vec<Photo> = (0..n)
            .map(|i| Photo {
                id: format!("p{i}"),
                transect_id: "T".into(),
                center: Point::new((i as f64 + 0.5) * cell, 0.0),
                width: cell,
                height: 1e-6,
                counts: BTreeMap::from([("s".to_string(), 0)]),
            })
            .collect();
        build_region(&Survey::new(photos).unwrap(), height / 2.0).unwrap()
    }

    #[test]
    fn grid_exact_tiling() {
        let region = toy_region(10.0, 10.0, 1.0);
        let grid = build_grid(&region, 1.0, 1.0).unwrap();
        assert_eq!(grid.len(), 100);
        assert!((grid.cell_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_zero_cells_is_error() {
        let region = toy_region(10.0, 1e-5, 1.0);
        // cells are much taller than the band: no center falls inside
        assert!(build_grid(&region, 1.0, 1.0).is_err());
    }

    #[test]
    fn integrate_constant_fields() {
        let eta = vec![0.0; 4];
        let areas = vec![2.0; 4];
        assert!((integrate_intensity(&eta, &areas) - 8.0).abs() < 1e-12);
        let eta = vec![3f64.ln(); 4];
        assert!((integrate_intensity(&eta, &areas) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_rule_error_bound_for_exponential() {
        // eta(s) = s1 on a [0,1] strip: integral of e^{s1} = e - 1
        for cells in [10usize, 40] {
            let w = 1.0 / cells as f64;
            let eta: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) * w).collect();
            let areas = vec![w; cells];
            let got = integrate_intensity(&eta, &areas);
            let exact = std::f64::consts::E - 1.0;
            // midpoint rule error <= w^2/24 * integral of |f''| = w^2/24 (e-1)
            assert!(
                (got - exact).abs() <= w * w / 24.0 * exact + 1e-15,
                "cells={cells}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn single_component_mixture_is_poisson() {
        let d = predictive_mixture(vec![2.0]).unwrap();
        assert!((d.log_pmf(0).exp() - (-2.0f64).exp()).abs() < 1e-15);
        assert!((d.mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_component_mixture_p0() {
        let d = predictive_mixture(vec![1.0, 3.0]).unwrap();
        assert!((d.log_pmf(0).exp() - 0.20883325476965314).abs() < 1e-14);
        assert!((d.mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equal_means_mixture_matches_single_poisson() {
        let d = predictive_mixture(vec![2.7; 50]).unwrap();
        let single = CountDistribution::PoissonMixture { mus: vec![2.7] };
        let ta = d.pmf_table();
        let tb = single.pmf_table();
        assert_eq!(ta.probs.len(), tb.probs.len());
        for (a, b) in ta.probs.iter().zip(&tb.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_summary_oracle() {
        // 1/2 Po(1) + 1/2 Po(3): mean 2, median 2, q25 1, q75 3
        let d = predictive_mixture(vec![1.0, 3.0]).unwrap();
        let s = d.summarize();
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert_eq!(s.median, 2);
        assert_eq!(s.iqr, 2);
        let t = d.pmf_table();
        assert_eq!(t.quantile(0.25), 1);
        assert_eq!(t.quantile(0.75), 3);
    }

    #[test]
    fn point_mass_summary() {
        let d = CountDistribution::PointMass { value: 7 };
        let s = d.summarize();
        assert_eq!(s.median, 7);
        assert_eq!(s.mode, 7);
        assert_eq!(s.iqr, 0);
        assert_eq!(s.q025, 7);
        assert_eq!(s.q975, 7);
        assert!((s.mean - 7.0).abs() < 1e-15);
    }

    #[test]
    fn negbin_mean_and_p0() {
        let d = CountDistribution::NegBin { mu: 15.0, tau: 18.0 };
        assert_eq!(d.mean(), 15.0);
        assert!((d.log_pmf(0).exp() - 1.826645090961347e-05).abs() < 1e-17);
        let s = d.summarize();
        assert!((s.mean - 15.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_table_sums_to_one_and_cdf_monotone() {
        for d in [
            predictive_mixture(vec![1.0, 3.0, 12.0]).unwrap(),
            CountDistribution::NegBin { mu: 15.0, tau: 18.0 },
            CountDistribution::Empirical {
                samples: vec![0, 1, 1, 4, 9],
            },
            CountDistribution::Table {
                probs: vec![0.25, 0.5, 0.25],
            },
        ] {
            let t = d.pmf_table();
            let total: f64 = t.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            for w in t.cdf.windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
            assert_eq!(*t.cdf.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn quantile_is_nondecreasing_and_consistent() {
        let d = predictive_mixture(vec![0.5, 2.0, 7.0]).unwrap();
        let t = d.pmf_table();
        let mut prev = 0;
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let q = t.quantile(p.max(1e-12));
            assert!(q >= prev);
            assert!(t.cdf_at(q) >= p.max(1e-12) - 1e-12);
            prev = q;
        }
    }

    #[test]
    fn negbin_shape_cap_approaches_poisson() {
        let nb = CountDistribution::NegBin { mu: 3.0, tau: 1e8 };
        let po = CountDistribution::PoissonMixture { mus: vec![3.0] };
        for y in 0..20u64 {
            assert!((nb.log_pmf(y) - po.log_pmf(y)).abs() < 1e-4, "y={y}");
        }
    }

    #[test]
    fn negbin_sum_poisson_limit_ks() {
        // one cell, tau at the cap: totals are Poisson(mu)
        let mu = 4.0;
        let d = predictive_negbin_sum(100_000, |_| vec![mu], 1e8, 31).unwrap();
        let t = d.pmf_table();
        let po = CountDistribution::PoissonMixture { mus: vec![mu] }.pmf_table();
        let mut ks = 0.0f64;
        for k in 0..=po.support_end() {
            ks = ks.max((t.cdf_at(k) - po.cdf_at(k)).abs());
        }
        assert!(ks <= 0.01, "KS distance {ks}");
    }

    #[test]
    fn negbin_sum_zero_intensity() {
        let d = predictive_negbin_sum(100, |_| vec![0.0, 0.0], 5.0, 1).unwrap();
        match &d {
            CountDistribution::Empirical { samples } => {
                assert!(samples.iter().all(|&s| s == 0));
            }
            _ => panic!("expected empirical"),
        }
    }

    #[test]
    fn negbin_sum_deterministic() {
        let f = |_: usize| vec![1.5, 0.7];
        let a = predictive_negbin_sum(500, f, 2.0, 9).unwrap();
        let b = predictive_negbin_sum(500, f, 2.0, 9).unwrap();
        match (&a, &b) {
            (
                CountDistribution::Empirical { samples: sa },
                CountDistribution::Empirical { samples: sb },
            ) => assert_eq!(sa, sb),
            _ => panic!(),
        }
    }

    #[test]
    fn pmf_dump_roundtrip() {
        let d = predictive_mixture(vec![1.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        d.write_pmf(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let probs: Vec<f64> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
            .collect();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(text.contains("# summary mean=2"));
    }
}
