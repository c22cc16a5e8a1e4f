//! Cross-validation designs and the prediction plumbing that connects the
//! four count models to the scoring rules.
//!
//! Two subsetting procedures: random k-fold over photos (each photo removed
//! exactly once) and leave-one-transect-out. Every fold refits the chosen
//! model on the retained photos only - the LGCP mesh is rebuilt per fold -
//! and issues a predictive distribution per removed photo plus one for the
//! fold's aggregate count.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::baselines::{fit_hom_pois, predictive_hom_pois};
use crate::error::{Error, Result};
use crate::gam::{fit_gam_survey, GamConfig, GamFamily};
use crate::geom::Point;
use crate::gmrf::{derive_seed, stream_rng};
use crate::lgcp::{fit_lgcp, LgcpConfig, PointEvaluator};
use crate::prediction::{predictive_mixture, predictive_negbin_sum, CountDistribution};
use crate::scoring::{
    coverage, crps, log_score_flagged, LevelScores, ScoreReport, ScoreSummary,
};
use crate::survey::{CovariateRaster, Survey};

/// Fold design kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FoldKind {
    RandomKFold,
    LeaveTransectOut,
}

/// A partition of the photo set into folds.
#[derive(Debug, Clone)]
pub struct FoldSpec {
    pub kind: FoldKind,
    /// Photo indices per fold; disjoint, union = all photos.
    pub folds: Vec<Vec<usize>>,
}

/// Random partition into k near-equal folds (sizes differ by at most 1).
pub fn folds_random(survey: &Survey, k: usize, seed: u64) -> Result<FoldSpec> {
    let n = survey.photos().len();
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "fold count {k} must be in 2..=#photos ({n})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0);
    idx.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSpec {
        kind: FoldKind::RandomKFold,
        folds,
    })
}

/// One fold per transect.
pub fn folds_transect(survey: &Survey) -> Result<FoldSpec> {
    if survey.transects().len() < 2 {
        return Err(Error::InvalidInput(
            "leave-transect-out needs at least 2 transects".into(),
        ));
    }
    Ok(FoldSpec {
        kind: FoldKind::LeaveTransectOut,
        folds: survey
            .transects()
            .iter()
            .map(|t| t.photo_indices.clone())
            .collect(),
    })
}

/// Model selector for cross-validation and fitting commands.
#[derive(Clone)]
pub enum ModelSpec {
    Lgcp(LgcpConfig),
    GamPoisson(GamConfig),
    GamNegBin(GamConfig),
    HomPoisson { a0: f64, b0: f64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Lgcp(_) => "lgcp",
            ModelSpec::GamPoisson(_) => "gam-po",
            ModelSpec::GamNegBin(_) => "gam-nb",
            ModelSpec::HomPoisson { .. } => "hom-po",
        }
    }
}

/// Cross-validation runtime knobs.
#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Posterior draws per fold (smaller than final-fit draws to keep a
    /// transect sweep at desk scale).
    pub draws_per_fold: usize,
    pub coverage_levels: Vec<f64>,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            draws_per_fold: 2000,
            coverage_levels: vec![0.5, 0.9],
            bootstrap_resamples: crate::scoring::DEFAULT_BOOTSTRAP_RESAMPLES,
            ci_level: crate::scoring::DEFAULT_CI_LEVEL,
        }
    }
}

/// Predictions for one fold: one distribution per removed photo and one for
/// the aggregate of the removed set. Fits never see the held-out counts.
pub struct FoldPrediction {
    pub photo_dists: Vec<CountDistribution>,
    pub aggregate: CountDistribution,
}

/// Refit `model` on the retained photos and predict the removed ones.
pub fn fold_predictions(
    survey: &Survey,
    raster: Option<&CovariateRaster>,
    species: &str,
    model: &ModelSpec,
    removed: &[usize],
    draws: usize,
    seed: u64,
) -> Result<FoldPrediction> {
    let removed_set: std::collections::HashSet<usize> = removed.iter().copied().collect();
    let retained = survey.subset(|i| !removed_set.contains(&i))?;
    if retained.photos().is_empty() {
        return Err(Error::InvalidInput("fold removes every photo".into()));
    }
    let rm_points: Vec<Point> = removed
        .iter()
        .map(|&i| survey.photos()[i].center)
        .collect();
    let rm_areas: Vec<f64> = removed.iter().map(|&i| survey.photos()[i].area()).collect();

    match model {
        ModelSpec::HomPoisson { a0, b0 } => {
            let post = fit_hom_pois(&retained, species, *a0, *b0)?;
            let photo_dists = rm_areas
                .iter()
                .map(|&a| predictive_hom_pois(&post, a))
                .collect::<Result<Vec<_>>>()?;
            let aggregate = predictive_hom_pois(&post, rm_areas.iter().sum())?;
            Ok(FoldPrediction {
                photo_dists,
                aggregate,
            })
        }
        ModelSpec::Lgcp(config) => {
            let fit = fit_lgcp(&retained, raster, species, config)?;
            let eval = PointEvaluator::new(&fit, &rm_points, rm_areas.clone(), raster)?;
            let mu_rows = fit.map_samples(draws, seed, |_, z| eval.point_means(z));
            mixture_from_rows(&mu_rows, removed.len())
        }
        ModelSpec::GamPoisson(config) => {
            let gam = fit_gam_survey(&retained, raster, species, GamFamily::Poisson, config)?;
            let mu_rows = gam.mu_draws(&rm_points, &rm_areas, raster, draws, seed)?;
            mixture_from_rows(&mu_rows, removed.len())
        }
        ModelSpec::GamNegBin(config) => {
            let gam = fit_gam_survey(&retained, raster, species, GamFamily::NegBin, config)?;
            let tau = gam.tau.expect("negbin fit carries a shape");
            let mu_rows = gam.mu_draws(&rm_points, &rm_areas, raster, draws, seed)?;
            let photo_dists = (0..removed.len())
                .map(|j| CountDistribution::NegBinMixture {
                    mus: mu_rows.iter().map(|r| r[j]).collect(),
                    tau,
                })
                .collect();
            // negbin-sum sampling over the removed cells
            let aggregate = predictive_negbin_sum(
                draws,
                |k| mu_rows[k].clone(),
                tau,
                derive_seed(seed, 0xA66),
            )?;
            Ok(FoldPrediction {
                photo_dists,
                aggregate,
            })
        }
    }
}

/// Per-photo Poisson mixtures plus the aggregate mixture over row sums,
/// holding the parameter draws fixed across both.
fn mixture_from_rows(mu_rows: &[Vec<f64>], n_photos: usize) -> Result<FoldPrediction> {
    let photo_dists = (0..n_photos)
        .map(|j| predictive_mixture(mu_rows.iter().map(|r| r[j]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = predictive_mixture(mu_rows.iter().map(|r| r.iter().sum()).collect())?;
    Ok(FoldPrediction {
        photo_dists,
        aggregate,
    })
}

/// Run a full cross-validation: refit per fold, score per removed photo and
/// per aggregate, and assemble the report with bootstrap CIs and coverage.
pub fn run_cv(
    survey: &Survey,
    raster: Option<&CovariateRaster>,
    species: &str,
    model: &ModelSpec,
    folds: &FoldSpec,
    seed: u64,
    config: &CvConfig,
) -> Result<ScoreReport> {
    struct FoldOutcome {
        photo_scores: (Vec<f64>, Vec<f64>, usize),
        photo_units: Vec<(CountDistribution, u64)>,
        agg_unit: (CountDistribution, u64, f64, f64, bool),
    }

    let outcomes: Vec<Result<FoldOutcome>> = folds
        .folds
        .par_iter()
        .enumerate()
        .map(|(fi, removed)| {
            let fold_seed = derive_seed(seed, fi as u64);
            let pred = fold_predictions(
                survey,
                raster,
                species,
                model,
                removed,
                config.draws_per_fold,
                fold_seed,
            )?;
            let ys: Vec<u64> = removed
                .iter()
                .map(|&i| survey.photos()[i].count(species))
                .collect::<Result<_>>()?;
            let mut crps_scores = Vec::with_capacity(ys.len());
            let mut ls_scores = Vec::with_capacity(ys.len());
            let mut clamped = 0usize;
            for (d, &y) in pred.photo_dists.iter().zip(&ys) {
                crps_scores.push(crps(d, y));
                let (s, c) = log_score_flagged(d, y);
                ls_scores.push(s);
                clamped += c as usize;
            }
            let agg_y: u64 = ys.iter().sum();
            let agg_crps = crps(&pred.aggregate, agg_y);
            let (agg_ls, agg_clamped) = log_score_flagged(&pred.aggregate, agg_y);
            Ok(FoldOutcome {
                photo_scores: (crps_scores, ls_scores, clamped),
                photo_units: pred.photo_dists.into_iter().zip(ys).collect(),
                agg_unit: (pred.aggregate, agg_y, agg_crps, agg_ls, agg_clamped),
            })
        })
        .collect();

    let mut incomplete = Vec::new();
    let mut photo_crps_folds = Vec::new();
    let mut photo_ls_folds = Vec::new();
    let mut photo_clamped = 0;
    let mut photo_dists = Vec::new();
    let mut photo_ys = Vec::new();
    let mut agg_crps_folds = Vec::new();
    let mut agg_ls_folds = Vec::new();
    let mut agg_clamped = 0;
    let mut agg_dists = Vec::new();
    let mut agg_ys = Vec::new();
    for (fi, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Err(_) => incomplete.push(fi),
            Ok(o) => {
                photo_crps_folds.push(o.photo_scores.0);
                photo_ls_folds.push(o.photo_scores.1);
                photo_clamped += o.photo_scores.2;
                for (d, y) in o.photo_units {
                    photo_dists.push(d);
                    photo_ys.push(y);
                }
                let (d, y, c, l, cl) = o.agg_unit;
                agg_crps_folds.push(vec![c]);
                agg_ls_folds.push(vec![l]);
                agg_clamped += cl as usize;
                agg_dists.push(d);
                agg_ys.push(y);
            }
        }
    }
    if photo_dists.is_empty() {
        return Err(Error::Diverged("every fold failed to fit".into()));
    }

    let b = config.bootstrap_resamples;
    let lvl = config.ci_level;
    let photo = LevelScores {
        crps: ScoreSummary::from_folds(&photo_crps_folds, b, lvl, derive_seed(seed, 1001)),
        log_score: ScoreSummary::from_folds(&photo_ls_folds, b, lvl, derive_seed(seed, 1002)),
        coverage: coverage(&photo_dists, &photo_ys, &config.coverage_levels)?,
        n_units: photo_ys.len(),
        n_clamped: photo_clamped,
    };
    let aggregate = LevelScores {
        crps: ScoreSummary::from_folds(&agg_crps_folds, b, lvl, derive_seed(seed, 1003)),
        log_score: ScoreSummary::from_folds(&agg_ls_folds, b, lvl, derive_seed(seed, 1004)),
        coverage: coverage(&agg_dists, &agg_ys, &config.coverage_levels)?,
        n_units: agg_ys.len(),
        n_clamped: agg_clamped,
    };
    Ok(ScoreReport {
        photo,
        aggregate,
        n_folds: folds.folds.len(),
        incomplete_folds: incomplete,
    })
}

/// Write the report blocks for a set of models under one scheme: a photo-
/// level table and an aggregate-level table, mirroring the validation-table
/// layout (rows = models, columns = CRPS and logScore with CIs).
pub fn write_cv_report(
    scheme: &str,
    results: &[(String, ScoreReport)],
    mut w: impl Write,
) -> Result<()> {
    let photo_rows: Vec<(String, &LevelScores)> = results
        .iter()
        .map(|(n, r)| (n.clone(), &r.photo))
        .collect();
    crate::scoring::write_level_table(&format!("scheme={scheme} level=photo"), &photo_rows, &mut w)?;
    let agg_rows: Vec<(String, &LevelScores)> = results
        .iter()
        .map(|(n, r)| (n.clone(), &r.aggregate))
        .collect();
    crate::scoring::write_level_table(
        &format!("scheme={scheme} level=aggregate"),
        &agg_rows,
        &mut w,
    )?;
    for (name, r) in results {
        writeln!(w, "# {name}: folds={} incomplete={:?}", r.n_folds, r.incomplete_folds)?;
    }
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::Hyper;
    use crate::lgcp::{FixedEffects, GridSpec};
    use crate::survey::Photo;
    use rand_distr::Distribution;
    use std::collections::BTreeMap;

    fn homogeneous_survey(n_transects: usize, per: usize, lambda: f64, seed: u64) -> Survey {
        let mut rng = stream_rng(seed, 0);
        let (w, h) = (1.0, 0.8);
        let mut photos = Vec::new();
        for t in 0..n_transects {
            for i in 0..per {
                let mean = lambda * w * h;
                let c = rand_distr::Poisson::new(mean).unwrap().sample(&mut rng) as u64;
                photos.push(Photo {
                    id: format!("t{t}p{i}"),
                    transect_id: format!("T{t}"),
                    center: Point::new((i as f64 + 0.5) * w, t as f64 * 4.0),
                    width: w,
                    height: h,
                    counts: BTreeMap::from([("s".to_string(), c)]),
                });
            }
        }
        Survey::new(photos).unwrap()
    }

    #[test]
    fn random_folds_partition() {
        let s = homogeneous_survey(2, 10, 1.0, 1);
        let spec = folds_random(&s, 10, 7).unwrap();
        assert_eq!(spec.folds.len(), 10);
        for f in &spec.folds {
            assert_eq!(f.len(), 2);
        }
        let mut all: Vec<usize> = spec.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());

        // non-divisible case: sizes differ by at most one
        let spec = folds_random(&s, 7, 3).unwrap();
        let sizes: Vec<usize> = spec.folds.iter().map(|f| f.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn transect_folds_match_membership() {
        let s = homogeneous_survey(3, 4, 1.0, 2);
        let spec = folds_transect(&s).unwrap();
        assert_eq!(spec.folds.len(), 3);
        for (t, fold) in s.transects().iter().zip(&spec.folds) {
            assert_eq!(&t.photo_indices, fold);
        }
        // 27 transects -> 27 folds
        let s27 = homogeneous_survey(27, 2, 1.0, 3);
        assert_eq!(folds_transect(&s27).unwrap().folds.len(), 27);
        // each photo appears exactly once
        let mut all: Vec<usize> = folds_transect(&s27)
            .unwrap()
            .folds
            .iter()
            .flatten()
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..54).collect::<Vec<_>>());
    }

    #[test]
    fn single_transect_has_no_transect_folds() {
        let s = homogeneous_survey(1, 5, 1.0, 2);
        assert!(folds_transect(&s).is_err());
    }

    #[test]
    fn hom_po_cv_matches_analytic_crps() {
        // homogeneous truth: with many photos the posterior concentrates and
        // the per-photo predictive is essentially Po(lambda |A|); the mean
        // photo-level CRPS over the folds approaches the analytic expected
        // CRPS of that Poisson predictive
        let lambda = 2.0;
        let s = homogeneous_survey(5, 100, lambda, 11);
        let folds = folds_random(&s, 10, 5).unwrap();
        let report = run_cv(
            &s,
            None,
            "s",
            &ModelSpec::HomPoisson { a0: 10.0, b0: 10.0 },
            &folds,
            99,
            &CvConfig::default(),
        )
        .unwrap();
        assert_eq!(report.n_folds, 10);
        assert!(report.is_complete());

        // oracle: score the closed-form true predictive Po(lambda |A|) on
        // the same observations
        let truth = CountDistribution::PoissonMixture {
            mus: vec![lambda * 0.8],
        };
        let expected: f64 = s
            .photos()
            .iter()
            .map(|p| crps(&truth, p.count("s").unwrap()))
            .sum::<f64>()
            / s.photos().len() as f64;
        let got = report.photo.crps.mean;
        assert!(
            (got - expected).abs() / expected < 0.05,
            "cv crps {got} vs analytic {expected}"
        );
    }

    #[test]
    fn held_out_counts_never_touch_the_fit() {
        // perturbing a held-out photo's count leaves the fold's predictive
        // distributions bit-identical
        let s = homogeneous_survey(3, 8, 1.5, 21);
        let removed = vec![0usize, 5, 11];
        let model = ModelSpec::HomPoisson { a0: 10.0, b0: 10.0 };
        let before = fold_predictions(&s, None, "s", &model, &removed, 200, 7).unwrap();

        let mut photos: Vec<Photo> = s.photos().to_vec();
        photos[5].counts.insert("s".to_string(), 1_000_000);
        let perturbed = Survey::new(photos).unwrap();
        let after = fold_predictions(&perturbed, None, "s", &model, &removed, 200, 7).unwrap();

        for (a, b) in before.photo_dists.iter().zip(&after.photo_dists) {
            match (a, b) {
                (
                    CountDistribution::NegBin { mu: m1, tau: t1 },
                    CountDistribution::NegBin { mu: m2, tau: t2 },
                ) => {
                    assert_eq!(m1.to_bits(), m2.to_bits());
                    assert_eq!(t1.to_bits(), t2.to_bits());
                }
                _ => panic!("hom-po predictions should be NegBin"),
            }
        }

        // same property through the LGCP path (means of the mixtures)
        let lgcp = ModelSpec::Lgcp(LgcpConfig {
            fixed: FixedEffects::InterceptOnly,
            grid: GridSpec::Explicit(vec![Hyper::from_kappa_sigma2(1.0, 0.3)]),
            ..LgcpConfig::default()
        });
        let b1 = fold_predictions(&s, None, "s", &lgcp, &removed, 60, 7).unwrap();
        let b2 = fold_predictions(&perturbed, None, "s", &lgcp, &removed, 60, 7).unwrap();
        for (a, b) in b1.photo_dists.iter().zip(&b2.photo_dists) {
            match (a, b) {
                (
                    CountDistribution::PoissonMixture { mus: m1 },
                    CountDistribution::PoissonMixture { mus: m2 },
                ) => {
                    for (x, y) in m1.iter().zip(m2) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
                _ => panic!("lgcp predictions should be Poisson mixtures"),
            }
        }
    }

    #[test]
    fn aggregate_mean_is_sum_of_photo_means() {
        let s = homogeneous_survey(3, 8, 1.5, 31);
        let removed = vec![2usize, 7, 13, 20];
        let lgcp = ModelSpec::Lgcp(LgcpConfig {
            fixed: FixedEffects::InterceptOnly,
            grid: GridSpec::Explicit(vec![Hyper::from_kappa_sigma2(1.0, 0.3)]),
            ..LgcpConfig::default()
        });
        let pred = fold_predictions(&s, None, "s", &lgcp, &removed, 100, 3).unwrap();
        let sum_means: f64 = pred.photo_dists.iter().map(|d| d.mean()).sum();
        let agg_mean = pred.aggregate.mean();
        assert!(
            (sum_means - agg_mean).abs() / agg_mean < 1e-6,
            "{sum_means} vs {agg_mean}"
        );
    }

    #[test]
    fn degenerate_lgcp_matches_hom_po() {
        // latent variance forced to ~0, intercept only: the LGCP predictive
        // mean coincides with the flat-prior conjugate model within MC noise
        let s = homogeneous_survey(4, 30, 2.0, 41);
        let removed: Vec<usize> = (0..12).collect();
        let draws = 2000;
        let lgcp = ModelSpec::Lgcp(LgcpConfig {
            fixed: FixedEffects::InterceptOnly,
            grid: GridSpec::Explicit(vec![Hyper::from_kappa_sigma2(1.0, 1e-8)]),
            ..LgcpConfig::default()
        });
        let p_lgcp = fold_predictions(&s, None, "s", &lgcp, &removed, draws, 17).unwrap();
        let hom = ModelSpec::HomPoisson { a0: 1e-6, b0: 1e-6 };
        let p_hom = fold_predictions(&s, None, "s", &hom, &removed, draws, 17).unwrap();

        let m_lgcp = p_lgcp.aggregate.mean();
        let m_hom = p_hom.aggregate.mean();
        // standard error of the mixture mean
        let mus = match &p_lgcp.aggregate {
            CountDistribution::PoissonMixture { mus } => mus.clone(),
            _ => panic!(),
        };
        let var = mus.iter().map(|m| (m - m_lgcp) * (m - m_lgcp)).sum::<f64>()
            / (mus.len() as f64 - 1.0);
        let se = (var / mus.len() as f64).sqrt();
        assert!(
            (m_lgcp - m_hom).abs() < 3.0 * se + 0.01 * m_hom,
            "lgcp {m_lgcp} vs hom-po {m_hom} (se {se})"
        );
    }

    #[test]
    fn report_mean_equals_unit_mean() {
        let s = homogeneous_survey(3, 10, 1.0, 51);
        let folds = folds_transect(&s).unwrap();
        let report = run_cv(
            &s,
            None,
            "s",
            &ModelSpec::HomPoisson { a0: 10.0, b0: 10.0 },
            &folds,
            5,
            &CvConfig {
                bootstrap_resamples: 200,
                ..CvConfig::default()
            },
        )
        .unwrap();
        let mean: f64 = report.photo.crps.per_unit.iter().sum::<f64>()
            / report.photo.crps.per_unit.len() as f64;
        assert!((report.photo.crps.mean - mean).abs() < 1e-12);
        assert_eq!(report.photo.n_units, 30);
        assert_eq!(report.aggregate.n_units, 3);
    }
}
