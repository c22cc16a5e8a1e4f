//! Log-Gaussian Cox process fitting by a nested Laplace approximation over a
//! hyperparameter grid, and posterior latent-field sampling.
//!
//! The latent vector is z = [f, gamma]: the mesh-node weights of the SPDE
//! field followed by the fixed effects, which are absorbed as extra Gaussian
//! components so that one sparse factorization covers everything. For a
//! hyperparameter value theta the inner step maximizes
//!
//! `log p(z | y, theta) = sum_i [y_i eta_i - w_i e^{eta_i}] - 1/2 (z - mu)^T Q (z - mu) + const`
//!
//! by damped Newton, yielding a Gaussian approximation with precision
//! H = Q + B^T D B and the Laplace evidence used to weight theta on the
//! outer grid. The zero-integral identifiability constraint on f is applied
//! to posterior samples by conditioning-by-kriging.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::gmrf::{
    assemble_precision, standard_normals, stream_rng, CholFactor, ConstraintCorrection, Hyper,
    LinearConstraint, SparseSpd,
};
use crate::mesh::{build_survey_mesh, dual_cells, fem_matrices, projector, DualWeights, Mesh,
    MeshConfig, Projector};
use crate::prediction::{predictive_mixture, CountDistribution};
use crate::survey::{CovariateRaster, Region, Survey};
use statrs::function::gamma::ln_gamma;

/// Monte Carlo sample count for final posterior predictive integrations.
pub const DEFAULT_POSTERIOR_DRAWS: usize = 10_000;

/// Default hyperparameter priors (mean, variance) on theta_1 = log tau and
/// theta_2 = log kappa.
pub const DEFAULT_THETA1_PRIOR: (f64, f64) = (1.328, 10.0);
pub const DEFAULT_THETA2_PRIOR: (f64, f64) = (-2.594, 10.0);

/// Per-observation log-likelihood contribution with first two derivatives
/// in the linear predictor.
pub trait ObsLikelihood: Sync {
    fn len(&self) -> usize;
    /// (log-lik, d/d eta, d^2/d eta^2) for observation i; the curvature must
    /// be <= 0.
    fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64);
}

/// Aggregated Poisson counts with exposures: y_i ~ Po(w_i exp(eta_i)).
#[derive(Debug, Clone)]
pub struct PoissonCounts {
    pub counts: Vec<f64>,
    pub exposures: Vec<f64>,
    constants: Vec<f64>,
}

impl PoissonCounts {
    pub fn new(counts: Vec<f64>, exposures: Vec<f64>) -> Result<Self> {
        if counts.len() != exposures.len() {
            return Err(Error::InvalidInput(
                "counts/exposures length mismatch".into(),
            ));
        }
        for (&y, &w) in counts.iter().zip(&exposures) {
            if y < 0.0 || w < 0.0 || !y.is_finite() || !w.is_finite() {
                return Err(Error::InvalidInput(
                    "negative or non-finite count/exposure".into(),
                ));
            }
            if w == 0.0 && y > 0.0 {
                return Err(Error::InvalidInput(
                    "positive count on zero exposure".into(),
                ));
            }
        }
        let constants = counts
            .iter()
            .zip(&exposures)
            .map(|(&y, &w)| {
                if w > 0.0 {
                    y * w.ln() - ln_gamma(y + 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(PoissonCounts {
            counts,
            exposures,
            constants,
        })
    }
}

impl ObsLikelihood for PoissonCounts {
    fn len(&self) -> usize {
        self.counts.len()
    }

    fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64) {
        let y = self.counts[i];
        let w = self.exposures[i];
        let m = w * eta.exp();
        (self.constants[i] + y * eta - m, y - m, -m)
    }
}

/// Sparse observation matrix: eta = B z, one short row per observation.
#[derive(Debug, Clone)]
pub struct ObsMatrix {
    pub n_latent: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl ObsMatrix {
    pub fn identity(n: usize) -> Self {
        ObsMatrix {
            n_latent: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn eta(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * z[j]).sum())
            .collect()
    }

    fn accumulate_t_vec(&self, v: &[f64], out: &mut [f64]) {
        for (row, &vi) in self.rows.iter().zip(v) {
            for &(j, x) in row {
                out[j] += x * vi;
            }
        }
    }

    fn weighted_outer_triplets(&self, d: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        for (row, &di) in self.rows.iter().zip(d) {
            for &(a, xa) in row {
                for &(b, xb) in row {
                    out.push((a, b, di * xa * xb));
                }
            }
        }
    }
}

/// Gaussian approximation to the conditional posterior of the latent vector:
/// mode, precision (negative Hessian at the mode), its factorization, and
/// the Laplace log-evidence log p~(y | theta).
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Vec<f64>,
    pub precision: SparseSpd,
    pub factor: CholFactor,
    pub log_normalizer: f64,
    /// Objective value per accepted Newton iteration (non-decreasing).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

/// Damped-Newton Laplace approximation for a latent Gaussian model with
/// conditionally independent observations.
pub fn laplace_inner(
    lik: &dyn ObsLikelihood,
    obs: &ObsMatrix,
    prior_precision: &SparseSpd,
    prior_mean: &[f64],
    warm_start: Option<&[f64]>,
    opts: NewtonOptions,
) -> Result<GaussianApprox> {
    let n = obs.n_latent;
    if prior_precision.dim() != n || prior_mean.len() != n {
        return Err(Error::InvalidInput(
            "prior dimension does not match the observation matrix".into(),
        ));
    }
    let prior_factor = prior_precision.factorize()?;
    let mut q_triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(prior_precision.nnz());
    for j in 0..n {
        for (i, v) in prior_precision.column(j) {
            q_triplets.push((i, j, v));
        }
    }

    let mut z: Vec<f64> = warm_start.map(|w| w.to_vec()).unwrap_or_else(|| prior_mean.to_vec());
    let objective = |z: &[f64], eta: &[f64]| -> f64 {
        let ll: f64 = (0..lik.len()).map(|i| lik.eval(i, eta[i]).0).sum();
        let diff: Vec<f64> = z.iter().zip(prior_mean).map(|(a, b)| a - b).collect();
        ll - 0.5 * prior_precision.quad_form(&diff)
    };

    let mut eta = obs.eta(&z);
    let mut obj = objective(&z, &eta);
    if !obj.is_finite() {
        // fall back to the prior mean when the warm start is unusable
        z = prior_mean.to_vec();
        eta = obs.eta(&z);
        obj = objective(&z, &eta);
        if !obj.is_finite() {
            return Err(Error::Diverged("objective not finite at the prior mean".into()));
        }
    }
    let mut trace = vec![obj];
    let grad_scale = (0..lik.len())
        .map(|i| lik.eval(i, 0.0).1.abs())
        .fold(1.0f64, f64::max);

    let mut factor: Option<(SparseSpd, CholFactor)> = None;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        // gradient: B^T dll - Q (z - mu)
        let mut grad = vec![0.0f64; n];
        let d1: Vec<f64> = (0..lik.len()).map(|i| lik.eval(i, eta[i]).1).collect();
        obs.accumulate_t_vec(&d1, &mut grad);
        let diff: Vec<f64> = z.iter().zip(prior_mean).map(|(a, b)| a - b).collect();
        let qd = prior_precision.matvec(&diff);
        for (g, q) in grad.iter_mut().zip(&qd) {
            *g -= q;
        }
        // Hessian: Q + B^T diag(-d2) B
        let d2: Vec<f64> = (0..lik.len()).map(|i| -lik.eval(i, eta[i]).2).collect();
        let mut triplets = q_triplets.clone();
        obs.weighted_outer_triplets(&d2, &mut triplets);
        let hessian = SparseSpd::from_triplets(n, &triplets)?;
        let fact = hessian.factorize()?;

        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm <= opts.grad_tol * grad_scale {
            factor = Some((hessian, fact));
            converged = true;
            break;
        }

        let direction = fact.solve(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = z
                .iter()
                .zip(&direction)
                .map(|(zi, di)| zi + step * di)
                .collect();
            let eta_c = obs.eta(&cand);
            let obj_c = objective(&cand, &eta_c);
            if obj_c.is_finite() && obj_c >= obj - 1e-12 * (1.0 + obj.abs()) {
                z = cand;
                eta = eta_c;
                obj = obj_c;
                trace.push(obj);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        factor = Some((hessian, fact));
        if !accepted {
            converged = true; // no ascent left: numerically at the mode
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(opts.max_iter));
    }

    // refresh the Hessian at the final mode
    let d2: Vec<f64> = (0..lik.len()).map(|i| -lik.eval(i, eta[i]).2).collect();
    let mut triplets = q_triplets;
    obs.weighted_outer_triplets(&d2, &mut triplets);
    let hessian = SparseSpd::from_triplets(n, &triplets)?;
    let fact = match factor {
        Some((h, f)) if h.nnz() == hessian.nnz() => {
            // same pattern; refactor with the final values
            hessian.factorize().unwrap_or(f)
        }
        _ => hessian.factorize()?,
    };

    // Laplace evidence: ll(mode) - quad/2 + (logdet Q - logdet H)/2
    let log_normalizer = obj + 0.5 * (prior_factor.log_det() - fact.log_det());
    Ok(GaussianApprox {
        mode: z,
        precision: hessian,
        factor: fact,
        log_normalizer,
        objective_trace: trace,
    })
}

/// Normalized weights from unnormalized log densities (invariant to adding
/// a constant); non-finite entries get zero weight.
pub fn normalize_log_weights(log_densities: &[f64]) -> Vec<f64> {
    let m = log_densities
        .iter()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return vec![0.0; log_densities.len()];
    }
    let raw: Vec<f64> = log_densities
        .iter()
        .map(|&v| if v.is_finite() { (v - m).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Gaussian prior on one hyperparameter coordinate.
#[derive(Debug, Clone, Copy)]
pub struct ThetaPrior {
    pub mean: f64,
    pub var: f64,
}

impl ThetaPrior {
    fn log_density(&self, x: f64) -> f64 {
        -0.5 * (x - self.mean) * (x - self.mean) / self.var
    }
}

/// Hyperparameter grid strategy.
#[derive(Debug, Clone)]
pub enum GridSpec {
    /// Mode located by coordinate-wise golden-section search, then an
    /// n x n grid spanning +/- span posterior-curvature standard deviations.
    Adaptive { n: usize, span: f64 },
    Explicit(Vec<Hyper>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Adaptive { n: 5, span: 2.5 }
    }
}

/// The latent-Gaussian problem handed to the hyperparameter integration:
/// FEM matrices for the SPDE block, fixed-effect prior precisions, the
/// observation matrix over [f, gamma], and the count likelihood.
pub struct LatentModel {
    pub fem: crate::mesh::FemMatrices,
    pub fixed_precisions: Vec<f64>,
    pub obs: ObsMatrix,
    pub lik: PoissonCounts,
    /// Zero-integral constraint coefficients on the f block (dual weights).
    pub constraint_f: Option<Vec<f64>>,
}

impl LatentModel {
    pub fn n_field(&self) -> usize {
        self.fem.c.len()
    }

    pub fn n_latent(&self) -> usize {
        self.n_field() + self.fixed_precisions.len()
    }

    /// Block-diagonal prior precision: SPDE Q(theta) plus fixed-effect
    /// diagonal.
    pub fn prior_precision(&self, hyper: &Hyper) -> Result<SparseSpd> {
        let qf = assemble_precision(&self.fem, hyper)?;
        let m = self.n_field();
        let n = self.n_latent();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(qf.nnz() + 8);
        for j in 0..m {
            for (i, v) in qf.column(j) {
                triplets.push((i, j, v));
            }
        }
        for (k, &p) in self.fixed_precisions.iter().enumerate() {
            triplets.push((m + k, m + k, p));
        }
        SparseSpd::from_triplets(n, &triplets)
    }

    fn evidence(&self, hyper: &Hyper, warm: Option<&[f64]>, opts: NewtonOptions) -> Result<GaussianApprox> {
        let q = self.prior_precision(hyper)?;
        let mean = vec![0.0; self.n_latent()];
        laplace_inner(&self.lik, &self.obs, &q, &mean, warm, opts)
    }

    fn full_constraint(&self) -> Option<LinearConstraint> {
        self.constraint_f.as_ref().map(|w| {
            let mut a = vec![0.0; self.n_latent()];
            a[..w.len()].copy_from_slice(w);
            LinearConstraint::new(a).expect("dual weights are not all zero")
        })
    }
}

/// One evaluated hyperparameter grid point.
pub struct GridPoint {
    pub hyper: Hyper,
    pub log_density: f64,
    pub weight: f64,
    pub approx: GaussianApprox,
    pub correction: Option<ConstraintCorrection>,
}

/// Grid posterior over the hyperparameters with per-point Gaussian
/// approximations.
pub struct HyperGrid {
    pub points: Vec<GridPoint>,
}

impl HyperGrid {
    /// Posterior mean of a function of the hyperparameters.
    pub fn posterior_mean(&self, f: impl Fn(&Hyper) -> f64) -> f64 {
        self.points.iter().map(|p| p.weight * f(&p.hyper)).sum()
    }

    pub fn map_point(&self) -> &GridPoint {
        self.points
            .iter()
            .max_by(|a, b| a.log_density.partial_cmp(&b.log_density).unwrap())
            .expect("grid is nonempty")
    }
}

fn golden_max(mut eval: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    0.5 * (a + b)
}

/// Integrate the hyperparameters over a grid: evaluate the Laplace evidence
/// plus theta prior at each point and normalize the weights.
pub fn hyper_posterior(
    model: &LatentModel,
    theta1_prior: ThetaPrior,
    theta2_prior: ThetaPrior,
    grid_spec: &GridSpec,
    opts: NewtonOptions,
) -> Result<HyperGrid> {
    let log_post = |h: &Hyper, warm: Option<&[f64]>| -> (f64, Option<GaussianApprox>) {
        match model.evidence(h, warm, opts) {
            Ok(a) => {
                let lp = a.log_normalizer
                    + theta1_prior.log_density(h.log_tau)
                    + theta2_prior.log_density(h.log_kappa);
                (lp, Some(a))
            }
            Err(_) => (f64::NEG_INFINITY, None),
        }
    };

    let hypers: Vec<Hyper> = match grid_spec {
        GridSpec::Explicit(h) => h.clone(),
        GridSpec::Adaptive { n, span } => {
            // coordinate-wise golden-section mode search, warm-started
            let mut center = Hyper::new(theta1_prior.mean, theta2_prior.mean);
            let mut warm: Option<Vec<f64>> = None;
            let widths = [
                (2.5 * theta1_prior.var.sqrt(), 2.5 * theta2_prior.var.sqrt()),
                (2.0, 2.0),
                (0.75, 0.75),
            ];
            for (w1, w2) in widths {
                let t1 = golden_max(
                    |x| {
                        let h = Hyper::new(x, center.log_kappa);
                        let (lp, a) = log_post(&h, warm.as_deref());
                        if let Some(a) = a {
                            warm = Some(a.mode);
                        }
                        lp
                    },
                    center.log_tau - w1,
                    center.log_tau + w1,
                    0.02,
                );
                center = Hyper::new(t1, center.log_kappa);
                let t2 = golden_max(
                    |x| {
                        let h = Hyper::new(center.log_tau, x);
                        let (lp, a) = log_post(&h, warm.as_deref());
                        if let Some(a) = a {
                            warm = Some(a.mode);
                        }
                        lp
                    },
                    center.log_kappa - w2,
                    center.log_kappa + w2,
                    0.02,
                );
                center = Hyper::new(center.log_tau, t2);
            }
            // curvature step sizes by central differences
            let (f0, _) = log_post(&center, warm.as_deref());
            let h_fd = 0.15;
            let mut sds = [0.75f64; 2];
            for (axis, sd) in sds.iter_mut().enumerate() {
                let shift = |s: f64| match axis {
                    0 => Hyper::new(center.log_tau + s, center.log_kappa),
                    _ => Hyper::new(center.log_tau, center.log_kappa + s),
                };
                let (fp, _) = log_post(&shift(h_fd), warm.as_deref());
                let (fm, _) = log_post(&shift(-h_fd), warm.as_deref());
                let d2 = (fp - 2.0 * f0 + fm) / (h_fd * h_fd);
                if d2 < -1e-8 && d2.is_finite() {
                    *sd = (-1.0 / d2).sqrt().clamp(0.05, 3.0);
                }
            }
            let n = (*n).max(1);
            let mut pts = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let off = |k: usize| {
                        if n == 1 {
                            0.0
                        } else {
                            -span + 2.0 * span * k as f64 / (n - 1) as f64
                        }
                    };
                    pts.push(Hyper::new(
                        center.log_tau + off(i) * sds[0],
                        center.log_kappa + off(j) * sds[1],
                    ));
                }
            }
            pts
        }
    };
    if hypers.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }

    // evaluate grid points in parallel; a shared warm start comes from a
    // quick serial evaluation of the first point
    let warm0 = model
        .evidence(&hypers[0], None, opts)
        .ok()
        .map(|a| a.mode);
    let evaluated: Vec<(f64, Option<GaussianApprox>)> = hypers
        .par_iter()
        .map(|h| log_post(h, warm0.as_deref()))
        .collect();

    let log_densities: Vec<f64> = evaluated.iter().map(|(lp, _)| *lp).collect();
    if log_densities.iter().all(|lp| !lp.is_finite()) {
        return Err(Error::Diverged(
            "no hyperparameter grid point produced a convergent fit".into(),
        ));
    }
    let weights = normalize_log_weights(&log_densities);
    let constraint = model.full_constraint();
    let mut points = Vec::with_capacity(hypers.len());
    for ((h, (lp, approx)), w) in hypers.into_iter().zip(evaluated).zip(weights) {
        let Some(approx) = approx else { continue };
        let correction = constraint
            .as_ref()
            .map(|c| ConstraintCorrection::new(&approx.factor, c))
            .transpose()?;
        points.push(GridPoint {
            hyper: h,
            log_density: lp,
            weight: w,
            approx,
            correction,
        });
    }
    // re-normalize over the points that survived
    let total: f64 = points.iter().map(|p| p.weight).sum();
    for p in &mut points {
        p.weight /= total;
    }
    Ok(HyperGrid { points })
}

/// Fixed-effect structure of the intensity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedEffects {
    InterceptOnly,
    /// Intercept, ice-density covariate q(s), s1, s2, sqrt(s1^2+s2^2).
    Full,
}

impl FixedEffects {
    pub fn n_columns(&self) -> usize {
        match self {
            FixedEffects::InterceptOnly => 1,
            FixedEffects::Full => 5,
        }
    }

    /// Covariate row at a point; `Full` requires a raster (values outside
    /// its footprint take the nearest boundary value).
    pub fn row(&self, p: Point, raster: Option<&CovariateRaster>) -> Result<Vec<f64>> {
        match self {
            FixedEffects::InterceptOnly => Ok(vec![1.0]),
            FixedEffects::Full => {
                let raster = raster.ok_or_else(|| {
                    Error::InvalidInput(
                        "the full fixed-effect set needs a covariate raster".into(),
                    )
                })?;
                let q = raster.covariate_at_clamped(p);
                Ok(vec![1.0, q, p.x, p.y, p.norm()])
            }
        }
    }

    pub fn prior_precisions(&self, intercept_var: f64, beta_var: f64) -> Vec<f64> {
        match self {
            FixedEffects::InterceptOnly => vec![1.0 / intercept_var],
            FixedEffects::Full => {
                let mut v = vec![1.0 / intercept_var];
                v.extend(std::iter::repeat(1.0 / beta_var).take(4));
                v
            }
        }
    }
}

/// Configuration for a full LGCP fit.
#[derive(Debug, Clone)]
pub struct LgcpConfig {
    pub mesh: MeshConfig,
    pub fixed: FixedEffects,
    /// Variance of the (numerically improper) intercept prior.
    pub intercept_prior_var: f64,
    /// Prior variance of each covariate coefficient.
    pub beta_prior_var: f64,
    pub theta1_prior: ThetaPrior,
    pub theta2_prior: ThetaPrior,
    pub grid: GridSpec,
    pub newton: NewtonOptions,
}

impl Default for LgcpConfig {
    fn default() -> Self {
        LgcpConfig {
            mesh: MeshConfig::default(),
            fixed: FixedEffects::Full,
            intercept_prior_var: 1e6,
            beta_prior_var: 1000.0,
            theta1_prior: ThetaPrior {
                mean: DEFAULT_THETA1_PRIOR.0,
                var: DEFAULT_THETA1_PRIOR.1,
            },
            theta2_prior: ThetaPrior {
                mean: DEFAULT_THETA2_PRIOR.0,
                var: DEFAULT_THETA2_PRIOR.1,
            },
            grid: GridSpec::default(),
            newton: NewtonOptions::default(),
        }
    }
}

/// A fitted LGCP: hyperparameter grid with per-point Gaussian
/// approximations, plus the mesh and design information needed to evaluate
/// the latent intensity anywhere.
pub struct LgcpFit {
    pub grid: HyperGrid,
    pub mesh: Mesh,
    pub dual: DualWeights,
    pub fixed: FixedEffects,
    pub config: LgcpConfig,
}

impl LgcpFit {
    pub fn n_field(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_latent(&self) -> usize {
        self.mesh.n_nodes() + self.fixed.n_columns()
    }

    /// Posterior-mean range sqrt(8)/kappa of the latent field (km).
    pub fn range_estimate(&self) -> f64 {
        8f64.sqrt() / self.grid.posterior_mean(|h| h.kappa())
    }

    /// Draw one latent sample for draw index k (grid point by weight, then
    /// the Gaussian approximation with the zero-integral correction).
    fn sample_one(&self, seed: u64, k: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, k);
        let u: f64 = rand::Rng::gen(&mut rng);
        let mut acc = 0.0;
        let mut chosen = self.grid.points.len() - 1;
        for (g, p) in self.grid.points.iter().enumerate() {
            acc += p.weight;
            if u <= acc {
                chosen = g;
                break;
            }
        }
        let point = &self.grid.points[chosen];
        let normals = standard_normals(&mut rng, self.n_latent());
        let mut z = point.factor_sample(&normals);
        if let Some(corr) = &point.correction {
            corr.apply(&mut z);
        }
        z
    }

    /// K posterior latent fields (each of length n_latent).
    pub fn sample_latent(&self, k: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..k).map(|i| self.sample_one(seed, i as u64)).collect()
    }

    /// Apply `f` to each of K posterior samples in parallel, collecting the
    /// per-draw results in draw order.
    pub fn map_samples<T: Send>(
        &self,
        k: usize,
        seed: u64,
        f: impl Fn(usize, &[f64]) -> T + Sync,
    ) -> Vec<T> {
        (0..k)
            .into_par_iter()
            .map(|i| f(i, &self.sample_one(seed, i as u64)))
            .collect()
    }

    /// Posterior means and standard deviations of the fixed effects
    /// (mixture over the grid; within-point variance from the sparse
    /// factorization).
    pub fn fixed_effect_summary(&self) -> Vec<(f64, f64)> {
        let m = self.n_field();
        let k = self.fixed.n_columns();
        let mut mean = vec![0.0; k];
        let mut second = vec![0.0; k];
        for p in &self.grid.points {
            let mut e = vec![0.0; self.n_latent()];
            for c in 0..k {
                e[m + c] = 1.0;
                let col = p.approx.factor.solve(&e);
                e[m + c] = 0.0;
                let var = col[m + c];
                let mu = p.approx.mode[m + c];
                mean[c] += p.weight * mu;
                second[c] += p.weight * (var + mu * mu);
            }
        }
        (0..k)
            .map(|c| (mean[c], (second[c] - mean[c] * mean[c]).max(0.0).sqrt()))
            .collect()
    }

    /// Fit summary dump: grid table, fixed effects, range estimate.
    pub fn write_summary(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "# theta1=log_tau theta2=log_kappa weight log_density")?;
        for p in &self.grid.points {
            writeln!(
                w,
                "grid {} {} {} {}",
                p.hyper.log_tau, p.hyper.log_kappa, p.weight, p.log_density
            )?;
        }
        let names: &[&str] = match self.fixed {
            FixedEffects::InterceptOnly => &["intercept"],
            FixedEffects::Full => &["intercept", "ice_q", "s1", "s2", "radial"],
        };
        for (name, (m, s)) in names.iter().zip(self.fixed_effect_summary()) {
            writeln!(w, "fixed {name} mean {m} sd {s}")?;
        }
        writeln!(w, "range_km {}", self.range_estimate())?;
        writeln!(
            w,
            "sigma2 {}",
            self.grid.posterior_mean(|h| h.sigma2())
        )?;
        Ok(())
    }
}

impl GridPoint {
    fn factor_sample(&self, normals: &[f64]) -> Vec<f64> {
        let mut z = self.approx.factor.sample_zero_mean(normals);
        for (zi, m) in z.iter_mut().zip(&self.approx.mode) {
            *zi += m;
        }
        z
    }
}

/// Fit the LGCP to a survey: mesh build, design assembly, hyperparameter
/// grid integration.
pub fn fit_lgcp(
    survey: &Survey,
    raster: Option<&CovariateRaster>,
    species: &str,
    config: &LgcpConfig,
) -> Result<LgcpFit> {
    if survey.photos().is_empty() {
        return Err(Error::InvalidInput("survey has no photos".into()));
    }
    let mesh = build_survey_mesh(survey, &config.mesh)?;
    let dual = dual_cells(&mesh);
    let fem = fem_matrices(&mesh)?;
    let m = mesh.n_nodes();
    let k = config.fixed.n_columns();

    let mut rows = Vec::with_capacity(survey.photos().len());
    let mut counts = Vec::with_capacity(survey.photos().len());
    let mut exposures = Vec::with_capacity(survey.photos().len());
    for photo in survey.photos() {
        let node = mesh.photo_node[&photo.id];
        let mut row = vec![(node, 1.0)];
        for (c, x) in config.fixed.row(photo.center, raster)?.into_iter().enumerate() {
            row.push((m + c, x));
        }
        rows.push(row);
        counts.push(photo.count(species)? as f64);
        exposures.push(photo.area());
    }
    let model = LatentModel {
        fem,
        fixed_precisions: config
            .fixed
            .prior_precisions(config.intercept_prior_var, config.beta_prior_var),
        obs: ObsMatrix {
            n_latent: m + k,
            rows,
        },
        lik: PoissonCounts::new(counts, exposures)?,
        constraint_f: Some(dual.weights.clone()),
    };
    let grid = hyper_posterior(
        &model,
        config.theta1_prior,
        config.theta2_prior,
        &config.grid,
        config.newton,
    )?;
    Ok(LgcpFit {
        grid,
        mesh,
        dual,
        fixed: config.fixed,
        config: config.clone(),
    })
}

/// Latent-intensity evaluator at a fixed point set: mesh projector rows for
/// the field block plus fixed-effect covariate rows, with per-point areas.
pub struct PointEvaluator {
    proj: Projector,
    fixed_rows: Vec<Vec<f64>>,
    pub areas: Vec<f64>,
    n_field: usize,
}

impl PointEvaluator {
    pub fn new(
        fit: &LgcpFit,
        points: &[Point],
        areas: Vec<f64>,
        raster: Option<&CovariateRaster>,
    ) -> Result<Self> {
        assert_eq!(points.len(), areas.len());
        let proj = projector(&fit.mesh, points)?;
        let fixed_rows = points
            .iter()
            .map(|&p| fit.fixed.row(p, raster))
            .collect::<Result<Vec<_>>>()?;
        Ok(PointEvaluator {
            proj,
            fixed_rows,
            areas,
            n_field: fit.n_field(),
        })
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// Linear predictor at every point for one latent sample.
    pub fn eta(&self, z: &[f64]) -> Vec<f64> {
        let gamma = &z[self.n_field..];
        (0..self.len())
            .map(|j| {
                self.proj.interpolate(j, &z[..self.n_field])
                    + self.fixed_rows[j]
                        .iter()
                        .zip(gamma)
                        .map(|(x, g)| x * g)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Integrated mean over the point set: sum_j exp(eta_j) area_j.
    pub fn integrated_mean(&self, z: &[f64]) -> f64 {
        crate::prediction::integrate_intensity(&self.eta(z), &self.areas)
    }

    /// Per-point Poisson means area_j exp(eta_j).
    pub fn point_means(&self, z: &[f64]) -> Vec<f64> {
        self.eta(z)
            .iter()
            .zip(&self.areas)
            .map(|(e, a)| e.exp() * a)
            .collect()
    }
}

/// Result of the total-count posterior predictive integration.
pub struct TotalPrediction {
    pub distribution: CountDistribution,
    /// Per-cell posterior median intensity (from a thinned sample subset),
    /// for map-style dumps.
    pub cell_median_intensity: Vec<f64>,
}

/// Monte Carlo posterior predictive for the total count over a prediction
/// grid: Poisson mixture over K sampled latent fields.
pub fn predict_total(
    fit: &LgcpFit,
    region: &Region,
    raster: Option<&CovariateRaster>,
    cell_w: f64,
    cell_h: f64,
    k: usize,
    seed: u64,
) -> Result<TotalPrediction> {
    let grid = crate::prediction::build_grid(region, cell_w, cell_h)?;
    let eval = PointEvaluator::new(fit, &grid.centers, grid.areas(), raster)?;
    let thin = (k / 200).max(1);
    let per_draw: Vec<(f64, Option<Vec<f64>>)> = fit.map_samples(k, seed, |i, z| {
        let eta = eval.eta(z);
        let mu = crate::prediction::integrate_intensity(&eta, &eval.areas);
        let keep = if i % thin == 0 { Some(eta) } else { None };
        (mu, keep)
    });
    let mus: Vec<f64> = per_draw.iter().map(|(mu, _)| *mu).collect();
    let kept: Vec<&Vec<f64>> = per_draw.iter().filter_map(|(_, e)| e.as_ref()).collect();
    let mut cell_median = vec![0.0; grid.len()];
    if !kept.is_empty() {
        let mut buf = vec![0.0f64; kept.len()];
        for j in 0..grid.len() {
            for (b, eta) in buf.iter_mut().zip(&kept) {
                *b = eta[j];
            }
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cell_median[j] = buf[buf.len() / 2].exp();
        }
    }
    Ok(TotalPrediction {
        distribution: predictive_mixture(mus)?,
        cell_median_intensity: cell_median,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::Photo;
    use std::collections::BTreeMap;

    fn one_node_model(count: f64, exposure: f64, prior_prec: f64) -> (PoissonCounts, ObsMatrix, SparseSpd) {
        (
            PoissonCounts::new(vec![count], vec![exposure]).unwrap(),
            ObsMatrix::identity(1),
            SparseSpd::from_diag(&[prior_prec]),
        )
    }

    #[test]
    fn one_node_count_one() {
        let (lik, obs, q) = one_node_model(1.0, 1.0, 1.0);
        let a = laplace_inner(&lik, &obs, &q, &[0.0], None, NewtonOptions::default()).unwrap();
        assert!(a.mode[0].abs() < 1e-9, "mode {}", a.mode[0]);
        assert!((a.precision.get(0, 0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn one_node_count_zero_lambert() {
        // mode solves -e^z - z = 0, i.e. z = -W(1)
        let (lik, obs, q) = one_node_model(0.0, 1.0, 1.0);
        let a = laplace_inner(&lik, &obs, &q, &[0.0], None, NewtonOptions::default()).unwrap();
        // Newton oracle for W(1): w e^w = 1
        let mut w: f64 = 0.5;
        for _ in 0..50 {
            w -= (w * w.exp() - 1.0) / (w.exp() * (1.0 + w));
        }
        assert!((a.mode[0] + w).abs() < 1e-6, "mode {} vs {}", a.mode[0], -w);
        assert!((a.precision.get(0, 0) - (1.0 + (-w).exp())).abs() < 1e-6);
    }

    #[test]
    fn one_node_mode_matches_quadrature_argmax() {
        // five (y, w, prior precision) cases; the exact 1-d posterior
        // argmax comes from a fine golden-section oracle
        let cases = [
            (0.0, 1.0, 1.0),
            (3.0, 0.5, 2.0),
            (1.0, 2.0, 0.5),
            (7.0, 1.5, 1.0),
            (2.0, 0.1, 4.0),
        ];
        for (y, w, prec) in cases {
            let (lik, obs, q) = one_node_model(y, w, prec);
            let a = laplace_inner(&lik, &obs, &q, &[0.0], None, NewtonOptions::default()).unwrap();
            let logpost = |z: f64| y * z - w * z.exp() - 0.5 * prec * z * z;
            let oracle = super::golden_max(|z| logpost(z), -10.0, 10.0, 1e-10);
            assert!(
                (a.mode[0] - oracle).abs() < 1e-6,
                "case ({y},{w},{prec}): {} vs {oracle}",
                a.mode[0]
            );
            // curvature check: -f'' = w e^z + prec
            let expect_prec = w * a.mode[0].exp() + prec;
            assert!((a.precision.get(0, 0) - expect_prec).abs() < 1e-6);
        }
    }

    #[test]
    fn newton_objective_is_monotone() {
        let lik = PoissonCounts::new(vec![4.0, 0.0, 2.0], vec![1.0, 2.0, 0.5]).unwrap();
        let obs = ObsMatrix::identity(3);
        let q = SparseSpd::from_triplets(
            3,
            &[
                (0, 0, 2.0),
                (1, 1, 2.0),
                (2, 2, 2.0),
                (0, 1, -0.5),
                (1, 0, -0.5),
                (1, 2, -0.5),
                (2, 1, -0.5),
            ],
        )
        .unwrap();
        let a = laplace_inner(&lik, &obs, &q, &[0.0; 3], None, NewtonOptions::default()).unwrap();
        for w in a.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * (1.0 + w[0].abs()));
        }
    }

    /// Gaussian response with identity link: the Laplace approximation is
    /// exact and the mode is the generalized least squares solution.
    struct GaussianObs {
        obs: Vec<f64>,
        noise_prec: f64,
    }

    impl ObsLikelihood for GaussianObs {
        fn len(&self) -> usize {
            self.obs.len()
        }
        fn eval(&self, i: usize, eta: f64) -> (f64, f64, f64) {
            let r = self.obs[i] - eta;
            (
                -0.5 * self.noise_prec * r * r,
                self.noise_prec * r,
                -self.noise_prec,
            )
        }
    }

    #[test]
    fn gaussian_case_matches_gls() {
        let lik = GaussianObs {
            obs: vec![1.0, 2.0, -0.5, 0.3],
            noise_prec: 2.5,
        };
        // two latent components observed through a 4x2 design
        let obs = ObsMatrix {
            n_latent: 2,
            rows: vec![
                vec![(0, 1.0)],
                vec![(0, 1.0), (1, 1.0)],
                vec![(1, 1.0)],
                vec![(0, 0.5), (1, -1.0)],
            ],
        };
        let q = SparseSpd::from_diag(&[1.0, 0.5]);
        let a = laplace_inner(&lik, &obs, &q, &[0.0, 0.0], None, NewtonOptions::default()).unwrap();
        // GLS: (Q + tau B^T B)^{-1} tau B^T y
        let b = nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, -1.0]);
        let y = nalgebra::DVector::from_vec(lik.obs.clone());
        let qd = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5]));
        let h: nalgebra::DMatrix<f64> = &qd + 2.5 * b.transpose() * &b;
        let rhs = 2.5 * b.transpose() * y;
        let sol = h.lu().solve(&rhs).unwrap();
        for i in 0..2 {
            assert!((a.mode[i] - sol[i]).abs() < 1e-8, "{} vs {}", a.mode[i], sol[i]);
        }
    }

    #[test]
    fn weight_normalization_and_invariance() {
        let w = normalize_log_weights(&[-5.0, -5.0]);
        assert_eq!(w, vec![0.5, 0.5]);
        let a = normalize_log_weights(&[-2.0, -3.0, f64::NEG_INFINITY]);
        let b = normalize_log_weights(&[98.0, 97.0, f64::NEG_INFINITY]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(a[2], 0.0);
    }

    fn toy_survey(counts: &[u64]) -> Survey {
        let (w, h) = (0.5, 0.5);
        let photos: Vec<Photo> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| Photo {
                id: format!("p{i}"),
                transect_id: format!("T{}", i / 4),
                center: Point::new((i % 4) as f64 * w + w / 2.0, (i / 4) as f64 * 3.0),
                width: w,
                height: h,
                counts: BTreeMap::from([("s".to_string(), c)]),
            })
            .collect();
        Survey::new(photos).unwrap()
    }

    fn fast_config() -> LgcpConfig {
        LgcpConfig {
            fixed: FixedEffects::InterceptOnly,
            grid: GridSpec::Explicit(vec![Hyper::from_kappa_sigma2(1.0, 0.5)]),
            ..LgcpConfig::default()
        }
    }

    #[test]
    fn single_grid_point_gets_weight_one() {
        let survey = toy_survey(&[1, 0, 2, 0, 3, 1, 0, 1]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        assert_eq!(fit.grid.points.len(), 1);
        assert!((fit.grid.points[0].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_grid_points_share_weight() {
        let survey = toy_survey(&[1, 0, 2, 0, 3, 1, 0, 1]);
        let h = Hyper::from_kappa_sigma2(1.0, 0.5);
        let cfg = LgcpConfig {
            grid: GridSpec::Explicit(vec![h, h]),
            ..fast_config()
        };
        let fit = fit_lgcp(&survey, None, "s", &cfg).unwrap();
        let w: Vec<f64> = fit.grid.points.iter().map(|p| p.weight).collect();
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn all_zero_counts_pull_intensity_below_prior() {
        let survey = toy_survey(&[0; 8]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        let point = fit.grid.map_point();
        let m = fit.n_field();
        let eta_at_nodes: Vec<f64> = (0..m)
            .map(|j| point.approx.mode[j] + point.approx.mode[m]) // f_j + alpha
            .collect();
        // prior mean of the log intensity is 0
        for (j, &e) in eta_at_nodes.iter().enumerate() {
            assert!(e < 1e-9, "node {j}: eta {e} not below prior mean");
        }
    }

    #[test]
    fn sampled_fields_satisfy_zero_integral() {
        let survey = toy_survey(&[2, 1, 0, 3, 1, 0, 4, 0]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        let samples = fit.sample_latent(50, 11);
        let w = &fit.dual.weights;
        let scale: f64 = w.iter().sum();
        for s in &samples {
            let dot: f64 = w.iter().zip(s).map(|(a, b)| a * b).sum();
            assert!(
                dot.abs() / scale < 1e-6,
                "constraint violated: {dot} (scale {scale})"
            );
        }
    }

    #[test]
    fn sampling_deterministic_and_seed_sensitive() {
        let survey = toy_survey(&[2, 1, 0, 3, 1, 0, 4, 0]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        let a = fit.sample_latent(5, 3);
        let b = fit.sample_latent(5, 3);
        assert_eq!(a, b);
        let c = fit.sample_latent(5, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_approaches_mode() {
        let survey = toy_survey(&[2, 1, 0, 3, 1, 0, 4, 0]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        let point = fit.grid.map_point();
        let m = fit.n_field();
        let k = 4000;
        let samples = fit.sample_latent(k, 21);
        // intercept coordinate is unaffected by the f-block constraint
        let mean: f64 = samples.iter().map(|s| s[m]).sum::<f64>() / k as f64;
        let mut e = vec![0.0; fit.n_latent()];
        e[m] = 1.0;
        let var = point.approx.factor.solve(&e)[m];
        let se = (var / k as f64).sqrt();
        assert!(
            (mean - point.approx.mode[m]).abs() < 4.0 * se,
            "mean {mean} vs mode {} (se {se})",
            point.approx.mode[m]
        );
    }

    #[test]
    fn default_priors_match_reported_values() {
        let cfg = LgcpConfig::default();
        assert_eq!((cfg.theta1_prior.mean, cfg.theta1_prior.var), (1.328, 10.0));
        assert_eq!(
            (cfg.theta2_prior.mean, cfg.theta2_prior.var),
            (-2.594, 10.0)
        );
        assert_eq!(cfg.beta_prior_var, 1000.0);
        let prec = FixedEffects::Full.prior_precisions(1e6, 1000.0);
        assert_eq!(prec.len(), 5);
        assert!((prec[0] - 1e-6).abs() < 1e-18);
        for &p in &prec[1..] {
            assert!((p - 1e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluator_reproduces_constant_intensity() {
        let survey = toy_survey(&[1, 1, 1, 1, 1, 1, 1, 1]);
        let fit = fit_lgcp(&survey, None, "s", &fast_config()).unwrap();
        // constant field: z = [0...0, c]
        let mut z = vec![0.0; fit.n_latent()];
        z[fit.n_field()] = 3f64.ln();
        let pts = vec![Point::new(0.6, 0.1), Point::new(1.2, 2.0)];
        let eval = PointEvaluator::new(&fit, &pts, vec![2.0, 2.0], None).unwrap();
        let mu = eval.integrated_mean(&z);
        assert!((mu - 12.0).abs() < 1e-9, "mu {mu}");
    }
}
