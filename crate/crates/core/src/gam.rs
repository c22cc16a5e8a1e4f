//! Penalized-spline Poisson and negative-binomial count regression with
//! generalized cross-validation smoothing selection and asymptotic-normal
//! coefficient sampling.
//!
//! The spatial smooth is a low-rank thin-plate radial basis
//! eta(r) = r^2 log r on a deterministic knot set. The radial coefficients
//! are reparameterized onto the null space of the affine side conditions
//! (sum delta = sum delta x = sum delta y = 0), which makes the bending
//! energy Z^T E Z positive semidefinite and leaves affine trends to the
//! unpenalized fixed-effect columns.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::gmrf::{standard_normals, stream_rng};

/// Shape-parameter cap: at tau = 1e8 the negative binomial is numerically
/// Poisson.
pub const NB_SHAPE_CAP: f64 = 1e8;

/// Count family for the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Poisson,
    NegBin { tau: f64 },
}

impl Family {
    fn fisher_weight(&self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu,
            Family::NegBin { tau } => mu / (1.0 + mu / tau),
        }
    }

    fn deviance(&self, y: &[f64], mu: &[f64]) -> f64 {
        let mut d = 0.0;
        for (&yi, &mi) in y.iter().zip(mu) {
            d += match self {
                Family::Poisson => {
                    let a = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                    2.0 * (a - (yi - mi))
                }
                Family::NegBin { tau } => {
                    let a = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                    let b = (yi + tau) * ((yi + tau) / (mi + tau)).ln();
                    2.0 * (a - b)
                }
            };
        }
        d
    }
}

/// Thin-plate radial kernel r^2 log r (0 at r = 0 by continuity).
pub fn tps_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Low-rank thin-plate basis on a fixed knot set.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    pub knots: Vec<Point>,
    /// K x (K-3) orthonormal basis of the affine side-condition null space.
    z: DMatrix<f64>,
    /// (K-3) x (K-3) projected bending-energy penalty (PSD).
    pub penalty: DMatrix<f64>,
}

impl SplineBasis {
    /// Build the basis; errors when the knots are collinear (the affine
    /// conditions then drop rank).
    pub fn new(knots: Vec<Point>) -> Result<Self> {
        let k = knots.len();
        if k < 4 {
            return Err(Error::InvalidInput(format!(
                "need at least 4 knots for a rank-{} radial smooth",
                k.max(1) - 3
            )));
        }
        let mut t = DMatrix::zeros(k, 3);
        for (i, p) in knots.iter().enumerate() {
            t[(i, 0)] = 1.0;
            t[(i, 1)] = p.x;
            t[(i, 2)] = p.y;
        }
        let z = null_space_basis(&t)?;
        let mut e = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                e[(i, j)] = tps_kernel(knots[i].dist(knots[j]));
            }
        }
        let penalty = {
            let p = z.transpose() * &e * &z;
            // symmetrize away product roundoff
            (&p + p.transpose()) * 0.5
        };
        Ok(SplineBasis { knots, z, penalty })
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    /// Projected radial columns at arbitrary points: R(points) Z.
    pub fn columns_at(&self, points: &[Point]) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(points.len(), self.knots.len());
        for (i, p) in points.iter().enumerate() {
            for (j, knot) in self.knots.iter().enumerate() {
                r[(i, j)] = tps_kernel(p.dist(*knot));
            }
        }
        r * &self.z
    }
}

/// Orthonormal basis of the null space of t^T (t is K x 3, full rank).
fn null_space_basis(t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = t.nrows();
    // orthonormalize the columns of t
    let mut u: Vec<DVector<f64>> = Vec::with_capacity(3);
    for c in 0..t.ncols() {
        let mut v = t.column(c).into_owned();
        for basis in &u {
            let proj = basis.dot(&v);
            v -= basis * proj;
        }
        let norm = v.norm();
        if norm < 1e-10 * (k as f64).sqrt() {
            return Err(Error::Degenerate(
                "collinear knots: affine side conditions are rank deficient".into(),
            ));
        }
        u.push(v / norm);
    }
    // complete to a basis: project coordinate vectors, keep the independent ones
    let mut z_cols: Vec<DVector<f64>> = Vec::with_capacity(k - 3);
    for i in 0..k {
        if z_cols.len() == k - 3 {
            break;
        }
        let mut v = DVector::zeros(k);
        v[i] = 1.0;
        for _ in 0..2 {
            for basis in &u {
                let proj = basis.dot(&v);
                v -= basis * proj;
            }
            for basis in &z_cols {
                let proj = basis.dot(&v);
                v -= basis * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            z_cols.push(v / norm);
        }
    }
    if z_cols.len() != k - 3 {
        return Err(Error::Degenerate(
            "failed to complete the affine null-space basis".into(),
        ));
    }
    Ok(DMatrix::from_columns(&z_cols))
}

/// Build the design and penalty for a radial smooth plus affine columns:
/// columns = [projected radial | 1, x, y], penalty zero on the affine block.
pub fn build_basis(knots: Vec<Point>, points: &[Point]) -> Result<(SplineBasis, DMatrix<f64>, DMatrix<f64>)> {
    let basis = SplineBasis::new(knots)?;
    let rad = basis.columns_at(points);
    let n = points.len();
    let q = basis.rank();
    let mut design = DMatrix::zeros(n, q + 3);
    design.view_mut((0, 0), (n, q)).copy_from(&rad);
    for (i, p) in points.iter().enumerate() {
        design[(i, q)] = 1.0;
        design[(i, q + 1)] = p.x;
        design[(i, q + 2)] = p.y;
    }
    let mut penalty = DMatrix::zeros(q + 3, q + 3);
    penalty.view_mut((0, 0), (q, q)).copy_from(&basis.penalty);
    Ok((basis, design, penalty))
}

/// Deterministic farthest-point knot selection. The first knot is the point
/// closest to the centroid; each next knot maximizes the minimum distance to
/// the chosen set (ties broken by index).
pub fn select_knots(points: &[Point], k: usize) -> Vec<Point> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let cx = points.iter().map(|p| p.x).sum::<f64>() / points.len() as f64;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / points.len() as f64;
    let centroid = Point::new(cx, cy);
    let mut chosen_idx = vec![0usize];
    for (i, p) in points.iter().enumerate() {
        if p.dist(centroid) < points[chosen_idx[0]].dist(centroid) {
            chosen_idx[0] = i;
        }
    }
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| p.dist(points[chosen_idx[0]]))
        .collect();
    while chosen_idx.len() < k.min(points.len()) {
        let mut best = 0;
        for i in 1..points.len() {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        if min_dist[best] <= 1e-12 {
            break; // only duplicates left
        }
        chosen_idx.push(best);
        for i in 0..points.len() {
            min_dist[i] = min_dist[i].min(points[i].dist(points[best]));
        }
    }
    chosen_idx.into_iter().map(|i| points[i]).collect()
}

/// Fitted penalized count regression.
#[derive(Debug, Clone)]
pub struct GamFit {
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub edf: f64,
    pub lambda: f64,
    pub family: Family,
    pub deviance: f64,
    /// Penalized deviance per iteration (monotone non-increasing).
    pub deviance_trace: Vec<f64>,
}

impl GamFit {
    pub fn fitted_means(&self, x: &DMatrix<f64>, offset: &[f64]) -> Vec<f64> {
        let eta = x * &self.coefficients;
        eta.iter()
            .zip(offset)
            .map(|(e, o)| (e + o).exp())
            .collect()
    }
}

/// Penalized iteratively reweighted least squares for a log-link count model
/// with fixed offsets (log exposures).
pub fn fit_pirls(
    y: &[f64],
    x: &DMatrix<f64>,
    offset: &[f64],
    family: Family,
    lambda: f64,
    max_iter: usize,
) -> Result<GamFit> {
    let n = y.len();
    let p = x.ncols();
    assert_eq!(x.nrows(), n);
    assert_eq!(offset.len(), n);
    fit_pirls_with_penalty(y, x, offset, family, lambda, &DMatrix::zeros(p, p), max_iter)
}

pub fn fit_pirls_with_penalty(
    y: &[f64],
    x: &DMatrix<f64>,
    offset: &[f64],
    family: Family,
    lambda: f64,
    penalty: &DMatrix<f64>,
    max_iter: usize,
) -> Result<GamFit> {
    let n = y.len();
    let p = x.ncols();
    if y.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("negative or non-finite response".into()));
    }
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite offset".into()));
    }

    let pen_dev = |beta: &DVector<f64>, mu: &[f64]| -> f64 {
        family.deviance(y, mu) + lambda * (penalty * beta).dot(beta)
    };
    let weighted_system = |eta: &DVector<f64>, mu: &[f64]| -> (DMatrix<f64>, DVector<f64>) {
        let mut a = lambda * penalty;
        let mut b = DVector::zeros(p);
        for i in 0..n {
            let wi = family.fisher_weight(mu[i]);
            // working response z = eta + (y - mu)/mu for the log link
            let zi = eta[i] + (y[i] - mu[i]) / mu[i];
            let row = x.row(i);
            for r in 0..p {
                b[r] += wi * row[r] * zi;
                for c in 0..p {
                    a[(r, c)] += wi * row[r] * row[c];
                }
            }
        }
        (a, b)
    };
    let check = |beta: &DVector<f64>| -> Result<()> {
        if beta.iter().any(|v| !v.is_finite()) || beta.amax() > 1e10 {
            return Err(Error::Diverged(
                "coefficients blew up (possible separation)".into(),
            ));
        }
        Ok(())
    };

    // first solve from the mu = y + 0.5 initialization is accepted as-is;
    // it establishes a consistent (beta, eta, mu) state for the line search
    let eta0 = DVector::from_iterator(
        n,
        y.iter().zip(offset).map(|(&yi, &o)| (yi + 0.5).ln() - o),
    );
    let mu0: Vec<f64> = y.iter().map(|&yi| yi + 0.5).collect();
    let (a, b) = weighted_system(&eta0, &mu0);
    let mut beta = solve_spd(&a, &b)?;
    check(&beta)?;
    let mut eta = x * &beta;
    let mut mu: Vec<f64> = eta
        .iter()
        .zip(offset)
        .map(|(e, o)| (e + o).exp())
        .collect();
    let mut obj = pen_dev(&beta, &mu);
    if !obj.is_finite() {
        return Err(Error::Diverged("non-finite deviance at initialization".into()));
    }
    let mut trace = vec![obj];
    let mut converged = false;
    let mut small_steps = 0usize;

    for _ in 0..max_iter {
        let (a, b) = weighted_system(&eta, &mu);
        let beta_new = solve_spd(&a, &b)?;
        check(&beta_new)?;

        // step halving to keep the penalized deviance non-increasing
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: DVector<f64> = &beta + (&beta_new - &beta) * step;
            let eta_c = x * &cand;
            let mu_c: Vec<f64> = eta_c
                .iter()
                .zip(offset)
                .map(|(e, o)| (e + o).exp())
                .collect();
            if mu_c.iter().all(|m| m.is_finite() && *m > 0.0) {
                let obj_c = pen_dev(&cand, &mu_c);
                if obj_c.is_finite() && obj_c <= obj + 1e-12 * (1.0 + obj.abs()) {
                    beta = cand;
                    eta = eta_c;
                    mu = mu_c;
                    let rel = (obj - obj_c).abs() / (obj_c.abs() + 0.1);
                    obj = obj_c;
                    trace.push(obj);
                    accepted = true;
                    // IRLS converges quadratically: ask for two consecutive
                    // small deviance changes so coefficients settle too
                    if rel <= 1e-9 {
                        small_steps += 1;
                        if small_steps >= 2 {
                            converged = true;
                        }
                    } else {
                        small_steps = 0;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true; // no improving step left: at the optimum
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(max_iter));
    }

    // information and covariance at convergence
    let w: Vec<f64> = mu.iter().map(|&m| family.fisher_weight(m)).collect();
    let mut xtwx = DMatrix::zeros(p, p);
    for i in 0..n {
        let wi = w[i];
        let row = x.row(i);
        for r in 0..p {
            for c in 0..p {
                xtwx[(r, c)] += wi * row[r] * row[c];
            }
        }
    }
    let a = &xtwx + lambda * penalty;
    let a_inv = invert_spd(&a)?;
    let edf = (&a_inv * &xtwx).trace();
    Ok(GamFit {
        coefficients: beta,
        covariance: a_inv,
        edf,
        lambda,
        family,
        deviance: family.deviance(y, &mu),
        deviance_trace: trace,
    })
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let mut jitter = 0.0;
    let scale = a.trace().abs() / a.nrows() as f64;
    for _ in 0..8 {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok(ch.solve(b));
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
    }
    Err(Error::Singular)
}

fn invert_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut jitter = 0.0;
    let scale = a.trace().abs() / a.nrows() as f64;
    for _ in 0..8 {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok(ch.inverse());
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
    }
    Err(Error::Singular)
}

/// GCV(lambda) = n D(lambda) / (n - edf(lambda))^2, minimized over a
/// log-spaced grid and refined by golden-section around the grid minimum.
pub fn select_smoothing(
    y: &[f64],
    x: &DMatrix<f64>,
    offset: &[f64],
    family: Family,
    penalty: &DMatrix<f64>,
    max_iter: usize,
) -> Result<f64> {
    let n = y.len() as f64;
    let gcv = |lambda: f64| -> Option<f64> {
        let fit = fit_pirls_with_penalty(y, x, offset, family, lambda, penalty, max_iter).ok()?;
        let denom = n - fit.edf;
        if denom <= 0.0 {
            return None; // guard division by zero at edf = n
        }
        Some(n * fit.deviance / (denom * denom))
    };
    let grid: Vec<f64> = (0..29).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in grid.iter().enumerate() {
        if let Some(g) = gcv(l) {
            if best.map(|(_, bg)| g < bg).unwrap_or(true) {
                best = Some((i, g));
            }
        }
    }
    let Some((i_min, _)) = best else {
        return Err(Error::Diverged(
            "no smoothing parameter produced a convergent fit".into(),
        ));
    };
    // golden-section refinement on log10 lambda between the neighbors
    let lo = (-6.0 + 0.5 * i_min.saturating_sub(1) as f64).max(-6.0);
    let hi = (-6.0 + 0.5 * (i_min + 1) as f64).min(8.0);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let eval = |u: f64| gcv(10f64.powf(u)).unwrap_or(f64::INFINITY);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..40 {
        if fc < fd {
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
    Ok(10f64.powf(0.5 * (a + b)))
}

/// Negative-binomial profile log-likelihood in tau for fixed means.
pub fn nb_profile_loglik(y: &[f64], mu: &[f64], tau: f64) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &mi)| {
            ln_gamma(yi + tau) - ln_gamma(tau) - ln_gamma(yi + 1.0) - tau * (mi / tau).ln_1p()
                + yi * (mi.ln() - (tau + mi).ln())
        })
        .sum()
}

/// Maximum-likelihood shape parameter by safeguarded 1-d Newton on log tau,
/// capped at 1e8 (the Poisson limit handles equi- and under-dispersion).
///
/// The Newton search runs on tau in [1e-8, 1e6]; beyond that the digamma
/// differences in the score cancel below float noise, so the cap decision is
/// made by comparing profile log-likelihood values instead.
pub fn estimate_nb_shape(y: &[f64], mu: &[f64]) -> f64 {
    assert_eq!(y.len(), mu.len());
    const SEARCH_HI: f64 = 1e6;
    let dldtau = |tau: f64| -> f64 {
        y.iter()
            .zip(mu)
            .map(|(&yi, &mi)| {
                digamma(yi + tau) - digamma(tau) - (mi / tau).ln_1p() + (mi - yi) / (mi + tau)
            })
            .sum()
    };
    // moment start: tau = mean^2 / (var - mean)
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let s2 = y.iter().map(|&v| (v - ybar) * (v - ybar)).sum::<f64>() / n.max(1.0);
    let mut u = if s2 > ybar && ybar > 0.0 {
        (ybar * ybar / (s2 - ybar)).clamp(1e-6, SEARCH_HI).ln()
    } else {
        1.0f64.ln()
    };
    let (mut lo, mut hi) = (1e-8f64.ln(), SEARCH_HI.ln());
    for _ in 0..200 {
        let tau = u.exp();
        let g = tau * dldtau(tau); // d loglik / d log tau
        if g > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        // Newton step with finite-difference curvature, bisection fallback
        let h = 1e-4;
        let gp = (u + h).exp() * dldtau((u + h).exp());
        let gm = (u - h).exp() * dldtau((u - h).exp());
        let curv = (gp - gm) / (2.0 * h);
        let mut next = if curv < 0.0 { u - g / curv } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-12 {
            u = next;
            break;
        }
        u = next;
    }
    let tau_hat = u.exp();
    let ll_hat = nb_profile_loglik(y, mu, tau_hat);
    let ll_cap = nb_profile_loglik(y, mu, NB_SHAPE_CAP);
    if ll_cap >= ll_hat - 1e-8 * (1.0 + ll_hat.abs()) {
        NB_SHAPE_CAP
    } else {
        tau_hat
    }
}

/// Count family selector for survey-level fits (the NegBin shape is
/// estimated by profile maximum likelihood).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GamFamily {
    Poisson,
    NegBin,
}

/// Survey-level GAM configuration.
#[derive(Debug, Clone)]
pub struct GamConfig {
    /// Knots chosen by farthest-point sampling from the photo centers.
    pub n_knots: usize,
    /// Fixed smoothing parameter; `None` selects by GCV.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    /// Alternations between shape estimation and refitting (NegBin).
    pub nb_outer_iter: usize,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            n_knots: 30,
            lambda: None,
            max_iter: 300,
            nb_outer_iter: 5,
        }
    }
}

/// Design rows for the count regression: intercept, optional ice covariate,
/// s1, s2, radial distance, then the projected radial smooth columns.
pub fn gam_design(
    basis: &SplineBasis,
    points: &[Point],
    raster: Option<&crate::survey::CovariateRaster>,
) -> DMatrix<f64> {
    let n = points.len();
    let n_fixed = if raster.is_some() { 5 } else { 4 };
    let rad = basis.columns_at(points);
    let mut x = DMatrix::zeros(n, n_fixed + rad.ncols());
    for (i, p) in points.iter().enumerate() {
        let mut c = 0;
        x[(i, c)] = 1.0;
        c += 1;
        if let Some(r) = raster {
            x[(i, c)] = r.covariate_at_clamped(*p);
            c += 1;
        }
        x[(i, c)] = p.x;
        x[(i, c + 1)] = p.y;
        x[(i, c + 2)] = p.norm();
    }
    x.view_mut((0, n_fixed), (n, rad.ncols())).copy_from(&rad);
    x
}

fn padded_penalty(basis: &SplineBasis, n_fixed: usize) -> DMatrix<f64> {
    let q = basis.rank();
    let p = n_fixed + q;
    let mut penalty = DMatrix::zeros(p, p);
    penalty
        .view_mut((n_fixed, n_fixed), (q, q))
        .copy_from(&basis.penalty);
    penalty
}

/// A fitted survey-level GAM: spline basis, coefficients, and (for the
/// negative binomial) the estimated shape.
pub struct GamModel {
    pub basis: SplineBasis,
    pub fit: GamFit,
    pub family: GamFamily,
    pub tau: Option<f64>,
    has_covariate: bool,
}

impl GamModel {
    pub fn design_at(
        &self,
        points: &[Point],
        raster: Option<&crate::survey::CovariateRaster>,
    ) -> Result<DMatrix<f64>> {
        if self.has_covariate != raster.is_some() {
            return Err(Error::InvalidInput(
                "raster presence must match the fitted design".into(),
            ));
        }
        Ok(gam_design(&self.basis, points, raster))
    }

    /// Per-draw Poisson/NegBin means at points: mu_kj = area_j exp(x_j theta_k).
    pub fn mu_draws(
        &self,
        points: &[Point],
        areas: &[f64],
        raster: Option<&crate::survey::CovariateRaster>,
        k: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let x = self.design_at(points, raster)?;
        let thetas = sample_params(&self.fit, k, seed);
        Ok(thetas
            .iter()
            .map(|t| {
                let eta = &x * t;
                eta.iter()
                    .zip(areas)
                    .map(|(e, a)| e.exp() * a)
                    .collect()
            })
            .collect())
    }

    /// Fit summary dump: coefficients, standard errors, edf, lambda, tau.
    pub fn write_summary(&self, mut w: impl std::io::Write) -> Result<()> {
        let names: Vec<String> = {
            let mut v = vec!["intercept".to_string()];
            if self.has_covariate {
                v.push("ice_q".into());
            }
            v.extend(["s1".into(), "s2".into(), "radial".into()]);
            let base = v.len();
            v.extend((0..self.fit.coefficients.len() - base).map(|i| format!("spline{i}")));
            v
        };
        for (i, name) in names.iter().enumerate() {
            writeln!(
                w,
                "coef {name} {} se {}",
                self.fit.coefficients[i],
                self.fit.covariance[(i, i)].max(0.0).sqrt()
            )?;
        }
        writeln!(w, "edf {}", self.fit.edf)?;
        writeln!(w, "lambda {}", self.fit.lambda)?;
        if let Some(tau) = self.tau {
            writeln!(w, "tau {tau}")?;
        }
        Ok(())
    }
}

/// Fit the penalized count regression to a survey: knot selection, GCV
/// smoothing, and (for the negative binomial) alternating shape estimation.
pub fn fit_gam_survey(
    survey: &crate::survey::Survey,
    raster: Option<&crate::survey::CovariateRaster>,
    species: &str,
    family: GamFamily,
    config: &GamConfig,
) -> Result<GamModel> {
    let photos = survey.photos();
    if photos.len() < 8 {
        return Err(Error::InvalidInput(
            "too few photos for a spline regression".into(),
        ));
    }
    let centers: Vec<Point> = photos.iter().map(|p| p.center).collect();
    let y: Vec<f64> = photos
        .iter()
        .map(|p| p.count(species).map(|c| c as f64))
        .collect::<Result<_>>()?;
    let offset: Vec<f64> = photos.iter().map(|p| p.area().ln()).collect();
    let knots = select_knots(&centers, config.n_knots);
    let basis = SplineBasis::new(knots)?;
    let x = gam_design(&basis, &centers, raster);
    let n_fixed = if raster.is_some() { 5 } else { 4 };
    let penalty = padded_penalty(&basis, n_fixed);

    let select = |fam: Family| -> Result<f64> {
        match config.lambda {
            Some(l) => Ok(l),
            None => select_smoothing(&y, &x, &offset, fam, &penalty, config.max_iter),
        }
    };

    match family {
        GamFamily::Poisson => {
            let lambda = select(Family::Poisson)?;
            let fit = fit_pirls_with_penalty(
                &y,
                &x,
                &offset,
                Family::Poisson,
                lambda,
                &penalty,
                config.max_iter,
            )?;
            Ok(GamModel {
                basis,
                fit,
                family,
                tau: None,
                has_covariate: raster.is_some(),
            })
        }
        GamFamily::NegBin => {
            // shape from a Poisson pilot fit, then alternate
            let lambda0 = select(Family::Poisson)?;
            let pilot = fit_pirls_with_penalty(
                &y,
                &x,
                &offset,
                Family::Poisson,
                lambda0,
                &penalty,
                config.max_iter,
            )?;
            let mut tau = estimate_nb_shape(&y, &pilot.fitted_means(&x, &offset));
            let lambda = match config.lambda {
                Some(l) => l,
                None => select_smoothing(
                    &y,
                    &x,
                    &offset,
                    Family::NegBin { tau },
                    &penalty,
                    config.max_iter,
                )?,
            };
            let mut fit = fit_pirls_with_penalty(
                &y,
                &x,
                &offset,
                Family::NegBin { tau },
                lambda,
                &penalty,
                config.max_iter,
            )?;
            for _ in 0..config.nb_outer_iter {
                let new_tau = estimate_nb_shape(&y, &fit.fitted_means(&x, &offset));
                let done = (new_tau - tau).abs() <= 1e-4 * (1.0 + tau);
                tau = new_tau;
                fit = fit_pirls_with_penalty(
                    &y,
                    &x,
                    &offset,
                    Family::NegBin { tau },
                    lambda,
                    &penalty,
                    config.max_iter,
                )?;
                if done {
                    break;
                }
            }
            Ok(GamModel {
                basis,
                fit,
                family,
                tau: Some(tau),
                has_covariate: raster.is_some(),
            })
        }
    }
}

/// K draws from N(theta_hat, Cov(theta_hat)).
pub fn sample_params(fit: &GamFit, k: usize, seed: u64) -> Vec<DVector<f64>> {
    let p = fit.coefficients.len();
    let scale = fit.covariance.trace().abs();
    if scale == 0.0 {
        return vec![fit.coefficients.clone(); k];
    }
    let mut cov = fit.covariance.clone();
    let mut chol = Cholesky::new(cov.clone());
    let mut jitter = 1e-12 * scale / p as f64;
    while chol.is_none() && jitter < 1e-4 * scale {
        cov = fit.covariance.clone();
        for i in 0..p {
            cov[(i, i)] += jitter;
        }
        chol = Cholesky::new(cov);
        jitter *= 10.0;
    }
    let l = chol.expect("covariance not factorizable").l();
    (0..k)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let u = DVector::from_vec(standard_normals(&mut rng, p));
            &fit.coefficients + &l * u
        })
        .collect()
}
