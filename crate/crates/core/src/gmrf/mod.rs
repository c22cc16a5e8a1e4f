//! Matern covariance, SPDE precision assembly, and constrained Gaussian
//! Markov random field sampling.
//!
//! The latent field uses the alpha = 2 stochastic-PDE discretization on a
//! triangular mesh: with a diagonal (lumped) mass matrix C and stiffness G,
//! the precision of the node weights is
//!
//! `Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)`
//!
//! which corresponds to a Matern field with smoothness nu = 1 in two
//! dimensions and marginal variance sigma^2 = 1/(4 pi kappa^2 tau^2).

pub mod bessel;
pub mod sparse;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mesh::FemMatrices;
pub use sparse::{CholFactor, SparseSpd};

/// SPDE hyperparameters on the log scale: theta_1 = log tau, theta_2 = log kappa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub log_tau: f64,
    pub log_kappa: f64,
}

impl Hyper {
    pub fn new(log_tau: f64, log_kappa: f64) -> Self {
        Hyper { log_tau, log_kappa }
    }

    /// Parameterize by the Matern scale and marginal variance using
    /// sigma^2 = 1/(4 pi kappa^2 tau^2).
    pub fn from_kappa_sigma2(kappa: f64, sigma2: f64) -> Self {
        let tau = 1.0 / (4.0 * std::f64::consts::PI * kappa * kappa * sigma2).sqrt();
        Hyper {
            log_tau: tau.ln(),
            log_kappa: kappa.ln(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn kappa(&self) -> f64 {
        self.log_kappa.exp()
    }

    pub fn sigma2(&self) -> f64 {
        let k = self.kappa();
        let t = self.tau();
        1.0 / (4.0 * std::f64::consts::PI * k * k * t * t)
    }

    /// Distance at which the spatial correlation drops to roughly 0.1
    /// (sqrt(8)/kappa for nu = 1).
    pub fn range(&self) -> f64 {
        8f64.sqrt() / self.kappa()
    }
}

/// Matern covariance
/// `sigma2 / (2^{nu-1} Gamma(nu)) * (kappa r)^nu * K_nu(kappa r)`,
/// with the limiting value sigma2 at r = 0.
pub fn matern_cov(r: f64, sigma2: f64, kappa: f64, nu: f64) -> f64 {
    debug_assert!(r >= 0.0 && sigma2 > 0.0 && kappa > 0.0 && nu > 0.0);
    if r == 0.0 {
        return sigma2;
    }
    let kr = kappa * r;
    // log-scale to dodge overflow of Gamma and underflow of K for large nu/kr
    let log_c = (nu - 1.0) * std::f64::consts::LN_2 + ln_gamma(nu);
    let k = bessel::bessel_k(nu, kr);
    if k == 0.0 {
        return 0.0;
    }
    sigma2 * (nu * kr.ln() - log_c + k.ln()).exp()
}

/// Assemble the alpha = 2 SPDE precision from FEM matrices.
pub fn assemble_precision(fem: &FemMatrices, hyper: &Hyper) -> Result<SparseSpd> {
    assemble_precision_raw(fem, hyper.kappa(), hyper.tau())
}

/// Same assembly with kappa and tau passed directly; Q scales exactly as
/// tau^2 times a kappa-dependent operator.
pub fn assemble_precision_raw(fem: &FemMatrices, kappa: f64, tau: f64) -> Result<SparseSpd> {
    let kappa2 = kappa * kappa;
    let tau2 = tau * tau;
    let inv_c: Vec<f64> = fem.c.iter().map(|&c| 1.0 / c).collect();
    // G C^{-1} G
    let gcg = fem.g.mul_sparse(&fem.g.scale_rows(&inv_c))?;
    let k4c = SparseSpd::from_diag(&fem.c.iter().map(|&c| kappa2 * kappa2 * c).collect::<Vec<_>>());
    let sum = k4c.add(&fem.g.scale(2.0 * kappa2))?.add(&gcg)?;
    Ok(sum.scale(tau2))
}

/// Zero-target linear constraint a^T x = 0.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidInput(
                "constraint coefficients are all zero".into(),
            ));
        }
        Ok(LinearConstraint { coeffs })
    }
}

/// Conditioning-by-kriging correction data for a factorized precision.
#[derive(Debug, Clone)]
pub struct ConstraintCorrection {
    qinv_a: Vec<f64>,
    denom: f64, // a^T Q^{-1} a
    coeffs: Vec<f64>,
}

impl ConstraintCorrection {
    pub fn new(factor: &CholFactor, constraint: &LinearConstraint) -> Result<Self> {
        if constraint.coeffs.len() != factor.dim() {
            return Err(Error::InvalidInput(format!(
                "constraint dimension {} does not match matrix dimension {}",
                constraint.coeffs.len(),
                factor.dim()
            )));
        }
        let qinv_a = factor.solve(&constraint.coeffs);
        let denom: f64 = qinv_a
            .iter()
            .zip(&constraint.coeffs)
            .map(|(a, b)| a * b)
            .sum();
        if !(denom > 0.0) {
            return Err(Error::Diverged(
                "constraint normal equation is not positive".into(),
            ));
        }
        Ok(ConstraintCorrection {
            qinv_a,
            denom,
            coeffs: constraint.coeffs.clone(),
        })
    }

    /// x <- x - Q^{-1} a (a^T Q^{-1} a)^{-1} (a^T x).
    pub fn apply(&self, x: &mut [f64]) {
        let ax: f64 = self.coeffs.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        let s = ax / self.denom;
        for (xi, qi) in x.iter_mut().zip(&self.qinv_a) {
            *xi -= s * qi;
        }
    }
}

/// Per-draw RNG stream: every sample index gets an independent ChaCha stream
/// derived from the master seed, so results do not depend on scheduling.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Deterministic sub-seed for task `index` (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Draw iid standard normals from an RNG.
pub fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

/// Draw `n` exact samples from N(mean, Q^{-1}), optionally corrected by
/// conditioning-by-kriging so that every draw satisfies a^T x = 0.
pub fn sample_gmrf(
    q: &SparseSpd,
    mean: &[f64],
    n: usize,
    constraint: Option<&LinearConstraint>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let factor = q.factorize()?;
    let correction = constraint
        .map(|c| ConstraintCorrection::new(&factor, c))
        .transpose()?;
    let dim = factor.dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, i as u64);
        let u = standard_normals(&mut rng, dim);
        let mut x = factor.sample_zero_mean(&u);
        for (xi, m) in x.iter_mut().zip(mean) {
            *xi += m;
        }
        if let Some(corr) = &correction {
            corr.apply(&mut x);
        }
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn matern_at_zero_is_sigma2() {
        for (s2, k, nu) in [(1.0, 1.0, 1.0), (2.5, 0.3, 2.0), (0.2, 4.0, 0.5)] {
            assert_eq!(matern_cov(0.0, s2, k, nu), s2);
        }
    }

    #[test]
    fn matern_exponential_special_case() {
        // nu = 1/2: C(r) = sigma2 exp(-kappa r)
        let v = matern_cov(1.0, 2.0, 1.0, 0.5);
        assert!(rel(v, 2.0 * (-1.0f64).exp()) < 1e-12);
        for r in [0.1, 0.5, 2.0] {
            let v = matern_cov(r, 1.7, 0.8, 0.5);
            assert!(rel(v, 1.7 * (-0.8 * r).exp()) < 1e-12, "r={r}");
        }
    }

    #[test]
    fn matern_nu_one_bessel_value() {
        // nu=1, sigma2=1, kappa=2, r=0.5 -> (kr) K_1(kr) with kr=1
        let v = matern_cov(0.5, 1.0, 2.0, 1.0);
        assert!(rel(v, 0.6019072301972346) < 1e-10);
    }

    #[test]
    fn matern_decreasing_in_r() {
        let mut prev = matern_cov(0.0, 1.0, 1.5, 1.0);
        for i in 1..40 {
            let v = matern_cov(i as f64 * 0.25, 1.0, 1.5, 1.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn hyper_roundtrip_and_range() {
        let h = Hyper::from_kappa_sigma2(1.5, 1.0);
        assert!(rel(h.kappa(), 1.5) < 1e-14);
        assert!(rel(h.sigma2(), 1.0) < 1e-14);
        assert!(rel(h.range(), 8f64.sqrt() / 1.5) < 1e-14);
    }

    #[test]
    fn precision_single_isolated_node() {
        // G = 0, mass c: Q = tau^2 kappa^4 c
        let fem = FemMatrices {
            c: vec![2.0],
            g: SparseSpd::from_triplets(1, &[(0, 0, 0.0)]).unwrap(),
        };
        let h = Hyper::new(0.3f64.ln(), 1.7f64.ln());
        let q = assemble_precision(&fem, &h).unwrap();
        let expect = 0.3f64.powi(2) * 1.7f64.powi(4) * 2.0;
        assert!(rel(q.get(0, 0), expect) < 1e-14);
    }

    #[test]
    fn precision_symmetric_and_tau_scaling() {
        // small 1-D chain FEM stand-in: C mass, G second-difference
        let c = vec![0.5, 1.0, 1.0, 0.5];
        let mut g_entries = Vec::new();
        for i in 0..3 {
            g_entries.push((i, i, 1.0));
            g_entries.push((i + 1, i + 1, 1.0));
            g_entries.push((i, i + 1, -1.0));
            g_entries.push((i + 1, i, -1.0));
        }
        let fem = FemMatrices {
            c,
            g: SparseSpd::from_triplets(4, &g_entries).unwrap(),
        };
        let h = Hyper::new(0.1, -0.4);
        let q = assemble_precision(&fem, &h).unwrap();
        assert!(q.symmetry_error() < 1e-10);

        // Q(c tau) = c^2 Q(tau), bit-exact for a power-of-two factor
        let (kappa, tau) = (h.kappa(), h.tau());
        let q1 = assemble_precision_raw(&fem, kappa, tau).unwrap();
        let q2 = assemble_precision_raw(&fem, kappa, 2.0 * tau).unwrap();
        for j in 0..4 {
            let col: Vec<(usize, f64)> = q1.column(j).collect();
            let col2: Vec<(usize, f64)> = q2.column(j).collect();
            for ((i1, v1), (i2, v2)) in col.iter().zip(&col2) {
                assert_eq!(i1, i2);
                assert_eq!(4.0 * v1, *v2, "entry ({i1},{j})");
            }
        }
        // and through the log-scale Hyper within float roundoff
        let h2 = Hyper::new(0.1 + std::f64::consts::LN_2, -0.4);
        let qh2 = assemble_precision(&fem, &h2).unwrap();
        for j in 0..4 {
            for ((_, v1), (_, v2)) in q.column(j).zip(qh2.column(j)) {
                assert!((4.0 * v1 - v2).abs() <= 1e-13 * v2.abs());
            }
        }
    }

    #[test]
    fn constrained_sampling_variance() {
        // Q = I_3 with sum-to-zero constraint: per-coordinate variance 2/3
        let q = SparseSpd::from_diag(&[1.0, 1.0, 1.0]);
        let con = LinearConstraint::new(vec![1.0, 1.0, 1.0]).unwrap();
        let n = 100_000;
        let samples = sample_gmrf(&q, &[0.0; 3], n, Some(&con), 99).unwrap();
        let mut var = [0.0f64; 3];
        for s in &samples {
            let sum: f64 = s.iter().sum();
            assert!(sum.abs() < 1e-8, "constraint violated: {sum}");
            for k in 0..3 {
                var[k] += s[k] * s[k];
            }
        }
        for v in var {
            let v = v / n as f64;
            assert!((v - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.05, "variance {v}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let q = SparseSpd::from_diag(&[4.0, 9.0]);
        let a = sample_gmrf(&q, &[1.0, -1.0], 5, None, 7).unwrap();
        let b = sample_gmrf(&q, &[1.0, -1.0], 5, None, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_gmrf(&q, &[1.0, -1.0], 5, None, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn diagonal_sampling_standard_deviations() {
        let q = SparseSpd::from_diag(&[4.0, 9.0]);
        let samples = sample_gmrf(&q, &[0.0, 0.0], 100_000, None, 3).unwrap();
        for (k, target) in [(0usize,  0.5f64), (1usize, 1.0 / 3.0)] {
            let var: f64 =
                samples.iter().map(|s| s[k] * s[k]).sum::<f64>() / samples.len() as f64;
            assert!((var.sqrt() - target).abs() / target < 0.05);
        }
    }

    #[test]
    fn all_zero_constraint_rejected() {
        assert!(LinearConstraint::new(vec![0.0, 0.0]).is_err());
    }
}
