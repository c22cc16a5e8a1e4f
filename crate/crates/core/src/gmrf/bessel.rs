//! Modified Bessel function of the second kind, K_nu(x), for real order
//! nu >= 0 and x > 0.
//!
//! Order is reduced to mu in [-1/2, 1/2]; K_mu and K_{mu+1} come from
//! Temme's series for x <= 2 and from Steed's continued fraction (CF2) for
//! x > 2, followed by the upward recurrence
//! K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x).

use statrs::function::gamma::gamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 300;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// K_nu(x). Symmetric in the order (K_{-nu} = K_nu); returns +inf for x = 0
/// and NaN for negative arguments.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64; // in [-0.5, 0.5]

    let (kmu, kmu1) = if x <= 2.0 {
        temme_series(mu, x)
    } else {
        steed_cf2(mu, x)
    };

    if nl == 0 {
        return kmu;
    }
    let mut km = kmu;
    let mut k = kmu1;
    for i in 1..nl {
        let knext = km + 2.0 * (mu + i as f64) / x * k;
        km = k;
        k = knext;
    }
    k
}

/// (K_mu, K_{mu+1}) for |mu| <= 1/2 and 0 < x <= 2.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x1 = 0.5 * x;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < 1e-15 {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x1.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-15 { 1.0 } else { e.sinh() / e };
    // gampl = 1/Gamma(1+mu), gammi = 1/Gamma(1-mu)
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    // gam1 = (gammi - gampl)/(2 mu) cancels badly near mu = 0; switch to its
    // series -euler_gamma + 0.0420026635 mu^2 there
    let gam1 = if mu.abs() < 1e-3 {
        -EULER_GAMMA + 0.042002663540257294 * mu * mu
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    let gam2 = 0.5 * (gammi + gampl);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let d2 = x1 * x1;
    let mut sum1 = p;
    for i in 1..=MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// (K_mu, K_{mu+1}) for |mu| <= 1/2 and x > 2 via Steed's continued fraction.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let kmu = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let kmu1 = kmu * (mu + x + 0.5 - h) / x;
    (kmu, kmu1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn integer_orders_reference_values() {
        assert!(rel(bessel_k(0.0, 1.0), 0.42102443824070834) < 1e-10);
        assert!(rel(bessel_k(1.0, 1.0), 0.6019072301972346) < 1e-10);
        assert!(rel(bessel_k(2.0, 1.0), 1.6248388986351774) < 1e-10);
        assert!(rel(bessel_k(1.0, 5.0), 0.004044613445452164) < 1e-10);
        assert!(rel(bessel_k(3.2, 14.0), 3.9274754303992675e-07) < 1e-9);
    }

    #[test]
    fn fractional_orders_reference_values() {
        assert!(rel(bessel_k(0.3, 0.7), 0.6895624897569778) < 1e-10);
        assert!(rel(bessel_k(1.7, 2.3), 0.13315500387781512) < 1e-10);
        assert!(rel(bessel_k(2.5, 0.05), 6723.188669642362) < 1e-9);
    }

    #[test]
    fn half_order_closed_form() {
        // K_{1/2}(x) = sqrt(pi/(2x)) exp(-x)
        for x in [0.1, 0.5, 1.0, 2.0, 3.7, 10.0] {
            let closed = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x as f64).exp();
            assert!(rel(bessel_k(0.5, x), closed) < 1e-12, "x={x}");
        }
    }

    #[test]
    fn recurrence_consistency() {
        // K_{v+1} = K_{v-1} + (2v/x) K_v across the series/CF2 boundary
        for x in [0.5, 1.9, 2.0, 2.1, 6.0] {
            for v in [0.7, 1.0, 1.3] {
                let lhs = bessel_k(v + 1.0, x);
                let rhs = bessel_k(v - 1.0, x) + 2.0 * v / x * bessel_k(v, x);
                assert!(rel(lhs, rhs) < 1e-9, "v={v} x={x}");
            }
        }
    }

    #[test]
    fn edge_arguments() {
        assert!(bessel_k(1.0, 0.0).is_infinite());
        assert!(bessel_k(1.0, -1.0).is_nan());
        assert!((bessel_k(-0.3, 0.7) - bessel_k(0.3, 0.7)).abs() < 1e-15);
        assert_eq!(bessel_k(1.0, 800.0), 0.0); // underflow to zero
    }
}
