//! Taylor expansions of `sqrt(m/2) K^(-1/2)` (inverse speed) around a
//! reference energy.
//!
//! The optimal-control problem needs inverse speed in three places with
//! three different polynomial degrees: the time cost (quadratic in K), the
//! power limit and closed-powertrain drag (affine in K), and the idle-drag
//! cost (constant). All coefficients carry the `sqrt(m/2)` factor, so each
//! polynomial evaluates directly to seconds per meter.

use thiserror::Error;

/// Per-step expansion coefficients of inverse speed around a reference `K_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCoeffs {
    /// Second-order: `theta0 + theta1 K + theta2 K^2`.
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// First-order: `phi0 + phi1 K`.
    pub phi0: f64,
    pub phi1: f64,
    /// Zeroth-order: the inverse speed at the reference itself.
    pub varphi0: f64,
}

#[derive(Debug, Error)]
#[error("reference kinetic energy must be strictly positive, got {0} J")]
pub struct NonPositiveReference(pub f64);

/// Expands `sqrt(m/2) K^(-1/2)` around `k_r`.
///
/// Second order: `(15/8) r^(-1/2) - (10/8) r^(-3/2) K + (3/8) r^(-5/2) K^2`
/// (times `sqrt(m/2)`), first order `(3/2) r^(-1/2) - (1/2) r^(-3/2) K`,
/// zeroth order `r^(-1/2)`. All three agree at `K = k_r`, where they equal
/// `1/v_r`.
pub fn taylor_coeffs(k_r: f64, m: f64) -> Result<TaylorCoeffs, NonPositiveReference> {
    if !(k_r > 0.0) {
        return Err(NonPositiveReference(k_r));
    }
    let c = (m / 2.0).sqrt();
    let r_m12 = 1.0 / k_r.sqrt();
    let r_m32 = r_m12 / k_r;
    let r_m52 = r_m32 / k_r;
    Ok(TaylorCoeffs {
        theta0: c * 15.0 / 8.0 * r_m12,
        theta1: -c * 10.0 / 8.0 * r_m32,
        theta2: c * 3.0 / 8.0 * r_m52,
        phi0: c * 3.0 / 2.0 * r_m12,
        phi1: -c * 0.5 * r_m32,
        varphi0: c * r_m12,
    })
}

impl TaylorCoeffs {
    /// Second-order inverse speed [s/m] at energy `k`.
    pub fn inv_speed_quad(&self, k: f64) -> f64 {
        self.theta0 + self.theta1 * k + self.theta2 * k * k
    }

    /// First-order inverse speed [s/m] at energy `k`.
    pub fn inv_speed_lin(&self, k: f64) -> f64 {
        self.phi0 + self.phi1 * k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const M: f64 = 26_000.0;

    fn exact_inv_speed(k: f64) -> f64 {
        (M / 2.0).sqrt() / k.sqrt()
    }

    #[test]
    fn all_orders_agree_at_reference() {
        for v in [5.0_f64, 10.0, 15.0, 22.0, 30.0] {
            let k_r = 0.5 * M * v * v;
            let t = taylor_coeffs(k_r, M).unwrap();
            let exact = 1.0 / v;
            assert_relative_eq!(t.inv_speed_quad(k_r), exact, max_relative = 1e-12);
            assert_relative_eq!(t.inv_speed_lin(k_r), exact, max_relative = 1e-12);
            assert_relative_eq!(t.varphi0, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn varphi0_is_inverse_reference_speed() {
        let k_r = 0.5 * M * 15.0 * 15.0;
        let t = taylor_coeffs(k_r, M).unwrap();
        assert_relative_eq!(t.varphi0, 1.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn second_order_error_within_ten_percent_band() {
        let k_r = 0.5 * M * 16.0 * 16.0;
        let t = taylor_coeffs(k_r, M).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=200 {
            let k = k_r * (0.9 + 0.2 * i as f64 / 200.0);
            let rel = (t.inv_speed_quad(k) - exact_inv_speed(k)).abs() / exact_inv_speed(k);
            worst = worst.max(rel);
        }
        assert!(worst < 1.5e-3, "worst relative error {worst}");
    }

    #[test]
    fn derivative_at_reference_matches_finite_difference() {
        let k_r = 2.6e6;
        let t = taylor_coeffs(k_r, M).unwrap();
        let h = k_r * 1e-7;
        let fd = (t.inv_speed_quad(k_r + h) - t.inv_speed_quad(k_r - h)) / (2.0 * h);
        let expected = -0.5 * (M / 2.0).sqrt() * k_r.powf(-1.5);
        assert_relative_eq!(fd, expected, max_relative = 1e-6);
    }

    #[test]
    fn second_order_brackets_exact_by_side() {
        // The cubic remainder term changes sign at the expansion point: the
        // quadratic lies above the exact power law for K > K_r and below it
        // for K < K_r.
        let k_r = 3.0e6;
        let t = taylor_coeffs(k_r, M).unwrap();
        for frac in [1.02_f64, 1.05, 1.1] {
            let k = k_r * frac;
            assert!(t.inv_speed_quad(k) > exact_inv_speed(k));
        }
        for frac in [0.98_f64, 0.95, 0.9] {
            let k = k_r * frac;
            assert!(t.inv_speed_quad(k) < exact_inv_speed(k));
        }
    }

    #[test]
    fn sign_structure() {
        let t = taylor_coeffs(1.9e6, M).unwrap();
        assert!(t.theta2 > 0.0);
        assert!(t.phi1 < 0.0);
        assert!(t.varphi0 > 0.0);
        assert!(t.theta1 < 0.0);
    }

    #[test]
    fn rejects_nonpositive_reference() {
        assert!(taylor_coeffs(0.0, M).is_err());
        assert!(taylor_coeffs(-5.0, M).is_err());
    }
}
