//! Closed-form rate solution for a Gaussian source matched against a
//! Gaussian codebook under squared error.

use crate::distortion::{extremes, Distortion, DistortionExtremes};
use crate::distributions::{CodebookLaw, SourceMarginal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{gaussian_density, QStar, RateSolution, TiltedChannel, DENSITY_GRID};

/// Solves the Gaussian-Gaussian squared-error instance algebraically.
///
/// With `v = (tau^2 + sqrt(tau^4 + 4 D sigma^2)) / 2` the rate is
/// `log2(v / D) / 2 - log2(e) (v - D)(v - sigma^2) / (2 v tau^2)` bits,
/// the optimal tilt is `(2D - tau^2 - sqrt(tau^4 + 4 D sigma^2)) / (4 D tau^2)`,
/// and the tilted output law is the centered Gaussian with variance
/// `(1 - D/v)^2 sigma^2 + tau^2 D / v`. At or past `sigma^2 + tau^2` the
/// rate is zero.
pub fn rate_pqd_gaussian<S: Scalar>(sigma_sq: S, tau_sq: S, level: S) -> Result<RateSolution<S>> {
    if !(sigma_sq > S::zero() && sigma_sq.is_finite()) {
        return Err(Error::domain(format!(
            "source variance must be positive and finite, got {sigma_sq}"
        )));
    }
    if !(tau_sq > S::zero() && tau_sq.is_finite()) {
        return Err(Error::domain(format!(
            "codebook variance must be positive and finite, got {tau_sq}"
        )));
    }
    if !(level > S::zero() && level.is_finite()) {
        return Err(Error::domain(format!(
            "distortion level must be positive and finite, got {level}"
        )));
    }
    let p = SourceMarginal::Gaussian { variance: sigma_sq };
    let q = CodebookLaw::gaussian(tau_sq)?;
    let distortion = Distortion::SquaredError;
    let two = S::of(2.0);
    let d_av = sigma_sq + tau_sq;
    if level >= d_av {
        // Matching at this level needs no tilt at all.
        let channel = TiltedChannel::new(&p, &q, &distortion, S::zero())?;
        let (points, densities) = gaussian_grid(tau_sq);
        return Ok(RateSolution {
            lambda_star: S::zero(),
            rate_bits: S::zero(),
            q_star: QStar::Grid { points, densities },
            lmi_bits: S::zero(),
            gap_bits: S::zero(),
            extremes: DistortionExtremes {
                d_min: S::zero(),
                d_av,
            },
            channel,
        });
    }
    let disc = (tau_sq * tau_sq + S::of(4.0) * level * sigma_sq).sqrt();
    let v = (tau_sq + disc) / two;
    let lambda = (two * level - tau_sq - disc) / (S::of(4.0) * level * tau_sq);
    let rate_bits = ((v / level).log2() / two
        - (v - level) * (v - sigma_sq) / (two * v * tau_sq * S::LN_2()))
    .max(S::zero());
    // Output law: centered Gaussian with the tilted variance.
    let shrink = S::one() - level / v;
    let out_var = shrink * shrink * sigma_sq + tau_sq * level / v;
    let (points, densities) = gaussian_grid(out_var);
    // Mismatch part: Gaussian-Gaussian relative entropy in bits.
    let ratio = out_var / tau_sq;
    let gap_bits = ((ratio - S::one() - ratio.ln()) / (two * S::LN_2())).max(S::zero());
    let lmi_bits = (rate_bits - gap_bits).max(S::zero());
    let channel = TiltedChannel::new(&p, &q, &distortion, lambda)?;
    Ok(RateSolution {
        lambda_star: lambda,
        rate_bits,
        q_star: QStar::Grid { points, densities },
        lmi_bits,
        gap_bits,
        extremes: extremes(&p, &q, &distortion)?,
        channel,
    })
}

/// Tabulates a centered Gaussian density on the standard output grid.
fn gaussian_grid<S: Scalar>(variance: S) -> (Vec<S>, Vec<S>) {
    let spread = S::of(8.0) * variance.sqrt();
    let n = DENSITY_GRID;
    let mut points = Vec::with_capacity(n);
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let y = -spread + S::of(2.0) * spread * S::of_usize(i) / S::of_usize(n - 1);
        points.push(y);
        densities.push(gaussian_density(y, variance));
    }
    (points, densities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratefn::{log_mgf, rate_pqd, solve_lambda_star};

    #[test]
    fn matched_unit_instance_is_one_bit() {
        // sigma^2 = 1, tau^2 = 0.75, D = 0.25: disc = 1.25, v = 1,
        // rate = log2(4)/2 - 0 = 1 bit, tilt (0.5 - 0.75 - 1.25)/0.75 = -2.
        let sol = rate_pqd_gaussian(1.0_f64, 0.75, 0.25).unwrap();
        assert!((sol.rate_bits - 1.0).abs() < 1e-12, "{}", sol.rate_bits);
        assert!((sol.lambda_star + 2.0).abs() < 1e-12, "{}", sol.lambda_star);
        // v = sigma^2 makes the codebook optimal: no mismatch part.
        assert!(sol.gap_bits < 1e-12, "{}", sol.gap_bits);
        assert!((sol.lmi_bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_at_and_beyond_average_distortion() {
        let sol = rate_pqd_gaussian(1.0_f64, 1.0, 2.0).unwrap();
        assert_eq!(sol.rate_bits, 0.0);
        assert_eq!(sol.lambda_star, 0.0);
        let sol = rate_pqd_gaussian(1.0_f64, 1.0, 5.0).unwrap();
        assert_eq!(sol.rate_bits, 0.0);
    }

    #[test]
    fn wide_codebook_tracks_flat_overshoot() {
        // tau^2 >> sigma^2: rate approaches log2(tau^2 / (e D)) / 2.
        let sol = rate_pqd_gaussian(1.0_f64, 1e4, 0.25).unwrap();
        let flat = 0.5 * (1e4 / (std::f64::consts::E * 0.25)).log2();
        assert!((sol.rate_bits - flat).abs() < 0.01, "{} vs {flat}", sol.rate_bits);
        assert!((sol.rate_bits - 6.922_546).abs() < 1e-3, "{}", sol.rate_bits);
    }

    #[test]
    fn closed_form_matches_generic_solver() {
        let sol = rate_pqd_gaussian(2.0_f64, 1.5, 0.8).unwrap();
        let p = SourceMarginal::Gaussian { variance: 2.0_f64 };
        let q = CodebookLaw::gaussian(1.5).unwrap();
        let generic = rate_pqd(&p, &q, &Distortion::SquaredError, 0.8).unwrap();
        assert!(
            (sol.rate_bits - generic.rate_bits).abs() < 1e-7,
            "{} vs {}",
            sol.rate_bits,
            generic.rate_bits
        );
        assert!((sol.lambda_star - generic.lambda_star).abs() < 1e-7);
        assert!((sol.gap_bits - generic.gap_bits).abs() < 1e-7);
        let lm = log_mgf(&p, &q, &Distortion::SquaredError).unwrap();
        let t = solve_lambda_star(&lm, 0.8).unwrap();
        assert!((t - sol.lambda_star).abs() < 1e-9);
    }

    #[test]
    fn tilt_satisfies_stationarity() {
        // The closed tilt must solve L'(t) = D for many parameter triples.
        for &(s2, t2, d) in &[
            (1.0_f64, 1.0, 0.3),
            (0.5, 2.0, 0.9),
            (3.0, 0.25, 1.1),
            (1.0, 0.75, 0.25),
        ] {
            let sol = rate_pqd_gaussian(s2, t2, d).unwrap();
            let u = 1.0 - 2.0 * sol.lambda_star * t2;
            let deriv = t2 / u + s2 / (u * u);
            assert!((deriv - d).abs() < 1e-10, "({s2},{t2},{d}): {deriv}");
        }
    }

    #[test]
    fn output_variance_interpolates_codebook_and_optimum() {
        let sol = rate_pqd_gaussian(1.0_f64, 2.0, 0.5).unwrap();
        let QStar::Grid { points, densities } = &sol.q_star else {
            panic!("gaussian solution tabulates a density");
        };
        // Recover the variance from two tabulated points: for a centered
        // Gaussian, ln f(y1) - ln f(y2) = (y2^2 - y1^2) / (2 v).
        let (y1, f1) = (points[700], densities[700]);
        let (y2, f2) = (points[1100], densities[1100]);
        let var = (y2 * y2 - y1 * y1) / (2.0 * (f1.ln() - f2.ln()));
        let disc = (4.0_f64 + 4.0 * 0.5).sqrt();
        let v = (2.0 + disc) / 2.0;
        let shrink = 1.0 - 0.5 / v;
        let expect = shrink * shrink + 2.0 * 0.5 / v;
        assert!((var - expect).abs() < 1e-9, "{var} vs {expect}");
        assert!(points.len() == DENSITY_GRID);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(rate_pqd_gaussian(0.0_f64, 1.0, 0.1).is_err());
        assert!(rate_pqd_gaussian(1.0_f64, -1.0, 0.1).is_err());
        assert!(rate_pqd_gaussian(1.0_f64, 1.0, 0.0).is_err());
    }
}
