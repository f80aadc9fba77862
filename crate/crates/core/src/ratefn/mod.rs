//! Rate functions for random-codebook compression.
//!
//! The central object is the convex dual pair behind the codeword-matching
//! exponent: the log moment generating function of the distortion under the
//! codebook law, its tilt parameter, and the induced rate decomposition
//! into a coupling part and a codebook-mismatch part. Everything internal
//! is in nats; bits appear only in returned values.

pub mod asymptote;
pub mod gaussian;
pub mod kblock;
pub mod lmi;

use crate::distortion::{extremes, Distortion, DistortionExtremes};
use crate::distributions::{CodebookLaw, DiscreteDistribution, SourceMarginal};
use crate::error::{Error, Result};
use crate::numeric::logsumexp;
use crate::numeric::quad::adaptive_simpson_segments;
use crate::scalar::Scalar;

pub use asymptote::{additive_mi, cstar_interval, flat_asymptote, slb_bound, AsymptoteReport};
pub use gaussian::rate_pqd_gaussian;
pub use kblock::{lmi_kblock, rate_kblock};
pub use lmi::lmi_direct;

/// Absolute tolerance for single-level quadratures.
const QUAD_TOL: f64 = 1e-10;
/// Tolerance for inner integrals nested under another quadrature; kept
/// well below the outer tolerance so refinement noise stays invisible.
const INNER_TOL: f64 = 1e-12;
/// Tolerance for outer expectations whose integrand is itself computed by
/// an inner quadrature.
const OUTER_TOL: f64 = 1e-9;
/// `exp(-60)` is the cutoff treated as negligible in integration windows.
const TAIL_EXPONENT: f64 = 60.0;
/// Number of tabulation points for a continuous tilted output law.
const DENSITY_GRID: usize = 2048;

/// The log moment generating function of the distortion between an
/// independent source letter and codebook letter,
/// `L(t) = E_P[ln E_Q e^{t rho(X,Y)}]`, defined for tilts `t <= 0`.
#[derive(Debug, Clone)]
pub struct LogMgf<S: Scalar> {
    p: SourceMarginal<S>,
    kernel: Kernel<S>,
    extremes: DistortionExtremes<S>,
}

impl<S: Scalar> LogMgf<S> {
    /// `L(t)` in nats. `t > 0` is outside the domain.
    pub fn value(&self, tilt: S) -> Result<S> {
        check_tilt(tilt)?;
        if tilt == S::zero() {
            return Ok(S::zero());
        }
        // Gaussian-Gaussian squared error collapses to a closed form.
        if let (SourceMarginal::Gaussian { variance }, Some(tau_sq)) =
            (&self.p, self.kernel.gaussian_sq_error())
        {
            let u = S::one() - S::of(2.0) * tilt * tau_sq;
            return Ok(-u.ln() / S::of(2.0) + tilt * *variance / u);
        }
        self.expect_over_p(|x| self.kernel.log_inner(tilt, x))
    }

    /// `L'(t)` in distortion units; the mean distortion of the tilted pair.
    pub fn derivative(&self, tilt: S) -> Result<S> {
        check_tilt(tilt)?;
        if tilt == S::zero() {
            return Ok(self.extremes.d_av);
        }
        if let (SourceMarginal::Gaussian { variance }, Some(tau_sq)) =
            (&self.p, self.kernel.gaussian_sq_error())
        {
            let u = S::one() - S::of(2.0) * tilt * tau_sq;
            return Ok(tau_sq / u + *variance / (u * u));
        }
        self.expect_over_p(|x| self.kernel.inner_ratio(tilt, x))
    }

    pub fn extremes(&self) -> &DistortionExtremes<S> {
        &self.extremes
    }

    /// Expectation of a per-letter statistic over the source marginal.
    fn expect_over_p(&self, f: impl Fn(S) -> Result<S>) -> Result<S> {
        match &self.p {
            SourceMarginal::Discrete(pd) => {
                let mut total = S::zero();
                for (&x, &px) in pd.support().iter().zip(pd.probs()) {
                    if px > S::zero() {
                        total += px * f(x)?;
                    }
                }
                Ok(total)
            }
            SourceMarginal::Gaussian { variance } => {
                let sd = variance.sqrt();
                let hi = S::of(13.0) * sd;
                integrate_with_failure(
                    |x| gaussian_density(x, *variance) * f(x).unwrap_or(S::nan()),
                    &[-hi, S::zero(), hi],
                    S::of(OUTER_TOL),
                )
            }
        }
    }
}

/// Builds the log-MGF evaluator for a source marginal, codebook law, and
/// distortion. Validates that the average distortion is finite and the
/// instance is not degenerate.
pub fn log_mgf<S: Scalar>(
    p: &SourceMarginal<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
) -> Result<LogMgf<S>> {
    let ext = extremes(p, q, distortion)?;
    Ok(LogMgf {
        p: p.clone(),
        kernel: Kernel {
            q: q.clone(),
            distortion: distortion.clone(),
        },
        extremes: ext,
    })
}

/// Solves `L'(t) = level` for the unique negative tilt. The level must lie
/// strictly between the distortion extremes.
pub fn solve_lambda_star<S: Scalar>(log_mgf: &LogMgf<S>, level: S) -> Result<S> {
    let ext = log_mgf.extremes.clone();
    solve_tilt(|t| log_mgf.derivative(t), level, &ext)
}

/// Shared tilt root-finder: brackets `[-2^k, -2^-k]` expand until the
/// derivative straddles the level, then safeguarded root refinement drives
/// `|L'(t) - level|` below `1e-10 * d_av`.
pub(crate) fn solve_tilt<S: Scalar>(
    derivative: impl Fn(S) -> Result<S>,
    level: S,
    ext: &DistortionExtremes<S>,
) -> Result<S> {
    if !ext.admits(level) {
        return Err(Error::domain(format!(
            "target level {level} must lie strictly between the minimal distortion {} and the average distortion {}",
            ext.d_min, ext.d_av
        )));
    }
    let ftol = S::of(1e-10) * ext.d_av;
    let mut hi = -S::one();
    let mut lo = -S::one();
    let mut hi_ok = derivative(hi)? > level;
    let mut lo_ok = derivative(lo)? < level;
    for _ in 0..60 {
        if hi_ok && lo_ok {
            break;
        }
        if !hi_ok {
            hi /= S::of(2.0);
            hi_ok = derivative(hi)? > level;
        }
        if !lo_ok {
            lo *= S::of(2.0);
            lo_ok = derivative(lo)? < level;
        }
    }
    if !(hi_ok && lo_ok) {
        return Err(Error::numerical(format!(
            "tilt bracket expansion exhausted: the derivative never straddled {level}"
        )));
    }
    // Errors inside the root callback surface as NaN, which the bracketed
    // solver reports as a numerical failure.
    let failed = std::cell::RefCell::new(None);
    let root = crate::numeric::root::bracketed_root(
        |t| match derivative(t) {
            Ok(v) => v - level,
            Err(e) => {
                failed.borrow_mut().get_or_insert(e);
                S::nan()
            }
        },
        lo,
        hi,
        ftol,
    );
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    root
}

/// The tilted matching channel: conditional law on codebook letters with
/// mass or density proportional to `Q(dy) e^{t rho(x, y)}`.
#[derive(Debug, Clone)]
pub struct TiltedChannel<S: Scalar> {
    lambda: S,
    p: SourceMarginal<S>,
    kernel: Kernel<S>,
}

impl<S: Scalar> TiltedChannel<S> {
    /// Builds the channel and verifies its conditionals normalize.
    pub fn new(
        p: &SourceMarginal<S>,
        q: &CodebookLaw<S>,
        distortion: &Distortion<S>,
        lambda: S,
    ) -> Result<Self> {
        if !(lambda <= S::zero()) {
            return Err(Error::domain(format!(
                "channel tilt must be nonpositive, got {lambda}"
            )));
        }
        let channel = TiltedChannel {
            lambda,
            p: p.clone(),
            kernel: Kernel {
                q: q.clone(),
                distortion: distortion.clone(),
            },
        };
        channel.verify_normalization()?;
        Ok(channel)
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    /// `ln E_Q[e^{lambda rho(x, Y)}]`, the log normalizer at source letter x.
    pub fn log_normalizer(&self, x: S) -> Result<S> {
        self.kernel.log_inner(self.lambda, x)
    }

    /// Conditional mass (discrete codebook) or density (continuous) at y.
    pub fn conditional(&self, x: S, y: S) -> Result<S> {
        let log_z = self.kernel.log_inner(self.lambda, x)?;
        let base = self.kernel.q.mass_or_density(y)?;
        if base == S::zero() {
            return Ok(S::zero());
        }
        let rho = self.kernel.distortion.rho(x, y)?;
        Ok((base.ln() + self.lambda * rho - log_z).exp())
    }

    /// Full conditional row for a discrete codebook law.
    pub fn conditional_row(&self, x: S) -> Result<DiscreteDistribution<S>> {
        let CodebookLaw::DiscretePmf(qd) = &self.kernel.q else {
            return Err(Error::unsupported(
                "conditional rows exist only for discrete codebook laws",
            ));
        };
        let log_z = self.kernel.log_inner(self.lambda, x)?;
        let mut probs = Vec::with_capacity(qd.len());
        for (&y, &qy) in qd.support().iter().zip(qd.probs()) {
            if qy == S::zero() {
                probs.push(S::zero());
                continue;
            }
            let rho = self.kernel.distortion.rho(x, y)?;
            probs.push((qy.ln() + self.lambda * rho - log_z).exp());
        }
        let total: S = probs.iter().copied().sum();
        for v in &mut probs {
            *v /= total;
        }
        DiscreteDistribution::new(qd.support().to_vec(), probs)
    }

    /// Density of the output marginal under the source, at y (continuous
    /// codebook laws).
    pub fn output_density(&self, y: S) -> Result<S> {
        let base = self.kernel.q.mass_or_density(y)?;
        Ok(base * self.output_ratio(y)?)
    }

    /// `E_P[e^{lambda rho(X, y) - ln Z(X)}]`, the density ratio of the
    /// output marginal to the codebook law at y.
    fn output_ratio(&self, y: S) -> Result<S> {
        let lambda = self.lambda;
        match &self.p {
            SourceMarginal::Discrete(pd) => {
                let mut total = S::zero();
                for (&x, &px) in pd.support().iter().zip(pd.probs()) {
                    if px == S::zero() {
                        continue;
                    }
                    let log_z = self.kernel.log_inner(lambda, x)?;
                    let rho = self.kernel.distortion.rho(x, y)?;
                    total += px * (lambda * rho - log_z).exp();
                }
                Ok(total)
            }
            SourceMarginal::Gaussian { variance } => {
                let sd = variance.sqrt();
                let hi = S::of(13.0) * sd;
                let f = |x: S| -> S {
                    let inner = || -> Result<S> {
                        let log_z = self.kernel.log_inner(lambda, x)?;
                        let rho = self.kernel.distortion.rho(x, y)?;
                        Ok(gaussian_density(x, *variance) * (lambda * rho - log_z).exp())
                    };
                    inner().unwrap_or(S::nan())
                };
                integrate_with_failure(f, &[-hi, S::zero(), hi], S::of(QUAD_TOL))
            }
        }
    }

    /// Output marginal over a discrete codebook support.
    pub fn output_pmf(&self) -> Result<DiscreteDistribution<S>> {
        let CodebookLaw::DiscretePmf(qd) = &self.kernel.q else {
            return Err(Error::unsupported(
                "output pmf exists only for discrete codebook laws",
            ));
        };
        let mut probs = vec![S::zero(); qd.len()];
        match &self.p {
            SourceMarginal::Discrete(pd) => {
                for (&x, &px) in pd.support().iter().zip(pd.probs()) {
                    if px == S::zero() {
                        continue;
                    }
                    let row = self.conditional_row(x)?;
                    for (slot, &w) in probs.iter_mut().zip(row.probs()) {
                        *slot += px * w;
                    }
                }
            }
            SourceMarginal::Gaussian { variance } => {
                let sd = variance.sqrt();
                let hi = S::of(13.0) * sd;
                for (j, slot) in probs.iter_mut().enumerate() {
                    let f = |x: S| -> S {
                        let inner = || -> Result<S> {
                            let row = self.conditional_row(x)?;
                            Ok(gaussian_density(x, *variance) * row.probs()[j])
                        };
                        inner().unwrap_or(S::nan())
                    };
                    *slot =
                        integrate_with_failure(f, &[-hi, S::zero(), hi], S::of(OUTER_TOL))?;
                }
            }
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > S::of(1e-8) {
            return Err(Error::numerical(format!(
                "tilted output masses sum to {total}, too far from 1"
            )));
        }
        for v in &mut probs {
            *v /= total;
        }
        DiscreteDistribution::new(qd.support().to_vec(), probs)
    }

    /// Conditional rows must normalize to 1 within 1e-10; checked exactly
    /// for discrete laws, by quadrature at representative letters otherwise.
    fn verify_normalization(&self) -> Result<()> {
        let tol = S::of(1e-10);
        match &self.kernel.q {
            CodebookLaw::DiscretePmf(qd) => {
                for &x in representative_sources(&self.p).iter() {
                    let log_z = self.kernel.log_inner(self.lambda, x)?;
                    let mut total = S::zero();
                    for (&y, &qy) in qd.support().iter().zip(qd.probs()) {
                        if qy > S::zero() {
                            let rho = self.kernel.distortion.rho(x, y)?;
                            total += (qy.ln() + self.lambda * rho - log_z).exp();
                        }
                    }
                    if (total - S::one()).abs() > tol {
                        return Err(Error::numerical(format!(
                            "tilted conditional at x = {x} sums to {total}"
                        )));
                    }
                }
            }
            _ => {
                for &x in representative_sources(&self.p).iter() {
                    let log_z = self.kernel.log_inner(self.lambda, x)?;
                    let points = self.kernel.inner_window(self.lambda, x);
                    let lambda = self.lambda;
                    let mass = integrate_with_failure(
                        |y| {
                            let inner = || -> Result<S> {
                                let base = self.kernel.q.mass_or_density(y)?;
                                if base == S::zero() {
                                    return Ok(S::zero());
                                }
                                let rho = self.kernel.distortion.rho(x, y)?;
                                Ok((base.ln() + lambda * rho - log_z).exp())
                            };
                            inner().unwrap_or(S::nan())
                        },
                        &points,
                        S::of(QUAD_TOL),
                    )?;
                    if (mass - S::one()).abs() > tol {
                        return Err(Error::numerical(format!(
                            "tilted conditional at x = {x} integrates to {mass}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The tilted output law: the favored codebook letter distribution.
#[derive(Debug, Clone)]
pub enum QStar<S: Scalar> {
    Discrete(DiscreteDistribution<S>),
    /// Density tabulated on an equally spaced grid; the generating channel
    /// re-evaluates the density anywhere.
    Grid {
        points: Vec<S>,
        densities: Vec<S>,
    },
}

impl<S: Scalar> QStar<S> {
    /// Total variation against another discrete law on the same letters.
    pub fn total_variation(&self, other: &DiscreteDistribution<S>) -> Result<S> {
        let QStar::Discrete(own) = self else {
            return Err(Error::unsupported(
                "total variation against a pmf requires a discrete output law",
            ));
        };
        let mut tv = S::zero();
        for (&y, &w) in own.support().iter().zip(own.probs()) {
            let v = match other.index_of(y) {
                Some(j) => other.probs()[j],
                None => S::zero(),
            };
            tv += (w - v).abs();
        }
        for (&y, &v) in other.support().iter().zip(other.probs()) {
            if own.index_of(y).is_none() {
                tv += v;
            }
        }
        Ok(tv / S::of(2.0))
    }
}

/// Everything the tilt solve produces: the dual rate, its decomposition,
/// the output law, and the channel that generated them.
#[derive(Debug, Clone)]
pub struct RateSolution<S: Scalar> {
    pub lambda_star: S,
    pub rate_bits: S,
    pub q_star: QStar<S>,
    pub lmi_bits: S,
    pub gap_bits: S,
    pub extremes: DistortionExtremes<S>,
    pub channel: TiltedChannel<S>,
}

/// Solves the codeword-matching rate at distortion `level`: the dual value
/// `sup_{t<=0} [t level - L(t)]`, decomposed into the coupling rate plus
/// the output-law mismatch.
pub fn rate_pqd<S: Scalar>(
    p: &SourceMarginal<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<RateSolution<S>> {
    let lm = log_mgf(p, q, distortion)?;
    let lambda = solve_lambda_star(&lm, level)?;
    let rate_nats = (lambda * level - lm.value(lambda)?).max(S::zero());
    // The tilted channel meets the level: its mean distortion is L'(t*).
    let realized = lm.derivative(lambda)?;
    if (realized - level).abs() > S::of(1e-6) * S::one().max(level) {
        return Err(Error::numerical(format!(
            "tilted channel distortion {realized} missed the target {level}"
        )));
    }
    let channel = TiltedChannel::new(p, q, distortion, lambda)?;
    let (q_star, gap_nats) = match q {
        CodebookLaw::DiscretePmf(qd) => {
            let out = channel.output_pmf()?;
            let mut gap = S::zero();
            for (&w, &v) in out.probs().iter().zip(qd.probs()) {
                if w > S::zero() {
                    gap += w * (w / v).ln();
                }
            }
            (QStar::Discrete(out), gap)
        }
        _ => {
            let (points, densities) = tabulate_output_density(&channel)?;
            let gap = continuous_gap(&channel, &points)?;
            (QStar::Grid { points, densities }, gap)
        }
    };
    let rate_bits = rate_nats / S::LN_2();
    let mut gap_bits = gap_nats / S::LN_2();
    let mut lmi_bits = rate_bits - gap_bits;
    // Clear off floating-point dust so rate = lmi + gap holds exactly with
    // all three terms nonnegative.
    if gap_bits < S::zero() {
        if gap_bits < -S::of(1e-9) {
            return Err(Error::numerical(format!(
                "output-law mismatch came out negative: {gap_bits} bits"
            )));
        }
        gap_bits = S::zero();
        lmi_bits = rate_bits;
    }
    if lmi_bits < S::zero() {
        if lmi_bits < -S::of(1e-9) {
            return Err(Error::numerical(format!(
                "coupling rate came out negative: {lmi_bits} bits"
            )));
        }
        lmi_bits = S::zero();
        gap_bits = rate_bits;
    }
    Ok(RateSolution {
        lambda_star: lambda,
        rate_bits,
        q_star,
        lmi_bits,
        gap_bits,
        extremes: lm.extremes.clone(),
        channel,
    })
}

/// The tilted output law alone.
pub fn q_star<S: Scalar>(
    p: &SourceMarginal<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<QStar<S>> {
    Ok(rate_pqd(p, q, distortion, level)?.q_star)
}

/// Relative entropy between two discrete laws in bits; infinite when the
/// first puts mass where the second has none.
pub fn relative_entropy<S: Scalar>(
    w: &DiscreteDistribution<S>,
    v: &DiscreteDistribution<S>,
) -> S {
    let mut total = S::zero();
    for (&y, &mass) in w.support().iter().zip(w.probs()) {
        if mass == S::zero() {
            continue;
        }
        let base = match v.index_of(y) {
            Some(j) => v.probs()[j],
            None => S::zero(),
        };
        if base == S::zero() {
            return S::infinity();
        }
        total += mass * (mass / base).ln();
    }
    total.max(S::zero()) / S::LN_2()
}

/// Relative entropy between two densities in bits, integrated over the
/// segment points. Requires `w` to vanish wherever `v` does on the window.
pub fn relative_entropy_densities<S: Scalar>(
    w: impl Fn(S) -> S,
    v: impl Fn(S) -> S,
    points: &[S],
) -> Result<S> {
    let nats = integrate_with_failure(
        |y| {
            let wy = w(y);
            if wy <= S::zero() {
                return S::zero();
            }
            let vy = v(y);
            if vy <= S::zero() {
                return S::nan();
            }
            wy * (wy / vy).ln()
        },
        points,
        S::of(QUAD_TOL),
    )?;
    Ok(nats / S::LN_2())
}

/// Tabulates the channel's output density on 2048 points spanning eight
/// standard deviations around its mean.
fn tabulate_output_density<S: Scalar>(channel: &TiltedChannel<S>) -> Result<(Vec<S>, Vec<S>)> {
    // Moments first, over a generous window derived from the codebook bulk
    // and the tilt window around the source bulk.
    let coarse = channel.kernel.output_window(channel.lambda, &channel.p);
    let mean = integrate_with_failure(
        |y| y * channel.output_density(y).unwrap_or(S::nan()),
        &coarse,
        S::of(OUTER_TOL),
    )?;
    let second = integrate_with_failure(
        |y| y * y * channel.output_density(y).unwrap_or(S::nan()),
        &coarse,
        S::of(OUTER_TOL),
    )?;
    let var = (second - mean * mean).max(S::of(1e-300));
    let spread = S::of(8.0) * var.sqrt();
    let lo = mean - spread;
    let hi = mean + spread;
    let n = DENSITY_GRID;
    let mut points = Vec::with_capacity(n);
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let y = lo + (hi - lo) * S::of_usize(i) / S::of_usize(n - 1);
        points.push(y);
        densities.push(channel.output_density(y)?);
    }
    Ok((points, densities))
}

/// `H(Q' || Q)` in nats for a continuous output law.
fn continuous_gap<S: Scalar>(channel: &TiltedChannel<S>, _grid: &[S]) -> Result<S> {
    let points = channel.kernel.output_window(channel.lambda, &channel.p);
    integrate_with_failure(
        |y| {
            let inner = || -> Result<S> {
                let ratio = channel.output_ratio(y)?;
                if ratio <= S::zero() {
                    return Ok(S::zero());
                }
                let base = channel.kernel.q.mass_or_density(y)?;
                Ok(base * ratio * ratio.ln())
            };
            inner().unwrap_or(S::nan())
        },
        &points,
        S::of(OUTER_TOL),
    )
}

/// Evaluation kernel over the codebook law: inner expectations of the
/// tilted distortion for one source letter.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<S: Scalar> {
    q: CodebookLaw<S>,
    distortion: Distortion<S>,
}

impl<S: Scalar> Kernel<S> {
    /// Codebook variance when the closed Gaussian squared-error form holds.
    fn gaussian_sq_error(&self) -> Option<S> {
        match (&self.q, &self.distortion) {
            (CodebookLaw::Gaussian { tau_sq }, Distortion::SquaredError) => Some(*tau_sq),
            _ => None,
        }
    }

    /// `ln E_Q[e^{t rho(x, Y)}]` for one source letter.
    pub(crate) fn log_inner(&self, tilt: S, x: S) -> Result<S> {
        if tilt == S::zero() {
            return Ok(S::zero());
        }
        match &self.q {
            CodebookLaw::DiscretePmf(qd) => {
                let mut terms = Vec::with_capacity(qd.len());
                for (&y, &qy) in qd.support().iter().zip(qd.probs()) {
                    if qy > S::zero() {
                        terms.push(qy.ln() + tilt * self.distortion.rho(x, y)?);
                    }
                }
                Ok(logsumexp(&terms))
            }
            CodebookLaw::Gaussian { tau_sq }
                if matches!(self.distortion, Distortion::SquaredError) =>
            {
                let u = S::one() - S::of(2.0) * tilt * *tau_sq;
                Ok(-u.ln() / S::of(2.0) + tilt * x * x / u)
            }
            _ if matches!(self.distortion, Distortion::Hamming) => {
                // A continuous law hits any single point with probability
                // zero, so the tilt applies almost surely.
                Ok(tilt)
            }
            _ => {
                let (points, shift) = self.shifted_setup(tilt, x)?;
                let integral = integrate_with_failure(
                    |y| self.shifted_integrand(tilt, x, y, shift),
                    &points,
                    S::of(INNER_TOL),
                )?;
                if !(integral > S::zero()) {
                    return Err(Error::numerical(format!(
                        "tilted inner integral vanished at x = {x}, tilt = {tilt}"
                    )));
                }
                Ok(shift + integral.ln())
            }
        }
    }

    /// `E_Q[rho e^{t rho}] / E_Q[e^{t rho}]` for one source letter.
    pub(crate) fn inner_ratio(&self, tilt: S, x: S) -> Result<S> {
        match &self.q {
            CodebookLaw::DiscretePmf(qd) => {
                let mut best = S::neg_infinity();
                let mut terms = Vec::with_capacity(qd.len());
                for (&y, &qy) in qd.support().iter().zip(qd.probs()) {
                    if qy > S::zero() {
                        let rho = self.distortion.rho(x, y)?;
                        let log_term = qy.ln() + tilt * rho;
                        best = best.max(log_term);
                        terms.push((log_term, rho));
                    }
                }
                let mut den = S::zero();
                let mut num = S::zero();
                for (log_term, rho) in terms {
                    let wgt = (log_term - best).exp();
                    den += wgt;
                    num += wgt * rho;
                }
                Ok(num / den)
            }
            CodebookLaw::Gaussian { tau_sq }
                if matches!(self.distortion, Distortion::SquaredError) =>
            {
                let u = S::one() - S::of(2.0) * tilt * *tau_sq;
                Ok(*tau_sq / u + x * x / (u * u))
            }
            _ if matches!(self.distortion, Distortion::Hamming) => Ok(S::one()),
            _ => {
                let (points, shift) = self.shifted_setup(tilt, x)?;
                let den = integrate_with_failure(
                    |y| self.shifted_integrand(tilt, x, y, shift),
                    &points,
                    S::of(INNER_TOL),
                )?;
                let num = integrate_with_failure(
                    |y| {
                        let rho = self.distortion.rho(x, y).unwrap_or(S::nan());
                        rho * self.shifted_integrand(tilt, x, y, shift)
                    },
                    &points,
                    S::of(INNER_TOL) * self.window_rho_scale(&points, x),
                )?;
                if !(den > S::zero()) {
                    return Err(Error::numerical(format!(
                        "tilted inner integral vanished at x = {x}, tilt = {tilt}"
                    )));
                }
                Ok(num / den)
            }
        }
    }

    /// `exp(ln f_Q(y) + t rho(x,y) - shift)`, the underflow-safe integrand.
    fn shifted_integrand(&self, tilt: S, x: S, y: S, shift: S) -> S {
        let log_density = match self.log_density(y) {
            Ok(v) => v,
            Err(_) => return S::nan(),
        };
        let rho = match self.distortion.rho(x, y) {
            Ok(v) => v,
            Err(_) => return S::nan(),
        };
        (log_density + tilt * rho - shift).exp()
    }

    /// Log density of a continuous codebook law.
    fn log_density(&self, y: S) -> Result<S> {
        match &self.q {
            CodebookLaw::Gaussian { tau_sq } => {
                Ok(-(S::of(2.0) * S::PI() * *tau_sq).ln() / S::of(2.0) - y * y / (S::of(2.0) * *tau_sq))
            }
            CodebookLaw::ExponentialFamily(fam) => {
                Ok(fam.normalizer().ln() - fam.scale() * fam.shape(y))
            }
            CodebookLaw::DiscretePmf(_) => Err(Error::unsupported(
                "log density requested for a discrete codebook law",
            )),
        }
    }

    /// Half-width of the codebook bulk: outside it the density contributes
    /// nothing at the working tolerances.
    fn bulk(&self) -> S {
        match &self.q {
            CodebookLaw::Gaussian { tau_sq } => S::of(13.5) * tau_sq.sqrt(),
            CodebookLaw::ExponentialFamily(fam) => S::of(1.5) * fam.tail_cutoff(),
            CodebookLaw::DiscretePmf(_) => S::zero(),
        }
    }

    /// Half-width of the tilt window around the source letter: beyond it
    /// the tilt factor is below `e^{-60}`.
    fn tilt_halfwidth(&self, tilt: S) -> S {
        if tilt == S::zero() {
            return S::infinity();
        }
        let budget = S::of(TAIL_EXPONENT) / tilt.abs();
        match &self.distortion {
            Distortion::SquaredError => budget.sqrt(),
            Distortion::PowerR { r } => budget.powf(S::one() / *r),
            _ => S::infinity(),
        }
    }

    /// Integration segments for the inner integral at one source letter.
    fn inner_window(&self, tilt: S, x: S) -> Vec<S> {
        let bulk = self.bulk();
        let w = self.tilt_halfwidth(tilt);
        let mut candidates = vec![-bulk, S::zero(), bulk];
        if w.is_finite() {
            let cap = (x.abs() + bulk + S::one()) * S::of(4.0);
            let w = w.min(cap);
            candidates.extend_from_slice(&[x - w, x, x + w]);
        } else {
            candidates.push(x);
        }
        let lo = candidates.iter().copied().fold(S::infinity(), S::min);
        let hi = candidates.iter().copied().fold(S::neg_infinity(), S::max);
        candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite window points"));
        let eps = (hi - lo) * S::of(1e-12);
        let mut points = Vec::with_capacity(candidates.len());
        for c in candidates {
            if points.last().is_none_or(|&last| c - last > eps) {
                points.push(c);
            }
        }
        points
    }

    /// Shift that keeps the inner integrand in representable range: the
    /// maximum of the log integrand over a scan of the window.
    fn shifted_setup(&self, tilt: S, x: S) -> Result<(Vec<S>, S)> {
        let points = self.inner_window(tilt, x);
        let lo = points[0];
        let hi = *points.last().expect("window has endpoints");
        let mut shift = S::neg_infinity();
        let scans = 512;
        for i in 0..=scans {
            let y = lo + (hi - lo) * S::of_usize(i) / S::of_usize(scans);
            let h = self.log_density(y)? + tilt * self.distortion.rho(x, y)?;
            shift = shift.max(h);
        }
        for &y in &points {
            let h = self.log_density(y)? + tilt * self.distortion.rho(x, y)?;
            shift = shift.max(h);
        }
        if !shift.is_finite() {
            return Err(Error::numerical(format!(
                "tilted integrand has no finite maximum at x = {x}"
            )));
        }
        Ok((points, shift))
    }

    /// Scale factor so the numerator quadrature tolerance tracks the size
    /// of the distortion values on the window.
    fn window_rho_scale(&self, points: &[S], x: S) -> S {
        let lo = points[0];
        let hi = *points.last().expect("window has endpoints");
        let span = (x - lo).abs().max((hi - x).abs());
        match &self.distortion {
            Distortion::SquaredError => S::one().max(span * span),
            Distortion::PowerR { r } => S::one().max(span.powf(*r)),
            _ => S::one(),
        }
    }

    /// Segments covering the output law's support for marginal quadratures.
    fn output_window(&self, tilt: S, p: &SourceMarginal<S>) -> Vec<S> {
        let bulk = self.bulk();
        let w = self.tilt_halfwidth(tilt);
        let mut candidates = vec![-bulk, S::zero(), bulk];
        let source_reach = match p {
            SourceMarginal::Discrete(pd) => pd
                .support()
                .iter()
                .map(|v| v.abs())
                .fold(S::zero(), S::max),
            SourceMarginal::Gaussian { variance } => S::of(13.0) * variance.sqrt(),
        };
        let reach = if w.is_finite() {
            source_reach + w.min((source_reach + bulk + S::one()) * S::of(4.0))
        } else {
            source_reach + bulk
        };
        candidates.extend_from_slice(&[-reach, reach]);
        if let SourceMarginal::Discrete(pd) = p {
            candidates.extend(pd.support().iter().copied());
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite window points"));
        let lo = candidates[0];
        let hi = *candidates.last().expect("nonempty");
        let eps = (hi - lo) * S::of(1e-12);
        let mut points = Vec::with_capacity(candidates.len());
        for c in candidates {
            if points.last().is_none_or(|&last| c - last > eps) {
                points.push(c);
            }
        }
        points
    }
}

/// Centered Gaussian density.
pub(crate) fn gaussian_density<S: Scalar>(x: S, variance: S) -> S {
    (-(x * x) / (S::of(2.0) * variance)).exp() / (S::of(2.0) * S::PI() * variance).sqrt()
}

/// Letters at which per-x channel checks run: the discrete support, or a
/// small stencil across the Gaussian bulk.
fn representative_sources<S: Scalar>(p: &SourceMarginal<S>) -> Vec<S> {
    match p {
        SourceMarginal::Discrete(pd) => pd.support().to_vec(),
        SourceMarginal::Gaussian { variance } => {
            let sd = variance.sqrt();
            vec![S::zero(), -sd, sd, S::of(3.0) * sd]
        }
    }
}

/// Adaptive quadrature whose integrand signals failure through NaN.
fn integrate_with_failure<S: Scalar>(
    f: impl Fn(S) -> S,
    points: &[S],
    tol: S,
) -> Result<S> {
    if points.len() < 2 {
        return Err(Error::numerical("integration window collapsed"));
    }
    adaptive_simpson_segments(f, points, tol)
}

fn check_tilt<S: Scalar>(tilt: S) -> Result<()> {
    if tilt > S::zero() || !tilt.is_finite() {
        return Err(Error::domain(format!(
            "tilt must be a finite nonpositive number, got {tilt}"
        )));
    }
    Ok(())
}
