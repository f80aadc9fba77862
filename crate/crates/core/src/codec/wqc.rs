//! Scalar fallback quantizer: a per-symbol code that meets the distortion
//! target everywhere, used to describe a block when the index search
//! truncates.
//!
//! Discrete sources quantize to the nearest reproduction letter; a Gaussian
//! source quantizes to a uniform lattice whose half-step keeps every point
//! within the target. Code lengths are Shannon lengths for the induced cell
//! law, rounded up to whole bits, so they satisfy the Kraft inequality.

use crate::distortion::Distortion;
use crate::distributions::SourceMarginal;
use crate::error::{Error, Result};
use crate::numeric::special::normal_cdf;
use crate::scalar::{xlog2x, Scalar};

/// Lattice cells are enumerated out to this many standard deviations when
/// tabulating the cell-law entropy; the remaining tail mass is below
/// `exp(-91)` and cannot move either reported moment at double precision.
const LATTICE_SPAN_SDS: f64 = 13.5;

/// Cell masses below this threshold switch the length computation to the
/// log-domain tail bound, which never underflows.
const MASS_UNDERFLOW: f64 = 1e-280;

#[derive(Debug, Clone)]
enum Kind<S: Scalar> {
    Discrete {
        source: Vec<S>,
        repro: Vec<S>,
        /// Source letter index to reproduction letter index.
        map: Vec<usize>,
        /// Induced law over reproduction letters.
        cell_mass: Vec<S>,
    },
    Lattice {
        step: S,
        variance: S,
    },
}

/// A distortion-safe scalar quantizer with its induced cell law and the
/// moments of its ideal code lengths.
#[derive(Debug, Clone)]
pub struct ScalarQuantizerWQC<S: Scalar> {
    kind: Kind<S>,
    entropy_bits: S,
    length_second_moment: S,
}

impl<S: Scalar> ScalarQuantizerWQC<S> {
    /// Reproduction point for `x`.
    pub fn quantize(&self, x: S) -> Result<S> {
        match &self.kind {
            Kind::Discrete {
                source, repro, map, ..
            } => {
                let i = index_of(source, x)?;
                Ok(repro[map[i]])
            }
            Kind::Lattice { step, .. } => Ok((x / *step).round() * *step),
        }
    }

    /// Mass of the cell `x` falls into under the induced law.
    pub fn cell_mass(&self, x: S) -> Result<S> {
        match &self.kind {
            Kind::Discrete {
                source,
                map,
                cell_mass,
                ..
            } => {
                let i = index_of(source, x)?;
                Ok(cell_mass[map[i]])
            }
            Kind::Lattice { step, variance } => {
                let cell = (x / *step).round().as_f64();
                Ok(S::of(lattice_cell_mass(
                    cell,
                    step.as_f64(),
                    variance.as_f64(),
                )))
            }
        }
    }

    /// Whole-bit code length for `x`: the Shannon length of its cell,
    /// rounded up.
    pub fn code_length_bits(&self, x: S) -> Result<S> {
        match &self.kind {
            Kind::Discrete { .. } => {
                let mass = self.cell_mass(x)?;
                if mass <= S::zero() {
                    return Err(Error::domain(format!(
                        "letter {x} has no mass under the source, so its cell is uncodable"
                    )));
                }
                Ok((-mass.log2()).ceil())
            }
            Kind::Lattice { step, variance } => {
                let cell = (x / *step).round().as_f64();
                let st = step.as_f64();
                let var = variance.as_f64();
                let mass = lattice_cell_mass(cell, st, var);
                if mass > MASS_UNDERFLOW {
                    return Ok(S::of((-mass.log2()).ceil()));
                }
                // Deep tail: bound the cell mass by step times the density
                // at the inner edge, evaluated in the log domain.
                let inner = (cell.abs() - 0.5) * st;
                let ln_mass =
                    -inner * inner / (2.0 * var) + st.ln() - (2.0 * std::f64::consts::PI * var).sqrt().ln();
                Ok(S::of((-ln_mass / std::f64::consts::LN_2).ceil()))
            }
        }
    }

    /// Entropy of the induced cell law in bits.
    pub fn entropy_bits(&self) -> S {
        self.entropy_bits
    }

    /// Second moment of the ideal code lengths, `E[(-log2 mass(q(X)))^2]`,
    /// the finiteness certificate for the per-symbol fallback.
    pub fn length_second_moment(&self) -> S {
        self.length_second_moment
    }
}

fn index_of<S: Scalar>(letters: &[S], x: S) -> Result<usize> {
    letters
        .iter()
        .position(|&a| a == x)
        .ok_or_else(|| Error::domain(format!("{x} is not a source letter")))
}

/// Mass of lattice cell `m` (center `m * step`) under a centered Gaussian.
fn lattice_cell_mass(cell: f64, step: f64, variance: f64) -> f64 {
    let sd = variance.sqrt();
    let hi = normal_cdf((cell * step + step / 2.0) / sd);
    let lo = normal_cdf((cell * step - step / 2.0) / sd);
    (hi - lo).max(0.0)
}

/// Builds the distortion-safe quantizer for a source marginal: every
/// representable point satisfies `rho(x, q(x)) <= level`, or construction
/// fails.
pub fn wqc_build<S: Scalar>(
    p: &SourceMarginal<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<ScalarQuantizerWQC<S>> {
    if !(level >= S::zero()) || !level.is_finite() {
        return Err(Error::domain(format!(
            "target level must be nonnegative and finite, got {level}"
        )));
    }
    match p {
        SourceMarginal::Discrete(d) => build_discrete(d.support(), d.probs(), distortion, level),
        SourceMarginal::Gaussian { variance } => build_lattice(*variance, distortion, level),
    }
}

fn build_discrete<S: Scalar>(
    support: &[S],
    probs: &[S],
    distortion: &Distortion<S>,
    level: S,
) -> Result<ScalarQuantizerWQC<S>> {
    let matrix = distortion.matrix(support, support)?;
    let mut map = Vec::with_capacity(support.len());
    for (i, row) in matrix.iter().enumerate() {
        let mut best = i;
        for (j, &v) in row.iter().enumerate() {
            if v < row[best] {
                best = j;
            }
        }
        if !(row[best] <= level) {
            return Err(Error::domain(format!(
                "letter {} has no reproduction within distortion {level}; the best is {}",
                support[i], row[best]
            )));
        }
        map.push(best);
    }
    let mut cell_mass = vec![S::zero(); support.len()];
    for (i, &j) in map.iter().enumerate() {
        cell_mass[j] += probs[i];
    }
    let entropy_bits = -cell_mass.iter().map(|&m| xlog2x(m)).sum::<S>();
    let mut m2 = S::zero();
    for (i, &j) in map.iter().enumerate() {
        if probs[i] > S::zero() {
            let len = -cell_mass[j].log2();
            m2 += probs[i] * len * len;
        }
    }
    Ok(ScalarQuantizerWQC {
        kind: Kind::Discrete {
            source: support.to_vec(),
            repro: support.to_vec(),
            map,
            cell_mass,
        },
        entropy_bits,
        length_second_moment: m2,
    })
}

fn build_lattice<S: Scalar>(
    variance: S,
    distortion: &Distortion<S>,
    level: S,
) -> Result<ScalarQuantizerWQC<S>> {
    if !distortion.is_difference() {
        return Err(Error::unsupported(
            "a lattice quantizer needs a difference distortion",
        ));
    }
    if level <= S::zero() {
        return Err(Error::domain(
            "no countable quantizer reaches zero distortion on a continuous source",
        ));
    }
    // Invert rho(z) = level on the positive axis for the half-step radius.
    let radius = match distortion {
        Distortion::SquaredError => level.sqrt(),
        Distortion::PowerR { r } => level.powf(S::one() / *r),
        Distortion::Hamming => {
            return Err(Error::unsupported(
                "every off-point reproduction costs a full unit, so no lattice works",
            ))
        }
        Distortion::Table(_) => unreachable!("table distortions are not difference-form"),
    };
    let step = S::of(2.0) * radius;
    let sd = variance.sqrt();
    // Spot-verify the half-step guarantee across the working range.
    let span = S::of(LATTICE_SPAN_SDS) * sd;
    let tol = S::of(1e-12) * S::one().max(level);
    for i in 0..=1000 {
        let x = -span + S::of(2.0) * span * S::of_usize(i) / S::of(1000.0);
        let q = (x / step).round() * step;
        let attained = distortion.rho(x, q)?;
        if attained > level + tol {
            return Err(Error::numerical(format!(
                "lattice step {step} misses the target at {x}: distortion {attained}"
            )));
        }
    }
    // Moments of the induced cell law; cells beyond the span hold less than
    // exp(-91) of mass between them and cannot move the sums.
    let cells = (span / step).as_f64().ceil() as i64 + 1;
    let mut entropy = 0.0f64;
    let mut m2 = 0.0f64;
    for m in -cells..=cells {
        let mass = lattice_cell_mass(m as f64, step.as_f64(), variance.as_f64());
        if mass > 0.0 {
            let len = -mass.log2();
            entropy += mass * len;
            m2 += mass * len * len;
        }
    }
    if !entropy.is_finite() || !m2.is_finite() {
        return Err(Error::numerical(format!(
            "cell-law moments diverged: entropy {entropy}, second moment {m2}"
        )));
    }
    Ok(ScalarQuantizerWQC {
        kind: Kind::Lattice { step, variance },
        entropy_bits: S::of(entropy),
        length_second_moment: S::of(m2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DiscreteDistribution;

    fn bern(p: f64) -> SourceMarginal<f64> {
        SourceMarginal::Discrete(DiscreteDistribution::bernoulli(p).unwrap())
    }

    #[test]
    fn discrete_identity_quantizer_qualifies_at_any_level() {
        for level in [0.0f64, 0.1, 0.5] {
            let q = wqc_build(&bern(0.3), &Distortion::Hamming, level).unwrap();
            assert_eq!(q.quantize(0.0).unwrap(), 0.0);
            assert_eq!(q.quantize(1.0).unwrap(), 1.0);
            // mu = P itself, so the lengths are ceil(-log2 p)
            assert_eq!(q.code_length_bits(1.0).unwrap(), 2.0, "ceil(-log2 0.3)");
            assert_eq!(q.code_length_bits(0.0).unwrap(), 1.0, "ceil(-log2 0.7)");
            let h = 0.3f64 * (1.0 / 0.3f64).log2() + 0.7 * (1.0 / 0.7f64).log2();
            assert!((q.entropy_bits() - h).abs() < 1e-12);
        }
        assert!(wqc_build(&bern(0.3), &Distortion::Hamming, 0.5)
            .unwrap()
            .quantize(2.0)
            .is_err());
    }

    #[test]
    fn discrete_merging_when_the_level_allows() {
        // letters 0 and 0.1 are within squared error 0.01 of each other,
        // but the identity always wins the argmin: rho(x, x) = 0.
        let d = SourceMarginal::Discrete(
            DiscreteDistribution::new(vec![0.0f64, 0.1], vec![0.5, 0.5]).unwrap(),
        );
        let q = wqc_build(&d, &Distortion::SquaredError, 0.02).unwrap();
        assert_eq!(q.quantize(0.0).unwrap(), 0.0);
        assert_eq!(q.quantize(0.1).unwrap(), 0.1);
        assert_eq!(q.cell_mass(0.0).unwrap(), 0.5);
    }

    #[test]
    fn negative_level_is_rejected() {
        let d = SourceMarginal::Discrete(
            DiscreteDistribution::new(vec![0.0f64, 3.0], vec![0.5, 0.5]).unwrap(),
        );
        assert!(wqc_build(&d, &Distortion::SquaredError, -1.0).is_err());
    }

    #[test]
    fn quarter_level_gives_unit_step() {
        let g = SourceMarginal::Gaussian { variance: 1.0f64 };
        let q = wqc_build(&g, &Distortion::SquaredError, 0.25).unwrap();
        // step 1: everything within half a unit of a lattice point
        assert_eq!(q.quantize(0.4).unwrap(), 0.0);
        assert_eq!(q.quantize(0.6).unwrap(), 1.0);
        assert_eq!(q.quantize(-1.49).unwrap(), -1.0);
        let x = 0.37f64;
        let r = q.quantize(x).unwrap();
        assert!((x - r) * (x - r) <= 0.25);
    }

    #[test]
    fn gaussian_lattice_moments_are_finite_and_sane() {
        let g = SourceMarginal::Gaussian { variance: 1.0f64 };
        let q = wqc_build(&g, &Distortion::SquaredError, 0.25).unwrap();
        let h = q.entropy_bits();
        let m2 = q.length_second_moment();
        assert!(h.is_finite() && h > 0.0, "entropy {h}");
        assert!(m2.is_finite() && m2 > 0.0, "second moment {m2}");
        // entropy of a step-1 quantized standard normal is close to the
        // differential entropy 0.5 log2(2 pi e) = 2.047; coarse cells trim it
        assert!((h - 2.0).abs() < 0.2, "entropy {h}");
        // lengths concentrate near h, so the second moment stays moderate
        assert!(m2 >= h * h && m2 < 40.0, "second moment {m2}");
    }

    #[test]
    fn deep_tail_lengths_stay_finite() {
        let g = SourceMarginal::Gaussian { variance: 1.0f64 };
        let q = wqc_build(&g, &Distortion::SquaredError, 0.25).unwrap();
        let near = q.code_length_bits(0.2f64).unwrap();
        assert!(near >= 1.0 && near < 10.0);
        let far = q.code_length_bits(45.0f64).unwrap();
        assert!(far.is_finite() && far > 1000.0, "tail length {far}");
        let extreme = q.code_length_bits(300.0f64).unwrap();
        assert!(extreme.is_finite() && extreme > far);
    }

    #[test]
    fn power_distortion_sets_the_step_from_the_inverse() {
        let g = SourceMarginal::Gaussian { variance: 1.0f64 };
        let q = wqc_build(&g, &Distortion::power(1.0f64).unwrap(), 0.5).unwrap();
        // |z| <= 0.5 at the half step, so the step is 1
        assert_eq!(q.quantize(0.4).unwrap(), 0.0);
        assert_eq!(q.quantize(0.6).unwrap(), 1.0);
    }

    #[test]
    fn continuous_zero_level_and_hamming_are_rejected() {
        let g = SourceMarginal::Gaussian { variance: 1.0f64 };
        assert!(wqc_build(&g, &Distortion::SquaredError, 0.0).is_err());
        assert!(wqc_build(&g, &Distortion::Hamming, 0.5).is_err());
    }
}
