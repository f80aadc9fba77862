//! Source laws and codebook laws.
//!
//! Three families appear throughout: finite distributions with real-valued
//! letters, centered Gaussians, and the exponential family
//! `f_s(y) = B_s exp(-s |y|^r)`. Sources may additionally carry Markov
//! memory; codebooks are always memoryless. Constructors validate, so a
//! value of any of these types is usable without further checks.

use crate::error::{guard_size, Error, Result};
use crate::numeric::quad::adaptive_simpson;
use crate::rng::{standard_normal, uniform_half_open, uniform_open_closed, CumulativeTable};
use crate::scalar::{entropy_bits, Scalar};
use rand_core::RngCore;

/// Tolerance for a probability vector summing to one.
pub const PMF_SUM_TOL: f64 = 1e-12;
/// Tolerance for Markov row sums and the stationarity residual.
pub const MARKOV_TOL: f64 = 1e-10;
/// Tolerance for the exponential-family normalizer integrating to one.
pub const NORMALIZER_TOL: f64 = 1e-8;
/// Hard ceiling on enumerated k-block alphabets.
pub const KBLOCK_GUARD: u128 = 1_000_000;

/// Finite distribution over distinct real-valued letters.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution<S: Scalar> {
    support: Vec<S>,
    probs: Vec<S>,
    table: CumulativeTable,
}

impl<S: Scalar> DiscreteDistribution<S> {
    /// Validates and builds: equal lengths, distinct support letters,
    /// nonnegative masses summing to 1 within `PMF_SUM_TOL`.
    pub fn new(support: Vec<S>, probs: Vec<S>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::model(format!(
                "support ({}) and probs ({}) must be equal-length and nonempty",
                support.len(),
                probs.len()
            )));
        }
        for (i, &a) in support.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::model("support letters must be finite"));
            }
            if support[i + 1..].contains(&a) {
                return Err(Error::model(format!("support letter {a} appears twice")));
            }
        }
        let mut sum = S::zero();
        for &p in &probs {
            if !(p >= S::zero()) || !p.is_finite() {
                return Err(Error::model(format!("mass {p} is not a probability")));
            }
            sum += p;
        }
        if (sum - S::one()).abs().as_f64() > PMF_SUM_TOL {
            return Err(Error::model(format!("masses sum to {sum}, not 1")));
        }
        let table = CumulativeTable::new(&probs);
        Ok(DiscreteDistribution {
            support,
            probs,
            table,
        })
    }

    /// Two-letter distribution on {0, 1} with `Pr(1) = p`.
    pub fn bernoulli(p: S) -> Result<Self> {
        Self::new(vec![S::zero(), S::one()], vec![S::one() - p, p])
    }

    /// Uniform distribution over the given letters.
    pub fn uniform(support: Vec<S>) -> Result<Self> {
        let w = S::one() / S::of_usize(support.len().max(1));
        let probs = vec![w; support.len()];
        Self::new(support, probs)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[S] {
        &self.support
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    /// Index of an exact support letter, if present.
    pub fn index_of(&self, point: S) -> Option<usize> {
        self.support.iter().position(|&a| a == point)
    }

    /// Mass at a point of the support; a point outside it is a domain error.
    pub fn mass(&self, point: S) -> Result<S> {
        self.index_of(point)
            .map(|i| self.probs[i])
            .ok_or_else(|| Error::domain(format!("{point} is not a support letter")))
    }

    pub fn entropy_bits(&self) -> S {
        entropy_bits(&self.probs)
    }

    pub fn mean(&self) -> S {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| a * p)
            .sum()
    }

    /// Draws a letter index. Consumes one raw `u64`.
    pub fn sample_index(&self, rng: &mut impl RngCore) -> usize {
        self.table.sample(rng)
    }

    /// Draws a letter value. Consumes one raw `u64`.
    pub fn sample(&self, rng: &mut impl RngCore) -> S {
        self.support[self.table.sample(rng)]
    }
}

/// Exponential-family density `f_s(y) = B_s exp(-s |y|^r)` on the real line.
///
/// `r = 2` recovers a centered Gaussian and `r = 1` a Laplace law. The
/// normalizer is closed-form for those two and quadrature-derived otherwise;
/// construction always verifies the density integrates to 1.
#[derive(Debug, Clone)]
pub struct ExpFamily<S: Scalar> {
    exponent: S,
    scale: S,
    normalizer: S,
}

impl<S: Scalar> ExpFamily<S> {
    pub fn new(exponent: S, scale: S) -> Result<Self> {
        if !(exponent >= S::one()) || !exponent.is_finite() {
            return Err(Error::model(format!(
                "shape exponent must satisfy r >= 1, got {exponent}"
            )));
        }
        if !(scale > S::zero()) || !scale.is_finite() {
            return Err(Error::model(format!("scale must be positive, got {scale}")));
        }
        let normalizer = if exponent == S::of(2.0) {
            // integral of exp(-s y^2) is sqrt(pi/s)
            (scale / S::PI()).sqrt()
        } else if exponent == S::one() {
            // integral of exp(-s |y|) is 2/s
            scale / S::of(2.0)
        } else {
            let mass = half_line_exp_integral(exponent, scale)? * S::of(2.0);
            S::one() / mass
        };
        let fam = ExpFamily {
            exponent,
            scale,
            normalizer,
        };
        // Whole-line mass check, closed forms included.
        let half = half_line_exp_integral(exponent, scale)?;
        let total = (half * S::of(2.0) * normalizer).as_f64();
        if (total - 1.0).abs() > NORMALIZER_TOL {
            return Err(Error::model(format!(
                "density integrates to {total}, not 1"
            )));
        }
        Ok(fam)
    }

    pub fn exponent(&self) -> S {
        self.exponent
    }

    pub fn scale(&self) -> S {
        self.scale
    }

    /// The density prefactor `B_s`, which is also the density's peak value.
    pub fn normalizer(&self) -> S {
        self.normalizer
    }

    /// Shape function `g(y) = |y|^r`.
    pub fn shape(&self, y: S) -> S {
        y.abs().powf(self.exponent)
    }

    pub fn density(&self, y: S) -> S {
        self.normalizer * (-self.scale * self.shape(y)).exp()
    }

    /// Point beyond which the tail mass is below `exp(-60)`: `s g(y) >= 60`.
    pub fn tail_cutoff(&self) -> S {
        (S::of(60.0) / self.scale).powf(S::one() / self.exponent)
    }

    /// Draws one sample. `r = 1, 2` use exact inversion/transform; other `r`
    /// use rejection from a Laplace envelope (variable draw count).
    pub fn sample(&self, rng: &mut impl RngCore) -> S {
        let two = S::of(2.0);
        if self.exponent == two {
            // variance 1/(2s)
            let sd = (S::one() / (two * self.scale)).sqrt();
            return sd * standard_normal(rng);
        }
        if self.exponent == S::one() {
            return self.sample_laplace_magnitude(rng) * sign_draw::<S>(rng);
        }
        // Rejection: magnitude T ~ Exp(theta) with theta = s^(1/r); accept
        // with probability exp(-s t^r + theta t - m) where m is the max of
        // the log-ratio, so the bound is tight at the touching point.
        let theta = self.scale.powf(S::one() / self.exponent);
        let r = self.exponent;
        let s = self.scale;
        // maximize theta t - s t^r at t* = (theta/(s r))^(1/(r-1))
        let t_star = (theta / (s * r)).powf(S::one() / (r - S::one()));
        let m = theta * t_star - s * t_star.powf(r);
        loop {
            let u: S = uniform_open_closed(rng);
            let t = -u.ln() / theta;
            let accept: S = uniform_half_open(rng);
            if accept.ln() <= -s * t.powf(r) + theta * t - m {
                return t * sign_draw::<S>(rng);
            }
        }
    }

    fn sample_laplace_magnitude(&self, rng: &mut impl RngCore) -> S {
        let u: S = uniform_open_closed(rng);
        -u.ln() / self.scale
    }
}

fn sign_draw<S: Scalar>(rng: &mut impl RngCore) -> S {
    if rng.next_u64() & 1 == 0 {
        S::one()
    } else {
        -S::one()
    }
}

/// Integral of `exp(-s y^r)` over `[0, cutoff]` where the neglected tail is
/// below `exp(-60)`.
fn half_line_exp_integral<S: Scalar>(r: S, s: S) -> Result<S> {
    let cutoff = (S::of(60.0) / s).powf(S::one() / r);
    adaptive_simpson(|y: S| (-s * y.abs().powf(r)).exp(), S::zero(), cutoff, S::of(1e-10))
}

/// Per-letter codebook law: the distribution each codeword letter is drawn
/// from, independent of the source.
#[derive(Debug, Clone)]
pub enum CodebookLaw<S: Scalar> {
    DiscretePmf(DiscreteDistribution<S>),
    Gaussian { tau_sq: S },
    ExponentialFamily(ExpFamily<S>),
}

impl<S: Scalar> CodebookLaw<S> {
    pub fn gaussian(tau_sq: S) -> Result<Self> {
        if !(tau_sq > S::zero()) || !tau_sq.is_finite() {
            return Err(Error::model(format!(
                "codebook variance must be positive and finite, got {tau_sq}"
            )));
        }
        Ok(CodebookLaw::Gaussian { tau_sq })
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, CodebookLaw::DiscretePmf(_))
    }

    /// Mass (discrete) or density (continuous) at a point.
    pub fn mass_or_density(&self, point: S) -> Result<S> {
        match self {
            CodebookLaw::DiscretePmf(d) => d.mass(point),
            CodebookLaw::Gaussian { tau_sq } => {
                let norm = (S::of(2.0) * S::PI() * *tau_sq).sqrt();
                Ok((-point * point / (S::of(2.0) * *tau_sq)).exp() / norm)
            }
            CodebookLaw::ExponentialFamily(f) => Ok(f.density(point)),
        }
    }

    /// Peak value of the density (continuous laws only).
    pub fn density_peak(&self) -> Result<S> {
        match self {
            CodebookLaw::DiscretePmf(_) => Err(Error::domain(
                "density peak undefined for a discrete codebook law",
            )),
            CodebookLaw::Gaussian { tau_sq } => {
                Ok(S::one() / (S::of(2.0) * S::PI() * *tau_sq).sqrt())
            }
            CodebookLaw::ExponentialFamily(f) => Ok(f.normalizer()),
        }
    }

    /// Draws one letter.
    pub fn sample(&self, rng: &mut impl RngCore) -> S {
        match self {
            CodebookLaw::DiscretePmf(d) => d.sample(rng),
            CodebookLaw::Gaussian { tau_sq } => tau_sq.sqrt() * standard_normal(rng),
            CodebookLaw::ExponentialFamily(f) => f.sample(rng),
        }
    }

    /// Fills a block with i.i.d. letters.
    pub fn sample_block(&self, n: usize, rng: &mut impl RngCore) -> Vec<S> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// First-order marginal of a source: the `P` that the single-letter theory
/// works with.
#[derive(Debug, Clone)]
pub enum SourceMarginal<S: Scalar> {
    Discrete(DiscreteDistribution<S>),
    Gaussian { variance: S },
}

impl<S: Scalar> SourceMarginal<S> {
    pub fn mass_or_density(&self, point: S) -> Result<S> {
        match self {
            SourceMarginal::Discrete(d) => d.mass(point),
            SourceMarginal::Gaussian { variance } => {
                let norm = (S::of(2.0) * S::PI() * *variance).sqrt();
                Ok((-point * point / (S::of(2.0) * *variance)).exp() / norm)
            }
        }
    }

    /// Second moment `E[X^2]` (mean is 0 for the Gaussian variant).
    pub fn second_moment(&self) -> S {
        match self {
            SourceMarginal::Discrete(d) => d
                .support()
                .iter()
                .zip(d.probs())
                .map(|(&a, &p)| p * a * a)
                .sum(),
            SourceMarginal::Gaussian { variance } => *variance,
        }
    }
}

/// Finite-state Markov chain with real-valued state labels, started from
/// its stationary distribution.
#[derive(Debug, Clone)]
pub struct MarkovChain<S: Scalar> {
    states: Vec<S>,
    transition: Vec<Vec<S>>,
    stationary: Vec<S>,
    row_tables: Vec<CumulativeTable>,
    start_table: CumulativeTable,
}

impl<S: Scalar> MarkovChain<S> {
    /// Validates rows and solves for the stationary law.
    pub fn new(states: Vec<S>, transition: Vec<Vec<S>>) -> Result<Self> {
        let m = states.len();
        if m == 0 || transition.len() != m {
            return Err(Error::model(format!(
                "transition matrix must be {m}x{m} to match the state count"
            )));
        }
        for (i, &a) in states.iter().enumerate() {
            if states[i + 1..].contains(&a) {
                return Err(Error::model(format!("state label {a} appears twice")));
            }
        }
        for row in &transition {
            if row.len() != m {
                return Err(Error::model("transition rows must match the state count"));
            }
            let mut sum = S::zero();
            for &t in row {
                if !(t >= S::zero()) || !t.is_finite() {
                    return Err(Error::model(format!("transition entry {t} invalid")));
                }
                sum += t;
            }
            if (sum - S::one()).abs().as_f64() > MARKOV_TOL {
                return Err(Error::model(format!("transition row sums to {sum}, not 1")));
            }
        }
        let stationary = solve_stationary(&transition)?;
        // Residual check of pi T = pi; the solver leaves this near machine
        // epsilon, but the tolerance is part of the contract.
        for j in 0..m {
            let mut pj = S::zero();
            for i in 0..m {
                pj += stationary[i] * transition[i][j];
            }
            if (pj - stationary[j]).abs().as_f64() > MARKOV_TOL {
                return Err(Error::model(
                    "no stationary law found within tolerance; chain may be ill-conditioned",
                ));
            }
        }
        let row_tables = transition.iter().map(|r| CumulativeTable::new(r)).collect();
        let start_table = CumulativeTable::new(&stationary);
        Ok(MarkovChain {
            states,
            transition,
            stationary,
            row_tables,
            start_table,
        })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn transition(&self) -> &[Vec<S>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[S] {
        &self.stationary
    }
}

/// Solves `pi T = pi`, `sum pi = 1` by Gaussian elimination on the transpose
/// system with the normalization replacing one redundant equation.
fn solve_stationary<S: Scalar>(transition: &[Vec<S>]) -> Result<Vec<S>> {
    let m = transition.len();
    // Unknown pi: equations (T^t - I) pi = 0 for rows 0..m-1, replaced last
    // row by sum(pi) = 1.
    let mut a = vec![vec![S::zero(); m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = transition[j][i] - if i == j { S::one() } else { S::zero() };
        }
    }
    for j in 0..m {
        a[m - 1][j] = S::one();
    }
    a[m - 1][m] = S::one();
    // Partial-pivot elimination.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r1, &r2| {
                a[r1][col]
                    .abs()
                    .partial_cmp(&a[r2][col].abs())
                    .expect("finite pivots")
            })
            .expect("nonempty pivot range");
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < S::of(1e-14) {
            return Err(Error::model(
                "transition matrix is singular; no unique stationary law",
            ));
        }
        for row in 0..m {
            if row != col {
                let factor = a[row][col] / p;
                for k in col..=m {
                    let v = a[col][k];
                    a[row][k] -= factor * v;
                }
            }
        }
    }
    let mut pi = vec![S::zero(); m];
    for i in 0..m {
        pi[i] = a[i][m] / a[i][i];
        // Clamp parasitic negatives from elimination roundoff.
        if pi[i] < S::zero() {
            pi[i] = S::zero();
        }
    }
    let total: S = pi.iter().copied().sum();
    for v in &mut pi {
        *v /= total;
    }
    Ok(pi)
}

/// A source: i.i.d. discrete, i.i.d. centered Gaussian, or a stationary
/// finite-state Markov chain.
#[derive(Debug, Clone)]
pub enum SourceModel<S: Scalar> {
    DiscreteIid(DiscreteDistribution<S>),
    GaussianIid { variance: S },
    MarkovChain(MarkovChain<S>),
}

impl<S: Scalar> SourceModel<S> {
    pub fn gaussian(variance: S) -> Result<Self> {
        if !(variance > S::zero()) || !variance.is_finite() {
            return Err(Error::model(format!(
                "source variance must be positive and finite, got {variance}"
            )));
        }
        Ok(SourceModel::GaussianIid { variance })
    }

    /// First-order marginal `P`.
    pub fn marginal(&self) -> SourceMarginal<S> {
        match self {
            SourceModel::DiscreteIid(d) => SourceMarginal::Discrete(d.clone()),
            SourceModel::GaussianIid { variance } => SourceMarginal::Gaussian {
                variance: *variance,
            },
            SourceModel::MarkovChain(c) => {
                let d = DiscreteDistribution::new(c.states.clone(), c.stationary.clone())
                    .expect("stationary law is a valid distribution");
                SourceMarginal::Discrete(d)
            }
        }
    }

    /// Samples a block of length `n`. Markov chains start stationary.
    pub fn sample_block(&self, n: usize, rng: &mut impl RngCore) -> Vec<S> {
        match self {
            SourceModel::DiscreteIid(d) => (0..n).map(|_| d.sample(rng)).collect(),
            SourceModel::GaussianIid { variance } => {
                let sd = variance.sqrt();
                (0..n).map(|_| sd * standard_normal(rng)).collect()
            }
            SourceModel::MarkovChain(c) => {
                let mut out = Vec::with_capacity(n);
                if n == 0 {
                    return out;
                }
                let mut state = c.start_table.sample(rng);
                out.push(c.states[state]);
                for _ in 1..n {
                    state = c.row_tables[state].sample(rng);
                    out.push(c.states[state]);
                }
                out
            }
        }
    }

    /// Exact joint law of `k` consecutive symbols.
    pub fn k_block_marginal(&self, k: usize) -> Result<KBlockMarginal<S>> {
        if k == 0 {
            return Err(Error::model("block length k must be at least 1"));
        }
        match self {
            SourceModel::GaussianIid { variance } => Ok(KBlockMarginal::GaussianIid {
                variance: *variance,
                k,
            }),
            SourceModel::DiscreteIid(d) => {
                let idx = enumerate_tuples(d.len(), k)?;
                let probs = idx
                    .iter()
                    .map(|t| t.iter().map(|&i| d.probs()[i]).product())
                    .collect();
                Ok(KBlockMarginal::Discrete(DiscreteBlock {
                    k,
                    letters: d.support().to_vec(),
                    tuples: idx,
                    probs,
                }))
            }
            SourceModel::MarkovChain(c) => {
                let idx = enumerate_tuples(c.states.len(), k)?;
                let probs = idx
                    .iter()
                    .map(|t| {
                        let mut p = c.stationary[t[0]];
                        for w in t.windows(2) {
                            p *= c.transition[w[0]][w[1]];
                        }
                        p
                    })
                    .collect();
                Ok(KBlockMarginal::Discrete(DiscreteBlock {
                    k,
                    letters: c.states.clone(),
                    tuples: idx,
                    probs,
                }))
            }
        }
    }
}

/// Exact k-block law of a discrete source: every k-tuple with its mass.
#[derive(Debug, Clone)]
pub struct DiscreteBlock<S: Scalar> {
    pub k: usize,
    /// Base alphabet the tuple entries index into.
    pub letters: Vec<S>,
    /// All |A|^k index tuples in lexicographic order.
    pub tuples: Vec<Vec<usize>>,
    pub probs: Vec<S>,
}

impl<S: Scalar> DiscreteBlock<S> {
    /// Mass of one tuple given by base-alphabet indices.
    pub fn mass_of(&self, tuple: &[usize]) -> Option<S> {
        self.tuples
            .iter()
            .position(|t| t == tuple)
            .map(|i| self.probs[i])
    }

    /// Marginal law of coordinate `coord`.
    pub fn coordinate_marginal(&self, coord: usize) -> Result<DiscreteDistribution<S>> {
        if coord >= self.k {
            return Err(Error::domain(format!(
                "coordinate {coord} out of range for k = {}",
                self.k
            )));
        }
        let mut probs = vec![S::zero(); self.letters.len()];
        for (t, &p) in self.tuples.iter().zip(&self.probs) {
            probs[t[coord]] += p;
        }
        DiscreteDistribution::new(self.letters.clone(), probs)
    }
}

/// Joint law of `k` consecutive source symbols.
#[derive(Debug, Clone)]
pub enum KBlockMarginal<S: Scalar> {
    Discrete(DiscreteBlock<S>),
    /// i.i.d. Gaussian blocks are fully described by a scalar variance:
    /// the covariance is `variance` times the identity.
    GaussianIid { variance: S, k: usize },
}

/// Lexicographic enumeration of all `m^k` index tuples, guarded.
fn enumerate_tuples(m: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    let count = (m as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    guard_size("k-block alphabet", count, KBLOCK_GUARD)?;
    let count = count as usize;
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; k];
    loop {
        out.push(current.clone());
        // Odometer increment, most significant coordinate first.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < m {
                break;
            }
            current[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFamily;

    #[test]
    fn discrete_constructor_validates() {
        assert!(DiscreteDistribution::new(vec![0.0_f64, 1.0], vec![0.3, 0.7]).is_ok());
        // duplicate letters
        assert!(DiscreteDistribution::new(vec![1.0_f64, 1.0], vec![0.5, 0.5]).is_err());
        // bad sum
        assert!(DiscreteDistribution::new(vec![0.0_f64, 1.0], vec![0.5, 0.6]).is_err());
        // negative mass
        assert!(DiscreteDistribution::new(vec![0.0_f64, 1.0], vec![-0.1, 1.1]).is_err());
        // length mismatch
        assert!(DiscreteDistribution::new(vec![0.0_f64], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn degenerate_pmf_sampling_is_constant() {
        let d = DiscreteDistribution::new(vec![0.0_f64, 1.0], vec![1.0, 0.0]).unwrap();
        let fam = StreamFamily::new(99, "t");
        let mut rng = fam.stream(0);
        for _ in 0..5 {
            assert_eq!(d.sample(&mut rng), 0.0, "all mass on letter 0");
        }
    }

    #[test]
    fn gaussian_sampler_variance_within_clt_band() {
        let law = CodebookLaw::gaussian(4.0_f64).unwrap();
        let fam = StreamFamily::new(7, "clt");
        let mut rng = fam.stream(0);
        let n = 1_000_000usize;
        let mut s2 = 0.0;
        for _ in 0..n {
            let y = law.sample(&mut rng);
            s2 += y * y;
        }
        let var = s2 / n as f64;
        // Var of Y^2 for N(0, 4) is 2 * 16; three sigma of the mean.
        let band = 3.0 * (2.0 * 16.0 / n as f64).sqrt();
        assert!((var - 4.0).abs() <= band, "empirical variance {var}");
    }

    #[test]
    fn markov_frequencies_match_stationary() {
        let chain = MarkovChain::new(
            vec![0.0_f64, 1.0],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap();
        // stationary of this chain: (2/3, 1/3)
        assert!((chain.stationary()[0] - 2.0 / 3.0).abs() < 1e-12);
        let model = SourceModel::MarkovChain(chain);
        let fam = StreamFamily::new(5, "markov");
        let mut rng = fam.stream(0);
        let block = model.sample_block(100_000, &mut rng);
        let ones = block.iter().filter(|&&x| x == 1.0).count() as f64 / 1e5;
        assert!((ones - 1.0 / 3.0).abs() < 0.01, "state-1 frequency {ones}");
    }

    #[test]
    fn markov_rejects_bad_rows() {
        assert!(MarkovChain::new(vec![0.0_f64, 1.0], vec![vec![0.9, 0.2], vec![0.1, 0.9]]).is_err());
        assert!(MarkovChain::new(vec![0.0_f64], vec![vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn exp_family_recovers_gaussian() {
        // g(y) = y^2, s = 1/2 integrates exp(-y^2/2): B = 1/sqrt(2 pi).
        let f = ExpFamily::new(2.0_f64, 0.5).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((f.normalizer() - expect).abs() < 1e-10);
        // Pointwise match with Gaussian(1) on a grid.
        let g = CodebookLaw::gaussian(1.0_f64).unwrap();
        for i in 0..50 {
            let y = -5.0 + 0.2 * i as f64;
            let d1 = f.density(y);
            let d2 = g.mass_or_density(y).unwrap();
            assert!((d1 - d2).abs() < 1e-10, "densities differ at {y}");
        }
    }

    #[test]
    fn exp_family_laplace_normalizer() {
        let f = ExpFamily::new(1.0_f64, 2.0).unwrap();
        assert!((f.normalizer() - 1.0).abs() < 1e-12, "s/2 with s = 2");
    }

    #[test]
    fn exp_family_general_r_normalizes_and_samples() {
        let f = ExpFamily::new(4.0_f64, 0.3).unwrap();
        // E[g(Y)] for f_s: differentiate -ln B_s; spot check by Monte Carlo.
        let fam = StreamFamily::new(11, "expfam");
        let mut rng = fam.stream(0);
        let n = 200_000;
        let mut mg = 0.0;
        for _ in 0..n {
            let y = f.sample(&mut rng);
            mg += f.shape(y);
        }
        mg /= n as f64;
        // Exact E|Y|^4 under B exp(-0.3 y^4): by substitution u = s y^4, the
        // mean of g is Gamma(5/4)-free: E g = (1/(s r)) = 1/(0.3*4).
        let exact = 1.0 / (0.3 * 4.0);
        assert!((mg - exact).abs() < 0.02, "mean shape {mg} vs {exact}");
    }

    #[test]
    fn kblock_of_iid_is_product() {
        let d = DiscreteDistribution::new(vec![0.0_f64, 1.0], vec![0.3, 0.7]).unwrap();
        let m = SourceModel::DiscreteIid(d);
        let kb = m.k_block_marginal(2).unwrap();
        let KBlockMarginal::Discrete(b) = kb else {
            panic!("discrete expected")
        };
        assert_eq!(b.tuples.len(), 4);
        assert!((b.mass_of(&[0, 1]).unwrap() - 0.21).abs() < 1e-15);
        assert!((b.mass_of(&[1, 1]).unwrap() - 0.49).abs() < 1e-15);
    }

    #[test]
    fn kblock_of_markov_uses_chain_rule() {
        let chain = MarkovChain::new(
            vec![0.0_f64, 1.0],
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        )
        .unwrap();
        let m = SourceModel::MarkovChain(chain);
        let kb = m.k_block_marginal(3).unwrap();
        let KBlockMarginal::Discrete(b) = kb else {
            panic!("discrete expected")
        };
        // symmetric flip-0.1 chain: stationary (1/2, 1/2);
        // mass(0,0,0) = 0.5 * 0.9 * 0.9
        assert!((b.mass_of(&[0, 0, 0]).unwrap() - 0.405).abs() < 1e-12);
        // two-block case: pmf(a, b) = pi(a) T(a, b)
        let kb2 = m.k_block_marginal(2).unwrap();
        let KBlockMarginal::Discrete(b2) = kb2 else {
            panic!("discrete expected")
        };
        assert!((b2.mass_of(&[0, 1]).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn kblock_marginalizes_back_to_p1() {
        let chain = MarkovChain::new(
            vec![0.0_f64, 1.0, 2.0],
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.1, 0.6, 0.3],
                vec![0.2, 0.2, 0.6],
            ],
        )
        .unwrap();
        let stationary = chain.stationary().to_vec();
        let m = SourceModel::MarkovChain(chain);
        let kb = m.k_block_marginal(3).unwrap();
        let KBlockMarginal::Discrete(b) = kb else {
            panic!("discrete expected")
        };
        for coord in 0..3 {
            let marg = b.coordinate_marginal(coord).unwrap();
            for (got, want) in marg.probs().iter().zip(&stationary) {
                assert!(
                    (got - want).abs() < 1e-10,
                    "coordinate {coord}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn kblock_guard_trips() {
        let d = DiscreteDistribution::uniform((0..100).map(|i| i as f64).collect()).unwrap();
        let m = SourceModel::DiscreteIid(d);
        assert!(matches!(
            m.k_block_marginal(4),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn sample_determinism_across_clones() {
        let law = CodebookLaw::DiscretePmf(
            DiscreteDistribution::new(vec![0.0_f64, 1.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
        );
        let fam = StreamFamily::new(123, "det");
        let a = law.sample_block(64, &mut fam.stream(9));
        let b = law.sample_block(64, &mut fam.stream(9));
        assert_eq!(a, b);
    }
}
