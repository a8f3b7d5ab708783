//! Supercritical regime: truncated power-law sampling, exponent estimation,
//! threshold detection, the income boost, and total-income share arithmetic.
//!
//! Exponents are reported in the density convention (`p(m) ∝ m^exponent`,
//! default −4). The matching complementary cumulative exponent is
//! `exponent + 1` (−3: "probability inversely proportional to income cubed").

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::real::{from_i64, lit, Real};

/// Minimum number of tail observations accepted by [`fit_exponent`].
pub const MIN_TAIL_OBSERVATIONS: usize = 100;
/// Consecutive divergent grid points required by [`detect_threshold`].
pub const DEFAULT_PERSISTENCE: usize = 3;

const BINS_PER_DECADE: f64 = 10.0;
const MIN_BIN_COUNT: usize = 10;

/// Un-boosted income produced by the kinetic model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ModelIncome<T>(pub T);

/// Income as reported, after the supercritical boost has been applied.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ReportedIncome<T>(pub T);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailConfig<T> {
    /// Density exponent, below −1.
    pub exponent: T,
    /// Upper cap of the tail, dimensionless.
    pub m_max: T,
    pub boost_factor: T,
}

impl<T: Real> Default for TailConfig<T> {
    fn default() -> Self {
        Self {
            exponent: lit(-4.0),
            m_max: lit(1000.0),
            boost_factor: lit(1.35),
        }
    }
}

impl<T: Real> TailConfig<T> {
    pub fn validate(&self, threshold: T) -> Result<()> {
        if !(self.exponent < -T::one()) {
            return Err(Error::InvalidParams(format!(
                "tail exponent must be below -1, got {}",
                self.exponent
            )));
        }
        if !(threshold > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "tail threshold must be positive, got {threshold}"
            )));
        }
        if !(self.m_max > threshold) {
            return Err(Error::InvalidParams(format!(
                "m_max {} must exceed threshold {threshold}",
                self.m_max
            )));
        }
        Ok(())
    }

    /// Exponent of the complementary cumulative distribution.
    pub fn cumulative_exponent(&self) -> T {
        self.exponent + T::one()
    }

    /// Analytic CDF of the truncated power law on `[threshold, m_max]`.
    pub fn cdf(&self, threshold: T, m: T) -> T {
        if m <= threshold {
            return T::zero();
        }
        if m >= self.m_max {
            return T::one();
        }
        let b = self.cumulative_exponent();
        let lo = threshold.powf(b);
        let hi = if self.m_max.is_infinite() {
            T::zero()
        } else {
            self.m_max.powf(b)
        };
        (lo - m.powf(b)) / (lo - hi)
    }

    /// Analytic mean of the truncated power law.
    pub fn mean(&self, threshold: T) -> T {
        let b = self.cumulative_exponent();
        let c = b + T::one();
        let hi_b = if self.m_max.is_infinite() {
            T::zero()
        } else {
            self.m_max.powf(b)
        };
        let norm = (threshold.powf(b) - hi_b) / (-b);
        let hi_c = if self.m_max.is_infinite() {
            T::zero()
        } else {
            self.m_max.powf(c)
        };
        // ∫ m·m^e dm = (hi^(e+2) − lo^(e+2)) / (e+2)
        ((hi_c - threshold.powf(c)) / c) / norm
    }
}

/// `n` i.i.d. draws from the truncated power law on `[threshold, m_max]` by
/// inverse-CDF sampling; identical output for identical seeds.
pub fn tail_sample<T: Real>(
    n: usize,
    threshold: T,
    config: &TailConfig<T>,
    seed: u64,
) -> Result<Vec<T>> {
    config.validate(threshold)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = config
        .cumulative_exponent()
        .to_f64()
        .expect("finite exponent");
    let lo = threshold.to_f64().expect("finite threshold").powf(b);
    let m_max = config.m_max.to_f64().unwrap_or(f64::INFINITY);
    let hi = if m_max.is_infinite() {
        0.0
    } else {
        m_max.powf(b)
    };
    let inv_b = 1.0 / b;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let x = (lo + u * (hi - lo)).powf(inv_b);
            lit::<T>(x).max(threshold).min(config.m_max)
        })
        .collect())
}

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
pub fn ks_statistic<T: Real, F: Fn(T) -> T>(samples: &[T], cdf: F) -> T {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n: T = from_i64(xs.len() as i64);
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = from_i64::<T>(i as i64 + 1) / n - f;
            let below = f - from_i64::<T>(i as i64) / n;
            above.max(below)
        })
        .fold(T::zero(), T::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit<T> {
    /// Log-log least-squares slope of the binned density (density convention).
    pub regression: T,
    /// Continuous maximum-likelihood estimate (density convention).
    pub maximum_likelihood: Option<T>,
    pub observations: usize,
    pub bins_used: usize,
}

impl<T: Real> ExponentFit<T> {
    /// Regression estimate in the complementary cumulative convention.
    pub fn cumulative_exponent(&self) -> T {
        self.regression + T::one()
    }
}

/// A histogram bin `[low, high)` with its mass (count or fraction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBin<T> {
    pub low: T,
    pub high: T,
    pub mass: T,
}

/// Weighted least-squares slope of `(x, y, w)` points.
fn least_squares_slope<T: Real>(points: &[(T, T, T)]) -> T {
    let n: T = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<T>() / n;
    let my = points.iter().map(|p| p.2 * p.1).sum::<T>() / n;
    let sxy: T = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = points.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Log-log regression on binned densities above `threshold`, weighting each
/// bin by its mass (the inverse variance of a log count).
pub fn fit_exponent_binned<T: Real>(bins: &[TailBin<T>], threshold: T) -> Result<ExponentFit<T>> {
    let points: Vec<(T, T, T)> = bins
        .iter()
        .filter(|b| b.low >= threshold && b.mass > T::zero() && b.high > b.low)
        .map(|b| {
            let centre = (b.low * b.high).sqrt();
            (centre.ln(), (b.mass / (b.high - b.low)).ln(), b.mass)
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    Ok(ExponentFit {
        regression: least_squares_slope(&points),
        maximum_likelihood: None,
        observations: 0,
        bins_used: points.len(),
    })
}

/// Exponent of the tail above `threshold` from raw incomes: log-log
/// regression on logarithmically binned densities, plus the continuous
/// maximum-likelihood estimate as a diagnostic.
pub fn fit_exponent<T: Real>(incomes: &[T], threshold: T) -> Result<ExponentFit<T>> {
    if !(threshold > T::zero()) {
        return Err(Error::Domain(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let tail: Vec<T> = incomes
        .iter()
        .copied()
        .filter(|&x| x >= threshold)
        .collect();
    if tail.len() < MIN_TAIL_OBSERVATIONS {
        return Err(Error::InsufficientData {
            needed: MIN_TAIL_OBSERVATIONS,
            got: tail.len(),
        });
    }
    let n = tail.len();
    let max = tail.iter().copied().fold(threshold, T::max);

    let ratio = lit::<T>(10.0).powf(T::one() / lit(BINS_PER_DECADE));
    let n_bins = ((max / threshold).ln() / ratio.ln())
        .floor()
        .to_usize()
        .unwrap_or(0)
        + 1;
    let mut counts = vec![0usize; n_bins];
    let log_ratio = ratio.ln();
    for &x in &tail {
        let k = ((x / threshold).ln() / log_ratio)
            .floor()
            .to_usize()
            .unwrap_or(0);
        counts[k.min(n_bins - 1)] += 1;
    }
    let bins: Vec<TailBin<T>> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= MIN_BIN_COUNT)
        .map(|(k, &c)| {
            let low = threshold * ratio.powi(k as i32);
            TailBin {
                low,
                high: low * ratio,
                mass: from_i64::<T>(c as i64) / from_i64(n as i64),
            }
        })
        .collect();
    let mut fit = fit_exponent_binned(&bins, threshold)?;

    let log_sum: T = tail.iter().map(|&x| (x / threshold).ln()).sum();
    fit.maximum_likelihood =
        (log_sum > T::zero()).then(|| -(T::one() + from_i64::<T>(n as i64) / log_sum));
    fit.observations = n;
    Ok(fit)
}

/// Smallest grid income at which the two cumulative curves differ by more
/// than `tol` at `persistence` consecutive grid points. Both curves are
/// `(income, cumulative)` pairs on a common grid.
pub fn detect_threshold<T: Real>(
    observed: &[(T, T)],
    theoretical: &[(T, T)],
    tol: T,
    persistence: usize,
) -> Result<Option<T>> {
    if observed.len() != theoretical.len() {
        return Err(Error::Domain("curves have different lengths".into()));
    }
    if observed.iter().zip(theoretical).any(|(a, b)| a.0 != b.0) {
        return Err(Error::Domain("curves are not on a common grid".into()));
    }
    let k = persistence.max(1);
    let diverged: Vec<bool> = observed
        .iter()
        .zip(theoretical)
        .map(|(a, b)| (a.1 - b.1).abs() > tol)
        .collect();
    Ok((0..diverged.len())
        .find(|&i| i + k <= diverged.len() && diverged[i..i + k].iter().all(|&d| d))
        .map(|i| observed[i].0))
}

/// Ratio of supercritical shares of total income, observed over theoretical,
/// from the cumulative income fractions below the threshold.
pub fn boost_ratio<T: Real>(observed_below: T, theoretical_below: T) -> Result<T> {
    let denom = T::one() - theoretical_below;
    if denom == T::zero() {
        return Err(Error::DivisionByZero(
            "theoretical supercritical share is zero",
        ));
    }
    Ok((T::one() - observed_below) / denom)
}

/// Boosts incomes at or above the threshold; the comparison is always made
/// on the un-boosted model income.
pub fn apply_boost<T: Real>(
    income: ModelIncome<T>,
    threshold: T,
    params: &ModelParams<T>,
) -> ReportedIncome<T> {
    if income.0 >= threshold {
        ReportedIncome(income.0 * params.boost_factor)
    } else {
        ReportedIncome(income.0)
    }
}

/// Actual over theoretical total income given the supercritical shares of
/// each: `P(1 − theoretical) = R(1 − observed)`.
pub fn system_income_ratio<T: Real>(observed_share: T, theoretical_share: T) -> Result<T> {
    let denom = T::one() - observed_share;
    if denom == T::zero() {
        return Err(Error::DivisionByZero("observed supercritical share is one"));
    }
    Ok((T::one() - theoretical_share) / denom)
}
