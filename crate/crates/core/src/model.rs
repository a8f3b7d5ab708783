//! Model constants, the capability/means grid, and the GDP-driven scaling laws.
//!
//! Everything downstream is expressed in dimensionless income units where the
//! start-year minimum capacity `Σ_min(0)·Λ_min(0)` equals one and the largest
//! relative capability and means are one.

use std::io::{Read, Write};
use std::ops::RangeInclusive;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::real::{from_i64, lit, Real};

/// Calendar year the nominal GDP index is anchored to for dollar conversion.
pub const NOMINAL_ANCHOR_YEAR: i32 = 2000;

/// Calibration constants and grid definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams<T> {
    pub start_year: i32,
    /// Dissipation coefficient in the normalized convention (per year).
    pub alpha: T,
    /// Critical work experience at `start_year`, in years.
    pub t_cr0: T,
    /// Pareto threshold at `start_year`, dimensionless.
    pub pareto_threshold0: T,
    pub grid_min: u32,
    pub grid_max: u32,
    pub boost_factor: T,
    /// Dollars (year-2000) per dimensionless income unit.
    pub dollar_anchor: T,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            start_year: 1960,
            alpha: lit(0.087),
            t_cr0: lit(26.5),
            pareto_threshold0: lit(0.43),
            grid_min: 2,
            grid_max: 30,
            boost_factor: lit(1.35),
            dollar_anchor: lit(120_000.0),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.alpha > T::zero()) {
            return bad("alpha must be positive");
        }
        if !(self.t_cr0 > T::zero()) {
            return bad("t_cr0 must be positive");
        }
        if !(self.pareto_threshold0 > T::zero() && self.pareto_threshold0 < T::one()) {
            return bad("pareto_threshold0 must lie in (0, 1)");
        }
        if self.grid_min < 2 {
            return bad("grid_min must be at least 2");
        }
        if self.grid_max <= self.grid_min {
            return bad("grid_max must exceed grid_min");
        }
        if !(self.boost_factor >= T::one()) {
            return bad("boost_factor must be at least 1");
        }
        if !(self.dollar_anchor > T::zero()) {
            return bad("dollar_anchor must be positive");
        }
        Ok(())
    }

    /// Parses JSON; absent fields take their defaults.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn params_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json_string().as_bytes());
        hex::encode(digest)
    }

    /// Number of distinct values on each grid axis.
    pub fn grid_span(&self) -> u32 {
        self.grid_max - self.grid_min + 1
    }

    pub fn class_count(&self) -> usize {
        (self.grid_span() as usize).pow(2)
    }
}

/// Per-calendar-year real and nominal per capita GDP indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomySeries<T> {
    first_year: i32,
    real_gdp_index: Vec<T>,
    nominal_gdp_index: Vec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EconomyRow<T> {
    year: i32,
    real_gdp_index: T,
    nominal_gdp_index: T,
}

impl<T: Real> EconomySeries<T> {
    pub fn new(first_year: i32, real_gdp_index: Vec<T>, nominal_gdp_index: Vec<T>) -> Result<Self> {
        if real_gdp_index.is_empty() {
            return Err(Error::Domain("economy series is empty".into()));
        }
        if real_gdp_index.len() != nominal_gdp_index.len() {
            return Err(Error::Domain(
                "real and nominal index series differ in length".into(),
            ));
        }
        for (i, (r, n)) in real_gdp_index.iter().zip(&nominal_gdp_index).enumerate() {
            if !(*r > T::zero() && *n > T::zero()) || !r.is_finite() || !n.is_finite() {
                return Err(Error::Domain(format!(
                    "GDP indices must be positive and finite (year {})",
                    first_year + i as i32
                )));
            }
        }
        Ok(Self {
            first_year,
            real_gdp_index,
            nominal_gdp_index,
        })
    }

    /// Indices equal to one in every year.
    pub fn constant(first_year: i32, last_year: i32) -> Self {
        Self::with_growth(first_year, last_year, T::zero(), T::zero())
    }

    /// Geometric growth at fixed annual rates, both indices equal to one in `first_year`.
    pub fn with_growth(first_year: i32, last_year: i32, real_rate: T, nominal_rate: T) -> Self {
        assert!(last_year >= first_year, "empty year range");
        let n = (last_year - first_year + 1) as usize;
        let real = (0..n)
            .map(|k| (T::one() + real_rate).powi(k as i32))
            .collect();
        let nominal = (0..n)
            .map(|k| (T::one() + nominal_rate).powi(k as i32))
            .collect();
        Self {
            first_year,
            real_gdp_index: real,
            nominal_gdp_index: nominal,
        }
    }

    /// Extends both indices past the last observed year by `(1 + rate)^k`.
    pub fn extended(&self, last_year: i32, rate: T) -> Self {
        let mut out = self.clone();
        let r0 = *self.real_gdp_index.last().expect("non-empty");
        let n0 = *self.nominal_gdp_index.last().expect("non-empty");
        for k in 1..=(last_year - self.last_year()).max(0) {
            let f = (T::one() + rate).powi(k);
            out.real_gdp_index.push(r0 * f);
            out.nominal_gdp_index.push(n0 * f);
        }
        out
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.real_gdp_index.len() as i32 - 1
    }

    pub fn years(&self) -> RangeInclusive<i32> {
        self.first_year..=self.last_year()
    }

    pub fn contains(&self, year: i32) -> bool {
        self.years().contains(&year)
    }

    fn index_of(&self, year: i32) -> Result<usize> {
        if self.contains(year) {
            Ok((year - self.first_year) as usize)
        } else {
            Err(Error::YearOutOfRange {
                what: "economy series",
                year,
                first: self.first_year,
                last: self.last_year(),
            })
        }
    }

    pub fn real_index(&self, year: i32) -> Result<T> {
        Ok(self.real_gdp_index[self.index_of(year)?])
    }

    pub fn nominal_index(&self, year: i32) -> Result<T> {
        Ok(self.nominal_gdp_index[self.index_of(year)?])
    }

    /// Real per capita GDP in `year` relative to `base_year`.
    pub fn real_growth(&self, year: i32, base_year: i32) -> Result<T> {
        Ok(self.real_index(year)? / self.real_index(base_year)?)
    }

    /// Fails unless every calendar year touched by `[from, to]` is covered.
    pub fn check_covers(&self, from: T, to: T) -> Result<()> {
        let lo = from.floor().to_i64().unwrap_or(i64::MIN) as i32;
        let hi = to.ceil().to_i64().unwrap_or(i64::MAX) as i32;
        self.index_of(lo)?;
        self.index_of(hi)?;
        Ok(())
    }

    fn bracket(&self, time: T) -> Result<(usize, T)> {
        let first: T = from_i64(self.first_year as i64);
        let last: T = from_i64(self.last_year() as i64);
        if !(time >= first && time <= last) {
            return Err(Error::YearOutOfRange {
                what: "economy series",
                year: time.floor().to_i32().unwrap_or(i32::MIN),
                first: self.first_year,
                last: self.last_year(),
            });
        }
        let offset = time - first;
        let i = offset.floor().to_usize().unwrap_or(0);
        if i + 1 >= self.real_gdp_index.len() {
            return Ok((self.real_gdp_index.len() - 1, T::zero()));
        }
        Ok((i, offset - from_i64(i as i64)))
    }

    /// Real growth relative to `base_year` at fractional calendar time,
    /// linearly interpolated between annual values.
    pub fn real_growth_at(&self, time: T, base_year: i32) -> Result<T> {
        let base = self.real_index(base_year)?;
        let (i, w) = self.bracket(time)?;
        let a = self.real_gdp_index[i];
        if w == T::zero() {
            return Ok(a / base);
        }
        let b = self.real_gdp_index[i + 1];
        Ok((a + (b - a) * w) / base)
    }

    /// Square root of real growth at fractional calendar time; the annual
    /// square-root values are interpolated linearly.
    pub fn sqrt_growth_at(&self, time: T, base_year: i32) -> Result<T> {
        let base = self.real_index(base_year)?;
        let (i, w) = self.bracket(time)?;
        let a = (self.real_gdp_index[i] / base).sqrt();
        if w == T::zero() {
            return Ok(a);
        }
        let b = (self.real_gdp_index[i + 1] / base).sqrt();
        Ok(a + (b - a) * w)
    }

    /// Reads `year,real_gdp_index,nominal_gdp_index` CSV.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut first_year = None;
        let mut real = Vec::new();
        let mut nominal = Vec::new();
        for (i, row) in rdr.deserialize::<EconomyRow<T>>().enumerate() {
            let row_no = i + 2;
            let row = row.map_err(|e| Error::parse(row_no, e.to_string()))?;
            let expected = first_year.map(|f: i32| f + real.len() as i32);
            if let Some(exp) = expected {
                if row.year != exp {
                    return Err(Error::parse(
                        row_no,
                        format!(
                            "expected year {exp}, found {} (years must be contiguous)",
                            row.year
                        ),
                    ));
                }
            } else {
                first_year = Some(row.year);
            }
            real.push(row.real_gdp_index);
            nominal.push(row.nominal_gdp_index);
        }
        let first_year = first_year.ok_or_else(|| Error::parse(1, "no data rows"))?;
        Self::new(first_year, real, nominal)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (k, (r, n)) in self
            .real_gdp_index
            .iter()
            .zip(&self.nominal_gdp_index)
            .enumerate()
        {
            wtr.serialize(EconomyRow {
                year: self.first_year + k as i32,
                real_gdp_index: *r,
                nominal_gdp_index: *n,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Time-dependent minimum capability/means, critical experience and threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingState<T> {
    /// Calendar time (integral for annual states).
    pub year: T,
    pub lambda_min: T,
    pub sigma_min: T,
    pub t_cr: T,
    pub pareto_threshold: T,
}

impl<T: Real> ScalingState<T> {
    /// State for real per capita GDP grown by `growth` since the start year.
    pub fn from_growth(params: &ModelParams<T>, year: T, growth: T) -> Self {
        let root = growth.sqrt();
        Self::from_parts(params, year, growth, root)
    }

    fn from_parts(params: &ModelParams<T>, year: T, growth: T, root: T) -> Self {
        Self {
            year,
            lambda_min: root,
            sigma_min: root,
            t_cr: params.t_cr0 * root,
            pareto_threshold: params.pareto_threshold0 * growth,
        }
    }

    /// `Σ_min·Λ_min`, the capacity level of the whole population.
    pub fn capacity_level(&self) -> T {
        self.sigma_min * self.lambda_min
    }

    /// Real GDP growth since the start year.
    pub fn growth(&self) -> T {
        self.lambda_min * self.lambda_min
    }
}

pub fn scaling_state<T: Real>(
    params: &ModelParams<T>,
    econ: &EconomySeries<T>,
    year: i32,
) -> Result<ScalingState<T>> {
    let g = econ.real_growth(year, params.start_year)?;
    Ok(ScalingState::from_growth(params, from_i64(year as i64), g))
}

/// State at fractional calendar time; square-root coefficients are
/// interpolated linearly between annual values, the threshold follows the
/// interpolated real index.
pub fn scaling_at<T: Real>(
    params: &ModelParams<T>,
    econ: &EconomySeries<T>,
    time: T,
) -> Result<ScalingState<T>> {
    let g = econ.real_growth_at(time, params.start_year)?;
    let root = econ.sqrt_growth_at(time, params.start_year)?;
    Ok(ScalingState::from_parts(params, time, g, root))
}

/// One `(S_i, L_j)` cell of the capability/means grid.
///
/// Relative values are stored as integer indices over the grid maximum so
/// capacities can be compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TrajectoryClass {
    pub s_index: u32,
    pub l_index: u32,
    pub scale: u32,
}

impl TrajectoryClass {
    pub fn new(s_index: u32, l_index: u32, scale: u32) -> Self {
        assert!(s_index > 0 && l_index > 0 && s_index <= scale && l_index <= scale);
        Self {
            s_index,
            l_index,
            scale,
        }
    }

    /// `S' = S_i / S_max`.
    pub fn s_rel<T: Real>(&self) -> T {
        from_i64::<T>(self.s_index as i64) / from_i64(self.scale as i64)
    }

    /// `L' = L_j / L_max`.
    pub fn l_rel<T: Real>(&self) -> T {
        from_i64::<T>(self.l_index as i64) / from_i64(self.scale as i64)
    }

    pub fn capacity<T: Real>(&self) -> T {
        self.s_rel::<T>() * self.l_rel::<T>()
    }

    /// Exact capacity `S_i·L_j / (S_max·L_max)`.
    pub fn capacity_ratio(&self) -> Ratio<u32> {
        Ratio::new(self.s_index * self.l_index, self.scale * self.scale)
    }
}

/// All grid classes ordered by S index, then L index.
pub fn grid<T: Real>(params: &ModelParams<T>) -> Vec<TrajectoryClass> {
    let range = params.grid_min..=params.grid_max;
    range
        .clone()
        .flat_map(|s| {
            range
                .clone()
                .map(move |l| TrajectoryClass::new(s, l, params.grid_max))
        })
        .collect()
}

/// Converts income measured relative to the current capacity level into
/// current dollars via the nominal index anchored at year 2000.
pub fn to_dollars<T: Real>(
    m: T,
    year: i32,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    if !(m >= T::zero()) {
        return Err(Error::Domain(format!(
            "income must be non-negative, got {m}"
        )));
    }
    let ratio = econ.nominal_index(year)? / econ.nominal_index(NOMINAL_ANCHOR_YEAR)?;
    Ok(m * params.dollar_anchor * ratio)
}

/// Dollars per model income unit (start-year capacity units) in `year`.
///
/// Model incomes grow with real GDP; they are first divided by the real
/// growth so that a unit capacity maps onto `dollar_anchor` at the anchor year.
pub fn model_unit_dollars<T: Real>(
    year: i32,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    let g = econ.real_growth(year, params.start_year)?;
    to_dollars(T::one() / g, year, econ, params)
}
