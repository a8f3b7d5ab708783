use std::io::Write;

use serde::Serialize;

use super::{cohort_incomes, Cohort};
use crate::error::{Error, Result};
use crate::model::{model_unit_dollars, scaling_state, EconomySeries, ModelParams};
use crate::paretotail::{apply_boost, ModelIncome};
use crate::population::{PopulationPyramid, AGE_COUNT};
use crate::real::{from_i64, Real};
use crate::sum::kahan_sum;

/// Income threshold for counting people.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Threshold<T> {
    /// The year's Pareto threshold.
    Pareto,
    /// Model units.
    Model(T),
    /// Current dollars.
    Dollars(T),
}

/// How the threshold is compared against incomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Counting<T> {
    Exact,
    /// Threshold rounded down to a multiple of a dollar bin width, as when
    /// reading counts off a binned table.
    BinAligned {
        dollar_width: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    Counts,
    UnitSum,
    Peak { reference_year: i32 },
}

/// People (or normalized fractions) above a threshold per single year of work experience.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkExperienceProfile<T> {
    pub year: i32,
    /// Threshold in model units.
    pub threshold: T,
    /// Index is work experience in years.
    pub values: Vec<T>,
    pub normalization: Normalization,
}

impl<T: Real> WorkExperienceProfile<T> {
    pub fn total(&self) -> T {
        kahan_sum(self.values.iter().copied())
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Work experience of the first maximum.
    pub fn peak_experience(&self) -> usize {
        let max = self.max();
        self.values.iter().position(|&v| v == max).unwrap_or(0)
    }

    /// Sum of values for work experience below `years`.
    pub fn sum_below(&self, years: usize) -> T {
        kahan_sum(self.values.iter().take(years).copied())
    }

    pub fn to_csv_writer<W: Write>(
        &self,
        mut writer: W,
        comments: &[(&str, String)],
    ) -> Result<()> {
        for (k, v) in comments {
            writeln!(writer, "# {k}={v}")?;
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["work_experience", "value"])?;
        for (t, v) in self.values.iter().enumerate() {
            wtr.write_record([t.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn threshold_in_model_units<T: Real>(
    year: i32,
    threshold: Threshold<T>,
    counting: Counting<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    let model = match threshold {
        Threshold::Pareto => scaling_state(params, econ, year)?.pareto_threshold,
        Threshold::Model(m) => m,
        Threshold::Dollars(d) => d / model_unit_dollars(year, econ, params)?,
    };
    match counting {
        Counting::Exact => Ok(model),
        Counting::BinAligned { dollar_width } => {
            if !(dollar_width > T::zero()) {
                return Err(Error::Domain("dollar bin width must be positive".into()));
            }
            let unit = model_unit_dollars(year, econ, params)?;
            Ok((model * unit / dollar_width).floor() * dollar_width / unit)
        }
    }
}

pub(crate) fn profile_from_cohorts<T: Real>(
    year: i32,
    threshold: T,
    cohorts: &[Cohort<T>],
    pareto_threshold: T,
    params: &ModelParams<T>,
) -> WorkExperienceProfile<T> {
    let mut values = vec![T::zero(); AGE_COUNT];
    for c in cohorts {
        let n = c.incomes.len();
        let k = c
            .incomes
            .iter()
            .filter(|&&m| apply_boost(ModelIncome(m), pareto_threshold, params).0 >= threshold)
            .count();
        values[c.work_experience() as usize] = if k == n {
            c.count
        } else {
            c.count * from_i64::<T>(k as i64) / from_i64(n as i64)
        };
    }
    WorkExperienceProfile {
        year,
        threshold,
        values,
        normalization: Normalization::Counts,
    }
}

/// Number of people per work-experience year whose reported income is at
/// least the threshold, with exact threshold comparison.
pub fn above_threshold_profile<T: Real>(
    year: i32,
    threshold: Threshold<T>,
    pyramid: &PopulationPyramid<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<WorkExperienceProfile<T>> {
    above_threshold_profile_with(year, threshold, Counting::Exact, pyramid, econ, params)
}

pub fn above_threshold_profile_with<T: Real>(
    year: i32,
    threshold: Threshold<T>,
    counting: Counting<T>,
    pyramid: &PopulationPyramid<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<WorkExperienceProfile<T>> {
    let cohorts = cohort_incomes(year, pyramid, econ, params)?;
    let thr = threshold_in_model_units(year, threshold, counting, econ, params)?;
    let pareto = scaling_state(params, econ, year)?.pareto_threshold;
    Ok(profile_from_cohorts(year, thr, &cohorts, pareto, params))
}

/// Divides every value by the reference profile's maximum.
pub fn normalize_to_peak<T: Real>(
    profile: &WorkExperienceProfile<T>,
    reference: &WorkExperienceProfile<T>,
) -> Result<WorkExperienceProfile<T>> {
    let peak = reference.max();
    if !(peak > T::zero()) {
        return Err(Error::DivisionByZero(
            "reference profile has no positive value",
        ));
    }
    Ok(WorkExperienceProfile {
        values: profile.values.iter().map(|&v| v / peak).collect(),
        normalization: Normalization::Peak {
            reference_year: reference.year,
        },
        ..profile.clone()
    })
}

pub fn normalize_unit_sum<T: Real>(
    profile: &WorkExperienceProfile<T>,
) -> Result<WorkExperienceProfile<T>> {
    let total = profile.total();
    if !(total > T::zero()) {
        return Err(Error::DivisionByZero("profile sums to zero"));
    }
    Ok(WorkExperienceProfile {
        values: profile.values.iter().map(|&v| v / total).collect(),
        normalization: Normalization::UnitSum,
        ..profile.clone()
    })
}

/// Above-threshold profiles at each year's Pareto threshold, normalized to
/// the year's supercritical population.
pub fn density_evolution<T: Real>(
    years: &[i32],
    pyramid: &PopulationPyramid<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<Vec<WorkExperienceProfile<T>>> {
    years
        .iter()
        .map(|&y| {
            let p = above_threshold_profile(y, Threshold::Pareto, pyramid, econ, params)?;
            normalize_unit_sum(&p)
        })
        .collect()
}

/// Extends the observed economy by `(1 + growth_rate)^k` past its last year
/// and evaluates [`density_evolution`] on the projected population.
pub fn forecast<T: Real>(
    projection: &PopulationPyramid<T>,
    growth_rate: T,
    years: &[i32],
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<Vec<WorkExperienceProfile<T>>> {
    let last = years.iter().copied().max().unwrap_or(econ.last_year());
    let extended = econ.extended(last, growth_rate);
    density_evolution(years, projection, &extended, params)
}
