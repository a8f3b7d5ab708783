//! Single-year-of-age population pyramids and census-style age brackets.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sum::kahan_sum;

/// Official age of starting work.
pub const MIN_AGE: u32 = 15;
/// Terminal open bin; older ages are folded into it.
pub const MAX_AGE: u32 = 100;
pub const AGE_COUNT: usize = (MAX_AGE - MIN_AGE + 1) as usize;

pub fn work_experience(age: u32) -> Result<u32> {
    age.checked_sub(MIN_AGE)
        .ok_or_else(|| Error::Domain(format!("age {age} is below the working age {MIN_AGE}")))
}

/// Counts of persons by single year of age (15..=100+) per calendar year.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationPyramid<T> {
    years: BTreeMap<i32, Vec<T>>,
}

impl<T: Real> PopulationPyramid<T> {
    pub fn new() -> Self {
        Self {
            years: BTreeMap::new(),
        }
    }

    /// Inserts one year; `counts[i]` is the count at age `15 + i`, padded with
    /// zeros up to age 100 and folded beyond it.
    pub fn insert_year(&mut self, year: i32, counts: &[T]) -> Result<()> {
        if counts.iter().any(|c| !(*c >= T::zero()) || !c.is_finite()) {
            return Err(Error::Domain(format!(
                "negative or non-finite count in year {year}"
            )));
        }
        let mut row = vec![T::zero(); AGE_COUNT];
        for (i, c) in counts.iter().enumerate() {
            row[i.min(AGE_COUNT - 1)] += *c;
        }
        self.years.insert(year, row);
        Ok(())
    }

    /// Same age profile in every year of `years`.
    pub fn stationary(counts: &[T], years: impl IntoIterator<Item = i32>) -> Result<Self> {
        let mut p = Self::new();
        for y in years {
            p.insert_year(y, counts)?;
        }
        Ok(p)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.years.keys().copied()
    }

    pub fn contains(&self, year: i32) -> bool {
        self.years.contains_key(&year)
    }

    /// Counts for ages 15..=100 in `year`.
    pub fn counts(&self, year: i32) -> Result<&[T]> {
        self.years
            .get(&year)
            .map(Vec::as_slice)
            .ok_or(Error::MissingYear {
                what: "population pyramid",
                year,
            })
    }

    pub fn count(&self, year: i32, age: u32) -> Result<T> {
        let counts = self.counts(year)?;
        let idx = work_experience(age)?.min(MAX_AGE - MIN_AGE) as usize;
        Ok(counts[idx])
    }

    pub fn total(&self, year: i32) -> Result<T> {
        Ok(kahan_sum(self.counts(year)?.iter().copied()))
    }

    /// Reads `year,age,count` CSV.
    ///
    /// Ages within a year must run contiguously from 15; ages above 100 are
    /// folded into the 100+ bin.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["year", "age", "count"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::parse(1, "header must be `year,age,count`"));
        }

        let mut seen: HashSet<(i32, u32)> = HashSet::new();
        let mut raw: BTreeMap<i32, BTreeMap<u32, (T, usize)>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::parse(row, e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::parse(row, "expected 3 fields"));
            }
            let year: i32 = rec[0]
                .parse()
                .map_err(|_| Error::parse(row, format!("bad year `{}`", &rec[0])))?;
            let age: u32 = rec[1]
                .parse()
                .map_err(|_| Error::parse(row, format!("bad age `{}`", &rec[1])))?;
            let count: T = rec[2]
                .parse()
                .map_err(|_| Error::parse(row, format!("bad count `{}`", &rec[2])))?;
            if age < MIN_AGE {
                return Err(Error::parse(row, format!("age {age} below {MIN_AGE}")));
            }
            if !(count >= T::zero()) || !count.is_finite() {
                return Err(Error::parse(row, format!("negative count {count}")));
            }
            if !seen.insert((year, age)) {
                return Err(Error::parse(
                    row,
                    format!("duplicate (year {year}, age {age})"),
                ));
            }
            raw.entry(year).or_default().insert(age, (count, row));
        }

        let mut pyramid = Self::new();
        for (year, ages) in raw {
            let mut counts = Vec::with_capacity(ages.len());
            for (k, (age, (count, row))) in ages.into_iter().enumerate() {
                if age != MIN_AGE + k as u32 {
                    return Err(Error::parse(
                        row,
                        format!(
                            "ages for year {year} not contiguous: expected {}, found {age}",
                            MIN_AGE + k as u32
                        ),
                    ));
                }
                counts.push(count);
            }
            pyramid.insert_year(year, &counts)?;
        }
        Ok(pyramid)
    }

    /// Writes `year,age,count` rows for ages 15..=100.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["year", "age", "count"])?;
        for (year, counts) in &self.years {
            for (i, c) in counts.iter().enumerate() {
                wtr.write_record([
                    year.to_string(),
                    (MIN_AGE + i as u32).to_string(),
                    c.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeBracket {
    pub low: u32,
    /// Inclusive upper age; `None` for the open-ended bracket.
    pub high: Option<u32>,
}

impl AgeBracket {
    pub fn contains(&self, age: u32) -> bool {
        age >= self.low && self.high.is_none_or(|h| age <= h)
    }
}

/// Ordered, non-overlapping brackets covering every age from 15.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBracketScheme {
    brackets: Vec<AgeBracket>,
}

impl AgeBracketScheme {
    pub fn new(brackets: Vec<AgeBracket>) -> Result<Self> {
        let mut next = MIN_AGE;
        for (i, b) in brackets.iter().enumerate() {
            if b.low != next {
                return Err(Error::Domain(format!(
                    "bracket {i} starts at {} but {next} expected",
                    b.low
                )));
            }
            match b.high {
                Some(h) if h < b.low => {
                    return Err(Error::Domain(format!("bracket {i} is empty")));
                }
                Some(h) => next = h + 1,
                None if i + 1 != brackets.len() => {
                    return Err(Error::Domain("open bracket must be last".into()));
                }
                None => return Ok(Self { brackets }),
            }
        }
        Err(Error::Domain("last bracket must be open-ended".into()))
    }

    /// 15–24, then five-year brackets 25–29 … 70–74, then 75+.
    pub fn census() -> Self {
        let mut b = vec![AgeBracket {
            low: 15,
            high: Some(24),
        }];
        b.extend((25..75).step_by(5).map(|low| AgeBracket {
            low,
            high: Some(low + 4),
        }));
        b.push(AgeBracket {
            low: 75,
            high: None,
        });
        Self::new(b).expect("census scheme is valid")
    }

    pub fn brackets(&self) -> &[AgeBracket] {
        &self.brackets
    }
}

impl Default for AgeBracketScheme {
    fn default() -> Self {
        Self::census()
    }
}

pub fn bracket_totals<T: Real>(
    pyramid: &PopulationPyramid<T>,
    year: i32,
    scheme: &AgeBracketScheme,
) -> Result<Vec<T>> {
    let counts = pyramid.counts(year)?;
    Ok(scheme
        .brackets()
        .iter()
        .map(|b| {
            kahan_sum(
                counts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| b.contains(MIN_AGE + *i as u32))
                    .map(|(_, c)| *c),
            )
        })
        .collect())
}
