use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EconomySeries;
use crate::real::{from_i64, lit, Real};
use crate::sum::{kahan_sum, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncomeUnits {
    /// Model units: start-year capacity level equals one.
    Dimensionless,
    /// Current dollars.
    Dollars,
}

/// Fraction of the 15+ population per income bin `[i·w, (i+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncomeHistogram<T> {
    pub year: i32,
    pub bin_width: T,
    pub densities: Vec<T>,
    pub boosted: bool,
    pub units: IncomeUnits,
}

impl<T: Real> IncomeHistogram<T> {
    /// Normalizes non-negative bin masses to unit sum.
    pub fn from_masses(
        year: i32,
        bin_width: T,
        masses: Vec<T>,
        boosted: bool,
        units: IncomeUnits,
    ) -> Result<Self> {
        if !(bin_width > T::zero()) {
            return Err(Error::Domain(format!(
                "bin width must be positive, got {bin_width}"
            )));
        }
        if masses.iter().any(|m| !(*m >= T::zero()) || !m.is_finite()) {
            return Err(Error::Domain("bin masses must be non-negative".into()));
        }
        let total = kahan_sum(masses.iter().copied());
        if !(total > T::zero()) {
            return Err(Error::Domain("histogram has zero total mass".into()));
        }
        let densities = masses.into_iter().map(|m| m / total).collect();
        Ok(Self {
            year,
            bin_width,
            densities,
            boosted,
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn bin_low(&self, i: usize) -> T {
        from_i64::<T>(i as i64) * self.bin_width
    }

    pub fn bin_high(&self, i: usize) -> T {
        from_i64::<T>(i as i64 + 1) * self.bin_width
    }

    pub fn bin_mid(&self, i: usize) -> T {
        (from_i64::<T>(i as i64) + lit(0.5)) * self.bin_width
    }

    pub fn total(&self) -> T {
        kahan_sum(self.densities.iter().copied())
    }

    /// Cumulative people fraction at each upper bin edge.
    pub fn cumulative_people_curve(&self) -> Vec<(T, T)> {
        let mut acc = CompensatedSum::new();
        self.densities
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                acc.add(d);
                (self.bin_high(i), acc.value())
            })
            .collect()
    }

    /// Cumulative income fraction at each upper bin edge.
    pub fn cumulative_income_curve(&self) -> Vec<(T, T)> {
        let total = self.income_total();
        let mut acc = CompensatedSum::new();
        self.densities
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                acc.add(d * self.bin_mid(i));
                let v = if total > T::zero() {
                    acc.value() / total
                } else {
                    T::zero()
                };
                (self.bin_high(i), v)
            })
            .collect()
    }

    fn income_total(&self) -> T {
        kahan_sum(
            self.densities
                .iter()
                .enumerate()
                .map(|(i, &d)| d * self.bin_mid(i)),
        )
    }

    /// Writes `bin_low,bin_high,density`, preceded by `# key=value` comment lines.
    pub fn to_csv_writer<W: Write>(
        &self,
        mut writer: W,
        comments: &[(&str, String)],
    ) -> Result<()> {
        for (k, v) in comments {
            writeln!(writer, "# {k}={v}")?;
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["bin_low", "bin_high", "density"])?;
        for (i, d) in self.densities.iter().enumerate() {
            wtr.write_record([
                self.bin_low(i).to_string(),
                self.bin_high(i).to_string(),
                d.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `bin_low,bin_high,density` with uniform bins starting at zero;
    /// densities are renormalized to unit sum.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        year: i32,
        units: IncomeUnits,
        boosted: bool,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["bin_low", "bin_high", "density"] {
            return Err(Error::parse(1, "header must be `bin_low,bin_high,density`"));
        }
        let mut width: Option<T> = None;
        let mut masses = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::parse(row, e.to_string()))?;
            let field = |k: usize| -> Result<T> {
                rec.get(k)
                    .ok_or_else(|| Error::parse(row, "missing field"))?
                    .parse()
                    .map_err(|_| Error::parse(row, format!("bad number `{}`", &rec[k])))
            };
            let (lo, hi, d) = (field(0)?, field(1)?, field(2)?);
            let w = *width.get_or_insert(hi - lo);
            let expected_lo = from_i64::<T>(i as i64) * w;
            let tol = w * lit(1e-6);
            if !(w > T::zero()) || (lo - expected_lo).abs() > tol || (hi - lo - w).abs() > tol {
                return Err(Error::parse(row, "bins must be uniform and start at zero"));
            }
            if !(d >= T::zero()) {
                return Err(Error::parse(row, format!("negative density {d}")));
            }
            masses.push(d);
        }
        let width = width.ok_or_else(|| Error::parse(1, "no data rows"))?;
        Self::from_masses(year, width, masses, boosted, units)
    }
}

/// Fraction of people with income below `m`, interpolating linearly inside
/// the bin containing `m`.
pub fn cumulative_people_below<T: Real>(histogram: &IncomeHistogram<T>, m: T) -> T {
    if !(m > T::zero()) {
        return T::zero();
    }
    let mut acc = CompensatedSum::new();
    for (i, &d) in histogram.densities.iter().enumerate() {
        let lo = histogram.bin_low(i);
        let hi = histogram.bin_high(i);
        if hi <= m {
            acc.add(d);
        } else if lo < m {
            acc.add(d * (m - lo) / histogram.bin_width);
        } else {
            break;
        }
    }
    acc.value().min(T::one())
}

/// Fraction of total income received by people with income below `m`; bins
/// contribute `density · midpoint`, the bin containing `m` linearly.
pub fn cumulative_income_below<T: Real>(histogram: &IncomeHistogram<T>, m: T) -> T {
    if !(m > T::zero()) {
        return T::zero();
    }
    let total = histogram.income_total();
    if !(total > T::zero()) {
        return T::zero();
    }
    let mut acc = CompensatedSum::new();
    for (i, &d) in histogram.densities.iter().enumerate() {
        let lo = histogram.bin_low(i);
        let hi = histogram.bin_high(i);
        let mass = d * histogram.bin_mid(i);
        if hi <= m {
            acc.add(mass);
        } else if lo < m {
            acc.add(mass * (m - lo) / histogram.bin_width);
        } else {
            break;
        }
    }
    (acc.value() / total).min(T::one())
}

/// Divides dollar incomes by the nominal index ratio to `base_year` and
/// re-bins onto the base-year grid of the same width.
pub fn normalize_adjust<T: Real>(
    histogram: &IncomeHistogram<T>,
    econ: &EconomySeries<T>,
    base_year: i32,
) -> Result<IncomeHistogram<T>> {
    if histogram.units != IncomeUnits::Dollars {
        return Err(Error::Domain(
            "nominal adjustment needs a dollar histogram".into(),
        ));
    }
    let ratio = econ.nominal_index(histogram.year)? / econ.nominal_index(base_year)?;
    if ratio == T::one() {
        return Ok(histogram.clone());
    }
    let w = histogram.bin_width;
    let mut out: Vec<CompensatedSum<T>> = Vec::new();
    for (i, &d) in histogram.densities.iter().enumerate() {
        if d == T::zero() {
            continue;
        }
        let a = histogram.bin_low(i) / ratio;
        let b = histogram.bin_high(i) / ratio;
        let first = (a / w).floor().to_usize().unwrap_or(0);
        let last = (b / w)
            .ceil()
            .to_usize()
            .unwrap_or(first + 1)
            .max(first + 1);
        if out.len() < last {
            out.resize(last, CompensatedSum::new());
        }
        for (j, slot) in out.iter_mut().enumerate().take(last).skip(first) {
            let lo = from_i64::<T>(j as i64) * w;
            let overlap = (b.min(lo + w) - a.max(lo)).max(T::zero());
            if overlap > T::zero() {
                slot.add(d * overlap / (b - a));
            }
        }
    }
    let masses: Vec<T> = out.iter().map(|s| s.value()).collect();
    IncomeHistogram::from_masses(
        histogram.year,
        w,
        masses,
        histogram.boosted,
        histogram.units,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bin() -> IncomeHistogram<f64> {
        IncomeHistogram::from_masses(2000, 1.0, vec![1.0, 1.0], false, IncomeUnits::Dimensionless)
            .unwrap()
    }

    #[test]
    fn people_below_edges() {
        let h = two_bin();
        assert_eq!(cumulative_people_below(&h, 0.0), 0.0);
        assert_eq!(cumulative_people_below(&h, f64::INFINITY), 1.0);
        assert_eq!(cumulative_people_below(&h, 1.0), 0.5);
        assert_eq!(cumulative_people_below(&h, 0.5), 0.25);
    }

    #[test]
    fn income_below_edges() {
        let h = two_bin();
        assert_eq!(cumulative_income_below(&h, f64::INFINITY), 1.0);
        // mids 0.5 and 1.5
        assert!((cumulative_income_below(&h, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(cumulative_income_below(&h, 0.0), 0.0);
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(IncomeHistogram::from_masses(
            2000,
            1.0,
            vec![0.0, 0.0],
            false,
            IncomeUnits::Dollars
        )
        .is_err());
        assert!(IncomeHistogram::from_masses(
            2000,
            1.0,
            vec![-1.0, 2.0],
            false,
            IncomeUnits::Dollars
        )
        .is_err());
        assert!(
            IncomeHistogram::from_masses(2000, 0.0, vec![1.0], false, IncomeUnits::Dollars)
                .is_err()
        );
    }

    #[test]
    fn csv_roundtrip() {
        let h = IncomeHistogram::from_masses(
            1999,
            2500.0,
            vec![3.0, 1.0, 0.0, 6.0],
            true,
            IncomeUnits::Dollars,
        )
        .unwrap();
        let mut buf = Vec::new();
        h.to_csv_writer(&mut buf, &[("params_hash", "abc".into())])
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# params_hash=abc\nbin_low,bin_high,density\n0,2500,0.3\n"));
        let back =
            IncomeHistogram::from_csv_reader(buf.as_slice(), 1999, IncomeUnits::Dollars, true)
                .unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn csv_rejects_irregular_bins() {
        let text = "bin_low,bin_high,density\n0,1,0.5\n1,3,0.5\n";
        assert!(IncomeHistogram::<f64>::from_csv_reader(
            text.as_bytes(),
            2000,
            IncomeUnits::Dimensionless,
            false
        )
        .is_err());
    }

    #[test]
    fn adjust_identity_at_base_year() {
        let econ = EconomySeries::with_growth(1990, 2005, 0.02, 0.05);
        let h = IncomeHistogram::from_masses(
            2000,
            2500.0,
            vec![1.0, 2.0, 3.0],
            false,
            IncomeUnits::Dollars,
        )
        .unwrap();
        assert_eq!(normalize_adjust(&h, &econ, 2000).unwrap(), h);
        let dimensionless = IncomeHistogram {
            units: IncomeUnits::Dimensionless,
            ..h
        };
        assert!(normalize_adjust(&dimensionless, &econ, 2000).is_err());
    }

    #[test]
    fn doubling_nominal_halves_incomes() {
        let econ = EconomySeries::new(2000, vec![1.0, 1.0], vec![1.0, 2.0]).unwrap();
        let h = IncomeHistogram::from_masses(
            2001,
            1.0f64,
            vec![0.0, 0.0, 1.0, 1.0],
            false,
            IncomeUnits::Dollars,
        )
        .unwrap();
        let adj = normalize_adjust(&h, &econ, 2000).unwrap();
        // [2,3) -> [1,1.5), [3,4) -> [1.5,2)
        assert_eq!(adj.densities.len(), 2);
        assert_eq!(adj.densities[0], 0.0);
        assert!((adj.densities[1] - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cumulatives_monotone_and_bounded(
                masses in prop::collection::vec(0.0f64..10.0, 1..40),
                a in 0.0f64..50.0,
                b in 0.0f64..50.0,
            ) {
                prop_assume!(masses.iter().sum::<f64>() > 0.0);
                let h = IncomeHistogram::from_masses(2000, 1.0, masses, false, IncomeUnits::Dimensionless).unwrap();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                for f in [cumulative_people_below::<f64>, cumulative_income_below::<f64>] {
                    let (x, y) = (f(&h, lo), f(&h, hi));
                    prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
                    prop_assert!(x <= y + 1e-15);
                }
            }

            #[test]
            fn adjustment_preserves_mass(
                masses in prop::collection::vec(0.0f64..10.0, 1..40),
                growth in 0.5f64..3.0,
            ) {
                prop_assume!(masses.iter().sum::<f64>() > 0.0);
                let econ = EconomySeries::new(2000, vec![1.0, 1.0], vec![1.0, growth]).unwrap();
                let h = IncomeHistogram::from_masses(2001, 2500.0, masses, false, IncomeUnits::Dollars).unwrap();
                let adj = normalize_adjust(&h, &econ, 2000).unwrap();
                prop_assert!((adj.total() - 1.0).abs() < 1e-9);
                let mean = |h: &IncomeHistogram<f64>| (0..h.len()).map(|i| h.densities[i] * h.bin_mid(i)).sum::<f64>();
                // mean income scales by 1/growth up to half a bin of re-binning error
                prop_assert!((mean(&adj) - mean(&h) / growth).abs() <= 2500.0);
            }
        }
    }
}
