use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pidsim",
    version,
    about = "Personal income distribution microsimulation"
)]
pub struct Cli {
    /// Worker threads for the simulation kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Personal income distributions for one or more years.
    Simulate(SimulateArgs),
    /// Above-threshold counts by work experience.
    Profile(ProfileArgs),
    /// Normalized supercritical profiles under a projected population and growth rate.
    Forecast(ForecastArgs),
    /// Fit the dissipation coefficient to an observed distribution.
    Calibrate(CalibrateArgs),
    /// Estimate the power-law exponent of an income tail.
    FitTail(FitTailArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model parameters as JSON; missing fields take defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Economy CSV: year,real_gdp_index,nominal_gdp_index.
    #[arg(long)]
    pub economy: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Population CSV: year,age,count.
    #[arg(long)]
    pub pyramid: PathBuf,
    /// A year or an inclusive range `first:last`.
    #[arg(long)]
    pub years: YearRange,
    #[arg(long, value_enum, default_value_t = Mode::Det)]
    pub mode: Mode,
    /// Required in stochastic mode.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to 0.01 model units or 2500 dollars.
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long, value_enum, default_value_t = Units::Model)]
    pub units: Units,
    /// Re-express dollar histograms in real terms of this year.
    #[arg(long)]
    pub adjust_to: Option<i32>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pyramid: PathBuf,
    #[arg(long)]
    pub years: YearRange,
    /// `pareto`, a dollar amount, or `model:<value>`.
    #[arg(long, default_value = "pareto")]
    pub threshold: ThresholdSpec,
    /// `exact`, or `bin:<dollar width>` to align the threshold to a bin edge.
    #[arg(long, default_value = "exact")]
    pub counting: CountingSpec,
    /// `counts`, `unit`, or `peak:<reference year>`.
    #[arg(long, default_value = "counts")]
    pub normalize: NormalizeSpec,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    /// Projected population CSV: year,age,count.
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// Annual real growth rate beyond the last economy year.
    #[arg(long)]
    pub growth: f64,
    #[arg(long)]
    pub years: YearRange,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pyramid: PathBuf,
    /// Observed distribution CSV: bin_low,bin_high,density.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    /// Year of the observed distribution; read from a `# year=` comment when absent.
    #[arg(long)]
    pub year: Option<i32>,
    /// Units of the observed distribution; read from a `# units=` comment when absent.
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[arg(long, default_value_t = 0.02)]
    pub alpha_low: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha_high: f64,
    #[arg(long, value_enum, default_value_t = Loss::L2)]
    pub loss: Loss,
    /// Also fit the start-year threshold to this supercritical population share.
    #[arg(long)]
    pub share: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitTailArgs {
    /// Either a histogram (bin_low,bin_high,density) or one income per row (income).
    #[arg(long)]
    pub input: PathBuf,
    /// Lower tail bound; defaults to the smallest income or bin edge.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Det,
    Stoch,
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Model,
    Dollars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    L2,
    L1,
    Ks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn years(&self) -> Vec<i32> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for YearRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| {
            x.trim()
                .parse::<i32>()
                .map_err(|_| format!("bad year `{x}`"))
        };
        let (first, last) = match s.split_once(':') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let y = parse(s)?;
                (y, y)
            }
        };
        if last < first {
            return Err(format!("empty year range `{s}`"));
        }
        Ok(Self { first, last })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Pareto,
    Dollars(f64),
    Model(f64),
}

impl FromStr for ThresholdSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |x: &str| -> Result<f64, String> {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| format!("bad threshold `{s}`"))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(format!("threshold must be non-negative, got `{s}`"))
            }
        };
        match s.trim() {
            "pareto" => Ok(Self::Pareto),
            x => match x.strip_prefix("model:") {
                Some(m) => num(m).map(Self::Model),
                None => num(x).map(Self::Dollars),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountingSpec {
    Exact,
    Bin(f64),
}

impl FromStr for CountingSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            x => {
                let w = x
                    .strip_prefix("bin:")
                    .and_then(|w| w.parse::<f64>().ok())
                    .filter(|w| *w > 0.0)
                    .ok_or_else(|| {
                        format!("counting must be `exact` or `bin:<width>`, got `{s}`")
                    })?;
                Ok(Self::Bin(w))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizeSpec {
    Counts,
    Unit,
    Peak(i32),
}

impl FromStr for NormalizeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "counts" => Ok(Self::Counts),
            "unit" => Ok(Self::Unit),
            x => x
                .strip_prefix("peak:")
                .and_then(|y| y.parse().ok())
                .map(Self::Peak)
                .ok_or_else(|| {
                    format!("normalize must be `counts`, `unit` or `peak:<year>`, got `{s}`")
                }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("1994:2002".parse::<YearRange>().unwrap().years().len(), 9);
        assert_eq!(
            "2002".parse::<YearRange>().unwrap(),
            YearRange {
                first: 2002,
                last: 2002
            }
        );
        assert!("2002:1994".parse::<YearRange>().is_err());
        assert_eq!(
            "pareto".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Pareto
        );
        assert_eq!(
            "100000".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Dollars(100_000.0)
        );
        assert_eq!(
            "model:0.5".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Model(0.5)
        );
        assert!("-1".parse::<ThresholdSpec>().is_err());
        assert_eq!(
            "bin:2500".parse::<CountingSpec>().unwrap(),
            CountingSpec::Bin(2500.0)
        );
        assert!("bin:0".parse::<CountingSpec>().is_err());
        assert_eq!(
            "peak:2001".parse::<NormalizeSpec>().unwrap(),
            NormalizeSpec::Peak(2001)
        );
    }
}
