use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pidsim_core::aggregate::{
    self, above_threshold_profile_with, build_pid, normalize_adjust, normalize_to_peak,
    normalize_unit_sum, Counting, IncomeHistogram, IncomeUnits, PidMode, PidOptions, Threshold,
    WorkExperienceProfile, DEFAULT_BIN_WIDTH, DOLLAR_BIN_WIDTH,
};
use pidsim_core::calibrate::{calibrate_alpha, calibrate_threshold, AlphaSearch, LossKind};
use pidsim_core::model::{scaling_state, EconomySeries, ModelParams};
use pidsim_core::paretotail::{fit_exponent, fit_exponent_binned, ExponentFit, TailBin};
use pidsim_core::population::PopulationPyramid;
use serde::Serialize;

use crate::args::{
    CalibrateArgs, Common, CountingSpec, FitTailArgs, ForecastArgs, Loss, Mode, NormalizeSpec,
    ProfileArgs, SimulateArgs, ThresholdSpec, Units,
};

/// Exit code 2 for bad input, 1 for a broken internal invariant.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<E: fmt::Display>(what: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{what}: {e}"))
}

fn open(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(input(format!("{what} `{}`", path.display())))
}

fn load_params(path: Option<&Path>) -> CliResult<ModelParams<f64>> {
    match path {
        None => Ok(ModelParams::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(input(format!("params `{}`", p.display())))?;
            ModelParams::from_json_str(&text).map_err(input(format!("params `{}`", p.display())))
        }
    }
}

fn load_economy(path: &Path) -> CliResult<EconomySeries<f64>> {
    EconomySeries::from_csv_reader(open(path, "economy")?)
        .map_err(input(format!("economy `{}`", path.display())))
}

fn load_pyramid(path: &Path, what: &str) -> CliResult<PopulationPyramid<f64>> {
    PopulationPyramid::from_csv_reader(open(path, what)?)
        .map_err(input(format!("{what} `{}`", path.display())))
}

struct Context {
    params: ModelParams<f64>,
    econ: EconomySeries<f64>,
    hash: String,
    out: PathBuf,
}

fn context(common: &Common) -> CliResult<Context> {
    let params = load_params(common.params.as_deref())?;
    let econ = load_economy(&common.economy)?;
    prepare_out(&common.out)?;
    Ok(Context {
        hash: params.params_hash(),
        params,
        econ,
        out: common.out.clone(),
    })
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(input(format!("output directory `{}`", out.display())))
}

fn core_err(what: String) -> impl FnOnce(pidsim_core::Error) -> CliError {
    move |e| CliError::Input(format!("{what}: {e}"))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(input(format!("cannot write `{}`", path.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut w = create(path)?;
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(input(format!("cannot write `{}`", path.display())))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    year: i32,
    /// Model-unit threshold the file was built against.
    threshold: f64,
    mode: &'a str,
    seed: Option<u64>,
    units: &'a str,
    bin_width: Option<f64>,
    adjusted_to: Option<i32>,
    normalization: Option<String>,
    params_hash: &'a str,
}

fn units_name(u: IncomeUnits) -> &'static str {
    match u {
        IncomeUnits::Dimensionless => "model",
        IncomeUnits::Dollars => "dollars",
    }
}

fn write_histogram(path: &Path, h: &IncomeHistogram<f64>, sidecar: &Sidecar) -> CliResult<()> {
    let sum = h.total();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CliError::Internal(format!(
            "histogram for {} sums to {sum}",
            h.year
        )));
    }
    let comments = [
        ("params_hash", sidecar.params_hash.to_string()),
        ("year", h.year.to_string()),
        ("mode", sidecar.mode.to_string()),
        ("units", sidecar.units.to_string()),
    ];
    h.to_csv_writer(create(path)?, &comments)
        .map_err(input(format!("cannot write `{}`", path.display())))?;
    write_json(&path.with_extension("json"), sidecar)
}

fn write_profile(path: &Path, p: &WorkExperienceProfile<f64>, sidecar: &Sidecar) -> CliResult<()> {
    let comments = [
        ("params_hash", sidecar.params_hash.to_string()),
        ("year", p.year.to_string()),
        ("threshold", p.threshold.to_string()),
    ];
    p.to_csv_writer(create(path)?, &comments)
        .map_err(input(format!("cannot write `{}`", path.display())))?;
    write_json(&path.with_extension("json"), sidecar)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let ctx = context(&args.common)?;
    let pyramid = load_pyramid(&args.pyramid, "pyramid")?;
    let (mode, mode_name) = match args.mode {
        Mode::Det => (PidMode::Deterministic, "det"),
        Mode::Stoch => (PidMode::Stochastic, "stoch"),
        Mode::Theory => (PidMode::Theoretical, "theory"),
    };
    if mode == PidMode::Stochastic && args.seed.is_none() {
        return Err(CliError::Input(
            "--seed is required with --mode stoch".into(),
        ));
    }
    let units = match args.units {
        Units::Model => IncomeUnits::Dimensionless,
        Units::Dollars => IncomeUnits::Dollars,
    };
    if args.adjust_to.is_some() && units != IncomeUnits::Dollars {
        return Err(CliError::Input("--adjust-to needs --units dollars".into()));
    }
    let bin_width = args.bin_width.unwrap_or(match units {
        IncomeUnits::Dimensionless => DEFAULT_BIN_WIDTH,
        IncomeUnits::Dollars => DOLLAR_BIN_WIDTH,
    });
    let options = PidOptions {
        mode,
        seed: args.seed.unwrap_or(0),
        bin_width,
        units,
        ..PidOptions::default()
    };
    let mut written = Vec::new();
    for year in args.years.years() {
        let what = format!("year {year}");
        let mut h = build_pid(year, &pyramid, &ctx.econ, &ctx.params, &options)
            .map_err(core_err(what.clone()))?;
        if let Some(base) = args.adjust_to {
            h = normalize_adjust(&h, &ctx.econ, base).map_err(core_err(what.clone()))?;
        }
        let threshold = scaling_state(&ctx.params, &ctx.econ, year)
            .map_err(core_err(what))?
            .pareto_threshold;
        let path = ctx.out.join(format!("pid_{year}.csv"));
        let sidecar = Sidecar {
            command: "simulate",
            year,
            threshold,
            mode: mode_name,
            seed: args.seed,
            units: units_name(units),
            bin_width: Some(bin_width),
            adjusted_to: args.adjust_to,
            normalization: None,
            params_hash: &ctx.hash,
        };
        write_histogram(&path, &h, &sidecar)?;
        written.push(path);
    }
    Ok(written)
}

fn normalization_name(n: aggregate::Normalization) -> String {
    match n {
        aggregate::Normalization::Counts => "counts".into(),
        aggregate::Normalization::UnitSum => "unit".into(),
        aggregate::Normalization::Peak { reference_year } => format!("peak:{reference_year}"),
    }
}

pub fn profile(args: &ProfileArgs) -> CliResult<Vec<PathBuf>> {
    let ctx = context(&args.common)?;
    let pyramid = load_pyramid(&args.pyramid, "pyramid")?;
    let threshold = match args.threshold {
        ThresholdSpec::Pareto => Threshold::Pareto,
        ThresholdSpec::Dollars(d) => Threshold::Dollars(d),
        ThresholdSpec::Model(m) => Threshold::Model(m),
    };
    let counting = match args.counting {
        CountingSpec::Exact => Counting::Exact,
        CountingSpec::Bin(w) => Counting::BinAligned { dollar_width: w },
    };
    let compute = |year: i32| {
        above_threshold_profile_with(year, threshold, counting, &pyramid, &ctx.econ, &ctx.params)
            .map_err(core_err(format!("year {year}")))
    };
    let reference = match args.normalize {
        NormalizeSpec::Peak(y) => Some(compute(y)?),
        _ => None,
    };
    let mut written = Vec::new();
    for year in args.years.years() {
        let raw = compute(year)?;
        let prof = match (&reference, args.normalize) {
            (Some(r), _) => normalize_to_peak(&raw, r)
                .map_err(core_err(format!("reference year {}", r.year)))?,
            (None, NormalizeSpec::Unit) => {
                normalize_unit_sum(&raw).map_err(core_err(format!("year {year}")))?
            }
            _ => raw,
        };
        let path = ctx.out.join(format!("profile_{year}.csv"));
        let sidecar = Sidecar {
            command: "profile",
            year,
            threshold: prof.threshold,
            mode: "det",
            seed: None,
            units: "persons",
            bin_width: None,
            adjusted_to: None,
            normalization: Some(normalization_name(prof.normalization)),
            params_hash: &ctx.hash,
        };
        write_profile(&path, &prof, &sidecar)?;
        written.push(path);
    }
    Ok(written)
}

pub fn forecast(args: &ForecastArgs) -> CliResult<Vec<PathBuf>> {
    let projection = args
        .projection
        .as_deref()
        .ok_or_else(|| CliError::Input("--projection is required for forecast".into()))?;
    if !(args.growth.is_finite() && args.growth > -1.0) {
        return Err(CliError::Input(format!(
            "growth rate must exceed -1, got {}",
            args.growth
        )));
    }
    let ctx = context(&args.common)?;
    let pyramid = load_pyramid(projection, "projection")?;
    let years = args.years.years();
    let profiles = aggregate::forecast(&pyramid, args.growth, &years, &ctx.econ, &ctx.params)
        .map_err(core_err("forecast".to_string()))?;
    let mut written = Vec::new();
    for prof in profiles {
        let path = ctx.out.join(format!("forecast_{}.csv", prof.year));
        let sidecar = Sidecar {
            command: "forecast",
            year: prof.year,
            threshold: prof.threshold,
            mode: "det",
            seed: None,
            units: "fraction",
            bin_width: None,
            adjusted_to: None,
            normalization: Some(normalization_name(prof.normalization)),
            params_hash: &ctx.hash,
        };
        write_profile(&path, &prof, &sidecar)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `# key=value` lines at the top of a CSV file.
fn header_comments(path: &Path) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in open(path, "observed")?.lines() {
        let line = line.map_err(input(format!("observed `{}`", path.display())))?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.trim().split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    year: i32,
    alpha_hat: f64,
    pareto_threshold0_hat: f64,
    loss: f64,
    loss_kind: &'a str,
    iterations: usize,
    converged: bool,
    search: [f64; 2],
    probes: Vec<(f64, f64)>,
    target_share: Option<f64>,
    params_hash: &'a str,
}

pub fn calibrate(args: &CalibrateArgs) -> CliResult<PathBuf> {
    let observed = args
        .observed
        .as_deref()
        .ok_or_else(|| CliError::Input("--observed is required for calibrate".into()))?;
    let ctx = context(&args.common)?;
    let pyramid = load_pyramid(&args.pyramid, "pyramid")?;
    let comments = header_comments(observed)?;
    let lookup = |k: &str| {
        comments
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
    };
    let year = match args.year {
        Some(y) => y,
        None => lookup("year")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Input("observed year unknown: pass --year".into()))?,
    };
    let units = match args.units {
        Some(Units::Dollars) => IncomeUnits::Dollars,
        Some(Units::Model) => IncomeUnits::Dimensionless,
        None if lookup("units").as_deref() == Some("dollars") => IncomeUnits::Dollars,
        None => IncomeUnits::Dimensionless,
    };
    let hist = IncomeHistogram::from_csv_reader(open(observed, "observed")?, year, units, false)
        .map_err(input(format!("observed `{}`", observed.display())))?;
    let (loss, loss_name) = match args.loss {
        Loss::L2 => (LossKind::L2, "l2"),
        Loss::L1 => (LossKind::L1, "l1"),
        Loss::Ks => (LossKind::Ks, "ks"),
    };
    let search = AlphaSearch {
        low: args.alpha_low,
        high: args.alpha_high,
        loss,
        ..AlphaSearch::default()
    };
    let result = calibrate_alpha(&hist, &pyramid, &ctx.econ, &ctx.params, &search)
        .map_err(core_err("calibration".to_string()))?;
    if result.loss.is_nan() || result.loss < 0.0 || result.probes.iter().any(|p| p.1 < result.loss)
    {
        return Err(CliError::Internal(
            "calibration optimum is not the best probe".into(),
        ));
    }
    let mut threshold0 = result.pareto_threshold0_hat;
    if let Some(share) = args.share {
        let fitted = ModelParams {
            alpha: result.alpha_hat,
            ..ctx.params.clone()
        };
        threshold0 = calibrate_threshold(share, year, &pyramid, &ctx.econ, &fitted)
            .map_err(core_err("threshold calibration".to_string()))?;
    }
    let report = CalibrationReport {
        year,
        alpha_hat: result.alpha_hat,
        pareto_threshold0_hat: threshold0,
        loss: result.loss,
        loss_kind: loss_name,
        iterations: result.iterations,
        converged: result.converged,
        search: [search.low, search.high],
        probes: result.probes,
        target_share: args.share,
        params_hash: &ctx.hash,
    };
    let path = ctx.out.join("calibration.json");
    write_json(&path, &report)?;
    Ok(path)
}

#[derive(Serialize)]
struct TailReport<'a> {
    input: String,
    threshold: f64,
    exponent: f64,
    cumulative_exponent: f64,
    maximum_likelihood: Option<f64>,
    observations: usize,
    bins_used: usize,
    params_hash: &'a str,
}

enum TailInput {
    Samples(Vec<f64>),
    Bins(Vec<TailBin<f64>>),
}

fn read_tail_input(path: &Path) -> CliResult<TailInput> {
    let what = format!("input `{}`", path.display());
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path, "input")?);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(input(what.clone()))?
        .iter()
        .map(str::to_string)
        .collect();
    let number = |rec: &csv::StringRecord, k: usize, row: usize| -> CliResult<f64> {
        rec.get(k)
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Input(format!("{what}: row {row}: bad number")))
    };
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        records.push((i + 2, rec.map_err(input(what.clone()))?));
    }
    match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["income"] => Ok(TailInput::Samples(
            records
                .iter()
                .map(|(row, r)| number(r, 0, *row))
                .collect::<CliResult<_>>()?,
        )),
        ["bin_low", "bin_high", "density"] => Ok(TailInput::Bins(
            records
                .iter()
                .map(|(row, r)| {
                    Ok(TailBin {
                        low: number(r, 0, *row)?,
                        high: number(r, 1, *row)?,
                        mass: number(r, 2, *row)?,
                    })
                })
                .collect::<CliResult<_>>()?,
        )),
        _ => Err(CliError::Input(format!(
            "{what}: header must be `income` or `bin_low,bin_high,density`"
        ))),
    }
}

pub fn fit_tail(args: &FitTailArgs) -> CliResult<PathBuf> {
    let params = load_params(args.params.as_deref())?;
    prepare_out(&args.out)?;
    let data = read_tail_input(&args.input)?;
    let what = format!("input `{}`", args.input.display());
    let (threshold, fit): (f64, ExponentFit<f64>) = match &data {
        TailInput::Samples(xs) => {
            let t = args
                .threshold
                .unwrap_or_else(|| xs.iter().copied().fold(f64::INFINITY, f64::min));
            (t, fit_exponent(xs, t).map_err(core_err(what))?)
        }
        TailInput::Bins(bins) => {
            let t = args.threshold.unwrap_or_else(|| {
                bins.iter()
                    .filter(|b| b.low > 0.0 && b.mass > 0.0)
                    .map(|b| b.low)
                    .fold(f64::INFINITY, f64::min)
            });
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Input(format!(
                    "{what}: no positive tail threshold"
                )));
            }
            (t, fit_exponent_binned(bins, t).map_err(core_err(what))?)
        }
    };
    let report = TailReport {
        input: args.input.display().to_string(),
        threshold,
        exponent: fit.regression,
        cumulative_exponent: fit.cumulative_exponent(),
        maximum_likelihood: fit.maximum_likelihood,
        observations: fit.observations,
        bins_used: fit.bins_used,
        params_hash: &params.params_hash(),
    };
    let path = args.out.join("tail_fit.json");
    write_json(&path, &report)?;
    Ok(path)
}
