use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pidsim_core::paretotail::{tail_sample, TailConfig};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pidsim");

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        // real index reaches 2.22 in 2002
        let rate = 2.22f64.powf(1.0 / 42.0);
        let mut econ = String::from("year,real_gdp_index,nominal_gdp_index\n");
        for (k, y) in (1960..=2002).enumerate() {
            econ.push_str(&format!(
                "{y},{},{}\n",
                rate.powi(k as i32),
                (rate * 1.03).powi(k as i32)
            ));
        }
        fs::write(dir.path().join("economy.csv"), econ).unwrap();
        fs::write(dir.path().join("pyramid.csv"), pyramid(1990..=2002)).unwrap();
        fs::write(dir.path().join("projection.csv"), pyramid(2002..=2023)).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.path(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

fn pyramid(years: std::ops::RangeInclusive<i32>) -> String {
    let mut s = String::from("year,age,count\n");
    for y in years {
        for a in 15..=100 {
            let c = 1000.0 * (-((a as f64 - 15.0) / 60.0).powi(3)).exp();
            s.push_str(&format!("{y},{a},{c}\n"));
        }
    }
    s
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

fn base<'a>(cmd: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![cmd, "--economy", "economy.csv", "--out", out]
}

#[test]
fn simulate_one_year_and_range() {
    let f = Fixture::new();
    let mut args = base("simulate", "one");
    args.extend(["--pyramid", "pyramid.csv", "--years", "2002"]);
    let o = f.run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csvs: Vec<_> = fs::read_dir(f.out("one"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .collect();
    assert_eq!(csvs.len(), 1);
    let side = read_json(&f.out("one/pid_2002.json"));
    assert_eq!(side["year"], 2002);
    assert_eq!(side["mode"], "det");
    let hash = side["params_hash"].as_str().unwrap().to_string();
    let text = fs::read_to_string(f.out("one/pid_2002.csv")).unwrap();
    assert!(text.starts_with(&format!("# params_hash={hash}\n")));
    let total: f64 = csv_column(&f.out("one/pid_2002.csv"), 2).iter().sum();
    assert!((total - 1.0).abs() < 1e-9);

    let mut args = base("simulate", "range");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "1994:2002",
        "--units",
        "dollars",
    ]);
    assert!(f.run(&args).status.success());
    let n = fs::read_dir(f.out("range"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(n, 9);
}

#[test]
fn simulate_is_byte_deterministic() {
    let f = Fixture::new();
    for out in ["a", "b"] {
        let mut args = base("simulate", out);
        args.extend([
            "--pyramid",
            "pyramid.csv",
            "--years",
            "2000",
            "--mode",
            "stoch",
            "--seed",
            "42",
        ]);
        assert!(f.run(&args).status.success());
    }
    for name in ["pid_2000.csv", "pid_2000.json"] {
        assert_eq!(
            fs::read(f.out("a").join(name)).unwrap(),
            fs::read(f.out("b").join(name)).unwrap()
        );
    }
}

#[test]
fn input_errors_exit_two() {
    let f = Fixture::new();
    let mut args = base("simulate", "x");
    args.extend(["--pyramid", "projection.csv", "--years", "2010"]);
    let o = f.run(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("outside available range"), "{err}");

    let mut args = base("simulate", "x");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "2002",
        "--mode",
        "stoch",
    ]);
    assert_eq!(f.run(&args).status.code(), Some(2));

    let mut args = base("simulate", "x");
    args.extend(["--pyramid", "missing.csv", "--years", "2002"]);
    let o = f.run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn profile_pareto_peaks_near_critical_experience() {
    let f = Fixture::new();
    fs::write(f.path("flat.csv"), {
        let mut s = String::from("year,age,count\n");
        for a in 15..=100 {
            s.push_str(&format!("2002,{a},1\n"));
        }
        s
    })
    .unwrap();
    let mut args = base("profile", "p");
    args.extend([
        "--pyramid",
        "flat.csv",
        "--years",
        "2002",
        "--threshold",
        "pareto",
    ]);
    assert!(f.run(&args).status.success());
    let v = csv_column(&f.out("p/profile_2002.csv"), 1);
    let peak = v
        .iter()
        .enumerate()
        .fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
    assert!((peak as f64 - 39.5).abs() <= 1.0, "{peak}");
}

#[test]
fn profile_zero_threshold_is_pyramid_and_peak_normalization() {
    let f = Fixture::new();
    let mut args = base("profile", "z");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "2002",
        "--threshold",
        "0",
    ]);
    assert!(f.run(&args).status.success());
    let v = csv_column(&f.out("z/profile_2002.csv"), 1);
    let expected: Vec<f64> = (15..=100)
        .map(|a| 1000.0 * (-((a as f64 - 15.0) / 60.0).powi(3)).exp())
        .collect();
    for (a, b) in v.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0));
    }

    let mut args = base("profile", "n");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "1994:2001",
        "--threshold",
        "100000",
        "--normalize",
        "peak:2001",
    ]);
    let o = f.run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ref_max = csv_column(&f.out("n/profile_2001.csv"), 1)
        .into_iter()
        .fold(0.0, f64::max);
    assert!((ref_max - 1.0).abs() < 1e-12);
    let side = read_json(&f.out("n/profile_1994.json"));
    assert_eq!(side["normalization"], "peak:2001");
}

#[test]
fn forecast_writes_each_year() {
    let f = Fixture::new();
    let mut args = base("forecast", "fc");
    args.extend([
        "--projection",
        "projection.csv",
        "--growth",
        "0.016",
        "--years",
        "2002:2023",
    ]);
    let o = f.run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let n = fs::read_dir(f.out("fc"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(n, 22);
    let total: f64 = csv_column(&f.out("fc/forecast_2023.csv"), 1).iter().sum();
    assert!((total - 1.0).abs() < 1e-9);

    let mut args = base("forecast", "fc0");
    args.extend([
        "--projection",
        "projection.csv",
        "--growth",
        "0",
        "--years",
        "2002:2003",
    ]);
    assert!(f.run(&args).status.success());

    let mut args = base("forecast", "none");
    args.extend(["--growth", "0.016", "--years", "2002:2023"]);
    assert_eq!(f.run(&args).status.code(), Some(2));
}

#[test]
fn calibrate_recovers_alpha_from_simulated_output() {
    let f = Fixture::new();
    let mut args = base("simulate", "obs");
    args.extend(["--pyramid", "pyramid.csv", "--years", "2000"]);
    assert!(f.run(&args).status.success());

    let mut args = base("calibrate", "cal");
    args.extend(["--pyramid", "pyramid.csv", "--observed", "obs/pid_2000.csv"]);
    let o = f.run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&f.out("cal/calibration.json"));
    assert!(
        (r["alpha_hat"].as_f64().unwrap() - 0.087).abs() <= 0.002,
        "{r}"
    );
    assert_eq!(r["converged"], true);
    assert_eq!(r["year"], 2000);

    let mut flat = String::from("# year=2000\nbin_low,bin_high,density\n");
    for i in 0..300 {
        flat.push_str(&format!(
            "{},{},1\n",
            i as f64 * 0.01,
            (i + 1) as f64 * 0.01
        ));
    }
    fs::write(f.path("flat.csv"), flat).unwrap();
    let mut args = base("calibrate", "calflat");
    args.extend(["--pyramid", "pyramid.csv", "--observed", "flat.csv"]);
    assert!(f.run(&args).status.success());
    let r = read_json(&f.out("calflat/calibration.json"));
    assert_eq!(r["converged"], false);
    assert!(r["loss"].as_f64().unwrap() > 0.0);

    let mut args = base("calibrate", "calnone");
    args.extend(["--pyramid", "pyramid.csv"]);
    assert_eq!(f.run(&args).status.code(), Some(2));
}

#[test]
fn fit_tail_on_samples_and_bins() {
    let f = Fixture::new();
    let xs = tail_sample(200_000, 1.0f64, &TailConfig::default(), 3).unwrap();
    let mut s = String::from("income\n");
    for x in &xs {
        s.push_str(&format!("{x}\n"));
    }
    fs::write(f.path("tail.csv"), s).unwrap();
    let o = f.run(&[
        "fit-tail",
        "--input",
        "tail.csv",
        "--threshold",
        "1",
        "--out",
        "ft",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&f.out("ft/tail_fit.json"));
    let e = r["exponent"].as_f64().unwrap();
    assert!((-4.1..=-3.9).contains(&e), "{e}");

    // exact analytic masses of a -4 density on log bins
    let mut s = String::from("bin_low,bin_high,density\n");
    let mut lo = 1.0f64;
    for _ in 0..20 {
        let hi = lo * 10f64.powf(0.1);
        s.push_str(&format!("{lo},{hi},{}\n", lo.powi(-3) - hi.powi(-3)));
        lo = hi;
    }
    fs::write(f.path("bins.csv"), s).unwrap();
    assert!(f
        .run(&["fit-tail", "--input", "bins.csv", "--out", "fb"])
        .status
        .success());
    let r = read_json(&f.out("fb/tail_fit.json"));
    assert!((r["exponent"].as_f64().unwrap() + 4.0).abs() < 1e-3, "{r}");

    let few: String = std::iter::once("income".to_string())
        .chain(xs.iter().take(50).map(|x| x.to_string()))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(f.path("few.csv"), few).unwrap();
    assert_eq!(
        f.run(&["fit-tail", "--input", "few.csv", "--out", "ff"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn params_file_changes_hash() {
    let f = Fixture::new();
    fs::write(f.path("params.json"), r#"{"alpha": 0.07}"#).unwrap();
    let mut args = base("simulate", "pa");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "2002",
        "--params",
        "params.json",
    ]);
    assert!(f.run(&args).status.success());
    let mut args = base("simulate", "pb");
    args.extend(["--pyramid", "pyramid.csv", "--years", "2002"]);
    assert!(f.run(&args).status.success());
    assert_ne!(
        read_json(&f.out("pa/pid_2002.json"))["params_hash"],
        read_json(&f.out("pb/pid_2002.json"))["params_hash"]
    );
    fs::write(f.path("bad.json"), r#"{"alpha": -1}"#).unwrap();
    let mut args = base("simulate", "pc");
    args.extend([
        "--pyramid",
        "pyramid.csv",
        "--years",
        "2002",
        "--params",
        "bad.json",
    ]);
    assert_eq!(f.run(&args).status.code(), Some(2));
}
