//! Parameter recovery by matching model output to observed distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    cohort_incomes, fraction_at_or_above, pid_from_cohorts, IncomeHistogram, IncomeUnits, PidMode,
    PidOptions,
};
use crate::error::{Error, Result};
use crate::model::{model_unit_dollars, scaling_state, EconomySeries, ModelParams};
use crate::population::PopulationPyramid;
use crate::real::{from_i64, lit, Real};
use crate::sum::CompensatedSum;

/// Tolerance on the matched supercritical fraction.
pub const SHARE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L2,
    L1,
    /// Largest gap between the cumulative curves.
    Ks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSearch<T> {
    pub low: T,
    pub high: T,
    /// Final bracket width.
    pub tolerance: T,
    pub scan_points: usize,
    /// Loss at the optimum relative to the observed subcritical L2 mass above
    /// which the fit is flagged as not converged.
    pub max_relative_residual: T,
    pub loss: LossKind,
}

impl<T: Real> Default for AlphaSearch<T> {
    fn default() -> Self {
        Self {
            low: lit(0.02),
            high: lit(0.2),
            tolerance: lit(1e-4),
            scan_points: 20,
            max_relative_residual: lit(0.05),
            loss: LossKind::L2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult<T> {
    pub alpha_hat: T,
    pub pareto_threshold0_hat: T,
    pub loss: T,
    pub iterations: usize,
    pub converged: bool,
    /// Every evaluated `(alpha, loss)` pair in evaluation order.
    pub probes: Vec<(T, T)>,
}

fn subcritical_loss<T: Real>(
    observed: &IncomeHistogram<T>,
    model: &IncomeHistogram<T>,
    limit: T,
    kind: LossKind,
) -> T {
    let mut acc = CompensatedSum::new();
    let (mut cum_o, mut cum_m) = (CompensatedSum::new(), CompensatedSum::new());
    let mut ks = T::zero();
    for i in 0..observed.len() {
        if observed.bin_high(i) > limit {
            break;
        }
        let o = observed.densities[i];
        let m = model.densities.get(i).copied().unwrap_or(T::zero());
        match kind {
            LossKind::L2 => acc.add((o - m) * (o - m)),
            LossKind::L1 => acc.add((o - m).abs()),
            LossKind::Ks => {
                cum_o.add(o);
                cum_m.add(m);
                ks = ks.max((cum_o.value() - cum_m.value()).abs());
            }
        }
    }
    match kind {
        LossKind::Ks => ks,
        _ => acc.value(),
    }
}

/// Finds the dissipation coefficient whose un-boosted model distribution best
/// matches `observed` below the year's Pareto threshold.
pub fn calibrate_alpha<T: Real>(
    observed: &IncomeHistogram<T>,
    pyramid: &PopulationPyramid<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
    search: &AlphaSearch<T>,
) -> Result<CalibrationResult<T>> {
    if !(search.low > T::zero() && search.high < T::one() && search.low < search.high) {
        return Err(Error::Domain(
            "alpha search interval must lie inside (0, 1)".into(),
        ));
    }
    if search.scan_points < 3 || !(search.tolerance > T::zero()) {
        return Err(Error::Domain(
            "need at least 3 scan points and a positive tolerance".into(),
        ));
    }
    let total = observed.total();
    if observed.is_empty() || (total - T::one()).abs() > lit(1e-6) {
        return Err(Error::Domain(format!(
            "observed histogram must be normalized, sums to {total}"
        )));
    }
    let year = observed.year;
    let limit = scaling_state(params, econ, year)?.pareto_threshold
        * match observed.units {
            IncomeUnits::Dimensionless => T::one(),
            IncomeUnits::Dollars => model_unit_dollars(year, econ, params)?,
        };
    let options = PidOptions {
        mode: PidMode::Theoretical,
        bin_width: observed.bin_width,
        units: observed.units,
        ..PidOptions::default()
    };
    let eval = |alpha: T| -> Result<T> {
        let p = ModelParams {
            alpha,
            ..params.clone()
        };
        let cohorts = cohort_incomes(year, pyramid, econ, &p)?;
        let model = pid_from_cohorts(year, &cohorts, econ, &p, &options)?;
        Ok(subcritical_loss(observed, &model, limit, search.loss))
    };

    let n = search.scan_points;
    let step = (search.high - search.low) / from_i64((n - 1) as i64);
    let grid: Vec<T> = (0..n)
        .map(|i| search.low + step * from_i64(i as i64))
        .collect();
    let scan: Vec<T> = grid.par_iter().map(|&a| eval(a)).collect::<Result<_>>()?;
    let mut probes: Vec<(T, T)> = grid.iter().copied().zip(scan.iter().copied()).collect();

    let best = (0..n).fold(0, |b, i| if scan[i] < scan[b] { i } else { b });
    let local_minima = (1..n - 1)
        .filter(|&i| scan[i] < scan[i - 1] && scan[i] <= scan[i + 1])
        .count();
    let mut bracketed = best > 0 && best < n - 1 && local_minima <= 1;

    let mut iterations = 0;
    if best > 0 && best < n - 1 {
        // golden section on [grid[best-1], grid[best+1]]
        let inv_phi: T = lit((5f64.sqrt() - 1.0) / 2.0);
        let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
        let mut c = b - (b - a) * inv_phi;
        let mut d = a + (b - a) * inv_phi;
        let (mut fc, mut fd) = (eval(c)?, eval(d)?);
        probes.push((c, fc));
        probes.push((d, fd));
        while b - a > search.tolerance {
            iterations += 1;
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * inv_phi;
                fc = eval(c)?;
                probes.push((c, fc));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * inv_phi;
                fd = eval(d)?;
                probes.push((d, fd));
            }
        }
        let mid = (a + b) / lit(2.0);
        let fm = eval(mid)?;
        probes.push((mid, fm));
    }

    // best probed point certifies the returned loss
    let (alpha_hat, loss) =
        probes
            .iter()
            .copied()
            .fold(probes[0], |best, p| if p.1 < best.1 { p } else { best });
    let empty = IncomeHistogram {
        densities: Vec::new(),
        ..observed.clone()
    };
    let scale = subcritical_loss(observed, &empty, limit, search.loss);
    if scale > T::zero() && loss > search.max_relative_residual * scale {
        bracketed = false;
    }
    Ok(CalibrationResult {
        alpha_hat,
        pareto_threshold0_hat: params.pareto_threshold0,
        loss,
        iterations,
        converged: bracketed,
        probes,
    })
}

/// Finds the start-year Pareto threshold for which the model's supercritical
/// fraction in `year` equals `target_share` within [`SHARE_TOLERANCE`].
pub fn calibrate_threshold<T: Real>(
    target_share: T,
    year: i32,
    pyramid: &PopulationPyramid<T>,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    if !(target_share >= T::zero() && target_share < lit(0.5)) {
        return Err(Error::Domain(format!(
            "target share must lie in [0, 0.5), got {target_share}"
        )));
    }
    let cohorts = cohort_incomes(year, pyramid, econ, params)?;
    let growth = scaling_state(params, econ, year)?.growth();
    let max = cohorts
        .iter()
        .filter(|c| c.count > T::zero())
        .flat_map(|c| c.incomes.iter().copied())
        .fold(T::zero(), T::max)
        / growth;
    let above_max = max * (T::one() + lit::<T>(4.0) * T::epsilon());
    if target_share == T::zero() {
        return Ok(above_max);
    }
    let frac = |t0: T| fraction_at_or_above(&cohorts, t0 * growth);
    let (mut lo, mut hi) = (T::zero(), above_max);
    if frac(lo)? <= target_share {
        return Err(Error::Unattainable(format!(
            "target share {target_share} exceeds the fraction at zero threshold"
        )));
    }
    let tol: T = lit(1e-12);
    while hi - lo > tol * (T::one() + hi) {
        let mid = (lo + hi) / lit(2.0);
        if frac(mid)? > target_share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f_lo, f_hi) = (frac(lo)?, frac(hi)?);
    let tol_share: T = lit(SHARE_TOLERANCE);
    if (f_hi - target_share).abs() <= tol_share {
        Ok(hi)
    } else if (f_lo - target_share).abs() <= tol_share {
        Ok(lo)
    } else {
        Err(Error::Unattainable(format!(
            "fraction jumps from {f_lo} to {f_hi} around threshold {hi}; target {target_share}"
        )))
    }
}
