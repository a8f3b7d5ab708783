//! Individual income histories.
//!
//! Below the critical experience `T_cr` income relaxes towards the capacity
//! level `Σ_min·Λ_min·S'·L'` at rate `α/(Λ_min·L')`; beyond it the earning
//! term is switched off and income decays at the same rate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    scaling_at, scaling_state, EconomySeries, ModelParams, ScalingState, TrajectoryClass,
};
use crate::real::{from_i64, lit, Real};
use crate::rk4::rk4_step;

/// Default integration step, years.
pub const DEFAULT_STEP: f64 = 0.05;

/// Scan step used when bracketing roots in work experience, years.
const ROOT_SCAN_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncomePoint<T> {
    pub work_experience: T,
    /// Un-boosted model income.
    pub income: T,
    pub above_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub class: TrajectoryClass,
    pub start_year: i32,
    pub step: T,
    /// Work experience at which earning stopped, if reached within the horizon.
    pub critical_experience: Option<T>,
    pub points: Vec<IncomePoint<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn incomes(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.income)
    }
}

/// When the earning term switches off during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffortCutoff<T> {
    /// First work experience `t` with `t ≥ T_cr(start + t)`.
    FirstPassage,
    /// Fixed work experience.
    At(T),
}

/// Effective dissipation rate `α / (Λ_min·L')`.
#[inline]
fn rate<T: Real>(class: &TrajectoryClass, lambda_min: T, params: &ModelParams<T>) -> T {
    params.alpha / (lambda_min * class.l_rel::<T>())
}

pub fn income_closed_form<T: Real>(
    class: &TrajectoryClass,
    t: T,
    state: &ScalingState<T>,
    params: &ModelParams<T>,
) -> T {
    let k = rate(class, state.lambda_min, params);
    state.capacity_level() * class.capacity::<T>() * (-(-k * t).exp_m1())
}

/// Income after the critical experience, decaying from `value_at_tcr`.
pub fn income_decay<T: Real>(
    class: &TrajectoryClass,
    t: T,
    t_cr: T,
    value_at_tcr: T,
    state: &ScalingState<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    if t < t_cr {
        return Err(Error::Domain(format!(
            "decay evaluated at t = {t} before critical experience {t_cr}"
        )));
    }
    let k = rate(class, state.lambda_min, params);
    Ok(value_at_tcr * (-k * (t - t_cr)).exp())
}

/// `t* = L'·Λ_min / α`.
pub fn characteristic_time<T: Real>(
    class: &TrajectoryClass,
    state: &ScalingState<T>,
    params: &ModelParams<T>,
) -> T {
    T::one() / rate(class, state.lambda_min, params)
}

/// Work experience at which the closed form reaches `fraction` of its asymptote.
pub fn time_to_fraction<T: Real>(
    class: &TrajectoryClass,
    fraction: T,
    state: &ScalingState<T>,
    params: &ModelParams<T>,
) -> T {
    -(-fraction).ln_1p() * characteristic_time(class, state, params)
}

/// First work experience in `[0, max_experience]` at which a person who
/// entered the economy at calendar time `entry` satisfies `t ≥ T_cr(entry + t)`.
///
/// Calendar times before the start of the series use its first year.
pub fn critical_experience<T: Real>(
    entry: T,
    max_experience: T,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<Option<T>> {
    let first: T = from_i64(econ.first_year() as i64);
    let t_cr = |x: T| -> Result<T> {
        let time = (entry + x).max(first);
        Ok(params.t_cr0 * econ.sqrt_growth_at(time, params.start_year)?)
    };
    let gap = |x: T| -> Result<T> { Ok(x - t_cr(x)?) };

    if max_experience < T::zero() {
        return Ok(None);
    }
    let step: T = lit(0.25);
    let mut lo = T::zero();
    if gap(lo)? >= T::zero() {
        return Ok(Some(lo));
    }
    while lo < max_experience {
        let hi = (lo + step).min(max_experience);
        if gap(hi)? >= T::zero() {
            return Ok(Some(bisect(lo, hi, |x| Ok(gap(x)? >= T::zero()))?));
        }
        lo = hi;
    }
    Ok(None)
}

/// Smallest `x` in `(lo, hi]` with `pred(x)`, given `!pred(lo)` and `pred(hi)`.
fn bisect<T: Real, F>(mut lo: T, mut hi: T, pred: F) -> Result<T>
where
    F: Fn(T) -> Result<bool>,
{
    let eps = T::epsilon() * lit(8.0);
    for _ in 0..200 {
        let mid = lo + (hi - lo) * lit(0.5);
        if mid <= lo || mid >= hi || hi - lo <= eps * hi.abs().max(T::one()) {
            break;
        }
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Scaling state and critical experience shared by everyone with the same
/// work experience in a given calendar year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortState<T> {
    pub state: ScalingState<T>,
    pub work_experience: T,
    pub critical_experience: Option<T>,
}

impl<T: Real> CohortState<T> {
    pub fn new(
        year: i32,
        work_experience: T,
        econ: &EconomySeries<T>,
        params: &ModelParams<T>,
    ) -> Result<Self> {
        let state = scaling_state(params, econ, year)?;
        let entry = from_i64::<T>(year as i64) - work_experience;
        let critical = critical_experience(entry, work_experience, econ, params)?;
        Ok(Self {
            state,
            work_experience,
            critical_experience: critical,
        })
    }

    /// Un-boosted income of `class` in this cohort, using the closed forms with
    /// the calendar year's scaling state.
    pub fn income(&self, class: &TrajectoryClass, params: &ModelParams<T>) -> T {
        let t = self.work_experience;
        match self.critical_experience {
            Some(tc) if t > tc => {
                let at_tcr = income_closed_form(class, tc, &self.state, params);
                let k = rate(class, self.state.lambda_min, params);
                at_tcr * (-k * (t - tc)).exp()
            }
            _ => income_closed_form(class, t, &self.state, params),
        }
    }
}

/// Un-boosted income of `class` at work experience `t` in calendar `year`.
pub fn income_at_experience<T: Real>(
    class: &TrajectoryClass,
    year: i32,
    t: T,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    if t < T::zero() {
        return Err(Error::Domain(format!("negative work experience {t}")));
    }
    Ok(CohortState::new(year, t, econ, params)?.income(class, params))
}

/// Fixed-step RK4 integration with the earning term switched off at first passage of `T_cr`.
pub fn integrate_income<T: Real>(
    class: &TrajectoryClass,
    start_year: i32,
    horizon: T,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
    step: T,
) -> Result<Trajectory<T>> {
    integrate_income_with(
        class,
        start_year,
        horizon,
        econ,
        params,
        step,
        EffortCutoff::FirstPassage,
    )
}

pub fn integrate_income_with<T: Real>(
    class: &TrajectoryClass,
    start_year: i32,
    horizon: T,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
    step: T,
    cutoff: EffortCutoff<T>,
) -> Result<Trajectory<T>> {
    if !(step > T::zero()) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    if !(horizon >= T::zero()) {
        return Err(Error::Domain(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    let start: T = from_i64(start_year as i64);
    econ.check_covers(start, start + horizon)?;
    let cutoff = match cutoff {
        EffortCutoff::FirstPassage => critical_experience(start, horizon, econ, params)?,
        EffortCutoff::At(x) => Some(x),
    };

    let first: T = from_i64(econ.first_year() as i64);
    let last: T = from_i64(econ.last_year() as i64);
    let clamp = |tau: T| tau.max(first).min(last);
    let capacity = class.capacity::<T>();
    let l_rel = class.l_rel::<T>();
    let root_growth = |t: T| {
        econ.sqrt_growth_at(clamp(start + t), params.start_year)
            .expect("coverage checked")
    };
    let rhs = |earning: bool| {
        move |t: T, m: T| {
            let s = root_growth(t);
            let k = params.alpha / (s * l_rel);
            let source = if earning {
                s * s * capacity * k
            } else {
                T::zero()
            };
            source - k * m
        }
    };
    let threshold = |t: T| {
        params.pareto_threshold0
            * econ
                .real_growth_at(clamp(start + t), params.start_year)
                .expect("coverage checked")
    };

    let n = (horizon / step).round().to_usize().unwrap_or(0);
    let mut points = Vec::with_capacity(n + 1);
    let mut m = T::zero();
    let mut t = T::zero();
    let mut earning = cutoff.is_none_or(|c| c > T::zero());
    points.push(IncomePoint {
        work_experience: t,
        income: m,
        above_threshold: m >= threshold(t),
    });
    for i in 1..=n {
        let t_next = from_i64::<T>(i as i64) * step;
        match cutoff {
            Some(c) if earning && c > t && c <= t_next => {
                m = rk4_step(t, m, c - t, rhs(true));
                earning = false;
                if t_next > c {
                    m = rk4_step(c, m, t_next - c, rhs(false));
                }
            }
            _ => m = rk4_step(t, m, t_next - t, rhs(earning)),
        }
        t = t_next;
        points.push(IncomePoint {
            work_experience: t,
            income: m,
            above_threshold: m >= threshold(t),
        });
    }

    Ok(Trajectory {
        class: *class,
        start_year,
        step,
        critical_experience: cutoff.filter(|c| *c <= horizon),
        points,
    })
}

/// Earliest work experience at which un-boosted income reaches the Pareto
/// threshold in force at that calendar time; `None` if it never does before
/// earning stops.
pub fn pareto_crossing_time<T: Real>(
    class: &TrajectoryClass,
    start_year: i32,
    econ: &EconomySeries<T>,
    params: &ModelParams<T>,
) -> Result<Option<T>> {
    let start: T = from_i64(start_year as i64);
    let horizon: T = from_i64((econ.last_year() - start_year) as i64);
    econ.check_covers(start, start + horizon)?;
    let end = critical_experience(start, horizon, econ, params)?.unwrap_or(horizon);

    let reached = |t: T| -> Result<bool> {
        let state = scaling_at(params, econ, start + t)?;
        Ok(income_closed_form(class, t, &state, params) >= state.pareto_threshold)
    };
    let step: T = lit(ROOT_SCAN_STEP);
    let mut lo = T::zero();
    if reached(lo)? {
        return Ok(Some(lo));
    }
    while lo < end {
        let hi = (lo + step).min(end);
        if reached(hi)? {
            return bisect(lo, hi, reached).map(Some);
        }
        lo = hi;
    }
    Ok(None)
}
