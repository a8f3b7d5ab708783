use crate::real::{lit, Real};

/// Classic fourth-order Runge-Kutta step for `dy/dt = f(t, y)`.
#[inline]
pub fn rk4_step<T: Real, F>(t: T, y: T, h: T, f: F) -> T
where
    F: Fn(T, T) -> T,
{
    let half = h * lit(0.5);
    let k1 = f(t, y);
    let k2 = f(t + half, y + half * k1);
    let k3 = f(t + half, y + half * k2);
    let k4 = f(t + h, y + h * k3);
    y + h * (k1 + lit::<T>(2.0) * (k2 + k3) + k4) / lit(6.0)
}
