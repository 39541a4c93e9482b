//! Integer-order Bessel functions of the first kind.
//!
//! Miller's downward recurrence normalized with `J_0 + 2 Σ J_{2k} = 1`.
//! One pass yields the whole table `J_0 ..= J_n`, which is what the
//! Jacobi–Anger series needs.

use super::NumericsError;

pub const BESSEL_MAX_ORDER: i32 = 64;
pub const BESSEL_MAX_ARG: f64 = 10.0;

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// `J_n(x)` for `|n| <= 64`, `|x| <= 10`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64, NumericsError> {
    if n.abs() > BESSEL_MAX_ORDER || !x.is_finite() || x.abs() > BESSEL_MAX_ARG {
        return Err(NumericsError::BesselOutOfRange { order: n as i64, arg: x });
    }
    let order = n.unsigned_abs() as usize;
    let table = bessel_j_table(order, x.abs())?;
    let value = table[order];
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x).
    let flips = (n < 0) as u32 + (x < 0.0) as u32;
    if order % 2 == 1 && flips == 1 {
        Ok(-value)
    } else {
        Ok(value)
    }
}

/// `[J_0(x), J_1(x), ..., J_{n_max}(x)]` for `0 <= x <= 10`.
pub fn bessel_j_table(n_max: usize, x: f64) -> Result<Vec<f64>, NumericsError> {
    if n_max > BESSEL_MAX_ORDER as usize || !x.is_finite() || !(0.0..=BESSEL_MAX_ARG).contains(&x)
    {
        return Err(NumericsError::BesselOutOfRange { order: n_max as i64, arg: x });
    }
    if x < 1e-6 {
        return Ok(small_argument(n_max, x));
    }

    // Start well above both the requested order and the turning point n ~ x.
    let start = 2 * ((n_max.max(x.ceil() as usize) + 60) / 2);
    let mut table = vec![0.0; n_max + 1];
    let mut next = 0.0; // J_{k+1}
    let mut current = 1e-30; // J_k, arbitrary seed
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * current - next;
        next = current;
        current = prev;
        // `current` now holds J_{k-1}.
        let idx = k - 1;
        if idx <= n_max {
            table[idx] = current;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            next *= RESCALE_BY;
            norm *= RESCALE_BY;
            for v in table.iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    norm += current;
    for v in table.iter_mut() {
        *v /= norm;
    }
    Ok(table)
}

/// Leading three series terms; exact to double precision for `x < 1e-6`.
fn small_argument(n_max: usize, x: f64) -> Vec<f64> {
    let half = 0.5 * x;
    let mut lead = 1.0; // (x/2)^n / n!
    (0..=n_max)
        .map(|n| {
            if n > 0 {
                lead *= half / n as f64;
            }
            let q = half * half;
            lead * (1.0 - q / (n as f64 + 1.0) + q * q / (2.0 * (n as f64 + 1.0) * (n as f64 + 2.0)))
        })
        .collect()
}
