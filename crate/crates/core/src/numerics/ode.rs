use super::{CMatrix, NumericsError};

/// Uniform grid on `[t0, t1]` with `n_steps * dt == t1 - t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Smallest number of equal steps of at most `max_dt` covering the span.
    pub fn new(t0: f64, t1: f64, max_dt: f64) -> Result<Self, NumericsError> {
        if !(max_dt > 0.0) || !max_dt.is_finite() {
            return Err(NumericsError::InvalidGrid(format!("step must be positive, got {max_dt}")));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(NumericsError::InvalidGrid(format!("empty span [{t0}, {t1}]")));
        }
        let n = ((t1 - t0) / max_dt - 1e-9).ceil().max(1.0) as usize;
        Self::with_steps(t0, t1, n)
    }

    pub fn with_steps(t0: f64, t1: f64, n_steps: usize) -> Result<Self, NumericsError> {
        if n_steps == 0 {
            return Err(NumericsError::InvalidGrid("zero steps".into()));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(NumericsError::InvalidGrid(format!("empty span [{t0}, {t1}]")));
        }
        Ok(Self { t0, t1, dt: (t1 - t0) / n_steps as f64, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Time of grid point `k` (`0..=n_steps`); the last point is exactly `t1`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }
}

/// State that a fixed-step integrator can combine linearly.
pub trait OdeState: Clone {
    /// `self + a * x`.
    fn axpy(&self, a: f64, x: &Self) -> Self;
}

impl OdeState for f64 {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self + a * x
    }
}

impl<const N: usize> OdeState for [f64; N] {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        std::array::from_fn(|i| self[i] + a * x[i])
    }
}

impl OdeState for CMatrix {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self.zip_map(x, |u, v| u + v * a)
    }
}

/// One classical fourth-order Runge–Kutta step of `y' = f(t, y)`.
pub fn rk4_step<S, F>(f: F, y: &S, t: f64, dt: f64) -> S
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    let half = 0.5 * dt;
    let k1 = f(t, y);
    let k2 = f(t + half, &y.axpy(half, &k1));
    let k3 = f(t + half, &y.axpy(half, &k2));
    let k4 = f(t + dt, &y.axpy(dt, &k3));
    y.axpy(dt / 6.0, &k1)
        .axpy(dt / 3.0, &k2)
        .axpy(dt / 3.0, &k3)
        .axpy(dt / 6.0, &k4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{expm_hermitian, max_abs, C64};

    #[test]
    fn grid_covers_span_exactly() {
        let g = TimeGrid::new(0.0, 21.85, 5e-4).unwrap();
        assert!((g.n_steps() as f64 * g.dt() - 21.85).abs() < 1e-12);
        assert!(g.dt() <= 5e-4);
        assert_eq!(g.time(g.n_steps()), 21.85);
        assert_eq!(g.times().count(), g.n_steps() + 1);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::with_steps(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_field_leaves_state_unchanged() {
        let y = rk4_step(|_, _: &f64| 0.0, &3.25, 0.0, 0.1);
        assert_eq!(y, 3.25);
    }

    #[test]
    fn exponential_decay_single_step() {
        let y = rk4_step(|_, y: &f64| -y, &1.0, 0.0, 0.1);
        assert!((y - 0.9048375).abs() < 1e-7);
        assert!((y - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn schrodinger_constant_hamiltonian_matches_expm() {
        let h = CMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(0.3, 0.0),
                C64::new(0.2, -0.1),
                C64::new(0.0, 0.05),
                C64::new(0.2, 0.1),
                C64::new(-0.4, 0.0),
                C64::new(0.7, 0.0),
                C64::new(0.0, -0.05),
                C64::new(0.7, 0.0),
                C64::new(0.1, 0.0),
            ],
        );
        let total = 2.0;
        let grid = TimeGrid::with_steps(0.0, total, 1000).unwrap();
        let minus_i = C64::new(0.0, -1.0);
        let f = |_t: f64, u: &CMatrix| (&h * u) * minus_i;
        let mut u = CMatrix::identity(3, 3);
        for k in 0..grid.n_steps() {
            u = rk4_step(f, &u, grid.time(k), grid.dt());
        }
        let want = expm_hermitian(&h, total).unwrap();
        assert!(max_abs(&(u - want)) < 1e-8);
    }

    #[test]
    fn halving_ratio_is_fourth_order() {
        // y' = cos(t) y, exact y = exp(sin t).
        let f = |t: f64, y: &f64| t.cos() * y;
        let run = |n: usize| {
            let g = TimeGrid::with_steps(0.0, 3.0, n).unwrap();
            let mut y = 1.0;
            for k in 0..n {
                y = rk4_step(f, &y, g.time(k), g.dt());
            }
            (y - 3.0f64.sin().exp()).abs()
        };
        let ratio = run(40) / run(80);
        assert!((ratio - 16.0).abs() < 0.3 * 16.0, "ratio {ratio}");
    }
}
